//! Comparison detectors: spatial kernel density (MKDE), a
//! matrix-factorization-weighted KDE (CF-KDE), a topic-drift detector
//! (LDA + Jensen-Shannon divergence) and the OR-fusion of CF-KDE and LDA.

mod divergence;
mod fused;
mod kde;
mod lda;
mod mf;

pub use divergence::{js_divergence, kl_divergence};
pub use fused::{fused_evaluate, roc_hull, FusedResult};
pub use kde::{
    cfkde_surprise, kde_density, log_kde_density, mkde_surprise, silverman_bandwidth, KdeModel, KdeRecord,
    BANDWIDTH_FLOOR_KM,
};
pub use lda::{fit_lda, lda_score, lda_topic_proportion, lda_train, LdaConfig, LdaFit, LdaModel, FOLD_IN_PASSES};
pub use mf::{mf_fit, mf_gradient, mf_objective, mf_train, visit_matrix, MfConfig, MfModel};
