// mdbook cannot run snippets that depend on a library crate, so every
// chapter is included here as a module doc and `cargo test` runs the
// snippets as doc-tests. One module per chapter keeps failures traceable.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/data.md")]
pub mod data {}
#[doc = include_str!("src/model.md")]
pub mod model {}
#[doc = include_str!("src/scoring.md")]
pub mod scoring {}
#[doc = include_str!("src/augmentation.md")]
pub mod augmentation {}
#[doc = include_str!("src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("../README.md")]
pub mod readme {}
