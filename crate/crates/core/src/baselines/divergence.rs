use crate::error::{Error, Result};

/// `sum_i p_i ln(p_i / q_i)`, with `0 ln(0 / x) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}

/// Jensen-Shannon divergence (natural log), bounded by `ln 2`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * (kl_divergence(p, &m)? + kl_divergence(q, &m)?);
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}
