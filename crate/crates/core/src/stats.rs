//! Small distribution helpers.

use statrs::function::erf::erfc;

/// Upper tail `1 - Φ(t)` of the standard normal.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(t: f64) -> f64 {
    normal_sf(-t)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `sample` and Uniform[0, 1].
pub fn ks_uniform(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let u = u.clamp(0.0, 1.0);
        d.max((i + 1) as f64 / n - u).max(u - i as f64 / n)
    })
}
