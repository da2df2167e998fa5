use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 values for a confidence interval, got {0}")]
    InsufficientData(usize),
}

/// Two-sided quantile `t_{p, df}` of Student's t distribution, by inverting
/// the regularized incomplete beta CDF.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Mean and 95% half-width `t_{0.975, n-1} * s / sqrt(n)` with the
/// Bessel-corrected standard deviation `s`.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::InsufficientData(n));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let half = t_quantile(0.975, nf - 1.0) * var.sqrt() / nf.sqrt();
    Ok((mean, half))
}
