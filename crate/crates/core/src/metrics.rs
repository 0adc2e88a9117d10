//! Reconstruction and detection metrics and their Monte Carlo aggregation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Signal-to-reconstruction error `10·log10(‖C‖²_F / ‖C − Ĉ‖²_F)`.
///
/// Returns `+∞` when `Ĉ` reproduces `C` exactly.
pub fn sre_db<T: Real>(c_true: &DMatrix<T>, c_hat: &DMatrix<T>) -> Result<f64> {
    if c_true.shape() != c_hat.shape() {
        return Err(Error::invalid(format!(
            "abundance shapes differ: {:?} vs {:?}",
            c_true.shape(),
            c_hat.shape()
        )));
    }
    let signal = c_true.norm_squared().as_f64();
    if signal <= 0.0 {
        return Err(Error::invalid("reference abundances are all zero"));
    }
    let error = (c_true - c_hat).norm_squared().as_f64();
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// `truth ⊆ selected`.
pub fn detection(truth: &[usize], selected: &[usize]) -> bool {
    truth.iter().all(|t| selected.contains(t))
}

/// Fraction of `truth` found in `found`; 1 for an empty truth set.
pub fn coverage(truth: &[usize], found: &[usize]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    truth.iter().filter(|t| found.contains(t)).count() as f64 / truth.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub sre_db: f64,
    /// Every true member survived pruning.
    pub detected: bool,
    pub active_count: usize,
    /// Fraction of true members among the active rows.
    pub truth_coverage: f64,
    pub runtime_s: f64,
}

/// Mean and 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Zero when fewer than two samples are available.
    pub half_width: f64,
}

impl Estimate {
    fn from_samples(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count();
        let mean = xs.clone().sum::<f64>() / n as f64;
        if n < 2 || !mean.is_finite() {
            return Self { mean, half_width: 0.0 };
        }
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, half_width: 1.96 * (var / n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub sre_db: Estimate,
    pub detection_rate: Estimate,
    pub active_count: Estimate,
    pub truth_coverage: f64,
    pub runtime_s: f64,
}

pub fn aggregate(outcomes: &[TrialOutcome]) -> Result<Summary> {
    if outcomes.is_empty() {
        return Err(Error::invalid("cannot aggregate zero outcomes"));
    }
    let it = outcomes.iter();
    let n = outcomes.len() as f64;
    Ok(Summary {
        trials: outcomes.len(),
        sre_db: Estimate::from_samples(it.clone().map(|o| o.sre_db)),
        detection_rate: Estimate::from_samples(it.clone().map(|o| if o.detected { 1.0 } else { 0.0 })),
        active_count: Estimate::from_samples(it.clone().map(|o| o.active_count as f64)),
        truth_coverage: it.clone().map(|o| o.truth_coverage).sum::<f64>() / n,
        runtime_s: it.map(|o| o.runtime_s).sum::<f64>() / n,
    })
}
