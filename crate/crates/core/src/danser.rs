//! Dictionary-adjusted nonconvex sparse regression.
//!
//! Minimizes, over a slack dictionary `H`, an adjusted dictionary `D′` and
//! nonnegative abundances `C`,
//!
//! ```text
//! ½‖Y − H C‖²_F + (μ/2)‖H − D′‖²_F + λ Σ_k (‖c^k‖₂² + τ)^{p/2}
//! s.t. ‖d′_k − d_k‖₂ ≤ ε,  C ≥ 0
//! ```
//!
//! by four-block alternating optimization. The ℓ2/ℓp penalty is handled
//! through its variational form `(x² + τ)^{p/2} = min_{w≥0} w x² + φ_p(w)`,
//! which turns the abundance block into a row-wise nonnegative least-squares
//! sweep. Each cycle runs, in order: abundance sweep over rows, slack update,
//! adjusted-dictionary projection, reweighting. Every block update is exact,
//! so the objective never increases.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::SpectralDictionary;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::subspace::PixelMatrix;

/// Rows with `‖c^k‖₂` above this fraction of the largest row norm count as active.
pub const ACTIVITY_REL_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DanserParams<T: Real> {
    /// Row-sparsity weight λ.
    pub lambda: T,
    /// Quasi-norm exponent, strictly between 0 and 1.
    pub p: T,
    /// Coupling weight μ between the slack and adjusted dictionaries.
    pub mu: T,
    /// Smoothing τ of the ℓp penalty at the origin.
    pub tau: T,
    /// Radius ε of the admissible dictionary adjustment.
    pub epsilon: T,
    /// Stop once `‖C⁽ⁱ⁾ − C⁽ⁱ⁻¹⁾‖_F ≤ tol`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for DanserParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.5),
            p: T::lit(0.5),
            mu: T::lit(1e5),
            tau: T::lit(1e-6),
            epsilon: T::zero(),
            tol: T::lit(1e-5),
            max_iter: 5000,
        }
    }
}

impl<T: Real> DanserParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [("lambda", self.lambda), ("mu", self.mu), ("tau", self.tau), ("tol", self.tol)];
        for (name, v) in positive {
            if !v.is_finite_value() || v <= T::zero() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.p > T::zero() && self.p < T::one()) {
            return Err(Error::invalid(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !self.epsilon.is_finite_value() || self.epsilon < T::zero() {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

/// Solver variables plus the per-sweep Gram caches.
#[derive(Debug, Clone)]
pub struct DanserState<T: Real> {
    /// Slack dictionary (M×K).
    pub h: DMatrix<T>,
    /// Adjusted dictionary (M×K), kept inside the ε-balls around `D`.
    pub dprime: DMatrix<T>,
    /// Abundances (K×L), elementwise nonnegative.
    pub c: DMatrix<T>,
    /// Reweighting coefficients, all positive.
    pub w: DVector<T>,
    /// `Ỹᵀ H̃ = ½ Yᵀ H` (L×K).
    pub f: DMatrix<T>,
    /// `H̃ᵀ H̃ = ½ Hᵀ H + λ Diag(w)` (K×K).
    pub g: DMatrix<T>,
}

impl<T: Real> DanserState<T> {
    /// `H = D′ = D`, `C = C_init`, weights from `C_init`, caches from those.
    pub fn new(
        y: &PixelMatrix<T>,
        dictionary: &SpectralDictionary<T>,
        c_init: DMatrix<T>,
        params: &DanserParams<T>,
    ) -> Result<Self> {
        params.validate()?;
        check_shapes(y, dictionary, &c_init)?;
        if c_init.iter().any(|v| !v.is_finite_value() || *v < T::zero()) {
            return Err(Error::invalid("initial abundances must be finite and nonnegative"));
        }
        let w = update_weights(&c_init, params);
        let mut state = Self {
            h: dictionary.spectra().clone(),
            dprime: dictionary.spectra().clone(),
            c: c_init,
            w,
            f: DMatrix::zeros(0, 0),
            g: DMatrix::zeros(0, 0),
        };
        state.refresh_caches(y, params);
        Ok(state)
    }

    /// Recomputes `F` and `G` from the current `H` and `w`.
    pub fn refresh_caches(&mut self, y: &PixelMatrix<T>, params: &DanserParams<T>) {
        let half = T::lit(0.5);
        self.f = y.values().tr_mul(&self.h) * half;
        let mut g = self.h.tr_mul(&self.h) * half;
        for k in 0..g.nrows() {
            g[(k, k)] += params.lambda * self.w[k];
        }
        self.g = g;
    }

    /// Exact nonnegative least-squares update of row `k` with all other rows fixed.
    ///
    /// Requires `F` and `G` to be current for `H` and `w`; they do not depend on `C`.
    pub fn update_c_row(&mut self, k: usize) -> Result<()> {
        let gkk = self.g[(k, k)];
        if !(gkk > T::zero()) || !gkk.is_finite_value() {
            return Err(Error::DegenerateColumn(k));
        }
        let cross = self.c.tr_mul(&self.g.column(k));
        let l = self.c.ncols();
        for j in 0..l {
            let current = self.c[(k, j)];
            let r = self.f[(j, k)] - cross[j] + current * gkk;
            self.c[(k, j)] = (r / gkk).max(T::zero());
        }
        Ok(())
    }

    /// One Gauss–Seidel pass over all rows of `C`.
    pub fn sweep_rows(&mut self) -> Result<()> {
        for k in 0..self.c.nrows() {
            self.update_c_row(k)?;
        }
        Ok(())
    }
}

fn check_shapes<T: Real>(
    y: &PixelMatrix<T>,
    dictionary: &SpectralDictionary<T>,
    c: &DMatrix<T>,
) -> Result<()> {
    if dictionary.bands() != y.bands() {
        return Err(Error::invalid(format!(
            "dictionary has {} bands, observations have {}",
            dictionary.bands(),
            y.bands()
        )));
    }
    if c.shape() != (dictionary.len(), y.pixels()) {
        return Err(Error::invalid(format!(
            "abundances are {:?}, expected ({}, {})",
            c.shape(),
            dictionary.len(),
            y.pixels()
        )));
    }
    Ok(())
}

/// Smoothed ℓ2/ℓp penalty `Σ_k (‖c^k‖₂² + τ)^{p/2}` (without λ).
pub fn penalty<T: Real>(c: &DMatrix<T>, p: T, tau: T) -> T {
    let half_p = p * T::lit(0.5);
    c.row_iter()
        .map(|row| (row.norm_squared() + tau).powf(half_p))
        .fold(T::zero(), |a, b| a + b)
}

/// Objective in its original form; exact regardless of the current weights.
pub fn objective<T: Real>(state: &DanserState<T>, y: &PixelMatrix<T>, params: &DanserParams<T>) -> T {
    let half = T::lit(0.5);
    let fit = (y.values() - &state.h * &state.c).norm_squared();
    let coupling = (&state.h - &state.dprime).norm_squared();
    half * fit + half * params.mu * coupling + params.lambda * penalty(&state.c, params.p, params.tau)
}

/// `φ_p(w) = (2−p)/2 · ((2/p) w)^{p/(p−2)} + τ w`.
pub fn phi<T: Real>(w: T, p: T, tau: T) -> T {
    let two = T::lit(2.0);
    (two - p) / two * (two / p * w).powf(p / (p - two)) + tau * w
}

/// Objective with the penalty in its reweighted form `Σ_k w_k‖c^k‖² + φ_p(w_k)`.
pub fn weighted_objective<T: Real>(
    state: &DanserState<T>,
    y: &PixelMatrix<T>,
    params: &DanserParams<T>,
) -> T {
    let half = T::lit(0.5);
    let fit = (y.values() - &state.h * &state.c).norm_squared();
    let coupling = (&state.h - &state.dprime).norm_squared();
    let reweighted = state
        .c
        .row_iter()
        .zip(state.w.iter())
        .map(|(row, &w)| w * row.norm_squared() + phi(w, params.p, params.tau))
        .fold(T::zero(), |a, b| a + b);
    half * fit + half * params.mu * coupling + params.lambda * reweighted
}

/// `w_k = (p/2)(‖c^k‖₂² + τ)^{(p−2)/2}`, the unique minimizer of the variational form.
pub fn update_weights<T: Real>(c: &DMatrix<T>, params: &DanserParams<T>) -> DVector<T> {
    let two = T::lit(2.0);
    let exponent = (params.p - two) / two;
    let scale = params.p / two;
    DVector::from_iterator(
        c.nrows(),
        c.row_iter().map(|row| scale * (row.norm_squared() + params.tau).powf(exponent)),
    )
}

/// `H = (μD′ + Y Cᵀ)(C Cᵀ + μI)⁻¹`, via a Cholesky solve.
pub fn update_h<T: Real>(
    state: &DanserState<T>,
    y: &PixelMatrix<T>,
    params: &DanserParams<T>,
) -> Result<DMatrix<T>> {
    let k = state.c.nrows();
    let mut gram = &state.c * state.c.transpose();
    for i in 0..k {
        gram[(i, i)] += params.mu;
    }
    let rhs = &state.dprime * params.mu + y.values() * state.c.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::numerical("C Cᵀ + μI is not positive definite", None))?;
    Ok(chol.solve(&rhs.transpose()).transpose())
}

/// Column-wise Euclidean projection of `H` onto the balls `‖d′_k − d_k‖₂ ≤ ε`.
pub fn update_dprime<T: Real>(h: &DMatrix<T>, dictionary: &SpectralDictionary<T>, epsilon: T) -> DMatrix<T> {
    let d = dictionary.spectra();
    let mut out = h.clone();
    for (k, mut col) in out.column_iter_mut().enumerate() {
        let anchor = d.column(k);
        let offset = &col - anchor;
        let dist = offset.norm();
        if dist > epsilon {
            col.copy_from(&(anchor + offset * (epsilon / dist)));
        }
    }
    out
}

/// Indices of rows whose norm exceeds `rel_threshold · max_j ‖c^j‖₂`.
pub fn active_rows<T: Real>(c: &DMatrix<T>, rel_threshold: f64) -> Vec<usize> {
    let norms: Vec<T> = c.row_iter().map(|r| r.norm()).collect();
    let max = norms.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if max <= T::zero() {
        return Vec::new();
    }
    let cut = max * T::lit(rel_threshold);
    norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > cut)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone)]
pub struct UnmixResult<T: Real> {
    pub c: DMatrix<T>,
    pub dprime: DMatrix<T>,
    pub h: DMatrix<T>,
    pub weights: DVector<T>,
    pub iterations: usize,
    /// Objective after each completed cycle.
    pub objective_trace: Vec<T>,
    pub active_rows: Vec<usize>,
    /// True when the change in `C` fell below `tol` before `max_iter`.
    pub converged: bool,
}

fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite_value())
}

/// Runs the alternating optimization from `C_init` until the abundance change
/// drops to `tol` or `max_iter` cycles elapse.
pub fn solve<T: Real>(
    y: &PixelMatrix<T>,
    dictionary: &SpectralDictionary<T>,
    c_init: &DMatrix<T>,
    params: &DanserParams<T>,
) -> Result<UnmixResult<T>> {
    let mut state = DanserState::new(y, dictionary, c_init.clone(), params)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_iter {
        iterations = it;
        if it > 1 {
            state.refresh_caches(y, params);
        }
        let previous = state.c.clone();
        state.sweep_rows()?;
        state.h = update_h(&state, y, params).map_err(|_| {
            Error::numerical("slack dictionary solve failed", Some(it))
        })?;
        state.dprime = update_dprime(&state.h, dictionary, params.epsilon);
        state.w = update_weights(&state.c, params);

        let value = objective(&state, y, params);
        if !value.is_finite_value() || !all_finite(&state.c) || !all_finite(&state.h) {
            return Err(Error::numerical("non-finite iterate", Some(it)));
        }
        trace.push(value);

        if (&state.c - previous).norm() <= params.tol {
            converged = true;
            break;
        }
    }

    let active = active_rows(&state.c, ACTIVITY_REL_THRESHOLD);
    Ok(UnmixResult {
        c: state.c,
        dprime: state.dprime,
        h: state.h,
        weights: state.w,
        iterations,
        objective_trace: trace,
        active_rows: active,
        converged,
    })
}
