//! Collaborative sparse regression
//!
//! ```text
//! min_C ‖Y − D C‖²_F + λ Σ_k ‖c^k‖₂   s.t. C ≥ 0
//! ```
//!
//! solved by ADMM in consensus form: `C` carries the data term, one copy
//! `Z₁ = C` carries the row-group shrinkage and another `Z₂ = C` the
//! nonnegativity projection. The penalty ρ is fixed, so `DᵀD + ρI` is
//! factored once.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::dictionary::SpectralDictionary;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::subspace::PixelMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsrParams<T: Real> {
    pub lambda: T,
    /// ADMM penalty ρ.
    pub rho: T,
    pub tol_primal: T,
    pub tol_dual: T,
    pub max_iter: usize,
}

impl<T: Real> Default for CsrParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.1),
            rho: T::one(),
            tol_primal: T::lit(1e-5),
            tol_dual: T::lit(1e-5),
            max_iter: 2000,
        }
    }
}

impl<T: Real> CsrParams<T> {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
        ];
        for (name, v) in checks {
            if !v.is_finite_value() || v <= T::zero() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CsrOutput<T: Real> {
    /// Nonnegative, row-sparse abundances (the best iterate seen).
    pub c: DMatrix<T>,
    pub objective: T,
    pub iterations: usize,
    /// Both residuals fell below tolerance before `max_iter`.
    pub converged: bool,
    pub primal_residual: T,
    pub dual_residual: T,
}

/// `max(0, 1 − t/‖x‖₂)·x`, the proximal map of `t‖·‖₂`.
pub fn group_shrink<T: Real>(row: &DVector<T>, threshold: T) -> DVector<T> {
    shrink_view(row.as_view(), threshold)
}

fn shrink_view<T: Real>(row: DVectorView<'_, T>, threshold: T) -> DVector<T> {
    let norm = row.norm();
    if norm <= threshold {
        DVector::zeros(row.len())
    } else {
        row * ((norm - threshold) / norm)
    }
}

/// `‖Y − D C‖²_F + λ‖C‖_{2,1}`.
pub fn csr_objective<T: Real>(y: &DMatrix<T>, d: &DMatrix<T>, c: &DMatrix<T>, lambda: T) -> T {
    let fit = (y - d * c).norm_squared();
    let group = c.row_iter().map(|r| r.norm()).fold(T::zero(), |a, b| a + b);
    fit + lambda * group
}

/// Data term from Gram products: `‖Y‖² − 2⟨DᵀY, C⟩ + ⟨DᵀD C, C⟩`.
fn gram_objective<T: Real>(y_norm_sq: T, dty: &DMatrix<T>, dtd: &DMatrix<T>, c: &DMatrix<T>, lambda: T) -> T {
    let two = T::lit(2.0);
    let fit = y_norm_sq - two * dty.dot(c) + (dtd * c).dot(c);
    let group = c.row_iter().map(|r| r.norm()).fold(T::zero(), |a, b| a + b);
    fit.max(T::zero()) + lambda * group
}

pub fn csr_solve<T: Real>(
    y: &PixelMatrix<T>,
    dictionary: &SpectralDictionary<T>,
    params: &CsrParams<T>,
) -> Result<CsrOutput<T>> {
    params.validate()?;
    if dictionary.bands() != y.bands() {
        return Err(Error::invalid(format!(
            "dictionary has {} bands, observations have {}",
            dictionary.bands(),
            y.bands()
        )));
    }
    let d = dictionary.spectra();
    let (k, l) = (d.ncols(), y.pixels());
    let rho = params.rho;
    let half_rho = rho * T::lit(0.5);

    let dtd = d.tr_mul(d);
    let dty = d.tr_mul(y.values());
    let y_norm_sq = y.values().norm_squared();
    let mut system = dtd.clone();
    for i in 0..k {
        system[(i, i)] += rho;
    }
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::numerical("DᵀD + ρI is not positive definite", None))?;

    let mut z1 = DMatrix::zeros(k, l);
    let mut z2 = DMatrix::zeros(k, l);
    let mut u1 = DMatrix::zeros(k, l);
    let mut u2 = DMatrix::zeros(k, l);
    let shrink = params.lambda / rho;

    // C = 0 is feasible; anything returned must do at least as well
    let mut best_c = DMatrix::zeros(k, l);
    let mut best_obj = gram_objective(y_norm_sq, &dty, &dtd, &best_c, params.lambda);
    let mut primal = T::infinity();
    let mut dual = T::infinity();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_iter {
        iterations = it;
        // ∇: 2Dᵀ(DC − Y) + ρ(C − Z₁ + U₁) + ρ(C − Z₂ + U₂) = 0
        let rhs = &dty + (&z1 - &u1 + &z2 - &u2) * half_rho;
        let c = chol.solve(&rhs);

        let v1 = &c + &u1;
        let mut z1_new = DMatrix::zeros(k, l);
        for (i, row) in v1.row_iter().enumerate() {
            let shrunk = shrink_view(row.transpose().as_view(), shrink);
            z1_new.row_mut(i).copy_from(&shrunk.transpose());
        }
        let z2_new = (&c + &u2).map(|v| v.max(T::zero()));

        let r1 = &c - &z1_new;
        let r2 = &c - &z2_new;
        primal = (r1.norm_squared() + r2.norm_squared()).sqrt();
        dual = rho * ((&z1_new - &z1).norm_squared() + (&z2_new - &z2).norm_squared()).sqrt();
        u1 += r1;
        u2 += r2;
        z1 = z1_new;
        z2 = z2_new;

        if !primal.is_finite_value() || !dual.is_finite_value() {
            return Err(Error::numerical("non-finite ADMM iterate", Some(it)));
        }

        // the shrinkage copy carries exact row zeros; clamp it onto C ≥ 0
        let candidate = z1.map(|v| v.max(T::zero()));
        let obj = gram_objective(y_norm_sq, &dty, &dtd, &candidate, params.lambda);
        if obj <= best_obj {
            best_obj = obj;
            best_c = candidate;
        }

        let scale = T::one() + z1.norm().max(z2.norm());
        if primal <= params.tol_primal * scale && dual <= params.tol_dual * scale {
            converged = true;
            break;
        }
    }

    Ok(CsrOutput {
        objective: csr_objective(y.values(), d, &best_c, params.lambda),
        c: best_c,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual,
    })
}
