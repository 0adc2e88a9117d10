//! Signal-subspace estimation from noisy observations and the orthogonal
//! projector applications used by the MUSIC-type residues.
//!
//! Projectors are never materialized: `P_U x = U (Uᵀ x)` and
//! `P⊥_U x = x − U (Uᵀ x)`, which costs O(MN) per vector.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Above this pixel-to-band ratio the left singular vectors are taken from
/// the eigendecomposition of the M×M Gram matrix `Y Yᵀ` instead of a thin SVD.
const GRAM_ROUTE_RATIO: usize = 10;
const SVD_MAX_ITER: usize = 10_000;

/// Observations `Y`, one pixel per column (M bands × L pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMatrix<T: Real> {
    values: DMatrix<T>,
}

impl<T: Real> PixelMatrix<T> {
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("pixel matrix must have at least one band and one pixel"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::invalid(format!(
                "pixel matrix entry ({}, {}) is not finite",
                i % values.nrows(),
                i / values.nrows()
            )));
        }
        Ok(Self { values })
    }

    pub fn bands(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.values
    }
}

/// Orthonormal basis `U_S` (M×N) of the estimated signal subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSubspace<T: Real> {
    basis: DMatrix<T>,
}

impl<T: Real> SignalSubspace<T> {
    /// Wraps a basis after checking that its columns are orthonormal.
    pub fn new(basis: DMatrix<T>) -> Result<Self> {
        let (m, n) = basis.shape();
        if n == 0 || n > m {
            return Err(Error::invalid(format!(
                "subspace dimension {n} must lie in 1..={m}"
            )));
        }
        let gram = basis.tr_mul(&basis);
        let tol = orthonormal_tol::<T>(m);
        let err = (gram - DMatrix::identity(n, n)).amax();
        if err > tol {
            return Err(Error::invalid(format!(
                "basis columns are not orthonormal (max deviation {err})"
            )));
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `U (Uᵀ x)`.
    pub fn project(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_dim(x.len())?;
        Ok(&self.basis * self.basis.tr_mul(x))
    }

    /// `x − U (Uᵀ x)`.
    pub fn project_complement(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_dim(x.len())?;
        Ok(x - &self.basis * self.basis.tr_mul(x))
    }

    /// Returns `(‖P⊥_U x‖₂, ‖P_U x‖₂)` for a column view.
    pub(crate) fn split_norms(&self, x: DVectorView<'_, T>) -> (T, T) {
        let coeffs = self.basis.tr_mul(&x);
        let inside = coeffs.norm();
        let outside = (x - &self.basis * coeffs).norm();
        (outside, inside)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.ambient_dim() {
            return Err(Error::invalid(format!(
                "vector length {len} does not match subspace ambient dimension {}",
                self.ambient_dim()
            )));
        }
        Ok(())
    }
}

fn orthonormal_tol<T: Real>(m: usize) -> T {
    let machine = T::default_epsilon() * T::lit(100.0 * m as f64);
    machine.max(T::lit(1e-10))
}

/// Free-function form of [`SignalSubspace::project_complement`].
pub fn project_complement<T: Real>(u: &SignalSubspace<T>, x: &DVector<T>) -> Result<DVector<T>> {
    u.project_complement(x)
}

/// Left singular vectors and singular values of `Y`, sorted by decreasing singular value.
fn left_spectrum<T: Real>(y: &DMatrix<T>, want_vectors: bool) -> Result<(Option<DMatrix<T>>, Vec<T>)> {
    let (m, l) = y.shape();
    let (vectors, values): (Option<DMatrix<T>>, Vec<T>) = if l <= GRAM_ROUTE_RATIO * m {
        let svd = SVD::try_new(y.clone(), want_vectors, false, T::default_epsilon(), SVD_MAX_ITER)
            .ok_or_else(|| Error::numerical("SVD did not converge", None))?;
        (svd.u, svd.singular_values.iter().copied().collect())
    } else {
        let gram = y * y.transpose();
        let eig = SymmetricEigen::try_new(gram, T::default_epsilon(), SVD_MAX_ITER)
            .ok_or_else(|| Error::numerical("eigendecomposition did not converge", None))?;
        let values = eig
            .eigenvalues
            .iter()
            .map(|&e| e.max(T::zero()).sqrt())
            .collect();
        (want_vectors.then_some(eig.eigenvectors), values)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap().then(i.cmp(&j)));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = vectors.map(|v| {
        DMatrix::from_columns(&order.iter().map(|&i| v.column(i).into_owned()).collect::<Vec<_>>())
    });
    Ok((sorted_vectors, sorted_values))
}

/// Top-`order` left singular vectors of `Y`.
pub fn estimate_subspace<T: Real>(y: &PixelMatrix<T>, order: usize) -> Result<SignalSubspace<T>> {
    let limit = y.bands().min(y.pixels());
    if order == 0 || order > limit {
        return Err(Error::invalid(format!(
            "subspace order {order} must lie in 1..={limit}"
        )));
    }
    let (vectors, _) = left_spectrum(y.values(), true)?;
    let vectors = vectors.expect("requested singular vectors");
    let basis = vectors.columns(0, order).into_owned();
    SignalSubspace::new(basis)
}

/// Smallest `r` such that the top-`r` squared singular values carry at least
/// `energy_fraction` of the total squared energy of `Y`.
pub fn estimate_order<T: Real>(y: &PixelMatrix<T>, energy_fraction: f64) -> Result<usize> {
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "energy fraction {energy_fraction} must lie in (0, 1]"
        )));
    }
    let (_, values) = left_spectrum(y.values(), false)?;
    let energies: Vec<f64> = values.iter().map(|s| s.as_f64().powi(2)).collect();
    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("observations carry no energy"));
    }
    let target = energy_fraction * total;
    let mut acc = 0.0;
    for (r, e) in energies.iter().enumerate() {
        acc += e;
        // relative slack so that fraction 1.0 is reachable despite rounding
        if acc >= target * (1.0 - 1e-12) {
            return Ok(r + 1);
        }
    }
    Ok(energies.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormal(rng: &mut ChaCha8Rng, m: usize, n: usize) -> SignalSubspace<f64> {
        let q = random_matrix(rng, m, n).qr().q();
        SignalSubspace::new(q).unwrap()
    }

    #[test]
    fn noiseless_mixture_recovers_endmember_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 12, 3).abs();
        let s = random_matrix(&mut rng, 3, 40).abs();
        let y = PixelMatrix::new(&a * &s).unwrap();
        let u = estimate_subspace(&y, 3).unwrap();
        for col in a.column_iter() {
            let r = u.project_complement(&col.into_owned()).unwrap();
            assert!(r.norm() <= 1e-8 * col.norm());
        }
    }

    #[test]
    fn identity_observations_give_full_projector() {
        let y = PixelMatrix::new(DMatrix::<f64>::identity(3, 3)).unwrap();
        let u = estimate_subspace(&y, 3).unwrap();
        let p = u.basis() * u.basis().transpose();
        assert!((p - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn gram_route_matches_svd_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 6, 2);
        let s = random_matrix(&mut rng, 2, 80);
        let noise = random_matrix(&mut rng, 6, 80) * 1e-3;
        let y = PixelMatrix::new(&a * &s + noise).unwrap();
        assert!(y.pixels() > GRAM_ROUTE_RATIO * y.bands());
        let via_gram = estimate_subspace(&y, 2).unwrap();
        let svd = y.values().clone().svd(true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
        let u = svd.u.unwrap();
        let top = DMatrix::from_columns(&[u.column(order[0]).into_owned(), u.column(order[1]).into_owned()]);
        let p1 = via_gram.basis() * via_gram.basis().transpose();
        let p2 = &top * top.transpose();
        assert!((p1 - p2).amax() < 1e-8);
    }

    #[test]
    fn order_out_of_range_is_rejected() {
        let y = PixelMatrix::new(DMatrix::<f64>::identity(4, 3)).unwrap();
        assert!(matches!(estimate_subspace(&y, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(estimate_subspace(&y, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_pixels_are_rejected() {
        let mut v = DMatrix::<f64>::zeros(2, 2);
        v[(1, 0)] = f64::NAN;
        assert!(PixelMatrix::new(v).is_err());
    }

    #[test]
    fn exact_rank_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = random_matrix(&mut rng, 10, 3) * random_matrix(&mut rng, 3, 30);
        assert_eq!(estimate_order(&PixelMatrix::new(y).unwrap(), 0.999).unwrap(), 3);

        let mut padded = DMatrix::<f64>::zeros(8, 12);
        let col = random_matrix(&mut rng, 5, 1);
        let row = random_matrix(&mut rng, 1, 9);
        padded.view_mut((0, 0), (5, 9)).copy_from(&(col * row));
        assert_eq!(estimate_order(&PixelMatrix::new(padded).unwrap(), 0.9999).unwrap(), 1);
    }

    #[test]
    fn complement_of_member_is_zero_and_of_orthogonal_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = orthonormal(&mut rng, 10, 3);
        let inside = u.basis() * DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let r = u.project_complement(&inside).unwrap();
        assert!(r.norm() <= 1e-10 * inside.norm());

        let x = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let perp = u.project_complement(&x).unwrap();
        let again = u.project_complement(&perp).unwrap();
        assert!((again - &perp).amax() < 1e-12);
    }

    #[test]
    fn complement_matches_dense_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = orthonormal(&mut rng, 10, 3);
        let x = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        // dense oracle: I − U (UᵀU)⁻¹ Uᵀ, formed explicitly
        let b = u.basis();
        let gram_inv = b.tr_mul(b).try_inverse().unwrap();
        let dense = DMatrix::<f64>::identity(10, 10) - b * gram_inv * b.transpose();
        let expected = dense * &x;
        let got = project_complement(&u, &x).unwrap();
        assert!((got - expected).amax() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = orthonormal(&mut rng, 5, 2);
        assert!(u.project_complement(&DVector::zeros(4)).is_err());
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(SignalSubspace::<f64>::new(b).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let y = PixelMatrix::new(DMatrix::<f32>::from_fn(6, 20, |i, j| ((i + 1) * (j % 3 + 1)) as f32))
            .unwrap();
        let u = estimate_subspace(&y, 1).unwrap();
        assert_eq!(u.dim(), 1);
    }
}
