//! MUSIC and robust-MUSIC residues and residue-ranked dictionary pruning.
//!
//! For a library member `d` split as `a = ‖P⊥_U d‖₂` and `b = ‖P_U d‖₂`, the
//! MUSIC residue is `a² / ‖d‖²`. The robust residue minimizes the same ratio
//! over corrections `‖ξ‖₂ ≤ ε`, which reduces to the scalar problem
//!
//! ```text
//! η* = min_{0 ≤ θ ≤ ε} (a − θ) / (b + √(ε² − θ²)),     γ = η*² / (η*² + 1)
//! ```
//!
//! and to exactly zero whenever `a ≤ ε`.

use nalgebra::DVectorView;

use crate::dictionary::SpectralDictionary;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::search::golden_section_min;
use crate::subspace::SignalSubspace;

/// Uniform grid resolution for the scalar η* problem before refinement.
pub const ETA_GRID_POINTS: usize = 1024;
/// Golden-section refinement stops at this fraction of ε.
const REFINE_REL_WIDTH: f64 = 1e-12;

/// Radius ε of the correction ball around each library member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessBudget<T: Real> {
    epsilon: T,
    alpha: Option<f64>,
}

impl<T: Real> RobustnessBudget<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if !epsilon.is_finite_value() || epsilon < T::zero() {
            return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon, alpha: None })
    }

    /// Budget `ε = (1−α)/(1+α)·min_k ‖d_k‖₂`, which keeps every corrected
    /// member's correlation with the original at least `α`.
    pub fn from_alpha(alpha: f64, dictionary: &SpectralDictionary<T>) -> Result<Self> {
        let epsilon = epsilon_from_alpha(alpha, dictionary)?;
        Ok(Self { epsilon, alpha: Some(alpha) })
    }

    /// ε = 0: plain MUSIC.
    pub fn none() -> Self {
        Self { epsilon: T::zero(), alpha: None }
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }
}

pub fn epsilon_from_alpha<T: Real>(alpha: f64, dictionary: &SpectralDictionary<T>) -> Result<T> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if dictionary.is_empty() {
        return Err(Error::invalid("empty dictionary"));
    }
    let (_, min_norm) = dictionary.min_norm_column();
    Ok(T::lit((1.0 - alpha) / (1.0 + alpha)) * min_norm)
}

fn check_member<T: Real>(d: &DVectorView<'_, T>, u: &SignalSubspace<T>) -> Result<T> {
    if d.len() != u.ambient_dim() {
        return Err(Error::invalid(format!(
            "member length {} does not match subspace ambient dimension {}",
            d.len(),
            u.ambient_dim()
        )));
    }
    let norm_sq = d.norm_squared();
    if norm_sq <= T::zero() {
        return Err(Error::invalid("zero dictionary member"));
    }
    Ok(norm_sq)
}

/// `dᵀ P⊥_U d / ‖d‖₂²`.
pub fn music_residue<T: Real>(d: DVectorView<'_, T>, u: &SignalSubspace<T>) -> Result<T> {
    let norm_sq = check_member(&d, u)?;
    let (a, _) = u.split_norms(d);
    Ok(clamp_unit(a * a / norm_sq))
}

/// Robust residue: the MUSIC residue minimized over corrections `‖ξ‖₂ ≤ ε`.
pub fn rmusic_residue<T: Real>(
    d: DVectorView<'_, T>,
    u: &SignalSubspace<T>,
    budget: &RobustnessBudget<T>,
) -> Result<T> {
    Ok(residue_pair(d, u, budget)?.1)
}

/// `(γ_MUSIC, γ_RMUSIC)` for one member, sharing the projection.
pub fn residue_pair<T: Real>(
    d: DVectorView<'_, T>,
    u: &SignalSubspace<T>,
    budget: &RobustnessBudget<T>,
) -> Result<(T, T)> {
    let norm_sq = check_member(&d, u)?;
    let eps = budget.epsilon;
    if eps < T::zero() {
        return Err(Error::invalid("epsilon must be >= 0"));
    }
    if eps * eps >= norm_sq {
        return Err(Error::invalid(format!(
            "epsilon {eps} is not smaller than the member norm {}",
            norm_sq.sqrt()
        )));
    }
    let (a, b) = u.split_norms(d);
    let music = clamp_unit(a * a / norm_sq);
    if eps == T::zero() {
        return Ok((music, music));
    }
    if a <= eps {
        return Ok((music, T::zero()));
    }
    let eta = solve_eta_star(a, b, eps)?.eta;
    let robust = if eta.is_finite_value() {
        let e2 = eta * eta;
        e2 / (e2 + T::one())
    } else {
        T::one()
    };
    // ξ = 0 is feasible, so the robust residue never exceeds the plain one
    Ok((music, clamp_unit(robust).min(music)))
}

fn clamp_unit<T: Real>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

/// Minimizer of the scalar robust-MUSIC ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaSolution<T: Real> {
    pub eta: T,
    pub theta: T,
}

/// `f(θ) = (a − θ)/(b + √(ε² − θ²))`, with `+∞` where the denominator vanishes.
pub fn eta_objective<T: Real>(a: T, b: T, eps: T, theta: T) -> T {
    let slack = ((eps - theta) * (eps + theta)).max(T::zero()).sqrt();
    let den = b + slack;
    if den <= T::zero() {
        T::infinity()
    } else {
        (a - theta).abs() / den
    }
}

/// Solves `min_{0≤θ≤ε} (a − θ)/(b + √(ε² − θ²))` for `a > ε ≥ 0`.
///
/// The objective is not assumed unimodal: a uniform grid locates the best
/// cell, then golden-section search refines within its two neighbours.
pub fn solve_eta_star<T: Real>(a: T, b: T, eps: T) -> Result<EtaSolution<T>> {
    let all_finite = [a, b, eps].iter().all(|v| v.is_finite_value());
    if !all_finite || eps < T::zero() || b < T::zero() || a <= eps {
        return Err(Error::invalid(format!(
            "eta problem requires a > eps >= 0 and b >= 0 (a={a}, b={b}, eps={eps})"
        )));
    }
    if eps == T::zero() {
        return Ok(EtaSolution { eta: eta_objective(a, b, eps, T::zero()), theta: T::zero() });
    }

    let last = ETA_GRID_POINTS - 1;
    let step = eps / T::lit(last as f64);
    let at = |i: usize| if i == last { eps } else { step * T::lit(i as f64) };
    let (mut best_i, mut best_f) = (0, eta_objective(a, b, eps, T::zero()));
    for i in 1..=last {
        let f = eta_objective(a, b, eps, at(i));
        if f < best_f {
            best_i = i;
            best_f = f;
        }
    }
    let lo = at(best_i.saturating_sub(1));
    let hi = at((best_i + 1).min(last));
    let (theta, eta) = golden_section_min(
        |t| eta_objective(a, b, eps, t),
        lo,
        hi,
        eps * T::lit(REFINE_REL_WIDTH),
    );
    if eta < best_f {
        Ok(EtaSolution { eta, theta })
    } else {
        Ok(EtaSolution { eta: best_f, theta: at(best_i) })
    }
}

/// How many members survive pruning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection<T: Real> {
    /// Keep the `n` lowest-residue members.
    Keep(usize),
    /// Keep every member whose residue is at most the threshold.
    Threshold(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult<T: Real> {
    /// Ranking residue per original column (γ_RMUSIC; equals γ_MUSIC when ε = 0).
    pub residues: Vec<T>,
    /// Plain MUSIC residue per original column.
    pub music_residues: Vec<T>,
    /// Retained original column indices, by ascending residue then index.
    pub selected: Vec<usize>,
    pub pruned: SpectralDictionary<T>,
}

/// Residues of every dictionary column, as `(γ_MUSIC, γ_RMUSIC)` pairs.
pub fn residues<T: Real>(
    dictionary: &SpectralDictionary<T>,
    u: &SignalSubspace<T>,
    budget: &RobustnessBudget<T>,
) -> Result<Vec<(T, T)>> {
    (0..dictionary.len())
        .map(|k| residue_pair(dictionary.column(k), u, budget))
        .collect()
}

/// Ranks members by robust residue and keeps the `keep` smallest.
pub fn prune<T: Real>(
    dictionary: &SpectralDictionary<T>,
    u: &SignalSubspace<T>,
    budget: &RobustnessBudget<T>,
    keep: usize,
) -> Result<PruneResult<T>> {
    prune_with(dictionary, u, budget, Selection::Keep(keep))
}

pub fn prune_with<T: Real>(
    dictionary: &SpectralDictionary<T>,
    u: &SignalSubspace<T>,
    budget: &RobustnessBudget<T>,
    selection: Selection<T>,
) -> Result<PruneResult<T>> {
    let k = dictionary.len();
    if let Selection::Keep(n) = selection {
        if n == 0 || n > k {
            return Err(Error::invalid(format!("keep count {n} must lie in 1..={k}")));
        }
    }
    let pairs = residues(dictionary, u, budget)?;
    let (music_residues, residues): (Vec<T>, Vec<T>) = pairs.into_iter().unzip();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        residues[i]
            .partial_cmp(&residues[j])
            .expect("residues are finite")
            .then(i.cmp(&j))
    });
    let selected: Vec<usize> = match selection {
        Selection::Keep(n) => order.into_iter().take(n).collect(),
        Selection::Threshold(t) => order.into_iter().filter(|&i| residues[i] <= t).collect(),
    };
    let pruned = dictionary.select(&selected)?;
    Ok(PruneResult { residues, music_residues, selected, pruned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn subspace(seed: u64, m: usize, n: usize) -> SignalSubspace<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        SignalSubspace::new(raw.qr().q()).unwrap()
    }

    fn vector(seed: u64, m: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn music_residue_extremes() {
        let u = subspace(1, 10, 3);
        let inside = u.basis() * DVector::from_vec(vec![1.0, 2.0, -0.5]);
        assert!(music_residue(inside.as_view(), &u).unwrap() < 1e-20);
        let x = vector(2, 10);
        let perp = u.project_complement(&x).unwrap();
        assert!((music_residue(perp.as_view(), &u).unwrap() - 1.0).abs() < 1e-12);
        assert!(music_residue(DVector::zeros(10).as_view(), &u).is_err());
    }

    #[test]
    fn music_residue_matches_dense_projector() {
        let u = subspace(3, 10, 3);
        let d = vector(4, 10);
        let b = u.basis();
        let dense = DMatrix::<f64>::identity(10, 10) - b * b.transpose();
        let expected = (d.transpose() * &dense * &d)[(0, 0)] / d.norm_squared();
        assert!((music_residue(d.as_view(), &u).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_is_bitwise_music() {
        let u = subspace(5, 12, 3);
        for s in 0..20 {
            let d = vector(100 + s, 12);
            let m = music_residue(d.as_view(), &u).unwrap();
            let r = rmusic_residue(d.as_view(), &u, &RobustnessBudget::none()).unwrap();
            assert_eq!(m.to_bits(), r.to_bits());
        }
    }

    #[test]
    fn small_mismatch_is_fully_absorbed() {
        let u = subspace(6, 12, 3);
        let inside = u.basis() * DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let bump = u.project_complement(&vector(7, 12)).unwrap().normalize() * 0.05;
        let d = inside + bump;
        let budget = RobustnessBudget::new(0.06).unwrap();
        assert_eq!(rmusic_residue(d.as_view(), &u, &budget).unwrap(), 0.0);
    }

    #[test]
    fn budget_at_member_norm_is_rejected() {
        let u = subspace(8, 6, 2);
        let d = vector(9, 6);
        let budget = RobustnessBudget::new(d.norm()).unwrap();
        assert!(rmusic_residue(d.as_view(), &u, &budget).is_err());
        assert!(RobustnessBudget::<f64>::new(-1.0).is_err());
    }

    #[test]
    fn eta_star_zero_budget() {
        let s = solve_eta_star(2.0, 4.0, 0.0).unwrap();
        assert_eq!((s.eta, s.theta), (0.5, 0.0));
    }

    #[test]
    fn eta_star_zero_inside_component() {
        // b = 0: f(ε) = +∞, so the minimizer sits strictly inside [0, ε)
        let (a, eps) = (1.0f64, 0.6);
        let s = solve_eta_star(a, 0.0, eps).unwrap();
        assert!(s.theta < eps);
        assert!(s.eta.is_finite());
        for i in 0..10_000 {
            let t = eps * i as f64 / 9_999.0;
            assert!(s.eta <= eta_objective(a, 0.0, eps, t) + 1e-12);
        }
    }

    #[test]
    fn eta_star_matches_dense_grid() {
        let (a, b, eps) = (1.0, 1.0, 0.5);
        // dense-grid oracle over 10⁶ points
        let n = 1_000_000;
        let oracle = (0..n)
            .map(|i| eta_objective(a, b, eps, eps * i as f64 / (n - 1) as f64))
            .fold(f64::INFINITY, f64::min);
        let s = solve_eta_star(a, b, eps).unwrap();
        assert!((s.eta - oracle).abs() < 1e-8, "{} vs {}", s.eta, oracle);
        assert!(s.eta <= oracle + 1e-15);
    }

    #[test]
    fn eta_star_precondition() {
        assert!(solve_eta_star(0.5, 1.0, 0.5).is_err());
        assert!(solve_eta_star(1.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn epsilon_from_alpha_formula() {
        let d = DMatrix::from_row_slice(2, 3, &[6.0, 0.0, 30.0, 8.0, 20.0, 40.0]);
        let dict = SpectralDictionary::<f64>::unlabeled(d).unwrap();
        assert_eq!(epsilon_from_alpha(1.0, &dict).unwrap(), 0.0);
        assert_eq!(epsilon_from_alpha(0.0, &dict).unwrap(), 10.0);
        let e = epsilon_from_alpha(0.85, &dict).unwrap();
        assert!((e - 10.0 * 0.15 / 1.85).abs() < 1e-12);
        assert!((e - 0.8108).abs() < 1e-4);
        assert!(epsilon_from_alpha(1.5, &dict).is_err());
        let b = RobustnessBudget::from_alpha(0.85, &dict).unwrap();
        assert_eq!(b.alpha(), Some(0.85));
    }

    fn dictionary_around(u: &SignalSubspace<f64>, seed: u64, k: usize) -> SpectralDictionary<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = u.ambient_dim();
        let spectra = DMatrix::from_fn(m, k, |_, _| rng.random_range(0.1..1.0));
        SpectralDictionary::unlabeled(spectra).unwrap()
    }

    #[test]
    fn prune_recovers_exact_members() {
        let u = subspace(10, 15, 3);
        let mut dict = dictionary_around(&u, 11, 12).spectra().clone();
        let truth = [2usize, 7, 9];
        for (j, &t) in truth.iter().enumerate() {
            let coeff = DVector::from_fn(3, |i, _| 1.0 + (i + j) as f64);
            dict.set_column(t, &(u.basis() * coeff));
        }
        let dict = SpectralDictionary::unlabeled(dict).unwrap();
        let res = prune(&dict, &u, &RobustnessBudget::none(), 3).unwrap();
        let mut sel = res.selected.clone();
        sel.sort();
        assert_eq!(sel, truth);
        assert_eq!(res.pruned.len(), 3);
    }

    #[test]
    fn prune_keep_all_is_sorted_by_residue() {
        let u = subspace(12, 8, 2);
        let dict = dictionary_around(&u, 13, 10);
        let res = prune(&dict, &u, &RobustnessBudget::new(0.05).unwrap(), 10).unwrap();
        assert_eq!(res.selected.len(), 10);
        for w in res.selected.windows(2) {
            assert!(res.residues[w[0]] <= res.residues[w[1]]);
        }
        assert!(prune(&dict, &u, &RobustnessBudget::none(), 11).is_err());
    }

    #[test]
    fn prune_ties_break_by_index() {
        let u = subspace(14, 6, 2);
        let col = u.basis().column(0).into_owned();
        let spectra = DMatrix::from_columns(&[col.clone(), col.clone(), col]);
        let dict = SpectralDictionary::unlabeled(spectra).unwrap();
        let res = prune(&dict, &u, &RobustnessBudget::none(), 2).unwrap();
        assert_eq!(res.selected, vec![0, 1]);
    }

    #[test]
    fn threshold_selection() {
        let u = subspace(15, 8, 2);
        let dict = dictionary_around(&u, 16, 10);
        let budget = RobustnessBudget::none();
        let all = prune(&dict, &u, &budget, 10).unwrap();
        let t = all.residues[all.selected[3]];
        let res = prune_with(&dict, &u, &budget, Selection::Threshold(t)).unwrap();
        assert_eq!(res.selected, all.selected[..4].to_vec());
    }

    #[test]
    fn permuting_columns_permutes_residues() {
        let u = subspace(17, 9, 3);
        let dict = dictionary_around(&u, 18, 7);
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let shuffled = dict.select(&perm).unwrap();
        let budget = RobustnessBudget::new(0.1).unwrap();
        let a = residues(&dict, &u, &budget).unwrap();
        let b = residues(&shuffled, &u, &budget).unwrap();
        for (pos, &orig) in perm.iter().enumerate() {
            assert_eq!(a[orig], b[pos]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn robust_residue_bounds(seed in 0u64..10_000, frac in 0.0f64..0.95) {
            let u = subspace(seed, 12, 3);
            let d = vector(seed + 1, 12);
            let budget = RobustnessBudget::new(frac * d.norm()).unwrap();
            let (m, r) = residue_pair(d.as_view(), &u, &budget).unwrap();
            prop_assert!(0.0 <= r && r <= m && m <= 1.0);
        }

        #[test]
        fn robust_residue_monotone_in_budget(seed in 0u64..10_000) {
            let u = subspace(seed, 10, 2);
            let d = vector(seed + 7, 10);
            let mut prev = f64::INFINITY;
            for i in 0..20 {
                let eps = 0.9 * d.norm() * i as f64 / 19.0;
                let r = rmusic_residue(d.as_view(), &u, &RobustnessBudget::new(eps).unwrap()).unwrap();
                prop_assert!(r <= prev + 1e-12);
                prev = r;
            }
        }

        #[test]
        fn eta_star_beats_verification_grid(a in 0.01f64..5.0, b in 0.0f64..5.0, frac in 0.0f64..0.99) {
            let eps = frac * a;
            let s = solve_eta_star(a, b, eps).unwrap();
            prop_assert!(s.theta >= 0.0 && s.theta <= eps);
            for i in 0..10_000 {
                let t = eps * i as f64 / 9_999.0;
                prop_assert!(s.eta <= eta_objective(a, b, eps, t) + 1e-9);
            }
        }

        #[test]
        fn residues_are_scale_invariant(seed in 0u64..10_000, c in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0]) {
            let u = subspace(seed, 10, 3);
            let d = vector(seed + 3, 10);
            let scaled = &d * c;
            let m1 = music_residue(d.as_view(), &u).unwrap();
            let m2 = music_residue(scaled.as_view(), &u).unwrap();
            prop_assert!((m1 - m2).abs() < 1e-12);
            let eps = 0.3 * d.norm();
            let r1 = rmusic_residue(d.as_view(), &u, &RobustnessBudget::new(eps).unwrap()).unwrap();
            let r2 = rmusic_residue(scaled.as_view(), &u, &RobustnessBudget::new(eps * c.abs()).unwrap()).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-9 * (1.0 + r1));
        }
    }
}
