//! Shared oracles and random instances for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use unmix_core::SignalSubspace;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal basis of a random `dim`-dimensional subspace of R^m.
pub fn random_subspace(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> SignalSubspace<f64> {
    let q = gaussian_matrix(rng, m, dim).qr().q();
    SignalSubspace::new(q.columns(0, dim).into_owned()).unwrap()
}

/// `I − U Uᵀ` formed explicitly.
pub fn dense_complement(u: &SignalSubspace<f64>) -> DMatrix<f64> {
    let b = u.basis();
    DMatrix::identity(b.nrows(), b.nrows()) - b * b.transpose()
}

/// `‖P⊥ x‖ / ‖P x‖` with dense projectors.
pub fn eta_of(pc: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let perp = pc * x;
    let par = x - &perp;
    perp.norm() / par.norm()
}

/// Uniform point of the ball of radius `eps` in R^m; `on_sphere` forces the boundary.
pub fn ball_point(rng: &mut ChaCha8Rng, m: usize, eps: f64, on_sphere: bool) -> DVector<f64> {
    let dir = gaussian_vector(rng, m);
    let dir = &dir / dir.norm();
    let r = if on_sphere { eps } else { eps * rng.random::<f64>().powf(1.0 / m as f64) };
    dir * r
}

fn project_ball(xi: DVector<f64>, eps: f64) -> DVector<f64> {
    let n = xi.norm();
    if n > eps {
        xi * (eps / n)
    } else {
        xi
    }
}

/// Brute-force `min_{‖ξ‖≤ε} ‖P⊥(d+ξ)‖/‖P(d+ξ)‖`: best of `samples` feasible
/// draws, then projected gradient descent with backtracking from it.
/// Returns (best sampled value, refined value).
pub fn brute_force_eta(
    rng: &mut ChaCha8Rng,
    d: &DVector<f64>,
    u: &SignalSubspace<f64>,
    eps: f64,
    samples: usize,
) -> (f64, f64) {
    let pc = dense_complement(u);
    let m = d.len();
    let f = |xi: &DVector<f64>| eta_of(&pc, &(d + xi));

    let mut best_xi = DVector::zeros(m);
    let mut best = f(&best_xi);
    for i in 0..samples {
        let xi = ball_point(rng, m, eps, i % 2 == 0);
        let v = f(&xi);
        if v < best {
            best = v;
            best_xi = xi;
        }
    }
    let sampled = best;

    let mut xi = best_xi;
    let mut value = best;
    let mut step = eps;
    for _ in 0..5000 {
        // gradient of η(x) = a/b with a = ‖P⊥x‖, b = ‖Px‖
        let x = d + &xi;
        let perp = &pc * &x;
        let par = &x - &perp;
        let (a, b) = (perp.norm(), par.norm());
        let grad = &perp / (a * b) - &par * (a / (b * b * b));
        let mut moved = false;
        while step > 1e-15 * eps {
            let candidate = project_ball(&xi - &grad * step, eps);
            let v = f(&candidate);
            if v < value {
                xi = candidate;
                value = v;
                step *= 2.0;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (sampled, value)
}
