//! Derivative-free one-dimensional minimization on a bounded interval.

use crate::scalar::Real;

/// `(1 − 1/φ)`, the golden-section interior fraction.
const INV_PHI_SQ: f64 = 0.381_966_011_250_105_1;

/// Golden-section search for a minimizer of `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `width_tol`. Returns the best
/// `(x, f(x))` seen, including the two bracket endpoints, so a monotone `f`
/// still reports its boundary minimum.
pub fn golden_section_min<T, F>(mut f: F, lo: T, hi: T, width_tol: T) -> (T, T)
where
    T: Real,
    F: FnMut(T) -> T,
{
    let ratio = T::lit(INV_PHI_SQ);
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut best = {
        let (fa, fb) = (f(a), f(b));
        if fb < fa { (b, fb) } else { (a, fa) }
    };
    let mut x1 = a + ratio * (b - a);
    let mut x2 = b - ratio * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    // log_φ(1e300) bounds the iterations for any sane tolerance
    for _ in 0..1500 {
        if b - a <= width_tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + ratio * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - ratio * (b - a);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_vertex() {
        let (x, fx) = golden_section_min(|x: f64| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_function_hits_endpoint() {
        let (x, _) = golden_section_min(|x: f64| -x, 0.0, 2.0, 1e-12);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn degenerate_interval() {
        let (x, fx) = golden_section_min(|x: f64| x * x, 0.5, 0.5, 1e-12);
        assert_eq!((x, fx), (0.5, 0.25));
    }
}
