//! Synthetic scenes for Monte Carlo evaluation.
//!
//! A scene picks `N` clean library members as ground-truth endmembers, draws
//! per-pixel abundances uniformly on the simplex, mixes them with additive
//! white Gaussian noise at a target SNR, and hands out a copy of the library
//! corrupted by Gaussian perturbations scaled to a target DMER
//! (dictionary-to-modeling-error ratio). The mismatch lives in the library:
//! observations are built from the clean spectra.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::dictionary::SpectralDictionary;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::subspace::PixelMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub materials: usize,
    pub pixels: usize,
    /// `+∞` disables the library perturbation.
    pub dmer_db: f64,
    /// `+∞` disables the observation noise.
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene<T: Real> {
    pub y: PixelMatrix<T>,
    /// The perturbed library handed to the unmixing methods.
    pub dictionary: SpectralDictionary<T>,
    /// Ground-truth column indices, ascending.
    pub truth: Vec<usize>,
    /// Abundances of the truth members (N×L), columns on the unit simplex.
    pub s_true: DMatrix<T>,
    /// `s_true` embedded into the rows `truth` of a K×L zero matrix.
    pub c_true: DMatrix<T>,
    /// Largest realized perturbation norm `max_k ‖e_k‖₂`.
    pub delta: T,
    /// Smallest clean-library column norm, the DMER reference.
    pub clean_min_norm: T,
    /// Noise variance per entry.
    pub sigma2: T,
    /// `Σ_ℓ ‖A s[ℓ]‖₂²`.
    pub signal_energy: T,
    /// Realized `‖V‖²_F`.
    pub noise_energy: T,
    pub spec: SceneSpec,
}

impl SceneSpec {
    pub fn validate(&self, library_size: usize) -> Result<()> {
        if self.materials == 0 || self.materials > library_size {
            return Err(Error::invalid(format!(
                "material count {} must lie in 1..={library_size}",
                self.materials
            )));
        }
        if self.pixels == 0 {
            return Err(Error::invalid("pixel count must be positive"));
        }
        for (name, v) in [("DMER", self.dmer_db), ("SNR", self.snr_db)] {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("{name} must be a number or +inf, got {v}")));
            }
        }
        Ok(())
    }
}

fn lift<T: Real>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(T::lit)
}

/// Draws a scene from the clean library `clean` according to `spec`.
///
/// Random draws happen in a fixed order (truth set, abundances, library
/// perturbation, noise), each from a stream seeded only by `spec.seed`, so
/// changing DMER or SNR keeps every other draw identical.
pub fn generate<T: Real>(clean: &SpectralDictionary<T>, spec: &SceneSpec) -> Result<SyntheticScene<T>> {
    spec.validate(clean.len())?;
    let (m, k, n, l) = (clean.bands(), clean.len(), spec.materials, spec.pixels);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut truth = sample(&mut rng, k, n).into_vec();
    truth.sort_unstable();

    let mut s = DMatrix::<f64>::zeros(n, l);
    for mut col in s.column_iter_mut() {
        for v in col.iter_mut() {
            *v = rng.sample::<f64, _>(Exp1);
        }
        let total: f64 = col.sum();
        col /= total;
    }

    let clean64 = clean.spectra().map(|v| v.as_f64());
    let mut e = DMatrix::<f64>::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let clean_min_norm = clean64.column_iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
    let delta = if spec.dmer_db.is_infinite() && spec.dmer_db > 0.0 {
        e.fill(0.0);
        0.0
    } else {
        let raw = e.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let target = clean_min_norm / 10f64.powf(spec.dmer_db / 20.0);
        e *= target / raw;
        e.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    };

    let a = DMatrix::from_columns(&truth.iter().map(|&t| clean64.column(t)).collect::<Vec<_>>());
    let signal = &a * &s;
    let signal_energy = signal.norm_squared();
    let mut noise = DMatrix::<f64>::from_fn(m, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma2 = if spec.snr_db.is_infinite() && spec.snr_db > 0.0 {
        0.0
    } else {
        signal_energy / ((m * l) as f64 * 10f64.powf(spec.snr_db / 10.0))
    };
    noise *= sigma2.sqrt();
    let noise_energy = noise.norm_squared();

    let mut c_true = DMatrix::<f64>::zeros(k, l);
    for (row, &t) in truth.iter().enumerate() {
        c_true.row_mut(t).copy_from(&s.row(row));
    }

    let perturbed = if delta == 0.0 { clean64.clone() } else { &clean64 + &e };
    let y = if sigma2 == 0.0 { signal } else { signal + noise };
    Ok(SyntheticScene {
        y: PixelMatrix::new(lift(&y))?,
        dictionary: SpectralDictionary::new(lift(&perturbed), clean.labels().to_vec())?,
        truth,
        s_true: lift(&s),
        c_true: lift(&c_true),
        delta: T::lit(delta),
        clean_min_norm: T::lit(clean_min_norm),
        sigma2: T::lit(sigma2),
        signal_energy: T::lit(signal_energy),
        noise_energy: T::lit(noise_energy),
        spec: *spec,
    })
}

/// SNR in dB implied by the stored signal energy and noise variance;
/// `+∞` for a noiseless scene.
pub fn snr_of<T: Real>(scene: &SyntheticScene<T>) -> f64 {
    let (m, l) = (scene.y.bands() as f64, scene.y.pixels() as f64);
    let sigma2 = scene.sigma2.as_f64();
    if sigma2 <= 0.0 {
        return f64::INFINITY;
    }
    10.0 * (scene.signal_energy.as_f64() / (m * l * sigma2)).log10()
}

/// SNR in dB measured from the realized noise energy.
pub fn empirical_snr_of<T: Real>(scene: &SyntheticScene<T>) -> f64 {
    let noise = scene.noise_energy.as_f64();
    if noise <= 0.0 {
        return f64::INFINITY;
    }
    10.0 * (scene.signal_energy.as_f64() / noise).log10()
}

/// DMER in dB recomputed from the stored reference norm and realized δ.
pub fn dmer_of<T: Real>(scene: &SyntheticScene<T>) -> f64 {
    let delta = scene.delta.as_f64();
    if delta <= 0.0 {
        return f64::INFINITY;
    }
    10.0 * (scene.clean_min_norm.as_f64().powi(2) / (delta * delta)).log10()
}

/// Smooth, strictly positive reflectance-like spectra on `bands` samples.
///
/// Each member is a sloped continuum carved by a few Gaussian absorption
/// bands. Most members are bright with shallow features and are strongly
/// coherent with one another; about one in five is dark with deep features.
/// Dark members set the DMER reference norm, so a given DMER perturbs the
/// bright members only slightly while the dark ones move a lot.
pub fn synthetic_library<T: Real>(bands: usize, members: usize, seed: u64) -> Result<SpectralDictionary<T>> {
    if bands < 2 || members < 2 {
        return Err(Error::invalid("synthetic library needs at least 2 bands and 2 members"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..bands).map(|i| i as f64 / (bands - 1) as f64).collect();
    let mut spectra = DMatrix::<f64>::zeros(bands, members);
    let mut labels = Vec::with_capacity(members);
    for j in 0..members {
        let member = Member::draw(&mut rng);
        for (i, &x) in grid.iter().enumerate() {
            spectra[(i, j)] = member.eval(x);
        }
        labels.push(format!("mat{j:03}"));
    }
    SpectralDictionary::new(lift(&spectra), labels)
}

const DARK_FRACTION: f64 = 0.2;

#[derive(Debug, Clone)]
struct Member {
    brightness: f64,
    slope: f64,
    curvature: f64,
    /// (center, width, depth)
    features: Vec<(f64, f64, f64)>,
}

impl Member {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let count = rng.random_range(2..=5);
        let dark = rng.random_range(0.0..1.0) < DARK_FRACTION;
        let (brightness, max_depth) =
            if dark { (rng.random_range(0.15..0.2), 0.8) } else { (rng.random_range(0.4..0.9), 0.3) };
        Self {
            brightness,
            slope: rng.random_range(-0.6..0.6),
            curvature: rng.random_range(-0.5..0.5),
            features: (0..count)
                .map(|_| {
                    (
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.02..0.12),
                        rng.random_range(0.05..max_depth),
                    )
                })
                .collect(),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let t = x - 0.5;
        let continuum = self.brightness * (1.0 + self.slope * t + self.curvature * t * t);
        let carved = self.features.iter().fold(continuum, |acc, &(c, w, depth)| {
            acc * (1.0 - depth * (-(x - c).powi(2) / (2.0 * w * w)).exp())
        });
        carved.max(1e-3)
    }
}
