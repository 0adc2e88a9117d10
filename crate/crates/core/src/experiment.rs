//! End-to-end pipelines (pruning followed by sparse regression) and the
//! seeded Monte Carlo benchmark that compares them.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::csr::{csr_solve, CsrOutput, CsrParams};
use crate::danser::{self, active_rows, DanserParams, UnmixResult, ACTIVITY_REL_THRESHOLD};
use crate::dictionary::SpectralDictionary;
use crate::error::{Error, Result};
use crate::metrics::{self, aggregate, Summary, TrialOutcome};
use crate::pruning::{prune, PruneResult, RobustnessBudget};
use crate::simgen::{generate, SceneSpec};
use crate::subspace::{estimate_order, estimate_subspace, PixelMatrix};

pub const DEFAULT_ENERGY_FRACTION: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    MusicCsr,
    RmusicCsr,
    RmusicDanser,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MusicCsr, Method::RmusicCsr, Method::RmusicDanser];

    pub fn name(self) -> &'static str {
        match self {
            Method::MusicCsr => "MUSIC-CSR",
            Method::RmusicCsr => "RMUSIC-CSR",
            Method::RmusicDanser => "RMUSIC-DANSER",
        }
    }
}

/// How the signal-subspace dimension is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderRule {
    Fixed(usize),
    /// Smallest order capturing this fraction of the squared singular-value energy.
    Energy(f64),
}

impl Default for OrderRule {
    fn default() -> Self {
        OrderRule::Energy(DEFAULT_ENERGY_FRACTION)
    }
}

/// Robustness radius: either derived from α or given directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRule {
    Alpha(f64),
    Value(f64),
}

impl EpsilonRule {
    pub fn resolve(&self, dictionary: &SpectralDictionary<f64>) -> Result<RobustnessBudget<f64>> {
        match *self {
            EpsilonRule::Alpha(a) => RobustnessBudget::from_alpha(a, dictionary),
            EpsilonRule::Value(e) => RobustnessBudget::new(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub order: OrderRule,
    /// Radius used by robust pruning.
    pub prune_epsilon: EpsilonRule,
    /// Radius used by the dictionary-adjusted solver; shares the pruning rule by default.
    pub danser_epsilon: Option<EpsilonRule>,
    /// Pruned dictionary size; values ≥ K keep the whole library.
    pub keep: usize,
    pub init: Initializer,
    pub csr: CsrParams<f64>,
    /// `epsilon` here is overwritten by the resolved radius.
    pub danser: DanserParams<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            order: OrderRule::default(),
            prune_epsilon: EpsilonRule::Alpha(0.85),
            danser_epsilon: None,
            keep: 40,
            init: Initializer::Csr,
            csr: CsrParams::default(),
            danser: DanserParams::default(),
        }
    }
}

/// Starting point of the dictionary-adjusted solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initializer {
    /// Collaborative sparse regression on the pruned library.
    Csr,
    /// All-zero abundances.
    Zero,
}

/// Abundances estimated on a pruned dictionary, scattered back to full-library rows.
pub fn embed_rows(pruned: &DMatrix<f64>, selected: &[usize], k: usize) -> DMatrix<f64> {
    let mut full = DMatrix::zeros(k, pruned.ncols());
    for (row, &idx) in selected.iter().enumerate() {
        full.row_mut(idx).copy_from(&pruned.row(row));
    }
    full
}

/// Every intermediate result of the robust pipeline on one image.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub order: usize,
    pub budget: RobustnessBudget<f64>,
    pub danser_epsilon: f64,
    pub pruning: PruneResult<f64>,
    /// `None` when the solver started from zero.
    pub csr: Option<CsrOutput<f64>>,
    pub danser: UnmixResult<f64>,
}

fn resolve_order(y: &PixelMatrix<f64>, rule: OrderRule) -> Result<usize> {
    match rule {
        OrderRule::Fixed(n) => Ok(n),
        OrderRule::Energy(f) => estimate_order(y, f),
    }
}

/// Subspace estimate, robust pruning to `keep` members, regression on the
/// pruned library, then dictionary-adjusted refinement from that solution.
pub fn robust_pipeline(
    y: &PixelMatrix<f64>,
    dictionary: &SpectralDictionary<f64>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let order = resolve_order(y, config.order)?;
    let subspace = estimate_subspace(y, order)?;
    let budget = config.prune_epsilon.resolve(dictionary)?;
    let pruning = prune(dictionary, &subspace, &budget, config.keep.min(dictionary.len()))?;
    let csr = match config.init {
        Initializer::Csr => Some(csr_solve(y, &pruning.pruned, &config.csr)?),
        Initializer::Zero => None,
    };
    let c_init = match &csr {
        Some(out) => out.c.clone(),
        None => DMatrix::zeros(pruning.pruned.len(), y.pixels()),
    };
    let danser_epsilon = match config.danser_epsilon {
        Some(rule) => rule.resolve(dictionary)?.epsilon(),
        None => budget.epsilon(),
    };
    let params = DanserParams { epsilon: danser_epsilon, ..config.danser };
    let danser = danser::solve(y, &pruning.pruned, &c_init, &params)?;
    Ok(PipelineOutput { order, budget, danser_epsilon, pruning, csr, danser })
}

/// Axis swept by a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DmerDb,
    SnrDb,
    Materials,
    Keep,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::DmerDb => "dmer_db",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Materials => "N",
            SweepAxis::Keep => "keep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dmer_db" | "dmer" => Ok(SweepAxis::DmerDb),
            "snr_db" | "snr" => Ok(SweepAxis::SnrDb),
            "N" | "n" | "materials" => Ok(SweepAxis::Materials),
            "keep" => Ok(SweepAxis::Keep),
            other => Err(Error::invalid(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub materials: usize,
    pub pixels: usize,
    pub dmer_db: f64,
    pub snr_db: f64,
    pub keep: usize,
    pub alpha: f64,
    /// `None` uses the true material count as the subspace order.
    pub order: Option<OrderRule>,
    pub lambda_danser: f64,
    pub lambda_csr: f64,
    /// At or below this SNR the low-SNR λ pair replaces the defaults.
    pub low_snr_threshold_db: Option<f64>,
    pub lambda_danser_low_snr: f64,
    pub lambda_csr_low_snr: f64,
    pub csr: CsrParams<f64>,
    pub danser: DanserParams<f64>,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep_axis: SweepAxis::DmerDb,
            sweep_values: vec![20.0],
            trials: 50,
            base_seed: 0,
            materials: 6,
            pixels: 500,
            dmer_db: 20.0,
            snr_db: 35.0,
            keep: 40,
            alpha: 0.85,
            order: None,
            lambda_danser: 0.5,
            lambda_csr: 0.1,
            low_snr_threshold_db: Some(25.0),
            lambda_danser_low_snr: 1.0,
            lambda_csr_low_snr: 0.5,
            csr: CsrParams::default(),
            danser: DanserParams::default(),
            workers: 1,
        }
    }
}

/// Fully resolved settings of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings {
    pub scene: SceneSpec,
    pub keep: usize,
    pub alpha: f64,
    pub order: Option<OrderRule>,
    pub csr: CsrParams<f64>,
    pub danser: DanserParams<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::invalid("sweep needs at least one value"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if matches!(self.sweep_axis, SweepAxis::Materials | SweepAxis::Keep)
            && self.sweep_values.iter().any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::invalid("integer sweep axes need positive whole values"));
        }
        self.csr.validate()?;
        self.danser.validate()
    }

    /// Settings of one sweep point for a given trial index.
    pub fn settings(&self, value: f64, trial: usize) -> TrialSettings {
        let mut scene = SceneSpec {
            materials: self.materials,
            pixels: self.pixels,
            dmer_db: self.dmer_db,
            snr_db: self.snr_db,
            seed: self.base_seed.wrapping_add(trial as u64),
        };
        let mut keep = self.keep;
        match self.sweep_axis {
            SweepAxis::DmerDb => scene.dmer_db = value,
            SweepAxis::SnrDb => scene.snr_db = value,
            SweepAxis::Materials => scene.materials = value as usize,
            SweepAxis::Keep => keep = value as usize,
        }
        let low_snr = self.low_snr_threshold_db.is_some_and(|t| scene.snr_db <= t);
        let (ld, lc) = if low_snr {
            (self.lambda_danser_low_snr, self.lambda_csr_low_snr)
        } else {
            (self.lambda_danser, self.lambda_csr)
        };
        TrialSettings {
            scene,
            keep,
            alpha: self.alpha,
            order: self.order,
            csr: CsrParams { lambda: lc, ..self.csr },
            danser: DanserParams { lambda: ld, ..self.danser },
        }
    }
}

/// Outcomes of the three methods on one synthetic scene.
#[derive(Debug)]
pub struct TrialRecord {
    pub trial: usize,
    pub outcomes: Result<[TrialOutcome; 3]>,
}

fn outcome(
    c_true: &DMatrix<f64>,
    truth: &[usize],
    selected: &[usize],
    estimate: &DMatrix<f64>,
    runtime_s: f64,
) -> Result<TrialOutcome> {
    let full = embed_rows(estimate, selected, c_true.nrows());
    let active: Vec<usize> = active_rows(estimate, ACTIVITY_REL_THRESHOLD)
        .into_iter()
        .map(|r| selected[r])
        .collect();
    Ok(TrialOutcome {
        sre_db: metrics::sre_db(c_true, &full)?,
        detected: metrics::detection(truth, selected),
        active_count: active.len(),
        truth_coverage: metrics::coverage(truth, &active),
        runtime_s,
    })
}

/// Runs MUSIC-CSR, RMUSIC-CSR and RMUSIC-DANSER on one generated scene.
pub fn run_trial(library: &SpectralDictionary<f64>, settings: &TrialSettings) -> Result<[TrialOutcome; 3]> {
    let scene = generate(library, &settings.scene)?;
    let y = &scene.y;
    let dict = &scene.dictionary;
    let order = match settings.order {
        None => settings.scene.materials,
        Some(OrderRule::Fixed(n)) => n,
        Some(OrderRule::Energy(f)) => estimate_order(y, f)?,
    };
    let subspace = estimate_subspace(y, order)?;
    let robust = RobustnessBudget::from_alpha(settings.alpha, dict)?;

    let clock = Instant::now();
    let music = prune(dict, &subspace, &RobustnessBudget::none(), settings.keep)?;
    let music_csr = csr_solve(y, &music.pruned, &settings.csr)?;
    let t_music = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let rmusic = prune(dict, &subspace, &robust, settings.keep)?;
    let rmusic_csr = csr_solve(y, &rmusic.pruned, &settings.csr)?;
    let t_rmusic = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let params = DanserParams { epsilon: robust.epsilon(), ..settings.danser };
    let refined = danser::solve(y, &rmusic.pruned, &rmusic_csr.c, &params)?;
    let t_danser = t_rmusic + clock.elapsed().as_secs_f64();

    Ok([
        outcome(&scene.c_true, &scene.truth, &music.selected, &music_csr.c, t_music)?,
        outcome(&scene.c_true, &scene.truth, &rmusic.selected, &rmusic_csr.c, t_rmusic)?,
        outcome(&scene.c_true, &scene.truth, &rmusic.selected, &refined.c, t_danser)?,
    ])
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub method: Method,
    /// `None` when every trial failed.
    pub summary: Option<Summary>,
    pub failures: usize,
}

#[derive(Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<SummaryRow>,
    /// Per sweep value, per-trial records in trial order.
    pub trials: Vec<(f64, Vec<TrialRecord>)>,
}

/// Runs every sweep point with trials `base_seed + i`, aggregated per method.
///
/// Trials are spread over `config.workers` threads; results are ordered by
/// trial index, so the report does not depend on scheduling.
pub fn run_benchmark(library: &SpectralDictionary<f64>, config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;

    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &value in &config.sweep_values {
        let records: Vec<TrialRecord> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|trial| TrialRecord {
                    trial,
                    outcomes: run_trial(library, &config.settings(value, trial)),
                })
                .collect()
        });
        for (m, method) in Method::ALL.iter().enumerate() {
            let ok: Vec<TrialOutcome> = records
                .iter()
                .filter_map(|r| r.outcomes.as_ref().ok().map(|o| o[m]))
                .collect();
            let failures = records.len() - ok.len();
            rows.push(SummaryRow {
                axis: config.sweep_axis,
                value,
                method: *method,
                summary: if ok.is_empty() { None } else { Some(aggregate(&ok)?) },
                failures,
            });
        }
        all.push((value, records));
    }
    Ok(BenchmarkReport { rows, trials: all })
}

pub const SUMMARY_HEADER: &str = "axis,value,method,trials,failures,mean_sre_db,sre_ci95,\
detection_rate,detection_ci95,mean_active,active_ci95,mean_truth_coverage";

/// One CSV line per (sweep value, method). Wall-clock timings are left out so
/// that reruns with the same seed are byte-identical.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{},{},{},", row.axis.name(), row.value, row.method.name());
        match &row.summary {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    s.trials,
                    row.failures,
                    s.sre_db.mean,
                    s.sre_db.half_width,
                    s.detection_rate.mean,
                    s.detection_rate.half_width,
                    s.active_count.mean,
                    s.active_count.half_width,
                    s.truth_coverage
                );
            }
            None => {
                let _ = writeln!(out, "0,{},NaN,NaN,NaN,NaN,NaN,NaN,NaN", row.failures);
            }
        }
    }
    out
}

/// Mean runtime per (sweep value, method), kept apart from the summary.
pub fn timing_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("axis,value,method,mean_runtime_s\n");
    for row in rows {
        let t = row.summary.map(|s| s.runtime_s).unwrap_or(f64::NAN);
        let _ = writeln!(out, "{},{},{},{}", row.axis.name(), row.value, row.method.name(), t);
    }
    out
}

pub const TRIALS_HEADER: &str = "axis,value,trial,seed,method,sre_db,detected,active_count,truth_coverage,error";

/// One CSV line per (sweep value, trial, method); failed trials carry the
/// error message and empty metric fields. No timings, for the same reason as
/// [`summary_csv`].
pub fn trials_csv(config: &ExperimentConfig, report: &BenchmarkReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut put = |fields: Vec<String>| writer.write_record(&fields).expect("in-memory write");
    put(TRIALS_HEADER.split(',').map(str::to_string).collect());
    for (value, records) in &report.trials {
        for record in records {
            let seed = config.base_seed.wrapping_add(record.trial as u64);
            for (m, method) in Method::ALL.iter().enumerate() {
                let mut fields = vec![
                    config.sweep_axis.name().to_string(),
                    value.to_string(),
                    record.trial.to_string(),
                    seed.to_string(),
                    method.name().to_string(),
                ];
                match &record.outcomes {
                    Ok(o) => {
                        let o = &o[m];
                        fields.extend([
                            o.sre_db.to_string(),
                            o.detected.to_string(),
                            o.active_count.to_string(),
                            o.truth_coverage.to_string(),
                            String::new(),
                        ]);
                    }
                    Err(e) => {
                        fields.extend([String::new(), String::new(), String::new(), String::new(), e.to_string()]);
                    }
                }
                put(fields);
            }
        }
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::synthetic_library;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            trials: 1,
            materials: 3,
            pixels: 60,
            keep: 10,
            danser: DanserParams { max_iter: 30, ..DanserParams::default() },
            csr: CsrParams { max_iter: 200, ..CsrParams::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_trial_one_point_gives_three_rows() {
        let lib = synthetic_library(30, 20, 1).unwrap();
        let report = run_benchmark(&lib, &quick_config()).unwrap();
        assert_eq!(report.rows.len(), 3);
        let csv = summary_csv(&report.rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().contains("RMUSIC-DANSER"));
    }

    #[test]
    fn low_snr_switches_lambdas() {
        let cfg = ExperimentConfig { sweep_axis: SweepAxis::SnrDb, ..ExperimentConfig::default() };
        let low = cfg.settings(25.0, 0);
        assert_eq!((low.danser.lambda, low.csr.lambda), (1.0, 0.5));
        let high = cfg.settings(30.0, 3);
        assert_eq!((high.danser.lambda, high.csr.lambda), (0.5, 0.1));
        assert_eq!(high.scene.seed, 3);
    }

    #[test]
    fn invalid_configs() {
        assert!(ExperimentConfig { trials: 0, ..ExperimentConfig::default() }.validate().is_err());
        let bad = ExperimentConfig { sweep_axis: SweepAxis::Keep, sweep_values: vec![2.5], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        assert!(SweepAxis::parse("bogus").is_err());
    }

    #[test]
    fn embed_places_rows() {
        let pruned = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let full = embed_rows(&pruned, &[3, 0], 4);
        assert_eq!(full.column(0).as_slice(), &[2.0, 0.0, 0.0, 1.0]);
    }
}
