use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use unmix_core::experiment::{
    self, robust_pipeline, run_benchmark, EpsilonRule, ExperimentConfig, Initializer, OrderRule, PipelineConfig,
    SweepAxis, DEFAULT_ENERGY_FRACTION,
};
use unmix_core::io::{self, read_dictionary, read_matrix, read_pixels, write_dictionary, write_indices, write_matrix};
use unmix_core::simgen::{self, synthetic_library};
use unmix_core::{
    estimate_order, estimate_subspace, metrics, prune_with, CsrParams, DanserParams, Error, PixelMatrix, Result,
    SceneSpec, Selection, SpectralDictionary,
};

use crate::config::Resolver;
use crate::{
    meta, BenchmarkArgs, InitArg, LibraryOpts, Preset, PruneArgs, PruneOpts, SceneOpts, SimulateArgs, SolverOpts,
    UnmixArgs,
};

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_KEEP: usize = 40;
pub const DEFAULT_LIBRARY_BANDS: usize = 100;
pub const DEFAULT_LIBRARY_MEMBERS: usize = 120;
pub const DEFAULT_LIBRARY_SEED: u64 = 7;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn out_dir(r: &mut Resolver, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir: PathBuf = r.require::<String>("out_dir", flag.map(|p| p.display().to_string()))?.into();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn path_arg(r: &mut Resolver, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
    Ok(r.require::<String>(key, flag.map(|p| p.display().to_string()))?.into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// `index,label,gamma_music,gamma_rmusic`, labels quoted as needed.
fn residue_table(labels: &[String], music: &[f64], robust: &[f64]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut put = |fields: [String; 4]| writer.write_record(&fields).expect("in-memory write");
    put(["index", "label", "gamma_music", "gamma_rmusic"].map(str::to_string));
    for (k, label) in labels.iter().enumerate() {
        put([k.to_string(), label.clone(), music[k].to_string(), robust[k].to_string()]);
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn check_bands(y: &PixelMatrix<f64>, dict: &SpectralDictionary<f64>) -> Result<()> {
    if y.bands() != dict.bands() {
        return Err(Error::InvalidArgument(format!(
            "observations have {} bands but the dictionary has {}",
            y.bands(),
            dict.bands()
        )));
    }
    Ok(())
}

fn order_rule(r: &mut Resolver, opts: &PruneOpts) -> Result<OrderRule> {
    match r.opt("order", opts.order)? {
        Some(n) => Ok(OrderRule::Fixed(n)),
        None => Ok(OrderRule::Energy(r.get("energy_fraction", opts.energy_fraction, DEFAULT_ENERGY_FRACTION)?)),
    }
}

fn epsilon_rule(r: &mut Resolver, eps_key: &str, eps: Option<f64>, alpha_key: &str, alpha: Option<f64>) -> Result<Option<EpsilonRule>> {
    if let Some(e) = r.opt(eps_key, eps)? {
        return Ok(Some(EpsilonRule::Value(e)));
    }
    Ok(r.opt(alpha_key, alpha)?.map(EpsilonRule::Alpha))
}

fn preset_lambdas(preset: Preset) -> (f64, f64) {
    match preset {
        Preset::MonteCarlo => (0.5, 0.1),
        Preset::Illustrative => (0.04, 0.005),
    }
}

fn solver_params(r: &mut Resolver, opts: &SolverOpts) -> Result<(DanserParams<f64>, CsrParams<f64>)> {
    let preset = r.get("preset", opts.preset, Preset::MonteCarlo)?;
    let (ld, lc) = preset_lambdas(preset);
    let dd = DanserParams::<f64>::default();
    let cd = CsrParams::<f64>::default();
    let danser = DanserParams {
        lambda: r.get("lambda", opts.lambda, ld)?,
        p: r.get("p", opts.p, dd.p)?,
        mu: r.get("mu", opts.mu, dd.mu)?,
        tau: r.get("tau", opts.tau, dd.tau)?,
        epsilon: 0.0,
        tol: r.get("tol", opts.tol, dd.tol)?,
        max_iter: r.get("max_iter", opts.max_iter, dd.max_iter)?,
    };
    let csr_tol = r.get("csr_tol", opts.csr_tol, cd.tol_primal)?;
    let csr = CsrParams {
        lambda: r.get("csr_lambda", opts.csr_lambda, lc)?,
        rho: r.get("csr_rho", opts.csr_rho, cd.rho)?,
        tol_primal: csr_tol,
        tol_dual: csr_tol,
        max_iter: r.get("csr_max_iter", opts.csr_max_iter, cd.max_iter)?,
    };
    Ok((danser, csr))
}

fn load_library(r: &mut Resolver, opts: &LibraryOpts) -> Result<SpectralDictionary<f64>> {
    match r.opt::<String>("dictionary", opts.dictionary.as_ref().map(|p| p.display().to_string()))? {
        Some(path) => read_dictionary(Path::new(&path)),
        None => {
            let bands = r.get("bands", opts.bands, DEFAULT_LIBRARY_BANDS)?;
            let members = r.get("members", opts.members, DEFAULT_LIBRARY_MEMBERS)?;
            let seed = r.get("library_seed", opts.library_seed, DEFAULT_LIBRARY_SEED)?;
            synthetic_library(bands, members, seed)
        }
    }
}

fn scene_spec(r: &mut Resolver, opts: &SceneOpts, seed: u64) -> Result<SceneSpec> {
    Ok(SceneSpec {
        materials: r.get("materials", opts.materials, 6)?,
        pixels: r.get("pixels", opts.pixels, 500)?,
        dmer_db: r.get("dmer_db", opts.dmer_db, 20.0)?,
        snr_db: r.get("snr_db", opts.snr_db, 35.0)?,
        seed,
    })
}

pub fn prune(args: PruneArgs, mut r: Resolver) -> Result<()> {
    let dict_path = path_arg(&mut r, "dictionary", args.dictionary)?;
    let y_path = path_arg(&mut r, "observations", args.observations)?;
    let dict = read_dictionary(&dict_path)?;
    let y = read_pixels(&y_path)?;
    check_bands(&y, &dict)?;

    let order = match order_rule(&mut r, &args.prune)? {
        OrderRule::Fixed(n) => n,
        OrderRule::Energy(f) => estimate_order(&y, f)?,
    };
    let rule = epsilon_rule(&mut r, "epsilon", args.prune.epsilon, "alpha", args.prune.alpha)?
        .unwrap_or(EpsilonRule::Alpha(DEFAULT_ALPHA));
    let budget = rule.resolve(&dict)?;
    let selection = match r.opt("threshold", args.threshold)? {
        Some(t) => Selection::Threshold(t),
        None => Selection::Keep(r.get("keep", args.prune.keep, DEFAULT_KEEP)?.min(dict.len())),
    };
    let dir = out_dir(&mut r, args.out_dir)?;

    let subspace = estimate_subspace(&y, order)?;
    let result = prune_with(&dict, &subspace, &budget, selection)?;

    let table = residue_table(dict.labels(), &result.music_residues, &result.residues);
    write_text(&dir.join("residues.csv"), &table)?;
    write_indices(&dir.join("selected.txt"), &result.selected)?;
    write_dictionary(&dir.join("pruned.csv"), &result.pruned)?;

    let mut results = BTreeMap::new();
    results.insert("order".to_string(), order.to_string());
    results.insert("epsilon".to_string(), budget.epsilon().to_string());
    results.insert("selected".to_string(), result.selected.len().to_string());
    meta::write(&dir, "prune", r.resolved(), &results)?;
    println!(
        "kept {} of {} members (order {}, epsilon {}) -> {}",
        result.selected.len(),
        dict.len(),
        order,
        budget.epsilon(),
        dir.display()
    );
    Ok(())
}

pub fn unmix(args: UnmixArgs, mut r: Resolver) -> Result<()> {
    let dict_path = path_arg(&mut r, "dictionary", args.dictionary)?;
    let y_path = path_arg(&mut r, "observations", args.observations)?;
    let truth_path = r.opt::<String>("truth", args.truth.map(|p| p.display().to_string()))?;
    let dict = read_dictionary(&dict_path)?;
    let y = read_pixels(&y_path)?;
    check_bands(&y, &dict)?;
    let truth = match &truth_path {
        Some(p) => {
            let m = read_matrix(Path::new(p))?.matrix;
            if m.shape() != (dict.len(), y.pixels()) {
                return Err(Error::InvalidArgument(format!(
                    "truth is {}x{} but the library and image call for {}x{}",
                    m.nrows(),
                    m.ncols(),
                    dict.len(),
                    y.pixels()
                )));
            }
            Some(m)
        }
        None => None,
    };

    let order = order_rule(&mut r, &args.prune)?;
    let prune_epsilon = epsilon_rule(&mut r, "epsilon", args.prune.epsilon, "alpha", args.prune.alpha)?
        .unwrap_or(EpsilonRule::Alpha(DEFAULT_ALPHA));
    let danser_epsilon = epsilon_rule(&mut r, "danser_epsilon", args.danser_epsilon, "danser_alpha", args.danser_alpha)?;
    let keep = r.get("keep", args.prune.keep, DEFAULT_KEEP)?;
    let init = match r.get("init", args.init, InitArg::Csr)? {
        InitArg::Csr => Initializer::Csr,
        InitArg::None => Initializer::Zero,
    };
    let (danser, csr) = solver_params(&mut r, &args.solver)?;
    let dir = out_dir(&mut r, args.out_dir)?;

    let config = PipelineConfig { order, prune_epsilon, danser_epsilon, keep, init, csr, danser };
    let out = robust_pipeline(&y, &dict, &config)?;
    let selected = &out.pruning.selected;
    let full = experiment::embed_rows(&out.danser.c, selected, dict.len());
    let active: Vec<usize> = out.danser.active_rows.iter().map(|&i| selected[i]).collect();

    write_matrix(&dir.join("C_hat.csv"), &full, None)?;
    let adjusted = SpectralDictionary::new(out.danser.dprime.clone(), out.pruning.pruned.labels().to_vec())?;
    write_dictionary(&dir.join("D_adjusted.csv"), &adjusted)?;
    write_indices(&dir.join("selected.txt"), selected)?;
    write_indices(&dir.join("active.txt"), &active)?;
    let mut trace = String::from("iteration,objective\n");
    for (i, v) in out.danser.objective_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{}", i + 1, v);
    }
    write_text(&dir.join("objective.csv"), &trace)?;
    if let Some(c) = &out.csr {
        write_matrix(&dir.join("C_csr.csv"), &experiment::embed_rows(&c.c, selected, dict.len()), None)?;
    }

    let mut results = BTreeMap::new();
    results.insert("order".to_string(), out.order.to_string());
    results.insert("prune_epsilon".to_string(), out.budget.epsilon().to_string());
    results.insert("danser_epsilon".to_string(), out.danser_epsilon.to_string());
    results.insert("iterations".to_string(), out.danser.iterations.to_string());
    results.insert("converged".to_string(), out.danser.converged.to_string());
    results.insert("active_rows".to_string(), active.len().to_string());
    if let Some(c) = &out.csr {
        results.insert("csr_iterations".to_string(), c.iterations.to_string());
        results.insert("csr_converged".to_string(), c.converged.to_string());
    }
    println!(
        "{} active of {} kept members; {} iterations ({})",
        active.len(),
        selected.len(),
        out.danser.iterations,
        if out.danser.converged { "converged" } else { "iteration limit" }
    );
    if let Some(t) = &truth {
        let sre = metrics::sre_db(t, &full)?;
        results.insert("sre_db".to_string(), sre.to_string());
        println!("SRE_dB = {sre}");
    }
    meta::write(&dir, "unmix", r.resolved(), &results)?;
    Ok(())
}

pub fn simulate(args: SimulateArgs, mut r: Resolver) -> Result<()> {
    let library = load_library(&mut r, &args.library)?;
    let seed = r.get("seed", args.seed, 0u64)?;
    let spec = scene_spec(&mut r, &args.scene, seed)?;
    let dir = out_dir(&mut r, args.out_dir)?;
    let scene = simgen::generate(&library, &spec)?;
    io::write_scene(&dir, &scene)?;
    write_dictionary(&dir.join("D_clean.csv"), &library)?;

    let mut results = BTreeMap::new();
    results.insert("dmer_db_realized".to_string(), simgen::dmer_of(&scene).to_string());
    results.insert("snr_db_realized".to_string(), simgen::snr_of(&scene).to_string());
    meta::write(&dir, "simulate", r.resolved(), &results)?;
    println!(
        "scene with {} materials over {} pixels, truth {:?} -> {}",
        spec.materials,
        spec.pixels,
        scene.truth,
        dir.display()
    );
    Ok(())
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("sweep value '{s}' is not a number"))))
        .collect()
}

pub fn benchmark(args: BenchmarkArgs, mut r: Resolver) -> Result<()> {
    let library = load_library(&mut r, &args.library)?;
    let base = ExperimentConfig::default();
    let spec = scene_spec(&mut r, &args.scene, 0)?;
    let axis = SweepAxis::parse(&r.get("sweep", args.sweep, "dmer_db".to_string())?)?;
    let keep = r.get("keep", args.keep, base.keep)?;
    let default_value = match axis {
        SweepAxis::DmerDb => spec.dmer_db,
        SweepAxis::SnrDb => spec.snr_db,
        SweepAxis::Materials => spec.materials as f64,
        SweepAxis::Keep => keep as f64,
    };
    let values = match r.opt::<String>("values", args.values)? {
        Some(v) => parse_values(&v)?,
        None => vec![default_value],
    };
    let threshold = match r.get("low_snr_threshold_db", args.low_snr_threshold_db, "25".to_string())?.as_str() {
        "none" | "off" => None,
        t => Some(t.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("low-SNR threshold '{t}' is not a number")))?),
    };
    let (danser, csr) = solver_params(&mut r, &args.solver)?;
    let config = ExperimentConfig {
        sweep_axis: axis,
        sweep_values: values,
        trials: r.get("trials", args.trials, base.trials)?,
        base_seed: r.get("base_seed", args.base_seed, base.base_seed)?,
        materials: spec.materials,
        pixels: spec.pixels,
        dmer_db: spec.dmer_db,
        snr_db: spec.snr_db,
        keep,
        alpha: r.get("alpha", args.alpha, base.alpha)?,
        order: r.opt("order", args.order)?.map(OrderRule::Fixed),
        lambda_danser: danser.lambda,
        lambda_csr: csr.lambda,
        low_snr_threshold_db: threshold,
        lambda_danser_low_snr: r.get("lambda_low_snr", args.lambda_low_snr, base.lambda_danser_low_snr)?,
        lambda_csr_low_snr: r.get("csr_lambda_low_snr", args.csr_lambda_low_snr, base.lambda_csr_low_snr)?,
        csr,
        danser,
        workers: r.get("workers", args.workers, base.workers)?,
    };
    let dir = out_dir(&mut r, args.out_dir)?;
    let report = run_benchmark(&library, &config)?;

    let summary = experiment::summary_csv(&report.rows);
    write_text(&dir.join("summary.csv"), &summary)?;
    write_text(&dir.join("timing.csv"), &experiment::timing_csv(&report.rows))?;
    write_text(&dir.join("trials.csv"), &experiment::trials_csv(&config, &report))?;
    let failures: usize = report.rows.iter().map(|row| row.failures).sum();
    let mut results = BTreeMap::new();
    results.insert("failed_method_runs".to_string(), failures.to_string());
    results.insert("library_size".to_string(), library.len().to_string());
    meta::write(&dir, "benchmark", r.resolved(), &results)?;
    print!("{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residue_labels_are_quoted_when_needed() {
        let labels = ["quartz".to_string(), "a,b".to_string()];
        let table = residue_table(&labels, &[0.5, 0.25], &[0.0, 0.125]);
        assert_eq!(table, "index,label,gamma_music,gamma_rmusic\n0,quartz,0.5,0\n1,\"a,b\",0.25,0.125\n");
    }

    #[test]
    fn sweep_values_parse() {
        assert_eq!(parse_values("15, 20,25,").unwrap(), vec![15.0, 20.0, 25.0]);
        assert!(parse_values("15,x").unwrap_err().is_input_error());
    }

    #[test]
    fn presets_match_documented_lambdas() {
        assert_eq!(preset_lambdas(Preset::MonteCarlo), (0.5, 0.1));
        assert_eq!(preset_lambdas(Preset::Illustrative), (0.04, 0.005));
    }
}
