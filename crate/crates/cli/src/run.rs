//! Fit, predict, decompose and benchmark pipelines over run directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bcgp_core::kriging::{fit_kriging, Basis};
use bcgp_core::mcmc::{run_chain_with_progress, ChainOutput, Phase};
use bcgp_core::predict::PredictionResult;
use bcgp_core::testbed::{self, TestFunction};
use bcgp_core::{ModelState, Predictor, TrainingSet};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::io::{self, ChainRecord, Manifest, Phases, MANIFEST_FILE, MANIFEST_FORMAT, TRAINING_FILE};

/// Points per parallel prediction task.
const PREDICT_CHUNK: usize = 8;

pub fn draws_file(k: usize, chains: usize) -> String {
    if chains == 1 {
        "draws.csv".into()
    } else {
        format!("draws_chain{k}.csv")
    }
}

/// Training set from the configured CSV or built-in function, with a short
/// description of its source.
pub fn training_set(cfg: &RunConfig) -> Result<(TrainingSet, String)> {
    if let Some(path) = &cfg.data {
        let (x, y) = io::read_training(path)?;
        let data = TrainingSet::new(x, y, None).with_context(|| format!("training data {}", path.display()))?;
        return Ok((data, format!("csv:{}", path.display())));
    }
    let f = TestFunction::by_name(&cfg.function)?;
    let n = cfg.train_size();
    let unit: Vec<Vec<f64>> = if f.dim() == 1 {
        testbed::equispaced(n).into_iter().map(|u| vec![u]).collect()
    } else {
        testbed::lhs_maximin(n, f.dim(), cfg.design_seed, cfg.design_candidates)?
    };
    let x: Vec<Vec<f64>> = unit.iter().map(|u| f.from_unit(u)).collect();
    let y = x.iter().map(|xi| f.eval(xi)).collect::<bcgp_core::Result<Vec<_>>>()?;
    let data = TrainingSet::new(x, y, Some(f.bounds.to_vec()))?;
    Ok((data, format!("function:{}", f.name)))
}

/// Default prediction inputs of a built-in function: the 0, 0.01, ..., 1
/// grid in one dimension, otherwise `n_test` Sobol points.
pub fn default_points(f: &TestFunction, n_test: usize) -> Result<Vec<Vec<f64>>> {
    if f.dim() == 1 {
        return Ok((0..=100).map(|i| f.from_unit(&[i as f64 / 100.0])).collect());
    }
    Ok(testbed::sobol_points(n_test, f.dim())?.iter().map(|u| f.from_unit(u)).collect())
}

/// Prediction inputs for a run: the configured CSV, else the function grid.
fn prediction_points(cfg: &RunConfig, points: Option<&Path>, d: usize) -> Result<Vec<Vec<f64>>> {
    if let Some(p) = points.or(cfg.points.as_deref()) {
        return Ok(io::read_points(p, d)?.0);
    }
    if cfg.data.is_some() {
        bail!("no prediction points given; pass --points with columns x1..x{d}");
    }
    default_points(&TestFunction::by_name(&cfg.function)?, cfg.n_test)
}

pub struct FitOutcome {
    pub data: TrainingSet,
    pub outputs: Vec<ChainOutput>,
    pub manifest: Manifest,
    pub manifest_hash: String,
}

fn progress_logger(chain: usize, cfg: &RunConfig, quiet: bool) -> impl FnMut(Phase, usize) {
    let c = cfg.chain.clone();
    let step = |len: usize| (len / 10).max(1);
    move |phase, i| {
        if quiet {
            return;
        }
        let len = match phase {
            Phase::Calibration => c.n_adapt * c.num_updates,
            Phase::BurnIn => c.n_burn,
            Phase::Production => c.n_mcmc * c.thin,
        };
        if (i + 1) % step(len) == 0 || i + 1 == len {
            eprintln!("chain {chain}: {} {}/{len}", phase.name(), i + 1);
        }
    }
}

/// Runs the chains and writes `manifest.json`, `training.csv`, the draws,
/// `acceptance.csv` and `widths.csv` into `out`.
pub fn fit(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<FitOutcome> {
    if cfg.chains == 0 {
        bail!("chains must be at least 1");
    }
    let (data, source) = training_set(cfg)?;
    cfg.hyper.validate(data.d())?;
    cfg.chain.validate()?;
    let outputs = (0..cfg.chains)
        .into_par_iter()
        .map(|k| {
            let mut cc = cfg.chain.clone();
            cc.seed = cfg.chain_seed(k);
            let mut log = progress_logger(k, cfg, quiet);
            run_chain_with_progress(&data, &cfg.hyper, &cc, None, &mut log)
                .with_context(|| format!("chain {k} (seed {})", cc.seed))
        })
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let (d, n) = (data.d(), data.n());
    let training = io::training_text(data.x_raw(), data.y_raw());
    let bodies: Vec<String> = outputs.iter().map(|o| io::draws_body(&o.states, d, n)).collect();
    let t = data.transform();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        data_source: source,
        data_sha256: io::sha256_hex(training.as_bytes()),
        n,
        d,
        bounds: t.input_lo.iter().zip(&t.input_hi).map(|(a, b)| (io::fmt_f64(*a), io::fmt_f64(*b))).collect(),
        seed: cfg.chain.seed,
        phases: Phases {
            calibration_periods: cfg.chain.num_updates,
            n_adapt: cfg.chain.n_adapt,
            n_burn: cfg.chain.n_burn,
            n_mcmc: cfg.chain.n_mcmc,
            thin: cfg.chain.thin,
        },
        chains: bodies
            .iter()
            .enumerate()
            .map(|(k, b)| ChainRecord {
                file: draws_file(k, cfg.chains),
                seed: cfg.chain_seed(k),
                body_sha256: io::sha256_hex(b.as_bytes()),
            })
            .collect(),
        config: cfg.entries().into_iter().collect::<BTreeMap<_, _>>(),
    };
    let mbytes = manifest.to_bytes();
    let hash = io::sha256_hex(&mbytes);
    fs::write(out.join(MANIFEST_FILE), &mbytes).context("cannot write manifest")?;
    io::write_stamped(&out.join(TRAINING_FILE), &hash, &training)?;
    for (rec, body) in manifest.chains.iter().zip(&bodies) {
        io::write_stamped(&out.join(&rec.file), &hash, body)?;
    }
    io::write_stamped(&out.join("acceptance.csv"), &hash, &acceptance_body(&outputs))?;
    io::write_stamped(&out.join("widths.csv"), &hash, &widths_body(&outputs, d, cfg.hyper.include_nugget))?;
    Ok(FitOutcome { data, outputs, manifest, manifest_hash: hash })
}

fn acceptance_body(outputs: &[ChainOutput]) -> String {
    let mut s = String::from("chain,phase,parameter,proposed,accepted,rate\n");
    for (k, o) in outputs.iter().enumerate() {
        for (phase, name, c) in o.acceptance.iter() {
            s.push_str(&format!(
                "{k},{},{name},{},{},{}\n",
                phase.name(),
                c.proposed,
                c.accepted,
                io::fmt_f64(c.rate())
            ));
        }
        s.push_str(&format!("{k},all,ill_conditioned_rejections,{},0,0.0\n", o.acceptance.ill_conditioned_rejections));
    }
    s
}

fn widths_body(outputs: &[ChainOutput], d: usize, include_nugget: bool) -> String {
    let mut s = String::from("chain,parameter,initial,final\n");
    for (k, o) in outputs.iter().enumerate() {
        for p in bcgp_core::mcmc::Param::all(d, include_nugget) {
            let (a, b) = (o.initial_widths.get(p), o.final_widths.get(p));
            s.push_str(&format!("{k},{},{},{}\n", p.name(), io::fmt_f64(a), io::fmt_f64(b)));
        }
        let (a, b) = (o.initial_widths.tau2, o.final_widths.tau2);
        s.push_str(&format!("{k},tau2,{},{}\n", io::fmt_f64(a), io::fmt_f64(b)));
    }
    s
}

/// A verified run directory.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub manifest_hash: String,
    pub config: RunConfig,
    pub data: TrainingSet,
    /// Draws of all chains, in chain order.
    pub states: Vec<ModelState>,
}

/// Loads a run directory, checking the format, the training data hash, the
/// stamps of every file read and the draws hashes.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let mpath = dir.join(MANIFEST_FILE);
    let mbytes = fs::read(&mpath).with_context(|| format!("cannot read {}", mpath.display()))?;
    let manifest: Manifest =
        serde_json::from_slice(&mbytes).with_context(|| format!("bad manifest {}", mpath.display()))?;
    if manifest.format != MANIFEST_FORMAT {
        bail!("{}: unsupported run format `{}`", mpath.display(), manifest.format);
    }
    let hash = io::sha256_hex(&mbytes);
    let mut config = RunConfig::default();
    for (k, v) in &manifest.config {
        config.set(k, v).with_context(|| format!("{}: config echo", mpath.display()))?;
    }
    let tpath = dir.join(TRAINING_FILE);
    let training = io::read_stamped(&tpath, &hash)?;
    if io::sha256_hex(training.as_bytes()) != manifest.data_sha256 {
        bail!("{}: training data does not match the manifest hash", tpath.display());
    }
    let (x, y) = io::parse_training(&training, &tpath.display().to_string())?;
    let data = TrainingSet::new(x, y, Some(manifest.bounds_f64()?))?;
    if data.n() != manifest.n || data.d() != manifest.d {
        bail!("{}: training data size does not match the manifest", tpath.display());
    }
    let mut states = Vec::new();
    for rec in &manifest.chains {
        let p = dir.join(&rec.file);
        let body = io::read_stamped(&p, &hash)?;
        if io::sha256_hex(body.as_bytes()) != rec.body_sha256 {
            bail!("{}: draws do not match the manifest", p.display());
        }
        states.extend(io::parse_draws(&body, data.d(), data.n(), &p.display().to_string())?);
    }
    if states.is_empty() {
        bail!("{}: run has no posterior draws", dir.display());
    }
    Ok(LoadedRun { dir: dir.to_path_buf(), manifest, manifest_hash: hash, config, data, states })
}

/// Predictions at `points` from the run's draws, computed in parallel; the
/// result does not depend on the thread count.
pub fn predict_points(run: &LoadedRun, points: &[Vec<f64>], level: f64, seed: u64) -> Result<Vec<PredictionResult>> {
    predict_with(&run.data, &run.config, &run.states, points, level, seed)
}

fn predict_with(
    data: &TrainingSet,
    cfg: &RunConfig,
    states: &[ModelState],
    points: &[Vec<f64>],
    level: f64,
    seed: u64,
) -> Result<Vec<PredictionResult>> {
    let mut p = Predictor::new(data, &cfg.hyper, states)?;
    p.level = level;
    p.seed = seed;
    p.keep_samples = cfg.keep_samples;
    let chunks = points
        .par_chunks(PREDICT_CHUNK)
        .enumerate()
        .map(|(c, chunk)| p.predict_indexed(chunk, (c * PREDICT_CHUNK) as u64))
        .collect::<bcgp_core::Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    /// Prediction inputs; defaults to the run's configured points or grid.
    pub points: Option<PathBuf>,
    pub level: Option<f64>,
    /// Prediction seed; defaults to the run seed.
    pub seed: Option<u64>,
    /// Training CSV that must match the run's data hash.
    pub data: Option<PathBuf>,
}

/// Loads `dir`, checks `opts.data` against it and predicts.
pub fn predict_run(dir: &Path, opts: &PredictOptions) -> Result<(LoadedRun, Vec<PredictionResult>)> {
    let run = load_run(dir)?;
    if let Some(path) = &opts.data {
        let (x, y) = io::read_training(path)?;
        if io::sha256_hex(io::training_text(&x, &y).as_bytes()) != run.manifest.data_sha256 {
            bail!("{} does not match the training data of run {}", path.display(), dir.display());
        }
    }
    let points = prediction_points(&run.config, opts.points.as_deref(), run.data.d())?;
    let level = opts.level.unwrap_or(run.config.level);
    let seed = opts.seed.unwrap_or(run.config.chain.seed);
    let preds = predict_points(&run, &points, level, seed)?;
    Ok((run, preds))
}

/// `predict`: writes `predictions.csv` into the run directory.
pub fn predict(dir: &Path, opts: &PredictOptions) -> Result<PathBuf> {
    let (run, preds) = predict_run(dir, opts)?;
    let out = dir.join("predictions.csv");
    io::write_stamped(&out, &run.manifest_hash, &io::predictions_body(&preds))?;
    Ok(out)
}

/// Decomposition table: inputs, the three components and their sum.
pub fn decomposition_body(preds: &[PredictionResult]) -> String {
    let d = preds.first().map_or(0, |p| p.x_star.len());
    let mut s = (1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    s.push_str(",global,local,error,total\n");
    for p in preds {
        let c = p.components;
        let mut row = p.x_star.clone();
        row.extend([c.global, c.local, c.error, c.total()]);
        s.push_str(&row.iter().map(|v| io::fmt_f64(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// `decompose`: writes `decomposition.csv` into the run directory.
pub fn decompose(dir: &Path, opts: &PredictOptions) -> Result<PathBuf> {
    let (run, preds) = predict_run(dir, opts)?;
    let out = dir.join("decomposition.csv");
    io::write_stamped(&out, &run.manifest_hash, &decomposition_body(&preds))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub rmspe: f64,
    /// Published value for the same setup.
    pub reference: f64,
}

pub struct BenchmarkReport {
    pub fit: FitOutcome,
    pub rows: Vec<BenchRow>,
    pub points: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
    pub bcgp: Vec<PredictionResult>,
    /// Mean of `|pred - truth| / |truth|` for BCGP.
    pub bcgp_mean_relative_error: f64,
}

impl BenchmarkReport {
    pub fn rmspe(&self, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.rmspe)
    }
}

/// Published RMSPE of (BCGP, constant-mean kriging, second baseline) and of
/// the composite GP estimator, which is quoted but not computed here.
fn references(f: &TestFunction) -> ([f64; 3], f64) {
    if f.name == "bjx" {
        ([0.014, 0.067, 0.061], 0.023)
    } else {
        ([3.62, 1.03, 0.91], 2.76)
    }
}

/// Runs design, fit, prediction and scoring for BCGP and the kriging
/// baselines on a built-in function, writing the fit artifacts plus
/// `predictions.csv`, `benchmark_predictions.csv`, `rmspe.csv` and, for more
/// than one input, `global_bins_x{j}.csv`.
pub fn benchmark(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<BenchmarkReport> {
    if cfg.data.is_some() {
        bail!("benchmark runs on a built-in function; unset `data`");
    }
    let f = TestFunction::by_name(&cfg.function)?;
    let fit = fit(cfg, out, quiet)?;
    let hash = fit.manifest_hash.clone();
    let points = prediction_points(cfg, None, f.dim())?;
    let truth = points.iter().map(|x| f.eval(x)).collect::<bcgp_core::Result<Vec<_>>>()?;
    let states: Vec<ModelState> = fit.outputs.iter().flat_map(|o| o.states.iter().cloned()).collect();
    let bcgp = predict_with(&fit.data, cfg, &states, &points, cfg.level, cfg.chain.seed)?;
    io::write_stamped(&out.join("predictions.csv"), &hash, &io::predictions_body(&bcgp))?;

    let second = if f.dim() == 1 { Basis::Cubic } else { Basis::Linear };
    let mut columns: Vec<(String, Vec<f64>)> = vec![("bcgp".into(), bcgp.iter().map(|p| p.mean).collect())];
    for basis in [Basis::Constant, second] {
        let k = fit_kriging(&fit.data, basis, 0.0).with_context(|| format!("kriging with {} mean", basis.name()))?;
        columns.push((format!("kriging_{}", basis.name()), points.iter().map(|x| k.predict(x).0).collect()));
    }
    let (refs, cgp_ref) = references(&f);
    let rows = columns
        .iter()
        .zip(refs)
        .map(|((name, pred), reference)| {
            Ok(BenchRow {
                method: if name == "bcgp" { "BCGP".into() } else { name.clone() },
                rmspe: testbed::rmspe(pred, &truth)?,
                reference,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rel = testbed::relative_errors(&columns[0].1, &truth)?;
    let mre = rel.iter().sum::<f64>() / rel.len() as f64;

    let mut table = format!("# function={}; reference rmspe of the composite GP estimator: {cgp_ref}\n", f.name);
    table.push_str("method,rmspe,reference\n");
    for r in &rows {
        table.push_str(&format!("{},{},{}\n", r.method, io::fmt_f64(r.rmspe), r.reference));
    }
    table.push_str(&format!("# BCGP mean relative error {}\n", io::fmt_f64(mre)));
    io::write_stamped(&out.join("rmspe.csv"), &hash, &table)?;

    let mut bp = (1..=f.dim()).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    bp.push_str(",truth,bcgp,bcgp_lo,bcgp_hi,");
    bp.push_str(&columns[1..].iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(","));
    bp.push('\n');
    for (i, x) in points.iter().enumerate() {
        let mut row = x.clone();
        row.extend([truth[i], bcgp[i].mean, bcgp[i].interval.0, bcgp[i].interval.1]);
        row.extend(columns[1..].iter().map(|c| c.1[i]));
        bp.push_str(&row.iter().map(|v| io::fmt_f64(*v)).collect::<Vec<_>>().join(","));
        bp.push('\n');
    }
    io::write_stamped(&out.join("benchmark_predictions.csv"), &hash, &bp)?;

    if f.dim() > 1 {
        let global: Vec<f64> = bcgp.iter().map(|p| p.components.global).collect();
        for j in 0..f.dim() {
            let xj: Vec<f64> = points.iter().map(|x| x[j]).collect();
            let bins = testbed::group_by_bins(&xj, &global, 8)?;
            let mut s = String::from("bin,lo,hi,count,min,q1,median,q3,max\n");
            for (b, r) in bins.iter().enumerate() {
                let v = [r.lo, r.hi];
                let q = [r.min, r.q1, r.median, r.q3, r.max];
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    b + 1,
                    v.iter().map(|x| io::fmt_f64(*x)).collect::<Vec<_>>().join(","),
                    r.count,
                    q.iter().map(|x| io::fmt_f64(*x)).collect::<Vec<_>>().join(",")
                ));
            }
            io::write_stamped(&out.join(format!("global_bins_x{}.csv", j + 1)), &hash, &s)?;
        }
    }
    if !quiet {
        for r in &rows {
            eprintln!("{:<18} rmspe {:.4}  (published {})", r.method, r.rmspe, r.reference);
        }
    }
    Ok(BenchmarkReport { fit, rows, points, truth, bcgp, bcgp_mean_relative_error: mre })
}
