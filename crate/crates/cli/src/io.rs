//! File formats: training and point CSVs, posterior draws, predictions and
//! the run manifest.
//!
//! Every CSV written by a run starts with `# bcgp manifest_sha256=<hex>`,
//! the hash of the manifest bytes. The manifest in turn records the hash of
//! the canonical training data and of each draws file body, so a run
//! directory whose pieces do not belong together is rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bcgp_core::predict::PredictionResult;
use bcgp_core::ModelState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const HASH_PREFIX: &str = "# bcgp manifest_sha256=";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAINING_FILE: &str = "training.csv";
pub const MANIFEST_FORMAT: &str = "bcgp-run-1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Round-trip text form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Parses float cells of one record; `line` is the 1-based file line.
fn parse_row(rec: &csv::StringRecord, names: &[String], cols: &[usize], origin: &str) -> Result<Vec<f64>> {
    let line = rec.position().map_or(0, |p| p.line());
    cols.iter()
        .map(|&c| {
            let cell = rec.get(c).unwrap_or("");
            if cell.is_empty() {
                bail!("{origin}: row {line}, column `{}`: missing value", names[c]);
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow!("{origin}: row {line}, column `{}`: `{cell}` is not a number", names[c]))?;
            if !v.is_finite() {
                bail!("{origin}: row {line}, column `{}`: value must be finite", names[c]);
            }
            Ok(v)
        })
        .collect()
}

/// Header names and data records, with a length check per row.
fn records(text: &str, origin: &str) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = reader(text);
    let names: Vec<String> =
        rdr.headers().with_context(|| format!("{origin}: bad header"))?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        bail!("{origin}: missing header row");
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| anyhow!("{origin}: {e}"))?;
        if rec.len() != names.len() {
            let line = rec.position().map_or(0, |p| p.line());
            bail!("{origin}: row {line}: expected {} columns, found {}", names.len(), rec.len());
        }
        rows.push(rec);
    }
    Ok((names, rows))
}

fn check_input_names(names: &[String], d: usize, origin: &str) -> Result<()> {
    for (j, n) in names.iter().take(d).enumerate() {
        let want = format!("x{}", j + 1);
        if *n != want {
            bail!("{origin}: column {} is `{n}`, expected `{want}`", j + 1);
        }
    }
    Ok(())
}

/// Inputs and responses of a training CSV with header `x1,...,xd,y`.
pub fn parse_training(text: &str, origin: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (names, rows) = records(text, origin)?;
    if names.last().map(String::as_str) != Some("y") {
        bail!("{origin}: missing response column `y` (header is `{}`)", names.join(","));
    }
    let d = names.len() - 1;
    if d == 0 {
        bail!("{origin}: no input columns before `y`");
    }
    check_input_names(&names, d, origin)?;
    if rows.is_empty() {
        bail!("{origin}: no data rows");
    }
    let cols: Vec<usize> = (0..=d).collect();
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for rec in &rows {
        let mut v = parse_row(rec, &names, &cols, origin)?;
        ys.push(v.pop().expect("y column"));
        xs.push(v);
    }
    Ok((xs, ys))
}

pub fn read_training(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    parse_training(&read_text(path)?, &path.display().to_string())
}

/// Canonical text of a training set; its hash identifies the data.
pub fn training_text(x: &[Vec<f64>], y: &[f64]) -> String {
    let d = x.first().map_or(0, Vec::len);
    let mut s = input_header(d);
    s.push_str(",y\n");
    for (xi, yi) in x.iter().zip(y) {
        for v in xi {
            s.push_str(&fmt_f64(*v));
            s.push(',');
        }
        s.push_str(&fmt_f64(*yi));
        s.push('\n');
    }
    s
}

fn input_header(d: usize) -> String {
    (1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",")
}

/// Prediction inputs with the optional `y` column.
pub type Points = (Vec<Vec<f64>>, Option<Vec<f64>>);

/// Prediction inputs: columns `x1..xd`, optionally followed by `y`, which
/// is returned when present.
pub fn parse_points(text: &str, d: usize, origin: &str) -> Result<Points> {
    let (names, rows) = records(text, origin)?;
    let has_y = names.len() == d + 1 && names[d] == "y";
    if names.len() != d && !has_y {
        bail!("{origin}: expected columns x1..x{d} (optionally y), header is `{}`", names.join(","));
    }
    check_input_names(&names, d, origin)?;
    let cols: Vec<usize> = (0..names.len()).collect();
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::new();
    for rec in &rows {
        let mut v = parse_row(rec, &names, &cols, origin)?;
        if has_y {
            ys.push(v.pop().expect("y column"));
        }
        xs.push(v);
    }
    Ok((xs, has_y.then_some(ys)))
}

pub fn read_points(path: &Path, d: usize) -> Result<Points> {
    parse_points(&read_text(path)?, d, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub file: String,
    pub seed: u64,
    /// Hash of the draws file after its first line.
    pub body_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub calibration_periods: usize,
    pub n_adapt: usize,
    pub n_burn: usize,
    pub n_mcmc: usize,
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub data_source: String,
    pub data_sha256: String,
    pub n: usize,
    pub d: usize,
    /// Input ranges mapped to the unit cube, as round-trip text.
    pub bounds: Vec<(String, String)>,
    pub seed: u64,
    pub phases: Phases,
    pub chains: Vec<ChainRecord>,
    pub config: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(self).expect("manifest serializes");
        b.push(b'\n');
        b
    }

    pub fn bounds_f64(&self) -> Result<Vec<(f64, f64)>> {
        self.bounds
            .iter()
            .map(|(a, b)| Ok((a.parse()?, b.parse()?)))
            .collect::<Result<_, std::num::ParseFloatError>>()
            .context("manifest bounds")
    }
}

/// Prefixes `body` with the manifest hash line.
pub fn stamped(hash: &str, body: &str) -> String {
    format!("{HASH_PREFIX}{hash}\n{body}")
}

/// Splits a stamped file into its hash and body.
pub fn split_stamp<'a>(text: &'a str, origin: &str) -> Result<(&'a str, &'a str)> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let hash =
        first.strip_prefix(HASH_PREFIX).ok_or_else(|| anyhow!("{origin}: first line is not a manifest hash stamp"))?;
    Ok((hash.trim(), body))
}

/// Column names of a draws file.
pub fn draws_header(d: usize, n: usize) -> Vec<String> {
    let mut h = vec!["beta0".to_string(), "omega".into()];
    h.extend((1..=d).map(|j| format!("rho_g_{j}")));
    h.extend((1..=d).map(|j| format!("rho_l_{j}")));
    h.extend(["sigma2_eps".into(), "mu_v".into(), "sigma2_v".into()]);
    h.extend((1..=d).map(|j| format!("rho_v_{j}")));
    h.extend((1..=n).map(|i| format!("logv_{i}")));
    h
}

/// Draws body (without the stamp): a note on the latent columns, the header
/// and one row per stored draw.
pub fn draws_body(states: &[ModelState], d: usize, n: usize) -> String {
    let mut s = String::from("# logv_i columns hold W = log V at training input i\n");
    s.push_str(&draws_header(d, n).join(","));
    s.push('\n');
    for st in states {
        let mut row: Vec<f64> = vec![st.beta0, st.omega];
        row.extend(&st.rho_g);
        row.extend(&st.rho_l);
        row.extend([st.sigma2_eps, st.mu_v, st.sigma2_v]);
        row.extend(&st.rho_v);
        row.extend(&st.log_v);
        s.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn parse_draws(body: &str, d: usize, n: usize, origin: &str) -> Result<Vec<ModelState>> {
    let (names, rows) = records(body, origin)?;
    let want = draws_header(d, n);
    if names != want {
        bail!("{origin}: draws header does not match a d={d}, n={n} run");
    }
    let cols: Vec<usize> = (0..names.len()).collect();
    rows.iter()
        .map(|rec| {
            let v = parse_row(rec, &names, &cols, origin)?;
            let mut it = v.into_iter();
            let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
            let head = take(2);
            let rho_g = take(d);
            let rho_l = take(d);
            let mid = take(3);
            let rho_v = take(d);
            let log_v = take(n);
            Ok(ModelState {
                beta0: head[0],
                omega: head[1],
                rho_g,
                rho_l,
                sigma2_eps: mid[0],
                log_v,
                mu_v: mid[1],
                sigma2_v: mid[2],
                rho_v,
                log_v_extra: Vec::new(),
            })
        })
        .collect()
}

/// Column names of a predictions file.
pub fn predictions_header(d: usize) -> String {
    format!("{},mean,draw_mean,lo,hi,global,local,error", input_header(d))
}

pub fn predictions_body(preds: &[PredictionResult]) -> String {
    let d = preds.first().map_or(0, |p| p.x_star.len());
    let mut s = predictions_header(d);
    s.push('\n');
    for p in preds {
        let mut row: Vec<f64> = p.x_star.clone();
        row.extend([
            p.mean,
            p.draw_mean,
            p.interval.0,
            p.interval.1,
            p.components.global,
            p.components.local,
            p.components.error,
        ]);
        s.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// Reads a predictions body back into rows of named columns.
pub fn parse_table(text: &str, origin: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (names, rows) = records(text, origin)?;
    let cols: Vec<usize> = (0..names.len()).collect();
    let data = rows.iter().map(|r| parse_row(r, &names, &cols, origin)).collect::<Result<_>>()?;
    Ok((names, data))
}

/// Writes `body` stamped with `hash`.
pub fn write_stamped(path: &Path, hash: &str, body: &str) -> Result<()> {
    fs::write(path, stamped(hash, body)).with_context(|| format!("cannot write {}", path.display()))
}

/// Reads a stamped file, checking it carries `hash`; returns the body.
pub fn read_stamped(path: &Path, hash: &str) -> Result<String> {
    let text = read_text(path)?;
    let origin = path.display().to_string();
    let (h, body) = split_stamp(&text, &origin)?;
    if h != hash {
        bail!("{origin}: manifest hash {h} does not match this run ({hash})");
    }
    Ok(body.to_string())
}
