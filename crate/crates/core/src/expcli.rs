//! Experiment driver behind the `otoclab` binary.
//!
//! Every run reads an optional JSON config, applies command-line overrides
//! to its top-level keys and writes `curve.csv` or `residuals.csv` plus
//! `summary.json` into the output directory. Exit codes: 0 pass,
//! 2 numeric failure, 3 configuration error.

use crate::chains::{flow_deviation_track, ChainEvaluator, ChainSpec, LocalLawTarget};
use crate::ensemble::{
    eigendecompose, eigenvalues, random_unit_vector, sample_wigner, stream_rng, EntryLaw, Purpose, Symmetry,
    WignerSpec,
};
use crate::mterm::{m_bound_avg, m_chain_traced};
use crate::nc_comb::{catalan, enumerate_nc};
use crate::observable::Observable;
use crate::otoc::{
    build_example1_observable, build_example_observables, empirical_otoc, empirical_otoc_beta, estimate_relaxation_time,
    estimate_scrambling_time, moment_set, sff_closed_form, sff_sample, theoretical_otoc, theoretical_otoc_beta,
};
use crate::schatten::{otoc_error_envelope, EnvelopeMoments};
use crate::semicircle::m_sc;
use crate::stats::{loglog_slope, mean, median, quantile, std_dev, std_err};
use crate::C64;
use clap::{Parser, Subcommand};
use faer::{c64, Mat};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Largest tolerated share of samples excluded after a numerical failure.
pub const MAX_EXCLUDED: f64 = 0.01;

pub const CURVE_HEADER: &str = "t,emp_mean,emp_std,theory,envelope,n,samples";
pub const RESIDUAL_HEADER: &str = "n,k,ell,residual_median,envelope,ratio_median,ratio_p95";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) | CliError::Io(_) => EXIT_NUMERIC,
        }
    }
}

fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "otoclab", about = "OTOC and local-law experiments on Wigner matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Matrix sizes, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Infinite-temperature OTOC, sampled against theory.
    Otoc,
    /// Finite-temperature OTOC.
    OtocBeta,
    /// Averaged or isotropic local law residuals.
    Locallaw,
    /// Closed-form and bound checks of the deterministic approximation.
    MtermCheck,
    /// Deviation along the OU flow and the characteristics.
    Flow,
    /// Spectral form factor.
    Sff,
    /// Non-crossing partition counts and Kreweras identity.
    Comb,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Otoc => "otoc",
            Command::OtocBeta => "otoc-beta",
            Command::Locallaw => "locallaw",
            Command::MtermCheck => "mterm-check",
            Command::Flow => "flow",
            Command::Sff => "sff",
            Command::Comb => "comb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Avg,
    Iso,
}

/// Effective configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: Vec<usize>,
    pub samples: usize,
    pub symmetry: Symmetry,
    pub law: EntryLaw,
    /// 1: `A = B`; 2: disjoint supports.
    pub example: u8,
    pub a: f64,
    pub b: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// Geometric continuation of the time grid from `t_max` to `t_tail` (ratio 1.05); 0 disables it.
    pub t_tail: f64,
    /// JSON file with `"a"` and `"b"` as dense real rows or diagonals; replaces the examples.
    pub observable_file: Option<String>,
    /// `ε` in the OTOC error envelope.
    pub eps: f64,
    /// Exponent of the `N^γ` slack used when judging envelopes.
    pub slack: f64,
    pub beta: f64,
    pub delta: f64,
    pub kind: ChainKind,
    /// Spectral parameters as `[re, im]` pairs.
    pub z: Vec<[f64; 2]>,
    /// `Nℓ ≥ N^scale_eps` guard.
    pub scale_eps: f64,
    pub t_final: f64,
    pub step: f64,
    pub record_every: usize,
    pub k_max: usize,
    pub configs: usize,
}

impl ExperimentConfig {
    pub fn defaults(cmd: Command) -> Self {
        let mut c = Self {
            seed: 1,
            n: vec![256],
            samples: 20,
            symmetry: Symmetry::ComplexHermitian,
            law: EntryLaw::Gaussian,
            example: 2,
            a: 0.7,
            b: 0.7,
            t_max: 10.0,
            t_step: 0.1,
            t_tail: 0.0,
            observable_file: None,
            eps: 0.1,
            slack: 0.05,
            beta: 1.0,
            delta: 0.1,
            kind: ChainKind::Avg,
            z: vec![[0.3, 0.05], [0.3, 0.05]],
            scale_eps: 0.1,
            t_final: 0.5,
            step: 0.01,
            record_every: 10,
            k_max: 10,
            configs: 100,
        };
        match cmd {
            Command::Sff => {
                c.n = vec![512];
                c.samples = 200;
                c.t_max = 20.0;
                c.t_step = 0.25;
            }
            Command::Flow => {
                c.n = vec![512];
                c.z = vec![[0.3, 0.05]];
                c.symmetry = Symmetry::RealSymmetric;
            }
            Command::MtermCheck => c.n = vec![32],
            Command::OtocBeta => {
                c.example = 1;
                c.a = 0.5;
                c.b = 0.5;
                c.t_max = 5.0;
            }
            _ => {}
        }
        c
    }

    fn validate(&self, cmd: Command) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.n.is_empty() || self.n.iter().any(|&n| n < 8) {
            return bad("n must list sizes ≥ 8");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if !(self.t_step > 0.0 && self.t_max >= 0.0) {
            return bad("t_step must be positive and t_max non-negative");
        }
        if self.t_tail != 0.0 && self.t_tail <= self.t_max {
            return bad("t_tail must exceed t_max");
        }
        if self.observable_file.is_some() && self.n.len() != 1 {
            return bad("observable_file needs a single n");
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad("delta must lie in [0, 1)");
        }
        if self.z.iter().any(|z| z[1] == 0.0) {
            return bad("spectral parameters must be off the real axis");
        }
        match cmd {
            Command::Otoc | Command::OtocBeta if !matches!(self.example, 1 | 2) => bad("example must be 1 or 2"),
            Command::Locallaw if self.z.is_empty() || (self.kind == ChainKind::Iso && self.z.len() < 2) => {
                bad("locallaw needs k spectral parameters (k + 1 for iso)")
            }
            Command::Flow if self.z.len() != 1 || !(self.step > 0.0 && self.step <= 0.01) => {
                bad("flow needs one target z and a step in (0, 0.01]")
            }
            Command::Comb if self.k_max > crate::nc_comb::MAX_ENUM_K => bad("k_max too large"),
            _ => Ok(()),
        }
    }

    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(canon.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn times(&self) -> Vec<f64> {
        let steps = (self.t_max / self.t_step + 1e-9).floor() as usize;
        let mut ts: Vec<f64> = (0..=steps).map(|i| i as f64 * self.t_step).collect();
        if self.t_tail > 0.0 {
            let mut t = ts.last().copied().unwrap_or(0.0).max(self.t_step);
            while t * 1.05 < self.t_tail {
                t *= 1.05;
                ts.push(t);
            }
            ts.push(self.t_tail);
        }
        ts
    }

    fn spec(&self, n: usize) -> WignerSpec {
        WignerSpec { n, symmetry: self.symmetry, law: self.law, seed: self.seed }
    }

    fn zs(&self) -> Vec<C64> {
        self.z.iter().map(|z| C64::new(z[0], z[1])).collect()
    }
}

/// Merges a JSON config and command-line overrides onto the defaults of `cmd`.
pub fn resolve_config(cmd: Command, file: Option<&str>, cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut base = serde_json::to_value(ExperimentConfig::defaults(cmd)).expect("defaults serialise");
    let obj = base.as_object_mut().expect("config is an object");
    if let Some(text) = file {
        let user: Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let Value::Object(user) = user else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        for (k, v) in user {
            if !obj.contains_key(&k) {
                return Err(CliError::Config(format!("unknown key `{k}`")));
            }
            obj.insert(k, v);
        }
    }
    let mut over = Map::new();
    if let Some(s) = cli.seed {
        over.insert("seed".into(), json!(s));
    }
    if let Some(n) = &cli.n {
        over.insert("n".into(), json!(n));
    }
    if let Some(k) = cli.samples {
        over.insert("samples".into(), json!(k));
    }
    obj.extend(over);
    let cfg: ExperimentConfig = serde_json::from_value(base).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate(cmd)?;
    Ok(cfg)
}

#[inline]
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row of `curve.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub emp_mean: f64,
    pub emp_std: f64,
    pub theory: f64,
    pub envelope: f64,
    pub n: usize,
    pub samples: usize,
}

/// One row of `residuals.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub n: usize,
    pub k: usize,
    pub ell: f64,
    pub residual_median: f64,
    pub envelope: f64,
    pub ratio_median: f64,
    pub ratio_p95: f64,
}

/// Trailing comment line tying a CSV to its run.
pub fn provenance_line(cfg: &ExperimentConfig) -> String {
    format!("# config_hash={},seed={}\n", cfg.hash(), cfg.seed)
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(r.t),
            num(r.emp_mean),
            num(r.emp_std),
            num(r.theory),
            num(r.envelope),
            r.n,
            r.samples
        );
    }
    s
}

pub fn residuals_csv(rows: &[ResidualRow]) -> String {
    let mut s = format!("{RESIDUAL_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.n,
            r.k,
            num(r.ell),
            num(r.residual_median),
            num(r.envelope),
            num(r.ratio_median),
            num(r.ratio_p95)
        );
    }
    s
}

/// Outcome of one subcommand before it is written to disk.
#[derive(Debug, Clone)]
pub struct Report {
    pub curve: Option<Vec<CurveRow>>,
    pub residuals: Option<Vec<ResidualRow>>,
    pub results: Value,
    pub pass: bool,
}

struct Progress {
    quiet: bool,
}

impl Progress {
    fn say(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

/// Runs the per-sample closure in parallel, dropping failed samples.
fn collect_samples<T, F>(samples: usize, f: F) -> Result<(Vec<T>, usize), CliError>
where
    T: Send,
    F: Fn(u64) -> Result<T, CliError> + Sync,
{
    let out: Vec<Result<T, CliError>> = (0..samples as u64).into_par_iter().map(&f).collect();
    let mut ok = Vec::with_capacity(samples);
    let mut excluded = 0;
    for r in out {
        match r {
            Ok(v) => ok.push(v),
            Err(CliError::Numeric(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if excluded as f64 > MAX_EXCLUDED * samples as f64 {
        return Err(CliError::Numeric(format!("{excluded} of {samples} samples failed")));
    }
    Ok((ok, excluded))
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// `beta = None` runs the infinite-temperature OTOC.
pub fn run_otoc(cfg: &ExperimentConfig, beta: Option<f64>, log: bool) -> Result<Report, CliError> {
    let p = Progress { quiet: !log };
    let ts = cfg.times();
    let mut curve = Vec::new();
    let mut per_n = Vec::new();
    let mut pass = true;
    for &n in &cfg.n {
        p.say(&format!("otoc: N = {n}"));
        let (a, b) = example_pair(cfg, n)?;
        let b = b.as_ref().unwrap_or(&a);
        let moments = moment_set(&a, b).map_err(numeric)?;
        let theory = if let Some(beta) = beta {
            theoretical_otoc_beta(&moments, &ts, beta).map_err(numeric)?
        } else {
            theoretical_otoc(&moments, &ts)
        };
        let spec = cfg.spec(n);
        let (rows, excluded) = collect_samples(cfg.samples, |i| {
            let fact = eigendecompose(&sample_wigner(&spec, i)).map_err(numeric)?;
            if let Some(beta) = beta {
                empirical_otoc_beta(&fact, &a, b, &ts, beta).map_err(numeric)
            } else {
                Ok(empirical_otoc(&fact, &a, b, &ts).map_err(numeric)?.iter().map(|q| q.c).collect())
            }
        })?;
        let (ea, eb) = (EnvelopeMoments::of(&a), EnvelopeMoments::of(b));
        let slack = (n as f64).powf(cfg.slack);
        let mut ok_points = 0;
        let mut means = Vec::with_capacity(ts.len());
        for (j, &t) in ts.iter().enumerate() {
            let col = column(&rows, j);
            let (m, sd, se) = (mean(&col), std_dev(&col), std_err(&col));
            let env = otoc_error_envelope(t, n, ea, eb, cfg.eps);
            if (m - theory[j]).abs() <= 3.0 * se + slack * env {
                ok_points += 1;
            }
            means.push(m);
            curve.push(CurveRow { t, emp_mean: m, emp_std: sd, theory: theory[j], envelope: env, n, samples: rows.len() });
        }
        let frac = ok_points as f64 / ts.len() as f64;
        pass &= frac >= 0.95;
        let peak_emp = estimate_scrambling_time(&ts, &means);
        let peak_th = estimate_scrambling_time(&ts, &theory);
        per_n.push(json!({
            "n": n,
            "samples_used": rows.len(),
            "excluded": excluded,
            "fraction_within": frac,
            "a2": moments.a2, "b2": moments.b2, "ab": moments.ab, "a2b2": moments.a2b2, "abab": moments.abab,
            "t_star_theory": peak_th.map(|x| x.0), "peak_theory": peak_th.map(|x| x.1),
            "t_star_emp": peak_emp.map(|x| x.0), "peak_emp": peak_emp.map(|x| x.1),
            "t_relax_theory": estimate_relaxation_time(&ts, &theory, moments.thermal(), cfg.delta),
            "t_relax_emp": estimate_relaxation_time(&ts, &means, moments.thermal(), cfg.delta),
        }));
    }
    let mut results = json!({ "per_n": per_n });
    if cfg.n.len() >= 2 {
        let ns: Vec<f64> = cfg.n.iter().map(|&n| n as f64).collect();
        let pick = |key: &str| -> Option<Vec<f64>> {
            results["per_n"].as_array()?.iter().map(|r| r[key].as_f64()).collect()
        };
        if let (Some(pt), Some(pe)) = (pick("peak_theory"), pick("peak_emp")) {
            results["peak_slope_theory"] = json!(loglog_slope(&ns, &pt));
            results["peak_slope_emp"] = json!(loglog_slope(&ns, &pe));
        }
    }
    Ok(Report { curve: Some(curve), residuals: None, results, pass })
}

fn observable_from_json(v: &Value, n: usize) -> Result<Observable, CliError> {
    let bad = |m: &str| CliError::Config(format!("observable_file: {m}"));
    let rows = v.as_array().ok_or_else(|| bad("expected an array"))?;
    if rows.len() != n {
        return Err(bad(&format!("expected {n} entries, got {}", rows.len())));
    }
    let real = |x: &Value| x.as_f64().ok_or_else(|| bad("entries must be numbers"));
    if rows.iter().all(Value::is_number) {
        return Ok(Observable::diagonal(rows.iter().map(real).collect::<Result<_, _>>()?));
    }
    let mut m = Mat::<c64>::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().filter(|r| r.len() == n).ok_or_else(|| bad("rows must have length n"))?;
        for (j, x) in row.iter().enumerate() {
            m[(i, j)] = c64::new(real(x)?, 0.0);
        }
    }
    Observable::hermitian(m).map_err(|e| bad(&e.to_string()))
}

fn file_pair(path: &str, n: usize) -> Result<(Observable, Option<Observable>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
    let a = observable_from_json(&v["a"], n)?;
    let b = match v.get("b") {
        Some(b) => Some(observable_from_json(b, n)?),
        None => None,
    };
    for o in std::iter::once(&a).chain(&b) {
        if !o.is_traceless() {
            return Err(CliError::Config("observable_file: observables must be traceless".into()));
        }
    }
    Ok((a, b))
}

fn example_pair(cfg: &ExperimentConfig, n: usize) -> Result<(Observable, Option<Observable>), CliError> {
    if let Some(path) = &cfg.observable_file {
        return file_pair(path, n);
    }
    if cfg.example == 1 {
        Ok((build_example1_observable(n, cfg.a).map_err(|e| CliError::Config(e.to_string()))?, None))
    } else {
        let (a, b) = build_example_observables(n, cfg.a, cfg.b).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((a, Some(b)))
    }
}

/// `diag(+1, −1, +1, …)`, traceless for even `N`.
pub fn alternating_observable(n: usize) -> Observable {
    Observable::diagonal((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect())
}

pub fn run_locallaw(cfg: &ExperimentConfig, log: bool) -> Result<Report, CliError> {
    let p = Progress { quiet: !log };
    let zs = cfg.zs();
    let k = match cfg.kind {
        ChainKind::Avg => zs.len(),
        ChainKind::Iso => zs.len() - 1,
    };
    let mut rows = Vec::new();
    let mut pass = true;
    for &n in &cfg.n {
        p.say(&format!("locallaw: N = {n}"));
        let a = alternating_observable(n);
        let spec = ChainSpec { zs: zs.clone(), observables: vec![&a; k] };
        let target = match cfg.kind {
            ChainKind::Avg => LocalLawTarget::averaged(&spec, cfg.scale_eps),
            ChainKind::Iso => LocalLawTarget::isotropic(&spec, n, cfg.scale_eps),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        let complex = cfg.symmetry == Symmetry::ComplexHermitian;
        let x = random_unit_vector(n, cfg.seed, 0, complex);
        let y = random_unit_vector(n, cfg.seed, 1, complex);
        let wspec = cfg.spec(n);
        let (res, _) = collect_samples(cfg.samples, |i| {
            let fact = eigendecompose(&sample_wigner(&wspec, i)).map_err(numeric)?;
            let eval = ChainEvaluator::new(&fact, &spec.observables);
            match cfg.kind {
                ChainKind::Avg => target.residual_avg(&eval, &zs),
                ChainKind::Iso => target.residual_iso(&eval, &zs, x.as_ref(), y.as_ref()),
            }
            .map_err(numeric)
        })?;
        let residuals: Vec<f64> = res.iter().map(|r| r.residual).collect();
        let ratios: Vec<f64> = res.iter().map(|r| r.ratio).collect();
        let row = ResidualRow {
            n,
            k,
            ell: target.ell,
            residual_median: median(&residuals),
            envelope: target.envelope,
            ratio_median: median(&ratios),
            ratio_p95: quantile(&ratios, 0.95),
        };
        pass &= row.ratio_median <= (n as f64).powf(cfg.slack);
        rows.push(row);
    }
    let mut results = json!({ "kind": cfg.kind, "k": k });
    if rows.len() >= 2 {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let med: Vec<f64> = rows.iter().map(|r| r.residual_median).collect();
        let slope = loglog_slope(&ns, &med);
        let expected = if cfg.kind == ChainKind::Avg { -1.0 } else { -0.5 };
        results["slope"] = json!(slope);
        results["expected_slope"] = json!(expected);
        pass &= (slope - expected).abs() <= 0.3;
    }
    Ok(Report { curve: None, residuals: Some(rows), results, pass })
}

fn random_bulk_z<R: Rng>(rng: &mut R, eta_lo: f64, eta_hi: f64) -> C64 {
    let re = rng.random_range(-1.5..1.5);
    let im = rng.random_range(eta_lo..eta_hi);
    C64::new(re, if rng.random::<bool>() { im } else { -im })
}

pub fn run_mterm_check(cfg: &ExperimentConfig, log: bool) -> Result<Report, CliError> {
    let p = Progress { quiet: !log };
    let n = cfg.n[0];
    let mut rng = stream_rng(cfg.seed, 0, Purpose::Instance);
    let mut closed_form_dev = 0.0f64;
    let mut max_ratio = 0.0f64;
    p.say(&format!("mterm-check: {} configurations at N = {n}", cfg.configs));
    for i in 0..cfg.configs as u64 {
        let (z1, z2) = (random_bulk_z(&mut rng, 0.1, 1.0), random_bulk_z(&mut rng, 0.1, 1.0));
        let b = crate::ensemble::random_hermitian_observable(n, cfg.seed, 2 * i, false);
        let dense = b.to_dense();
        let got = m_chain_traced(&[z1, z2], &[dense.as_ref(), dense.as_ref()]).map_err(numeric)?;
        let (m1, m2) = (m_sc(z1).map_err(numeric)?, m_sc(z2).map_err(numeric)?);
        let tr = b.normalized_trace();
        let tr2 = crate::linalg::trace_product(dense.as_ref(), dense.as_ref()) / n as f64;
        let expect = m1 * m2 * tr * tr / (C64::new(1.0, 0.0) - m1 * m2) + m1 * m2 * (tr2 - tr * tr);
        closed_form_dev = closed_form_dev.max((got - expect).norm() / expect.norm().max(1.0));

        let k = 2 + (i as usize % 3);
        let zs: Vec<C64> = (0..k).map(|_| random_bulk_z(&mut rng, 0.05, 1.0)).collect();
        let obs: Vec<Observable> =
            (0..k).map(|j| crate::ensemble::random_hermitian_observable(n, cfg.seed, 2 * i + 1 + 1000 * j as u64, true)).collect();
        let refs: Vec<&Observable> = obs.iter().collect();
        let dense: Vec<Mat<c64>> = obs.iter().map(|o| o.to_dense()).collect();
        let mats: Vec<_> = dense.iter().map(|m| m.as_ref()).collect();
        let v = m_chain_traced(&zs, &mats).map_err(numeric)?;
        let bound = m_bound_avg(&zs, &refs).map_err(numeric)?;
        max_ratio = max_ratio.max(v.norm() / bound);
    }
    let pass = closed_form_dev <= 1e-8 && max_ratio <= 10.0;
    let results = json!({ "n": n, "configs": cfg.configs, "k2_closed_form_max_dev": closed_form_dev, "max_bound_ratio": max_ratio });
    Ok(Report { curve: None, residuals: None, results, pass })
}

pub fn run_flow(cfg: &ExperimentConfig, log: bool) -> Result<Report, CliError> {
    let p = Progress { quiet: !log };
    let z_target = cfg.zs()[0];
    let mut curve = Vec::new();
    let mut per_n = Vec::new();
    let mut pass = true;
    for &n in &cfg.n {
        p.say(&format!("flow: N = {n}"));
        let a = alternating_observable(n);
        let spec = cfg.spec(n);
        let (tracks, excluded) = collect_samples(cfg.samples, |i| {
            flow_deviation_track(&spec, i, z_target, &a, cfg.t_final, cfg.step, cfg.record_every).map_err(numeric)
        })?;
        let slack = (n as f64).powf(cfg.slack);
        let within = tracks.iter().filter(|t| t.terminal_ratio() <= slack).count();
        let frac = within as f64 / tracks.len() as f64;
        pass &= frac >= 0.9;
        for (j, &t) in tracks[0].times.iter().enumerate() {
            let dev: Vec<f64> = tracks.iter().map(|tr| tr.deviation[j].norm()).collect();
            curve.push(CurveRow {
                t,
                emp_mean: mean(&dev),
                emp_std: std_dev(&dev),
                theory: 0.0,
                envelope: tracks[0].envelope[j],
                n,
                samples: tracks.len(),
            });
        }
        let c = crate::ensemble::shooting_constant(z_target, cfg.t_final).map_err(numeric)?;
        per_n.push(json!({ "n": n, "fraction_within": frac, "excluded": excluded, "shooting_constant": c }));
    }
    Ok(Report { curve: Some(curve), residuals: None, results: json!({ "per_n": per_n }), pass })
}

pub fn run_sff(cfg: &ExperimentConfig, log: bool) -> Result<Report, CliError> {
    let p = Progress { quiet: !log };
    let ts = cfg.times();
    let mut curve = Vec::new();
    let mut per_n = Vec::new();
    let mut pass = true;
    for &n in &cfg.n {
        p.say(&format!("sff: N = {n}"));
        let spec = cfg.spec(n);
        let (rows, excluded) = collect_samples(cfg.samples, |i| {
            let ev = eigenvalues(&sample_wigner(&spec, i)).map_err(numeric)?;
            Ok(ts.iter().map(|&t| sff_sample(&ev, t)).collect::<Vec<f64>>())
        })?;
        let mut worst = 0.0f64;
        let mut within = 0;
        for (j, &t) in ts.iter().enumerate() {
            let col = column(&rows, j);
            let (m, se) = (mean(&col), std_err(&col));
            let theory = sff_closed_form(t, n);
            let dev = (m - theory).abs();
            if se > 1e-12 {
                worst = worst.max(dev / se);
            }
            if dev <= 3.0 * se + 1e-12 {
                within += 1;
            }
            curve.push(CurveRow { t, emp_mean: m, emp_std: std_dev(&col), theory, envelope: 3.0 * se, n, samples: rows.len() });
        }
        pass &= within == ts.len();
        per_n.push(json!({ "n": n, "points_within_3se": within, "points": ts.len(), "max_z": worst, "excluded": excluded }));
    }
    Ok(Report { curve: Some(curve), residuals: None, results: json!({ "per_n": per_n }), pass })
}

pub fn run_comb(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mut per_k = Vec::new();
    let mut pass = true;
    for k in 1..=cfg.k_max {
        let all = enumerate_nc(k).map_err(|e| CliError::Config(e.to_string()))?;
        let count_ok = all.len() as u64 == catalan(k);
        let kreweras_ok = k > 8 || all.iter().all(|p| p.len() + p.kreweras().len() == k + 1);
        pass &= count_ok && kreweras_ok;
        per_k.push(json!({ "k": k, "count": all.len(), "catalan": catalan(k), "kreweras_identity": kreweras_ok }));
    }
    Ok(Report { curve: None, residuals: None, results: json!({ "per_k": per_k }), pass })
}

/// Runs a subcommand with a resolved config.
pub fn run(cmd: Command, cfg: &ExperimentConfig, log: bool) -> Result<Report, CliError> {
    match cmd {
        Command::Otoc => run_otoc(cfg, None, log),
        Command::OtocBeta => run_otoc(cfg, Some(cfg.beta), log),
        Command::Locallaw => run_locallaw(cfg, log),
        Command::MtermCheck => run_mterm_check(cfg, log),
        Command::Flow => run_flow(cfg, log),
        Command::Sff => run_sff(cfg, log),
        Command::Comb => run_comb(cfg),
    }
}

/// Writes the report files into `out`.
pub fn write_report(out: &Path, cmd: Command, cfg: &ExperimentConfig, report: &Report, seconds: f64) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    if let Some(rows) = &report.curve {
        std::fs::write(out.join("curve.csv"), curve_csv(rows) + &provenance_line(cfg))?;
    }
    if let Some(rows) = &report.residuals {
        std::fs::write(out.join("residuals.csv"), residuals_csv(rows) + &provenance_line(cfg))?;
    }
    let summary = json!({
        "command": cmd.name(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "results": report.results,
        "pass": report.pass,
        "timings": { "total_seconds": seconds },
    });
    let text = serde_json::to_string_pretty(&summary).map_err(numeric)?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let outcome = (|| {
        let text = match &cli.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?),
            None => None,
        };
        let cfg = resolve_config(cli.command, text.as_deref(), &cli)?;
        let report = run(cli.command, &cfg, !cli.quiet)?;
        write_report(&cli.out, cli.command, &cfg, &report, started.elapsed().as_secs_f64())?;
        Ok::<bool, CliError>(report.pass)
    })();
    match outcome {
        Ok(true) => EXIT_PASS,
        Ok(false) => {
            if !cli.quiet {
                eprintln!("{}: numeric check failed", cli.command.name());
            }
            EXIT_NUMERIC
        }
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
