use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use pf_core::baseline::{exhaustive_partitions, greedy_merge_run};
use pf_core::dca::{dca_run, DcaConfig, DcaReport, InnerKind};
use pf_core::diagnostics::{run_all, VerifyConfig};
use pf_core::sweep::{
    geomspace, pareto_frontier, read_points_csv, read_points_json, run_sweep, write_points_csv,
    write_points_json, SweepConfig, TradeoffPoint,
};
use pf_core::{Error, JointXY};

use crate::overrides::{self, BadOverride};
use crate::{BaselineArgs, BaselineMode, DistArgs, ReportArgs, SolveArgs, SweepArgs, VerifyArgs};

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MAX_ITER: u8 = 3;
pub const EXIT_GUARD: u8 = 4;
pub const EXIT_CHECK: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub source: anyhow::Error,
}

impl CliError {
    fn input(source: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            source: source.into(),
        }
    }

    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            source: anyhow!(msg.into()),
        }
    }
}

impl From<BadOverride> for CliError {
    fn from(e: BadOverride) -> Self {
        Self::usage(e.0)
    }
}

type CmdResult = Result<u8, CliError>;

fn load(dist: &DistArgs) -> Result<JointXY, CliError> {
    JointXY::load(&dist.dist)
        .with_context(|| format!("loading {}", dist.dist.display()))
        .map_err(CliError::input)
}

/// `<path><suffix>`, e.g. `runs.csv` -> `runs.csv.frontier.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::input)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// CSV bytes that have been parsed back successfully.
fn checked_csv(points: &[TradeoffPoint]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_points_csv(&mut buf, points).map_err(CliError::input)?;
    let back = read_points_csv(buf.as_slice()).map_err(CliError::input)?;
    if back.len() != points.len() {
        return Err(CliError::input(anyhow!("CSV round trip lost records")));
    }
    Ok(buf)
}

fn json_bytes(points: &[TradeoffPoint]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_points_json(&mut buf, points).map_err(CliError::input)?;
    Ok(buf)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("PF_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            CliError::usage(format!(
                "PF_THREADS must be a non-negative integer, got {v:?}"
            ))
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::input(anyhow!(e)))
}

fn check_finite_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

pub fn solve(a: SolveArgs) -> CmdResult {
    let mut cfg = DcaConfig::new(a.beta, a.alpha, overrides::parse_q(&a.q)?).with_seed(a.seed);
    let mut card_z = a.card_z;
    if let Some(m) = a.max_iter {
        cfg.outer_max_iter = m;
    }
    if let Some(t) = a.tol {
        cfg.outer_tol = t;
    }
    for raw in &a.set {
        let (k, v) = overrides::split(raw)?;
        overrides::apply_dca(&mut cfg, &mut card_z, k, v)?;
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if card_z == 0 {
        return Err(CliError::usage("--card-z must be at least 1"));
    }

    let j = load(&a.dist)?;
    let result = dca_run(&j, card_z, &cfg, None).map_err(CliError::input)?;
    let report = DcaReport::new(&result, &cfg);
    let defect = result.encoder.z_given_x().max_column_defect();
    if defect > 1e-9 || report.encoder.len() != card_z {
        return Err(CliError::input(anyhow!(
            "solver returned an invalid encoder (column defect {defect:e})"
        )));
    }
    let text = serde_json::to_string_pretty(&report).map_err(CliError::input)? + "\n";
    write_or_print(a.out.as_deref(), &text)?;
    if result.converged {
        Ok(0)
    } else {
        eprintln!(
            "stopped after {} iterations without meeting the tolerance",
            result.iterations
        );
        Ok(EXIT_MAX_ITER)
    }
}

fn parse_grid(flag: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    if let [lo, hi, n] = parts[..] {
        let (lo, hi, n) = match (lo.parse::<f64>(), hi.parse::<f64>(), n.parse::<usize>()) {
            (Ok(lo), Ok(hi), Ok(n)) => (lo, hi, n),
            _ => {
                return Err(CliError::usage(format!(
                    "--{flag}: cannot parse {raw:?} as lo:hi:n"
                )))
            }
        };
        if !(lo > 0.0 && hi > lo && n >= 2) {
            return Err(CliError::usage(format!(
                "--{flag}: need 0 < lo < hi and n >= 2"
            )));
        }
        return Ok(geomspace(lo, hi, n));
    }
    Ok(overrides::parse_list(flag, raw)?)
}

fn sweep_config(a: &SweepArgs, j: &JointXY) -> Result<SweepConfig, CliError> {
    let mut cfg = SweepConfig::defaults_for(j, overrides::parse_q(&a.q)?);
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if let Some(cz) = &a.card_z {
        cfg.card_z_values = overrides::parse_list("card-z", cz)?;
    }
    if let Some(b) = a.beta {
        cfg.beta_grid = vec![b];
    }
    if let Some(al) = a.alpha {
        cfg.alpha_grid = vec![al];
    }
    if let Some(g) = &a.beta_grid {
        cfg.beta_grid = parse_grid("beta-grid", g)?;
    }
    if let Some(g) = &a.alpha_grid {
        cfg.alpha_grid = parse_grid("alpha-grid", g)?;
    }
    if let Some(m) = a.max_iter {
        cfg.outer_max_iter = m;
    }
    if let Some(t) = a.tol {
        cfg.outer_tol = t;
    }
    for raw in &a.set {
        let (k, v) = overrides::split(raw)?;
        overrides::apply_sweep(&mut cfg, k, v)?;
    }
    check_finite_positive("tol", cfg.outer_tol)?;
    check_finite_positive("bin-width", a.bin_width)?;
    if cfg.outer_max_iter == 0 {
        return Err(CliError::usage("--max-iter must be positive"));
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

pub fn sweep(a: SweepArgs) -> CmdResult {
    let j = load(&a.dist)?;
    let cfg = sweep_config(&a, &j)?;
    let pool = thread_pool()?;
    let outcome = pool
        .install(|| run_sweep(&j, &cfg))
        .map_err(CliError::input)?;

    let frontier = pareto_frontier(&outcome.points, a.bin_width);
    write_file(&a.out, &checked_csv(&outcome.points)?)?;
    write_file(&sibling(&a.out, ".frontier.csv"), &checked_csv(&frontier)?)?;
    write_file(&sibling(&a.out, ".json"), &json_bytes(&outcome.points)?)?;
    let defects = serde_json::to_vec_pretty(&outcome.defects).map_err(CliError::input)?;
    write_file(&sibling(&a.out, ".defects.json"), &defects)?;
    eprintln!(
        "{} runs, {} points, {} frontier points, {} defects",
        outcome.runs,
        outcome.points.len(),
        frontier.len(),
        outcome.defects.len()
    );
    Ok(0)
}

pub fn baseline(a: BaselineArgs) -> CmdResult {
    check_finite_positive("beta", a.beta)?;
    let j = load(&a.dist)?;
    let mut points = Vec::new();
    if matches!(a.mode, BaselineMode::Greedy | BaselineMode::Both) {
        points.extend(greedy_merge_run(&j, a.beta));
    }
    if matches!(a.mode, BaselineMode::Exhaustive | BaselineMode::Both) {
        match exhaustive_partitions(&j) {
            Ok(p) => points.extend(p),
            Err(e @ Error::AlphabetTooLarge(_)) => {
                return Err(CliError {
                    code: EXIT_GUARD,
                    source: e.into(),
                });
            }
            Err(e) => return Err(CliError::input(e)),
        }
    }
    write_file(&a.out, &checked_csv(&points)?)?;
    write_file(&sibling(&a.out, ".json"), &json_bytes(&points)?)?;
    Ok(0)
}

/// Runs audited by `verify`: both inner solvers at the solve defaults.
fn audited_runs(j: &JointXY, seed: u64) -> Result<Vec<pf_core::dca::DcaResult>, CliError> {
    [InnerKind::Ridge, InnerKind::SparseLog]
        .into_iter()
        .map(|kind| dca_run(j, 3, &DcaConfig::new(1.0, 1.0, kind).with_seed(seed), None))
        .collect::<Result<_, _>>()
        .map_err(CliError::input)
}

pub fn verify(a: VerifyArgs) -> CmdResult {
    let mut cfg = VerifyConfig {
        seed: a.seed,
        tolerance: a.tol,
        ..VerifyConfig::default()
    };
    for raw in &a.set {
        let (k, v) = overrides::split(raw)?;
        overrides::apply_verify(&mut cfg, k, v)?;
    }
    if cfg.gradient_samples == 0 || cfg.identity_samples == 0 || cfg.lemma1_pairs == 0 {
        return Err(CliError::usage("sample counts must be positive"));
    }
    let j = load(&a.dist)?;
    let runs = if a.audit {
        audited_runs(&j, a.seed)?
    } else {
        Vec::new()
    };
    let reports = run_all(&j, &cfg, &runs).map_err(CliError::input)?;
    let text: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    write_or_print(a.out.as_deref(), &text)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        Ok(EXIT_CHECK)
    }
}

#[derive(Debug, Serialize)]
struct PointRef {
    solver: String,
    beta: f64,
    alpha: f64,
    card_z: usize,
    restart: usize,
    i_zx_bits: f64,
    i_zy_bits: f64,
}

impl From<&TradeoffPoint> for PointRef {
    fn from(p: &TradeoffPoint) -> Self {
        Self {
            solver: p.solver.name().to_string(),
            beta: p.beta,
            alpha: p.alpha,
            card_z: p.card_z,
            restart: p.restart,
            i_zx_bits: p.i_zx_bits,
            i_zy_bits: p.i_zy_bits,
        }
    }
}

#[derive(Debug, Serialize)]
struct DominanceEntry {
    baseline: PointRef,
    dominated: bool,
    /// DCA point with the lowest `I(Z;Y)` among those within the slack.
    witness: Option<PointRef>,
}

#[derive(Debug, Serialize)]
struct DominanceSummary {
    slack_bits: f64,
    dca_points: usize,
    baseline_points: usize,
    dominated: usize,
    entries: Vec<DominanceEntry>,
}

fn read_points(path: &Path) -> Result<Vec<TradeoffPoint>, CliError> {
    let file = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(CliError::input)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        read_points_json(file)
    } else {
        read_points_csv(file)
    };
    parsed
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::input)
}

pub fn report(a: ReportArgs) -> CmdResult {
    check_finite_positive("bin-width", a.bin_width)?;
    if !(a.slack.is_finite() && a.slack >= 0.0) {
        return Err(CliError::usage("--slack must be non-negative"));
    }
    if a.inputs.is_empty() {
        return Err(CliError::input(anyhow!("no input files")));
    }
    let mut points = Vec::new();
    for p in &a.inputs {
        points.extend(read_points(p)?);
    }
    if points.is_empty() {
        return Err(CliError::input(anyhow!("inputs contain no records")));
    }

    let frontier = pareto_frontier(&points, a.bin_width);
    let (dca, baseline): (Vec<&TradeoffPoint>, Vec<&TradeoffPoint>) =
        points.iter().partition(|p| p.solver.is_dca());
    let entries: Vec<DominanceEntry> = baseline
        .iter()
        .map(|b| {
            let witness = dca
                .iter()
                .filter(|d| {
                    d.i_zx_bits >= b.i_zx_bits - a.slack && d.i_zy_bits <= b.i_zy_bits + a.slack
                })
                .min_by(|x, y| x.i_zy_bits.total_cmp(&y.i_zy_bits));
            DominanceEntry {
                baseline: (*b).into(),
                dominated: witness.is_some(),
                witness: witness.map(|w| (*w).into()),
            }
        })
        .collect();
    let summary = DominanceSummary {
        slack_bits: a.slack,
        dca_points: dca.len(),
        baseline_points: baseline.len(),
        dominated: entries.iter().filter(|e| e.dominated).count(),
        entries,
    };

    write_file(&a.out, &checked_csv(&frontier)?)?;
    let json = serde_json::to_vec_pretty(&summary).map_err(CliError::input)?;
    write_file(&sibling(&a.out, ".dominance.json"), &json)?;
    eprintln!(
        "{} points, {} on the frontier, {}/{} baseline points dominated",
        points.len(),
        frontier.len(),
        summary.dominated,
        summary.baseline_points
    );
    Ok(0)
}
