//! Hyperparameter sweeps over `(beta, alpha, |Z|, restart)`, Pareto
//! frontier extraction and CSV/JSON record I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dca::{dca_run, DcaConfig, InnerKind};
use crate::error::{Error, Result};
use crate::prob::JointXY;

pub const CSV_HEADER: [&str; 13] = [
    "solver",
    "q",
    "beta",
    "alpha",
    "card_z",
    "restart",
    "seed",
    "i_zx_bits",
    "i_zy_bits",
    "loss_nats",
    "converged",
    "iterations",
    "stationarity_gap",
];

pub const DEFAULT_BIN_WIDTH_BITS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    DcaRidge,
    DcaSparse,
    Greedy,
    Exhaustive,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::DcaRidge => "dca_ridge",
            Solver::DcaSparse => "dca_sparse",
            Solver::Greedy => "greedy",
            Solver::Exhaustive => "exhaustive",
        }
    }

    /// Penalty exponent for DCA solvers.
    pub fn q(self) -> Option<u8> {
        match self {
            Solver::DcaRidge => Some(2),
            Solver::DcaSparse => Some(1),
            Solver::Greedy | Solver::Exhaustive => None,
        }
    }

    pub fn is_dca(self) -> bool {
        self.q().is_some()
    }

    pub fn for_inner(kind: InnerKind) -> Self {
        match kind {
            InnerKind::Ridge => Solver::DcaRidge,
            InnerKind::SparseLog => Solver::DcaSparse,
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Solver::DcaRidge,
            Solver::DcaSparse,
            Solver::Greedy,
            Solver::Exhaustive,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Schema(format!("unknown solver {s:?}")))
    }
}

/// One point on the information plane plus the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub solver: Solver,
    pub beta: f64,
    pub alpha: f64,
    pub card_z: usize,
    pub restart: usize,
    pub seed: u64,
    pub i_zx_bits: f64,
    pub i_zy_bits: f64,
    pub loss_nats: f64,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub beta_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub card_z_values: Vec<usize>,
    pub restarts: usize,
    pub inner_kind: InnerKind,
    pub base_seed: u64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
}

impl SweepConfig {
    /// 16-point geometric grids on `[0.1, 10]`, `|Z|` from 2 to
    /// `max(|X|, |Y|) + 1`, 10 restarts.
    pub fn defaults_for(j: &JointXY, inner_kind: InnerKind) -> Self {
        let template = DcaConfig::new(1.0, 1.0, inner_kind);
        Self {
            beta_grid: geomspace(0.1, 10.0, 16),
            alpha_grid: geomspace(0.1, 10.0, 16),
            card_z_values: (2..=j.n_x().max(j.n_y()) + 1).collect(),
            restarts: 10,
            inner_kind,
            base_seed: 0,
            outer_tol: template.outer_tol,
            outer_max_iter: template.outer_max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("beta_grid", &self.beta_grid),
            ("alpha_grid", &self.alpha_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be non-empty and positive"
                )));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be strictly ascending"
                )));
            }
        }
        if self.card_z_values.is_empty() || self.card_z_values.contains(&0) {
            return Err(Error::InvalidConfig(
                "card_z values must be positive".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be positive".into()));
        }
        Ok(())
    }

    pub fn n_runs(&self) -> usize {
        self.beta_grid.len() * self.alpha_grid.len() * self.card_z_values.len() * self.restarts
    }

    fn dca_config(&self, beta: f64, alpha: f64, seed: u64) -> DcaConfig {
        let mut cfg = DcaConfig::new(beta, alpha, self.inner_kind).with_seed(seed);
        cfg.outer_tol = self.outer_tol;
        cfg.outer_max_iter = self.outer_max_iter;
        cfg
    }
}

/// `n` points from `lo` to `hi` with a constant ratio.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(
        lo > 0.0 && hi > lo && n >= 2,
        "geomspace needs 0 < lo < hi and n >= 2"
    );
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one sweep run, stable across platforms and schedules.
pub fn run_seed(
    base_seed: u64,
    beta_index: usize,
    alpha_index: usize,
    card_z: usize,
    restart: usize,
) -> u64 {
    [beta_index, alpha_index, card_z, restart]
        .into_iter()
        .fold(splitmix64(base_seed), |h, v| splitmix64(h ^ v as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectKind {
    /// The loss rose by more than the monotonicity slack on some steps.
    NonMonotone { steps: usize, max_increase: f64 },
    /// Stopped by the iteration cap instead of the loss-change rule.
    MaxIterations { iterations: usize },
    /// The run returned an error and produced no point.
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDefect {
    pub beta: f64,
    pub alpha: f64,
    pub card_z: usize,
    pub restart: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub kind: DefectKind,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Ordered by `(beta, alpha, card_z, restart)` grid position.
    pub points: Vec<TradeoffPoint>,
    pub defects: Vec<RunDefect>,
    /// Number of `dca_run` calls.
    pub runs: usize,
}

/// Runs every grid cell in parallel on the current rayon pool. Output order
/// does not depend on the schedule.
pub fn run_sweep(j: &JointXY, cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let mut jobs = Vec::with_capacity(cfg.n_runs());
    for (bi, &beta) in cfg.beta_grid.iter().enumerate() {
        for (ai, &alpha) in cfg.alpha_grid.iter().enumerate() {
            for &card_z in &cfg.card_z_values {
                for restart in 0..cfg.restarts {
                    jobs.push((
                        beta,
                        alpha,
                        card_z,
                        restart,
                        run_seed(cfg.base_seed, bi, ai, card_z, restart),
                    ));
                }
            }
        }
    }
    let solver = Solver::for_inner(cfg.inner_kind);
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(beta, alpha, card_z, restart, seed)| {
            let defect = |kind| RunDefect {
                beta,
                alpha,
                card_z,
                restart,
                seed,
                kind,
            };
            match dca_run(j, card_z, &cfg.dca_config(beta, alpha, seed), None) {
                Ok(r) => {
                    let mut defects = Vec::new();
                    if r.non_monotone_steps > 0 {
                        defects.push(defect(DefectKind::NonMonotone {
                            steps: r.non_monotone_steps,
                            max_increase: r.max_loss_increase,
                        }));
                    }
                    if !r.converged {
                        defects.push(defect(DefectKind::MaxIterations {
                            iterations: r.iterations,
                        }));
                    }
                    let point = TradeoffPoint {
                        solver,
                        beta,
                        alpha,
                        card_z,
                        restart,
                        seed,
                        i_zx_bits: r.i_zx_bits,
                        i_zy_bits: r.i_zy_bits,
                        loss_nats: r.final_loss(),
                        converged: r.converged,
                        iterations: r.iterations,
                        stationarity_gap: r.stationarity_gap,
                    };
                    (Some(point), defects)
                }
                Err(e) => (
                    None,
                    vec![defect(DefectKind::Failed {
                        message: e.to_string(),
                    })],
                ),
            }
        })
        .collect();

    let mut out = SweepOutcome {
        runs: jobs.len(),
        ..Default::default()
    };
    for (point, defects) in results {
        out.points.extend(point);
        out.defects.extend(defects);
    }
    Ok(out)
}

/// Lowest `I(Z;Y)` per `I(Z;X)` bin, then drops every point for which some
/// point has larger `I(Z;X)` and no larger `I(Z;Y)`.
///
/// The result is sorted by `I(Z;X)`; `I(Z;Y)` increases along it.
pub fn pareto_frontier(points: &[TradeoffPoint], bin_width_bits: f64) -> Vec<TradeoffPoint> {
    assert!(bin_width_bits > 0.0, "bin width must be positive");
    let mut bins: BTreeMap<i64, &TradeoffPoint> = BTreeMap::new();
    for p in points {
        let key = (p.i_zx_bits / bin_width_bits).floor() as i64;
        bins.entry(key)
            .and_modify(|best| {
                if p.i_zy_bits < best.i_zy_bits {
                    *best = p;
                }
            })
            .or_insert(p);
    }
    let mut candidates: Vec<&TradeoffPoint> = bins.into_values().collect();
    candidates.sort_by(|a, b| a.i_zx_bits.total_cmp(&b.i_zx_bits));

    let mut kept = Vec::new();
    let mut best_to_the_right = f64::INFINITY;
    for p in candidates.into_iter().rev() {
        if p.i_zy_bits < best_to_the_right {
            kept.push(p.clone());
            best_to_the_right = p.i_zy_bits;
        }
    }
    kept.reverse();
    kept
}

fn fmt_float(v: f64) -> String {
    format!("{v:.11e}")
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, idx: usize, line: usize) -> Result<T> {
    let raw = record.get(idx).unwrap_or_default();
    raw.parse().map_err(|_| {
        Error::Schema(format!(
            "line {line}: cannot parse {} from {raw:?}",
            CSV_HEADER[idx]
        ))
    })
}

pub fn write_points_csv<W: Write>(writer: W, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.write_record([
            p.solver.name().to_string(),
            p.solver.q().map_or_else(String::new, |q| q.to_string()),
            fmt_float(p.beta),
            fmt_float(p.alpha),
            p.card_z.to_string(),
            p.restart.to_string(),
            p.seed.to_string(),
            fmt_float(p.i_zx_bits),
            fmt_float(p.i_zy_bits),
            fmt_float(p.loss_nats),
            p.converged.to_string(),
            p.iterations.to_string(),
            fmt_float(p.stationarity_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_points_csv`]; any header or field
/// mismatch is a [`Error::Schema`].
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<TradeoffPoint>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Schema(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let line = i + 2;
        let solver: Solver = parse_field(&rec, 0, line)?;
        let q = rec.get(1).unwrap_or_default();
        let q_expected = solver.q().map_or_else(String::new, |q| q.to_string());
        if q != q_expected {
            return Err(Error::Schema(format!(
                "line {line}: q {q:?} does not match solver {solver}"
            )));
        }
        out.push(TradeoffPoint {
            solver,
            beta: parse_field(&rec, 2, line)?,
            alpha: parse_field(&rec, 3, line)?,
            card_z: parse_field(&rec, 4, line)?,
            restart: parse_field(&rec, 5, line)?,
            seed: parse_field(&rec, 6, line)?,
            i_zx_bits: parse_field(&rec, 7, line)?,
            i_zy_bits: parse_field(&rec, 8, line)?,
            loss_nats: parse_field(&rec, 9, line)?,
            converged: parse_field(&rec, 10, line)?,
            iterations: parse_field(&rec, 11, line)?,
            stationarity_gap: parse_field(&rec, 12, line)?,
        });
    }
    Ok(out)
}

/// JSON form of a record; same fields as the CSV columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRecord {
    solver: String,
    q: Option<u8>,
    beta: f64,
    alpha: f64,
    card_z: usize,
    restart: usize,
    seed: u64,
    i_zx_bits: f64,
    i_zy_bits: f64,
    loss_nats: f64,
    converged: bool,
    iterations: usize,
    stationarity_gap: f64,
}

pub fn write_points_json<W: Write>(writer: W, points: &[TradeoffPoint]) -> Result<()> {
    let records: Vec<PointRecord> = points
        .iter()
        .map(|p| PointRecord {
            solver: p.solver.name().to_string(),
            q: p.solver.q(),
            beta: p.beta,
            alpha: p.alpha,
            card_z: p.card_z,
            restart: p.restart,
            seed: p.seed,
            i_zx_bits: p.i_zx_bits,
            i_zy_bits: p.i_zy_bits,
            loss_nats: p.loss_nats,
            converged: p.converged,
            iterations: p.iterations,
            stationarity_gap: p.stationarity_gap,
        })
        .collect();
    serde_json::to_writer_pretty(writer, &records)?;
    Ok(())
}

pub fn read_points_json<R: Read>(reader: R) -> Result<Vec<TradeoffPoint>> {
    let records: Vec<PointRecord> =
        serde_json::from_reader(reader).map_err(|e| Error::Schema(e.to_string()))?;
    records
        .into_iter()
        .map(|r| {
            let solver: Solver = r.solver.parse()?;
            if solver.q() != r.q {
                return Err(Error::Schema(format!(
                    "q {:?} does not match solver {solver}",
                    r.q
                )));
            }
            Ok(TradeoffPoint {
                solver,
                beta: r.beta,
                alpha: r.alpha,
                card_z: r.card_z,
                restart: r.restart,
                seed: r.seed,
                i_zx_bits: r.i_zx_bits,
                i_zy_bits: r.i_zy_bits,
                loss_nats: r.loss_nats,
                converged: r.converged,
                iterations: r.iterations,
                stationarity_gap: r.stationarity_gap,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference_joint;
    use proptest::prelude::*;

    fn pt(i_zx: f64, i_zy: f64) -> TradeoffPoint {
        TradeoffPoint {
            solver: Solver::DcaRidge,
            beta: 1.0,
            alpha: 1.0,
            card_z: 2,
            restart: 0,
            seed: 0,
            i_zx_bits: i_zx,
            i_zy_bits: i_zy,
            loss_nats: 0.0,
            converged: true,
            iterations: 1,
            stationarity_gap: 0.0,
        }
    }

    #[test]
    fn geomspace_examples() {
        assert_eq!(geomspace(0.1, 10.0, 2), vec![0.1, 10.0]);
        let g = geomspace(0.1, 10.0, 3);
        assert!((g[1] - 1.0).abs() < 1e-15);
        let g = geomspace(0.1, 10.0, 16);
        let ratio = 100f64.powf(1.0 / 15.0);
        assert_eq!((g[0], g[15]), (0.1, 10.0));
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn frontier_examples() {
        let f = pareto_frontier(&[pt(1.0, 0.5), pt(1.0, 0.3)], DEFAULT_BIN_WIDTH_BITS);
        assert_eq!(f, vec![pt(1.0, 0.3)]);
        let f = pareto_frontier(&[pt(0.5, 0.2), pt(1.0, 0.1)], DEFAULT_BIN_WIDTH_BITS);
        assert_eq!(f, vec![pt(1.0, 0.1)]);
        assert_eq!(
            pareto_frontier(&[pt(0.7, 0.4)], DEFAULT_BIN_WIDTH_BITS),
            vec![pt(0.7, 0.4)]
        );
        assert!(pareto_frontier(&[], DEFAULT_BIN_WIDTH_BITS).is_empty());
    }

    proptest! {
        #[test]
        fn frontier_points_are_inputs_and_undominated(
            raw in proptest::collection::vec((0.0f64..2.0, 0.0f64..1.0), 1..60)
        ) {
            let pts: Vec<_> = raw.iter().map(|&(a, b)| pt(a, b)).collect();
            let f = pareto_frontier(&pts, DEFAULT_BIN_WIDTH_BITS);
            prop_assert!(!f.is_empty());
            for p in &f {
                prop_assert!(pts.contains(p));
            }
            for w in f.windows(2) {
                prop_assert!(w[0].i_zx_bits < w[1].i_zx_bits);
                prop_assert!(w[0].i_zy_bits < w[1].i_zy_bits);
            }
            // The point with the largest I(Z;X) bin always survives.
            let top = pts.iter().map(|p| (p.i_zx_bits / DEFAULT_BIN_WIDTH_BITS).floor() as i64).max().unwrap();
            let last = f.last().unwrap();
            prop_assert_eq!((last.i_zx_bits / DEFAULT_BIN_WIDTH_BITS).floor() as i64, top);
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(run_seed(7, 1, 2, 3, 4), run_seed(7, 1, 2, 3, 4));
        let mut seen = std::collections::HashSet::new();
        for b in 0..4 {
            for a in 0..4 {
                for z in 2..5 {
                    for r in 0..4 {
                        assert!(seen.insert(run_seed(0, b, a, z, r)));
                    }
                }
            }
        }
        // Pinned so that CSV output stays stable across releases.
        assert_eq!(run_seed(0, 0, 0, 0, 0), 8695987549771912286);
        assert_eq!(run_seed(42, 3, 5, 2, 7), 16572944776650489522);
    }

    #[test]
    fn small_sweep_shape_and_determinism() {
        let j = reference_joint();
        let mut cfg = SweepConfig::defaults_for(&j, InnerKind::Ridge);
        assert_eq!(cfg.n_runs(), 7680);
        cfg.beta_grid = vec![2.0];
        cfg.alpha_grid = vec![0.5];
        cfg.restarts = 1;
        let a = run_sweep(&j, &cfg).unwrap();
        assert_eq!(a.points.len(), cfg.card_z_values.len());
        assert_eq!(
            a.points.iter().map(|p| p.card_z).collect::<Vec<_>>(),
            cfg.card_z_values
        );
        let b = run_sweep(&j, &cfg).unwrap();
        assert_eq!(a.points, b.points);
        for p in &a.points {
            assert!(p.i_zy_bits <= p.i_zx_bits + 1e-9 && p.i_zx_bits >= -1e-9);
        }
    }

    #[test]
    fn config_validation() {
        let j = reference_joint();
        let mut cfg = SweepConfig::defaults_for(&j, InnerKind::SparseLog);
        assert!(cfg.validate().is_ok());
        cfg.beta_grid = vec![1.0, 0.5];
        assert!(cfg.validate().is_err());
        cfg.beta_grid = vec![0.0, 0.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let mut pts = vec![pt(1.25, 0.3), pt(0.0, 0.0)];
        pts[1].solver = Solver::Exhaustive;
        pts[1].alpha = 0.0;
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        assert!(text.contains("exhaustive,,"));
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);

        let mut js = Vec::new();
        write_points_json(&mut js, &pts).unwrap();
        assert_eq!(read_points_json(js.as_slice()).unwrap(), pts);
    }

    #[test]
    fn csv_schema_errors() {
        assert!(matches!(
            read_points_csv("a,b\n1,2\n".as_bytes()),
            Err(Error::Schema(_))
        ));
        let bad_q = format!(
            "{}\ngreedy,2,1,0,1,0,0,0,0,0,true,0,0\n",
            CSV_HEADER.join(",")
        );
        assert!(matches!(
            read_points_csv(bad_q.as_bytes()),
            Err(Error::Schema(_))
        ));
        let bad_num = format!(
            "{}\ngreedy,,x,0,1,0,0,0,0,0,true,0,0\n",
            CSV_HEADER.join(",")
        );
        assert!(matches!(
            read_points_csv(bad_num.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn floats_keep_twelve_significant_digits() {
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333333e-1");
        let v: f64 = fmt_float(std::f64::consts::PI).parse().unwrap();
        assert!((v - std::f64::consts::PI).abs() < 1e-11);
    }
}
