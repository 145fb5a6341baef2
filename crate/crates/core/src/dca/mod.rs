//! Difference-of-convex iteration for the privacy funnel Lagrangian.
//!
//! The loss `I(Z;Y) - beta I(Z;X)` is split as `f - g` with
//!
//! ```text
//! f(P) = -H(Z|Y)                 (convex through P(Z|Y) = P(Z|X) P(X|Y))
//! g(P) = -H(Z) + beta I(Z;X)     (convex in P(Z|X) for fixed p_X)
//! ```
//!
//! Each outer step linearises `g` at the current encoder. The first-order
//! condition of the surrogate, `sum_y P(y|x) log P(z|y) = c(z, x)` with
//!
//! ```text
//! c(z, x) = log p_z + beta (log P(z|x) - log p_z),
//! ```
//!
//! is solved for `log P(z|y)` through the pseudo-inverse of the
//! `B = I ⊗ P(Y|X)^T` operator and normalised over `z` with a softmax. The
//! resulting target `q(z|y)` is then matched by an encoder through one of two
//! inner solvers:
//!
//! - [`InnerKind::Ridge`]: `½‖A p - q‖² + α‖p‖²` over column-stochastic `p`
//!   ([`inner_ridge_solve`]);
//! - [`InnerKind::SparseLog`]: `½‖lse_x(log P(x|y) + L(z,x)) - log q‖² + α‖L‖₁`
//!   over box-constrained log-likelihoods `L`, mapped back with a softmax
//!   ([`inner_sparse_solve`]).
//!
//! Both inner solvers warm-start from the previous outer iterate.

mod ridge;
mod sparse;

pub use ridge::{inner_ridge_solve, ridge_objective};
pub use sparse::{inner_sparse_solve, inner_sparse_solve_log, sparse_objective_and_gradient};

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{
    make_a_operator, make_b_operator, softmax_over_z, MarkovOperator, ZMajorVector, DEFAULT_RCOND,
};
use crate::prob::{entropy, pf_lagrangian, CondDist, Encoder, JointXY};
use crate::NATS_TO_BITS;

/// Floor applied to probabilities before every log that feeds an
/// optimisation step.
pub const DEFAULT_LOG_CLAMP: f64 = 1e-12;

/// A loss increase larger than this between outer iterates is a defect.
pub const MONOTONE_SLACK: f64 = 1e-6;

/// Coordinates at or below this mass are treated as sitting on the
/// `P(z|x) >= 0` bound when measuring stationarity.
pub const ACTIVE_BOUND: f64 = 1e-8;

/// Number of past iterates compared against each new one to find cycles.
const CYCLE_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    /// Squared 2-norm penalty on `P(Z|X)` (q = 2).
    Ridge,
    /// 1-norm penalty on log-likelihoods (q = 1).
    SparseLog,
}

impl InnerKind {
    pub fn q(self) -> u8 {
        match self {
            InnerKind::Ridge => 2,
            InnerKind::SparseLog => 1,
        }
    }

    pub fn from_q(q: u8) -> Option<Self> {
        match q {
            2 => Some(InnerKind::Ridge),
            1 => Some(InnerKind::SparseLog),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcaConfig {
    pub beta: f64,
    pub alpha: f64,
    pub inner_kind: InnerKind,
    /// Stop once consecutive losses differ by at most this much.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Relative objective change that ends an inner solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Log-likelihood box `[-box_max, -box_min]` for the sparse solver.
    pub box_min: f64,
    pub box_max: f64,
    pub log_clamp: f64,
    pub seed: u64,
    pub pinv_rcond: f64,
    /// Minimum numerical rank of the `B` block; `None` means
    /// `min(|X|, |Y|)`.
    pub min_rank: Option<usize>,
}

impl DcaConfig {
    pub fn new(beta: f64, alpha: f64, inner_kind: InnerKind) -> Self {
        Self {
            beta,
            alpha,
            inner_kind,
            outer_tol: 1e-6,
            outer_max_iter: 10_000,
            inner_tol: 1e-9,
            inner_max_iter: 5_000,
            box_min: 1e-6,
            box_max: 30.0,
            log_clamp: DEFAULT_LOG_CLAMP,
            seed: 0,
            pinv_rcond: DEFAULT_RCOND,
            min_rank: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("box_min", self.box_min),
            ("log_clamp", self.log_clamp),
            ("pinv_rcond", self.pinv_rcond),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.box_max.is_finite() && self.box_max > self.box_min) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < box_min < box_max, got {} and {}",
                self.box_min, self.box_max
            )));
        }
        if self.outer_max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DcaResult {
    pub encoder: Encoder,
    /// Loss in nats at the initial point and after every outer step.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity_gap: f64,
    pub i_zx_bits: f64,
    pub i_zy_bits: f64,
    /// Outer steps whose loss rose by more than [`MONOTONE_SLACK`].
    pub non_monotone_steps: usize,
    pub max_loss_increase: f64,
    /// `min_k (L_k - L_{k+1}) - ½‖p_z^k - p_z^{k+1}‖²`; nonnegative when
    /// every outer step achieves the sufficient-decrease bound.
    pub min_descent_margin: f64,
    /// Numerical rank of the `B` block used for the target.
    pub b_rank: usize,
}

impl DcaResult {
    pub fn final_loss(&self) -> f64 {
        *self
            .loss_trace
            .last()
            .expect("trace holds the initial loss")
    }

    pub fn is_monotone(&self) -> bool {
        self.non_monotone_steps == 0
    }
}

/// JSON form of a [`DcaResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcaReport {
    pub beta: f64,
    pub alpha: f64,
    pub q: u8,
    pub card_z: usize,
    pub seed: u64,
    /// Row `z`, column `x` is `P(z|x)`.
    pub encoder: Vec<Vec<f64>>,
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity_gap: f64,
    pub i_zx_bits: f64,
    pub i_zy_bits: f64,
    pub loss_nats: f64,
    pub non_monotone_steps: usize,
    pub max_loss_increase: f64,
    pub min_descent_margin: f64,
    pub b_rank: usize,
}

impl DcaReport {
    pub fn new(result: &DcaResult, cfg: &DcaConfig) -> Self {
        Self {
            beta: cfg.beta,
            alpha: cfg.alpha,
            q: cfg.inner_kind.q(),
            card_z: result.encoder.card_z(),
            seed: cfg.seed,
            encoder: result.encoder.z_given_x().to_rows(),
            loss_trace: result.loss_trace.clone(),
            converged: result.converged,
            iterations: result.iterations,
            stationarity_gap: result.stationarity_gap,
            i_zx_bits: result.i_zx_bits,
            i_zy_bits: result.i_zy_bits,
            loss_nats: result.final_loss(),
            non_monotone_steps: result.non_monotone_steps,
            max_loss_increase: result.max_loss_increase,
            min_descent_margin: result.min_descent_margin,
            b_rank: result.b_rank,
        }
    }
}

#[inline]
fn clamped_ln(p: f64, clamp: f64) -> f64 {
    p.max(clamp).ln()
}

/// `f(P) = -H(Z|Y)`.
pub fn f_value(enc: &Encoder, j: &JointXY) -> f64 {
    let pzy = enc.z_given_y(j);
    let h: f64 = pzy
        .matrix()
        .column_iter()
        .zip(j.p_y().probs())
        .map(|(col, &py)| py * crate::prob::entropy_of(col.iter()))
        .sum();
    -h
}

/// `g(P) = -H(Z) + beta I(Z;X)`.
pub fn g_value(enc: &Encoder, j: &JointXY, beta: f64) -> f64 {
    -entropy(&enc.p_z(j.p_x())) + beta * enc.i_zx(j)
}

pub(crate) fn grad_g_clamped(enc: &Encoder, j: &JointXY, beta: f64, clamp: f64) -> ZMajorVector {
    let pz = enc.p_z(j.p_x());
    let (card_z, n_x) = (enc.card_z(), enc.n_x());
    let m = DMatrix::from_fn(card_z, n_x, |z, x| {
        let log_pz = clamped_ln(pz.probs()[z], clamp);
        let log_pzx = clamped_ln(enc.matrix()[(z, x)], clamp);
        j.p_x().probs()[x] * (log_pz + 1.0 + beta * (log_pzx - log_pz))
    });
    ZMajorVector::from_matrix(&m)
}

pub(crate) fn grad_f_clamped(enc: &Encoder, j: &JointXY, clamp: f64) -> ZMajorVector {
    let log_pzy = enc.z_given_y(j).matrix().map(|p| clamped_ln(p, clamp));
    // (z, x) entry: sum_y log P(z|y) P(y|x)
    let inner = &log_pzy * j.y_given_x().matrix();
    let m = DMatrix::from_fn(enc.card_z(), enc.n_x(), |z, x| {
        j.p_x().probs()[x] * (inner[(z, x)] + 1.0)
    });
    ZMajorVector::from_matrix(&m)
}

/// `dg/dP(z|x) = p(x) { log p(z) + 1 + beta log(P(z|x) / p(z)) }`.
pub fn grad_g(enc: &Encoder, j: &JointXY, beta: f64) -> ZMajorVector {
    grad_g_clamped(enc, j, beta, DEFAULT_LOG_CLAMP)
}

/// `df/dP(z|x) = p(x) sum_y P(y|x) (log P(z|y) + 1)`.
pub fn grad_f(enc: &Encoder, j: &JointXY) -> ZMajorVector {
    grad_f_clamped(enc, j, DEFAULT_LOG_CLAMP)
}

pub(crate) fn compute_c_clamped(enc: &Encoder, j: &JointXY, beta: f64, clamp: f64) -> ZMajorVector {
    let pz = enc.p_z(j.p_x());
    let m = DMatrix::from_fn(enc.card_z(), enc.n_x(), |z, x| {
        let log_pz = clamped_ln(pz.probs()[z], clamp);
        log_pz + beta * (clamped_ln(enc.matrix()[(z, x)], clamp) - log_pz)
    });
    ZMajorVector::from_matrix(&m)
}

/// Right-hand side of the linear update: `log p_z + beta log(P(z|x)/p_z)`.
pub fn compute_c(enc_k: &Encoder, j: &JointXY, beta: f64) -> ZMajorVector {
    compute_c_clamped(enc_k, j, beta, DEFAULT_LOG_CLAMP)
}

/// Per-run precomputation shared by the outer loop and the inner solvers.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    /// `(y, x)` entry is `P(x|y)`.
    pub a_block: DMatrix<f64>,
    pub a_sigma_max: f64,
    /// Clamped `log P(x|y)`, `(x, y)` indexed.
    pub log_x_given_y: DMatrix<f64>,
    pub b_pinv: MarkovOperator,
    pub b_rank: usize,
}

impl Workspace {
    pub fn new(
        j: &JointXY,
        card_z: usize,
        rcond: f64,
        min_rank: Option<usize>,
        clamp: f64,
    ) -> Result<Self> {
        let b = make_b_operator(j, card_z);
        let required = min_rank.unwrap_or_else(|| j.n_x().min(j.n_y()));
        let b_pinv = b.pseudo_inverse(rcond, required)?;
        let a = make_a_operator(j, card_z);
        Ok(Self {
            a_sigma_max: a.operator_norm(),
            a_block: a.block().clone(),
            log_x_given_y: j.x_given_y().matrix().map(|p| clamped_ln(p, clamp)),
            b_rank: b.rank(rcond),
            b_pinv,
        })
    }

    pub fn target(&self, enc: &Encoder, j: &JointXY, beta: f64, clamp: f64) -> Result<CondDist> {
        let c = compute_c_clamped(enc, j, beta, clamp);
        let log_unnormalised = self.b_pinv.apply(&c)?;
        Ok(CondDist::from_matrix_unchecked(
            softmax_over_z(&log_unnormalised).to_matrix(),
        ))
    }
}

/// The DCA target `q(z|y) = softmax_z(B^+ c)`, a `|Z| × |Y|` conditional.
pub fn compute_target(enc_k: &Encoder, j: &JointXY, beta: f64) -> Result<CondDist> {
    let cfg = DcaConfig::new(beta, 1.0, InnerKind::Ridge);
    Workspace::new(
        j,
        enc_k.card_z(),
        cfg.pinv_rcond,
        cfg.min_rank,
        cfg.log_clamp,
    )?
    .target(enc_k, j, beta, cfg.log_clamp)
}

/// Largest violation of `grad f = grad g` on the simplex.
///
/// Per column `x`, the difference `grad f - grad g` is centred over the
/// coordinates with `P(z|x) > 1e-8` (removing the simplex multiplier) and
/// coordinates on the lower bound are ignored.
pub fn stationarity_gap(enc: &Encoder, j: &JointXY, beta: f64) -> f64 {
    stationarity_gap_clamped(enc, j, beta, DEFAULT_LOG_CLAMP)
}

pub(crate) fn stationarity_gap_clamped(enc: &Encoder, j: &JointXY, beta: f64, clamp: f64) -> f64 {
    let gf = grad_f_clamped(enc, j, clamp);
    let gg = grad_g_clamped(enc, j, beta, clamp);
    let mut gap: f64 = 0.0;
    for x in 0..enc.n_x() {
        let active: Vec<usize> = (0..enc.card_z())
            .filter(|&z| enc.matrix()[(z, x)] > ACTIVE_BOUND)
            .collect();
        if active.is_empty() {
            continue;
        }
        let d: Vec<f64> = active
            .iter()
            .map(|&z| gf.get(z, x) - gg.get(z, x))
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        gap = d.iter().fold(gap, |g, v| g.max((v - mean).abs()));
    }
    gap
}

fn marginal_shift_sq(prev: &Encoder, next: &Encoder, j: &JointXY) -> f64 {
    let a = prev.p_z(j.p_x());
    let b = next.p_z(j.p_x());
    a.probs()
        .iter()
        .zip(b.probs())
        .map(|(u, v)| (u - v).powi(2))
        .sum()
}

/// Runs the DCA outer loop from `init`, or from a random encoder drawn with
/// `cfg.seed` (entries uniform on `[0, 1]`, columns normalised).
///
/// Stops when consecutive losses differ by at most `cfg.outer_tol` or after
/// `cfg.outer_max_iter` steps. Loss increases beyond [`MONOTONE_SLACK`] are
/// counted in the result rather than suppressed.
pub fn dca_run(
    j: &JointXY,
    card_z: usize,
    cfg: &DcaConfig,
    init: Option<&Encoder>,
) -> Result<DcaResult> {
    cfg.validate()?;
    if card_z == 0 {
        return Err(Error::InvalidConfig("card_z must be at least 1".into()));
    }
    let mut enc = match init {
        Some(e) if e.card_z() != card_z || e.n_x() != j.n_x() => {
            return Err(Error::DimensionMismatch(format!(
                "initial encoder is {}x{}, expected {}x{}",
                e.card_z(),
                e.n_x(),
                card_z,
                j.n_x()
            )))
        }
        Some(e) => e.clone(),
        None => Encoder::random(card_z, j.n_x(), &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
    };

    let ws = Workspace::new(j, card_z, cfg.pinv_rcond, cfg.min_rank, cfg.log_clamp)?;
    let mut loss = pf_lagrangian(&enc, j, cfg.beta);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    let mut non_monotone_steps = 0;
    let mut max_loss_increase = f64::NEG_INFINITY;
    let mut min_descent_margin = f64::INFINITY;

    // Each step is a pure function of the previous encoder, so once an iterate
    // repeats bit for bit the remaining steps replay the cycle exactly.
    let mut history: VecDeque<Encoder> = VecDeque::with_capacity(CYCLE_WINDOW);
    let mut replay: Option<(Vec<Encoder>, usize)> = None;

    while iterations < cfg.outer_max_iter {
        let next = match &mut replay {
            Some((cycle, pos)) => {
                let e = cycle[*pos].clone();
                *pos = (*pos + 1) % cycle.len();
                e
            }
            None => {
                let target = ws.target(&enc, j, cfg.beta, cfg.log_clamp)?;
                let next = match cfg.inner_kind {
                    InnerKind::Ridge => ridge::solve(&ws, &target, cfg.alpha, cfg, &enc),
                    InnerKind::SparseLog => sparse::solve(&ws, &target, cfg.alpha, cfg, &enc),
                };
                if history.len() == CYCLE_WINDOW {
                    history.pop_front();
                }
                history.push_back(enc.clone());
                if let Some(back) = history.iter().rev().position(|h| bitwise_eq(h, &next)) {
                    let start = history.len() - back;
                    let mut cycle: Vec<Encoder> = history.iter().skip(start).cloned().collect();
                    cycle.push(next.clone());
                    replay = Some((cycle, 0));
                }
                next
            }
        };
        let next_loss = pf_lagrangian(&next, j, cfg.beta);
        iterations += 1;

        let increase = next_loss - loss;
        max_loss_increase = max_loss_increase.max(increase);
        if increase > MONOTONE_SLACK {
            non_monotone_steps += 1;
        }
        min_descent_margin =
            min_descent_margin.min(-increase - 0.5 * marginal_shift_sq(&enc, &next, j));

        trace.push(next_loss);
        enc = next;
        loss = next_loss;
        if increase.abs() <= cfg.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(DcaResult {
        stationarity_gap: stationarity_gap_clamped(&enc, j, cfg.beta, cfg.log_clamp),
        i_zx_bits: enc.i_zx(j) * NATS_TO_BITS,
        i_zy_bits: enc.i_zy(j) * NATS_TO_BITS,
        encoder: enc,
        loss_trace: trace,
        converged,
        iterations,
        non_monotone_steps,
        max_loss_increase: if iterations == 0 {
            0.0
        } else {
            max_loss_increase
        },
        min_descent_margin: if iterations == 0 {
            0.0
        } else {
            min_descent_margin
        },
        b_rank: ws.b_rank,
    })
}

fn bitwise_eq(a: &Encoder, b: &Encoder) -> bool {
    let (a, b) = (a.matrix(), b.matrix());
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

#[cfg(test)]
mod tests;
