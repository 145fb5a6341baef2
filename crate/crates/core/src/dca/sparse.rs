//! Log-domain inner solve with an L1 penalty on box-constrained
//! log-likelihoods.
//!
//! Variables are `L(z, x) = log P(z|x)` restricted to `[-box_max, -box_min]`,
//! where `‖L‖₁ = -sum L`. The fit term compares `lse_x(log P(x|y) + L(z, x))`
//! (the log of the induced `P(z|y)` before normalisation) with `log t(z, y)`.

use nalgebra::DMatrix;

use super::{DcaConfig, Workspace};
use crate::linops::{softmax_over_z, ZMajorVector};
use crate::prob::{CondDist, Encoder, JointXY};

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Objective and gradient at `l` (`|Z| × |X|`).
///
/// `log_x_given_y` is `(x, y)` indexed and `log_target` is `(z, y)` indexed.
pub fn sparse_objective_and_gradient(
    l: &DMatrix<f64>,
    log_x_given_y: &DMatrix<f64>,
    log_target: &DMatrix<f64>,
    alpha: f64,
) -> (f64, DMatrix<f64>) {
    let mut grad = DMatrix::zeros(l.nrows(), l.ncols());
    let mut scratch = vec![0.0; l.ncols()];
    let obj = eval_into(l, log_x_given_y, log_target, alpha, &mut grad, &mut scratch);
    (obj, grad)
}

/// Writes the gradient into `grad` and returns the objective; `s` holds
/// `|X|` scratch values.
fn eval_into(
    l: &DMatrix<f64>,
    log_x_given_y: &DMatrix<f64>,
    log_target: &DMatrix<f64>,
    alpha: f64,
    grad: &mut DMatrix<f64>,
    s: &mut [f64],
) -> f64 {
    let (card_z, n_x) = l.shape();
    let n_y = log_x_given_y.ncols();
    grad.fill(-alpha);
    let mut obj = -alpha * l.sum();
    for z in 0..card_z {
        for y in 0..n_y {
            let mut m = f64::NEG_INFINITY;
            for x in 0..n_x {
                s[x] = log_x_given_y[(x, y)] + l[(z, x)];
                m = m.max(s[x]);
            }
            let mut total = 0.0;
            for v in s.iter_mut() {
                *v = (*v - m).exp();
                total += *v;
            }
            let r = m + total.ln() - log_target[(z, y)];
            obj += 0.5 * r * r;
            for x in 0..n_x {
                grad[(z, x)] += r * s[x] / total;
            }
        }
    }
    obj
}

/// Minimises the log-domain objective from `warm` and maps the result back
/// to an encoder with a softmax over `z`.
pub fn inner_sparse_solve(
    target: &CondDist,
    j: &JointXY,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> Encoder {
    let lxy = j.x_given_y().matrix().map(|p| p.max(cfg.log_clamp).ln());
    run(&lxy, target, alpha, cfg, warm)
}

/// The box-constrained `L` (`|Z| × |X|`) before the softmax, and its
/// objective.
pub fn inner_sparse_solve_log(
    target: &CondDist,
    j: &JointXY,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> (DMatrix<f64>, f64) {
    let lxy = j.x_given_y().matrix().map(|p| p.max(cfg.log_clamp).ln());
    let log_target = target.matrix().map(|t| t.max(cfg.log_clamp).ln());
    let start = warm.matrix().map(|p| p.max(cfg.log_clamp).ln());
    minimise(&lxy, &log_target, alpha, cfg, start)
}

pub(super) fn solve(
    ws: &Workspace,
    target: &CondDist,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> Encoder {
    run(&ws.log_x_given_y, target, alpha, cfg, warm)
}

/// Box-constrained minimiser in the `L` variables, exposed for testing.
pub(crate) fn minimise(
    lxy: &DMatrix<f64>,
    log_target: &DMatrix<f64>,
    alpha: f64,
    cfg: &DcaConfig,
    start: DMatrix<f64>,
) -> (DMatrix<f64>, f64) {
    let (lo, hi) = (-cfg.box_max, -cfg.box_min);
    let mut l = start.map(|v| v.clamp(lo, hi));
    let mut grad = DMatrix::zeros(l.nrows(), l.ncols());
    let mut scratch = vec![0.0; l.ncols()];
    let mut obj = eval_into(&l, lxy, log_target, alpha, &mut grad, &mut scratch);
    let mut cand = l.clone();
    let mut cand_grad = grad.clone();
    let mut diff = grad.clone();

    for _ in 0..cfg.inner_max_iter {
        let mut step = 1.0;
        let accepted = loop {
            for ((c, d), (&v, &g)) in cand
                .iter_mut()
                .zip(diff.iter_mut())
                .zip(l.iter().zip(grad.iter()))
            {
                *c = (v - g * step).clamp(lo, hi);
                *d = *c - v;
            }
            let decrease = grad.dot(&diff);
            let cand_obj = eval_into(&cand, lxy, log_target, alpha, &mut cand_grad, &mut scratch);
            if cand_obj <= obj + ARMIJO_C * decrease {
                break Some(cand_obj);
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(cand_obj) = accepted else { break };
        let prev = obj;
        std::mem::swap(&mut l, &mut cand);
        std::mem::swap(&mut grad, &mut cand_grad);
        obj = cand_obj;
        if (prev - obj).abs() <= cfg.inner_tol * prev.abs() {
            break;
        }
    }
    (l, obj)
}

fn run(
    lxy: &DMatrix<f64>,
    target: &CondDist,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> Encoder {
    let log_target = target.matrix().map(|t| t.max(cfg.log_clamp).ln());
    let start = warm.matrix().map(|p| p.max(cfg.log_clamp).ln());
    let (l, _) = minimise(lxy, &log_target, alpha, cfg, start);
    let probs = softmax_over_z(&ZMajorVector::from_matrix(&l)).to_matrix();
    Encoder::new(CondDist::from_matrix_unchecked(probs))
}
