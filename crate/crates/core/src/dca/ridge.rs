//! Ridge-penalised inner solve: projected gradient with a fixed `1/L` step.

use nalgebra::DMatrix;

use super::{DcaConfig, Workspace};
use crate::linops::make_a_operator;
use crate::prob::{CondDist, Encoder, JointXY};
use crate::simplex::project_columns_in_place;

/// `½‖A v - t‖² + α‖v‖²` where `v` is `|Z| × |X|` and `t` is `|Z| × |Y|`.
pub fn ridge_objective(enc: &Encoder, target: &CondDist, j: &JointXY, alpha: f64) -> f64 {
    let a_block = make_a_operator(j, enc.card_z()).block().clone();
    objective(enc.matrix(), &a_block, target.matrix(), alpha)
}

fn objective(v: &DMatrix<f64>, a_block: &DMatrix<f64>, t: &DMatrix<f64>, alpha: f64) -> f64 {
    let r = v * a_block.transpose() - t;
    0.5 * r.norm_squared() + alpha * v.norm_squared()
}

/// Minimises the ridge objective over column-stochastic encoders starting
/// from `warm`. The result never has a larger objective than `warm`.
pub fn inner_ridge_solve(
    target: &CondDist,
    j: &JointXY,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> Encoder {
    let a = make_a_operator(j, warm.card_z());
    let ws_a = a.block().clone();
    run(&ws_a, a.operator_norm(), target, alpha, cfg, warm)
}

pub(super) fn solve(
    ws: &Workspace,
    target: &CondDist,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> Encoder {
    run(&ws.a_block, ws.a_sigma_max, target, alpha, cfg, warm)
}

fn run(
    a_block: &DMatrix<f64>,
    sigma_max: f64,
    target: &CondDist,
    alpha: f64,
    cfg: &DcaConfig,
    warm: &Encoder,
) -> Encoder {
    let t = target.matrix();
    let step = 1.0 / (sigma_max * sigma_max + 2.0 * alpha);
    let mut v = warm.matrix().clone();
    let mut obj = objective(&v, a_block, t, alpha);
    let start_obj = obj;

    for _ in 0..cfg.inner_max_iter {
        let r = &v * a_block.transpose() - t;
        let grad = r * a_block + &v * (2.0 * alpha);
        let mut next = &v - grad * step;
        project_columns_in_place(&mut next);
        let next_obj = objective(&next, a_block, t, alpha);
        if next_obj > obj {
            // Only rounding can get here with a 1/L step.
            break;
        }
        let change = obj - next_obj;
        v = next;
        let prev = obj;
        obj = next_obj;
        if change <= cfg.inner_tol * prev.abs() {
            break;
        }
    }

    if obj > start_obj {
        return warm.clone();
    }
    Encoder::new(CondDist::from_matrix_unchecked(v))
}
