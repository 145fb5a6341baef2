//! Deterministic clustering baselines: greedy pairwise merging and full
//! enumeration of set partitions of `X`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dca::stationarity_gap;
use crate::error::{Error, Result};
use crate::prob::{pf_lagrangian, CondDist, Encoder, JointXY};
use crate::sweep::{Solver, TradeoffPoint};
use crate::NATS_TO_BITS;

/// Largest `|X|` accepted by [`exhaustive_partitions`]; Bell(12) = 4213597.
pub const MAX_EXHAUSTIVE_X: usize = 12;

/// Assignment of each `x` to a cluster id in `0..n_clusters`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HardClustering {
    assignment: Vec<usize>,
    n_clusters: usize,
}

impl HardClustering {
    /// Ids must cover `0..k` for some `k` with no gaps.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_clusters];
        for &a in &assignment {
            seen[a] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig(format!(
                "cluster ids {assignment:?} are not contiguous"
            )));
        }
        Ok(Self {
            assignment,
            n_clusters,
        })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            n_clusters: n,
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            n_clusters: usize::from(n > 0),
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Joins clusters `a < b`; ids above `b` shift down by one.
    pub fn merge(&self, a: usize, b: usize) -> Self {
        assert!(a < b && b < self.n_clusters);
        let assignment = self
            .assignment
            .iter()
            .map(|&c| match c {
                c if c == b => a,
                c if c > b => c - 1,
                c => c,
            })
            .collect();
        Self {
            assignment,
            n_clusters: self.n_clusters - 1,
        }
    }
}

pub fn clustering_to_encoder(c: &HardClustering) -> Encoder {
    let m = DMatrix::from_fn(c.n_clusters, c.assignment.len(), |z, x| {
        if c.assignment[x] == z {
            1.0
        } else {
            0.0
        }
    });
    Encoder::new(CondDist::from_matrix_unchecked(m))
}

fn point(
    j: &JointXY,
    c: &HardClustering,
    solver: Solver,
    beta: f64,
    iterations: usize,
) -> TradeoffPoint {
    let enc = clustering_to_encoder(c);
    TradeoffPoint {
        solver,
        beta,
        alpha: 0.0,
        card_z: c.n_clusters,
        restart: 0,
        seed: 0,
        i_zx_bits: enc.i_zx(j) * NATS_TO_BITS,
        i_zy_bits: enc.i_zy(j) * NATS_TO_BITS,
        loss_nats: pf_lagrangian(&enc, j, beta),
        converged: true,
        iterations,
        stationarity_gap: stationarity_gap(&enc, j, beta),
    }
}

/// Greedy agglomeration from singletons, each step taking the merge with
/// the lowest Lagrangian (ties go to the lexicographically first pair).
/// Returns the clustering at every cluster count, `|X|` down to 1.
pub fn greedy_merge_path(j: &JointXY, beta: f64) -> Vec<HardClustering> {
    let mut path = vec![HardClustering::singletons(j.n_x())];
    loop {
        let current = path.last().expect("path starts non-empty");
        let k = current.n_clusters;
        if k <= 1 {
            return path;
        }
        let mut best: Option<(f64, HardClustering)> = None;
        for a in 0..k {
            for b in a + 1..k {
                let merged = current.merge(a, b);
                let loss = pf_lagrangian(&clustering_to_encoder(&merged), j, beta);
                if best.as_ref().is_none_or(|(l, _)| loss < *l) {
                    best = Some((loss, merged));
                }
            }
        }
        path.push(best.expect("at least one pair").1);
    }
}

/// Metrics along [`greedy_merge_path`]; `iterations` counts merges.
pub fn greedy_merge_run(j: &JointXY, beta: f64) -> Vec<TradeoffPoint> {
    greedy_merge_path(j, beta)
        .iter()
        .enumerate()
        .map(|(step, c)| point(j, c, Solver::Greedy, beta, step))
        .collect()
}

/// All set partitions of `0..n` as restricted growth strings, in
/// lexicographic order.
pub fn set_partitions(n: usize) -> Vec<HardClustering> {
    if n == 0 {
        return vec![HardClustering {
            assignment: Vec::new(),
            n_clusters: 0,
        }];
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    // max_prefix[i] = max(a[0..i])
    let mut max_prefix = vec![0usize; n];
    loop {
        out.push(HardClustering {
            n_clusters: max_prefix[n - 1].max(a[n - 1]) + 1,
            assignment: a.clone(),
        });
        // Rightmost position that can be incremented.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            if a[i] <= max_prefix[i] {
                break;
            }
            i -= 1;
        }
        a[i] += 1;
        for k in i + 1..n {
            a[k] = 0;
            max_prefix[k] = max_prefix[k - 1].max(a[k - 1]);
        }
    }
}

/// Metrics for every set partition of `X`, evaluated at `beta = 0` so that
/// `loss_nats` is `I(Z;Y)`.
pub fn exhaustive_partitions(j: &JointXY) -> Result<Vec<TradeoffPoint>> {
    if j.n_x() > MAX_EXHAUSTIVE_X {
        return Err(Error::AlphabetTooLarge(j.n_x()));
    }
    Ok(set_partitions(j.n_x())
        .par_iter()
        .map(|c| point(j, c, Solver::Exhaustive, 0.0, 0))
        .collect())
}

/// Smallest Lagrangian over all partitions with exactly `n_clusters` parts.
pub fn exhaustive_min_lagrangian(j: &JointXY, beta: f64, n_clusters: usize) -> Result<Option<f64>> {
    if j.n_x() > MAX_EXHAUSTIVE_X {
        return Err(Error::AlphabetTooLarge(j.n_x()));
    }
    Ok(set_partitions(j.n_x())
        .iter()
        .filter(|c| c.n_clusters == n_clusters)
        .map(|c| pf_lagrangian(&clustering_to_encoder(c), j, beta))
        .min_by(f64::total_cmp))
}
