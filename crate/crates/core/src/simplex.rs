//! Euclidean projection onto the probability simplex (sort-based).

use nalgebra::DMatrix;

use crate::prob::CondDist;

/// Projects `v` in place onto `{p : p >= 0, sum p = 1}`.
///
/// Sorts a copy in decreasing order, finds the largest `k` with
/// `u_k > (sum_{i<=k} u_i - 1) / k`, and shifts by that threshold.
pub fn project_to_simplex(v: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Projects every column of `m` onto the simplex.
pub fn project_columns_to_simplex(m: &DMatrix<f64>) -> CondDist {
    let mut out = m.clone();
    project_columns_in_place(&mut out);
    CondDist::from_matrix_unchecked(out)
}

pub(crate) fn project_columns_in_place(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        project_to_simplex(col.as_mut_slice());
    }
}
