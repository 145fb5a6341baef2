//! Discrete distributions and the information measures built on them.
//!
//! All quantities are in nats. Conditional distributions are stored as
//! column-stochastic matrices: rows index the output symbol, columns the
//! conditioning symbol, so `P(y_i | x_j)` sits at `(i, j)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose mass (or column mass) is off by at most this much are
/// renormalised; anything worse is rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Stochasticity tolerance guaranteed after construction.
pub const STOCHASTIC_TOL: f64 = 1e-12;

fn normalize_mass(values: &mut [f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what} is empty")));
    }
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "{what} has a non-finite entry"
            )));
        }
        if *v < 0.0 {
            if *v < -RENORMALIZE_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "{what} has a negative entry {v:e}"
                )));
            }
            *v = 0.0;
        }
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total} (expected 1)"
        )));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// `-sum p log p` with `0 log 0 = 0`.
pub(crate) fn entropy_of<'a>(probs: impl IntoIterator<Item = &'a f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Probability mass function over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        normalize_mass(&mut probs, "probability vector")?;
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "alphabet must be nonempty");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        assert!(at < n);
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }
}

/// Column-stochastic matrix: entry `(o, c)` is `P(o | c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondDist {
    matrix: DMatrix<f64>,
}

impl CondDist {
    /// Validates and, when within [`RENORMALIZE_TOL`], renormalises every
    /// column.
    pub fn new(mut matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidDistribution(
                "conditional has an empty dimension".into(),
            ));
        }
        for (c, mut col) in matrix.column_iter_mut().enumerate() {
            normalize_mass(col.as_mut_slice(), &format!("column {c}"))?;
        }
        Ok(Self { matrix })
    }

    /// Builds from row-major nested vectors (`rows[o][c] = P(o|c)`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_out = rows.len();
        let n_cond = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cond) {
            return Err(Error::DimensionMismatch("ragged conditional matrix".into()));
        }
        Self::new(DMatrix::from_fn(n_out, n_cond, |o, c| rows[o][c]))
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cond(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn get(&self, out: usize, cond: usize) -> f64 {
        self.matrix[(out, cond)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// Marginal of the output symbol under the given conditioning marginal.
    pub fn output_marginal(&self, cond_on: &DiscreteDist) -> DiscreteDist {
        assert_eq!(cond_on.len(), self.n_cond(), "conditioning marginal length");
        let out = &self.matrix * DVector::from_column_slice(cond_on.probs());
        DiscreteDist::from_vec_unchecked(out.iter().copied().collect())
    }

    /// Largest deviation of a column sum from one.
    pub fn max_column_defect(&self) -> f64 {
        self.matrix
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Known joint `P(X, Y)`, stored as `p_X` and `P(Y|X)`; the derived `p_Y`
/// and `P(X|Y)` are cached.
#[derive(Debug, Clone)]
pub struct JointXY {
    p_x: DiscreteDist,
    y_given_x: CondDist,
    p_y: DiscreteDist,
    x_given_y: CondDist,
}

/// On-disk form of a joint distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub p_x: Vec<f64>,
    /// Row `i`, column `j` is `P(y_i | x_j)`.
    pub p_y_given_x: Vec<Vec<f64>>,
}

impl JointXY {
    pub fn new(p_x: DiscreteDist, y_given_x: CondDist) -> Result<Self> {
        if p_x.len() != y_given_x.n_cond() {
            return Err(Error::DimensionMismatch(format!(
                "p_x has {} entries but P(Y|X) has {} columns",
                p_x.len(),
                y_given_x.n_cond()
            )));
        }
        let p_y = y_given_x.output_marginal(&p_x);
        let x_given_y = bayes_invert(&p_x, &y_given_x)?;
        Ok(Self {
            p_x,
            y_given_x,
            p_y,
            x_given_y,
        })
    }

    pub fn from_rows(p_x: Vec<f64>, p_y_given_x: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(DiscreteDist::new(p_x)?, CondDist::from_rows(&p_y_given_x)?)
    }

    pub fn from_spec(spec: JointSpec) -> Result<Self> {
        Self::from_rows(spec.p_x, spec.p_y_given_x)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_spec(&self) -> JointSpec {
        JointSpec {
            p_x: self.p_x.probs().to_vec(),
            p_y_given_x: self.y_given_x.to_rows(),
        }
    }

    pub fn p_x(&self) -> &DiscreteDist {
        &self.p_x
    }

    pub fn p_y(&self) -> &DiscreteDist {
        &self.p_y
    }

    pub fn y_given_x(&self) -> &CondDist {
        &self.y_given_x
    }

    pub fn x_given_y(&self) -> &CondDist {
        &self.x_given_y
    }

    pub fn n_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn n_y(&self) -> usize {
        self.p_y.len()
    }

    /// `I(X;Y)` in nats.
    pub fn mutual_information(&self) -> f64 {
        mutual_information(&self.y_given_x, &self.p_x)
    }
}

/// The release mechanism `P(Z|X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    z_given_x: CondDist,
}

impl Encoder {
    pub fn new(z_given_x: CondDist) -> Self {
        Self { z_given_x }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        CondDist::from_rows(rows).map(Self::new)
    }

    /// `Z = X`.
    pub fn identity(n_x: usize) -> Self {
        Self::new(CondDist::identity(n_x))
    }

    pub fn uniform(card_z: usize, n_x: usize) -> Self {
        Self::new(CondDist::from_matrix_unchecked(DMatrix::from_element(
            card_z,
            n_x,
            1.0 / card_z as f64,
        )))
    }

    /// Every column equal to `column`: `Z` independent of `X`.
    pub fn constant(column: &DiscreteDist, n_x: usize) -> Self {
        Self::new(CondDist::from_matrix_unchecked(DMatrix::from_fn(
            column.len(),
            n_x,
            |z, _| column.probs()[z],
        )))
    }

    /// Entries uniform on `[0, 1]`, columns normalised.
    pub fn random<R: Rng + ?Sized>(card_z: usize, n_x: usize, rng: &mut R) -> Self {
        Self::random_in(card_z, n_x, 0.0, 1.0, rng)
    }

    /// Entries uniform on `[lo, hi]`, columns normalised.
    pub fn random_in<R: Rng + ?Sized>(
        card_z: usize,
        n_x: usize,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Self {
        let mut m = DMatrix::from_fn(card_z, n_x, |_, _| lo + (hi - lo) * rng.random::<f64>());
        for mut col in m.column_iter_mut() {
            let s = col.sum();
            if s > 0.0 {
                col /= s;
            } else {
                col.fill(1.0 / card_z as f64);
            }
        }
        Self::new(CondDist::from_matrix_unchecked(m))
    }

    pub fn z_given_x(&self) -> &CondDist {
        &self.z_given_x
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.z_given_x.matrix()
    }

    pub fn card_z(&self) -> usize {
        self.z_given_x.n_out()
    }

    pub fn n_x(&self) -> usize {
        self.z_given_x.n_cond()
    }

    pub fn p_z(&self, p_x: &DiscreteDist) -> DiscreteDist {
        self.z_given_x.output_marginal(p_x)
    }

    /// `P(Z|Y)` through the chain `Y -> X -> Z`.
    pub fn z_given_y(&self, j: &JointXY) -> CondDist {
        markov_compose(self, j.x_given_y()).expect("encoder built for this joint")
    }

    pub fn i_zx(&self, j: &JointXY) -> f64 {
        mutual_information(&self.z_given_x, j.p_x())
    }

    pub fn i_zy(&self, j: &JointXY) -> f64 {
        mutual_information(&self.z_given_y(j), j.p_y())
    }
}

/// Shannon entropy in nats.
pub fn entropy(d: &DiscreteDist) -> f64 {
    entropy_of(d.probs())
}

/// `I(O;C)` for the channel `P(O|C)` driven by `p_C`:
/// `H(O) - sum_c p(c) H(O | C = c)`.
pub fn mutual_information(marginal_cond: &CondDist, cond_on: &DiscreteDist) -> f64 {
    assert_eq!(
        cond_on.len(),
        marginal_cond.n_cond(),
        "conditioning marginal length"
    );
    let h_out = entropy(&marginal_cond.output_marginal(cond_on));
    let h_cond: f64 = marginal_cond
        .matrix()
        .column_iter()
        .zip(cond_on.probs())
        .map(|(col, &pc)| pc * entropy_of(col.iter()))
        .sum();
    h_out - h_cond
}

/// `D_KL(p || q)` in nats; infinite when `q` misses mass that `p` has.
pub fn kl_divergence(p: &DiscreteDist, q: &DiscreteDist) -> f64 {
    assert_eq!(p.len(), q.len());
    p.probs()
        .iter()
        .zip(q.probs())
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| {
            if b > 0.0 {
                a * (a / b).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// `P(Z|Y) = P(Z|X) P(X|Y)`.
pub fn markov_compose(enc: &Encoder, x_given_y: &CondDist) -> Result<CondDist> {
    if enc.n_x() != x_given_y.n_out() {
        return Err(Error::DimensionMismatch(format!(
            "encoder has {} columns but P(X|Y) has {} rows",
            enc.n_x(),
            x_given_y.n_out()
        )));
    }
    Ok(CondDist::from_matrix_unchecked(
        enc.matrix() * x_given_y.matrix(),
    ))
}

/// Bayes' rule: `P(x|y) = P(y|x) p(x) / p(y)`.
pub fn bayes_invert(p_x: &DiscreteDist, y_given_x: &CondDist) -> Result<CondDist> {
    if p_x.len() != y_given_x.n_cond() {
        return Err(Error::DimensionMismatch(
            "p_x length vs P(Y|X) columns".into(),
        ));
    }
    let p_y = y_given_x.output_marginal(p_x);
    if let Some((index, &mass)) = p_y.probs().iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(Error::DegenerateMarginal { index, mass });
    }
    let (n_x, n_y) = (p_x.len(), p_y.len());
    let m = DMatrix::from_fn(n_x, n_y, |x, y| {
        y_given_x.get(y, x) * p_x.probs()[x] / p_y.probs()[y]
    });
    Ok(CondDist::from_matrix_unchecked(m))
}

/// `I(Z;Y) - beta I(Z;X)` in nats.
pub fn pf_lagrangian(enc: &Encoder, j: &JointXY, beta: f64) -> f64 {
    enc.i_zy(j) - beta * enc.i_zx(j)
}
