//! Numerical certificates for the identities the solver relies on.
//!
//! Every check is deterministic given its seed and yields a [`CheckReport`]
//! that serialises to one JSON line.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dca::{compute_c, f_value, g_value, grad_f, grad_g, DcaResult};
use crate::error::Result;
use crate::linops::log_sum_exp;
use crate::prob::{entropy, kl_divergence, CondDist, DiscreteDist, Encoder, JointXY};

pub const FD_STEP: f64 = 1e-6;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const EQ_RESIDUAL_TOL: f64 = 1e-8;
pub const LEMMA1_TOL: f64 = 1e-9;
pub const DESCENT_TOL: f64 = 1e-6;
pub const DESCENT_MARGIN_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        samples: usize,
        max_violation: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            samples,
            max_violation,
            tolerance,
            passed: max_violation <= tolerance,
        }
    }

    /// Same measurement judged against another tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.passed = self.max_violation <= tolerance;
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

/// Encoder with entries drawn from `[0.05, 1]` before normalisation, so that
/// finite-difference stencils stay inside the positive orthant.
pub fn random_interior_encoder<R: Rng + ?Sized>(card_z: usize, n_x: usize, rng: &mut R) -> Encoder {
    Encoder::random_in(card_z, n_x, 0.05, 1.0, rng)
}

/// Joint with `p_X` and every column of `P(Y|X)` drawn from `[0.05, 1]`
/// and normalised.
pub fn random_joint<R: Rng + ?Sized>(n_x: usize, n_y: usize, rng: &mut R) -> JointXY {
    let px = Encoder::random_in(n_x, 1, 0.05, 1.0, rng);
    let channel = Encoder::random_in(n_y, n_x, 0.05, 1.0, rng);
    JointXY::new(
        DiscreteDist::new(px.matrix().column(0).iter().copied().collect()).expect("normalised"),
        channel.z_given_x().clone(),
    )
    .expect("strictly positive joint")
}

fn default_card_z(j: &JointXY) -> usize {
    j.n_x().max(j.n_y()) + 1
}

fn raw_encoder(m: DMatrix<f64>) -> Encoder {
    Encoder::new(CondDist::from_matrix_unchecked(m))
}

/// Central differences of `func` on the raw entries (no renormalisation).
fn fd_gradient(enc: &Encoder, func: impl Fn(&Encoder) -> f64) -> DMatrix<f64> {
    let m = enc.matrix();
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        let (mut up, mut dn) = (m.clone(), m.clone());
        up[(r, c)] += FD_STEP;
        dn[(r, c)] -= FD_STEP;
        (func(&raw_encoder(up)) - func(&raw_encoder(dn))) / (2.0 * FD_STEP)
    })
}

fn normwise_rel_err(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (analytic - reference).norm() / reference.norm().max(f64::MIN_POSITIVE)
}

/// `grad_g` against central differences of `g` at `n` interior encoders.
pub fn check_grad_g_fd(j: &JointXY, beta: f64, n: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let card_z = default_card_z(j);
    let worst = (0..n)
        .map(|_| {
            let enc = random_interior_encoder(card_z, j.n_x(), &mut rng);
            let fd = fd_gradient(&enc, |e| g_value(e, j, beta));
            normwise_rel_err(&grad_g(&enc, j, beta).to_matrix(), &fd)
        })
        .fold(0.0, f64::max);
    CheckReport::new(format!("grad_g_fd(beta={beta})"), n, worst, GRADIENT_TOL)
}

/// `grad_f` against central differences of `f = -H(Z|Y)`.
pub fn check_grad_f_fd(j: &JointXY, n: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let card_z = default_card_z(j);
    let worst = (0..n)
        .map(|_| {
            let enc = random_interior_encoder(card_z, j.n_x(), &mut rng);
            let fd = fd_gradient(&enc, |e| f_value(e, j));
            normwise_rel_err(&grad_f(&enc, j).to_matrix(), &fd)
        })
        .fold(0.0, f64::max);
    CheckReport::new("grad_f_fd", n, worst, GRADIENT_TOL)
}

/// `|E_{z,x}[sum_y P(y|x) log P(z|y)] + H(Z|Y)|`, evaluated entrywise.
pub fn conditional_entropy_identity_gap(enc: &Encoder, j: &JointXY) -> f64 {
    let pzy = enc.z_given_y(j);
    let mut lhs = 0.0;
    for x in 0..j.n_x() {
        for z in 0..enc.card_z() {
            let pzx = j.p_x().probs()[x] * enc.matrix()[(z, x)];
            let inner: f64 = (0..j.n_y())
                .map(|y| j.y_given_x().get(y, x) * pzy.get(z, y).ln())
                .sum();
            lhs += pzx * inner;
        }
    }
    (lhs - f_value(enc, j)).abs()
}

/// `|E_z[log P^k(Z)] + H(Z) + D_KL(P_Z || P^k_Z)|`.
pub fn cross_entropy_identity_gap(enc: &Encoder, enc_k: &Encoder, j: &JointXY) -> f64 {
    let pz = enc.p_z(j.p_x());
    let pzk = enc_k.p_z(j.p_x());
    let lhs: f64 = pz
        .probs()
        .iter()
        .zip(pzk.probs())
        .map(|(a, b)| a * b.ln())
        .sum();
    (lhs + entropy(&pz) + kl_divergence(&pz, &pzk)).abs()
}

/// Both expectation identities over `n` random draws. Even draws use `j`,
/// odd draws a random joint with alphabets of size 2 to 5.
pub fn check_expectation_identities(j: &JointXY, n: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let joint = if i % 2 == 0 {
            j.clone()
        } else {
            let (nx, ny) = (rng.random_range(2..=5), rng.random_range(2..=5));
            random_joint(nx, ny, &mut rng)
        };
        let card_z = rng.random_range(2..=5);
        let enc = Encoder::random(card_z, joint.n_x(), &mut rng);
        let enc_k = Encoder::random(card_z, joint.n_x(), &mut rng);
        worst = worst
            .max(conditional_entropy_identity_gap(&enc, &joint))
            .max(cross_entropy_identity_gap(&enc, &enc_k, &joint));
    }
    CheckReport::new("expectation_identities", n, worst, IDENTITY_TOL)
}

/// Exact solution of the linear update on a square channel with invertible
/// `P(Y|X)`, together with the simplex multiplier `lambda_x`.
///
/// Returns `None` when the channel is not square or numerically singular, or
/// when the implied encoder has negative entries.
pub fn exact_update(enc_k: &Encoder, j: &JointXY, beta: f64) -> Option<(Encoder, Vec<f64>)> {
    let n = j.n_x();
    if j.n_y() != n {
        return None;
    }
    let card_z = enc_k.card_z();
    let c = compute_c(enc_k, j, beta).to_matrix();
    // (x, y) entry P(y|x); row z of c is B applied to row z of l.
    let b = j.y_given_x().matrix().transpose();
    let b_lu = b.clone().lu();
    let mut l = DMatrix::zeros(card_z, n);
    for z in 0..card_z {
        let rhs = c.row(z).transpose();
        let sol = b_lu.solve(&rhs)?;
        l.set_row(z, &sol.transpose());
    }
    let mu: Vec<f64> = (0..n)
        .map(|y| log_sum_exp(l.column(y).as_slice()))
        .collect();
    let lambda: Vec<f64> = (0..n)
        .map(|x| -(0..n).map(|y| b[(x, y)] * mu[y]).sum::<f64>())
        .collect();
    let q = DMatrix::from_fn(card_z, n, |z, y| (l[(z, y)] - mu[y]).exp());
    // q = P A with A (x, y) = P(x|y), so P = q A^{-1}.
    let a = j.x_given_y().matrix().clone();
    let p = a.transpose().lu().solve(&q.transpose())?.transpose();
    if p.iter().any(|&v| v < 0.0) {
        return None;
    }
    Some((Encoder::new(CondDist::from_matrix_unchecked(p)), lambda))
}

/// `I(Z;Y) + KL(P_Z || P^k_Z) - beta (E log P^k(X|Z) + H(X)) - E_x[lambda_x]`
/// at the exact update from `enc_k`; zero up to rounding.
pub fn update_identity_residual(enc_k: &Encoder, j: &JointXY, beta: f64) -> Option<f64> {
    let (enc, lambda) = exact_update(enc_k, j, beta)?;
    let pz = enc.p_z(j.p_x());
    let pzk = enc_k.p_z(j.p_x());
    let px = j.p_x().probs();
    let mut e_log_post = 0.0;
    for x in 0..j.n_x() {
        for z in 0..enc.card_z() {
            let joint = px[x] * enc.matrix()[(z, x)];
            if joint > 0.0 {
                let post_k = enc_k.matrix()[(z, x)] * px[x] / pzk.probs()[z];
                e_log_post += joint * post_k.ln();
            }
        }
    }
    let e_lambda: f64 = px.iter().zip(&lambda).map(|(p, l)| p * l).sum();
    Some(enc.i_zy(j) + kl_divergence(&pz, &pzk) - beta * (e_log_post + entropy(j.p_x())) - e_lambda)
}

fn random_invertible_square<R: Rng + ?Sized>(n: usize, rng: &mut R) -> JointXY {
    loop {
        let j = random_joint(n, n, rng);
        if j.y_given_x().matrix().determinant().abs() > 0.05 {
            return j;
        }
    }
}

/// Residual of the update identity over `n` exact solutions on random
/// invertible 2x2 channels.
pub fn check_update_identity(n: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n {
        let j = random_invertible_square(2, &mut rng);
        let card_z = rng.random_range(2..=3);
        let beta = 10f64.powf(rng.random_range(-1.0..=1.0));
        let enc_k = random_interior_encoder(card_z, 2, &mut rng);
        if let Some(r) = update_identity_residual(&enc_k, &j, beta) {
            worst = worst.max(r.abs());
            done += 1;
        }
    }
    CheckReport::new("update_identity_residual", n, worst, EQ_RESIDUAL_TOL)
}

/// Expectation identities on `j` plus the update-identity residual.
pub fn check_appendix_c(j: &JointXY, n: usize, seed: u64) -> CheckReport {
    let a = check_expectation_identities(j, n, seed);
    let b = check_update_identity(n, seed ^ 0x5EED);
    CheckReport::new(
        "appendix_c",
        n,
        a.max_violation.max(b.max_violation),
        EQ_RESIDUAL_TOL,
    )
}

/// The log-domain form `lse_x(log P(x|y) + log P(z|x))` reproduces
/// `log P(z|y)` from the matrix product.
pub fn check_log_domain_consistency(j: &JointXY, n: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let card_z = default_card_z(j);
    let lxy = j.x_given_y().matrix().map(f64::ln);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let enc = random_interior_encoder(card_z, j.n_x(), &mut rng);
        let pzy = enc.z_given_y(j);
        for z in 0..card_z {
            for y in 0..j.n_y() {
                let terms: Vec<f64> = (0..j.n_x())
                    .map(|x| lxy[(x, y)] + enc.matrix()[(z, x)].ln())
                    .collect();
                worst = worst.max((log_sum_exp(&terms) - pzy.get(z, y).ln()).abs());
            }
        }
    }
    CheckReport::new("log_domain_consistency", n, worst, IDENTITY_TOL)
}

/// `g(p) - g(q) - <grad g(q), p - q> - ½‖p_Z - q_Z‖²`.
pub fn lemma1_slack(p: &Encoder, q: &Encoder, j: &JointXY, beta: f64) -> f64 {
    let grad = grad_g(q, j, beta).to_matrix();
    let inner = grad.dot(&(p.matrix() - q.matrix()));
    let (pz, qz) = (p.p_z(j.p_x()), q.p_z(j.p_x()));
    let marginal_sq: f64 = pz
        .probs()
        .iter()
        .zip(qz.probs())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    g_value(p, j, beta) - g_value(q, j, beta) - inner - 0.5 * marginal_sq
}

/// Minimum restricted-convexity slack of `g` over `n_pairs` random encoder
/// pairs, reported as `max_violation = -min slack`.
pub fn check_lemma1(j: &JointXY, beta: f64, n_pairs: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let card_z = default_card_z(j);
    let min_slack = (0..n_pairs)
        .map(|_| {
            let p = Encoder::random(card_z, j.n_x(), &mut rng);
            let q = Encoder::random(card_z, j.n_x(), &mut rng);
            lemma1_slack(&p, &q, j, beta)
        })
        .fold(f64::INFINITY, f64::min);
    CheckReport::new(
        format!("lemma1(beta={beta})"),
        n_pairs,
        -min_slack,
        LEMMA1_TOL,
    )
}

/// Largest single-step increase of a loss trace.
pub fn audit_trace(trace: &[f64]) -> CheckReport {
    assert!(!trace.is_empty(), "trace holds at least the initial loss");
    let worst = trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    CheckReport::new("descent", trace.len().saturating_sub(1), worst, DESCENT_TOL)
}

pub fn audit_descent(result: &DcaResult) -> CheckReport {
    audit_trace(&result.loss_trace)
}

/// Sufficient-decrease bound `L_k - L_{k+1} >= ½‖p_Z^k - p_Z^{k+1}‖²`.
pub fn audit_descent_margin(result: &DcaResult) -> CheckReport {
    CheckReport::new(
        "descent_margin",
        result.iterations,
        -result.min_descent_margin,
        DESCENT_MARGIN_TOL,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub gradient_samples: usize,
    pub identity_samples: usize,
    pub lemma1_pairs: usize,
    pub lemma1_betas: Vec<f64>,
    pub gradient_beta: f64,
    /// Replaces every check's tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gradient_samples: 100,
            identity_samples: 200,
            lemma1_pairs: 1000,
            lemma1_betas: vec![0.1, 1.0, 10.0],
            gradient_beta: 1.0,
            tolerance: None,
        }
    }
}

/// Every derivation check on `j`, plus descent audits of `runs`.
pub fn run_all(j: &JointXY, cfg: &VerifyConfig, runs: &[DcaResult]) -> Result<Vec<CheckReport>> {
    let s = cfg.seed;
    let mut reports = vec![
        check_grad_g_fd(j, cfg.gradient_beta, cfg.gradient_samples, s),
        check_grad_g_fd(j, 0.0, cfg.gradient_samples, s.wrapping_add(1)),
        check_grad_f_fd(j, cfg.gradient_samples, s.wrapping_add(2)),
        check_log_domain_consistency(j, cfg.gradient_samples, s.wrapping_add(3)),
        check_expectation_identities(j, cfg.identity_samples, s.wrapping_add(4)),
        check_update_identity(cfg.identity_samples, s.wrapping_add(5)),
    ];
    for (i, &beta) in cfg.lemma1_betas.iter().enumerate() {
        reports.push(check_lemma1(
            j,
            beta,
            cfg.lemma1_pairs,
            s.wrapping_add(6 + i as u64),
        ));
    }
    for r in runs {
        reports.push(audit_descent(r));
        reports.push(audit_descent_margin(r));
    }
    if let Some(t) = cfg.tolerance {
        reports = reports.into_iter().map(|r| r.with_tolerance(t)).collect();
    }
    Ok(reports)
}
