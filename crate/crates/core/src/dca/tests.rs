use super::*;
use crate::prob::mutual_information;
use crate::reference_joint;

fn random_interior(card_z: usize, n_x: usize, seed: u64) -> Encoder {
    Encoder::random_in(card_z, n_x, 0.05, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Entropy-based evaluation of `g` that never touches the gradient code.
fn g_oracle(m: &DMatrix<f64>, px: &[f64], beta: f64) -> f64 {
    let (cz, nx) = m.shape();
    let mut h_z = 0.0;
    for z in 0..cz {
        let pz: f64 = (0..nx).map(|x| m[(z, x)] * px[x]).sum();
        if pz > 0.0 {
            h_z -= pz * pz.ln();
        }
    }
    let mut h_z_given_x = 0.0;
    for x in 0..nx {
        for z in 0..cz {
            let p = m[(z, x)];
            if p > 0.0 {
                h_z_given_x -= px[x] * p * p.ln();
            }
        }
    }
    -h_z + beta * (h_z - h_z_given_x)
}

fn f_oracle(m: &DMatrix<f64>, j: &JointXY) -> f64 {
    let (cz, nx) = m.shape();
    let pxy = j.x_given_y().matrix();
    let mut out = 0.0;
    for y in 0..j.n_y() {
        for z in 0..cz {
            let p: f64 = (0..nx).map(|x| m[(z, x)] * pxy[(x, y)]).sum();
            if p > 0.0 {
                out += j.p_y().probs()[y] * p * p.ln();
            }
        }
    }
    out
}

/// Central differences on the raw matrix entries (no renormalisation).
fn fd_gradient(m: &DMatrix<f64>, h: f64, func: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        let (mut up, mut dn) = (m.clone(), m.clone());
        up[(r, c)] += h;
        dn[(r, c)] -= h;
        (func(&up) - func(&dn)) / (2.0 * h)
    })
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn grad_g_uniform_encoder() {
    let j = reference_joint();
    let enc = Encoder::uniform(3, 3);
    for beta in [0.1, 1.0, 7.0] {
        let g = grad_g(&enc, &j, beta);
        let expected = ((1.0f64 / 3.0).ln() + 1.0) / 3.0;
        assert!(g.values().iter().all(|v| (v - expected).abs() < 1e-15));
    }
}

#[test]
fn grad_g_matches_finite_differences() {
    let j = reference_joint();
    for (seed, beta) in [(1, 1.0), (2, 0.0), (3, 4.0)] {
        let enc = random_interior(4, 3, seed);
        let fd = fd_gradient(enc.matrix(), 1e-6, |m| g_oracle(m, j.p_x().probs(), beta));
        let got = grad_g(&enc, &j, beta).to_matrix();
        assert!(
            rel_err(&got, &fd) < 1e-6,
            "beta {beta}: {}",
            rel_err(&got, &fd)
        );
    }
}

#[test]
fn grad_g_without_beta_is_entropy_gradient() {
    let j = reference_joint();
    let enc = random_interior(3, 3, 9);
    let pz = enc.p_z(j.p_x());
    let g = grad_g(&enc, &j, 0.0);
    for z in 0..3 {
        for x in 0..3 {
            let expected = j.p_x().probs()[x] * (pz.probs()[z].ln() + 1.0);
            assert!((g.get(z, x) - expected).abs() < 1e-14);
        }
    }
}

#[test]
fn grad_f_single_output_symbol() {
    let j = reference_joint();
    let g = grad_f(&Encoder::uniform(1, 3), &j);
    for x in 0..3 {
        assert!((g.get(0, x) - j.p_x().probs()[x]).abs() < 1e-15);
    }
}

#[test]
fn grad_f_matches_finite_differences() {
    let j = reference_joint();
    for seed in [4, 5, 6] {
        let enc = random_interior(4, 3, seed);
        let fd = fd_gradient(enc.matrix(), 1e-6, |m| f_oracle(m, &j));
        let got = grad_f(&enc, &j).to_matrix();
        assert!(rel_err(&got, &fd) < 1e-6);
    }
}

#[test]
fn grad_f_identity_channel() {
    // With Y = X, P(z|y) = P(z|x=y) and the gradient is p(x)(log P(z|x) + 1).
    let j = JointXY::from_rows(vec![0.3, 0.7], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let enc = Encoder::from_rows(&[vec![0.2, 0.9], vec![0.8, 0.1]]).unwrap();
    let g = grad_f(&enc, &j);
    let g0 = grad_g(&enc, &j, 0.0);
    for z in 0..2 {
        for x in 0..2 {
            let px = j.p_x().probs()[x];
            let expected = px * (enc.matrix()[(z, x)].ln() + 1.0);
            assert!((g.get(z, x) - expected).abs() < 1e-14);
            // Same "+p(x)" offset as the entropy part of grad g.
            let pz = enc.p_z(j.p_x()).probs()[z];
            assert!(
                (g.get(z, x) - g0.get(z, x) - px * (enc.matrix()[(z, x)].ln() - pz.ln())).abs()
                    < 1e-14
            );
        }
    }
}

#[test]
fn compute_c_examples() {
    let j = reference_joint();
    let c = compute_c(&Encoder::uniform(4, 3), &j, 2.5);
    assert!(c.values().iter().all(|v| (v - 0.25f64.ln()).abs() < 1e-15));

    let enc = random_interior(3, 3, 11);
    let c = compute_c(&enc, &j, 1.0);
    for z in 0..3 {
        for x in 0..3 {
            assert!((c.get(z, x) - enc.matrix()[(z, x)].ln()).abs() < 1e-14);
        }
    }

    let c = compute_c(&enc, &j, 2.0);
    for z in 0..3 {
        let pz: f64 = (0..3)
            .map(|x| enc.matrix()[(z, x)] * j.p_x().probs()[x])
            .sum();
        for x in 0..3 {
            let expected = pz.ln() + 2.0 * (enc.matrix()[(z, x)] / pz).ln();
            assert!((c.get(z, x) - expected).abs() < 1e-13);
        }
    }
}

#[test]
fn target_of_uniform_encoder_is_uniform() {
    let j = reference_joint();
    let t = compute_target(&Encoder::uniform(3, 3), &j, 1.3).unwrap();
    assert!(t.matrix().add_scalar(-1.0 / 3.0).amax() < 1e-12);
}

#[test]
fn target_columns_are_stochastic() {
    let j = reference_joint();
    for seed in 0..20 {
        let enc = Encoder::random(
            2 + (seed as usize % 3),
            3,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        let t = compute_target(&enc, &j, 0.1 + seed as f64 * 0.4).unwrap();
        assert!(t.max_column_defect() < 1e-12);
    }
}

#[test]
fn target_is_fixed_point_on_identity_channel() {
    // With P(Y|X) = I every encoder solves the linear update at beta = 1,
    // so the target is the composed P(Z|Y).
    let j = JointXY::from_rows(vec![0.35, 0.65], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let enc = Encoder::from_rows(&[vec![0.3, 0.75], vec![0.7, 0.25]]).unwrap();
    let t = compute_target(&enc, &j, 1.0).unwrap();
    let composed = enc.z_given_y(&j);
    assert!((t.matrix() - composed.matrix()).amax() < 1e-8);
}

#[test]
fn target_solves_linear_update_on_invertible_channel() {
    let j = JointXY::from_rows(vec![0.5, 0.5], vec![vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
    let enc = Encoder::from_rows(&[vec![0.3, 0.6], vec![0.7, 0.4]]).unwrap();
    let beta = 1.7;
    let t = compute_target(&enc, &j, beta).unwrap();
    // sum_y P(y|x) log t(z|y) - c(z,x) must not depend on z.
    let c = compute_c(&enc, &j, beta);
    for x in 0..2 {
        let shift: Vec<f64> = (0..2)
            .map(|z| {
                (0..2)
                    .map(|y| j.y_given_x().get(y, x) * t.get(z, y).ln())
                    .sum::<f64>()
                    - c.get(z, x)
            })
            .collect();
        assert!((shift[0] - shift[1]).abs() < 1e-10);
    }
}

/// Stationary point of the binary symmetric instance: the encoder is a BSC
/// with crossover `eps`, and the loss derivative along that family is
/// `-(1-2d) ln((1-u)/u) + beta ln((1-eps)/eps)` with `u = eps(1-d) + d(1-eps)`.
fn bsc_stationary_eps(delta: f64, beta: f64) -> f64 {
    let dl = |e: f64| {
        let u = e * (1.0 - delta) + delta * (1.0 - e);
        -(1.0 - 2.0 * delta) * ((1.0 - u) / u).ln() + beta * ((1.0 - e) / e).ln()
    };
    let (mut lo, mut hi) = (1e-9, 0.5 - 1e-9);
    assert!(dl(lo) > 0.0 && dl(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dl(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bsc_instance(delta: f64) -> JointXY {
    JointXY::from_rows(
        vec![0.5, 0.5],
        vec![vec![1.0 - delta, delta], vec![delta, 1.0 - delta]],
    )
    .unwrap()
}

#[test]
fn stationarity_gap_vanishes_at_analytic_stationary_point() {
    let (delta, beta) = (0.1, 0.5);
    let eps = bsc_stationary_eps(delta, beta);
    let enc = Encoder::from_rows(&[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]).unwrap();
    let gap = stationarity_gap(&enc, &bsc_instance(delta), beta);
    assert!(gap <= 1e-6, "gap {gap}");

    let off = Encoder::from_rows(&[vec![0.9, 0.3], vec![0.1, 0.7]]).unwrap();
    assert!(stationarity_gap(&off, &bsc_instance(delta), beta) > 1e-3);
}

#[test]
fn stationarity_gap_trivial_and_random() {
    let j = reference_joint();
    assert_eq!(stationarity_gap(&Encoder::uniform(1, 3), &j, 2.0), 0.0);
    for seed in 0..10 {
        let enc = Encoder::random(3, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        assert!(stationarity_gap(&enc, &j, 1.0) > 1e-3);
    }
}

#[test]
fn stationarity_gap_matches_independent_recomputation() {
    let j = reference_joint();
    let enc = random_interior(3, 3, 21);
    let beta = 2.0;
    let gf = fd_gradient(enc.matrix(), 1e-6, |m| f_oracle(m, &j));
    let gg = fd_gradient(enc.matrix(), 1e-6, |m| g_oracle(m, j.p_x().probs(), beta));
    let d = gf - gg;
    let mut expected: f64 = 0.0;
    for x in 0..3 {
        let mean = d.column(x).mean();
        expected = d
            .column(x)
            .iter()
            .fold(expected, |a, v| a.max((v - mean).abs()));
    }
    assert!((stationarity_gap(&enc, &j, beta) - expected).abs() < 1e-6);
}

#[test]
fn single_symbol_run_converges_immediately() {
    let j = reference_joint();
    for kind in [InnerKind::Ridge, InnerKind::SparseLog] {
        let r = dca_run(&j, 1, &DcaConfig::new(1.0, 1.0, kind), None).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.i_zx_bits.abs() < 1e-12 && r.i_zy_bits.abs() < 1e-12);
        assert!(r.final_loss().abs() < 1e-12);
    }
}

#[test]
fn small_beta_collapses_z() {
    let j = reference_joint();
    for kind in [InnerKind::Ridge, InnerKind::SparseLog] {
        let r = dca_run(&j, 3, &DcaConfig::new(0.1, 0.1, kind).with_seed(5), None).unwrap();
        assert!(r.converged);
        assert!(r.i_zx_bits < 0.05, "{kind:?}: {}", r.i_zx_bits);
        assert!(r.final_loss().abs() < 0.05);
    }
}

#[test]
fn run_is_deterministic_and_reports_consistent_metrics() {
    let j = reference_joint();
    let cfg = DcaConfig::new(3.0, 0.2, InnerKind::Ridge).with_seed(77);
    let a = dca_run(&j, 3, &cfg, None).unwrap();
    let b = dca_run(&j, 3, &cfg, None).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.encoder, b.encoder);
    assert_eq!(a.loss_trace.len(), a.iterations + 1);
    let pz_x = a.encoder.z_given_x();
    assert!((a.i_zx_bits - mutual_information(pz_x, j.p_x()) * NATS_TO_BITS).abs() < 1e-12);
    assert!(pz_x.max_column_defect() < 1e-9);
}

#[test]
fn init_dimension_is_checked() {
    let j = reference_joint();
    let bad = Encoder::uniform(2, 3);
    let cfg = DcaConfig::new(1.0, 1.0, InnerKind::Ridge);
    assert!(matches!(
        dca_run(&j, 3, &cfg, Some(&bad)),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(dca_run(&j, 0, &cfg, None).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = DcaConfig::new(1.0, 1.0, InnerKind::Ridge);
    assert!(cfg.validate().is_ok());
    cfg.box_max = cfg.box_min / 2.0;
    assert!(cfg.validate().is_err());
    assert!(DcaConfig::new(0.0, 1.0, InnerKind::Ridge)
        .validate()
        .is_err());
    assert!(DcaConfig::new(1.0, -1.0, InnerKind::SparseLog)
        .validate()
        .is_err());
}

#[test]
fn f_and_g_values_split_the_lagrangian() {
    let j = reference_joint();
    let enc = random_interior(3, 3, 8);
    let beta = 1.4;
    let l = pf_lagrangian(&enc, &j, beta);
    assert!((f_value(&enc, &j) - g_value(&enc, &j, beta) - l).abs() < 1e-12);
}
