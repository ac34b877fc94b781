use nlkg::dense::Matrix;
use nlkg::shoot::{
    aim, backward_run, decay_exponent, final_data, horizon_continuation, ExitReason, ShootOptions, ShootProblem,
};
use nlkg::modulation::Bound;
use nlkg::soliton::groundstate_power;
use nlkg::{Error, FieldPair, Grid, GroundState, ScalarField, SolitonParams};
use proptest::prelude::*;

fn cubic(n: usize) -> (Grid, GroundState) {
    let g = Grid::centered(n, 60.0).unwrap();
    let gs = groundstate_power(3.0, 1.0, &g).unwrap();
    (g, gs)
}

fn pair(gs: &GroundState) -> SolitonParams {
    SolitonParams::new(&[-0.3, 0.4], &[0.0, 0.0], gs.nonlinearity().clone()).unwrap()
}

fn single(gs: &GroundState) -> SolitonParams {
    SolitonParams::new(&[0.0], &[0.0], gs.nonlinearity().clone()).unwrap()
}

fn energy_norm(u: &FieldPair) -> f64 {
    let ux = u.first.deriv();
    (ux.inner(&ux).unwrap() + u.first.inner(&u.first).unwrap() + u.second.inner(&u.second).unwrap()).sqrt()
}

#[test]
fn single_static_final_data_matches_gram_oracle() {
    // Q- = sech^2 / |sech^2|, lambda0 = 3, Z+- = (+-sqrt3 Q-, Q-).
    let (g, gs) = cubic(1024);
    let p = ShootProblem::new(&single(&gs), &gs, 10.0, 4.0, ShootOptions::default()).unwrap();
    let sech2 = ScalarField::from_fn(&g, |x| 1.0 / x.cosh().powi(2));
    let z = |s: f64| {
        let v = FieldPair::new(sech2.scaled(s * 3f64.sqrt()), sech2.clone()).unwrap();
        let n = energy_norm(&v);
        v.scaled(1.0 / n)
    };
    let (zp, zm) = (z(1.0), z(-1.0));
    let mut m = Matrix::zeros(2, 2);
    // rows: a+ = <V|Z->, a- = <V|Z+>
    for (i, w) in [&zm, &zp].iter().enumerate() {
        for (k, d) in [&zp, &zm].iter().enumerate() {
            m[(i, k)] = w.inner(d).unwrap();
        }
    }
    let scale = p.final_scale();
    let b = m.solve(&[scale, 0.0]).unwrap();
    let q = FieldPair::new(ScalarField::from_fn(&g, |x| 2f64.sqrt() / x.cosh()), ScalarField::zeros(&g)).unwrap();
    let mut oracle = q;
    oracle.axpy(b[0], &zp).unwrap();
    oracle.axpy(b[1], &zm).unwrap();
    let fd = final_data(&p, &[1.0]).unwrap();
    let err = energy_norm(&(&fd.state - &oracle));
    assert!(err < 1e-9, "{err:e}");
    assert!((fd.modulation.a_plus[0] - scale).abs() < 1e-10);
}

#[test]
fn zero_aim_gives_vanishing_coefficients() {
    let (_, gs) = cubic(2048);
    let p = ShootProblem::new(&pair(&gs), &gs, 15.0, 9.0, ShootOptions::default()).unwrap();
    let fd = final_data(&p, &[0.0, 0.0]).unwrap();
    let m = &fd.modulation;
    for a in m.a_plus.iter().chain(&m.a_minus).chain(&m.a_zero) {
        assert!(a.abs() < 1e-10, "{a:e}");
    }
    // Only the overlap of the two tails is left.
    assert!(m.v_norm < 1e-3, "{:e}", m.v_norm);
}

#[test]
fn unit_aims_exit_immediately_and_transversally() {
    let (_, gs) = cubic(2048);
    let p = ShootProblem::new(&pair(&gs), &gs, 15.0, 9.0, ShootOptions::default()).unwrap();
    let rec = p.opts.dt * p.opts.record_every as f64;
    for a in [[1.0, 0.0], [0.6, -0.8], [-0.28, 0.96]] {
        let r = backward_run(&p, &a).unwrap();
        assert!(p.s0 - r.exit_time <= rec + 1e-12, "T* = {}", r.exit_time);
        assert!(matches!(r.exit_reason, ExitReason::Bound { bound: Bound::APlus, .. }));
        assert!(r.transversality.unwrap() <= -0.5 * p.gamma0);
    }
}

#[test]
fn interior_exit_is_refined_within_one_step() {
    let (_, gs) = cubic(2048);
    let p = ShootProblem::new(&pair(&gs), &gs, 15.0, 9.0, ShootOptions::default()).unwrap();
    let r = backward_run(&p, &[0.5, 0.3]).unwrap();
    let st = r.exit_state.as_ref().unwrap();
    assert!((r.exit_time - st.t - p.opts.dt).abs() < 1e-9);
    assert!(r.exit_time > p.t0 && r.exit_time < p.s0);
    match r.exit_reason {
        ExitReason::Bound { bound, ratio } => {
            assert_eq!(bound, Bound::APlus);
            assert!(ratio > 1.0);
        }
        ref e => panic!("{e:?}"),
    }
    assert!(r.transversality.unwrap() <= -0.5 * p.gamma0);
    // Every earlier record is inside the tube.
    assert!(r.records.iter().filter(|x| x.t > r.exit_time).all(|x| x.worst_ratio <= 1.0));
}

#[test]
fn zero_aim_survives_a_short_window() {
    let (_, gs) = cubic(2048);
    let p = ShootProblem::new(&pair(&gs), &gs, 15.0, 13.0, ShootOptions::default()).unwrap();
    let r = backward_run(&p, &[0.0, 0.0]).unwrap();
    assert!(r.survived(), "{:?} at {}", r.exit_reason, r.exit_time);
    assert_eq!(r.exit_time, p.t0);
}

#[test]
fn single_soliton_bisection() {
    let (_, gs) = cubic(1024);
    let p = ShootProblem::new(&single(&gs), &gs, 10.0, 4.0, ShootOptions::default()).unwrap();
    let r = aim(&p).unwrap();
    assert!(r.survived());
    assert!(r.aim[0].abs() < 1.0);
    assert!(r.runs <= p.opts.budget);
    for rec in &r.records {
        assert!(rec.v_norm <= (-p.gamma0 * rec.t).exp());
    }
    // The bracket [-1, 1] halves per run: after k bisection runs (plus the
    // final diagnostic run) the midpoint has denominator 2^(k-1).
    let k = r.aim[0] * 2f64.powi(r.runs as i32 - 2);
    assert_eq!(k, k.round());
}

#[test]
fn horizon_continuation_decays_and_stabilizes() {
    let (_, gs) = cubic(2048);
    let p = ShootProblem::new(&pair(&gs), &gs, 12.0, 8.0, ShootOptions::default()).unwrap();
    let h = horizon_continuation(&p, &[12.0, 16.0, 20.0]).unwrap();
    for x in &h {
        assert!(x.result.survived());
        assert!(x.result.runs <= p.opts.budget);
        assert!(x.decay_exponent >= 0.8 * p.gamma0, "S0 {}: {}", x.s0, x.decay_exponent);
        for rec in &x.result.records {
            assert!(rec.v_norm <= (-p.gamma0 * rec.t).exp());
        }
    }
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(d(&h[2].result.aim, &h[1].result.aim) < d(&h[1].result.aim, &h[0].result.aim));
}

#[test]
fn decay_fit_recovers_exponential() {
    let (_, gs) = cubic(1024);
    let p = ShootProblem::new(&single(&gs), &gs, 10.0, 4.0, ShootOptions::default()).unwrap();
    let mut r = backward_run(&p, &[0.3]).unwrap();
    for rec in &mut r.records {
        rec.v_norm = 2.5 * (-0.37 * rec.t).exp();
    }
    assert!((decay_exponent(&r.records, 5.0, 9.0) - 0.37).abs() < 1e-12);
}

#[test]
fn setup_errors() {
    let (_, gs) = cubic(1024);
    let o = ShootOptions::default();
    assert!(matches!(ShootProblem::new(&single(&gs), &gs, 4.0, 4.0, o), Err(Error::Usage(_))));
    // Centers 0.7 * 2 apart at T0 = 2.
    assert!(matches!(ShootProblem::new(&pair(&gs), &gs, 15.0, 2.0, o), Err(Error::Domain(_))));
    // Tube radius exp(-gamma0 T0) above eps0.
    assert!(matches!(ShootProblem::new(&single(&gs), &gs, 3.0, 1.0, o), Err(Error::Domain(_))));
    let p = ShootProblem::new(&single(&gs), &gs, 10.0, 4.0, o).unwrap();
    assert!(matches!(final_data(&p, &[1.5]), Err(Error::Usage(_))));
    assert!(matches!(final_data(&p, &[0.1, 0.1]), Err(Error::Usage(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn final_data_round_trip(r in 0.0f64..1.0, th in 0.0f64..std::f64::consts::TAU) {
        let (_, gs) = cubic(1024);
        let mut o = ShootOptions::default();
        o.check_spectrum = false;
        let p = ShootProblem::new(&pair(&gs), &gs, 15.0, 9.0, o).unwrap();
        let a = [r * th.cos(), r * th.sin()];
        let fd = final_data(&p, &a).unwrap();
        let m = &fd.modulation;
        for j in 0..2 {
            prop_assert!((m.a_plus[j] - p.final_scale() * a[j]).abs() < 1e-10);
            prop_assert!(m.a_minus[j].abs() < 1e-10);
            prop_assert!(m.a_zero[j].abs() < 1e-10);
        }
        prop_assert!(m.v_norm <= (-p.gamma0 * p.s0).exp());
    }
}
