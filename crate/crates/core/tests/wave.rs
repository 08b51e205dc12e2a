use std::f64::consts::PI;

use mwt_core::fields::*;
use mwt_core::wave::*;

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn neumann_eigenmode() {
    let g = GridSpec::new(201, Extent::default(), 1.0, 1.0).unwrap();
    let c = ScalarField::constant(g, 1.0);
    let f = ScalarField::from_fn(g, |x, _| (PI * x).cos());
    let out = forward_solve(&f, &c, &g, Record::TRACE).unwrap();
    let t = g.final_time();
    let exact = ScalarField::from_fn(g, |x, _| (PI * x).cos() * (PI * t).cos());
    let err = relative(out.state.current.values(), exact.values());
    assert!(err <= 0.01, "eigenmode error {err}");
}

#[test]
fn energy_drift_trig_speed() {
    let g = GridSpec::new(201, Extent::default(), 4.0, 1.5).unwrap();
    let c = make_speed(&g, &SpeedModel::Trig).unwrap();
    let f = render_shepp_logan(&g, 4).unwrap();
    let out = forward_solve(&f, &c, &g, Record::ENERGY).unwrap();
    let e = out.energy.unwrap();
    let e0 = e[0].energy;
    let drift = e.iter().map(|s| (s.energy - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift <= 0.01, "drift {drift}");
}

#[test]
fn forward_then_backward_is_identity() {
    let g = GridSpec::new(101, Extent::default(), 199.9 * 0.02 / 2f64.sqrt() / 1.5, 1.5).unwrap();
    assert_eq!(g.nt, 200);
    let c = make_speed(&g, &SpeedModel::Trig).unwrap();
    let solver = WaveSolver::new(g, &c).unwrap();
    let f = render_gaussians(&g, &[Blob { center: (0.2, -0.1), width: 0.2, amplitude: 1.0 }]).unwrap();
    let out = solver.forward(&f, Record::FULL).unwrap();
    let back = solver.reverse_from_state(&out.state, None, Pinning::None).unwrap();
    let frames = out.frames.unwrap();
    assert!(relative(back.previous.values(), frames[0].values()) < 1e-10);
    assert!(relative(back.current.values(), frames[1].values()) < 1e-10);
}

#[test]
fn forward_is_linear() {
    let g = GridSpec::new(41, Extent::default(), 1.0, 1.5).unwrap();
    let c = make_speed(&g, &SpeedModel::Trig).unwrap();
    let f = render_shepp_logan(&g, 1).unwrap();
    let h = ScalarField::from_fn(g, |x, y| (x * y).sin());
    let (a, b) = (0.7, -1.9);
    let mut comb = f.scaled(a);
    comb.axpy(b, &h).unwrap();
    let lc = forward_solve(&comb, &c, &g, Record::TRACE).unwrap().trace;
    let lf = forward_solve(&f, &c, &g, Record::TRACE).unwrap().trace;
    let lh = forward_solve(&h, &c, &g, Record::TRACE).unwrap().trace;
    let expect = lf.scaled(a).add(&lh.scaled(b)).unwrap();
    assert!(lc.sub(&expect).unwrap().norm() <= 1e-12 * expect.norm());
}

#[test]
fn y_independent_data_stays_y_independent() {
    let g = GridSpec::new(61, Extent::default(), 2.0, 1.0).unwrap();
    let c = ScalarField::constant(g, 1.0);
    let f = ScalarField::from_fn(g, |x, _| (-(x - 0.2).powi(2) / 0.05).exp());
    let out = forward_solve(&f, &c, &g, Record::TRACE).unwrap();
    let u = &out.state.current;
    let mut dev = 0.0f64;
    for j in 1..g.ny {
        for i in 0..g.nx {
            dev = dev.max((u.get(i, j) - u.get(i, 0)).abs());
        }
    }
    assert!(dev <= 1e-10, "{dev}");
}

#[test]
fn adjoint_identity_random_pairs() {
    let g = GridSpec::new(101, Extent::default(), 2.0, 1.5).unwrap();
    let c = make_speed(&g, &SpeedModel::Trig).unwrap();
    let solver = WaveSolver::new(g, &c).unwrap();
    for k in 0..5 {
        let kf = k as f64;
        let f = render_gaussians(&g, &[Blob { center: (0.3 - 0.1 * kf, 0.2 * kf - 0.4), width: 0.2, amplitude: 1.0 }])
            .unwrap();
        let p = g.perimeter_len() as f64;
        let h = BoundaryTrace::from_fn(g, GammaMask::full(&g), |t, j| {
            (1.0 + kf) * (PI * t * (0.5 + 0.2 * kf)).sin() * (2.0 * PI * j as f64 / p * (1.0 + kf)).cos()
        });
        let lf = solver.forward(&f, Record::TRACE).unwrap().trace;
        let lhs = lf.dot(&h).unwrap();
        let ls = solver.adjoint(&h, AdjointScheme::Transpose).unwrap();
        let rhs = weighted_dot(&f, &ls, &c).unwrap();
        let scale = lf.norm() * h.norm();
        assert!((lhs - rhs).abs() / scale <= 1e-2, "pair {k}: {lhs} vs {rhs}");
    }
}

#[test]
fn zero_data_and_constants() {
    let g = GridSpec::new(31, Extent::default(), 1.0, 1.0).unwrap();
    let c = ScalarField::constant(g, 1.0);
    let zero = BoundaryTrace::zeros(g, GammaMask::full(&g));
    let v = adjoint_solve(&zero, &c, &g, AdjointScheme::Transpose).unwrap();
    assert!(v.values().iter().all(|&x| x == 0.0));
    let h = BoundaryTrace::from_fn(g, GammaMask::full(&g), |_, _| 2.5);
    let term = ScalarField::constant(g, 2.5);
    let r = dirichlet_reversal_solve(&h, &term, &c, &g, g.final_time()).unwrap();
    assert!(r.values().iter().all(|&x| (x - 2.5).abs() < 1e-12));
}

#[test]
fn reversal_recovers_initial_field() {
    let g = GridSpec::new(101, Extent::default(), 1.0, 1.5).unwrap();
    let c = make_speed(&g, &SpeedModel::Trig).unwrap();
    let solver = WaveSolver::new(g, &c).unwrap();
    let f = render_gaussians(&g, &[Blob { center: (0.0, 0.1), width: 0.25, amplitude: 1.0 }]).unwrap();
    let out = solver.forward(&f, Record::FULL).unwrap();
    let frames = out.frames.unwrap();
    // Start from the exact two-level terminal state so the zero-velocity
    // terminal condition is not an approximation.
    let state = WaveState { current: frames[g.nt].clone(), previous: frames[g.nt - 1].clone(), step: g.nt };
    let back = solver.reverse_from_state(&state, Some(&out.trace), Pinning::Full).unwrap();
    let err = relative(back.previous.values(), f.values());
    assert!(err <= 5e-3, "{err}");
}
