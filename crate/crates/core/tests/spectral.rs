use mwt_core::fields::*;
use mwt_core::landweber::estimate_bounds_with;
use mwt_core::measurement::{Measurement, MeasurementConfig, TimeWindow};
use mwt_core::spectral::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measurement(nx: usize, t: f64, margin: f64) -> (Measurement, ScalarField) {
    let g = GridSpec::new(nx, Extent::default(), t, 1.5).unwrap();
    let c = make_speed(&g, &SpeedModel::Trig).unwrap();
    let omega = interior_cutoff(&g, margin).unwrap();
    let mut cfg = MeasurementConfig::plain(&g);
    cfg.interior_chi = omega.clone();
    cfg.time_weight = TimeWindow::default().weights(&g).unwrap();
    (Measurement::new(g, c, cfg).unwrap(), omega)
}

#[test]
fn trivial_operators() {
    let g = GridSpec::new(9, Extent::default(), 1.0, 1.0).unwrap();
    let mask = interior_cutoff(&g, 0.2).unwrap();
    let c = ScalarField::constant(g, 1.0);
    let basis = InteriorBasis::new(&mask, &c).unwrap();
    let n = basis.len();
    let id = assemble(basis.clone(), n, OperatorKind::Generic, |x| basis.restrict(&basis.embed(x)?)).unwrap();
    assert_eq!(id.matrix, DMatrix::identity(n, n));
    let two =
        assemble(basis.clone(), n, OperatorKind::Generic, |x| basis.restrict(&basis.embed(x)?.scaled(2.0))).unwrap();
    assert_eq!(two.matrix, DMatrix::identity(n, n) * 2.0);
    let r = eigendecompose(&id).unwrap();
    assert!(r.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-14));
}

#[test]
fn normal_matrix_properties() {
    let (m, omega) = measurement(21, 1.5, 0.1);
    let a = assemble_measurement(&m, &omega, OperatorKind::NormalViaTranspose).unwrap();
    assert!(asymmetry(&a.matrix) < 1e-12);
    let r = eigendecompose(&a).unwrap();
    assert!(r.lambda_min() >= -1e-10 * r.lambda_max());

    // Reconstruction from the eigenpairs.
    let q = r.eigenvectors.as_ref().unwrap();
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&r.eigenvalues));
    let back = q * lam * q.transpose();
    assert!((&back - &a.matrix).norm() <= 1e-8 * a.matrix.norm());
    assert!(orthonormality_defect(q) < 1e-10);

    // Assembly is consistent with the operator on random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = assemble_measurement(&m, &omega, OperatorKind::NormalViaWaveAdjoint).unwrap();
    for _ in 0..10 {
        let x: Vec<f64> = (0..w.basis.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let ax = &w.matrix * DVector::from_column_slice(&x);
        let direct = w.basis.restrict(&m.apply_normal(&w.basis.embed(&x).unwrap()).unwrap()).unwrap();
        let num: f64 = ax.iter().zip(&direct).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = direct.iter().map(|q| q * q).sum();
        assert!((num / den).sqrt() <= 1e-10);
    }
    let rw = eigendecompose_matrix(&w.matrix, false).unwrap();
    assert!(rw.max_imag_ratio() <= 0.05);
    assert!((&w.matrix - &a.matrix).norm() <= 1e-10 * a.matrix.norm());
}

#[test]
fn power_spectrum_of_eigenvectors_and_parseval() {
    let (m, omega) = measurement(17, 1.0, 0.1);
    let a = assemble_measurement(&m, &omega, OperatorKind::NormalViaTranspose).unwrap();
    let r = eigendecompose(&a).unwrap();
    let q = r.eigenvectors.as_ref().unwrap();
    let k = r.len() / 2;
    let e: Vec<f64> = q.column(k).iter().copied().collect();
    let s = power_spectrum(&a.basis.embed(&e).unwrap(), &a.basis, &r).unwrap();
    for (j, v) in s.iter().enumerate() {
        if j == k {
            assert!((v - 1.0).abs() < 1e-10);
        } else {
            assert!(*v <= 1e-10);
        }
    }
    let zero = power_spectrum(&ScalarField::zeros(a.basis.grid), &a.basis, &r).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));

    let f = render_shepp_logan(&a.basis.grid, 2).unwrap();
    let s = power_spectrum(&f, &a.basis, &r).unwrap();
    let x = a.basis.restrict(&f).unwrap();
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    assert!((s.iter().sum::<f64>() - norm2).abs() <= 1e-6 * norm2);
}

#[test]
fn power_iteration_matches_top_eigenvalue() {
    let (m, omega) = measurement(41, 4.0, 0.03);
    let a = assemble_measurement(&m, &omega, OperatorKind::NormalViaWaveAdjoint).unwrap();
    let r = eigendecompose_matrix(&a.matrix, true).unwrap();
    let mat = &a.matrix;
    let b = estimate_bounds_with(
        a.basis.len(),
        &|x| Ok((mat * DVector::from_column_slice(x)).as_slice().to_vec()),
        &|p, q| p.iter().zip(q).map(|(s, t)| s * t).sum(),
        3,
        11,
        0.0,
    )
    .unwrap();
    assert!((b.l2norm - r.lambda_max()).abs() <= 1e-3 * r.lambda_max(), "{} vs {}", b.l2norm, r.lambda_max());
}

#[test]
fn csv_layouts() {
    let r = eigendecompose_matrix(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0])), true).unwrap();
    let mut buf = Vec::new();
    r.write_eigenvalues_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,re,im");
    assert_eq!(text.lines().count(), 4);
    let mut buf = Vec::new();
    write_power_spectrum_csv(&r, &[0.1, 0.2, 0.3], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,eigenvalue,power");
}
