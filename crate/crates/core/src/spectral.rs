//! Dense assembly of the discrete measurement and normal operators on small
//! grids, their spectra, power spectra of fields and a high-frequency
//! diagnostic for eigenvectors.
//!
//! Matrices are expressed in weighted-orthonormal coordinates: a model vector
//! `x` on the basis nodes is stored as `sqrt(mu_j) x_j` where `mu_j` is the
//! node's quadrature weight times `c^-2`, and data samples are scaled by
//! `sqrt(dt ds)`. In these coordinates the adjoint is the plain transpose.

use std::io::Write;

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fields::{GridSpec, ScalarField};
use crate::measurement::Measurement;

/// Threshold below which an eigenvalue counts as numerically zero, relative
/// to the largest one.
pub const NEAR_ZERO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// The rectangular measurement matrix.
    L,
    /// `L^T L` formed by an explicit matrix product.
    NormalViaTranspose,
    /// Columns of `chi L* L chi` computed with the wave-equation adjoint.
    NormalViaWaveAdjoint,
    /// Anything else assembled from a closure.
    Generic,
}

/// Interior basis: grid indices of the nonzero nodes of a mask, row-major,
/// plus the bounding box used to lay vectors back out as images.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorBasis {
    pub grid: GridSpec,
    pub nodes: Vec<usize>,
    /// `sqrt(mu_j)` per basis node.
    pub scale: Vec<f64>,
}

impl InteriorBasis {
    pub fn new(mask: &ScalarField, c: &ScalarField) -> Result<Self> {
        mask.check_same_grid(c)?;
        let grid = *mask.grid();
        let mut nodes = Vec::new();
        let mut scale = Vec::new();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.index(i, j);
                if mask.values()[k] != 0.0 {
                    nodes.push(k);
                    let ck = c.values()[k];
                    scale.push((grid.quadrature_weight(i, j) / (ck * ck)).sqrt());
                }
            }
        }
        if nodes.is_empty() {
            return Err(invalid("interior mask is empty"));
        }
        Ok(InteriorBasis { grid, nodes, scale })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Field whose basis coordinates are `coords` (weighted), zero elsewhere.
    pub fn embed(&self, coords: &[f64]) -> Result<ScalarField> {
        if coords.len() != self.len() {
            return Err(Error::GridMismatch(format!("expected {} coordinates, got {}", self.len(), coords.len())));
        }
        let mut v = vec![0.0; self.grid.len()];
        for ((&k, &s), &x) in self.nodes.iter().zip(&self.scale).zip(coords) {
            v[k] = x / s;
        }
        ScalarField::from_values(self.grid, v)
    }

    /// Weighted coordinates of a field on the basis nodes.
    pub fn restrict(&self, f: &ScalarField) -> Result<Vec<f64>> {
        if !f.grid().same_space(&self.grid) {
            return Err(Error::GridMismatch("field lives on a different grid".into()));
        }
        Ok(self.nodes.iter().zip(&self.scale).map(|(&k, &s)| s * f.values()[k]).collect())
    }

    /// Bounding box `(i0, j0, width, height)` of the basis nodes.
    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        let nx = self.grid.nx;
        let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
        for &k in &self.nodes {
            let (i, j) = (k % nx, k / nx);
            i0 = i0.min(i);
            j0 = j0.min(j);
            i1 = i1.max(i);
            j1 = j1.max(j);
        }
        (i0, j0, i1 - i0 + 1, j1 - j0 + 1)
    }

    /// Plain field values of a coordinate vector on the bounding box,
    /// row-major.
    pub fn image(&self, coords: &[f64]) -> Result<(usize, usize, Vec<f64>)> {
        let field = self.embed(coords)?;
        let (i0, j0, w, h) = self.bounding_box();
        let mut out = Vec::with_capacity(w * h);
        for j in j0..j0 + h {
            for i in i0..i0 + w {
                out.push(field.get(i, j));
            }
        }
        Ok((w, h, out))
    }
}

#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: DMatrix<f64>,
    pub basis: InteriorBasis,
    pub kind: OperatorKind,
}

/// Column `j` is `op` applied to the `j`-th unit coordinate vector.
pub fn assemble<F>(basis: InteriorBasis, rows: usize, kind: OperatorKind, op: F) -> Result<AssembledOperator>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let n = basis.len();
    let columns = exec::map_indexed(n, |j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        op(&e)
    });
    let mut matrix = DMatrix::zeros(rows, n);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        if col.len() != rows {
            return Err(Error::GridMismatch(format!("column {j} has {} rows, expected {rows}", col.len())));
        }
        matrix.column_mut(j).copy_from_slice(&col);
    }
    Ok(AssembledOperator { matrix, basis, kind })
}

/// Assemble the measurement operator on the nonzero nodes of `mask`.
///
/// For [`OperatorKind::L`] only data rows that can be nonzero (inside Gamma
/// with a nonzero time weight) are kept.
pub fn assemble_measurement(m: &Measurement, mask: &ScalarField, kind: OperatorKind) -> Result<AssembledOperator> {
    let basis = InteriorBasis::new(mask, m.speed())?;
    match kind {
        OperatorKind::L | OperatorKind::NormalViaTranspose => {
            let g = *m.grid();
            let cfg = m.config();
            let p = g.perimeter_len();
            let active: Vec<usize> = (0..=g.nt)
                .filter(|&n| cfg.time_weight[n] != 0.0)
                .flat_map(|n| (0..p).filter(|&k| cfg.gamma.contains(k)).map(move |k| n * p + k))
                .collect();
            let w = (g.dt * g.boundary_spacing()).sqrt();
            let b = basis.clone();
            let l = assemble(basis, active.len(), OperatorKind::L, |e| {
                let f = b.embed(e)?.mul(&cfg.interior_chi)?;
                let trace = m.apply_l(&f)?;
                Ok(active.iter().map(|&r| w * trace.values()[r]).collect())
            })?;
            if kind == OperatorKind::L {
                Ok(l)
            } else {
                Ok(AssembledOperator { matrix: l.matrix.tr_mul(&l.matrix), basis: l.basis, kind })
            }
        }
        OperatorKind::NormalViaWaveAdjoint => {
            let b = basis.clone();
            let n = basis.len();
            assemble(basis, n, kind, |e| b.restrict(&m.apply_normal(&b.embed(e)?)?))
        }
        OperatorKind::Generic => Err(invalid("generic operators are assembled with `assemble`")),
    }
}

/// `||A - A^T||_F / ||A||_F`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    /// Imaginary parts matching `eigenvalues`; all zero on the symmetric path.
    pub imaginary: Vec<f64>,
    /// Orthonormal eigenvectors as columns (symmetric path only).
    pub eigenvectors: Option<DMatrix<f64>>,
    pub symmetric: bool,
}

impl SpectralReport {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    /// Number of eigenvalues with real part at most `rel * lambda_max`.
    pub fn count_below(&self, rel: f64) -> usize {
        let t = rel * self.lambda_max();
        self.eigenvalues.iter().filter(|&&l| l <= t).count()
    }

    pub fn near_zero_count(&self) -> usize {
        self.count_below(NEAR_ZERO)
    }

    pub fn max_imag_ratio(&self) -> f64 {
        let re = self.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let im = self.imaginary.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if re == 0.0 {
            0.0
        } else {
            im / re
        }
    }

    /// `index,re,im` rows.
    pub fn write_eigenvalues_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,re,im")?;
        for (i, (re, im)) in self.eigenvalues.iter().zip(&self.imaginary).enumerate() {
            writeln!(w, "{i},{re:e},{im:e}")?;
        }
        Ok(())
    }
}

/// Symmetric path (eigenvectors kept) when `symmetric`, otherwise complex
/// eigenvalues only.
pub fn eigendecompose_matrix(a: &DMatrix<f64>, symmetric: bool) -> Result<SpectralReport> {
    if !a.is_square() {
        return Err(invalid("eigendecomposition needs a square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    if symmetric {
        let sym = (a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
            .ok_or_else(|| Error::Decomposition("QR iteration did not converge".into()))?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(SpectralReport {
            imaginary: vec![0.0; eigenvalues.len()],
            eigenvalues,
            eigenvectors: Some(eigenvectors),
            symmetric: true,
        })
    } else {
        let ev = Schur::try_new(a.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Decomposition("QR iteration did not converge".into()))?
            .complex_eigenvalues();
        let mut pairs: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Ok(SpectralReport {
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            imaginary: pairs.iter().map(|p| p.1).collect(),
            eigenvectors: None,
            symmetric: false,
        })
    }
}

/// Symmetric path for `L^T L` and generic operators, general path for the
/// wave-adjoint normal operator. A rectangular `L` is squared first.
pub fn eigendecompose(a: &AssembledOperator) -> Result<SpectralReport> {
    match a.kind {
        OperatorKind::L => eigendecompose_matrix(&a.matrix.tr_mul(&a.matrix), true),
        OperatorKind::NormalViaTranspose | OperatorKind::Generic => eigendecompose_matrix(&a.matrix, true),
        OperatorKind::NormalViaWaveAdjoint => eigendecompose_matrix(&a.matrix, false),
    }
}

/// Largest entry of `|Q^T Q - I|`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut d = 0.0_f64;
    for c in 0..g.ncols() {
        for r in 0..g.nrows() {
            let target = if r == c { 1.0 } else { 0.0 };
            d = d.max((g[(r, c)] - target).abs());
        }
    }
    d
}

/// `|<x, e_j>|^2` for coordinate vector `x` against the report's eigenbasis.
pub fn power_spectrum_coords(x: &[f64], report: &SpectralReport) -> Result<Vec<f64>> {
    let q = report.eigenvectors.as_ref().ok_or_else(|| invalid("power spectrum needs the symmetric eigenbasis"))?;
    if x.len() != q.nrows() {
        return Err(Error::GridMismatch(format!("expected {} coordinates, got {}", q.nrows(), x.len())));
    }
    let defect = orthonormality_defect(q);
    if defect > 1e-6 {
        return Err(invalid(format!("eigenbasis is not orthonormal (defect {defect:e})")));
    }
    let v = nalgebra::DVector::from_column_slice(x);
    let c = q.tr_mul(&v);
    Ok(c.iter().map(|v| v * v).collect())
}

/// Power spectrum of a field restricted to the basis nodes.
pub fn power_spectrum(f: &ScalarField, basis: &InteriorBasis, report: &SpectralReport) -> Result<Vec<f64>> {
    power_spectrum_coords(&basis.restrict(f)?, report)
}

/// Share of the total spectral mass carried by the lowest `fraction` of the
/// eigenvalues (spectrum indexed in ascending order).
pub fn low_spectrum_fraction(spectrum: &[f64], fraction: f64) -> f64 {
    let total: f64 = spectrum.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let k = ((fraction * spectrum.len() as f64).round() as usize).min(spectrum.len());
    spectrum[..k].iter().sum::<f64>() / total
}

/// `index,eigenvalue,power` rows.
pub fn write_power_spectrum_csv<W: Write>(report: &SpectralReport, spectrum: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "index,eigenvalue,power")?;
    for (i, (l, p)) in report.eigenvalues.iter().zip(spectrum).enumerate() {
        writeln!(w, "{i},{l:e},{p:e}")?;
    }
    Ok(())
}

/// Fraction of the discrete Fourier energy of a `width x height` image with
/// both frequency components above half the Nyquist frequency. A separable
/// Hann window is applied first so odd sizes do not leak.
pub fn high_freq_fraction(width: usize, height: usize, values: &[f64]) -> Result<f64> {
    if values.len() != width * height || width == 0 || height == 0 {
        return Err(Error::GridMismatch(format!("{} values for a {width}x{height} image", values.len())));
    }
    let hann = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let s = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
                s * s
            })
            .collect()
    };
    let (wx, wy) = (hann(width), hann(height));
    let mut buf: Vec<Complex64> =
        values.iter().enumerate().map(|(k, &v)| Complex64::new(v * wx[k % width] * wy[k / width], 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fx = planner.plan_fft_forward(width);
    for row in buf.chunks_mut(width) {
        fx.process(row);
    }
    let fy = planner.plan_fft_forward(height);
    let mut col = vec![Complex64::new(0.0, 0.0); height];
    for i in 0..width {
        for j in 0..height {
            col[j] = buf[j * width + i];
        }
        fy.process(&mut col);
        for j in 0..height {
            buf[j * width + i] = col[j];
        }
    }
    let high = |q: usize, n: usize| {
        let f = q.min(n - q) as f64 / n as f64;
        f > 0.25
    };
    let mut total = 0.0;
    let mut hi = 0.0;
    for (k, z) in buf.iter().enumerate() {
        let e = z.norm_sqr();
        total += e;
        if high(k % width, width) && high(k / width, height) {
            hi += e;
        }
    }
    Ok(if total == 0.0 { 0.0 } else { hi / total })
}

/// High-frequency fraction of eigenvector `j` laid out on the basis box.
pub fn eigenvector_high_freq(report: &SpectralReport, basis: &InteriorBasis, j: usize) -> Result<f64> {
    let q = report.eigenvectors.as_ref().ok_or_else(|| invalid("report has no eigenvectors"))?;
    if j >= q.ncols() {
        return Err(invalid(format!("eigenvector index {j} out of range")));
    }
    let col: Vec<f64> = q.column(j).iter().copied().collect();
    let (w, h, img) = basis.image(&col)?;
    high_freq_fraction(w, h, &img)
}

/// Summary numbers of a decomposition of the normal operator together with
/// a phantom's power spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub dimension: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub near_zero_count: usize,
    pub near_zero_high_freq: Option<f64>,
    pub top_decile_high_freq: f64,
    pub low_decile_mass: Option<f64>,
    pub parseval_defect: Option<f64>,
    pub asymmetry: Option<f64>,
    pub max_imag_ratio: Option<f64>,
}

/// Mean high-frequency fraction over eigenvectors `range`.
pub fn mean_high_freq(report: &SpectralReport, basis: &InteriorBasis, range: std::ops::Range<usize>) -> Result<f64> {
    if range.is_empty() {
        return Err(invalid("empty eigenvector range"));
    }
    let n = range.len();
    let vals = exec::map_indexed(n, |k| eigenvector_high_freq(report, basis, range.start + k));
    let mut s = 0.0;
    for v in vals {
        s += v?;
    }
    Ok(s / n as f64)
}

pub fn summarize(
    report: &SpectralReport,
    basis: &InteriorBasis,
    phantom: Option<&ScalarField>,
) -> Result<SpectralSummary> {
    let n = report.len();
    let nz = report.near_zero_count();
    let near_zero_high_freq = if nz > 0 { Some(mean_high_freq(report, basis, 0..nz)?) } else { None };
    let top = n - (n / 10).max(1);
    let top_decile_high_freq = mean_high_freq(report, basis, top..n)?;
    let (low_decile_mass, parseval_defect) = match phantom {
        Some(f) => {
            let x = basis.restrict(f)?;
            let spec = power_spectrum_coords(&x, report)?;
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            let total: f64 = spec.iter().sum();
            let defect = if norm2 > 0.0 { (total - norm2).abs() / norm2 } else { 0.0 };
            (Some(low_spectrum_fraction(&spec, 0.1)), Some(defect))
        }
        None => (None, None),
    };
    Ok(SpectralSummary {
        dimension: n,
        lambda_min: report.lambda_min(),
        lambda_max: report.lambda_max(),
        near_zero_count: nz,
        near_zero_high_freq,
        top_decile_high_freq,
        low_decile_mass,
        parseval_defect,
        asymmetry: None,
        max_imag_ratio: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Extent;

    #[test]
    fn checkerboard_is_high_frequency() {
        for n in [8usize, 39, 40] {
            let v: Vec<f64> = (0..n * n).map(|k| if (k % n + k / n) % 2 == 0 { 1.0 } else { -1.0 }).collect();
            assert!(high_freq_fraction(n, n, &v).unwrap() >= 0.99, "n={n}");
            let c = vec![3.0; n * n];
            assert!(high_freq_fraction(n, n, &c).unwrap() < 1e-12);
        }
    }

    #[test]
    fn diagonal_spectrum() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let r = eigendecompose_matrix(&a, true).unwrap();
        assert_eq!(r.eigenvalues, vec![1.0, 2.0, 3.0]);
        let r = eigendecompose_matrix(&a, false).unwrap();
        for (l, e) in r.eigenvalues.iter().zip([1.0, 2.0, 3.0]) {
            assert!((l - e).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_round_trip() {
        let g = GridSpec::new(9, Extent::default(), 1.0, 1.0).unwrap();
        let mask = crate::fields::interior_cutoff(&g, 0.2).unwrap();
        let c = ScalarField::from_fn(g, |x, _| 1.0 + 0.2 * x);
        let b = InteriorBasis::new(&mask, &c).unwrap();
        let x: Vec<f64> = (0..b.len()).map(|j| j as f64 - 3.0).collect();
        let f = b.embed(&x).unwrap();
        let back = b.restrict(&f).unwrap();
        for (a, e) in back.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
        let (_, _, w, h) = b.bounding_box();
        assert_eq!(w * h, b.len());
    }
}
