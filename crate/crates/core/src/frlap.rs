//! Discrete Gagliardo form of the restricted fractional Laplacian.
//!
//! For zero-extended hat functions on a uniform mesh the double integral over
//! `R x R` is translation invariant, so the stiffness matrix is a symmetric
//! Toeplitz matrix `A_ij = t_|i-j|`. Each generator entry is reduced to a
//! one-dimensional integral in the offset `z = x - y`:
//!
//! `t_k = 2 int_0^inf (2 R(kh) - R(z - kh) - R(z + kh)) z^(-1-2s) dz`
//!
//! where `R` is the autocorrelation of a single hat (a piecewise cubic). Pieces
//! near the origin are integrated with exact power moments, distant pieces with
//! Gauss-Legendre quadrature.
//!
//! The split into the `Omega x Omega` part and the exterior correction
//! `2 int_Omega u v rho` is kept for diagnostics: neither part is translation
//! invariant on its own, only their sum is.

use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::quadrature::{poly_power_exact, Cubic, GaussRule};

pub const DEFAULT_QUAD_ORDER: usize = 8;

/// Pieces of the offset integral starting below this many mesh widths use
/// exact moments.
const EXACT_MOMENT_RANGE: f64 = 4.0;

const MAGIC: &[u8; 8] = b"FPMEA001";

/// Autocorrelation of the unit hat, `r(d) = int psi(x) psi(x + d) dx`, on
/// `|d| in [0, 1]` and `[1, 2]`.
const HAT_CORR_NEAR: Cubic = Cubic([2.0 / 3.0, 0.0, -1.0, 0.5]);
const HAT_CORR_FAR: Cubic = Cubic([8.0 / 6.0, -2.0, 1.0, -1.0 / 6.0]);

fn hat_corr(d: f64) -> f64 {
    let d = d.abs();
    if d <= 1.0 {
        HAT_CORR_NEAR.eval(d)
    } else if d <= 2.0 {
        HAT_CORR_FAR.eval(d)
    } else {
        0.0
    }
}

/// `r(z - c)` restricted to the unit piece `[j, j + 1]`, as a cubic in `z`.
fn shifted_corr_on_piece(c: f64, j: f64) -> Cubic {
    if j >= c {
        let lo = j - c;
        match lo as i64 {
            0 => HAT_CORR_NEAR.compose_affine(1.0, c),
            1 => HAT_CORR_FAR.compose_affine(1.0, c),
            _ => Cubic::default(),
        }
    } else {
        let lo = c - j - 1.0;
        match lo as i64 {
            0 => HAT_CORR_NEAR.compose_affine(-1.0, c),
            1 => HAT_CORR_FAR.compose_affine(-1.0, c),
            _ => Cubic::default(),
        }
    }
}

fn integrate_piece(poly: &Cubic, lo: f64, hi: f64, beta: f64, rule: &GaussRule) -> f64 {
    if lo < EXACT_MOMENT_RANGE {
        poly_power_exact(poly, lo, hi, beta)
    } else {
        rule.integrate(lo, hi, |z| poly.eval(z) * z.powf(beta))
    }
}

/// Generator entry for unit mesh width; `t_k = h^(1-2s) * unit_generator(k, s)`.
pub fn unit_generator(k: usize, s: f64, rule: &GaussRule) -> f64 {
    let beta = -1.0 - 2.0 * s;
    let kf = k as f64;
    let base = 2.0 * hat_corr(kf);
    let last = k + 2;
    let mut total = 0.0;
    for j in 0..last {
        let jf = j as f64;
        // skip pieces where the integrand vanishes identically
        if k >= 2 && jf + 1.0 <= kf - 2.0 {
            continue;
        }
        let poly = Cubic([base, 0.0, 0.0, 0.0])
            .add(&shifted_corr_on_piece(kf, jf), -1.0)
            .add(&shifted_corr_on_piece(-kf, jf), -1.0);
        let poly = if j == 0 {
            // the offset integrand is O(z^2) at the origin
            Cubic([0.0, 0.0, poly.0[2], poly.0[3]])
        } else {
            poly
        };
        total += integrate_piece(&poly, jf, jf + 1.0, beta, rule);
    }
    let tail = if base != 0.0 {
        base * (last as f64).powf(-2.0 * s) / (2.0 * s)
    } else {
        0.0
    };
    2.0 * (total + tail)
}

/// Density of the exterior interaction,
/// `rho(x) = int_{R \ Omega} |x - y|^(-1-2s) dy = ((x-a)^(-2s) + (b-x)^(-2s)) / (2s)`.
#[derive(Debug, Clone, Copy)]
pub struct ExteriorDensity {
    a: f64,
    b: f64,
    s: f64,
}

impl ExteriorDensity {
    pub fn new(grid: &Grid, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParams(format!("s must lie in (0, 1), got {s}")));
        }
        Ok(Self {
            a: grid.a(),
            b: grid.b(),
            s,
        })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > self.a && x < self.b) {
            return Err(Error::DomainBoundary {
                x,
                a: self.a,
                b: self.b,
            });
        }
        let e = -2.0 * self.s;
        Ok(((x - self.a).powf(e) + (self.b - x).powf(e)) / (2.0 * self.s))
    }
}

/// Tridiagonal matrix of `2 int_Omega psi_i psi_j rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorBlock {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl ExteriorBlock {
    fn assemble(grid: &Grid, s: f64, rule: &GaussRule) -> Self {
        let n = grid.n();
        let beta = -2.0 * s;
        // t = (x - a) / h; node i sits at t = i.
        let left_diag = |i: usize| {
            let fi = i as f64;
            let rising = Cubic([0.0, 1.0, 0.0, 0.0]).compose_affine(1.0, fi - 1.0);
            let rising = square(&rising);
            let falling = square(&Cubic([fi + 1.0, -1.0, 0.0, 0.0]));
            integrate_piece(&rising, fi - 1.0, fi, beta, rule)
                + integrate_piece(&falling, fi, fi + 1.0, beta, rule)
        };
        let left_off = |i: usize| {
            let fi = i as f64;
            let prod = mul(&Cubic([fi + 1.0, -1.0, 0.0, 0.0]), &Cubic([-fi, 1.0, 0.0, 0.0]));
            integrate_piece(&prod, fi, fi + 1.0, beta, rule)
        };
        let scale = grid.h().powf(1.0 - 2.0 * s) / s;
        let ld: Vec<f64> = (1..=n).map(left_diag).collect();
        let lo: Vec<f64> = (1..n).map(left_off).collect();
        let diag = (0..n).map(|i| scale * (ld[i] + ld[n - 1 - i])).collect();
        let off = (0..n - 1).map(|i| scale * (lo[i] + lo[n - 2 - i])).collect();
        Self { diag, off }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn quadratic(&self, phi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (d, x) in self.diag.iter().zip(phi) {
            acc += d * x * x;
        }
        for (o, pair) in self.off.iter().zip(phi.windows(2)) {
            acc += 2.0 * o * pair[0] * pair[1];
        }
        acc
    }
}

fn mul(p: &Cubic, q: &Cubic) -> Cubic {
    let mut out = [0.0; 4];
    for (i, &a) in p.0.iter().enumerate() {
        for (j, &b) in q.0.iter().enumerate() {
            if a != 0.0 && b != 0.0 {
                assert!(i + j < 4, "product degree exceeds 3");
                out[i + j] += a * b;
            }
        }
    }
    Cubic(out)
}

fn square(p: &Cubic) -> Cubic {
    mul(p, p)
}

/// Sign-pattern report for the assembled matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MStructureReport {
    pub max_offdiag: f64,
    pub min_row_sum: f64,
    pub tolerance: f64,
    pub offdiag_ok: bool,
    pub row_sum_ok: bool,
}

impl MStructureReport {
    pub fn passed(&self) -> bool {
        self.offdiag_ok && self.row_sum_ok
    }
}

pub fn check_m_structure_matrix(a: &DMatrix<f64>) -> MStructureReport {
    let n = a.nrows();
    let scale = a.amax();
    let tolerance = 1e-12 * scale;
    let mut max_offdiag = f64::NEG_INFINITY;
    let mut min_row_sum = f64::INFINITY;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let v = a[(i, j)];
            row += v;
            if i != j {
                max_offdiag = max_offdiag.max(v);
            }
        }
        min_row_sum = min_row_sum.min(row);
    }
    MStructureReport {
        max_offdiag,
        min_row_sum,
        tolerance,
        offdiag_ok: max_offdiag <= tolerance,
        row_sum_ok: min_row_sum >= -tolerance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectralBound {
    /// Estimate of the largest eigenvalue.
    pub estimate: f64,
    /// `1.01 * estimate`.
    pub bound: f64,
    pub iterations: usize,
}

pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Largest eigenvalue of a symmetric matrix.
///
/// Lanczos with full reorthogonalization; the top of the spectrum of these
/// Toeplitz matrices is tightly clustered, which stalls plain power iteration.
/// Stops once the Ritz residual of the top pair is below `1e-10` relative.
pub fn spectral_bound_matrix(a: &DMatrix<f64>) -> Result<SpectralBound> {
    let n = a.nrows();
    let max_dim = n.min(SPECTRAL_MAX_ITER);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = DVector::from_fn(n, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * (std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).sin() + 1.0 / (1.0 + i as f64)
    });
    q /= q.norm();
    let mut w = DVector::zeros(n);
    for it in 1..=max_dim {
        w.gemv(1.0, a, &q, 0.0);
        let alpha = q.dot(&w);
        basis.push(q.clone());
        alphas.push(alpha);
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&w);
                w.axpy(-c, v, 1.0);
            }
        }
        let beta = w.norm();
        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alphas[i]
            } else if i.abs_diff(j) == 1 {
                betas[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = nalgebra::SymmetricEigen::new(t);
        let (top, idx) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((f64::NEG_INFINITY, 0), |acc, (i, &v)| if v > acc.0 { (v, i) } else { acc });
        let residual = beta * eig.eigenvectors[(k - 1, idx)].abs();
        if residual <= 1e-10 * top.abs().max(f64::MIN_POSITIVE) || beta <= 1e-14 * top.abs() || it == n {
            let estimate = top.max(0.0);
            return Ok(SpectralBound {
                estimate,
                bound: 1.01 * estimate,
                iterations: it,
            });
        }
        betas.push(beta);
        q.copy_from(&w);
        q /= beta;
    }
    Err(Error::NoConvergence {
        what: "Lanczos iteration",
        iterations: max_dim,
    })
}

/// Assembled stiffness matrix of the Gagliardo form.
#[derive(Debug, Clone)]
pub struct StiffnessForm {
    grid: Arc<Grid>,
    s: f64,
    matrix: DMatrix<f64>,
    generator: Vec<f64>,
    exterior: ExteriorBlock,
    m_report: MStructureReport,
    cholesky: OnceLock<Cholesky<f64, Dyn>>,
}

impl StiffnessForm {
    pub fn assemble(grid: &Arc<Grid>, s: f64, quad_order: usize) -> Result<Self> {
        if quad_order < 4 {
            return Err(Error::InvalidParams(format!("quad_order must be >= 4, got {quad_order}")));
        }
        ExteriorDensity::new(grid, s)?;
        let rule = GaussRule::new(quad_order);
        let n = grid.n();
        let scale = grid.h().powf(1.0 - 2.0 * s);
        let generator: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| scale * unit_generator(k, s, &rule))
            .collect();
        let matrix = DMatrix::from_fn(n, n, |i, j| generator[i.abs_diff(j)]);
        let exterior = ExteriorBlock::assemble(grid, s, &rule);
        Self::finish(grid, s, matrix, generator, exterior)
    }

    /// Wraps a cached matrix; the generator is read off its first row.
    pub fn from_cached(grid: &Arc<Grid>, s: f64, matrix: DMatrix<f64>, quad_order: usize) -> Result<Self> {
        if matrix.nrows() != grid.n() || matrix.ncols() != grid.n() {
            return Err(Error::GridMismatch);
        }
        ExteriorDensity::new(grid, s)?;
        let generator = matrix.row(0).iter().copied().collect();
        let exterior = ExteriorBlock::assemble(grid, s, &GaussRule::new(quad_order.max(4)));
        Self::finish(grid, s, matrix, generator, exterior)
    }

    fn finish(
        grid: &Arc<Grid>,
        s: f64,
        matrix: DMatrix<f64>,
        generator: Vec<f64>,
        exterior: ExteriorBlock,
    ) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::AssemblyFailure("non-finite matrix entry".into()));
        }
        let asym = symmetry_defect(&matrix);
        if asym > 1e-12 * matrix.amax() {
            return Err(Error::AssemblyFailure(format!("asymmetry {asym:e}")));
        }
        let cholesky = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::AssemblyFailure("matrix is not positive definite".into()))?;
        let m_report = check_m_structure_matrix(&matrix);
        let cell = OnceLock::new();
        let _ = cell.set(cholesky);
        Ok(Self {
            grid: Arc::clone(grid),
            s,
            matrix,
            generator,
            exterior,
            m_report,
            cholesky: cell,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Toeplitz generator: `A_ij = generator[|i - j|]`.
    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    pub fn exterior(&self) -> &ExteriorBlock {
        &self.exterior
    }

    /// The `Omega x Omega` part `A - E`.
    pub fn interior_part(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for i in 0..self.n() {
            m[(i, i)] -= self.exterior.diag[i];
            if i + 1 < self.n() {
                m[(i, i + 1)] -= self.exterior.off[i];
                m[(i + 1, i)] -= self.exterior.off[i];
            }
        }
        m
    }

    pub fn m_structure(&self) -> &MStructureReport {
        &self.m_report
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        self.cholesky
            .get_or_init(|| Cholesky::new(self.matrix.clone()).expect("checked at construction"))
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.grid().as_ref() == self.grid.as_ref() {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `A x` on raw nodal vectors.
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        let xv = nalgebra::DVectorView::from_slice(x, x.len());
        let mut ov = nalgebra::DVectorViewMut::from_slice(out, x.len());
        ov.gemv(1.0, &self.matrix, &xv, 0.0);
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        let mut out = vec![0.0; self.n()];
        self.apply_slice(f.values(), &mut out);
        GridFunction::new(&self.grid, out)
    }

    /// Solves `A x = rhs`.
    pub fn solve_slice(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.cholesky().solve(&b).as_slice().to_vec()
    }

    pub fn bilinear_slice(&self, x: &[f64], y: &[f64]) -> f64 {
        let xv = nalgebra::DVectorView::from_slice(x, x.len());
        let yv = nalgebra::DVectorView::from_slice(y, y.len());
        // x^T A y
        let mut tmp = DVector::zeros(x.len());
        tmp.gemv(1.0, &self.matrix, &yv, 0.0);
        xv.dot(&tmp)
    }

    pub fn bilinear(&self, phi: &GridFunction, psi: &GridFunction) -> Result<f64> {
        self.check(phi)?;
        self.check(psi)?;
        Ok(self.bilinear_slice(phi.values(), psi.values()))
    }

    /// `[phi]_s^2 = phi^T A phi`.
    pub fn seminorm_sq(&self, phi: &GridFunction) -> Result<f64> {
        self.bilinear(phi, phi)
    }

    pub fn spectral_bound(&self) -> Result<SpectralBound> {
        spectral_bound_matrix(&self.matrix)
    }

    /// Returns the form of `c A` (same grid and `s`).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let matrix = &self.matrix * c;
        let generator = self.generator.iter().map(|t| c * t).collect();
        let exterior = ExteriorBlock {
            diag: self.exterior.diag.iter().map(|t| c * t).collect(),
            off: self.exterior.off.iter().map(|t| c * t).collect(),
        };
        Self::finish(&self.grid, self.s, matrix, generator, exterior)
    }

    /// Writes the `FPMEA001` cache: magic, rows and columns as little-endian
    /// `u64`, then row-major little-endian `f64` entries.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_binary(&self.matrix, out)
    }
}

pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_m_structure(form: &StiffnessForm) -> MStructureReport {
    check_m_structure_matrix(form.matrix())
}

pub fn write_matrix_binary<W: Write>(a: &DMatrix<f64>, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(a.nrows() as u64).to_le_bytes())?;
    out.write_all(&(a.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * a.len());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            buf.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut input: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic in matrix cache".into()));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut data = vec![0u8; 8 * rows * cols];
    input.read_exact(&mut data)?;
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}
