//! Dense reference computations for verifying the iteration: SVD,
//! Moore–Penrose pseudo-inverse, closed-form limits and spectral diagnostics
//! of `ΛAᵀA`. Everything here densifies, so it is meant for small systems.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitting::{CollocationMatrix, WeightMatrix};
use crate::points::PointMatrix;

pub type DenseMatrix = DMatrix<f64>;

const MAX_SWEEPS: usize = 100_000;
// nalgebra's bidiagonal SVD can stop early at a given threshold on some
// well-conditioned inputs; tighter thresholds are tried until M = UΣVᵀ holds.
const SVD_EPS_SCHEDULE: [f64; 4] = [1e-15, 1e-17, 1e-19, 1e-21];
const SVD_RECONSTRUCTION_TOL: f64 = 1e-13;
// Francis QR deflates a subdiagonal entry against an absolute threshold; with a
// cluster of zero eigenvalues it may never get below 1e-15, so looser thresholds
// follow. Each result must still reproduce M = QTQᵀ.
const SCHUR_EPS_SCHEDULE: [f64; 4] = [1e-15, 1e-14, 1e-13, 1e-12];
const SCHUR_RECONSTRUCTION_TOL: f64 = 1e-10;

/// Thin SVD `M = U Σ Vᵀ` with singular values nonincreasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn sigma(&self) -> DenseMatrix {
        DenseMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.singular_values))
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        &self.u * self.sigma() * self.v.transpose()
    }
}

pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("matrix has non-finite entries".into()));
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        let k = 0;
        return Ok(Svd {
            u: DenseMatrix::zeros(m.nrows(), k),
            singular_values: Vec::new(),
            v: DenseMatrix::zeros(m.ncols(), k),
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;
    for eps in SVD_EPS_SCHEDULE {
        let Some(d) = m.clone().try_svd(true, true, eps, MAX_SWEEPS) else { continue };
        let err = d.clone().recompose().map_or(f64::INFINITY, |r| (r - m).amax() / scale);
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, d));
        }
        if err <= SVD_RECONSTRUCTION_TOL {
            break;
        }
    }
    let (_, d) =
        best.ok_or_else(|| Error::Degenerate(format!("SVD did not converge on a {}x{} matrix", m.nrows(), m.ncols())))?;
    let u = d.u.expect("requested U");
    let v = d.v_t.expect("requested Vᵀ").transpose();
    let sv: Vec<f64> = d.singular_values.iter().copied().collect();
    // try_svd sorts, but enforce the ordering contract anyway
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let u = DenseMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DenseMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    let singular_values = order.iter().map(|&k| sv[k].max(0.0)).collect();
    Ok(Svd { u, singular_values, v })
}

/// `ε · max(rows, cols) · σ_max`.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    f64::EPSILON * rows.max(cols) as f64 * sigma_max
}

fn rank_of(singular_values: &[f64], tol: f64) -> usize {
    singular_values.iter().filter(|&&s| s > tol).count()
}

pub fn numerical_rank(m: &DenseMatrix) -> Result<usize> {
    let d = svd(m)?;
    let smax = d.singular_values.first().copied().unwrap_or(0.0);
    Ok(rank_of(&d.singular_values, default_rank_tol(m.nrows(), m.ncols(), smax)))
}

/// Moore–Penrose pseudo-inverse by thresholded SVD inversion. `rank_tol`
/// defaults to [`default_rank_tol`].
pub fn pinv(m: &DenseMatrix, rank_tol: Option<f64>) -> Result<DenseMatrix> {
    let d = svd(m)?;
    let smax = d.singular_values.first().copied().unwrap_or(0.0);
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    let mut out = DenseMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in d.singular_values.iter().enumerate() {
        if s > tol {
            out += d.v.column(k) * d.u.column(k).transpose() / s;
        }
    }
    Ok(out)
}

/// Normwise relative residuals of the four Penrose identities, each
/// Frobenius residual divided by the norms of the factors it multiplies:
/// `‖MXM − M‖ / (‖M‖²‖X‖)`, `‖XMX − X‖ / (‖X‖²‖M‖)`,
/// `‖(MX)ᵀ − MX‖ / (‖M‖‖X‖)`, `‖(XM)ᵀ − XM‖ / (‖M‖‖X‖)`.
///
/// Absolute residuals grow with `‖X‖²` on ill-conditioned inputs even when
/// `X` is exact to rounding, so they cannot be compared against one tolerance.
pub fn penrose_residuals(m: &DenseMatrix, x: &DenseMatrix) -> [f64; 4] {
    let (nm, nx) = (m.norm(), x.norm());
    let rel = |r: f64, scale: f64| if scale > 0.0 { r / scale } else { r };
    let mx = m * x;
    let xm = x * m;
    [
        rel((&mx * m - m).norm(), nm * nm * nx),
        rel((&xm * x - x).norm(), nx * nx * nm),
        rel((mx.transpose() - &mx).norm(), nm * nx),
        rel((xm.transpose() - &xm).norm(), nm * nx),
    ]
}

pub fn densify(a: &CollocationMatrix) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(a.nrows(), a.ncols());
    for j in 0..a.nrows() {
        for (i, v) in a.row(j) {
            d[(j, i)] = v;
        }
    }
    d
}

/// `Λ` as a dense diagonal; frozen indices (zero columns of `A`) get 1 so the
/// matrix stays nonsingular without changing `ΛAᵀA`.
pub fn dense_weights(w: &WeightMatrix) -> DenseMatrix {
    let d: Vec<f64> = (0..w.len()).map(|i| w.weight(i).unwrap_or(1.0)).collect();
    DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))
}

/// Closed-form limit of the uniform iteration from `P⁰`:
/// `(AᵀA)⁺AᵀQ + (I − (AᵀA)⁺AᵀA) P⁰`. With `P⁰ = 0` this is the
/// minimum-norm least-squares solution.
pub fn pinv_solution(a: &DenseMatrix, q: &PointMatrix, p0: &PointMatrix) -> Result<PointMatrix> {
    if q.rows() != a.nrows() || p0.rows() != a.ncols() || q.dim() != p0.dim() {
        return Err(Error::Shape(format!(
            "A is {}x{}, Q has {} rows, P0 has {} rows",
            a.nrows(),
            a.ncols(),
            q.rows(),
            p0.rows()
        )));
    }
    let ata = a.transpose() * a;
    let ata_pinv = pinv(&ata, None)?;
    let projector = &ata_pinv * &ata;
    let n = a.ncols();
    let limit = &ata_pinv * (a.transpose() * q.to_dense()) + (DenseMatrix::identity(n, n) - projector) * p0.to_dense();
    Ok(PointMatrix::from_dense(&limit))
}

/// `‖AᵀA P − AᵀQ‖∞` (max entry).
pub fn normal_residual(a: &DenseMatrix, q: &PointMatrix, p: &PointMatrix) -> f64 {
    let at = a.transpose();
    (&at * a * p.to_dense() - at * q.to_dense()).amax()
}

/// Unique least-squares solution of a full-column-rank system via Cholesky
/// on the normal equations.
pub fn normal_equation_solve(a: &DenseMatrix, q: &PointMatrix) -> Result<PointMatrix> {
    let ata = a.transpose() * a;
    let rhs = a.transpose() * q.to_dense();
    let chol = ata.cholesky().ok_or_else(|| Error::Degenerate("AᵀA is not positive definite".into()))?;
    Ok(PointMatrix::from_dense(&chol.solve(&rhs)))
}

/// `(I − αAᵀA)P + αAᵀQ` computed densely.
pub fn dense_uniform_step(a: &DenseMatrix, q: &PointMatrix, p: &PointMatrix, alpha: f64) -> PointMatrix {
    let at = a.transpose();
    let n = a.ncols();
    let next = (DenseMatrix::identity(n, n) - (&at * a) * alpha) * p.to_dense() + at * q.to_dense() * alpha;
    PointMatrix::from_dense(&next)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralOptions {
    /// Absolute tolerance for the imaginary-part and `[0, 1]` checks.
    pub flag_tol: f64,
    /// Eigenvalues with `|λ| ≤ zero_tol_rel · λ_max` count as zero.
    pub zero_tol_rel: f64,
    /// Largest `n + 1` the oracle will densify.
    pub dense_limit: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { flag_tol: 1e-8, zero_tol_rel: 1e-8, dense_limit: 2000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralFlags {
    /// Eigenvalues of `ΛAᵀA` are real.
    pub real: bool,
    /// Eigenvalues lie in `[0, 1]`.
    pub unit_interval: bool,
    pub real_01: bool,
    /// Number of zero eigenvalues equals the rank deficiency `n₀` of `AᵀA`.
    pub zero_count: bool,
    /// `rank(ΛAᵀA) = rank(AᵀA)`.
    pub rank_match: bool,
}

impl SpectralFlags {
    pub fn all(&self) -> bool {
        self.real_01 && self.zero_count && self.rank_match
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    /// `n + 1`.
    pub size: usize,
    /// rank of `AᵀA`.
    pub rank: usize,
    pub rank_weighted: usize,
    pub n0: usize,
    pub zero_count: usize,
    pub eig_min: f64,
    pub eig_max: f64,
    pub max_imag: f64,
    /// Largest gap between the symmetric and nonsymmetric eigenvalue paths.
    pub path_discrepancy: f64,
    pub flags: SpectralFlags,
    /// Penrose identity residuals of `(AᵀA)⁺`.
    pub penrose_residuals: [f64; 4],
    /// Spectrum of `Λ^{1/2}AᵀAΛ^{1/2}`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Spectrum of `ΛAᵀA` from the general (Schur) path, ascending by real part.
    pub complex_eigenvalues: Vec<ComplexValue>,
    /// Singular values of `AᵀA`, nonincreasing.
    pub singular_values: Vec<f64>,
}

/// Real Schur form of a general square matrix.
pub fn schur(m: &DenseMatrix) -> Result<Schur<f64, nalgebra::Dyn>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for eps in SCHUR_EPS_SCHEDULE {
        let Some(s) = Schur::try_new(m.clone(), eps, MAX_SWEEPS) else { continue };
        let (q, t) = s.clone().unpack();
        if (&q * t * q.transpose() - m).amax() / scale <= SCHUR_RECONSTRUCTION_TOL {
            return Ok(s);
        }
    }
    Err(Error::Degenerate(format!("Schur decomposition did not converge on a {}x{} matrix", m.nrows(), m.ncols())))
}

/// Eigen and rank diagnostics of `ΛAᵀA` against `AᵀA`.
pub fn spectral_report(a: &CollocationMatrix, w: &WeightMatrix, opts: &SpectralOptions) -> Result<SpectralReport> {
    if a.ncols() > opts.dense_limit {
        return Err(Error::DenseLimit { size: a.ncols(), limit: opts.dense_limit });
    }
    if w.len() != a.ncols() {
        return Err(Error::Shape(format!("{} weights for {} columns", w.len(), a.ncols())));
    }
    spectral_report_dense(&densify(a), &dense_weights(w), opts)
}

pub fn spectral_report_dense(a: &DenseMatrix, lambda: &DenseMatrix, opts: &SpectralOptions) -> Result<SpectralReport> {
    let n = a.ncols();
    if n > opts.dense_limit {
        return Err(Error::DenseLimit { size: n, limit: opts.dense_limit });
    }
    let ata = a.transpose() * a;
    let weighted = lambda * &ata;

    let ata_svd = svd(&ata)?;
    let smax = ata_svd.singular_values.first().copied().unwrap_or(0.0);
    let rank = rank_of(&ata_svd.singular_values, default_rank_tol(n, n, smax));
    let w_svd = svd(&weighted)?;
    let wmax = w_svd.singular_values.first().copied().unwrap_or(0.0);
    let rank_weighted = rank_of(&w_svd.singular_values, default_rank_tol(n, n, wmax));
    let n0 = n - rank;

    // similarity transform Λ^{1/2} AᵀA Λ^{1/2}: same spectrum, symmetric
    let sqrt_l = lambda.map_diagonal(f64::sqrt);
    let sym = DenseMatrix::from_diagonal(&sqrt_l) * &ata * DenseMatrix::from_diagonal(&sqrt_l);
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);

    let mut complex: Vec<ComplexValue> =
        schur(&weighted)?.complex_eigenvalues().iter().map(|c| ComplexValue { re: c.re, im: c.im }).collect();
    complex.sort_by(|x, y| x.re.total_cmp(&y.re));
    let max_imag = complex.iter().fold(0.0, |m, c| f64::max(m, c.im.abs()));
    let path_discrepancy = complex.iter().zip(&eigenvalues).fold(0.0, |m, (c, &s)| f64::max(m, (c.re - s).abs()));

    let eig_min = eigenvalues.first().copied().unwrap_or(0.0);
    let eig_max = eigenvalues.last().copied().unwrap_or(0.0);
    let zero_tol = opts.zero_tol_rel * eig_max.abs();
    let zero_count = eigenvalues.iter().filter(|l| l.abs() <= zero_tol).count();

    let tol = opts.flag_tol;
    let in_range = |x: f64| x >= -tol && x <= 1.0 + tol;
    let real = max_imag <= tol;
    let unit_interval = eigenvalues.iter().all(|&l| in_range(l)) && complex.iter().all(|c| in_range(c.re));
    let flags = SpectralFlags {
        real,
        unit_interval,
        real_01: real && unit_interval,
        zero_count: zero_count == n0,
        rank_match: rank_weighted == rank,
    };

    let ata_pinv = pinv(&ata, None)?;
    let penrose_residuals = penrose_residuals(&ata, &ata_pinv);

    Ok(SpectralReport {
        size: n,
        rank,
        rank_weighted,
        n0,
        zero_count,
        eig_min,
        eig_max,
        max_imag,
        path_discrepancy,
        flags,
        penrose_residuals,
        eigenvalues,
        complex_eigenvalues: complex,
        singular_values: ata_svd.singular_values,
    })
}

/// `(AᵀA)⁺(AᵀA)` and how closely it behaves as an orthogonal projector of
/// rank `rank(AᵀA)`.
#[derive(Clone, Debug)]
pub struct ProjectorCheck {
    pub projector: DenseMatrix,
    pub rank: usize,
    /// `‖P² − P‖_F`.
    pub idempotency: f64,
    /// `‖Pᵀ − P‖_F`.
    pub symmetry: f64,
    pub trace: f64,
    /// Eigenvalues within `tol` of one.
    pub ones: usize,
    /// Largest distance of an eigenvalue from `{0, 1}`.
    pub eigen_deviation: f64,
}

impl ProjectorCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.idempotency <= tol
            && self.symmetry <= tol
            && (self.trace - self.rank as f64).abs() <= tol
            && self.eigen_deviation <= tol
            && self.ones == self.rank
    }
}

pub fn projector_check(a: &DenseMatrix) -> Result<ProjectorCheck> {
    const TOL: f64 = 1e-8;
    let ata = a.transpose() * a;
    let rank = numerical_rank(&ata)?;
    let projector = pinv(&ata, None)? * &ata;
    let idempotency = (&projector * &projector - &projector).norm();
    let symmetry = (projector.transpose() - &projector).norm();
    let trace = projector.trace();
    let sym = (&projector + projector.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let eigen_deviation = eig.iter().fold(0.0, |m, &l| f64::max(m, l.abs().min((l - 1.0).abs())));
    let ones = eig.iter().filter(|&&l| (l - 1.0).abs() <= TOL).count();
    Ok(ProjectorCheck { projector, rank, idempotency, symmetry, trace, ones, eigen_deviation })
}
