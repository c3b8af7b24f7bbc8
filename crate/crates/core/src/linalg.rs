//! Symmetric and SPD matrix types and the affine-invariant (Fisher) geometry.
//!
//! Every matrix function goes through [`sym_eig`]: `f(M) = V diag(f(λ)) Vᵀ`.
//! Square roots are the symmetric ones; Cholesky is only used as a cheap
//! positive-definiteness screen on construction.
//!
//! The squared distance carries the `1/(2p)` normalisation:
//! `δ²(C₁, C₂) = (1/2p) Σ log² λᵢ(C₁⁻¹C₂)`.

use std::sync::OnceLock;

use nalgebra::{linalg::SymmetricEigen, Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest admissible `λ_min / λ_max` for an SPD matrix.
pub const SPD_CONDITION_FLOOR: f64 = 1e-12;

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpectralPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(λ)) Vᵀ`, symmetrised.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.dim(), self.values.iter().map(|&l| f(l)));
        self.map_values(&scaled)
    }

    /// `V diag(d) Vᵀ` for an explicit diagonal.
    pub fn map_values(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut vd = self.vectors.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= d[j];
        }
        symmetrize(&(vd * self.vectors.transpose()))
    }
}

/// A symmetric matrix; tangent vectors at SPD points live here.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrises `m` (`(m + mᵀ)/2`) after checking shape and finiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(SymMatrix(symmetrize(&m)))
    }

    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        SymMatrix(m)
    }

    pub fn zeros(p: usize) -> Self {
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 + &other.0))
    }
}

/// A symmetric positive definite matrix.
///
/// The spectrum is computed once on construction; square root, inverse
/// square root and inverse are derived from it lazily and cached.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    spectrum: SpectralPair,
    sqrt: OnceLock<DMatrix<f64>>,
    inv_sqrt: OnceLock<DMatrix<f64>>,
    inv: OnceLock<DMatrix<f64>>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

impl SpdMatrix {
    /// Validates and wraps `m`. The matrix is symmetrised on ingest; it is
    /// rejected when Cholesky fails or `λ_min ≤ 1e-12 λ_max`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let mat = symmetrize(&m);
        if Cholesky::new(mat.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let spectrum = eig_sorted(mat.clone())?;
        Self::with_spectrum(mat, spectrum)
    }

    /// Builds `V diag(λ) Vᵀ` from a known spectrum without re-decomposing.
    pub(crate) fn from_spectrum(spectrum: SpectralPair) -> Result<Self> {
        let mat = spectrum.map(|l| l);
        Self::with_spectrum(mat, spectrum)
    }

    fn with_spectrum(mat: DMatrix<f64>, spectrum: SpectralPair) -> Result<Self> {
        let p = spectrum.dim();
        if p == 0 {
            return Err(Error::invalid("empty matrix"));
        }
        let lo = spectrum.values[0];
        let hi = spectrum.values[p - 1];
        if !(lo > 0.0) || lo <= SPD_CONDITION_FLOOR * hi {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(SpdMatrix {
            mat,
            spectrum,
            sqrt: OnceLock::new(),
            inv_sqrt: OnceLock::new(),
            inv: OnceLock::new(),
        })
    }

    pub fn identity(p: usize) -> Self {
        let spectrum = SpectralPair {
            values: DVector::from_element(p, 1.0),
            vectors: DMatrix::identity(p, p),
        };
        SpdMatrix {
            mat: DMatrix::identity(p, p),
            spectrum,
            sqrt: OnceLock::new(),
            inv_sqrt: OnceLock::new(),
            inv: OnceLock::new(),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn spectrum(&self) -> &SpectralPair {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectrum.values
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Symmetric square root `R^{1/2}`.
    pub fn sqrt(&self) -> &DMatrix<f64> {
        self.sqrt.get_or_init(|| self.spectrum.map(f64::sqrt))
    }

    /// `R^{-1/2}`.
    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        self.inv_sqrt
            .get_or_init(|| self.spectrum.map(|l| 1.0 / l.sqrt()))
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        self.inv.get_or_init(|| self.spectrum.map(|l| 1.0 / l))
    }

    /// `Aᵀ R A` for a square invertible `A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMatrix> {
        check_same_dim(self.dim(), a.nrows())?;
        SpdMatrix::new(a.transpose() * &self.mat * a)
    }

    /// `W M W` with `W = R^{-1/2}`: the whitened form of `m` at this point.
    pub fn whiten(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_same_dim(self.dim(), m.nrows())?;
        let w = self.inv_sqrt();
        Ok(symmetrize(&(w * m * w)))
    }

    /// `R^{1/2} M R^{1/2}`.
    pub fn unwhiten(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_same_dim(self.dim(), m.nrows())?;
        let s = self.sqrt();
        Ok(symmetrize(&(s * m * s)))
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eig(m: &SymMatrix) -> Result<SpectralPair> {
    eig_sorted(m.0.clone())
}

pub(crate) fn eig_sorted(m: DMatrix<f64>) -> Result<SpectralPair> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    let p = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::invalid("eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralPair { values, vectors })
}

/// Eigenvalues only, ascending.
pub(crate) fn eigenvalues_sorted(m: DMatrix<f64>) -> Result<DVector<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(vals))
}

pub fn spd_logm(c: &SpdMatrix) -> SymMatrix {
    SymMatrix(c.spectrum.map(f64::ln))
}

pub fn spd_expm(s: &SymMatrix) -> Result<SpdMatrix> {
    let spec = sym_eig(s)?;
    let values = spec.values.map(f64::exp);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix exponential overflowed"));
    }
    SpdMatrix::from_spectrum(SpectralPair {
        values,
        vectors: spec.vectors,
    })
}

pub fn spd_sqrtm(c: &SpdMatrix) -> SpdMatrix {
    SpdMatrix::from_spectrum(SpectralPair {
        values: c.spectrum.values.map(f64::sqrt),
        vectors: c.spectrum.vectors.clone(),
    })
    .expect("square root of an SPD matrix is SPD")
}

pub fn spd_inv_sqrtm(c: &SpdMatrix) -> SpdMatrix {
    let p = c.dim();
    // reversed so the stored values stay ascending
    let values = DVector::from_iterator(p, (0..p).rev().map(|i| 1.0 / c.spectrum.values[i].sqrt()));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, src) in (0..p).rev().enumerate() {
        vectors.set_column(dst, &c.spectrum.vectors.column(src));
    }
    SpdMatrix::from_spectrum(SpectralPair { values, vectors })
        .expect("inverse square root of an SPD matrix is SPD")
}

/// Eigenvalues of `C₁^{-1/2} C₂ C₁^{-1/2}`, i.e. of `C₁⁻¹C₂`, ascending.
pub fn relative_eigenvalues(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<DVector<f64>> {
    check_same_dim(c1.dim(), c2.dim())?;
    let vals = eigenvalues_sorted(c1.whiten(c2.as_matrix())?)?;
    if vals.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(vals)
}

/// Squared Fisher distance `(1/2p) Σ log² λᵢ(C₁⁻¹C₂)`.
pub fn fisher_dist2(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<f64> {
    let vals = relative_eigenvalues(c1, c2)?;
    let p = vals.len() as f64;
    Ok(vals.iter().map(|l| l.ln().powi(2)).sum::<f64>() / (2.0 * p))
}

/// Fisher metric `tr(R⁻¹ ξ R⁻¹ η)`.
pub fn fisher_inner(r: &SpdMatrix, xi: &SymMatrix, eta: &SymMatrix) -> Result<f64> {
    check_same_dim(r.dim(), xi.dim())?;
    check_same_dim(r.dim(), eta.dim())?;
    let ri = r.inverse();
    let a = ri * &xi.0;
    let b = ri * &eta.0;
    Ok(a.component_mul(&b.transpose()).sum())
}

pub fn fisher_norm(r: &SpdMatrix, xi: &SymMatrix) -> Result<f64> {
    Ok(fisher_inner(r, xi, xi)?.max(0.0).sqrt())
}

/// Second-order retraction `R + ξ + ½ ξ R⁻¹ ξ`.
pub fn retract(r: &SpdMatrix, xi: &SymMatrix) -> Result<SpdMatrix> {
    check_same_dim(r.dim(), xi.dim())?;
    let x = &xi.0;
    let m = r.as_matrix() + x + (x * r.inverse() * x) * 0.5;
    SpdMatrix::new(m).map_err(|e| match e {
        Error::NotPositiveDefinite | Error::InvalidInput(_) => Error::RetractionBreakdown,
        other => other,
    })
}

/// Riemannian exponential `R^{1/2} expm(R^{-1/2} ξ R^{-1/2}) R^{1/2}`.
pub fn exp_map(r: &SpdMatrix, xi: &SymMatrix) -> Result<SpdMatrix> {
    check_same_dim(r.dim(), xi.dim())?;
    let inner = SymMatrix(r.whiten(&xi.0)?);
    let e = spd_expm(&inner)?;
    SpdMatrix::new(r.unwhiten(e.as_matrix())?)
}

/// Closed-form Fréchet mean of two SPD matrices, `C₁ # C₂`.
pub fn geometric_mean2(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<SpdMatrix> {
    check_same_dim(c1.dim(), c2.dim())?;
    let inner = SpdMatrix::new(c1.whiten(c2.as_matrix())?)?;
    SpdMatrix::new(c1.unwhiten(inner.sqrt())?)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn check_same_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    Ok(())
}
