//! Random-matrix corrected squared Fisher distance between a deterministic
//! SPD matrix `R` and a sample covariance `Ĉ` built from `n` samples.
//!
//! With `λ` the eigenvalues of `R⁻¹Ĉ` and `ζ` those of `Λ − √λ√λᵀ/n`, `c = p/n`:
//!
//! ```text
//! δ̂²(R, Ĉ) = (1/2p) Σ log²λᵢ + (1/p) Σ log λᵢ
//!           − (λ − ζ)ᵀ [ (1/p) Q 1 + ((1−c)/c) q ]
//!           − ((1−c)/2c) log²(1−c)
//! ```
//!
//! with `qᵢ = log λᵢ / λᵢ` and `Q` the divided-difference matrix built by
//! [`q_matrix`]. The value is a consistent estimate of `δ²(R, C)` as long as
//! `R` does not depend on the data behind `Ĉ`; it can be negative.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{eig_sorted, eigenvalues_sorted, SpdMatrix, SpectralPair};

/// Below this relative separation `|λᵢ − λⱼ| / λᵢ` the closed forms of
/// `Q`, `B` and `C` are replaced by their power series around `λᵢ = λⱼ`.
///
/// The closed forms cancel catastrophically (`Q` loses roughly
/// `log10(1/u)` digits, `B` and `C` twice that), so the series takes over well
/// before the separation reaches machine precision.
pub const SERIES_RADIUS: f64 = 0.05;
const SERIES_TERMS: i32 = 16;

/// Spectral quantities shared by the corrected distance and its gradient.
#[derive(Debug, Clone)]
pub struct RmtSpectralContext {
    lambda: DVector<f64>,
    zeta: DVector<f64>,
    v: DMatrix<f64>,
    n: usize,
}

impl RmtSpectralContext {
    /// Builds the context from the eigenvalues `λ` of `R⁻¹Ĉ` (any order;
    /// they are sorted ascending).
    pub fn from_eigenvalues(lambda: &DVector<f64>, n: usize) -> Result<Self> {
        let lambda = sorted_positive(lambda, n)?;
        let pert = perturbed(&lambda, n);
        let SpectralPair { values, vectors } = eig_sorted(pert)?;
        Ok(RmtSpectralContext {
            lambda,
            zeta: values,
            v: vectors,
            n,
        })
    }

    /// Eigenvalues of `R⁻¹Ĉ`, ascending.
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// Eigenvalues of `Λ − √λ√λᵀ/n`, ascending.
    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }

    /// Eigenvectors matching [`zeta`](Self::zeta).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    /// Aspect ratio `c = p/n`.
    pub fn c(&self) -> f64 {
        self.p() as f64 / self.n as f64
    }

    /// The corrected squared distance for this spectrum.
    pub fn distance(&self) -> f64 {
        corrected_value(&self.lambda, &self.zeta, self.n)
    }
}

/// Context for the pair `(R, Ĉ)`; `λ` comes from `R^{-1/2} Ĉ R^{-1/2}`.
pub fn spectral_context(r: &SpdMatrix, chat: &SpdMatrix, n: usize) -> Result<RmtSpectralContext> {
    check_aspect(r.dim(), n)?;
    let pair = whitened_spectrum(r, chat)?;
    RmtSpectralContext::from_eigenvalues(&pair.values, n)
}

/// `R^{-1/2} Ĉ R^{-1/2} = U Λ Uᵀ`, eigenvalues ascending.
pub(crate) fn whitened_spectrum(r: &SpdMatrix, chat: &SpdMatrix) -> Result<SpectralPair> {
    let pair = eig_sorted(r.whiten(chat.as_matrix())?)?;
    if !(pair.values[0] > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(pair)
}

/// `δ̂²(R, Ĉ)` for an SCM built from `n` samples.
pub fn rmt_dist2(r: &SpdMatrix, chat: &SpdMatrix, n: usize) -> Result<f64> {
    check_aspect(r.dim(), n)?;
    if r.dim() != chat.dim() {
        return Err(Error::DimMismatch {
            expected: r.dim(),
            found: chat.dim(),
        });
    }
    let lambda = eigenvalues_sorted(r.whiten(chat.as_matrix())?)?;
    if !(lambda[0] > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    rmt_dist2_from_eigenvalues(&lambda, n)
}

/// The corrected distance as a function of the eigenvalues `λ` alone.
pub fn rmt_dist2_from_eigenvalues(lambda: &DVector<f64>, n: usize) -> Result<f64> {
    let lambda = sorted_positive(lambda, n)?;
    let zeta = eigenvalues_sorted(perturbed(&lambda, n))?;
    Ok(corrected_value(&lambda, &zeta, n))
}

fn corrected_value(lambda: &DVector<f64>, zeta: &DVector<f64>, n: usize) -> f64 {
    let p = lambda.len();
    let pf = p as f64;
    let c = pf / n as f64;
    let k = (1.0 - c) / c;
    let mut value = 0.0;
    for i in 0..p {
        let l = lambda[i];
        let ll = l.ln();
        let row: f64 = (0..p).map(|j| q_entry(l, lambda[j])).sum();
        let weight = row / pf + k * ll / l;
        value += ll * ll / (2.0 * pf) + ll / pf - (l - zeta[i]) * weight;
    }
    value - k / 2.0 * (1.0 - c).ln().powi(2)
}

/// `Qᵢⱼ = [λᵢ log(λᵢ/λⱼ) − (λᵢ − λⱼ)] / (λᵢ − λⱼ)²`, `Qᵢᵢ = 1/(2λᵢ)`.
pub fn q_matrix(lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_positive(lambda)?;
    let p = lambda.len();
    Ok(DMatrix::from_fn(p, p, |i, j| q_entry(lambda[i], lambda[j])))
}

/// `qᵢ = log λᵢ / λᵢ`.
pub fn q_vector(lambda: &DVector<f64>) -> Result<DVector<f64>> {
    check_positive(lambda)?;
    Ok(lambda.map(|l| l.ln() / l))
}

// Writing u = 1 − λⱼ/λᵢ, Q(λᵢ, λⱼ) = φ(u)/λᵢ with φ(u) = Σₖ uᵏ/(k+2).
fn phi_series(u: f64) -> (f64, f64) {
    let mut phi = 0.0;
    let mut dphi = 0.0;
    let mut pow = 1.0; // u^k
    let mut pow_prev = 0.0; // u^(k-1)
    for k in 0..SERIES_TERMS {
        let kf = k as f64;
        phi += pow / (kf + 2.0);
        if k > 0 {
            dphi += kf * pow_prev / (kf + 2.0);
        }
        pow_prev = pow;
        pow *= u;
    }
    (phi, dphi)
}

/// One entry of `Q`; the diagonal is the `i = j` limit.
pub(crate) fn q_entry(li: f64, lj: f64) -> f64 {
    let u = (li - lj) / li;
    if u.abs() <= SERIES_RADIUS {
        return phi_series(u).0 / li;
    }
    let d = li - lj;
    (li * (li / lj).ln() - d) / (d * d)
}

/// Partial derivatives `(∂Qᵢⱼ/∂λᵢ, ∂Qᵢⱼ/∂λⱼ)` of an off-diagonal entry,
/// continued smoothly to `λᵢ = λⱼ`.
pub(crate) fn q_partials(li: f64, lj: f64) -> (f64, f64) {
    let u = (li - lj) / li;
    if u.abs() <= SERIES_RADIUS {
        let (phi, dphi) = phi_series(u);
        let l2 = li * li;
        return ((-phi + (1.0 - u) * dphi) / l2, -dphi / l2);
    }
    let d = li - lj;
    let log_ratio = (li / lj).ln();
    let d2 = d * d;
    let d3 = d2 * d;
    let wrt_i = -(li + lj) * log_ratio / d3 + 2.0 / d2;
    let wrt_j = -1.0 / (lj * d) + 2.0 * li * log_ratio / d3 - 2.0 / d2;
    (wrt_i, wrt_j)
}

/// `Λ − √λ√λᵀ / n`.
pub(crate) fn perturbed(lambda: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let p = lambda.len();
    let s = lambda.map(f64::sqrt);
    let nf = n as f64;
    DMatrix::from_fn(p, p, |i, j| {
        let base = if i == j { lambda[i] } else { 0.0 };
        base - s[i] * s[j] / nf
    })
}

pub(crate) fn check_aspect(p: usize, n: usize) -> Result<()> {
    if p >= n {
        return Err(Error::AspectRatioOutOfRange { p, n });
    }
    Ok(())
}

fn check_positive(lambda: &DVector<f64>) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("eigenvalues must be finite and positive"));
    }
    Ok(())
}

fn sorted_positive(lambda: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    check_positive(lambda)?;
    check_aspect(lambda.len(), n)?;
    let mut v: Vec<f64> = lambda.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(v))
}
