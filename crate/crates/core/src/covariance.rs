//! Sample covariance, linear Ledoit-Wolf shrinkage, and the covariance
//! estimator that minimises the corrected distance to the SCM.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gradients::RmtDistanceCost;
use crate::linalg::{symmetrize, SpdMatrix};
use crate::optim::{descend, DescentConfig, DescentTrace};
use crate::rmt_distance::check_aspect;

/// `p × n` observations, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(Error::invalid("data matrix has no samples"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data matrix has non-finite entries"));
        }
        Ok(DataMatrix(x))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn n(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Removes the sample mean by a Helmert rotation, giving `n − 1` columns
    /// whose SCM is the unbiased centred covariance.
    pub fn centered(&self) -> Result<DataMatrix> {
        let (p, n) = self.0.shape();
        if n < 2 {
            return Err(Error::invalid("centering needs at least two samples"));
        }
        let mut out = DMatrix::zeros(p, n - 1);
        let mut running = self.0.column(0).into_owned();
        for j in 1..n {
            let jf = j as f64;
            let col = (&running - self.0.column(j) * jf) / (jf * (jf + 1.0)).sqrt();
            out.set_column(j - 1, &col);
            running += self.0.column(j);
        }
        DataMatrix::new(out)
    }
}

/// `(1/n) X Xᵀ`.
pub fn scm(x: &DataMatrix) -> Result<SpdMatrix> {
    if x.n() < x.p() {
        return Err(Error::NotPositiveDefinite);
    }
    SpdMatrix::new(gram(x))
}

fn gram(x: &DataMatrix) -> DMatrix<f64> {
    let m = x.as_matrix();
    symmetrize(&(m * m.transpose() / x.n() as f64))
}

/// Output of [`lw_linear`].
#[derive(Debug, Clone)]
pub struct LwEstimate {
    pub estimate: SpdMatrix,
    /// Weight `ρ ∈ [0, 1]` on the scaled identity.
    pub shrinkage: f64,
    /// Target scale `tr(Ĉ)/p`.
    pub mu: f64,
}

/// `ρ μ I + (1 − ρ) Ĉ` with the consistent intensity estimate
/// `ρ = min(β̄², δ²)/δ²`, `δ² = ‖Ĉ − μI‖²/p`,
/// `β̄² = (1/n²) Σₖ ‖xₖxₖᵀ − Ĉ‖²/p`.
pub fn lw_linear(x: &DataMatrix) -> Result<LwEstimate> {
    let (p, n) = (x.p(), x.n());
    if n < 2 {
        return Err(Error::invalid("linear shrinkage needs at least two samples"));
    }
    let s = gram(x);
    let pf = p as f64;
    let nf = n as f64;
    let mu = s.trace() / pf;
    if !(mu > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let s_norm2 = s.norm_squared();
    let mut dev = s.clone();
    for i in 0..p {
        dev[(i, i)] -= mu;
    }
    let delta2 = dev.norm_squared() / pf;
    // Σₖ ‖xₖxₖᵀ − Ĉ‖² = Σₖ ‖xₖ‖⁴ − n ‖Ĉ‖²
    let fourth: f64 = x.as_matrix().column_iter().map(|c| c.norm_squared().powi(2)).sum();
    let beta2 = ((fourth - nf * s_norm2) / (nf * nf * pf)).max(0.0);

    // Dispersion-free data carries no information beyond the scale.
    let degenerate = beta2 <= 1e-24 * mu * mu || delta2 <= 1e-24 * mu * mu;
    let rho = if degenerate { 1.0 } else { (beta2.min(delta2) / delta2).clamp(0.0, 1.0) };

    let mut est = s * (1.0 - rho);
    for i in 0..p {
        est[(i, i)] += rho * mu;
    }
    Ok(LwEstimate { estimate: SpdMatrix::new(est)?, shrinkage: rho, mu })
}

/// Starting point for [`rmt_cov`].
#[derive(Debug, Clone, Default)]
pub enum CovInit {
    Identity,
    #[default]
    LedoitWolf,
    Given(SpdMatrix),
}

/// Minimises `R ↦ δ̂²(R, Ĉ)` from an initial guess independent of `Ĉ`.
pub fn rmt_cov(x: &DataMatrix, init: &CovInit, cfg: &DescentConfig) -> Result<(SpdMatrix, DescentTrace)> {
    check_aspect(x.p(), x.n())?;
    let chat = scm(x)?;
    let r0 = match init {
        CovInit::Identity => SpdMatrix::identity(x.p()),
        CovInit::LedoitWolf => lw_linear(x)?.estimate,
        CovInit::Given(r) => {
            crate::linalg::check_same_dim(x.p(), r.dim())?;
            r.clone()
        }
    };
    descend(&RmtDistanceCost { chat: &chat, n: x.n() }, r0, cfg)
}
