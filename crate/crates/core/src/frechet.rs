//! Fréchet means: the classical two-step Karcher mean of estimated
//! covariances, and the one-step mean that minimises the average corrected
//! distance to the raw SCMs.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::covariance::{lw_linear, scm, DataMatrix};
use crate::error::{Error, Result};
use crate::gradients::{KarcherCost, RmtMeanCost};
use crate::linalg::{check_same_dim, spd_logm, SpdMatrix};
use crate::optim::{descend, DescentConfig, DescentTrace};
use crate::rmt_distance::check_aspect;

/// Lexicographic order on the entries. Sorting inputs this way fixes the
/// summation order, which makes the means invariant to input permutation.
fn entry_order(a: &SpdMatrix, b: &SpdMatrix) -> Ordering {
    a.as_matrix()
        .iter()
        .zip(b.as_matrix().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub(crate) fn canonical_order(mats: &[SpdMatrix]) -> Vec<SpdMatrix> {
    let mut v = mats.to_vec();
    v.sort_by(entry_order);
    v
}

fn check_family(mats: &[SpdMatrix]) -> Result<usize> {
    let first = mats.first().ok_or_else(|| Error::invalid("empty list of matrices"))?;
    for m in mats {
        check_same_dim(first.dim(), m.dim())?;
    }
    Ok(first.dim())
}

/// Karcher mean of `cs` by gradient descent, started from `init` or the identity.
pub fn classical_mean(cs: &[SpdMatrix], init: Option<&SpdMatrix>, cfg: &DescentConfig) -> Result<(SpdMatrix, DescentTrace)> {
    let p = check_family(cs)?;
    let sorted = canonical_order(cs);
    let r0 = match init {
        Some(r) => {
            check_same_dim(p, r.dim())?;
            r.clone()
        }
        None => SpdMatrix::identity(p),
    };
    descend(&KarcherCost { points: &sorted }, r0, cfg)
}

/// `‖Σₖ logm(G^{-1/2} Cₖ G^{-1/2})‖_F`, zero exactly at the Karcher mean.
pub fn karcher_residual(g: &SpdMatrix, cs: &[SpdMatrix]) -> Result<f64> {
    let mut acc = DMatrix::zeros(g.dim(), g.dim());
    for c in cs {
        check_same_dim(g.dim(), c.dim())?;
        let inner = SpdMatrix::new(g.whiten(c.as_matrix())?)?;
        acc += spd_logm(&inner).as_matrix();
    }
    Ok(acc.norm())
}

/// Starting point for [`rmt_mean`].
#[derive(Debug, Clone, Default)]
pub enum MeanInit {
    #[default]
    Identity,
    /// Classical mean of the Ledoit-Wolf estimates.
    LwMean,
    Given(SpdMatrix),
}

/// Minimises `h(R) = (1/K) Σₖ δ̂²(R, Ĉₖ)` over the SCMs of `xs`.
pub fn rmt_mean(xs: &[DataMatrix], init: &MeanInit, cfg: &DescentConfig) -> Result<(SpdMatrix, DescentTrace)> {
    let first = xs.first().ok_or_else(|| Error::invalid("empty list of data matrices"))?;
    let (p, n) = (first.p(), first.n());
    for x in xs {
        check_same_dim(p, x.p())?;
        check_same_dim(n, x.n())?;
    }
    check_aspect(p, n)?;
    let chats: Vec<_> = xs.iter().map(scm).collect::<Result<_>>()?;
    let r0 = match init {
        MeanInit::Identity => SpdMatrix::identity(p),
        MeanInit::LwMean => {
            let lws: Vec<_> = xs.iter().map(|x| lw_linear(x).map(|l| l.estimate)).collect::<Result<_>>()?;
            classical_mean(&lws, None, &DescentConfig::for_mean())?.0
        }
        MeanInit::Given(r) => {
            check_same_dim(p, r.dim())?;
            r.clone()
        }
    };
    rmt_mean_of_scms(&chats, n, r0, cfg)
}

/// [`rmt_mean`] on precomputed SCMs from `n` samples each.
pub fn rmt_mean_of_scms(chats: &[SpdMatrix], n: usize, r0: SpdMatrix, cfg: &DescentConfig) -> Result<(SpdMatrix, DescentTrace)> {
    let p = check_family(chats)?;
    check_same_dim(p, r0.dim())?;
    check_aspect(p, n)?;
    let sorted = canonical_order(chats);
    descend(&RmtMeanCost { chats: &sorted, n }, r0, cfg)
}
