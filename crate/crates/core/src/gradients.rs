//! Riemannian gradients of the corrected distance, of the corrected mean
//! cost and of the classical Karcher cost.
//!
//! All costs here are functions of the spectrum `Λ` of `R^{-1/2} Ĉ R^{-1/2}`.
//! For `f(R) = g(Λ)` with `R^{-1/2} Ĉ R^{-1/2} = U Λ Uᵀ` the Fisher gradient is
//!
//! ```text
//! ∇f(R) = −R^{1/2} U Λ⁻¹ ∇g(Λ) Uᵀ R^{1/2}
//! ```
//!
//! where `∇g(Λ) = Λ² ∂g/∂λ` is the gradient on positive diagonal matrices
//! under the same metric.
//!
//! For the corrected distance, with `w = (1/p) Q 1 + ((1−c)/c) q`:
//!
//! ```text
//! ∂g/∂λ = (1/p)(log λ + 1)/λ − w + diag(A V diag(w) Vᵀ)
//!         − (1/p)[(λ − ζ) ⊙ B1 + Cᵀ(λ − ζ)]
//!         − ((1−c)/c)(λ − ζ) ⊙ (1 − log λ)/λ²
//! ```
//!
//! where `Aᵢⱼ = δᵢⱼ − (1/n)√(λⱼ/λᵢ)` carries the derivative of `ζ`,
//! `Bᵢⱼ = ∂Qᵢⱼ/∂λᵢ` and `Cᵢⱼ = ∂Qᵢⱼ/∂λⱼ` off the diagonal, and
//! `Bᵢᵢ = −1/λᵢ²`, `Cᵢᵢ = 1/(2λᵢ²)` split `dQᵢᵢ`. Signs are pinned by the
//! finite-difference checks in [`crate::gradcheck`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_same_dim, fisher_dist2, SpdMatrix, SymMatrix};
use crate::optim::Objective;
use crate::rmt_distance::{
    check_aspect, q_entry, q_partials, rmt_dist2, whitened_spectrum, RmtSpectralContext,
};

/// Everything needed to evaluate `∇g(Λ)` for the corrected distance.
#[derive(Debug, Clone)]
pub struct GradWorkspace {
    ctx: RmtSpectralContext,
    /// Diagonal of `Δ = diag((1/p) Q 1 + ((1−c)/c) q)`.
    delta: DVector<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl GradWorkspace {
    pub fn new(ctx: RmtSpectralContext) -> Self {
        let lam = ctx.lambda();
        let p = ctx.p();
        let pf = p as f64;
        let nf = ctx.n() as f64;
        let k = (1.0 - ctx.c()) / ctx.c();

        let delta = DVector::from_fn(p, |i, _| {
            let row: f64 = (0..p).map(|j| q_entry(lam[i], lam[j])).sum();
            row / pf + k * lam[i].ln() / lam[i]
        });
        let a = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0 - 1.0 / nf
            } else {
                -(lam[j] / lam[i]).sqrt() / nf
            }
        });
        let mut b = DMatrix::zeros(p, p);
        let mut c = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    let l2 = lam[i] * lam[i];
                    b[(i, i)] = -1.0 / l2;
                    c[(i, i)] = 0.5 / l2;
                } else {
                    let (bij, cij) = q_partials(lam[i], lam[j]);
                    b[(i, j)] = bij;
                    c[(i, j)] = cij;
                }
            }
        }
        GradWorkspace { ctx, delta, a, b, c }
    }

    pub fn context(&self) -> &RmtSpectralContext {
        &self.ctx
    }

    pub fn delta(&self) -> &DVector<f64> {
        &self.delta
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c_matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Euclidean partials `∂g/∂λ`.
    pub fn partials(&self) -> DVector<f64> {
        let lam = self.ctx.lambda();
        let zeta = self.ctx.zeta();
        let v = self.ctx.v();
        let p = self.ctx.p();
        let pf = p as f64;
        let k = (1.0 - self.ctx.c()) / self.ctx.c();

        let gap = lam - zeta;
        // diag(A V Δ Vᵀ)
        let mut vd = v.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= self.delta[j];
        }
        let vdv = vd * v.transpose();
        let b_rows = self.b.column_sum();
        let c_gap = self.c.transpose() * &gap;

        DVector::from_fn(p, |i, _| {
            let l = lam[i];
            let ll = l.ln();
            let a_vdv: f64 = (0..p).map(|j| self.a[(i, j)] * vdv[(j, i)]).sum();
            (ll + 1.0) / (pf * l) - self.delta[i] + a_vdv
                - (gap[i] * b_rows[i] + c_gap[i]) / pf
                - k * gap[i] * (1.0 - ll) / (l * l)
        })
    }

    /// `∇g(Λ) = Λ² ∂g/∂λ` (the diagonal).
    pub fn eigen_gradient(&self) -> DVector<f64> {
        let lam = self.ctx.lambda();
        self.partials().component_mul(&lam.component_mul(lam))
    }
}

/// `∇g(Λ)` of the corrected distance, returned as the diagonal vector.
pub fn grad_g_rmt(ctx: &RmtSpectralContext) -> DVector<f64> {
    GradWorkspace::new(ctx.clone()).eigen_gradient()
}

/// `U diag(d) Uᵀ` accumulated into `acc`.
fn accumulate_sandwich(acc: &mut DMatrix<f64>, u: &DMatrix<f64>, d: &DVector<f64>, weight: f64) {
    let mut ud = u.clone();
    for (j, mut col) in ud.column_iter_mut().enumerate() {
        col *= d[j] * weight;
    }
    acc.gemm(1.0, &ud, &u.transpose(), 1.0);
}

/// `Λ⁻¹ ∇g(Λ) = λ ⊙ ∂g/∂λ` for the corrected distance, with `U`.
fn rmt_pullback_terms(r: &SpdMatrix, chat: &SpdMatrix, n: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_same_dim(r.dim(), chat.dim())?;
    let pair = whitened_spectrum(r, chat)?;
    let ctx = RmtSpectralContext::from_eigenvalues(&pair.values, n)?;
    let ws = GradWorkspace::new(ctx);
    let d = ws.partials().component_mul(ws.context().lambda());
    Ok((pair.vectors, d))
}

fn finish(r: &SpdMatrix, inner: DMatrix<f64>) -> Result<SymMatrix> {
    let g = r.unwhiten(&inner)?;
    Ok(SymMatrix::from_symmetric_unchecked(-g))
}

/// Fisher gradient of `R ↦ δ̂²(R, Ĉ)`.
pub fn grad_f_rmt(r: &SpdMatrix, chat: &SpdMatrix, n: usize) -> Result<SymMatrix> {
    check_aspect(r.dim(), n)?;
    let (u, d) = rmt_pullback_terms(r, chat, n)?;
    let mut inner = DMatrix::zeros(r.dim(), r.dim());
    accumulate_sandwich(&mut inner, &u, &d, 1.0);
    finish(r, inner)
}

/// Fisher gradient of `h(R) = (1/K) Σₖ δ̂²(R, Ĉₖ)`.
pub fn grad_h_mean(r: &SpdMatrix, chats: &[SpdMatrix], n: usize) -> Result<SymMatrix> {
    if chats.is_empty() {
        return Err(Error::invalid("empty list of covariance matrices"));
    }
    check_aspect(r.dim(), n)?;
    let weight = 1.0 / chats.len() as f64;
    let mut inner = DMatrix::zeros(r.dim(), r.dim());
    for chat in chats {
        let (u, d) = rmt_pullback_terms(r, chat, n)?;
        accumulate_sandwich(&mut inner, &u, &d, weight);
    }
    finish(r, inner)
}

/// Fisher gradient of the classical cost `(1/K) Σₖ δ²(R, Cₖ)`:
/// `−(1/Kp) Σₖ R^{1/2} logm(R^{-1/2} Cₖ R^{-1/2}) R^{1/2}`.
pub fn grad_classical_mean(r: &SpdMatrix, cs: &[SpdMatrix]) -> Result<SymMatrix> {
    if cs.is_empty() {
        return Err(Error::invalid("empty list of covariance matrices"));
    }
    let p = r.dim() as f64;
    let weight = 1.0 / (cs.len() as f64 * p);
    let mut inner = DMatrix::zeros(r.dim(), r.dim());
    for c in cs {
        check_same_dim(r.dim(), c.dim())?;
        let pair = whitened_spectrum(r, c)?;
        let d = pair.values.map(f64::ln);
        accumulate_sandwich(&mut inner, &pair.vectors, &d, weight);
    }
    finish(r, inner)
}

/// `R ↦ δ̂²(R, Ĉ)`, the cost minimised by the corrected covariance estimator.
#[derive(Debug, Clone, Copy)]
pub struct RmtDistanceCost<'a> {
    pub chat: &'a SpdMatrix,
    pub n: usize,
}

impl Objective for RmtDistanceCost<'_> {
    fn cost(&self, r: &SpdMatrix) -> Result<f64> {
        rmt_dist2(r, self.chat, self.n)
    }

    fn gradient(&self, r: &SpdMatrix) -> Result<SymMatrix> {
        grad_f_rmt(r, self.chat, self.n)
    }
}

/// `h(R) = (1/K) Σₖ δ̂²(R, Ĉₖ)`.
#[derive(Debug, Clone, Copy)]
pub struct RmtMeanCost<'a> {
    pub chats: &'a [SpdMatrix],
    pub n: usize,
}

impl Objective for RmtMeanCost<'_> {
    fn cost(&self, r: &SpdMatrix) -> Result<f64> {
        if self.chats.is_empty() {
            return Err(Error::invalid("empty list of covariance matrices"));
        }
        let mut total = 0.0;
        for chat in self.chats {
            total += rmt_dist2(r, chat, self.n)?;
        }
        Ok(total / self.chats.len() as f64)
    }

    fn gradient(&self, r: &SpdMatrix) -> Result<SymMatrix> {
        grad_h_mean(r, self.chats, self.n)
    }
}

/// Classical Karcher cost `(1/K) Σₖ δ²(R, Cₖ)`.
#[derive(Debug, Clone, Copy)]
pub struct KarcherCost<'a> {
    pub points: &'a [SpdMatrix],
}

impl Objective for KarcherCost<'_> {
    fn cost(&self, r: &SpdMatrix) -> Result<f64> {
        if self.points.is_empty() {
            return Err(Error::invalid("empty list of covariance matrices"));
        }
        let mut total = 0.0;
        for c in self.points {
            total += fisher_dist2(r, c)?;
        }
        Ok(total / self.points.len() as f64)
    }

    fn gradient(&self, r: &SpdMatrix) -> Result<SymMatrix> {
        grad_classical_mean(r, self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{directional_fd, eigen_fd, relative_error};
    use crate::linalg::{fisher_inner, geometric_mean2, spd_logm};
    use crate::rmt_distance::rmt_dist2_from_eigenvalues;
    use crate::testutil::{random_invertible, random_spd_matrix, random_sym, rng};
    use rand::Rng;

    fn random_lambda(p: usize, r: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(p, |_, _| (r.random::<f64>() * 4.0 - 2.0).exp())
    }

    #[test]
    fn eigen_gradient_matches_finite_differences() {
        let mut r = rng(21);
        for &(p, n) in &[(8usize, 32usize), (2, 5), (4, 9), (16, 40)] {
            for _ in 0..5 {
                let lam = random_lambda(p, &mut r);
                let ctx = RmtSpectralContext::from_eigenvalues(&lam, n).unwrap();
                let grad = grad_g_rmt(&ctx);
                let lam = ctx.lambda().clone();
                for _ in 0..20 {
                    let dir = DVector::from_fn(p, |_, _| r.random::<f64>() - 0.5);
                    let fd = eigen_fd(|l| rmt_dist2_from_eigenvalues(l, n), &lam, &dir, 1e-6).unwrap();
                    // ⟨∇g, ξ⟩_Λ = Σ ∇gᵢ ξᵢ / λᵢ²
                    let an: f64 = (0..p).map(|i| grad[i] * dir[i] / (lam[i] * lam[i])).sum();
                    assert!(relative_error(an, fd) <= 1e-5, "p={p}: {an} vs {fd}");
                }
            }
        }
    }

    /// `∂g/∂λ` assembled from the workspace with the alternative sign and
    /// sandwich conventions, to show they disagree with finite differences.
    fn variant_partials(ws: &GradWorkspace, sandwich_sign: f64, right: &DMatrix<f64>, flipped_bc: bool) -> DVector<f64> {
        let ctx = ws.context();
        let (lam, zeta, v) = (ctx.lambda(), ctx.zeta(), ctx.v());
        let p = ctx.p();
        let pf = p as f64;
        let k = (1.0 - ctx.c()) / ctx.c();
        let mut b = ws.b().clone();
        let mut c = ws.c_matrix().clone();
        if flipped_bc {
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        let d = lam[i] - lam[j];
                        b[(i, j)] -= 4.0 / (d * d);
                        c[(i, j)] += 2.0 / (lam[j] * d);
                    }
                }
            }
        }
        let sandwich = ws.a() * v * DMatrix::from_diagonal(ws.delta()) * right.transpose();
        let gap = lam - zeta;
        let b1 = b.column_sum();
        let cg = c.transpose() * &gap;
        DVector::from_fn(p, |i, _| {
            let l = lam[i];
            (l.ln() + 1.0) / (pf * l) - ws.delta()[i] + sandwich_sign * sandwich[(i, i)]
                - (gap[i] * b1[i] + cg[i]) / pf
                - k * gap[i] * (1.0 - l.ln()) / (l * l)
        })
    }

    #[test]
    fn sign_variants_fail_finite_differences() {
        let mut r = rng(28);
        let p = 8;
        let n = 32;
        let lam = random_lambda(p, &mut r);
        let ws = GradWorkspace::new(RmtSpectralContext::from_eigenvalues(&lam, n).unwrap());
        let lam = ws.context().lambda().clone();
        let v = ws.context().v().clone();
        let worst = |partials: &DVector<f64>, r: &mut rand_chacha::ChaCha8Rng| {
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let dir = DVector::from_fn(p, |_, _| r.random::<f64>() - 0.5);
                let fd = eigen_fd(|l| rmt_dist2_from_eigenvalues(l, n), &lam, &dir, 1e-6).unwrap();
                worst = worst.max(relative_error(partials.dot(&dir), fd));
            }
            worst
        };
        // the sign conventions used here
        assert!(worst(&variant_partials(&ws, 1.0, &v, false), &mut r) <= 1e-5);
        assert!((variant_partials(&ws, 1.0, &v, false) - ws.partials()).norm() <= 1e-10 * ws.partials().norm());
        // −diag(A V Δ Vᵀ) with B and C sign-flipped
        assert!(worst(&variant_partials(&ws, -1.0, &v, true), &mut r) > 1e-2);
        // −diag(A V Δ Aᵀ)
        assert!(worst(&variant_partials(&ws, -1.0, ws.a(), true), &mut r) > 1e-2);
        // each correction is needed on its own
        assert!(worst(&variant_partials(&ws, -1.0, &v, false), &mut r) > 1e-2);
        assert!(worst(&variant_partials(&ws, 1.0, &v, true), &mut r) > 1e-2);
        assert!(worst(&variant_partials(&ws, 1.0, ws.a(), false), &mut r) > 1e-2);
    }

    #[test]
    fn scalar_gradient_matches_derivative() {
        // p = 1: g(λ) closed form, differentiated numerically with a wide stencil
        let n = 10;
        for &l in &[0.3, 1.0, 2.7] {
            let lam = DVector::from_vec(vec![l]);
            let ctx = RmtSpectralContext::from_eigenvalues(&lam, n).unwrap();
            let grad = grad_g_rmt(&ctx)[0];
            let g = |x: f64| {
                let c = 0.1;
                let zeta = x * (1.0 - 1.0 / n as f64);
                let w = 1.0 / (2.0 * x) + (1.0 - c) / c * x.ln() / x;
                x.ln().powi(2) / 2.0 + x.ln() - (x - zeta) * w - (1.0 - c) / (2.0 * c) * (1.0 - c).ln().powi(2)
            };
            let h = 1e-5;
            let fd = (-g(l + 2.0 * h) + 8.0 * g(l + h) - 8.0 * g(l - h) + g(l - 2.0 * h)) / (12.0 * h);
            assert!((grad - l * l * fd).abs() <= 1e-7 * (1.0 + grad.abs()));
        }
    }

    #[test]
    fn gradient_vanishes_near_unit_spectrum_in_large_n_limit() {
        // For a separated spectrum the correction fades like 1/n and ∇g tends
        // to the classical λ log λ / p, which is small near λ = 1.
        let lam = DVector::from_fn(5, |i, _| 1.0 + 1e-3 * i as f64);
        let grad = grad_g_rmt(&RmtSpectralContext::from_eigenvalues(&lam, 1_000_000_000).unwrap());
        let classical = lam.map(|l| l * l.ln() / 5.0);
        assert!((&grad - &classical).norm() < 1e-5, "{grad}");
        assert!(grad.norm() < 2e-3);
    }

    #[test]
    fn exact_ties_are_a_kink() {
        // With tied eigenvalues the rank-one downdate lands on a single ζ, so
        // the limit above does not hold at λ = 1 exactly.
        let lam = DVector::from_element(5, 1.0);
        let grad = grad_g_rmt(&RmtSpectralContext::from_eigenvalues(&lam, 1_000_000).unwrap());
        assert!((grad[0] + 0.8).abs() < 1e-4 && (grad[4] - 0.2).abs() < 1e-4, "{grad}");
    }

    #[test]
    fn workspace_invariants() {
        let lam = DVector::from_vec(vec![0.5, 1.0, 1.0, 3.0]);
        let ctx = RmtSpectralContext::from_eigenvalues(&lam, 20).unwrap();
        let ws = GradWorkspace::new(ctx);
        let l = ws.context().lambda().clone();
        for i in 0..4 {
            assert_eq!(ws.a()[(i, i)], 1.0 - 1.0 / 20.0);
            assert_eq!(ws.b()[(i, i)], -1.0 / (l[i] * l[i]));
            assert_eq!(ws.c_matrix()[(i, i)], 0.5 / (l[i] * l[i]));
            for j in 0..4 {
                if i != j {
                    assert!((ws.a()[(i, j)] + (l[j] / l[i]).sqrt() / 20.0).abs() < 1e-16);
                }
            }
        }
        assert!(ws.b().iter().chain(ws.c_matrix().iter()).all(|v| v.is_finite()));
        assert!(ws.eigen_gradient().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn manifold_gradient_is_symmetric_and_matches_fd() {
        let mut r = rng(22);
        let base = random_spd_matrix(8, 20.0, &mut r);
        let chat = random_spd_matrix(8, 20.0, &mut r);
        let g = grad_f_rmt(&base, &chat, 32).unwrap();
        let m = g.as_matrix();
        assert!((m - m.transpose()).norm() <= 1e-12 * m.norm());
        for _ in 0..20 {
            let xi = random_sym(8, &mut r);
            let an = fisher_inner(&base, &g, &xi).unwrap();
            let fd = directional_fd(|x| rmt_dist2(x, &chat, 32), &base, &xi, 1e-6).unwrap();
            assert!(relative_error(an, fd) <= 1e-4, "{an} vs {fd}");
        }
    }

    #[test]
    fn classical_chain_rule_reproduces_karcher_gradient() {
        let mut r = rng(23);
        let base = random_spd_matrix(7, 20.0, &mut r);
        let c = random_spd_matrix(7, 20.0, &mut r);
        let ours = grad_classical_mean(&base, std::slice::from_ref(&c)).unwrap();
        let inner = SpdMatrix::new(base.whiten(c.as_matrix()).unwrap()).unwrap();
        let log = spd_logm(&inner);
        let expect = -base.unwhiten(log.as_matrix()).unwrap() / 7.0;
        assert!((ours.as_matrix() - &expect).norm() <= 1e-10 * expect.norm());
    }

    #[test]
    fn mean_gradient_reductions() {
        let mut r = rng(24);
        let base = random_spd_matrix(6, 10.0, &mut r);
        let c = random_spd_matrix(6, 10.0, &mut r);
        let single = grad_f_rmt(&base, &c, 20).unwrap();
        let k1 = grad_h_mean(&base, std::slice::from_ref(&c), 20).unwrap();
        let dup = grad_h_mean(&base, &[c.clone(), c.clone()], 20).unwrap();
        assert!((single.as_matrix() - k1.as_matrix()).norm() <= 1e-13 * single.frobenius_norm());
        assert!((dup.as_matrix() - k1.as_matrix()).norm() <= 1e-13 * single.frobenius_norm());
        assert!(matches!(grad_h_mean(&base, &[], 20), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn mean_gradients_match_fd() {
        let mut r = rng(25);
        let base = random_spd_matrix(8, 20.0, &mut r);
        let chats: Vec<_> = (0..4).map(|_| random_spd_matrix(8, 20.0, &mut r)).collect();
        let obj = RmtMeanCost { chats: &chats, n: 32 };
        let g = obj.gradient(&base).unwrap();
        let cs: Vec<_> = (0..5).map(|_| random_spd_matrix(8, 20.0, &mut r)).collect();
        let karcher = KarcherCost { points: &cs };
        let gk = karcher.gradient(&base).unwrap();
        for _ in 0..20 {
            let xi = random_sym(8, &mut r);
            let fd = directional_fd(|x| obj.cost(x), &base, &xi, 1e-6).unwrap();
            let an = fisher_inner(&base, &g, &xi).unwrap();
            assert!(relative_error(an, fd) <= 1e-4);
            let fd = directional_fd(|x| karcher.cost(x), &base, &xi, 1e-6).unwrap();
            let an = fisher_inner(&base, &gk, &xi).unwrap();
            assert!(relative_error(an, fd) <= 1e-4);
        }
    }

    #[test]
    fn classical_gradient_zero_at_the_mean() {
        let mut r = rng(26);
        let c = random_spd_matrix(5, 10.0, &mut r);
        let g = grad_classical_mean(&c, std::slice::from_ref(&c)).unwrap();
        assert!(g.frobenius_norm() < 1e-12);

        let c2 = random_spd_matrix(5, 10.0, &mut r);
        let mid = geometric_mean2(&c, &c2).unwrap();
        let g = grad_classical_mean(&mid, &[c, c2]).unwrap();
        assert!(g.frobenius_norm() <= 1e-10);
    }

    #[test]
    fn gradient_is_congruence_equivariant() {
        // ∇f(AᵀRA, AᵀĈA) = Aᵀ ∇f(R, Ĉ) A
        let mut r = rng(27);
        for _ in 0..3 {
            let base = random_spd_matrix(6, 10.0, &mut r);
            let chat = random_spd_matrix(6, 10.0, &mut r);
            let a = random_invertible(6, &mut r);
            let g0 = grad_f_rmt(&base, &chat, 24).unwrap();
            let g1 = grad_f_rmt(&base.congruence(&a).unwrap(), &chat.congruence(&a).unwrap(), 24).unwrap();
            let expect = a.transpose() * g0.as_matrix() * &a;
            assert!((g1.as_matrix() - &expect).norm() <= 1e-8 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn repeated_eigenvalues_give_finite_gradient() {
        let base = SpdMatrix::identity(4);
        let chat = SpdMatrix::from_diagonal(&[2.0, 2.0, 2.0, 0.5]).unwrap();
        let g = grad_f_rmt(&base, &chat, 16).unwrap();
        assert!(g.as_matrix().iter().all(|v| v.is_finite()));
    }
}
