//! Ground-truth generators: Haar rotations, SPD matrices with a prescribed
//! condition number, clusters around a known Karcher mean, Gaussian data.
//!
//! Every random draw comes from a ChaCha stream derived from `(seed, path)`,
//! so the output does not depend on how work is scheduled across threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::covariance::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{spd_expm, SpdMatrix, SymMatrix};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for the work item addressed by `path`.
pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = path.iter().fold(0x51_7cc1_b727_220a_u64, |h, &x| splitmix(h ^ splitmix(x)));
    rng.set_stream(stream);
    rng
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn random_orthogonal(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// `U Δ Uᵀ` with Haar `U`, extreme eigenvalues `√a` and `1/√a` and the
/// rest uniform between them.
pub fn random_spd_with(p: usize, a: f64, rng: &mut impl Rng) -> Result<SpdMatrix> {
    if !(a >= 1.0 && a.is_finite()) || p == 0 {
        return Err(Error::invalid(format!("condition number must be >= 1, got {a}")));
    }
    if a == 1.0 || p == 1 {
        return Ok(SpdMatrix::identity(p));
    }
    let hi = a.sqrt();
    let lo = 1.0 / hi;
    let mut d = vec![lo; p];
    d[p - 1] = hi;
    for v in d.iter_mut().take(p - 1).skip(1) {
        *v = rng.random_range(lo..=hi);
    }
    let u = random_orthogonal(p, rng);
    let mut ud = u.clone();
    for (j, mut col) in ud.column_iter_mut().enumerate() {
        col *= d[j];
    }
    SpdMatrix::new(ud * u.transpose())
}

pub fn random_spd(p: usize, a: f64, seed: u64) -> Result<SpdMatrix> {
    random_spd_with(p, a, &mut stream_rng(seed, &[]))
}

/// `K` matrices `Cₖ = G^{1/2} expm(ξₖ) G^{1/2}` whose tangent vectors sum to
/// zero, so `G` is their Karcher mean. Each of the `p(p+1)/2` free entries
/// of `Sₖ` is drawn from `N(0, σ²)`; off-diagonals are mirrored unscaled.
pub fn spawn_cluster_with(g: &SpdMatrix, k: usize, sigma2: f64, rng: &mut impl Rng) -> Result<Vec<SpdMatrix>> {
    if k < 2 {
        return Err(Error::invalid("a cluster needs at least two matrices"));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    let p = g.dim();
    let sigma = sigma2.sqrt();
    let mut s: Vec<DMatrix<f64>> = (0..k)
        .map(|_| {
            let mut m = DMatrix::zeros(p, p);
            for j in 0..p {
                for i in j..p {
                    let v = sigma * rng.sample::<f64, _>(StandardNormal);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        })
        .collect();
    let mean = s.iter().fold(DMatrix::zeros(p, p), |acc, m| acc + m) / k as f64;
    s.iter_mut().for_each(|m| *m -= &mean);
    s.into_iter()
        .map(|xi| {
            let e = spd_expm(&SymMatrix::new(xi)?)?;
            SpdMatrix::new(g.unwhiten(e.as_matrix())?)
        })
        .collect()
}

pub fn spawn_cluster(g: &SpdMatrix, k: usize, sigma2: f64, seed: u64) -> Result<Vec<SpdMatrix>> {
    spawn_cluster_with(g, k, sigma2, &mut stream_rng(seed, &[]))
}

/// `n` columns `C^{1/2} z` with `z ~ N(0, I)`.
pub fn sample_gaussian_with(c: &SpdMatrix, n: usize, rng: &mut impl Rng) -> Result<DataMatrix> {
    let z = DMatrix::from_fn(c.dim(), n, |_, _| rng.sample::<f64, _>(StandardNormal));
    DataMatrix::new(c.sqrt() * z)
}

pub fn sample_gaussian(c: &SpdMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    sample_gaussian_with(c, n, &mut stream_rng(seed, &[]))
}

/// A true mean and a cluster of covariances around it.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub g: SpdMatrix,
    pub cs: Vec<SpdMatrix>,
    pub condition_number: f64,
    pub tangent_sigma2: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn generate(p: usize, k: usize, a: f64, sigma2: f64, seed: u64) -> Result<Self> {
        let g = random_spd_with(p, a, &mut stream_rng(seed, &[0]))?;
        let cs = spawn_cluster_with(&g, k, sigma2, &mut stream_rng(seed, &[1]))?;
        Ok(GroundTruth { g, cs, condition_number: a, tangent_sigma2: sigma2, seed })
    }

    /// One `p × n` data matrix per class covariance.
    pub fn sample(&self, n: usize) -> Result<Vec<DataMatrix>> {
        self.cs
            .iter()
            .enumerate()
            .map(|(k, c)| sample_gaussian_with(c, n, &mut stream_rng(self.seed, &[2, k as u64])))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frechet::karcher_residual;
    use crate::linalg::{fisher_dist2, geometric_mean2};

    #[test]
    fn unit_condition_gives_identity() {
        assert_eq!(random_spd(6, 1.0, 3).unwrap(), SpdMatrix::identity(6));
        assert!(random_spd(3, 0.5, 3).is_err());
    }

    #[test]
    fn condition_number_is_exact() {
        for seed in 0..5 {
            let c = random_spd(8, 100.0, seed).unwrap();
            let ev = c.eigenvalues();
            assert!((ev[7] / ev[0] - 100.0).abs() <= 1e-10 * 100.0);
        }
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = stream_rng(1, &[]);
        let q = random_orthogonal(7, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(7, 7)).norm() < 1e-12);
    }

    #[test]
    fn haar_columns_are_isotropic() {
        // The first column of a Haar matrix is uniform on the sphere, so the
        // index of its largest |entry| is uniform over p cells.
        let p = 8;
        let draws = 1000;
        let mut counts = [0usize; 8];
        let mut rng = stream_rng(2, &[]);
        for _ in 0..draws {
            let idx = random_orthogonal(p, &mut rng).column(0).iamax();
            counts[idx] += 1;
        }
        let expect = draws as f64 / p as f64;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - expect).powi(2) / expect).sum();
        // 99th percentile of χ² with 7 degrees of freedom
        assert!(chi2 < 18.475, "{chi2} {counts:?}");
    }

    #[test]
    fn cluster_has_the_prescribed_karcher_mean() {
        let g = random_spd(6, 100.0, 4).unwrap();
        let cs = spawn_cluster(&g, 10, 0.1, 5).unwrap();
        assert!(karcher_residual(&g, &cs).unwrap() <= 1e-10);
        assert!(spawn_cluster(&g, 1, 0.1, 5).is_err());
    }

    #[test]
    fn two_member_cluster_is_centred_on_geometric_mean() {
        let g = random_spd(5, 100.0, 6).unwrap();
        let cs = spawn_cluster(&g, 2, 0.1, 7).unwrap();
        let mid = geometric_mean2(&cs[0], &cs[1]).unwrap();
        assert!(fisher_dist2(&mid, &g).unwrap() <= 1e-8);
    }

    #[test]
    fn tiny_spread_collapses_on_the_mean() {
        let g = random_spd(4, 10.0, 8).unwrap();
        for c in spawn_cluster(&g, 5, 1e-16, 9).unwrap() {
            assert!(fisher_dist2(&c, &g).unwrap() < 1e-12);
        }
    }

    #[test]
    fn gaussian_samples_are_reproducible_and_linear() {
        let c = random_spd(4, 10.0, 10).unwrap();
        let a = sample_gaussian(&c, 50, 11).unwrap();
        let b = sample_gaussian(&c, 50, 11).unwrap();
        assert_eq!(a.as_matrix(), b.as_matrix());
        let white = sample_gaussian(&SpdMatrix::identity(4), 50, 11).unwrap();
        let mapped = c.sqrt() * white.as_matrix();
        assert!((mapped - a.as_matrix()).norm() <= 1e-12 * a.as_matrix().norm());
    }

    #[test]
    fn sample_covariance_of_white_noise_approaches_identity() {
        let x = sample_gaussian(&SpdMatrix::identity(4), 100_000, 12).unwrap();
        let s = crate::covariance::scm(&x).unwrap();
        let rel = (s.as_matrix() - DMatrix::identity(4, 4)).norm() / 2.0;
        assert!(rel <= 0.05, "{rel}");
    }

    #[test]
    fn streams_are_distinct() {
        let a: u64 = stream_rng(1, &[0, 1]).random();
        let b: u64 = stream_rng(1, &[1, 0]).random();
        let c: u64 = stream_rng(1, &[0, 1]).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn ground_truth_shapes() {
        let gt = GroundTruth::generate(5, 3, 100.0, 0.1, 13).unwrap();
        assert_eq!(gt.cs.len(), 3);
        let xs = gt.sample(20).unwrap();
        assert!(xs.iter().all(|x| x.p() == 5 && x.n() == 20));
    }
}
