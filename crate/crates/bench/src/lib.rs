//! Shared inputs for the benchmarks.

use rmtmean::synthetic::{random_spd, sample_gaussian, spawn_cluster};
use rmtmean::{scm, DataMatrix, SpdMatrix};

/// A point `r`, `k` data sets of `n` samples drawn around a common mean,
/// and their sample covariances.
pub struct Fixture {
    pub r: SpdMatrix,
    pub data: Vec<DataMatrix>,
    pub scms: Vec<SpdMatrix>,
    pub n: usize,
}

impl Fixture {
    pub fn new(p: usize, n: usize, k: usize, seed: u64) -> Self {
        let r = random_spd(p, 100.0, seed).expect("valid condition number");
        let g = random_spd(p, 100.0, seed + 1).expect("valid condition number");
        let cs = spawn_cluster(&g, k.max(2), 0.1, seed + 2).expect("k >= 2");
        let data: Vec<DataMatrix> = cs
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, c)| sample_gaussian(c, n, seed + 10 + i as u64).expect("SPD covariance"))
            .collect();
        let scms = data.iter().map(|x| scm(x).expect("n > p")).collect();
        Fixture { r, data, scms, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let f = Fixture::new(4, 12, 3, 0);
        assert_eq!(f.data.len(), 3);
        assert_eq!(f.scms[0].dim(), 4);
        assert_eq!(f.data[0].n(), 12);
    }
}
