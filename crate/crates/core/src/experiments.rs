//! Monte-Carlo accuracy experiments for the mean and covariance estimators.
//!
//! Each (grid point, trial) draws its ground truth and data from its own
//! seed-derived stream, so tables are identical however trials are scheduled.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::covariance::{lw_linear, rmt_cov, scm, CovInit, DataMatrix};
use crate::error::{Error, Result};
use crate::frechet::{classical_mean, rmt_mean, MeanInit};
use crate::io::fmt_g17;
use crate::linalg::{fisher_dist2, SpdMatrix};
use crate::optim::DescentConfig;
use crate::synthetic::{random_spd_with, sample_gaussian_with, spawn_cluster_with, stream_rng};

/// Estimators compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Sample covariance, or the classical mean of sample covariances.
    Scm,
    /// Linear Ledoit-Wolf, or the classical mean of LW estimates.
    LwLinear,
    /// Corrected covariance estimator, or the corrected mean.
    Rmt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Scm, Method::LwLinear, Method::Rmt];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Scm => "SCM",
            Method::LwLinear => "LW_linear",
            Method::Rmt => "RMT",
        })
    }
}

/// What the mean experiment varies.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Sample count per matrix, with `k` matrices.
    Samples { grid: Vec<usize>, k: usize },
    /// Number of matrices, with `n` samples each.
    Matrices { grid: Vec<usize>, n: usize },
}

impl Sweep {
    fn grid(&self) -> &[usize] {
        match self {
            Sweep::Samples { grid, .. } | Sweep::Matrices { grid, .. } => grid,
        }
    }

    /// `(n, K)` at grid point `g`.
    fn point(&self, g: usize) -> (usize, usize) {
        match self {
            Sweep::Samples { grid, k } => (grid[g], *k),
            Sweep::Matrices { grid, n } => (*n, grid[g]),
        }
    }

    fn axis(&self) -> &'static str {
        match self {
            Sweep::Samples { .. } => "n_samples",
            Sweep::Matrices { .. } => "n_matrices",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanExperiment {
    pub p: usize,
    pub sweep: Sweep,
    pub trials: usize,
    pub sigma2: f64,
    pub condition: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub descent: DescentConfig,
}

impl MeanExperiment {
    pub fn new(p: usize, sweep: Sweep) -> Self {
        MeanExperiment {
            p,
            sweep,
            trials: 100,
            sigma2: 0.1,
            condition: 100.0,
            methods: Method::ALL.to_vec(),
            seed: 0,
            descent: DescentConfig::for_mean(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovExperiment {
    pub p: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub condition: f64,
    pub methods: Vec<Method>,
    pub init: CovInit,
    pub seed: u64,
    pub descent: DescentConfig,
}

impl CovExperiment {
    pub fn new(p: usize, n_grid: Vec<usize>) -> Self {
        CovExperiment {
            p,
            n_grid,
            trials: 100,
            condition: 100.0,
            methods: Method::ALL.to_vec(),
            init: CovInit::default(),
            seed: 0,
            descent: DescentConfig::default(),
        }
    }
}

/// Squared Fisher errors, indexed `[grid point][method][trial]`; failed
/// trials hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub axis: &'static str,
    pub grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub errors: Vec<Vec<Vec<f64>>>,
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let m = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / m;
    let my = ry.iter().sum::<f64>() / m;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

impl ResultTable {
    /// Quantile over the successful trials of one cell.
    pub fn quantile(&self, g: usize, m: usize, q: f64) -> f64 {
        let mut v: Vec<f64> = self.errors[g][m].iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        quantile(&v, q)
    }

    pub fn median(&self, g: usize, method: Method) -> f64 {
        let m = self.methods.iter().position(|&x| x == method).expect("method in table");
        self.quantile(g, m, 0.5)
    }

    /// Median curve of one method along the grid.
    pub fn medians(&self, method: Method) -> Vec<f64> {
        (0..self.grid.len()).map(|g| self.median(g, method)).collect()
    }

    pub fn failures(&self) -> usize {
        self.errors.iter().flatten().flatten().filter(|x| !x.is_finite()).count()
    }

    /// One row per grid point with the `q`-quantile of each method.
    pub fn to_csv(&self, q: f64, header: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            for line in h.lines() {
                out.push_str(&format!("# {line}\n"));
            }
        }
        out.push_str(self.axis);
        for m in &self.methods {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
        for (g, x) in self.grid.iter().enumerate() {
            out.push_str(&x.to_string());
            for m in 0..self.methods.len() {
                out.push(',');
                out.push_str(&fmt_g17(self.quantile(g, m, q)));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `mean.csv` (medians), `5.csv` and `95.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path, header: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, q) in [("mean.csv", 0.5), ("5.csv", 0.05), ("95.csv", 0.95)] {
            fs::write(dir.join(name), self.to_csv(q, header))?;
        }
        Ok(())
    }
}

fn check_common(p: usize, trials: usize, grid: &[usize], methods: &[Method]) -> Result<()> {
    if p == 0 || trials == 0 || grid.is_empty() || methods.is_empty() {
        return Err(Error::invalid("experiment needs p, trials, a grid and methods"));
    }
    Ok(())
}

fn run_grid(
    grid_len: usize,
    trials: usize,
    n_methods: usize,
    trial: impl Fn(usize, usize) -> Vec<f64> + Sync,
) -> Vec<Vec<Vec<f64>>> {
    let jobs: Vec<(usize, usize)> = (0..grid_len).flat_map(|g| (0..trials).map(move |t| (g, t))).collect();
    let results: Vec<Vec<f64>> = jobs.par_iter().map(|&(g, t)| trial(g, t)).collect();
    let mut errors = vec![vec![Vec::with_capacity(trials); n_methods]; grid_len];
    for (&(g, _), row) in jobs.iter().zip(results) {
        for (m, v) in row.into_iter().enumerate() {
            errors[g][m].push(v);
        }
    }
    errors
}

fn error_or_nan(est: Result<SpdMatrix>, truth: &SpdMatrix) -> f64 {
    est.and_then(|e| fisher_dist2(&e, truth)).unwrap_or(f64::NAN)
}

/// Squared Fisher error of each mean estimator over the sweep.
pub fn mse_mean_experiment(cfg: &MeanExperiment) -> Result<ResultTable> {
    let grid = cfg.sweep.grid();
    check_common(cfg.p, cfg.trials, grid, &cfg.methods)?;
    for g in 0..grid.len() {
        let (n, k) = cfg.sweep.point(g);
        if n <= cfg.p || k < 2 {
            return Err(Error::invalid(format!("grid point n={n}, K={k} needs n > p = {} and K >= 2", cfg.p)));
        }
    }
    let trial = |g: usize, t: usize| -> Vec<f64> {
        let (n, k) = cfg.sweep.point(g);
        let (gu, tu) = (g as u64, t as u64);
        let run = || -> Result<(SpdMatrix, Vec<DataMatrix>)> {
            let truth = random_spd_with(cfg.p, cfg.condition, &mut stream_rng(cfg.seed, &[0, gu, tu]))?;
            let cs = spawn_cluster_with(&truth, k, cfg.sigma2, &mut stream_rng(cfg.seed, &[1, gu, tu]))?;
            let xs = cs
                .iter()
                .enumerate()
                .map(|(i, c)| sample_gaussian_with(c, n, &mut stream_rng(cfg.seed, &[2, gu, tu, i as u64])))
                .collect::<Result<_>>()?;
            Ok((truth, xs))
        };
        let Ok((truth, xs)) = run() else {
            return vec![f64::NAN; cfg.methods.len()];
        };
        cfg.methods
            .iter()
            .map(|m| {
                let est = match m {
                    Method::Scm => xs
                        .iter()
                        .map(scm)
                        .collect::<Result<Vec<_>>>()
                        .and_then(|cs| classical_mean(&cs, None, &cfg.descent).map(|r| r.0)),
                    Method::LwLinear => xs
                        .iter()
                        .map(|x| lw_linear(x).map(|l| l.estimate))
                        .collect::<Result<Vec<_>>>()
                        .and_then(|cs| classical_mean(&cs, None, &cfg.descent).map(|r| r.0)),
                    Method::Rmt => rmt_mean(&xs, &MeanInit::Identity, &cfg.descent).map(|r| r.0),
                };
                error_or_nan(est, &truth)
            })
            .collect()
    };
    Ok(ResultTable {
        axis: cfg.sweep.axis(),
        grid: grid.to_vec(),
        methods: cfg.methods.clone(),
        errors: run_grid(grid.len(), cfg.trials, cfg.methods.len(), trial),
    })
}

/// Squared Fisher error of each covariance estimator over the sample grid.
pub fn mse_cov_experiment(cfg: &CovExperiment) -> Result<ResultTable> {
    check_common(cfg.p, cfg.trials, &cfg.n_grid, &cfg.methods)?;
    if let Some(&n) = cfg.n_grid.iter().find(|&&n| n <= cfg.p) {
        return Err(Error::invalid(format!("grid point n={n} needs n > p = {}", cfg.p)));
    }
    let trial = |g: usize, t: usize| -> Vec<f64> {
        let n = cfg.n_grid[g];
        let (gu, tu) = (g as u64, t as u64);
        let run = || -> Result<(SpdMatrix, DataMatrix)> {
            let truth = random_spd_with(cfg.p, cfg.condition, &mut stream_rng(cfg.seed, &[0, gu, tu]))?;
            let x = sample_gaussian_with(&truth, n, &mut stream_rng(cfg.seed, &[2, gu, tu]))?;
            Ok((truth, x))
        };
        let Ok((truth, x)) = run() else {
            return vec![f64::NAN; cfg.methods.len()];
        };
        cfg.methods
            .iter()
            .map(|m| {
                let est = match m {
                    Method::Scm => scm(&x),
                    Method::LwLinear => lw_linear(&x).map(|l| l.estimate),
                    Method::Rmt => rmt_cov(&x, &cfg.init, &cfg.descent).map(|r| r.0),
                };
                error_or_nan(est, &truth)
            })
            .collect()
    };
    Ok(ResultTable {
        axis: "n_samples",
        grid: cfg.n_grid.clone(),
        methods: cfg.methods.clone(),
        errors: run_grid(cfg.n_grid.len(), cfg.trials, cfg.methods.len(), trial),
    })
}
