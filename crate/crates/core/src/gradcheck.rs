//! Central finite-difference reference for every analytic gradient.
//!
//! Only cost functions and the retraction are used here, so these checks are
//! independent of the gradient code they validate.

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::gradients::{KarcherCost, RmtDistanceCost, RmtMeanCost};
use crate::linalg::{fisher_inner, retract, SpdMatrix, SymMatrix};
use crate::optim::Objective;
use crate::synthetic::{random_spd_with, stream_rng};
use crate::rmt_distance::check_aspect;

/// `(f(retract(R, hξ)) − f(retract(R, −hξ))) / 2h`.
pub fn directional_fd(f: impl Fn(&SpdMatrix) -> Result<f64>, r: &SpdMatrix, xi: &SymMatrix, h: f64) -> Result<f64> {
    let plus = f(&retract(r, &xi.scale(h))?)?;
    let minus = f(&retract(r, &xi.scale(-h))?)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Central difference of a spectral function along `dir`.
pub fn eigen_fd(
    g: impl Fn(&DVector<f64>) -> Result<f64>,
    lambda: &DVector<f64>,
    dir: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let plus = g(&(lambda + dir * h))?;
    let minus = g(&(lambda - dir * h))?;
    Ok((plus - minus) / (2.0 * h))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
    (analytic - numeric).abs() / scale
}

/// Sizes of one finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub dims: Vec<usize>,
    /// Fixed sample count; `None` uses `4p`.
    pub n: Option<usize>,
    pub instances: usize,
    pub directions: usize,
    /// Number of matrices in the mean costs.
    pub k: usize,
    pub h: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            dims: vec![2, 4, 8, 16],
            n: None,
            instances: 10,
            directions: 20,
            k: 4,
            h: 1e-6,
            seed: 0,
        }
    }
}

/// Worst relative error seen per gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradcheckReport {
    pub rmt_distance: f64,
    pub rmt_mean: f64,
    pub classical_mean: f64,
    pub checks: usize,
}

impl GradcheckReport {
    pub fn max(&self) -> f64 {
        self.rmt_distance.max(self.rmt_mean).max(self.classical_mean)
    }
}

fn random_direction(p: usize, rng: &mut impl Rng) -> SymMatrix {
    let m = nalgebra::DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    SymMatrix::new(&m + m.transpose()).expect("finite entries")
}

fn worst(obj: &impl Objective, r: &SpdMatrix, dirs: &[SymMatrix], h: f64) -> Result<f64> {
    let g = obj.gradient(r)?;
    let mut worst: f64 = 0.0;
    for xi in dirs {
        let an = fisher_inner(r, &g, xi)?;
        let fd = directional_fd(|x| obj.cost(x), r, xi, h)?;
        worst = worst.max(relative_error(an, fd));
    }
    Ok(worst)
}

/// Runs the sweep over random instances drawn from seed-derived streams.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    for &p in &cfg.dims {
        let n = cfg.n.unwrap_or(4 * p);
        check_aspect(p, n)?;
        for inst in 0..cfg.instances {
            let mut rng = stream_rng(cfg.seed, &[p as u64, inst as u64]);
            let r = random_spd_with(p, 20.0, &mut rng)?;
            let chats: Vec<_> = (0..cfg.k).map(|_| random_spd_with(p, 20.0, &mut rng)).collect::<Result<_>>()?;
            let dirs: Vec<_> = (0..cfg.directions).map(|_| random_direction(p, &mut rng)).collect();

            let e = worst(&RmtDistanceCost { chat: &chats[0], n }, &r, &dirs, cfg.h)?;
            report.rmt_distance = report.rmt_distance.max(e);
            let e = worst(&RmtMeanCost { chats: &chats, n }, &r, &dirs, cfg.h)?;
            report.rmt_mean = report.rmt_mean.max(e);
            let e = worst(&KarcherCost { points: &chats }, &r, &dirs, cfg.h)?;
            report.classical_mean = report.classical_mean.max(e);
            report.checks += 3 * dirs.len();
        }
    }
    Ok(report)
}
