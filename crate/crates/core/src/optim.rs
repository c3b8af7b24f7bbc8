//! Riemannian gradient descent with Armijo backtracking and the validity guard.
//!
//! Iterates `R ← retract(R, −t ∇f(R))`. When `validity_alpha > 0` a trial
//! point is only admissible if its cost stays above `−α/p`; steps that cross
//! the floor are shrunk like Armijo failures.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{fisher_dist2, fisher_inner, retract, SpdMatrix, SymMatrix};

/// A cost and its Fisher gradient on the SPD manifold.
pub trait Objective {
    fn cost(&self, r: &SpdMatrix) -> Result<f64>;
    fn gradient(&self, r: &SpdMatrix) -> Result<SymMatrix>;
}

/// Adapts a pair of closures into an [`Objective`].
pub struct FnObjective<F, G> {
    pub cost: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&SpdMatrix) -> Result<f64>,
    G: Fn(&SpdMatrix) -> Result<SymMatrix>,
{
    fn cost(&self, r: &SpdMatrix) -> Result<f64> {
        (self.cost)(r)
    }

    fn gradient(&self, r: &SpdMatrix) -> Result<SymMatrix> {
        (self.gradient)(r)
    }
}

/// How the first trial step of each linesearch is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialStep {
    /// `t₀ = 1`.
    Unit,
    /// `t₀ = 1 / (1 + ‖∇f‖_R)`.
    InverseGradNorm,
    /// `1 / (1 + ‖∇f‖_R)` on the first iteration. After that, twice the last
    /// accepted step, capped by the minimiser of the quadratic fitted along
    /// that step. Without the cap the rule can settle on twice the optimal
    /// step, which Armijo accepts while the iterates merely oscillate.
    #[default]
    Adaptive,
}

impl std::str::FromStr for InitialStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(InitialStep::Unit),
            "inverse-grad-norm" | "inverse_grad_norm" => Ok(InitialStep::InverseGradNorm),
            "adaptive" => Ok(InitialStep::Adaptive),
            other => Err(Error::invalid(format!("unknown step rule '{other}'"))),
        }
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub max_iters: usize,
    /// Stop once `δ²(R_ℓ, R_{ℓ−1})` drops below this.
    pub step_tol: f64,
    /// Guard level `α`; the cost must stay `≥ −α/p`. Zero disables it.
    pub validity_alpha: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub initial_step: InitialStep,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iters: 100,
            step_tol: 1e-6,
            validity_alpha: 10.0,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 25,
            initial_step: InitialStep::default(),
        }
    }
}

impl DescentConfig {
    /// Defaults with the validity guard switched off, as used for means.
    pub fn for_mean() -> Self {
        DescentConfig {
            validity_alpha: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.step_tol > 0.0
            && self.validity_alpha >= 0.0
            && self.armijo_c1 > 0.0
            && self.armijo_c1 < 1.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.validity_alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad descent configuration {self:?}")))
        }
    }
}

/// Why a descent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The cost fell below `−α/p`, or every admissible step would.
    Validity,
    StepTol,
    MaxIters,
    /// No step satisfied the Armijo condition within `max_backtracks`.
    LinesearchFailed,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Validity => "validity",
            Termination::StepTol => "step_tol",
            Termination::MaxIters => "max_iters",
            Termination::LinesearchFailed => "linesearch_failed",
        })
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub cost: f64,
    /// `‖∇f(R)‖_R` at the iterate the step was taken from.
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    /// Row 0 is the starting point with `step = 0`.
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
}

impl DescentTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.cost)
    }

    /// `iter,cost,grad_norm,step,reason`; the reason is filled on the last row.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iter,cost,grad_norm,step,reason")?;
        let last = self.records.len().saturating_sub(1);
        for (i, r) in self.records.iter().enumerate() {
            let reason = if i == last { self.termination.to_string() } else { String::new() };
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter,
                crate::io::fmt_g17(r.cost),
                crate::io::fmt_g17(r.grad_norm),
                crate::io::fmt_g17(r.step),
                reason
            )?;
        }
        Ok(())
    }
}

/// Minimises `obj` from `r0`. Optimisation is best-effort: a failed
/// linesearch ends the run with the best iterate so far.
pub fn descend(obj: &impl Objective, r0: SpdMatrix, cfg: &DescentConfig) -> Result<(SpdMatrix, DescentTrace)> {
    cfg.validate()?;
    let floor = (cfg.validity_alpha > 0.0).then(|| -cfg.validity_alpha / r0.dim() as f64);
    let admissible = |v: f64| floor.is_none_or(|fl| v >= fl);

    let mut r = r0;
    let mut f = obj.cost(&r)?;
    let mut records = vec![TraceRecord { iter: 0, cost: f, grad_norm: f64::NAN, step: 0.0 }];
    let finish = |r, records, termination| Ok((r, DescentTrace { records, termination }));

    if !admissible(f) {
        return finish(r, records, Termination::Validity);
    }

    // next adaptive trial, from the last accepted step
    let mut last_step: Option<f64> = None;
    for iter in 1..=cfg.max_iters {
        let g = obj.gradient(&r)?;
        let gn2 = fisher_inner(&r, &g, &g)?;
        let gn = gn2.sqrt();
        if records.len() == 1 {
            records[0].grad_norm = gn;
        }
        if gn2 == 0.0 {
            records.push(TraceRecord { iter, cost: f, grad_norm: 0.0, step: 0.0 });
            return finish(r, records, Termination::StepTol);
        }
        if !gn2.is_finite() {
            return finish(r, records, Termination::LinesearchFailed);
        }

        let mut t = match (cfg.initial_step, last_step) {
            (InitialStep::Unit, _) => 1.0,
            (InitialStep::Adaptive, Some(next)) => next,
            _ => 1.0 / (1.0 + gn),
        };
        let mut accepted = None;
        let mut hit_floor = false;
        for _ in 0..=cfg.max_backtracks {
            if let Ok(cand) = retract(&r, &g.scale(-t)) {
                let fc = obj.cost(&cand)?;
                if fc.is_finite() && fc <= f - cfg.armijo_c1 * t * gn2 {
                    if admissible(fc) {
                        accepted = Some((cand, fc));
                        break;
                    }
                    hit_floor = true;
                }
            }
            t *= cfg.backtrack_factor;
        }

        let Some((next, fc)) = accepted else {
            let reason = if hit_floor { Termination::Validity } else { Termination::LinesearchFailed };
            return finish(r, records, reason);
        };
        // φ(s) = f − s‖∇f‖² + ½κs² through φ(t) = fc
        let curv = fc - f + t * gn2;
        let fitted = if curv > 0.0 { t * t * gn2 / (2.0 * curv) } else { f64::INFINITY };
        last_step = Some((2.0 * t).min(fitted));
        let moved = fisher_dist2(&r, &next)?;
        r = next;
        f = fc;
        records.push(TraceRecord { iter, cost: f, grad_norm: gn, step: t });
        if moved < cfg.step_tol {
            return finish(r, records, Termination::StepTol);
        }
    }
    finish(r, records, Termination::MaxIters)
}
