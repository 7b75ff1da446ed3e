//! Active-set semismooth Newton loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::DiscreteProblem;
use crate::kkt::{active_sets_with, expand_solution, kkt_residual_norm, warm_start_map, ActiveSet, KktPoint, NewtonSystem};
use crate::krylov::{bpcg, gmres, minres, SolveStats, BPCG_MAXIT, GMRES_MAXIT, MINRES_MAXIT};
use crate::schur::{BdfPreconditioner, BtPreconditioner, InnerSolverPolicy, IpfPreconditioner, ReducedSystem, SchurFactor};

/// Krylov method paired with its preconditioner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    GmresIpf,
    MinresBdf,
    BpcgBt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GmresIpf, Method::MinresBdf, Method::BpcgBt];

    pub fn name(&self) -> &'static str {
        match self {
            Method::GmresIpf => "gmres+ipf",
            Method::MinresBdf => "minres+bdf",
            Method::BpcgBt => "bpcg+bt",
        }
    }

    pub fn default_max_linear(&self) -> usize {
        match self {
            Method::GmresIpf => GMRES_MAXIT,
            Method::MinresBdf => MINRES_MAXIT,
            Method::BpcgBt => BPCG_MAXIT,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "+").as_str() {
            "gmres+ipf" => Ok(Method::GmresIpf),
            "minres+bdf" => Ok(Method::MinresBdf),
            "bpcg+bt" => Ok(Method::BpcgBt),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Forcing {
    Exact,
    Inexact,
}

impl fmt::Display for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Forcing::Exact => "exact",
            Forcing::Inexact => "inexact",
        })
    }
}

impl FromStr for Forcing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Forcing::Exact),
            "inexact" => Ok(Forcing::Inexact),
            _ => Err(Error::Config(format!("unknown forcing '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub method: Method,
    pub forcing: Forcing,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    /// Absolute floor on the linear residual target.
    pub safeguard: f64,
    pub kkt_tol: f64,
    pub max_newton: usize,
    /// `None` selects the method default (80 for GMRES, 1000 otherwise).
    pub max_linear: Option<usize>,
    /// Overrides the problem's active-set constant when set.
    pub c: Option<f64>,
    pub inner: InnerSolverPolicy,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            method: Method::GmresIpf,
            forcing: Forcing::Exact,
            tau1: 1e-10,
            tau2: 1e-4,
            tau3: 1e-2,
            safeguard: 1e-10,
            kkt_tol: 1e-8,
            max_newton: 200,
            max_linear: None,
            c: None,
            inner: InnerSolverPolicy::Direct,
        }
    }
}

impl NewtonOptions {
    pub fn new(method: Method, forcing: Forcing) -> Self {
        Self { method, forcing, ..Self::default() }
    }

    /// Tightens the exact forcing term and safeguard to `1e-12`.
    pub fn strict(mut self) -> Self {
        self.tau1 = 1e-12;
        self.safeguard = 1e-12;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let tols = [self.tau1, self.tau2, self.tau3, self.safeguard, self.kkt_tol];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_newton == 0 || self.max_linear == Some(0) {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if let Some(c) = self.c {
            if !(c > 0.0) {
                return Err(Error::Config(format!("c must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

pub fn forcing_exact(_k: usize, tau1: f64) -> f64 {
    tau1
}

/// `eta_0 = tau2`, `eta_k = min(eta_{k-1}, tau3 ||F||^2)`.
pub fn forcing_inexact(k: usize, eta_prev: f64, f_norm: f64, tau2: f64, tau3: f64) -> f64 {
    if k == 0 {
        tau2
    } else {
        eta_prev.min(tau3 * f_norm * f_norm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Index of the active set `A_k`, computed from the iterate `x_k`.
    pub k: usize,
    pub n_upper: usize,
    pub n_lower: usize,
    pub n_inactive: usize,
    pub linear_iterations: usize,
    pub linear_residual: f64,
    pub linear_target: f64,
    pub linear_converged: bool,
    pub kkt_norm: f64,
    /// Active set equal to the previous iteration's.
    pub active_repeated: bool,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIterations,
    LinearFailure,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Converged => "converged",
            Outcome::MaxIterations => "max_iterations",
            Outcome::LinearFailure => "linear_failure",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonTrace {
    pub records: Vec<IterationRecord>,
    pub outcome: Outcome,
    pub initial_kkt_norm: f64,
    pub total_seconds: f64,
    /// Error text of the linear solve that stopped the run, if any.
    pub failure: Option<String>,
}

impl NewtonTrace {
    /// Number of Newton iterations (linear solves).
    pub fn nli(&self) -> usize {
        self.records.len()
    }

    /// Mean inner iterations per Newton step.
    pub fn mean_li(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.linear_iterations as f64).sum::<f64>() / self.records.len() as f64
    }

    /// Linear solves that stopped at the iteration cap.
    pub fn unconverged_linear_solves(&self) -> usize {
        self.records.iter().filter(|r| !r.linear_converged).count()
    }

    pub fn final_kkt_norm(&self) -> f64 {
        self.records.last().map_or(self.initial_kkt_norm, |r| r.kkt_norm)
    }

    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    /// Mean wall time per linear solve.
    pub fn seconds_per_solve(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.seconds).sum::<f64>() / self.records.len() as f64
    }
}

pub fn newton_solve(problem: &DiscreteProblem, opts: &NewtonOptions) -> Result<(KktPoint, NewtonTrace)> {
    newton_solve_observed(problem, opts, &mut |_, _, _| Ok(()))
}

/// Runs the Newton loop; `observer(k, x_k, A_k)` is called before each
/// linear solve, with `k` counted from zero.
pub fn newton_solve_observed(
    problem: &DiscreteProblem,
    opts: &NewtonOptions,
    observer: &mut dyn FnMut(usize, &KktPoint, &ActiveSet) -> Result<()>,
) -> Result<(KktPoint, NewtonTrace)> {
    opts.validate()?;
    let start = Instant::now();
    let n = problem.n();
    let c = opts.c.unwrap_or(problem.spec.c);
    let max_linear = opts.max_linear.unwrap_or_else(|| opts.method.default_max_linear());
    let mut x = KktPoint::zeros(n);
    let mut f_norm = kkt_residual_norm(&x, problem, c)?;
    let mut trace = NewtonTrace {
        records: Vec::new(),
        outcome: Outcome::MaxIterations,
        initial_kkt_norm: f_norm,
        total_seconds: 0.0,
        failure: None,
    };
    if f_norm <= opts.kkt_tol {
        trace.outcome = Outcome::Converged;
        return Ok((x, trace));
    }
    let mut eta = opts.tau2;
    let mut previous: Option<ActiveSet> = None;

    for k in 0..opts.max_newton {
        let t0 = Instant::now();
        let active = active_sets_with(&x, problem, c)?;
        observer(k, &x, &active)?;
        let repeated = previous.as_ref() == Some(&active);
        eta = match opts.forcing {
            Forcing::Exact => forcing_exact(k, opts.tau1),
            Forcing::Inexact => forcing_inexact(k, eta, f_norm, opts.tau2, opts.tau3),
        };
        let system = NewtonSystem::new(problem, active.clone())?;
        let x0 = warm_start_map(&x, &active);
        let r0 = system.residual_norm(&x0)?;
        let target = opts.safeguard.max(eta * r0);

        let solved = solve_step(problem, &system, &x0, target, max_linear, opts);
        let (sol, stats) = match solved {
            Ok(v) => v,
            Err(e @ (Error::Breakdown(_) | Error::IndefinitePreconditioner(_) | Error::IndefiniteMetric(_))) => {
                trace.outcome = Outcome::LinearFailure;
                trace.failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        x = expand_solution(&sol, &active)?;
        f_norm = kkt_residual_norm(&x, problem, c)?;
        let (n_upper, n_lower, n_inactive) = active.sizes();
        trace.records.push(IterationRecord {
            k,
            n_upper,
            n_lower,
            n_inactive,
            linear_iterations: stats.iterations,
            linear_residual: stats.final_residual(),
            linear_target: target,
            linear_converged: stats.converged,
            kkt_norm: f_norm,
            active_repeated: repeated,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if f_norm <= opts.kkt_tol {
            trace.outcome = Outcome::Converged;
            break;
        }
        previous = Some(active);
    }
    trace.total_seconds = start.elapsed().as_secs_f64();
    Ok((x, trace))
}

fn solve_step(
    problem: &DiscreteProblem,
    system: &NewtonSystem<'_>,
    x0: &[f64],
    target: f64,
    max_linear: usize,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    match opts.method {
        Method::GmresIpf => {
            let factor = SchurFactor::build(problem, &system.active, opts.inner)?;
            let prec = IpfPreconditioner::new(problem, &factor);
            gmres(system, &prec, &system.rhs, x0, target, max_linear)
        }
        Method::MinresBdf => {
            let factor = SchurFactor::build(problem, &system.active, opts.inner)?;
            let prec = BdfPreconditioner::new(problem, &factor);
            minres(system, &prec, &system.rhs, x0, target, max_linear)
        }
        Method::BpcgBt => {
            let reduced = ReducedSystem::new(problem, &system.active)?;
            let prec = BtPreconditioner::new(&reduced, opts.inner)?;
            let metric = prec.metric();
            let (xr, stats) = bpcg(&reduced, &prec, &metric, &reduced.rhs, &reduced.restrict(x0), target, max_linear)?;
            Ok((reduced.lift(&xr), stats))
        }
    }
}
