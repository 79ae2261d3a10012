//! Primal-dual saddle iteration on the complementary function, and a plain
//! projected-descent baseline on the potential.
//!
//! Each iteration of the saddle method takes a projected ascent step in the
//! dual variable over `E+` and a projected descent step for every sensor over
//! its box, both from the current pair `(x[k], tau[k])`:
//!
//! ```text
//! tau[k+1] = Proj_E+(tau[k] + a[k] grad_tau Psi(x[k], tau[k]))
//! x_i[k+1] = Proj_Omega_i(x_i[k] - a[k] grad_x_i Psi(x[k], tau[k]))
//! ```
//!
//! with `a[k] = alpha0 (k+1)^-gamma`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{self, DualVariable};
use crate::game::{self, StrategyProfile};
use crate::instance::Instance;
use crate::network::EdgeKind;
use crate::projection::{self, DualProjection, EPlusProjector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitMode {
    RandomInBox,
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauInit {
    Zero,
    SmallPositive(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOrder {
    /// Primal step uses `tau[k]`.
    Jacobi,
    /// Primal step uses the freshly projected `tau[k+1]`.
    GaussSeidel,
}

/// When the saddle iteration is declared converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// `||x[k+1] - x[k]|| <= tol` and `||tau[k+1] - tau[k]|| <= tol`.
    Step,
    /// Both step norms divided by `a[k]` are at most `tol`, i.e. the
    /// projected-gradient maps in both blocks are small.
    ScaledStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha0: f64,
    pub gamma: f64,
    pub tol: f64,
    pub stop_rule: StopRule,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitMode,
    pub tau_init: TauInit,
    pub update_order: UpdateOrder,
    pub dual_projection: DualProjection,
    /// Store `x[k]` and `tau[k]` in the trace every this many iterations (0: never).
    pub trace_every: usize,
    /// Sample the Nash residual every this many iterations (0: never).
    pub nash_every: usize,
    pub projection_tol: f64,
    pub projection_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha0: 0.1,
            gamma: 0.51,
            tol: 1e-5,
            stop_rule: StopRule::ScaledStep,
            max_iter: 200_000,
            seed: 0,
            init: InitMode::RandomInBox,
            tau_init: TauInit::Zero,
            update_order: UpdateOrder::Jacobi,
            dual_projection: DualProjection::Exact,
            trace_every: 0,
            nash_every: 100,
            projection_tol: projection::DEFAULT_TOL,
            projection_max_iter: projection::DEFAULT_MAX_ITER,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(format!("alpha0 must be positive, got {}", self.alpha0));
        }
        if !(self.gamma > 0.5 && self.gamma <= 1.0) {
            return Err(format!("gamma must lie in (0.5, 1], got {}", self.gamma));
        }
        if !(self.tol > 0.0) {
            return Err(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return Err("max_iter must be at least 1".into());
        }
        if let TauInit::SmallPositive(eps) = self.tau_init {
            if !(eps > 0.0) {
                return Err(format!("initial dual value must be positive, got {eps}"));
            }
        }
        Ok(())
    }
}

/// `a[k] = alpha0 (k+1)^-gamma`.
pub fn step_schedule(cfg: &SolverConfig, k: usize) -> f64 {
    cfg.alpha0 * ((k + 1) as f64).powf(-cfg.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    ProjectionFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub alpha: f64,
    pub potential: f64,
    /// `Psi(x[k], tau[k])`; absent for the baseline.
    pub psi: Option<f64>,
    pub dx_norm: f64,
    pub dtau_norm: f64,
    pub nash_residual: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleTrace {
    pub rows: Vec<TraceRow>,
    pub status: SolveStatus,
}

impl SaddleTrace {
    /// Number of updates performed.
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub x: StrategyProfile,
    pub tau: DualVariable,
    pub trace: SaddleTrace,
}

fn initial_profile(inst: &Instance, cfg: &SolverConfig, x0: Option<&[f64]>) -> Vec<f64> {
    match (cfg.init, x0) {
        (InitMode::Provided, Some(x)) | (InitMode::RandomInBox, Some(x)) => {
            assert_eq!(x.len(), inst.num_vars(), "initial profile has the wrong length");
            let n = inst.dim();
            let mut out = Vec::with_capacity(x.len());
            for (i, b) in inst.boxes().iter().enumerate() {
                out.extend(projection::project_box(&x[i * n..(i + 1) * n], b));
            }
            out
        }
        (InitMode::Provided, None) => panic!("InitMode::Provided needs an initial profile"),
        (InitMode::RandomInBox, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut out = Vec::with_capacity(inst.num_vars());
            for b in inst.boxes() {
                for (l, h) in b.lo.iter().zip(&b.hi) {
                    out.push(l + (h - l) * rng.gen::<f64>());
                }
            }
            out
        }
    }
}

fn initial_tau(inst: &Instance, cfg: &SolverConfig) -> Vec<f64> {
    match cfg.tau_init {
        TauInit::Zero => vec![0.0; inst.num_edges()],
        TauInit::SmallPositive(eps) => inst
            .edges()
            .iter()
            .zip(inst.dual_hi())
            .map(|(e, hi)| if e.kind == EdgeKind::AA { 0.0 } else { eps.min(*hi) })
            .collect(),
    }
}

fn max_nash_residual(inst: &Instance, x: &[f64]) -> f64 {
    game::nash_stationarity_residual(inst, x, 1.0)
        .into_iter()
        .fold(0.0, f64::max)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Whether the configured stopping rule fires for step norms `dx`, `dtau`
/// taken with step size `alpha`.
pub fn stop_fires(cfg: &SolverConfig, alpha: f64, dx: f64, dtau: f64) -> bool {
    let scale = match cfg.stop_rule {
        StopRule::Step => 1.0,
        StopRule::ScaledStep => alpha,
    };
    dx <= cfg.tol * scale && dtau <= cfg.tol * scale
}

fn project_profile(inst: &Instance, x: &mut [f64]) {
    let n = inst.dim();
    for (i, b) in inst.boxes().iter().enumerate() {
        for c in 0..n {
            x[i * n + c] = x[i * n + c].clamp(b.lo[c], b.hi[c]);
        }
    }
}

/// Runs the saddle iteration from `x0` (or a seeded random profile).
///
/// Stops when [`stop_fires`] holds for `||x[k+1] - x[k]||` and
/// `||tau[k+1] - tau[k]||`, or after `cfg.max_iter` updates.
pub fn solve_saddle(inst: &Instance, cfg: &SolverConfig, x0: Option<&[f64]>) -> SaddleSolution {
    if let Err(msg) = cfg.validate() {
        panic!("invalid solver config: {msg}");
    }
    let q = inst.num_edges();
    let mut x = initial_profile(inst, cfg, x0);
    let mut tau = initial_tau(inst, cfg);
    let mut projector = EPlusProjector::new(cfg.projection_tol, cfg.projection_max_iter);

    let mut gx = vec![0.0; x.len()];
    let mut gt = vec![0.0; q];
    let mut x_next = vec![0.0; x.len()];
    let mut rows = Vec::new();
    let mut failures_in_a_row = 0;
    let mut status = SolveStatus::MaxIter;

    for k in 0..cfg.max_iter {
        let alpha = step_schedule(cfg, k);
        dual::grad_psi_tau_into(inst, &x, &tau, &mut gt);
        let ascent = DualVariable(tau.iter().zip(&gt).map(|(t, g)| t + alpha * g).collect());
        let tau_next = match cfg.dual_projection {
            DualProjection::Nonnegative => projection::project_nonnegative(inst, &ascent).0,
            DualProjection::Exact => match projector.project(inst, &ascent) {
                Ok(r) => {
                    failures_in_a_row = 0;
                    r.projected.0
                }
                Err(crate::error::ProjectionError::MaxInnerIterations(r)) => {
                    failures_in_a_row += 1;
                    log::debug!("projection did not converge at k={k}");
                    r.projected.0
                }
            },
        };

        let tau_for_x = match cfg.update_order {
            UpdateOrder::Jacobi => &tau,
            UpdateOrder::GaussSeidel => &tau_next,
        };
        dual::grad_psi_x_into(inst, &x, tau_for_x, &mut gx);
        for ((xn, xv), g) in x_next.iter_mut().zip(&x).zip(&gx) {
            *xn = xv - alpha * g;
        }
        project_profile(inst, &mut x_next);

        let dx = dist(&x_next, &x);
        let dtau = dist(&tau_next, &tau);
        let keep = cfg.trace_every > 0 && k % cfg.trace_every == 0;
        let psi_val = dual::psi(inst, &x, &DualVariable(tau.clone()));
        rows.push(TraceRow {
            k,
            alpha,
            potential: game::potential(inst, &x),
            psi: Some(psi_val),
            dx_norm: dx,
            dtau_norm: dtau,
            nash_residual: (cfg.nash_every > 0 && k % cfg.nash_every == 0)
                .then(|| max_nash_residual(inst, &x)),
            x: keep.then(|| x.clone()),
            tau: keep.then(|| tau.clone()),
        });

        std::mem::swap(&mut x, &mut x_next);
        tau = tau_next;

        if failures_in_a_row >= 2 {
            status = SolveStatus::ProjectionFailure;
            break;
        }
        if stop_fires(cfg, alpha, dx, dtau) {
            status = SolveStatus::Converged;
            break;
        }
    }

    log::debug!(
        "projection: {} active calls, {} inner iterations",
        projector.active_calls,
        projector.inner_iterations
    );
    SaddleSolution {
        x: StrategyProfile::new(inst.dim(), x),
        tau: DualVariable(tau),
        trace: SaddleTrace { rows, status },
    }
}

/// Projected gradient descent on the potential with the same step schedule.
pub fn solve_baseline_descent(
    inst: &Instance,
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> (StrategyProfile, SaddleTrace) {
    if let Err(msg) = cfg.validate() {
        panic!("invalid solver config: {msg}");
    }
    let mut x = initial_profile(inst, cfg, x0);
    let mut x_next = vec![0.0; x.len()];
    let mut rows = Vec::new();
    let mut status = SolveStatus::MaxIter;
    for k in 0..cfg.max_iter {
        let alpha = step_schedule(cfg, k);
        let g = game::grad_potential(inst, &x);
        for ((xn, xv), gv) in x_next.iter_mut().zip(&x).zip(&g) {
            *xn = xv - alpha * gv;
        }
        project_profile(inst, &mut x_next);
        let dx = dist(&x_next, &x);
        let keep = cfg.trace_every > 0 && k % cfg.trace_every == 0;
        rows.push(TraceRow {
            k,
            alpha,
            potential: game::potential(inst, &x),
            psi: None,
            dx_norm: dx,
            dtau_norm: 0.0,
            nash_residual: (cfg.nash_every > 0 && k % cfg.nash_every == 0)
                .then(|| max_nash_residual(inst, &x)),
            x: keep.then(|| x.clone()),
            tau: None,
        });
        std::mem::swap(&mut x, &mut x_next);
        if stop_fires(cfg, alpha, dx, 0.0) {
            status = SolveStatus::Converged;
            break;
        }
    }
    (
        StrategyProfile::new(inst.dim(), x),
        SaddleTrace { rows, status },
    )
}
