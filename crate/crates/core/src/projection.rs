//! Projections onto the strategy boxes and onto the dual feasible set
//! `E+ = {tau in dual box : L(tau) >= 0}`.
//!
//! The Euclidean projection onto `E+` solves
//! `min 1/2 ||tau - tau0||^2  s.t.  tau in B, L(tau) >= 0`.
//! Dualizing only the semidefinite constraint with a multiplier `Z >= 0`
//! gives `tau(Z) = clamp_B(tau0 + L*(Z))` and a concave dual whose gradient
//! is `-L(tau(Z))`. We run accelerated projected gradient ascent on `Z`
//! (projection onto the PSD cone = eigenvalue clipping) with adaptive
//! restart. The multiplier can be kept between calls, which makes the
//! repeated projections inside the saddle iteration cheap.
//!
//! Positive semidefiniteness is always tested on the `N x N` Laplacian: the
//! spectrum of `Q = 2 (L (x) I_n)` is that of `L` scaled by 2, each eigenvalue
//! repeated `n` times.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dual::DualVariable;
use crate::error::ProjectionError;
use crate::instance::{AxisBox, Instance};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Componentwise clamp onto a box.
pub fn project_box(v: &[f64], b: &AxisBox) -> Vec<f64> {
    v.iter()
        .zip(b.lo.iter().zip(&b.hi))
        .map(|(x, (l, h))| x.clamp(*l, *h))
        .collect()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

/// Membership in `E+`: `lambda_min(L) >= -tol (1 + ||L||_2)` and the dual
/// box holds within `tol`.
pub fn is_in_eplus(inst: &Instance, tau: &DualVariable, tol: f64) -> bool {
    let in_box = tau
        .0
        .iter()
        .zip(inst.dual_lo().iter().zip(inst.dual_hi()))
        .all(|(t, (l, h))| *t >= l - tol && *t <= h + tol);
    if !in_box {
        return false;
    }
    let lap = inst.laplacian_of(&tau.0);
    if lap.nrows() == 0 {
        return true;
    }
    let eig = SymmetricEigen::new(lap).eigenvalues;
    eig.min() >= -tol * (1.0 + eig.amax())
}

/// `L >= -delta I` via a Cholesky attempt; cheaper than an eigendecomposition.
fn psd_within(lap: &DMatrix<f64>, delta: f64) -> bool {
    if lap.nrows() == 0 {
        return true;
    }
    let mut shifted = lap.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += delta;
    }
    Cholesky::new(shifted).is_some()
}

fn clamp_to_dual_box(inst: &Instance, tau: &mut [f64]) {
    for ((t, l), h) in tau.iter_mut().zip(inst.dual_lo()).zip(inst.dual_hi()) {
        *t = t.clamp(*l, *h);
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn project_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * vals[j]);
    let mut out = &scaled * v.transpose();
    out = (&out + out.transpose()) * 0.5;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub projected: DualVariable,
    pub iterations: usize,
    /// `max(0, -lambda_min(L(tau0)))`.
    pub infeasibility_before: f64,
    /// Norm of the change in the last inner iteration.
    pub residual: f64,
}

/// How the dual iterate is pulled back into its feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DualProjection {
    /// Euclidean projection onto `E+`.
    #[default]
    Exact,
    /// Clamp onto the nonnegative part of the dual box, an inner
    /// approximation of `E+` that needs no eigendecomposition.
    Nonnegative,
}

/// Projection onto the nonnegative orthant intersected with the dual box.
pub fn project_nonnegative(inst: &Instance, tau0: &DualVariable) -> DualVariable {
    DualVariable(
        tau0.0
            .iter()
            .zip(inst.dual_lo().iter().zip(inst.dual_hi()))
            .map(|(t, (l, h))| t.clamp(l.max(0.0), *h))
            .collect(),
    )
}

/// Stateful projector onto `E+` that warm-starts from the last multiplier.
#[derive(Debug, Clone)]
pub struct EPlusProjector {
    pub tol: f64,
    pub max_iter: usize,
    multiplier: Option<DMatrix<f64>>,
    /// Calls that needed inner iterations, and the iterations they used.
    pub active_calls: usize,
    pub inner_iterations: usize,
}

impl Default for EPlusProjector {
    fn default() -> Self {
        Self::new(DEFAULT_TOL, DEFAULT_MAX_ITER)
    }
}

impl EPlusProjector {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        assert!(tol > 0.0 && max_iter >= 1, "projection needs tol > 0 and max_iter >= 1");
        EPlusProjector {
            tol,
            max_iter,
            multiplier: None,
            active_calls: 0,
            inner_iterations: 0,
        }
    }

    pub fn project(
        &mut self,
        inst: &Instance,
        tau0: &DualVariable,
    ) -> Result<ProjectionReport, ProjectionError> {
        let tol = self.tol;
        let n = inst.num_sensors();

        let in_box = tau0
            .0
            .iter()
            .zip(inst.dual_lo().iter().zip(inst.dual_hi()))
            .all(|(t, (l, h))| t >= l && t <= h);
        let lap0 = inst.laplacian_of(&tau0.0);
        if in_box && psd_within(&lap0, tol) {
            return Ok(ProjectionReport {
                projected: tau0.clone(),
                iterations: 1,
                infeasibility_before: 0.0,
                residual: 0.0,
            });
        }
        let infeasibility_before = (-min_eigenvalue(&lap0)).max(0.0);

        // the box projection may already be PSD, and is then the answer
        let mut clamped = tau0.0.clone();
        clamp_to_dual_box(inst, &mut clamped);
        if psd_within(&inst.laplacian_of(&clamped), tol) {
            self.multiplier = None;
            return Ok(ProjectionReport {
                residual: dist(&clamped, &tau0.0),
                projected: DualVariable(clamped),
                iterations: 1,
                infeasibility_before,
            });
        }

        self.active_calls += 1;
        let lipschitz = 2.0 * inst.max_degree() as f64 + 2.0;
        let step = 1.0 / lipschitz;
        let primal = |z: &DMatrix<f64>| -> Vec<f64> {
            let mut t = inst.laplacian_adjoint(z);
            for (v, t0) in t.iter_mut().zip(&tau0.0) {
                *v += t0;
            }
            clamp_to_dual_box(inst, &mut t);
            t
        };

        let mut z = match self.multiplier.take() {
            Some(m) if m.nrows() == n => m,
            _ => DMatrix::zeros(n, n),
        };
        let mut y = z.clone();
        let mut momentum = 1.0f64;
        let mut tau = primal(&z);
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=self.max_iter {
            iterations = it;
            let tau_y = primal(&y);
            let grad = inst.laplacian_of(&tau_y);
            let z_next = project_psd(&y - grad * step);
            let tau_next = primal(&z_next);
            residual = dist(&tau_next, &tau);

            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let restart = (&y - &z_next).dot(&(&z_next - &z)) > 0.0;
            if restart {
                momentum = 1.0;
                y = z_next.clone();
            } else {
                let beta = (momentum - 1.0) / next_momentum;
                y = &z_next + (&z_next - &z) * beta;
                momentum = next_momentum;
            }
            z = z_next;
            tau = tau_next;

            let scale = 1.0 + tau.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if residual <= tol * scale && psd_within(&inst.laplacian_of(&tau), tol) {
                converged = true;
                break;
            }
        }
        self.multiplier = Some(z);
        self.inner_iterations += iterations;

        if !converged {
            restore_feasibility(inst, &mut tau);
        }
        let report = ProjectionReport {
            projected: DualVariable(tau),
            iterations,
            infeasibility_before,
            residual,
        };
        if converged {
            Ok(report)
        } else {
            Err(ProjectionError::MaxInnerIterations(Box::new(report)))
        }
    }
}

/// Moves `tau` toward a strictly feasible interior point just far enough to
/// make `L(tau)` positive semidefinite (by concavity of `lambda_min`).
fn restore_feasibility(inst: &Instance, tau: &mut [f64]) {
    let lam = min_eigenvalue(&inst.laplacian_of(tau));
    let (interior, margin) = inst.interior_tau();
    if lam >= 0.0 || margin <= 0.0 {
        return;
    }
    let theta = (-lam / (-lam + margin) * (1.0 + 1e-12)).min(1.0);
    for (t, f) in tau.iter_mut().zip(interior) {
        *t = (1.0 - theta) * *t + theta * f;
    }
}

/// Cold-start Euclidean projection onto `E+`.
pub fn project_eplus(
    inst: &Instance,
    tau0: &DualVariable,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionReport, ProjectionError> {
    EPlusProjector::new(tol, max_iter).project(inst, tau0)
}
