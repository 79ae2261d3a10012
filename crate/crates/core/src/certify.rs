//! Identification of the global equilibrium: the duality-relation
//! certificate, a deviation probe, error metrics and a grid oracle for tiny
//! instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{self, DualVariable};
use crate::error::{NetworkError, OracleError};
use crate::game::{self, StrategyProfile};
use crate::instance::Instance;
use crate::network::SensorNetwork;
use crate::projection::{self, EPlusProjector};

/// Default tolerance on the duality relation.
pub const DEFAULT_EPS_CERT: f64 = 1e-4;

/// Default stationarity tolerance, `1e-5 sqrt(nN)`.
pub fn default_eps_stat(inst: &Instance) -> f64 {
    1e-5 * (inst.num_vars() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Stationary in both blocks and the duality relation holds on every edge.
    GlobalNE,
    /// Stationary, but the dual point is not the gradient image of the primal one.
    StationaryOnly,
    NotStationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `|tau_k - 2(||x_i - x_j||^2 - d_k^2)|` per edge.
    pub duality_residuals: Vec<f64>,
    pub max_residual: f64,
    /// `||x - Proj_Omega(x - grad_x Psi)||`.
    pub stationary_residual_x: f64,
    /// `||tau - Proj_E+(tau + grad_tau Psi)||`.
    pub stationary_residual_tau: f64,
    pub verdict: Verdict,
}

/// Checks the pair `(x, tau)` for stationarity of the complementary function
/// and for the duality relation.
pub fn certify(inst: &Instance, x: &[f64], tau: &DualVariable, eps_cert: f64, eps_stat: f64) -> Certificate {
    let xi = dual::lambda_map(inst, x);
    let image = dual::duality_map(inst, &xi);
    let duality_residuals: Vec<f64> = tau.0.iter().zip(&image.0).map(|(t, s)| (t - s).abs()).collect();
    let max_residual = duality_residuals.iter().copied().fold(0.0, f64::max);

    let n = inst.dim();
    let gx = dual::grad_psi_x(inst, x, tau);
    let mut sx = 0.0;
    for (i, b) in inst.boxes().iter().enumerate() {
        for c in 0..n {
            let v = x[i * n + c];
            let p = (v - gx[i * n + c]).clamp(b.lo[c], b.hi[c]);
            sx += (v - p) * (v - p);
        }
    }
    let stationary_residual_x = sx.sqrt();

    let gt = dual::grad_psi_tau(inst, x, tau);
    let ascent = DualVariable(tau.0.iter().zip(&gt).map(|(t, g)| t + g).collect());
    let projected = project_quietly(inst, &ascent);
    let stationary_residual_tau = tau
        .0
        .iter()
        .zip(&projected.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let stationary = stationary_residual_x <= eps_stat && stationary_residual_tau <= eps_stat;
    let verdict = if !stationary {
        Verdict::NotStationary
    } else if max_residual <= eps_cert {
        Verdict::GlobalNE
    } else {
        Verdict::StationaryOnly
    };
    Certificate {
        duality_residuals,
        max_residual,
        stationary_residual_x,
        stationary_residual_tau,
        verdict,
    }
}

/// [`certify`] with the default tolerances.
pub fn certify_default(inst: &Instance, x: &[f64], tau: &DualVariable) -> Certificate {
    certify(inst, x, tau, DEFAULT_EPS_CERT, default_eps_stat(inst))
}

fn project_quietly(inst: &Instance, tau: &DualVariable) -> DualVariable {
    let mut projector = EPlusProjector::new(projection::DEFAULT_TOL, 10 * projection::DEFAULT_MAX_ITER);
    match projector.project(inst, tau) {
        Ok(r) => r.projected,
        Err(crate::error::ProjectionError::MaxInnerIterations(r)) => {
            log::warn!("certificate projection stopped at residual {:.3e}", r.residual);
            r.projected
        }
    }
}

/// The most favourable feasible dual for a primal point:
/// `Proj_E+(dualityMap(Lambda(x)))`.
pub fn favorable_dual(inst: &Instance, x: &[f64]) -> DualVariable {
    let image = dual::duality_map(inst, &dual::lambda_map(inst, x));
    project_quietly(inst, &image)
}

/// Largest `J_i(x) - J_i(x'_i, x_-i)` over random and corner deviations of
/// every player. A positive value falsifies the equilibrium claim.
pub fn verify_nash_by_deviation(inst: &Instance, x: &[f64], samples: usize, seed: u64) -> Result<f64, OracleError> {
    if samples == 0 {
        return Err(OracleError::NoSamples);
    }
    let n = inst.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut moved = x.to_vec();
    for (i, b) in inst.boxes().iter().enumerate() {
        let player = inst.network().node(i);
        let base = game::payoff(inst, player, x).expect("sensor index");
        let mut candidates = b.vertices();
        for _ in 0..samples {
            candidates.push((0..n).map(|c| b.lo[c] + (b.hi[c] - b.lo[c]) * rng.gen::<f64>()).collect());
        }
        for cand in candidates {
            moved[i * n..(i + 1) * n].copy_from_slice(&cand);
            let j = game::payoff(inst, player, &moved).expect("sensor index");
            worst = worst.max(base - j);
        }
        moved[i * n..(i + 1) * n].copy_from_slice(&x[i * n..(i + 1) * n]);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_node_error: Vec<f64>,
    pub rmse: f64,
    pub max_error: f64,
}

pub fn error_report(net: &SensorNetwork, x: &[f64]) -> Result<ErrorReport, NetworkError> {
    let truth = net.flat_ground_truth()?;
    let n = net.dimension();
    let per_node_error: Vec<f64> = (0..net.num_sensors())
        .map(|i| {
            (0..n)
                .map(|c| (x[i * n + c] - truth[i * n + c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let count = per_node_error.len().max(1) as f64;
    let rmse = (per_node_error.iter().map(|e| e * e).sum::<f64>() / count).sqrt();
    let max_error = per_node_error.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport {
        per_node_error,
        rmse,
        max_error,
    })
}

/// Largest number of coordinates the grid oracle accepts.
pub const ORACLE_MAX_VARS: usize = 6;
const POLISH_MAX_STEPS: usize = 50_000;
const ARMIJO: f64 = 1e-4;

/// Projected gradient descent on the potential with backtracking, run until
/// the step stalls. Returns the final potential.
fn polish(inst: &Instance, x: &mut [f64]) -> f64 {
    let n = inst.dim();
    let mut p = game::potential(inst, x);
    let mut step = 1.0;
    let mut trial = x.to_vec();
    for _ in 0..POLISH_MAX_STEPS {
        let g = game::grad_potential(inst, x);
        let mut moved;
        loop {
            for (i, b) in inst.boxes().iter().enumerate() {
                for c in 0..n {
                    let k = i * n + c;
                    trial[k] = (x[k] - step * g[k]).clamp(b.lo[c], b.hi[c]);
                }
            }
            moved = trial.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let pt = game::potential(inst, &trial);
            if pt <= p - ARMIJO / step * moved || step < 1e-20 {
                p = pt;
                break;
            }
            step *= 0.5;
        }
        x.copy_from_slice(&trial);
        if moved.sqrt() <= 1e-15 {
            break;
        }
        step = (2.0 * step).min(1.0);
    }
    p
}

/// Exhaustive search over a grid splitting every box axis into `resolution`
/// equal intervals, followed by projected gradient polish from the best grid
/// point.
/// Ties go to the lowest linear grid index.
pub fn brute_force_global_min(inst: &Instance, resolution: usize) -> Result<(StrategyProfile, f64), OracleError> {
    let vars = inst.num_vars();
    if vars > ORACLE_MAX_VARS {
        return Err(OracleError::TooLarge(vars));
    }
    if resolution < 10 {
        return Err(OracleError::ResolutionTooLow(resolution));
    }
    let n = inst.dim();
    let axis = |v: usize, t: usize| -> f64 {
        let b = &inst.boxes()[v / n];
        let c = v % n;
        b.lo[c] + (b.hi[c] - b.lo[c]) * t as f64 / resolution as f64
    };

    let mut digits = vec![0usize; vars];
    let mut x: Vec<f64> = (0..vars).map(|v| axis(v, 0)).collect();
    let mut best = x.clone();
    let mut best_p = game::potential(inst, &x);
    'grid: loop {
        // odometer increment, last coordinate fastest
        let mut v = vars;
        loop {
            if v == 0 {
                break 'grid;
            }
            v -= 1;
            digits[v] += 1;
            if digits[v] <= resolution {
                x[v] = axis(v, digits[v]);
                break;
            }
            digits[v] = 0;
            x[v] = axis(v, 0);
        }
        let p = game::potential(inst, &x);
        if p < best_p {
            best_p = p;
            best.copy_from_slice(&x);
        }
    }

    let p = polish(inst, &mut best);
    Ok((StrategyProfile::new(n, best), p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::AxisBox;
    use crate::network::SensorNetwork;

    fn trilateration() -> Instance {
        let net = SensorNetwork::new(
            2,
            1,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            Some(vec![vec![0.25, 0.25]]),
            2.0,
        )
        .unwrap();
        Instance::new(net, None).unwrap()
    }

    #[test]
    fn ground_truth_with_zero_dual_is_global() {
        let net = SensorNetwork::random(2, 8, 3, 0.8, 11).unwrap();
        let inst = Instance::new(net, None).unwrap();
        let x = inst.ground_truth().unwrap();
        let cert = certify_default(&inst, &x, &DualVariable::zeros(inst.num_edges()));
        assert_eq!(cert.verdict, Verdict::GlobalNE);
        assert!(cert.max_residual < 1e-12);
        assert!(cert.stationary_residual_x == 0.0);
        assert!(cert.stationary_residual_tau < 1e-12);
    }

    #[test]
    fn perturbed_truth_is_not_stationary() {
        let inst = trilateration();
        let cert = certify_default(&inst, &[0.251, 0.25], &DualVariable::zeros(inst.num_edges()));
        assert_eq!(cert.verdict, Verdict::NotStationary);
        // grad_tau Psi = xi - d^2; the edge to (1,0) shrinks by 2 * 0.75e-3,
        // the others grow, so the ascent step keeps two components
        assert!(cert.stationary_residual_tau > default_eps_stat(&inst));
    }

    #[test]
    fn tolerances_only_weaken_monotonically() {
        let inst = trilateration();
        let mut tau = DualVariable::zeros(inst.num_edges());
        tau.0[0] = 1e-3;
        let tight = certify(&inst, &[0.25, 0.25], &tau, 1e-4, 1.0);
        let loose = certify(&inst, &[0.25, 0.25], &tau, 1e-2, 1.0);
        assert_eq!(tight.verdict, Verdict::StationaryOnly);
        assert_eq!(loose.verdict, Verdict::GlobalNE);
    }

    #[test]
    fn error_report_arithmetic() {
        let net = SensorNetwork::new(
            2,
            2,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            Some(vec![vec![0.1, 0.1], vec![0.5, 0.5]]),
            2.0,
        )
        .unwrap();
        let r = error_report(&net, &[0.4, 0.5, 0.5, 0.5]).unwrap();
        assert!((r.max_error - 0.5).abs() < 1e-15);
        assert!((r.rmse - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.per_node_error[1], 0.0);

        let bare = SensorNetwork::new(2, 2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], None, 1.0).unwrap();
        assert_eq!(error_report(&bare, &[0.0, 0.0]), Err(NetworkError::GroundTruthRequired));
    }

    #[test]
    fn deviation_probe() {
        let inst = trilateration();
        assert!(verify_nash_by_deviation(&inst, &[0.25, 0.25], 50, 1).unwrap() <= 0.0);
        assert!(verify_nash_by_deviation(&inst, &[0.9, 0.9], 50, 1).unwrap() > 0.0);
        assert_eq!(verify_nash_by_deviation(&inst, &[0.25, 0.25], 0, 1), Err(OracleError::NoSamples));
    }

    #[test]
    fn oracle_on_trilateration() {
        let inst = trilateration();
        let (x, p) = brute_force_global_min(&inst, 200).unwrap();
        assert!((x.positions[0] - 0.25).abs() <= 1e-3 && (x.positions[1] - 0.25).abs() <= 1e-3);
        assert!(p <= 1e-8, "P = {p}");
    }

    #[test]
    fn oracle_guards() {
        let inst = trilateration();
        assert_eq!(brute_force_global_min(&inst, 9).unwrap_err(), OracleError::ResolutionTooLow(9));
        let net = SensorNetwork::random(2, 4, 3, 1.0, 2).unwrap();
        let inst = Instance::new(net, None).unwrap();
        assert_eq!(brute_force_global_min(&inst, 10).unwrap_err(), OracleError::TooLarge(8));
    }

    #[test]
    fn oracle_on_single_range() {
        // one range measurement to a single anchor leaves a circle of
        // minimizers: the frame is not pinned
        let net = SensorNetwork::new(2, 1, vec![vec![0.5, 0.5]], Some(vec![vec![0.8, 0.5]]), 1.0).unwrap();
        let inst = Instance::new(net, Some(vec![AxisBox::unit(2)])).unwrap();
        assert!(inst.network().num_anchors() < inst.dim() + 1);
        // two nodes joined by one bar are rigid as a framework; it is the
        // missing anchors that leave the frame free to rotate
        assert!(crate::network::is_generically_rigid(inst.network(), inst.edges()).unwrap());
        let (x, p) = brute_force_global_min(&inst, 50).unwrap();
        assert!(p < 1e-10);
        let r = ((x.positions[0] - 0.5).powi(2) + (x.positions[1] - 0.5).powi(2)).sqrt();
        assert!((r - 0.3).abs() < 1e-5);
    }
}
