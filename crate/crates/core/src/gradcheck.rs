//! Finite-difference self-checks of every analytic derivative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{self, DualVariable};
use crate::game;
use crate::instance::Instance;
use crate::network::SensorNetwork;

/// Relative tolerance for first derivatives.
pub const GRADIENT_TOL: f64 = 1e-6;
/// Absolute tolerance for the Hessian of `Psi` in `x`.
pub const HESSIAN_TOL: f64 = 1e-4;
/// Agreement required between the potential gradient and each payoff gradient.
pub const BLOCK_TOL: f64 = 1e-12;

const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst error over all sampled points.
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + h;
            let up = f(&p);
            p[k] = x[k] - h;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b||_inf / max(1, ||a||_inf)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let scale = a.iter().map(|u| u.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Checks `grad P`, `grad_x Psi`, `grad_tau Psi`, the per-player gradient
/// blocks and `Q(tau)` against finite differences at `points` random
/// points of a random rigid instance.
pub fn run_gradient_checks(points: usize, seed: u64) -> Vec<CheckResult> {
    let net = SensorNetwork::random(2, 10, 4, 0.7, seed).expect("valid random network");
    let inst = Instance::new(net, None).expect("unit boxes are valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d);
    let q = inst.num_edges();
    let m = inst.num_vars();

    let mut worst = [0.0f64; 5];
    for p in 0..points {
        let x: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let tau = DualVariable((0..q).map(|_| rng.gen_range(-0.5..0.5)).collect());

        let fd = central_gradient(|y| game::potential(&inst, y), &x, FD_STEP);
        worst[0] = worst[0].max(relative_error(&game::grad_potential(&inst, &x), &fd));

        let fd = central_gradient(|y| dual::psi(&inst, y, &tau), &x, FD_STEP);
        worst[1] = worst[1].max(relative_error(&dual::grad_psi_x(&inst, &x, &tau), &fd));

        let fd = central_gradient(|t| dual::psi(&inst, &x, &DualVariable(t.to_vec())), &tau.0, FD_STEP);
        worst[2] = worst[2].max(relative_error(&dual::grad_psi_tau(&inst, &x, &tau), &fd));

        let full = game::grad_potential(&inst, &x);
        let n = inst.dim();
        for i in 0..inst.num_sensors() {
            let block = game::grad_payoff(&inst, inst.network().node(i), &x).expect("sensor index");
            let gap = block
                .iter()
                .zip(&full[i * n..(i + 1) * n])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst[3] = worst[3].max(gap);
        }

        // two distinct x per tau is enough to expose x-dependence
        if p < 2 {
            worst[4] = worst[4].max(dual::hessian_psi_x_check(&inst, &x, &tau));
        }
    }

    let names = [
        ("potential gradient", GRADIENT_TOL),
        ("complementary gradient in x", GRADIENT_TOL),
        ("complementary gradient in tau", GRADIENT_TOL),
        ("payoff gradient blocks", BLOCK_TOL),
        ("complementary Hessian in x", HESSIAN_TOL),
    ];
    names
        .iter()
        .zip(worst)
        .map(|((name, tol), error)| CheckResult {
            name: name.to_string(),
            error,
            tolerance: *tol,
            passed: error <= *tol,
        })
        .collect()
}
