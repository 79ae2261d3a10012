//! The localization game: payoffs, the shared potential and first-order
//! Nash stationarity.
//!
//! Player `i`'s payoff sums `(||x_i - y_j||^2 - d_ij^2)^2` over *every* edge
//! incident to `i`, anchor neighbours included. With anchor terms left out the
//! unilateral-deviation identity against the potential would fail on every
//! sensor-anchor edge, so the game would not be a potential game.

use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::instance::Instance;
use crate::network::{EdgeKind, NodeId};

/// Stacked position estimates `col{x_1, ..., x_N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub dim: usize,
    pub positions: Vec<f64>,
}

impl StrategyProfile {
    pub fn new(dim: usize, positions: Vec<f64>) -> Self {
        StrategyProfile { dim, positions }
    }

    pub fn num_players(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn player_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.positions
    }

    pub fn in_boxes(&self, inst: &Instance) -> bool {
        inst.boxes()
            .iter()
            .enumerate()
            .all(|(i, b)| b.contains(self.player(i)))
    }
}

/// Result of comparing a unilateral deviation's effect on the potential and on
/// the deviating player's payoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCheck {
    pub player: NodeId,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub delta_potential: f64,
    pub delta_payoff: f64,
}

impl DeviationCheck {
    pub fn residual(&self) -> f64 {
        (self.delta_potential - self.delta_payoff).abs()
    }
}

/// Threshold on the per-player residual for declaring Nash stationarity.
pub fn stationarity_threshold(dim: usize) -> f64 {
    1e-5 * (dim as f64).sqrt()
}

fn player_index(inst: &Instance, player: NodeId) -> Result<usize, GameError> {
    if player.is_anchor() || player.global() >= inst.num_sensors() {
        Err(GameError::NotAPlayer(player.index))
    } else {
        Ok(player.global())
    }
}

#[inline]
fn edge_residual(inst: &Instance, x: &[f64], k: usize) -> f64 {
    inst.edge_sq_len(x, k) - inst.edges().edges()[k].distance_sq
}

/// `J_i(x)`.
pub fn payoff(inst: &Instance, player: NodeId, x: &[f64]) -> Result<f64, GameError> {
    let i = player_index(inst, player)?;
    Ok(inst
        .incident(i)
        .iter()
        .map(|&k| {
            let r = edge_residual(inst, x, k);
            r * r
        })
        .sum())
}

/// `P(x)`; anchor-anchor terms vanish with exact anchors and are skipped.
pub fn potential(inst: &Instance, x: &[f64]) -> f64 {
    inst.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind != EdgeKind::AA)
        .map(|(k, _)| {
            let r = edge_residual(inst, x, k);
            r * r
        })
        .sum()
}

/// `grad P(x)`, stacked like `x`.
pub fn grad_potential(inst: &Instance, x: &[f64]) -> Vec<f64> {
    let n = inst.dim();
    let mut g = vec![0.0; x.len()];
    for (k, e) in inst.edges().iter().enumerate() {
        if e.kind == EdgeKind::AA {
            continue;
        }
        let a = e.i.global();
        let b = e.j.global();
        let r = edge_residual(inst, x, k);
        let pa = inst.endpoint(x, a);
        let pb = inst.endpoint(x, b);
        for c in 0..n {
            let v = 4.0 * r * (pa[c] - pb[c]);
            g[a * n + c] += v;
            if e.kind == EdgeKind::SS {
                g[b * n + c] -= v;
            }
        }
    }
    g
}

/// `grad_{x_i} J_i(x)`. Equal to block `i` of [`grad_potential`].
pub fn grad_payoff(inst: &Instance, player: NodeId, x: &[f64]) -> Result<Vec<f64>, GameError> {
    let i = player_index(inst, player)?;
    Ok(player_gradient(inst, i, x))
}

pub(crate) fn player_gradient(inst: &Instance, i: usize, x: &[f64]) -> Vec<f64> {
    let n = inst.dim();
    let mut g = vec![0.0; n];
    let own = inst.endpoint(x, i);
    for &k in inst.incident(i) {
        let e = &inst.edges().edges()[k];
        let other = if e.i.global() == i { e.j.global() } else { e.i.global() };
        let r = edge_residual(inst, x, k);
        let py = inst.endpoint(x, other);
        for c in 0..n {
            g[c] += 4.0 * r * (own[c] - py[c]);
        }
    }
    g
}

/// Evaluates both sides of the potential identity for player `i` moving
/// from `x_i` to `x_prime_i`.
pub fn check_potential_identity(
    inst: &Instance,
    player: NodeId,
    x: &[f64],
    x_prime_i: &[f64],
) -> Result<DeviationCheck, GameError> {
    let i = player_index(inst, player)?;
    let n = inst.dim();
    let mut moved = x.to_vec();
    moved[i * n..(i + 1) * n].copy_from_slice(x_prime_i);
    let delta_potential = potential(inst, &moved) - potential(inst, x);
    let delta_payoff = payoff(inst, player, &moved)? - payoff(inst, player, x)?;
    Ok(DeviationCheck {
        player,
        from: x[i * n..(i + 1) * n].to_vec(),
        to: x_prime_i.to_vec(),
        delta_potential,
        delta_payoff,
    })
}

/// Per-player residual `||x_i - Proj_{Omega_i}(x_i - step * grad J_i)||`,
/// zero exactly at Nash stationary points.
pub fn nash_stationarity_residual(inst: &Instance, x: &[f64], probe_step: f64) -> Vec<f64> {
    let n = inst.dim();
    (0..inst.num_sensors())
        .map(|i| {
            let g = player_gradient(inst, i, x);
            let b = &inst.boxes()[i];
            (0..n)
                .map(|c| {
                    let xi = x[i * n + c];
                    let p = (xi - probe_step * g[c]).clamp(b.lo[c], b.hi[c]);
                    (xi - p) * (xi - p)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn sensor(inst: &Instance, i: usize) -> NodeId {
        inst.network().node(i)
    }

    #[test]
    fn trilateration_values() {
        let inst = trilateration();
        let p1 = sensor(&inst, 0);
        assert_eq!(payoff(&inst, p1, &[0.25, 0.25]).unwrap(), 0.0);
        assert_eq!(potential(&inst, &[0.25, 0.25]), 0.0);
        assert!((payoff(&inst, p1, &[0.0, 0.0]).unwrap() - 0.296875).abs() < 1e-15);
        assert!((potential(&inst, &[0.0, 0.0]) - 0.296875).abs() < 1e-15);
        assert_eq!(grad_potential(&inst, &[0.25, 0.25]), vec![0.0, 0.0]);

        let chk = check_potential_identity(&inst, p1, &[0.0, 0.0], &[0.25, 0.25]).unwrap();
        assert!((chk.delta_potential + 0.296875).abs() < 1e-15);
        assert!((chk.delta_payoff + 0.296875).abs() < 1e-15);
        let null = check_potential_identity(&inst, p1, &[0.3, 0.1], &[0.3, 0.1]).unwrap();
        assert_eq!((null.delta_potential, null.delta_payoff), (0.0, 0.0));
    }

    #[test]
    fn anchors_are_not_players() {
        let inst = trilateration();
        let anchor = inst.network().node(1);
        assert_eq!(payoff(&inst, anchor, &[0.0, 0.0]), Err(GameError::NotAPlayer(2)));
    }

    #[test]
    fn single_edge_plug_in() {
        // one sensor, anchor at the origin, d^2 = 1
        let net = SensorNetwork::new(2, 1, vec![vec![0.0, 0.0]], Some(vec![vec![1.0, 0.0]]), 2.0).unwrap();
        let inst = Instance::new(net, Some(vec![crate::AxisBox { lo: vec![-3.0; 2], hi: vec![3.0; 2] }])).unwrap();
        assert_eq!(payoff(&inst, inst.network().node(0), &[2.0, 0.0]).unwrap(), 9.0);

        // one SS edge with d^2 = 1 and an out-of-range anchor
        let net = SensorNetwork::new(
            2,
            2,
            vec![vec![5.0, 5.0]],
            Some(vec![vec![0.0, 0.0], vec![1.0, 0.0]]),
            1.5,
        )
        .unwrap();
        let inst = Instance::new(net, Some(vec![crate::AxisBox { lo: vec![-3.0; 2], hi: vec![3.0; 2] }; 2])).unwrap();
        assert_eq!(inst.num_edges(), 1);
        assert_eq!(potential(&inst, &[0.0, 0.0, 2.0, 0.0]), 9.0);
        let g = grad_potential(&inst, &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(&g[..2], &[24.0, 0.0]);
        assert_eq!(&g[2..], &[-24.0, 0.0]);
    }

    #[test]
    fn stationarity_residuals() {
        let inst = trilateration();
        let r = nash_stationarity_residual(&inst, &[0.25, 0.25], 1.0);
        assert_eq!(r, vec![0.0]);
        // at the origin the gradient is 4*0.375*((-1,0) + (0,-1)) = (-1.5, -1.5)
        let g = grad_payoff(&inst, inst.network().node(0), &[0.0, 0.0]).unwrap();
        assert!((g[0] + 1.5).abs() < 1e-15 && (g[1] + 1.5).abs() < 1e-15);
        let r = nash_stationarity_residual(&inst, &[0.0, 0.0], 1.0);
        assert!(r[0] > 1e-3);
        assert!((r[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn box_face_absorbs_outward_gradient() {
        // the true position lies beyond the box face x = 1
        let net = SensorNetwork::new(2, 1, vec![vec![0.0, 0.5]], Some(vec![vec![2f64.sqrt(), 0.5]]), 2.0).unwrap();
        let inst = Instance::new(net, None).unwrap();
        let g = grad_payoff(&inst, inst.network().node(0), &[1.0, 0.5]).unwrap();
        assert!(g[0] < 0.0);
        assert_eq!(nash_stationarity_residual(&inst, &[1.0, 0.5], 1.0), vec![0.0]);
        assert_eq!(nash_stationarity_residual(&inst, &[1.0, 0.5], 0.5), vec![0.0]);
    }
}
