//! A localization problem ready for solving: network, edge index, strategy
//! boxes and the per-edge quantities every evaluation needs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::network::{EdgeKind, EdgeSet, SensorNetwork};

/// Axis-aligned box `prod_k [lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn unit(dim: usize) -> Self {
        AxisBox {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_valid(&self) -> bool {
        self.lo.len() == self.hi.len()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .all(|(l, h)| l.is_finite() && h.is_finite() && l <= h)
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Corners of the box, `2^dim` of them.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..(1usize << d))
            .map(|mask| {
                (0..d)
                    .map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    net: SensorNetwork,
    edges: EdgeSet,
    boxes: Vec<AxisBox>,
    /// Edge indices incident to each sensor (SS and SA only).
    incident: Vec<Vec<usize>>,
    dual_lo: Vec<f64>,
    dual_hi: Vec<f64>,
    max_degree: usize,
    interior_tau: Vec<f64>,
    interior_margin: f64,
}

impl Instance {
    /// Builds the edge set from the ground truth. `boxes` defaults to the unit box.
    pub fn new(net: SensorNetwork, boxes: Option<Vec<AxisBox>>) -> Result<Self, NetworkError> {
        let edges = EdgeSet::build(&net)?;
        Self::from_parts(net, edges, boxes)
    }

    pub fn from_parts(
        net: SensorNetwork,
        edges: EdgeSet,
        boxes: Option<Vec<AxisBox>>,
    ) -> Result<Self, NetworkError> {
        let n = net.dimension();
        let sensors = net.num_sensors();
        let boxes = boxes.unwrap_or_else(|| vec![AxisBox::unit(n); sensors]);
        if boxes.len() != sensors {
            return Err(NetworkError::BoxCount(boxes.len(), sensors));
        }
        for (s, b) in boxes.iter().enumerate() {
            if b.dim() != n || !b.is_valid() {
                return Err(NetworkError::BadBox { sensor: s + 1 });
            }
        }

        let mut incident = vec![Vec::new(); sensors];
        let mut dual_lo = vec![0.0; edges.len()];
        let mut dual_hi = vec![0.0; edges.len()];
        for (k, e) in edges.iter().enumerate() {
            let a = e.i.global();
            let b = e.j.global();
            let reach = match e.kind {
                EdgeKind::AA => continue,
                EdgeKind::SA => {
                    incident[a].push(k);
                    let anchor = net.anchor(b - sensors);
                    (0..n)
                        .map(|c| {
                            let lo = boxes[a].lo[c] - anchor[c];
                            let hi = boxes[a].hi[c] - anchor[c];
                            (lo * lo).max(hi * hi)
                        })
                        .sum::<f64>()
                }
                EdgeKind::SS => {
                    incident[a].push(k);
                    incident[b].push(k);
                    (0..n)
                        .map(|c| {
                            let u = boxes[a].hi[c] - boxes[b].lo[c];
                            let v = boxes[b].hi[c] - boxes[a].lo[c];
                            (u * u).max(v * v)
                        })
                        .sum::<f64>()
                }
            };
            dual_lo[k] = -2.0 * e.distance_sq;
            dual_hi[k] = 2.0 * (reach - e.distance_sq).max(0.0);
        }
        let max_degree = incident.iter().map(Vec::len).max().unwrap_or(0);

        let mut inst = Instance {
            net,
            edges,
            boxes,
            incident,
            dual_lo,
            dual_hi,
            max_degree,
            interior_tau: Vec::new(),
            interior_margin: 0.0,
        };
        // a strictly feasible dual point (when one exists), used to restore
        // feasibility after inexact projections
        let interior: Vec<f64> = inst
            .edges
            .iter()
            .zip(&inst.dual_hi)
            .map(|(e, hi)| if e.kind == EdgeKind::AA { 0.0 } else { hi.min(1.0) })
            .collect();
        let lap = inst.laplacian_of(&interior);
        let margin = if sensors > 0 {
            SymmetricEigen::new(lap).eigenvalues.min()
        } else {
            0.0
        };
        inst.interior_tau = interior;
        inst.interior_margin = margin.max(0.0);
        Ok(inst)
    }

    pub fn network(&self) -> &SensorNetwork {
        &self.net
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn boxes(&self) -> &[AxisBox] {
        &self.boxes
    }

    pub fn dim(&self) -> usize {
        self.net.dimension()
    }

    pub fn num_sensors(&self) -> usize {
        self.net.num_sensors()
    }

    /// `n * N`, the length of a stacked strategy profile.
    pub fn num_vars(&self) -> usize {
        self.dim() * self.num_sensors()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn incident(&self, sensor: usize) -> &[usize] {
        &self.incident[sensor]
    }

    /// Lower bounds of the dual box.
    pub fn dual_lo(&self) -> &[f64] {
        &self.dual_lo
    }

    /// Upper bounds of the dual box.
    pub fn dual_hi(&self) -> &[f64] {
        &self.dual_hi
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub(crate) fn interior_tau(&self) -> (&[f64], f64) {
        (&self.interior_tau, self.interior_margin)
    }

    /// Position of node `global` under profile `x`: the estimate for a
    /// sensor, the fixed coordinates for an anchor.
    #[inline]
    pub fn endpoint<'a>(&'a self, x: &'a [f64], global: usize) -> &'a [f64] {
        let n = self.dim();
        let sensors = self.num_sensors();
        if global < sensors {
            &x[global * n..(global + 1) * n]
        } else {
            self.net.anchor(global - sensors)
        }
    }

    /// `||y_i - y_j||^2` for edge `k` under profile `x`.
    #[inline]
    pub fn edge_sq_len(&self, x: &[f64], k: usize) -> f64 {
        let e = &self.edges.edges()[k];
        let a = self.endpoint(x, e.i.global());
        let b = self.endpoint(x, e.j.global());
        a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
    }

    /// Grounded Laplacian for an arbitrary edge weighting; AA weights are ignored.
    pub fn laplacian_of(&self, weights: &[f64]) -> DMatrix<f64> {
        let sensors = self.num_sensors();
        let mut l = DMatrix::zeros(sensors, sensors);
        for (k, e) in self.edges.iter().enumerate() {
            let w = weights[k];
            match e.kind {
                EdgeKind::AA => {}
                EdgeKind::SA => l[(e.i.global(), e.i.global())] += w,
                EdgeKind::SS => {
                    let (a, b) = (e.i.global(), e.j.global());
                    l[(a, a)] += w;
                    l[(b, b)] += w;
                    l[(a, b)] -= w;
                    l[(b, a)] -= w;
                }
            }
        }
        l
    }

    /// Adjoint of [`Instance::laplacian_of`]: `<Z, L(w)> = <adjoint(Z), w>`.
    pub fn laplacian_adjoint(&self, z: &DMatrix<f64>) -> Vec<f64> {
        self.edges
            .iter()
            .map(|e| match e.kind {
                EdgeKind::AA => 0.0,
                EdgeKind::SA => z[(e.i.global(), e.i.global())],
                EdgeKind::SS => {
                    let (a, b) = (e.i.global(), e.j.global());
                    z[(a, a)] + z[(b, b)] - z[(a, b)] - z[(b, a)]
                }
            })
            .collect()
    }

    /// Ground truth as a profile, if known.
    pub fn ground_truth(&self) -> Result<Vec<f64>, NetworkError> {
        self.net.flat_ground_truth()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_box_for_trilateration() {
        let net = SensorNetwork::new(
            2,
            1,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            Some(vec![vec![0.25, 0.25]]),
            2.0,
        )
        .unwrap();
        let inst = Instance::new(net, None).unwrap();
        // first edge: sensor to anchor at origin, farthest corner (1,1)
        assert_eq!(inst.dual_lo()[0], -0.25);
        assert_eq!(inst.dual_hi()[0], 2.0 * (2.0 - 0.125));
        assert_eq!(inst.incident(0), &[0, 1, 2]);
        let (_, margin) = inst.interior_tau();
        assert!(margin > 0.0);
    }

    #[test]
    fn adjoint_matches_inner_product() {
        let net = crate::network::SensorNetwork::random(2, 5, 3, 0.7, 3).unwrap();
        let inst = Instance::new(net, None).unwrap();
        let w: Vec<f64> = (0..inst.num_edges()).map(|k| (k as f64 * 0.37).sin()).collect();
        let s = inst.num_sensors();
        let z = DMatrix::from_fn(s, s, |i, j| ((i * 7 + j * 3) as f64).cos() + ((j * 7 + i * 3) as f64).cos());
        let lhs = z.dot(&inst.laplacian_of(&w));
        let rhs: f64 = inst.laplacian_adjoint(&z).iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn box_vertices() {
        let b = AxisBox::unit(3);
        assert_eq!(b.vertices().len(), 8);
        assert!(b.vertices().iter().all(|v| b.contains(v)));
    }
}
