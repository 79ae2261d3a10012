//! Sensor network instances, the sensing graph and rigidity checks.
//!
//! Nodes use a single global index space: non-anchors occupy `0..N` and
//! anchors `N..N+M` internally. [`NodeId`] exposes the 1-based numbering
//! used in reports and documents.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

/// Seed used by the randomized rigidity tests when the caller does not supply one.
pub const RIGIDITY_SEED: u64 = 0x5eed_0f_71_9d;
/// Magnitude of the generic perturbation applied before rank tests.
pub const GENERIC_PERTURBATION: f64 = 1e-3;
/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    NonAnchor,
    Anchor,
}

/// A node, numbered from 1. Non-anchors are `1..=N`, anchors `N+1..=N+M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub index: usize,
    pub kind: NodeKind,
}

impl NodeId {
    pub fn from_global(global: usize, num_sensors: usize) -> Self {
        let kind = if global < num_sensors {
            NodeKind::NonAnchor
        } else {
            NodeKind::Anchor
        };
        NodeId {
            index: global + 1,
            kind,
        }
    }

    /// Zero-based global index.
    pub fn global(self) -> usize {
        self.index - 1
    }

    pub fn is_anchor(self) -> bool {
        self.kind == NodeKind::Anchor
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::NonAnchor => write!(f, "sensor {}", self.index),
            NodeKind::Anchor => write!(f, "anchor {}", self.index),
        }
    }
}

/// A static network in R^n with exact anchors and (optionally) the true
/// non-anchor positions from which the range measurements are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNetwork {
    dimension: usize,
    num_sensors: usize,
    anchors: Vec<Vec<f64>>,
    ground_truth: Option<Vec<Vec<f64>>>,
    sensing_radius: f64,
}

impl SensorNetwork {
    pub fn new(
        dimension: usize,
        num_sensors: usize,
        anchors: Vec<Vec<f64>>,
        ground_truth: Option<Vec<Vec<f64>>>,
        sensing_radius: f64,
    ) -> Result<Self, NetworkError> {
        if !(dimension == 2 || dimension == 3) {
            return Err(NetworkError::BadDimension(dimension));
        }
        if num_sensors == 0 {
            return Err(NetworkError::NoSensors);
        }
        if anchors.is_empty() {
            return Err(NetworkError::NoAnchors);
        }
        if !(sensing_radius.is_finite() && sensing_radius >= 0.0) {
            return Err(NetworkError::BadRadius(sensing_radius));
        }
        let check = |pts: &[Vec<f64>]| -> Result<(), NetworkError> {
            for p in pts {
                if p.len() != dimension {
                    return Err(NetworkError::DimensionMismatch {
                        expected: dimension,
                        found: p.len(),
                    });
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(NetworkError::NonFinite);
                }
            }
            Ok(())
        };
        check(&anchors)?;
        if let Some(gt) = &ground_truth {
            if gt.len() != num_sensors {
                return Err(NetworkError::GroundTruthLength {
                    expected: num_sensors,
                    found: gt.len(),
                });
            }
            check(gt)?;
        }
        if anchors.len() < dimension + 1 {
            log::warn!(
                "{} anchors cannot pin a frame in R^{}; the localization may not be unique",
                anchors.len(),
                dimension
            );
        }
        Ok(SensorNetwork {
            dimension,
            num_sensors,
            anchors,
            ground_truth,
            sensing_radius,
        })
    }

    /// Draws anchors first, then the non-anchors, i.i.d. uniform on the unit
    /// hypercube.
    pub fn random(
        dimension: usize,
        num_sensors: usize,
        num_anchors: usize,
        sensing_radius: f64,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        if !(dimension == 2 || dimension == 3) {
            return Err(NetworkError::BadDimension(dimension));
        }
        if num_anchors < dimension + 1 {
            return Err(NetworkError::TooFewAnchors {
                dimension,
                anchors: num_anchors,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| (0..dimension).map(|_| rng.gen::<f64>()).collect())
                .collect()
        };
        let anchors = draw(num_anchors);
        let truth = draw(num_sensors);
        Self::new(dimension, num_sensors, anchors, Some(truth), sensing_radius)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_sensors + self.anchors.len()
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn anchor(&self, k: usize) -> &[f64] {
        &self.anchors[k]
    }

    pub fn ground_truth(&self) -> Option<&[Vec<f64>]> {
        self.ground_truth.as_deref()
    }

    pub fn sensing_radius(&self) -> f64 {
        self.sensing_radius
    }

    pub fn with_radius(&self, sensing_radius: f64) -> Result<Self, NetworkError> {
        Self::new(
            self.dimension,
            self.num_sensors,
            self.anchors.clone(),
            self.ground_truth.clone(),
            sensing_radius,
        )
    }

    pub fn node(&self, global: usize) -> NodeId {
        NodeId::from_global(global, self.num_sensors)
    }

    /// True position of any node (ground truth for non-anchors).
    pub fn true_position(&self, global: usize) -> Result<&[f64], NetworkError> {
        if global < self.num_sensors {
            let gt = self
                .ground_truth
                .as_ref()
                .ok_or(NetworkError::GroundTruthRequired)?;
            Ok(&gt[global])
        } else {
            Ok(&self.anchors[global - self.num_sensors])
        }
    }

    /// Ground truth flattened as `col{x_1, ..., x_N}`.
    pub fn flat_ground_truth(&self) -> Result<Vec<f64>, NetworkError> {
        let gt = self
            .ground_truth
            .as_ref()
            .ok_or(NetworkError::GroundTruthRequired)?;
        Ok(gt.iter().flatten().copied().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// sensor-sensor
    SS,
    /// sensor-anchor
    SA,
    /// anchor-anchor
    AA,
}

/// An edge with its exact (noise-free) range measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: NodeId,
    pub j: NodeId,
    pub kind: EdgeKind,
    pub distance: f64,
    /// Squared distance computed directly from coordinates.
    pub distance_sq: f64,
}

/// Edges in lexicographic `(i, j)` order; an edge's position is its dual index.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    edges: Vec<Edge>,
    index: HashMap<(usize, usize), usize>,
    isolated: Vec<NodeId>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

impl EdgeSet {
    /// Every SS/SA pair whose true distance is within the sensing radius,
    /// plus every anchor pair.
    ///
    /// Nodes left without any incident edge are logged and available via
    /// [`EdgeSet::isolated_nodes`]; this is not an error.
    pub fn build(net: &SensorNetwork) -> Result<Self, NetworkError> {
        if net.ground_truth().is_none() {
            return Err(NetworkError::GroundTruthRequired);
        }
        let total = net.num_nodes();
        let radius = net.sensing_radius();
        let mut edges = Vec::new();
        for i in 0..total {
            let pi = net.true_position(i)?;
            for j in (i + 1)..total {
                let pj = net.true_position(j)?;
                let a = net.node(i);
                let b = net.node(j);
                let kind = match (a.is_anchor(), b.is_anchor()) {
                    (false, false) => EdgeKind::SS,
                    (true, true) => EdgeKind::AA,
                    _ => EdgeKind::SA,
                };
                let d2 = sq_dist(pi, pj);
                let d = d2.sqrt();
                if kind == EdgeKind::AA || d <= radius {
                    edges.push(Edge {
                        i: a,
                        j: b,
                        kind,
                        distance: d,
                        distance_sq: d2,
                    });
                }
            }
        }
        let set = Self::from_edges(edges, total, net.num_sensors());
        for node in &set.isolated {
            log::warn!("disconnected node: {node} has no incident edge");
        }
        Ok(set)
    }

    fn from_edges(edges: Vec<Edge>, total: usize, num_sensors: usize) -> Self {
        let mut degree = vec![0usize; total];
        let mut index = HashMap::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            degree[e.i.global()] += 1;
            degree[e.j.global()] += 1;
            index.insert((e.i.global(), e.j.global()), k);
        }
        let isolated = degree
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == 0)
            .map(|(g, _)| NodeId::from_global(g, num_sensors))
            .collect();
        EdgeSet {
            edges,
            index,
            isolated,
        }
    }

    /// Subset of edges (keeps the original relative order).
    pub fn without(&self, removed: usize, net: &SensorNetwork) -> Self {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != removed)
            .map(|(_, e)| *e)
            .collect();
        Self::from_edges(edges, net.num_nodes(), net.num_sensors())
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Edge> {
        self.edges.iter()
    }

    /// Dual index of the edge between two global node indices.
    pub fn position(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.index.get(&key).copied()
    }

    pub fn isolated_nodes(&self) -> &[NodeId] {
        &self.isolated
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }
}

fn all_positions(net: &SensorNetwork) -> Result<Vec<f64>, NetworkError> {
    let mut p = Vec::with_capacity(net.num_nodes() * net.dimension());
    for g in 0..net.num_nodes() {
        p.extend_from_slice(net.true_position(g)?);
    }
    Ok(p)
}

fn assemble_rigidity(positions: &[f64], dim: usize, total: usize, edges: &EdgeSet) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(edges.len(), dim * total);
    for (row, e) in edges.iter().enumerate() {
        let (a, b) = (e.i.global(), e.j.global());
        for k in 0..dim {
            let diff = positions[a * dim + k] - positions[b * dim + k];
            r[(row, a * dim + k)] = diff;
            r[(row, b * dim + k)] = -diff;
        }
    }
    r
}

/// Rigidity matrix at the true positions of all `N + M` nodes.
pub fn rigidity_matrix(net: &SensorNetwork, edges: &EdgeSet) -> Result<DMatrix<f64>, NetworkError> {
    let p = all_positions(net)?;
    Ok(assemble_rigidity(&p, net.dimension(), net.num_nodes(), edges))
}

/// Number of singular values above `RANK_TOL` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * max).count()
}

fn symmetric_rank(m: &DMatrix<f64>) -> usize {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    eig.eigenvalues
        .iter()
        .filter(|v| v.abs() > RANK_TOL * max)
        .count()
}

/// Rank of a rigid framework on `total` nodes in R^dim.
pub fn rigid_rank(dim: usize, total: usize) -> usize {
    if total >= dim {
        dim * total - dim * (dim + 1) / 2
    } else {
        total * total.saturating_sub(1) / 2
    }
}

fn perturbed_positions(net: &SensorNetwork, rng: &mut impl Rng) -> Result<Vec<f64>, NetworkError> {
    let mut p = all_positions(net)?;
    for v in p.iter_mut() {
        *v += GENERIC_PERTURBATION * (2.0 * rng.gen::<f64>() - 1.0);
    }
    Ok(p)
}

/// Randomized generic rigidity test at a perturbed copy of the true positions.
pub fn is_generically_rigid(net: &SensorNetwork, edges: &EdgeSet) -> Result<bool, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(RIGIDITY_SEED);
    let p = perturbed_positions(net, &mut rng)?;
    Ok(rigid_at(&p, net, edges))
}

fn rigid_at(p: &[f64], net: &SensorNetwork, edges: &EdgeSet) -> bool {
    let r = assemble_rigidity(p, net.dimension(), net.num_nodes(), edges);
    numerical_rank(&r) == rigid_rank(net.dimension(), net.num_nodes())
}

/// Randomized stress-matrix test for generic global rigidity.
///
/// A random equilibrium stress is drawn from the left null space of the
/// rigidity matrix; the framework is generically globally rigid iff the
/// resulting stress matrix has rank `V - n - 1`.
pub fn is_generically_globally_rigid(
    net: &SensorNetwork,
    edges: &EdgeSet,
) -> Result<bool, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(RIGIDITY_SEED);
    let p = perturbed_positions(net, &mut rng)?;
    if !rigid_at(&p, net, edges) {
        return Err(NetworkError::NotRigid);
    }
    let dim = net.dimension();
    let total = net.num_nodes();
    if total <= dim + 1 {
        // rigid on at most n+1 nodes means complete
        return Ok(true);
    }
    let r = assemble_rigidity(&p, dim, total, edges);
    let q = edges.len();
    let z = DVector::from_fn(q, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
    // project z onto null(R^T) = range(R)^perp
    let svd = r.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut stress = z.clone();
    for (c, s) in svd.singular_values.iter().enumerate() {
        if *s > RANK_TOL * smax {
            let col = u.column(c);
            let coef = col.dot(&z);
            stress.axpy(-coef, &col, 1.0);
        }
    }
    if stress.norm() <= 1e-10 * z.norm() {
        // no self-stress: minimally rigid, so every edge is critical
        for k in 0..q {
            let reduced = edges.without(k, net);
            if !rigid_at(&p, net, &reduced) {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    let mut omega = DMatrix::zeros(total, total);
    for (k, e) in edges.iter().enumerate() {
        let (a, b) = (e.i.global(), e.j.global());
        let w = stress[k];
        omega[(a, b)] -= w;
        omega[(b, a)] -= w;
        omega[(a, a)] += w;
        omega[(b, b)] += w;
    }
    Ok(symmetric_rank(&omega) == total - dim - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn trilateration() -> SensorNetwork {
        SensorNetwork::new(
            2,
            1,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            Some(vec![vec![0.25, 0.25]]),
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn trilateration_edges() {
        let net = trilateration();
        let edges = EdgeSet::build(&net).unwrap();
        assert_eq!(edges.count(EdgeKind::SA), 3);
        assert_eq!(edges.count(EdgeKind::AA), 3);
        let d2: Vec<f64> = edges
            .iter()
            .filter(|e| e.kind == EdgeKind::SA)
            .map(|e| e.distance_sq)
            .collect();
        assert_eq!(d2, vec![0.125, 0.625, 0.625]);
        // lexicographic
        let keys: Vec<_> = edges.iter().map(|e| (e.i.index, e.j.index)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(edges.isolated_nodes().is_empty());
    }

    #[test]
    fn radius_cut_with_single_anchor() {
        let net = SensorNetwork::new(
            2,
            2,
            vec![vec![0.5, 0.5]],
            Some(vec![vec![0.0, 0.5], vec![1.0, 0.5]]),
            0.6,
        )
        .unwrap();
        let edges = EdgeSet::build(&net).unwrap();
        assert_eq!(edges.count(EdgeKind::SA), 2);
        assert_eq!(edges.count(EdgeKind::SS), 0);
        assert_eq!(edges.count(EdgeKind::AA), 0);
    }

    #[test]
    fn zero_radius_leaves_sensor_isolated() {
        let net = trilateration().with_radius(0.0).unwrap();
        let edges = EdgeSet::build(&net).unwrap();
        assert_eq!(edges.len(), 3);
        assert_eq!(edges.count(EdgeKind::AA), 3);
        assert_eq!(edges.isolated_nodes(), &[net.node(0)]);
    }

    #[test]
    fn missing_ground_truth() {
        let net = SensorNetwork::new(2, 1, vec![vec![0.0, 0.0]], None, 1.0).unwrap();
        assert!(matches!(
            EdgeSet::build(&net),
            Err(NetworkError::GroundTruthRequired)
        ));
    }

    #[test]
    fn random_instance_contract() {
        let a = SensorNetwork::random(2, 1, 3, 2.0, 7).unwrap();
        let b = SensorNetwork::random(2, 1, 3, 2.0, 7).unwrap();
        assert_eq!(a, b);
        let edges = EdgeSet::build(&a).unwrap();
        assert_eq!(edges.count(EdgeKind::SA), 3);
        assert_eq!(edges.count(EdgeKind::AA), 3);
        assert!(matches!(
            SensorNetwork::random(2, 5, 2, 0.5, 1),
            Err(NetworkError::TooFewAnchors { .. })
        ));
    }

    #[test]
    fn rigidity_matrix_rows() {
        let net = SensorNetwork::new(
            2,
            1,
            vec![vec![0.0, 0.0]],
            Some(vec![vec![1.0, 0.0]]),
            2.0,
        )
        .unwrap();
        let edges = EdgeSet::build(&net).unwrap();
        let r = rigidity_matrix(&net, &edges).unwrap();
        // sensor (1,0) is node 1, anchor (0,0) is node 2
        assert_eq!(r.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, -1.0, 0.0]);

        let empty = trilateration().with_radius(0.0).unwrap();
        let mut e = EdgeSet::build(&empty).unwrap();
        for _ in 0..3 {
            e = e.without(0, &empty);
        }
        assert_eq!(rigidity_matrix(&empty, &e).unwrap().nrows(), 0);

        let net = trilateration();
        let edges = EdgeSet::build(&net).unwrap();
        assert_eq!(numerical_rank(&rigidity_matrix(&net, &edges).unwrap()), 5);
    }

    fn triangle(radius: f64) -> SensorNetwork {
        // two sensors and one anchor
        SensorNetwork::new(
            2,
            2,
            vec![vec![0.1, 0.2]],
            Some(vec![vec![0.9, 0.15], vec![0.45, 0.8]]),
            radius,
        )
        .unwrap()
    }

    #[test]
    fn triangle_is_rigid_path_is_not() {
        let net = triangle(2.0);
        let edges = EdgeSet::build(&net).unwrap();
        assert_eq!(edges.len(), 3);
        assert!(is_generically_rigid(&net, &edges).unwrap());
        let path = edges.without(0, &net);
        assert!(!is_generically_rigid(&net, &path).unwrap());
        assert!(is_generically_globally_rigid(&net, &edges).unwrap());
    }

    #[test]
    fn complete_k4_is_globally_rigid_cycle_is_not() {
        let net = SensorNetwork::new(
            2,
            2,
            vec![vec![0.1, 0.1], vec![0.8, 0.2]],
            Some(vec![vec![0.7, 0.9], vec![0.2, 0.75]]),
            5.0,
        )
        .unwrap();
        let k4 = EdgeSet::build(&net).unwrap();
        assert_eq!(k4.len(), 6);
        assert!(is_generically_globally_rigid(&net, &k4).unwrap());

        // 4-cycle 1-2-3-4-1 drops the diagonals (1,3) and (2,4) from K4
        let d13 = k4.position(0, 2).unwrap();
        let cycle = k4.without(d13, &net);
        let d24 = cycle.position(1, 3).unwrap();
        let cycle = cycle.without(d24, &net);
        assert_eq!(cycle.len(), 4);
        assert!(!is_generically_rigid(&net, &cycle).unwrap());
        assert!(matches!(
            is_generically_globally_rigid(&net, &cycle),
            Err(NetworkError::NotRigid)
        ));
    }

    #[test]
    fn minimally_rigid_is_not_globally_rigid() {
        // K4 minus one edge in the plane: rigid, no self-stress
        let net = SensorNetwork::new(
            2,
            2,
            vec![vec![0.1, 0.1], vec![0.8, 0.2]],
            Some(vec![vec![0.7, 0.9], vec![0.2, 0.75]]),
            5.0,
        )
        .unwrap();
        let k4 = EdgeSet::build(&net).unwrap();
        let reduced = k4.without(k4.position(0, 1).unwrap(), &net);
        assert!(is_generically_rigid(&net, &reduced).unwrap());
        assert!(!is_generically_globally_rigid(&net, &reduced).unwrap());
    }

    #[test]
    fn trilateration_rigidity() {
        let net = trilateration();
        let edges = EdgeSet::build(&net).unwrap();
        assert!(is_generically_rigid(&net, &edges).unwrap());
        assert!(is_generically_globally_rigid(&net, &edges).unwrap());
    }

    #[test]
    fn larger_random_instance_rigidity() {
        let net = SensorNetwork::random(2, 10, 4, 0.5, 1).unwrap();
        let edges = EdgeSet::build(&net).unwrap();
        let rigid = is_generically_rigid(&net, &edges).unwrap();
        if rigid {
            // only exercised for the rigid draw; non-rigid draws get re-seeded by callers
            let _ = is_generically_globally_rigid(&net, &edges).unwrap();
        }
        let r = rigidity_matrix(&net, &edges).unwrap();
        let bound = edges.len().min(rigid_rank(2, net.num_nodes()));
        assert!(numerical_rank(&r) <= bound);
    }
}
