//! Canonical transformation of the quartic potential.
//!
//! With `xi_ij = ||x_i - x_j||^2` the potential becomes the convex quadratic
//! `Phi(xi) = sum (xi_ij - d_ij^2)^2`. Its gradient `tau = 2(xi - d^2)` is the
//! canonical dual variable, and the complementary function
//! `Psi(x, tau) = sum tau_ij (xi_ij(x) - d_ij^2) - sum tau_ij^2 / 4`
//! is quadratic in `x` (Hessian `2 L(tau) (x) I_n`) and concave in `tau`.
//!
//! Anchor-anchor edges keep their slot in the edge index but are inert in
//! `Psi`, its gradients and `L(tau)`: their dual components stay at zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::network::EdgeKind;

/// Squared edge lengths, indexed like the edge set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiVector(pub Vec<f64>);

/// Canonical dual vector, one component per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVariable(pub Vec<f64>);

impl DualVariable {
    pub fn zeros(q: usize) -> Self {
        DualVariable(vec![0.0; q])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `L(tau)`, the N x N grounded Laplacian with `Q(tau) = 2 (L (x) I_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedLaplacian(pub DMatrix<f64>);

impl GroundedLaplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Expands to the full `nN x nN` Hessian `Q(tau)`.
    pub fn to_q(&self, dim: usize) -> DMatrix<f64> {
        let eye = DMatrix::<f64>::identity(dim, dim);
        self.0.kronecker(&eye) * 2.0
    }
}

pub fn lambda_map(inst: &Instance, x: &[f64]) -> XiVector {
    XiVector((0..inst.num_edges()).map(|k| inst.edge_sq_len(x, k)).collect())
}

pub fn phi(inst: &Instance, xi: &XiVector) -> f64 {
    inst.edges()
        .iter()
        .zip(&xi.0)
        .map(|(e, v)| {
            let r = v - e.distance_sq;
            r * r
        })
        .sum()
}

/// `tau = grad Phi(xi) = 2 (xi - d^2)`.
pub fn duality_map(inst: &Instance, xi: &XiVector) -> DualVariable {
    DualVariable(
        inst.edges()
            .iter()
            .zip(&xi.0)
            .map(|(e, v)| 2.0 * (v - e.distance_sq))
            .collect(),
    )
}

/// `xi = tau / 2 + d^2`.
pub fn duality_map_inverse(inst: &Instance, tau: &DualVariable) -> XiVector {
    XiVector(
        inst.edges()
            .iter()
            .zip(&tau.0)
            .map(|(e, t)| 0.5 * t + e.distance_sq)
            .collect(),
    )
}

/// Legendre conjugate `Phi*(tau) = sum tau^2 / 4 + d^2 tau`.
pub fn phi_star(inst: &Instance, tau: &DualVariable) -> f64 {
    inst.edges()
        .iter()
        .zip(&tau.0)
        .map(|(e, t)| 0.25 * t * t + e.distance_sq * t)
        .sum()
}

pub fn psi(inst: &Instance, x: &[f64], tau: &DualVariable) -> f64 {
    let mut total = 0.0;
    for (k, e) in inst.edges().iter().enumerate() {
        if e.kind == EdgeKind::AA {
            continue;
        }
        let t = tau.0[k];
        total += t * (inst.edge_sq_len(x, k) - e.distance_sq) - 0.25 * t * t;
    }
    total
}

/// `grad_x Psi`; block `i` is `sum_j 2 tau_ij (x_i - y_j)`.
pub fn grad_psi_x(inst: &Instance, x: &[f64], tau: &DualVariable) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    grad_psi_x_into(inst, x, &tau.0, &mut g);
    g
}

pub(crate) fn grad_psi_x_into(inst: &Instance, x: &[f64], tau: &[f64], g: &mut [f64]) {
    let n = inst.dim();
    g.iter_mut().for_each(|v| *v = 0.0);
    for (k, e) in inst.edges().iter().enumerate() {
        if e.kind == EdgeKind::AA {
            continue;
        }
        let t = tau[k];
        if t == 0.0 {
            continue;
        }
        let a = e.i.global();
        let b = e.j.global();
        let pa = inst.endpoint(x, a);
        let pb = inst.endpoint(x, b);
        for c in 0..n {
            let v = 2.0 * t * (pa[c] - pb[c]);
            g[a * n + c] += v;
            if e.kind == EdgeKind::SS {
                g[b * n + c] -= v;
            }
        }
    }
}

/// `grad_tau Psi`; component `(i,j)` is `(xi_ij - d_ij^2) - tau_ij / 2`, zero for AA edges.
pub fn grad_psi_tau(inst: &Instance, x: &[f64], tau: &DualVariable) -> Vec<f64> {
    let mut g = vec![0.0; tau.0.len()];
    grad_psi_tau_into(inst, x, &tau.0, &mut g);
    g
}

pub(crate) fn grad_psi_tau_into(inst: &Instance, x: &[f64], tau: &[f64], g: &mut [f64]) {
    for (k, e) in inst.edges().iter().enumerate() {
        g[k] = if e.kind == EdgeKind::AA {
            0.0
        } else {
            inst.edge_sq_len(x, k) - e.distance_sq - 0.5 * tau[k]
        };
    }
}

pub fn assemble_q(inst: &Instance, tau: &DualVariable) -> GroundedLaplacian {
    GroundedLaplacian(inst.laplacian_of(&tau.0))
}

/// Central-difference Hessian of `Psi(., tau)` at `x`, step `h`.
pub fn fd_hessian_psi_x(inst: &Instance, x: &[f64], tau: &DualVariable, h: f64) -> DMatrix<f64> {
    let m = x.len();
    let mut hess = DMatrix::zeros(m, m);
    let mut p = x.to_vec();
    let eval = |p: &mut Vec<f64>, a: usize, sa: f64, b: usize, sb: f64| {
        p[a] += sa;
        p[b] += sb;
        let v = psi(inst, p, tau);
        p[a] -= sa;
        p[b] -= sb;
        v
    };
    for a in 0..m {
        for b in a..m {
            let v = (eval(&mut p, a, h, b, h) - eval(&mut p, a, h, b, -h) - eval(&mut p, a, -h, b, h)
                + eval(&mut p, a, -h, b, -h))
                / (4.0 * h * h);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    hess
}

/// Largest absolute entry of `2 (L(tau) (x) I_n) - H_fd(x)`.
pub fn hessian_psi_x_check(inst: &Instance, x: &[f64], tau: &DualVariable) -> f64 {
    let q = assemble_q(inst, tau).to_q(inst.dim());
    let fd = fd_hessian_psi_x(inst, x, tau, 1e-3);
    (q - fd).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::potential;
    use crate::instance::AxisBox;
    use crate::network::SensorNetwork;
    use nalgebra::SymmetricEigen;

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

    /// Two sensors joined by one SS edge with d^2 = 1; the anchor is out of range.
    fn single_ss_edge() -> Instance {
        let net = SensorNetwork::new(
            2,
            2,
            vec![vec![5.0, 5.0]],
            Some(vec![vec![0.0, 0.0], vec![1.0, 0.0]]),
            1.5,
        )
        .unwrap();
        let wide = AxisBox { lo: vec![-3.0; 2], hi: vec![3.0; 2] };
        Instance::new(net, Some(vec![wide.clone(), wide])).unwrap()
    }

    fn single_sa_edge() -> Instance {
        let net = SensorNetwork::new(2, 1, vec![vec![0.0, 0.0]], Some(vec![vec![1.0, 0.0]]), 2.0).unwrap();
        let wide = AxisBox { lo: vec![-3.0; 2], hi: vec![3.0; 2] };
        Instance::new(net, Some(vec![wide])).unwrap()
    }

    #[test]
    fn lambda_map_values() {
        let inst = single_ss_edge();
        assert_eq!(lambda_map(&inst, &[0.0, 0.0, 3.0, 4.0]).0, vec![25.0]);

        let tri = trilateration();
        let xi = lambda_map(&tri, &[0.25, 0.25]);
        for (v, e) in xi.0.iter().zip(tri.edges().iter()) {
            assert_eq!(*v, e.distance_sq);
        }
        let xi = lambda_map(&tri, &[0.0, 0.0]);
        assert_eq!(&xi.0[..3], &[0.0, 1.0, 1.0]);
        assert!((phi(&tri, &xi) - 0.296875).abs() < 1e-15);
        assert_eq!(phi(&tri, &xi), potential(&tri, &[0.0, 0.0]));
    }

    #[test]
    fn scalar_plug_ins() {
        let inst = single_ss_edge();
        let xi = XiVector(vec![2.0]);
        assert_eq!(phi(&inst, &xi), 1.0);
        assert_eq!(duality_map(&inst, &xi).0, vec![2.0]);
        assert_eq!(duality_map(&inst, &XiVector(vec![1.0])).0, vec![0.0]);
        let tau = DualVariable(vec![2.0]);
        assert_eq!(phi_star(&inst, &tau), 3.0);
        assert_eq!(phi_star(&inst, &DualVariable(vec![0.0])), 0.0);
        // Fenchel: 2*2 - 1 - 3 = 0
        assert_eq!(xi.0[0] * tau.0[0] - phi(&inst, &xi) - phi_star(&inst, &tau), 0.0);

        // xi = 2 at x = ((0,0), (sqrt 2, 0))
        let x = [0.0, 0.0, 2f64.sqrt(), 0.0];
        assert!((psi(&inst, &x, &tau) - 1.0).abs() < 1e-15);
        assert!((grad_psi_tau(&inst, &x, &DualVariable(vec![0.0]))[0] - 1.0).abs() < 1e-15);
        assert_eq!(psi(&inst, &x, &DualVariable(vec![0.0])), 0.0);
        assert_eq!(grad_psi_x(&inst, &x, &DualVariable(vec![0.0])), vec![0.0; 4]);

        let sa = single_sa_edge();
        assert_eq!(grad_psi_x(&sa, &[1.0, 0.0], &DualVariable(vec![2.0])), vec![4.0, 0.0]);
    }

    #[test]
    fn grad_tau_vanishes_on_duality_manifold() {
        let tri = trilateration();
        let x = [0.6, 0.1];
        let tau = duality_map(&tri, &lambda_map(&tri, &x));
        assert!(grad_psi_tau(&tri, &x, &tau).iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn assembled_laplacians() {
        let inst = single_ss_edge();
        let l = assemble_q(&inst, &DualVariable(vec![2.0]));
        assert_eq!(l.0, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let mut eig: Vec<f64> = SymmetricEigen::new(l.to_q(2)).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [0.0, 0.0, 8.0, 8.0];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }

        let sa = single_sa_edge();
        let l = assemble_q(&sa, &DualVariable(vec![3.0]));
        assert_eq!(l.0, DMatrix::from_element(1, 1, 3.0));
        assert_eq!(l.to_q(2), DMatrix::identity(2, 2) * 6.0);

        let zero = assemble_q(&inst, &DualVariable(vec![0.0]));
        assert_eq!(zero.to_q(2), DMatrix::zeros(4, 4));
    }

    #[test]
    fn hessian_check_single_edge() {
        let inst = single_ss_edge();
        let tau = DualVariable(vec![2.0]);
        let fd = fd_hessian_psi_x(&inst, &[0.1, 0.2, 0.9, -0.3], &tau, 1e-3);
        assert!((fd[(0, 0)] - 4.0).abs() < 1e-6);
        assert!((fd[(0, 2)] + 4.0).abs() < 1e-6);
        assert!(fd[(0, 1)].abs() < 1e-6);
        assert!(hessian_psi_x_check(&inst, &[0.1, 0.2, 0.9, -0.3], &tau) <= 1e-4);
        assert!(hessian_psi_x_check(&inst, &[0.5, 0.5, 0.5, 0.5], &DualVariable(vec![0.0])) <= 1e-4);
    }
}
