#![allow(dead_code)]

use snl_core::io;
use snl_core::{Instance, SensorNetwork};

/// Unknown at (0.25, 0.25) ranged by anchors at (0,0), (1,0), (0,1).
pub fn trilateration() -> Instance {
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

/// A random network that passes both rigidity tests.
pub fn rigid_instance(sensors: usize, anchors: usize, radius: f64, seed: u64) -> Instance {
    let (net, _, _) = io::generate_rigid(2, sensors, anchors, radius, seed, 50).unwrap();
    Instance::new(net, None).unwrap()
}

/// One sensor ranged by three nearly collinear anchors. Reflecting the true
/// position across the anchor line gives a second, spurious local minimum of
/// the potential inside the unit box.
pub fn mirror_instance() -> Instance {
    let net = SensorNetwork::new(
        2,
        1,
        vec![vec![0.1, 0.5], vec![0.9, 0.5], vec![0.5, 0.56]],
        Some(vec![vec![0.5, 0.85]]),
        2.0,
    )
    .unwrap();
    Instance::new(net, None).unwrap()
}

/// Central differences, written independently of the library's checker.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[k] += h;
        down[k] -= h;
        out.push((f(&up) - f(&down)) / (2.0 * h));
    }
    out
}

/// `max_k |a_k - b_k| / max(1, max_k |a_k|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    num / a.iter().map(|u| u.abs()).fold(1.0, f64::max)
}

/// Brute-force Euclidean projection onto `box ∩ {L(tau) ⪰ 0}` for networks
/// with at most two sensors and three free dual components.
///
/// Raising any weight adds a PSD term to `L`, so for fixed other components
/// the feasible values of the last free component form an interval
/// `[l, hi]`; `l` is found by bisection and the component is clamped into
/// it. The remaining (convex) distance function is minimized by nested grid
/// search.
pub fn brute_force_projection(inst: &Instance, tau0: &[f64]) -> Vec<f64> {
    assert!(inst.num_sensors() <= 2);
    let free: Vec<usize> = (0..inst.num_edges())
        .filter(|&k| inst.dual_hi()[k] > inst.dual_lo()[k])
        .collect();
    assert!(!free.is_empty() && free.len() <= 3);
    let psd = |t: &[f64]| -> bool {
        let l = inst.laplacian_of(t);
        if l.nrows() == 1 {
            l[(0, 0)] >= 0.0
        } else {
            let (a, b, d) = (l[(0, 0)], l[(0, 1)], l[(1, 1)]);
            a >= 0.0 && d >= 0.0 && a * d - b * b >= 0.0
        }
    };
    let last = *free.last().unwrap();
    let grid = &free[..free.len() - 1];
    // completes `t` with the best feasible last component; None if none exists
    let complete = |t: &mut Vec<f64>| -> Option<f64> {
        let (lo, hi) = (inst.dual_lo()[last], inst.dual_hi()[last]);
        t[last] = hi;
        if !psd(t) {
            return None;
        }
        t[last] = lo;
        let l = if psd(t) {
            lo
        } else {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                t[last] = m;
                if psd(t) {
                    b = m;
                } else {
                    a = m;
                }
            }
            b
        };
        t[last] = tau0[last].clamp(l, hi);
        Some(t.iter().zip(tau0).map(|(u, v)| (u - v) * (u - v)).sum())
    };

    let mut best = vec![0.0; inst.num_edges()];
    if grid.is_empty() {
        complete(&mut best).expect("feasible dual exists");
        return best;
    }
    let mut lo: Vec<f64> = grid.iter().map(|&k| inst.dual_lo()[k]).collect();
    let mut hi: Vec<f64> = grid.iter().map(|&k| inst.dual_hi()[k]).collect();
    let steps = 80usize;
    let mut best_d = f64::INFINITY;
    for _level in 0..10 {
        let mut idx = vec![0usize; grid.len()];
        let mut t = vec![0.0; inst.num_edges()];
        loop {
            for (a, &k) in grid.iter().enumerate() {
                t[k] = lo[a] + (hi[a] - lo[a]) * idx[a] as f64 / steps as f64;
            }
            if let Some(d) = complete(&mut t) {
                if d < best_d {
                    best_d = d;
                    best.copy_from_slice(&t);
                }
            }
            let mut a = 0;
            while a < idx.len() {
                idx[a] += 1;
                if idx[a] <= steps {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == idx.len() {
                break;
            }
        }
        for (a, &k) in grid.iter().enumerate() {
            let cell = (hi[a] - lo[a]) / steps as f64;
            lo[a] = (best[k] - 5.0 * cell).max(inst.dual_lo()[k]);
            hi[a] = (best[k] + 5.0 * cell).min(inst.dual_hi()[k]);
        }
    }
    best
}
