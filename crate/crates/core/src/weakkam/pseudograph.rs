//! Pseudographs, semiconcavity, the Mather-set proxy and the Lipschitz check.

use super::grid::GridFunction;
use super::solve::WeakKamPair;
use crate::model::{wrap_centered, Hamiltonian, PhasePoint};

#[derive(Clone, Debug, PartialEq)]
pub struct Pseudograph {
    pub n: usize,
    pub m: usize,
    pub nodes: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    /// `true` where `u` is treated as differentiable.
    pub mask: Vec<bool>,
}

impl Pseudograph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        PhasePoint::new(self.nodes[i].clone(), self.du[i].clone())
    }

    /// Phase points at the differentiable nodes.
    pub fn samples(&self) -> Vec<PhasePoint> {
        (0..self.len())
            .filter(|&i| self.mask[i])
            .map(|i| self.point(i))
            .collect()
    }
}

fn axis_offset(axis: usize, k: i64) -> [i64; 2] {
    if axis == 0 {
        [k, 0]
    } else {
        [0, k]
    }
}

fn second_difference(u: &GridFunction, i: usize, axis: usize, at: i64) -> f64 {
    let o = |k| axis_offset(axis, at + k);
    u.shifted(i, o(-1)) - 2.0 * u.shifted(i, o(0)) + u.shifted(i, o(1))
}

/// Centered-difference gradient with a kink mask: a node is non-differentiable
/// when the jump between one-sided derivatives along some axis exceeds
/// `10 h (|u''| + 1)`, `|u''|` read off the second differences two and three
/// nodes away.
pub fn pseudograph(u: &GridFunction) -> Pseudograph {
    let h = u.spacing();
    let mut du = Vec::with_capacity(u.len());
    let mut mask = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let mut g = Vec::with_capacity(u.n);
        let mut smooth = true;
        for axis in 0..u.n {
            let up = u.shifted(i, axis_offset(axis, 1));
            let down = u.shifted(i, axis_offset(axis, -1));
            let here = u.values[i];
            g.push((up - down) / (2.0 * h));
            let jump = ((up - here) - (here - down)).abs() / h;
            let scale = [-3, -2, 2, 3]
                .iter()
                .map(|&k| second_difference(u, i, axis, k).abs() / (h * h))
                .fold(0.0, f64::max);
            if jump > 10.0 * h * (scale + 1.0) {
                smooth = false;
            }
        }
        du.push(g);
        mask.push(smooth);
    }
    Pseudograph {
        n: u.n,
        m: u.m,
        nodes: (0..u.len()).map(|i| u.node(i)).collect(),
        du,
        mask,
    }
}

/// Smallest `K ≥ 0` with `u(x+h) − 2u(x) + u(x−h) ≤ 2K‖h‖²` over all nodes
/// and grid offsets `max(2/m, 0.02) ≤ ‖h‖ ≤ 0.1`. Shorter offsets only see
/// the interpolation error of the scheme near the minima of `u`.
pub fn semiconcavity_constant(u: &GridFunction) -> f64 {
    let h = u.spacing();
    let r = (0.1 * u.m as f64).floor() as i64;
    let min2 = (4.0 * h * h).max(4e-4);
    let mut offsets = Vec::new();
    let r1 = if u.n == 2 { r } else { 0 };
    for a in 0..=r {
        for b in -r1..=r1 {
            if a == 0 && b <= 0 {
                continue;
            }
            let len2 = ((a * a + b * b) as f64) * h * h;
            if len2 <= 0.01 + 1e-15 && len2 >= min2 - 1e-15 {
                offsets.push(([a, b], len2));
            }
        }
    }
    let mut k: f64 = 0.0;
    for i in 0..u.len() {
        let c = u.values[i];
        for (o, len2) in &offsets {
            let d = u.shifted(i, *o) - 2.0 * c + u.shifted(i, [-o[0], -o[1]]);
            k = k.max(d / (2.0 * len2));
        }
    }
    k
}

/// Flat-torus distance between two points.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_centered(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatherApprox {
    pub points: Vec<PhasePoint>,
    /// Largest `‖du₋ − du₊‖` over the equality set.
    pub mismatch: f64,
    pub threshold: f64,
    pub warning: Option<String>,
}

/// The equality set lifted by `du₋`, cross-checked against `du₊`.
pub fn mather_set_approx(pair: &WeakKamPair) -> MatherApprox {
    let gm = pseudograph(&pair.u_minus);
    let gp = pseudograph(&pair.u_plus);
    let mut points = Vec::new();
    let mut mismatch: f64 = 0.0;
    for i in pair.equality_nodes() {
        let d = gm.du[i]
            .iter()
            .zip(&gp.du[i])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        mismatch = mismatch.max(d);
        points.push(gm.point(i));
    }
    let threshold = 10.0 * pair.eq_tol / pair.u_minus.spacing();
    let warning = (mismatch > threshold)
        .then(|| format!("du₋ and du₊ differ by {mismatch:e} on the equality set (threshold {threshold:e})"));
    MatherApprox {
        points,
        mismatch,
        threshold,
        warning,
    }
}

/// Largest `|H(q, du(q)) − c|` over differentiable nodes.
pub fn hamilton_jacobi_residual<H: Hamiltonian + ?Sized>(model: &H, graph: &Pseudograph, c: f64) -> f64 {
    (0..graph.len())
        .filter(|&i| graph.mask[i])
        .map(|i| (model.energy(&graph.nodes[i], &graph.du[i]) - c).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    pub k_fit: f64,
    pub semiconcavity: f64,
    pub bound: f64,
    pub pass: bool,
}

impl LipschitzReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Fits `‖du₋(y) − du₋(x)‖ ≤ K_fit d(x, y)` for `y` in the equality set and
/// differentiable `x` within distance 0.2, and compares with `6K`.
pub fn lipschitz_graph_check(pair: &WeakKamPair) -> LipschitzReport {
    let graph = pseudograph(&pair.u_minus);
    let k = semiconcavity_constant(&pair.u_minus);
    let mut k_fit: f64 = 0.0;
    for y in pair.equality_nodes() {
        for x in 0..graph.len() {
            if x == y || !graph.mask[x] {
                continue;
            }
            let d = torus_distance(&graph.nodes[x], &graph.nodes[y]);
            if d > 0.2 {
                continue;
            }
            let diff = graph.du[x]
                .iter()
                .zip(&graph.du[y])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            k_fit = k_fit.max(diff / d);
        }
    }
    let bound = 6.0 * k + 1e-3 * (1.0 + 6.0 * k);
    LipschitzReport {
        k_fit,
        semiconcavity: k,
        bound,
        pass: k_fit <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weakkam::grid::Interpolation;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn pendulum_u_minus(q: f64) -> f64 {
        if q <= 0.5 {
            2.0 / PI * (1.0 - (PI * q).cos())
        } else {
            2.0 / PI * (1.0 + (PI * q).cos())
        }
    }

    #[test]
    fn flat_function() {
        let u = GridFunction::constant(2, 16, 3.0, Interpolation::Linear);
        let g = pseudograph(&u);
        assert!(g.mask.iter().all(|&b| b));
        assert!(g.du.iter().flatten().all(|&d| d == 0.0));
        assert_eq!(semiconcavity_constant(&u), 0.0);
    }

    #[test]
    fn pendulum_closed_form() {
        let m = 512;
        let u = GridFunction::from_fn(1, m, Interpolation::Linear, |q| pendulum_u_minus(q[0]));
        let g = pseudograph(&u);
        assert!(!g.mask[m / 2]);
        assert_eq!(g.mask.iter().filter(|&&b| !b).count(), 1);
        assert_relative_eq!(g.du[m / 4][0], 2f64.sqrt(), max_relative = 1e-4);
        assert_relative_eq!(g.du[3 * m / 4][0], -(2f64.sqrt()), max_relative = 1e-4);
        assert_relative_eq!(semiconcavity_constant(&u), PI, max_relative = 0.05);
    }

    #[test]
    fn cosine_semiconcavity() {
        let u = GridFunction::from_fn(1, 256, Interpolation::Linear, |q| (2.0 * PI * q[0]).cos());
        assert_relative_eq!(semiconcavity_constant(&u), 2.0 * PI * PI, max_relative = 0.05);
        let v = GridFunction::from_fn(2, 64, Interpolation::Linear, |q| (2.0 * PI * q[0]).cos());
        assert_relative_eq!(semiconcavity_constant(&v), 2.0 * PI * PI, max_relative = 0.05);
    }
}
