//! Discrete Lax–Oleinik operators `T_τ` and `T̆_τ`.
//!
//! For a target node `q_i` the minimum of `u(q') + A_τ(q', q_i)` runs over a
//! window of source offsets. Between nodes `u` is interpolated linearly (P1
//! on triangles for `T^2`) and the kernel by the quadratic that matches it at
//! the vertices with curvature taken from its second differences, so each
//! cell is minimized in closed form. For every fixed sub-cell position the
//! candidate is a convex combination of node values of `u` plus a number that
//! does not depend on `u`; the operator is therefore monotone, 1-Lipschitz in
//! the sup norm and commutes with constants.
//!
//! With `extrapolate` the kernel is the Richardson combination
//! `(4 A_{2N} − A_N) / 3` of the discrete actions with `N` and `2N` sub-steps,
//! which removes the `O(Δt²)` quadrature error.

use rayon::prelude::*;
use thiserror::Error;

use super::action::{min_sub_steps, solve_path, straight_seed, ActionError, PathWorkspace};
use super::grid::GridFunction;
use crate::model::Hamiltonian;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    /// `T_τ u(q) = min u(q') + A_τ(q', q)`
    Negative,
    /// `T̆_τ u(q) = max u(q') − A_τ(q, q')`
    Positive,
}

impl Sign {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sign::Negative => "negative",
            Sign::Positive => "positive",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaxOleinikError {
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("τ = {0} outside [0.05, 0.5]")]
    Tau(f64),
    #[error("grid dimension {grid} does not match the model dimension {model}")]
    Dimension { grid: usize, model: usize },
    #[error("kernel action from offset {offset:?} at node {node} did not converge (residual {residual:e})")]
    Kernel {
        node: usize,
        offset: [i64; 2],
        residual: f64,
    },
}

/// Largest speed `|∂H/∂p|` on the energy sublevel `{H ≤ max_q H(q, 0)}`,
/// which contains every calibrated curve of the critical solution.
pub fn velocity_bound<H: Hamiltonian + ?Sized>(model: &H) -> f64 {
    let n = model.dim();
    let samples = 24usize;
    let qs: Vec<Vec<f64>> = match n {
        1 => (0..samples).map(|i| vec![i as f64 / samples as f64]).collect(),
        _ => (0..samples * samples)
            .map(|i| {
                vec![
                    (i / samples) as f64 / samples as f64,
                    (i % samples) as f64 / samples as f64,
                ]
            })
            .collect(),
    };
    let zero = vec![0.0; n];
    let level = qs
        .iter()
        .map(|q| model.energy(q, &zero))
        .fold(f64::NEG_INFINITY, f64::max);
    let dirs: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => (0..16)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 8.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
    };
    let mut vmax: f64 = 0.0;
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for q in &qs {
        for d in &dirs {
            let at = |r: f64| -> Vec<f64> { d.iter().map(|x| x * r).collect() };
            let mut hi = 1.0;
            while model.energy(q, &at(hi)) < level && hi < 1e6 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if model.energy(q, &at(mid)) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            model.gradient(q, &at(hi), &mut dq, &mut dp);
            vmax = vmax.max(dp.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    vmax
}

/// Default window half-width (in units of length) for a given `τ`.
pub fn default_window<H: Hamiltonian + ?Sized>(model: &H, tau: f64, m: usize) -> f64 {
    if model.dim() == 1 {
        0.5
    } else {
        (1.25 * velocity_bound(model) * tau + 2.0 / m as f64).min(0.5)
    }
}

/// Inserts the midpoint of every segment.
fn refine(path: &[nalgebra::Vector2<f64>]) -> Vec<nalgebra::Vector2<f64>> {
    let mut out = Vec::with_capacity(2 * path.len() - 1);
    for w in path.windows(2) {
        out.push(w[0]);
        out.push((w[0] + w[1]) * 0.5);
    }
    out.push(*path.last().unwrap());
    out
}

/// A Lax–Oleinik operator with its kernel tabulated on a grid.
pub struct LaxOleinik {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub sign: Sign,
    pub sub_steps: usize,
    /// Window half-width in nodes.
    pub w: i64,
    stride: usize,
    side: usize,
    translation_invariant: bool,
    kernel: Vec<f64>,
    curvature: Vec<[f64; 3]>,
}

impl LaxOleinik {
    pub fn new<H: Hamiltonian + ?Sized>(
        model: &H,
        m: usize,
        tau: f64,
        sign: Sign,
        sub_steps: Option<usize>,
        window: Option<f64>,
        extrapolate: bool,
    ) -> Result<Self, LaxOleinikError> {
        if !(0.05..=0.5).contains(&tau) {
            return Err(LaxOleinikError::Tau(tau));
        }
        let n = model.dim();
        let sub_steps = sub_steps.unwrap_or_else(|| min_sub_steps(tau));
        if sub_steps < min_sub_steps(tau) {
            return Err(ActionError::SubSteps {
                given: sub_steps,
                required: min_sub_steps(tau),
                t: tau,
            }
            .into());
        }
        let window = window.unwrap_or_else(|| default_window(model, tau, m));
        let w = ((window * m as f64).ceil() as i64).max(1);
        let side = (2 * w + 3) as usize;
        let stride = side.pow(n as u32);
        let translation_invariant = model.is_translation_invariant();
        let targets = if translation_invariant { 1 } else { m.pow(n as u32) };
        let h = 1.0 / m as f64;
        let mut kernel = vec![0.0; targets * stride];
        let offsets: Vec<[i64; 2]> = (0..stride)
            .map(|k| {
                if n == 1 {
                    [k as i64 - w - 1, 0]
                } else {
                    [(k / side) as i64 - w - 1, (k % side) as i64 - w - 1]
                }
            })
            .collect();
        kernel
            .par_chunks_mut(stride)
            .enumerate()
            .try_for_each(|(target, row)| -> Result<(), LaxOleinikError> {
                let mut ws = PathWorkspace::default();
                let k = if n == 1 {
                    [target as i64, 0]
                } else {
                    [(target / m) as i64, (target % m) as i64]
                };
                let q: Vec<f64> = (0..n).map(|d| k[d] as f64 * h).collect();
                for (slot, o) in row.iter_mut().zip(&offsets) {
                    let other: Vec<f64> = (0..n).map(|d| q[d] + o[d] as f64 * h).collect();
                    let (a, b) = match sign {
                        Sign::Negative => (&other, &q),
                        Sign::Positive => (&q, &other),
                    };
                    let mut path = straight_seed(a, b, sub_steps);
                    let coarse = solve_path(model, &mut path, tau, &mut ws).map_err(ActionError::from)?;
                    let mut value = coarse.value;
                    let mut worst = (coarse.certified, coarse.residual);
                    if extrapolate {
                        let mut fine = refine(&path);
                        let sol = solve_path(model, &mut fine, tau, &mut ws).map_err(ActionError::from)?;
                        value = (4.0 * sol.value - coarse.value) / 3.0;
                        if !sol.certified {
                            worst = (false, sol.residual);
                        }
                    }
                    if !worst.0 {
                        return Err(LaxOleinikError::Kernel {
                            node: target,
                            offset: *o,
                            residual: worst.1,
                        });
                    }
                    *slot = value;
                }
                Ok(())
            })?;
        let mut op = LaxOleinik {
            n,
            m,
            tau,
            sign,
            sub_steps,
            w,
            stride,
            side,
            translation_invariant,
            kernel,
            curvature: Vec::new(),
        };
        op.curvature = op.tabulate_curvature();
        Ok(op)
    }

    fn slot(&self, o: [i64; 2]) -> usize {
        let a = (o[0] + self.w + 1) as usize;
        if self.n == 1 {
            a
        } else {
            a * self.side + (o[1] + self.w + 1) as usize
        }
    }

    fn row(&self, target: usize) -> &[f64] {
        let r = if self.translation_invariant { 0 } else { target };
        &self.kernel[r * self.stride..(r + 1) * self.stride]
    }

    /// Kernel value `A_τ` between the target node and its offset `o`.
    pub fn kernel(&self, target: usize, o: [i64; 2]) -> f64 {
        self.row(target)[self.slot(o)]
    }

    /// Second differences `(K_11, K_12, K_22)` of each kernel row at offsets
    /// inside `[−w, w]^n`, in grid units.
    fn tabulate_curvature(&self) -> Vec<[f64; 3]> {
        let rows = self.kernel.len() / self.stride;
        let mut out = vec![[0.0; 3]; self.kernel.len()];
        for r in 0..rows {
            let row = &self.kernel[r * self.stride..(r + 1) * self.stride];
            let at = |a: i64, b: i64| row[self.slot([a, b])];
            for o0 in -self.w..=self.w {
                if self.n == 1 {
                    let c = at(o0 - 1, 0) - 2.0 * at(o0, 0) + at(o0 + 1, 0);
                    out[r * self.stride + self.slot([o0, 0])] = [c, 0.0, 0.0];
                    continue;
                }
                for o1 in -self.w..=self.w {
                    let k11 = at(o0 - 1, o1) - 2.0 * at(o0, o1) + at(o0 + 1, o1);
                    let k22 = at(o0, o1 - 1) - 2.0 * at(o0, o1) + at(o0, o1 + 1);
                    let k12 =
                        0.25 * (at(o0 + 1, o1 + 1) - at(o0 + 1, o1 - 1) - at(o0 - 1, o1 + 1) + at(o0 - 1, o1 - 1));
                    out[r * self.stride + self.slot([o0, o1])] = [k11, k12, k22];
                }
            }
        }
        out
    }

    fn curv(&self, target: usize, o: [i64; 2]) -> [f64; 3] {
        let r = if self.translation_invariant { 0 } else { target };
        self.curvature[r * self.stride + self.slot(o)]
    }

    /// `min_{q'} u(q') + K(q', q_i)` over the window, refined inside every cell.
    fn min_convolution(&self, u: &GridFunction, target: usize) -> f64 {
        let w = self.w;
        let mut best = f64::INFINITY;
        if self.n == 1 {
            for o in -w..=w {
                let f0 = u.shifted(target, [o, 0]) + self.kernel(target, [o, 0]);
                best = best.min(f0);
                if o == w {
                    break;
                }
                let f1 = u.shifted(target, [o + 1, 0]) + self.kernel(target, [o + 1, 0]);
                let c = 0.25 * (self.curv(target, [o, 0])[0] + self.curv(target, [o + 1, 0])[0]);
                best = best.min(edge_min(f0, f1, 2.0 * c));
            }
            return best;
        }
        for o0 in -w..=w {
            for o1 in -w..=w {
                let f00 = u.shifted(target, [o0, o1]) + self.kernel(target, [o0, o1]);
                best = best.min(f00);
                if o0 == w || o1 == w {
                    continue;
                }
                let f10 = u.shifted(target, [o0 + 1, o1]) + self.kernel(target, [o0 + 1, o1]);
                let f01 = u.shifted(target, [o0, o1 + 1]) + self.kernel(target, [o0, o1 + 1]);
                let f11 = u.shifted(target, [o0 + 1, o1 + 1]) + self.kernel(target, [o0 + 1, o1 + 1]);
                let mut hs = [0.0; 3];
                for c in [[o0, o1], [o0 + 1, o1], [o0, o1 + 1], [o0 + 1, o1 + 1]] {
                    let k = self.curv(target, c);
                    for j in 0..3 {
                        hs[j] += 0.25 * k[j];
                    }
                }
                let quad = |e: [f64; 2]| hs[0] * e[0] * e[0] + 2.0 * hs[1] * e[0] * e[1] + hs[2] * e[1] * e[1];
                // lower triangle (0,0),(1,0),(1,1); upper (0,0),(0,1),(1,1)
                best = best.min(triangle_min(
                    f00,
                    f10,
                    f11,
                    quad([1.0, 0.0]),
                    quad([1.0, 1.0]),
                    quad([0.0, 1.0]),
                ));
                best = best.min(triangle_min(
                    f00,
                    f01,
                    f11,
                    quad([0.0, 1.0]),
                    quad([1.0, 1.0]),
                    quad([1.0, 0.0]),
                ));
            }
        }
        best
    }

    /// One application of the operator.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction, LaxOleinikError> {
        if u.n != self.n || u.m != self.m {
            return Err(LaxOleinikError::Dimension {
                grid: u.n,
                model: self.n,
            });
        }
        let source = match self.sign {
            Sign::Negative => u.clone(),
            Sign::Positive => u.map(|v| -v),
        };
        let values: Vec<f64> = (0..u.len())
            .into_par_iter()
            .map(|i| {
                let v = self.min_convolution(&source, i);
                match self.sign {
                    Sign::Negative => v,
                    Sign::Positive => -v,
                }
            })
            .collect();
        Ok(GridFunction { values, ..u.clone() })
    }
}

/// Minimum on `[0, 1]` of `(1 − s) f0 + s f1 − (c/2) s (1 − s)`, `c` the second derivative.
fn edge_min(f0: f64, f1: f64, c: f64) -> f64 {
    let mut best = f0.min(f1);
    if c > 0.0 {
        let s = 0.5 - (f1 - f0) / c;
        if s > 0.0 && s < 1.0 {
            best = best.min(f0 + s * (f1 - f0) - 0.5 * c * s * (1.0 - s));
        }
    }
    best
}

/// Minimum over the triangle `v0 v1 v2` of `P1(f) − ½ Σ_{i<j} c_ij λ_i λ_j`,
/// the quadratic with Hessian `Hs` interpolating `f` at the vertices.
/// `c01`, `c02`, `c12` are `e_ijᵀ Hs e_ij` for the edge vectors. Vertex
/// values are handled by the caller.
fn triangle_min(f0: f64, f1: f64, f2: f64, c01: f64, c02: f64, c12: f64) -> f64 {
    let mut best = edge_min(f0, f1, c01);
    best = best.min(edge_min(f0, f2, c02));
    best = best.min(edge_min(f1, f2, c12));
    // interior stationary point in the coordinates x = v0 + s e01 + r e02
    let b = 0.5 * (c01 + c02 - c12);
    let det = c01 * c02 - b * b;
    if c01 > 0.0 && det > 0.0 {
        let gs = f1 - f0 - 0.5 * c01;
        let gr = f2 - f0 - 0.5 * c02;
        let s = -(c02 * gs - b * gr) / det;
        let r = -(c01 * gr - b * gs) / det;
        if s > 0.0 && r > 0.0 && s + r < 1.0 {
            let v = f0 + s * gs + r * gr + 0.5 * (c01 * s * s + 2.0 * b * s * r + c02 * r * r);
            best = best.min(v);
        }
    }
    best
}

/// One application of `T_τ` (negative) or `T̆_τ` (positive) to `u`.
pub fn lax_oleinik<H: Hamiltonian + ?Sized>(
    model: &H,
    u: &GridFunction,
    tau: f64,
    sign: Sign,
) -> Result<GridFunction, LaxOleinikError> {
    if u.n != model.dim() {
        return Err(LaxOleinikError::Dimension {
            grid: u.n,
            model: model.dim(),
        });
    }
    LaxOleinik::new(model, u.m, tau, sign, None, None, true)?.apply(u)
}
