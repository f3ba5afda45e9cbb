//! Barrier functions `a_t^±` and the comparison with a conjugate pair.
//!
//! `a_t^+(q) = A_t(π φ_{−t}(x₀), q)` and `a_t^−(q) = −A_t(q, π φ_t(x₀))`,
//! evaluated in the universal cover next to `π x₀`. Values and momenta come
//! from discrete minimizers at `N` and `2N` sub-steps, combined to cancel the
//! second-order quadrature error.

use nalgebra::DMatrix;
use thiserror::Error;

use super::action::{lifted_action, min_sub_steps, ActionError, MinimizingArc, MAX_ACTION_TIME};
use super::lax_oleinik::Sign;
use super::pseudograph::{pseudograph, semiconcavity_constant};
use super::solve::WeakKamPair;
use crate::flow::{integrate_lifted, FlowError, LiftedPoint};
use crate::green::{pushed_vertical, GreenConfig, GreenError};
use crate::linalg::{asymmetry, op_norm};
use crate::model::{legendre_inverse, Hamiltonian, PhasePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error("horizon t = {0} outside (0, {MAX_ACTION_TIME}]")]
    Horizon(f64),
    #[error("patch radius {0} must lie in (0, 0.25]")]
    Radius(f64),
    #[error("node {0} is not in the equality set")]
    NotOnEqualitySet(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierConfig {
    pub green: GreenConfig,
    /// Sub-steps of the coarser of the two action solves; `None` keeps both
    /// the time step below 0.05 and the distance per step below 0.04.
    pub sub_steps: Option<usize>,
    /// Patch nodes on each side of the base along every axis.
    pub nodes_per_side: usize,
    /// Allowed gap between the finite-difference Hessian and the pushed vertical.
    pub agreement_tol: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            green: GreenConfig::default(),
            sub_steps: None,
            nodes_per_side: 4,
            agreement_tol: 1e-3,
        }
    }
}

impl BarrierConfig {
    /// `speed` is the largest velocity component at either end of the orbit.
    fn sub_steps(&self, t: f64, speed: f64) -> usize {
        self.sub_steps.unwrap_or_else(|| {
            let by_time = (t / 0.05).ceil() as usize;
            let by_length = (t * speed / 0.04).ceil() as usize;
            by_time.max(by_length).max(min_sub_steps(t))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierFunction {
    pub base: PhasePoint,
    pub t: f64,
    pub sign: Sign,
    pub radius: f64,
    pub spacing: f64,
    /// Lifted patch points around `π x₀`.
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    /// Finite-difference Hessian at `π x₀`.
    pub hessian: DMatrix<f64>,
    /// Graph matrix of `φ_{±t}` of the vertical at `x₀`.
    pub graph: DMatrix<f64>,
    /// `‖hessian − graph‖`.
    pub agreement: f64,
    pub warnings: Vec<String>,
}

impl BarrierFunction {
    pub fn center(&self) -> usize {
        self.points.len() / 2
    }
}

/// The far end of the orbit segment: `φ_{−t}(x₀)` for `+`, `φ_t(x₀)` for `−`.
pub fn barrier_anchor<H: Hamiltonian + ?Sized>(
    model: &H,
    x0: &PhasePoint,
    t: f64,
    sign: Sign,
    cfg: &BarrierConfig,
) -> Result<LiftedPoint, BarrierError> {
    let s = match sign {
        Sign::Positive => -t,
        Sign::Negative => t,
    };
    Ok(integrate_lifted(
        model,
        &LiftedPoint::from_phase(x0),
        s,
        &cfg.green.flow,
    )?)
}

fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// `(a(q), da(q))` at lifted points `q` near `π x₀`.
pub fn barrier_values<H: Hamiltonian + ?Sized>(
    model: &H,
    x0: &PhasePoint,
    t: f64,
    sign: Sign,
    points: &[Vec<f64>],
    cfg: &BarrierConfig,
) -> Result<Vec<(f64, Vec<f64>)>, BarrierError> {
    if !(t > 0.0 && t <= MAX_ACTION_TIME) {
        return Err(BarrierError::Horizon(t));
    }
    let anchor = barrier_anchor(model, x0, t, sign, cfg)?;
    let speed = legendre_inverse(model, x0)
        .amax()
        .max(legendre_inverse(model, &PhasePoint::new(anchor.q.clone(), anchor.p.clone())).amax());
    let n_steps = cfg.sub_steps(t, speed);
    let solve = |q: &[f64], steps: usize| -> Result<MinimizingArc, ActionError> {
        match sign {
            Sign::Positive => lifted_action(model, &anchor.q, q, t, steps),
            Sign::Negative => lifted_action(model, q, &anchor.q, t, steps),
        }
    };
    points
        .iter()
        .map(|q| {
            let a = solve(q, n_steps)?;
            let b = solve(q, 2 * n_steps)?;
            let value = richardson(a.value, b.value);
            let (ga, gb) = match sign {
                Sign::Positive => (&a.p_end, &b.p_end),
                Sign::Negative => (&a.p_start, &b.p_start),
            };
            let grad = ga.iter().zip(gb).map(|(x, y)| richardson(*x, *y)).collect();
            Ok(match sign {
                Sign::Positive => (value, grad),
                Sign::Negative => (-value, grad),
            })
        })
        .collect()
}

fn patch_offsets(n: usize, k: i64) -> Vec<[i64; 2]> {
    if n == 1 {
        (-k..=k).map(|a| [a, 0]).collect()
    } else {
        (-k..=k).flat_map(|a| (-k..=k).map(move |b| [a, b])).collect()
    }
}

/// Barrier on a square patch of `2K + 1` nodes per axis around `π x₀`. When
/// the finite-difference Hessian and the pushed vertical disagree, the patch
/// is halved (at most three times) and a warning recorded.
pub fn barrier<H: Hamiltonian + ?Sized>(
    model: &H,
    x0: &PhasePoint,
    t: f64,
    sign: Sign,
    patch_radius: f64,
    cfg: &BarrierConfig,
) -> Result<BarrierFunction, BarrierError> {
    if !(patch_radius > 0.0 && patch_radius <= 0.25) {
        return Err(BarrierError::Radius(patch_radius));
    }
    let n = model.dim();
    let s_time = match sign {
        Sign::Positive => t,
        Sign::Negative => -t,
    };
    let graph = pushed_vertical(model, x0, s_time, &cfg.green)?.s;
    let k = cfg.nodes_per_side.max(1) as i64;
    let offsets = patch_offsets(n, k);
    let base = x0.q.coords().to_vec();
    let mut radius = patch_radius;
    let mut warnings = Vec::new();
    for attempt in 0..4 {
        let spacing = radius / k as f64;
        let points: Vec<Vec<f64>> = offsets
            .iter()
            .map(|o| (0..n).map(|d| base[d] + o[d] as f64 * spacing).collect())
            .collect();
        let evals = barrier_values(model, x0, t, sign, &points, cfg)?;
        let (values, gradients): (Vec<f64>, Vec<Vec<f64>>) = evals.into_iter().unzip();
        let at = |a: i64, b: i64| -> f64 {
            let idx = offsets.iter().position(|o| *o == [a, b]).unwrap();
            values[idx]
        };
        let d2 = spacing * spacing;
        let mut hessian = DMatrix::zeros(n, n);
        hessian[(0, 0)] = (at(1, 0) - 2.0 * at(0, 0) + at(-1, 0)) / d2;
        if n == 2 {
            hessian[(1, 1)] = (at(0, 1) - 2.0 * at(0, 0) + at(0, -1)) / d2;
            let mixed = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * d2);
            hessian[(0, 1)] = mixed;
            hessian[(1, 0)] = mixed;
        }
        let agreement = op_norm(&(&hessian - &graph));
        if asymmetry(&graph) > 1e-8 {
            warnings.push(format!("pushed vertical asymmetric by {:e}", asymmetry(&graph)));
        }
        if agreement <= cfg.agreement_tol || attempt == 3 {
            if agreement > cfg.agreement_tol {
                warnings.push(format!(
                    "Hessian and pushed vertical differ by {agreement:e} on a patch of radius {radius}"
                ));
            }
            return Ok(BarrierFunction {
                base: x0.clone(),
                t,
                sign,
                radius,
                spacing,
                points,
                values,
                gradients,
                hessian,
                graph,
                agreement,
                warnings,
            });
        }
        warnings.push(format!(
            "patch radius {radius} shrunk: Hessian and pushed vertical differ by {agreement:e}"
        ));
        radius *= 0.5;
    }
    unreachable!()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonNode {
    pub q: Vec<f64>,
    /// `a⁺` remainder minus `u₋` remainder.
    pub slack_plus: f64,
    /// `u₊` remainder minus `a⁻` remainder.
    pub slack_minus: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub node: usize,
    pub t: f64,
    pub radius: f64,
    pub nodes: Vec<ComparisonNode>,
    pub min_slack: [f64; 2],
    /// Estimated interpolation error `h² K + defect`.
    pub error: f64,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "VIOLATION"
        }
    }

    /// Slack at the grid node `offset` steps from the base along the first axis.
    pub fn slack_along_first_axis(&self, offset: i64, h: f64) -> Option<[f64; 2]> {
        let q = self.nodes.first()?.q.len();
        let center = &self.nodes[self.nodes.len() / 2].q;
        self.nodes
            .iter()
            .find(|nd| {
                (nd.q[0] - center[0] - offset as f64 * h).abs() < 1e-12
                    && (q == 1 || (nd.q[1] - center[1]).abs() < 1e-12)
            })
            .map(|nd| [nd.slack_plus, nd.slack_minus])
    }
}

fn taylor_remainder(value: f64, v0: f64, d0: &[f64], dq: &[f64]) -> f64 {
    value - v0 - d0.iter().zip(dq).map(|(a, b)| a * b).sum::<f64>()
}

/// Checks `u₋ − T₁u₋ ≤ a⁺ − T₁a⁺` and `a⁻ − T₁a⁻ ≤ u₊ − T₁u₊` (with `T₁` the
/// first-order Taylor polynomial at `q₀`) on the grid nodes within `radius`
/// of an equality-set node.
pub fn barrier_comparison_check<H: Hamiltonian + ?Sized>(
    model: &H,
    pair: &WeakKamPair,
    node: usize,
    t: f64,
    radius: f64,
    cfg: &BarrierConfig,
) -> Result<ComparisonReport, BarrierError> {
    if !pair.equality_set.get(node).copied().unwrap_or(false) {
        return Err(BarrierError::NotOnEqualitySet(node));
    }
    if !(radius > 0.0 && radius <= 0.25) {
        return Err(BarrierError::Radius(radius));
    }
    let u_m = &pair.u_minus;
    let u_p = &pair.u_plus;
    let n = u_m.n;
    let h = u_m.spacing();
    let gm = pseudograph(u_m);
    let gp = pseudograph(u_p);
    let q0 = u_m.node(node);
    let r = (radius / h).floor() as i64;
    let offsets: Vec<[i64; 2]> = patch_offsets(n, r)
        .into_iter()
        .filter(|o| ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt() * h <= radius + 1e-12)
        .collect();
    let points: Vec<Vec<f64>> = offsets
        .iter()
        .map(|o| (0..n).map(|d| q0[d] + o[d] as f64 * h).collect())
        .collect();
    let x_plus = PhasePoint::new(q0.clone(), gm.du[node].clone());
    let x_minus = PhasePoint::new(q0.clone(), gp.du[node].clone());
    let a_plus = barrier_values(model, &x_plus, t, Sign::Positive, &points, cfg)?;
    let a_minus = barrier_values(model, &x_minus, t, Sign::Negative, &points, cfg)?;
    let center = offsets.iter().position(|o| *o == [0, 0]).unwrap();
    let (ap0, dap0) = (a_plus[center].0, a_plus[center].1.clone());
    let (am0, dam0) = (a_minus[center].0, a_minus[center].1.clone());
    let mut nodes = Vec::with_capacity(points.len());
    let mut min_slack = [f64::INFINITY; 2];
    for (j, o) in offsets.iter().enumerate() {
        let dq: Vec<f64> = (0..n).map(|d| o[d] as f64 * h).collect();
        let um = taylor_remainder(u_m.shifted(node, *o), u_m.values[node], &gm.du[node], &dq);
        let up = taylor_remainder(u_p.shifted(node, *o), u_p.values[node], &gp.du[node], &dq);
        let ap = taylor_remainder(a_plus[j].0, ap0, &dap0, &dq);
        let am = taylor_remainder(a_minus[j].0, am0, &dam0, &dq);
        let slack = [ap - um, up - am];
        min_slack[0] = min_slack[0].min(slack[0]);
        min_slack[1] = min_slack[1].min(slack[1]);
        nodes.push(ComparisonNode {
            q: points[j].clone(),
            slack_plus: slack[0],
            slack_minus: slack[1],
        });
    }
    let k = semiconcavity_constant(u_m).max(semiconcavity_constant(&u_p.map(|v| -v)));
    let error = h * h * k + pair.residuals.iter().copied().fold(0.0, f64::max);
    let pass = min_slack.iter().all(|s| *s >= -5.0 * error);
    Ok(ComparisonReport {
        node,
        t,
        radius,
        nodes,
        min_slack,
        error,
        pass,
    })
}
