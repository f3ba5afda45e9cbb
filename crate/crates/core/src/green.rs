//! Images of the vertical `G_t(x) = Dφ_t V(φ_{−t}x)` and the Green bundles.
//!
//! A Lagrangian subspace transverse to the vertical is stored as the graph of
//! a symmetric matrix `S`. `G_t` is obtained by transporting the frame
//! `[0; I]` from `φ_{−t}x` to `x` with the discrete cocycle and restarting
//! from `[I; S]` every `restart` time units, which is the matrix Riccati
//! equation `Ṡ = −H_qq − H_qp S − S H_pq − S H_pp S` solved in projective form.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::flow::{step_count, FlowConfig, FlowError, LiftedPoint, Stepper};
use crate::linalg::{
    angle_to_subspace, asymmetry, graph_basis, max_eigenvalue, min_eigenvalue, op_norm, range_projector,
    sym_eigenvalues, symmetrize,
};
use crate::model::{Hamiltonian, PhasePoint, TangentVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreenError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("conjugate point: the pushed vertical stops being a graph at s = {time} (|S| = {norm:e})")]
    ConjugatePoint { time: f64, norm: f64 },
    #[error("Green limit ({side}) not reached by T = {t_max}: tail difference {tail:e}")]
    LimitNotReached { side: &'static str, t_max: f64, tail: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenConfig {
    pub flow: FlowConfig,
    /// First horizon of the doubling sequence.
    pub t_start: f64,
    pub t_max: f64,
    /// Cauchy tolerance on successive extrapolated limits.
    pub tol: f64,
    /// Time between projective restarts of the frame.
    pub restart: f64,
    pub blowup: f64,
    /// Relative eigenvalue threshold for `dim ker Δs`.
    pub rank_tol: f64,
    /// Tolerance of the semi-definite order checks.
    pub order_tol: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        GreenConfig {
            flow: FlowConfig::default(),
            t_start: 1.0,
            t_max: 256.0,
            tol: 1e-8,
            restart: 0.5,
            blowup: 1e6,
            rank_tol: 1e-6,
            order_tol: 1e-7,
        }
    }
}

/// The Lagrangian subspace `{(X, S X)}` at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianGraph {
    pub s: DMatrix<f64>,
    pub base: PhasePoint,
}

impl LagrangianGraph {
    pub fn contains(&self, v: &TangentVector, tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// `‖Y − S X‖`.
    pub fn distance(&self, v: &TangentVector) -> f64 {
        (&v.y - &self.s * &v.x).norm()
    }

    /// Angle between `v` and the subspace.
    pub fn angle(&self, v: &TangentVector) -> f64 {
        angle_to_subspace(&v.stacked(), &graph_basis(&self.s))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenPair {
    pub s_minus: LagrangianGraph,
    pub s_plus: LagrangianGraph,
    pub delta: DMatrix<f64>,
    pub p_dim: usize,
    pub tilde_minus: DMatrix<f64>,
    pub tilde_plus: DMatrix<f64>,
    pub projector: DMatrix<f64>,
    /// Largest eigenvalue `Λ(Δs)`.
    pub lambda: f64,
    pub rank_tol: f64,
    /// Horizon reached when both limits were accepted.
    pub t_used: f64,
    pub tail: f64,
}

impl GreenPair {
    pub fn from_limits(base: &PhasePoint, s_minus: DMatrix<f64>, s_plus: DMatrix<f64>, rank_rel: f64) -> Self {
        let delta = symmetrize(&(&s_plus - &s_minus));
        let ev = sym_eigenvalues(&delta);
        let lambda = ev.last().copied().unwrap_or(0.0).max(0.0);
        let rank_tol = rank_rel * (1.0 + lambda);
        let p_dim = ev.iter().filter(|&&e| e <= rank_tol).count();
        GreenPair {
            tilde_minus: &s_minus * 2.0 - &s_plus,
            tilde_plus: &s_plus * 2.0 - &s_minus,
            projector: range_projector(&delta, rank_tol),
            s_minus: LagrangianGraph {
                s: s_minus,
                base: base.clone(),
            },
            s_plus: LagrangianGraph {
                s: s_plus,
                base: base.clone(),
            },
            delta,
            p_dim,
            lambda,
            rank_tol,
            t_used: 0.0,
            tail: 0.0,
        }
    }

    /// Smallest margin of `s̃₋ ⪯ s₋ ⪯ s₊ ⪯ s̃₊`; negative means a violation.
    pub fn order_margin(&self) -> f64 {
        [
            min_eigenvalue(&(&self.s_minus.s - &self.tilde_minus)),
            min_eigenvalue(&self.delta),
            min_eigenvalue(&(&self.tilde_plus - &self.s_plus.s)),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// States `φ_{−σ k h}(x)` for `k = 0..=N`, `σ = sign(t)`, `h = |t|/N`.
fn backward_orbit<H: Hamiltonian + ?Sized>(
    stepper: &Stepper<H>,
    model: &H,
    x: &LiftedPoint,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(Vec<LiftedPoint>, f64), FlowError> {
    if t.abs() > cfg.horizon {
        return Err(FlowError::Horizon {
            t,
            horizon: cfg.horizon,
        });
    }
    let steps = step_count(t, cfg.step);
    let h = t / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut y = x.clone();
    states.push(y.clone());
    for k in 0..steps {
        stepper.step(&mut y.q, &mut y.p, -h, None)?;
        if y.q.iter().chain(&y.p).any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite {
                s: -(k as f64 + 1.0) * h,
            });
        }
        states.push(y.clone());
    }
    let e0 = model.energy(&x.q, &x.p);
    let e1 = model.energy(&y.q, &y.p);
    let allowed = cfg.max_energy_drift * t.abs().max(1.0) * (1.0 + e0.abs());
    if (e1 - e0).abs() > allowed {
        return Err(FlowError::EnergyDrift {
            drift: (e1 - e0).abs(),
            allowed,
            t: -t,
            initial: e0,
            step: cfg.step,
        });
    }
    Ok((states, h))
}

/// Graph matrix `S_t` of `G_t(x) = Dφ_t V(φ_{−t}x)`, `t ≠ 0` of either sign.
pub fn pushed_vertical<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    t: f64,
    cfg: &GreenConfig,
) -> Result<LagrangianGraph, GreenError> {
    let s = pushed_vertical_lifted(model, &LiftedPoint::from_phase(x), t, cfg)?;
    Ok(LagrangianGraph { s, base: x.clone() })
}

pub fn pushed_vertical_lifted<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &LiftedPoint,
    t: f64,
    cfg: &GreenConfig,
) -> Result<DMatrix<f64>, GreenError> {
    assert!(t != 0.0, "pushed_vertical needs t != 0");
    let n = model.dim();
    let stepper = Stepper::new(model, &cfg.flow);
    let (states, h) = backward_orbit(&stepper, model, x, t, &cfg.flow)?;
    let steps = states.len() - 1;
    let per_restart = ((cfg.restart / h.abs()).round() as usize).max(1);
    let blowup = cfg.blowup.max(100.0 / t.abs());

    let mut frame = DMatrix::zeros(2 * n, n);
    frame.view_mut((n, 0), (n, n)).fill_with_identity();
    let mut sign = 0.0;
    let mut s = DMatrix::zeros(n, n);
    for (done, k) in (1..=steps).rev().enumerate() {
        let mut y = states[k].clone();
        stepper.step(&mut y.q, &mut y.p, h, Some(&mut frame))?;
        let elapsed = (done + 1) as f64 * h.abs();
        let det = frame.view((0, 0), (n, n)).determinant();
        if sign != 0.0 && (det * sign <= 0.0 || !det.is_finite()) {
            return Err(GreenError::ConjugatePoint {
                time: elapsed,
                norm: f64::INFINITY,
            });
        }
        sign = det.signum();
        if (done + 1) % per_restart == 0 || k == 1 {
            let xm = frame.view((0, 0), (n, n)).into_owned();
            let ym = frame.view((n, 0), (n, n)).into_owned();
            let xi = xm.try_inverse().ok_or(GreenError::ConjugatePoint {
                time: elapsed,
                norm: f64::INFINITY,
            })?;
            s = symmetrize(&(ym * xi));
            let norm = op_norm(&s);
            if !(norm <= blowup) {
                return Err(GreenError::ConjugatePoint { time: elapsed, norm });
            }
            frame = graph_basis(&s);
            sign = 1.0;
        }
    }
    Ok(s)
}

/// `G₋(x)` and `G₊(x)` as limits of `G_{∓t}(x)` along a doubling sequence.
///
/// Successive values are combined as `2 S_{2t} − S_t`, which removes the
/// leading `1/t` term of the approach; a limit is accepted when two
/// consecutive combinations differ by at most `tol`.
pub fn green_bundles<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    cfg: &GreenConfig,
) -> Result<GreenPair, GreenError> {
    let lifted = LiftedPoint::from_phase(x);
    let mut limits = Vec::new();
    let mut t_used: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for (side, sign) in [("minus", -1.0), ("plus", 1.0)] {
        let mut t = cfg.t_start;
        let mut prev_s = pushed_vertical_lifted(model, &lifted, sign * t, cfg)?;
        let mut prev_e: Option<DMatrix<f64>> = None;
        let mut last_diff = f64::INFINITY;
        let mut accepted = None;
        while 2.0 * t <= cfg.t_max {
            t *= 2.0;
            let s = pushed_vertical_lifted(model, &lifted, sign * t, cfg)?;
            let e = &s * 2.0 - &prev_s;
            if let Some(pe) = &prev_e {
                last_diff = op_norm(&(&e - pe));
                if last_diff <= cfg.tol {
                    accepted = Some(e.clone());
                    break;
                }
            }
            prev_s = s;
            prev_e = Some(e);
        }
        match accepted {
            Some(e) => {
                limits.push(symmetrize(&e));
                t_used = t_used.max(t);
                tail = tail.max(last_diff);
            }
            None => {
                return Err(GreenError::LimitNotReached {
                    side,
                    t_max: cfg.t_max,
                    tail: last_diff,
                })
            }
        }
    }
    let s_plus = limits.pop().expect("two limits");
    let s_minus = limits.pop().expect("two limits");
    let mut pair = GreenPair::from_limits(x, s_minus, s_plus, cfg.rank_tol);
    pair.t_used = t_used;
    pair.tail = tail;
    Ok(pair)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthVerdict {
    Diverges,
    Bounded,
}

impl GrowthVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            GrowthVerdict::Diverges => "DIVERGES",
            GrowthVerdict::Bounded => "BOUNDED",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    /// `(t, ‖X-component of Dφ_t v‖)`; `t` is negative on the backward side.
    pub forward: Vec<(f64, f64)>,
    pub backward: Vec<(f64, f64)>,
    pub forward_verdict: GrowthVerdict,
    pub backward_verdict: GrowthVerdict,
    pub growth_factor: f64,
    /// `‖Y − s₋X‖` and `‖Y − s₊X‖`, when the bundles are supplied.
    pub distance_minus: Option<f64>,
    pub distance_plus: Option<f64>,
}

fn horizontal_growth<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    v: &TangentVector,
    t: f64,
    samples: usize,
    cfg: &FlowConfig,
) -> Result<Vec<(f64, f64)>, FlowError> {
    let stepper = Stepper::new(model, cfg);
    let mut y = LiftedPoint::from_phase(x);
    let mut frame = DMatrix::from_column_slice(v.stacked().len(), 1, v.stacked().as_slice());
    let n = model.dim();
    let dt = t / samples as f64;
    let mut out = vec![(0.0, v.x.norm())];
    for k in 1..=samples {
        stepper.advance(&mut y.q, &mut y.p, dt, cfg.step, Some(&mut frame))?;
        out.push((k as f64 * dt, frame.rows(0, n).norm()));
    }
    Ok(out)
}

fn verdict(series: &[(f64, f64)]) -> GrowthVerdict {
    let initial = series[0].1;
    let last = series.last().map(|s| s.1).unwrap_or(initial);
    if last > 1e3 * initial {
        GrowthVerdict::Diverges
    } else {
        GrowthVerdict::Bounded
    }
}

/// Forward and backward horizontal growth of `Dφ_{±t} v`, sampled at ten times.
pub fn dynamical_criterion_check<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    v: &TangentVector,
    t: f64,
    pair: Option<&GreenPair>,
    cfg: &FlowConfig,
) -> Result<GrowthReport, FlowError> {
    let forward = horizontal_growth(model, x, v, t.abs(), 10, cfg)?;
    let backward = horizontal_growth(model, x, v, -t.abs(), 10, cfg)?;
    let growth_factor = forward.last().unwrap().1 / forward[0].1;
    Ok(GrowthReport {
        forward_verdict: verdict(&forward),
        backward_verdict: verdict(&backward),
        forward,
        backward,
        growth_factor,
        distance_minus: pair.map(|g| g.s_minus.distance(v)),
        distance_plus: pair.map(|g| g.s_plus.distance(v)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairMargin {
    pub s: f64,
    pub t: f64,
    /// Minimal eigenvalues of `S_{−t} − S_{−s}`, `S_t − S_{−t}`, `S_s − S_t`.
    pub margins: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub pairs: Vec<PairMargin>,
    pub min_margin: f64,
    pub pass: bool,
    /// Every margin strictly positive beyond the tolerance.
    pub strict: bool,
    pub offending: Option<(f64, f64)>,
}

impl MonotonicityReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Checks `S_{−s} ⪯ S_{−t} ⪯ S_t ⪯ S_s` for every pair `s < t` of `times`.
pub fn monotonicity_scan<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    times: &[f64],
    cfg: &GreenConfig,
) -> Result<MonotonicityReport, GreenError> {
    let lifted = LiftedPoint::from_phase(x);
    let mut graphs = Vec::with_capacity(times.len());
    for &t in times {
        let plus = pushed_vertical_lifted(model, &lifted, t, cfg)?;
        let minus = pushed_vertical_lifted(model, &lifted, -t, cfg)?;
        graphs.push((t, minus, plus));
    }
    let mut pairs = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut offending = None;
    for i in 0..graphs.len() {
        for j in 0..graphs.len() {
            let (s, ms, ps) = &graphs[i];
            let (t, mt, pt) = &graphs[j];
            if !(s < t) {
                continue;
            }
            let margins = [
                min_eigenvalue(&(mt - ms)),
                min_eigenvalue(&(pt - mt)),
                min_eigenvalue(&(ps - pt)),
            ];
            let m = margins.iter().copied().fold(f64::INFINITY, f64::min);
            let scale = 1.0 + [ms, ps, mt, pt].iter().map(|a| op_norm(a)).fold(0.0, f64::max);
            if m < -cfg.order_tol * scale && offending.is_none() {
                offending = Some((*s, *t));
            }
            min_margin = min_margin.min(m);
            pairs.push(PairMargin { s: *s, t: *t, margins });
        }
    }
    let pass = offending.is_none();
    let strict = pass && min_margin > cfg.order_tol;
    Ok(MonotonicityReport {
        pairs,
        min_margin,
        pass,
        strict,
        offending,
    })
}

/// `Dφ_t` applied to a graph: `(C + D S)(A + B S)⁻¹`.
pub fn transport_graph(m: &crate::flow::CocycleMatrix, s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.transport_graph(s)
}

pub fn is_symmetric(s: &DMatrix<f64>, tol: f64) -> bool {
    asymmetry(s) <= tol
}

/// Largest eigenvalue of a symmetric matrix (used as `Λ`).
pub fn spectral_radius_sym(s: &DMatrix<f64>) -> f64 {
    max_eigenvalue(s).abs().max(min_eigenvalue(s).abs())
}

/// Unit tangent vector `(X, S X)/‖·‖`.
pub fn graph_vector(s: &DMatrix<f64>, x: &DVector<f64>) -> TangentVector {
    let y = s * x;
    let v = TangentVector { x: x.clone(), y };
    let norm = v.norm();
    TangentVector {
        x: &v.x / norm,
        y: &v.y / norm,
    }
}
