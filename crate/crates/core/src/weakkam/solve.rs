//! Weak KAM solutions by value iteration of the Lax–Oleinik operators.

use thiserror::Error;

use super::grid::{GridFunction, Interpolation};
use super::lax_oleinik::{LaxOleinik, LaxOleinikError, Sign};
use crate::model::Hamiltonian;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakKamError {
    #[error(transparent)]
    LaxOleinik(#[from] LaxOleinikError),
    #[error("grid m = {m} too coarse on T^{n} (need m ≥ {required})")]
    GridTooCoarse { n: usize, m: usize, required: usize },
    #[error("tolerance {0} must be positive")]
    Tolerance(f64),
    #[error("no convergence after {iterations} iterations (last change {:e})", history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { iterations: usize, history: Vec<f64> },
    #[error("empty equality set: max(u₊ − u₋) = {gap:e} with eq_tol {eq_tol:e}; c or the grid is too coarse")]
    Conjugacy { gap: f64, eq_tol: f64 },
    #[error("grid functions do not match the model or each other")]
    Mismatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakKamConfig {
    pub m: usize,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub sub_steps: Option<usize>,
    /// Window half-width; `None` picks it from the velocity bound.
    pub window: Option<f64>,
    pub interpolation: Interpolation,
    /// Equality-set threshold; `None` means `5·tol`.
    pub eq_tol: Option<f64>,
    /// Richardson-extrapolate the kernel in the sub-step count.
    pub richardson: bool,
}

impl Default for WeakKamConfig {
    fn default() -> Self {
        WeakKamConfig {
            m: 512,
            tau: 0.2,
            tol: 1e-6,
            max_iter: 2000,
            sub_steps: None,
            window: None,
            interpolation: Interpolation::Linear,
            eq_tol: None,
            richardson: true,
        }
    }
}

impl WeakKamConfig {
    pub fn eq_tol(&self) -> f64 {
        self.eq_tol.unwrap_or(5.0 * self.tol)
    }

    pub fn min_grid(n: usize) -> usize {
        if n == 1 {
            128
        } else {
            64
        }
    }

    fn check<H: Hamiltonian + ?Sized>(&self, model: &H) -> Result<(), WeakKamError> {
        let n = model.dim();
        if self.m < Self::min_grid(n) {
            return Err(WeakKamError::GridTooCoarse {
                n,
                m: self.m,
                required: Self::min_grid(n),
            });
        }
        if !(self.tol > 0.0) {
            return Err(WeakKamError::Tolerance(self.tol));
        }
        Ok(())
    }

    pub fn operator<H: Hamiltonian + ?Sized>(&self, model: &H, sign: Sign) -> Result<LaxOleinik, WeakKamError> {
        Ok(LaxOleinik::new(
            model,
            self.m,
            self.tau,
            sign,
            self.sub_steps,
            self.window,
            self.richardson,
        )?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakKamSolution {
    pub u: GridFunction,
    pub c: f64,
    pub iterations: usize,
    /// `‖T u ∓ cτ − u‖_∞` at the returned `u`.
    pub residual: f64,
    /// Sup-norm change per iteration.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakKamPair {
    pub u_minus: GridFunction,
    pub u_plus: GridFunction,
    pub c: f64,
    /// Fixed-point defects of `u₋` and `u₊`.
    pub residuals: [f64; 2],
    /// Mean drift `(T̆u₊ − u₊)/τ − c` left by the positive iteration.
    pub drift: f64,
    pub eq_tol: f64,
    pub equality_set: Vec<bool>,
    pub iterations: usize,
}

impl WeakKamPair {
    pub fn equality_nodes(&self) -> Vec<usize> {
        (0..self.equality_set.len()).filter(|&i| self.equality_set[i]).collect()
    }

    /// `max(u₊ − u₋)`, non-positive up to rounding for a valid pair.
    pub fn order_gap(&self) -> f64 {
        self.u_plus
            .values
            .iter()
            .zip(&self.u_minus.values)
            .map(|(p, m)| p - m)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn signed(sign: Sign) -> f64 {
    match sign {
        Sign::Negative => 1.0,
        Sign::Positive => -1.0,
    }
}

/// Critical value and fixed point of `u ↦ T_τ u + cτ` (negative) or
/// `u ↦ T̆_τ u − cτ` (positive), normalized to `min u = 0`.
pub fn solve_weak_kam<H: Hamiltonian + ?Sized>(
    model: &H,
    sign: Sign,
    cfg: &WeakKamConfig,
) -> Result<WeakKamSolution, WeakKamError> {
    cfg.check(model)?;
    let op = cfg.operator(model, sign)?;
    let u0 = GridFunction::constant(model.dim(), cfg.m, 0.0, cfg.interpolation);
    iterate(&op, u0, cfg)
}

/// Value iteration with a prebuilt operator, starting at `u0`.
pub fn iterate(op: &LaxOleinik, mut u: GridFunction, cfg: &WeakKamConfig) -> Result<WeakKamSolution, WeakKamError> {
    let s = signed(op.sign);
    let tau = op.tau;
    let mut history = Vec::new();
    let mut c = 0.0;
    for k in 1..=cfg.max_iter {
        let tu = op.apply(&u)?;
        let mean = tu.mean() - u.mean();
        c = -s * mean / tau;
        let shift = s * c * tau;
        let raw = tu.map(|v| v + shift);
        let lo = raw.min();
        let next = raw.map(|v| v - lo);
        let change = next.sup_distance(&u);
        history.push(change);
        u = next;
        if change <= cfg.tol {
            let tu = op.apply(&u)?;
            let residual = tu
                .values
                .iter()
                .zip(&u.values)
                .map(|(a, b)| (a + shift - b).abs())
                .fold(0.0, f64::max);
            return Ok(WeakKamSolution {
                u,
                c,
                iterations: k,
                residual,
                history,
            });
        }
    }
    let _ = c;
    Err(WeakKamError::NotConverged {
        iterations: cfg.max_iter,
        history,
    })
}

/// The positive solution conjugate to `u_minus`: iterate `u ↦ T̆_τ u − cτ`
/// from `u₋` until the update is constant up to `tol`, then fix the additive
/// constant so that `u₊ ≤ u₋` with contact.
pub fn conjugate_pair<H: Hamiltonian + ?Sized>(
    model: &H,
    u_minus: &GridFunction,
    c: f64,
    cfg: &WeakKamConfig,
) -> Result<WeakKamPair, WeakKamError> {
    if u_minus.n != model.dim() || u_minus.m != cfg.m {
        return Err(WeakKamError::Mismatch);
    }
    cfg.check(model)?;
    let neg = cfg.operator(model, Sign::Negative)?;
    let pos = cfg.operator(model, Sign::Positive)?;
    conjugate_pair_with(&neg, &pos, u_minus, c, cfg)
}

pub fn conjugate_pair_with(
    neg: &LaxOleinik,
    pos: &LaxOleinik,
    u_minus: &GridFunction,
    c: f64,
    cfg: &WeakKamConfig,
) -> Result<WeakKamPair, WeakKamError> {
    let tau = pos.tau;
    let mut u = u_minus.clone();
    let mut history = Vec::new();
    let mut converged = None;
    for k in 1..=cfg.max_iter {
        let next = pos.apply(&u)?.map(|v| v - c * tau);
        let (lo, hi) = next
            .values
            .iter()
            .zip(&u.values)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        history.push(hi - lo);
        u = next;
        if hi - lo <= cfg.tol {
            converged = Some(k);
            break;
        }
    }
    let iterations = converged.ok_or(WeakKamError::NotConverged {
        iterations: cfg.max_iter,
        history,
    })?;
    let gap = u
        .values
        .iter()
        .zip(&u_minus.values)
        .map(|(p, m)| p - m)
        .fold(f64::NEG_INFINITY, f64::max);
    let u_plus = u.map(|v| v - gap);
    let tp = pos.apply(&u_plus)?;
    let mean = (tp.mean() - u_plus.mean()) / tau;
    let residual_plus = tp
        .values
        .iter()
        .zip(&u_plus.values)
        .map(|(a, b)| (a - c * tau - b - (mean - c) * tau).abs())
        .fold(0.0, f64::max);
    let tm = neg.apply(u_minus)?;
    let residual_minus = tm
        .values
        .iter()
        .zip(&u_minus.values)
        .map(|(a, b)| (a + c * tau - b).abs())
        .fold(0.0, f64::max);
    let eq_tol = cfg.eq_tol();
    let equality_set: Vec<bool> = u_minus
        .values
        .iter()
        .zip(&u_plus.values)
        .map(|(m, p)| m - p <= eq_tol)
        .collect();
    if !equality_set.iter().any(|&b| b) {
        return Err(WeakKamError::Conjugacy { gap, eq_tol });
    }
    Ok(WeakKamPair {
        u_minus: u_minus.clone(),
        u_plus,
        c,
        residuals: [residual_minus, residual_plus],
        drift: mean - c,
        eq_tol,
        equality_set,
        iterations,
    })
}

/// `u₋`, `c` and the conjugate `u₊` in one call.
pub fn weak_kam_pair<H: Hamiltonian + ?Sized>(
    model: &H,
    cfg: &WeakKamConfig,
) -> Result<(WeakKamPair, WeakKamSolution), WeakKamError> {
    cfg.check(model)?;
    let neg = cfg.operator(model, Sign::Negative)?;
    let pos = cfg.operator(model, Sign::Positive)?;
    let u0 = GridFunction::constant(model.dim(), cfg.m, 0.0, cfg.interpolation);
    let sol = iterate(&neg, u0, cfg)?;
    let pair = conjugate_pair_with(&neg, &pos, &sol.u, sol.c, cfg)?;
    Ok((pair, sol))
}
