//! Hamiltonian flow `φ_t` and its linearization `Dφ_t`.
//!
//! Orbits are integrated in the universal cover (lifted `q`) with a symmetric
//! symplectic scheme; tangent vectors are advanced with the exact derivative
//! of the same discrete map, so the discrete cocycle is itself symplectic.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::symplectic_j;
use crate::model::{Hamiltonian, ModelError, PhasePoint, TangentVector, TorusPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("|t| = {t} exceeds the integration horizon {horizon}")]
    Horizon { t: f64, horizon: f64 },
    #[error("energy drift {drift:e} over |t| = {t} exceeds the allowed {allowed:e} (H0 = {initial}, step {step})")]
    EnergyDrift {
        drift: f64,
        allowed: f64,
        t: f64,
        initial: f64,
        step: f64,
    },
    #[error("implicit midpoint step did not converge (residual {residual:e})")]
    ImplicitSolve { residual: f64 },
    #[error("orbit left the finite domain at s = {s}")]
    NonFinite { s: f64 },
}

/// Base one-step method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Leapfrog,
    ImplicitMidpoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    /// Maximal step size `h`; every integration uses `ceil(|t|/h)` equal steps.
    pub step: f64,
    /// `None` selects leapfrog for separable models and implicit midpoint otherwise.
    pub scheme: Option<Scheme>,
    /// 2 (base scheme) or 4 (triple-jump composition).
    pub order: u32,
    /// Allowed energy error per unit time (at least one unit is always granted).
    pub max_energy_drift: f64,
    pub horizon: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            step: 1e-2,
            scheme: None,
            order: 4,
            max_energy_drift: 1e-5,
            horizon: 1e3,
        }
    }
}

impl FlowConfig {
    pub fn resolved_scheme<H: Hamiltonian + ?Sized>(&self, model: &H) -> Scheme {
        self.scheme.unwrap_or(if model.is_separable() {
            Scheme::Leapfrog
        } else {
            Scheme::ImplicitMidpoint
        })
    }
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_6;
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3;

/// A one-step integrator bound to a model.
pub struct Stepper<'a, H: Hamiltonian + ?Sized> {
    model: &'a H,
    scheme: Scheme,
    order: u32,
    n: usize,
}

impl<'a, H: Hamiltonian + ?Sized> Stepper<'a, H> {
    pub fn new(model: &'a H, cfg: &FlowConfig) -> Self {
        Stepper {
            model,
            scheme: cfg.resolved_scheme(model),
            order: cfg.order,
            n: model.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// One step of size `h`; when `frame` is given its columns (tangent
    /// vectors, stacked `(δq; δp)`) are advanced by the derivative of the step.
    pub fn step(
        &self,
        q: &mut [f64],
        p: &mut [f64],
        h: f64,
        mut frame: Option<&mut DMatrix<f64>>,
    ) -> Result<(), FlowError> {
        if self.order >= 4 {
            for w in [YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1] {
                self.base_step(q, p, w * h, frame.as_deref_mut())?;
            }
            Ok(())
        } else {
            self.base_step(q, p, h, frame)
        }
    }

    fn base_step(
        &self,
        q: &mut [f64],
        p: &mut [f64],
        h: f64,
        frame: Option<&mut DMatrix<f64>>,
    ) -> Result<(), FlowError> {
        match self.scheme {
            Scheme::Leapfrog => {
                self.leapfrog(q, p, h, frame);
                Ok(())
            }
            Scheme::ImplicitMidpoint => self.midpoint(q, p, h, frame),
        }
    }

    fn leapfrog(&self, q: &mut [f64], p: &mut [f64], h: f64, frame: Option<&mut DMatrix<f64>>) {
        let n = self.n;
        let mut dq = [0.0; 2];
        let mut dp = [0.0; 2];
        let hqq0 = frame.as_ref().map(|_| self.model.hessian(q, p).qq);
        self.model.gradient(q, p, &mut dq[..n], &mut dp[..n]);
        for i in 0..n {
            p[i] -= 0.5 * h * dq[i];
        }
        let hpp = frame.as_ref().map(|_| self.model.hessian(q, p).pp);
        self.model.gradient(q, p, &mut dq[..n], &mut dp[..n]);
        for i in 0..n {
            q[i] += h * dp[i];
        }
        self.model.gradient(q, p, &mut dq[..n], &mut dp[..n]);
        for i in 0..n {
            p[i] -= 0.5 * h * dq[i];
        }
        if let (Some(f), Some(hqq0), Some(hpp)) = (frame, hqq0, hpp) {
            let hqq1 = self.model.hessian(q, p).qq;
            let mut x = f.rows(0, n).into_owned();
            let mut y = f.rows(n, n).into_owned();
            y -= &hqq0 * &x * (0.5 * h);
            x += &hpp * &y * h;
            y -= &hqq1 * &x * (0.5 * h);
            f.rows_mut(0, n).copy_from(&x);
            f.rows_mut(n, n).copy_from(&y);
        }
    }

    fn vector_field_matrix(&self, q: &[f64], p: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let full = self.model.hessian(q, p).full();
        symplectic_j(n) * full
    }

    fn midpoint(
        &self,
        q: &mut [f64],
        p: &mut [f64],
        h: f64,
        frame: Option<&mut DMatrix<f64>>,
    ) -> Result<(), FlowError> {
        let n = self.n;
        let x0: Vec<f64> = q.iter().chain(p.iter()).copied().collect();
        let mut x1 = x0.clone();
        let field = |x: &[f64]| {
            let mut dq = [0.0; 2];
            let mut dp = [0.0; 2];
            self.model.gradient(&x[..n], &x[n..], &mut dq[..n], &mut dp[..n]);
            let mut f = vec![0.0; 2 * n];
            for i in 0..n {
                f[i] = dp[i];
                f[n + i] = -dq[i];
            }
            f
        };
        // Explicit Euler predictor, then Newton on F(x1) = x1 - x0 - h f((x0 + x1)/2).
        let f0 = field(&x0);
        for i in 0..2 * n {
            x1[i] += h * f0[i];
        }
        let scale = 1.0 + x0.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut residual = f64::INFINITY;
        for _ in 0..30 {
            let mid: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| 0.5 * (a + b)).collect();
            let f = field(&mid);
            let r = DVector::from_fn(2 * n, |i, _| x1[i] - x0[i] - h * f[i]);
            residual = r.amax();
            if !residual.is_finite() {
                break;
            }
            if residual <= 1e-15 * scale {
                break;
            }
            let a = self.vector_field_matrix(&mid[..n], &mid[n..]);
            let jac = DMatrix::identity(2 * n, 2 * n) - a * (0.5 * h);
            let dx = jac.lu().solve(&r).ok_or(FlowError::ImplicitSolve { residual })?;
            for i in 0..2 * n {
                x1[i] -= dx[i];
            }
        }
        if !(residual <= 1e-12 * scale) {
            return Err(FlowError::ImplicitSolve { residual });
        }
        if let Some(f) = frame {
            let mid: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| 0.5 * (a + b)).collect();
            let a = self.vector_field_matrix(&mid[..n], &mid[n..]);
            let id = DMatrix::identity(2 * n, 2 * n);
            let lhs = &id - &a * (0.5 * h);
            let rhs = (&id + &a * (0.5 * h)) * &*f;
            *f = lhs.lu().solve(&rhs).ok_or(FlowError::ImplicitSolve { residual })?;
        }
        q.copy_from_slice(&x1[..n]);
        p.copy_from_slice(&x1[n..]);
        Ok(())
    }

    /// Advances `(q, p)` (and `frame`) by time `t` using `ceil(|t|/h)` equal steps.
    pub fn advance(
        &self,
        q: &mut [f64],
        p: &mut [f64],
        t: f64,
        max_step: f64,
        mut frame: Option<&mut DMatrix<f64>>,
    ) -> Result<(), FlowError> {
        if t == 0.0 {
            return Ok(());
        }
        let steps = step_count(t, max_step);
        let h = t / steps as f64;
        for k in 0..steps {
            self.step(q, p, h, frame.as_deref_mut())?;
            if q.iter().chain(p.iter()).any(|v| !v.is_finite()) {
                return Err(FlowError::NonFinite { s: (k + 1) as f64 * h });
            }
        }
        Ok(())
    }
}

pub fn step_count(t: f64, max_step: f64) -> usize {
    ((t.abs() / max_step).ceil() as usize).max(1)
}

/// A phase point in the universal cover: `q` is not reduced modulo 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedPoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl LiftedPoint {
    pub fn from_phase(x: &PhasePoint) -> Self {
        LiftedPoint {
            q: x.q.coords().to_vec(),
            p: x.p.as_slice().to_vec(),
        }
    }

    pub fn to_phase(&self) -> PhasePoint {
        PhasePoint {
            q: TorusPoint::new(self.q.clone()),
            p: DVector::from_vec(self.p.clone()),
        }
    }
}

fn check_horizon(t: f64, cfg: &FlowConfig) -> Result<(), FlowError> {
    if t.abs() > cfg.horizon || !t.is_finite() {
        Err(FlowError::Horizon {
            t,
            horizon: cfg.horizon,
        })
    } else {
        Ok(())
    }
}

fn check_energy<H: Hamiltonian + ?Sized>(
    model: &H,
    initial: f64,
    end: &LiftedPoint,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(), FlowError> {
    let e1 = model.energy(&end.q, &end.p);
    let drift = (e1 - initial).abs();
    let allowed = cfg.max_energy_drift * t.abs().max(1.0) * (1.0 + initial.abs());
    if drift.is_nan() || drift > allowed {
        Err(FlowError::EnergyDrift {
            drift,
            allowed,
            t,
            initial,
            step: cfg.step,
        })
    } else {
        Ok(())
    }
}

/// `φ_t` on the universal cover.
pub fn integrate_lifted<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &LiftedPoint,
    t: f64,
    cfg: &FlowConfig,
) -> Result<LiftedPoint, FlowError> {
    check_horizon(t, cfg)?;
    let e0 = model.energy(&x.q, &x.p);
    let mut y = x.clone();
    Stepper::new(model, cfg).advance(&mut y.q, &mut y.p, t, cfg.step, None)?;
    check_energy(model, e0, &y, t, cfg)?;
    Ok(y)
}

/// `φ_t(x)` with `q` reduced to the fundamental domain.
pub fn integrate<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    t: f64,
    cfg: &FlowConfig,
) -> Result<PhasePoint, FlowError> {
    Ok(integrate_lifted(model, &LiftedPoint::from_phase(x), t, cfg)?.to_phase())
}

/// Samples of the orbit at `times` (ascending, measured from 0).
pub fn trajectory<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &LiftedPoint,
    times: &[f64],
    cfg: &FlowConfig,
) -> Result<Vec<LiftedPoint>, FlowError> {
    let stepper = Stepper::new(model, cfg);
    let e0 = model.energy(&x.q, &x.p);
    let mut y = x.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        check_horizon(t, cfg)?;
        stepper.advance(&mut y.q, &mut y.p, t - now, cfg.step, None)?;
        check_energy(model, e0, &y, t, cfg)?;
        now = t;
        out.push(y.clone());
    }
    Ok(out)
}

/// The matrix of `Dφ_t(x)`, block-ordered `(δq; δp)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleMatrix {
    pub entries: DMatrix<f64>,
}

impl CocycleMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn identity(n: usize) -> Self {
        CocycleMatrix {
            entries: DMatrix::identity(2 * n, 2 * n),
        }
    }

    /// `(A, B, C, D)` with `δq' = A δq + B δp` and `δp' = C δq + D δp`.
    pub fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let m = &self.entries;
        (
            m.view((0, 0), (n, n)).into_owned(),
            m.view((0, n), (n, n)).into_owned(),
            m.view((n, 0), (n, n)).into_owned(),
            m.view((n, n), (n, n)).into_owned(),
        )
    }

    /// `max |MᵀJM − J|`, normalized by `max(1, ‖M‖_max²)` so the figure is
    /// meaningful for strongly hyperbolic cocycles.
    pub fn symplectic_defect(&self) -> f64 {
        let n = self.dim();
        let j = symplectic_j(n);
        let m = &self.entries;
        let defect = (m.transpose() * &j * m - &j).amax();
        defect / m.amax().powi(2).max(1.0)
    }

    pub fn apply(&self, v: &TangentVector) -> TangentVector {
        TangentVector::from_stacked(&(&self.entries * v.stacked()))
    }

    pub fn compose(&self, earlier: &CocycleMatrix) -> CocycleMatrix {
        CocycleMatrix {
            entries: &self.entries * &earlier.entries,
        }
    }

    /// Image of the graph of `S` under the cocycle: `(C + D S)(A + B S)⁻¹`.
    pub fn transport_graph(&self, s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (a, b, c, d) = self.blocks();
        let x = a + b * s;
        let y = c + d * s;
        let xi = x.try_inverse()?;
        Some(crate::linalg::symmetrize(&(y * xi)))
    }
}

/// `Dφ_t(x)` by joint integration of the orbit and the variational system.
pub fn linearized_flow<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    t: f64,
    cfg: &FlowConfig,
) -> Result<CocycleMatrix, FlowError> {
    let (_, m) = linearized_flow_lifted(model, &LiftedPoint::from_phase(x), t, cfg)?;
    Ok(m)
}

pub fn linearized_flow_lifted<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &LiftedPoint,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(LiftedPoint, CocycleMatrix), FlowError> {
    check_horizon(t, cfg)?;
    let n = model.dim();
    let e0 = model.energy(&x.q, &x.p);
    let mut y = x.clone();
    let mut frame = DMatrix::identity(2 * n, 2 * n);
    Stepper::new(model, cfg).advance(&mut y.q, &mut y.p, t, cfg.step, Some(&mut frame))?;
    check_energy(model, e0, &y, t, cfg)?;
    Ok((y, CocycleMatrix { entries: frame }))
}

/// Advances an arbitrary tangent frame (columns stacked `(δq; δp)`) along the orbit of `x`.
pub fn propagate_frame<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &LiftedPoint,
    frame: &DMatrix<f64>,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(LiftedPoint, DMatrix<f64>), FlowError> {
    check_horizon(t, cfg)?;
    let mut y = x.clone();
    let mut f = frame.clone();
    Stepper::new(model, cfg).advance(&mut y.q, &mut y.p, t, cfg.step, Some(&mut f))?;
    Ok((y, f))
}

/// Hamiltonian vector field `X_H = (∂H/∂p, −∂H/∂q)`.
pub fn flow_vector<H: Hamiltonian + ?Sized>(model: &H, x: &PhasePoint) -> TangentVector {
    let n = model.dim();
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    model.gradient(x.q.coords(), x.p.as_slice(), &mut dq, &mut dp);
    TangentVector {
        x: DVector::from_vec(dp),
        y: DVector::from_vec(dq.iter().map(|v| -v).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TonelliModel;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, SQRT_2};

    fn cfg() -> FlowConfig {
        FlowConfig::default()
    }

    #[test]
    fn integrate_examples() {
        let rotor = TonelliModel::free_rotor(1);
        let y = integrate(&rotor, &PhasePoint::new(vec![0.0], vec![0.5]), 1.0, &cfg()).unwrap();
        assert_abs_diff_eq!(y.q.coords()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y.p[0], 0.5, epsilon = 1e-12);

        let pend = TonelliModel::pendulum();
        let y = integrate(&pend, &PhasePoint::new(vec![0.0], vec![0.0]), 5.0, &cfg()).unwrap();
        assert_eq!(y.q.coords()[0], 0.0);
        assert_eq!(y.p[0], 0.0);
        let y = integrate(&pend, &PhasePoint::new(vec![0.5], vec![0.0]), 2.0, &cfg()).unwrap();
        assert_abs_diff_eq!(y.q.coords()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y.p[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linearized_examples() {
        let rotor = TonelliModel::free_rotor(1);
        let m = linearized_flow(&rotor, &PhasePoint::new(vec![0.4], vec![1.3]), 2.0, &cfg()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!((m.entries - expected).amax() < 1e-12);

        let pend = TonelliModel::pendulum();
        let m = linearized_flow(&pend, &PhasePoint::new(vec![0.0], vec![0.0]), 1.0, &cfg()).unwrap();
        let w = 2.0 * PI;
        let expected = DMatrix::from_row_slice(2, 2, &[w.cosh(), w.sinh() / w, w * w.sinh(), w.cosh()]);
        let rel = (&m.entries - &expected).amax() / expected.amax();
        assert!(rel < 1e-5, "relative error {rel}");

        let mane = TonelliModel::mane_rotor([1.0, SQRT_2]);
        let m = linearized_flow(&mane, &PhasePoint::new(vec![0.2, 0.7], vec![0.3, -0.1]), 1.0, &cfg()).unwrap();
        let mut expected = DMatrix::identity(4, 4);
        expected[(0, 2)] = 1.0;
        expected[(1, 3)] = 1.0;
        assert!((m.entries - expected).amax() < 1e-12);
    }

    #[test]
    fn flow_vector_examples() {
        let v = flow_vector(&TonelliModel::free_rotor(1), &PhasePoint::new(vec![0.2], vec![1.0]));
        assert_eq!((v.x[0], v.y[0]), (1.0, 0.0));
        let pend = TonelliModel::pendulum();
        let v = flow_vector(&pend, &PhasePoint::new(vec![0.0], vec![0.0]));
        assert_eq!(v.norm(), 0.0);
        let v = flow_vector(&pend, &PhasePoint::new(vec![0.25], vec![0.0]));
        assert_abs_diff_eq!(v.x[0], 0.0);
        assert_abs_diff_eq!(v.y[0], 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn midpoint_agrees_with_leapfrog() {
        let model = TonelliModel::mechanical_t2(1.0, 0.5, 0.25);
        let x = PhasePoint::new(vec![0.1, 0.3], vec![0.7, -0.4]);
        let fine = FlowConfig { step: 2e-3, ..cfg() };
        let a = linearized_flow(&model, &x, 1.5, &fine).unwrap();
        let mid = FlowConfig {
            scheme: Some(Scheme::ImplicitMidpoint),
            ..fine
        };
        let b = linearized_flow(&model, &x, 1.5, &mid).unwrap();
        let diff = (a.entries - &b.entries).amax();
        assert!(diff < 1e-6, "{diff}");
        assert!(b.symplectic_defect() < 1e-12);
    }

    #[test]
    fn energy_drift_is_reported() {
        let pend = TonelliModel::pendulum();
        let coarse = FlowConfig {
            step: 0.2,
            order: 2,
            max_energy_drift: 1e-9,
            ..cfg()
        };
        let err = integrate(&pend, &PhasePoint::new(vec![0.1], vec![1.0]), 3.0, &coarse).unwrap_err();
        assert!(matches!(err, FlowError::EnergyDrift { .. }));
        let err = integrate(&pend, &PhasePoint::new(vec![0.1], vec![1.0]), 2e3, &cfg()).unwrap_err();
        assert!(matches!(err, FlowError::Horizon { .. }));
    }

    #[test]
    fn reversibility_of_mechanical_models() {
        let model = TonelliModel::mechanical_t2(1.0, 0.5, 0.25);
        let x = LiftedPoint {
            q: vec![0.31, 0.62],
            p: vec![0.4, 1.1],
        };
        let back = integrate_lifted(&model, &x, -2.0, &cfg()).unwrap();
        let rx = LiftedPoint {
            q: x.q.clone(),
            p: x.p.iter().map(|v| -v).collect(),
        };
        let fwd = integrate_lifted(&model, &rx, 2.0, &cfg()).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(back.q[i], fwd.q[i], epsilon = 1e-8);
            assert_abs_diff_eq!(back.p[i], -fwd.p[i], epsilon = 1e-8);
        }
    }
}
