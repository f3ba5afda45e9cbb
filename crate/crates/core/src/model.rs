//! Tonelli Hamiltonians on the flat tori `T^1` and `T^2`.
//!
//! Configuration points live in the fundamental domain `[0,1)^n`. Every
//! evaluator accepts *lifted* coordinates (arbitrary reals) because the
//! Hamiltonians are 1-periodic in `q`; this is what lets the flow and the
//! action minimizer work in the universal cover without bookkeeping.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 2;

const TWO_PI: f64 = 2.0 * PI;
const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{0}` (see `greenkam list-models`)")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{name}`")]
    UnknownParameter { model: String, name: String },
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: String, value: f64, reason: String },
    #[error("non-finite {what} at q = {q:?}, p = {p:?}")]
    NonFinite {
        what: &'static str,
        q: Vec<f64>,
        p: Vec<f64>,
    },
    #[error("Legendre transform did not converge in {iterations} Newton iterations (residual {residual:e})")]
    LegendreNotConverged { iterations: usize, residual: f64 },
    #[error("fiber Hessian is not positive definite at q = {q:?}, p = {p:?}")]
    NotConvex { q: Vec<f64>, p: Vec<f64> },
    #[error("analytic {what} disagrees with finite differences (relative error {rel_err:e})")]
    DerivativeMismatch { what: &'static str, rel_err: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Reduce a real number to the fundamental domain `[0,1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduce a real number to `[-1/2, 1/2)`.
pub fn wrap_centered(x: f64) -> f64 {
    wrap_unit(x + 0.5) - 0.5
}

/// A point of `T^n` with its canonical representative in `[0,1)^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        let coords = coords.into().into_iter().map(wrap_unit).collect();
        TorusPoint { coords }
    }

    pub fn origin(n: usize) -> Self {
        TorusPoint { coords: vec![0.0; n] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn translate(&self, d: &[f64]) -> Self {
        TorusPoint::new(self.coords.iter().zip(d).map(|(a, b)| a + b).collect::<Vec<_>>())
    }

    /// Shortest lifted displacement from `self` to `other`, each component in `[-1/2, 1/2)`.
    pub fn displacement_to(&self, other: &TorusPoint) -> Vec<f64> {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| wrap_centered(b - a))
            .collect()
    }

    /// Flat torus distance, i.e. the minimum over integer lifts of the Euclidean distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.displacement_to(other).iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

/// A point `(q, p)` of `T^*T^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub q: TorusPoint,
    pub p: DVector<f64>,
}

impl PhasePoint {
    pub fn new(q: impl Into<Vec<f64>>, p: impl Into<Vec<f64>>) -> Self {
        let q = TorusPoint::new(q);
        let p: Vec<f64> = p.into();
        assert_eq!(q.dim(), p.len(), "q and p must have the same dimension");
        PhasePoint {
            q,
            p: DVector::from_vec(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// Phase-space difference `other - self` with the `q` part taken on the shortest lift.
    pub fn difference_to(&self, other: &PhasePoint) -> DVector<f64> {
        let n = self.dim();
        let dq = self.q.displacement_to(&other.q);
        DVector::from_fn(2 * n, |i, _| if i < n { dq[i] } else { other.p[i - n] - self.p[i - n] })
    }
}

/// Tangent vector `(X, Y) = (δq, δp)`; the linear vertical is `{X = 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl TangentVector {
    pub fn new(x: impl Into<Vec<f64>>, y: impl Into<Vec<f64>>) -> Self {
        TangentVector {
            x: DVector::from_vec(x.into()),
            y: DVector::from_vec(y.into()),
        }
    }

    pub fn from_stacked(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        TangentVector {
            x: v.rows(0, n).into_owned(),
            y: v.rows(n, n).into_owned(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.x[i] } else { self.y[i - n] })
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }

    pub fn is_transverse_to_vertical(&self) -> bool {
        self.x.iter().any(|&c| c != 0.0)
    }
}

/// Second derivatives of `H` in `(q, p)` blocks; `qp[(i, j)] = ∂²H/∂q_i∂p_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianBlocks {
    pub qq: DMatrix<f64>,
    pub qp: DMatrix<f64>,
    pub pp: DMatrix<f64>,
}

impl HessianBlocks {
    pub fn zeros(n: usize) -> Self {
        HessianBlocks {
            qq: DMatrix::zeros(n, n),
            qp: DMatrix::zeros(n, n),
            pp: DMatrix::zeros(n, n),
        }
    }

    /// Full `2n x 2n` Hessian ordered `(q; p)`.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.qq.nrows();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.qq);
        h.view_mut((0, n), (n, n)).copy_from(&self.qp);
        h.view_mut((n, 0), (n, n)).copy_from(&self.qp.transpose());
        h.view_mut((n, n), (n, n)).copy_from(&self.pp);
        h
    }
}

/// Value and derivatives up to order two of the Lagrangian at `(q, v)`.
///
/// Stored in fixed `2 x 2` storage; for `n = 1` only the leading entries are
/// meaningful and everything else is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LagrangianJet {
    pub value: f64,
    pub dq: Vector2<f64>,
    pub dv: Vector2<f64>,
    pub qq: Matrix2<f64>,
    /// `qv[(i, j)] = ∂²L/∂q_i∂v_j`
    pub qv: Matrix2<f64>,
    pub vv: Matrix2<f64>,
}

/// A Tonelli Hamiltonian on `T^*T^n`: `C^2`, strictly convex and superlinear in `p`.
pub trait Hamiltonian: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn energy(&self, q: &[f64], p: &[f64]) -> f64;

    /// Writes `∂H/∂q` and `∂H/∂p`.
    fn gradient(&self, q: &[f64], p: &[f64], dq: &mut [f64], dp: &mut [f64]);

    fn hessian(&self, q: &[f64], p: &[f64]) -> HessianBlocks;

    /// `H(q, p) = K(p) + V(q)`, which enables the leapfrog family of integrators.
    fn is_separable(&self) -> bool {
        false
    }

    /// `H` does not depend on `q`, so actions only depend on displacements.
    fn is_translation_invariant(&self) -> bool {
        false
    }

    /// `(α, w, β)` with `L(q, v) ≥ α/2 |v − w|² − β` everywhere, when known.
    fn kinetic_bound(&self) -> Option<(f64, [f64; 2], f64)> {
        None
    }

    /// `L(q, v)` alone; models with a cheap closed form override it.
    fn lagrangian_value(&self, q: &[f64], v: &[f64]) -> Result<f64, ModelError> {
        Ok(self.lagrangian_jet(q, v)?.value)
    }

    /// Lagrangian jet at `(q, v)`. The default goes through the Legendre
    /// transform; models with a closed-form Lagrangian override it.
    fn lagrangian_jet(&self, q: &[f64], v: &[f64]) -> Result<LagrangianJet, ModelError> {
        legendre_jet(self, q, v)
    }
}

fn legendre_jet<H: Hamiltonian + ?Sized>(model: &H, q: &[f64], v: &[f64]) -> Result<LagrangianJet, ModelError> {
    let n = model.dim();
    let (p, value) = legendre_raw(model, q, v)?;
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    model.gradient(q, &p, &mut dq, &mut dp);
    let hb = model.hessian(q, &p);
    let pp_inv = hb.pp.clone().try_inverse().ok_or_else(|| ModelError::NotConvex {
        q: q.to_vec(),
        p: p.clone(),
    })?;
    let qv = -&hb.qp * &pp_inv;
    let qq = -&hb.qq + &hb.qp * &pp_inv * hb.qp.transpose();
    let mut jet = LagrangianJet {
        value,
        ..Default::default()
    };
    for i in 0..n {
        jet.dq[i] = -dq[i];
        jet.dv[i] = p[i];
        for j in 0..n {
            jet.qq[(i, j)] = qq[(i, j)];
            jet.qv[(i, j)] = qv[(i, j)];
            jet.vv[(i, j)] = pp_inv[(i, j)];
        }
    }
    Ok(jet)
}

/// Newton solve of `v = ∂H/∂p(q, p)`; returns `(p, L(q, v))`.
fn legendre_raw<H: Hamiltonian + ?Sized>(model: &H, q: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64), ModelError> {
    const MAX_ITER: usize = 50;
    let n = model.dim();
    if v.len() != n || q.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let scale = 1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut p = v.to_vec();
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        model.gradient(q, &p, &mut dq, &mut dp);
        let r = DVector::from_fn(n, |i, _| dp[i] - v[i]);
        residual = r.amax();
        if !residual.is_finite() {
            break;
        }
        if residual <= 1e-13 * scale {
            let value = p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - model.energy(q, &p);
            return Ok((p, value));
        }
        let hb = model.hessian(q, &p);
        let step = hb.pp.lu().solve(&r).ok_or_else(|| ModelError::NotConvex {
            q: q.to_vec(),
            p: p.clone(),
        })?;
        for i in 0..n {
            p[i] -= step[i];
        }
    }
    Err(ModelError::LegendreNotConverged {
        iterations: MAX_ITER,
        residual,
    })
}

/// `H(x)`, rejecting non-finite values.
pub fn eval_hamiltonian<H: Hamiltonian + ?Sized>(model: &H, x: &PhasePoint) -> Result<f64, ModelError> {
    let e = model.energy(x.q.coords(), x.p.as_slice());
    if e.is_finite() {
        Ok(e)
    } else {
        Err(ModelError::NonFinite {
            what: "energy",
            q: x.q.coords().to_vec(),
            p: x.p.as_slice().to_vec(),
        })
    }
}

/// Legendre transform `v ↦ (p, L(q, v))` with `v = ∂H/∂p(q, p)`.
pub fn legendre<H: Hamiltonian + ?Sized>(
    model: &H,
    q: &TorusPoint,
    v: &[f64],
) -> Result<(DVector<f64>, f64), ModelError> {
    let (p, value) = legendre_raw(model, q.coords(), v)?;
    Ok((DVector::from_vec(p), value))
}

/// Fiber derivative `v = ∂H/∂p(q, p)`.
pub fn legendre_inverse<H: Hamiltonian + ?Sized>(model: &H, x: &PhasePoint) -> DVector<f64> {
    let n = model.dim();
    let mut dq = vec![0.0; n];
    let mut dp = vec![0.0; n];
    model.gradient(x.q.coords(), x.p.as_slice(), &mut dq, &mut dp);
    DVector::from_vec(dp)
}

/// Checks analytic gradient and Hessian blocks against central finite
/// differences with step `1e-5`; fails if the relative error exceeds `1e-6`.
pub fn validate_derivatives<H: Hamiltonian + ?Sized>(
    model: &H,
    points: &[(Vec<f64>, Vec<f64>)],
) -> Result<(), ModelError> {
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-6;
    let n = model.dim();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    for (q, p) in points {
        let mut dq = vec![0.0; n];
        let mut dp = vec![0.0; n];
        model.gradient(q, p, &mut dq, &mut dp);
        let hb = model.hessian(q, p);
        let mut worst_grad: f64 = 0.0;
        let mut worst_hess: f64 = 0.0;
        for k in 0..2 * n {
            let shifted = |delta: f64| {
                let mut qs = q.clone();
                let mut ps = p.clone();
                if k < n {
                    qs[k] += delta;
                } else {
                    ps[k - n] += delta;
                }
                (qs, ps)
            };
            let (qa, pa) = shifted(STEP);
            let (qb, pb) = shifted(-STEP);
            let fd = (model.energy(&qa, &pa) - model.energy(&qb, &pb)) / (2.0 * STEP);
            let analytic = if k < n { dq[k] } else { dp[k - n] };
            worst_grad = worst_grad.max(rel(analytic, fd));

            let mut ga = (vec![0.0; n], vec![0.0; n]);
            let mut gb = (vec![0.0; n], vec![0.0; n]);
            model.gradient(&qa, &pa, &mut ga.0, &mut ga.1);
            model.gradient(&qb, &pb, &mut gb.0, &mut gb.1);
            for j in 0..n {
                let fd_q = (ga.0[j] - gb.0[j]) / (2.0 * STEP);
                let fd_p = (ga.1[j] - gb.1[j]) / (2.0 * STEP);
                // column k of the full Hessian, rows (q_j) and (p_j)
                let (an_q, an_p) = if k < n {
                    (hb.qq[(j, k)], hb.qp[(k, j)])
                } else {
                    (hb.qp[(j, k - n)], hb.pp[(j, k - n)])
                };
                worst_hess = worst_hess.max(rel(an_q, fd_q)).max(rel(an_p, fd_p));
            }
        }
        if worst_grad > TOL {
            return Err(ModelError::DerivativeMismatch {
                what: "gradient",
                rel_err: worst_grad,
            });
        }
        if worst_hess > TOL {
            return Err(ModelError::DerivativeMismatch {
                what: "Hessian",
                rel_err: worst_hess,
            });
        }
    }
    Ok(())
}

/// The built-in catalog.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    /// `H = |p|^2 / 2`
    FreeRotor,
    /// `H = p^2 / 2 + cos(2πq)` on `T^1`
    Pendulum,
    /// `H = |p|^2 / 2 + p·ω` on `T^2`
    ManeRotor { omega: [f64; 2] },
    /// `H = |p|^2 / 2 + a1 cos 2πq1 + a2 cos 2πq2 + a12 cos 2π(q1 + q2)`
    MechanicalT2 { a1: f64, a2: f64, a12: f64 },
}

/// A built-in Tonelli Hamiltonian with its parameter record.
#[derive(Clone, Debug, PartialEq)]
pub struct TonelliModel {
    kind: ModelKind,
    n: usize,
    name: String,
    parameters: BTreeMap<String, f64>,
}

pub type CatalogEntry = (&'static str, &'static str, &'static [(&'static str, f64)]);

/// `(canonical name, dimension note, parameters with defaults)`
pub const CATALOG: &[CatalogEntry] = &[
    ("free-rotor", "H = |p|^2/2 on T^n", &[("n", 1.0)]),
    ("pendulum", "H = p^2/2 + cos(2 pi q) on T^1", &[]),
    (
        "mane-rotor",
        "H = |p|^2/2 + p.omega on T^2",
        &[("omega1", 1.0), ("omega2", std::f64::consts::SQRT_2)],
    ),
    (
        "mechanical-t2",
        "H = |p|^2/2 + a1 cos 2pi q1 + a2 cos 2pi q2 + a12 cos 2pi(q1+q2) on T^2",
        &[("a1", 1.0), ("a2", 0.5), ("a12", 0.25)],
    ),
];

fn canonical_name(name: &str) -> Option<&'static str> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    match key.as_str() {
        "freerotor" => Some("free-rotor"),
        "pendulum" => Some("pendulum"),
        "manerotor" => Some("mane-rotor"),
        "mechanicalt2" => Some("mechanical-t2"),
        _ => None,
    }
}

impl TonelliModel {
    pub fn free_rotor(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n));
        Self::from_name("free-rotor", &BTreeMap::from([("n".to_string(), n as f64)])).expect("built-in model")
    }

    pub fn pendulum() -> Self {
        Self::from_name("pendulum", &BTreeMap::new()).expect("built-in model")
    }

    pub fn mane_rotor(omega: [f64; 2]) -> Self {
        let params = BTreeMap::from([("omega1".to_string(), omega[0]), ("omega2".to_string(), omega[1])]);
        Self::from_name("mane-rotor", &params).expect("built-in model")
    }

    pub fn mechanical_t2(a1: f64, a2: f64, a12: f64) -> Self {
        let params = BTreeMap::from([("a1".to_string(), a1), ("a2".to_string(), a2), ("a12".to_string(), a12)]);
        Self::from_name("mechanical-t2", &params).expect("built-in model")
    }

    /// Builds a catalog model, applying defaults and validating the analytic derivatives.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self, ModelError> {
        let canonical = canonical_name(name).ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
        let (_, _, defaults) = CATALOG.iter().find(|(n, _, _)| *n == canonical).expect("catalog entry");
        for key in params.keys() {
            if !defaults.iter().any(|(d, _)| d == key) {
                return Err(ModelError::UnknownParameter {
                    model: canonical.to_string(),
                    name: key.clone(),
                });
            }
        }
        let mut parameters = BTreeMap::new();
        for (key, default) in defaults.iter() {
            let value = params.get(*key).copied().unwrap_or(*default);
            if !value.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name: key.to_string(),
                    value,
                    reason: "must be finite".into(),
                });
            }
            parameters.insert(key.to_string(), value);
        }
        let (kind, n) = match canonical {
            "free-rotor" => {
                let n = parameters["n"];
                if n != 1.0 && n != 2.0 {
                    return Err(ModelError::InvalidParameter {
                        name: "n".into(),
                        value: n,
                        reason: "dimension must be 1 or 2".into(),
                    });
                }
                (ModelKind::FreeRotor, n as usize)
            }
            "pendulum" => (ModelKind::Pendulum, 1),
            "mane-rotor" => (
                ModelKind::ManeRotor {
                    omega: [parameters["omega1"], parameters["omega2"]],
                },
                2,
            ),
            "mechanical-t2" => (
                ModelKind::MechanicalT2 {
                    a1: parameters["a1"],
                    a2: parameters["a2"],
                    a12: parameters["a12"],
                },
                2,
            ),
            _ => unreachable!(),
        };
        let model = TonelliModel {
            kind,
            n,
            name: canonical.to_string(),
            parameters,
        };
        validate_derivatives(&model, &model.probe_points())?;
        Ok(model)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    /// Deterministic probe points for derivative validation.
    fn probe_points(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..8)
            .map(|k| {
                let k = k as f64;
                let q: Vec<f64> = (0..self.n)
                    .map(|i| wrap_unit(0.137 + 0.618_033_988_75 * k + 0.31 * i as f64))
                    .collect();
                let p: Vec<f64> = (0..self.n).map(|i| 1.7 * (0.9 * k + 1.3 * i as f64).sin()).collect();
                (q, p)
            })
            .collect()
    }

    /// Potential `V(q)` of the mechanical models; zero otherwise.
    fn potential(&self, q: &[f64]) -> f64 {
        match self.kind {
            ModelKind::FreeRotor | ModelKind::ManeRotor { .. } => 0.0,
            ModelKind::Pendulum => (TWO_PI * q[0]).cos(),
            ModelKind::MechanicalT2 { a1, a2, a12 } => {
                a1 * (TWO_PI * q[0]).cos() + a2 * (TWO_PI * q[1]).cos() + a12 * (TWO_PI * (q[0] + q[1])).cos()
            }
        }
    }

    fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::FreeRotor | ModelKind::ManeRotor { .. } => out.fill(0.0),
            ModelKind::Pendulum => out[0] = -TWO_PI * (TWO_PI * q[0]).sin(),
            ModelKind::MechanicalT2 { a1, a2, a12 } => {
                let s = (TWO_PI * (q[0] + q[1])).sin();
                out[0] = -TWO_PI * (a1 * (TWO_PI * q[0]).sin() + a12 * s);
                out[1] = -TWO_PI * (a2 * (TWO_PI * q[1]).sin() + a12 * s);
            }
        }
    }

    fn potential_hessian(&self, q: &[f64]) -> Matrix2<f64> {
        match self.kind {
            ModelKind::FreeRotor | ModelKind::ManeRotor { .. } => Matrix2::zeros(),
            ModelKind::Pendulum => Matrix2::new(-FOUR_PI_SQ * (TWO_PI * q[0]).cos(), 0.0, 0.0, 0.0),
            ModelKind::MechanicalT2 { a1, a2, a12 } => {
                let c = (TWO_PI * (q[0] + q[1])).cos();
                let h11 = -FOUR_PI_SQ * (a1 * (TWO_PI * q[0]).cos() + a12 * c);
                let h22 = -FOUR_PI_SQ * (a2 * (TWO_PI * q[1]).cos() + a12 * c);
                let h12 = -FOUR_PI_SQ * a12 * c;
                Matrix2::new(h11, h12, h12, h22)
            }
        }
    }

    fn drift(&self) -> [f64; 2] {
        match self.kind {
            ModelKind::ManeRotor { omega } => omega,
            _ => [0.0, 0.0],
        }
    }
}

impl fmt::Display for TonelliModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.parameters.is_empty() {
            let params: Vec<String> = self.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", params.join(", "))?;
        }
        Ok(())
    }
}

impl Hamiltonian for TonelliModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        let w = self.drift();
        let kinetic: f64 = p.iter().enumerate().map(|(i, pi)| 0.5 * pi * pi + pi * w[i]).sum();
        kinetic + self.potential(q)
    }

    fn gradient(&self, q: &[f64], p: &[f64], dq: &mut [f64], dp: &mut [f64]) {
        let w = self.drift();
        self.potential_gradient(q, dq);
        for i in 0..self.n {
            dp[i] = p[i] + w[i];
        }
    }

    fn hessian(&self, q: &[f64], _p: &[f64]) -> HessianBlocks {
        let n = self.n;
        let v = self.potential_hessian(q);
        HessianBlocks {
            qq: DMatrix::from_fn(n, n, |i, j| v[(i, j)]),
            qp: DMatrix::zeros(n, n),
            pp: DMatrix::identity(n, n),
        }
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn is_translation_invariant(&self) -> bool {
        matches!(self.kind, ModelKind::FreeRotor | ModelKind::ManeRotor { .. })
    }

    fn kinetic_bound(&self) -> Option<(f64, [f64; 2], f64)> {
        let beta = match self.kind {
            ModelKind::FreeRotor | ModelKind::ManeRotor { .. } => 0.0,
            ModelKind::Pendulum => 1.0,
            ModelKind::MechanicalT2 { a1, a2, a12 } => a1.abs() + a2.abs() + a12.abs(),
        };
        Some((1.0, self.drift(), beta))
    }

    fn lagrangian_value(&self, q: &[f64], v: &[f64]) -> Result<f64, ModelError> {
        let w = self.drift();
        let kinetic: f64 = (0..self.n).map(|i| 0.5 * (v[i] - w[i]).powi(2)).sum();
        Ok(kinetic - self.potential(q))
    }

    fn lagrangian_jet(&self, q: &[f64], v: &[f64]) -> Result<LagrangianJet, ModelError> {
        // L(q, v) = |v - ω|^2 / 2 - V(q)
        let w = self.drift();
        let mut jet = LagrangianJet::default();
        let mut grad = [0.0; MAX_DIM];
        self.potential_gradient(q, &mut grad[..self.n]);
        let hv = self.potential_hessian(q);
        let mut kinetic = 0.0;
        for i in 0..self.n {
            let u = v[i] - w[i];
            kinetic += 0.5 * u * u;
            jet.dv[i] = u;
            jet.dq[i] = -grad[i];
            jet.vv[(i, i)] = 1.0;
            for j in 0..self.n {
                jet.qq[(i, j)] = -hv[(i, j)];
            }
        }
        jet.value = kinetic - self.potential(q);
        Ok(jet)
    }
}
