//! Lyapunov spectra of the linearized flow by the discrete QR method, and the
//! comparison between zero exponents and `dim(G₋ ∩ G₊)`.

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::flow::{FlowConfig, FlowError, LiftedPoint, Stepper};
use crate::green::{green_bundles, GreenConfig, GreenError, GreenPair};
use crate::model::{Hamiltonian, PhasePoint, TangentVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error("QR underflow at t = {t}: R diagonal {value:e}; use a smaller step")]
    Underflow { t: f64, value: f64 },
    #[error("invalid Lyapunov setting: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovConfig {
    pub flow: FlowConfig,
    pub horizon: f64,
    /// Time between QR re-orthonormalizations.
    pub step: f64,
    /// Fraction of the horizon spent aligning the frame before averaging starts.
    pub warmup: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            flow: FlowConfig::default(),
            horizon: 100.0,
            step: 0.5,
            warmup: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSpectrum {
    /// Sorted in descending order.
    pub exponents: Vec<f64>,
    pub horizon: f64,
    /// Per-exponent drift of the running estimate over the last quarter.
    pub slopes: Vec<f64>,
    pub zero_tol: f64,
    /// Running estimates `(t, λ(t))` after the warm-up.
    pub trace: Vec<(f64, Vec<f64>)>,
}

impl LyapunovSpectrum {
    /// Largest `|λ_i + λ_{2n+1−i}|`.
    pub fn pairing_defect(&self) -> f64 {
        let m = self.exponents.len();
        (0..m / 2)
            .map(|i| (self.exponents[i] + self.exponents[m - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

fn qr_step(frame: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let m = frame.ncols();
    let qr = frame.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = Vec::with_capacity(m);
    for i in 0..m {
        let d = r[(i, i)];
        if d < 0.0 {
            let mut col = q.column_mut(i);
            col *= -1.0;
        }
        diag.push(d.abs());
    }
    (q, diag)
}

/// Discrete QR spectrum over `[0, T]` with re-orthonormalization every `step`.
pub fn lyapunov_spectrum<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    cfg: &LyapunovConfig,
) -> Result<LyapunovSpectrum, LyapunovError> {
    if !(0.1..=1.0).contains(&cfg.step) {
        return Err(LyapunovError::Config(format!("step {} outside [0.1, 1]", cfg.step)));
    }
    if !(cfg.horizon > 0.0) || !(0.0..0.9).contains(&cfg.warmup) {
        return Err(LyapunovError::Config(format!(
            "horizon {} / warm-up {} invalid",
            cfg.horizon, cfg.warmup
        )));
    }
    let n = model.dim();
    let stepper = Stepper::new(model, &cfg.flow);
    let mut y = LiftedPoint::from_phase(x);
    let mut frame = DMatrix::identity(2 * n, 2 * n);
    let total = (cfg.horizon / cfg.step).round().max(4.0) as usize;
    let warm = ((total as f64) * cfg.warmup).round() as usize;
    let mut sums = vec![0.0; 2 * n];
    let mut trace = Vec::new();
    for k in 1..=total {
        stepper.advance(&mut y.q, &mut y.p, cfg.step, cfg.flow.step, Some(&mut frame))?;
        let (q, diag) = qr_step(&frame);
        frame = q;
        let t = k as f64 * cfg.step;
        if let Some(&d) = diag.iter().find(|&&d| !(d >= 1e-300)) {
            return Err(LyapunovError::Underflow { t, value: d });
        }
        if k > warm {
            for (s, d) in sums.iter_mut().zip(&diag) {
                *s += d.ln();
            }
            let elapsed = (k - warm) as f64 * cfg.step;
            trace.push((t, sums.iter().map(|s| s / elapsed).collect::<Vec<f64>>()));
        }
    }
    let last = trace.last().expect("non-empty trace").1.clone();
    let quarter = trace.len() - (trace.len() / 4).max(1);
    let earlier = &trace[quarter.min(trace.len() - 1)].1;
    let slopes: Vec<f64> = last.iter().zip(earlier).map(|(a, b)| (a - b).abs()).collect();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| last[b].total_cmp(&last[a]));
    let exponents = order.iter().map(|&i| last[i]).collect();
    let slopes: Vec<f64> = order.iter().map(|&i| slopes[i]).collect();
    let zero_tol = (5.0 * slopes.iter().copied().fold(0.0, f64::max)).max(1e-2);
    let trace = trace
        .into_iter()
        .map(|(t, v)| (t, order.iter().map(|&i| v[i]).collect()))
        .collect();
    Ok(LyapunovSpectrum {
        exponents,
        horizon: total as f64 * cfg.step,
        slopes,
        zero_tol,
        trace,
    })
}

/// Most contracting direction at `x`: the top backward-QR vector pulled back from `φ_T x`.
pub fn stable_direction<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    cfg: &LyapunovConfig,
) -> Result<TangentVector, LyapunovError> {
    let n = model.dim();
    let stepper = Stepper::new(model, &cfg.flow);
    let mut y = LiftedPoint::from_phase(x);
    stepper.advance(&mut y.q, &mut y.p, cfg.horizon, cfg.flow.step, None)?;
    let mut frame = DMatrix::identity(2 * n, 2 * n);
    let total = (cfg.horizon / cfg.step).round().max(1.0) as usize;
    for _ in 0..total {
        stepper.advance(&mut y.q, &mut y.p, -cfg.step, cfg.flow.step, Some(&mut frame))?;
        frame = qr_step(&frame).0;
    }
    let v = frame.column(0).into_owned();
    Ok(TangentVector::from_stacked(&v))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpectrumClass {
    pub zero: usize,
    pub positive: usize,
    pub negative: usize,
    /// Some `|λ|` lies within a factor two of `zero_tol`.
    pub ambiguous: bool,
}

pub fn classify_spectrum(spec: &LyapunovSpectrum) -> SpectrumClass {
    classify_exponents(&spec.exponents, spec.zero_tol)
}

pub fn classify_exponents(exponents: &[f64], zero_tol: f64) -> SpectrumClass {
    let mut c = SpectrumClass {
        zero: 0,
        positive: 0,
        negative: 0,
        ambiguous: false,
    };
    for &l in exponents {
        if l.abs() > 0.5 * zero_tol && l.abs() < 2.0 * zero_tol {
            c.ambiguous = true;
        }
        if l.abs() <= zero_tol {
            c.zero += 1;
        } else if l > 0.0 {
            c.positive += 1;
        } else {
            c.negative += 1;
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TheoremTwoVerdict {
    Consistent,
    ConsistentWithCaveat,
    Inconsistent,
    Indeterminate,
}

impl fmt::Display for TheoremTwoVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TheoremTwoVerdict::Consistent => "CONSISTENT",
            TheoremTwoVerdict::ConsistentWithCaveat => "CONSISTENT-WITH-CAVEAT",
            TheoremTwoVerdict::Inconsistent => "INCONSISTENT",
            TheoremTwoVerdict::Indeterminate => "INDETERMINATE",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremTwoReport {
    pub p_from_green: usize,
    pub zero_count: usize,
    pub pos_count: usize,
    pub neg_count: usize,
    pub verdict: TheoremTwoVerdict,
    pub caveats: Vec<String>,
    pub spectrum: LyapunovSpectrum,
    pub green: GreenPair,
}

/// Compares `dim(G₋ ∩ G₊)` at `x` with the zero/positive/negative exponent counts.
pub fn verify_theorem_two<H: Hamiltonian + ?Sized>(
    model: &H,
    x: &PhasePoint,
    lcfg: &LyapunovConfig,
    gcfg: &GreenConfig,
) -> Result<TheoremTwoReport, LyapunovError> {
    let n = model.dim();
    let green = green_bundles(model, x, gcfg)?;
    let spectrum = lyapunov_spectrum(model, x, lcfg)?;
    let class = classify_spectrum(&spectrum);
    let p = green.p_dim;
    let mut caveats = vec!["invariant measure taken from the orbit of the base point (Birkhoff average)".to_string()];
    let critical = crate::flow::flow_vector(model, x).norm() <= 1e-12;
    let verdict = if class.ambiguous {
        caveats.push(format!(
            "an exponent lies within a factor 2 of zero_tol = {:e}",
            spectrum.zero_tol
        ));
        TheoremTwoVerdict::Indeterminate
    } else if class.zero < 2 * p {
        caveats.push(format!("zero_count {} < 2p = {}", class.zero, 2 * p));
        TheoremTwoVerdict::Inconsistent
    } else if class.zero == 2 * p && class.positive == n - p && class.negative == n - p {
        if critical {
            caveats.push("Dirac measure at a critical point of H".to_string());
            TheoremTwoVerdict::ConsistentWithCaveat
        } else {
            TheoremTwoVerdict::Consistent
        }
    } else {
        TheoremTwoVerdict::Inconsistent
    };
    Ok(TheoremTwoReport {
        p_from_green: p,
        zero_count: class.zero,
        pos_count: class.positive,
        neg_count: class.negative,
        verdict,
        caveats,
        spectrum,
        green,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TonelliModel;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, SQRT_2};

    fn cfg(t: f64) -> LyapunovConfig {
        LyapunovConfig {
            horizon: t,
            ..Default::default()
        }
    }

    #[test]
    fn spectrum_examples() {
        let rotor = TonelliModel::free_rotor(1);
        let s = lyapunov_spectrum(&rotor, &PhasePoint::new(vec![0.4], vec![0.8]), &cfg(200.0)).unwrap();
        assert!(s.exponents.iter().all(|l| l.abs() < 1e-3), "{:?}", s.exponents);

        let pend = TonelliModel::pendulum();
        let s = lyapunov_spectrum(&pend, &PhasePoint::new(vec![0.0], vec![0.0]), &cfg(50.0)).unwrap();
        assert_abs_diff_eq!(s.exponents[0], 2.0 * PI, epsilon = 1e-3);
        assert_abs_diff_eq!(s.exponents[1], -2.0 * PI, epsilon = 1e-3);
        assert!(s.pairing_defect() <= 2.0 * s.zero_tol);

        let mane = TonelliModel::mane_rotor([1.0, SQRT_2]);
        let s = lyapunov_spectrum(&mane, &PhasePoint::new(vec![0.1, 0.2], vec![0.0, 0.0]), &cfg(200.0)).unwrap();
        assert!(s.exponents.iter().all(|l| l.abs() < 1e-3));
        assert_eq!(s.exponents.len(), 4);
    }

    #[test]
    fn classification_examples() {
        let c = classify_exponents(&[0.0, 0.0], 1e-2);
        assert_eq!((c.zero, c.positive, c.negative, c.ambiguous), (2, 0, 0, false));
        let c = classify_exponents(&[6.0, -6.0], 1e-2);
        assert_eq!((c.zero, c.positive, c.negative), (0, 1, 1));
        let c = classify_exponents(&[0.004, -0.004], 1e-2);
        assert_eq!((c.zero, c.positive, c.negative, c.ambiguous), (2, 0, 0, false));
        assert!(classify_exponents(&[0.012, -0.012], 1e-2).ambiguous);
    }

    #[test]
    fn theorem_two_examples() {
        let gcfg = GreenConfig::default();
        let rotor = TonelliModel::free_rotor(1);
        let r = verify_theorem_two(&rotor, &PhasePoint::new(vec![0.3], vec![0.7]), &cfg(200.0), &gcfg).unwrap();
        assert_eq!((r.p_from_green, r.zero_count, r.pos_count, r.neg_count), (1, 2, 0, 0));
        assert_eq!(r.verdict, TheoremTwoVerdict::Consistent);

        let mane = TonelliModel::mane_rotor([1.0, SQRT_2]);
        let x = PhasePoint::new(vec![0.1, 0.9], vec![0.0, 0.0]);
        let r = verify_theorem_two(&mane, &x, &cfg(200.0), &gcfg).unwrap();
        assert_eq!((r.p_from_green, r.zero_count, r.pos_count, r.neg_count), (2, 4, 0, 0));
        assert_eq!(r.verdict, TheoremTwoVerdict::Consistent);

        let pend = TonelliModel::pendulum();
        let r = verify_theorem_two(&pend, &PhasePoint::new(vec![0.0], vec![0.0]), &cfg(50.0), &gcfg).unwrap();
        assert_eq!((r.p_from_green, r.zero_count, r.pos_count, r.neg_count), (0, 0, 1, 1));
        assert_eq!(r.verdict, TheoremTwoVerdict::ConsistentWithCaveat);
    }

    #[test]
    fn stable_direction_lies_in_minus_bundle() {
        let pend = TonelliModel::pendulum();
        let x = PhasePoint::new(vec![0.0], vec![0.0]);
        let v = stable_direction(&pend, &x, &cfg(20.0)).unwrap();
        let g = green_bundles(&pend, &x, &GreenConfig::default()).unwrap();
        assert!(g.s_minus.angle(&v) < 1e-3);
    }

    #[test]
    fn rejects_bad_step() {
        let rotor = TonelliModel::free_rotor(1);
        let bad = LyapunovConfig {
            step: 2.0,
            ..Default::default()
        };
        assert!(matches!(
            lyapunov_spectrum(&rotor, &PhasePoint::new(vec![0.0], vec![0.0]), &bad),
            Err(LyapunovError::Config(_))
        ));
    }
}
