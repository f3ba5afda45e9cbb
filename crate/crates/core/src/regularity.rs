//! Contingent cones of sampled sets, the cone/Green-bundle inequality and the
//! C¹-regularity diagnostic.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::green::{green_bundles, GreenConfig, GreenError, GreenPair};
use crate::linalg::{angle_to_subspace, graph_basis};
use crate::lyapunov::{classify_spectrum, lyapunov_spectrum, LyapunovConfig, LyapunovError};
use crate::model::{Hamiltonian, PhasePoint, TangentVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("radii must be positive, strictly decreasing and span at least two decades")]
    Radii,
    #[error("sample dimension does not match the base point")]
    Dimension,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularityVerdict {
    Consistent,
    InequalityViolation,
    InsufficientSamples,
    NotApplicable,
}

impl fmt::Display for RegularityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegularityVerdict::Consistent => "C1-REGULAR-CONSISTENT",
            RegularityVerdict::InequalityViolation => "INEQUALITY-VIOLATION",
            RegularityVerdict::InsufficientSamples => "INSUFFICIENT-SAMPLES",
            RegularityVerdict::NotApplicable => "NOT-APPLICABLE",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeDirection {
    /// Unit vector `(X, Y)`.
    pub v: TangentVector,
    /// Mean sample distance of each shell the direction was seen in, largest first.
    pub scales: Vec<f64>,
    /// Largest angle between the shell centroids and `v`.
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeEstimate {
    pub base: PhasePoint,
    pub directions: Vec<ConeDirection>,
    pub radii: Vec<f64>,
    /// Samples within the largest radius.
    pub samples_used: usize,
}

impl ConeEstimate {
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeConfig {
    pub radii: Vec<f64>,
    pub drift_tol: f64,
    /// Angular threshold of the clustering inside a shell.
    pub cluster_angle: f64,
    pub min_shells: usize,
    pub min_samples: usize,
    /// Samples whose configuration offset from the base is shorter than this are ignored
    /// (resolution floor of gridded samples).
    pub min_distance: f64,
}

impl Default for ConeConfig {
    fn default() -> Self {
        ConeConfig {
            radii: vec![0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002],
            drift_tol: 0.05,
            cluster_angle: 0.05,
            min_shells: 3,
            min_samples: 20,
            min_distance: 0.0,
        }
    }
}

fn angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

struct Cluster {
    sum: DVector<f64>,
    count: usize,
    radius_sum: f64,
}

impl Cluster {
    fn centroid(&self) -> DVector<f64> {
        self.sum.normalize()
    }
}

/// Centroid-linkage agglomeration of unit vectors: the closest pair of
/// clusters is merged while their centroids are within `threshold`.
fn agglomerate(units: Vec<(DVector<f64>, f64)>, threshold: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    // a first pass folds each vector into a cluster it already lies within,
    // which keeps the quadratic merge below small on dense shells
    for (u, r) in units {
        match clusters
            .iter_mut()
            .find(|c| angle(&c.centroid(), &u) <= 0.5 * threshold)
        {
            Some(c) => {
                c.sum += &u;
                c.count += 1;
                c.radius_sum += r;
            }
            None => clusters.push(Cluster {
                sum: u,
                count: 1,
                radius_sum: r,
            }),
        }
    }
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            let ci = clusters[i].centroid();
            for j in i + 1..clusters.len() {
                let a = angle(&ci, &clusters[j].centroid());
                if a <= threshold && best.is_none_or(|b| a < b.2) {
                    best = Some((i, j, a));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let cj = clusters.swap_remove(j);
        let ci = &mut clusters[i];
        ci.sum += cj.sum;
        ci.count += cj.count;
        ci.radius_sum += cj.radius_sum;
    }
    clusters
}

/// Bouligand cone at `base` estimated from point samples over shrinking shells.
pub fn contingent_cone(
    samples: &[PhasePoint],
    base: &PhasePoint,
    cfg: &ConeConfig,
) -> Result<ConeEstimate, RegularityError> {
    let radii = &cfg.radii;
    let ok = radii.len() >= 2
        && radii.iter().all(|r| *r > 0.0)
        && radii.windows(2).all(|w| w[1] < w[0])
        && radii[0] / radii[radii.len() - 1] >= 100.0 - 1e-9;
    if !ok {
        return Err(RegularityError::Radii);
    }
    if samples.iter().any(|s| s.dim() != base.dim()) {
        return Err(RegularityError::Dimension);
    }
    let mut shells: Vec<Vec<(DVector<f64>, f64)>> = vec![Vec::new(); radii.len()];
    let mut used = 0;
    for s in samples {
        let d = base.difference_to(s);
        let r = d.norm();
        if r <= 1e-14 || r > radii[0] || d.rows(0, base.dim()).norm() < cfg.min_distance {
            continue;
        }
        used += 1;
        let k = radii.iter().rposition(|&rad| r <= rad).unwrap();
        shells[k].push((d / r, r));
    }
    let mut estimate = ConeEstimate {
        base: base.clone(),
        directions: Vec::new(),
        radii: radii.clone(),
        samples_used: used,
    };
    if used < cfg.min_samples {
        return Ok(estimate);
    }
    // (shell, centroid, mean radius), finest shell first
    let mut centroids: Vec<(usize, DVector<f64>, f64)> = Vec::new();
    for (k, shell) in shells.into_iter().enumerate().rev() {
        for c in agglomerate(shell, cfg.cluster_angle) {
            centroids.push((k, c.centroid(), c.radius_sum / c.count as f64));
        }
    }
    // chain shell clusters into tracks anchored at their finest occurrence
    let mut tracks: Vec<Vec<(usize, DVector<f64>, f64)>> = Vec::new();
    for c in centroids {
        let target = tracks
            .iter_mut()
            .filter(|t| t.iter().all(|m| m.0 != c.0))
            .map(|t| {
                let a = angle(&t[0].1, &c.1);
                (a, t)
            })
            .filter(|(a, _)| *a <= cfg.drift_tol)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match target {
            Some((_, t)) => t.push(c),
            None => tracks.push(vec![c]),
        }
    }
    for t in tracks {
        if t.len() < cfg.min_shells {
            continue;
        }
        let v = t[0].1.clone();
        let drift = t.iter().map(|m| angle(&v, &m.1)).fold(0.0, f64::max);
        let mut scales: Vec<f64> = t.iter().map(|m| m.2).collect();
        scales.sort_by(|a, b| b.total_cmp(a));
        estimate.directions.push(ConeDirection {
            v: TangentVector::from_stacked(&v),
            scales,
            drift,
        });
    }
    Ok(estimate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlackRow {
    pub direction: TangentVector,
    pub lhs: f64,
    /// `2 √‖Δs‖ √(Δs(X, X))`.
    pub rhs: f64,
    /// `2 Λ(Δs) ‖p_Δs X‖`.
    pub rhs_projected: f64,
    pub slack: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub base: PhasePoint,
    pub side: Side,
    pub rows: Vec<SlackRow>,
    pub lambda: f64,
    pub delta: DMatrix<f64>,
    pub tilde: DMatrix<f64>,
    pub min_slack: f64,
    pub verdict: RegularityVerdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityConfig {
    pub green: GreenConfig,
    pub lyapunov: LyapunovConfig,
    pub cone: ConeConfig,
    /// Floor of the angular error assigned to a cone direction.
    pub angle_error: f64,
    pub angle_tol: f64,
    /// `Λ(Δs)` below which the bundles are treated as equal.
    pub degenerate_tol: f64,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        RegularityConfig {
            green: GreenConfig::default(),
            lyapunov: LyapunovConfig::default(),
            cone: ConeConfig::default(),
            angle_error: 1e-3,
            angle_tol: 0.05,
            degenerate_tol: 1e-6,
        }
    }
}

/// Evaluates `‖Y − s̃ X‖ ≤ 2 √‖Δs‖ √(Δs(X, X)) ≤ 2 Λ(Δs) ‖p_Δs X‖` on every cone
/// direction, given the Green pair at the base.
pub fn theorem_three_slack(
    green: &GreenPair,
    base: &PhasePoint,
    cone: &ConeEstimate,
    side: Side,
    angle_error: f64,
) -> RegularityReport {
    let tilde = match side {
        Side::Minus => green.tilde_minus.clone(),
        Side::Plus => green.tilde_plus.clone(),
    };
    let delta = &green.delta;
    let lambda = green.lambda;
    let sensitivity = 1.0 + crate::linalg::op_norm(&tilde) + 2.0 * lambda;
    let rows: Vec<SlackRow> = cone
        .directions
        .iter()
        .map(|d| {
            let x = &d.v.x;
            let y = &d.v.y;
            let lhs = (y - &tilde * x).norm();
            let quad = x.dot(&(delta * x)).max(0.0);
            let rhs = 2.0 * lambda.sqrt() * quad.sqrt();
            let rhs_projected = 2.0 * lambda * (&green.projector * x).norm();
            let error = d.drift.max(angle_error) * sensitivity;
            SlackRow {
                direction: d.v.clone(),
                lhs,
                rhs,
                rhs_projected,
                slack: rhs - lhs,
                error,
            }
        })
        .collect();
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let verdict = if rows.is_empty() {
        RegularityVerdict::InsufficientSamples
    } else if rows.iter().any(|r| r.slack < -5.0 * r.error) {
        RegularityVerdict::InequalityViolation
    } else {
        RegularityVerdict::Consistent
    };
    RegularityReport {
        base: base.clone(),
        side,
        rows,
        lambda,
        delta: delta.clone(),
        tilde,
        min_slack,
        verdict,
    }
}

pub fn theorem_three_check<H: Hamiltonian + ?Sized>(
    model: &H,
    base: &PhasePoint,
    cone: &ConeEstimate,
    side: Side,
    cfg: &RegularityConfig,
) -> Result<RegularityReport, RegularityError> {
    let green = green_bundles(model, base, &cfg.green)?;
    Ok(theorem_three_slack(&green, base, cone, side, cfg.angle_error))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseDiagnostic {
    pub base: PhasePoint,
    pub exponents: Vec<f64>,
    pub all_zero: bool,
    pub lambda: f64,
    pub directions: usize,
    /// Largest angle between a cone direction and the graph of `s₋`.
    pub max_angle: f64,
    pub verdict: RegularityVerdict,
    /// The inequality check, run where the zero-exponent hypothesis fails.
    pub inequality: Option<RegularityReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct C1Report {
    pub bases: Vec<BaseDiagnostic>,
    pub applicable: usize,
    pub passing: usize,
    /// `passing / applicable`, or 0 with no applicable base.
    pub fraction: f64,
    pub verdict: RegularityVerdict,
}

fn diagnose<H: Hamiltonian + Sync + ?Sized>(
    model: &H,
    samples: &[PhasePoint],
    base: &PhasePoint,
    cfg: &RegularityConfig,
) -> Result<BaseDiagnostic, RegularityError> {
    let n = model.dim();
    let spectrum = lyapunov_spectrum(model, base, &cfg.lyapunov)?;
    let class = classify_spectrum(&spectrum);
    let all_zero = class.zero == 2 * n && !class.ambiguous;
    let green = green_bundles(model, base, &cfg.green)?;
    let cone = contingent_cone(samples, base, &cfg.cone)?;
    let basis = graph_basis(&green.s_minus.s);
    let max_angle = cone
        .directions
        .iter()
        .map(|d| angle_to_subspace(&d.v.stacked(), &basis))
        .fold(0.0, f64::max);
    let mut inequality = None;
    let verdict = if !all_zero {
        let report = theorem_three_slack(&green, base, &cone, Side::Minus, cfg.angle_error);
        let v = if report.verdict == RegularityVerdict::InequalityViolation {
            RegularityVerdict::InequalityViolation
        } else {
            RegularityVerdict::NotApplicable
        };
        inequality = Some(report);
        v
    } else if cone.is_empty() {
        RegularityVerdict::InsufficientSamples
    } else if green.lambda <= cfg.degenerate_tol && max_angle <= cfg.angle_tol {
        RegularityVerdict::Consistent
    } else if green.lambda <= cfg.degenerate_tol {
        RegularityVerdict::InequalityViolation
    } else {
        theorem_three_slack(&green, base, &cone, Side::Minus, cfg.angle_error).verdict
    };
    Ok(BaseDiagnostic {
        base: base.clone(),
        exponents: spectrum.exponents,
        all_zero,
        lambda: green.lambda,
        directions: cone.directions.len(),
        max_angle,
        verdict,
        inequality,
    })
}

/// Runs the zero-exponent form of the cone/Green-bundle check at every base.
pub fn c1_diagnostic<H: Hamiltonian + Sync + ?Sized>(
    model: &H,
    support_samples: &[PhasePoint],
    bases: &[PhasePoint],
    cfg: &RegularityConfig,
) -> Result<C1Report, RegularityError> {
    let results: Vec<BaseDiagnostic> = bases
        .par_iter()
        .map(|b| diagnose(model, support_samples, b, cfg))
        .collect::<Result<_, _>>()?;
    let applicable = results
        .iter()
        .filter(|r| r.verdict != RegularityVerdict::NotApplicable)
        .count();
    let passing = results
        .iter()
        .filter(|r| r.verdict == RegularityVerdict::Consistent)
        .count();
    let fraction = if applicable == 0 {
        0.0
    } else {
        passing as f64 / applicable as f64
    };
    let verdict = if results
        .iter()
        .any(|r| r.verdict == RegularityVerdict::InequalityViolation)
    {
        RegularityVerdict::InequalityViolation
    } else if applicable == 0 {
        RegularityVerdict::NotApplicable
    } else if fraction >= 0.99 {
        RegularityVerdict::Consistent
    } else {
        RegularityVerdict::InsufficientSamples
    };
    Ok(C1Report {
        bases: results,
        applicable,
        passing,
        fraction,
        verdict,
    })
}
