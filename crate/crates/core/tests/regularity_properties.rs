use std::f64::consts::PI;
use std::sync::OnceLock;

use greenkam::green::{green_bundles, GreenConfig, GreenPair};
use greenkam::linalg::{angle_to_subspace, graph_basis};
use greenkam::model::{wrap_unit, Hamiltonian, PhasePoint, TonelliModel};
use greenkam::regularity::{
    c1_diagnostic, contingent_cone, theorem_three_slack, ConeConfig, ConeEstimate, RegularityConfig, RegularityVerdict,
    Side,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

/// Signed curve parameters, log-uniform in magnitude over `[1e-3, 0.2]`.
fn parameters(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = 10f64.powf(rng.random_range(-3.0..-0.7));
            if rng.random::<bool>() {
                -r
            } else {
                r
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
struct Curve {
    base: PhasePoint,
    tangent: Vec<f64>,
    bend: Vec<f64>,
}

impl Curve {
    fn at(&self, s: f64) -> PhasePoint {
        let n = self.base.dim();
        let q: Vec<f64> = (0..n)
            .map(|i| wrap_unit(self.base.q.coords()[i] + s * self.tangent[i] + s * s * self.bend[i]))
            .collect();
        let p: Vec<f64> = (0..n)
            .map(|i| self.base.p[i] + s * self.tangent[n + i] + s * s * self.bend[n + i])
            .collect();
        PhasePoint::new(q, p)
    }
}

fn curve() -> impl Strategy<Value = Curve> {
    (1usize..=2).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, 2 * n),
            prop::collection::vec(-2.0..2.0f64, 2 * n),
        )
            // curvature resolved by the default shells: |bend| ≤ |tangent|²
            .prop_filter("resolvable curve", |(_, _, t, b)| {
                let t2: f64 = t.iter().map(|x| x * x).sum();
                let b2: f64 = b.iter().map(|x| x * x).sum();
                t2 > 0.1 && b2.sqrt() <= t2
            })
            .prop_map(|(q, p, tangent, bend)| Curve {
                base: PhasePoint::new(q, p),
                tangent,
                bend,
            })
    })
}

fn matched(a: &ConeEstimate, b: &ConeEstimate, tol: f64) -> bool {
    a.directions.iter().all(|d| {
        b.directions
            .iter()
            .any(|e| unit_angle(&d.v.stacked(), &e.v.stacked()) <= tol)
    })
}

fn pendulum_green() -> &'static GreenPair {
    static G: OnceLock<GreenPair> = OnceLock::new();
    G.get_or_init(|| {
        green_bundles(
            &TonelliModel::pendulum(),
            &PhasePoint::new(vec![0.0], vec![0.0]),
            &GreenConfig::default(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cone_directions_survive_half_sample_reshuffles(
        c in curve(),
        seed in any::<u64>(),
    ) {
        let cfg = ConeConfig::default();
        let mut samples: Vec<PhasePoint> = parameters(seed, 1500).iter().map(|t| c.at(*t)).collect();
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(!seed));
        let b = samples.split_off(samples.len() / 2);
        let a = samples;
        let ca = contingent_cone(&a, &c.base, &cfg).unwrap();
        let cb = contingent_cone(&b, &c.base, &cfg).unwrap();
        prop_assume!(!ca.is_empty() && !cb.is_empty());
        prop_assert!(matched(&ca, &cb, 0.05) && matched(&cb, &ca, 0.05),
            "{:?} vs {:?}",
            ca.directions.iter().map(|d| d.v.stacked()).collect::<Vec<_>>(),
            cb.directions.iter().map(|d| d.v.stacked()).collect::<Vec<_>>());
        // every direction is the tangent up to sign
        let n = c.base.dim();
        let tangent = DVector::from_vec(c.tangent.clone());
        for d in &ca.directions {
            let v = d.v.stacked();
            let a = unit_angle(&v, &tangent).min(unit_angle(&(-v), &tangent));
            prop_assert!(a <= 0.05, "angle {} for n = {}", a, n);
        }
    }

    #[test]
    fn pendulum_pseudograph_slack_is_not_violated(
        seed in any::<u64>(),
        plus in any::<bool>(),
    ) {
        let s = parameters(seed, 400);
        let (sign, side) = if plus { (-1.0, Side::Plus) } else { (1.0, Side::Minus) };
        let samples: Vec<PhasePoint> = s
            .iter()
            .map(|q| PhasePoint::new(vec![wrap_unit(*q)], vec![sign * 2.0 * (PI * q).sin()]))
            .collect();
        let base = PhasePoint::new(vec![0.0], vec![0.0]);
        let cone = contingent_cone(&samples, &base, &ConeConfig::default()).unwrap();
        prop_assume!(!cone.is_empty());
        let report = theorem_three_slack(pendulum_green(), &base, &cone, side, 1e-3);
        for row in &report.rows {
            prop_assert!(row.slack >= -5.0 * row.error, "{:?}", row);
            // the bound is saturated along the pseudograph
            prop_assert!(row.slack.abs() <= 0.05 * row.rhs, "{:?}", row);
        }
        prop_assert_eq!(report.verdict, RegularityVerdict::Consistent);
    }
}

fn rotor_case() -> impl Strategy<Value = (TonelliModel, PhasePoint, Vec<f64>)> {
    prop_oneof![
        (1usize..=2).prop_map(TonelliModel::free_rotor),
        (0.2..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| TonelliModel::mane_rotor([a, b])),
    ]
    .prop_flat_map(|model| {
        let n = model.dim();
        (
            Just(model),
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(|(model, q, p, dir)| (model, PhasePoint::new(q, p), dir))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Samples along a line inside the invariant torus `p = p₀`: wherever the
    /// Green bundles coincide the cone lies in their common graph.
    #[test]
    fn degenerate_bundles_contain_the_cone(
        (model, base, dir) in rotor_case(),
        seed in any::<u64>(),
    ) {
        let s = parameters(seed, 300);
        prop_assume!(dir.iter().map(|x| x * x).sum::<f64>() > 0.05);
        let n = base.dim();
        let samples: Vec<PhasePoint> = s
            .iter()
            .map(|t| {
                let q: Vec<f64> = (0..n).map(|i| wrap_unit(base.q.coords()[i] + t * dir[i])).collect();
                PhasePoint::new(q, base.p.as_slice().to_vec())
            })
            .collect();
        let cfg = RegularityConfig::default();
        let green = green_bundles(&model, &base, &cfg.green).unwrap();
        let cone = contingent_cone(&samples, &base, &cfg.cone).unwrap();
        prop_assert!(!cone.is_empty());
        if green.lambda <= cfg.degenerate_tol {
            let basis = graph_basis(&green.s_minus.s);
            for d in &cone.directions {
                let v = d.v.stacked();
                prop_assert!(angle_to_subspace(&v, &basis) <= cfg.angle_tol);
                let y_minus_sx = (&d.v.y - &green.s_minus.s * &d.v.x).norm();
                prop_assert!(y_minus_sx <= cfg.angle_tol * v.norm(), "{}", y_minus_sx);
            }
        }
        let report = theorem_three_slack(&green, &base, &cone, Side::Minus, cfg.angle_error);
        prop_assert!(report.rows.iter().all(|r| r.slack >= -5.0 * r.error));
    }
}

#[test]
fn c1_diagnostic_on_a_rotor_circle() {
    let model = TonelliModel::free_rotor(1);
    let samples: Vec<PhasePoint> = (0..1000)
        .map(|k| PhasePoint::new(vec![k as f64 / 1000.0], vec![0.5]))
        .collect();
    let bases: Vec<PhasePoint> = samples.iter().step_by(100).cloned().collect();
    let cfg = RegularityConfig::default();
    let report = c1_diagnostic(&model, &samples, &bases, &cfg).unwrap();
    assert_eq!(report.verdict, RegularityVerdict::Consistent);
    assert_eq!(report.passing, bases.len());
}
