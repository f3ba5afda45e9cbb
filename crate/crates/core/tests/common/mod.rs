#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use greenkam::model::{Hamiltonian, PhasePoint, TonelliModel};
use greenkam::weakkam::grid::{GridFunction, Interpolation};
use greenkam::weakkam::lax_oleinik::{LaxOleinik, Sign};
use greenkam::weakkam::solve::{weak_kam_pair, WeakKamConfig, WeakKamPair};
use proptest::prelude::*;

pub fn builtin() -> impl Strategy<Value = TonelliModel> {
    prop_oneof![
        Just(TonelliModel::free_rotor(1)),
        Just(TonelliModel::free_rotor(2)),
        Just(TonelliModel::pendulum()),
        (0.2..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| TonelliModel::mane_rotor([a, b])),
        (0.1..1.5f64, 0.1..1.5f64, 0.0..0.5f64).prop_map(|(a, b, c)| TonelliModel::mechanical_t2(a, b, c)),
    ]
}

pub fn point(n: usize, p_max: f64) -> impl Strategy<Value = PhasePoint> {
    (
        prop::collection::vec(0.0..1.0f64, n),
        prop::collection::vec(-p_max..p_max, n),
    )
        .prop_map(|(q, p)| PhasePoint::new(q, p))
}

pub fn model_and_point(p_max: f64) -> impl Strategy<Value = (TonelliModel, PhasePoint)> {
    builtin().prop_flat_map(move |m| {
        let n = m.dim();
        (Just(m), point(n, p_max))
    })
}

/// Points on minimizing orbits: rotational pendulum orbits, anything for the
/// rotors, the maximum of the potential for `mechanical-t2`.
pub fn minimizing_point() -> impl Strategy<Value = (TonelliModel, PhasePoint)> {
    prop_oneof![
        (0.0..1.0f64, 1.05..5.0f64, any::<bool>()).prop_map(|(q, e, up)| {
            let p = (2.0 * (e - (2.0 * std::f64::consts::PI * q).cos())).sqrt();
            (
                TonelliModel::pendulum(),
                PhasePoint::new(vec![q], vec![if up { p } else { -p }]),
            )
        }),
        Just((TonelliModel::pendulum(), PhasePoint::new(vec![0.0], vec![0.0]))),
        (1usize..=2).prop_flat_map(|n| (Just(TonelliModel::free_rotor(n)), point(n, 2.0))),
        ((0.2..2.0f64, -2.0..2.0f64), point(2, 2.0)).prop_map(|((a, b), x)| (TonelliModel::mane_rotor([a, b]), x)),
        (0.1..1.5f64, 0.1..1.5f64, 0.0..0.5f64).prop_map(|(a, b, c)| {
            (
                TonelliModel::mechanical_t2(a, b, c),
                PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0]),
            )
        }),
    ]
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Points whose Green limits converge at the default tolerance: rotor tori and
/// hyperbolic maxima of the potential.
pub fn converging_point() -> impl Strategy<Value = (TonelliModel, PhasePoint)> {
    prop_oneof![
        (1usize..=2).prop_flat_map(|n| (Just(TonelliModel::free_rotor(n)), point(n, 2.0))),
        ((0.2..2.0f64, -2.0..2.0f64), point(2, 2.0)).prop_map(|((a, b), x)| (TonelliModel::mane_rotor([a, b]), x)),
        Just((TonelliModel::pendulum(), PhasePoint::new(vec![0.0], vec![0.0]))),
        (0.1..1.5f64, 0.1..1.5f64, 0.0..0.5f64).prop_map(|(a, b, c)| {
            (
                TonelliModel::mechanical_t2(a, b, c),
                PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0]),
            )
        }),
    ]
}

// Reassociation in the cell refinement costs a few ulps.
pub const ROUNDING: f64 = 1e-12;

pub struct Case {
    pub model: TonelliModel,
    pub op: LaxOleinik,
}

pub fn operators() -> &'static Vec<Case> {
    static OPS: OnceLock<Vec<Case>> = OnceLock::new();
    OPS.get_or_init(|| {
        let mut out = Vec::new();
        for sign in [Sign::Negative, Sign::Positive] {
            let model = TonelliModel::pendulum();
            let op = LaxOleinik::new(&model, 128, 0.2, sign, None, None, true).unwrap();
            out.push(Case { model, op });
        }
        for (model, sign) in [
            (TonelliModel::mane_rotor([1.0, 2f64.sqrt()]), Sign::Negative),
            (TonelliModel::mechanical_t2(1.0, 0.5, 0.2), Sign::Positive),
        ] {
            let op = LaxOleinik::new(&model, 16, 0.2, sign, None, Some(0.25), true).unwrap();
            out.push(Case { model, op });
        }
        out
    })
}

pub fn pendulum_pair() -> &'static WeakKamPair {
    static PAIR: OnceLock<WeakKamPair> = OnceLock::new();
    PAIR.get_or_init(|| {
        weak_kam_pair(&TonelliModel::pendulum(), &WeakKamConfig::default())
            .unwrap()
            .0
    })
}

pub fn grid_of(case: &Case, values: &[f64]) -> GridFunction {
    let mut g = GridFunction::constant(case.model.dim(), case.op.m, 0.0, Interpolation::Linear);
    let len = g.len();
    g.values.copy_from_slice(&values[..len]);
    g
}

/// A smooth periodic part plus node noise, so both the vertex and the in-cell
/// minima are exercised.
pub fn grid_values() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(-1.0..1.0f64, 6),
        prop::collection::vec(-0.05..0.05f64, 128 * 128),
    )
        .prop_map(|(a, noise)| {
            let m = 128usize;
            (0..m * m)
                .map(|i| {
                    let x = (i % m) as f64 / m as f64;
                    let y = (i / m) as f64 / m as f64;
                    a[0] * (2.0 * PI * x).cos()
                        + a[1] * (2.0 * PI * x).sin()
                        + a[2] * (4.0 * PI * x).cos()
                        + a[3] * (2.0 * PI * y).cos()
                        + a[4] * (2.0 * PI * (x + y)).sin()
                        + a[5]
                        + noise[i]
                })
                .collect()
        })
}

pub fn case() -> impl Strategy<Value = usize> {
    0..operators().len()
}
