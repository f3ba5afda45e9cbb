//! Acceptance criteria, one PASS/FAIL line each.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::sync::OnceLock;

use common::{case, grid_of, grid_values, minimizing_point, model_and_point, operators, pendulum_pair, ROUNDING};
use greenkam::cli::report::without_wall_time;
use greenkam::cli::scenario::parse_scenario_str;
use greenkam::cli::{run, Report};
use greenkam::flow::{linearized_flow_lifted, FlowConfig, LiftedPoint};
use greenkam::green::{green_bundles, monotonicity_scan, GreenConfig};
use greenkam::lyapunov::{lyapunov_spectrum, verify_theorem_two, LyapunovConfig, TheoremTwoVerdict};
use greenkam::model::{Hamiltonian, PhasePoint, TonelliModel};
use greenkam::regularity::{
    c1_diagnostic, contingent_cone, theorem_three_check, ConeConfig, RegularityConfig, RegularityVerdict, Side,
};
use greenkam::weakkam::barrier::{barrier, barrier_comparison_check, BarrierConfig};
use greenkam::weakkam::grid::{GridFunction, Interpolation};
use greenkam::weakkam::lax_oleinik::Sign;
use greenkam::weakkam::pseudograph::pseudograph;
use greenkam::weakkam::solve::{solve_weak_kam, WeakKamConfig, WeakKamSolution};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Suite<'a> = Box<dyn Fn() -> Outcome + Sync + 'a>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn pendulum_solution() -> &'static WeakKamSolution {
    static SOL: OnceLock<WeakKamSolution> = OnceLock::new();
    SOL.get_or_init(|| solve_weak_kam(&TonelliModel::pendulum(), Sign::Negative, &WeakKamConfig::default()).unwrap())
}

fn closed_form_u_minus(m: usize) -> GridFunction {
    GridFunction::from_fn(1, m, Interpolation::Linear, |q| {
        let q = q[0];
        if q <= 0.5 {
            2.0 / PI * (1.0 - (PI * q).cos())
        } else {
            2.0 / PI * (1.0 + (PI * q).cos())
        }
    })
}

fn origin(n: usize) -> PhasePoint {
    PhasePoint::new(vec![0.0; n], vec![0.0; n])
}

fn criterion_1() -> Outcome {
    let sol = pendulum_solution();
    let err = sol.u.sup_distance(&closed_form_u_minus(sol.u.m));
    ensure((sol.c - 1.0).abs() <= 0.02, format!("c = {}", sol.c))?;
    ensure(err <= 0.02, format!("sup error {err:e}"))?;
    Ok(format!("c = {:.6}, sup error {err:.2e}", sol.c))
}

fn criterion_2() -> Outcome {
    let pair = pendulum_pair();
    let neg = pair.u_minus.map(|v| -v);
    let sym = pair.u_plus.sup_distance(&neg);
    ensure(sym <= 0.02, format!("|u+ + u-| = {sym:e}"))?;
    let h = pair.u_minus.spacing();
    let nodes = pair.equality_nodes();
    ensure(!nodes.is_empty(), "empty equality set")?;
    for &i in &nodes {
        let q = greenkam::model::wrap_centered(pair.u_minus.node(i)[0]);
        ensure(q.abs() <= h + 1e-12, format!("equality node at q = {q}"))?;
    }
    ensure(
        pair.order_gap() <= 0.0,
        format!("max(u+ - u-) = {:e}", pair.order_gap()),
    )?;
    Ok(format!(
        "|u+ + u-| = {sym:.2e}, equality set {nodes:?}, max(u+ - u-) = {:e}",
        pair.order_gap()
    ))
}

fn criterion_3() -> Outcome {
    let model = TonelliModel::pendulum();
    let x = origin(1);
    let g = green_bundles(&model, &x, &GreenConfig::default()).map_err(|e| e.to_string())?;
    let (sp, sm) = (g.s_plus.s[(0, 0)], g.s_minus.s[(0, 0)]);
    ensure(
        (sp - 2.0 * PI).abs() <= 1e-3 && (sm + 2.0 * PI).abs() <= 1e-3,
        format!("s+ = {sp}, s- = {sm}"),
    )?;
    ensure(g.p_dim == 0, format!("kernel dimension {}", g.p_dim))?;
    let lcfg = LyapunovConfig {
        horizon: 50.0,
        ..LyapunovConfig::default()
    };
    let spec = lyapunov_spectrum(&model, &x, &lcfg).map_err(|e| e.to_string())?;
    let l = &spec.exponents;
    ensure(
        (l[0] - 2.0 * PI).abs() <= 0.01 * 2.0 * PI && (l[1] + 2.0 * PI).abs() <= 0.01 * 2.0 * PI,
        format!("exponents {l:?}"),
    )?;
    let rep = verify_theorem_two(&model, &x, &lcfg, &GreenConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        rep.p_from_green == 0 && (rep.zero_count, rep.pos_count, rep.neg_count) == (0, 1, 1),
        format!(
            "p = {}, counts ({}, {}, {})",
            rep.p_from_green, rep.zero_count, rep.pos_count, rep.neg_count
        ),
    )?;
    ensure(
        rep.verdict == TheoremTwoVerdict::ConsistentWithCaveat,
        format!("verdict {}", rep.verdict),
    )?;
    Ok(format!(
        "s+ = {sp:.6}, s- = {sm:.6}, exponents {:.4}/{:.4}, {}",
        l[0], l[1], rep.verdict
    ))
}

fn criterion_4() -> Outcome {
    let cases = [
        (TonelliModel::free_rotor(1), PhasePoint::new(vec![0.2], vec![0.5])),
        (
            TonelliModel::free_rotor(2),
            PhasePoint::new(vec![0.1, 0.3], vec![0.4, -0.2]),
        ),
        (
            TonelliModel::mane_rotor([1.0, 2f64.sqrt()]),
            PhasePoint::new(vec![0.6, 0.2], vec![0.0, 0.0]),
        ),
        (
            TonelliModel::mane_rotor([0.7, -1.3]),
            PhasePoint::new(vec![0.3, 0.9], vec![0.5, 0.25]),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (model, x) in &cases {
        let n = model.dim();
        let rep = verify_theorem_two(model, x, &LyapunovConfig::default(), &GreenConfig::default())
            .map_err(|e| e.to_string())?;
        ensure(
            rep.p_from_green == n && rep.zero_count == 2 * n && rep.verdict == TheoremTwoVerdict::Consistent,
            format!(
                "{}: p = {}, zeros {}, {}",
                model.name(),
                rep.p_from_green,
                rep.zero_count,
                rep.verdict
            ),
        )?;
        let m = rep.spectrum.exponents.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        ensure(m <= 1e-3, format!("{}: exponent magnitude {m:e}", model.name()))?;
        worst = worst.max(m);
    }
    Ok(format!("{} bases CONSISTENT, max |exponent| {worst:.1e}", cases.len()))
}

fn criterion_5() -> Outcome {
    let model = TonelliModel::pendulum();
    let u = &pendulum_pair().u_minus;
    let cfg = RegularityConfig {
        cone: ConeConfig {
            min_distance: 3.0 * u.spacing(),
            ..ConeConfig::default()
        },
        ..RegularityConfig::default()
    };
    let base = origin(1);
    let cone = contingent_cone(&pseudograph(u).samples(), &base, &cfg.cone).map_err(|e| e.to_string())?;
    let rep = theorem_three_check(&model, &base, &cone, Side::Minus, &cfg).map_err(|e| e.to_string())?;
    let row = rep
        .rows
        .iter()
        .find(|r| r.direction.x[0] > 0.0)
        .ok_or("no cone direction with X > 0")?;
    let x = row.direction.x[0];
    let slope = row.direction.y[0] / x;
    let target = 8.0 * PI * x;
    ensure(
        (slope - 2.0 * PI).abs() <= 0.05 * 2.0 * PI,
        format!("cone slope {slope}"),
    )?;
    ensure(
        row.slack.abs() <= 0.05 * row.rhs,
        format!("slack {} vs rhs {}", row.slack, row.rhs),
    )?;
    ensure(
        (row.lhs - target).abs() <= 0.05 * target && (row.rhs - target).abs() <= 0.05 * target,
        format!("lhs {} rhs {} 8π|X| {target}", row.lhs, row.rhs),
    )?;
    Ok(format!(
        "slope {slope:.4}, lhs {:.4}, rhs {:.4}, 8π|X| {target:.4}, slack/rhs {:.2e}",
        row.lhs,
        row.rhs,
        row.slack / row.rhs
    ))
}

fn criterion_6() -> Outcome {
    let cfg = RegularityConfig::default();
    let circle: Vec<PhasePoint> = (0..1000)
        .map(|k| PhasePoint::new(vec![k as f64 / 1000.0], vec![0.5]))
        .collect();
    let circle_bases: Vec<PhasePoint> = circle.iter().step_by(5).cloned().collect();
    let a = c1_diagnostic(&TonelliModel::free_rotor(1), &circle, &circle_bases, &cfg).map_err(|e| e.to_string())?;
    let torus: Vec<PhasePoint> = (0..2500)
        .map(|k| PhasePoint::new(vec![(k % 50) as f64 / 50.0, (k / 50) as f64 / 50.0], vec![0.0, 0.0]))
        .collect();
    let torus_bases: Vec<PhasePoint> = torus.iter().step_by(25).cloned().collect();
    let b = c1_diagnostic(
        &TonelliModel::mane_rotor([1.0, 2f64.sqrt()]),
        &torus,
        &torus_bases,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    for (name, r) in [("free-rotor", &a), ("mane-rotor", &b)] {
        ensure(
            r.fraction >= 0.99 && r.verdict == RegularityVerdict::Consistent,
            format!("{name}: {}/{} ({})", r.passing, r.applicable, r.verdict),
        )?;
    }
    Ok(format!(
        "free-rotor {}/{}, mane-rotor {}/{}",
        a.passing, a.applicable, b.passing, b.applicable
    ))
}

fn property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<String, String> {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, test)
        .map(|_| name.to_string())
        .map_err(|e| format!("{name}: {e}"))
}

fn criterion_7() -> Outcome {
    let flow = FlowConfig {
        max_energy_drift: f64::INFINITY,
        ..FlowConfig::default()
    };
    let suites: Vec<Suite> = vec![
        Box::new(|| {
            property(
                "LO monotone",
                (case(), grid_values(), prop::collection::vec(0.0..0.5f64, 128 * 128)),
                |(k, u, gap)| {
                    let c = &operators()[k];
                    let u = grid_of(c, &u);
                    let mut v = u.clone();
                    v.values.iter_mut().zip(&gap).for_each(|(x, g)| *x += g);
                    let (tu, tv) = (c.op.apply(&u).unwrap(), c.op.apply(&v).unwrap());
                    prop_assert!(tu.values.iter().zip(&tv.values).all(|(a, b)| *a <= *b + ROUNDING));
                    Ok(())
                },
            )
        }),
        Box::new(|| {
            property(
                "LO non-expansive",
                (case(), grid_values(), grid_values()),
                |(k, u, v)| {
                    let c = &operators()[k];
                    let (u, v) = (grid_of(c, &u), grid_of(c, &v));
                    let d = c.op.apply(&u).unwrap().sup_distance(&c.op.apply(&v).unwrap());
                    prop_assert!(d <= u.sup_distance(&v) + ROUNDING);
                    Ok(())
                },
            )
        }),
        Box::new(|| {
            property("LO constants", (case(), grid_values(), -10.0..10.0f64), |(k, u, a)| {
                let c = &operators()[k];
                let u = grid_of(c, &u);
                let tu = c.op.apply(&u).unwrap();
                let tua = c.op.apply(&u.map(|x| x + a)).unwrap();
                prop_assert!(tu
                    .values
                    .iter()
                    .zip(&tua.values)
                    .all(|(x, y)| (y - x - a).abs() <= ROUNDING * (1.0 + a.abs())));
                Ok(())
            })
        }),
        Box::new(|| {
            property(
                "symplectic cocycle",
                (model_and_point(3.0), -20.0..20.0f64),
                |((model, x), t)| {
                    let (_, m) = linearized_flow_lifted(&model, &LiftedPoint::from_phase(&x), t, &flow).unwrap();
                    prop_assert!(m.symplectic_defect() <= 1e-8 * t.abs().max(1.0));
                    Ok(())
                },
            )
        }),
        Box::new(|| {
            property("Lyapunov pairing", model_and_point(2.0), |(model, x)| {
                let spec = lyapunov_spectrum(&model, &x, &LyapunovConfig::default()).unwrap();
                prop_assert!(spec.pairing_defect() <= 2.0 * spec.zero_tol);
                Ok(())
            })
        }),
        Box::new(|| {
            property("Riccati monotonicity", minimizing_point(), |(model, x)| {
                let r = monotonicity_scan(&model, &x, &[0.5, 1.0, 2.0, 4.0, 8.0], &GreenConfig::default()).unwrap();
                prop_assert_eq!(r.verdict(), "PASS");
                Ok(())
            })
        }),
        Box::new(|| {
            property(
                "barrier agreement",
                (minimizing_point(), 1.0..10.0f64, any::<bool>()),
                |((model, x), t, plus)| {
                    let sign = if plus { Sign::Positive } else { Sign::Negative };
                    let b = barrier(&model, &x, t, sign, 0.02, &BarrierConfig::default()).unwrap();
                    prop_assert!(b.agreement <= 1e-3, "{} at {:?}", b.agreement, x);
                    Ok(())
                },
            )
        }),
        Box::new(|| {
            property(
                "barrier comparison",
                (any::<prop::sample::Index>(), 0.05..10.0f64, 0.002..0.25f64),
                |(pick, t, radius)| {
                    let pair = pendulum_pair();
                    let nodes = pair.equality_nodes();
                    let node = nodes[pick.index(nodes.len())];
                    let rep = barrier_comparison_check(
                        &TonelliModel::pendulum(),
                        pair,
                        node,
                        t,
                        radius,
                        &BarrierConfig::default(),
                    )
                    .unwrap();
                    prop_assert!(rep.pass);
                    Ok(())
                },
            )
        }),
    ];
    let results: Vec<Result<String, String>> = suites.par_iter().map(|f| f()).collect();
    let failed: Vec<String> = results.iter().filter_map(|r| r.clone().err()).collect();
    if failed.is_empty() {
        Ok(format!("{} suites x 1000 cases", results.len()))
    } else {
        Err(failed.join("; "))
    }
}

const DETERMINISM_SCENARIOS: [&str; 2] = [
    "[scenario]\nmodel = pendulum\ntask = full\nseed = 11\n\n[lyapunov]\nhorizon = 50\n\n[regularity]\nsupport = mather\nbases = 4\n",
    "[scenario]\nmodel = mane-rotor\ntask = c1-diagnostic\nseed = 3\n\n[regularity]\np0 = 0.2, 0.1\nsamples = 900\nbases = 12\n",
];

fn same(a: &Report, b: &Report) -> bool {
    without_wall_time(&a.to_text()) == without_wall_time(&b.to_text())
        && a.tables.len() == b.tables.len()
        && a.tables
            .iter()
            .zip(&b.tables)
            .all(|(x, y)| x.name == y.name && x.to_csv() == y.to_csv())
}

fn criterion_8() -> Outcome {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    for text in DETERMINISM_SCENARIOS {
        let s = parse_scenario_str(text, Path::new("determinism.ini")).map_err(|e| e.to_string())?;
        let a = run(&s);
        let b = run(&s);
        let c = single.install(|| run(&s));
        ensure(a.errors.is_empty(), format!("errors {:?}", a.errors))?;
        ensure(same(&a, &b), format!("{}: repeated runs differ", s.task.as_str()))?;
        ensure(same(&a, &c), format!("{}: one-thread run differs", s.task.as_str()))?;
    }
    Ok(format!(
        "{} scenarios identical across runs and thread counts",
        DETERMINISM_SCENARIOS.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("pendulum critical value", criterion_1),
        ("pendulum conjugate pair", criterion_2),
        ("pendulum Green pair and spectrum", criterion_3),
        ("rotor Green kernel and spectrum", criterion_4),
        ("cone/Green inequality saturation", criterion_5),
        ("C1 diagnostic on invariant tori", criterion_6),
        ("property suites", criterion_7),
        ("determinism", criterion_8),
    ];
    let results: Vec<Outcome> = criteria
        .par_iter()
        .map(|(_, f)| std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into())))
        .collect();
    let mut failures = 0;
    for (i, ((name, _), r)) in criteria.iter().zip(&results).enumerate() {
        match r {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
