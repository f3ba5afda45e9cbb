//! Task dispatch.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{fmt_matrix, fmt_num, fmt_vec, Report, Table};
use super::scenario::{Scenario, Support, Task};
use crate::flow::{linearized_flow, trajectory, LiftedPoint};
use crate::green::{green_bundles, monotonicity_scan};
use crate::lyapunov::{classify_spectrum, lyapunov_spectrum, verify_theorem_two};
use crate::model::{wrap_unit, Hamiltonian, PhasePoint};
use crate::regularity::{
    c1_diagnostic, contingent_cone, theorem_three_slack, ConeConfig, RegularityReport, RegularityVerdict, Side,
};
use crate::weakkam::barrier::{barrier, barrier_comparison_check};
use crate::weakkam::lax_oleinik::Sign;
use crate::weakkam::pseudograph::{
    hamilton_jacobi_residual, lipschitz_graph_check, mather_set_approx, pseudograph, semiconcavity_constant,
    Pseudograph,
};
use crate::weakkam::solve::{weak_kam_pair, WeakKamError, WeakKamPair, WeakKamSolution};

/// Random streams, one per sampling subroutine.
const STREAM_BARRIER: u64 = 1;
const STREAM_THM3: u64 = 2;
const STREAM_SUPPORT: u64 = 3;
const STREAM_BASES: u64 = 4;

/// Pseudograph samples within this many grid spacings of a base are not used for cones.
const RESOLUTION_FLOOR: f64 = 3.0;

struct Context<'a> {
    scenario: &'a Scenario,
    report: Report,
    pair: Option<Result<(WeakKamPair, WeakKamSolution), WeakKamError>>,
}

impl Context<'_> {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed);
        rng.set_stream(stream);
        rng
    }

    fn pair(&mut self) -> Result<(WeakKamPair, WeakKamSolution), String> {
        if self.pair.is_none() {
            let s = self.scenario;
            self.pair = Some(weak_kam_pair(&s.model, &s.weakkam));
        }
        self.pair.clone().unwrap().map_err(|e| format!("weak KAM solve: {e}"))
    }
}

/// Picks `k` of `len` indices (all of them when `k ≥ len`), ascending.
fn choose(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = if k >= len {
        (0..len).collect()
    } else {
        sample(rng, len, k).into_vec()
    };
    idx.sort_unstable();
    idx
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn numbered_always(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn cells(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| fmt_num(*x)).collect()
}

pub fn run(scenario: &Scenario) -> Report {
    let start = Instant::now();
    let mut ctx = Context {
        scenario,
        report: Report {
            input: scenario.echo.clone(),
            ..Report::default()
        },
        pair: None,
    };
    let tasks: Vec<Task> = match scenario.task {
        Task::Full => vec![
            Task::Flow,
            Task::Green,
            Task::Lyapunov,
            Task::VerifyThm2,
            Task::WeakKam,
            Task::VerifyThm3,
            Task::C1Diagnostic,
        ],
        t => vec![t],
    };
    for task in tasks {
        let outcome = match task {
            Task::Flow => task_flow(&mut ctx),
            Task::Green => task_green(&mut ctx),
            Task::Lyapunov => task_lyapunov(&mut ctx),
            Task::VerifyThm2 => task_thm2(&mut ctx),
            Task::WeakKam => task_weakkam(&mut ctx),
            Task::VerifyThm3 => task_thm3(&mut ctx),
            Task::C1Diagnostic => task_c1(&mut ctx),
            Task::Full => unreachable!(),
        };
        if let Err(e) = outcome {
            ctx.report.error(task.as_str(), e);
        }
    }
    let mut report = ctx.report;
    report.wall_time = start.elapsed().as_secs_f64();
    report
}

/// Output directory: `--out`, then the scenario's `output`, then
/// `greenkam-out/<scenario stem>`.
pub fn output_dir(scenario: &Scenario, out: Option<&Path>) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    if let Some(o) = &scenario.output {
        return o.clone();
    }
    let stem = scenario
        .source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    PathBuf::from("greenkam-out").join(stem)
}

fn task_flow(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let model = &s.model;
    let n = model.dim();
    let x = &s.point;
    let t = s.flow_time;
    let lifted = LiftedPoint::from_phase(x);
    let samples = ((t / s.flow.step).ceil() as usize).clamp(1, 200);
    let times: Vec<f64> = (1..=samples).map(|k| t * k as f64 / samples as f64).collect();
    let orbit = trajectory(model, &lifted, &times, &s.flow).map_err(|e| e.to_string())?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("q", n));
    header.extend(numbered("p", n));
    header.push("energy".into());
    let mut table = Table::new("trajectory", header);
    let e0 = model.energy(&lifted.q, &lifted.p);
    let mut row = vec!["0".to_string()];
    row.extend(cells(&lifted.q));
    row.extend(cells(&lifted.p));
    row.push(fmt_num(e0));
    table.push(row);
    for (ti, y) in times.iter().zip(&orbit) {
        let mut row = vec![fmt_num(*ti)];
        row.extend(cells(&y.q));
        row.extend(cells(&y.p));
        row.push(fmt_num(model.energy(&y.q, &y.p)));
        table.push(row);
    }
    let last = orbit.last().unwrap();
    let e1 = model.energy(&last.q, &last.p);
    let cocycle = linearized_flow(model, x, t, &s.flow).map_err(|e| e.to_string())?;
    let defect = cocycle.symplectic_defect();
    let r = &mut ctx.report;
    r.put("flow", "time", t);
    r.put(
        "flow",
        "scheme",
        match s.flow.resolved_scheme(model) {
            crate::flow::Scheme::Leapfrog => "leapfrog",
            crate::flow::Scheme::ImplicitMidpoint => "implicit-midpoint",
        },
    );
    r.put(
        "flow",
        "q_final",
        fmt_vec(&last.q.iter().map(|v| wrap_unit(*v)).collect::<Vec<_>>()),
    );
    r.put("flow", "q_final_lifted", fmt_vec(&last.q));
    r.put("flow", "p_final", fmt_vec(&last.p));
    r.put("flow", "energy_initial", e0);
    r.put("flow", "energy_final", e1);
    r.put("flow", "energy_drift", (e1 - e0).abs());
    r.put("flow", "symplectic_defect", defect);
    r.put("flow", "symplectic_defect_per_time", defect / t.max(1.0));
    r.verdict(
        "flow.symplecticity",
        if defect <= 1e-8 * t.max(1.0) { "PASS" } else { "FAIL" },
    );
    r.tables.push(table);
    Ok(())
}

fn task_green(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let green = green_bundles(&s.model, &s.point, &s.green).map_err(|e| e.to_string())?;
    let mono = monotonicity_scan(&s.model, &s.point, &s.monotonicity_times, &s.green).map_err(|e| e.to_string())?;
    let r = &mut ctx.report;
    r.put("green", "s_minus", fmt_matrix(&green.s_minus.s));
    r.put("green", "s_plus", fmt_matrix(&green.s_plus.s));
    r.put("green", "delta", fmt_matrix(&green.delta));
    r.put("green", "tilde_minus", fmt_matrix(&green.tilde_minus));
    r.put("green", "tilde_plus", fmt_matrix(&green.tilde_plus));
    r.put("green", "lambda", green.lambda);
    r.put("green", "kernel_dim", green.p_dim);
    r.put("green", "order_margin", green.order_margin());
    r.put("green", "t_used", green.t_used);
    r.put("green", "tail", green.tail);
    r.put("green", "monotonicity_min_margin", mono.min_margin);
    r.put("green", "monotonicity_strict", mono.strict);
    r.verdict("green.monotonicity", mono.verdict());
    let mut table = Table::new(
        "monotonicity",
        ["s", "t", "margin1", "margin2", "margin3"].map(String::from).to_vec(),
    );
    for p in &mono.pairs {
        let mut row = cells(&[p.s, p.t]);
        row.extend(cells(&p.margins));
        table.push(row);
    }
    r.tables.push(table);
    Ok(())
}

fn exponent_table(trace: &[(f64, Vec<f64>)], dim: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend(numbered_always("lambda", 2 * dim));
    let mut table = Table::new("exponents", header);
    for (t, ex) in trace {
        let mut row = vec![fmt_num(*t)];
        row.extend(cells(ex));
        table.push(row);
    }
    table
}

fn task_lyapunov(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let spec = lyapunov_spectrum(&s.model, &s.point, &s.lyapunov).map_err(|e| e.to_string())?;
    let class = classify_spectrum(&spec);
    let r = &mut ctx.report;
    r.put("lyapunov", "horizon", spec.horizon);
    r.put("lyapunov", "exponents", fmt_vec(&spec.exponents));
    r.put("lyapunov", "zero_tol", spec.zero_tol);
    r.put("lyapunov", "slopes", fmt_vec(&spec.slopes));
    r.put("lyapunov", "sum", spec.sum());
    r.put("lyapunov", "pairing_defect", spec.pairing_defect());
    r.put("lyapunov", "zero_count", class.zero);
    r.put("lyapunov", "positive_count", class.positive);
    r.put("lyapunov", "negative_count", class.negative);
    r.put("lyapunov", "ambiguous", class.ambiguous);
    r.verdict(
        "lyapunov.pairing",
        if spec.pairing_defect() <= 2.0 * spec.zero_tol {
            "PASS"
        } else {
            "FAIL"
        },
    );
    if !r.tables.iter().any(|t| t.name == "exponents") {
        r.tables.push(exponent_table(&spec.trace, s.model.dim()));
    }
    Ok(())
}

fn task_thm2(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let rep = verify_theorem_two(&s.model, &s.point, &s.lyapunov, &s.green).map_err(|e| e.to_string())?;
    let r = &mut ctx.report;
    r.put("thm2", "p", rep.p_from_green);
    r.put("thm2", "zero_count", rep.zero_count);
    r.put("thm2", "positive_count", rep.pos_count);
    r.put("thm2", "negative_count", rep.neg_count);
    r.put("thm2", "exponents", fmt_vec(&rep.spectrum.exponents));
    r.put("thm2", "zero_tol", rep.spectrum.zero_tol);
    r.put("thm2", "lambda", rep.green.lambda);
    r.put("thm2", "caveats", rep.caveats.join("; "));
    r.verdict("thm2", rep.verdict);
    if !r.tables.iter().any(|t| t.name == "exponents") {
        r.tables.push(exponent_table(&rep.spectrum.trace, s.model.dim()));
    }
    Ok(())
}

fn grid_table(name: &str, graph: &Pseudograph, values: &[f64]) -> Table {
    let n = graph.n;
    let mut header = numbered("q", n);
    header.push("u".into());
    header.extend(numbered("du", n));
    header.push("mask".into());
    let mut table = Table::new(name, header);
    for i in 0..graph.len() {
        let mut row = cells(&graph.nodes[i]);
        row.push(fmt_num(values[i]));
        row.extend(cells(&graph.du[i]));
        row.push(if graph.mask[i] { "1" } else { "0" }.into());
        table.push(row);
    }
    table
}

fn task_weakkam(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let model = &s.model;
    let (pair, sol) = ctx.pair()?;
    let gm = pseudograph(&pair.u_minus);
    let gp = pseudograph(&pair.u_plus);
    let k = semiconcavity_constant(&pair.u_minus);
    let hj = hamilton_jacobi_residual(model, &gm, pair.c);
    let mather = mather_set_approx(&pair);
    let lip = lipschitz_graph_check(&pair);
    let eq_nodes = pair.equality_nodes();
    let chosen: Vec<usize> = {
        let mut rng = ctx.rng(STREAM_BARRIER);
        choose(&mut rng, eq_nodes.len(), s.barrier_bases)
            .into_iter()
            .map(|i| eq_nodes[i])
            .collect()
    };
    let n = model.dim();
    let mut header = vec!["node".to_string()];
    header.extend(numbered("q", n));
    header.extend(
        [
            "min_slack_plus",
            "min_slack_minus",
            "error",
            "hessian_gap_plus",
            "hessian_gap_minus",
            "verdict",
        ]
        .map(String::from),
    );
    let mut table = Table::new("barrier", header);
    let mut all_pass = true;
    let mut max_gap: f64 = 0.0;
    for &node in &chosen {
        let cmp = barrier_comparison_check(model, &pair, node, s.barrier_t, s.patch_radius, &s.barrier)
            .map_err(|e| format!("barrier comparison at node {node}: {e}"))?;
        let q0 = pair.u_minus.node(node);
        let plus = barrier(
            model,
            &PhasePoint::new(q0.clone(), gm.du[node].clone()),
            s.barrier_t,
            Sign::Positive,
            s.patch_radius,
            &s.barrier,
        )
        .map_err(|e| format!("barrier a+ at node {node}: {e}"))?;
        let minus = barrier(
            model,
            &PhasePoint::new(q0.clone(), gp.du[node].clone()),
            s.barrier_t,
            Sign::Negative,
            s.patch_radius,
            &s.barrier,
        )
        .map_err(|e| format!("barrier a- at node {node}: {e}"))?;
        all_pass &= cmp.pass;
        max_gap = max_gap.max(plus.agreement).max(minus.agreement);
        let mut row = vec![node.to_string()];
        row.extend(cells(&q0));
        row.extend(cells(&[
            cmp.min_slack[0],
            cmp.min_slack[1],
            cmp.error,
            plus.agreement,
            minus.agreement,
        ]));
        row.push(cmp.verdict().into());
        table.push(row);
    }
    let r = &mut ctx.report;
    r.put("weakkam", "grid", pair.u_minus.m);
    r.put("weakkam", "c", pair.c);
    r.put("weakkam", "iterations", sol.iterations);
    r.put("weakkam", "residual_minus", pair.residuals[0]);
    r.put("weakkam", "residual_plus", pair.residuals[1]);
    r.put("weakkam", "conjugate_iterations", pair.iterations);
    r.put("weakkam", "conjugate_drift", pair.drift);
    r.put("weakkam", "eq_tol", pair.eq_tol);
    r.put("weakkam", "equality_nodes", eq_nodes.len());
    r.put("weakkam", "order_gap", pair.order_gap());
    r.put("weakkam", "semiconcavity", k);
    r.put("weakkam", "kinks", gm.mask.iter().filter(|m| !**m).count());
    r.put("weakkam", "hj_residual", hj);
    r.put("weakkam", "mather_points", mather.points.len());
    r.put("weakkam", "mather_du_mismatch", mather.mismatch);
    if let Some(w) = &mather.warning {
        r.put("weakkam", "mather_warning", w);
    }
    r.put("weakkam", "lipschitz_k_fit", lip.k_fit);
    r.put("weakkam", "lipschitz_bound", lip.bound);
    r.put("weakkam", "barrier_t", s.barrier_t);
    r.put("weakkam", "barrier_bases", chosen.len());
    r.put("weakkam", "barrier_hessian_gap", max_gap);
    r.verdict("weakkam.lipschitz", lip.verdict());
    if !chosen.is_empty() {
        r.verdict("weakkam.barrier", if all_pass { "PASS" } else { "VIOLATION" });
        r.verdict(
            "weakkam.barrier_hessian",
            if max_gap <= s.barrier.agreement_tol {
                "PASS"
            } else {
                "FAIL"
            },
        );
    }
    r.tables.push(grid_table("u_minus", &gm, &pair.u_minus.values));
    r.tables.push(grid_table("u_plus", &gp, &pair.u_plus.values));
    r.tables.push(table);
    Ok(())
}

fn slack_table(name: &str, n: usize, reports: &[RegularityReport]) -> Table {
    let mut header = numbered("dirX", n);
    header.extend(numbered("dirY", n));
    header.extend(["lhs", "rhs", "slack"].map(String::from));
    let mut table = Table::new(name, header);
    for rep in reports {
        for row in &rep.rows {
            let mut cellsv = cells(row.direction.x.as_slice());
            cellsv.extend(cells(row.direction.y.as_slice()));
            cellsv.extend(cells(&[row.lhs, row.rhs, row.slack]));
            table.push(cellsv);
        }
    }
    table
}

fn aggregate(verdicts: impl Iterator<Item = RegularityVerdict>) -> RegularityVerdict {
    let mut any_ok = false;
    for v in verdicts {
        match v {
            RegularityVerdict::InequalityViolation => return v,
            RegularityVerdict::Consistent => any_ok = true,
            _ => {}
        }
    }
    if any_ok {
        RegularityVerdict::Consistent
    } else {
        RegularityVerdict::InsufficientSamples
    }
}

fn task_thm3(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let model = &s.model;
    let n = model.dim();
    let (pair, _) = ctx.pair()?;
    let gm = pseudograph(&pair.u_minus);
    let gp = pseudograph(&pair.u_plus);
    let samples_m = gm.samples();
    let samples_p = gp.samples();
    let candidates: Vec<usize> = pair
        .equality_nodes()
        .into_iter()
        .filter(|&i| gm.mask[i] && gp.mask[i])
        .collect();
    let nodes: Vec<usize> = {
        let mut rng = ctx.rng(STREAM_THM3);
        choose(&mut rng, candidates.len(), s.bases)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    };
    let cone_cfg = ConeConfig {
        min_distance: RESOLUTION_FLOOR / pair.u_minus.m as f64,
        ..s.regularity.cone.clone()
    };
    let mut minus_reports = Vec::new();
    let mut plus_reports = Vec::new();
    let mut header = vec!["side".to_string()];
    header.extend(numbered("q", n));
    header.extend(numbered("p", n));
    header.extend(numbered("dirX", n));
    header.extend(numbered("dirY", n));
    header.push("drift".into());
    let mut cone_table = Table::new("cone_directions", header);
    for &node in &nodes {
        let base_m = gm.point(node);
        let base_p = gp.point(node);
        let green = green_bundles(model, &base_m, &s.regularity.green).map_err(|e| e.to_string())?;
        for (side, base, samples) in [(Side::Minus, &base_m, &samples_m), (Side::Plus, &base_p, &samples_p)] {
            let cone = contingent_cone(samples, base, &cone_cfg).map_err(|e| e.to_string())?;
            for d in &cone.directions {
                let mut row = vec![side.as_str().to_string()];
                row.extend(cells(base.q.coords()));
                row.extend(cells(base.p.as_slice()));
                row.extend(cells(d.v.x.as_slice()));
                row.extend(cells(d.v.y.as_slice()));
                row.push(fmt_num(d.drift));
                cone_table.push(row);
            }
            let rep = theorem_three_slack(&green, base, &cone, side, s.regularity.angle_error);
            match side {
                Side::Minus => minus_reports.push(rep),
                Side::Plus => plus_reports.push(rep),
            }
        }
    }
    let min_of = |reps: &[RegularityReport]| reps.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min);
    let worst_rel = |reps: &[RegularityReport]| {
        reps.iter()
            .flat_map(|r| r.rows.iter())
            .filter(|row| row.rhs > 0.0)
            .map(|row| row.slack / row.rhs)
            .fold(f64::INFINITY, f64::min)
    };
    let verdict = aggregate(minus_reports.iter().chain(&plus_reports).map(|r| r.verdict));
    let r = &mut ctx.report;
    r.put("thm3", "bases", nodes.len());
    r.put(
        "thm3",
        "directions_minus",
        minus_reports.iter().map(|x| x.rows.len()).sum::<usize>(),
    );
    r.put(
        "thm3",
        "directions_plus",
        plus_reports.iter().map(|x| x.rows.len()).sum::<usize>(),
    );
    r.put("thm3", "min_slack_minus", min_of(&minus_reports));
    r.put("thm3", "min_slack_plus", min_of(&plus_reports));
    r.put("thm3", "min_relative_slack_minus", worst_rel(&minus_reports));
    r.put("thm3", "min_relative_slack_plus", worst_rel(&plus_reports));
    r.verdict("thm3", verdict);
    r.tables.push(slack_table("slack", n, &minus_reports));
    r.tables.push(slack_table("slack_plus", n, &plus_reports));
    r.tables.push(cone_table);
    Ok(())
}

fn invariant_samples(rng: &mut ChaCha8Rng, n: usize, count: usize, p0: &[f64]) -> Vec<PhasePoint> {
    if n == 1 {
        (0..count)
            .map(|_| PhasePoint::new(vec![rng.random::<f64>()], p0.to_vec()))
            .collect()
    } else {
        let side = (count as f64).sqrt().ceil() as usize;
        let offset = [rng.random::<f64>() / side as f64, rng.random::<f64>() / side as f64];
        (0..side * side)
            .map(|i| {
                let q = vec![
                    wrap_unit(offset[0] + (i / side) as f64 / side as f64),
                    wrap_unit(offset[1] + (i % side) as f64 / side as f64),
                ];
                PhasePoint::new(q, p0.to_vec())
            })
            .collect()
    }
}

fn task_c1(ctx: &mut Context) -> Result<(), String> {
    let s = ctx.scenario;
    let model = &s.model;
    let n = model.dim();
    let samples = match s.support {
        Support::Invariant => {
            let mut rng = ctx.rng(STREAM_SUPPORT);
            invariant_samples(&mut rng, n, s.samples, &s.p0)
        }
        Support::Mather => {
            let (pair, _) = ctx.pair()?;
            mather_set_approx(&pair).points
        }
    };
    let bases: Vec<PhasePoint> = {
        let mut rng = ctx.rng(STREAM_BASES);
        choose(&mut rng, samples.len(), s.bases)
            .into_iter()
            .map(|i| samples[i].clone())
            .collect()
    };
    let rep = c1_diagnostic(model, &samples, &bases, &s.regularity).map_err(|e| e.to_string())?;
    let mut header = numbered("q", n);
    header.extend(numbered("p", n));
    header.extend(["all_zero", "lambda", "directions", "max_angle", "verdict"].map(String::from));
    let mut table = Table::new("c1", header);
    for b in &rep.bases {
        let mut row = cells(b.base.q.coords());
        row.extend(cells(b.base.p.as_slice()));
        row.push(if b.all_zero { "1" } else { "0" }.into());
        row.extend(cells(&[b.lambda]));
        row.push(b.directions.to_string());
        row.push(fmt_num(b.max_angle));
        row.push(b.verdict.to_string());
        table.push(row);
    }
    let r = &mut ctx.report;
    r.put("c1", "support", s.support.as_str());
    r.put("c1", "samples", samples.len());
    r.put("c1", "bases", bases.len());
    r.put("c1", "applicable", rep.applicable);
    r.put("c1", "passing", rep.passing);
    r.put("c1", "fraction", rep.fraction);
    r.verdict("c1", rep.verdict);
    r.tables.push(table);
    Ok(())
}
