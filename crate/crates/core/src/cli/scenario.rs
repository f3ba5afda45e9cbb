//! Scenario files: `[section]` headers and `key = value` lines, `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::report::{fmt_num, fmt_vec};
use crate::flow::{FlowConfig, Scheme};
use crate::green::GreenConfig;
use crate::lyapunov::LyapunovConfig;
use crate::model::{Hamiltonian, PhasePoint, TonelliModel, CATALOG};
use crate::regularity::{ConeConfig, RegularityConfig};
use crate::weakkam::barrier::BarrierConfig;
use crate::weakkam::grid::Interpolation;
use crate::weakkam::solve::WeakKamConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ScenarioError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        ScenarioError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Flow,
    Green,
    Lyapunov,
    WeakKam,
    VerifyThm2,
    VerifyThm3,
    C1Diagnostic,
    Full,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Flow,
        Task::Green,
        Task::Lyapunov,
        Task::WeakKam,
        Task::VerifyThm2,
        Task::VerifyThm3,
        Task::C1Diagnostic,
        Task::Full,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Flow => "flow",
            Task::Green => "green",
            Task::Lyapunov => "lyapunov",
            Task::WeakKam => "weakkam",
            Task::VerifyThm2 => "verify-thm2",
            Task::VerifyThm3 => "verify-thm3",
            Task::C1Diagnostic => "c1-diagnostic",
            Task::Full => "full",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.iter().find(|t| t.as_str() == s).copied().ok_or_else(|| {
            let names: Vec<&str> = Task::ALL.iter().map(|t| t.as_str()).collect();
            format!("unknown task `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// The torus `{p = p0}` of an integrable model.
    Invariant,
    /// Equality set of the computed conjugate pair, lifted by `du₋`.
    Mather,
}

impl Support {
    pub fn as_str(&self) -> &'static str {
        match self {
            Support::Invariant => "invariant",
            Support::Mather => "mather",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub source: PathBuf,
    pub model: TonelliModel,
    pub task: Task,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub point: PhasePoint,
    /// Integration time of the `flow` task.
    pub flow_time: f64,
    pub flow: FlowConfig,
    pub green: GreenConfig,
    pub monotonicity_times: Vec<f64>,
    pub lyapunov: LyapunovConfig,
    pub weakkam: WeakKamConfig,
    pub barrier: BarrierConfig,
    pub barrier_t: f64,
    pub patch_radius: f64,
    pub barrier_bases: usize,
    pub regularity: RegularityConfig,
    pub support: Support,
    pub p0: Vec<f64>,
    pub samples: usize,
    pub bases: usize,
    /// Every key with its effective value, section by section.
    pub echo: Vec<(String, Vec<(String, String)>)>,
}

impl Scenario {
    /// Replaces the seed, keeping the echo in sync.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some((_, entries)) = self.echo.iter_mut().find(|(s, _)| s == "scenario") {
            if let Some(e) = entries.iter_mut().find(|(k, _)| k == "seed") {
                e.1 = seed.to_string();
            }
        }
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Ini {
    sections: BTreeMap<String, Section>,
}

const SECTIONS: [&str; 9] = [
    "scenario",
    "model",
    "point",
    "flow",
    "green",
    "lyapunov",
    "weakkam",
    "barrier",
    "regularity",
];

fn parse_ini(text: &str) -> Result<Ini, ScenarioError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ScenarioError::at(line, "unterminated section header"))?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ScenarioError::at(
                    line,
                    format!("unknown section [{name}] (expected one of {})", SECTIONS.join(", ")),
                ));
            }
            if let Some(prev) = sections.get(&name) {
                return Err(ScenarioError::at(
                    line,
                    format!("duplicate section [{name}] (first at line {})", prev.line),
                ));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ScenarioError::at(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(ScenarioError::at(line, "empty key"));
        }
        let section = current
            .as_ref()
            .ok_or_else(|| ScenarioError::at(line, "key outside of any section"))?;
        let entries = &mut sections.get_mut(section).unwrap().entries;
        if let Some(prev) = entries.get(&key) {
            return Err(ScenarioError::at(
                line,
                format!("duplicate key `{key}` (first at line {})", prev.line),
            ));
        }
        entries.insert(
            key,
            Entry {
                value,
                line,
                used: false,
            },
        );
    }
    Ok(Ini { sections })
}

/// Typed access with range checks; remembers which keys were read.
struct Reader {
    ini: Ini,
    echo: Vec<(String, Vec<(String, String)>)>,
}

impl Reader {
    fn raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let s = self.ini.sections.get_mut(section)?;
        let e = s.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn record(&mut self, section: &str, key: &str, value: String) {
        match self.echo.iter_mut().find(|(s, _)| s == section) {
            Some((_, entries)) => entries.push((key.to_string(), value)),
            None => self.echo.push((section.to_string(), vec![(key.to_string(), value)])),
        }
    }

    fn parsed<T: FromStr>(
        &mut self,
        section: &str,
        key: &str,
        default: T,
        check: impl Fn(&T) -> Result<(), String>,
        show: impl Fn(&T) -> String,
    ) -> Result<T, ScenarioError>
    where
        T::Err: fmt::Display,
    {
        let value = match self.raw(section, key) {
            Some((text, line)) => {
                let v: T = text
                    .parse()
                    .map_err(|e| ScenarioError::at(line, format!("[{section}] {key}: {e}")))?;
                check(&v).map_err(|m| ScenarioError::at(line, format!("[{section}] {key} = {text}: {m}")))?;
                v
            }
            None => default,
        };
        let shown = show(&value);
        self.record(section, key, shown);
        Ok(value)
    }

    fn real(
        &mut self,
        section: &str,
        key: &str,
        default: f64,
        lo: f64,
        hi: f64,
        open_lo: bool,
    ) -> Result<f64, ScenarioError> {
        self.parsed(
            section,
            key,
            default,
            |v: &f64| {
                let ok = v.is_finite() && *v <= hi && if open_lo { *v > lo } else { *v >= lo };
                if ok {
                    Ok(())
                } else if open_lo {
                    Err(format!("out of range ({lo}, {hi}]"))
                } else {
                    Err(format!("out of range [{lo}, {hi}]"))
                }
            },
            |v| fmt_num(*v),
        )
    }

    fn integer<T>(&mut self, section: &str, key: &str, default: T, lo: T, hi: T) -> Result<T, ScenarioError>
    where
        T: FromStr + PartialOrd + Copy + fmt::Display,
        T::Err: fmt::Display,
    {
        if let Some((text, line)) = self.raw(section, key) {
            if text.parse::<i128>().is_ok() && text.parse::<T>().is_err() {
                return Err(ScenarioError::at(
                    line,
                    format!("[{section}] {key} = {text}: out of range [{lo}, {hi}]"),
                ));
            }
        }
        self.parsed(
            section,
            key,
            default,
            |v: &T| {
                if *v >= lo && *v <= hi {
                    Ok(())
                } else {
                    Err(format!("out of range [{lo}, {hi}]"))
                }
            },
            |v| format!("{v}"),
        )
    }

    fn list(
        &mut self,
        section: &str,
        key: &str,
        default: Vec<f64>,
        len: Option<usize>,
    ) -> Result<Vec<f64>, ScenarioError> {
        let value = match self.raw(section, key) {
            Some((text, line)) => {
                let v: Vec<f64> = text
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| ScenarioError::at(line, format!("[{section}] {key}: {e}")))?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ScenarioError::at(line, format!("[{section}] {key}: non-finite entry")));
                }
                if let Some(n) = len {
                    if v.len() != n {
                        return Err(ScenarioError::at(
                            line,
                            format!("[{section}] {key}: expected {n} values, found {}", v.len()),
                        ));
                    }
                }
                v
            }
            None => default,
        };
        let shown = fmt_vec(&value);
        self.record(section, key, shown);
        Ok(value)
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.ini.sections.get(section)?.entries.get(key).map(|e| e.line)
    }

    fn reject_unused(&self) -> Result<(), ScenarioError> {
        let mut unused: Vec<(usize, String)> = self
            .ini
            .sections
            .iter()
            .flat_map(|(s, sec)| {
                sec.entries
                    .iter()
                    .filter(|(_, e)| !e.used)
                    .map(move |(k, e)| (e.line, format!("unknown key `{k}` in [{s}]")))
            })
            .collect();
        unused.sort();
        match unused.into_iter().next() {
            Some((line, msg)) => Err(ScenarioError::at(line, msg)),
            None => Ok(()),
        }
    }
}

fn parse_scheme(s: &str) -> Result<Option<Scheme>, String> {
    match s {
        "auto" => Ok(None),
        "leapfrog" => Ok(Some(Scheme::Leapfrog)),
        "implicit-midpoint" => Ok(Some(Scheme::ImplicitMidpoint)),
        other => Err(format!("unknown scheme `{other}` (auto, leapfrog, implicit-midpoint)")),
    }
}

fn scheme_name(s: Option<Scheme>) -> &'static str {
    match s {
        None => "auto",
        Some(Scheme::Leapfrog) => "leapfrog",
        Some(Scheme::ImplicitMidpoint) => "implicit-midpoint",
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::general(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario_str(&text, path)
}

pub fn parse_scenario_str(text: &str, source: &Path) -> Result<Scenario, ScenarioError> {
    let ini = parse_ini(text)?;
    let mut r = Reader { ini, echo: Vec::new() };

    let (model_name, model_line) = r
        .raw("scenario", "model")
        .ok_or_else(|| ScenarioError::general("[scenario] model is required"))?;
    let (task_text, task_line) = r
        .raw("scenario", "task")
        .ok_or_else(|| ScenarioError::general("[scenario] task is required"))?;
    let task: Task = task_text.parse().map_err(|e| ScenarioError::at(task_line, e))?;
    let mut params = BTreeMap::new();
    if let Some(sec) = r.ini.sections.get_mut("model") {
        for (k, e) in sec.entries.iter_mut() {
            e.used = true;
            let v: f64 = e
                .value
                .parse()
                .map_err(|err| ScenarioError::at(e.line, format!("[model] {k}: {err}")))?;
            params.insert(k.clone(), v);
        }
    }
    let model = TonelliModel::from_name(&model_name, &params).map_err(|e| {
        let line = match &e {
            crate::model::ModelError::UnknownParameter { name, .. }
            | crate::model::ModelError::InvalidParameter { name, .. } => r.line_of("model", name),
            _ => None,
        };
        ScenarioError {
            line: line.or(Some(model_line)),
            message: e.to_string(),
        }
    })?;
    let n = model.dim();
    r.record("scenario", "model", model.name().to_string());
    r.record("scenario", "task", task.as_str().to_string());
    let seed: u64 = r.integer("scenario", "seed", 0u64, 0, u64::MAX)?;
    let output = r.raw("scenario", "output").map(|(v, _)| PathBuf::from(v));
    if let Some(o) = &output {
        r.record("scenario", "output", o.display().to_string());
    }
    for (k, v) in model.parameters() {
        r.record("model", k, fmt_num(*v));
    }

    let q = r.list("point", "q", vec![0.0; n], Some(n))?;
    let p = r.list("point", "p", vec![0.0; n], Some(n))?;
    let point = PhasePoint::new(q, p);

    let flow_time = r.real("flow", "time", 10.0, 0.0, 1000.0, true)?;
    let step = r.real("flow", "step", 1e-2, 0.0, 0.1, true)?;
    let order = r.parsed(
        "flow",
        "order",
        4u32,
        |o| {
            if *o == 2 || *o == 4 {
                Ok(())
            } else {
                Err("must be 2 or 4".into())
            }
        },
        |o| o.to_string(),
    )?;
    let scheme = match r.raw("flow", "scheme") {
        Some((v, line)) => parse_scheme(&v).map_err(|e| ScenarioError::at(line, e))?,
        None => None,
    };
    r.record("flow", "scheme", scheme_name(scheme).to_string());
    let max_energy_drift = r.real("flow", "max_energy_drift", 1e-5, 0.0, 1.0, true)?;
    let flow = FlowConfig {
        step,
        scheme,
        order,
        max_energy_drift,
        horizon: 1e3,
    };

    let t_max = r.real("green", "t_max", 256.0, 1.0, 1000.0, false)?;
    let t_start = r.real("green", "t_start", 1.0, 0.0, t_max, true)?;
    let tol = r.real("green", "tol", 1e-8, 0.0, 1e-2, true)?;
    let restart = r.real("green", "restart", 0.5, 0.0, 5.0, true)?;
    let green = GreenConfig {
        flow: flow.clone(),
        t_start,
        t_max,
        tol,
        restart,
        ..GreenConfig::default()
    };
    let monotonicity_times = r.list("green", "monotonicity_times", vec![0.5, 1.0, 2.0, 4.0, 8.0], None)?;
    if monotonicity_times.len() < 2
        || monotonicity_times.iter().any(|t| !(*t > 0.0 && *t <= 100.0))
        || monotonicity_times.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(ScenarioError {
            line: r.line_of("green", "monotonicity_times"),
            message: "[green] monotonicity_times: need at least two increasing times in (0, 100]".into(),
        });
    }

    let lyapunov = LyapunovConfig {
        flow: flow.clone(),
        horizon: r.real("lyapunov", "horizon", 100.0, 1.0, 1000.0, false)?,
        step: r.real("lyapunov", "step", 0.5, 0.1, 1.0, false)?,
        warmup: r.real("lyapunov", "warmup", 0.1, 0.0, 0.5, false)?,
    };

    let min_grid = WeakKamConfig::min_grid(n);
    let max_grid = if n == 1 { 8192 } else { 256 };
    let grid = r.integer("weakkam", "grid", if n == 1 { 512 } else { 64 }, min_grid, max_grid)?;
    let tau = r.real("weakkam", "tau", 0.2, 0.05, 0.5, false)?;
    let wk_tol = r.real("weakkam", "tol", 1e-6, 0.0, 1e-2, true)?;
    let max_iter = r.integer("weakkam", "max_iter", 2000usize, 1, 1_000_000)?;
    let interpolation = r.parsed(
        "weakkam",
        "interpolation",
        Interpolation::Linear,
        |_| Ok(()),
        |i| i.to_string(),
    )?;
    let sub_steps = match r.raw("weakkam", "sub_steps") {
        Some((v, line)) => {
            let s: usize = v
                .parse()
                .map_err(|e| ScenarioError::at(line, format!("[weakkam] sub_steps: {e}")))?;
            let need = crate::weakkam::action::min_sub_steps(tau);
            if s < need || s > 1000 {
                return Err(ScenarioError::at(
                    line,
                    format!("[weakkam] sub_steps = {s}: out of range [{need}, 1000]"),
                ));
            }
            Some(s)
        }
        None => None,
    };
    r.record(
        "weakkam",
        "sub_steps",
        sub_steps.map_or("auto".to_string(), |s| s.to_string()),
    );
    let window = match r.raw("weakkam", "window") {
        Some((v, line)) => {
            let w: f64 = v
                .parse()
                .map_err(|e| ScenarioError::at(line, format!("[weakkam] window: {e}")))?;
            if !(w > 0.0 && w <= 0.5) {
                return Err(ScenarioError::at(
                    line,
                    format!("[weakkam] window = {v}: out of range (0, 0.5]"),
                ));
            }
            Some(w)
        }
        None => None,
    };
    r.record("weakkam", "window", window.map_or("auto".to_string(), fmt_num));
    let richardson = r.parsed("weakkam", "richardson", true, |_| Ok(()), |b| b.to_string())?;
    let weakkam = WeakKamConfig {
        m: grid,
        tau,
        tol: wk_tol,
        max_iter,
        sub_steps,
        window,
        interpolation,
        eq_tol: None,
        richardson,
    };

    let barrier_t = r.real("barrier", "t", 10.0, 0.0, 10.0, true)?;
    let patch_radius = r.real("barrier", "patch_radius", 0.02, 0.0, 0.25, true)?;
    let barrier_bases = r.integer("barrier", "bases", 4usize, 0, 10_000)?;
    let barrier = BarrierConfig {
        green: green.clone(),
        ..BarrierConfig::default()
    };

    let radii = r.list("regularity", "radii", ConeConfig::default().radii, None)?;
    let radii_ok = radii.len() >= 3
        && radii.iter().all(|x| *x > 0.0 && *x <= 0.5)
        && radii.windows(2).all(|w| w[1] < w[0])
        && radii[0] / radii[radii.len() - 1] >= 100.0 - 1e-9;
    if !radii_ok {
        return Err(ScenarioError {
            line: r.line_of("regularity", "radii"),
            message: "[regularity] radii: need at least three decreasing radii in (0, 0.5] spanning two decades".into(),
        });
    }
    let drift_tol = r.real("regularity", "drift_tol", 0.05, 0.0, 1.0, true)?;
    let angle_tol = r.real("regularity", "angle_tol", 0.05, 0.0, 1.0, true)?;
    let samples = r.integer("regularity", "samples", 1000usize, 20, 1_000_000)?;
    let bases = r.integer("regularity", "bases", 100usize, 1, 100_000)?;
    let p0 = r.list("regularity", "p0", vec![0.0; n], Some(n))?;
    let invariant_ok = model.is_translation_invariant();
    let support =
        match r.raw("regularity", "support") {
            Some((v, line)) => match v.as_str() {
                "mather" => Support::Mather,
                "invariant" if invariant_ok => Support::Invariant,
                "invariant" => return Err(ScenarioError::at(
                    line,
                    format!(
                        "[regularity] support = invariant needs a model with invariant tori {{p = p0}}; {} has none",
                        model.name()
                    ),
                )),
                other => {
                    return Err(ScenarioError::at(
                        line,
                        format!("[regularity] support: unknown value `{other}` (invariant, mather)"),
                    ))
                }
            },
            None if invariant_ok => Support::Invariant,
            None => Support::Mather,
        };
    r.record("regularity", "support", support.as_str().to_string());
    let regularity = RegularityConfig {
        green: green.clone(),
        lyapunov: lyapunov.clone(),
        cone: ConeConfig {
            radii,
            drift_tol,
            ..ConeConfig::default()
        },
        angle_tol,
        ..RegularityConfig::default()
    };

    r.reject_unused()?;
    let mut echo = r.echo;
    echo.sort_by_key(|(s, _)| SECTIONS.iter().position(|x| x == s));
    Ok(Scenario {
        source: source.to_path_buf(),
        model,
        task,
        seed,
        output,
        point,
        flow_time,
        flow,
        green,
        monotonicity_times,
        lyapunov,
        weakkam,
        barrier,
        barrier_t,
        patch_radius,
        barrier_bases,
        regularity,
        support,
        p0,
        samples,
        bases,
        echo,
    })
}

/// Catalog lines for `list-models`.
pub fn model_listing() -> String {
    let mut s = String::new();
    for (name, description, defaults) in CATALOG {
        s.push_str(&format!("{name:<14} {description}\n"));
        if !defaults.is_empty() {
            let params: Vec<String> = defaults.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            s.push_str(&format!("{:<14} parameters: {}\n", "", params.join(", ")));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario_str(text, Path::new("test.ini"))
    }

    #[test]
    fn pendulum_weakkam() {
        let s = parse("[scenario]\nmodel = pendulum\ntask = weakkam\n\n[weakkam]\ngrid = 512\ntau = 0.2\n").unwrap();
        assert_eq!(s.model.name(), "pendulum");
        assert_eq!(s.task, Task::WeakKam);
        assert_eq!(s.weakkam.m, 512);
        assert_eq!(s.weakkam.tau, 0.2);
        assert_eq!(s.seed, 0);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse("[scenario]\nmodel = pendulum\ntask = weakkam\n[weakkam]\ngrid = -4\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("grid = -4: out of range"), "{}", e.message);
        let e = parse("[scenario]\nmodel = pendulum\ntask = weakkam\n[weakkam]\ngrid = 16\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("out of range"));
        let e = parse("[scenario]\nmodel = pendulum\ntask = flow\n[flow]\nstep = 0.01\n[flow]\n").unwrap_err();
        assert_eq!(e.line, Some(6));
        assert!(e.message.contains("duplicate section"));
        let e = parse("[scenario]\nmodel = pendulum\ntask = flow\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, Some(4));
        let e = parse("[scenario]\nmodel = pendulum\ntask = sing\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse("[scenario]\nmodel = cat\ntask = flow\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse("[scenario]\nmodel = mechanical-t2\ntask = flow\n[model]\na3 = 1\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        let e = parse("[scenario]\nmodel = pendulum\ntask = flow\n[point]\nq = 0, 1\n").unwrap_err();
        assert_eq!(e.line, Some(5));
    }

    #[test]
    fn defaults_are_echoed() {
        let s = parse("[scenario]\nmodel = free-rotor\ntask = c1-diagnostic\n[regularity]\np0 = 0.5\n").unwrap();
        assert_eq!(s.support, Support::Invariant);
        let reg = s.echo.iter().find(|(k, _)| k == "regularity").unwrap();
        assert!(reg.1.iter().any(|(k, v)| k == "p0" && v == "0.5"));
        assert!(s.echo.iter().any(|(k, _)| k == "weakkam"));
    }
}
