//! Reports: an INI-style text file plus CSV tables.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = concat!("greenkam ", env!("CARGO_PKG_VERSION"));

/// Verdicts that make `run` exit with status 1.
pub const FAILING_VERDICTS: [&str; 4] = ["INCONSISTENT", "INEQUALITY-VIOLATION", "VIOLATION", "FAIL"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: Vec<String>) -> Self {
        Table {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// Scenario echo, one entry per input section.
    pub input: Vec<(String, Vec<(String, String)>)>,
    pub sections: Vec<(String, Vec<(String, String)>)>,
    pub tables: Vec<Table>,
    /// `(check, verdict)` in the order they were produced.
    pub verdicts: Vec<(String, String)>,
    pub errors: Vec<String>,
    pub wall_time: f64,
}

impl Report {
    pub fn section(&mut self, name: &str) -> &mut Vec<(String, String)> {
        if let Some(i) = self.sections.iter().position(|(n, _)| n == name) {
            return &mut self.sections[i].1;
        }
        self.sections.push((name.to_string(), Vec::new()));
        &mut self.sections.last_mut().unwrap().1
    }

    pub fn put(&mut self, section: &str, key: &str, value: impl Field) {
        self.section(section).push((key.to_string(), value.field()));
    }

    pub fn verdict(&mut self, check: &str, verdict: impl ToString) {
        let v = verdict.to_string();
        self.put("verdicts", check, v.as_str());
        self.verdicts.push((check.to_string(), v));
    }

    pub fn error(&mut self, task: &str, message: impl ToString) {
        let m = message.to_string();
        self.put("errors", task, m.as_str());
        self.errors.push(format!("{task}: {m}"));
    }

    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            2
        } else if self
            .verdicts
            .iter()
            .any(|(_, v)| FAILING_VERDICTS.contains(&v.as_str()))
        {
            1
        } else {
            0
        }
    }

    pub fn status(&self) -> &'static str {
        match self.exit_code() {
            0 => "ok",
            1 => "violation",
            _ => "error",
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[report]\n");
        s.push_str(&format!("artifact = {ARTIFACT_VERSION}\n"));
        s.push_str(&format!("status = {}\n", self.status()));
        s.push_str(&format!("exit_code = {}\n", self.exit_code()));
        s.push_str(&format!("wall_time = {:.3}\n", self.wall_time));
        let tables: Vec<String> = self.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
        s.push_str(&format!("tables = {}\n", tables.join(", ")));
        for (name, entries) in self
            .input
            .iter()
            .map(|(n, e)| (format!("input.{n}"), e))
            .chain(self.sections.iter().map(|(n, e)| (n.clone(), e)))
        {
            s.push_str(&format!("\n[{name}]\n"));
            for (k, v) in entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    /// Writes `report.txt` and every table into `dir`, returning the file list.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let path = dir.join("report.txt");
        fs::write(&path, self.to_text())?;
        files.push(path);
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.to_csv())?;
            files.push(path);
        }
        Ok(files)
    }
}

/// Report text with the wall-time line removed, for reproducibility checks.
pub fn without_wall_time(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("wall_time = "))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e6)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Report values.
pub trait Field {
    fn field(&self) -> String;
}

impl Field for f64 {
    fn field(&self) -> String {
        fmt_num(*self)
    }
}

impl Field for &str {
    fn field(&self) -> String {
        self.to_string()
    }
}

impl Field for String {
    fn field(&self) -> String {
        self.clone()
    }
}

impl Field for &String {
    fn field(&self) -> String {
        (*self).clone()
    }
}

macro_rules! display_field {
    ($($t:ty),*) => {
        $(impl Field for $t {
            fn field(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_field!(usize, u32, u64, bool);

pub fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", ")
}

pub fn fmt_matrix(m: &nalgebra::DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<f64> = (0..m.ncols()).map(|j| m[(i, j)]).collect();
            format!("[{}]", fmt_vec(&r))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.5), "1.5");
        assert_eq!(fmt_num(4.5e-18), "4.5e-18");
        assert_eq!(fmt_num(-2.0e7), "-2e7");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        for x in [1.0 / 3.0, 6.283185307179586e-9, 123456.789] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn exit_codes() {
        let mut r = Report::default();
        r.verdict("thm2", "CONSISTENT");
        assert_eq!(r.exit_code(), 0);
        r.verdict("barrier", "VIOLATION");
        assert_eq!(r.exit_code(), 1);
        r.error("weakkam", "no convergence");
        assert_eq!(r.exit_code(), 2);
        assert!(r.to_text().contains("[errors]\nweakkam = no convergence\n"));
    }

    #[test]
    fn wall_time_is_the_only_volatile_line() {
        let mut a = Report::default();
        a.put("x", "y", 1.5);
        let mut b = a.clone();
        b.wall_time = 3.0;
        assert_ne!(a.to_text(), b.to_text());
        assert_eq!(without_wall_time(&a.to_text()), without_wall_time(&b.to_text()));
    }
}
