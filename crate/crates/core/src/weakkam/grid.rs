//! Scalar functions on the uniform grid of `T^n`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    /// Piecewise linear; on `T^2` linear on the triangles cut by the diagonal
    /// `(i, j)–(i+1, j+1)` of every cell.
    Linear,
    /// Periodic Catmull–Rom cubic, tensorised on `T^2`.
    CubicPeriodic,
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpolation::Linear => "linear",
            Interpolation::CubicPeriodic => "cubic-periodic",
        })
    }
}

impl FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "cubic-periodic" => Ok(Interpolation::CubicPeriodic),
            other => Err(format!("unknown interpolation `{other}` (linear, cubic-periodic)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("malformed grid file: {0}")]
    Format(String),
}

/// Values at the nodes `k/m`, stored row-major (`index = i0·m + i1`).
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub n: usize,
    pub m: usize,
    pub values: Vec<f64>,
    pub interpolation: Interpolation,
}

impl GridFunction {
    pub fn constant(n: usize, m: usize, value: f64, interpolation: Interpolation) -> Self {
        assert!(n == 1 || n == 2, "grids live on T^1 or T^2");
        assert!(m >= 4, "grid too coarse");
        GridFunction {
            n,
            m,
            values: vec![value; m.pow(n as u32)],
            interpolation,
        }
    }

    pub fn from_fn(n: usize, m: usize, interpolation: Interpolation, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut g = Self::constant(n, m, 0.0, interpolation);
        for i in 0..g.len() {
            let q = g.node(i);
            g.values[i] = f(&q);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        if self.n == 1 {
            [i, 0]
        } else {
            [i / self.m, i % self.m]
        }
    }

    /// Index of the node at (wrapped) integer coordinates.
    pub fn index_of(&self, k: [i64; 2]) -> usize {
        let m = self.m as i64;
        let a = k[0].rem_euclid(m) as usize;
        if self.n == 1 {
            a
        } else {
            a * self.m + k[1].rem_euclid(m) as usize
        }
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        let h = self.spacing();
        let k = self.multi_index(i);
        (0..self.n).map(|d| k[d] as f64 * h).collect()
    }

    /// Value at the node shifted from `i` by the integer offset `o`.
    pub fn shifted(&self, i: usize, o: [i64; 2]) -> f64 {
        let k = self.multi_index(i);
        self.values[self.index_of([k[0] as i64 + o[0], k[1] as i64 + o[1]])]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Interpolated value at an arbitrary (lifted) point.
    pub fn eval(&self, q: &[f64]) -> f64 {
        let m = self.m as f64;
        let mut base = [0i64; 2];
        let mut frac = [0.0; 2];
        for d in 0..self.n {
            let x = q[d] * m;
            let f = x.floor();
            base[d] = f as i64;
            frac[d] = x - f;
        }
        let at = |a: i64, b: i64| self.values[self.index_of([base[0] + a, base[1] + b])];
        match (self.interpolation, self.n) {
            (Interpolation::Linear, 1) => (1.0 - frac[0]) * at(0, 0) + frac[0] * at(1, 0),
            (Interpolation::Linear, _) => {
                let (s, r) = (frac[0], frac[1]);
                let f00 = at(0, 0);
                let f11 = at(1, 1);
                if s >= r {
                    let f10 = at(1, 0);
                    f00 + s * (f10 - f00) + r * (f11 - f10)
                } else {
                    let f01 = at(0, 1);
                    f00 + r * (f01 - f00) + s * (f11 - f01)
                }
            }
            (Interpolation::CubicPeriodic, 1) => {
                let w = catmull_rom(frac[0]);
                (0..4).map(|k| w[k] * at(k as i64 - 1, 0)).sum()
            }
            (Interpolation::CubicPeriodic, _) => {
                let wa = catmull_rom(frac[0]);
                let wb = catmull_rom(frac[1]);
                let mut total = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        total += wa[a] * wb[b] * at(a as i64 - 1, b as i64 - 1);
                    }
                }
                total
            }
        }
    }

    /// Structured text: a header line `grid n=<n> m=<m> interpolation=<rule>`
    /// followed by one value per line in row-major order.
    pub fn to_text(&self) -> String {
        let mut s = format!("grid n={} m={} interpolation={}\n", self.n, self.m, self.interpolation);
        for v in &self.values {
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| GridError::Format("empty input".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("grid") {
            return Err(GridError::Format("missing `grid` header".into()));
        }
        let mut n = None;
        let mut m = None;
        let mut interp = None;
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| GridError::Format(format!("bad header field `{f}`")))?;
            match k {
                "n" => n = v.parse::<usize>().ok(),
                "m" => m = v.parse::<usize>().ok(),
                "interpolation" => interp = v.parse::<Interpolation>().ok(),
                _ => return Err(GridError::Format(format!("unknown header field `{k}`"))),
            }
        }
        let (n, m, interpolation) = match (n, m, interp) {
            (Some(n @ 1..=2), Some(m), Some(i)) if m >= 4 => (n, m, i),
            _ => return Err(GridError::Format("incomplete or invalid header".into())),
        };
        let values: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| GridError::Format(format!("bad value `{l}`")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != m.pow(n as u32) {
            return Err(GridError::Format(format!(
                "expected {} values, found {}",
                m.pow(n as u32),
                values.len()
            )));
        }
        Ok(GridFunction {
            n,
            m,
            values,
            interpolation,
        })
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}
