//! Plain-text design artifact.
//!
//! ```text
//! ultralocal-design 1
//! mode mixed-hinf 2.0000000000000000e1
//! epsilon 1.0000000000000000e-3
//! lambda_star 1.3402147858972520e0
//! gamma_star none
//! ...
//! matrix E 12 2
//! <one row per line, space separated>
//! ```
//!
//! Scalars and entries are written with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fmt::Write as _;

use ultralocal::matlib::Mat;
use ultralocal::synth::{Certificates, DesignMode, ObserverDesign};

const MAGIC: &str = "ultralocal-design 1";

#[derive(Debug, thiserror::Error)]
#[error("design artifact line {line}: {message}")]
pub struct ArtifactError {
    pub line: usize,
    pub message: String,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), num)
}

pub fn write_design(design: &ObserverDesign) -> String {
    let c = &design.certificates;
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    let mode = match c.mode {
        None => "none".to_string(),
        Some(DesignMode::MixedHinf { gamma_max }) => format!("mixed-hinf {}", num(gamma_max)),
        Some(DesignMode::MixedH2 { lambda_max }) => format!("mixed-h2 {}", num(lambda_max)),
        Some(m) => m.name().to_string(),
    };
    writeln!(out, "mode {mode}").unwrap();
    for (key, v) in [
        ("epsilon", c.epsilon),
        ("lambda_star", c.lambda_star),
        ("gamma_star", c.gamma_star),
        ("iss_gain_bound", c.iss_gain_bound),
    ] {
        writeln!(out, "{key} {}", opt(v)).unwrap();
    }
    writeln!(out, "margin {}", num(c.margin)).unwrap();
    writeln!(out, "solver_residual {}", num(c.solver_residual)).unwrap();
    writeln!(out, "solver_iterations {}", c.solver_iterations).unwrap();
    for (name, m) in [
        ("E", &design.e),
        ("K", &design.k),
        ("N", &design.n),
        ("G", &design.g),
        ("L", &design.l),
        ("M", &design.m),
        ("P", &c.p),
    ] {
        writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols()).unwrap();
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| num(m[(i, j)])).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> ArtifactError {
        ArtifactError {
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str, ArtifactError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>, ArtifactError> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.collect())
    }

    fn float(&self, s: &str) -> Result<f64, ArtifactError> {
        s.parse().map_err(|_| self.err(format!("not a number: `{s}`")))
    }

    fn opt(&mut self, key: &str) -> Result<Option<f64>, ArtifactError> {
        match self.keyed(key)?.as_slice() {
            ["none"] => Ok(None),
            [v] => self.float(v).map(Some),
            _ => Err(self.err(format!("`{key}` takes one value"))),
        }
    }

    fn scalar(&mut self, key: &str) -> Result<f64, ArtifactError> {
        self.opt(key)?.ok_or_else(|| self.err(format!("`{key}` is required")))
    }

    fn matrix(&mut self, name: &str) -> Result<Mat, ArtifactError> {
        let head = self.keyed("matrix")?;
        let [got, r, c] = head.as_slice() else {
            return Err(self.err("expected `matrix NAME ROWS COLS`"));
        };
        if *got != name {
            return Err(self.err(format!("expected matrix {name}, found {got}")));
        }
        let size = |s: &str| s.parse::<usize>().map_err(|_| self.err(format!("bad size `{s}`")));
        let (rows, cols) = (size(r)?, size(c)?);
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            let l = self.next()?;
            let vals: Vec<&str> = l.split_whitespace().collect();
            if vals.len() != cols {
                return Err(self.err(format!("row has {} entries, expected {cols}", vals.len())));
            }
            for (j, v) in vals.iter().enumerate() {
                m[(i, j)] = self.float(v)?;
            }
        }
        Ok(m)
    }
}

pub fn read_design(text: &str) -> Result<ObserverDesign, ArtifactError> {
    let mut ls = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if ls.next()? != MAGIC {
        return Err(ls.err("not a design artifact"));
    }
    let mode_parts = ls.keyed("mode")?;
    let mode = match mode_parts.as_slice() {
        ["none"] => None,
        ["iss"] => Some(DesignMode::Iss),
        ["hinf"] => Some(DesignMode::Hinf),
        ["h2"] => Some(DesignMode::H2),
        ["mixed-hinf", v] => Some(DesignMode::MixedHinf { gamma_max: ls.float(v)? }),
        ["mixed-h2", v] => Some(DesignMode::MixedH2 { lambda_max: ls.float(v)? }),
        _ => return Err(ls.err("unknown mode")),
    };
    let epsilon = ls.opt("epsilon")?;
    let lambda_star = ls.opt("lambda_star")?;
    let gamma_star = ls.opt("gamma_star")?;
    let iss_gain_bound = ls.opt("iss_gain_bound")?;
    let margin = ls.scalar("margin")?;
    let solver_residual = ls.scalar("solver_residual")?;
    let iters = ls.keyed("solver_iterations")?;
    let solver_iterations = match iters.as_slice() {
        [v] => v.parse().map_err(|_| ls.err("bad iteration count"))?,
        _ => return Err(ls.err("`solver_iterations` takes one value")),
    };
    let e = ls.matrix("E")?;
    let k = ls.matrix("K")?;
    let n = ls.matrix("N")?;
    let g = ls.matrix("G")?;
    let l = ls.matrix("L")?;
    let m = ls.matrix("M")?;
    let p = ls.matrix("P")?;
    Ok(ObserverDesign {
        e,
        k,
        n,
        g,
        l,
        m,
        certificates: Certificates {
            p,
            lambda_star,
            gamma_star,
            iss_gain_bound,
            epsilon,
            mode,
            margin,
            solver_residual,
            solver_iterations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ultralocal::augment::{build_augmented, UltraLocalOrders};
    use ultralocal::model::transform;
    use ultralocal::sim::{manipulator_plant, ManipulatorParams};
    use ultralocal::synth::{solve, SynthOptions};

    #[test]
    fn round_trip_is_bit_exact() {
        let tp = transform(manipulator_plant(&ManipulatorParams::default()).unwrap(), 1e-10).unwrap();
        let aug = build_augmented(&tp, UltraLocalOrders::uniform(4).unwrap()).unwrap();
        let d = solve(&aug, DesignMode::MixedHinf { gamma_max: 20.0 }, &SynthOptions::default()).unwrap();
        let text = write_design(&d);
        let back = read_design(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(write_design(&back), text);
    }

    #[test]
    fn awkward_values_survive() {
        for v in [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 1e308, -2.5e-300, f64::EPSILON] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn truncated_file_reports_its_line() {
        let err = read_design("ultralocal-design 1\nmode iss\nepsilon 1e-3\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(read_design("something else").is_err());
    }
}
