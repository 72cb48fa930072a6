//! Run configuration: a flat `key = value` text format with dotted keys.
//!
//! ```text
//! model.name = torus3
//! model.n = 1
//! quadrature.resolution = 32
//! fd.step = 1e-5
//! tol.conf = 1e-5
//! output.format = csv
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Floats are written
//! in shortest round-trip form, so serialization is lossless.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{ContactModel, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::ConfigInvalid(format!("output.format must be csv or json, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub model_n: usize,
    pub resolution: usize,
    pub fd_step: f64,
    pub fd_bracket_step: f64,
    pub dt: f64,
    pub tol: Tolerances,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub output_path: String,
    pub output_format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "torus3".into(),
            model_n: 1,
            resolution: 32,
            fd_step: 1e-5,
            fd_bracket_step: 1e-4,
            dt: 1e-3,
            tol: Tolerances::default(),
            seed: 0,
            threads: 0,
            output_path: String::new(),
            output_format: OutputFormat::Csv,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::ConfigInvalid(format!("cannot parse `{v}` for {key}")))
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "model.name" => self.model = v.to_string(),
            "model.n" => self.model_n = parse_num(key, v)?,
            "quadrature.resolution" => self.resolution = parse_num(key, v)?,
            "fd.step" => self.fd_step = parse_num(key, v)?,
            "fd.bracket_step" => self.fd_bracket_step = parse_num(key, v)?,
            "integ.dt" => self.dt = parse_num(key, v)?,
            "integ.scheme" => {
                if v != "rk4" {
                    return Err(Error::ConfigInvalid(format!("integ.scheme must be rk4, got `{v}`")));
                }
            }
            "tol.lin" => self.tol.lin = parse_num(key, v)?,
            "tol.lin_scaled" => self.tol.lin_scaled = parse_num(key, v)?,
            "tol.conf" => self.tol.conf = parse_num(key, v)?,
            "tol.newton" => self.tol.newton = parse_num(key, v)?,
            "tol.gram" => self.tol.gram = parse_num(key, v)?,
            "tol.degeneracy" => self.tol.degeneracy = parse_num(key, v)?,
            "tol.density_floor" => self.tol.density_floor = parse_num(key, v)?,
            "tol.cond" => self.tol.cond = parse_num(key, v)?,
            "tol.inv" => self.tol.inv = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            "output.path" => self.output_path = v.to_string(),
            "output.format" => self.output_format = v.parse()?,
            _ => return Err(Error::ConfigInvalid(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs in the fixed key order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.tol;
        vec![
            ("model.name", self.model.clone()),
            ("model.n", self.model_n.to_string()),
            ("quadrature.resolution", self.resolution.to_string()),
            ("fd.step", fmt_f64(self.fd_step)),
            ("fd.bracket_step", fmt_f64(self.fd_bracket_step)),
            ("integ.dt", fmt_f64(self.dt)),
            ("integ.scheme", "rk4".into()),
            ("tol.lin", fmt_f64(t.lin)),
            ("tol.lin_scaled", fmt_f64(t.lin_scaled)),
            ("tol.conf", fmt_f64(t.conf)),
            ("tol.newton", fmt_f64(t.newton)),
            ("tol.gram", fmt_f64(t.gram)),
            ("tol.degeneracy", fmt_f64(t.degeneracy)),
            ("tol.density_floor", fmt_f64(t.density_floor)),
            ("tol.cond", fmt_f64(t.cond)),
            ("tol.inv", fmt_f64(t.inv)),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("output.path", self.output_path.clone()),
            ("output.format", self.output_format.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parses on top of the defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tol;
        let positive = [
            ("fd.step", self.fd_step),
            ("fd.bracket_step", self.fd_bracket_step),
            ("integ.dt", self.dt),
            ("tol.lin", t.lin),
            ("tol.lin_scaled", t.lin_scaled),
            ("tol.conf", t.conf),
            ("tol.newton", t.newton),
            ("tol.gram", t.gram),
            ("tol.degeneracy", t.degeneracy),
            ("tol.density_floor", t.density_floor),
            ("tol.cond", t.cond),
            ("tol.inv", t.inv),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{k} must be positive and finite, got {v}")));
            }
        }
        if self.resolution < 16 {
            return Err(Error::ConfigInvalid(format!(
                "quadrature.resolution must be at least 16, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    /// The configured catalog model with its steps and tolerances.
    pub fn build_model(&self) -> Result<Arc<ContactModel>> {
        let m = ContactModel::catalog(&self.model, self.model_n)?
            .with_fd_steps(self.fd_step, self.fd_bracket_step)
            .with_tolerances(self.tol.clone());
        Ok(Arc::new(m))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("tol.conf = -1"), Err(Error::ConfigInvalid(_))));
        assert!(matches!(RunConfig::parse("quadrature.resolution = 8"), Err(Error::ConfigInvalid(_))));
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::ConfigInvalid(_))));
        assert!(matches!(RunConfig::parse("seed"), Err(Error::ConfigInvalid(_))));
        assert!(matches!(RunConfig::parse("output.format = xml"), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# run\n\nseed = 7\nmodel.n = 2\nmodel.name = torus_2n1\n").unwrap();
        assert_eq!((c.seed, c.model_n, c.model.as_str()), (7, 2, "torus_2n1"));
        assert_eq!(c.build_model().unwrap().dim(), 5);
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            res in 16usize..200,
            step in 1e-9f64..1e-2,
            dt in 1e-6f64..1.0,
            conf in 1e-14f64..1.0,
            seed in any::<u64>(),
            threads in 0usize..64,
            json in any::<bool>(),
            path in "[a-z0-9_./]{0,12}",
        ) {
            let mut c = RunConfig {
                resolution: res,
                fd_step: step,
                dt,
                seed,
                threads,
                output_path: path,
                output_format: if json { OutputFormat::Json } else { OutputFormat::Csv },
                ..RunConfig::default()
            };
            c.tol.conf = conf;
            prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        }
    }
}
