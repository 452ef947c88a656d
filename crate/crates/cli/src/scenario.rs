//! Run description shared by `analyze` and `simulate`: defaults, then the JSON file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use ehaoi::{Discipline, EhMode, SystemParams};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// A scalar, an explicit list, or an inclusive `start..=stop` range with a step.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    One(f64),
    Many(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Axis {
    /// Parses `0.5,1,2` or `0.5:2:0.5`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.contains(':') {
            let parts: Vec<&str> = text.split(':').collect();
            ensure!(parts.len() == 3, "range `{text}` must look like start:stop:step");
            let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in `{text}`"));
            return Ok(Axis::Range { start: num(parts[0])?, stop: num(parts[1])?, step: num(parts[2])? });
        }
        let values = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Axis::Many(values))
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let out = match self {
            Axis::One(v) => vec![*v],
            Axis::Many(v) => v.clone(),
            Axis::Range { start, stop, step } => {
                ensure!(*step > 0.0 && step.is_finite(), "range step must be positive");
                ensure!(start <= stop, "range start {start} exceeds stop {stop}");
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                ensure!(n <= 100_000, "range produces {n} points");
                // Rounding keeps 0.1-style steps from printing as 0.30000000000000004.
                (0..n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
            }
        };
        ensure!(!out.is_empty(), "empty sweep axis");
        Ok(out)
    }
}

fn positive_integers(axis: &Axis, name: &str) -> Result<Vec<usize>> {
    axis.values()?
        .into_iter()
        .map(|v| {
            ensure!(v >= 1.0 && v.fract() == 0.0 && v < 1e6, "{name} must be a positive integer, got {v}");
            Ok(v as usize)
        })
        .collect()
}

fn tags<T: std::str::FromStr<Err = ehaoi::ParamError>>(list: &[String], all: &[T]) -> Result<Vec<T>>
where
    T: Copy,
{
    if list.iter().any(|s| s == "all") {
        return Ok(all.to_vec());
    }
    ensure!(!list.is_empty(), "empty tag list");
    list.iter().map(|s| s.parse::<T>().map_err(Into::into)).collect()
}

pub fn split_tags(text: &str) -> Vec<String> {
    text.split(',').map(|s| s.trim().to_ascii_lowercase()).filter(|s| !s.is_empty()).collect()
}

/// Scenario file contents. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub rho: Option<Axis>,
    pub beta: Option<Axis>,
    pub mu: Option<f64>,
    pub battery: Option<Axis>,
    pub discipline: Option<Vec<String>>,
    pub eh_mode: Option<Vec<String>>,
    pub k: Option<Axis>,
    pub s_grid: Option<Axis>,
    pub horizon: Option<f64>,
    pub warmup: Option<f64>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub strict: Option<bool>,
    pub tolerance: Option<f64>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: ScenarioFile) -> Self {
        Self {
            rho: other.rho.or(self.rho),
            beta: other.beta.or(self.beta),
            mu: other.mu.or(self.mu),
            battery: other.battery.or(self.battery),
            discipline: other.discipline.or(self.discipline),
            eh_mode: other.eh_mode.or(self.eh_mode),
            k: other.k.or(self.k),
            s_grid: other.s_grid.or(self.s_grid),
            horizon: other.horizon.or(self.horizon),
            warmup: other.warmup.or(self.warmup),
            seed: other.seed.or(self.seed),
            reps: other.reps.or(self.reps),
            out: other.out.or(self.out),
            format: other.format.or(self.format),
            strict: other.strict.or(self.strict),
            tolerance: other.tolerance.or(self.tolerance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub params: SystemParams,
    pub discipline: Discipline,
    pub eh_mode: EhMode,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub points: Vec<Point>,
    pub orders: Vec<usize>,
    pub s_grid: Vec<f64>,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub reps: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub strict: bool,
    pub tolerance: f64,
}

pub const DEFAULT_SEED: u64 = 1;
pub const STRICT_TOL: f64 = 1e-9;

impl Scenario {
    pub fn resolve(file: ScenarioFile) -> Result<Self> {
        let axis = |a: Option<Axis>, default: f64| a.unwrap_or(Axis::One(default)).values();
        let rhos = axis(file.rho, 1.0).context("rho")?;
        let betas = axis(file.beta, 1.0).context("beta")?;
        let batteries = positive_integers(&file.battery.unwrap_or(Axis::One(1.0)), "battery")?;
        let orders = positive_integers(&file.k.unwrap_or(Axis::Many(vec![1.0, 2.0])), "k")?;
        let s_grid = match file.s_grid {
            Some(a) => a.values().context("s-grid")?,
            None => Vec::new(),
        };
        ensure!(s_grid.iter().all(|s| s.is_finite()), "s-grid values must be finite");
        let mu = file.mu.unwrap_or(1.0);
        let disciplines = tags(&file.discipline.unwrap_or_else(|| vec!["np".into()]), &Discipline::ALL)?;
        let modes = tags(&file.eh_mode.unwrap_or_else(|| vec!["empty".into()]), &EhMode::ALL)?;

        let mut points = Vec::new();
        for &d in &disciplines {
            for &m in &modes {
                for &b in &batteries {
                    for &beta in &betas {
                        for &rho in &rhos {
                            let params = SystemParams::from_utilization(rho, beta, mu, b)?;
                            points.push(Point { params, discipline: d, eh_mode: m });
                        }
                    }
                }
            }
        }

        let horizon = file.horizon.unwrap_or(1e5);
        let warmup = file.warmup.unwrap_or(1e3);
        if !(warmup >= 0.0 && horizon > warmup && horizon.is_finite()) {
            bail!("horizon ({horizon}) must exceed warmup ({warmup}) and warmup must be nonnegative");
        }
        let reps = file.reps.unwrap_or(10);
        ensure!(reps >= 1, "reps must be at least 1");
        let tolerance = file.tolerance.unwrap_or(STRICT_TOL);
        ensure!(tolerance >= 0.0, "tolerance must be nonnegative");

        Ok(Self {
            points,
            orders,
            s_grid,
            horizon,
            warmup,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            reps,
            out: file.out,
            format: file.format.unwrap_or(Format::Csv),
            strict: file.strict.unwrap_or(false),
            tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_ranges() {
        assert_eq!(Axis::parse("0.5, 1,2").unwrap().values().unwrap(), vec![0.5, 1.0, 2.0]);
        assert_eq!(Axis::parse("0.1:0.5:0.1").unwrap().values().unwrap(), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert!(Axis::parse("1:0:1").unwrap().values().is_err());
        assert!(Axis::parse("").unwrap().values().is_err());
        assert!(Axis::parse("a,b").is_err());
    }

    #[test]
    fn file_fields_accept_scalars_lists_and_ranges() {
        let f: ScenarioFile = serde_json::from_str(
            r#"{"rho": {"start": 0.5, "stop": 1.5, "step": 0.5}, "beta": 2, "battery": [1, 3], "discipline": ["ps"]}"#,
        )
        .unwrap();
        let s = Scenario::resolve(f).unwrap();
        assert_eq!(s.points.len(), 6);
        assert!(s.points.iter().all(|p| p.discipline == Discipline::LcfsPs));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |json: &str| Scenario::resolve(serde_json::from_str(json).unwrap()).is_err();
        assert!(bad(r#"{"rho": -1}"#));
        assert!(bad(r#"{"battery": 1.5}"#));
        assert!(bad(r#"{"k": 0}"#));
        assert!(bad(r#"{"discipline": ["fifo"]}"#));
        assert!(bad(r#"{"horizon": 10, "warmup": 20}"#));
        assert!(serde_json::from_str::<ScenarioFile>(r#"{"nope": 1}"#).is_err());
    }
}
