//! Row construction and output for `analyze` and `simulate`.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Result};
use ehaoi::closed_form::{compute_aux, mgf_closed, moments_closed, ClosedFormError};
use ehaoi::sim::{replicate, SimConfig};
use ehaoi::verify::rel_dev;
use ehaoi::{build_model, solver};
use rayon::prelude::*;
use serde::Serialize;

use crate::scenario::{Format, Point, Scenario};
use crate::svg::{LinePlot, Series};

pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeRow {
    pub rho: f64,
    pub beta: f64,
    #[serde(rename = "B")]
    pub battery: usize,
    pub mu: f64,
    pub discipline: &'static str,
    pub eh_mode: &'static str,
    pub k: String,
    pub solver_value: f64,
    pub closed_value: Option<f64>,
    pub rel_dev: Option<f64>,
    pub branch: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateRow {
    pub rho: f64,
    pub beta: f64,
    #[serde(rename = "B")]
    pub battery: usize,
    pub mu: f64,
    pub discipline: &'static str,
    pub eh_mode: &'static str,
    pub k: String,
    pub solver_value: f64,
    pub closed_value: Option<f64>,
    pub rel_dev: Option<f64>,
    pub branch: String,
    pub sim_value: f64,
    pub sim_stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub horizon: f64,
    pub reps: usize,
    pub seed: u64,
}

const SOLVER_ONLY: &str = "solver_only";
const DIVERGED: &str = "diverged";

fn mgf_label(s: f64) -> String {
    format!("mgf@{s}")
}

fn base(pt: &Point, k: String, solver_value: f64, closed: Option<(f64, String)>) -> AnalyzeRow {
    let p = pt.params;
    let (closed_value, branch) = match closed {
        Some((v, b)) => (Some(v), b),
        None => (None, SOLVER_ONLY.to_string()),
    };
    AnalyzeRow {
        rho: p.rho(),
        beta: p.beta(),
        battery: p.battery,
        mu: p.mu,
        discipline: pt.discipline.tag(),
        eh_mode: pt.eh_mode.tag(),
        k,
        solver_value,
        closed_value,
        rel_dev: closed_value.map(|c| rel_dev(solver_value, c)),
        branch,
    }
}

fn closed_moment(pt: &Point, k: usize) -> Result<Option<(f64, String)>> {
    match moments_closed(&pt.params, pt.discipline, pt.eh_mode, k) {
        Ok(r) => Ok(Some((r.value, r.branch.tag().to_string()))),
        Err(ClosedFormError::UnsupportedB { .. } | ClosedFormError::UnsupportedOrder(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn analyze_point(pt: &Point, orders: &[usize], s_grid: &[f64]) -> Result<Vec<AnalyzeRow>> {
    let model = build_model(pt.params, pt.discipline, pt.eh_mode);
    let max_order = orders.iter().copied().max().unwrap_or(1);
    let solved = solver::solve(&model, max_order, s_grid)?;
    let mut rows = Vec::new();
    for &k in orders {
        rows.push(base(pt, k.to_string(), solved.aoi_moments[k - 1], closed_moment(pt, k)?));
    }
    let aux = compute_aux(&pt.params, pt.discipline, pt.eh_mode)?;
    for sample in &solved.mgf {
        let label = mgf_label(sample.s);
        if !sample.converged {
            let mut row = base(pt, label, f64::INFINITY, None);
            row.branch = DIVERGED.to_string();
            rows.push(row);
            continue;
        }
        let s_bar = pt.params.normalize_s(sample.s);
        let closed = mgf_closed(&pt.params, pt.discipline, pt.eh_mode, s_bar, &aux)
            .ok()
            .map(|r| (r.value, r.branch.tag().to_string()));
        rows.push(base(pt, label, sample.value, closed));
    }
    Ok(rows)
}

pub fn analyze(sc: &Scenario) -> Result<Vec<AnalyzeRow>> {
    let per_point: Vec<Result<Vec<AnalyzeRow>>> =
        sc.points.par_iter().map(|pt| analyze_point(pt, &sc.orders, &sc.s_grid)).collect();
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn simulate(sc: &Scenario) -> Result<Vec<SimulateRow>> {
    if let Some(k) = sc.orders.iter().find(|&&k| k > 2) {
        bail!("simulate measures orders 1 and 2 only, got k={k}");
    }
    let per_point: Vec<Result<Vec<SimulateRow>>> = sc
        .points
        .par_iter()
        .map(|pt| {
            let analytic = analyze_point(pt, &sc.orders, &sc.s_grid)?;
            let cfg = SimConfig {
                horizon: sc.horizon,
                warmup: sc.warmup,
                seed: sc.seed,
                mgf_points: sc.s_grid.clone(),
                ..SimConfig::new(pt.params, pt.discipline, pt.eh_mode)
            };
            let sim = replicate(&cfg, sc.reps)?;
            let estimates = sc
                .orders
                .iter()
                .map(|&k| if k == 1 { sim.mean_age } else { sim.mean_age_sq })
                .chain(sim.empirical_mgf.iter().map(|(_, e)| *e));
            Ok(analytic
                .into_iter()
                .zip(estimates)
                .map(|(a, est)| {
                    let (ci_lo, ci_hi) = est.confidence_interval(CI_LEVEL);
                    SimulateRow {
                        rho: a.rho,
                        beta: a.beta,
                        battery: a.battery,
                        mu: a.mu,
                        discipline: a.discipline,
                        eh_mode: a.eh_mode,
                        k: a.k,
                        solver_value: a.solver_value,
                        closed_value: a.closed_value,
                        rel_dev: a.rel_dev,
                        branch: a.branch,
                        sim_value: est.value,
                        sim_stderr: est.stderr,
                        ci_lo,
                        ci_hi,
                        horizon: sc.horizon,
                        reps: sc.reps,
                        seed: sc.seed,
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Largest deviation above the tolerance, if any.
pub fn strict_breach<'a>(devs: impl Iterator<Item = Option<f64>> + 'a, tol: f64) -> Option<f64> {
    devs.flatten().filter(|d| !(*d <= tol)).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))))
}

/// The columns a plot needs from either row type.
pub trait PlotRow {
    fn key(&self) -> String;
    fn x(&self) -> f64;
    fn y(&self) -> f64;
}

impl PlotRow for AnalyzeRow {
    fn key(&self) -> String {
        format!("{}/{} B={} beta={} k={}", self.discipline, self.eh_mode, self.battery, self.beta, self.k)
    }
    fn x(&self) -> f64 {
        self.rho
    }
    fn y(&self) -> f64 {
        self.solver_value
    }
}

impl PlotRow for SimulateRow {
    fn key(&self) -> String {
        format!("{}/{} B={} beta={} k={} sim", self.discipline, self.eh_mode, self.battery, self.beta, self.k)
    }
    fn x(&self) -> f64 {
        self.rho
    }
    fn y(&self) -> f64 {
        self.sim_value
    }
}

pub fn write_rows<R: Serialize + PlotRow>(rows: &[R], format: Format, title: &str, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            writeln!(out)?;
        }
        Format::Svg => {
            let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for r in rows {
                groups.entry(r.key()).or_default().push((r.x(), r.y()));
            }
            let plot = LinePlot {
                title: title.to_string(),
                x_label: "rho".into(),
                y_label: "value".into(),
                series: groups.into_iter().map(|(label, points)| Series { label, points }).collect(),
            };
            out.write_all(plot.render().as_bytes())?;
        }
    }
    Ok(())
}
