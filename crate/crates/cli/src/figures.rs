//! Curve data behind the four result figures: `fig5` verifies NP and PS, `fig6` sweeps the
//! battery size, `fig7` verifies PW including its battery-dependent limit, and `fig8`
//! compares the disciplines.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ehaoi::closed_form::{limits_beta_inf, moments_closed, std_dev};
use ehaoi::{build_model, solver, Discipline, EhMode, SystemParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::svg::{LinePlot, Series};

pub const FIGURES: [&str; 4] = ["fig5", "fig6", "fig7", "fig8"];

#[derive(Debug, Clone, Serialize)]
pub struct FigureRow {
    pub figure: &'static str,
    pub panel: &'static str,
    pub discipline: &'static str,
    pub eh_mode: &'static str,
    #[serde(rename = "B")]
    pub battery: usize,
    /// `inf` marks the large-harvest-rate limit curves.
    pub beta: f64,
    pub rho: f64,
    pub curve: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
enum XAxis {
    Rho,
    Battery,
}

struct Panel {
    id: &'static str,
    title: String,
    x: XAxis,
    jobs: Vec<Job>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    d: Discipline,
    m: EhMode,
    battery: usize,
    beta: f64,
    rho: f64,
    curve: Curve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Curve {
    Closed(usize),
    Solver(usize),
    Limit(usize),
    Sigma,
}

impl Curve {
    fn tag(self) -> &'static str {
        match self {
            Curve::Closed(1) => "closed_k1",
            Curve::Closed(_) => "closed_k2",
            Curve::Solver(1) => "solver_k1",
            Curve::Solver(_) => "solver_k2",
            Curve::Limit(1) => "limit_k1",
            Curve::Limit(_) => "limit_k2",
            Curve::Sigma => "sigma",
        }
    }
}

fn rho_grid() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 10.0).collect()
}

fn verification_panel(
    id: &'static str,
    d: Discipline,
    m: EhMode,
    battery: usize,
    betas: &[f64],
) -> Panel {
    let mut jobs = Vec::new();
    for &beta in betas {
        for rho in rho_grid() {
            for curve in [Curve::Closed(1), Curve::Closed(2), Curve::Solver(1), Curve::Solver(2)] {
                jobs.push(Job { d, m, battery, beta, rho, curve });
            }
        }
    }
    for rho in rho_grid() {
        for curve in [Curve::Limit(1), Curve::Limit(2)] {
            jobs.push(Job { d, m, battery, beta: f64::INFINITY, rho, curve });
        }
    }
    Panel { id, title: format!("{d}, {m}, B={battery}"), x: XAxis::Rho, jobs }
}

fn panels(which: &str) -> Result<Vec<Panel>> {
    use Discipline::*;
    use EhMode::*;
    let betas = [0.5, 1.0, 2.0, 50.0];
    Ok(match which {
        "fig5" => vec![
            verification_panel("a", LcfsNp, WhenEmpty, 1, &betas),
            verification_panel("b", LcfsNp, WhenEmpty, 2, &betas),
            verification_panel("c", LcfsNp, Anytime, 2, &betas),
            verification_panel("d", LcfsPs, WhenEmpty, 1, &betas),
            verification_panel("e", LcfsPs, WhenEmpty, 2, &betas),
            verification_panel("f", LcfsPs, Anytime, 2, &betas),
        ],
        "fig7" => {
            let mut sweep = Vec::new();
            for rho in [0.5, 1.0, 2.0] {
                for battery in 1..=10 {
                    for curve in [Curve::Closed(1), Curve::Closed(2)] {
                        sweep.push(Job { d: LcfsPw, m: WhenEmpty, battery, beta: 50.0, rho, curve });
                    }
                    for curve in [Curve::Limit(1), Curve::Limit(2)] {
                        sweep.push(Job { d: LcfsPw, m: WhenEmpty, battery, beta: f64::INFINITY, rho, curve });
                    }
                }
            }
            vec![
                verification_panel("a", LcfsPw, WhenEmpty, 2, &betas),
                verification_panel("b", LcfsPw, Anytime, 2, &betas),
                Panel { id: "c", title: "pw, empty, limit vs B".into(), x: XAxis::Battery, jobs: sweep },
            ]
        }
        "fig6" => [("a", LcfsNp), ("b", LcfsPs), ("c", LcfsPw)]
            .into_iter()
            .map(|(id, d)| {
                let mut jobs = Vec::new();
                for battery in [1, 2, 3, 5, 10] {
                    for rho in rho_grid() {
                        for curve in [Curve::Closed(1), Curve::Closed(2)] {
                            jobs.push(Job { d, m: WhenEmpty, battery, beta: 1.5, rho, curve });
                        }
                    }
                }
                Panel { id, title: format!("{d}, empty, beta=1.5"), x: XAxis::Rho, jobs }
            })
            .collect(),
        "fig8" => [("a", WhenEmpty, 0.5), ("b", WhenEmpty, 1.0), ("c", WhenEmpty, 50.0), ("d", Anytime, 0.5), ("e", Anytime, 1.0), ("f", Anytime, 50.0)]
            .into_iter()
            .map(|(id, m, beta)| {
                let mut jobs = Vec::new();
                for d in Discipline::ALL {
                    for rho in rho_grid() {
                        for curve in [Curve::Closed(1), Curve::Closed(2), Curve::Sigma] {
                            jobs.push(Job { d, m, battery: 2, beta, rho, curve });
                        }
                    }
                }
                Panel { id, title: format!("{m}, B=2, beta={beta}"), x: XAxis::Rho, jobs }
            })
            .collect(),
        other => bail!("unknown figure `{other}` (expected one of {})", FIGURES.join(", ")),
    })
}

fn evaluate(job: &Job, mu: f64) -> Result<f64> {
    // Limit curves only need a finite placeholder rate.
    let beta = if job.beta.is_finite() { job.beta } else { 1.0 };
    let p = SystemParams::from_utilization(job.rho, beta, mu, job.battery)?;
    let closed = |k| moments_closed(&p, job.d, job.m, k).map(|r| r.value);
    Ok(match job.curve {
        Curve::Closed(k) => closed(k)?,
        Curve::Solver(k) => solver::aoi_moment(&build_model(p, job.d, job.m), k)?,
        Curve::Limit(k) => limits_beta_inf(&p, job.d, job.m, k)?.value,
        Curve::Sigma => std_dev(closed(1)?, closed(2)?),
    })
}

pub fn figure_rows(which: &str, mu: f64) -> Result<Vec<FigureRow>> {
    let figure = FIGURES.into_iter().find(|f| *f == which).context("unknown figure")?;
    let mut rows = Vec::new();
    for panel in panels(which)? {
        let values: Vec<Result<f64>> = panel.jobs.par_iter().map(|j| evaluate(j, mu)).collect();
        for (job, v) in panel.jobs.iter().zip(values) {
            rows.push(FigureRow {
                figure,
                panel: panel.id,
                discipline: job.d.tag(),
                eh_mode: job.m.tag(),
                battery: job.battery,
                beta: job.beta,
                rho: job.rho,
                curve: job.curve.tag(),
                value: v?,
            });
        }
    }
    Ok(rows)
}

fn plot(which: &str, panel: &Panel, rows: &[&FigureRow]) -> LinePlot {
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let (label, x) = match panel.x {
            XAxis::Rho => {
                let who = match which {
                    "fig6" => format!("B={}", r.battery),
                    "fig8" => r.discipline.to_string(),
                    _ => format!("beta={}", r.beta),
                };
                (format!("{who} {}", r.curve), r.rho)
            }
            XAxis::Battery => (format!("rho={} beta={} {}", r.rho, r.beta, r.curve), r.battery as f64),
        };
        groups.entry(label).or_default().push((x, r.value));
    }
    LinePlot {
        title: format!("{which}({}) {}", panel.id, panel.title),
        x_label: match panel.x {
            XAxis::Rho => "rho".into(),
            XAxis::Battery => "battery capacity B".into(),
        },
        y_label: "age moment".into(),
        series: groups.into_iter().map(|(label, points)| Series { label, points }).collect(),
    }
}

/// Writes `<which>.csv` plus one SVG per panel into `dir`; returns the written paths.
pub fn write_figure(which: &str, mu: f64, dir: &Path, svg: bool) -> Result<Vec<std::path::PathBuf>> {
    let rows = figure_rows(which, mu)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{which}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    written.push(csv_path);
    if svg {
        for panel in panels(which)? {
            let mine: Vec<&FigureRow> = rows.iter().filter(|r| r.panel == panel.id).collect();
            let path = dir.join(format!("{which}_{}.svg", panel.id));
            fs::write(&path, plot(which, &panel, &mine).render())?;
            written.push(path);
        }
    }
    Ok(written)
}
