//! Event-driven Monte Carlo of the physical queue, used as an independent oracle.
//!
//! The simulator never looks at the SHS model. It tracks packet generation times and
//! the battery, draws the next event from the competing exponential clocks and
//! integrates the sawtooth age exactly between events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{state_id, Discipline, EhMode, SystemParams};

pub const BATCHES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon ({horizon}) must exceed warmup ({warmup}) and warmup must be nonnegative")]
    Window { horizon: f64, warmup: f64 },
    #[error("at least one replication is required")]
    NoReplications,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: SystemParams,
    pub discipline: Discipline,
    pub eh_mode: EhMode,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    /// Unnormalized MGF arguments.
    pub mgf_points: Vec<f64>,
}

impl SimConfig {
    pub fn new(params: SystemParams, discipline: Discipline, eh_mode: EhMode) -> Self {
        Self { params, discipline, eh_mode, horizon: 1e5, warmup: 1e3, seed: 0, mgf_points: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.warmup >= 0.0 && self.horizon > self.warmup && self.horizon.is_finite()) {
            return Err(SimError::Window { horizon: self.horizon, warmup: self.warmup });
        }
        Ok(())
    }
}

/// A sample mean with its standard error and the degrees of freedom behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub dof: usize,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Estimate { value: mean, stderr: (var / n).sqrt(), dof: xs.len().saturating_sub(1) }
    }

    /// Two-sided Student-t interval at the given confidence level.
    pub fn confidence_interval(&self, level: f64) -> (f64, f64) {
        let half = self.t_quantile(level) * self.stderr;
        (self.value - half, self.value + half)
    }

    fn t_quantile(&self, level: f64) -> f64 {
        let dof = self.dof.max(1) as f64;
        StudentsT::new(0.0, 1.0, dof).map(|t| t.inverse_cdf(0.5 + level / 2.0)).unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, x: f64, level: f64) -> bool {
        let (lo, hi) = self.confidence_interval(level);
        lo <= x && x <= hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub mean_age: Estimate,
    pub mean_age_sq: Estimate,
    /// `(s, time average of exp(s * age))` for each configured point.
    pub empirical_mgf: Vec<(f64, Estimate)>,
    /// Fraction of measured time spent in each discrete state, indexed like the SHS model.
    pub occupancy: Vec<f64>,
    pub events_processed: u64,
    pub effective_time: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    time: f64,
    age: f64,
    age_sq: f64,
}

struct Recorder {
    start: f64,
    width: f64,
    batches: Vec<Accum>,
    mgf: Vec<Vec<f64>>,
    points: Vec<f64>,
    occupancy: Vec<f64>,
}

impl Recorder {
    fn new(cfg: &SimConfig, n_states: usize) -> Self {
        Self {
            start: cfg.warmup,
            width: (cfg.horizon - cfg.warmup) / BATCHES as f64,
            batches: vec![Accum::default(); BATCHES],
            mgf: vec![vec![0.0; cfg.mgf_points.len()]; BATCHES],
            points: cfg.mgf_points.clone(),
            occupancy: vec![0.0; n_states],
        }
    }

    /// Adds the linear age segment starting at time `t0` with age `a0` and lasting `tau`,
    /// clipped to the measurement window and split at batch boundaries.
    fn record(&mut self, mut t0: f64, mut a0: f64, tau: f64, state: usize) {
        let end = t0 + tau;
        let window_end = self.start + self.width * BATCHES as f64;
        if t0 < self.start {
            a0 += self.start - t0;
            t0 = self.start;
        }
        let end = end.min(window_end);
        let mut idx = (((t0 - self.start) / self.width) as usize).min(BATCHES - 1);
        while t0 < end {
            let batch_end = if idx == BATCHES - 1 { window_end } else { self.start + self.width * (idx + 1) as f64 };
            if batch_end <= t0 {
                idx += 1;
                continue;
            }
            let seg_end = end.min(batch_end);
            let d = seg_end - t0;
            let acc = &mut self.batches[idx];
            acc.time += d;
            acc.age += a0 * d + 0.5 * d * d;
            acc.age_sq += ((a0 + d).powi(3) - a0.powi(3)) / 3.0;
            for (slot, &s) in self.mgf[idx].iter_mut().zip(&self.points) {
                *slot += if s == 0.0 { d } else { (s * a0).exp() * (s * d).exp_m1() / s };
            }
            self.occupancy[state] += d;
            a0 += d;
            t0 = seg_end;
            idx = (idx + 1).min(BATCHES - 1);
        }
    }

    fn finish(self, events: u64) -> SimResult {
        let total: f64 = self.batches.iter().map(|b| b.time).sum();
        let per = |f: &dyn Fn(usize, &Accum) -> f64| -> Vec<f64> {
            self.batches.iter().enumerate().filter(|(_, b)| b.time > 0.0).map(|(i, b)| f(i, b) / b.time).collect()
        };
        let mean_age = Estimate::from_samples(&per(&|_, b| b.age));
        let mean_age_sq = Estimate::from_samples(&per(&|_, b| b.age_sq));
        let empirical_mgf = self
            .points
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let est = if s == 0.0 {
                    Estimate { value: 1.0, stderr: 0.0, dof: BATCHES - 1 }
                } else {
                    Estimate::from_samples(&per(&|i, _| self.mgf[i][j]))
                };
                (s, est)
            })
            .collect();
        let occupancy = self.occupancy.iter().map(|t| t / total).collect();
        SimResult {
            mean_age,
            mean_age_sq,
            empirical_mgf,
            occupancy,
            events_processed: events,
            effective_time: total,
            replications: 1,
        }
    }
}

/// Physical system state: battery level and the generation times of the packets held.
struct Queue {
    battery: usize,
    in_service: Option<f64>,
    waiting: Option<f64>,
    /// Generation time of the freshest delivered update.
    delivered: f64,
}

impl Queue {
    fn updates(&self) -> usize {
        self.in_service.is_some() as usize + self.waiting.is_some() as usize
    }
}

fn run(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> SimResult {
    let p = cfg.params;
    let d = cfg.discipline;
    let n_states = match d {
        Discipline::LcfsPw => 3 * p.battery,
        _ => 2 * p.battery + 1,
    };
    let mut rec = Recorder::new(cfg, n_states);
    let mut q = Queue { battery: 1, in_service: None, waiting: None, delivered: -1.0 / p.mu };
    let mut t = 0.0;
    let mut events = 0u64;

    while t < cfg.horizon {
        let busy = q.in_service.is_some();
        let harvesting = match cfg.eh_mode {
            EhMode::WhenEmpty => !busy,
            EhMode::Anytime => true,
        };
        let eta = if harvesting { p.eta } else { 0.0 };
        let mu = if busy { p.mu } else { 0.0 };
        let total = p.lambda + eta + mu;
        let dt = Exp::new(total).expect("positive total rate").sample(rng);
        let state = state_id(d, p.battery, q.battery, q.updates()).expect("reachable state");
        rec.record(t, t - q.delivered, dt, state);
        t += dt;
        events += 1;

        let u = rng.random::<f64>() * total;
        if u < p.lambda {
            match (q.in_service, d) {
                (None, _) if q.battery >= 1 => q.in_service = Some(t),
                (None, _) => {}
                (Some(_), Discipline::LcfsNp) => {}
                (Some(_), Discipline::LcfsPs) => q.in_service = Some(t),
                (Some(_), Discipline::LcfsPw) => {
                    if q.battery >= 2 {
                        q.waiting = Some(t);
                    }
                }
            }
        } else if u < p.lambda + eta {
            if q.battery < p.battery {
                q.battery += 1;
            }
        } else if let Some(gen) = q.in_service {
            debug_assert!(q.battery >= 1, "delivery with an empty battery");
            q.delivered = q.delivered.max(gen);
            q.battery -= 1;
            q.in_service = q.waiting.take();
        }
        debug_assert!(q.battery <= p.battery);
        debug_assert!(q.waiting.is_none() || q.battery >= 2);
    }
    rec.finish(events)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One run on stream 0 of the configured seed; standard errors come from batch means.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    Ok(run(cfg, &mut stream_rng(cfg.seed, 0)))
}

/// Independent replications on streams `0..n_reps` of the configured seed, pooled with
/// between-replication standard errors. A single replication equals [`simulate`].
pub fn replicate(cfg: &SimConfig, n_reps: usize) -> Result<SimResult, SimError> {
    cfg.validate()?;
    if n_reps == 0 {
        return Err(SimError::NoReplications);
    }
    let runs: Vec<SimResult> =
        (0..n_reps as u64).into_par_iter().map(|i| run(cfg, &mut stream_rng(cfg.seed, i))).collect();
    if n_reps == 1 {
        return Ok(runs.into_iter().next().expect("one run"));
    }
    let pool = |f: &dyn Fn(&SimResult) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
    let empirical_mgf = cfg
        .mgf_points
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let est = if s == 0.0 {
                Estimate { value: 1.0, stderr: 0.0, dof: n_reps - 1 }
            } else {
                pool(&|r| r.empirical_mgf[j].1.value)
            };
            (s, est)
        })
        .collect();
    let n_states = runs[0].occupancy.len();
    let occupancy = (0..n_states).map(|k| runs.iter().map(|r| r.occupancy[k]).sum::<f64>() / n_reps as f64).collect();
    Ok(SimResult {
        mean_age: pool(&|r| r.mean_age.value),
        mean_age_sq: pool(&|r| r.mean_age_sq.value),
        empirical_mgf,
        occupancy,
        events_processed: runs.iter().map(|r| r.events_processed).sum(),
        effective_time: runs.iter().map(|r| r.effective_time).sum(),
        replications: n_reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_uses_student_t() {
        let e = Estimate { value: 0.0, stderr: 1.0, dof: 9 };
        let (lo, hi) = e.confidence_interval(0.99);
        assert!((hi - 3.2498).abs() < 1e-3 && (lo + hi).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_window() {
        let p = SystemParams::new(1.0, 1.0, 1.0, 1).unwrap();
        let mut cfg = SimConfig::new(p, Discipline::LcfsNp, EhMode::WhenEmpty);
        cfg.warmup = cfg.horizon;
        assert!(simulate(&cfg).is_err());
        cfg.warmup = 0.0;
        assert_eq!(replicate(&cfg, 0), Err(SimError::NoReplications));
    }

    #[test]
    fn segment_splitting_conserves_area() {
        let p = SystemParams::new(1.0, 1.0, 1.0, 1).unwrap();
        let mut cfg = SimConfig::new(p, Discipline::LcfsNp, EhMode::WhenEmpty);
        cfg.horizon = 10.0;
        cfg.warmup = 0.0;
        let mut rec = Recorder::new(&cfg, 3);
        rec.record(0.0, 1.0, 10.0, 0);
        let area: f64 = rec.batches.iter().map(|b| b.age).sum();
        assert!((area - (10.0 + 50.0)).abs() < 1e-9);
    }
}
