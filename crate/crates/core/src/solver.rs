//! Numeric SHS engine: stationary distribution, moment vectors of any order and MGF values.

use std::collections::VecDeque;

use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::model::{ShsModel, AOI_COMPONENT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("singular linear system ({0}); the model is malformed")]
    SingularSystem(#[from] LinalgError),
    #[error("moment order must be at least 1")]
    InvalidOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
}

impl StationaryDistribution {
    pub fn get(&self, q: usize) -> f64 {
        self.pi[q]
    }
}

/// Per-state moment vectors `v_q^(j)` for `j = 1..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVectors {
    pub order: usize,
    pub age_dim: usize,
    pub n_states: usize,
    values: Vec<Vec<f64>>,
}

impl MomentVectors {
    pub fn vector(&self, order: usize, q: usize) -> &[f64] {
        &self.values[order - 1][q * self.age_dim..(q + 1) * self.age_dim]
    }

    /// `sum_q v_q0^(order)`, the stationary `order`-th moment of the AoI.
    pub fn aggregate(&self, order: usize) -> f64 {
        (0..self.n_states).map(|q| self.vector(order, q)[AOI_COMPONENT]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgfSample {
    /// Unnormalized MGF argument.
    pub s: f64,
    /// `M(s)`; infinite when the stationary MGF does not exist at `s`.
    pub value: f64,
    pub converged: bool,
    /// Flattened `v_q^s`, `age_dim` entries per state. Components that cannot reach the
    /// AoI component are `NaN`.
    pub vectors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgfCurve {
    pub samples: Vec<MgfSample>,
    /// Finite-difference `M'(0)` when 0 is bracketed by converged grid points.
    pub first_derivative: Option<f64>,
    /// Three-point `M''(0)`, available when 0 itself and a neighbour on each side are present.
    pub second_derivative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub stationary: StationaryDistribution,
    pub moments: MomentVectors,
    pub aoi_moments: Vec<f64>,
    pub mgf: Vec<MgfSample>,
}

/// Global balance equations with the normalization row replacing the last equation.
pub fn steady_state(model: &ShsModel) -> Result<StationaryDistribution, SolverError> {
    let n = model.n_states();
    let mut a = Matrix::zeros(n);
    for t in model.transitions.iter().filter(|t| !t.is_self_loop()) {
        a[(t.target, t.source)] += t.rate;
        a[(t.source, t.source)] -= t.rate;
    }
    for q in 0..n {
        a[(n - 1, q)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let pi = a.solve(&rhs)?;
    Ok(StationaryDistribution { pi })
}

/// Inflow minus outflow per state; zero for an exact stationary vector.
pub fn balance_residual(model: &ShsModel, pi: &StationaryDistribution) -> Vec<f64> {
    let mut r = vec![0.0; model.n_states()];
    for t in model.transitions.iter().filter(|t| !t.is_self_loop()) {
        r[t.target] += t.rate * pi.pi[t.source];
        r[t.source] -= t.rate * pi.pi[t.source];
    }
    r
}

/// `diag(exit - s) - R`, the operator shared by the moment and MGF systems.
fn system_matrix(model: &ShsModel, s: f64) -> Matrix {
    let dim = model.age_dim;
    let exit = model.exit_rates();
    let mut k = Matrix::zeros(model.n_states() * dim);
    for (q, d) in exit.iter().enumerate() {
        for j in 0..dim {
            k[(q * dim + j, q * dim + j)] += d - s;
        }
    }
    for t in &model.transitions {
        for j in 0..dim {
            if let Some(i) = t.reset.source_of(j) {
                k[(t.target * dim + j, t.source * dim + i)] -= t.rate;
            }
        }
    }
    k
}

pub fn moment_vectors(
    model: &ShsModel,
    pi: &StationaryDistribution,
    order: usize,
) -> Result<MomentVectors, SolverError> {
    if order == 0 {
        return Err(SolverError::InvalidOrder);
    }
    let dim = model.age_dim;
    let n = model.n_states();
    let lu = system_matrix(model, 0.0).lu()?;
    let mut prev: Vec<f64> = (0..n * dim).map(|u| pi.pi[u / dim]).collect();
    let mut values = Vec::with_capacity(order);
    for j in 1..=order {
        let rhs: Vec<f64> = prev.iter().map(|v| j as f64 * v).collect();
        let v = lu.solve(&rhs)?;
        values.push(v.clone());
        prev = v;
    }
    Ok(MomentVectors { order, age_dim: dim, n_states: n, values })
}

/// Residual of the first-order equations for a candidate solution.
pub fn first_order_residual(model: &ShsModel, pi: &StationaryDistribution, mv: &MomentVectors) -> f64 {
    let dim = model.age_dim;
    let k = system_matrix(model, 0.0);
    let v: Vec<f64> = (0..model.n_states()).flat_map(|q| mv.vector(1, q).to_vec()).collect();
    let kv = k.mul_vec(&v);
    kv.iter().enumerate().map(|(u, x)| (x - pi.pi[u / dim]).abs()).fold(0.0, f64::max)
}

pub fn aoi_moment(model: &ShsModel, order: usize) -> Result<f64, SolverError> {
    let pi = steady_state(model)?;
    Ok(moment_vectors(model, &pi, order)?.aggregate(order))
}

/// Unknowns `(q, j)` whose values feed some AoI component `v_q0`.
fn aoi_closure(model: &ShsModel) -> Vec<usize> {
    let dim = model.age_dim;
    let total = model.n_states() * dim;
    let mut deps = vec![Vec::new(); total];
    for t in &model.transitions {
        for j in 0..dim {
            if let Some(i) = t.reset.source_of(j) {
                deps[t.target * dim + j].push(t.source * dim + i);
            }
        }
    }
    let mut seen = vec![false; total];
    let mut queue: VecDeque<usize> = (0..model.n_states()).map(|q| q * dim + AOI_COMPONENT).collect();
    for &u in &queue {
        seen[u] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &w in &deps[u] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    (0..total).filter(|&u| seen[u]).collect()
}

pub fn mgf(model: &ShsModel, s: f64) -> Result<MgfSample, SolverError> {
    let pi = steady_state(model)?;
    mgf_with(model, &pi, s)
}

/// MGF at `s` given a stationary distribution.
///
/// With `R` the nonnegative transfer part and `D` the exit rates, the system
/// `(D - sI) v = R v + c` has a nonnegative solution iff the spectral radius of
/// `T = (D - sI)^-1 R` is below one. That holds iff `(I - T) x = 1` has a strictly
/// positive solution, which is what is tested here on the AoI dependency closure.
pub fn mgf_with(model: &ShsModel, pi: &StationaryDistribution, s: f64) -> Result<MgfSample, SolverError> {
    let dim = model.age_dim;
    let exit = model.exit_rates();
    let closure = aoi_closure(model);
    let m = closure.len();
    let mut local = vec![usize::MAX; model.n_states() * dim];
    for (k, &u) in closure.iter().enumerate() {
        local[u] = k;
    }
    let diverged = MgfSample { s, value: f64::INFINITY, converged: false, vectors: None };

    let diag: Vec<f64> = closure.iter().map(|&u| exit[u / dim] - s).collect();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Ok(diverged);
    }

    let mut transfer = Matrix::zeros(m);
    let mut rhs = vec![0.0; m];
    for t in &model.transitions {
        for j in 0..dim {
            let row = local[t.target * dim + j];
            if row == usize::MAX {
                continue;
            }
            match t.reset.source_of(j) {
                Some(i) => transfer[(row, local[t.source * dim + i])] += t.rate,
                None => rhs[row] += t.rate * pi.pi[t.source],
            }
        }
    }

    let mut probe = Matrix::identity(m);
    let mut system = Matrix::zeros(m);
    for r in 0..m {
        for c in 0..m {
            probe[(r, c)] -= transfer[(r, c)] / diag[r];
            system[(r, c)] = -transfer[(r, c)];
        }
        system[(r, r)] += diag[r];
    }
    let positive = match probe.solve(&vec![1.0; m]) {
        Ok(x) => x.iter().all(|v| v.is_finite() && *v > 0.0),
        Err(_) => false,
    };
    if !positive {
        return Ok(diverged);
    }

    let v = system.solve(&rhs)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Ok(diverged);
    }
    let mut full = vec![f64::NAN; model.n_states() * dim];
    for (k, &u) in closure.iter().enumerate() {
        full[u] = v[k];
    }
    let value = (0..model.n_states()).map(|q| full[q * dim + AOI_COMPONENT]).sum();
    Ok(MgfSample { s, value, converged: true, vectors: Some(full) })
}

pub fn mgf_curve(model: &ShsModel, grid: &[f64]) -> Result<MgfCurve, SolverError> {
    let pi = steady_state(model)?;
    let samples = grid.iter().map(|&s| mgf_with(model, &pi, s)).collect::<Result<Vec<_>, _>>()?;

    let usable = |f: &dyn Fn(f64) -> bool| {
        samples.iter().filter(|p| p.converged && f(p.s)).cloned().collect::<Vec<_>>()
    };
    let left = usable(&|s| s < 0.0).into_iter().max_by(|a, b| a.s.total_cmp(&b.s));
    let right = usable(&|s| s > 0.0).into_iter().min_by(|a, b| a.s.total_cmp(&b.s));
    let center = samples.iter().find(|p| p.s == 0.0 && p.converged);

    let (mut first, mut second) = (None, None);
    if let (Some(l), Some(r)) = (left, right) {
        let (h1, h2) = (-l.s, r.s);
        match center {
            Some(c) => {
                first = Some(
                    -h2 / (h1 * (h1 + h2)) * l.value
                        + (h2 - h1) / (h1 * h2) * c.value
                        + h1 / (h2 * (h1 + h2)) * r.value,
                );
                second = Some(
                    2.0 * (l.value / (h1 * (h1 + h2)) - c.value / (h1 * h2) + r.value / (h2 * (h1 + h2))),
                );
            }
            None => first = Some((r.value - l.value) / (h1 + h2)),
        }
    }
    Ok(MgfCurve { samples, first_derivative: first, second_derivative: second })
}

/// Stationary distribution, moments of orders `1..=order` and MGF samples in one pass.
pub fn solve(model: &ShsModel, order: usize, s_grid: &[f64]) -> Result<SolveResult, SolverError> {
    let stationary = steady_state(model)?;
    let moments = moment_vectors(model, &stationary, order)?;
    let aoi_moments = (1..=order).map(|j| moments.aggregate(j)).collect();
    let mgf = s_grid.iter().map(|&s| mgf_with(model, &stationary, s)).collect::<Result<Vec<_>, _>>()?;
    Ok(SolveResult { stationary, moments, aoi_moments, mgf })
}
