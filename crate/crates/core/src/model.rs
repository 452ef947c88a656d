//! System parameters and the finite-state SHS transition systems.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Index of the age component holding the AoI at the destination.
pub const AOI_COMPONENT: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("battery capacity must be at least 1")]
    EmptyBattery,
    #[error("unknown {kind} `{value}`")]
    UnknownTag { kind: &'static str, value: String },
}

/// Arrival, harvesting and service rates plus battery capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub lambda: f64,
    pub eta: f64,
    pub mu: f64,
    pub battery: usize,
}

impl SystemParams {
    pub fn new(lambda: f64, eta: f64, mu: f64, battery: usize) -> Result<Self, ParamError> {
        for (name, value) in [("lambda", lambda), ("eta", eta), ("mu", mu)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::NonPositiveRate { name, value });
            }
        }
        if battery == 0 {
            return Err(ParamError::EmptyBattery);
        }
        Ok(Self { lambda, eta, mu, battery })
    }

    /// Builds parameters from the utilizations `rho = lambda/mu` and `beta = eta/mu`.
    pub fn from_utilization(rho: f64, beta: f64, mu: f64, battery: usize) -> Result<Self, ParamError> {
        for (name, value) in [("rho", rho), ("beta", beta), ("mu", mu)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::NonPositiveRate { name, value });
            }
        }
        Self::new(rho * mu, beta * mu, mu, battery)
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn beta(&self) -> f64 {
        self.eta / self.mu
    }

    /// MGF argument in units of the service rate.
    pub fn normalize_s(&self, s: f64) -> f64 {
        s / self.mu
    }

    pub fn with_battery(self, battery: usize) -> Self {
        Self { battery, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { eta: beta * self.mu, ..self }
    }

    pub fn swapped(self) -> Self {
        Self { lambda: self.eta, eta: self.lambda, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discipline {
    /// Arrivals during service are discarded.
    LcfsNp,
    /// A new arrival replaces the packet in service.
    LcfsPs,
    /// One waiting slot holding the freshest arrival.
    LcfsPw,
}

impl Discipline {
    pub const ALL: [Discipline; 3] = [Discipline::LcfsNp, Discipline::LcfsPs, Discipline::LcfsPw];

    pub fn tag(self) -> &'static str {
        match self {
            Discipline::LcfsNp => "np",
            Discipline::LcfsPs => "ps",
            Discipline::LcfsPw => "pw",
        }
    }

    /// Largest number of update packets the system can hold.
    pub fn max_updates(self) -> usize {
        match self {
            Discipline::LcfsPw => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Discipline {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "np" | "lcfs-np" => Ok(Discipline::LcfsNp),
            "ps" | "lcfs-ps" => Ok(Discipline::LcfsPs),
            "pw" | "lcfs-pw" => Ok(Discipline::LcfsPw),
            _ => Err(ParamError::UnknownTag { kind: "discipline", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EhMode {
    /// Energy is harvested only while no update is in the system.
    WhenEmpty,
    /// Energy is harvested regardless of the queue contents.
    Anytime,
}

impl EhMode {
    pub const ALL: [EhMode; 2] = [EhMode::WhenEmpty, EhMode::Anytime];

    pub fn tag(self) -> &'static str {
        match self {
            EhMode::WhenEmpty => "empty",
            EhMode::Anytime => "any",
        }
    }
}

impl fmt::Display for EhMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EhMode {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "empty" | "when-empty" => Ok(EhMode::WhenEmpty),
            "any" | "anytime" => Ok(EhMode::Anytime),
            _ => Err(ParamError::UnknownTag { kind: "EH mode", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteState {
    pub id: usize,
    /// 1-based label used in the state-diagram numbering.
    pub label: usize,
    pub energy: usize,
    pub updates: usize,
}

/// Which Poisson clock drives a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Arrival,
    Harvest,
    Service,
}

/// Binary square matrix acting on the age row vector as `x' = x A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetMap {
    dim: usize,
    bits: Vec<bool>,
}

impl ResetMap {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, bits: vec![false; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for j in 0..dim {
            m.set(j, j, true);
        }
        m
    }

    /// `sources[j] = Some(i)` makes the new component `j` a copy of old component `i`;
    /// `None` resets it to zero.
    pub fn copy_from(sources: &[Option<usize>]) -> Self {
        let mut m = Self::zeros(sources.len());
        for (j, src) in sources.iter().enumerate() {
            if let Some(i) = *src {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.dim + col] = value;
    }

    pub fn column_is_zero(&self, col: usize) -> bool {
        (0..self.dim).all(|i| !self.get(i, col))
    }

    /// The old component copied into `col`, if any.
    pub fn source_of(&self, col: usize) -> Option<usize> {
        (0..self.dim).find(|&i| self.get(i, col))
    }

    /// Diagonal marker of the components that this map zeroes.
    pub fn hat(&self) -> ResetMap {
        let mut h = Self::zeros(self.dim);
        for j in 0..self.dim {
            if self.column_is_zero(j) {
                h.set(j, j, true);
            }
        }
        h
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|j| self.source_of(j).map_or(0.0, |i| x[i])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub source: usize,
    pub target: usize,
    pub kind: RateKind,
    pub rate: f64,
    pub reset: ResetMap,
    pub hat: ResetMap,
}

impl Transition {
    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShsModel {
    pub params: SystemParams,
    pub discipline: Discipline,
    pub eh_mode: EhMode,
    pub states: Vec<DiscreteState>,
    pub transitions: Vec<Transition>,
    pub age_dim: usize,
}

impl ShsModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Sum of all transition rates leaving each state, self-loops included.
    pub fn exit_rates(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.states.len()];
        for t in &self.transitions {
            out[t.source] += t.rate;
        }
        out
    }

    pub fn state_of(&self, energy: usize, updates: usize) -> Option<usize> {
        state_id(self.discipline, self.params.battery, energy, updates)
    }
}

/// Position of `(energy, updates)` in the state ordering of a discipline.
///
/// The ordering does not depend on the EH mode. Returns `None` for combinations the
/// discipline never visits.
pub fn state_id(d: Discipline, battery: usize, energy: usize, updates: usize) -> Option<usize> {
    if energy > battery || updates > d.max_updates() {
        return None;
    }
    match (d, energy, updates) {
        (_, 0, 0) => Some(0),
        (_, 0, _) => None,
        (Discipline::LcfsPw, 1, 2) => None,
        (Discipline::LcfsPw, 1, u) => Some(1 + u),
        (Discipline::LcfsPw, e, u) => Some(3 * e - 3 + u),
        (_, e, u) => Some(2 * e - 1 + u),
    }
}

fn state_list(d: Discipline, battery: usize) -> Vec<DiscreteState> {
    let mut states = Vec::new();
    for energy in 0..=battery {
        for updates in 0..=d.max_updates() {
            if let Some(id) = state_id(d, battery, energy, updates) {
                states.push(DiscreteState { id, label: id + 1, energy, updates });
            }
        }
    }
    states.sort_by_key(|s| s.id);
    states
}

/// Builds the transition system of one discipline and EH mode.
pub fn build_model(params: SystemParams, d: Discipline, m: EhMode) -> ShsModel {
    let b = params.battery;
    let states = state_list(d, b);
    let age_dim = d.max_updates() + 1;
    let id = |e: usize, u: usize| state_id(d, b, e, u).expect("state in range");
    let mut transitions = Vec::new();
    let mut push = |source: usize, target: usize, kind: RateKind, sources: &[Option<usize>]| {
        let rate = match kind {
            RateKind::Arrival => params.lambda,
            RateKind::Harvest => params.eta,
            RateKind::Service => params.mu,
        };
        let reset = ResetMap::copy_from(sources);
        let hat = reset.hat();
        transitions.push(Transition { source, target, kind, rate, reset, hat });
    };

    match d {
        Discipline::LcfsNp | Discipline::LcfsPs => {
            let keep_age = [Some(0), None];
            for e in 0..b {
                push(id(e, 0), id(e + 1, 0), RateKind::Harvest, &keep_age);
            }
            for e in 1..=b {
                push(id(e, 0), id(e, 1), RateKind::Arrival, &keep_age);
                push(id(e, 1), id(e - 1, 0), RateKind::Service, &[Some(1), None]);
                if d == Discipline::LcfsPs {
                    push(id(e, 1), id(e, 1), RateKind::Arrival, &keep_age);
                }
                if m == EhMode::Anytime && e < b {
                    push(id(e, 1), id(e + 1, 1), RateKind::Harvest, &[Some(0), Some(1)]);
                }
            }
        }
        Discipline::LcfsPw => {
            let keep_age = [Some(0), None, None];
            let keep_service = [Some(0), Some(1), None];
            for e in 0..b {
                push(id(e, 0), id(e + 1, 0), RateKind::Harvest, &keep_age);
            }
            for e in 1..=b {
                push(id(e, 0), id(e, 1), RateKind::Arrival, &keep_age);
                push(id(e, 1), id(e - 1, 0), RateKind::Service, &[Some(1), None, None]);
                if e >= 2 {
                    push(id(e, 1), id(e, 2), RateKind::Arrival, &keep_service);
                    push(id(e, 2), id(e, 2), RateKind::Arrival, &keep_service);
                    push(id(e, 2), id(e - 1, 1), RateKind::Service, &[Some(1), Some(2), None]);
                }
                if m == EhMode::Anytime && e < b {
                    push(id(e, 1), id(e + 1, 1), RateKind::Harvest, &keep_service);
                    if e >= 2 {
                        push(id(e, 2), id(e + 1, 2), RateKind::Harvest, &[Some(0), Some(1), Some(2)]);
                    }
                }
            }
        }
    }

    ShsModel { params, discipline: d, eh_mode: m, states, transitions, age_dim }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    NotIrreducible { unreachable: Vec<usize> },
    ResetColumnRule { transition: usize, column: usize },
    HatMapRule { transition: usize },
    NoExitRate { state: usize },
    DimensionMismatch { transition: usize },
    BadEndpoint { transition: usize },
    PwStateWithoutEnergy { state: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NotIrreducible { unreachable } => {
                write!(f, "not irreducible (states {unreachable:?} not mutually reachable)")
            }
            Finding::ResetColumnRule { transition, column } => {
                write!(f, "reset-map column rule violated (transition {transition}, column {column})")
            }
            Finding::HatMapRule { transition } => write!(f, "hat-map rule violated (transition {transition})"),
            Finding::NoExitRate { state } => write!(f, "state {state} has no positive exit rate"),
            Finding::DimensionMismatch { transition } => {
                write!(f, "transition {transition} has maps of the wrong dimension")
            }
            Finding::BadEndpoint { transition } => write!(f, "transition {transition} references a missing state"),
            Finding::PwStateWithoutEnergy { state } => {
                write!(f, "state {state} holds two updates with fewer than two energy packets")
            }
        }
    }
}

/// Structural diagnostics; an empty list means the model is well formed.
pub fn validate_model(model: &ShsModel) -> Vec<Finding> {
    let n = model.n_states();
    let mut findings = Vec::new();
    let mut fwd = vec![Vec::new(); n];
    let mut back = vec![Vec::new(); n];

    for (l, t) in model.transitions.iter().enumerate() {
        if t.source >= n || t.target >= n {
            findings.push(Finding::BadEndpoint { transition: l });
            continue;
        }
        if t.reset.dim() != model.age_dim || t.hat.dim() != model.age_dim {
            findings.push(Finding::DimensionMismatch { transition: l });
            continue;
        }
        for col in 0..model.age_dim {
            if (0..model.age_dim).filter(|&i| t.reset.get(i, col)).count() > 1 {
                findings.push(Finding::ResetColumnRule { transition: l, column: col });
            }
        }
        if t.hat != t.reset.hat() {
            findings.push(Finding::HatMapRule { transition: l });
        }
        fwd[t.source].push(t.target);
        back[t.target].push(t.source);
    }

    for (q, rate) in model.exit_rates().iter().enumerate() {
        if !(*rate > 0.0) {
            findings.push(Finding::NoExitRate { state: q });
        }
    }

    if n > 0 {
        let reach_f = reachable(&fwd, 0);
        let reach_b = reachable(&back, 0);
        let unreachable: Vec<usize> = (0..n).filter(|&q| !(reach_f[q] && reach_b[q])).collect();
        if !unreachable.is_empty() {
            findings.push(Finding::NotIrreducible { unreachable });
        }
    }

    for s in &model.states {
        if s.updates == 2 && s.energy < 2 {
            findings.push(Finding::PwStateWithoutEnergy { state: s.id });
        }
    }
    findings
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(q) = queue.pop_front() {
        for &r in &adj[q] {
            if !seen[r] {
                seen[r] = true;
                queue.push_back(r);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(b: usize) -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, b).unwrap()
    }

    #[test]
    fn state_and_transition_counts() {
        let cases = [
            (1, Discipline::LcfsNp, EhMode::WhenEmpty, 3, 3),
            (2, Discipline::LcfsNp, EhMode::WhenEmpty, 5, 6),
            (1, Discipline::LcfsPs, EhMode::WhenEmpty, 3, 4),
            (2, Discipline::LcfsPw, EhMode::WhenEmpty, 6, 9),
        ];
        for (b, d, m, ns, nt) in cases {
            let model = build_model(unit(b), d, m);
            assert_eq!(model.n_states(), ns, "{d} {m} B={b}");
            assert_eq!(model.transitions.len(), nt, "{d} {m} B={b}");
        }
    }

    #[test]
    fn labels_follow_diagram_numbering() {
        let np = build_model(unit(3), Discipline::LcfsNp, EhMode::WhenEmpty);
        for s in &np.states {
            let expected = match (s.energy, s.updates) {
                (0, 0) => 1,
                (k, 0) => 2 * k,
                (k, _) => 2 * k + 1,
            };
            assert_eq!(s.label, expected);
        }
        let pw = build_model(unit(3), Discipline::LcfsPw, EhMode::WhenEmpty);
        let label = |e, u| pw.states[pw.state_of(e, u).unwrap()].label;
        assert_eq!(label(0, 0), 1);
        assert_eq!(label(1, 0), 2);
        assert_eq!(label(1, 1), 3);
        assert_eq!(label(3, 0), 7);
        assert_eq!(label(3, 1), 8);
        assert_eq!(label(3, 2), 9);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SystemParams::new(0.0, 1.0, 1.0, 1).is_err());
        assert!(SystemParams::new(1.0, f64::NAN, 1.0, 1).is_err());
        assert_eq!(SystemParams::new(1.0, 1.0, 1.0, 0), Err(ParamError::EmptyBattery));
    }

    #[test]
    fn tags_round_trip() {
        for d in Discipline::ALL {
            assert_eq!(d.tag().parse::<Discipline>().unwrap(), d);
        }
        for m in EhMode::ALL {
            assert_eq!(m.tag().parse::<EhMode>().unwrap(), m);
        }
        assert!("fifo".parse::<Discipline>().is_err());
    }

    #[test]
    fn reset_map_apply() {
        let a = ResetMap::copy_from(&[Some(1), Some(2), None]);
        assert_eq!(a.apply(&[5.0, 3.0, 1.0]), vec![3.0, 1.0, 0.0]);
        let h = a.hat();
        assert!(h.get(2, 2) && !h.get(0, 0) && !h.get(1, 1));
    }
}
