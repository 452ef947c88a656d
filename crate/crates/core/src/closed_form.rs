//! Exact evaluators: stationary probabilities, MGFs, first and second moments,
//! auxiliary probability-mass ratios and large-harvest-rate limits.
//!
//! All formulas are written in the utilizations `rho = lambda/mu`, `beta = eta/mu`
//! and the normalized MGF argument `s_bar = s/mu`; moments are rescaled by `mu^-k`.

use std::fmt;

use thiserror::Error;

use crate::model::{build_model, Discipline, EhMode, SystemParams};
use crate::solver::{self, SolverError};

/// Relative band used to decide which case of a piecewise formula applies.
pub const BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchTag {
    RhoEqBeta,
    RhoNeqBeta,
    BetaEqRhoOnePlusRho,
    General,
}

impl BranchTag {
    pub fn tag(self) -> &'static str {
        match self {
            BranchTag::RhoEqBeta => "rho_eq_beta",
            BranchTag::RhoNeqBeta => "rho_neq_beta",
            BranchTag::BetaEqRhoOnePlusRho => "beta_eq_rho_1p_rho",
            BranchTag::General => "general",
        }
    }
}

impl fmt::Display for BranchTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormResult {
    pub value: f64,
    pub branch: BranchTag,
    /// Which evaluator produced the value, e.g. `np-empty/moments`.
    pub source: &'static str,
}

/// Probability-mass ratios appearing in the MGF expressions.
///
/// `gamma` is the idle mass outside the empty-battery state, `gamma_prime` all mass outside
/// it, `gamma1` the busy mass and `gamma2` the idle mass, each divided by `pi1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuxFactors {
    pub theta: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_prime: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    /// Probability of the empty system with an empty battery.
    pub pi1: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("s_bar = {s_bar} is not below the first pole at {pole}")]
    PoleViolation { s_bar: f64, pole: f64 },
    #[error("no closed form for {discipline}/{mode} with B = {battery}")]
    UnsupportedB { discipline: Discipline, mode: EhMode, battery: usize },
    #[error("closed forms exist only for moment orders 1 and 2, got {0}")]
    UnsupportedOrder(usize),
    #[error("auxiliary factor `{0}` is required but missing")]
    MissingAux(&'static str),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BRANCH_TOL * a.abs().max(b.abs())
}

/// Horner evaluation with coefficients in ascending powers.
fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `(beta^n, rho^n)` divided by the larger of the two, so differences of high powers
/// keep their ratio without overflowing.
fn scaled_powers(beta: f64, rho: f64, n: usize) -> (f64, f64) {
    if beta >= rho {
        (1.0, (rho / beta).powi(n as i32))
    } else {
        ((beta / rho).powi(n as i32), 1.0)
    }
}

fn rho_beta_branch(p: &SystemParams) -> BranchTag {
    if near(p.rho(), p.beta()) {
        BranchTag::RhoEqBeta
    } else {
        BranchTag::RhoNeqBeta
    }
}

fn pw_branch(p: &SystemParams) -> BranchTag {
    let r = p.rho();
    if near(p.beta(), r * (1.0 + r)) {
        BranchTag::BetaEqRhoOnePlusRho
    } else {
        BranchTag::General
    }
}

/// Stationary probabilities of the NP/PS chain when harvesting only in the empty system,
/// indexed by state id.
pub fn np_ps_steady_state(p: &SystemParams) -> (Vec<f64>, BranchTag) {
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let branch = rho_beta_branch(p);
    let pi1 = match branch {
        BranchTag::RhoEqBeta => 1.0 / (1.0 + cap as f64 * (1.0 + r)),
        _ => {
            let g = (b / r).powi(cap as i32);
            (b - r) / ((b - r) + b * (1.0 + r) * (g - 1.0))
        }
    };
    let mut pi = vec![pi1];
    for i in 1..=cap {
        let ratio = (b / r).powi(i as i32);
        pi.push(ratio * pi1);
        pi.push(r * ratio * pi1);
    }
    (pi, branch)
}

fn theta(p: &SystemParams) -> f64 {
    let (r, b) = (p.rho(), p.beta());
    if near(r, b) {
        p.battery as f64
    } else {
        b * ((b / r).powi(p.battery as i32) - 1.0) / (b - r)
    }
}

/// Ingredients of the preemption-in-waiting stationary solution for `B >= 2`.
struct PwMass {
    pi1: f64,
    theta1: f64,
    theta2: f64,
    /// Geometric ratio between successive battery levels.
    step: f64,
}

fn pw_mass(p: &SystemParams) -> PwMass {
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let c = 1.0 + r + b;
    let up = b * (1.0 + r);
    let down = r * c;
    let step = up / down;
    if pw_branch(p) == BranchTag::BetaEqRhoOnePlusRho {
        let bf = cap as f64;
        return PwMass { pi1: r / (b + r * (1.0 + b) * bf), theta1: b * bf, theta2: b / r + bf, step };
    }
    let u = step.powi(cap as i32 - 1);
    let gap = up - down;
    PwMass {
        pi1: r * gap / (u * b * b * (r * r + r + 1.0) - r * r * c * (1.0 + b)),
        theta1: (u * b * b * (1.0 + r) - b * r * c) / gap,
        theta2: (u * b * b - r * r * c) / (r * gap),
        step,
    }
}

/// Stationary probabilities of the preemption-in-waiting chain when harvesting only in
/// the empty system, indexed by state id. A single-slot battery never admits a waiting
/// packet, so `B = 1` reduces to the NP chain.
pub fn pw_steady_state(p: &SystemParams) -> (Vec<f64>, BranchTag) {
    if p.battery == 1 {
        return np_ps_steady_state(p);
    }
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let c = 1.0 + r + b;
    let m = pw_mass(p);
    let mut pi = vec![0.0; 3 * cap];
    pi[0] = m.pi1;
    pi[1] = m.step * m.pi1;
    pi[2] = b * m.pi1;
    for k in 2..=cap {
        let geo = m.step.powi(k as i32) * m.pi1;
        pi[3 * k - 3] = if k == cap { b / r * m.step.powi(cap as i32 - 1) * m.pi1 } else { geo };
        pi[3 * k - 2] = r * c / (1.0 + r).powi(2) * geo;
        pi[3 * k - 1] = r * r * c / (1.0 + r).powi(2) * geo;
    }
    (pi, pw_branch(p))
}

fn aux_from_solver(p: &SystemParams, d: Discipline) -> Result<AuxFactors, ClosedFormError> {
    let model = build_model(*p, d, EhMode::Anytime);
    let pi = solver::steady_state(&model)?;
    let pi1 = pi.pi[0];
    let idle: f64 = model.states.iter().filter(|s| s.updates == 0).map(|s| pi.pi[s.id]).sum();
    let busy: f64 = model.states.iter().filter(|s| s.updates > 0).map(|s| pi.pi[s.id]).sum();
    let mut aux = AuxFactors { pi1: Some(pi1), ..AuxFactors::default() };
    match d {
        Discipline::LcfsPw => {
            aux.gamma1 = Some(busy / pi1);
            aux.gamma2 = Some(idle / pi1);
        }
        _ => {
            aux.gamma = Some((idle - pi1) / pi1);
            aux.gamma_prime = Some((idle + busy - pi1) / pi1);
        }
    }
    Ok(aux)
}

/// Auxiliary factors, in closed form where available and from the numeric stationary
/// distribution for anytime harvesting with `B > 2`.
pub fn compute_aux(p: &SystemParams, d: Discipline, m: EhMode) -> Result<AuxFactors, ClosedFormError> {
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let empty_np = || {
        let (pi, _) = np_ps_steady_state(p);
        AuxFactors { theta: Some(theta(p)), pi1: Some(pi[0]), ..AuxFactors::default() }
    };
    if cap == 1 {
        let mut aux = empty_np();
        if m == EhMode::Anytime {
            aux.gamma = Some(b / r);
            aux.gamma_prime = Some(b / r * (1.0 + r));
        }
        return Ok(aux);
    }
    match (d, m) {
        (Discipline::LcfsPw, EhMode::WhenEmpty) => {
            let mass = pw_mass(p);
            Ok(AuxFactors {
                theta1: Some(mass.theta1),
                theta2: Some(mass.theta2),
                pi1: Some(mass.pi1),
                ..AuxFactors::default()
            })
        }
        (_, EhMode::WhenEmpty) => Ok(empty_np()),
        (Discipline::LcfsPw, EhMode::Anytime) if cap == 2 => {
            let g1 = b / r * (b + r * (1.0 + b));
            let g2 = (b * b + b * r + r * r) / (r * r);
            Ok(AuxFactors { gamma1: Some(g1), gamma2: Some(g2), pi1: Some(1.0 / (g1 + g2)), ..AuxFactors::default() })
        }
        (Discipline::LcfsNp | Discipline::LcfsPs, EhMode::Anytime) if cap == 2 => {
            let core = b / (r * r) * (r + b * (1.0 + r + b));
            let gp = core * (1.0 + r);
            Ok(AuxFactors { gamma: Some(core), gamma_prime: Some(gp), pi1: Some(1.0 / (1.0 + gp)), ..AuxFactors::default() })
        }
        _ => aux_from_solver(p, d),
    }
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64, ClosedFormError> {
    v.ok_or(ClosedFormError::MissingAux(name))
}

/// Smallest positive root of the MGF denominators; the MGF exists strictly below it.
pub fn first_pole(p: &SystemParams) -> f64 {
    p.rho().min(p.beta()).min(1.0)
}

fn np_empty_mgf(r: f64, b: f64, s: f64, th: f64, pi1: f64) -> f64 {
    r * pi1 * (s * s * th - s * th * (1.0 + r + b) + b * (1.0 + th + th * r))
        / ((1.0 - s).powi(2) * (r - s) * (b - s))
}

fn ps_empty_mgf(r: f64, b: f64, s: f64, th: f64, pi1: f64) -> f64 {
    r * (1.0 + r) * pi1 * (s * s * th - s * th * (1.0 + r + b) + b * (1.0 + th + th * r))
        / ((1.0 - s) * (r - s) * (1.0 + r - s) * (b - s))
}

fn np_any_mgf(r: f64, b: f64, s: f64, gamma: f64, pi1: f64) -> f64 {
    r * pi1 * (gamma * (1.0 + r - s) * (b - s) * (1.0 + b - s) + b * (1.0 + b) * (1.0 - s))
        / ((1.0 - s).powi(2) * (r - s) * (b - s) * (1.0 + b - s))
}

fn ps_any_mgf(r: f64, b: f64, s: f64, gp: f64, pi1: f64) -> f64 {
    r * pi1 * (s * s * gp - s * gp * (1.0 + r + 2.0 * b) + (1.0 + gp) * b * (1.0 + r + b))
        / ((1.0 - s) * (r - s) * (b - s) * (1.0 + r + b - s))
}

/// Factor shared by both preemption-in-waiting second components: `(1-s)(c-2s)(c-s)`-type
/// terms where `c = 1 + rho + beta`.
fn pw_tail(r: f64, b: f64, s: f64) -> f64 {
    let c = 1.0 + r + b;
    (1.0 - s) * (c - 2.0 * s)
}

fn pw_empty_mgf(r: f64, b: f64, s: f64, th1: f64, th2: f64, pi1: f64) -> f64 {
    let c = 1.0 + r + b;
    let th2_bar = 1.0 - th2;
    let quad = s * s - 2.0 * s * (1.0 + r) + r * r + r + 1.0;
    let first = c * (1.0 - s) * (b - s) * quad * (s * th2_bar + th1 - b - th2_bar * (1.0 + r));
    let second = b * (1.0 + r) * pw_tail(r, b, s) * (c - s);
    r * pi1 * (first + second) / (c * (1.0 - s).powi(3) * (1.0 + r - s).powi(2) * (r - s) * (b - s))
}

fn pw_any_mgf(r: f64, b: f64, s: f64, cap: usize, g1: f64, g2: f64, pi1: f64) -> f64 {
    let c = 1.0 + r + b;
    let w = 1.0 + r + 2.0 * b;
    let g2_bar = 1.0 - g2;
    let quad = s * s - 2.0 * s * (1.0 + r) + r * r + r + 1.0;
    let first = w * (b - s) * (1.0 + b - s) * (c - s) * quad * (s * g2_bar + g1 - b - g2_bar * (1.0 + r));
    let second = if cap == 2 {
        b * w * pw_tail(r, b, s) * (c - s) * ((1.0 + r) * (1.0 + b) - s)
    } else {
        b * (1.0 + r - s) * (((1.0 + b).powi(2) + r) * (c - s) + b * c * c) * pw_tail(r, b, s)
    };
    r * pi1 * (first + second)
        / (w * (1.0 - s).powi(2) * (1.0 + r - s).powi(2) * (r - s) * (b - s) * (1.0 + b - s) * (c - s))
}

/// MGF at the normalized argument `s_bar`.
///
/// Anytime harvesting with `B = 1` is the same chain as empty-only harvesting and is
/// evaluated with those expressions, as is preemption in waiting with `B = 1` (NP chain).
pub fn mgf_closed(
    p: &SystemParams,
    d: Discipline,
    m: EhMode,
    s_bar: f64,
    aux: &AuxFactors,
) -> Result<ClosedFormResult, ClosedFormError> {
    let pole = first_pole(p);
    if !(s_bar < pole) {
        return Err(ClosedFormError::PoleViolation { s_bar, pole });
    }
    let (r, b, s, cap) = (p.rho(), p.beta(), s_bar, p.battery);
    let pi1 = need(aux.pi1, "pi1")?;
    let (value, branch, source) = match (d, m) {
        (Discipline::LcfsNp, _) | (Discipline::LcfsPw, _) if cap == 1 => {
            (np_empty_mgf(r, b, s, need(aux.theta, "theta")?, pi1), rho_beta_branch(p), "np-empty/mgf")
        }
        (Discipline::LcfsPs, _) if cap == 1 => {
            (ps_empty_mgf(r, b, s, need(aux.theta, "theta")?, pi1), rho_beta_branch(p), "ps-empty/mgf")
        }
        (Discipline::LcfsNp, EhMode::WhenEmpty) => {
            (np_empty_mgf(r, b, s, need(aux.theta, "theta")?, pi1), rho_beta_branch(p), "np-empty/mgf")
        }
        (Discipline::LcfsPs, EhMode::WhenEmpty) => {
            (ps_empty_mgf(r, b, s, need(aux.theta, "theta")?, pi1), rho_beta_branch(p), "ps-empty/mgf")
        }
        (Discipline::LcfsNp, EhMode::Anytime) => {
            (np_any_mgf(r, b, s, need(aux.gamma, "gamma")?, pi1), BranchTag::General, "np-any/mgf")
        }
        (Discipline::LcfsPs, EhMode::Anytime) => {
            (ps_any_mgf(r, b, s, need(aux.gamma_prime, "gamma_prime")?, pi1), BranchTag::General, "ps-any/mgf")
        }
        (Discipline::LcfsPw, EhMode::WhenEmpty) => {
            let v = pw_empty_mgf(r, b, s, need(aux.theta1, "theta1")?, need(aux.theta2, "theta2")?, pi1);
            (v, pw_branch(p), "pw-empty/mgf")
        }
        (Discipline::LcfsPw, EhMode::Anytime) => {
            let v = pw_any_mgf(r, b, s, cap, need(aux.gamma1, "gamma1")?, need(aux.gamma2, "gamma2")?, pi1);
            (v, BranchTag::General, if cap == 2 { "pw-any-b2/mgf" } else { "pw-any/mgf" })
        }
    };
    Ok(ClosedFormResult { value, branch, source })
}

fn np_empty_moments(p: &SystemParams, k: usize) -> (f64, BranchTag) {
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let bf = cap as f64;
    let branch = rho_beta_branch(p);
    let v = match (branch, k) {
        (BranchTag::RhoEqBeta, 1) => {
            (2.0 * bf * r * r + 2.0 * (1.0 + bf) * r + bf + 2.0) / (bf * r * r + (1.0 + bf) * r)
        }
        (BranchTag::RhoEqBeta, _) => {
            2.0 * poly(&[bf + 3.0, 2.0 * bf + 4.0, 3.0 * bf + 3.0, 3.0 * bf], r) / (r * r * (1.0 + bf + bf * r))
        }
        (_, 1) => {
            let (wb, wr) = scaled_powers(b, r, cap + 2);
            (wb * poly(&[1.0, 2.0, 2.0], r) - wr * poly(&[1.0, 2.0, 2.0], b))
                / (wb * (r * r + r) - wr * (b * b + b))
        }
        _ => {
            let (wb, wr) = scaled_powers(b, r, cap + 3);
            2.0 * (wb * poly(&[1.0, 2.0, 3.0, 3.0], r) - wr * poly(&[1.0, 2.0, 3.0, 3.0], b))
                / (wb * r * r * (1.0 + r) - wr * b * b * (b + 1.0))
        }
    };
    (v, branch)
}

fn ps_empty_moments(p: &SystemParams, k: usize) -> (f64, BranchTag) {
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let bf = cap as f64;
    let branch = rho_beta_branch(p);
    let v = match (branch, k) {
        (BranchTag::RhoEqBeta, 1) => {
            poly(&[bf + 2.0, 3.0 * bf + 4.0, 3.0 * bf + 1.0, bf], r) / (r * (1.0 + r) * (r * bf + bf + 1.0))
        }
        (BranchTag::RhoEqBeta, _) => {
            2.0 * poly(&[bf + 3.0, 4.0 * bf + 10.0, 7.0 * bf + 12.0, 7.0 * bf + 5.0, 4.0 * bf + 1.0, bf], r)
                / (r * r * (1.0 + r).powi(2) * (1.0 + bf + bf * r))
        }
        (_, 1) => {
            let (wb, wr) = scaled_powers(b, r, cap + 2);
            (wb * (1.0 + r).powi(3) - wr * ((b * b + b) * (r + 2.0) + 1.0 + r))
                / ((1.0 + r) * (wb * (r * r + r) - wr * (b * b + b)))
        }
        _ => {
            let (wb, wr) = scaled_powers(b, r, cap + 3);
            let b3 = b * b * b + b * b + b;
            (2.0 * wb * (1.0 + r).powi(3) * (1.0 + r + r * r)
                - 2.0 * wr * (b3 * (r * r + 3.0 * r + 2.0) + b * b * b + b * b + (1.0 + r).powi(2)))
                / ((1.0 + r).powi(2) * (wb * r * r * (1.0 + r) - wr * b * b * (1.0 + b)))
        }
    };
    (v, branch)
}

fn np_ps_any_pi2(r: f64, b: f64) -> f64 {
    (b.powi(3) * r + b * b * r * (1.0 + r) + b * r * r)
        / poly(
            &[r.powi(3), r.powi(3) + 2.0 * r * r, r.powi(3) + 3.0 * r * r + 2.0 * r, 2.0 * r * r + 3.0 * r + 1.0, 1.0 + r],
            b,
        )
}

fn np_any_moments(r: f64, b: f64, cap: usize, k: usize) -> f64 {
    let (r2, r3, r4) = (r * r, r.powi(3), r.powi(4));
    match (cap, k) {
        (1, 1) => {
            (b * b * poly(&[1.0, 2.0, 2.0], r) + b * r * (1.0 + 2.0 * r) + r2) / (r * b * (b * (1.0 + r) + r))
        }
        (1, _) => {
            let alpha = [2.0 * r3, 4.0 * r3 + 2.0 * r2, 6.0 * r3 + 4.0 * r2 + 2.0 * r, poly(&[2.0, 4.0, 6.0, 6.0], r)];
            poly(&alpha, b) / (r2 * b * b * (b * (1.0 + r) + r))
        }
        (_, 1) => {
            let alpha = [
                r3,
                3.0 * r3 + r2,
                3.0 * r3 + 3.0 * r2 + r,
                poly(&[1.0, 4.0, 6.0, 4.0], r),
                poly(&[2.0, 5.0, 6.0, 2.0], r),
                poly(&[1.0, 2.0, 2.0], r),
            ];
            np_ps_any_pi2(r, b) * poly(&alpha, b) / (r2 * b * b * (1.0 + b).powi(2))
        }
        _ => {
            let alpha = [
                r4,
                4.0 * r4 + r3,
                7.0 * r4 + 4.0 * r3 + r2,
                7.0 * r4 + 7.0 * r3 + 4.0 * r2 + r,
                poly(&[1.0, 5.0, 10.0, 13.0, 10.0], r),
                poly(&[3.0, 9.0, 15.0, 18.0, 9.0], r),
                poly(&[3.0, 7.0, 11.0, 12.0, 3.0], r),
                poly(&[1.0, 2.0, 3.0, 3.0], r),
            ];
            2.0 * np_ps_any_pi2(r, b) * poly(&alpha, b) / (r3 * b.powi(3) * (1.0 + b).powi(3))
        }
    }
}

fn ps_any_moments(r: f64, b: f64, cap: usize, k: usize) -> f64 {
    let (r2, r3, r4) = (r * r, r.powi(3), r.powi(4));
    let rp = 1.0 + r;
    let c = 1.0 + r + b;
    match (cap, k) {
        (1, 1) => {
            (b * b * rp.powi(3) + b * (r3 + 3.0 * r2 + r) + r3 + r2) / (r * rp * b * (b * rp + r))
        }
        (1, _) => {
            let zeta = [
                r3 * rp * rp,
                r2 * rp * (r2 + 3.0 * r + 1.0),
                r * poly(&[1.0, 4.0, 7.0, 4.0, 1.0], r),
                rp.powi(3) * (r2 + r + 1.0),
            ];
            2.0 * poly(&zeta, b) / (r2 * rp * rp * b * b * (b * rp + r))
        }
        (_, 1) => {
            let zeta = [
                r3 * rp * rp,
                r2 * rp * (r2 + 5.0 * r + 1.0),
                poly(&[0.0, 1.0, 6.0, 12.0, 6.0, 1.0], r),
                rp * (r2 + 3.0 * r + 1.0).powi(2),
                rp * rp * (3.0 * r2 + 7.0 * r + 3.0),
                3.0 * rp.powi(3),
                rp * rp,
            ];
            np_ps_any_pi2(r, b) * poly(&zeta, b) / (r2 * b * b * (1.0 + b) * c * c)
        }
        _ => {
            let q = r2 + r + 1.0;
            let zeta = [
                r4 * rp.powi(3),
                r3 * rp * rp * (r2 + 6.0 * r + 1.0),
                r2 * rp * poly(&[1.0, 7.0, 18.0, 7.0, 1.0], r),
                r * poly(&[1.0, 8.0, 25.0, 39.0, 25.0, 8.0, 1.0], r),
                rp * (r2 + 3.0 * r + 1.0) * poly(&[1.0, 5.0, 7.0, 5.0, 1.0], r),
                q * poly(&[4.0, 19.0, 31.0, 19.0, 4.0], r),
                rp * q * (2.0 * r + 3.0) * (3.0 * r + 2.0),
                4.0 * rp * rp * q,
                rp * q,
            ];
            2.0 * np_ps_any_pi2(r, b) * poly(&zeta, b) / (r3 * b.powi(3) * (1.0 + b) * c.powi(3))
        }
    }
}

fn pw_any_b2_moments(r: f64, b: f64, k: usize) -> f64 {
    let (r2, r3, r4) = (r * r, r.powi(3), r.powi(4));
    let rp = 1.0 + r;
    let den = b * b * (r2 + r + 1.0) + b * r * rp + r2;
    if k == 1 {
        let alpha = [
            r3 * rp * rp,
            r2 * poly(&[1.0, 6.0, 9.0, 4.0], r),
            r * rp * poly(&[1.0, 5.0, 11.0, 6.0], r),
            rp * poly(&[1.0, 5.0, 11.0, 15.0, 7.0], r),
            poly(&[2.0, 9.0, 18.0, 23.0, 19.0, 6.0], r),
            poly(&[1.0, 4.0, 7.0, 8.0, 7.0, 2.0], r),
        ];
        poly(&alpha, b) / (r * b * rp * rp * (1.0 + b).powi(2) * den)
    } else {
        let zeta = [
            r4 * rp.powi(3),
            r3 * rp.powi(3) * (5.0 * r + 1.0),
            r2 * rp * rp * poly(&[1.0, 6.0, 17.0, 11.0], r),
            r * rp * poly(&[1.0, 7.0, 23.0, 47.0, 43.0, 14.0], r),
            rp * poly(&[1.0, 7.0, 23.0, 47.0, 69.0, 54.0, 17.0], r),
            poly(&[3.0, 18.0, 52.0, 95.0, 129.0, 132.0, 78.0, 19.0], r),
            poly(&[3.0, 16.0, 41.0, 66.0, 81.0, 87.0, 52.0, 12.0], r),
            poly(&[1.0, 5.0, 12.0, 18.0, 21.0, 24.0, 14.0, 3.0], r),
        ];
        2.0 * poly(&zeta, b) / (r2 * b * b * rp.powi(3) * (1.0 + b).powi(3) * den)
    }
}

fn pw_empty_moments(p: &SystemParams, k: usize) -> (f64, BranchTag) {
    let (r, b) = (p.rho(), p.beta());
    let bf = p.battery as f64;
    let rp = 1.0 + r;
    let c = 1.0 + r + b;
    let mass = pw_mass(p);
    let branch = pw_branch(p);
    let v = match (branch, k) {
        (BranchTag::BetaEqRhoOnePlusRho, 1) => {
            let psi3 = r * poly(&[1.0, 4.0, 4.0, 5.0, 2.0], r) * bf + poly(&[1.0, 4.0, 8.0, 10.0, 3.0], r);
            let psi2 = rp * (r * poly(&[2.0, 7.0, 7.0, 9.0, 4.0], r) * bf - poly(&[-1.0, -4.0, -9.0, -12.0, -1.0, 2.0], r));
            let psi1 = r * rp * rp * (poly(&[1.0, 3.0, 3.0, 4.0, 2.0], r) * bf - r * poly(&[-2.0, -3.0, 2.0, 2.0], r));
            mass.pi1 * (poly(&[r * r * rp.powi(4), psi1, psi2, psi3], b)) / (r * r * b * rp.powi(3) * c)
        }
        (BranchTag::BetaEqRhoOnePlusRho, _) => {
            let psi4 = r * poly(&[1.0, 5.0, 11.0, 11.0, 15.0, 11.0, 3.0], r) * bf
                + poly(&[1.0, 5.0, 13.0, 26.0, 35.0, 19.0, 4.0], r);
            let psi3 = r * rp * poly(&[2.0, 9.0, 18.0, 18.0, 25.0, 20.0, 6.0], r) * bf
                - rp * poly(&[-1.0, -5.0, -14.0, -30.0, -43.0, -20.0, 2.0, 3.0], r);
            let psi2 = r * rp * rp * poly(&[1.0, 4.0, 7.0, 7.0, 10.0, 9.0, 3.0], r) * bf
                - r * r * rp * rp * poly(&[-2.0, -10.0, -15.0, -3.0, 6.0, 3.0], r);
            let psi1 = r * r * rp.powi(4) * (2.0 * r * r + 4.0 * r + 1.0);
            2.0 * mass.pi1 * poly(&[r.powi(3) * rp.powi(5), psi1, psi2, psi3, psi4], b)
                / (r.powi(3) * b * b * rp.powi(4) * c)
        }
        (_, 1) => {
            let psi = [
                r * rp.powi(4),
                rp.powi(3) * (2.0 * r * r + 4.0 * r + 1.0),
                -rp * poly(&[-1.0, -6.0, -8.0, 1.0, 2.0], r),
                -r * poly(&[-2.0, -3.0, 3.0, 2.0], r),
            ];
            let psi4 = b * c * poly(&[1.0, 4.0, 4.0, 5.0, 2.0], r);
            let psi5 = b * rp * c * poly(&[1.0, 3.0, 3.0, 4.0, 2.0], r);
            mass.pi1 * (poly(&psi, b) + mass.theta1 * psi4 - (1.0 - mass.theta2) * psi5)
                / (r * b * rp.powi(3) * c)
        }
        _ => {
            let psi = [
                r * r * rp.powi(5),
                r * rp.powi(4) * (2.0 * r * r + 4.0 * r + 1.0),
                rp.powi(3) * poly(&[1.0, 5.0, 12.0, 10.0, 3.0], r),
                -rp * poly(&[-1.0, -7.0, -23.0, -33.0, -11.0, 5.0, 3.0], r),
                -r * poly(&[-2.0, -12.0, -18.0, 0.0, 8.0, 3.0], r),
            ];
            let psi5 = b * b * c * poly(&[1.0, 5.0, 11.0, 11.0, 15.0, 11.0, 3.0], r);
            let psi6 = b * b * rp * c * poly(&[1.0, 4.0, 7.0, 7.0, 10.0, 9.0, 3.0], r);
            2.0 * mass.pi1 * (poly(&psi, b) + mass.theta1 * psi5 - (1.0 - mass.theta2) * psi6)
                / (r * r * b * b * rp.powi(4) * c)
        }
    };
    (v, branch)
}

/// First or second moment in closed form.
///
/// Anytime harvesting is covered up to `B = 2` for every discipline (PW at `B = 1` is the
/// NP chain); larger batteries return [`ClosedFormError::UnsupportedB`].
pub fn moments_closed(p: &SystemParams, d: Discipline, m: EhMode, k: usize) -> Result<ClosedFormResult, ClosedFormError> {
    if k != 1 && k != 2 {
        return Err(ClosedFormError::UnsupportedOrder(k));
    }
    let (r, b, cap) = (p.rho(), p.beta(), p.battery);
    let unsupported = ClosedFormError::UnsupportedB { discipline: d, mode: m, battery: cap };
    let ((v, branch), source) = match (d, m) {
        (Discipline::LcfsNp, EhMode::WhenEmpty) => (np_empty_moments(p, k), "np-empty/moments"),
        (Discipline::LcfsPs, EhMode::WhenEmpty) => (ps_empty_moments(p, k), "ps-empty/moments"),
        (Discipline::LcfsPw, _) if cap == 1 => (np_empty_moments(p, k), "np-empty/moments"),
        (Discipline::LcfsPw, EhMode::WhenEmpty) => (pw_empty_moments(p, k), "pw-empty/moments"),
        (Discipline::LcfsNp, EhMode::Anytime) if cap <= 2 => {
            ((np_any_moments(r, b, cap, k), BranchTag::General), "np-any/moments")
        }
        (Discipline::LcfsPs, EhMode::Anytime) if cap <= 2 => {
            ((ps_any_moments(r, b, cap, k), BranchTag::General), "ps-any/moments")
        }
        (Discipline::LcfsPw, EhMode::Anytime) if cap == 2 => {
            ((pw_any_b2_moments(r, b, k), BranchTag::General), "pw-any-b2/moments")
        }
        _ => return Err(unsupported),
    };
    Ok(ClosedFormResult { value: v / p.mu.powi(k as i32), branch, source })
}

/// Moments of the same system without energy constraints, i.e. the `beta -> infinity`
/// limit. Preemption in waiting with empty-only harvesting keeps a dependence on `B`.
pub fn limits_beta_inf(p: &SystemParams, d: Discipline, m: EhMode, k: usize) -> Result<ClosedFormResult, ClosedFormError> {
    if k != 1 && k != 2 {
        return Err(ClosedFormError::UnsupportedOrder(k));
    }
    let r = p.rho();
    let rp = 1.0 + r;
    let q = r * r + r + 1.0;
    let np = |k| {
        if k == 1 {
            poly(&[1.0, 2.0, 2.0], r) / (r * r + r)
        } else {
            2.0 * poly(&[1.0, 2.0, 3.0, 3.0], r) / (r * r * rp)
        }
    };
    let pw_tail7 = poly(&[1.0, 5.0, 12.0, 18.0, 21.0, 24.0, 14.0, 3.0], r);
    let pw_head = poly(&[1.0, 4.0, 7.0, 8.0, 7.0, 2.0], r);
    let (v, source) = match (d, m) {
        (Discipline::LcfsNp, _) => (np(k), "np/limit"),
        (Discipline::LcfsPw, _) if p.battery == 1 => (np(k), "np/limit"),
        (Discipline::LcfsPs, _) => {
            let v = if k == 1 { 1.0 / r + 1.0 } else { 2.0 * (1.0 / (r * r) + 1.0 / r + 1.0) };
            (v, "ps/limit")
        }
        (Discipline::LcfsPw, EhMode::WhenEmpty) => {
            let w = (r / rp).powi(p.battery as i32 - 1);
            let den = q - r * r * w;
            let v = if k == 1 {
                (pw_head / rp - r * r * w * poly(&[-1.0, 3.0, 2.0], r)) / (r * rp * den)
            } else {
                2.0 * (pw_tail7 / rp - r * r * w * poly(&[-1.0, -5.0, 4.0, 8.0, 3.0], r)) / (r * r * rp * rp * den)
            };
            (v, "pw-empty/limit")
        }
        (Discipline::LcfsPw, EhMode::Anytime) => {
            let v = if k == 1 {
                pw_head / (r * rp * rp * q)
            } else {
                2.0 * pw_tail7 / (r * r * rp.powi(3) * q)
            };
            (v, "pw-any/limit")
        }
    };
    Ok(ClosedFormResult { value: v / p.mu.powi(k as i32), branch: BranchTag::General, source })
}

/// Where a moment value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    ClosedForm(&'static str),
    Solver,
}

/// Closed-form moment when one exists, otherwise the numeric solver value.
pub fn moment_or_solver(p: &SystemParams, d: Discipline, m: EhMode, k: usize) -> Result<(f64, MomentSource), ClosedFormError> {
    match moments_closed(p, d, m, k) {
        Ok(r) => Ok((r.value, MomentSource::ClosedForm(r.source))),
        Err(ClosedFormError::UnsupportedB { .. }) | Err(ClosedFormError::UnsupportedOrder(_)) => {
            Ok((solver::aoi_moment(&build_model(*p, d, m), k)?, MomentSource::Solver))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPair {
    NpMinusPs,
    PwMinusPs,
    NpMinusPw,
}

impl GapPair {
    pub fn disciplines(self) -> (Discipline, Discipline) {
        match self {
            GapPair::NpMinusPs => (Discipline::LcfsNp, Discipline::LcfsPs),
            GapPair::PwMinusPs => (Discipline::LcfsPw, Discipline::LcfsPs),
            GapPair::NpMinusPw => (Discipline::LcfsNp, Discipline::LcfsPw),
        }
    }
}

/// Signed difference of the `k`-th moments of two disciplines.
pub fn discipline_gap(p: &SystemParams, m: EhMode, k: usize, pair: GapPair) -> Result<f64, ClosedFormError> {
    let (a, b) = pair.disciplines();
    Ok(moment_or_solver(p, a, m, k)?.0 - moment_or_solver(p, b, m, k)?.0)
}

/// The published equal-utilization expression for the NP minus PS gap under empty-only
/// harvesting. It disagrees with the difference of the moment expressions and is only
/// reported, never asserted.
pub fn printed_gap_rho_eq_beta(p: &SystemParams, k: usize) -> f64 {
    let r = p.rho();
    let bf = p.battery as f64;
    if k == 1 {
        (bf * r * r + r * (bf + 1.0) + bf) / (p.mu * (bf * r * r + r * (2.0 * bf + 1.0) + bf + 1.0))
    } else {
        2.0 * poly(&[bf + 2.0, 4.0 * bf + 5.0, 5.0 * bf + 2.0, 2.0 * bf], r)
            / (p.mu * p.mu * poly(&[bf + 1.0, 3.0 * bf + 2.0, 3.0 * bf + 1.0, bf], r))
    }
}

/// Standard deviation from the first two moments.
pub fn std_dev(m1: f64, m2: f64) -> f64 {
    (m2 - m1 * m1).max(0.0).sqrt()
}
