//! The discrete quasilinear system `w_{i+1} = B w_i + g(w_i) + φ_i`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constructs::{numerical_rank, VectorSequence};
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::report::{ladder_crossings, AssumptionReport, Check, CheckStatus, LadderCrossing};

const POWER_ITERATION_CAP: usize = 1_000_000;
const POWER_ITERATION_TOL: f64 = 1e-12;

/// Largest singular value, by power iteration on `BᵀB`.
///
/// Iterates until the eigen-residual `‖BᵀB v - μ v‖` falls below
/// `1e-12 · μ`, which bounds the relative error of `μ`.
pub fn spectral_norm(b: &DMatrix<f64>) -> Result<f64> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    if b.is_empty() {
        return Ok(0.0);
    }
    let gram = b.transpose() * b;
    // start from the heaviest column of the Gram matrix
    let (best, _) = gram
        .column_iter()
        .enumerate()
        .map(|(j, c)| (j, c.norm()))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut v: DVector<f64> = gram.column(best).into_owned();
    let start_norm = v.norm();
    if start_norm == 0.0 {
        return Ok(0.0);
    }
    v /= start_norm;
    for _ in 0..POWER_ITERATION_CAP {
        let w = &gram * &v;
        let mu = v.dot(&w);
        let residual = (&w - &v * mu).norm();
        if residual <= POWER_ITERATION_TOL * mu {
            return Ok(mu.sqrt());
        }
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w / wn;
    }
    Err(Error::NoConvergence(POWER_ITERATION_CAP))
}

/// `B`, `g` and the forcing window of a discrete system.
#[derive(Debug, Clone)]
pub struct DiscreteSystemSpec {
    b: DMatrix<f64>,
    nonlinearity: Nonlinearity,
    forcing: VectorSequence,
    norm_b: f64,
}

impl DiscreteSystemSpec {
    pub fn new(b: DMatrix<f64>, nonlinearity: Nonlinearity, forcing: VectorSequence) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::Domain(format!("B is {}x{}, not square", b.nrows(), b.ncols())));
        }
        let p = b.nrows();
        if nonlinearity.dim() != p || forcing.dim() != p {
            return Err(Error::Domain(format!(
                "dimension mismatch: B {p}, g {}, forcing {}",
                nonlinearity.dim(),
                forcing.dim()
            )));
        }
        let norm_b = spectral_norm(&b)?;
        Ok(DiscreteSystemSpec {
            b,
            nonlinearity,
            forcing,
            norm_b,
        })
    }

    /// Same `B` and `g` with a different forcing.
    pub fn with_forcing(&self, forcing: VectorSequence) -> Result<Self> {
        if forcing.dim() != self.dim() {
            return Err(Error::Domain(format!(
                "forcing dimension {} != {}",
                forcing.dim(),
                self.dim()
            )));
        }
        Ok(DiscreteSystemSpec {
            forcing,
            ..self.clone()
        })
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn forcing(&self) -> &VectorSequence {
        &self.forcing
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn norm_b(&self) -> f64 {
        self.norm_b
    }

    /// `‖B‖ + L_g`, the per-step contraction factor.
    pub fn contraction_rate(&self) -> f64 {
        self.norm_b + self.nonlinearity.lipschitz()
    }

    /// `1 - ‖B‖ - L_g`.
    pub fn margin(&self) -> f64 {
        1.0 - self.contraction_rate()
    }

    /// `B w + g(w) + φ_i`.
    pub fn step(&self, i: i64, w: &DVector<f64>) -> Result<DVector<f64>> {
        let phi = self
            .forcing
            .get(i)
            .ok_or_else(|| Error::WindowExhausted(format!("forcing has no value at index {i}")))?;
        Ok(&self.b * w + self.nonlinearity.eval(w) + phi)
    }

    fn require_contraction(&self) -> Result<()> {
        if self.margin() > 0.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "contraction margin 1 - ‖B‖ - L_g = {} is not positive",
                self.margin()
            )))
        }
    }
}

/// Spot-checks the declared bound and Lipschitz constant of `g` and
/// evaluates the margin `1 - ‖B‖ - L_g`. Nonsingularity of `B` is reported
/// as a separate check.
pub fn check_assumptions_b(spec: &DiscreteSystemSpec) -> AssumptionReport {
    let g = spec.nonlinearity();
    let spot = g.spot_check(1000, 0xB1B2);
    let margin = spec.margin();
    let rank = numerical_rank(spec.b());
    let checks = vec![
        Check::new("B1", CheckStatus::from_bool(spot.bound_ok))
            .value("declared_bound", g.bound())
            .value("max_observed_norm", spot.max_norm),
        Check::new("B2", CheckStatus::from_bool(spot.lipschitz_ok))
            .value("declared_lipschitz", g.lipschitz())
            .value("max_observed_ratio", spot.max_ratio),
        Check::new("B3", CheckStatus::from_bool(margin > 0.0))
            .value("spectral_norm", spec.norm_b())
            .value("margin", margin)
            .tolerance("margin_lower", 0.0),
        Check::new("B_nonsingular", CheckStatus::from_bool(rank == spec.dim())).value("rank", rank as f64),
    ];
    AssumptionReport { checks, margin }
}

/// Forward orbit of length `steps + 1` from `w0` placed at the first
/// forcing index.
pub fn iterate(spec: &DiscreteSystemSpec, w0: &DVector<f64>, steps: usize) -> Result<VectorSequence> {
    iterate_from(spec, spec.forcing().base_index(), w0, steps)
}

/// Forward orbit `w_start, …, w_{start+steps}` with `w_start = w0`.
pub fn iterate_from(spec: &DiscreteSystemSpec, start: i64, w0: &DVector<f64>, steps: usize) -> Result<VectorSequence> {
    if w0.len() != spec.dim() {
        return Err(Error::Domain(format!(
            "initial state has dimension {} != {}",
            w0.len(),
            spec.dim()
        )));
    }
    if !spec.forcing().contains_range(start, start + steps as i64) {
        return Err(Error::WindowExhausted(format!(
            "forcing [{}, {}) does not cover [{start}, {})",
            spec.forcing().base_index(),
            spec.forcing().end_index(),
            start + steps as i64
        )));
    }
    let mut values = Vec::with_capacity(steps + 1);
    let mut w = w0.clone();
    values.push(w.clone());
    for n in 0..steps {
        let i = start + n as i64;
        w = spec.step(i, &w)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite((i + 1) as f64));
        }
        values.push(w.clone());
    }
    VectorSequence::new(start, values)
}

/// A priori bound `(M_g + M_φ) / (1 - ‖B‖)` on the bounded orbit.
pub fn orbit_scale(spec: &DiscreteSystemSpec) -> f64 {
    (spec.nonlinearity().bound() + spec.forcing().sup_norm()) / (1.0 - spec.norm_b())
}

/// `⌈ln(tol (1 - ‖B‖ - L_g) / scale) / ln(‖B‖ + L_g)⌉`, at least one.
pub fn burn_in_length(spec: &DiscreteSystemSpec, tol: f64) -> Result<usize> {
    spec.require_contraction()?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let scale = orbit_scale(spec);
    let q = spec.contraction_rate();
    if scale == 0.0 || q == 0.0 {
        return Ok(1);
    }
    let n = ((tol * spec.margin() / scale).ln() / q.ln()).ceil();
    Ok(n.max(1.0) as usize)
}

/// Approximates the unique bounded orbit on `window` by iterating from the
/// zero state through a burn-in sized by [`burn_in_length`].
pub fn bounded_orbit(spec: &DiscreteSystemSpec, window: Range<i64>, tol: f64) -> Result<VectorSequence> {
    bounded_orbit_from(spec, window, tol, &DVector::zeros(spec.dim()))
}

/// As [`bounded_orbit`], starting the burn-in from `initial`.
pub fn bounded_orbit_from(
    spec: &DiscreteSystemSpec,
    window: Range<i64>,
    tol: f64,
    initial: &DVector<f64>,
) -> Result<VectorSequence> {
    if window.start >= window.end {
        return Err(Error::Domain(format!("empty window {window:?}")));
    }
    let burn_in = burn_in_length(spec, tol)? as i64;
    let start = window.start - burn_in;
    let steps = (window.end - 1 - start) as usize;
    let orbit = iterate_from(spec, start, initial, steps)?;
    orbit.window(window.start, window.end)
}

/// The bounded orbit at index `i` by the truncated sum
/// `Σ_{j ≤ i} B^{i-j} (g(Φ_{j-1}) + φ_{j-1})`, using `orbit` for the
/// values of `Φ` inside `g`. Terms are dropped once
/// `‖B‖^k (M_g + M_φ) / (1 - ‖B‖) < tol`.
pub fn bounded_orbit_by_sum(
    spec: &DiscreteSystemSpec,
    orbit: &VectorSequence,
    i: i64,
    tol: f64,
) -> Result<DVector<f64>> {
    let nb = spec.norm_b();
    if !(nb < 1.0) {
        return Err(Error::Precondition(format!(
            "‖B‖ = {nb} must be below 1 for the sum to converge"
        )));
    }
    let scale = orbit_scale(spec);
    let mut terms = 0_i64;
    let mut w = scale;
    while w >= tol && terms < 100_000 {
        w *= nb;
        terms += 1;
    }
    let mut power = DMatrix::identity(spec.dim(), spec.dim());
    let mut acc = DVector::zeros(spec.dim());
    for j in (i - terms..=i).rev() {
        let prev = orbit
            .get(j - 1)
            .ok_or_else(|| Error::WindowExhausted(format!("orbit has no value at index {}", j - 1)))?;
        let forcing = spec
            .forcing()
            .get(j - 1)
            .ok_or_else(|| Error::WindowExhausted(format!("forcing has no value at index {}", j - 1)))?;
        acc += &power * (spec.nonlinearity().eval(prev) + forcing);
        power = &power * spec.b();
    }
    Ok(acc)
}

/// Largest admissible `γ`:
/// `(1 / (1 - ‖B‖ - L_g) + (2M_g + M_φ + M_ψ) / (1 - ‖B‖))^{-1}`.
pub fn gamma_upper_bound(spec: &DiscreteSystemSpec, m_phi: f64, m_psi: f64) -> f64 {
    let c = 2.0 * spec.nonlinearity().bound() + m_phi + m_psi;
    1.0 / (1.0 / spec.margin() + c / (1.0 - spec.norm_b()))
}

/// The geometric envelope for `‖Φ_i - Ψ_i‖`, `i > α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallEnvelope {
    pub alpha: i64,
    pub gamma: f64,
    pub epsilon: f64,
    /// `‖B‖ + L_g`.
    pub rate: f64,
    /// `γε / (1 - ‖B‖ - L_g)`, the value approached as `i → ∞`.
    pub limit: f64,
    /// `(2M_g + M_φ + M_ψ) / (1 - ‖B‖)`.
    pub transient: f64,
    pub first_index: i64,
    pub values: Vec<f64>,
}

impl GronwallEnvelope {
    /// Closed-form value at any `i > α`.
    pub fn at(&self, i: i64) -> f64 {
        let q = self.rate.powi((i - self.alpha) as i32);
        self.limit * (1.0 - q) + self.transient * q
    }

    pub fn get(&self, i: i64) -> Option<f64> {
        let k = usize::try_from(i - self.first_index).ok()?;
        self.values.get(k).copied()
    }

    /// `ln(1/(γε)) / ln(1/(‖B‖ + L_g))`: index offset past `α` after which
    /// the envelope is below `ε`.
    pub fn settling_offset(&self) -> f64 {
        (1.0 / (self.gamma * self.epsilon)).ln() / (1.0 / self.rate).ln()
    }
}

/// Evaluates the envelope
/// `γε/(1-‖B‖-L_g) [1 - (‖B‖+L_g)^{i-α}] + (2M_g+M_φ+M_ψ)/(1-‖B‖) (‖B‖+L_g)^{i-α}`
/// for `i > α` inside `window`.
///
/// `γ` must lie strictly below [`gamma_upper_bound`].
#[allow(clippy::too_many_arguments)]
pub fn gronwall_envelope(
    spec: &DiscreteSystemSpec,
    m_phi: f64,
    m_psi: f64,
    alpha: i64,
    gamma: f64,
    epsilon: f64,
    window: Range<i64>,
) -> Result<GronwallEnvelope> {
    spec.require_contraction()?;
    let bound = gamma_upper_bound(spec, m_phi, m_psi);
    if !(gamma > 0.0 && gamma < bound) {
        return Err(Error::Precondition(format!("gamma {gamma} must lie in (0, {bound})")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon {epsilon} must be positive")));
    }
    let rate = spec.contraction_rate();
    let mut env = GronwallEnvelope {
        alpha,
        gamma,
        epsilon,
        rate,
        limit: gamma * epsilon / spec.margin(),
        transient: (2.0 * spec.nonlinearity().bound() + m_phi + m_psi) / (1.0 - spec.norm_b()),
        first_index: window.start.max(alpha + 1),
        values: Vec::new(),
    };
    env.values = (env.first_index..window.end).map(|i| env.at(i)).collect();
    Ok(env)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeViolation {
    pub location: f64,
    pub difference: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteConvergenceReport {
    pub alpha: i64,
    pub checked: usize,
    pub slack: f64,
    /// Largest `‖Φ_i - Ψ_i‖ - envelope_i` seen (negative when dominated).
    pub max_excess: f64,
    pub violation_count: usize,
    /// First few violations, in index order.
    pub violations: Vec<EnvelopeViolation>,
    pub ladder: Vec<LadderCrossing>,
}

impl DiscreteConvergenceReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Checks `‖Φ_i - Ψ_i‖ ≤ envelope_i + slack` for every `i > α` in the common
/// window and records, for each ladder rung, the first index after which the
/// difference stays below it.
pub fn convergence_check_discrete(
    phi: &VectorSequence,
    psi: &VectorSequence,
    envelope: &GronwallEnvelope,
    slack: f64,
    ladder: &[f64],
) -> Result<DiscreteConvergenceReport> {
    let diff = phi.zip_map(psi, |a, b| a - b)?;
    let mut profile = Vec::new();
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for i in diff.base_index()..diff.end_index() {
        if i <= envelope.alpha {
            continue;
        }
        let d = diff.get(i).expect("index inside window").norm();
        let env = envelope.get(i).unwrap_or_else(|| envelope.at(i));
        profile.push((i as f64, d));
        max_excess = max_excess.max(d - env);
        if d > env + slack {
            violation_count += 1;
            if violations.len() < 20 {
                violations.push(EnvelopeViolation {
                    location: i as f64,
                    difference: d,
                    envelope: env,
                });
            }
        }
    }
    Ok(DiscreteConvergenceReport {
        alpha: envelope.alpha,
        checked: profile.len(),
        slack,
        max_excess,
        violation_count,
        violations,
        ladder: ladder_crossings(&profile, ladder),
    })
}
