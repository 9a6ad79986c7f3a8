//! The retarded system `x'(t) = A x(t) + f(x(t - τ)) + φ(t)`.
//!
//! Covers the exponential bound `‖e^{At}‖ ≤ N e^{-λt}`, the standing
//! assumptions, a fixed-step method-of-steps integrator, the bounded
//! solution obtained by burn-in, the contraction operator whose fixed point
//! is `Φ - Ψ`, and the convergence envelope for that difference.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::chaos_source::{lagrange4, GridFunction};
use crate::discrete_system::spectral_norm;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::report::{ladder_crossings, AssumptionReport, Check, CheckStatus, LadderCrossing};

/// Spacing of the grid on which `‖e^{At}‖ ≤ N e^{-λt}` is certified.
pub const STABILITY_GRID_STEP: f64 = 0.05;
/// Right end of the certification grid.
pub const STABILITY_GRID_END: f64 = 20.0;
/// Admissible shortfall on the certification grid.
pub const STABILITY_GRID_SLACK: f64 = 1e-10;
/// Default `λ` as a fraction of the spectral abscissa when no similarity
/// form is available.
pub const DEFAULT_LAMBDA_FRACTION: f64 = 0.9;
/// Default number of integration steps per delay.
pub const DEFAULT_STEPS_PER_DELAY: usize = 32;

type TimeMap = dyn Fn(f64) -> DVector<f64> + Send + Sync;

/// A forcing term with the interval on which it may be evaluated.
#[derive(Clone)]
pub struct Forcing {
    name: String,
    dim: usize,
    domain: (f64, f64),
    eval: Arc<TimeMap>,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Forcing {
    pub fn analytic(
        name: impl Into<String>,
        dim: usize,
        domain: (f64, f64),
        eval: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Forcing {
            name: name.into(),
            dim,
            domain,
            eval: Arc::new(eval),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Forcing::analytic("zero", dim, (f64::NEG_INFINITY, f64::INFINITY), move |_| {
            DVector::zeros(dim)
        })
    }

    pub fn constant(value: DVector<f64>) -> Self {
        let dim = value.len();
        Forcing::analytic("constant", dim, (f64::NEG_INFINITY, f64::INFINITY), move |_| {
            value.clone()
        })
    }

    /// Forcing read off a grid with four-point interpolation between nodes.
    pub fn from_grid(grid: GridFunction) -> Self {
        let domain = (grid.t_start(), grid.t_end());
        let dim = grid.dim();
        Forcing::analytic("grid", dim, domain, move |t| {
            let last = (grid.len() - 1) as f64;
            let pos = ((t - grid.t_start()) / grid.step()).clamp(0.0, last);
            grid.interpolate_at_position(pos)
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        (self.eval)(t)
    }

    pub fn covers(&self, from: f64, to: f64) -> bool {
        let tol = 1e-9 * (1.0 + from.abs().max(to.abs()));
        self.domain.0 <= from + tol && self.domain.1 >= to - tol
    }

    pub fn sample(&self, t_start: f64, step: f64, count: usize) -> Result<GridFunction> {
        GridFunction::from_fn(t_start, step, count, |t| self.eval(t))
    }
}

/// `A`, `τ`, `f` and `φ` of a retarded system.
#[derive(Debug, Clone)]
pub struct DelaySystemSpec {
    a: DMatrix<f64>,
    tau: f64,
    nonlinearity: Nonlinearity,
    forcing: Forcing,
}

impl DelaySystemSpec {
    pub fn new(a: DMatrix<f64>, tau: f64, nonlinearity: Nonlinearity, forcing: Forcing) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Domain(format!("A is {}x{}, not square", a.nrows(), a.ncols())));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("delay {tau} must be positive")));
        }
        let m = a.nrows();
        if nonlinearity.dim() != m || forcing.dim() != m {
            return Err(Error::Domain(format!(
                "dimension mismatch: A {m}, f {}, forcing {}",
                nonlinearity.dim(),
                forcing.dim()
            )));
        }
        Ok(DelaySystemSpec {
            a,
            tau,
            nonlinearity,
            forcing,
        })
    }

    pub fn with_forcing(&self, forcing: Forcing) -> Result<Self> {
        DelaySystemSpec::new(self.a.clone(), self.tau, self.nonlinearity.clone(), forcing)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        DelaySystemSpec::new(self.a.clone(), tau, self.nonlinearity.clone(), self.forcing.clone())
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn rhs(&self, t: f64, x: &DVector<f64>, f_delayed: &DVector<f64>) -> DVector<f64> {
        &self.a * x + f_delayed + self.forcing.eval(t)
    }
}

/// Eigenvalues of `A`, sorted by decreasing real part then imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut ev: Vec<_> = a.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    ev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    /// `A` is normal, so `‖e^{At}‖ = e^{αt}` with `α` the spectral abscissa.
    Normal,
    /// `A = P D P⁻¹` with `D` diagonal or a scaled rotation, `N = ‖P‖‖P⁻¹‖`.
    Similarity,
    /// `λ` a fixed fraction of the abscissa, `N` fitted on the grid.
    Fitted,
}

/// `N ≥ 1` and `λ > 0` with `‖e^{At}‖ ≤ N e^{-λt}` for `t ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityConstants {
    pub n: f64,
    pub lambda: f64,
    pub method: StabilityMethod,
    /// Largest real part among the eigenvalues of `A`.
    pub abscissa: f64,
}

impl StabilityConstants {
    pub fn bound(&self, t: f64) -> f64 {
        self.n * (-self.lambda * t).exp()
    }
}

/// Largest `‖e^{At}‖ - N e^{-λt}` over the certification grid.
pub fn stability_grid_excess(a: &DMatrix<f64>, constants: &StabilityConstants) -> Result<f64> {
    let count = (STABILITY_GRID_END / STABILITY_GRID_STEP).round() as usize;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=count {
        let t = k as f64 * STABILITY_GRID_STEP;
        let norm = spectral_norm(&(a * t).exp())?;
        worst = worst.max(norm - constants.bound(t));
    }
    Ok(worst)
}

fn is_normal(a: &DMatrix<f64>) -> bool {
    let at = a.transpose();
    let comm = a * &at - &at * a;
    comm.norm() <= 1e-12 * a.norm_squared().max(f64::MIN_POSITIVE)
}

fn condition_number(p: &DMatrix<f64>) -> Option<f64> {
    let inv = p.clone().try_inverse()?;
    Some(spectral_norm(p).ok()? * spectral_norm(&inv).ok()?)
}

/// Eigenvector of a 2×2 matrix for eigenvalue `mu`.
fn eigenvector_2x2(a: &DMatrix<f64>, mu: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    if q.abs() >= r.abs() {
        (Complex::new(q, 0.0), mu - p)
    } else {
        (mu - s, Complex::new(r, 0.0))
    }
}

/// `N` from a similarity `A = P D P⁻¹` with `D` diagonal or a scaled
/// rotation; only 2×2 matrices with distinct eigenvalues are handled.
fn similarity_n(a: &DMatrix<f64>, ev: &[Complex<f64>]) -> Option<f64> {
    if a.nrows() != 2 {
        return None;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let top = ev[0];
    if top.im.abs() > 1e-12 * scale {
        // v = u + i w for a + ib; then A [w u] = [w u] [[a, -b], [b, a]]
        let mu = if top.im > 0.0 { top } else { top.conj() };
        let (v0, v1) = eigenvector_2x2(a, mu);
        let p = DMatrix::from_row_slice(2, 2, &[v0.im, v0.re, v1.im, v1.re]);
        return condition_number(&p);
    }
    if (ev[0].re - ev[1].re).abs() <= 1e-9 * scale {
        return None;
    }
    let mut cols = Vec::new();
    for mu in ev.iter().take(2) {
        let (v0, v1) = eigenvector_2x2(a, *mu);
        let v = DVector::from_vec(vec![v0.re, v1.re]);
        let n = v.norm();
        if n == 0.0 {
            return None;
        }
        cols.push(v / n);
    }
    condition_number(&DMatrix::from_columns(&cols))
}

/// Constants for `‖e^{At}‖ ≤ N e^{-λt}`.
///
/// Normal matrices get `N = 1`, `λ = |abscissa|`. A 2×2 matrix with distinct
/// eigenvalues gets `λ = |abscissa|` and `N = ‖P‖‖P⁻¹‖` from its real
/// similarity form. Otherwise `λ = lambda_fraction · |abscissa|` and `N` is
/// the largest `‖e^{At}‖ e^{λt}` on the certification grid, inflated by 1%.
/// Every returned pair passes [`stability_grid_excess`].
pub fn stability_constants(a: &DMatrix<f64>, lambda_fraction: f64) -> Result<StabilityConstants> {
    if !a.is_square() || a.is_empty() {
        return Err(Error::Domain("A must be a nonempty square matrix".into()));
    }
    if !(lambda_fraction > 0.0 && lambda_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "lambda fraction {lambda_fraction} outside (0, 1)"
        )));
    }
    let ev = eigenvalues(a);
    let abscissa = ev[0].re;
    if !(abscissa < 0.0) {
        return Err(Error::SpectralAbscissa(abscissa));
    }
    let exact = if is_normal(a) {
        Some((1.0, StabilityMethod::Normal))
    } else {
        similarity_n(a, &ev).map(|n| (n, StabilityMethod::Similarity))
    };
    if let Some((n, method)) = exact {
        let c = StabilityConstants {
            n,
            lambda: -abscissa,
            method,
            abscissa,
        };
        if stability_grid_excess(a, &c)? <= STABILITY_GRID_SLACK {
            return Ok(c);
        }
    }
    let lambda = -lambda_fraction * abscissa;
    let count = (STABILITY_GRID_END / STABILITY_GRID_STEP).round() as usize;
    let mut peak = 1.0_f64;
    for k in 0..=count {
        let t = k as f64 * STABILITY_GRID_STEP;
        peak = peak.max(spectral_norm(&(a * t).exp())? * (lambda * t).exp());
    }
    Ok(StabilityConstants {
        n: 1.01 * peak,
        lambda,
        method: StabilityMethod::Fitted,
        abscissa,
    })
}

/// `λ - 2 N L_f e^{λτ/2}`.
pub fn a3_margin(spec: &DelaySystemSpec, c: &StabilityConstants) -> f64 {
    c.lambda - 2.0 * c.n * spec.nonlinearity().lipschitz() * (c.lambda * spec.tau() / 2.0).exp()
}

/// Spot-checks the bound and Lipschitz constant of `f` and evaluates the
/// margin `λ - 2 N L_f e^{λτ/2}`.
pub fn check_assumptions_a(spec: &DelaySystemSpec, constants: &StabilityConstants) -> AssumptionReport {
    let f = spec.nonlinearity();
    let spot = f.spot_check(1000, 0xA1A2);
    let margin = a3_margin(spec, constants);
    let checks = vec![
        Check::new("A1", CheckStatus::from_bool(spot.bound_ok))
            .value("declared_bound", f.bound())
            .value("max_observed_norm", spot.max_norm),
        Check::new("A2", CheckStatus::from_bool(spot.lipschitz_ok))
            .value("declared_lipschitz", f.lipschitz())
            .value("max_observed_ratio", spot.max_ratio),
        Check::new("A3", CheckStatus::from_bool(margin > 0.0))
            .value("lambda", constants.lambda)
            .value("n", constants.n)
            .value("tau", spec.tau())
            .value("margin", margin)
            .tolerance("margin_lower", 0.0),
    ];
    AssumptionReport { checks, margin }
}

/// Number of steps per delay; `step` must divide `τ` and give at least two.
pub fn lag_steps(tau: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("step {step} must be positive")));
    }
    let ratio = tau / step;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 * ratio.max(1.0) || k < 2.0 {
        return Err(Error::StepDivisibility { step, span: tau });
    }
    Ok(k as usize)
}

/// Method-of-steps integration with the classical fourth-order Runge–Kutta
/// scheme. Returns history and trajectory on one grid.
///
/// Delayed values at stage times that fall between nodes come from
/// four-point interpolation on the already computed grid.
pub fn integrate_mos_full(
    spec: &DelaySystemSpec,
    history: &GridFunction,
    t_end: f64,
    step: f64,
) -> Result<GridFunction> {
    let lag = lag_steps(spec.tau(), step)?;
    if (history.step() - step).abs() > 1e-12 * step {
        return Err(Error::GridMismatch(format!(
            "history step {} != step {step}",
            history.step()
        )));
    }
    if history.dim() != spec.dim() {
        return Err(Error::GridMismatch(format!(
            "history dimension {} != {}",
            history.dim(),
            spec.dim()
        )));
    }
    if history.len() < lag + 1 {
        return Err(Error::WindowExhausted(format!(
            "history has {} nodes, one delay needs {}",
            history.len(),
            lag + 1
        )));
    }
    let t0 = history.t_end();
    let span = (t_end - t0) / step;
    let n_steps = (span + 1e-9).floor();
    if n_steps < 0.0 {
        return Err(Error::Domain(format!("t_end {t_end} precedes the end of history {t0}")));
    }
    if (span - n_steps).abs() > 1e-6 {
        return Err(Error::StepDivisibility { step, span: t_end - t0 });
    }
    let n_steps = n_steps as usize;
    if !spec.forcing().covers(t0, t0 + n_steps as f64 * step) {
        return Err(Error::WindowExhausted(format!(
            "forcing domain {:?} does not cover [{t0}, {t_end}]",
            spec.forcing().domain()
        )));
    }

    let f = spec.nonlinearity();
    let h = step;
    let t_start = history.t_start();
    let first = history.len() - 1;
    let mut xs: Vec<DVector<f64>> = history.samples().to_vec();
    xs.reserve(n_steps);
    for n in 0..n_steps {
        let j = first + n;
        let t = t_start + j as f64 * h;
        let d = j - lag;
        let f0 = f.eval(&xs[d]);
        // keep the stencil on one side of t0, where the derivative may jump
        let mid = if d < first {
            lagrange4(&xs[..=first], d as f64 + 0.5)
        } else {
            lagrange4(&xs[first..=j], (d - first) as f64 + 0.5)
        };
        let fm = f.eval(&mid);
        let f1 = f.eval(&xs[d + 1]);
        let x = &xs[j];
        let k1 = spec.rhs(t, x, &f0);
        let k2 = spec.rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h)), &fm);
        let k3 = spec.rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)), &fm);
        let k4 = spec.rhs(t + h, &(x + &k3 * h), &f1);
        let next = x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(t + h));
        }
        xs.push(next);
    }
    GridFunction::new(t_start, step, xs)
}

/// Trajectory on `[t0, t_end]` from a history covering `[t0 - τ, t0]`.
pub fn integrate_mos(spec: &DelaySystemSpec, history: &GridFunction, t_end: f64, step: f64) -> Result<GridFunction> {
    let full = integrate_mos_full(spec, history, t_end, step)?;
    let first = history.len() - 1;
    GridFunction::new(history.t_end(), step, full.samples()[first..].to_vec())
}

/// `(2/λ) ln(1e8)`.
pub fn default_burn_in(lambda: f64) -> f64 {
    (2.0 / lambda) * 1e8f64.ln()
}

/// Approximates the unique bounded solution on `[window.0, window.1]` by
/// integrating from `window.0 - burn_in` with zero history and discarding
/// the burn-in prefix.
pub fn bounded_solution(spec: &DelaySystemSpec, window: (f64, f64), burn_in: f64, step: f64) -> Result<GridFunction> {
    let dim = spec.dim();
    bounded_solution_with_history(spec, window, burn_in, step, &|_| DVector::zeros(dim))
}

/// As [`bounded_solution`] with the history on the first delay interval
/// given by `history`.
pub fn bounded_solution_with_history(
    spec: &DelaySystemSpec,
    window: (f64, f64),
    burn_in: f64,
    step: f64,
    history: &dyn Fn(f64) -> DVector<f64>,
) -> Result<GridFunction> {
    let (ta, tb) = window;
    if !(tb > ta) {
        return Err(Error::Domain(format!("empty window [{ta}, {tb}]")));
    }
    if !(burn_in > 0.0) {
        return Err(Error::Domain(format!("burn-in {burn_in} must be positive")));
    }
    let lag = lag_steps(spec.tau(), step)?;
    let burn_steps = (burn_in / step - 1e-9).ceil() as usize;
    let hist_start = ta - (burn_steps + lag) as f64 * step;
    let hist = GridFunction::from_fn(hist_start, step, lag + 1, history)?;
    let full = integrate_mos_full(spec, &hist, tb, step)?;
    let keep = &full.samples()[lag + burn_steps..];
    GridFunction::new(ta, step, keep.to_vec())
}

/// `K₁`, `K₂`, `M₀` together with the sup norms they were built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofConstants {
    pub k1: f64,
    pub k2: f64,
    pub m0: f64,
    pub m_phi: f64,
    pub m_psi: f64,
}

/// `K₁ = N²(2M_f + M_φ + M_ψ) / (λ - 2NL_f e^{λτ/2})`,
/// `K₂ = N / (λ - NL_f)`,
/// `M₀ = (N²(2M_f + M_φ + M_ψ) + N(M_φ + M_ψ)) / (λ - NL_f)`.
pub fn proof_constants(
    spec: &DelaySystemSpec,
    constants: &StabilityConstants,
    m_phi: f64,
    m_psi: f64,
) -> Result<ProofConstants> {
    let (n, lambda) = (constants.n, constants.lambda);
    let m_f = spec.nonlinearity().bound();
    let l_f = spec.nonlinearity().lipschitz();
    let d1 = a3_margin(spec, constants);
    if !(d1 > 0.0) {
        return Err(Error::NonPositiveDenominator {
            name: "lambda - 2 N L_f exp(lambda tau / 2)",
            value: d1,
        });
    }
    let d2 = lambda - n * l_f;
    if !(d2 > 0.0) {
        return Err(Error::NonPositiveDenominator {
            name: "lambda - N L_f",
            value: d2,
        });
    }
    let head = n * n * (2.0 * m_f + m_phi + m_psi);
    Ok(ProofConstants {
        k1: head / d1,
        k2: n / d2,
        m0: (head + n * (m_phi + m_psi)) / d2,
        m_phi,
        m_psi,
    })
}

/// `K₁ e^{-λ(t-α)/2} + K₂ γ ε`, valid for `t ≥ α - τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayEnvelope {
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
    pub tau: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl DelayEnvelope {
    /// Requires `0 < γ < 1/(K₁ + K₂)` and `ε > 0`.
    pub fn new(
        proof: &ProofConstants,
        constants: &StabilityConstants,
        tau: f64,
        alpha: f64,
        gamma: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let cap = 1.0 / (proof.k1 + proof.k2);
        if !(gamma > 0.0 && gamma < cap) {
            return Err(Error::Precondition(format!("gamma {gamma} must lie in (0, {cap})")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Precondition(format!("epsilon {epsilon} must be positive")));
        }
        Ok(DelayEnvelope {
            k1: proof.k1,
            k2: proof.k2,
            lambda: constants.lambda,
            tau,
            alpha,
            gamma,
            epsilon,
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        self.k1 * (-self.lambda * (t - self.alpha) / 2.0).exp() + self.k2 * self.gamma * self.epsilon
    }

    /// `α + (2/λ) ln(1/(γε))`, past which the envelope is below `ε`.
    pub fn settling_time(&self) -> f64 {
        self.alpha + (2.0 / self.lambda) * (1.0 / (self.gamma * self.epsilon)).ln()
    }
}

/// `0.5 / (K₁ + K₂)`.
pub fn default_gamma(proof: &ProofConstants) -> f64 {
    0.5 / (proof.k1 + proof.k2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub location: f64,
    pub difference: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub checked_from: f64,
    pub checked: usize,
    pub slack: f64,
    pub max_excess: f64,
    pub violation_count: usize,
    pub violations: Vec<Violation>,
    pub settling_time: f64,
    /// Largest difference at or after [`DelayEnvelope::settling_time`].
    pub sup_after_settling: Option<f64>,
    /// First time after which the difference stays below `ε`.
    pub below_epsilon_from: Option<f64>,
    pub ladder: Vec<LadderCrossing>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    /// Whether the tail past the settling time is below `ε`.
    pub fn tail_below(&self, epsilon: f64) -> bool {
        self.sup_after_settling.is_none_or(|s| s < epsilon)
    }
}

/// Checks `‖Φ(t) - Ψ(t)‖ ≤ envelope(t) + slack` for every grid time
/// `t ≥ α - τ`, and measures the tail past the settling time.
pub fn convergence_check(
    phi: &GridFunction,
    psi: &GridFunction,
    envelope: &DelayEnvelope,
    slack: f64,
    ladder: &[f64],
) -> Result<ConvergenceReport> {
    phi.ensure_aligned(psi, "convergence_check")?;
    let from = envelope.alpha - envelope.tau;
    let settle = envelope.settling_time();
    let mut profile = Vec::new();
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut sup_after: Option<f64> = None;
    for k in phi.first_index_at_or_after(from)..phi.len() {
        let t = phi.time(k);
        let d = (phi.sample(k) - psi.sample(k)).norm();
        let env = envelope.at(t);
        profile.push((t, d));
        max_excess = max_excess.max(d - env);
        if d > env + slack {
            violation_count += 1;
            if violations.len() < 20 {
                violations.push(Violation {
                    location: t,
                    difference: d,
                    envelope: env,
                });
            }
        }
        if t >= settle {
            sup_after = Some(sup_after.map_or(d, |s: f64| s.max(d)));
        }
    }
    let below = ladder_crossings(&profile, &[envelope.epsilon])[0].first_location;
    Ok(ConvergenceReport {
        checked_from: from,
        checked: profile.len(),
        slack,
        max_excess,
        violation_count,
        violations,
        settling_time: settle,
        sup_after_settling: sup_after,
        below_epsilon_from: below,
        ladder: ladder_crossings(&profile, ladder),
    })
}

/// The operator `T` whose fixed point is `Γ = Φ - Ψ`:
/// `T(Γ)(t) = Γ(t)` for `t ≤ α`, and for `t > α`
/// `e^{A(t-α)} Γ(α) + ∫_α^t e^{A(t-s)} [f(Γ(s-τ) + Ψ(s-τ)) - f(Ψ(s-τ)) + θ(s)] ds`.
///
/// The integral uses the composite trapezoid rule in product form: the
/// integrand's non-exponential factor is linear between nodes and the
/// exponential kernel is integrated exactly, so each step is
/// `G_{j+1} = e^{Ah} G_j + W₀ F_j + W₁ F_{j+1}`.
pub struct ContractionOperator<'a> {
    spec: &'a DelaySystemSpec,
    psi: &'a GridFunction,
    theta: &'a GridFunction,
    alpha_index: usize,
    lag: usize,
    propagator: DMatrix<f64>,
    w_left: DMatrix<f64>,
    w_right: DMatrix<f64>,
}

impl<'a> ContractionOperator<'a> {
    /// `α` is snapped to the nearest grid node and must leave one delay of
    /// grid to its left.
    pub fn new(spec: &'a DelaySystemSpec, psi: &'a GridFunction, theta: &'a GridFunction, alpha: f64) -> Result<Self> {
        psi.ensure_aligned(theta, "psi/theta")?;
        let h = psi.step();
        let lag = lag_steps(spec.tau(), h)?;
        let pos = ((alpha - psi.t_start()) / h).round();
        if pos < lag as f64 || pos >= psi.len() as f64 {
            return Err(Error::GridMismatch(format!(
                "alpha {alpha} needs one delay of grid before it inside [{}, {}]",
                psi.t_start(),
                psi.t_end()
            )));
        }
        let (propagator, w_left, w_right) = exponential_trapezoid_weights(spec.a(), h);
        Ok(ContractionOperator {
            spec,
            psi,
            theta,
            alpha_index: pos as usize,
            lag,
            propagator,
            w_left,
            w_right,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.psi.time(self.alpha_index)
    }

    fn integrand(&self, gamma: &GridFunction, j: usize) -> DVector<f64> {
        let f = self.spec.nonlinearity();
        let d = j - self.lag;
        let psi_d = self.psi.sample(d);
        f.eval(&(gamma.sample(d) + psi_d)) - f.eval(psi_d) + self.theta.sample(j)
    }

    pub fn apply(&self, gamma: &GridFunction) -> Result<GridFunction> {
        gamma.ensure_aligned(self.psi, "picard_apply")?;
        let mut out: Vec<DVector<f64>> = gamma.samples()[..=self.alpha_index].to_vec();
        let mut g = gamma.sample(self.alpha_index).clone();
        let mut f_prev = self.integrand(gamma, self.alpha_index);
        for j in self.alpha_index..gamma.len() - 1 {
            let f_next = self.integrand(gamma, j + 1);
            g = &self.propagator * &g + &self.w_left * &f_prev + &self.w_right * &f_next;
            out.push(g.clone());
            f_prev = f_next;
        }
        GridFunction::new(gamma.t_start(), gamma.step(), out)
    }

    /// `Γ₀`: equal to `diff` up to `α`, then `e^{A(t-α)} diff(α)`.
    pub fn initial_iterate(&self, diff: &GridFunction) -> Result<GridFunction> {
        diff.ensure_aligned(self.psi, "initial_iterate")?;
        let mut out: Vec<DVector<f64>> = diff.samples()[..=self.alpha_index].to_vec();
        let mut g = diff.sample(self.alpha_index).clone();
        for _ in self.alpha_index + 1..diff.len() {
            g = &self.propagator * &g;
            out.push(g.clone());
        }
        GridFunction::new(diff.t_start(), diff.step(), out)
    }
}

/// One application of [`ContractionOperator`].
pub fn picard_apply(
    spec: &DelaySystemSpec,
    psi_solution: &GridFunction,
    theta: &GridFunction,
    gamma: &GridFunction,
    alpha: f64,
) -> Result<GridFunction> {
    ContractionOperator::new(spec, psi_solution, theta, alpha)?.apply(gamma)
}

/// `e^{Ah}` and the weights of `∫_0^h e^{A(h-u)} [F₀(1 - u/h) + F₁ u/h] du`,
/// read off the exponential of the block matrix `[[A, I, 0], [0, 0, I], [0, 0, 0]] h`.
fn exponential_trapezoid_weights(a: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = a.nrows();
    let mut block = DMatrix::zeros(3 * m, 3 * m);
    block.view_mut((0, 0), (m, m)).copy_from(a);
    for i in 0..m {
        block[(i, m + i)] = 1.0;
        block[(m + i, 2 * m + i)] = 1.0;
    }
    let e = (block * h).exp();
    let propagator = e.view((0, 0), (m, m)).into_owned();
    let int0 = e.view((0, m), (m, m)).into_owned();
    let int1 = e.view((0, 2 * m), (m, m)).into_owned() / h;
    (propagator, &int0 - &int1, int1)
}
