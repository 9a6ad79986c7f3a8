//! The chaotic source: logistic orbits, the exponentially smoothed step
//! function built from them, and the truncated Bebutov metric.
//!
//! Orbits are generated forward from a seed and labelled starting at index
//! zero. A caller that needs the orbit to cover negative times can relabel it
//! with [`ScalarOrbit::rebased`]; the labelling carries no dynamics of its own.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Parameter of the logistic map used throughout.
pub const LOGISTIC_R: f64 = 3.91;
/// Default seed for generated orbits.
pub const DEFAULT_SEED: f64 = 0.41;
/// Default number of discarded transient iterations.
pub const DEFAULT_BURN_IN: usize = 1000;
/// Time units discarded at the left edge of a convolved signal.
pub const CONVOLUTION_WARMUP: f64 = 20.0;

/// One application of `x -> r x (1 - x)`.
pub fn logistic_step(x: f64, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("logistic state {x} outside [0, 1]")));
    }
    if !(r > 0.0 && r <= 4.0) {
        return Err(Error::Domain(format!("logistic parameter {r} outside (0, 4]")));
    }
    Ok(r * x * (1.0 - x))
}

/// A finite window `values[k] = κ_{base_index + k}` of a real orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarOrbit {
    base_index: i64,
    values: Vec<f64>,
}

impl ScalarOrbit {
    /// Wraps recorded values; every value must lie in `[0, 1]`.
    pub fn new(base_index: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("orbit must be nonempty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("orbit value {v} outside [0, 1]")));
        }
        Ok(ScalarOrbit { base_index, values })
    }

    pub fn base_index(&self) -> i64 {
        self.base_index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index one past the last recorded value.
    pub fn end_index(&self) -> i64 {
        self.base_index + self.values.len() as i64
    }

    pub fn get(&self, i: i64) -> Option<f64> {
        let k = i.checked_sub(self.base_index)?;
        usize::try_from(k).ok().and_then(|k| self.values.get(k).copied())
    }

    /// Same values, relabelled so that the first one carries `base_index`.
    pub fn rebased(&self, base_index: i64) -> Self {
        ScalarOrbit {
            base_index,
            values: self.values.clone(),
        }
    }

    /// Largest `|v_{k+1} - r v_k (1 - v_k)|` over consecutive pairs.
    pub fn max_residual(&self, r: f64) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - r * w[0] * (1.0 - w[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Iterates the logistic map `burn_in` times from `seed`, then records
/// `length` consecutive values starting with the current state.
pub fn logistic_orbit(seed: f64, burn_in: usize, length: usize) -> Result<ScalarOrbit> {
    logistic_orbit_with(seed, LOGISTIC_R, burn_in, length)
}

pub fn logistic_orbit_with(seed: f64, r: f64, burn_in: usize, length: usize) -> Result<ScalarOrbit> {
    if !(seed > 0.0 && seed < 1.0) {
        return Err(Error::Domain(format!("seed {seed} must lie strictly inside (0, 1)")));
    }
    if length == 0 {
        return Err(Error::Domain("orbit length must be at least 1".into()));
    }
    let mut x = seed;
    for _ in 0..burn_in {
        x = logistic_step(x, r)?;
    }
    let mut values = Vec::with_capacity(length);
    values.push(x);
    for _ in 1..length {
        x = logistic_step(x, r)?;
        values.push(x);
    }
    ScalarOrbit::new(0, values)
}

/// Right-continuous step function equal to `levels[i - base]` on `[i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantFunction {
    base_index: i64,
    levels: Vec<f64>,
}

impl PiecewiseConstantFunction {
    pub fn from_orbit(orbit: &ScalarOrbit) -> Self {
        PiecewiseConstantFunction {
            base_index: orbit.base_index,
            levels: orbit.values.clone(),
        }
    }

    /// Covered interval `[base, base + len)`.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.base_index as f64,
            (self.base_index + self.levels.len() as i64) as f64,
        )
    }

    pub fn value(&self, t: f64) -> Option<f64> {
        let i = t.floor() as i64 - self.base_index;
        usize::try_from(i).ok().and_then(|i| self.levels.get(i).copied())
    }
}

/// An m-vector function sampled at `t_start + k * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    t_start: f64,
    step: f64,
    samples: Vec<DVector<f64>>,
}

impl GridFunction {
    pub fn new(t_start: f64, step: f64, samples: Vec<DVector<f64>>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !t_start.is_finite() {
            return Err(Error::Domain(format!("invalid grid start {t_start} / step {step}")));
        }
        let dim = match samples.first() {
            Some(s) => s.len(),
            None => return Err(Error::Domain("grid function needs at least one sample".into())),
        };
        for (k, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Domain(format!("sample {k} has dimension {} != {dim}", s.len())));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(t_start + k as f64 * step));
            }
        }
        Ok(GridFunction { t_start, step, samples })
    }

    /// Samples `f` at `count` nodes.
    pub fn from_fn(t_start: f64, step: f64, count: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let samples = (0..count).map(|k| f(t_start + k as f64 * step)).collect();
        Self::new(t_start, step, samples)
    }

    pub fn from_scalars(t_start: f64, step: f64, values: &[f64]) -> Result<Self> {
        Self::new(
            t_start,
            step,
            values.iter().map(|&v| DVector::from_element(1, v)).collect(),
        )
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.step
    }

    pub fn sample(&self, k: usize) -> &DVector<f64> {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<DVector<f64>> {
        self.samples
    }

    /// Node index whose time is within `1e-6 * step` of `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.t_start) / self.step;
        let k = pos.round();
        if (pos - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.samples.len() {
            return None;
        }
        Some(k as usize)
    }

    /// Index of the first node at or after `t` (up to grid tolerance).
    pub fn first_index_at_or_after(&self, t: f64) -> usize {
        let pos = (t - self.t_start) / self.step;
        let k = (pos - 1e-6).ceil().max(0.0) as usize;
        k.min(self.samples.len())
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[c]).collect()
    }

    /// Same start, step and length.
    pub fn is_aligned_with(&self, other: &GridFunction) -> bool {
        self.samples.len() == other.samples.len()
            && (self.step - other.step).abs() <= 1e-12 * self.step
            && (self.t_start - other.t_start).abs() <= 1e-9 * self.step.max(1e-300)
    }

    pub fn ensure_aligned(&self, other: &GridFunction, what: &str) -> Result<()> {
        if self.is_aligned_with(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: [{}, step {}, n {}] vs [{}, step {}, n {}]",
                self.t_start,
                self.step,
                self.samples.len(),
                other.t_start,
                other.step,
                other.samples.len()
            )))
        }
    }

    /// Pointwise combination of two aligned grids.
    pub fn zip_map(
        &self,
        other: &GridFunction,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    ) -> Result<GridFunction> {
        self.ensure_aligned(other, "zip_map")?;
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| f(a, b)).collect();
        GridFunction::new(self.t_start, self.step, samples)
    }

    pub fn map(&self, f: impl Fn(f64, &DVector<f64>) -> DVector<f64>) -> Result<GridFunction> {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| f(self.time(k), s))
            .collect();
        GridFunction::new(self.t_start, self.step, samples)
    }

    /// Nodes whose time lies in `[t_from, t_to]`.
    pub fn slice_time(&self, t_from: f64, t_to: f64) -> Result<GridFunction> {
        let a = self.first_index_at_or_after(t_from);
        let pos_b = (t_to - self.t_start) / self.step;
        let b = (pos_b + 1e-6).floor();
        if b < 0.0 || a as f64 > b || a >= self.samples.len() {
            return Err(Error::WindowExhausted(format!(
                "[{t_from}, {t_to}] not inside [{}, {}]",
                self.t_start,
                self.t_end()
            )));
        }
        let b = (b as usize).min(self.samples.len() - 1);
        GridFunction::new(self.time(a), self.step, self.samples[a..=b].to_vec())
    }

    /// Value at fractional node position `pos` by four-point Lagrange
    /// interpolation (exact at nodes, fourth-order between them).
    pub fn interpolate_at_position(&self, pos: f64) -> DVector<f64> {
        lagrange4(&self.samples, pos)
    }

    /// Value at time `t` if it lies inside the grid.
    pub fn value_at(&self, t: f64) -> Option<DVector<f64>> {
        let pos = (t - self.t_start) / self.step;
        let last = (self.samples.len() - 1) as f64;
        if pos < -1e-9 || pos > last + 1e-9 {
            return None;
        }
        Some(self.interpolate_at_position(pos.clamp(0.0, last)))
    }
}

/// Four-point Lagrange interpolation on unit-spaced `nodes` at fractional
/// position `pos`. The stencil is shifted inwards near the ends.
pub(crate) fn lagrange4(nodes: &[DVector<f64>], pos: f64) -> DVector<f64> {
    let n = nodes.len();
    let base = pos.floor();
    let frac = pos - base;
    if frac == 0.0 && base >= 0.0 && (base as usize) < n {
        return nodes[base as usize].clone();
    }
    if n < 4 {
        // linear fallback for tiny grids
        let k = (base.max(0.0) as usize).min(n.saturating_sub(2));
        let u = pos - k as f64;
        return &nodes[k] * (1.0 - u) + &nodes[(k + 1).min(n - 1)] * u;
    }
    let start = (base as i64 - 1).clamp(0, n as i64 - 4) as usize;
    let x = pos - start as f64;
    let mut out = DVector::zeros(nodes[0].len());
    for j in 0..4 {
        let mut w = 1.0;
        for m in 0..4 {
            if m != j {
                w *= (x - m as f64) / (j as f64 - m as f64);
            }
        }
        out.axpy(w, &nodes[start + j], 1.0);
    }
    out
}

/// The convolution `h(t) = ∫_{-∞}^t e^{-a(t-s)} μ(s) ds` of a step function
/// built from an orbit, evaluated in closed form.
///
/// Node values obey `h(i+1) = e^{-a} h(i) + (κ_i / a)(1 - e^{-a})`, and inside
/// a unit interval `h(i+u) = e^{-au} h(i) + (κ_i / a)(1 - e^{-au})`. The
/// infinite past is replaced by the steady value `κ_left / a` at the left
/// edge, and the first [`CONVOLUTION_WARMUP`] time units are excluded from
/// the valid domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialConvolution {
    decay: f64,
    base_index: i64,
    levels: Vec<f64>,
    nodes: Vec<f64>,
    warmup: usize,
}

impl ExponentialConvolution {
    pub fn new(orbit: &ScalarOrbit, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::Domain(format!("decay {decay} must be positive")));
        }
        let warmup = CONVOLUTION_WARMUP.ceil() as usize;
        if orbit.len() <= warmup {
            return Err(Error::WindowExhausted(format!(
                "orbit of length {} does not outlast the {warmup}-unit warm-up",
                orbit.len()
            )));
        }
        let levels = orbit.values.clone();
        let q = (-decay).exp();
        let mut nodes = Vec::with_capacity(levels.len() + 1);
        let mut h = levels[0] / decay;
        nodes.push(h);
        for &k in &levels {
            h = q * h + (k / decay) * (1.0 - q);
            nodes.push(h);
        }
        Ok(ExponentialConvolution {
            decay,
            base_index: orbit.base_index,
            levels,
            nodes,
            warmup,
        })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Interval on which values are trusted (warm-up excluded).
    pub fn domain(&self) -> (f64, f64) {
        (
            (self.base_index + self.warmup as i64) as f64,
            (self.base_index + self.levels.len() as i64) as f64,
        )
    }

    /// Closed-form value; `None` outside [`domain`](Self::domain).
    pub fn value(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo - 1e-12 && t <= hi + 1e-12) {
            return None;
        }
        let rel = t - self.base_index as f64;
        let mut k = rel.floor().max(0.0) as usize;
        if k >= self.levels.len() {
            k = self.levels.len() - 1;
        }
        let u = rel - k as f64;
        let e = (-self.decay * u).exp();
        Some(e * self.nodes[k] + (self.levels[k] / self.decay) * (1.0 - e))
    }

    /// Samples the trusted domain at `step`, which must divide one time unit.
    pub fn to_grid(&self, step: f64) -> Result<GridFunction> {
        let per_unit = samples_per_unit(step)?;
        let step = 1.0 / per_unit as f64;
        let (lo, hi) = self.domain();
        let units = (hi - lo).round() as usize;
        let first = self.warmup;
        let count = units * per_unit + 1;
        let samples = (0..count)
            .map(|j| {
                let k = first + j / per_unit;
                let sub = j % per_unit;
                let v = if sub == 0 {
                    self.nodes[k]
                } else {
                    let u = sub as f64 * step;
                    let e = (-self.decay * u).exp();
                    e * self.nodes[k] + (self.levels[k] / self.decay) * (1.0 - e)
                };
                DVector::from_element(1, v)
            })
            .collect();
        GridFunction::new(lo, step, samples)
    }
}

fn samples_per_unit(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::StepDivisibility { step, span: 1.0 });
    }
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() > 1e-12 {
        return Err(Error::StepDivisibility { step, span: 1.0 });
    }
    Ok(n as usize)
}

/// Grid samples of `∫_{-∞}^t e^{-decay (t-s)} μ(s) ds` where `μ` is the step
/// function of `orbit`; see [`ExponentialConvolution`].
pub fn convolve_exponential(orbit: &ScalarOrbit, decay: f64, step: f64) -> Result<GridFunction> {
    ExponentialConvolution::new(orbit, decay)?.to_grid(step)
}

/// `Σ_{j=1}^{terms} 2^{-j} min{1, sup_{|s| ≤ j} ‖u(s) - v(s)‖}`.
pub fn bebutov_distance(u: &GridFunction, v: &GridFunction, terms: usize) -> Result<f64> {
    u.ensure_aligned(v, "bebutov_distance")?;
    if u.dim() != v.dim() {
        return Err(Error::GridMismatch(format!("dimensions {} vs {}", u.dim(), v.dim())));
    }
    let reach = terms as f64;
    let tol = 1e-9 * u.step();
    if u.t_start() > -reach + tol || u.t_end() < reach - tol {
        return Err(Error::GridMismatch(format!(
            "grid [{}, {}] does not cover [-{terms}, {terms}]",
            u.t_start(),
            u.t_end()
        )));
    }
    // sup over |s| <= j, built up ring by ring
    let mut ring_sup = vec![0.0_f64; terms + 1];
    for k in 0..u.len() {
        let t = u.time(k).abs();
        if t > reach + tol {
            continue;
        }
        let ring = ((t - tol).ceil().max(1.0) as usize).min(terms);
        let d = (u.sample(k) - v.sample(k)).norm();
        ring_sup[ring] = ring_sup[ring].max(d);
    }
    let mut running = 0.0_f64;
    let mut total = 0.0;
    let mut weight = 1.0;
    for sup in ring_sup.iter().skip(1) {
        running = running.max(*sup);
        weight *= 0.5;
        total += weight * running.min(1.0);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_step_examples() {
        assert_eq!(logistic_step(0.0, LOGISTIC_R).unwrap(), 0.0);
        assert_eq!(logistic_step(1.0, LOGISTIC_R).unwrap(), 0.0);
        assert_abs_diff_eq!(logistic_step(0.5, LOGISTIC_R).unwrap(), 0.9775, epsilon = 1e-15);
    }

    #[test]
    fn logistic_step_domain_errors() {
        assert!(matches!(logistic_step(1.2, 3.91), Err(Error::Domain(_))));
        assert!(matches!(logistic_step(-0.1, 3.91), Err(Error::Domain(_))));
        assert!(matches!(logistic_step(0.3, 4.5), Err(Error::Domain(_))));
        assert!(matches!(logistic_step(0.3, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn orbit_examples() {
        let o = logistic_orbit(0.5, 0, 2).unwrap();
        assert_eq!(o.base_index(), 0);
        assert_eq!(o.values()[0], 0.5);
        assert_abs_diff_eq!(o.values()[1], 0.9775, epsilon = 1e-15);
        assert_eq!(logistic_orbit(0.25, 0, 1).unwrap().values(), &[0.25]);
        assert!(logistic_orbit(0.0, 10, 5).is_err());
        assert!(logistic_orbit(1.0, 10, 5).is_err());
    }

    #[test]
    fn orbit_range_and_residual() {
        let o = logistic_orbit(DEFAULT_SEED, DEFAULT_BURN_IN, 5000).unwrap();
        assert!(o.values().iter().all(|&v| (0.0..=0.9775).contains(&v)));
        assert!(o.max_residual(LOGISTIC_R) <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn rebase_and_lookup() {
        let o = logistic_orbit(0.3, 0, 4).unwrap().rebased(-2);
        assert_eq!(o.get(-2), Some(0.3));
        assert_eq!(o.get(2), None);
        assert_eq!(o.end_index(), 2);
        let mu = PiecewiseConstantFunction::from_orbit(&o);
        assert_eq!(mu.value(-1.5), Some(0.3));
        assert_eq!(mu.value(-1.0), o.get(-1));
        assert_eq!(mu.value(2.0), None);
    }

    #[test]
    fn convolution_of_constant_orbits() {
        let zeros = ScalarOrbit::new(0, vec![0.0; 40]).unwrap();
        let h = convolve_exponential(&zeros, 2.0, 0.25).unwrap();
        assert_eq!(h.sup_norm(), 0.0);

        let ones = ScalarOrbit::new(0, vec![1.0; 40]).unwrap();
        let h = convolve_exponential(&ones, 2.0, 0.25).unwrap();
        for s in h.samples() {
            assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-15);
        }
        assert_eq!(h.t_start(), 20.0);
        assert_eq!(h.t_end(), 40.0);
    }

    #[test]
    fn convolution_rejects_bad_steps() {
        let o = logistic_orbit(0.41, 10, 40).unwrap();
        assert!(matches!(
            convolve_exponential(&o, 2.0, 0.3),
            Err(Error::StepDivisibility { .. })
        ));
        assert!(matches!(
            convolve_exponential(&o, 2.0, 2.0),
            Err(Error::StepDivisibility { .. })
        ));
        assert!(convolve_exponential(&o, 2.0, 0.125).is_ok());
    }

    #[test]
    fn convolution_grid_matches_pointwise_value() {
        let o = logistic_orbit(0.41, 100, 60).unwrap().rebased(-30);
        let conv = ExponentialConvolution::new(&o, 2.0).unwrap();
        let g = conv.to_grid(0.125).unwrap();
        assert_eq!(g.t_start(), -10.0);
        for k in (0..g.len()).step_by(7) {
            let t = g.time(k);
            assert_abs_diff_eq!(g.sample(k)[0], conv.value(t).unwrap(), epsilon = 1e-15);
        }
        assert!(conv.value(-10.5).is_none());
        assert!(conv.value(30.5).is_none());
    }

    #[test]
    fn convolution_bound() {
        let o = logistic_orbit(DEFAULT_SEED, DEFAULT_BURN_IN, 2000).unwrap();
        let h = convolve_exponential(&o, 2.0, 0.0625).unwrap();
        assert!(h.sup_norm() <= 0.5 + 1e-12);
    }

    fn grid_const(dim: usize, value: f64) -> GridFunction {
        GridFunction::from_fn(-4.0, 0.5, 17, |_| DVector::from_element(dim, value)).unwrap()
    }

    #[test]
    fn bebutov_examples() {
        let u = GridFunction::from_fn(-4.0, 0.5, 17, |t| DVector::from_vec(vec![t.sin(), t])).unwrap();
        assert_eq!(bebutov_distance(&u, &u, 4).unwrap(), 0.0);

        // difference of constant norm 3 saturates every term
        let shifted = u.map(|_, s| s + DVector::from_vec(vec![3.0, 0.0])).unwrap();
        let d = bebutov_distance(&u, &shifted, 4).unwrap();
        assert_abs_diff_eq!(d, 0.5 + 0.25 + 0.125 + 0.0625, epsilon = 1e-15);
        assert!(d <= 1.0 - 2f64.powi(-4));
    }

    #[test]
    fn bebutov_uses_growing_windows() {
        // difference 0.2 only at |t| = 3, so terms j >= 3 see it
        let u = grid_const(1, 0.0);
        let v = u
            .map(|t, s| {
                if (t.abs() - 3.0).abs() < 1e-12 {
                    s.add_scalar(0.2)
                } else {
                    s.clone()
                }
            })
            .unwrap();
        let d = bebutov_distance(&u, &v, 4).unwrap();
        assert_abs_diff_eq!(d, 0.2 * (0.125 + 0.0625), epsilon = 1e-15);
    }

    #[test]
    fn bebutov_rejects_mismatch_and_short_grids() {
        let u = grid_const(1, 0.0);
        let v = GridFunction::from_fn(-4.0, 0.25, 33, |_| DVector::zeros(1)).unwrap();
        assert!(matches!(bebutov_distance(&u, &v, 2), Err(Error::GridMismatch(_))));
        assert!(matches!(bebutov_distance(&u, &u, 5), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn lagrange_is_exact_for_cubics() {
        let nodes: Vec<_> = (0..6)
            .map(|k| {
                let x = k as f64;
                DVector::from_element(1, x * x * x - 2.0 * x + 1.0)
            })
            .collect();
        for &p in &[0.25, 0.5, 2.5, 4.75] {
            let want = p * p * p - 2.0 * p + 1.0;
            assert_abs_diff_eq!(lagrange4(&nodes, p)[0], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn slicing_and_lookup() {
        let g = GridFunction::from_fn(0.0, 0.25, 41, |t| DVector::from_element(1, t)).unwrap();
        let s = g.slice_time(2.0, 3.0).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.t_start(), 2.0);
        assert_eq!(g.index_of(2.5), Some(10));
        assert_eq!(g.index_of(2.6), None);
        assert!(g.slice_time(20.0, 30.0).is_err());
    }
}
