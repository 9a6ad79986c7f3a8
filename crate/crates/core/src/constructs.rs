//! Unpredictable and asymptotically unpredictable constructions.
//!
//! A motion `φ = ψ + θ` is stored together with its parts in a
//! [`DecompositionTriple`]. The transforms here (affine images, convergent
//! perturbations, index shifts) carry the decomposition along so that the
//! detectors can be re-run on the transformed parts.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chaos_source::{GridFunction, ScalarOrbit};
use crate::error::{Error, Result};

/// Common read access to sampled motions, whether indexed by integers or
/// sampled on a time grid.
pub trait Samples {
    /// True for functions of continuous time.
    const CONTINUOUS: bool;

    fn len(&self) -> usize;
    /// Time or integer index of sample `k`.
    fn location(&self, k: usize) -> f64;
    fn value(&self, k: usize) -> &DVector<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> usize {
        self.value(0).len()
    }

    fn sup_norm(&self) -> f64 {
        (0..self.len()).map(|k| self.value(k).norm()).fold(0.0, f64::max)
    }

    fn norms(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k).norm()).collect()
    }
}

impl Samples for GridFunction {
    const CONTINUOUS: bool = true;

    fn len(&self) -> usize {
        GridFunction::len(self)
    }

    fn location(&self, k: usize) -> f64 {
        self.time(k)
    }

    fn value(&self, k: usize) -> &DVector<f64> {
        self.sample(k)
    }
}

/// A finite window `values[k] = x_{base_index + k}` of a sequence in `R^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSequence {
    base_index: i64,
    values: Vec<DVector<f64>>,
}

impl VectorSequence {
    pub fn new(base_index: i64, values: Vec<DVector<f64>>) -> Result<Self> {
        let dim = match values.first() {
            Some(v) => v.len(),
            None => return Err(Error::Domain("sequence must be nonempty".into())),
        };
        if let Some(k) = values.iter().position(|v| v.len() != dim) {
            return Err(Error::Domain(format!(
                "element {k} has dimension {} != {dim}",
                values[k].len()
            )));
        }
        if let Some(k) = values.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite((base_index + k as i64) as f64));
        }
        Ok(VectorSequence { base_index, values })
    }

    pub fn from_fn(base_index: i64, len: usize, f: impl Fn(i64) -> DVector<f64>) -> Result<Self> {
        Self::new(base_index, (0..len as i64).map(|k| f(base_index + k)).collect())
    }

    pub fn from_scalars(base_index: i64, values: &[f64]) -> Result<Self> {
        Self::new(
            base_index,
            values.iter().map(|&v| DVector::from_element(1, v)).collect(),
        )
    }

    pub fn base_index(&self) -> i64 {
        self.base_index
    }

    /// One past the last recorded index.
    pub fn end_index(&self) -> i64 {
        self.base_index + self.values.len() as i64
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn get(&self, i: i64) -> Option<&DVector<f64>> {
        let k = i.checked_sub(self.base_index)?;
        usize::try_from(k).ok().and_then(|k| self.values.get(k))
    }

    pub fn contains_range(&self, start: i64, end: i64) -> bool {
        start >= self.base_index && end <= self.end_index()
    }

    /// The sub-window `[start, end)`.
    pub fn window(&self, start: i64, end: i64) -> Result<VectorSequence> {
        if start >= end || !self.contains_range(start, end) {
            return Err(Error::WindowExhausted(format!(
                "[{start}, {end}) not inside [{}, {})",
                self.base_index,
                self.end_index()
            )));
        }
        let a = (start - self.base_index) as usize;
        let b = (end - self.base_index) as usize;
        VectorSequence::new(start, self.values[a..b].to_vec())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(i64, &DVector<f64>) -> DVector<f64>) -> Result<VectorSequence> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| f(self.base_index + k as i64, v))
            .collect();
        VectorSequence::new(self.base_index, values)
    }

    /// Pointwise combination over the common index window.
    pub fn zip_map(
        &self,
        other: &VectorSequence,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    ) -> Result<VectorSequence> {
        if self.base_index != other.base_index || self.len() != other.len() {
            return Err(Error::GridMismatch(format!(
                "index windows [{}, {}) and [{}, {})",
                self.base_index,
                self.end_index(),
                other.base_index,
                other.end_index()
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect();
        VectorSequence::new(self.base_index, values)
    }
}

impl Samples for VectorSequence {
    const CONTINUOUS: bool = false;

    fn len(&self) -> usize {
        self.values.len()
    }

    fn location(&self, k: usize) -> f64 {
        (self.base_index + k as i64) as f64
    }

    fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }
}

/// `φ = ψ + θ` with `ψ` the unpredictable part and `θ` the decaying part.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTriple<S> {
    pub phi: S,
    pub psi: S,
    pub theta: S,
}

impl DecompositionTriple<VectorSequence> {
    /// Builds `φ` as `ψ + θ`.
    pub fn from_parts(psi: VectorSequence, theta: VectorSequence) -> Result<Self> {
        let phi = psi.zip_map(&theta, |a, b| a + b)?;
        Ok(DecompositionTriple { phi, psi, theta })
    }
}

impl DecompositionTriple<GridFunction> {
    pub fn from_parts(psi: GridFunction, theta: GridFunction) -> Result<Self> {
        let phi = psi.zip_map(&theta, |a, b| a + b)?;
        Ok(DecompositionTriple { phi, psi, theta })
    }
}

impl<S: Samples> DecompositionTriple<S> {
    /// Largest `|φ - (ψ + θ)|` over all components, in units of
    /// `ε · max(1, |φ|)`.
    pub fn max_residual_ulps(&self) -> f64 {
        let mut worst = 0.0_f64;
        for k in 0..self.phi.len() {
            let (p, s, t) = (self.phi.value(k), self.psi.value(k), self.theta.value(k));
            for c in 0..p.len() {
                let r = (p[c] - (s[c] + t[c])).abs() / (f64::EPSILON * p[c].abs().max(1.0));
                worst = worst.max(r);
            }
        }
        worst
    }
}

/// `θ(t) = (3 / (1 + e^t), -5 sech(2t))`.
pub fn function_theta(t: f64) -> DVector<f64> {
    let first = if t > 0.0 {
        let e = (-t).exp();
        3.0 * e / (1.0 + e)
    } else {
        3.0 / (1.0 + t.exp())
    };
    DVector::from_vec(vec![first, -5.0 / (2.0 * t).cosh()])
}

/// `θ_i = (2 / (1 + i²), 4 e^{-i²})`.
pub fn sequence_theta(i: i64) -> DVector<f64> {
    let x = i as f64;
    DVector::from_vec(vec![2.0 / (1.0 + x * x), 4.0 * (-x * x).exp()])
}

/// `ψ = (2h, h)`, `θ` from [`function_theta`], `φ = ψ + θ` on the grid of `h`.
pub fn build_function_triple(h: &GridFunction) -> Result<DecompositionTriple<GridFunction>> {
    if h.dim() != 1 {
        return Err(Error::Domain(format!("h must be scalar, got dimension {}", h.dim())));
    }
    let psi = h.map(|_, s| DVector::from_vec(vec![2.0 * s[0], s[0]]))?;
    let theta = h.map(|t, _| function_theta(t))?;
    DecompositionTriple::<GridFunction>::from_parts(psi, theta)
}

/// `ψ_i = (κ_i, κ_i / 4)`, `θ` from [`sequence_theta`], `φ = ψ + θ`.
pub fn build_sequence_triple(orbit: &ScalarOrbit) -> Result<DecompositionTriple<VectorSequence>> {
    let base = orbit.base_index();
    let psi = VectorSequence::new(
        base,
        orbit
            .values()
            .iter()
            .map(|&k| DVector::from_vec(vec![k, 0.25 * k]))
            .collect(),
    )?;
    let theta = VectorSequence::from_fn(base, orbit.len(), sequence_theta)?;
    DecompositionTriple::<VectorSequence>::from_parts(psi, theta)
}

/// Numerical rank by singular values relative to the largest one.
pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let cut = top * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > cut).count()
}

fn ensure_nonsingular(omega: &DMatrix<f64>) -> Result<()> {
    if !omega.is_square() {
        return Err(Error::Domain(format!(
            "matrix is {}x{}, not square",
            omega.nrows(),
            omega.ncols()
        )));
    }
    let rank = numerical_rank(omega);
    if rank < omega.nrows() {
        return Err(Error::SingularMatrix {
            rank,
            dim: omega.nrows(),
        });
    }
    Ok(())
}

/// `{Ω x_i + c}`.
pub fn affine_transform(seq: &VectorSequence, omega: &DMatrix<f64>, c: &DVector<f64>) -> Result<VectorSequence> {
    ensure_nonsingular(omega)?;
    if omega.nrows() != seq.dim() || c.len() != seq.dim() {
        return Err(Error::Domain(format!(
            "transform of size {} / offset {} for sequence of dimension {}",
            omega.nrows(),
            c.len(),
            seq.dim()
        )));
    }
    seq.map(|_, v| omega * v + c)
}

/// Carries the decomposition through `Ω φ + c`: the new parts are
/// `Ω ψ + c` and `Ω θ`, and `φ` is rebuilt as their sum.
pub fn affine_transform_triple(
    triple: &DecompositionTriple<VectorSequence>,
    omega: &DMatrix<f64>,
    c: &DVector<f64>,
) -> Result<DecompositionTriple<VectorSequence>> {
    let psi = affine_transform(&triple.psi, omega, c)?;
    let theta = affine_transform(&triple.theta, omega, &DVector::zeros(c.len()))?;
    DecompositionTriple::<VectorSequence>::from_parts(psi, theta)
}

/// Result of adding a convergent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergentSum {
    pub sum: VectorSequence,
    /// `perturbation_i - limit`, the part that must decay.
    pub induced_tail: VectorSequence,
}

/// `{x_i + v_i}` for a perturbation `v` with caller-supplied limit `c`.
pub fn add_convergent(
    seq: &VectorSequence,
    perturbation: &VectorSequence,
    limit: &DVector<f64>,
) -> Result<ConvergentSum> {
    let aligned = perturbation.window(seq.base_index(), seq.end_index())?;
    if limit.len() != seq.dim() {
        return Err(Error::Domain(format!(
            "limit has dimension {} != {}",
            limit.len(),
            seq.dim()
        )));
    }
    let sum = seq.zip_map(&aligned, |a, b| a + b)?;
    let induced_tail = aligned.map(|_, v| v - limit)?;
    Ok(ConvergentSum { sum, induced_tail })
}

/// Decomposition of `φ + v`: unpredictable part `ψ + c`, decaying part
/// `θ + v - c`.
pub fn add_convergent_triple(
    triple: &DecompositionTriple<VectorSequence>,
    perturbation: &VectorSequence,
    limit: &DVector<f64>,
) -> Result<DecompositionTriple<VectorSequence>> {
    let ConvergentSum { induced_tail, .. } = add_convergent(&triple.phi, perturbation, limit)?;
    let psi = triple.psi.map(|_, v| v + limit)?;
    let theta = triple.theta.zip_map(&induced_tail, |a, b| a + b)?;
    DecompositionTriple::<VectorSequence>::from_parts(psi, theta)
}

/// `x̃_i = x_{i+m}`: the same values with the base index lowered by `m`.
pub fn shift(seq: &VectorSequence, m: i64) -> Result<VectorSequence> {
    let base = seq
        .base_index()
        .checked_sub(m)
        .filter(|b| b.checked_add(seq.len() as i64).is_some())
        .ok_or_else(|| Error::WindowExhausted(format!("shift by {m} leaves the representable index range")))?;
    Ok(VectorSequence {
        base_index: base,
        values: seq.values.clone(),
    })
}

pub fn shift_triple(
    triple: &DecompositionTriple<VectorSequence>,
    m: i64,
) -> Result<DecompositionTriple<VectorSequence>> {
    Ok(DecompositionTriple {
        phi: shift(&triple.phi, m)?,
        psi: shift(&triple.psi, m)?,
        theta: shift(&triple.theta, m)?,
    })
}

/// A location where the decaying part is at least four times the bound on
/// the unpredictable part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub location: f64,
    pub theta_norm: f64,
    /// `theta_norm - 4 * bound`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub bound: f64,
    pub threshold: f64,
    pub scanned_from: f64,
    pub scanned_to: f64,
    /// Number of scanned locations that qualify.
    pub qualifying: usize,
    /// Qualifying location with the largest margin.
    pub strongest: Option<Witness>,
    /// For functions the bound must be at least one; `false` flags a caller
    /// that passed a smaller bound.
    pub bound_precondition_met: bool,
}

impl WitnessReport {
    pub fn found(&self) -> bool {
        self.strongest.is_some()
    }
}

/// Scans `θ` for a location with `‖θ‖ ≥ 4 · bound`.
///
/// `bound` should be a verified sup-norm bound for `ψ`. Only the recorded
/// window is scanned; absence of a witness is a valid outcome.
pub fn non_unpredictability_witness<S: Samples>(triple: &DecompositionTriple<S>, bound: f64) -> WitnessReport {
    let threshold = 4.0 * bound;
    let theta = &triple.theta;
    let mut qualifying = 0;
    let mut strongest: Option<Witness> = None;
    for k in 0..theta.len() {
        let norm = theta.value(k).norm();
        if norm >= threshold {
            qualifying += 1;
            if strongest.is_none_or(|w| norm > w.theta_norm) {
                strongest = Some(Witness {
                    location: theta.location(k),
                    theta_norm: norm,
                    margin: norm - threshold,
                });
            }
        }
    }
    WitnessReport {
        bound,
        threshold,
        scanned_from: theta.location(0),
        scanned_to: theta.location(theta.len() - 1),
        qualifying,
        strongest,
        bound_precondition_met: !S::CONTINUOUS || bound >= 1.0,
    }
}

/// Evaluates the witness condition at one recorded location.
pub fn witness_at<S: Samples>(triple: &DecompositionTriple<S>, location: f64, bound: f64) -> Option<Witness> {
    let theta = &triple.theta;
    let k = (0..theta.len()).find(|&k| (theta.location(k) - location).abs() <= 1e-9)?;
    let norm = theta.value(k).norm();
    let threshold = 4.0 * bound;
    (norm >= threshold).then_some(Witness {
        location: theta.location(k),
        theta_norm: norm,
        margin: norm - threshold,
    })
}

/// First sample after which `‖x‖ < threshold` for the rest of the window.
pub fn settling_index<S: Samples>(tail: &S, threshold: f64) -> Option<usize> {
    let mut settle = None;
    for k in (0..tail.len()).rev() {
        if tail.value(k).norm() < threshold {
            settle = Some(k);
        } else {
            break;
        }
    }
    settle
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_source::{convolve_exponential, logistic_orbit};
    use approx::assert_abs_diff_eq;

    fn seq2(values: &[(f64, f64)]) -> VectorSequence {
        VectorSequence::new(0, values.iter().map(|&(a, b)| DVector::from_vec(vec![a, b])).collect()).unwrap()
    }

    #[test]
    fn function_theta_values() {
        let t0 = function_theta(0.0);
        assert_eq!(t0.as_slice(), &[1.5, -5.0]);
        assert_abs_diff_eq!(t0.norm(), 27.25f64.sqrt(), epsilon = 1e-15);
        let t40 = function_theta(40.0);
        assert!(t40.iter().all(|v| v.abs() < 1e-15));
        assert!(function_theta(800.0).iter().all(|v| v.is_finite()));
        assert!(function_theta(-800.0).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sequence_theta_values() {
        assert_abs_diff_eq!(sequence_theta(0).norm(), 20f64.sqrt(), epsilon = 1e-15);
        for i in 10..200 {
            assert!(sequence_theta(i).norm() < 0.02);
        }
    }

    #[test]
    fn triples_decompose_exactly() {
        let orbit = logistic_orbit(0.41, 1000, 300).unwrap().rebased(-100);
        let seq = build_sequence_triple(&orbit).unwrap();
        assert!(seq.max_residual_ulps() <= 2.0);
        assert!(seq.psi.sup_norm() <= 17f64.sqrt() / 4.0);

        let h = convolve_exponential(&orbit, 2.0, 0.125).unwrap();
        let fun = build_function_triple(&h).unwrap();
        assert!(fun.max_residual_ulps() <= 2.0);
        assert!(fun.psi.sup_norm() <= 5f64.sqrt() / 2.0);
    }

    #[test]
    fn witness_examples() {
        let orbit = logistic_orbit(0.41, 1000, 200).unwrap().rebased(-100);
        let seq = build_sequence_triple(&orbit).unwrap();
        let w = witness_at(&seq, 0.0, 17f64.sqrt() / 4.0).unwrap();
        assert_abs_diff_eq!(w.margin, 20f64.sqrt() - 17f64.sqrt(), epsilon = 1e-12);
        let report = non_unpredictability_witness(&seq, 17f64.sqrt() / 4.0);
        assert_eq!(report.strongest.unwrap().location, 0.0);
        assert!(report.bound_precondition_met);

        let h = convolve_exponential(&orbit, 2.0, 0.0125).unwrap();
        let fun = build_function_triple(&h).unwrap();
        let m = 5f64.sqrt() / 2.0;
        let w = witness_at(&fun, 0.0, m).unwrap();
        assert_abs_diff_eq!(w.margin, 27.25f64.sqrt() - 2.0 * 5f64.sqrt(), epsilon = 1e-12);
        let report = non_unpredictability_witness(&fun, m);
        assert!(report.found());
        assert!(report.strongest.unwrap().margin >= w.margin);
        assert!(!non_unpredictability_witness(&fun, 0.5).bound_precondition_met);
    }

    #[test]
    fn zero_tail_has_no_witness() {
        let psi = seq2(&[(0.1, 0.2), (0.3, 0.4)]);
        let theta = seq2(&[(0.0, 0.0), (0.0, 0.0)]);
        let triple = DecompositionTriple::<VectorSequence>::from_parts(psi, theta).unwrap();
        let report = non_unpredictability_witness(&triple, 1e-3);
        assert!(!report.found());
        assert_eq!(report.qualifying, 0);
    }

    #[test]
    fn affine_examples() {
        let s = seq2(&[(1.0, 2.0), (-0.5, 0.25)]);
        let id = DMatrix::identity(2, 2);
        assert_eq!(affine_transform(&s, &id, &DVector::zeros(2)).unwrap(), s);
        let c = DVector::from_vec(vec![0.5, -1.0]);
        let out = affine_transform(&s, &(2.0 * &id), &c).unwrap();
        for (o, v) in out.values().iter().zip(s.values()) {
            assert_eq!(*o, 2.0 * v + &c);
        }
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            affine_transform(&s, &singular, &c),
            Err(Error::SingularMatrix { rank: 1, dim: 2 })
        ));
    }

    #[test]
    fn convergent_examples() {
        let s = seq2(&[(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)]);
        let zero = seq2(&[(0.0, 0.0); 3]);
        let out = add_convergent(&s, &zero, &DVector::zeros(2)).unwrap();
        assert_eq!(out.sum, s);

        let c = DVector::from_vec(vec![0.5, -2.0]);
        let constant = s.map(|_, _| c.clone()).unwrap();
        let out = add_convergent(&s, &constant, &c).unwrap();
        for (a, b) in out.sum.values().iter().zip(s.values()) {
            assert_eq!(a - b, c);
        }
        assert_eq!(out.induced_tail.sup_norm(), 0.0);
    }

    #[test]
    fn harmonic_perturbation_tail_decays() {
        let s = VectorSequence::from_fn(0, 2000, |_| DVector::from_vec(vec![0.3, 0.1])).unwrap();
        let p = VectorSequence::from_fn(0, 2000, |i| DVector::from_vec(vec![1.0 / (i as f64 + 1.0), 0.0])).unwrap();
        let out = add_convergent(&s, &p, &DVector::zeros(2)).unwrap();
        for eps in [0.1, 0.01, 0.001] {
            let k = settling_index(&out.induced_tail, eps).unwrap();
            assert!(k < 2000);
        }
    }

    #[test]
    fn convergent_triple_parts() {
        let orbit = logistic_orbit(0.41, 1000, 50).unwrap();
        let t = build_sequence_triple(&orbit).unwrap();
        let p = VectorSequence::from_fn(0, 50, |i| DVector::from_vec(vec![1.0 + 1.0 / (1.0 + i as f64), 0.0])).unwrap();
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let out = add_convergent_triple(&t, &p, &c).unwrap();
        let direct = add_convergent(&t.phi, &p, &c).unwrap().sum;
        for (a, b) in out.phi.values().iter().zip(direct.values()) {
            assert!((a - b).amax() <= 4.0 * f64::EPSILON * a.amax().max(1.0));
        }
        assert!(add_convergent(&t.phi, &p.window(0, 10).unwrap(), &c).is_err());
    }

    #[test]
    fn shift_examples() {
        let s = VectorSequence::from_fn(3, 10, |i| DVector::from_element(1, i as f64)).unwrap();
        assert_eq!(shift(&s, 0).unwrap(), s);
        assert_eq!(shift(&shift(&s, 4).unwrap(), -4).unwrap(), s);
        let m = 2;
        let out = shift(&s, m).unwrap();
        for i in out.base_index()..out.end_index() {
            assert_eq!(out.get(i), s.get(i + m));
        }
        assert!(shift(&s, i64::MIN).is_err());
    }

    #[test]
    fn window_errors() {
        let s = VectorSequence::from_fn(0, 5, |i| DVector::from_element(1, i as f64)).unwrap();
        assert!(s.window(1, 4).is_ok());
        assert!(matches!(s.window(-1, 4), Err(Error::WindowExhausted(_))));
        assert!(matches!(s.window(2, 9), Err(Error::WindowExhausted(_))));
    }
}
