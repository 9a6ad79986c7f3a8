//! The four worked examples: a two-dimensional asymptotically unpredictable
//! function and sequence, and the delay and discrete systems they force.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chaos_source::{
    logistic_orbit_with, ExponentialConvolution, GridFunction, ScalarOrbit, CONVOLUTION_WARMUP, DEFAULT_BURN_IN,
    DEFAULT_SEED, LOGISTIC_R,
};
use crate::constructs::{
    build_function_triple, build_sequence_triple, function_theta, sequence_theta, DecompositionTriple, VectorSequence,
};
use crate::delay_system::{DelaySystemSpec, Forcing};
use crate::discrete_system::DiscreteSystemSpec;
use crate::error::Result;
use crate::nonlinearity::{arccot, Nonlinearity};

/// Decay rate of the kernel in `h(t) = ∫_{-∞}^t e^{-2(t-s)} μ(s) ds`.
pub const H_DECAY: f64 = 2.0;
pub const DELAY_TAU: f64 = 0.2;

/// `sup ‖(2h, h)‖ ≤ √5 / 2`.
pub fn function_psi_bound() -> f64 {
    5f64.sqrt() / 2.0
}

/// `sup ‖(κ, κ/4)‖ ≤ √17 / 4`.
pub fn sequence_psi_bound() -> f64 {
    17f64.sqrt() / 4.0
}

/// Parameters of the logistic source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    pub seed: f64,
    pub r: f64,
    pub burn_in: usize,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            seed: DEFAULT_SEED,
            r: LOGISTIC_R,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

impl SourceParams {
    /// Orbit `κ_base, …, κ_{base+len-1}`.
    pub fn orbit(&self, base: i64, len: usize) -> Result<ScalarOrbit> {
        Ok(logistic_orbit_with(self.seed, self.r, self.burn_in, len)?.rebased(base))
    }

    /// `h` trusted on an interval containing `[from, to]`.
    pub fn convolution(&self, from: f64, to: f64) -> Result<ExponentialConvolution> {
        let base = from.floor() as i64 - CONVOLUTION_WARMUP as i64 - 1;
        let len = (to.ceil() as i64 - base + 1) as usize;
        ExponentialConvolution::new(&self.orbit(base, len)?, H_DECAY)
    }
}

/// `ψ = (2h, h)`, `θ(t) = (3/(1+e^t), -5 sech(2t))` on `[from, to]`.
pub fn function_example(
    params: &SourceParams,
    from: f64,
    to: f64,
    step: f64,
) -> Result<DecompositionTriple<GridFunction>> {
    let h = params.convolution(from, to)?.to_grid(step)?;
    build_function_triple(&h.slice_time(from, to)?)
}

/// `ψ_i = (κ_i, κ_i/4)`, `θ_i = (2/(1+i²), 4e^{-i²})` for `i` in `range`.
pub fn sequence_example(params: &SourceParams, range: Range<i64>) -> Result<DecompositionTriple<VectorSequence>> {
    let len = (range.end - range.start).max(0) as usize;
    build_sequence_triple(&params.orbit(range.start, len)?)
}

pub fn delay_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 5.0, -5.0])
}

/// `f(x, y) = (arctan(y)/6, arccot(x)/12)` with `M_f = π√2/12`, `L_f = 1/6`.
pub fn delay_nonlinearity() -> Nonlinearity {
    Nonlinearity::new("arctan_arccot", 2, PI * 2f64.sqrt() / 12.0, 1.0 / 6.0, |v| {
        DVector::from_vec(vec![v[1].atan() / 6.0, arccot(v[0]) / 12.0])
    })
    .expect("constants are valid")
}

pub fn discrete_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.25, -0.25, 0.5, 0.125])
}

/// `g(x, y) = (sin(x)/5, cos(2y)/10)` with `M_g = 1/√20`, `L_g = 1/5`.
pub fn discrete_nonlinearity() -> Nonlinearity {
    Nonlinearity::new("sin_cos", 2, 1.0 / 20f64.sqrt(), 0.2, |v| {
        DVector::from_vec(vec![v[0].sin() / 5.0, (2.0 * v[1]).cos() / 10.0])
    })
    .expect("constants are valid")
}

/// The delay system forced by `φ = ψ + θ` and its companion forced by `ψ`
/// alone, sharing one `h`.
#[derive(Debug, Clone)]
pub struct DelayExample {
    pub phi_system: DelaySystemSpec,
    pub psi_system: DelaySystemSpec,
    pub h: Arc<ExponentialConvolution>,
}

/// Builds the delay example with forcings valid on `[from, to]`, which
/// must include any burn-in and the initial delay interval.
pub fn delay_example(params: &SourceParams, a: DMatrix<f64>, tau: f64, from: f64, to: f64) -> Result<DelayExample> {
    let h = Arc::new(params.convolution(from, to)?);
    let domain = h.domain();
    let hp = Arc::clone(&h);
    let psi = Forcing::analytic("psi", 2, domain, move |t| {
        let v = hp.value(t).unwrap_or(f64::NAN);
        DVector::from_vec(vec![2.0 * v, v])
    });
    let hf = Arc::clone(&h);
    let phi = Forcing::analytic("phi", 2, domain, move |t| {
        let v = hf.value(t).unwrap_or(f64::NAN);
        DVector::from_vec(vec![2.0 * v, v]) + function_theta(t)
    });
    Ok(DelayExample {
        phi_system: DelaySystemSpec::new(a.clone(), tau, delay_nonlinearity(), phi)?,
        psi_system: DelaySystemSpec::new(a, tau, delay_nonlinearity(), psi)?,
        h,
    })
}

/// The discrete system forced by `φ_i` and by `ψ_i` for `i` in `range`.
#[derive(Debug, Clone)]
pub struct DiscreteExample {
    pub phi_system: DiscreteSystemSpec,
    pub psi_system: DiscreteSystemSpec,
    pub triple: DecompositionTriple<VectorSequence>,
}

pub fn discrete_example(params: &SourceParams, b: DMatrix<f64>, range: Range<i64>) -> Result<DiscreteExample> {
    let triple = sequence_example(params, range)?;
    Ok(DiscreteExample {
        phi_system: DiscreteSystemSpec::new(b.clone(), discrete_nonlinearity(), triple.phi.clone())?,
        psi_system: DiscreteSystemSpec::new(b, discrete_nonlinearity(), triple.psi.clone())?,
        triple,
    })
}

/// `θ` of the function example sampled on the grid of `like`.
pub fn function_theta_grid(like: &GridFunction) -> Result<GridFunction> {
    like.map(|t, _| function_theta(t))
}

/// `θ_i` of the sequence example for `i` in `range`.
pub fn sequence_theta_seq(range: Range<i64>) -> Result<VectorSequence> {
    VectorSequence::from_fn(range.start, (range.end - range.start).max(0) as usize, sequence_theta)
}
