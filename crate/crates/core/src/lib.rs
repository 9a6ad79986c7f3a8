//! Asymptotically unpredictable motions and the quasilinear systems they
//! force.
//!
//! The crate builds chaotic sources from the logistic map, assembles
//! decompositions `φ = ψ + θ` with an unpredictable part and a decaying
//! part, simulates a retarded system and a discrete system under such
//! forcing, and checks the resulting behaviour against explicit envelopes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod chaos_source;
pub mod constructs;
pub mod delay_system;
pub mod detectors;
pub mod discrete_system;
pub mod error;
pub mod nonlinearity;
pub mod report;

pub use chaos_source::{ExponentialConvolution, GridFunction, PiecewiseConstantFunction, ScalarOrbit};
pub use constructs::{DecompositionTriple, Samples, VectorSequence, Witness, WitnessReport};
pub use delay_system::{DelayEnvelope, DelaySystemSpec, Forcing, ProofConstants, StabilityConstants};
pub use detectors::{DecayReport, SensitivityReport, UnpredictabilityEvidence};
pub use discrete_system::{DiscreteSystemSpec, GronwallEnvelope};
pub use error::{Error, Result};
pub use nonlinearity::Nonlinearity;
pub use report::{AssumptionReport, Check, CheckStatus, LadderCrossing};

pub use nalgebra::{DMatrix, DVector};
