//! Experiment configuration: the JSON document accepted by `run`, the
//! parameter sets of each pipeline, and their validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unpredictable_core::catalog::{self, SourceParams, DELAY_TAU};
use unpredictable_core::delay_system::{lag_steps, DEFAULT_LAMBDA_FRACTION, DEFAULT_STEPS_PER_DELAY};
use unpredictable_core::detectors::DEFAULT_LADDER;
use unpredictable_core::{DMatrix, Nonlinearity};

use crate::CliError;

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn check_ladder(field: &str, ladder: &[f64]) -> Result<(), CliError> {
    if ladder.is_empty() {
        return Err(invalid(field, "must not be empty"));
    }
    for &r in ladder {
        positive(field, r)?;
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid(field, "must be strictly decreasing"));
    }
    Ok(())
}

/// `ladder` cut so that its last rung is `tol`.
pub fn ladder_ending_at(ladder: &[f64], tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = ladder.iter().copied().filter(|&r| r > tol).collect();
    out.push(tol);
    out
}

fn seed(field: &str, s: f64) -> Result<f64, CliError> {
    if s > 0.0 && s < 1.0 {
        Ok(s)
    } else {
        Err(invalid(field, format!("must lie strictly between 0 and 1, got {s}")))
    }
}

/// Named nonlinearities; configuration files cannot carry code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `(arctan(y)/6, arccot(x)/12)`, two-dimensional.
    ArctanArccot,
    /// `(sin(x)/5, cos(2y)/10)`, two-dimensional.
    SinCos,
    /// Componentwise `tanh`, bound `√m`, Lipschitz constant 1.
    Tanh,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityChoice {
    pub preset: Preset,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl NonlinearityChoice {
    pub fn build(&self, dim: usize, field: &str) -> Result<Nonlinearity, CliError> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(invalid(&format!("{field}.scale"), "must be non-negative"));
        }
        let base = match self.preset {
            Preset::ArctanArccot | Preset::SinCos if dim != 2 => {
                return Err(invalid(
                    &format!("{field}.preset"),
                    format!("{:?} needs dimension 2, system has {dim}", self.preset),
                ))
            }
            Preset::ArctanArccot => catalog::delay_nonlinearity(),
            Preset::SinCos => catalog::discrete_nonlinearity(),
            Preset::Tanh => Nonlinearity::new("tanh", dim, (dim as f64).sqrt(), 1.0, |x| x.map(f64::tanh))
                .map_err(|e| invalid(field, e))?,
            Preset::Zero => return Ok(Nonlinearity::zero(dim)),
        };
        if self.scale == 1.0 {
            return Ok(base);
        }
        let s = self.scale;
        let name = format!("{}*{s}", base.name());
        let (m, l) = (base.bound() * s, base.lipschitz() * s);
        Nonlinearity::new(name, dim, m, l, move |x| base.eval(x) * s).map_err(|e| invalid(field, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionParams {
    pub source: SourceParams,
    /// Interval on which the decomposition is written out and checked.
    pub window: (f64, f64),
    pub step: f64,
    /// Length of the interval `[0, horizon]` scanned for evidence.
    pub horizon: f64,
    pub evidence_window: f64,
    pub ladder: Vec<f64>,
    pub decay_ladder: Vec<f64>,
    pub epsilon0: f64,
    pub delta: f64,
}

impl Default for FunctionParams {
    fn default() -> Self {
        FunctionParams {
            source: SourceParams::default(),
            window: (-20.0, 40.0),
            step: 1.0 / 16.0,
            horizon: 1e4,
            evidence_window: 1.0,
            ladder: DEFAULT_LADDER.to_vec(),
            decay_ladder: vec![1e-2, 1e-4, 1e-6],
            epsilon0: 0.3,
            delta: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceParams {
    pub source: SourceParams,
    pub range: (i64, i64),
    pub horizon: usize,
    pub evidence_window: usize,
    pub ladder: Vec<f64>,
    pub decay_ladder: Vec<f64>,
    pub epsilon0: f64,
}

impl Default for SequenceParams {
    fn default() -> Self {
        SequenceParams {
            source: SourceParams::default(),
            range: (-50, 1000),
            horizon: 1_000_000,
            evidence_window: 20,
            ladder: DEFAULT_LADDER.to_vec(),
            decay_ladder: DEFAULT_LADDER.to_vec(),
            epsilon0: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayParams {
    pub source: SourceParams,
    pub a: DMatrix<f64>,
    pub tau: f64,
    pub nonlinearity: NonlinearityChoice,
    pub step: f64,
    pub window: (f64, f64),
    pub epsilon: f64,
    pub slack: f64,
    pub lambda_fraction: f64,
    pub contraction_pairs: usize,
    pub tail_bound: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        DelayParams {
            source: SourceParams::default(),
            a: catalog::delay_matrix(),
            tau: DELAY_TAU,
            nonlinearity: NonlinearityChoice {
                preset: Preset::ArctanArccot,
                scale: 1.0,
            },
            step: DELAY_TAU / DEFAULT_STEPS_PER_DELAY as f64,
            window: (0.0, 200.0),
            epsilon: 1e-3,
            slack: 1e-6,
            lambda_fraction: DEFAULT_LAMBDA_FRACTION,
            contraction_pairs: 20,
            tail_bound: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteParams {
    pub source: SourceParams,
    pub b: DMatrix<f64>,
    pub nonlinearity: NonlinearityChoice,
    /// Number of forcing indices generated from 0.
    pub horizon: usize,
    pub epsilon: f64,
    /// `γ` as a fraction of its upper bound.
    pub gamma_fraction: f64,
    pub slack: f64,
    /// Indices kept before `α` and total window length.
    pub lead: i64,
    pub span: i64,
    pub tol: f64,
    pub settle_within: f64,
    pub sensitivity_horizon: usize,
}

impl Default for DiscreteParams {
    fn default() -> Self {
        DiscreteParams {
            source: SourceParams::default(),
            b: catalog::discrete_matrix(),
            nonlinearity: NonlinearityChoice {
                preset: Preset::SinCos,
                scale: 1.0,
            },
            horizon: 20_000,
            epsilon: 1e-6,
            gamma_fraction: 0.5,
            slack: 1e-9,
            lead: 40,
            span: 400,
            tol: 1e-13,
            settle_within: 60.0,
            sensitivity_horizon: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectParams {
    pub input: PathBuf,
    /// Maximum number of samples read.
    pub horizon: Option<usize>,
    /// Near-return window, in samples for sequences and time for functions.
    pub window: f64,
    pub ladder: Vec<f64>,
    pub epsilon0: f64,
    pub delta: f64,
}

impl DetectParams {
    pub fn new(input: PathBuf) -> Self {
        DetectParams {
            input,
            horizon: None,
            window: 20.0,
            ladder: DEFAULT_LADDER.to_vec(),
            epsilon0: 0.3,
            delta: 0.25,
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<f64>,
}

impl FunctionParams {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.source.seed = seed("--seed", s)?;
        }
        if let Some(s) = o.step {
            self.step = positive("--step", s)?;
        }
        if let Some(h) = o.horizon {
            self.horizon = positive("--horizon", h)?;
        }
        if let Some(t) = o.tol {
            self.decay_ladder = ladder_ending_at(&self.decay_ladder, positive("--tol", t)?);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("step", self.step)?;
        let per_unit = (1.0 / self.step).round();
        if self.step > 1.0 || (per_unit * self.step - 1.0).abs() > 1e-12 {
            return Err(invalid("step", format!("{} must divide one time unit", self.step)));
        }
        if self.window.1 <= self.window.0 {
            return Err(invalid("window", "end must exceed start"));
        }
        positive("horizon", self.horizon)?;
        positive("epsilon0", self.epsilon0)?;
        positive("delta", self.delta)?;
        if self.step > self.delta / 4.0 {
            return Err(invalid(
                "delta",
                format!("must be at least four grid steps ({})", 4.0 * self.step),
            ));
        }
        check_ladder("ladder", &self.ladder)?;
        check_ladder("decay_ladder", &self.decay_ladder)
    }
}

impl SequenceParams {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.source.seed = seed("--seed", s)?;
        }
        if o.step.is_some() {
            return Err(invalid("--step", "sequences have no step"));
        }
        if let Some(h) = o.horizon {
            self.horizon = positive("--horizon", h)?.round() as usize;
        }
        if let Some(t) = o.tol {
            self.decay_ladder = ladder_ending_at(&self.decay_ladder, positive("--tol", t)?);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.range.1 <= self.range.0 {
            return Err(invalid("range", "end must exceed start"));
        }
        if self.horizon <= self.evidence_window + 1 {
            return Err(invalid("horizon", "must exceed the evidence window"));
        }
        positive("epsilon0", self.epsilon0)?;
        check_ladder("ladder", &self.ladder)?;
        check_ladder("decay_ladder", &self.decay_ladder)
    }
}

impl DelayParams {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.source.seed = seed("--seed", s)?;
        }
        if let Some(s) = o.step {
            self.step = positive("--step", s)?;
        }
        if let Some(h) = o.horizon {
            self.window.1 = self.window.0 + positive("--horizon", h)?;
        }
        if let Some(t) = o.tol {
            self.epsilon = positive("--tol", t)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.a.nrows() != 2 || !self.a.is_square() || self.a.iter().any(|v| !v.is_finite()) {
            return Err(invalid(
                "system.matrix",
                "must be a 2x2 matrix of finite numbers to match the example forcing",
            ));
        }
        positive("system.tau", self.tau)?;
        positive("numeric.step", self.step)?;
        lag_steps(self.tau, self.step).map_err(|_| {
            invalid(
                "numeric.step",
                format!("{} must divide tau = {} at least twice", self.step, self.tau),
            )
        })?;
        if self.window.1 <= self.window.0 {
            return Err(invalid("numeric.window", "end must exceed start"));
        }
        positive("numeric.epsilon", self.epsilon)?;
        if !(self.slack >= 0.0) {
            return Err(invalid("numeric.slack", "must be non-negative"));
        }
        if !(self.lambda_fraction > 0.0 && self.lambda_fraction < 1.0) {
            return Err(invalid("numeric.lambda_fraction", "must lie in (0, 1)"));
        }
        positive("numeric.tail_bound", self.tail_bound)?;
        self.nonlinearity.build(2, "system.nonlinearity").map(|_| ())
    }
}

impl DiscreteParams {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.source.seed = seed("--seed", s)?;
        }
        if o.step.is_some() {
            return Err(invalid("--step", "the discrete system has no step"));
        }
        if let Some(h) = o.horizon {
            self.horizon = positive("--horizon", h)?.round() as usize;
        }
        if let Some(t) = o.tol {
            self.epsilon = positive("--tol", t)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.b.nrows() != 2 || !self.b.is_square() || self.b.iter().any(|v| !v.is_finite()) {
            return Err(invalid(
                "system.matrix",
                "must be a 2x2 matrix of finite numbers to match the example forcing",
            ));
        }
        positive("numeric.epsilon", self.epsilon)?;
        if !(self.gamma_fraction > 0.0 && self.gamma_fraction < 1.0) {
            return Err(invalid("numeric.gamma_fraction", "must lie in (0, 1)"));
        }
        if !(self.slack >= 0.0) {
            return Err(invalid("numeric.slack", "must be non-negative"));
        }
        if self.lead < 0 || self.span <= self.lead {
            return Err(invalid(
                "numeric.span",
                "must exceed numeric.lead, which must be non-negative",
            ));
        }
        positive("numeric.tol", self.tol)?;
        positive("numeric.settle_within", self.settle_within)?;
        if self.horizon < 2 {
            return Err(invalid("numeric.horizon", "must be at least 2"));
        }
        self.nonlinearity.build(2, "system.nonlinearity").map(|_| ())
    }
}

impl DetectParams {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if o.seed.is_some() || o.step.is_some() {
            return Err(invalid("--seed/--step", "do not apply to detect"));
        }
        if let Some(h) = o.horizon {
            self.horizon = Some(positive("--horizon", h)?.round() as usize);
        }
        if let Some(t) = o.tol {
            self.ladder = ladder_ending_at(&self.ladder, positive("--tol", t)?);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.window >= 0.0) {
            return Err(invalid("window", "must be non-negative"));
        }
        positive("epsilon0", self.epsilon0)?;
        positive("delta", self.delta)?;
        check_ladder("ladder", &self.ladder)
    }
}

/// The `run` document. Every section is optional; omitted values take the
/// defaults of the corresponding example.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub numeric: NumericSection,
    /// `function` or `sequence`, for `construct`.
    pub variant: Option<Variant>,
    /// Input CSV, for `detect`; relative to the config file.
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    #[default]
    Delay,
    Discrete,
    Construct,
    Detect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Function,
    Sequence,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub seed: Option<f64>,
    pub r: Option<f64>,
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Row-major.
    pub matrix: Option<Vec<Vec<f64>>>,
    pub tau: Option<f64>,
    pub nonlinearity: Option<NonlinearityChoice>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSection {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub epsilon: Option<f64>,
    pub slack: Option<f64>,
    pub lambda_fraction: Option<f64>,
    pub gamma_fraction: Option<f64>,
    pub tail_bound: Option<f64>,
    pub lead: Option<i64>,
    pub span: Option<i64>,
    pub tol: Option<f64>,
    pub ladder: Option<Vec<f64>>,
    pub epsilon0: Option<f64>,
    pub delta: Option<f64>,
    pub evidence_window: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            prefix: default_prefix(),
        }
    }
}

fn default_prefix() -> String {
    "run".into()
}

/// A validated configuration, ready to dispatch.
#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    Function(FunctionParams),
    Sequence(SequenceParams),
    Delay(DelayParams),
    Discrete(DiscreteParams),
    Detect(DetectParams),
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(field, "must be a nonempty square list of rows"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    fn source(&self) -> Result<SourceParams, CliError> {
        let mut s = SourceParams::default();
        if let Some(v) = self.source.seed {
            s.seed = seed("source.seed", v)?;
        }
        if let Some(r) = self.source.r {
            if !(r > 0.0 && r <= 4.0) {
                return Err(invalid("source.r", format!("must lie in (0, 4], got {r}")));
            }
            s.r = r;
        }
        if let Some(b) = self.source.burn_in {
            s.burn_in = b;
        }
        Ok(s)
    }

    /// Builds the pipeline parameters; `base` resolves a relative `input`.
    pub fn pipeline(&self, base: &Path) -> Result<Pipeline, CliError> {
        let n = &self.numeric;
        let source = self.source()?;
        let nonlinearity = self.system.nonlinearity;
        match self.kind {
            Kind::Delay => {
                let mut p = DelayParams {
                    source,
                    ..DelayParams::default()
                };
                if let Some(rows) = &self.system.matrix {
                    p.a = matrix("system.matrix", rows)?;
                }
                if let Some(t) = self.system.tau {
                    p.tau = t;
                    if n.step.is_none() {
                        p.step = t / DEFAULT_STEPS_PER_DELAY as f64;
                    }
                }
                if let Some(f) = nonlinearity {
                    p.nonlinearity = f;
                }
                set(&mut p.step, n.step);
                set(&mut p.window, n.window);
                if let Some(h) = n.horizon {
                    p.window.1 = p.window.0 + positive("numeric.horizon", h)?;
                }
                set(&mut p.epsilon, n.epsilon);
                set(&mut p.slack, n.slack);
                set(&mut p.lambda_fraction, n.lambda_fraction);
                set(&mut p.tail_bound, n.tail_bound);
                p.validate()?;
                Ok(Pipeline::Delay(p))
            }
            Kind::Discrete => {
                let mut p = DiscreteParams {
                    source,
                    ..DiscreteParams::default()
                };
                if let Some(rows) = &self.system.matrix {
                    p.b = matrix("system.matrix", rows)?;
                }
                if self.system.tau.is_some() {
                    return Err(invalid("system.tau", "does not apply to a discrete system"));
                }
                if let Some(f) = nonlinearity {
                    p.nonlinearity = f;
                }
                if let Some(h) = n.horizon {
                    p.horizon = positive("numeric.horizon", h)?.round() as usize;
                }
                set(&mut p.epsilon, n.epsilon);
                set(&mut p.gamma_fraction, n.gamma_fraction);
                set(&mut p.slack, n.slack);
                set(&mut p.lead, n.lead);
                set(&mut p.span, n.span);
                set(&mut p.tol, n.tol);
                p.validate()?;
                Ok(Pipeline::Discrete(p))
            }
            Kind::Construct => match self.variant {
                Some(Variant::Function) => {
                    let mut p = FunctionParams {
                        source,
                        ..FunctionParams::default()
                    };
                    set(&mut p.step, n.step);
                    set(&mut p.window, n.window);
                    set(&mut p.horizon, n.horizon);
                    set(&mut p.epsilon0, n.epsilon0);
                    set(&mut p.delta, n.delta);
                    set(&mut p.evidence_window, n.evidence_window);
                    set(&mut p.ladder, n.ladder.clone());
                    p.validate()?;
                    Ok(Pipeline::Function(p))
                }
                Some(Variant::Sequence) => {
                    let mut p = SequenceParams {
                        source,
                        ..SequenceParams::default()
                    };
                    if n.step.is_some() {
                        return Err(invalid("numeric.step", "sequences have no step"));
                    }
                    if let Some((a, b)) = n.window {
                        p.range = (a.round() as i64, b.round() as i64);
                    }
                    if let Some(h) = n.horizon {
                        p.horizon = positive("numeric.horizon", h)?.round() as usize;
                    }
                    if let Some(w) = n.evidence_window {
                        p.evidence_window = w.round().max(0.0) as usize;
                    }
                    set(&mut p.epsilon0, n.epsilon0);
                    set(&mut p.ladder, n.ladder.clone());
                    p.validate()?;
                    Ok(Pipeline::Sequence(p))
                }
                None => Err(invalid("variant", "construct needs `function` or `sequence`")),
            },
            Kind::Detect => {
                let input = self
                    .input
                    .as_ref()
                    .ok_or_else(|| invalid("input", "detect needs an input CSV"))?;
                let mut p = DetectParams::new(base.join(input));
                if let Some(h) = n.horizon {
                    p.horizon = Some(positive("numeric.horizon", h)?.round() as usize);
                }
                set(&mut p.window, n.evidence_window);
                set(&mut p.ladder, n.ladder.clone());
                set(&mut p.epsilon0, n.epsilon0);
                set(&mut p.delta, n.delta);
                p.validate()?;
                Ok(Pipeline::Detect(p))
            }
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Converts a matrix to row-major nested lists for echoing.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
