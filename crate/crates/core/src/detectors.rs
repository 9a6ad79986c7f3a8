//! Finite-horizon evidence for recurrence, separation, decay and
//! sensitivity.
//!
//! Nothing here establishes a limit property. Every report records the
//! horizon it scanned, and a rung that was not reached is reported as such.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chaos_source::{logistic_step, GridFunction};
use crate::constructs::{Samples, VectorSequence};
use crate::discrete_system::DiscreteSystemSpec;
use crate::error::{Error, Result};
use crate::report::{ladder_crossings, LadderCrossing};

pub const DEFAULT_LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.02];
pub const DEFAULT_SEQUENCE_HORIZON: usize = 1_000_000;
pub const DEFAULT_FUNCTION_HORIZON: f64 = 1e4;

/// A shift `ζ` along which the motion stays within `rung` of itself on
/// `window + 1` consecutive samples starting at the first recorded one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NearReturn {
    pub zeta: usize,
    pub rung: f64,
    /// The largest deviation actually observed on the window.
    pub achieved: f64,
    pub window: usize,
}

/// A separation `‖x_{η+ζ} - x_η‖ ≥ ε₀`. For sequences `eta` is an absolute
/// index; for functions it is the centre time of the checked interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Separation {
    pub zeta: usize,
    pub eta: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnpredictabilityEvidence {
    pub returns: Vec<NearReturn>,
    /// Rungs for which no shift was found within the horizon.
    pub missing_rungs: Vec<f64>,
    pub separations: Vec<Separation>,
    /// Shifts with no separation found within the horizon.
    pub unseparated: Vec<usize>,
    pub epsilon0_estimate: f64,
    /// Number of samples scanned.
    pub scanned_horizon: usize,
    /// Grid step for functions, 1 for sequences.
    pub step: f64,
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.iter().any(|r| !(*r > 0.0)) || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(format!(
            "ladder {ladder:?} must be positive and strictly decreasing"
        )));
    }
    Ok(())
}

/// `max_{0 ≤ k ≤ window} ‖x_{k+ζ} - x_k‖`, abandoning the scan once it
/// reaches `cutoff`.
fn window_deviation(values: &[DVector<f64>], zeta: usize, window: usize, cutoff: f64) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..=window {
        worst = worst.max((&values[k + zeta] - &values[k]).norm());
        if worst >= cutoff {
            break;
        }
    }
    worst
}

fn near_returns(values: &[DVector<f64>], window: usize, ladder: &[f64]) -> (Vec<NearReturn>, Vec<f64>) {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    let max_zeta = values.len().saturating_sub(window + 1);
    let mut zeta = 0;
    for (r, &rung) in ladder.iter().enumerate() {
        let hit = (zeta + 1..=max_zeta)
            .map(|z| (z, window_deviation(values, z, window, rung)))
            .find(|&(_, d)| d < rung);
        match hit {
            Some((z, d)) => {
                zeta = z;
                found.push(NearReturn {
                    zeta: z,
                    rung,
                    achieved: d,
                    window,
                });
            }
            None => {
                missing.extend_from_slice(&ladder[r..]);
                break;
            }
        }
    }
    (found, missing)
}

/// For each rung the smallest `ζ`, larger than the previous one, with
/// `max_{0 ≤ k ≤ window} ‖ψ_{b+k+ζ} - ψ_{b+k}‖ < rung`, `b` the first index.
/// A rung that is not met stops the scan; it and all later rungs are
/// reported as missing.
pub fn find_near_returns(seq: &VectorSequence, window: usize, ladder: &[f64]) -> Result<(Vec<NearReturn>, Vec<f64>)> {
    check_ladder(ladder)?;
    Ok(near_returns(seq.values(), window, ladder))
}

/// `‖ψ_{η+ζ} - ψ_η‖` when both indices are recorded.
pub fn separation_at(seq: &VectorSequence, zeta: usize, eta: i64) -> Option<f64> {
    let a = seq.get(eta.checked_add(zeta as i64)?)?;
    Some((a - seq.get(eta)?).norm())
}

/// For each `ζ`, the smallest recorded `η` with `‖ψ_{η+ζ} - ψ_η‖ ≥ ε₀`.
/// The second list holds the shifts with no such `η`.
pub fn find_separations(seq: &VectorSequence, zetas: &[usize], epsilon0: f64) -> (Vec<Separation>, Vec<usize>) {
    let values = seq.values();
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for &zeta in zetas {
        let hit = (0..values.len().saturating_sub(zeta))
            .map(|k| (k, (&values[k + zeta] - &values[k]).norm()))
            .find(|&(_, d)| d >= epsilon0);
        match hit {
            Some((k, d)) => found.push(Separation {
                zeta,
                eta: (seq.base_index() + k as i64) as f64,
                separation: d,
            }),
            None => missing.push(zeta),
        }
    }
    (found, missing)
}

/// Near-returns followed by separations along the shifts found.
pub fn evidence_for_sequence(
    seq: &VectorSequence,
    window: usize,
    ladder: &[f64],
    epsilon0: f64,
) -> Result<UnpredictabilityEvidence> {
    let (returns, missing_rungs) = find_near_returns(seq, window, ladder)?;
    let zetas: Vec<usize> = returns.iter().map(|r| r.zeta).collect();
    let (separations, unseparated) = find_separations(seq, &zetas, epsilon0);
    Ok(UnpredictabilityEvidence {
        returns,
        missing_rungs,
        separations,
        unseparated,
        epsilon0_estimate: epsilon0,
        scanned_horizon: seq.len(),
        step: 1.0,
    })
}

/// Grid version of [`evidence_for_sequence`]. Shifts are whole multiples
/// of the grid step and `window` is a time span from the grid start. A
/// separation centred at `u` requires `‖φ(t+ζ) - φ(t)‖ ≥ ε₀` at every
/// grid point of `[u - δ, u + δ]`.
pub fn evidence_for_function(
    phi: &GridFunction,
    window: f64,
    ladder: &[f64],
    epsilon0: f64,
    delta: f64,
) -> Result<UnpredictabilityEvidence> {
    check_ladder(ladder)?;
    let step = phi.step();
    if !(delta > 0.0) || step > delta / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "grid step {step} cannot resolve separation interval half-width {delta}; need step <= delta/4"
        )));
    }
    if !(window >= 0.0) {
        return Err(Error::Domain(format!("window {window} must be non-negative")));
    }
    let values = phi.samples();
    let window_nodes = (window / step).round() as usize;
    let (returns, missing_rungs) = near_returns(values, window_nodes, ladder);
    let half = (delta / step).round() as usize;
    let mut separations = Vec::new();
    let mut unseparated = Vec::new();
    for r in &returns {
        let zeta = r.zeta;
        let n = values.len().saturating_sub(zeta);
        // run-length of consecutive separated nodes; a run of 2·half+1 nodes
        // certifies the interval around its middle node
        let mut run = 0;
        let mut hit = None;
        for k in 0..n {
            let d = (&values[k + zeta] - &values[k]).norm();
            run = if d >= epsilon0 { run + 1 } else { 0 };
            if run == 2 * half + 1 {
                hit = Some(k - half);
                break;
            }
        }
        match hit {
            Some(centre) => {
                let sep = (centre - half..=centre + half)
                    .map(|k| (&values[k + zeta] - &values[k]).norm())
                    .fold(f64::INFINITY, f64::min);
                separations.push(Separation {
                    zeta,
                    eta: phi.time(centre),
                    separation: sep,
                });
            }
            None => unseparated.push(zeta),
        }
    }
    Ok(UnpredictabilityEvidence {
        returns,
        missing_rungs,
        separations,
        unseparated,
        epsilon0_estimate: epsilon0,
        scanned_horizon: phi.len(),
        step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub ladder: Vec<LadderCrossing>,
    /// `(location, sup of ‖θ‖ from there to the end)`, decimated.
    pub monotone_tail_sup: Vec<(f64, f64)>,
    /// Last recorded location.
    pub horizon: f64,
}

/// For each rung, the first location after which `‖θ‖` stays strictly
/// below it for the rest of the recorded window.
pub fn decay_test<S: Samples>(tail: &S, ladder: &[f64]) -> Result<DecayReport> {
    check_ladder(ladder)?;
    let profile: Vec<(f64, f64)> = (0..tail.len())
        .map(|k| (tail.location(k), tail.value(k).norm()))
        .collect();
    let mut suffix = vec![0.0_f64; profile.len()];
    let mut running = 0.0_f64;
    for k in (0..profile.len()).rev() {
        running = running.max(profile[k].1);
        suffix[k] = running;
    }
    let stride = profile.len().div_ceil(200).max(1);
    let monotone_tail_sup = (0..profile.len())
        .step_by(stride)
        .map(|k| (profile[k].0, suffix[k]))
        .collect();
    Ok(DecayReport {
        ladder: ladder_crossings(&profile, ladder),
        monotone_tail_sup,
        horizon: profile.last().map_or(f64::NAN, |p| p.0),
    })
}

/// A map iterated by [`sensitivity_demo`]. `index` is the index of the
/// input state.
pub trait IteratedMap {
    fn apply(&self, index: i64, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// `x ↦ r x (1 - x)` on `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticMap {
    pub r: f64,
}

impl IteratedMap for LogisticMap {
    fn apply(&self, _: i64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, logistic_step(x[0], self.r)?))
    }
}

/// `x ↦ B x`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub b: DMatrix<f64>,
}

impl IteratedMap for LinearMap {
    fn apply(&self, _: i64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.b * x)
    }
}

impl IteratedMap for DiscreteSystemSpec {
    fn apply(&self, index: i64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.step(index, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub perturbation: f64,
    pub threshold: f64,
    /// Steps actually taken.
    pub horizon: usize,
    /// First step count at which the separation reached the threshold.
    pub divergence_index: Option<usize>,
    /// Least-squares slope of `ln(separation)` against the step count up
    /// to the divergence index.
    pub slope: Option<f64>,
    pub separations: Vec<f64>,
}

/// Iterates `x0` and `x0 + perturbation·e₁` side by side for up to
/// `horizon` steps, starting at index `start`. Stops at the first step
/// where the separation reaches `threshold`, or early if the map runs out
/// of domain (for example a finite forcing window).
pub fn sensitivity_demo<M: IteratedMap + ?Sized>(
    map: &M,
    start: i64,
    x0: &DVector<f64>,
    perturbation: f64,
    threshold: f64,
    horizon: usize,
) -> Result<SensitivityReport> {
    if x0.is_empty() {
        return Err(Error::Domain("initial state is empty".into()));
    }
    let mut x = x0.clone();
    let mut y = x0.clone();
    y[0] += perturbation;
    let mut separations = vec![(&x - &y).norm()];
    let mut divergence_index = (separations[0] >= threshold && perturbation > 0.0).then_some(0);
    let mut steps = 0;
    while divergence_index.is_none() && steps < horizon {
        let i = start + steps as i64;
        let (nx, ny) = match (map.apply(i, &x), map.apply(i, &y)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::WindowExhausted(_)), _) | (_, Err(Error::WindowExhausted(_))) => break,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        x = nx;
        y = ny;
        steps += 1;
        let d = (&x - &y).norm();
        separations.push(d);
        if d >= threshold {
            divergence_index = Some(steps);
        }
    }
    let slope = divergence_index.and_then(|n| {
        let pts: Vec<(f64, f64)> = separations[..=n]
            .iter()
            .enumerate()
            .map(|(k, &d)| (k as f64, d))
            .collect();
        log_slope(&pts)
    });
    Ok(SensitivityReport {
        perturbation,
        threshold,
        horizon: steps,
        divergence_index,
        slope,
        separations,
    })
}

/// Least-squares slope of `ln y` against `x`, ignoring points with
/// `y ≤ 0`. `None` with fewer than two usable points.
pub fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(x, y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_source::logistic_orbit;
    use crate::constructs::{build_sequence_triple, sequence_theta};

    fn scalars(v: &[f64]) -> VectorSequence {
        VectorSequence::from_scalars(0, v).unwrap()
    }

    #[test]
    fn constant_sequence_returns_immediately() {
        let s = scalars(&[0.3; 50]);
        let (r, missing) = find_near_returns(&s, 5, &DEFAULT_LADDER).unwrap();
        assert!(missing.is_empty());
        assert_eq!(r.iter().map(|x| x.zeta).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        let (sep, none) = find_separations(&s, &[1, 2], 0.1);
        assert!(sep.is_empty());
        assert_eq!(none, vec![1, 2]);
    }

    #[test]
    fn period_two_returns_on_even_shifts() {
        let v: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 0.2 } else { 0.8 }).collect();
        let (r, _) = find_near_returns(&scalars(&v), 4, &DEFAULT_LADDER).unwrap();
        assert!(r.iter().all(|x| x.zeta % 2 == 0));
    }

    #[test]
    fn alternating_sign_separates_at_once() {
        let v: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (sep, _) = find_separations(&scalars(&v), &[3], 2.0);
        assert_eq!(sep[0].eta, 0.0);
        assert_eq!(sep[0].separation, 2.0);
    }

    #[test]
    fn logistic_psi_has_near_returns_and_separations() {
        let orbit = logistic_orbit(0.41, 1000, 200_000).unwrap();
        let psi = build_sequence_triple(&orbit).unwrap().psi;
        let ev = evidence_for_sequence(&psi, 20, &[0.05], 0.3).unwrap();
        assert_eq!(ev.returns.len(), 1);
        assert_eq!(ev.separations.len(), 1);
        let r = ev.returns[0];
        for k in 0..=20 {
            assert!((psi.get(k + r.zeta as i64).unwrap() - psi.get(k).unwrap()).norm() < 0.05);
        }
    }

    #[test]
    fn function_resolution_and_interval() {
        // periodic until a unit jump at t = 25
        let g = GridFunction::from_fn(0.0, 0.0125, 4000, |t| {
            DVector::from_element(1, (4.0 * t).sin() + if t > 25.0 { 1.0 } else { 0.0 })
        })
        .unwrap();
        assert!(evidence_for_function(&g, 1.0, &[0.02], 0.5, 0.04).is_err());
        let ev = evidence_for_function(&g, 1.0, &[0.02], 0.5, 0.05).unwrap();
        assert_eq!(ev.returns[0].zeta, 126);
        let s = ev.separations[0];
        let zeta = ev.returns[0].zeta;
        let c = ((s.eta - g.t_start()) / g.step()).round() as usize;
        let vals: Vec<f64> = (c - 4..=c + 4)
            .map(|k| (g.sample(k + zeta) - g.sample(k)).norm())
            .collect();
        assert_eq!(vals.len(), 9);
        assert!(vals.iter().all(|v| *v >= 0.5));

        let flat = GridFunction::from_fn(0.0, 0.01, 500, |_| DVector::from_element(2, 1.0)).unwrap();
        let ev = evidence_for_function(&flat, 1.0, &DEFAULT_LADDER, 0.1, 0.05).unwrap();
        assert_eq!(ev.returns.len(), 4);
        assert!(ev.separations.is_empty());
    }

    #[test]
    fn decay_of_sequence_theta() {
        let theta = VectorSequence::from_fn(0, 200, sequence_theta).unwrap();
        let rep = decay_test(&theta, &[0.1, 0.02]).unwrap();
        assert_eq!(rep.ladder[1].first_location, Some(10.0));
        let zero = VectorSequence::from_fn(5, 30, |_| DVector::zeros(2)).unwrap();
        let rep = decay_test(&zero, &DEFAULT_LADDER).unwrap();
        assert!(rep.ladder.iter().all(|c| c.first_location == Some(5.0)));
        assert!(decay_test(&zero, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        let x0 = DVector::from_element(1, 0.41);
        let rep = sensitivity_demo(&LogisticMap { r: 3.91 }, 0, &x0, 1e-10, 0.3, 10_000).unwrap();
        let n = rep.divergence_index.unwrap();
        assert!(n < 100);
        assert!(rep.slope.unwrap() > 0.0);

        let lin = LinearMap {
            b: DMatrix::from_row_slice(2, 2, &[0.25, -0.25, 0.5, 0.125]),
        };
        let x0 = DVector::from_vec(vec![0.3, 0.1]);
        assert!(sensitivity_demo(&lin, 0, &x0, 1e-3, 0.3, 1000)
            .unwrap()
            .divergence_index
            .is_none());
        let rep = sensitivity_demo(
            &LogisticMap { r: 3.91 },
            0,
            &DVector::from_element(1, 0.41),
            0.0,
            0.3,
            500,
        )
        .unwrap();
        assert!(rep.divergence_index.is_none());
        assert_eq!(rep.horizon, 500);
    }

    #[test]
    fn log_slope_of_exponential() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, (0.5 * k as f64).exp())).collect();
        assert!((log_slope(&pts).unwrap() - 0.5).abs() < 1e-12);
        assert!(log_slope(&[(0.0, 1.0)]).is_none());
    }
}
