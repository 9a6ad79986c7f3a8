//! The end-to-end pipelines. Each builds its example, runs every check that
//! applies and returns the report together with the tables to write.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use unpredictable_core::catalog::{self, function_psi_bound, sequence_psi_bound};
use unpredictable_core::constructs::{
    affine_transform, non_unpredictability_witness, settling_index, shift, witness_at, Samples,
};
use unpredictable_core::delay_system::{
    bounded_solution, bounded_solution_with_history, check_assumptions_a, convergence_check, default_burn_in,
    default_gamma, eigenvalues, integrate_mos, lag_steps, proof_constants, stability_constants, stability_grid_excess,
    ContractionOperator, STABILITY_GRID_SLACK,
};
use unpredictable_core::detectors::{
    decay_test, evidence_for_function, evidence_for_sequence, log_slope, sensitivity_demo, separation_at, LogisticMap,
};
use unpredictable_core::discrete_system::{
    bounded_orbit, bounded_orbit_by_sum, check_assumptions_b, convergence_check_discrete, gamma_upper_bound,
    gronwall_envelope, iterate_from, orbit_scale, spectral_norm,
};
use unpredictable_core::{
    Check, CheckStatus, DMatrix, DVector, DecayReport, DelayEnvelope, DelaySystemSpec, DiscreteSystemSpec, Error,
    GridFunction, UnpredictabilityEvidence, VectorSequence,
};

use crate::config::{rows, DelayParams, DetectParams, DiscreteParams, FunctionParams, Pipeline, SequenceParams};
use crate::output::{read_csv, Locations, Outcome, Report, Table};
use crate::CliError;

/// Seed for the random perturbations, histories and transforms used by
/// the checks. Fixed so that reports are reproducible.
const CHECK_RNG_SEED: u64 = 0x5EED_0063;

/// Slack on the contraction ratio `N L_f / λ`.
pub const CONTRACTION_SLACK: f64 = 0.05;

pub fn run_pipeline(p: &Pipeline, example: &str) -> Result<Outcome, CliError> {
    match p {
        Pipeline::Function(f) => function_pipeline(f, example),
        Pipeline::Sequence(s) => sequence_pipeline(s, example),
        Pipeline::Delay(d) => delay_pipeline(d, example),
        Pipeline::Discrete(d) => discrete_pipeline(d, example),
        Pipeline::Detect(d) => detect_pipeline(d, example),
    }
}

fn sup_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn source_echo(s: &catalog::SourceParams) -> serde_json::Value {
    json!({"seed": s.seed, "r": s.r, "burn_in": s.burn_in})
}

/// Re-verifies every near-return and separation against the samples the
/// evidence was computed from. `locate` maps a separation's `eta` to a
/// sample index and `half` is the half-width, in samples, of the interval
/// a separation must hold on.
pub fn recheck_evidence(
    values: &[DVector<f64>],
    ev: &UnpredictabilityEvidence,
    locate: impl Fn(f64) -> Option<usize>,
    half: usize,
) -> Check {
    let mut bad = 0usize;
    let mut worst_return = 0.0_f64;
    let mut prev_zeta = 0usize;
    for r in &ev.returns {
        if r.zeta <= prev_zeta || r.zeta + r.window >= values.len() {
            bad += 1;
            continue;
        }
        prev_zeta = r.zeta;
        let dev = (0..=r.window)
            .map(|k| (&values[k + r.zeta] - &values[k]).norm())
            .fold(0.0, f64::max);
        worst_return = worst_return.max(dev / r.rung);
        if !(dev < r.rung) {
            bad += 1;
        }
    }
    let mut min_sep_ratio = f64::INFINITY;
    for s in &ev.separations {
        let ok = locate(s.eta).is_some_and(|k0| {
            k0 >= half
                && k0 + half + s.zeta < values.len()
                && (k0 - half..=k0 + half).all(|k| {
                    let d = (&values[k + s.zeta] - &values[k]).norm();
                    min_sep_ratio = min_sep_ratio.min(d / ev.epsilon0_estimate);
                    d >= ev.epsilon0_estimate
                })
        });
        if !ok || s.separation < ev.epsilon0_estimate {
            bad += 1;
        }
    }
    let mut c = Check::new("evidence_consistency", CheckStatus::from_bool(bad == 0))
        .value("returns", ev.returns.len() as f64)
        .value("separations", ev.separations.len() as f64)
        .value("failures", bad as f64)
        .tolerance("failures", 0.0);
    if !ev.returns.is_empty() {
        c = c
            .value("worst_return_over_rung", worst_return)
            .tolerance("worst_return_over_rung", 1.0);
    }
    if min_sep_ratio.is_finite() {
        c = c
            .value("min_separation_over_epsilon0", min_sep_ratio)
            .tolerance("min_separation_over_epsilon0", 1.0);
    }
    c
}

fn decay_check(name: &str, d: &DecayReport) -> Check {
    let reached = d.ladder.iter().all(|c| c.first_location.is_some());
    let mut c = Check::new(name, CheckStatus::from_bool(reached)).value("horizon", d.horizon);
    for rung in &d.ladder {
        c = c.value(
            &format!("crossing_{:e}", rung.epsilon),
            rung.first_location.unwrap_or(f64::NAN),
        );
    }
    c
}

fn evidence_summary(ev: &UnpredictabilityEvidence) -> serde_json::Value {
    json!({
        "finite_horizon": true,
        "scanned_horizon": ev.scanned_horizon,
        "step": ev.step,
        "epsilon0": ev.epsilon0_estimate,
        "returns": ev.returns,
        "missing_rungs": ev.missing_rungs,
        "separations": ev.separations,
        "unseparated": ev.unseparated,
    })
}

pub fn function_pipeline(p: &FunctionParams, example: &str) -> Result<Outcome, CliError> {
    let echo = json!({
        "kind": "construct",
        "variant": "function",
        "source": source_echo(&p.source),
        "window": [p.window.0, p.window.1],
        "step": p.step,
        "horizon": p.horizon,
        "evidence_window": p.evidence_window,
        "ladder": p.ladder,
        "decay_ladder": p.decay_ladder,
        "epsilon0": p.epsilon0,
        "delta": p.delta,
    });
    let mut r = Report::new(example, echo);
    let bound = function_psi_bound();
    let tr = r.timed("construct", || {
        catalog::function_example(&p.source, p.window.0, p.window.1, p.step)
    })?;

    let h_sup = tr.psi.component(1).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    r.push(
        Check::new("h_sup", CheckStatus::from_bool(h_sup <= 0.5 + 1e-12))
            .value("sup", h_sup)
            .tolerance("bound", 0.5)
            .tolerance("slack", 1e-12),
    );
    let psi_sup = tr.psi.sup_norm();
    r.push(
        Check::new("psi_sup", CheckStatus::from_bool(psi_sup <= bound + 1e-12))
            .value("sup", psi_sup)
            .tolerance("bound", bound),
    );
    let ulps = tr.max_residual_ulps();
    r.push(
        Check::new("decomposition_residual", CheckStatus::from_bool(ulps <= 1.0))
            .value("ulps", ulps)
            .tolerance("ulps", 1.0),
    );

    match witness_at(&tr, 0.0, bound) {
        Some(w) => r.push(
            Check::new("witness_at_zero", CheckStatus::Pass)
                .value("location", w.location)
                .value("theta_norm", w.theta_norm)
                .value("margin", w.margin)
                .tolerance("threshold", 4.0 * bound),
        ),
        None => {
            let inside = p.window.0 <= 0.0 && p.window.1 >= 0.0;
            let status = if inside {
                CheckStatus::Fail
            } else {
                CheckStatus::NotApplicable
            };
            r.push(Check::new("witness_at_zero", status).tolerance("threshold", 4.0 * bound));
        }
    }
    let scan = non_unpredictability_witness(&tr, bound);
    r.push(
        Check::new(
            "witness_bound_precondition",
            CheckStatus::from_bool(scan.bound_precondition_met),
        )
        .value("bound", bound)
        .tolerance("bound_lower", 1.0),
    );
    r.evidence("witness_scan", &scan);

    let positive = tr.theta.slice_time(p.window.0.max(0.0), p.window.1)?;
    let decay = decay_test(&positive, &p.decay_ladder)?;
    r.push(decay_check("theta_decay", &decay));
    r.evidence("theta_decay", &decay);

    let psi_long = r
        .timed("evidence", || {
            catalog::function_example(&p.source, 0.0, p.horizon, p.step)
        })?
        .psi;
    let ev = r.timed("evidence", || {
        evidence_for_function(&psi_long, p.evidence_window, &p.ladder, p.epsilon0, p.delta)
    })?;
    let half = (p.delta / p.step).round() as usize;
    let locate = |eta: f64| psi_long.index_of(eta);
    r.push(recheck_evidence(psi_long.samples(), &ev, locate, half));
    r.evidence("psi_unpredictability", evidence_summary(&ev));

    Ok(Outcome {
        report: r,
        tables: vec![
            Table::from_grid("phi", &tr.phi),
            Table::from_grid("psi", &tr.psi),
            Table::from_grid("theta", &tr.theta),
        ],
    })
}

/// A random matrix with singular values in `[0.5, 2]`.
pub fn well_conditioned(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    loop {
        let m: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let sv = m.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo > 0.2 && hi / lo < 4.0 {
            return m * (1.0 / hi.sqrt() / lo.sqrt());
        }
    }
}

pub fn sequence_pipeline(p: &SequenceParams, example: &str) -> Result<Outcome, CliError> {
    let echo = json!({
        "kind": "construct",
        "variant": "sequence",
        "source": source_echo(&p.source),
        "range": [p.range.0, p.range.1],
        "horizon": p.horizon,
        "evidence_window": p.evidence_window,
        "ladder": p.ladder,
        "decay_ladder": p.decay_ladder,
        "epsilon0": p.epsilon0,
    });
    let mut r = Report::new(example, echo);
    let bound = sequence_psi_bound();
    let tr = r.timed("construct", || {
        catalog::sequence_example(&p.source, p.range.0..p.range.1)
    })?;

    let psi_sup = tr.psi.sup_norm();
    r.push(
        Check::new("psi_sup", CheckStatus::from_bool(psi_sup <= bound + 1e-12))
            .value("sup", psi_sup)
            .tolerance("bound", bound),
    );
    let ulps = tr.max_residual_ulps();
    r.push(
        Check::new("decomposition_residual", CheckStatus::from_bool(ulps <= 1.0))
            .value("ulps", ulps)
            .tolerance("ulps", 1.0),
    );
    match witness_at(&tr, 0.0, bound) {
        Some(w) => r.push(
            Check::new("witness_at_zero", CheckStatus::Pass)
                .value("location", w.location)
                .value("theta_norm", w.theta_norm)
                .value("margin", w.margin)
                .tolerance("threshold", 4.0 * bound),
        ),
        None => {
            let inside = p.range.0 <= 0 && p.range.1 > 0;
            let status = if inside {
                CheckStatus::Fail
            } else {
                CheckStatus::NotApplicable
            };
            r.push(Check::new("witness_at_zero", status).tolerance("threshold", 4.0 * bound));
        }
    }
    r.evidence("witness_scan", non_unpredictability_witness(&tr, bound));

    let tail = tr.theta.window(p.range.0.max(0).min(p.range.1 - 1), p.range.1)?;
    let decay = decay_test(&tail, &p.decay_ladder)?;
    r.push(decay_check("theta_decay", &decay));
    r.evidence("theta_decay", &decay);

    let psi_long = r
        .timed("evidence", || catalog::sequence_example(&p.source, 0..p.horizon as i64))?
        .psi;
    let ev = r.timed("evidence", || {
        evidence_for_sequence(&psi_long, p.evidence_window, &p.ladder, p.epsilon0)
    })?;
    let base = psi_long.base_index();
    let locate = |eta: f64| usize::try_from(eta as i64 - base).ok();
    r.push(recheck_evidence(psi_long.values(), &ev, locate, 0));
    r.evidence("psi_unpredictability", evidence_summary(&ev));

    // Transform lemmas, evaluated at the separations found above.
    let mut rng = ChaCha8Rng::seed_from_u64(CHECK_RNG_SEED);
    let omega = well_conditioned(&mut rng, 2);
    let c = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
    let sv = omega.singular_values();
    let (norm, inv_norm) = (sv.max(), 1.0 / sv.min());
    let moved = r.timed("transforms", || affine_transform(&psi_long, &omega, &c))?;
    let mut worst_affine = f64::NEG_INFINITY;
    for s in &ev.separations {
        let eta = s.eta as i64;
        let new = separation_at(&moved, s.zeta, eta).unwrap_or(f64::NAN);
        let lo = s.separation / inv_norm - 1e-9;
        let hi = s.separation * norm + 1e-9;
        worst_affine = worst_affine.max((lo - new).max(new - hi));
    }
    let status = if ev.separations.is_empty() {
        CheckStatus::NotApplicable
    } else {
        CheckStatus::from_bool(worst_affine <= 0.0)
    };
    r.push(
        Check::new("affine_transform_separations", status)
            .value("omega_norm", norm)
            .value("omega_inverse_norm", inv_norm)
            .value("worst_excess", worst_affine)
            .tolerance("absolute", 1e-9),
    );
    let m = 7;
    let shifted = shift(&psi_long, m)?;
    let mut worst_shift = 0.0_f64;
    for s in &ev.separations {
        let eta = s.eta as i64;
        let a = separation_at(&shifted, s.zeta, eta - m).unwrap_or(f64::NAN);
        worst_shift = worst_shift.max((a - s.separation).abs());
    }
    let status = if ev.separations.is_empty() {
        CheckStatus::NotApplicable
    } else {
        CheckStatus::from_bool(worst_shift <= 1e-12)
    };
    r.push(
        Check::new("shift_separations", status)
            .value("shift", m as f64)
            .value("max_difference", worst_shift)
            .tolerance("absolute", 1e-12),
    );

    Ok(Outcome {
        report: r,
        tables: vec![
            Table::from_sequence("phi", &tr.phi),
            Table::from_sequence("psi", &tr.psi),
            Table::from_sequence("theta", &tr.theta),
        ],
    })
}

const DELAY_DEPENDENT: [&str; 9] = [
    "proof_constants",
    "alpha",
    "envelope",
    "tail_after_settling",
    "tail_final_quarter",
    "contraction_pairs",
    "picard_ratio",
    "fixed_point",
    "stability_slope",
];

pub fn delay_pipeline(p: &DelayParams, example: &str) -> Result<Outcome, CliError> {
    let echo = json!({
        "kind": "delay",
        "source": source_echo(&p.source),
        "matrix": rows(&p.a),
        "tau": p.tau,
        "nonlinearity": p.nonlinearity,
        "step": p.step,
        "window": [p.window.0, p.window.1],
        "epsilon": p.epsilon,
        "slack": p.slack,
        "lambda_fraction": p.lambda_fraction,
        "contraction_pairs": p.contraction_pairs,
        "tail_bound": p.tail_bound,
    });
    let mut r = Report::new(example, echo);
    let ev: Vec<[f64; 2]> = eigenvalues(&p.a).iter().map(|z| [z.re, z.im]).collect();
    r.evidence("eigenvalues", &ev);

    let c = match stability_constants(&p.a, p.lambda_fraction) {
        Ok(c) => c,
        Err(Error::SpectralAbscissa(s)) => {
            r.push(
                Check::new("stability", CheckStatus::Fail)
                    .value("abscissa", s)
                    .tolerance("abscissa_upper", 0.0),
            );
            r.skip(&[
                "stability_grid",
                "A1",
                "A2",
                "A3",
                "bounded_solution_sup",
                "history_independence",
            ]);
            r.skip(&DELAY_DEPENDENT);
            return Ok(Outcome {
                report: r,
                tables: vec![],
            });
        }
        Err(e) => return Err(e.into()),
    };
    r.push(
        Check::new("stability", CheckStatus::Pass)
            .value("abscissa", c.abscissa)
            .tolerance("abscissa_upper", 0.0),
    );
    r.evidence("stability_constants", c);
    let excess = stability_grid_excess(&p.a, &c)?;
    r.push(
        Check::new("stability_grid", CheckStatus::from_bool(excess <= STABILITY_GRID_SLACK))
            .value("n", c.n)
            .value("lambda", c.lambda)
            .value("max_excess", excess)
            .tolerance("slack", STABILITY_GRID_SLACK),
    );

    let f = p.nonlinearity.build(2, "system.nonlinearity")?;
    let burn = default_burn_in(c.lambda);
    let (t0, t1) = p.window;
    let from = t0 - burn - p.tau - 1.0;
    let ex = r.timed("setup", || {
        catalog::delay_example(&p.source, p.a.clone(), p.tau, from, t1)
    })?;
    let phi_sys = DelaySystemSpec::new(p.a.clone(), p.tau, f.clone(), ex.phi_system.forcing().clone())?;
    let psi_sys = phi_sys.with_forcing(ex.psi_system.forcing().clone())?;

    let assumptions = check_assumptions_a(&phi_sys, &c);
    r.evidence("A3_margin", assumptions.margin);
    let a3_ok = assumptions.get("A3").is_some_and(|c| c.passed());
    r.push_all(assumptions.checks);

    let phi = r.timed("simulate", || bounded_solution(&phi_sys, p.window, burn, p.step))?;
    let psi = r.timed("simulate", || bounded_solution(&psi_sys, p.window, burn, p.step))?;
    let count = ((t1 - from) / p.step).floor() as usize;
    let m_phi = phi_sys.forcing().sample(from, p.step, count)?.sup_norm();
    let m_psi = psi_sys.forcing().sample(from, p.step, count)?.sup_norm();
    let m_f = f.bound();
    let sup_bound = c.n * (m_f + m_phi.max(m_psi)) / c.lambda;
    let sup = phi.sup_norm().max(psi.sup_norm());
    r.push(
        Check::new("bounded_solution_sup", CheckStatus::from_bool(sup <= sup_bound + 1e-8))
            .value("sup", sup)
            .value("m_phi", m_phi)
            .value("m_psi", m_psi)
            .tolerance("bound", sup_bound)
            .tolerance("slack", 1e-8),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(CHECK_RNG_SEED);
    let (ha, hb) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let history = move |t: f64| DVector::from_vec(vec![ha * (3.0 * t).sin(), hb + 0.3 * t.cos()]);
    let other = r.timed("simulate", || {
        bounded_solution_with_history(&phi_sys, p.window, burn, p.step, &history)
    })?;
    let gap = sup_diff(phi.samples(), other.samples());
    r.push(
        Check::new("history_independence", CheckStatus::from_bool(gap <= 1e-6))
            .value("sup_difference", gap)
            .value("burn_in", burn)
            .tolerance("absolute", 1e-6),
    );
    let diff = phi.zip_map(&psi, |a, b| a - b)?;
    let tables = vec![
        Table::from_grid("phi", &phi),
        Table::from_grid("psi", &psi),
        Table::from_grid("diff", &diff),
    ];

    let proof = match (a3_ok, proof_constants(&phi_sys, &c, m_phi, m_psi)) {
        (true, Ok(k)) => k,
        (_, res) => {
            let mut chk = Check::new("proof_constants", CheckStatus::Fail);
            if let Err(e) = res {
                r.evidence("proof_constants_error", e.to_string());
            }
            chk = chk.value("a3_margin", assumptions.margin);
            r.push(chk);
            r.skip(&DELAY_DEPENDENT[1..]);
            return Ok(Outcome { report: r, tables });
        }
    };
    r.push(
        Check::new(
            "proof_constants",
            CheckStatus::from_bool(proof.k1 > 0.0 && proof.k2 > 0.0 && proof.m0 > 0.0),
        )
        .value("k1", proof.k1)
        .value("k2", proof.k2)
        .value("m0", proof.m0),
    );
    r.evidence("proof_constants", proof);

    let gamma = default_gamma(&proof);
    let theta = catalog::function_theta_grid(&phi)?;
    let lag = lag_steps(p.tau, p.step)?;
    let settle = settling_index(&theta, gamma * p.epsilon);
    let Some(k_alpha) = settle.map(|k| k.max(lag)).filter(|&k| k < theta.len()) else {
        r.push(Check::new("alpha", CheckStatus::Fail).value("gamma_epsilon", gamma * p.epsilon));
        r.skip(&DELAY_DEPENDENT[2..]);
        return Ok(Outcome { report: r, tables });
    };
    let alpha = theta.time(k_alpha);
    r.push(
        Check::new("alpha", CheckStatus::Pass)
            .value("alpha", alpha)
            .value("gamma", gamma)
            .value("epsilon", p.epsilon)
            .tolerance("gamma_upper", 1.0 / (proof.k1 + proof.k2)),
    );

    let env = DelayEnvelope::new(&proof, &c, p.tau, alpha, gamma, p.epsilon)?;
    let ladder = [p.epsilon, p.epsilon * 1e-3, p.epsilon * 1e-6];
    let conv = r.timed("envelope", || convergence_check(&phi, &psi, &env, p.slack, &ladder))?;
    r.push(
        Check::new("envelope", CheckStatus::from_bool(conv.passed()))
            .value("checked", conv.checked as f64)
            .value("max_excess", conv.max_excess)
            .value("violations", conv.violation_count as f64)
            .tolerance("slack", p.slack),
    );
    r.push(
        Check::new(
            "tail_after_settling",
            CheckStatus::from_bool(conv.tail_below(p.epsilon)),
        )
        .value("settling_time", conv.settling_time)
        .value("sup_after_settling", conv.sup_after_settling.unwrap_or(f64::NAN))
        .tolerance("epsilon", p.epsilon),
    );
    let quarter = t0 + 0.75 * (t1 - t0);
    let k_quarter = diff.first_index_at_or_after(quarter);
    let tail_sup = diff.samples()[k_quarter..].iter().map(|v| v.norm()).fold(0.0, f64::max);
    r.push(
        Check::new("tail_final_quarter", CheckStatus::from_bool(tail_sup < p.tail_bound))
            .value("from", diff.time(k_quarter))
            .value("sup", tail_sup)
            .tolerance("bound", p.tail_bound),
    );
    r.evidence("convergence", &conv);

    let op = ContractionOperator::new(&phi_sys, &psi, &theta, alpha)?;
    let q = c.n * f.lipschitz() / c.lambda;
    let perturbed = |rng: &mut ChaCha8Rng| -> Result<GridFunction, CliError> {
        let (amp, freq, phase) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(0.2..5.0),
            rng.random_range(0.0..6.3),
        );
        let (bamp, bfreq) = (rng.random_range(-1.0..1.0), rng.random_range(0.2..5.0));
        Ok(diff.map(|t, v| {
            if t <= alpha {
                v.clone()
            } else {
                let s = t - alpha;
                v + DVector::from_vec(vec![
                    amp * (freq * s + phase).sin(),
                    bamp * (bfreq * s).cos() * (-0.05 * s).exp(),
                ])
            }
        })?)
    };
    let mut worst_ratio = 0.0_f64;
    r.timed("contraction", || -> Result<(), CliError> {
        for _ in 0..p.contraction_pairs {
            let g1 = perturbed(&mut rng)?;
            let g2 = perturbed(&mut rng)?;
            let den = sup_diff(g1.samples(), g2.samples());
            if den == 0.0 {
                continue;
            }
            let num = sup_diff(op.apply(&g1)?.samples(), op.apply(&g2)?.samples());
            worst_ratio = worst_ratio.max(num / den);
        }
        Ok(())
    })?;
    r.push(
        Check::new(
            "contraction_pairs",
            CheckStatus::from_bool(worst_ratio <= q + CONTRACTION_SLACK),
        )
        .value("pairs", p.contraction_pairs as f64)
        .value("max_ratio", worst_ratio)
        .value("n_lf_over_lambda", q)
        .tolerance("ratio_upper", q + CONTRACTION_SLACK),
    );

    let (ratios, increments, limit_gap) = r.timed("picard", || -> Result<_, CliError> {
        let mut g = op.initial_iterate(&diff)?;
        let mut increments = Vec::new();
        for _ in 0..60 {
            let next = op.apply(&g)?;
            let inc = sup_diff(next.samples(), g.samples());
            g = next;
            increments.push(inc);
            if inc < 1e-13 {
                break;
            }
        }
        let ratios: Vec<f64> = increments
            .windows(2)
            .filter(|w| w[0] > 1e-10)
            .map(|w| w[1] / w[0])
            .collect();
        Ok((ratios, increments, sup_diff(g.samples(), diff.samples())))
    })?;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let status = if ratios.is_empty() {
        CheckStatus::NotApplicable
    } else {
        CheckStatus::from_bool(max_ratio <= q + CONTRACTION_SLACK)
    };
    r.push(
        Check::new("picard_ratio", status)
            .value("iterations", increments.len() as f64)
            .value("max_ratio", max_ratio)
            .value("limit_gap", limit_gap)
            .tolerance("ratio_upper", q + CONTRACTION_SLACK),
    );
    r.evidence("picard_increments", &increments);
    let residual = sup_diff(op.apply(&diff)?.samples(), diff.samples());
    r.push(
        Check::new(
            "fixed_point",
            CheckStatus::from_bool(residual <= 1e-6 && limit_gap <= 1e-6),
        )
        .value("residual", residual)
        .value("limit_gap", limit_gap)
        .tolerance("absolute", 1e-6),
    );

    let span = 10.0;
    let hist = |v: DVector<f64>| GridFunction::from_fn(t0 - p.tau, p.step, lag + 1, move |_| v.clone());
    let x0 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
    let y0 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
    let x = integrate_mos(&phi_sys, &hist(x0)?, t0 + span, p.step)?;
    let y = integrate_mos(&phi_sys, &hist(y0)?, t0 + span, p.step)?;
    let pts: Vec<(f64, f64)> = (0..x.len())
        .filter(|&k| x.time(k) >= t0 + span / 2.0)
        .map(|k| (x.time(k), (x.sample(k) - y.sample(k)).norm()))
        .collect();
    let slope = log_slope(&pts).unwrap_or(f64::NAN);
    r.push(
        Check::new("stability_slope", CheckStatus::from_bool(slope <= -0.3))
            .value("slope", slope)
            .value("from", t0 + span / 2.0)
            .value("to", t0 + span)
            .tolerance("slope_upper", -0.3),
    );

    Ok(Outcome { report: r, tables })
}

const DISCRETE_DEPENDENT: [&str; 6] = [
    "alpha",
    "bounded_orbit_sup",
    "sum_representation",
    "gronwall_envelope",
    "settles_within",
    "stability_envelope",
];

pub fn discrete_pipeline(p: &DiscreteParams, example: &str) -> Result<Outcome, CliError> {
    let echo = json!({
        "kind": "discrete",
        "source": source_echo(&p.source),
        "matrix": rows(&p.b),
        "nonlinearity": p.nonlinearity,
        "horizon": p.horizon,
        "epsilon": p.epsilon,
        "gamma_fraction": p.gamma_fraction,
        "slack": p.slack,
        "lead": p.lead,
        "span": p.span,
        "tol": p.tol,
        "settle_within": p.settle_within,
        "sensitivity_horizon": p.sensitivity_horizon,
    });
    let mut r = Report::new(example, echo);
    let g = p.nonlinearity.build(2, "system.nonlinearity")?;
    let norm = r.timed("spectral_norm", || spectral_norm(&p.b))?;
    r.evidence("spectral_norm", norm);
    r.push(Check::new("spectral_norm", CheckStatus::from_bool(norm.is_finite())).value("spectral_norm", norm));

    let tr = r.timed("setup", || catalog::sequence_example(&p.source, 0..p.horizon as i64))?;
    let phi_sys = DiscreteSystemSpec::new(p.b.clone(), g.clone(), tr.phi.clone())?;
    let psi_sys = phi_sys.with_forcing(tr.psi.clone())?;
    let assumptions = check_assumptions_b(&phi_sys);
    r.evidence("B3_margin", assumptions.margin);
    let ok = assumptions.get("B3").is_some_and(|c| c.passed());
    r.push_all(assumptions.checks);

    let mut rng = ChaCha8Rng::seed_from_u64(CHECK_RNG_SEED);
    let sens = r.timed("sensitivity", || {
        sensitivity_demo(
            &LogisticMap { r: p.source.r },
            0,
            &DVector::from_element(1, p.source.seed),
            1e-10,
            0.3,
            p.sensitivity_horizon,
        )
    })?;
    r.push(
        Check::new(
            "logistic_sensitivity",
            CheckStatus::from_bool(sens.divergence_index.is_some()),
        )
        .value("divergence_index", sens.divergence_index.map_or(f64::NAN, |n| n as f64))
        .value("slope", sens.slope.unwrap_or(f64::NAN))
        .tolerance("perturbation", 1e-10)
        .tolerance("threshold", 0.3),
    );
    r.evidence(
        "logistic_sensitivity",
        json!({"divergence_index": sens.divergence_index, "slope": sens.slope, "steps": sens.horizon}),
    );

    if !ok {
        r.skip(&DISCRETE_DEPENDENT);
        r.skip(&["system_no_divergence"]);
        return Ok(Outcome {
            report: r,
            tables: vec![],
        });
    }

    let (m_phi, m_psi) = (tr.phi.sup_norm(), tr.psi.sup_norm());
    let gamma = p.gamma_fraction * gamma_upper_bound(&phi_sys, m_phi, m_psi);
    let Some(k_alpha) = settling_index(&tr.theta, gamma * p.epsilon) else {
        r.push(Check::new("alpha", CheckStatus::Fail).value("gamma_epsilon", gamma * p.epsilon));
        r.skip(&DISCRETE_DEPENDENT[1..]);
        r.skip(&["system_no_divergence"]);
        return Ok(Outcome {
            report: r,
            tables: vec![],
        });
    };
    let alpha = tr.theta.location(k_alpha) as i64;
    r.push(
        Check::new("alpha", CheckStatus::Pass)
            .value("alpha", alpha as f64)
            .value("gamma", gamma)
            .value("epsilon", p.epsilon)
            .tolerance("gamma_upper", gamma_upper_bound(&phi_sys, m_phi, m_psi)),
    );

    let window = (alpha - p.lead)..(alpha - p.lead + p.span);
    // extra room in front for the truncated-sum cross-check
    let lead_in = 200;
    let wide = (window.start - lead_in)..window.end;
    let phi_wide = r
        .timed("simulate", || bounded_orbit(&phi_sys, wide.clone(), p.tol))
        .map_err(|e| too_short(e, p.horizon))?;
    let psi_orb = r
        .timed("simulate", || bounded_orbit(&psi_sys, window.clone(), p.tol))
        .map_err(|e| too_short(e, p.horizon))?;
    let phi_orb = phi_wide.window(window.start, window.end)?;

    let scale = orbit_scale(&phi_sys);
    let sup = phi_orb.sup_norm();
    r.push(
        Check::new("bounded_orbit_sup", CheckStatus::from_bool(sup <= scale + 1e-12))
            .value("sup", sup)
            .tolerance("bound", scale),
    );
    let mut sum_gap = 0.0_f64;
    for i in [window.start, (window.start + window.end) / 2, window.end - 1] {
        let s = bounded_orbit_by_sum(&phi_sys, &phi_wide, i, p.tol)?;
        sum_gap = sum_gap.max((s - phi_wide.get(i).expect("inside window")).norm());
    }
    r.push(
        Check::new("sum_representation", CheckStatus::from_bool(sum_gap <= 1e-10))
            .value("max_difference", sum_gap)
            .tolerance("absolute", 1e-10),
    );

    let env = gronwall_envelope(&phi_sys, m_phi, m_psi, alpha, gamma, p.epsilon, window.clone())?;
    let conv = convergence_check_discrete(&phi_orb, &psi_orb, &env, p.slack, &[p.epsilon])?;
    r.push(
        Check::new("gronwall_envelope", CheckStatus::from_bool(conv.passed()))
            .value("checked", conv.checked as f64)
            .value("max_excess", conv.max_excess)
            .value("violations", conv.violation_count as f64)
            .tolerance("slack", p.slack),
    );
    let below = conv.ladder[0].first_location;
    let offset = below.map_or(f64::NAN, |b| b - alpha as f64);
    r.push(
        Check::new("settles_within", CheckStatus::from_bool(offset <= p.settle_within))
            .value("first_index_below", below.unwrap_or(f64::NAN))
            .value("offset", offset)
            .value("envelope_settling_offset", env.settling_offset())
            .tolerance("epsilon", p.epsilon)
            .tolerance("offset_upper", p.settle_within),
    );
    r.evidence(
        "gronwall",
        json!({
            "alpha": alpha,
            "gamma": gamma,
            "rate": env.rate,
            "limit": env.limit,
            "transient": env.transient,
            "m_phi": m_phi,
            "m_psi": m_psi,
            "settling_offset": env.settling_offset(),
            "max_excess": conv.max_excess,
            "violations": conv.violations,
        }),
    );

    let q = phi_sys.contraction_rate();
    let w0 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
    let w1 = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
    let a = iterate_from(&phi_sys, window.start, &w0, (p.span - 1) as usize)?;
    let b = iterate_from(&phi_sys, window.start, &w1, (p.span - 1) as usize)?;
    let d0 = (&w0 - &w1).norm();
    let mut worst = f64::NEG_INFINITY;
    for (k, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        let bound = q.powi(k as i32) * d0 * (1.0 + 1e-12);
        worst = worst.max((x - y).norm() - bound);
    }
    r.push(
        Check::new("stability_envelope", CheckStatus::from_bool(worst <= 1e-300))
            .value("rate", q)
            .value("initial_separation", d0)
            .value("max_excess", worst)
            .tolerance("relative", 1e-12),
    );
    let sys = sensitivity_demo(&phi_sys, window.start, &w0, 1e-10, 0.3, p.sensitivity_horizon)?;
    r.push(
        Check::new(
            "system_no_divergence",
            CheckStatus::from_bool(sys.divergence_index.is_none()),
        )
        .value("steps", sys.horizon as f64)
        .value("final_separation", sys.separations.last().copied().unwrap_or(f64::NAN))
        .tolerance("threshold", 0.3),
    );

    let diff = phi_orb.zip_map(&psi_orb, |a, b| a - b)?;
    Ok(Outcome {
        report: r,
        tables: vec![
            Table::from_sequence("phi", &phi_orb),
            Table::from_sequence("psi", &psi_orb),
            Table::from_sequence("diff", &diff),
        ],
    })
}

fn too_short(e: Error, horizon: usize) -> CliError {
    match e {
        Error::WindowExhausted(msg) => CliError::Config(format!(
            "numeric.horizon: {horizon} indices do not cover the burn-in and checked window ({msg})"
        )),
        e => e.into(),
    }
}

pub fn detect_pipeline(p: &DetectParams, example: &str) -> Result<Outcome, CliError> {
    let echo = json!({
        "kind": "detect",
        "input": p.input.display().to_string(),
        "horizon": p.horizon,
        "window": p.window,
        "ladder": p.ladder,
        "epsilon0": p.epsilon0,
        "delta": p.delta,
    });
    let mut r = Report::new(example, echo);
    let table = r.timed("read", || read_csv(&p.input, p.horizon))?;
    if table.values.len() < 2 {
        return Err(CliError::Config(format!(
            "{}: need at least two rows",
            p.input.display()
        )));
    }
    match &table.locations {
        Locations::Index(idx) => {
            if idx.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(CliError::Config(format!(
                    "{}: indices must be consecutive",
                    p.input.display()
                )));
            }
            let seq = VectorSequence::new(idx[0], table.values.clone())?;
            let window = p.window.round() as usize;
            if window + 1 >= seq.len() {
                return Err(CliError::Config(format!(
                    "window {window} does not fit in {} rows",
                    seq.len()
                )));
            }
            let ev = r.timed("evidence", || {
                evidence_for_sequence(&seq, window, &p.ladder, p.epsilon0)
            })?;
            let base = seq.base_index();
            r.push(recheck_evidence(
                seq.values(),
                &ev,
                |eta| usize::try_from(eta as i64 - base).ok(),
                0,
            ));
            r.evidence("unpredictability", evidence_summary(&ev));
            r.evidence("decay", decay_test(&seq, &p.ladder)?);
        }
        Locations::Time(ts) => {
            let step = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
            let uniform = step > 0.0
                && ts
                    .iter()
                    .enumerate()
                    .all(|(k, &t)| (t - (ts[0] + k as f64 * step)).abs() <= 1e-9 * step.max(t.abs()));
            if !uniform {
                return Err(CliError::Config(format!(
                    "{}: times must be uniformly spaced",
                    p.input.display()
                )));
            }
            let grid = GridFunction::new(ts[0], step, table.values.clone())?;
            let ev = r
                .timed("evidence", || {
                    evidence_for_function(&grid, p.window, &p.ladder, p.epsilon0, p.delta)
                })
                .map_err(|e| match e {
                    Error::Precondition(m) => CliError::Config(format!("delta: {m}")),
                    e => e.into(),
                })?;
            let half = (p.delta / step).round() as usize;
            r.push(recheck_evidence(grid.samples(), &ev, |eta| grid.index_of(eta), half));
            r.evidence("unpredictability", evidence_summary(&ev));
            r.evidence("decay", decay_test(&grid, &p.ladder)?);
        }
    }
    r.evidence("rows", table.values.len());
    Ok(Outcome {
        report: r,
        tables: vec![],
    })
}
