//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unpredictable_cli::config::{DelayParams, DiscreteParams};
use unpredictable_cli::output::{Locations, Outcome, Table};
use unpredictable_cli::pipelines::{delay_pipeline, discrete_pipeline};
use unpredictable_core::catalog::{self, SourceParams, DELAY_TAU};
use unpredictable_core::chaos_source::CONVOLUTION_WARMUP;
use unpredictable_core::constructs::{affine_transform, settling_index, shift, witness_at};
use unpredictable_core::delay_system::{
    a3_margin, bounded_solution, default_burn_in, eigenvalues, integrate_mos, lag_steps, stability_constants,
    ContractionOperator, StabilityMethod,
};
use unpredictable_core::detectors::{
    evidence_for_function, evidence_for_sequence, log_slope, sensitivity_demo, separation_at, LogisticMap,
    DEFAULT_LADDER,
};
use unpredictable_core::discrete_system::{iterate_from, spectral_norm};
use unpredictable_core::{DMatrix, DVector, DiscreteSystemSpec, GridFunction, UnpredictabilityEvidence};

type Outcome1 = Result<String, String>;
type Criterion<'a> = (u32, &'a str, Duration, Box<dyn FnMut() -> Outcome1 + 'a>);

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn check_value(report: &Outcome, check: &str, key: &str) -> Result<f64, String> {
    report
        .report
        .check(check)
        .and_then(|c| c.values.get(key).copied())
        .ok_or_else(|| format!("report has no {check}.{key}"))
}

fn table<'a>(o: &'a Outcome, name: &str) -> Result<&'a Table, String> {
    o.tables
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| format!("no {name} table"))
}

fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome1 {
    let b = catalog::discrete_matrix();
    let norm = spectral_norm(&b).map_err(|e| e.to_string())?;
    let expect = 5f64.sqrt() / 4.0;
    ensure(
        (norm - expect).abs() <= 1e-9,
        format!("spectral norm {norm} vs {expect}"),
    )?;
    let svd_norm = b.clone().singular_values().max();
    ensure((svd_norm - expect).abs() <= 1e-12, format!("svd oracle {svd_norm}"))?;
    let spec = DiscreteSystemSpec::new(
        b,
        catalog::discrete_nonlinearity(),
        catalog::sequence_theta_seq(0..10).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let margin = spec.margin();
    let expect_margin = 1.0 - 5f64.sqrt() / 4.0 - 0.2;
    ensure(
        (margin - expect_margin).abs() <= 1e-9,
        format!("B3 margin {margin} vs {expect_margin}"),
    )?;
    Ok(format!("norm {norm:.12}, margin {margin:.12}"))
}

fn criterion_2() -> Outcome1 {
    let a = catalog::delay_matrix();
    let ev = eigenvalues(&a);
    let im = 6f64.sqrt();
    ensure(ev.len() == 2, "two eigenvalues".into())?;
    for z in &ev {
        ensure(
            (z.re + 2.0).abs() <= 1e-9 && (z.im.abs() - im).abs() <= 1e-9,
            format!("eigenvalue {z} vs -2 ± i√6"),
        )?;
    }
    ensure((ev[0].im + ev[1].im).abs() <= 1e-9, "conjugate pair".into())?;
    let c = stability_constants(&a, 0.9).map_err(|e| e.to_string())?;
    let n_expect = (4.0 + 10f64.sqrt()) / 6f64.sqrt();
    ensure(
        c.method == StabilityMethod::Similarity,
        format!("method {:?}", c.method),
    )?;
    ensure((c.n - n_expect).abs() <= 1e-9, format!("N {} vs {n_expect}", c.n))?;
    ensure((c.lambda - 2.0).abs() <= 1e-12, format!("lambda {}", c.lambda))?;
    let spec = catalog::delay_example(&SourceParams::default(), a, DELAY_TAU, -1.0, 1.0)
        .map_err(|e| e.to_string())?
        .phi_system;
    let margin = a3_margin(&spec, &c);
    let by_hand = 2.0 - 2.0 * n_expect * (1.0 / 6.0) * (0.2f64).exp();
    ensure(
        (margin - by_hand).abs() <= 1e-12,
        format!("margin {margin} vs formula {by_hand}"),
    )?;
    ensure(
        (0.8090..=0.8100).contains(&margin),
        format!("A3 margin {margin} outside [0.8090, 0.8100]"),
    )?;
    Ok(format!("N {:.12}, A3 margin {margin:.6}", c.n))
}

// Panel endpoints and midpoint with their sampled values.
type Panel = ((f64, f64), (f64, f64, f64));

fn simpson(f: &dyn Fn(f64) -> f64, ((a, b), (fa, fm, fb)): Panel, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, ((a, m), (fa, flm, fm)), left, tol, depth - 1)
        + simpson(f, ((m, b), (fm, frm, fb)), right, tol, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, ((a, b), (fa, fm, fb)), whole, 1e-14, 24)
}

/// `∫_{t-30}^t e^{-2(t-s)} κ_{⌊s⌋} ds`, one unit cell at a time.
fn quadrature_h(kappa: &dyn Fn(i64) -> f64, t: f64) -> f64 {
    let lo = t - 30.0;
    let mut total = 0.0;
    let mut cell = lo.floor() as i64;
    while (cell as f64) < t {
        let a = (cell as f64).max(lo);
        let b = ((cell + 1) as f64).min(t);
        let k = kappa(cell);
        total += integrate(&|s: f64| (-2.0 * (t - s)).exp() * k, a, b);
        cell += 1;
    }
    total
}

fn criterion_3() -> Outcome1 {
    let params = SourceParams::default();
    let (from, to) = (0.0, 1e4);
    let conv = params.convolution(from, to).map_err(|e| e.to_string())?;
    let grid = conv.to_grid(1.0 / 16.0).map_err(|e| e.to_string())?;
    let base = from.floor() as i64 - CONVOLUTION_WARMUP as i64 - 1;
    let orbit = params
        .orbit(base, (to - base as f64) as usize + 2)
        .map_err(|e| e.to_string())?;
    let kappa = |i: i64| orbit.get(i).expect("orbit covers quadrature range");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let a = rng.random_range(40.0..to - 10.0);
        let len = rng.random_range(0.5..8.0);
        for j in 0..=16 {
            let t = a + len * j as f64 / 16.0;
            let closed = conv.value(t).ok_or("closed form outside domain")?;
            worst = worst.max((closed - quadrature_h(&kappa, t)).abs());
        }
        let k0 = grid.first_index_at_or_after(a);
        for k in k0..k0 + 8 {
            let t = grid.time(k);
            worst = worst.max((grid.sample(k)[0] - quadrature_h(&kappa, t)).abs());
        }
    }
    ensure(worst <= 1e-10, format!("closed form vs quadrature {worst:e}"))?;
    let sup = grid.component(0).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    ensure(sup <= 0.5 + 1e-12, format!("sup |h| {sup} over [0, 1e4]"))?;
    Ok(format!("max quadrature gap {worst:.2e}, sup |h| {sup:.6}"))
}

fn criterion_4() -> Outcome1 {
    let p = SourceParams::default();
    let tr = catalog::function_example(&p, -1.0, 1.0, 1.0 / 16.0).map_err(|e| e.to_string())?;
    let w = witness_at(&tr, 0.0, 5f64.sqrt() / 2.0).ok_or("no function witness at t = 0")?;
    let theta0 = (1.5f64.powi(2) + 25.0).sqrt();
    ensure(
        (w.theta_norm - theta0).abs() <= 1e-12,
        format!("theta(0) norm {}", w.theta_norm),
    )?;
    ensure(
        (0.74..=0.76).contains(&w.margin),
        format!("function margin {}", w.margin),
    )?;
    let tr = catalog::sequence_example(&p, -5..5).map_err(|e| e.to_string())?;
    let v = witness_at(&tr, 0.0, 17f64.sqrt() / 4.0).ok_or("no sequence witness at i = 0")?;
    ensure(
        (v.margin - (20f64.sqrt() - 17f64.sqrt())).abs() <= 1e-12,
        format!("sequence margin {}", v.margin),
    )?;
    ensure(
        (0.34..=0.36).contains(&v.margin),
        format!("sequence margin {}", v.margin),
    )?;
    Ok(format!(
        "function margin {:.6}, sequence margin {:.6}",
        w.margin, v.margin
    ))
}

fn criterion_5() -> Outcome1 {
    let p = DiscreteParams::default();
    let o = discrete_pipeline(&p, "6.4").map_err(|e| e.to_string())?;
    let ev = &o.report.evidence["gronwall"];
    let get = |k: &str| ev[k].as_f64().ok_or(format!("gronwall.{k} missing"));
    let (alpha, gamma, m_phi, m_psi) = (get("alpha")?, get("gamma")?, get("m_phi")?, get("m_psi")?);
    // envelope rebuilt from the example's constants
    let nb = 5f64.sqrt() / 4.0;
    let (m_g, l_g) = (1.0 / 20f64.sqrt(), 0.2);
    let q = nb + l_g;
    let cap = 1.0 / (1.0 / (1.0 - nb - l_g) + (2.0 * m_g + m_phi + m_psi) / (1.0 - nb));
    ensure(gamma > 0.0 && gamma < cap, format!("gamma {gamma} not below {cap}"))?;
    let env = |i: f64| {
        let k = q.powf(i - alpha);
        gamma * p.epsilon / (1.0 - q) * (1.0 - k) + (2.0 * m_g + m_phi + m_psi) / (1.0 - nb) * k
    };
    let diff = table(&o, "diff")?;
    let Locations::Index(idx) = &diff.locations else {
        return Err("diff is not a sequence".into());
    };
    ensure(idx.len() == 400, format!("window has {} indices", idx.len()))?;
    let mut worst = f64::NEG_INFINITY;
    let mut below_from = None;
    for (k, &i) in idx.iter().enumerate() {
        let d = diff.values[k].norm();
        if i as f64 > alpha {
            worst = worst.max(d - env(i as f64));
        }
        if d >= p.epsilon {
            below_from = None;
        } else if below_from.is_none() {
            below_from = Some(i);
        }
    }
    ensure(worst <= 1e-9, format!("difference exceeds envelope by {worst:e}"))?;
    let below = below_from.ok_or("never below 1e-6")? as f64;
    ensure(
        below - alpha <= 60.0,
        format!("below 1e-6 only from {below}, alpha {alpha}"),
    )?;
    for name in ["gronwall_envelope", "settles_within"] {
        ensure(
            o.report.check(name).is_some_and(|c| c.passed()),
            format!("{name} failed in report"),
        )?;
    }
    Ok(format!(
        "alpha {alpha}, max excess {worst:.2e}, below 1e-6 from index {below} (alpha {:+})",
        below - alpha
    ))
}

fn criterion_6(o: &Outcome) -> Outcome1 {
    let m_phi = check_value(o, "bounded_solution_sup", "m_phi")?;
    let m_psi = check_value(o, "bounded_solution_sup", "m_psi")?;
    let alpha = check_value(o, "alpha", "alpha")?;
    let gamma = check_value(o, "alpha", "gamma")?;
    let eps = check_value(o, "alpha", "epsilon")?;
    let (n, lambda, tau) = ((4.0 + 10f64.sqrt()) / 6f64.sqrt(), 2.0, 0.2);
    let (m_f, l_f) = (PI * 2f64.sqrt() / 12.0, 1.0 / 6.0);
    let k1 = n * n * (2.0 * m_f + m_phi + m_psi) / (lambda - 2.0 * n * l_f * (lambda * tau / 2.0f64).exp());
    let k2 = n / (lambda - n * l_f);
    ensure(
        gamma < 1.0 / (k1 + k2),
        format!("gamma {gamma} not below {}", 1.0 / (k1 + k2)),
    )?;
    let diff = table(o, "diff")?;
    let Locations::Time(ts) = &diff.locations else {
        return Err("diff is not a function".into());
    };
    ensure(
        (ts[0] - 0.0).abs() < 1e-12 && (ts[ts.len() - 1] - 200.0).abs() < 1e-9,
        "window [0, 200]".into(),
    )?;
    ensure(((ts[1] - ts[0]) - tau / 32.0).abs() < 1e-15, "step tau/32".into())?;
    let mut worst = f64::NEG_INFINITY;
    let mut tail = 0.0_f64;
    for (k, &t) in ts.iter().enumerate() {
        let d = diff.values[k].norm();
        if t >= alpha - tau - 1e-12 {
            worst = worst.max(d - (k1 * (-lambda * (t - alpha) / 2.0).exp() + k2 * gamma * eps));
        }
        if t >= 150.0 - 1e-12 {
            tail = tail.max(d);
        }
    }
    ensure(worst <= 1e-6, format!("envelope exceeded by {worst:e}"))?;
    ensure(tail < 1e-3, format!("final-quarter sup {tail:e}"))?;
    Ok(format!(
        "K1 {k1:.3}, K2 {k2:.4}, alpha {alpha}, max excess {worst:.2e}, tail sup {tail:.1e}"
    ))
}

/// Rebuilds the 6.3 solutions through the library and checks the
/// contraction and the Picard iteration with its own perturbations.
fn criterion_7() -> Outcome1 {
    let a = catalog::delay_matrix();
    let c = stability_constants(&a, 0.9).map_err(|e| e.to_string())?;
    let step = DELAY_TAU / 32.0;
    let burn = default_burn_in(c.lambda);
    let ex = catalog::delay_example(&SourceParams::default(), a, DELAY_TAU, -burn - 2.0, 200.0)
        .map_err(|e| e.to_string())?;
    let phi = bounded_solution(&ex.phi_system, (0.0, 200.0), burn, step).map_err(|e| e.to_string())?;
    let psi = bounded_solution(&ex.psi_system, (0.0, 200.0), burn, step).map_err(|e| e.to_string())?;
    let theta = catalog::function_theta_grid(&phi).map_err(|e| e.to_string())?;
    let alpha = theta.time(settling_index(&theta, 1e-5).ok_or("theta never settles")?);
    let diff = phi.zip_map(&psi, |x, y| x - y).map_err(|e| e.to_string())?;
    let op = ContractionOperator::new(&ex.phi_system, &psi, &theta, alpha).map_err(|e| e.to_string())?;
    let bound = c.n * (1.0 / 6.0) / c.lambda + 0.05;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random_gamma = |rng: &mut ChaCha8Rng| {
        // piecewise-constant jumps plus a slow drift, zero up to alpha
        let levels: Vec<[f64; 2]> = (0..64)
            .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let drift = rng.random_range(-0.02..0.02);
        diff.map(|t, v| {
            if t <= alpha {
                v.clone()
            } else {
                let l = levels[((t - alpha) / 3.0) as usize % 64];
                v + DVector::from_vec(vec![l[0] + drift * t, l[1]])
            }
        })
        .expect("same grid")
    };
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let (g1, g2) = (random_gamma(&mut rng), random_gamma(&mut rng));
        let t1 = op.apply(&g1).map_err(|e| e.to_string())?;
        let t2 = op.apply(&g2).map_err(|e| e.to_string())?;
        worst = worst.max(sup_diff(&t1, &t2) / sup_diff(&g1, &g2));
    }
    ensure(worst <= bound, format!("contraction ratio {worst} above {bound}"))?;

    let mut g = op.initial_iterate(&diff).map_err(|e| e.to_string())?;
    let mut incs = Vec::new();
    for _ in 0..40 {
        let next = op.apply(&g).map_err(|e| e.to_string())?;
        let inc = sup_diff(&next, &g);
        g = next;
        incs.push(inc);
        if inc < 1e-13 {
            break;
        }
    }
    let ratios: Vec<f64> = incs.windows(2).filter(|w| w[0] > 1e-10).map(|w| w[1] / w[0]).collect();
    ensure(!ratios.is_empty(), "Picard iteration did not move".into())?;
    let rate = ratios.iter().copied().fold(0.0, f64::max);
    ensure(rate <= bound, format!("Picard ratio {rate} above {bound}"))?;
    let gap = sup_diff(&g, &diff);
    ensure(gap <= 1e-6, format!("Picard limit differs from Phi - Psi by {gap:e}"))?;
    Ok(format!(
        "pair ratio {worst:.4}, Picard ratio {rate:.4}, bound {bound:.4}, limit gap {gap:.1e}"
    ))
}

fn criterion_8() -> Outcome1 {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ex = catalog::discrete_example(&SourceParams::default(), catalog::discrete_matrix(), 0..1000)
        .map_err(|e| e.to_string())?;
    let sys = &ex.phi_system;
    let q = 5f64.sqrt() / 4.0 + 0.2;
    let w0 = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
    let w1 = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
    let a = iterate_from(sys, 100, &w0, 400).map_err(|e| e.to_string())?;
    let b = iterate_from(sys, 100, &w1, 400).map_err(|e| e.to_string())?;
    let d0 = (&w0 - &w1).norm();
    for (k, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        let d = (x - y).norm();
        ensure(
            d <= q.powi(k as i32) * d0 * (1.0 + 1e-12),
            format!("discrete separation {d:e} at step {k}"),
        )?;
    }
    let last = (a.values().last().unwrap() - b.values().last().unwrap()).norm();

    let ex = catalog::delay_example(&SourceParams::default(), catalog::delay_matrix(), DELAY_TAU, -5.0, 20.0)
        .map_err(|e| e.to_string())?;
    let step = DELAY_TAU / 32.0;
    let lag = lag_steps(DELAY_TAU, step).map_err(|e| e.to_string())?;
    let mut hist = || {
        let (p, q, w) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(1.0..9.0),
        );
        GridFunction::from_fn(-DELAY_TAU, step, lag + 1, move |t| {
            DVector::from_vec(vec![p * (w * t).cos(), q + t])
        })
        .expect("grid")
    };
    let (h1, h2) = (hist(), hist());
    let x = integrate_mos(&ex.phi_system, &h1, 10.0, step).map_err(|e| e.to_string())?;
    let y = integrate_mos(&ex.phi_system, &h2, 10.0, step).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = (0..x.len())
        .filter(|&k| x.time(k) >= 5.0)
        .map(|k| (x.time(k), (x.sample(k) - y.sample(k)).norm()))
        .collect();
    let slope = log_slope(&pts).ok_or("no slope")?;
    ensure(slope <= -0.3, format!("delay log-slope {slope}"))?;
    Ok(format!("discrete final separation {last:.1e}, delay slope {slope:.3}"))
}

/// Independent re-verification of every reported near-return and
/// separation. `half` is the separation half-width in samples.
fn reverify(
    values: &[DVector<f64>],
    ev: &UnpredictabilityEvidence,
    to_index: impl Fn(f64) -> usize,
    half: usize,
) -> Result<usize, String> {
    let mut last = 0;
    for r in &ev.returns {
        ensure(r.zeta > last, format!("zeta {} not increasing", r.zeta))?;
        last = r.zeta;
        for k in 0..=r.window {
            let d = (&values[k + r.zeta] - &values[k]).norm();
            ensure(
                d < r.rung,
                format!("return zeta {} rung {} fails at {k}: {d}", r.zeta, r.rung),
            )?;
        }
    }
    for s in &ev.separations {
        ensure(
            s.separation >= ev.epsilon0_estimate,
            format!("separation {} below epsilon0", s.separation),
        )?;
        let k0 = to_index(s.eta);
        let lo = k0
            .checked_sub(half)
            .ok_or(format!("separation interval at {} leaves the window", s.eta))?;
        for k in lo..=k0 + half {
            let d = (&values[k + s.zeta] - &values[k]).norm();
            ensure(
                d >= ev.epsilon0_estimate,
                format!("separation zeta {} fails at sample {k}: {d}", s.zeta),
            )?;
        }
    }
    Ok(ev.returns.len() + ev.separations.len())
}

fn criterion_9() -> Outcome1 {
    let p = SourceParams::default();
    let psi = catalog::sequence_example(&p, 0..1_000_000)
        .map_err(|e| e.to_string())?
        .psi;
    let ev = evidence_for_sequence(&psi, 20, &DEFAULT_LADDER, 0.3).map_err(|e| e.to_string())?;
    ensure(
        !ev.returns.is_empty() && !ev.separations.is_empty(),
        "no sequence evidence".into(),
    )?;
    let n_seq = reverify(psi.values(), &ev, |eta| eta as usize, 0)?;

    let step = 1.0 / 16.0;
    let fpsi = catalog::function_example(&p, 0.0, 1e4, step)
        .map_err(|e| e.to_string())?
        .psi;
    let fev = evidence_for_function(&fpsi, 1.0, &DEFAULT_LADDER, 0.3, 0.25).map_err(|e| e.to_string())?;
    ensure(!fev.separations.is_empty(), "no function separations".into())?;
    let n_fun = reverify(fpsi.samples(), &fev, |eta| (eta / step).round() as usize, 4)?;

    let s = sensitivity_demo(
        &LogisticMap { r: 3.91 },
        0,
        &DVector::from_element(1, 0.41),
        1e-10,
        0.3,
        10_000,
    )
    .map_err(|e| e.to_string())?;
    let n = s.divergence_index.ok_or("logistic perturbation never reached 0.3")?;
    Ok(format!(
        "{n_seq} sequence and {n_fun} function records re-verified; divergence at step {n}"
    ))
}

fn criterion_10() -> Outcome1 {
    let psi = catalog::sequence_example(&SourceParams::default(), 0..300_000)
        .map_err(|e| e.to_string())?
        .psi;
    let ev = evidence_for_sequence(&psi, 20, &DEFAULT_LADDER[..3], 0.3).map_err(|e| e.to_string())?;
    ensure(!ev.separations.is_empty(), "no separations to transform".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let omega = loop {
        let m: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        let sv = m.singular_values();
        if sv.min() > 0.3 && sv.max() / sv.min() < 5.0 {
            break m;
        }
    };
    let c = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
    let norm = omega.clone().singular_values().max();
    let inv_norm = omega.clone().try_inverse().ok_or("singular")?.singular_values().max();
    let moved = affine_transform(&psi, &omega, &c).map_err(|e| e.to_string())?;
    let m = 13;
    let shifted = shift(&psi, m).map_err(|e| e.to_string())?;
    let mut pairs: Vec<(usize, i64, f64)> = ev
        .separations
        .iter()
        .map(|s| (s.zeta, s.eta as i64, s.separation))
        .collect();
    for s in &ev.separations {
        for _ in 0..50 {
            let eta = rng.random_range(m..100_000);
            pairs.push((s.zeta, eta, separation_at(&psi, s.zeta, eta).unwrap()));
        }
    }
    for &(zeta, eta, sep) in &pairs {
        let new = separation_at(&moved, zeta, eta).ok_or("pair outside transformed window")?;
        ensure(
            new >= sep / inv_norm - 1e-9 && new <= sep * norm + 1e-9,
            format!(
                "transformed separation {new} outside [{}, {}]",
                sep / inv_norm,
                sep * norm
            ),
        )?;
        let s = separation_at(&shifted, zeta, eta - m).ok_or("pair outside shifted window")?;
        ensure((s - sep).abs() <= 1e-12, format!("shifted separation {s} vs {sep}"))?;
    }
    Ok(format!(
        "{} (zeta, eta) pairs, |Omega| {norm:.3}, |Omega^-1| {inv_norm:.3}",
        pairs.len()
    ))
}

fn run_binary(dir: &Path, id: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_unpredictable"))
        .arg("--out-dir")
        .arg(dir)
        .args(["reproduce", id])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        status.status.success(),
        format!("reproduce {id} exited with {:?}", status.status.code()),
    )
}

fn criterion_11() -> Outcome1 {
    let mut files = 0;
    for id in ["6.1", "6.2", "6.3", "6.4"] {
        let (a, b) = (
            tempfile::tempdir().map_err(|e| e.to_string())?,
            tempfile::tempdir().map_err(|e| e.to_string())?,
        );
        run_binary(a.path(), id)?;
        run_binary(b.path(), id)?;
        let mut names: Vec<_> = fs::read_dir(a.path())
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        let mut other: Vec<_> = fs::read_dir(b.path())
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .collect();
        other.sort();
        ensure(
            names == other && !names.is_empty(),
            format!("{id}: different file sets"),
        )?;
        for n in &names {
            let x = fs::read(a.path().join(n)).map_err(|e| e.to_string())?;
            let y = fs::read(b.path().join(n)).map_err(|e| e.to_string())?;
            ensure(x == y, format!("{id}: {} differs between runs", n.to_string_lossy()))?;
            files += 1;
        }
    }
    Ok(format!("{files} files byte-identical across two runs"))
}

fn main() {
    let mut delay: Option<Result<Outcome, String>> = None;
    let mut delay_outcome = || {
        delay
            .get_or_insert_with(|| delay_pipeline(&DelayParams::default(), "6.3").map_err(|e| e.to_string()))
            .clone()
    };
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "spectral norm and B3 margin",
            Duration::from_secs(1),
            Box::new(criterion_1),
        ),
        (
            2,
            "delay stability constants and A3 margin",
            Duration::from_secs(1),
            Box::new(criterion_2),
        ),
        (
            3,
            "h closed form vs quadrature, sup bound",
            Duration::from_secs(10),
            Box::new(criterion_3),
        ),
        (
            4,
            "non-unpredictability witnesses",
            Duration::from_secs(1),
            Box::new(criterion_4),
        ),
        (
            5,
            "discrete convergence under the Gronwall envelope",
            Duration::from_secs(5),
            Box::new(criterion_5),
        ),
        (
            6,
            "delay convergence under the exponential envelope",
            Duration::from_secs(60),
            Box::new(move || criterion_6(&delay_outcome()?)),
        ),
        (
            7,
            "contraction and Picard iteration",
            Duration::from_secs(60),
            Box::new(criterion_7),
        ),
        (
            8,
            "exponential stability of both systems",
            Duration::from_secs(30),
            Box::new(criterion_8),
        ),
        (
            9,
            "detector consistency and logistic sensitivity",
            Duration::from_secs(30),
            Box::new(criterion_9),
        ),
        (
            10,
            "transform lemmas at evidence level",
            Duration::from_secs(10),
            Box::new(criterion_10),
        ),
        (
            11,
            "deterministic reproduce outputs",
            Duration::from_secs(300),
            Box::new(criterion_11),
        ),
    ];
    let mut failed = 0;
    for (id, name, limit, mut f) in criteria {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = result.and_then(|msg| {
            if took <= limit {
                Ok(msg)
            } else {
                Err(format!(
                    "{msg}; runtime {:.2} s over {:.0} s",
                    took.as_secs_f64(),
                    limit.as_secs_f64()
                ))
            }
        });
        match result {
            Ok(msg) => println!("PASS criterion {id:>2} {name} ({:.3} s): {msg}", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name} ({:.3} s): {msg}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
