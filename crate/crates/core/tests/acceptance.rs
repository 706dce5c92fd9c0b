//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use pe_consensus::observables::check_mean_conservation;
use pe_consensus::schedule::make_blackout_with_offsets;
use pe_consensus::{
    make_constant, run_sweep, simulate, validate_hypotheses, verify_pe,
    verify_trajectory, Error, InfluenceKernel, IntegratorSettings, Model, Pairing, PeParameters,
    ScalingMode, ScheduleEnsemble, ScheduleFamily, State, SweepResult, SweepSpec, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }

    fn error(e: Error) -> Self {
        Outcome::new(false, format!("error: {e}"))
    }
}

fn report(id: &str, name: &str, outcome: &Outcome) {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id}: {name} -- {}", outcome.detail);
}

fn linear_model() -> Model {
    Model::new(InfluenceKernel::constant(1.0), ScalingMode::Fixed)
}

fn closed_form() -> Result<Outcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..10).map(|_| rng.random()).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let initial = State::from_scalars(0.0, &xs)?;
    let ensemble = ScheduleEnsemble::shared(10, make_constant(1.0, 11.0)?);
    let settings = IntegratorSettings::new(1e-3, 1, 10.0, 0.0)?;

    let start = Instant::now();
    let traj = simulate(&initial, &ensemble, &linear_model(), &settings)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut worst = 0.0f64;
    for target in [1.0, 5.0, 10.0] {
        let s = nearest_sample(&traj, target);
        for (x, x0) in s.coords().iter().zip(&xs) {
            let exact = mean + (x0 - mean) * (-s.t()).exp();
            worst = worst.max((x - exact).abs() / exact.abs());
        }
    }
    Ok(Outcome::new(
        worst < 1e-6 && elapsed < 1.0,
        format!("max relative error {worst:.2e}, runtime {elapsed:.3} s"),
    ))
}

fn nearest_sample(traj: &Trajectory, t: f64) -> &State {
    traj.samples()
        .iter()
        .min_by(|a, b| (a.t() - t).abs().total_cmp(&(b.t() - t).abs()))
        .unwrap()
}

fn all_converged(spec: &SweepSpec, result: &SweepResult) -> Outcome {
    let mut missing = Vec::new();
    for r in &result.trials {
        match r.time {
            Some(t) if t < spec.max_time_for(r.mu) => {}
            _ => missing.push((r.mu, r.trial)),
        }
    }
    let per_mu: Vec<String> = result
        .rows
        .iter()
        .map(|r| format!("mu={} {}/{}", r.mu, TRIALS - r.n_unconverged, TRIALS))
        .collect();
    Outcome::new(missing.is_empty(), format!("converged: {}", per_mu.join(", ")))
}

fn rate_monotone(result: &SweepResult) -> Outcome {
    let mut rows = result.rows.clone();
    rows.sort_by(|a, b| b.mu.total_cmp(&a.mu));
    let increasing = rows.windows(2).all(|w| w[1].mean_time > w[0].mean_time);
    let means: Vec<String> = rows
        .iter()
        .map(|r| format!("mu={}: {:.3}", r.mu, r.mean_time))
        .collect();
    Outcome::new(increasing, format!("mean times {}", means.join(", ")))
}

fn loglog_linear(constant: &SweepResult, rational: &SweepResult) -> Outcome {
    let r2 = |r: &SweepResult| r.fit.map(|f| f.r_squared).unwrap_or(f64::NAN);
    let (a, b) = (r2(constant), r2(rational));
    Outcome::new(
        a >= 0.98 && b >= 0.98,
        format!("r^2 = {a:.4} (phi = 1), {b:.4} (phi = 1/(1+r^2))"),
    )
}

fn shared_schedule() -> Result<Outcome, Error> {
    let mut spec = SweepSpec::standard(InfluenceKernel::constant(1.0), TRIALS);
    spec.pairing = Pairing::Shared;
    let result = run_sweep(&spec)?;

    let mut worst_mean = 0.0f64;
    for row in &result.rows {
        let predicted: f64 = result
            .trials
            .iter()
            .filter(|r| r.mu == row.mu)
            .map(|r| spec.window / row.mu * (r.initial_diameter / spec.epsilon).ln())
            .sum::<f64>()
            / TRIALS as f64;
        worst_mean = worst_mean.max((row.mean_time - predicted).abs() / predicted);
    }
    let slope = result.fit.map(|f| f.slope).unwrap_or(f64::NAN);
    let worst_path = reparametrization_gap(&spec)?;

    Ok(Outcome::new(
        worst_mean < 0.02 && (slope + 1.0).abs() <= 0.02 && worst_path < 1e-9,
        format!(
            "worst relative error of mean time {worst_mean:.4}, slope {slope:.4}, \
             max gap to time-changed linear run {worst_path:.2e}"
        ),
    ))
}

/// Compares the shared-schedule trajectory at time `t` with the always-on
/// trajectory at `integral_0^t M`.
fn reparametrization_gap(spec: &SweepSpec) -> Result<f64, Error> {
    let mu = 0.3;
    let model = linear_model();
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let initial = pe_consensus::initial_state(spec, trial)?;
        let ensemble = pe_consensus::trial_ensemble(spec, mu, trial)?;
        let schedule = &ensemble.schedules()[0];
        let settings = IntegratorSettings::new(1e-3, 500, 12.0, 0.0)?;
        let traj = simulate(&initial, &ensemble, &model, &settings)?;
        for s in traj.samples().iter().skip(1) {
            let effective = schedule.integrate(0.0, s.t())?;
            let reference = if effective == 0.0 {
                initial.clone()
            } else {
                let always = ScheduleEnsemble::shared(initial.n(), make_constant(1.0, effective)?);
                let settings = IntegratorSettings::new(1e-3, usize::MAX, effective, 0.0)?;
                simulate(&initial, &always, &model, &settings)?.last().clone()
            };
            for (a, b) in s.coords().iter().zip(reference.coords()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

struct RandomConfig {
    initial: State,
    model: Model,
    ensemble: ScheduleEnsemble,
    window: f64,
    settings: IntegratorSettings,
}

fn random_config(rng: &mut ChaCha8Rng) -> Result<RandomConfig, Error> {
    let n = rng.random_range(3..=8);
    let dim = rng.random_range(1..=3);
    let scale = rng.random_range(0.5..3.0);
    let coords = (0..n * dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    let initial = State::new(0.0, dim, coords)?;

    let kernel = match rng.random_range(0..3) {
        0 => InfluenceKernel::constant(rng.random_range(0.5..2.0)),
        1 => InfluenceKernel::rational_decay(
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..3.0),
            [0.5, 1.0, 2.0][rng.random_range(0..3)],
        ),
        _ => {
            let y0 = rng.random_range(0.5..1.5);
            let x1 = rng.random_range(0.3..2.0);
            InfluenceKernel::piecewise_linear([(0.0, y0), (x1, 0.6 * y0), (2.0 * x1, 0.3 * y0)])
        }
    };
    let scaling = if rng.random_bool(0.5) {
        ScalingMode::Fixed
    } else {
        ScalingMode::Rescaled
    };
    let window = [0.5, 1.0][rng.random_range(0..2)];
    let (family, duty) = match rng.random_range(0..4) {
        0 => (ScheduleFamily::Constant { value: None }, rng.random_range(0.1..1.0)),
        1 => (ScheduleFamily::DutyCycle, rng.random_range(0.1..1.0)),
        2 => (ScheduleFamily::RandomBlackout, rng.random_range(0.1..1.0)),
        _ => (
            ScheduleFamily::RandomLevels {
                levels: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            },
            rng.random_range(0.1..0.5),
        ),
    };
    let pairing = [Pairing::Independent, Pairing::Symmetric, Pairing::Shared][rng.random_range(0..3)];
    let params = PeParameters::new(duty * window, window)?;
    let max_time = 4.0 * window;
    let ensemble = ScheduleEnsemble::generate(
        n,
        &family,
        params,
        pairing,
        rng.random(),
        max_time + 2.0 * window,
    )?;
    let settings = IntegratorSettings::new(1e-3 * window, 1, max_time, 0.0)?;
    Ok(RandomConfig {
        initial,
        model: Model::new(kernel, scaling),
        ensemble,
        window,
        settings,
    })
}

fn invariant_suite() -> Result<Outcome, Error> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = Vec::new();
    let mut mean_checked = 0;
    for config in 0..200 {
        let c = random_config(&mut rng)?;
        let bounds = validate_hypotheses(&c.model, &c.initial)?;
        let traj = simulate(&c.initial, &c.ensemble, &c.model, &c.settings)?;
        for r in verify_trajectory(&traj, &bounds, c.window)? {
            if !r.pass {
                violations.push(format!("config {config}: {}", r.check));
            }
        }

        let mirrored = simulate(&c.initial.negated(), &c.ensemble, &c.model, &c.settings)?;
        let mirror_gap = traj
            .samples()
            .iter()
            .zip(mirrored.samples())
            .flat_map(|(a, b)| a.coords().iter().zip(b.coords()).map(|(x, y)| (x + y).abs()))
            .fold(0.0f64, f64::max);
        if traj.len() != mirrored.len() || mirror_gap > 1e-12 {
            violations.push(format!("config {config}: sign_reversal ({mirror_gap:.2e})"));
        }

        let symmetric = c.ensemble.pairing() != Pairing::Independent;
        if symmetric && c.model.scaling == ScalingMode::Fixed {
            mean_checked += 1;
            if !check_mean_conservation(&traj, 1e-8).map(|r| r.pass).unwrap_or(false) {
                violations.push(format!("config {config}: mean_conservation"));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut detail = format!(
        "{} violations over 200 configs ({mean_checked} with mean conservation), runtime {elapsed:.1} s",
        violations.len()
    );
    if let Some(first) = violations.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    Ok(Outcome::new(violations.is_empty() && elapsed < 120.0, detail))
}

fn pe_soundness() -> Result<Outcome, Error> {
    let params = PeParameters::new(0.3, 1.0)?;
    let horizon = 50.0;
    let families = [
        ScheduleFamily::Constant { value: None },
        ScheduleFamily::DutyCycle,
        ScheduleFamily::RandomBlackout,
        ScheduleFamily::RandomLevels {
            levels: vec![0.0, 0.5, 1.0],
        },
    ];
    let mut failures = 0;
    for family in &families {
        let declared = family.declared(params).expect("positive duty");
        for seed in 0..100 {
            let s = family.generate(params, seed, horizon)?;
            if verify_pe(&s, declared, horizon).is_err() {
                failures += 1;
            }
        }
    }

    let tight = PeParameters::new(0.2, 1.0)?;
    let adversarial = make_blackout_with_offsets(tight, &[0.4, 0.0, 0.8, 0.4], 4.0)?;
    let flagged = match verify_pe(&adversarial, tight, 4.0) {
        Err(Error::PeViolated {
            witness, integral, ..
        }) => {
            let direct = adversarial.integrate(witness, witness + 1.0)?;
            (direct - integral).abs() < 1e-12 && integral < tight.mu
        }
        _ => false,
    };
    Ok(Outcome::new(
        failures == 0 && flagged,
        format!(
            "{failures} of 400 generated schedules rejected; adversarial placement {}",
            if flagged { "flagged with a valid witness" } else { "NOT flagged" }
        ),
    ))
}

fn run(outcome: Result<Outcome, Error>) -> Outcome {
    outcome.unwrap_or_else(Outcome::error)
}

fn main() -> ExitCode {
    let mut all = true;
    let mut record = |id: &str, name: &str, o: Outcome| {
        report(id, name, &o);
        all &= o.pass;
    };

    record("1", "integrator vs closed form", run(closed_form()));

    let constant_spec = SweepSpec::standard(InfluenceKernel::constant(1.0), TRIALS);
    let rational_spec = SweepSpec::standard(InfluenceKernel::inverse_square(), TRIALS);
    match (run_sweep(&constant_spec), run_sweep(&rational_spec)) {
        (Ok(constant), Ok(rational)) => {
            record("2", "every trial reaches consensus", all_converged(&constant_spec, &constant));
            record("3", "mean time grows as mu shrinks", rate_monotone(&constant));
            record("4", "log-log linearity", loglog_linear(&constant, &rational));
        }
        (Err(e), _) | (_, Err(e)) => {
            let msg = format!("error: {e}");
            for (id, name) in [
                ("2", "every trial reaches consensus"),
                ("3", "mean time grows as mu shrinks"),
                ("4", "log-log linearity"),
            ] {
                record(id, name, Outcome::new(false, msg.clone()));
            }
        }
    }

    record("5", "shared schedule time change", run(shared_schedule()));
    record("6", "invariant suite", run(invariant_suite()));
    record("7", "PE verification soundness", run(pe_soundness()));
    println!("[NOTE] criterion 8: no numeric reference values to compare against; covered by 3-5");

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
