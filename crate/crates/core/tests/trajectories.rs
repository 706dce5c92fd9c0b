use pe_consensus::observables::{check_monotone, Monotone};
use pe_consensus::{
    check_barrier, consensus_time, diameter, gamma_min_1d, initial_state, make_constant, project,
    run_trial, simulate, trial_ensemble, validate_hypotheses, BarrierSpec, InfluenceKernel,
    IntegratorSettings, Model, ScalingMode, ScheduleEnsemble, State, SweepSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn standard(mu: f64) -> SweepSpec {
    let mut spec = SweepSpec::standard(InfluenceKernel::constant(1.0), 1);
    spec.mu_values = vec![mu];
    spec
}

#[test]
fn all_to_all_consensus_time_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs: Vec<f64> = (0..10).map(|_| rng.random()).collect();
    let initial = State::from_scalars(0.0, &xs).unwrap();
    let model = Model::new(InfluenceKernel::constant(1.0), ScalingMode::Fixed);
    let ensemble = ScheduleEnsemble::shared(10, make_constant(1.0, 20.0).unwrap());
    let settings = IntegratorSettings::new(1e-3, 1, 20.0, 0.0).unwrap();
    let traj = simulate(&initial, &ensemble, &model, &settings).unwrap();
    let expected = (diameter(&initial) / 1e-2).ln();
    let t = consensus_time(&traj, 1e-2).unwrap();
    assert!((t - expected).abs() / expected < 1e-2, "{t} vs {expected}");

    let two = State::from_scalars(0.0, &[0.0, 1.0]).unwrap();
    let ensemble = ScheduleEnsemble::shared(2, make_constant(1.0, 20.0).unwrap());
    let traj = simulate(&two, &ensemble, &model, &settings).unwrap();
    let t = consensus_time(&traj, 1e-2).unwrap();
    assert!((t - 100f64.ln()).abs() < 1e-3);
}

#[test]
fn standard_configuration_converges_before_cutoff() {
    let mut spec = standard(0.3);
    spec.max_time = pe_consensus::MaxTime::Absolute(200.0);
    for trial in 0..5 {
        let t = run_trial(&spec, 0.3, trial).unwrap();
        assert!(matches!(t, Some(t) if t < 200.0));
    }
}

#[test]
fn halving_the_step_barely_moves_consensus_time() {
    let spec = standard(0.3);
    let mut fine = spec.clone();
    fine.dt = spec.dt / 2.0;
    for trial in 0..3 {
        let a = run_trial(&spec, 0.3, trial).unwrap().unwrap();
        let b = run_trial(&fine, 0.3, trial).unwrap().unwrap();
        assert!((a - b).abs() / b < 1e-3, "trial {trial}: {a} vs {b}");
    }
}

#[test]
fn reflected_start_gives_reflected_trajectory() {
    let mut spec = standard(0.3);
    spec.kernel = InfluenceKernel::inverse_square();
    spec.scaling = ScalingMode::Rescaled;
    let initial = initial_state(&spec, 4).unwrap();
    let ensemble = trial_ensemble(&spec, 0.3, 4).unwrap();
    let settings = IntegratorSettings::new(1e-3, 10, 10.0, 0.0).unwrap();
    let a = simulate(&initial, &ensemble, &spec.model(), &settings).unwrap();
    let b = simulate(&initial.negated(), &ensemble, &spec.model(), &settings).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.samples().iter().zip(b.samples()) {
        assert_eq!(x.t(), y.t());
        for (p, q) in x.coords().iter().zip(y.coords()) {
            assert!((p + q).abs() <= 1e-12);
        }
    }
}

#[test]
fn barrier_holds_across_random_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let mut spec = standard([1.0, 0.6, 0.3, 0.1][trial % 4]);
        spec.kernel = InfluenceKernel::rational_decay(1.0, rng.random_range(0.5..4.0), 1.0);
        spec.scaling = if trial % 2 == 0 { ScalingMode::Fixed } else { ScalingMode::Rescaled };
        spec.master_seed = rng.random();
        let mu = spec.mu_values[0];
        let initial = initial_state(&spec, 0).unwrap();
        let bounds = validate_hypotheses(&spec.model(), &initial).unwrap();
        let ensemble = trial_ensemble(&spec, mu, 0).unwrap();
        let settings = IntegratorSettings::new(1e-3, 1, 3.0, 0.0).unwrap();
        let traj = simulate(&initial, &ensemble, &spec.model(), &settings).unwrap();
        for k in 0..2 {
            let at = traj.samples().iter().find(|s| s.t() >= k as f64).unwrap();
            let alpha = gamma_min_1d(at).unwrap();
            for (agent, &z) in at.coords().iter().enumerate() {
                let b = BarrierSpec::new(alpha, z, at.t(), 1.0, bounds.k_max).unwrap();
                assert!(check_barrier(&traj, &b, agent).unwrap().pass);
            }
        }
    }
}

#[test]
fn projections_respect_cauchy_schwarz_and_stay_monotone() {
    let mut spec = standard(0.6);
    spec.dim = 3;
    spec.kernel = InfluenceKernel::inverse_square();
    let initial = initial_state(&spec, 2).unwrap();
    let ensemble = trial_ensemble(&spec, 0.6, 2).unwrap();
    let settings = IntegratorSettings::new(1e-3, 20, 5.0, 0.0).unwrap();
    let traj = simulate(&initial, &ensemble, &spec.model(), &settings).unwrap();

    let v = [0.3, -1.2, 0.5];
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let proj = project(&traj, &[0.5, 0.5, 0.5], &v).unwrap();
    for (p, s) in proj.samples().iter().zip(traj.samples()) {
        assert_eq!(p.t(), s.t());
        assert!(diameter(p) <= norm * diameter(s) * (1.0 + 1e-12));
    }
    assert!(check_monotone(&proj, Monotone::GammaMax).unwrap().pass);
}
