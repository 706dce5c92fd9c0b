//! Monte Carlo sweeps of consensus time against the PE level `mu`.
//!
//! Trial `i` draws its initial configuration from a stream that depends on
//! `(master_seed, i)` only, so every `mu` sees the same configurations;
//! schedules are redrawn per `(mu, i)`. Trials are independent and may run in
//! parallel without affecting the result.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{validate_hypotheses, Model, ScalingMode, State};
use crate::error::{Error, Result};
use crate::integrator::{simulate, IntegratorSettings};
use crate::kernel::InfluenceKernel;
use crate::observables::{consensus_time, diameter};
use crate::par::{map_indexed, Execution};
use crate::schedule::{derive_seed, Pairing, PeParameters, ScheduleEnsemble, ScheduleFamily};

/// Integration cutoff per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxTime {
    /// The same cutoff for every `mu`.
    Absolute(f64),
    /// `c * T / mu`: the cutoff grows as service gets sparser.
    PerInverseDuty(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mu_values: Vec<f64>,
    pub n_trials: usize,
    pub agents: usize,
    pub dim: usize,
    /// PE window `T`.
    pub window: f64,
    /// Consensus threshold on the diameter.
    pub epsilon: f64,
    pub kernel: InfluenceKernel,
    pub scaling: ScalingMode,
    pub family: ScheduleFamily,
    pub pairing: Pairing,
    pub master_seed: u64,
    pub max_time: MaxTime,
    pub dt: f64,
    pub record_every: usize,
}

impl SweepSpec {
    /// Ten agents on `[0, 1]`, `T = 1`, fixed scaling, duty cycles with
    /// independent random phases, `mu in {1, 0.6, 0.3, 0.1}`, threshold
    /// `1e-2`, cutoff `100 ln(100) T / mu`.
    pub fn standard(kernel: InfluenceKernel, n_trials: usize) -> Self {
        SweepSpec {
            mu_values: vec![1.0, 0.6, 0.3, 0.1],
            n_trials,
            agents: 10,
            dim: 1,
            window: 1.0,
            epsilon: 1e-2,
            kernel,
            scaling: ScalingMode::Fixed,
            family: ScheduleFamily::DutyCycle,
            pairing: Pairing::Independent,
            master_seed: 0,
            max_time: MaxTime::PerInverseDuty(100.0 * 100f64.ln()),
            dt: 1e-3,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_values.is_empty() {
            return Err(Error::InvalidParameter("mu_values is empty".into()));
        }
        for &mu in &self.mu_values {
            PeParameters::new(mu, self.window)?;
        }
        if self.n_trials == 0 {
            return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
        }
        if self.agents < 2 || self.dim == 0 {
            return Err(Error::DegenerateInput(format!(
                "need >= 2 agents and dimension >= 1, got {} and {}",
                self.agents, self.dim
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        let c = match self.max_time {
            MaxTime::Absolute(c) | MaxTime::PerInverseDuty(c) => c,
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("max_time must be > 0, got {c}")));
        }
        self.kernel.validate()?;
        self.settings(self.mu_values[0])?.check_resolution(self.window)
    }

    pub fn max_time_for(&self, mu: f64) -> f64 {
        match self.max_time {
            MaxTime::Absolute(t) => t,
            MaxTime::PerInverseDuty(c) => c * self.window / mu,
        }
    }

    pub fn model(&self) -> Model {
        Model::new(self.kernel.clone(), self.scaling)
    }

    fn settings(&self, mu: f64) -> Result<IntegratorSettings> {
        IntegratorSettings::new(self.dt, self.record_every, self.max_time_for(mu), self.epsilon)
    }
}

fn trial_seed(spec: &SweepSpec, trial: u64) -> u64 {
    derive_seed(spec.master_seed, trial)
}

/// Initial positions of trial `trial`, i.i.d. uniform on `[0, 1]^d`.
/// Independent of `mu`.
pub fn initial_state(spec: &SweepSpec, trial: u64) -> Result<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(spec, trial));
    let coords = (0..spec.agents * spec.dim).map(|_| rng.random::<f64>()).collect();
    State::new(0.0, spec.dim, coords)
}

/// Schedule ensemble of trial `trial` at level `mu`, covering the cutoff.
pub fn trial_ensemble(spec: &SweepSpec, mu: f64, trial: u64) -> Result<ScheduleEnsemble> {
    let params = PeParameters::new(mu, spec.window)?;
    let seed = derive_seed(trial_seed(spec, trial), mu.to_bits());
    let horizon = spec.max_time_for(mu) + spec.window;
    ScheduleEnsemble::generate(spec.agents, &spec.family, params, spec.pairing, seed, horizon)
}

/// Consensus time of one trial, or `None` if the threshold is not reached
/// before the cutoff. Deterministic in `(master_seed, mu, trial)`.
pub fn run_trial(spec: &SweepSpec, mu: f64, trial: u64) -> Result<Option<f64>> {
    let wrap = |e: Error| Error::Trial {
        mu,
        trial,
        source: Box::new(e),
    };
    let initial = initial_state(spec, trial).map_err(wrap)?;
    if diameter(&initial) < spec.epsilon {
        return Ok(Some(0.0));
    }
    let model = spec.model();
    validate_hypotheses(&model, &initial).map_err(wrap)?;
    let ensemble = trial_ensemble(spec, mu, trial).map_err(wrap)?;
    let settings = spec.settings(mu).map_err(wrap)?;
    let traj = simulate(&initial, &ensemble, &model, &settings).map_err(wrap)?;
    Ok(consensus_time(&traj, spec.epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub mu: f64,
    pub trial: u64,
    pub initial_diameter: f64,
    pub time: Option<f64>,
}

/// Aggregate over the converged trials at one `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub mean_time: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one trial.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n_unconverged: usize,
}

/// Least-squares line through `(ln mu, ln time)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Absent when fewer than two distinct `mu` values were swept.
    pub fit: Option<LogLogFit>,
    /// Every trial, ordered by `mu` then trial index.
    pub trials: Vec<TrialRecord>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, Execution::default())
}

pub fn run_sweep_with(spec: &SweepSpec, exec: Execution) -> Result<SweepResult> {
    spec.validate()?;
    let n = spec.n_trials;
    let jobs = spec.mu_values.len() * n;
    let outcomes = map_indexed(jobs, exec, |job| {
        let mu = spec.mu_values[job / n];
        let trial = (job % n) as u64;
        let d0 = initial_state(spec, trial).map(|s| diameter(&s));
        let time = run_trial(spec, mu, trial);
        match (d0, time) {
            (Ok(initial_diameter), Ok(time)) => Ok(TrialRecord {
                mu,
                trial,
                initial_diameter,
                time,
            }),
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    });
    let trials = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let rows = spec
        .mu_values
        .iter()
        .zip(trials.chunks(n))
        .map(|(&mu, chunk)| aggregate(mu, chunk))
        .collect::<Result<Vec<_>>>()?;

    let mut distinct: Vec<f64> = spec.mu_values.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let fit = if distinct.len() >= 2 {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.mu, r.mean_time)).collect();
        Some(loglog_fit(&points)?)
    } else {
        None
    };
    Ok(SweepResult { rows, fit, trials })
}

fn aggregate(mu: f64, chunk: &[TrialRecord]) -> Result<SweepRow> {
    let times: Vec<f64> = chunk.iter().filter_map(|r| r.time).collect();
    if times.is_empty() {
        return Err(Error::EmptyAggregate { mu });
    }
    let k = times.len() as f64;
    let mean = times.iter().sum::<f64>() / k;
    let std = if times.len() > 1 {
        (times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SweepRow {
        mu,
        mean_time: mean,
        std,
        min: times.iter().copied().fold(f64::INFINITY, f64::min),
        max: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n_unconverged: chunk.len() - times.len(),
    })
}

/// Ordinary least squares on `(ln mu, ln time)` with the usual coefficient
/// of determination. A perfectly flat response has `r_squared = 1`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(m, t)| !(*m > 0.0 && *t > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs positive coordinates, got {p:?}"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all mu values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

impl SweepResult {
    /// `mu,mean_time,std,min,max,n_unconverged`, one row per `mu`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mu,mean_time,std,min,max,n_unconverged")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.mu, r.mean_time, r.std, r.min, r.max, r.n_unconverged
            )?;
        }
        w.flush()
    }

    /// `{slope, intercept, r_squared}`, with nulls when no fit exists.
    pub fn fit_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar {
            slope: Option<f64>,
            intercept: Option<f64>,
            r_squared: Option<f64>,
        }
        let s = Sidecar {
            slope: self.fit.map(|f| f.slope),
            intercept: self.fit.map(|f| f.intercept),
            r_squared: self.fit.map(|f| f.r_squared),
        };
        serde_json::to_string_pretty(&s).expect("fit serializes")
    }
}
