//! Fixed-step RK4 with steps aligned to schedule breakpoints.
//!
//! The nominal grid `k * dt` is refined by inserting every breakpoint of
//! every schedule in the ensemble, so weights are constant on each step and
//! the only non-smoothness of the right-hand side never falls inside a step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Model, State, WeightMatrix};
use crate::error::{Error, Result};
use crate::observables::diameter_of;
use crate::schedule::{ScheduleEnsemble, WeightSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// Nominal step.
    pub dt: f64,
    /// Store every k-th step (the final state is always stored).
    pub record_every: usize,
    pub max_time: f64,
    /// Stop once the diameter drops below this; 0 disables.
    pub stop_diameter: f64,
}

impl IntegratorSettings {
    pub fn new(dt: f64, record_every: usize, max_time: f64, stop_diameter: f64) -> Result<Self> {
        let s = IntegratorSettings {
            dt,
            record_every,
            max_time,
            stop_diameter,
        };
        s.validate()?;
        Ok(s)
    }

    /// Defaults for a PE window `window`: `dt = 1e-3 * window`, every step recorded.
    pub fn for_window(window: f64, max_time: f64) -> Self {
        IntegratorSettings {
            dt: 1e-3 * window,
            record_every: 1,
            max_time,
            stop_diameter: 0.0,
        }
    }

    pub fn with_stop_diameter(mut self, stop_diameter: f64) -> Self {
        self.stop_diameter = stop_diameter;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        if !(self.max_time.is_finite() && self.max_time > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max_time must be > 0, got {}",
                self.max_time
            )));
        }
        if !(self.stop_diameter.is_finite() && self.stop_diameter >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop_diameter must be >= 0, got {}",
                self.stop_diameter
            )));
        }
        Ok(())
    }

    /// Resolution guard `dt <= T / 10`.
    pub fn check_resolution(&self, window: f64) -> Result<()> {
        if self.dt > window / 10.0 {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds T/10 = {}",
                self.dt,
                window / 10.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTime,
    DiameterThreshold,
}

/// Model and settings a trajectory was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSnapshot {
    pub model: Model,
    pub settings: IntegratorSettings,
}

/// Time-ordered samples of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<State>,
    stop_reason: Option<StopReason>,
    snapshot: Option<RunSnapshot>,
}

impl Trajectory {
    /// Samples must share agent count and dimension and have strictly
    /// increasing times.
    pub fn new(samples: Vec<State>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::DegenerateInput("trajectory has no samples".into()))?;
        let (n, dim) = (first.n(), first.dim());
        for s in &samples {
            if s.n() != n || s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: n * dim,
                    found: s.n() * s.dim(),
                });
            }
        }
        if samples.windows(2).any(|w| w[1].t() <= w[0].t()) {
            return Err(Error::InvalidParameter(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(Trajectory {
            samples,
            stop_reason: None,
            snapshot: None,
        })
    }

    pub fn samples(&self) -> &[State] {
        &self.samples
    }

    pub fn first(&self) -> &State {
        &self.samples[0]
    }

    pub fn last(&self) -> &State {
        self.samples.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(State::t)
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop_reason
    }

    pub fn snapshot(&self) -> Option<&RunSnapshot> {
        self.snapshot.as_ref()
    }

    /// Writes `t,agent,coord,value`, one row per sample, agent and coordinate.
    /// Floats use the shortest representation that parses back exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,agent,coord,value")?;
        for s in &self.samples {
            for (i, x) in s.agents().enumerate() {
                for (c, v) in x.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", s.t(), i, c, v)?;
                }
            }
        }
        w.flush()
    }

    /// Inverse of [`Trajectory::write_csv`]. Rows of one sample must be
    /// contiguous; every (agent, coord) cell must be present exactly once.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::Parse(e.to_string()))?,
            None => return Err(Error::Parse("empty trajectory file".into())),
        };
        if header.trim() != "t,agent,coord,value" {
            return Err(Error::Parse(format!("unexpected header `{}`", header.trim())));
        }

        // (agent, coord, value) rows grouped by time
        type Row = (usize, usize, f64);
        let mut groups: Vec<(f64, Vec<Row>)> = Vec::new();
        for (no, line) in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", no + 1));
            let mut fields = line.trim().split(',');
            let mut next = || fields.next().ok_or_else(|| bad("expected 4 fields"));
            let t: f64 = next()?.parse().map_err(|_| bad("bad time"))?;
            let agent: usize = next()?.parse().map_err(|_| bad("bad agent index"))?;
            let coord: usize = next()?.parse().map_err(|_| bad("bad coordinate index"))?;
            let value: f64 = next()?.parse().map_err(|_| bad("bad value"))?;
            if fields.next().is_some() {
                return Err(bad("expected 4 fields"));
            }
            match groups.last_mut() {
                Some((gt, rows)) if *gt == t => rows.push((agent, coord, value)),
                _ => groups.push((t, vec![(agent, coord, value)])),
            }
        }
        if groups.is_empty() {
            return Err(Error::Parse("trajectory file has no samples".into()));
        }

        let n = groups[0].1.iter().map(|r| r.0).max().unwrap() + 1;
        let dim = groups[0].1.iter().map(|r| r.1).max().unwrap() + 1;
        let mut samples = Vec::with_capacity(groups.len());
        for (t, rows) in groups {
            if rows.len() != n * dim {
                return Err(Error::Parse(format!(
                    "sample at t = {t} has {} cells, expected {}",
                    rows.len(),
                    n * dim
                )));
            }
            let mut coords = vec![f64::NAN; n * dim];
            for (a, c, v) in rows {
                if a >= n || c >= dim || !coords[a * dim + c].is_nan() {
                    return Err(Error::Parse(format!(
                        "sample at t = {t}: duplicate or out-of-range cell ({a}, {c})"
                    )));
                }
                coords[a * dim + c] = v;
            }
            samples.push(State::new(t, dim, coords)?);
        }
        Trajectory::new(samples)
    }
}

/// One classical RK4 step of length `h` from `state` (at time `t`), with
/// weights frozen at their value at `t + h/2`. The caller guarantees no
/// schedule breakpoint lies inside `(t, t + h)`.
pub fn step(
    state: &State,
    t: f64,
    h: f64,
    ensemble: &ScheduleEnsemble,
    model: &Model,
) -> Result<State> {
    if ensemble.n() != state.n() {
        return Err(Error::DimensionMismatch {
            expected: state.n(),
            found: ensemble.n(),
        });
    }
    let weights = ensemble.sample(t + 0.5 * h);
    let mut work = Rk4::new(state.n(), state.dim());
    let mut coords = state.coords().to_vec();
    work.step(model, &weights, state.dim(), &mut coords, h);
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteState { time: t + h });
    }
    Ok(State::from_raw(t + h, state.dim(), coords))
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    phi: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize, dim: usize) -> Self {
        let len = n * dim;
        Rk4 {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
            phi: vec![0.0; n * n],
        }
    }

    fn step(&mut self, model: &Model, w: &WeightMatrix, dim: usize, x: &mut [f64], h: f64) {
        let half = 0.5 * h;
        model.rhs_into(x, dim, w, &mut self.phi, &mut self.k1);
        for ((t, a), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *t = a + half * k;
        }
        model.rhs_into(&self.tmp, dim, w, &mut self.phi, &mut self.k2);
        for ((t, a), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *t = a + half * k;
        }
        model.rhs_into(&self.tmp, dim, w, &mut self.phi, &mut self.k3);
        for ((t, a), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *t = a + h * k;
        }
        model.rhs_into(&self.tmp, dim, w, &mut self.phi, &mut self.k4);
        let sixth = h / 6.0;
        for (i, a) in x.iter_mut().enumerate() {
            *a += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Tracks the active piece of every schedule as time moves forward.
struct Cursors<'a> {
    schedules: &'a [WeightSchedule],
    piece: Vec<usize>,
    values: Vec<f64>,
    next_event: f64,
}

impl<'a> Cursors<'a> {
    fn new(schedules: &'a [WeightSchedule]) -> Self {
        let piece = vec![0; schedules.len()];
        let values = schedules.iter().map(|s| s.values()[0]).collect();
        let mut c = Cursors {
            schedules,
            piece,
            values,
            next_event: f64::INFINITY,
        };
        c.refresh_next_event();
        c
    }

    fn refresh_next_event(&mut self) {
        self.next_event = self
            .schedules
            .iter()
            .zip(&self.piece)
            .filter_map(|(s, &p)| s.breakpoints().get(p + 1).copied())
            .fold(f64::INFINITY, f64::min);
    }

    fn advance_to(&mut self, t: f64) {
        for (k, s) in self.schedules.iter().enumerate() {
            let bps = s.breakpoints();
            let p = &mut self.piece[k];
            while *p + 1 < bps.len() && bps[*p + 1] <= t {
                *p += 1;
            }
            self.values[k] = s.values()[*p];
        }
        self.refresh_next_event();
    }
}

/// Integrates from `initial` (taken to be at `t = 0`) until `max_time` or
/// until the diameter drops below `stop_diameter`.
pub fn simulate(
    initial: &State,
    ensemble: &ScheduleEnsemble,
    model: &Model,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    if let Some(p) = ensemble.declared() {
        settings.check_resolution(p.window)?;
    }
    if ensemble.n() != initial.n() {
        return Err(Error::DimensionMismatch {
            expected: initial.n(),
            found: ensemble.n(),
        });
    }
    let (dim, n) = (initial.dim(), initial.n());
    let mut x = initial.coords().to_vec();
    let mut samples = vec![State::from_raw(0.0, dim, x.clone())];
    let snapshot = Some(RunSnapshot {
        model: model.clone(),
        settings: *settings,
    });

    let stop_below =
        |x: &[f64]| settings.stop_diameter > 0.0 && diameter_of(x, dim) < settings.stop_diameter;
    if stop_below(&x) {
        return Ok(Trajectory {
            samples,
            stop_reason: Some(StopReason::DiameterThreshold),
            snapshot,
        });
    }

    let mut cursors = Cursors::new(ensemble.schedules());
    let mut weights = WeightMatrix::ones(n);
    ensemble.fill_matrix(&cursors.values, &mut weights);
    let mut rk = Rk4::new(n, dim);

    let mut t = 0.0;
    let mut grid_index: u64 = 1;
    let mut steps: usize = 0;
    let mut stop_reason = StopReason::MaxTime;
    while t < settings.max_time {
        let next_grid = grid_index as f64 * settings.dt;
        let target = next_grid.min(cursors.next_event).min(settings.max_time);
        rk.step(model, &weights, dim, &mut x, target - t);
        t = target;
        steps += 1;
        if t >= next_grid {
            grid_index += 1;
        }
        if t >= cursors.next_event {
            cursors.advance_to(t);
            ensemble.fill_matrix(&cursors.values, &mut weights);
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { time: t });
        }
        if stop_below(&x) {
            stop_reason = StopReason::DiameterThreshold;
            samples.push(State::from_raw(t, dim, x.clone()));
            break;
        }
        if steps.is_multiple_of(settings.record_every) {
            samples.push(State::from_raw(t, dim, x.clone()));
        }
    }
    if samples.last().unwrap().t() < t {
        samples.push(State::from_raw(t, dim, x));
    }
    Ok(Trajectory {
        samples,
        stop_reason: Some(stop_reason),
        snapshot,
    })
}
