//! Piecewise-constant communication weights `M: [0, inf) -> [0, 1]` and the
//! persistent excitation (PE) condition
//!
//! ```text
//! integral_t^{t+T} M(s) ds >= mu   for all t >= 0.
//! ```
//!
//! Because schedules are piecewise constant, window integrals are computed
//! exactly (sum of value times overlap) and the sliding-window minimum is
//! found by enumerating the finitely many kink points of `t -> m(t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::WeightMatrix;
use crate::error::{Error, Hypothesis, Result};

/// Absolute tolerance for PE comparisons.
pub const PE_TOLERANCE: f64 = 1e-12;

/// Maximum number of resamples per period in [`make_random_levels`].
pub const LEVEL_RETRIES: usize = 1000;

/// Number of constant pieces per period in [`make_random_levels`].
pub const LEVEL_PIECES_PER_PERIOD: usize = 10;

/// PE parameters: at least `mu` of integrated weight in every window of
/// length `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeParameters {
    pub mu: f64,
    pub window: f64,
}

impl PeParameters {
    pub fn new(mu: f64, window: f64) -> Result<Self> {
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "PE window must be > 0, got {window}"
            )));
        }
        if !(mu.is_finite() && mu > 0.0 && mu <= window) {
            return Err(Error::InvalidParameter(format!(
                "PE level must satisfy 0 < mu <= T = {window}, got {mu}"
            )));
        }
        Ok(PeParameters { mu, window })
    }

    /// Fraction of each window that must be served, `mu / T`.
    pub fn duty(&self) -> f64 {
        self.mu / self.window
    }
}

/// Right-continuous step function: `values[k]` holds on
/// `[breakpoints[k], breakpoints[k + 1])` and the last value persists forever.
///
/// Serializes as `{breakpoints, values, horizon}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct WeightSchedule {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl TryFrom<RawSchedule> for WeightSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        WeightSchedule::new(raw.breakpoints, raw.values, raw.horizon)
    }
}

impl From<WeightSchedule> for RawSchedule {
    fn from(s: WeightSchedule) -> Self {
        RawSchedule {
            breakpoints: s.breakpoints,
            values: s.values,
            horizon: s.horizon,
        }
    }
}

impl WeightSchedule {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "schedule needs one value per breakpoint, got {} breakpoints and {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "first breakpoint must be t = 0".into(),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidParameter(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::HypothesisViolation {
                hypothesis: Hypothesis::H3,
                detail: format!("schedule value {v} outside [0, 1]"),
            });
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and >= 0, got {horizon}"
            )));
        }
        Ok(WeightSchedule {
            breakpoints,
            values,
            horizon,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Index of the piece containing `t`.
    #[inline]
    pub fn piece_at(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1)
    }

    /// `M(t)`; times before 0 take the initial value.
    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.piece_at(t)]
    }

    /// Exact `integral_a^b M(s) ds`.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && b >= a && b.is_finite()) {
            return Err(Error::InvalidInterval { a, b });
        }
        Ok(self.integrate_unchecked(a, b))
    }

    fn integrate_unchecked(&self, a: f64, b: f64) -> f64 {
        let mut k = self.piece_at(a);
        let mut total = 0.0;
        while k < self.values.len() && self.breakpoints[k] < b {
            let start = self.breakpoints[k].max(a);
            let end = self.breakpoints.get(k + 1).map_or(b, |&e| e.min(b));
            if end > start {
                total += self.values[k] * (end - start);
            }
            k += 1;
        }
        total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Accumulates `(start, value)` pieces into a canonical schedule: zero-length
/// pieces are overwritten and equal neighbours merged.
struct ScheduleBuilder {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl ScheduleBuilder {
    fn new(initial: f64) -> Self {
        ScheduleBuilder {
            breakpoints: vec![0.0],
            values: vec![initial],
        }
    }

    fn push(&mut self, start: f64, value: f64) {
        let last = *self.breakpoints.last().unwrap();
        if start <= last {
            *self.values.last_mut().unwrap() = value;
            let n = self.values.len();
            if n >= 2 && self.values[n - 2] == value {
                self.breakpoints.pop();
                self.values.pop();
            }
        } else if *self.values.last().unwrap() != value {
            self.breakpoints.push(start);
            self.values.push(value);
        }
    }

    fn finish(self, horizon: f64) -> Result<WeightSchedule> {
        WeightSchedule::new(self.breakpoints, self.values, horizon)
    }
}

/// Outcome of a successful PE verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeMargin {
    /// `min_t m(t) - mu`.
    pub margin: f64,
    /// Window start attaining the minimum.
    pub argmin: f64,
}

/// Minimum of `m(t) = integral_t^{t+T} M` over `t in [0, horizon - T]`,
/// returned as `(min, argmin)`.
///
/// `m` is piecewise linear with kinks only where `t` or `t + T` crosses a
/// breakpoint, so evaluating it at those points and at both ends of the
/// range yields the exact minimum.
pub fn min_window_integral(schedule: &WeightSchedule, window: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(window > 0.0 && horizon >= window) {
        return Err(Error::InvalidParameter(format!(
            "PE verification needs horizon >= T, got horizon {horizon}, T {window}"
        )));
    }
    let last = horizon - window;
    let candidates = [0.0, last]
        .into_iter()
        .chain(schedule.breakpoints.iter().copied())
        .chain(schedule.breakpoints.iter().map(|b| b - window))
        .filter(|&t| (0.0..=last).contains(&t));
    let mut best = (f64::INFINITY, 0.0);
    for t in candidates {
        let m = schedule.integrate_unchecked(t, t + window);
        if m < best.0 || (m == best.0 && t < best.1) {
            best = (m, t);
        }
    }
    Ok(best)
}

/// Checks the PE condition on `[0, horizon]`.
pub fn verify_pe(schedule: &WeightSchedule, params: PeParameters, horizon: f64) -> Result<PeMargin> {
    let (min, argmin) = min_window_integral(schedule, params.window, horizon)?;
    if min < params.mu - PE_TOLERANCE {
        return Err(Error::PeViolated {
            witness: argmin,
            integral: min,
            mu: params.mu,
        });
    }
    Ok(PeMargin {
        margin: min - params.mu,
        argmin,
    })
}

pub fn make_constant(value: f64, horizon: f64) -> Result<WeightSchedule> {
    WeightSchedule::new(vec![0.0], vec![value], horizon)
}

/// Periodic on/off weight: 1 on `[kT + phase, kT + phase + mu)`, 0 elsewhere.
/// Every window of length `T` contains exactly `mu` of on-time.
pub fn make_duty_cycle(params: PeParameters, phase: f64, horizon: f64) -> Result<WeightSchedule> {
    let PeParameters { mu, window } = params;
    if !(0.0..window).contains(&phase) {
        return Err(Error::InvalidParameter(format!(
            "phase must lie in [0, {window}), got {phase}"
        )));
    }
    check_horizon(horizon)?;
    if mu >= window {
        return make_constant(1.0, horizon);
    }
    // The block of period -1 may wrap into [0, ...).
    let mut b = ScheduleBuilder::new(0.0);
    let mut k: i64 = -1;
    loop {
        let start = k as f64 * window + phase;
        if start >= horizon && k >= 0 {
            break;
        }
        b.push(start.max(0.0), 1.0);
        b.push(start + mu, 0.0);
        k += 1;
    }
    b.finish(horizon)
}

/// One on-block of length `mu` per period, placed at `offsets[k]` within
/// period `k` (offsets in `[0, T - mu]`). Periods past the offsets are off.
pub fn make_blackout_with_offsets(
    params: PeParameters,
    offsets: &[f64],
    horizon: f64,
) -> Result<WeightSchedule> {
    let PeParameters { mu, window } = params;
    check_horizon(horizon)?;
    let mut b = ScheduleBuilder::new(0.0);
    for (k, &off) in offsets.iter().enumerate() {
        if !(off >= 0.0 && off <= window - mu) {
            return Err(Error::InvalidParameter(format!(
                "offset {off} of period {k} outside [0, {}]",
                window - mu
            )));
        }
        let start = k as f64 * window + off;
        b.push(start, 1.0);
        b.push(start + mu, 0.0);
    }
    b.finish(horizon)
}

/// Per period, an on-block of length `mu` at a uniformly random offset.
///
/// Two consecutive periods can push their blocks apart, so the result only
/// satisfies PE with parameters `(mu, 2T)`: every window of length `2T`
/// contains a whole period. The output is verified against `(mu, 2T)`.
pub fn make_random_blackout(params: PeParameters, seed: u64, horizon: f64) -> Result<WeightSchedule> {
    let declared = blackout_declared(params);
    if horizon < declared.window {
        return Err(Error::InvalidParameter(format!(
            "random blackout needs horizon >= 2T = {}, got {horizon}",
            declared.window
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = periods_covering(horizon, params.window);
    let slack = params.window - params.mu;
    let offsets: Vec<f64> = (0..periods)
        .map(|_| if slack > 0.0 { rng.random_range(0.0..=slack) } else { 0.0 })
        .collect();
    let schedule = make_blackout_with_offsets(params, &offsets, horizon)?;
    verify_pe(&schedule, declared, horizon)
        .map_err(|e| Error::InternalVerificationFailure(e.to_string()))?;
    Ok(schedule)
}

pub(crate) fn blackout_declared(params: PeParameters) -> PeParameters {
    PeParameters {
        mu: params.mu,
        window: 2.0 * params.window,
    }
}

/// Random levels from `levels` on pieces of length `T/10`.
///
/// Generated period by period; a period is redrawn (at most
/// [`LEVEL_RETRIES`] times) until every window ending inside it integrates
/// to at least `mu`.
pub fn make_random_levels(
    params: PeParameters,
    seed: u64,
    levels: &[f64],
    horizon: f64,
) -> Result<WeightSchedule> {
    let PeParameters { mu, window } = params;
    check_horizon(horizon)?;
    if levels.is_empty() {
        return Err(Error::InvalidParameter("level grid is empty".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidParameter(format!("level {l} outside [0, 1]")));
    }
    let top = levels.iter().copied().fold(0.0, f64::max);
    if top * window < mu - PE_TOLERANCE {
        return Err(Error::GenerationFailed(format!(
            "largest level {top} can serve at most {} per window, below mu = {mu}",
            top * window
        )));
    }

    const P: usize = LEVEL_PIECES_PER_PERIOD;
    let piece = window / P as f64;
    let periods = periods_covering(horizon, window).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pieces: Vec<f64> = Vec::with_capacity(periods * P);

    // Window starting at piece j covers pieces j..j+P.
    let window_ok = |pieces: &[f64], j: usize| {
        pieces[j..j + P].iter().sum::<f64>() * piece >= mu - PE_TOLERANCE
    };

    for k in 0..periods {
        let mut attempts = 0;
        loop {
            if attempts == LEVEL_RETRIES {
                return Err(Error::GenerationFailed(format!(
                    "no admissible levels for period {k} after {LEVEL_RETRIES} draws"
                )));
            }
            attempts += 1;
            pieces.truncate(k * P);
            pieces.extend((0..P).map(|_| levels[rng.random_range(0..levels.len())]));
            let first = k.saturating_sub(1) * P;
            if (first..=k * P).all(|j| window_ok(&pieces, j)) {
                break;
            }
        }
    }

    let mut b = ScheduleBuilder::new(pieces[0]);
    for (s, &v) in pieces.iter().enumerate().skip(1) {
        b.push(s as f64 * piece, v);
    }
    let schedule = b.finish(horizon)?;
    if horizon >= window {
        verify_pe(&schedule, params, horizon)
            .map_err(|e| Error::InternalVerificationFailure(e.to_string()))?;
    }
    Ok(schedule)
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )))
    }
}

fn periods_covering(horizon: f64, window: f64) -> usize {
    (horizon / window).ceil() as usize
}

/// Generator used for every pair of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleFamily {
    /// `M = value`, defaulting to `mu / T`.
    Constant { value: Option<f64> },
    /// Duty cycle with a uniformly random phase.
    DutyCycle,
    RandomBlackout,
    RandomLevels { levels: Vec<f64> },
}

impl ScheduleFamily {
    /// The PE parameters the family's output is guaranteed to satisfy, or
    /// `None` for an identically zero schedule.
    pub fn declared(&self, params: PeParameters) -> Option<PeParameters> {
        match self {
            ScheduleFamily::Constant { value } => {
                let v = value.unwrap_or(params.duty());
                (v > 0.0).then_some(PeParameters {
                    mu: v * params.window,
                    window: params.window,
                })
            }
            ScheduleFamily::DutyCycle | ScheduleFamily::RandomLevels { .. } => Some(params),
            ScheduleFamily::RandomBlackout => Some(blackout_declared(params)),
        }
    }

    /// Draws one schedule. Deterministic in `seed`.
    pub fn generate(&self, params: PeParameters, seed: u64, horizon: f64) -> Result<WeightSchedule> {
        match self {
            ScheduleFamily::Constant { value } => {
                make_constant(value.unwrap_or(params.duty()), horizon)
            }
            ScheduleFamily::DutyCycle => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let phase = rng.random_range(0.0..params.window);
                make_duty_cycle(params, phase, horizon)
            }
            ScheduleFamily::RandomBlackout => make_random_blackout(params, seed, horizon),
            ScheduleFamily::RandomLevels { levels } => {
                make_random_levels(params, seed, levels, horizon)
            }
        }
    }
}

/// How directed pairs share schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Every ordered pair `(i, j)` draws its own schedule.
    #[default]
    Independent,
    /// `M_ij = M_ji`, one draw per unordered pair.
    Symmetric,
    /// One schedule for all pairs.
    Shared,
}

/// Schedules for every ordered pair `i != j` of `n` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEnsemble {
    n: usize,
    pairing: Pairing,
    schedules: Vec<WeightSchedule>,
    // n * n, usize::MAX on the diagonal.
    index: Vec<usize>,
    declared: Option<PeParameters>,
}

impl ScheduleEnsemble {
    /// All pairs share `schedule`.
    pub fn shared(n: usize, schedule: WeightSchedule) -> Self {
        Self::build(n, Pairing::Shared, vec![schedule], None)
    }

    /// One schedule per slot produced by `make`, called with the slot index.
    /// Slots are ordered pairs (independent), unordered pairs `i < j`
    /// (symmetric), or a single slot (shared), enumerated row-major.
    pub fn from_fn(
        n: usize,
        pairing: Pairing,
        mut make: impl FnMut(usize) -> Result<WeightSchedule>,
    ) -> Result<Self> {
        let slots = slot_count(n, pairing);
        let schedules = (0..slots).map(&mut make).collect::<Result<Vec<_>>>()?;
        Ok(Self::build(n, pairing, schedules, None))
    }

    /// Draws every slot from `family`. Slot `k` uses the RNG stream derived
    /// from `(seed, k)`, so results do not depend on generation order.
    pub fn generate(
        n: usize,
        family: &ScheduleFamily,
        params: PeParameters,
        pairing: Pairing,
        seed: u64,
        horizon: f64,
    ) -> Result<Self> {
        let mut e = Self::from_fn(n, pairing, |k| {
            family.generate(params, derive_seed(seed, k as u64), horizon)
        })?;
        e.declared = family.declared(params);
        Ok(e)
    }

    fn build(
        n: usize,
        pairing: Pairing,
        schedules: Vec<WeightSchedule>,
        declared: Option<PeParameters>,
    ) -> Self {
        let mut index = vec![usize::MAX; n * n];
        let mut next = 0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                index[i * n + j] = match pairing {
                    Pairing::Shared => 0,
                    Pairing::Independent => {
                        next += 1;
                        next - 1
                    }
                    Pairing::Symmetric if j > i => {
                        next += 1;
                        next - 1
                    }
                    Pairing::Symmetric => index[j * n + i],
                };
            }
        }
        ScheduleEnsemble {
            n,
            pairing,
            schedules,
            index,
            declared,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    /// PE parameters every schedule satisfies by construction, if known.
    pub fn declared(&self) -> Option<PeParameters> {
        self.declared
    }

    pub fn with_declared(mut self, params: PeParameters) -> Self {
        self.declared = Some(params);
        self
    }

    /// Distinct schedules backing the ensemble.
    pub fn schedules(&self) -> &[WeightSchedule] {
        &self.schedules
    }

    /// Slot of the schedule driving `M_ij`; `None` on the diagonal.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let k = self.index[i * self.n + j];
        (k != usize::MAX).then_some(k)
    }

    pub fn schedule(&self, i: usize, j: usize) -> Option<&WeightSchedule> {
        self.slot(i, j).map(|k| &self.schedules[k])
    }

    /// `M(t)` with a unit diagonal.
    pub fn sample(&self, t: f64) -> WeightMatrix {
        let values: Vec<f64> = self.schedules.iter().map(|s| s.value_at(t)).collect();
        self.matrix_from_slots(&values)
    }

    pub(crate) fn matrix_from_slots(&self, slot_values: &[f64]) -> WeightMatrix {
        let mut m = WeightMatrix::ones(self.n);
        self.fill_matrix(slot_values, &mut m);
        m
    }

    pub(crate) fn fill_matrix(&self, slot_values: &[f64], m: &mut WeightMatrix) {
        for i in 0..self.n {
            for j in 0..self.n {
                if let Some(k) = self.slot(i, j) {
                    m.set(i, j, slot_values[k]);
                }
            }
        }
    }
}

fn slot_count(n: usize, pairing: Pairing) -> usize {
    match pairing {
        Pairing::Independent => n * n.saturating_sub(1),
        Pairing::Symmetric => n * n.saturating_sub(1) / 2,
        Pairing::Shared => 1,
    }
}

/// SplitMix64 finalizer over `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
