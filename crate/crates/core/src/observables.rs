//! Scalar observables of a configuration and runtime checks of the
//! properties every solution must have: contraction of the support,
//! extremal-pair inner products, and the exponential lower barrier.

use serde::{Deserialize, Serialize};

use crate::dynamics::{KernelBounds, State};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::report::{breach, CheckReport};

/// Per-step slack for monotonicity checks, scaled by `1 + D(0)`.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Relative tolerance of the extremal-pair equalities.
pub const EXTREMAL_RTOL: f64 = 1e-10;
/// Barrier tolerance, scaled by `1 + |z - alpha|`.
pub const BARRIER_SLACK: f64 = 1e-7;

/// Largest pairwise Euclidean distance.
pub fn diameter(state: &State) -> f64 {
    diameter_of(state.coords(), state.dim())
}

pub(crate) fn diameter_of(coords: &[f64], dim: usize) -> f64 {
    if dim == 1 {
        let (lo, hi) = coords
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        return hi - lo;
    }
    let n = coords.len() / dim;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let xi = &coords[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            let xj = &coords[j * dim..(j + 1) * dim];
            let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(r2);
        }
    }
    best.sqrt()
}

/// `max_i |x_i|`.
pub fn gamma_max(state: &State) -> f64 {
    state
        .agents()
        .map(|x| x.iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `min_i x_i` on the real line.
pub fn gamma_min_1d(state: &State) -> Result<f64> {
    if state.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: state.dim(),
        });
    }
    Ok(state.coords().iter().copied().fold(f64::INFINITY, f64::min))
}

/// Parameters of the lower barrier `psi(tau) = alpha + exp(-K_max tau) (z - alpha)`
/// started at time `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub alpha: f64,
    pub z: f64,
    pub theta: f64,
    pub window: f64,
    pub k_max: f64,
}

impl BarrierSpec {
    pub fn new(alpha: f64, z: f64, theta: f64, window: f64, k_max: f64) -> Result<Self> {
        if !(z >= alpha) {
            return Err(Error::InvalidParameter(format!("need z >= alpha, got z = {z}, alpha = {alpha}")));
        }
        if !(window > 0.0 && k_max > 0.0) {
            return Err(Error::InvalidParameter(
                "barrier window and K_max must be positive".into(),
            ));
        }
        Ok(BarrierSpec {
            alpha,
            z,
            theta,
            window,
            k_max,
        })
    }
}

pub fn psi(spec: &BarrierSpec, tau: f64) -> f64 {
    spec.alpha + (-spec.k_max * tau).exp() * (spec.z - spec.alpha)
}

/// Checks that once `x_agent` reaches the barrier at some `tau*`, it stays
/// above it (up to tolerance) for the rest of `[theta, theta + window]`.
///
/// Requires `d = 1`, every agent `>= alpha` at `theta`, and samples covering
/// the window. `theta` snaps to the first sample at or after it.
pub fn check_barrier(traj: &Trajectory, spec: &BarrierSpec, agent: usize) -> Result<CheckReport> {
    const CHECK: &str = "barrier";
    let first = traj.first();
    if first.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: first.dim(),
        });
    }
    if agent >= first.n() {
        return Err(Error::InvalidParameter(format!("agent {agent} out of range")));
    }
    let samples = traj.samples();
    let start = samples.partition_point(|s| s.t() < spec.theta);
    let Some(at_theta) = samples.get(start) else {
        return Err(Error::PreconditionFailed(format!(
            "trajectory ends before theta = {}",
            spec.theta
        )));
    };
    if traj.last().t() < at_theta.t() + spec.window - 1e-12 * spec.window {
        return Err(Error::PreconditionFailed(format!(
            "trajectory does not cover [{}, {}]",
            at_theta.t(),
            at_theta.t() + spec.window
        )));
    }
    if let Some((j, x)) = at_theta
        .coords()
        .iter()
        .enumerate()
        .find(|(_, &x)| x < spec.alpha)
    {
        return Err(Error::PreconditionFailed(format!(
            "agent {j} at {x} is below alpha = {} at theta",
            spec.alpha
        )));
    }

    let theta = at_theta.t();
    let tol = BARRIER_SLACK * (1.0 + (spec.z - spec.alpha).abs());
    let mut tau_star = None;
    let mut min_slack = f64::MAX;
    for s in &samples[start..] {
        let tau = s.t() - theta;
        if tau > spec.window {
            break;
        }
        let x = s.coords()[agent];
        let slack = x - psi(spec, tau);
        if tau_star.is_none() {
            if slack >= 0.0 {
                tau_star = Some(tau);
                min_slack = slack;
            }
            continue;
        }
        if slack < -tol {
            return Err(breach(
                CHECK,
                Some(agent),
                Some(s.t()),
                format!("x = {x} fell below the barrier {}", psi(spec, tau)),
                slack + tol,
            ));
        }
        min_slack = min_slack.min(slack);
    }
    Ok(CheckReport::passed(CHECK, tau_star.map(|t| theta + t), min_slack))
}

/// For a diameter-attaining pair `(i, j)`, the inner products
/// `<x_k, x_i - x_j>` are maximized at `k = i` and minimized at `k = j`.
/// Every tied pair is checked; the witness is the first violation found in
/// lexicographic order.
pub fn extremal_pair_check(state: &State) -> Result<CheckReport> {
    const CHECK: &str = "extremal_pair";
    let n = state.n();
    let dist2 = |i: usize, j: usize| -> f64 {
        state
            .agent(i)
            .iter()
            .zip(state.agent(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut best = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            best = f64::max(best, dist2(i, j));
        }
    }
    let dot = |k: usize, v: &[f64]| -> f64 { state.agent(k).iter().zip(v).map(|(a, b)| a * b).sum() };
    let gmax = gamma_max(state);

    let mut margin = f64::MAX;
    for i in 0..n {
        for j in (i + 1)..n {
            if dist2(i, j) != best {
                continue;
            }
            let v: Vec<f64> = state.agent(i).iter().zip(state.agent(j)).map(|(a, b)| a - b).collect();
            let vnorm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            let tol = EXTREMAL_RTOL * (vnorm * gmax).max(vnorm * vnorm);
            let (pi, pj) = (dot(i, &v), dot(j, &v));
            for k in 0..n {
                let pk = dot(k, &v);
                let excess = (pk - pi).max(pj - pk);
                if excess > tol {
                    return Err(breach(
                        CHECK,
                        Some(k),
                        Some(state.t()),
                        format!("agent {k} beats extremal pair ({i}, {j}) by {excess}"),
                        tol - excess,
                    ));
                }
                margin = margin.min(tol - excess);
            }
        }
    }
    Ok(CheckReport::passed(CHECK, Some(state.t()), margin))
}

/// Scalar projection `y_i = (x_i - x0) . v` of every sample.
pub fn project(traj: &Trajectory, x0: &[f64], v: &[f64]) -> Result<Trajectory> {
    let dim = traj.first().dim();
    if x0.len() != dim || v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if x0.len() != dim { x0.len() } else { v.len() },
        });
    }
    if v.iter().all(|&c| c == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let samples = traj
        .samples()
        .iter()
        .map(|s| {
            let ys = s
                .agents()
                .map(|x| x.iter().zip(x0).zip(v).map(|((a, o), w)| (a - o) * w).sum())
                .collect();
            State::new(s.t(), 1, ys)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(samples)
}

/// First time the diameter drops below `epsilon`, interpolated linearly in
/// `D` between the bracketing samples.
pub fn consensus_time(traj: &Trajectory, epsilon: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for s in traj.samples() {
        let d = diameter(s);
        if d < epsilon {
            return Some(match prev {
                None => s.t(),
                Some((t0, d0)) => t0 + (d0 - epsilon) / (d0 - d) * (s.t() - t0),
            });
        }
        prev = Some((s.t(), d));
    }
    None
}

/// Quantities expected to be monotone along solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotone {
    /// Non-increasing diameter.
    Diameter,
    /// Non-increasing `max_i |x_i|`.
    GammaMax,
    /// Non-decreasing `min_i x_i` (d = 1 only).
    GammaMin,
}

impl Monotone {
    pub fn name(self) -> &'static str {
        match self {
            Monotone::Diameter => "diameter_monotone",
            Monotone::GammaMax => "gamma_max_monotone",
            Monotone::GammaMin => "gamma_min_monotone",
        }
    }
}

/// Checks monotonicity sample to sample with slack
/// `MONOTONE_SLACK * (1 + D(0))` per step.
pub fn check_monotone(traj: &Trajectory, which: Monotone) -> Result<CheckReport> {
    let check = which.name();
    let slack = MONOTONE_SLACK * (1.0 + diameter(traj.first()));
    // Orient every quantity so that it must not increase.
    let value = |s: &State| -> Result<f64> {
        Ok(match which {
            Monotone::Diameter => diameter(s),
            Monotone::GammaMax => gamma_max(s),
            Monotone::GammaMin => -gamma_min_1d(s)?,
        })
    };
    let mut margin = f64::MAX;
    let mut prev = value(traj.first())?;
    for s in &traj.samples()[1..] {
        let cur = value(s)?;
        let m = prev + slack - cur;
        if m < 0.0 {
            return Err(breach(
                check,
                None,
                Some(s.t()),
                format!("increased from {prev} to {cur}"),
                m,
            ));
        }
        margin = margin.min(m);
        prev = cur;
    }
    Ok(CheckReport::passed(check, None, margin))
}

/// Every coordinate stays within the per-axis range of the initial
/// configuration (d = 1), or inside the initial `gamma_max` ball (d > 1).
pub fn check_hull(traj: &Trajectory) -> Result<CheckReport> {
    const CHECK: &str = "hull_confinement";
    let first = traj.first();
    let tol = MONOTONE_SLACK;
    let mut margin = f64::MAX;
    if first.dim() == 1 {
        let lo = gamma_min_1d(first)?;
        let hi = first.coords().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for s in traj.samples() {
            for (i, &x) in s.coords().iter().enumerate() {
                let m = (x - lo).min(hi - x) + tol;
                if m < 0.0 {
                    return Err(breach(CHECK, Some(i), Some(s.t()), format!("{x} left [{lo}, {hi}]"), m));
                }
                margin = margin.min(m);
            }
        }
    } else {
        let g0 = gamma_max(first);
        for s in traj.samples() {
            for (i, x) in s.agents().enumerate() {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let m = g0 + tol - r;
                if m < 0.0 {
                    return Err(breach(CHECK, Some(i), Some(s.t()), format!("|x| = {r} > {g0}"), m));
                }
                margin = margin.min(m);
            }
        }
    }
    Ok(CheckReport::passed(CHECK, None, margin))
}

/// `|mean(t) - mean(0)| <= tol * (1 + |mean(0)|)` along the trajectory.
pub fn check_mean_conservation(traj: &Trajectory, tol: f64) -> Result<CheckReport> {
    const CHECK: &str = "mean_conservation";
    let m0 = traj.first().mean();
    let norm0 = m0.iter().map(|c| c * c).sum::<f64>().sqrt();
    let bound = tol * (1.0 + norm0);
    let mut margin = f64::MAX;
    for s in traj.samples() {
        let drift = s.mean().iter().zip(&m0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if drift > bound {
            return Err(breach(CHECK, None, Some(s.t()), format!("mean drifted by {drift}"), bound - drift));
        }
        margin = margin.min(bound - drift);
    }
    Ok(CheckReport::passed(CHECK, None, margin))
}

/// Runs the full battery of checks a solution must pass: monotone diameter
/// and `gamma_max`, and for `d = 1` monotone `gamma_min`, hull confinement,
/// extremal pairs at every sample, and the barrier for every agent with
/// `alpha = gamma_min(theta)`, `z = x_agent(theta)` at
/// `theta = 0, T, 2T, ...` while a full window remains.
///
/// Failing checks are reported, not raised.
pub fn verify_trajectory(traj: &Trajectory, bounds: &KernelBounds, window: f64) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    let mut push = |name: &str, outcome: Result<CheckReport>| -> Result<()> {
        reports.push(CheckReport::from_outcome(name, outcome)?);
        Ok(())
    };
    push(Monotone::Diameter.name(), check_monotone(traj, Monotone::Diameter))?;
    push(Monotone::GammaMax.name(), check_monotone(traj, Monotone::GammaMax))?;
    let one_d = traj.first().dim() == 1;
    if one_d {
        push(Monotone::GammaMin.name(), check_monotone(traj, Monotone::GammaMin))?;
    }
    push("hull_confinement", check_hull(traj))?;
    push("extremal_pair", fold_checks("extremal_pair", traj.samples().iter().map(extremal_pair_check)))?;

    if one_d {
        let end = traj.last().t();
        let mut outcomes = Vec::new();
        let mut k = 0u64;
        loop {
            let theta = k as f64 * window;
            let start = traj.samples().partition_point(|s| s.t() < theta);
            let Some(at) = traj.samples().get(start) else { break };
            if at.t() + window > end {
                break;
            }
            let alpha = gamma_min_1d(at)?;
            for (agent, &z) in at.coords().iter().enumerate() {
                let spec = BarrierSpec::new(alpha, z, at.t(), window, bounds.k_max)?;
                outcomes.push(check_barrier(traj, &spec, agent));
            }
            k += 1;
        }
        push("barrier", fold_checks("barrier", outcomes.into_iter()))?;
    }
    Ok(reports)
}

/// Combines per-item checks: first breach wins, otherwise the tightest margin.
fn fold_checks(name: &str, outcomes: impl Iterator<Item = Result<CheckReport>>) -> Result<CheckReport> {
    let mut tightest = CheckReport::passed(name, None, f64::MAX);
    for o in outcomes {
        let r = o?;
        if r.margin < tightest.margin {
            tightest = CheckReport { check: name.to_string(), ..r };
        }
    }
    Ok(tightest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s1(xs: &[f64]) -> State {
        State::from_scalars(0.0, xs).unwrap()
    }

    fn traj(points: &[(f64, &[f64])]) -> Trajectory {
        Trajectory::new(points.iter().map(|(t, xs)| State::from_scalars(*t, xs).unwrap()).collect()).unwrap()
    }

    #[test]
    fn scalar_observables() {
        assert_eq!(diameter(&s1(&[0.3, 0.3])), 0.0);
        assert_eq!(diameter(&s1(&[0.0, 1.0])), 1.0);
        let s = s1(&[-2.0, 3.0]);
        assert_eq!(gamma_max(&s), 3.0);
        assert_eq!(gamma_min_1d(&s).unwrap(), -2.0);
        let z = s1(&[0.0, 0.0]);
        assert_eq!((gamma_max(&z), gamma_min_1d(&z).unwrap()), (0.0, 0.0));
        let s2 = State::new(0.0, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        assert_eq!(diameter(&s2), 5.0);
        assert!(matches!(gamma_min_1d(&s2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn psi_values() {
        let spec = BarrierSpec::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(psi(&spec, 0.0), 1.0);
        assert_relative_eq!(psi(&spec, 1.0), 0.367_879_441_171_442_3, epsilon = 1e-15);
        let flat = BarrierSpec::new(0.4, 0.4, 0.0, 1.0, 3.0).unwrap();
        assert_eq!(psi(&flat, 2.0), 0.4);
        assert!(BarrierSpec::new(1.0, 0.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn barrier_on_frozen_dynamics() {
        let t = traj(&[(0.0, &[0.0, 0.7]), (0.5, &[0.0, 0.7]), (1.0, &[0.0, 0.7])]);
        let spec = BarrierSpec::new(0.0, 0.7, 0.0, 1.0, 1.0).unwrap();
        let r = check_barrier(&t, &spec, 1).unwrap();
        assert!(r.pass);
        assert_eq!(r.witness_time, Some(0.0));
    }

    #[test]
    fn barrier_precondition_and_breach() {
        let t = traj(&[(0.0, &[0.0, 0.7]), (0.5, &[0.0, 0.1]), (1.0, &[0.0, 0.1])]);
        let spec = BarrierSpec::new(0.2, 0.7, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(check_barrier(&t, &spec, 1), Err(Error::PreconditionFailed(_))));
        let spec = BarrierSpec::new(0.0, 0.7, 0.0, 1.0, 1.0).unwrap();
        match check_barrier(&t, &spec, 1) {
            Err(Error::InvariantBreach { time, .. }) => assert_eq!(time, Some(0.5)),
            other => panic!("{other:?}"),
        }
        let spec = BarrierSpec::new(0.0, 0.7, 0.5, 1.0, 1.0).unwrap();
        assert!(matches!(check_barrier(&t, &spec, 1), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn extremal_pair_examples() {
        assert!(extremal_pair_check(&s1(&[0.0, 1.0])).unwrap().pass);
        assert!(extremal_pair_check(&s1(&[0.0, 0.5, 1.0])).unwrap().pass);
        // Square: two tied diagonals.
        let sq = State::new(0.0, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(extremal_pair_check(&sq).unwrap().pass);
        assert!(extremal_pair_check(&s1(&[2.0, 2.0, 2.0])).unwrap().pass);
    }

    #[test]
    fn projection() {
        let s = State::new(0.0, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = Trajectory::new(vec![s]).unwrap();
        let p = project(&t, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(p.first().coords(), &[1.0, 3.0]);
        assert!(matches!(project(&t, &[0.0, 0.0], &[0.0, 0.0]), Err(Error::ZeroDirection)));
    }

    #[test]
    fn consensus_time_cases() {
        let t = traj(&[(0.0, &[0.0, 0.001]), (1.0, &[0.0, 0.0])]);
        assert_eq!(consensus_time(&t, 0.01), Some(0.0));
        let t = traj(&[(0.0, &[0.0, 1.0]), (1.0, &[0.0, 0.5]), (2.0, &[0.0, 0.0])]);
        assert_eq!(consensus_time(&t, 0.25), Some(1.5));
        let t = traj(&[(0.0, &[0.0, 1.0]), (1.0, &[0.0, 1.0])]);
        assert_eq!(consensus_time(&t, 0.01), None);
    }

    #[test]
    fn monotone_breach_is_named() {
        let t = traj(&[(0.0, &[0.0, 1.0]), (1.0, &[0.0, 0.5]), (2.0, &[0.0, 0.6])]);
        match check_monotone(&t, Monotone::Diameter) {
            Err(Error::InvariantBreach { check, time, .. }) => {
                assert_eq!(check, "diameter_monotone");
                assert_eq!(time, Some(2.0));
            }
            other => panic!("{other:?}"),
        }
        assert!(check_monotone(&t, Monotone::GammaMin).unwrap().pass);
    }
}
