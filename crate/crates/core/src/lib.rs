//! Simulation and verification of first-order cooperative multi-agent
//! systems with time-varying communication weights,
//!
//! ```text
//! dx_i/dt = (lambda_i / N) * sum_j M_ij(t) phi(|x_i - x_j|) (x_j - x_i),
//! ```
//!
//! where each weight `M_ij: [0, inf) -> [0, 1]` is persistently exciting:
//! every window of length `T` carries at least `mu` of integrated weight.
//!
//! * [`dynamics`] and [`kernel`]: model types, the right-hand side, kernel bounds.
//! * [`schedule`]: piecewise-constant weights, exact PE verification, generators.
//! * [`integrator`]: breakpoint-aligned RK4 and trajectories.
//! * [`observables`]: diameter, extremes, barrier and extremal-pair checks.
//! * [`experiments`]: Monte Carlo sweeps of consensus time against `mu`.

// `!(x > y)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod kernel;
pub mod observables;
pub mod par;
pub mod report;
pub mod schedule;

pub use dynamics::{
    kernel_sandwich_check, lambda, rhs, validate_hypotheses, KernelBounds, Model, ScalingMode,
    State, WeightMatrix,
};
pub use error::{Error, Hypothesis, Result};
pub use experiments::{
    initial_state, loglog_fit, run_sweep, run_sweep_with, run_trial, trial_ensemble, LogLogFit,
    MaxTime, SweepResult, SweepRow, SweepSpec,
};
pub use integrator::{simulate, step, IntegratorSettings, StopReason, Trajectory};
pub use kernel::InfluenceKernel;
pub use observables::{
    check_barrier, consensus_time, diameter, extremal_pair_check, gamma_max, gamma_min_1d,
    project, psi, verify_trajectory, BarrierSpec,
};
pub use par::Execution;
pub use report::CheckReport;
pub use schedule::{
    make_constant, make_duty_cycle, make_random_blackout, make_random_levels, verify_pe, Pairing,
    PeMargin, PeParameters, ScheduleEnsemble, ScheduleFamily, WeightSchedule,
};
