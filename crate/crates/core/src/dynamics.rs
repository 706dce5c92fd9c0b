//! Model types and the right-hand side of the weighted consensus system
//!
//! ```text
//! dx_i/dt = (lambda_i / N) * sum_j M_ij(t) phi(|x_i - x_j|) (x_j - x_i)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::kernel::InfluenceKernel;
use crate::observables::diameter;
use crate::report::{breach, CheckReport};

/// Number of grid intervals used to bound the kernel on `[0, D(0)]`.
pub const KERNEL_GRID_INTERVALS: usize = 10_000;

/// Upper limit when the grid is refined to certify a small kernel minimum.
pub const MAX_KERNEL_GRID_INTERVALS: usize = 10_000_000;

/// Positions of `N >= 2` agents in `R^d` at time `t`, stored agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    t: f64,
    dim: usize,
    coords: Vec<f64>,
}

impl State {
    pub fn new(t: f64, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DegenerateInput("dimension must be >= 1".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if coords.len() / dim < 2 {
            return Err(Error::DegenerateInput(format!(
                "need at least 2 agents, got {}",
                coords.len() / dim
            )));
        }
        if !t.is_finite() || coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { time: t });
        }
        Ok(State { t, dim, coords })
    }

    /// One-dimensional state from scalar positions.
    pub fn from_scalars(t: f64, xs: &[f64]) -> Result<Self> {
        Self::new(t, 1, xs.to_vec())
    }

    pub fn from_points(t: f64, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(t, dim, points.concat())
    }

    // Used by the integrator, which checks finiteness itself.
    pub(crate) fn from_raw(t: f64, dim: usize, coords: Vec<f64>) -> Self {
        State { t, dim, coords }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn agents(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// The reflected configuration `-x`.
    pub fn negated(&self) -> Self {
        State {
            t: self.t,
            dim: self.dim,
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// Every agent shifted by the same vector `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: shift.len(),
            });
        }
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|x| x.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Ok(State {
            t: self.t,
            dim: self.dim,
            coords,
        })
    }

    /// Componentwise mean position.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for x in self.agents() {
            for (acc, c) in m.iter_mut().zip(x) {
                *acc += c;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|c| *c /= n);
        m
    }
}

/// How the per-agent scaling `lambda_i` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// `lambda_i = 1`.
    #[default]
    Fixed,
    /// `lambda_i = N / sum_j phi_ij`, the sum including the self term `phi(0)`.
    Rescaled,
}

/// Kernel and scaling: everything the right-hand side needs besides the state
/// and the sampled weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kernel: InfluenceKernel,
    pub scaling: ScalingMode,
}

impl Model {
    pub fn new(kernel: InfluenceKernel, scaling: ScalingMode) -> Self {
        Model { kernel, scaling }
    }

    /// Pairwise kernel values `phi(|x_i - x_j|)` into `phi` (row-major, `n x n`).
    fn fill_phi(&self, coords: &[f64], dim: usize, phi: &mut [f64]) {
        let n = coords.len() / dim;
        if let InfluenceKernel::Constant { value } = self.kernel {
            phi.iter_mut().for_each(|p| *p = value);
            return;
        }
        let k0 = self.kernel.eval_sq(0.0);
        for i in 0..n {
            phi[i * n + i] = k0;
            let xi = &coords[i * dim..(i + 1) * dim];
            for j in (i + 1)..n {
                let xj = &coords[j * dim..(j + 1) * dim];
                let r2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                let v = self.kernel.eval_sq(r2);
                phi[i * n + j] = v;
                phi[j * n + i] = v;
            }
        }
    }

    /// Evaluates the right-hand side into `out`. `phi` is `n * n` scratch.
    pub(crate) fn rhs_into(
        &self,
        coords: &[f64],
        dim: usize,
        weights: &WeightMatrix,
        phi: &mut [f64],
        out: &mut [f64],
    ) {
        let n = coords.len() / dim;
        debug_assert_eq!(weights.n(), n);
        self.fill_phi(coords, dim, phi);
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let xi = &coords[i * dim..(i + 1) * dim];
            let oi = &mut out[i * dim..(i + 1) * dim];
            oi.iter_mut().for_each(|o| *o = 0.0);
            let row = &phi[i * n..(i + 1) * n];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let c = weights.get(i, j) * row[j];
                if c == 0.0 {
                    continue;
                }
                let xj = &coords[j * dim..(j + 1) * dim];
                for ((o, a), b) in oi.iter_mut().zip(xi).zip(xj) {
                    *o += c * (b - a);
                }
            }
            let lambda = match self.scaling {
                ScalingMode::Fixed => 1.0,
                ScalingMode::Rescaled => n as f64 / row.iter().sum::<f64>(),
            };
            let scale = lambda * inv_n;
            oi.iter_mut().for_each(|o| *o *= scale);
        }
    }
}

/// Sampled weights `M_ij` in `[0, 1]`, row-major. Diagonal entries do not
/// enter the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::HypothesisViolation {
                hypothesis: Hypothesis::H3,
                detail: format!("weight {v} outside [0, 1]"),
            });
        }
        Ok(WeightMatrix { n, values })
    }

    pub fn filled(n: usize, value: f64) -> Result<Self> {
        Self::new(n, vec![value; n * n])
    }

    pub fn ones(n: usize) -> Self {
        WeightMatrix {
            n,
            values: vec![1.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Bounds on `phi` over `[0, D(0)]` and the derived interaction bounds
/// `K_min <= lambda_i phi_ij <= K_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub phi_min: f64,
    pub phi_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub initial_diameter: f64,
    /// Worst-case gap between the sampled and the true minimum,
    /// `lipschitz_bound * grid_step / 2`.
    pub grid_tolerance: f64,
}

/// Checks the standing hypotheses on `initial` and returns the kernel bounds.
///
/// `phi_min`/`phi_max` come from a grid over `[0, D(0)]` with at least
/// [`KERNEL_GRID_INTERVALS`] intervals plus the kernel's own breakpoints.
/// The minimum is accepted only if it stays positive after subtracting the
/// Lipschitz error of the grid; a positive but uncertified minimum triggers
/// a finer grid, up to [`MAX_KERNEL_GRID_INTERVALS`].
pub fn validate_hypotheses(model: &Model, initial: &State) -> Result<KernelBounds> {
    if initial.n() < 2 {
        return Err(Error::DegenerateInput("need at least 2 agents".into()));
    }
    model.kernel.validate()?;
    let lip = model.kernel.lipschitz_bound();
    if !lip.is_finite() {
        return Err(Error::HypothesisViolation {
            hypothesis: Hypothesis::H1,
            detail: "kernel has no finite Lipschitz bound".into(),
        });
    }

    let d0 = diameter(initial);
    let mut intervals = KERNEL_GRID_INTERVALS;
    let (phi_min, phi_max, grid_tolerance) = loop {
        let (lo, hi) = kernel_extrema(&model.kernel, d0, intervals);
        let tolerance = lip * (d0 / intervals as f64) / 2.0;
        if lo - tolerance > 0.0 {
            break (lo, hi, tolerance);
        }
        // Enough intervals to bring the tolerance to half the sampled minimum.
        let needed = (lip * d0 / lo).ceil();
        if !(lo > 0.0) || needed > MAX_KERNEL_GRID_INTERVALS as f64 || needed as usize <= intervals {
            return Err(Error::HypothesisViolation {
                hypothesis: Hypothesis::H2,
                detail: format!(
                    "kernel minimum {lo} on [0, {d0}] is not certified positive (grid tolerance {tolerance})"
                ),
            });
        }
        intervals = needed as usize;
    };

    let (k_min, k_max) = match model.scaling {
        ScalingMode::Fixed => (phi_min, phi_max),
        ScalingMode::Rescaled => (phi_min / phi_max, phi_max / phi_min),
    };
    Ok(KernelBounds {
        phi_min,
        phi_max,
        k_min,
        k_max,
        initial_diameter: d0,
        grid_tolerance,
    })
}

/// Sampled `(min, max)` of the kernel over `intervals` equal steps of
/// `[0, d0]` plus the kernel's own breakpoints.
fn kernel_extrema(kernel: &InfluenceKernel, d0: f64, intervals: usize) -> (f64, f64) {
    let step = d0 / intervals as f64;
    (0..=intervals)
        .map(|k| if k == intervals { d0 } else { k as f64 * step })
        .chain(kernel.critical_points(0.0, d0))
        .map(|r| kernel.eval(r))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// The scaling factor `lambda_i` at `state`.
pub fn lambda(i: usize, state: &State, model: &Model) -> Result<f64> {
    let n = state.n();
    if i >= n {
        return Err(Error::InvalidParameter(format!(
            "agent index {i} out of range for {n} agents"
        )));
    }
    Ok(match model.scaling {
        ScalingMode::Fixed => 1.0,
        ScalingMode::Rescaled => {
            let xi = state.agent(i);
            let sum: f64 = state
                .agents()
                .map(|xj| model.kernel.eval(euclid(xi, xj)))
                .sum();
            n as f64 / sum
        }
    })
}

/// Velocities of all agents, agent-major like [`State::coords`].
pub fn rhs(state: &State, weights: &WeightMatrix, model: &Model) -> Result<Vec<f64>> {
    if state.coords().iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteState { time: state.t() });
    }
    let n = state.n();
    if weights.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.n(),
        });
    }
    let mut phi = vec![0.0; n * n];
    let mut out = vec![0.0; state.coords().len()];
    model.rhs_into(state.coords(), state.dim(), weights, &mut phi, &mut out);
    Ok(out)
}

/// Verifies `(K_min/N) sum_j M_ij <= (lambda_i/N) sum_j M_ij phi_ij <= K_max`
/// for every agent. Sums run over all `j`, diagonal included.
pub fn kernel_sandwich_check(
    state: &State,
    weights: &WeightMatrix,
    model: &Model,
    bounds: &KernelBounds,
) -> Result<CheckReport> {
    const CHECK: &str = "kernel_sandwich";
    let n = state.n();
    let nf = n as f64;
    let slack = 1e-12 * bounds.k_max.max(1.0);
    let mut margin = f64::INFINITY;
    for i in 0..n {
        let lam = lambda(i, state, model)?;
        let xi = state.agent(i);
        let (mut m_sum, mut mphi_sum) = (0.0, 0.0);
        for (j, xj) in state.agents().enumerate() {
            let m = weights.get(i, j);
            m_sum += m;
            mphi_sum += m * model.kernel.eval(euclid(xi, xj));
        }
        let lower = bounds.k_min * m_sum / nf;
        let middle = lam * mphi_sum / nf;
        let upper = bounds.k_max;
        if middle < lower - slack {
            return Err(breach(
                CHECK,
                Some(i),
                Some(state.t()),
                format!("lower bound {lower} exceeds interaction {middle}"),
                middle - lower,
            ));
        }
        if middle > upper + slack {
            return Err(breach(
                CHECK,
                Some(i),
                Some(state.t()),
                format!("interaction {middle} exceeds upper bound {upper}"),
                upper - middle,
            ));
        }
        margin = margin.min(middle - lower).min(upper - middle);
    }
    Ok(CheckReport::passed(CHECK, Some(state.t()), margin))
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
