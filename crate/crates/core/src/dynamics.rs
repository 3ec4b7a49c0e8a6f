//! Mean-field (Kolmogorov forward) evolution of sub-swarm densities.
//!
//! `x' = sum_e u_e B_e x`, integrated with fixed-step RK4 and zero-order-hold
//! controls.

use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};
use crate::graph::RegionGraph;

/// Default integration step (seconds).
pub const DEFAULT_DT: f64 = 0.01;
/// Default game horizon (seconds).
pub const DEFAULT_HORIZON: f64 = 2.5;

const SIMPLEX_TOL: f64 = 1e-9;

/// A density vector on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState(Vec<f64>);

impl DensityState {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("density state"));
        }
        if x.iter().any(|v| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "density entries must lie in [0, 1]: {x:?}"
            )));
        }
        let s: f64 = x.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!(
                "density must sum to 1, sums to {s}"
            )));
        }
        Ok(Self(x))
    }

    /// Uniform distribution over `m` regions.
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for DensityState {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-edge transition rates, checked against the graph's bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector(Vec<f64>);

impl ControlVector {
    pub fn new(g: &RegionGraph, u: Vec<f64>) -> Result<Self> {
        check_len("control vector", g.num_edges(), u.len())?;
        for (e, v) in g.edges().iter().zip(&u) {
            if !(e.u_min..=e.u_max).contains(v) {
                return Err(Error::InvalidArgument(format!(
                    "control {v} outside [{}, {}]",
                    e.u_min, e.u_max
                )));
            }
        }
        Ok(Self(u))
    }

    pub fn zeros(g: &RegionGraph) -> Self {
        Self(vec![0.0; g.num_edges()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Controls of both players held over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct JointControl {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Sampled two-player trajectory. `u1[k]`, `u2[k]` are the controls applied on
/// `[t_k, t_{k+1})`; the final sample repeats the last applied control.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x1: Vec<Vec<f64>>,
    pub x2: Vec<Vec<f64>>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_states(&self) -> (&[f64], &[f64]) {
        (
            self.x1.last().map(Vec::as_slice).unwrap_or(&[]),
            self.x2.last().map(Vec::as_slice).unwrap_or(&[]),
        )
    }

    /// CSV with columns `t, x1_1..x1_M, x2_1..x2_M, u1_1..u1_E, u2_1..u2_E`.
    pub fn to_csv(&self) -> String {
        let m = self.x1.first().map_or(0, Vec::len);
        let ne = self.u1.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        for p in ["x1", "x2"] {
            header.extend((1..=m).map(|j| format!("{p}_{j}")));
        }
        for p in ["u1", "u2"] {
            header.extend((1..=ne).map(|j| format!("{p}_{j}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in self.x1[k]
                .iter()
                .chain(&self.x2[k])
                .chain(&self.u1[k])
                .chain(&self.u2[k])
            {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `sum_e u_e B_e x` into `out` without dimension checks.
pub fn drift_into(g: &RegionGraph, x: &[f64], u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (e, &ue) in g.edges().iter().zip(u) {
        let flow = ue * x[e.source];
        out[e.source] -= flow;
        out[e.target] += flow;
    }
}

/// Velocity of the density under edge rates `u`. Entries sum to zero.
pub fn drift(g: &RegionGraph, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len("density", g.num_regions(), x.len())?;
    check_len("controls", g.num_edges(), u.len())?;
    let mut out = vec![0.0; x.len()];
    drift_into(g, x, u, &mut out);
    Ok(out)
}

/// One classical RK4 step with `u` held constant, without projection.
pub fn rk4_step_raw(g: &RegionGraph, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    drift_into(g, x, u, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    drift_into(g, &tmp, u, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    drift_into(g, &tmp, u, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    drift_into(g, &tmp, u, &mut k4);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Clips negatives and rescales onto the simplex when the state has drifted
/// off it by more than `1e-12`.
pub fn project_simplex(x: &mut [f64]) {
    let s: f64 = x.iter().sum();
    if x.iter().all(|v| *v >= 0.0) && (s - 1.0).abs() <= 1e-12 {
        return;
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
}

/// RK4 step followed by the simplex guard.
pub fn rk4_step(g: &RegionGraph, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_len("density", g.num_regions(), x.len())?;
    check_len("controls", g.num_edges(), u.len())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut y = rk4_step_raw(g, x, u, dt);
    project_simplex(&mut y);
    Ok(y)
}

/// Time grid `0, dt, 2dt, ..., T`; the last interval is shortened when `dt`
/// does not divide `T`.
pub fn time_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon and dt must be positive (T={horizon}, dt={dt})"
        )));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut t: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    t.push(horizon);
    Ok(t)
}

/// Integrates both swarms under a piecewise-constant control schedule.
///
/// `schedule[k]` is applied on `[t_k, t_{k+1})`; it must cover every step.
pub fn rollout_open_loop(
    g: &RegionGraph,
    x0_1: &[f64],
    x0_2: &[f64],
    schedule: &[JointControl],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let times = time_grid(horizon, dt)?;
    let steps = times.len() - 1;
    if schedule.len() < steps {
        return Err(Error::InvalidArgument(format!(
            "control schedule covers {} steps, horizon needs {steps}",
            schedule.len()
        )));
    }
    check_len("density", g.num_regions(), x0_1.len())?;
    check_len("density", g.num_regions(), x0_2.len())?;
    let mut traj = Trajectory {
        times: times.clone(),
        x1: vec![x0_1.to_vec()],
        x2: vec![x0_2.to_vec()],
        ..Default::default()
    };
    for k in 0..steps {
        let h = times[k + 1] - times[k];
        let c = &schedule[k];
        let a = rk4_step(g, &traj.x1[k], &c.u1, h)?;
        let b = rk4_step(g, &traj.x2[k], &c.u2, h)?;
        traj.x1.push(a);
        traj.x2.push(b);
        traj.u1.push(c.u1.clone());
        traj.u2.push(c.u2.clone());
    }
    let last = &schedule[steps - 1];
    traj.u1.push(last.u1.clone());
    traj.u2.push(last.u2.clone());
    Ok(traj)
}
