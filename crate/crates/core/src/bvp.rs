//! Open-loop Nash trajectories from the two-point boundary value problem
//!
//! ```text
//! x_i' = f(x_i, u_i),            x_i(0) = x0_i
//! l_ij' = -sum_e u_j,e B_e^T l_ij, l_i(T) = grad g_i(x1(T), x2(T))
//! u_i = argmax h_i
//! ```
//!
//! The discontinuous argmax is replaced by a sigmoid of sharpness `k`, and the
//! smoothed system is solved by damped Newton on implicit-midpoint
//! collocation residuals, continuing through an increasing `k` schedule. Every
//! Newton system is block banded and factored with [`crate::banded`].

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::dynamics::{rk4_step_raw, time_grid, Trajectory};
use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::payoff::{terminal_payoff, terminal_payoff_hessian, PayoffParams, Player};
use crate::pmp::{
    augmented_rhs_with_controls, costate_rhs_into, optimal_controls, switching_functions,
    AugmentedLayout, CostatePair,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvpConfig {
    /// Game horizon in seconds.
    pub horizon: f64,
    /// Mesh nodes, including both ends.
    pub nodes: usize,
    /// Max-norm tolerance on the discrete residual.
    pub tolerance: f64,
    /// Newton iterations allowed per sharpness level.
    pub max_iterations: usize,
    /// Increasing sigmoid sharpness levels.
    pub sharpness: Vec<f64>,
    /// Horizon stages used by [`BvpSolver::time_march`].
    pub march_stages: usize,
    /// Forward-backward sweeps in [`BvpSolver::initial_guess`].
    pub sweeps: usize,
}

impl Default for BvpConfig {
    fn default() -> Self {
        Self {
            horizon: 2.5,
            nodes: 101,
            tolerance: 1e-6,
            max_iterations: 100,
            sharpness: vec![5.0, 20.0, 80.0, 320.0],
            march_stages: 5,
            sweeps: 3,
        }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.nodes < 3 {
            return bad(format!("need at least 3 mesh nodes, got {}", self.nodes));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return bad("tolerance and iteration budget must be positive".into());
        }
        if self.sharpness.is_empty()
            || self.sharpness[0] <= 0.0
            || self.sharpness.windows(2).any(|w| w[1] <= w[0])
        {
            return bad(format!(
                "sharpness schedule must be positive and strictly increasing: {:?}",
                self.sharpness
            ));
        }
        if self.march_stages == 0 || self.sweeps == 0 {
            return bad("march stages and sweeps must be positive".into());
        }
        Ok(())
    }
}

/// Values of the stacked state `(x1, x2, l11, l12, l21, l22)` on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGuess {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl MeshGuess {
    /// Linear interpolation at time `t` (clamped to the mesh).
    pub fn sample(&self, t: f64) -> Vec<f64> {
        interpolate(&self.times, &self.values, t)
    }

    /// Resamples onto a uniform mesh with `nodes` points over `[0, horizon]`.
    pub fn resample(&self, horizon: f64, nodes: usize) -> MeshGuess {
        let times = uniform_mesh(horizon, nodes);
        let values = times.iter().map(|&t| self.sample(t)).collect();
        MeshGuess { times, values }
    }
}

/// Initial guess plus the terminal payoff estimates after each sweep.
#[derive(Debug, Clone)]
pub struct SweepGuess {
    pub mesh: MeshGuess,
    pub payoff_history: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct OpenLoopSolution {
    /// States and the (smoothed, final-sharpness) controls on the mesh.
    pub trajectory: Trajectory,
    pub costates: Vec<CostatePair>,
    pub converged: bool,
    /// Max-norm of the discrete residual at exit.
    pub residual: f64,
    pub iterations: usize,
    /// Terminal payoffs `(V_1, V_2)` of the final mesh state.
    pub payoffs: [f64; 2],
    /// Last sharpness level attempted.
    pub sharpness: f64,
    pub message: String,
}

impl OpenLoopSolution {
    pub fn mesh(&self) -> MeshGuess {
        let values = (0..self.trajectory.len())
            .map(|k| {
                [
                    self.trajectory.x1[k].clone(),
                    self.trajectory.x2[k].clone(),
                    self.costates[k].to_flat(),
                ]
                .concat()
            })
            .collect();
        MeshGuess {
            times: self.trajectory.times.clone(),
            values,
        }
    }
}

fn uniform_mesh(horizon: f64, nodes: usize) -> Vec<f64> {
    (0..nodes)
        .map(|k| horizon * k as f64 / (nodes - 1) as f64)
        .collect()
}

fn interpolate(times: &[f64], values: &[Vec<f64>], t: f64) -> Vec<f64> {
    if t <= times[0] {
        return values[0].clone();
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last].clone();
    }
    let k = times.partition_point(|&s| s <= t).saturating_sub(1).min(last - 1);
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    values[k]
        .iter()
        .zip(&values[k + 1])
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `u_e = u_min + (u_max - u_min) sigmoid(k s_e)`.
pub fn smoothed_controls(g: &RegionGraph, x: &[f64], costate: &[f64], k: f64) -> Vec<f64> {
    switching_functions(g, x, costate)
        .into_iter()
        .zip(g.edges())
        .map(|(s, e)| e.u_min + (e.u_max - e.u_min) * sigmoid(k * s))
        .collect()
}

/// Dense row-major Jacobian of the smoothed augmented right-hand side.
fn rhs_jacobian(g: &RegionGraph, y: &[f64], k: f64, jac: &mut [f64]) {
    let lay = AugmentedLayout {
        m: g.num_regions(),
    };
    let n = lay.len();
    jac.iter_mut().for_each(|v| *v = 0.0);
    for p in 0..2 {
        let xo = lay.state(p);
        let lo = lay.costate(p, p);
        for e in g.edges() {
            let (s, t) = (e.source, e.target);
            let xs = y[xo + s];
            let sw = xs * (y[lo + t] - y[lo + s]);
            let sg = sigmoid(k * sw);
            let u = e.u_min + (e.u_max - e.u_min) * sg;
            let du = (e.u_max - e.u_min) * k * sg * (1.0 - sg);
            // direct dependence on the state and the costate blocks
            jac[(xo + s) * n + xo + s] -= u;
            jac[(xo + t) * n + xo + s] += u;
            for i in 0..2 {
                let co = lay.costate(i, p);
                jac[(co + s) * n + co + t] -= u;
                jac[(co + s) * n + co + s] += u;
            }
            if du == 0.0 {
                continue;
            }
            // dependence through the control
            let grads = [
                (xo + s, du * (y[lo + t] - y[lo + s])),
                (lo + t, du * xs),
                (lo + s, -du * xs),
            ];
            let mut rows = vec![(xo + s, -xs), (xo + t, xs)];
            for i in 0..2 {
                let co = lay.costate(i, p);
                rows.push((co + s, -(y[co + t] - y[co + s])));
            }
            for &(r, cr) in &rows {
                for &(c, gc) in &grads {
                    jac[r * n + c] += cr * gc;
                }
            }
        }
    }
}

fn smoothed_rhs(g: &RegionGraph, y: &[f64], k: f64, out: &mut [f64]) {
    let lay = AugmentedLayout {
        m: g.num_regions(),
    };
    let m = lay.m;
    let u1 = smoothed_controls(g, &y[lay.state(0)..m], &y[lay.costate(0, 0)..lay.costate(0, 0) + m], k);
    let u2 = smoothed_controls(
        g,
        &y[lay.state(1)..lay.state(1) + m],
        &y[lay.costate(1, 1)..lay.costate(1, 1) + m],
        k,
    );
    augmented_rhs_with_controls(g, y, [&u1, &u2], out);
}

/// Derivative of the smoothed right-hand side with respect to the sharpness.
fn rhs_sharpness_derivative(g: &RegionGraph, y: &[f64], k: f64, out: &mut [f64]) {
    let lay = AugmentedLayout {
        m: g.num_regions(),
    };
    out.iter_mut().for_each(|v| *v = 0.0);
    for p in 0..2 {
        let xo = lay.state(p);
        let lo = lay.costate(p, p);
        for e in g.edges() {
            let (s, t) = (e.source, e.target);
            let xs = y[xo + s];
            let sw = xs * (y[lo + t] - y[lo + s]);
            let sg = sigmoid(k * sw);
            let du = (e.u_max - e.u_min) * sg * (1.0 - sg) * sw;
            out[xo + s] -= du * xs;
            out[xo + t] += du * xs;
            for i in 0..2 {
                let co = lay.costate(i, p);
                out[co + s] -= du * (y[co + t] - y[co + s]);
            }
        }
    }
}

/// Solver for one graph and payoff.
#[derive(Debug, Clone)]
pub struct BvpSolver<'a> {
    graph: &'a RegionGraph,
    params: PayoffParams,
    config: BvpConfig,
}

struct Collocation<'a> {
    g: &'a RegionGraph,
    params: PayoffParams,
    x0: [&'a [f64]; 2],
    times: Vec<f64>,
    k: f64,
}

impl Collocation<'_> {
    fn m(&self) -> usize {
        self.g.num_regions()
    }

    fn nu(&self) -> usize {
        6 * self.m()
    }

    fn size(&self) -> usize {
        self.nu() * self.times.len()
    }

    fn residual(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (m, nu, nodes) = (self.m(), self.nu(), self.times.len());
        let mut r = vec![0.0; self.size()];
        for p in 0..2 {
            for a in 0..m {
                r[p * m + a] = y[p * m + a] - self.x0[p][a];
            }
        }
        let mut mid = vec![0.0; nu];
        let mut f = vec![0.0; nu];
        for j in 0..nodes - 1 {
            let h = self.times[j + 1] - self.times[j];
            let (a, b) = (&y[j * nu..(j + 1) * nu], &y[(j + 1) * nu..(j + 2) * nu]);
            for q in 0..nu {
                mid[q] = 0.5 * (a[q] + b[q]);
            }
            smoothed_rhs(self.g, &mid, self.k, &mut f);
            let base = 2 * m + j * nu;
            for q in 0..nu {
                r[base + q] = b[q] - a[q] - h * f[q];
            }
        }
        let last = &y[(nodes - 1) * nu..];
        let target = CostatePair::terminal(&last[..m], &last[m..2 * m], &self.params)?.to_flat();
        let base = 2 * m + (nodes - 1) * nu;
        for q in 0..4 * m {
            r[base + q] = last[2 * m + q] - target[q];
        }
        Ok(r)
    }

    /// Derivative of the residual with respect to `ln k`.
    fn residual_dlogk(&self, y: &[f64]) -> Vec<f64> {
        let (m, nu, nodes) = (self.m(), self.nu(), self.times.len());
        let mut d = vec![0.0; self.size()];
        let mut mid = vec![0.0; nu];
        let mut f = vec![0.0; nu];
        for j in 0..nodes - 1 {
            let h = self.times[j + 1] - self.times[j];
            for q in 0..nu {
                mid[q] = 0.5 * (y[j * nu + q] + y[(j + 1) * nu + q]);
            }
            rhs_sharpness_derivative(self.g, &mid, self.k, &mut f);
            let base = 2 * m + j * nu;
            for q in 0..nu {
                d[base + q] = -h * self.k * f[q];
            }
        }
        d
    }

    fn jacobian(&self, y: &[f64]) -> Result<BandMatrix> {
        let (m, nu, nodes) = (self.m(), self.nu(), self.times.len());
        let n = self.size();
        let mut jm = BandMatrix::zeros(n, 2 * m + nu - 1, 2 * nu - 2 * m - 1);
        for q in 0..2 * m {
            jm.set(q, q, 1.0);
        }
        let mut mid = vec![0.0; nu];
        let mut jf = vec![0.0; nu * nu];
        for j in 0..nodes - 1 {
            let h = self.times[j + 1] - self.times[j];
            for q in 0..nu {
                mid[q] = 0.5 * (y[j * nu + q] + y[(j + 1) * nu + q]);
            }
            rhs_jacobian(self.g, &mid, self.k, &mut jf);
            let base = 2 * m + j * nu;
            for r in 0..nu {
                for c in 0..nu {
                    let v = -0.5 * h * jf[r * nu + c];
                    let eye = if r == c { 1.0 } else { 0.0 };
                    let left = v - eye;
                    let right = v + eye;
                    if left != 0.0 {
                        jm.add(base + r, j * nu + c, left);
                    }
                    if right != 0.0 {
                        jm.add(base + r, (j + 1) * nu + c, right);
                    }
                }
            }
        }
        let last0 = (nodes - 1) * nu;
        let last = &y[last0..];
        let base = 2 * m + (nodes - 1) * nu;
        for (i, player) in Player::BOTH.into_iter().enumerate() {
            let hess = terminal_payoff_hessian(player, &last[..m], &last[m..2 * m], &self.params)?;
            for a in 0..2 * m {
                let row = base + i * 2 * m + a;
                jm.add(row, last0 + 2 * m + i * 2 * m + a, 1.0);
                for b in 0..2 * m {
                    let v = hess[a * 2 * m + b];
                    if v != 0.0 {
                        jm.add(row, last0 + b, -v);
                    }
                }
            }
        }
        Ok(jm)
    }
}

const MAX_CONTINUATION_ATTEMPTS: usize = 40;
const MIN_LEVEL_RATIO: f64 = 1.05;
const MIN_SHARPNESS: f64 = 0.05;
const MAX_BISECTIONS: usize = 3;
const MAX_ARCLENGTH_STEPS: usize = 400;
const ARCLENGTH_CORRECTOR_ITERATIONS: usize = 8;
const MIN_ARCLENGTH_STEP: f64 = 1e-5;
const MAX_ARCLENGTH_STEP: f64 = 0.5;

struct NewtonOutcome {
    y: Vec<f64>,
    residual: f64,
    converged: bool,
    message: String,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> BvpSolver<'a> {
    pub fn new(graph: &'a RegionGraph, params: PayoffParams, config: BvpConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            graph,
            params,
            config,
        })
    }

    pub fn config(&self) -> &BvpConfig {
        &self.config
    }

    fn check_start(&self, x0_1: &[f64], x0_2: &[f64]) -> Result<()> {
        let m = self.graph.num_regions();
        crate::error::check_len("initial density", m, x0_1.len())?;
        crate::error::check_len("initial density", m, x0_2.len())?;
        Ok(())
    }

    /// Forward-backward sweep guess over `[0, horizon]`.
    ///
    /// States are integrated forward with bang-bang controls from the current
    /// costate guess (initially the constant terminal gradient at the start
    /// state); costates are then integrated backward from the terminal
    /// gradient at the reached state, with controls recomputed from the
    /// swept states and the costate being integrated.
    pub fn initial_guess(&self, x0_1: &[f64], x0_2: &[f64]) -> Result<SweepGuess> {
        self.check_start(x0_1, x0_2)?;
        self.sweep_guess(x0_1, x0_2, self.config.horizon, self.config.nodes, None)
    }

    fn sweep_guess(
        &self,
        x0_1: &[f64],
        x0_2: &[f64],
        horizon: f64,
        nodes: usize,
        seed: Option<&MeshGuess>,
    ) -> Result<SweepGuess> {
        let g = self.graph;
        let m = g.num_regions();
        let times = uniform_mesh(horizon, nodes);
        let terminal0 = CostatePair::terminal(x0_1, x0_2, &self.params)?.to_flat();
        // costate guess per node
        let mut lam: Vec<Vec<f64>> = match seed {
            Some(s) => times.iter().map(|&t| s.sample(t)[2 * m..].to_vec()).collect(),
            None => vec![terminal0; nodes],
        };
        let mut states: Vec<Vec<f64>> = Vec::new();
        let mut history = Vec::new();
        const SUBSTEPS: usize = 4;
        for _ in 0..self.config.sweeps {
            states.clear();
            let mut x1 = x0_1.to_vec();
            let mut x2 = x0_2.to_vec();
            states.push([x1.clone(), x2.clone()].concat());
            for j in 0..nodes - 1 {
                let h = (times[j + 1] - times[j]) / SUBSTEPS as f64;
                let u1 = optimal_controls(g, &x1, &lam[j][..m]);
                let u2 = optimal_controls(g, &x2, &lam[j][3 * m..4 * m]);
                for _ in 0..SUBSTEPS {
                    x1 = rk4_step_raw(g, &x1, &u1, h);
                    x2 = rk4_step_raw(g, &x2, &u2, h);
                }
                states.push([x1.clone(), x2.clone()].concat());
            }
            history.push([
                terminal_payoff(Player::One, &x1, &x2, &self.params)?,
                terminal_payoff(Player::Two, &x1, &x2, &self.params)?,
            ]);
            let mut l = CostatePair::terminal(&x1, &x2, &self.params)?.to_flat();
            lam[nodes - 1] = l.clone();
            for j in (0..nodes - 1).rev() {
                let h = (times[j + 1] - times[j]) / SUBSTEPS as f64;
                let xs = &states[j];
                let u1 = optimal_controls(g, &xs[..m], &l[..m]);
                let u2 = optimal_controls(g, &xs[m..], &l[3 * m..4 * m]);
                for _ in 0..SUBSTEPS {
                    l = costate_step_back(g, &l, [&u1, &u2], h);
                }
                lam[j] = l.clone();
            }
        }
        let values = states
            .iter()
            .zip(&lam)
            .map(|(s, l)| [s.clone(), l.clone()].concat())
            .collect();
        Ok(SweepGuess {
            mesh: MeshGuess { times, values },
            payoff_history: history,
        })
    }

    /// Guess from a sampled trajectory (for instance a closed-loop rollout):
    /// states are interpolated onto the mesh and costates integrated backward
    /// from the terminal gradient under the trajectory's own controls.
    pub fn guess_from_trajectory(&self, traj: &Trajectory) -> Result<MeshGuess> {
        let g = self.graph;
        let m = g.num_regions();
        if traj.len() < 2 {
            return Err(Error::InvalidArgument("trajectory needs two samples".into()));
        }
        let (xf1, xf2) = traj.final_states();
        let mut l = CostatePair::terminal(xf1, xf2, &self.params)?.to_flat();
        let n = traj.len();
        let mut lam = vec![Vec::new(); n];
        lam[n - 1] = l.clone();
        for k in (0..n - 1).rev() {
            let h = traj.times[k + 1] - traj.times[k];
            l = costate_step_back(g, &l, [&traj.u1[k], &traj.u2[k]], h);
            lam[k] = l.clone();
        }
        let values: Vec<Vec<f64>> = (0..n)
            .map(|k| [traj.x1[k].clone(), traj.x2[k].clone(), lam[k].clone()].concat())
            .collect();
        debug_assert_eq!(values[0].len(), 6 * m);
        let fine = MeshGuess {
            times: traj.times.clone(),
            values,
        };
        let horizon = *traj.times.last().unwrap_or(&self.config.horizon);
        Ok(fine.resample(horizon, self.config.nodes))
    }

    /// Damped-Newton collocation through the sharpness schedule.
    pub fn solve(&self, x0_1: &[f64], x0_2: &[f64], guess: &MeshGuess) -> Result<OpenLoopSolution> {
        self.check_start(x0_1, x0_2)?;
        let nu = 6 * self.graph.num_regions();
        if guess.values.iter().any(|v| v.len() != nu) || guess.times.len() < 2 {
            return Err(Error::InvalidArgument("guess mesh has the wrong shape".into()));
        }
        let horizon = *guess.times.last().unwrap();
        if (guess.times[0]).abs() > 1e-12 {
            return Err(Error::InvalidArgument("guess mesh must start at t = 0".into()));
        }
        let nodes = if (horizon - self.config.horizon).abs() < 1e-12 {
            self.config.nodes
        } else {
            guess.times.len()
        };
        let mesh = if guess.times.len() == nodes {
            guess.clone()
        } else {
            guess.resample(horizon, nodes)
        };
        self.solve_on_mesh(x0_1, x0_2, mesh)
    }

    fn solve_on_mesh(&self, x0_1: &[f64], x0_2: &[f64], mesh: MeshGuess) -> Result<OpenLoopSolution> {
        let mut y: Vec<f64> = mesh.values.concat();
        let mut colloc = Collocation {
            g: self.graph,
            params: self.params,
            x0: [x0_1, x0_2],
            times: mesh.times.clone(),
            k: self.config.sharpness[0],
        };
        let mut iterations = 0;
        let mut last = NewtonOutcome {
            y: y.clone(),
            residual: f64::INFINITY,
            converged: false,
            message: String::new(),
        };
        // Levels that fail are approached through geometric intermediate
        // levels; the first level may be approached from below. When those
        // keep failing the branch is followed in arclength instead, which
        // also passes folds where the solution turns back in `k`.
        let mut solved_k: Option<f64> = None;
        let mut attempts = 0;
        let final_k = *self.config.sharpness.last().unwrap();
        'levels: for &target in &self.config.sharpness {
            let mut k = target;
            let mut bisections = 0;
            loop {
                attempts += 1;
                colloc.k = k;
                let (out, its) = self.newton(&colloc, y.clone())?;
                iterations += its;
                let ok = out.converged;
                last = out;
                if ok {
                    y = last.y.clone();
                    solved_k = Some(k);
                    if k >= target {
                        break;
                    }
                    k = target;
                    continue;
                }
                if attempts >= MAX_CONTINUATION_ATTEMPTS {
                    break 'levels;
                }
                k = match solved_k {
                    Some(lo) if bisections < MAX_BISECTIONS && k / lo > MIN_LEVEL_RATIO => {
                        bisections += 1;
                        (lo * k).sqrt()
                    }
                    Some(lo) => {
                        colloc.k = lo;
                        let (out, its) = self.arclength(&mut colloc, y.clone(), final_k)?;
                        iterations += its;
                        last = out;
                        break 'levels;
                    }
                    None if k > MIN_SHARPNESS => (k / 4.0).max(MIN_SHARPNESS),
                    None => break 'levels,
                };
            }
        }
        let message = if last.converged {
            "ok".to_string()
        } else {
            last.message.clone()
        };
        self.package(last.y, &mesh.times, colloc.k, last.converged, last.residual, iterations, message)
    }

    /// Pseudo-arclength continuation in `ln k` from a converged point at
    /// `colloc.k` until `k_end` is reached, finished by Newton at `k_end`.
    fn arclength(
        &self,
        colloc: &mut Collocation,
        mut y: Vec<f64>,
        k_end: f64,
    ) -> Result<(NewtonOutcome, usize)> {
        let n = y.len();
        let wy = 1.0 / colloc.times.len() as f64;
        let p_end = k_end.ln();
        let mut p = colloc.k.ln();
        let mut iterations = 0;
        let fail = |y: Vec<f64>, residual, msg: String, iterations| {
            Ok((
                NewtonOutcome {
                    y,
                    residual,
                    converged: false,
                    message: msg,
                },
                iterations,
            ))
        };
        // initial tangent from J w = dR/dp
        let lu = match colloc.jacobian(&y)?.factor() {
            Ok(lu) => lu,
            Err(e) => return fail(y, f64::NAN, format!("arclength start: {e}"), iterations),
        };
        let mut w = colloc.residual_dlogk(&y);
        lu.solve_in_place(&mut w);
        let mut ty: Vec<f64> = w.iter().map(|v| -v).collect();
        let mut tp = 1.0;
        let norm = (wy * ty.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt();
        ty.iter_mut().for_each(|v| *v /= norm);
        tp /= norm;

        let mut ds = 0.05;
        let mut residual = 0.0;
        for _ in 0..MAX_ARCLENGTH_STEPS {
            if tp > 0.0 && p + ds * tp >= p_end {
                let shift = (p_end - p) / tp;
                let guess: Vec<f64> = y.iter().zip(&ty).map(|(a, t)| a + shift * t).collect();
                colloc.k = k_end;
                let (out, its) = self.newton(colloc, guess)?;
                iterations += its;
                if out.converged {
                    return Ok((out, iterations));
                }
                ds = 0.5 * shift.min(ds);
                if ds < MIN_ARCLENGTH_STEP {
                    return fail(y, out.residual, format!("arclength: final level failed ({})", out.message), iterations);
                }
                continue;
            }
            // predictor
            let yp: Vec<f64> = y.iter().zip(&ty).map(|(a, t)| a + ds * t).collect();
            let pp = p + ds * tp;
            let (mut yc, mut pc) = (yp.clone(), pp);
            let mut ok = false;
            let mut its = 0;
            while its < ARCLENGTH_CORRECTOR_ITERATIONS {
                its += 1;
                iterations += 1;
                colloc.k = pc.exp();
                let r = colloc.residual(&yc)?;
                residual = max_abs(&r);
                let a = wy * (0..n).map(|q| ty[q] * (yc[q] - yp[q])).sum::<f64>() + tp * (pc - pp);
                if !residual.is_finite() {
                    break;
                }
                if residual < self.config.tolerance && a.abs() < 1e-10 {
                    ok = true;
                    break;
                }
                let lu = match colloc.jacobian(&yc)?.factor() {
                    Ok(lu) => lu,
                    Err(_) => break,
                };
                let mut v = r;
                lu.solve_in_place(&mut v);
                let mut w = colloc.residual_dlogk(&yc);
                lu.solve_in_place(&mut w);
                let tv: f64 = wy * (0..n).map(|q| ty[q] * v[q]).sum::<f64>();
                let tw: f64 = wy * (0..n).map(|q| ty[q] * w[q]).sum::<f64>();
                let dp = (-a + tv) / (tp - tw);
                if !dp.is_finite() {
                    break;
                }
                for q in 0..n {
                    yc[q] -= v[q] + w[q] * dp;
                }
                pc += dp;
            }
            if !ok {
                ds *= 0.5;
                if ds < MIN_ARCLENGTH_STEP {
                    colloc.k = p.exp();
                    return fail(y, residual, format!("arclength stalled at k={:.3}", p.exp()), iterations);
                }
                continue;
            }
            // secant tangent
            let mut ny: Vec<f64> = (0..n).map(|q| yc[q] - y[q]).collect();
            let mut np = pc - p;
            let norm = (wy * ny.iter().map(|v| v * v).sum::<f64>() + np * np).sqrt();
            ny.iter_mut().for_each(|v| *v /= norm);
            np /= norm;
            ty = ny;
            tp = np;
            y = yc;
            p = pc;
            if p < MIN_SHARPNESS.ln() {
                return fail(y, residual, "arclength branch turned back to k -> 0".into(), iterations);
            }
            if its <= 3 {
                ds = (ds * 1.5).min(MAX_ARCLENGTH_STEP);
            }
        }
        colloc.k = p.exp();
        fail(y, residual, format!("arclength step budget exhausted at k={:.3}", p.exp()), iterations)
    }

    /// Damped Newton at a fixed sharpness.
    fn newton(&self, colloc: &Collocation, mut y: Vec<f64>) -> Result<(NewtonOutcome, usize)> {
        let k = colloc.k;
        let mut r = colloc.residual(&y)?;
        let mut residual = max_abs(&r);
        let mut iterations = 0;
        let fail = |y, residual, message| NewtonOutcome {
            y,
            residual,
            converged: false,
            message,
        };
        while residual >= self.config.tolerance {
            if iterations == self.config.max_iterations {
                let msg = format!("k={k}: iteration budget exhausted at residual {residual:.3e}");
                return Ok((fail(y, residual, msg), iterations));
            }
            iterations += 1;
            let lu = match colloc.jacobian(&y)?.factor() {
                Ok(lu) => lu,
                Err(e) => return Ok((fail(y, residual, format!("k={k}: {e}")), iterations)),
            };
            let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
            lu.solve_in_place(&mut step);
            let n0 = norm2(&r);
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda >= 1.0 / 1024.0 {
                let trial: Vec<f64> = y.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
                let rt = colloc.residual(&trial)?;
                let nt = norm2(&rt);
                if nt.is_finite() && nt <= (1.0 - 1e-4 * lambda) * n0 {
                    y = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                let msg = format!("k={k}: line search failed at residual {residual:.3e}");
                return Ok((fail(y, residual, msg), iterations));
            }
            residual = max_abs(&r);
        }
        let out = NewtonOutcome {
            y,
            residual,
            converged: true,
            message: String::new(),
        };
        Ok((out, iterations))
    }

    #[allow(clippy::too_many_arguments)]
    fn package(
        &self,
        y: Vec<f64>,
        times: &[f64],
        k: f64,
        converged: bool,
        residual: f64,
        iterations: usize,
        message: String,
    ) -> Result<OpenLoopSolution> {
        let g = self.graph;
        let m = g.num_regions();
        let nu = 6 * m;
        let mut traj = Trajectory {
            times: times.to_vec(),
            ..Default::default()
        };
        let mut costates = Vec::with_capacity(times.len());
        for node in y.chunks(nu) {
            let (x1, x2) = (&node[..m], &node[m..2 * m]);
            let c = CostatePair::from_flat(m, &node[2 * m..]);
            traj.u1.push(smoothed_controls(g, x1, c.own(Player::One), k));
            traj.u2.push(smoothed_controls(g, x2, c.own(Player::Two), k));
            traj.x1.push(x1.to_vec());
            traj.x2.push(x2.to_vec());
            costates.push(c);
        }
        let (xf1, xf2) = traj.final_states();
        let finite = y.iter().all(|v| v.is_finite());
        let payoffs = if finite {
            [
                terminal_payoff(Player::One, xf1, xf2, &self.params)?,
                terminal_payoff(Player::Two, xf1, xf2, &self.params)?,
            ]
        } else {
            [f64::NAN; 2]
        };
        Ok(OpenLoopSolution {
            trajectory: traj,
            costates,
            converged: converged && finite,
            residual,
            iterations,
            payoffs,
            sharpness: k,
            message,
        })
    }

    /// Solves on horizons `T/S, 2T/S, ..., T`, each stage warm-started from
    /// the previous solution extended by a sweep.
    pub fn time_march(&self, x0_1: &[f64], x0_2: &[f64]) -> Result<OpenLoopSolution> {
        self.check_start(x0_1, x0_2)?;
        let stages = self.config.march_stages;
        let big_t = self.config.horizon;
        let mut previous: Option<OpenLoopSolution> = None;
        for s in 1..=stages {
            let horizon = big_t * s as f64 / stages as f64;
            let nodes = if s == stages {
                self.config.nodes
            } else {
                (((self.config.nodes - 1) * s) as f64 / stages as f64).round().max(2.0) as usize + 1
            };
            let guess = match &previous {
                None => self.sweep_guess(x0_1, x0_2, horizon, nodes, None)?.mesh,
                Some(prev) => {
                    let seed = extend_mesh(self.graph, &prev.mesh(), horizon);
                    self.sweep_guess(x0_1, x0_2, horizon, nodes, Some(&seed))?.mesh
                }
            };
            let sol = self.solve_on_mesh(x0_1, x0_2, guess)?;
            if !sol.converged && s < stages {
                return Ok(OpenLoopSolution {
                    message: format!("stage {s}/{stages}: {}", sol.message),
                    ..sol
                });
            }
            previous = Some(sol);
        }
        Ok(previous.expect("at least one stage"))
    }
}

/// One backward RK4 step of the costate blocks over `h` with fixed controls.
fn costate_step_back(g: &RegionGraph, l: &[f64], controls: [&[f64]; 2], h: f64) -> Vec<f64> {
    let m = g.num_regions();
    let rhs = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; 4 * m];
        for i in 0..2 {
            for j in 0..2 {
                let o = (2 * i + j) * m;
                costate_rhs_into(g, controls[j], &v[o..o + m], &mut out[o..o + m]);
            }
        }
        out
    };
    // integrate l' = rhs(l) from t to t - h
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = rhs(l);
    let k2 = rhs(&axpy(l, -0.5 * h, &k1));
    let k3 = rhs(&axpy(l, -0.5 * h, &k2));
    let k4 = rhs(&axpy(l, -h, &k3));
    (0..l.len())
        .map(|q| l[q] - h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]))
        .collect()
}

/// Extends a solution mesh to a longer horizon: states continue under the
/// bang-bang controls of the final costates, costates are held.
fn extend_mesh(g: &RegionGraph, mesh: &MeshGuess, horizon: f64) -> MeshGuess {
    let m = g.num_regions();
    let t_end = *mesh.times.last().unwrap();
    let mut times = mesh.times.clone();
    let mut values = mesh.values.clone();
    let last = values.last().unwrap().clone();
    let (mut x1, mut x2) = (last[..m].to_vec(), last[m..2 * m].to_vec());
    let lam = last[2 * m..].to_vec();
    let u1 = optimal_controls(g, &x1, &lam[..m]);
    let u2 = optimal_controls(g, &x2, &lam[3 * m..4 * m]);
    let dt = (mesh.times[1] - mesh.times[0]).max(1e-3);
    if let Ok(grid) = time_grid(horizon - t_end, dt) {
        for w in grid.windows(2) {
            let h = w[1] - w[0];
            x1 = rk4_step_raw(g, &x1, &u1, h);
            x2 = rk4_step_raw(g, &x2, &u2, h);
            times.push(t_end + w[1]);
            values.push([x1.clone(), x2.clone(), lam.clone()].concat());
        }
    }
    MeshGuess { times, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> RegionGraph {
        RegionGraph::builtin("two_regions").unwrap()
    }

    #[test]
    fn smoothed_control_examples() {
        let g = two();
        // s = 0 for a constant costate
        assert_eq!(smoothed_controls(&g, &[0.5, 0.5], &[1.0, 1.0], 5.0), vec![0.5, 0.5]);
        // s_(1,2) = x_1 (l_2 - l_1) = 0.1
        let u = smoothed_controls(&g, &[1.0, 0.0], &[0.0, 0.1], 320.0);
        assert!((u[0] - 1.0).abs() < 1e-13);
        let mut prev = -1.0;
        for i in 0..50 {
            let l2 = -1.0 + 0.04 * i as f64;
            let u = smoothed_controls(&g, &[0.7, 0.3], &[0.0, l2], 20.0)[0];
            assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn rhs_jacobian_matches_finite_differences() {
        let g = RegionGraph::builtin("four_regions").unwrap();
        let n = 24;
        let y: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 / 11.0) - 0.3).collect();
        for &k in &[5.0, 80.0] {
            let mut jac = vec![0.0; n * n];
            rhs_jacobian(&g, &y, k, &mut jac);
            for c in 0..n {
                let h = 1e-7;
                let mut p = y.clone();
                let mut q = y.clone();
                p[c] += h;
                q[c] -= h;
                let mut fp = vec![0.0; n];
                let mut fq = vec![0.0; n];
                smoothed_rhs(&g, &p, k, &mut fp);
                smoothed_rhs(&g, &q, k, &mut fq);
                for r in 0..n {
                    let fd = (fp[r] - fq[r]) / (2.0 * h);
                    assert!((jac[r * n + c] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "k={k} ({r},{c}) {} vs {fd}", jac[r * n + c]);
                }
            }
        }
    }

    #[test]
    fn collocation_jacobian_matches_finite_differences() {
        let g = two();
        let params = PayoffParams::default();
        let solver = BvpSolver::new(&g, params, BvpConfig { nodes: 6, ..Default::default() }).unwrap();
        let guess = solver.initial_guess(&[0.7, 0.3], &[0.4, 0.6]).unwrap().mesh;
        let colloc = Collocation {
            g: &g,
            params,
            x0: [&[0.7, 0.3], &[0.4, 0.6]],
            times: guess.times.clone(),
            k: 20.0,
        };
        let y: Vec<f64> = guess.values.concat();
        let jm = colloc.jacobian(&y).unwrap();
        let n = y.len();
        for c in 0..n {
            let h = 1e-7;
            let mut p = y.clone();
            let mut q = y.clone();
            p[c] += h;
            q[c] -= h;
            let rp = colloc.residual(&p).unwrap();
            let rq = colloc.residual(&q).unwrap();
            for r in 0..n {
                let fd = (rp[r] - rq[r]) / (2.0 * h);
                assert!((jm.get(r, c) - fd).abs() < 1e-5 * (1.0 + fd.abs()), "({r},{c})");
            }
        }
    }

    #[test]
    fn symmetric_start_converges_with_equal_values() {
        let g = two();
        let solver = BvpSolver::new(&g, PayoffParams::default(), BvpConfig::default()).unwrap();
        let x = [0.5, 0.5];
        let guess = solver.initial_guess(&x, &x).unwrap();
        let sol = solver.solve(&x, &x, &guess.mesh).unwrap();
        assert!(sol.converged, "{}", sol.message);
        assert!((sol.payoffs[0] - sol.payoffs[1]).abs() < 1e-3);
    }

    #[test]
    fn two_region_natural_equilibrium() {
        let g = two();
        let solver = BvpSolver::new(&g, PayoffParams::default(), BvpConfig::default()).unwrap();
        let (x1, x2) = ([0.7, 0.3], [0.4, 0.6]);
        let guess = solver.initial_guess(&x1, &x2).unwrap();
        let sol = solver.solve(&x1, &x2, &guess.mesh).unwrap();
        assert!(sol.converged, "{}", sol.message);
        // both swarms push away from each other at full rate
        let d = 1.0 - (-2.5f64).exp() * (1.0 - 0.3);
        let expected = d * d.tanh();
        assert!((sol.payoffs[0] - expected).abs() < 5e-3, "{:?} vs {expected}", sol.payoffs);
        for x in sol.trajectory.x1.iter().chain(&sol.trajectory.x2) {
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(x.iter().all(|v| *v > -1e-6));
        }
    }

    #[test]
    fn guess_stays_on_simplex_and_sweeps_settle() {
        let g = two();
        let solver = BvpSolver::new(&g, PayoffParams::default(), BvpConfig::default()).unwrap();
        let guess = solver.initial_guess(&[0.2, 0.8], &[0.9, 0.1]).unwrap();
        for v in &guess.mesh.values {
            assert!((v[0] + v[1] - 1.0).abs() < 1e-9 && (v[2] + v[3] - 1.0).abs() < 1e-9);
            assert!(v[..4].iter().all(|x| *x >= -1e-12));
        }
        let h = &guess.payoff_history;
        assert_eq!(h.len(), 3);
        for p in 0..2 {
            assert!((h[2][p] - h[1][p]).abs() <= 0.1 * h[1][p].abs().max(1e-12));
        }
        let sym = solver.initial_guess(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        let last = sym.payoff_history.last().unwrap();
        assert!((last[0] - last[1]).abs() < 1e-12);
    }

    #[test]
    fn single_stage_march_equals_solve() {
        let g = two();
        let cfg = BvpConfig {
            march_stages: 1,
            ..Default::default()
        };
        let solver = BvpSolver::new(&g, PayoffParams::default(), cfg).unwrap();
        let (x1, x2) = ([0.6, 0.4], [0.35, 0.65]);
        let a = solver.time_march(&x1, &x2).unwrap();
        let b = solver
            .solve(&x1, &x2, &solver.initial_guess(&x1, &x2).unwrap().mesh)
            .unwrap();
        assert_eq!(a.payoffs, b.payoffs);
        assert_eq!(a.converged, b.converged);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BvpConfig::default();
        cfg.sharpness = vec![5.0, 5.0];
        assert!(cfg.validate().is_err());
        cfg.sharpness = vec![];
        assert!(cfg.validate().is_err());
        assert!(BvpConfig::default().validate().is_ok());
    }
}
