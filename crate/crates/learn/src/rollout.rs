//! Closed-loop simulation with a value network as controller, and the
//! comparison of its payoffs against open-loop BVP solutions.

use std::fmt::Write as _;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmgame_core::bvp::{BvpConfig, BvpSolver, OpenLoopSolution};
use swarmgame_core::dynamics::{rk4_step, time_grid, Trajectory};
use swarmgame_neural::Mlp;

use crate::error::Result;
use crate::pinn::ValueProblem;
use crate::sampling::sample_simplex;

/// Simulation step used for closed-loop rollouts.
pub const ROLLOUT_DT: f64 = 0.01;

pub type Start = (Vec<f64>, Vec<f64>);

/// Equilibrium controls of both players at one state.
pub fn closed_loop_policy(
    problem: &ValueProblem,
    net: &Mlp,
    x1: &[f64],
    x2: &[f64],
    tau: f64,
) -> Result<[Vec<f64>; 2]> {
    let jac = net.input_gradient(&problem.coords.encode(x1, x2, tau))?;
    let g1 = jac.row(0).to_vec();
    let g2 = jac.row(1).to_vec();
    Ok(problem.controls(x1, x2, &g1, &g2))
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub payoffs: [f64; 2],
}

/// Rolls every start forward together, recomputing the feedback controls
/// from one batched Jacobian per step.
pub fn simulate_batch(problem: &ValueProblem, net: &Mlp, starts: &[Start], dt: f64) -> Result<Vec<ClosedLoopRun>> {
    let times = time_grid(problem.horizon, dt)?;
    let g = &problem.graph;
    let mut runs: Vec<Trajectory> = starts
        .iter()
        .map(|(a, b)| Trajectory {
            times: times.clone(),
            x1: vec![a.clone()],
            x2: vec![b.clone()],
            ..Default::default()
        })
        .collect();
    let d = problem.coords.input_dim();
    for k in 0..times.len() - 1 {
        let tau = problem.horizon - times[k];
        let mut z = Array2::zeros((starts.len(), d));
        for (i, tr) in runs.iter().enumerate() {
            let mut row = z.row_mut(i);
            problem.coords.encode_into(&tr.x1[k], &tr.x2[k], tau, row.as_slice_mut().unwrap());
        }
        let (_, jac) = net.output_and_jacobian(z.view())?;
        let h = times[k + 1] - times[k];
        for (i, tr) in runs.iter_mut().enumerate() {
            let g1 = jac.slice(s![i, 0, ..]).to_vec();
            let g2 = jac.slice(s![i, 1, ..]).to_vec();
            let [u1, u2] = problem.controls(&tr.x1[k], &tr.x2[k], &g1, &g2);
            let a = rk4_step(g, &tr.x1[k], &u1, h)?;
            let b = rk4_step(g, &tr.x2[k], &u2, h)?;
            tr.x1.push(a);
            tr.x2.push(b);
            tr.u1.push(u1);
            tr.u2.push(u2);
        }
    }
    runs.into_iter()
        .map(|mut tr| {
            if let (Some(a), Some(b)) = (tr.u1.last().cloned(), tr.u2.last().cloned()) {
                tr.u1.push(a);
                tr.u2.push(b);
            }
            let (x1, x2) = tr.final_states();
            let payoffs = problem.terminal_values(x1, x2)?;
            Ok(ClosedLoopRun { trajectory: tr, payoffs })
        })
        .collect()
}

pub fn simulate_closed_loop(
    problem: &ValueProblem,
    net: &Mlp,
    x0_1: &[f64],
    x0_2: &[f64],
    dt: f64,
) -> Result<ClosedLoopRun> {
    let start = (x0_1.to_vec(), x0_2.to_vec());
    Ok(simulate_batch(problem, net, std::slice::from_ref(&start), dt)?.remove(0))
}

/// Which initial guess produced the reported BVP solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessSource {
    ClosedLoop,
    Sweep,
    TimeMarch,
    /// Every guess failed; the row carries the closed-loop attempt.
    None,
}

impl GuessSource {
    pub fn label(self) -> &'static str {
        match self {
            GuessSource::ClosedLoop => "closed_loop",
            GuessSource::Sweep => "sweep",
            GuessSource::TimeMarch => "time_march",
            GuessSource::None => "none",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub network: [f64; 2],
    pub bvp: [f64; 2],
    pub converged: bool,
    pub guess: GuessSource,
    pub final_network: (Vec<f64>, Vec<f64>),
    pub final_bvp: (Vec<f64>, Vec<f64>),
}

impl ComparisonRow {
    pub fn difference(&self) -> [f64; 2] {
        [self.network[0] - self.bvp[0], self.network[1] - self.bvp[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSummary {
    pub starts: usize,
    pub converged: usize,
    /// Mean BVP payoffs over converged starts.
    pub mean_bvp: [f64; 2],
    /// Mean closed-loop payoffs over converged starts.
    pub mean_network: [f64; 2],
    /// Mean of network minus BVP payoff over converged starts.
    pub mean_difference: [f64; 2],
    /// Mean closed-loop payoffs over all starts.
    pub mean_network_all: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
}

impl Comparison {
    fn from_rows(rows: Vec<ComparisonRow>) -> Self {
        let conv: Vec<&ComparisonRow> = rows.iter().filter(|r| r.converged).collect();
        let mean = |f: &dyn Fn(&ComparisonRow) -> [f64; 2], set: &[&ComparisonRow]| {
            let n = set.len().max(1) as f64;
            let mut m = [0.0; 2];
            for r in set {
                let v = f(r);
                m[0] += v[0] / n;
                m[1] += v[1] / n;
            }
            m
        };
        let all: Vec<&ComparisonRow> = rows.iter().collect();
        let summary = ComparisonSummary {
            starts: rows.len(),
            converged: conv.len(),
            mean_bvp: mean(&|r| r.bvp, &conv),
            mean_network: mean(&|r| r.network, &conv),
            mean_difference: mean(&|r| r.difference(), &conv),
            mean_network_all: mean(&|r| r.network, &all),
        };
        Self { rows, summary }
    }

    pub fn to_csv(&self) -> String {
        let m = self.rows.first().map_or(0, |r| r.x1.len());
        let mut s = String::new();
        let mut head = vec!["start".to_string()];
        for p in 1..=2 {
            head.extend((1..=m).map(|j| format!("x{p}_{j}")));
        }
        head.extend(
            ["v1_network", "v2_network", "v1_bvp", "v2_bvp", "converged", "guess"]
                .iter()
                .map(|h| h.to_string()),
        );
        for (tag, p) in [("net", 1), ("net", 2), ("bvp", 1), ("bvp", 2)] {
            head.extend((1..=m).map(|j| format!("final_{tag}_x{p}_{j}")));
        }
        let _ = writeln!(s, "{}", head.join(","));
        for (i, r) in self.rows.iter().enumerate() {
            let mut cells = vec![i.to_string()];
            cells.extend(r.x1.iter().chain(&r.x2).map(|v| format!("{v:.9}")));
            cells.extend(r.network.iter().chain(&r.bvp).map(|v| format!("{v:.9}")));
            cells.push((r.converged as u8).to_string());
            cells.push(r.guess.label().to_string());
            for v in [&r.final_network.0, &r.final_network.1, &r.final_bvp.0, &r.final_bvp.1] {
                cells.extend(v.iter().map(|x| format!("{x:.9}")));
            }
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Summary block with the columns of a payoff comparison table.
    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        format!(
            "starts {}\nconverged {}\nmean_bvp_v1 {:.6}\nmean_bvp_v2 {:.6}\nmean_network_v1 {:.6}\nmean_network_v2 {:.6}\nmean_diff_v1 {:.6}\nmean_diff_v2 {:.6}\n",
            s.starts,
            s.converged,
            s.mean_bvp[0],
            s.mean_bvp[1],
            s.mean_network[0],
            s.mean_network[1],
            s.mean_difference[0],
            s.mean_difference[1]
        )
    }
}

fn finals(sol: &OpenLoopSolution) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = sol.trajectory.final_states();
    (a.to_vec(), b.to_vec())
}

/// Solves the BVP from each closed-loop start. The closed-loop trajectory
/// is the first guess; when it does not converge, the cold sweep guess and
/// then time marching are tried.
pub fn compare_pinn_bvp(
    problem: &ValueProblem,
    net: &Mlp,
    starts: &[Start],
    bvp: &BvpConfig,
    dt: f64,
) -> Result<Comparison> {
    let runs = simulate_batch(problem, net, starts, dt)?;
    compare_runs(problem, &runs, bvp)
}

pub fn compare_runs(problem: &ValueProblem, runs: &[ClosedLoopRun], bvp: &BvpConfig) -> Result<Comparison> {
    let cfg = BvpConfig {
        horizon: problem.horizon,
        ..bvp.clone()
    };
    let solver = BvpSolver::new(&problem.graph, problem.params, cfg)?;
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let tr = &run.trajectory;
        let (x1, x2) = (tr.x1[0].clone(), tr.x2[0].clone());
        let warm = solver.guess_from_trajectory(tr)?;
        let mut sol = solver.solve(&x1, &x2, &warm)?;
        let mut guess = GuessSource::ClosedLoop;
        if !sol.converged {
            let cold = solver.initial_guess(&x1, &x2)?;
            let alt = solver.solve(&x1, &x2, &cold.mesh)?;
            if alt.converged {
                sol = alt;
                guess = GuessSource::Sweep;
            } else {
                let alt = solver.time_march(&x1, &x2)?;
                if alt.converged {
                    sol = alt;
                    guess = GuessSource::TimeMarch;
                } else {
                    guess = GuessSource::None;
                }
            }
        }
        let (f1, f2) = tr.final_states();
        rows.push(ComparisonRow {
            x1,
            x2,
            network: run.payoffs,
            bvp: sol.payoffs,
            converged: sol.converged,
            guess,
            final_network: (f1.to_vec(), f2.to_vec()),
            final_bvp: finals(&sol),
        });
    }
    Ok(Comparison::from_rows(rows))
}

/// Absolute payoff errors per start; `None` where the BVP did not converge.
pub fn value_error_histogram(cmp: &Comparison) -> Vec<Option<[f64; 2]>> {
    cmp.rows
        .iter()
        .map(|r| {
            r.converged.then(|| {
                let d = r.difference();
                [d[0].abs(), d[1].abs()]
            })
        })
        .collect()
}

pub fn errors_to_csv(errors: &[Option<[f64; 2]>]) -> String {
    let mut s = String::from("start,abs_err_v1,abs_err_v2\n");
    for (i, e) in errors.iter().enumerate() {
        match e {
            Some([a, b]) => {
                let _ = writeln!(s, "{i},{a:.9},{b:.9}");
            }
            None => {
                let _ = writeln!(s, "{i},,");
            }
        }
    }
    s
}

/// Uniform random starts for both players.
pub fn uniform_starts(regions: usize, count: usize, seed: u64) -> Vec<Start> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_simplex(regions, count, &mut rng);
    let b = sample_simplex(regions, count, &mut rng);
    a.into_iter().zip(b).collect()
}

/// Four fixed starts per built-in graph used for the qualitative figures.
pub fn showcase_starts(regions: usize) -> Vec<Start> {
    let two = |a: f64, b: f64| (vec![a, 1.0 - a], vec![b, 1.0 - b]);
    match regions {
        2 => vec![two(0.8, 0.2), two(0.6, 0.3), two(0.3, 0.9), two(0.2, 0.5)],
        4 => vec![
            (vec![0.4, 0.3, 0.2, 0.1], vec![0.1, 0.2, 0.3, 0.4]),
            (vec![0.25, 0.25, 0.25, 0.25], vec![0.1, 0.6, 0.2, 0.1]),
            (vec![0.1, 0.1, 0.7, 0.1], vec![0.3, 0.3, 0.2, 0.2]),
            (vec![0.5, 0.1, 0.1, 0.3], vec![0.2, 0.1, 0.4, 0.3]),
        ],
        m => uniform_starts(m, 4, 2024),
    }
}
