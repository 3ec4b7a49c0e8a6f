//! Nash deep Q-learning baseline for the 2-region game.
//!
//! Each agent owns a Q-network over joint actions; the bootstrap target is
//! the agent's expected payoff at an equilibrium of the stage game built
//! from both target networks. Actions are the pairs of edge controls
//! `(u_12, u_21) in {0,1}^2`, held for one decision epoch.

use std::collections::VecDeque;
use std::fmt::Write as _;

use ndarray::{Array2, Array3, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swarmgame_core::bimatrix::{self, BimatrixGame, MixedProfile};
use swarmgame_core::dynamics::rk4_step;
use swarmgame_core::payoff::{terminal_payoff, PayoffParams, Player};
use swarmgame_core::RegionGraph;
use swarmgame_neural::{Adam, LossSeeds, Mlp, NeuralError};

use crate::error::{LearnError, Result};
use crate::rollout::Start;

pub const ACTIONS: usize = 4;
pub const STATE_DIM: usize = 3;

/// Edge controls `(u_12, u_21)` of an action index.
pub fn decode_action(a: usize) -> [f64; 2] {
    assert!(a < ACTIONS, "action index {a} out of range");
    [(a >> 1) as f64, (a & 1) as f64]
}

pub fn encode_action(u: [f64; 2]) -> usize {
    ((u[0] > 0.5) as usize) << 1 | (u[1] > 0.5) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub episodes: usize,
    pub steps: usize,
    pub minibatch: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays.
    pub epsilon_decay_fraction: f64,
    pub discount: f64,
    pub soft_update: f64,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub horizon: f64,
    pub alpha: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 2_000,
            steps: 10,
            minibatch: 32,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            discount: 0.99,
            soft_update: 0.01,
            learning_rate: 1e-3,
            buffer_capacity: 10_000,
            horizon: 2.5,
            alpha: 1.0,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if self.episodes == 0 || self.steps == 0 || self.minibatch == 0 || self.buffer_capacity == 0 {
            return bad("episodes, steps, minibatch and buffer_capacity must be positive");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.soft_update > 0.0 && self.soft_update <= 1.0) {
            return bad("soft_update must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("exploration rates must lie in [0, 1]");
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon_decay_fraction must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.horizon > 0.0 && self.alpha > 0.0) {
            return bad("learning_rate, horizon and alpha must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        Ok(())
    }

    pub fn step_duration(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.episodes as f64 * self.epsilon_decay_fraction).max(1.0);
        let f = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![STATE_DIM];
        w.extend(&self.hidden);
        w.push(ACTIONS * ACTIONS);
        w
    }
}

/// Joint state: first-region densities of both swarms and the epoch index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub x1: f64,
    pub x2: f64,
    pub step: usize,
}

impl JointState {
    pub fn features(&self, steps: usize) -> [f64; STATE_DIM] {
        [self.x1, self.x2, self.step as f64 / steps as f64]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: JointState,
    pub actions: [usize; 2],
    pub rewards: [f64; 2],
    pub next: JointState,
    pub terminal: bool,
}

/// Discretized 2-region game.
#[derive(Debug, Clone)]
pub struct Env {
    graph: RegionGraph,
    params: PayoffParams,
    steps: usize,
    dt: f64,
}

impl Env {
    pub fn new(cfg: &DqnConfig) -> Result<Self> {
        Ok(Self {
            graph: RegionGraph::builtin("two_regions")?,
            params: PayoffParams::new(cfg.alpha)?,
            steps: cfg.steps,
            dt: cfg.step_duration(),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One RK4 step of length `T / N` under the decoded controls; payoffs
    /// are paid only on the last step.
    pub fn step(&self, s: JointState, a1: usize, a2: usize) -> Result<(JointState, [f64; 2], bool)> {
        let u1 = decode_action(a1);
        let u2 = decode_action(a2);
        let x1 = rk4_step(&self.graph, &[s.x1, 1.0 - s.x1], &u1, self.dt)?;
        let x2 = rk4_step(&self.graph, &[s.x2, 1.0 - s.x2], &u2, self.dt)?;
        let next = JointState {
            x1: x1[0],
            x2: x2[0],
            step: s.step + 1,
        };
        let terminal = next.step >= self.steps;
        let rewards = if terminal {
            [
                terminal_payoff(Player::One, &x1, &x2, &self.params)?,
                terminal_payoff(Player::Two, &x1, &x2, &self.params)?,
            ]
        } else {
            [0.0, 0.0]
        };
        Ok((next, rewards, terminal))
    }
}

/// Q-network: 16 outputs read as a 4x4 table over (own action, other action).
#[derive(Debug, Clone, PartialEq)]
pub struct QNet(Mlp);

impl QNet {
    pub fn init(seed: u64, widths: &[usize]) -> Result<Self> {
        Self::from_mlp(Mlp::init(seed, widths)?)
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.output_dim() != ACTIONS * ACTIONS || mlp.input_dim() != STATE_DIM {
            return Err(LearnError::Config(format!(
                "Q-network must map {STATE_DIM} inputs to {} outputs, got widths {:?}",
                ACTIONS * ACTIONS,
                mlp.widths()
            )));
        }
        Ok(Self(mlp))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn table(&self, features: &[f64]) -> Result<[[f64; ACTIONS]; ACTIONS]> {
        Ok(to_table(&self.0.forward(features)?))
    }

    fn tables(&self, z: ArrayView2<f64>) -> Result<Vec<[[f64; ACTIONS]; ACTIONS]>> {
        let y = self.0.forward_batch(z)?;
        Ok(y.rows().into_iter().map(|r| to_table(&r.to_vec())).collect())
    }

    /// `target <- tau * self + (1 - tau) * target`.
    pub fn soft_update_into(&self, target: &mut QNet, tau: f64) {
        for (t, s) in target.0.params_mut().iter_mut().zip(self.0.params()) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

fn to_table(v: &[f64]) -> [[f64; ACTIONS]; ACTIONS] {
    let mut t = [[0.0; ACTIONS]; ACTIONS];
    for (i, row) in t.iter_mut().enumerate() {
        row.copy_from_slice(&v[i * ACTIONS..(i + 1) * ACTIONS]);
    }
    t
}

/// Bimatrix game with agent 1 as row player. Both tables are indexed
/// `(row action, column action)`.
pub fn stage_game(q1: &[[f64; ACTIONS]; ACTIONS], q2: &[[f64; ACTIONS]; ACTIONS]) -> Result<BimatrixGame> {
    let rows = |q: &[[f64; ACTIONS]; ACTIONS]| q.iter().map(|r| r.to_vec()).collect();
    Ok(BimatrixGame::new(rows(q1), rows(q2))?)
}

/// Stage game from each agent's own-view table: agent 2's table is
/// indexed `(own action, agent 1's action)` and gets transposed.
pub fn joint_stage_game(
    own1: &[[f64; ACTIONS]; ACTIONS],
    own2: &[[f64; ACTIONS]; ACTIONS],
) -> Result<BimatrixGame> {
    let mut t = [[0.0; ACTIONS]; ACTIONS];
    for (i, row) in t.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = own2[j][i];
        }
    }
    stage_game(own1, &t)
}

pub fn nash_profile(own1: &[[f64; ACTIONS]; ACTIONS], own2: &[[f64; ACTIONS]; ACTIONS]) -> Result<MixedProfile> {
    Ok(bimatrix::solve(&joint_stage_game(own1, own2)?)?)
}

/// Each agent's expected payoff at the selected equilibrium of the stage
/// game; zero past the terminal step.
pub fn nash_q_value(
    own1: &[[f64; ACTIONS]; ACTIONS],
    own2: &[[f64; ACTIONS]; ACTIONS],
    terminal: bool,
) -> Result<[f64; 2]> {
    if terminal {
        return Ok([0.0, 0.0]);
    }
    let p = nash_profile(own1, own2)?;
    Ok([p.row_value, p.col_value])
}

/// One tabular Nash-Q step: `(1 - eta) q + eta (r + beta * nash)`.
pub fn nash_q_update(q: f64, eta: f64, reward: f64, discount: f64, nash: f64) -> f64 {
    (1.0 - eta) * q + eta * (reward + discount * nash)
}

/// Fixed-capacity replay memory; the oldest transition is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `count` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Transition> {
        (0..count)
            .map(|_| self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub td_loss: [f64; 2],
    pub payoffs: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct DqnReport {
    pub records: Vec<EpisodeRecord>,
    /// How often each agent took each action during training.
    pub action_counts: [[usize; ACTIONS]; 2],
    pub wall_time: f64,
}

impl DqnReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode,td_loss_1,td_loss_2,payoff_1,payoff_2\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.9e},{:.9e},{:.9},{:.9}",
                r.episode, r.td_loss[0], r.td_loss[1], r.payoffs[0], r.payoffs[1]
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct NashAgents {
    pub nets: [QNet; 2],
    pub steps: usize,
}

fn features_batch(states: &[JointState], steps: usize) -> Array2<f64> {
    let mut z = Array2::zeros((states.len(), STATE_DIM));
    for (i, s) in states.iter().enumerate() {
        for (j, v) in s.features(steps).into_iter().enumerate() {
            z[(i, j)] = v;
        }
    }
    z
}

fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let w: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    match WeightedIndex::new(&w) {
        Ok(d) => d.sample(rng),
        Err(_) => 0,
    }
}

/// Regresses one Q-network to its targets on the chosen joint actions.
fn regress(net: &mut QNet, adam: &mut Adam, batch: &[Transition], targets: &[f64], agent: usize, lr: f64, steps: usize) -> Result<f64> {
    let z = features_batch(&batch.iter().map(|t| t.state).collect::<Vec<_>>(), steps);
    let n = batch.len();
    let mut td = 0.0;
    let out = net.0.loss_gradient(z.view(), Array3::zeros((0, n, STATE_DIM)).view(), |y, _| {
        let mut d = Array2::zeros((n, ACTIONS * ACTIONS));
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let (own, other) = (t.actions[agent], t.actions[1 - agent]);
            let col = own * ACTIONS + other;
            let e = y[(i, col)] - targets[i];
            loss += e * e / n as f64;
            d[(i, col)] = 2.0 * e / n as f64;
        }
        td = loss;
        Ok(LossSeeds {
            loss,
            d_output: d,
            d_tangent: Array3::zeros((0, n, ACTIONS * ACTIONS)),
        })
    });
    let (_, grad) = match out {
        Ok(v) => v,
        Err(NeuralError::NonFinite(msg)) => {
            return Err(LearnError::NonFinite(format!("TD loss of agent {}: {msg}", agent + 1)))
        }
        Err(e) => return Err(e.into()),
    };
    adam.step(net.0.params_mut(), &grad, lr)?;
    Ok(td)
}

/// Runs Nash DQN training from random simplex starts.
pub fn train(cfg: &DqnConfig) -> Result<(NashAgents, DqnReport)> {
    train_with_progress(cfg, |_| {})
}

pub fn train_with_progress(cfg: &DqnConfig, mut progress: impl FnMut(&EpisodeRecord)) -> Result<(NashAgents, DqnReport)> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let env = Env::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let widths = cfg.widths();
    let mut online = [QNet::init(cfg.seed, &widths)?, QNet::init(cfg.seed.wrapping_add(1), &widths)?];
    let mut target = online.clone();
    let mut adams = [Adam::new(online[0].0.num_params()), Adam::new(online[1].0.num_params())];
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut action_counts = [[0; ACTIONS]; 2];
    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode);
        let mut s = JointState {
            x1: rng.random(),
            x2: rng.random(),
            step: 0,
        };
        let mut td_sum = [0.0; 2];
        let mut updates = 0;
        let payoffs = loop {
            let explore = [rng.random::<f64>() < eps, rng.random::<f64>() < eps];
            let greedy = if explore[0] && explore[1] {
                None
            } else {
                let f = s.features(cfg.steps);
                Some(nash_profile(&online[0].table(&f)?, &online[1].table(&f)?)?)
            };
            let a1 = match (&greedy, explore[0]) {
                (Some(p), false) => sample_action(&p.row, &mut rng),
                _ => rng.random_range(0..ACTIONS),
            };
            let a2 = match (&greedy, explore[1]) {
                (Some(p), false) => sample_action(&p.col, &mut rng),
                _ => rng.random_range(0..ACTIONS),
            };
            action_counts[0][a1] += 1;
            action_counts[1][a2] += 1;
            let (next, rewards, terminal) = env.step(s, a1, a2)?;
            buffer.push(Transition {
                state: s,
                actions: [a1, a2],
                rewards,
                next,
                terminal,
            });
            if buffer.len() >= cfg.minibatch {
                let batch = buffer.sample(cfg.minibatch, &mut rng);
                let nz = features_batch(&batch.iter().map(|t| t.next).collect::<Vec<_>>(), cfg.steps);
                let t1 = target[0].tables(nz.view())?;
                let t2 = target[1].tables(nz.view())?;
                let mut y = [vec![0.0; batch.len()], vec![0.0; batch.len()]];
                for (i, t) in batch.iter().enumerate() {
                    let nq = nash_q_value(&t1[i], &t2[i], t.terminal)?;
                    for a in 0..2 {
                        y[a][i] = t.rewards[a] + cfg.discount * nq[a];
                    }
                }
                for a in 0..2 {
                    td_sum[a] += regress(&mut online[a], &mut adams[a], &batch, &y[a], a, cfg.learning_rate, cfg.steps)?;
                }
                updates += 1;
                for a in 0..2 {
                    online[a].soft_update_into(&mut target[a], cfg.soft_update);
                }
            }
            s = next;
            if terminal {
                break rewards;
            }
        };
        let u = updates.max(1) as f64;
        let rec = EpisodeRecord {
            episode,
            td_loss: [td_sum[0] / u, td_sum[1] / u],
            payoffs,
        };
        progress(&rec);
        records.push(rec);
    }
    Ok((
        NashAgents {
            nets: online,
            steps: cfg.steps,
        },
        DqnReport {
            records,
            action_counts,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Greedy play: both agents take the modal actions of the selected
/// equilibrium at every epoch. Returns the terminal payoffs per start.
pub fn evaluate(agents: &NashAgents, cfg: &DqnConfig, starts: &[Start]) -> Result<Vec<[f64; 2]>> {
    let env = Env::new(cfg)?;
    starts
        .iter()
        .map(|(a, b)| {
            let mut s = JointState {
                x1: a[0],
                x2: b[0],
                step: 0,
            };
            loop {
                let f = s.features(agents.steps);
                let p = nash_profile(&agents.nets[0].table(&f)?, &agents.nets[1].table(&f)?)?;
                let (a1, a2) = p.modal_actions();
                let (next, r, terminal) = env.step(s, a1, a2)?;
                if terminal {
                    return Ok(r);
                }
                s = next;
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env {
        Env::new(&DqnConfig::default()).unwrap()
    }

    #[test]
    fn action_codes_round_trip() {
        let pairs = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        for (a, p) in pairs.iter().enumerate() {
            assert_eq!(decode_action(a), *p);
            assert_eq!(encode_action(*p), a);
        }
    }

    #[test]
    fn idle_controls_keep_densities() {
        let e = env();
        let s = JointState { x1: 0.3, x2: 0.8, step: 2 };
        let (n, r, t) = e.step(s, 0, 0).unwrap();
        assert_eq!((n.x1, n.x2, n.step), (0.3, 0.8, 3));
        assert_eq!(r, [0.0, 0.0]);
        assert!(!t);
    }

    #[test]
    fn terminal_reward_is_the_payoff() {
        let e = env();
        let s = JointState { x1: 1.0, x2: 0.0, step: 9 };
        let (_, r, t) = e.step(s, 0, 0).unwrap();
        assert!(t);
        assert!((r[0] - 1f64.tanh()).abs() < 1e-12 && (r[1] - 1f64.tanh()).abs() < 1e-12);
        assert!((r[0] - 0.7615942).abs() < 1e-7);
    }

    #[test]
    fn episode_has_n_transitions() {
        let e = env();
        let mut s = JointState { x1: 0.4, x2: 0.6, step: 0 };
        let mut n = 0;
        loop {
            let (next, _, t) = e.step(s, 3, 1).unwrap();
            n += 1;
            s = next;
            if t {
                break;
            }
        }
        assert_eq!(n, 10);
    }

    #[test]
    fn zero_tables_select_a_fixed_profile() {
        let z = [[0.0; 4]; 4];
        let a = nash_profile(&z, &z).unwrap();
        let b = nash_profile(&z, &z).unwrap();
        assert_eq!(a, b);
        assert_eq!(nash_q_value(&z, &z, false).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn dominant_actions_are_selected() {
        let mut q1 = [[0.0; 4]; 4];
        let mut q2 = [[0.0; 4]; 4];
        for j in 0..4 {
            for i in 0..4 {
                q1[i][j] = if i == 2 { 5.0 + j as f64 } else { j as f64 };
                q2[i][j] = if j == 3 { 4.0 + i as f64 } else { i as f64 * 0.5 };
            }
        }
        let game = stage_game(&q1, &q2).unwrap();
        let p = bimatrix::solve(&game).unwrap();
        assert_eq!(p.modal_actions(), (2, 3));
        assert_eq!((p.row_value, p.col_value), (q1[2][3], q2[2][3]));
        // brute force over pure profiles agrees
        let best = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| (0..4).all(|k| q1[k][j] <= q1[i][j]) && (0..4).all(|k| q2[i][k] <= q2[i][j]))
            .collect::<Vec<_>>();
        assert_eq!(best, vec![(2, 3)]);
        // agent 2's own view is the transpose
        let mut own2 = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                own2[j][i] = q2[i][j];
            }
        }
        assert_eq!(nash_q_value(&q1, &own2, false).unwrap(), [q1[2][3], q2[2][3]]);
        assert_eq!(nash_q_value(&q1, &own2, true).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn swapping_roles_transposes_the_game() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut q = || {
            let mut t = [[0.0; 4]; 4];
            t.iter_mut().flatten().for_each(|v| *v = rng.random());
            t
        };
        let (a, b) = (q(), q());
        let g = joint_stage_game(&a, &b).unwrap();
        let h = joint_stage_game(&b, &a).unwrap();
        assert_eq!(g.transpose(), h);
    }

    #[test]
    fn tabular_update_arithmetic() {
        assert!((nash_q_update(0.0, 0.5, 1.0, 0.9, 2.0) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn replay_buffer_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3);
        let t = |k: usize| Transition {
            state: JointState { x1: 0.0, x2: 0.0, step: k },
            actions: [0, 0],
            rewards: [0.0, 0.0],
            next: JointState { x1: 0.0, x2: 0.0, step: k + 1 },
            terminal: false,
        };
        for k in 0..5 {
            buf.push(t(k));
            assert!(buf.len() <= buf.capacity());
        }
        let steps: Vec<usize> = buf.iter().map(|x| x.state.step).collect();
        assert_eq!(steps, vec![2, 3, 4]);
    }

    #[test]
    fn full_soft_update_copies() {
        let a = QNet::init(1, &[3, 8, 16]).unwrap();
        let mut b = QNet::init(2, &[3, 8, 16]).unwrap();
        a.soft_update_into(&mut b, 1.0);
        assert_eq!(a, b);
    }

    fn tiny() -> DqnConfig {
        DqnConfig {
            episodes: 30,
            minibatch: 8,
            buffer_capacity: 100,
            hidden: vec![8],
            ..DqnConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (a, ra) = train(&tiny()).unwrap();
        let (b, rb) = train(&tiny()).unwrap();
        assert_eq!(a.nets, b.nets);
        assert_eq!(ra.records, rb.records);
        assert_eq!(ra.records.len(), 30);
        assert!(ra.records.iter().all(|r| r.td_loss.iter().all(|v| v.is_finite())));
        let starts = vec![(vec![0.3, 0.7], vec![0.6, 0.4])];
        assert_eq!(evaluate(&a, &tiny(), &starts).unwrap(), evaluate(&b, &tiny(), &starts).unwrap());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let cfg = DqnConfig {
            epsilon_start: 1.0,
            epsilon_end: 1.0,
            episodes: 400,
            ..tiny()
        };
        let (_, report) = train(&cfg).unwrap();
        for counts in report.action_counts {
            assert_eq!(counts.iter().sum::<usize>(), 4000);
            // binomial sd is about 27
            assert!(counts.iter().all(|c| (*c as f64 - 1000.0).abs() < 120.0), "{counts:?}");
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = DqnConfig {
            episodes: 100,
            ..DqnConfig::default()
        };
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(50) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon(99) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon(25) - 0.525).abs() < 1e-12);
    }
}
