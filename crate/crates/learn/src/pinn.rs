//! Self-supervised curriculum training of the value network.
//!
//! The network maps `(x1, x2, tau)` to both players' values, with tau the
//! time-to-go. Along any closed-loop trajectory the value is constant, so
//! the residual is the derivative of each output along the input tangent
//! `(f1, f2, -1)`. Controls inside the residual come from the current
//! network's own-state gradients and are treated as constants.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swarmgame_core::dynamics::drift_into;
use swarmgame_core::payoff::{terminal_payoff, PayoffParams, Player};
use swarmgame_core::pmp::optimal_controls;
use swarmgame_core::RegionGraph;
use swarmgame_neural::{checkpoint, Adam, LossSeeds, Mlp, ValueNet};

use crate::coords::Coords;
use crate::error::{LearnError, Result};
use crate::sampling::{curriculum_times, sample_simplex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnConfig {
    pub horizon: f64,
    /// Curriculum iterations after pretraining.
    pub num_epoch: usize,
    pub pretrain_iters: usize,
    /// Interior sample pool size at the start of the curriculum.
    pub samples: usize,
    /// States added to the pool every `growth_interval` iterations.
    pub samples_growth: usize,
    pub growth_interval: usize,
    pub boundary_samples: usize,
    /// Interior rows per iteration; `None` uses the whole pool.
    pub minibatch: Option<usize>,
    /// Boundary rows per iteration; `None` uses the whole boundary pool.
    pub boundary_minibatch: Option<usize>,
    pub boundary_weight: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub alpha: f64,
    pub seed: u64,
    pub reduced_coords: bool,
    pub hidden: Vec<usize>,
    pub checkpoint_every: Option<usize>,
}

impl Default for PinnConfig {
    fn default() -> Self {
        Self {
            horizon: 2.5,
            num_epoch: 20_000,
            pretrain_iters: 2_000,
            samples: 10_000,
            samples_growth: 0,
            growth_interval: 10_000,
            boundary_samples: 10_000,
            minibatch: None,
            boundary_minibatch: None,
            boundary_weight: 100.0,
            lr_start: 2e-5,
            lr_end: 1e-6,
            alpha: 1.0,
            seed: 0,
            reduced_coords: true,
            hidden: vec![64, 64, 64],
            checkpoint_every: None,
        }
    }
}

impl PinnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.num_epoch == 0 || self.samples == 0 || self.boundary_samples == 0 {
            return bad("num_epoch, samples and boundary_samples must be positive");
        }
        if self.growth_interval == 0 {
            return bad("growth_interval must be positive");
        }
        if self.minibatch == Some(0) || self.boundary_minibatch == Some(0) {
            return bad("minibatch sizes must be positive");
        }
        if !(self.boundary_weight > 0.0 && self.boundary_weight.is_finite()) {
            return bad("boundary_weight must be positive");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_start.is_finite() && self.lr_end.is_finite()) {
            return bad("learning rates must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive");
        }
        Ok(())
    }

    /// Learning rate at curriculum iteration `itr`, decaying linearly.
    pub fn learning_rate(&self, itr: usize) -> f64 {
        let f = itr.min(self.num_epoch) as f64 / self.num_epoch as f64;
        self.lr_start + (self.lr_end - self.lr_start) * f
    }

    pub fn widths(&self, coords: &Coords) -> Vec<usize> {
        let mut w = vec![coords.input_dim()];
        w.extend(&self.hidden);
        w.push(ValueNet::OUTPUTS);
        w
    }
}

/// Graph, payoff temperature and input layout shared by the residuals.
#[derive(Debug, Clone)]
pub struct ValueProblem {
    pub graph: RegionGraph,
    pub params: PayoffParams,
    pub coords: Coords,
    pub horizon: f64,
}

impl ValueProblem {
    pub fn new(graph: RegionGraph, alpha: f64, reduced: bool, horizon: f64) -> Result<Self> {
        let coords = Coords::new(graph.num_regions(), reduced);
        Ok(Self {
            graph,
            params: PayoffParams::new(alpha)?,
            coords,
            horizon,
        })
    }

    pub fn from_config(graph: RegionGraph, cfg: &PinnConfig) -> Result<Self> {
        Self::new(graph, cfg.alpha, cfg.reduced_coords, cfg.horizon)
    }

    fn regions(&self) -> usize {
        self.graph.num_regions()
    }

    /// Densities encoded in one input row, expanded to full coordinates.
    pub fn decode(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let k = self.coords.per_player();
        let full = |part: &[f64]| {
            let mut x = part.to_vec();
            if self.coords.is_reduced() {
                x.push(1.0 - part.iter().sum::<f64>());
            }
            x
        };
        (full(&z[..k]), full(&z[k..2 * k]), z[2 * k])
    }

    /// Equilibrium controls of both players from one row of the input
    /// Jacobian (`jac_row[p]` holds output `p`'s gradient).
    pub fn controls(&self, x1: &[f64], x2: &[f64], grad1: &[f64], grad2: &[f64]) -> [Vec<f64>; 2] {
        let l1 = self.coords.state_gradient(grad1, Player::One);
        let l2 = self.coords.state_gradient(grad2, Player::Two);
        [
            optimal_controls(&self.graph, x1, &l1),
            optimal_controls(&self.graph, x2, &l2),
        ]
    }

    /// Residual tangents `(f1, f2, -1)` for every row of `z`, with controls
    /// taken from the current network.
    pub fn residual_tangents(&self, net: &Mlp, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (_, jac) = net.output_and_jacobian(z)?;
        let m = self.regions();
        let mut w = Array2::zeros(z.dim());
        let (mut f1, mut f2) = (vec![0.0; m], vec![0.0; m]);
        for (i, zr) in z.rows().into_iter().enumerate() {
            let zr = zr.to_vec();
            let (x1, x2, _) = self.decode(&zr);
            let g1 = jac.slice(s![i, 0, ..]).to_vec();
            let g2 = jac.slice(s![i, 1, ..]).to_vec();
            let [u1, u2] = self.controls(&x1, &x2, &g1, &g2);
            drift_into(&self.graph, &x1, &u1, &mut f1);
            drift_into(&self.graph, &x2, &u2, &mut f2);
            let mut row = w.row_mut(i);
            self.coords.residual_tangent(&f1, &f2, row.as_slice_mut().unwrap());
        }
        Ok(w)
    }

    /// HJI residuals `(n, 2)` at every row of `z`.
    pub fn hji_residual_batch(&self, net: &Mlp, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let w = self.residual_tangents(net, z)?;
        let (n, d) = w.dim();
        let w3 = w.into_shape_with_order((1, n, d)).unwrap();
        let (_, ydot) = net.jvp_batch(z, w3.view())?;
        Ok(ydot.index_axis_move(ndarray::Axis(0), 0))
    }

    pub fn hji_residual(&self, net: &Mlp, x1: &[f64], x2: &[f64], tau: f64) -> Result<[f64; 2]> {
        let z = self.coords.encode(x1, x2, tau);
        let zv = ArrayView2::from_shape((1, z.len()), &z).unwrap();
        let r = self.hji_residual_batch(net, zv)?;
        Ok([r[(0, 0)], r[(0, 1)]])
    }

    /// Terminal payoffs `(g1, g2)` at a pair of densities.
    pub fn terminal_values(&self, x1: &[f64], x2: &[f64]) -> Result<[f64; 2]> {
        Ok([
            terminal_payoff(Player::One, x1, x2, &self.params)?,
            terminal_payoff(Player::Two, x1, x2, &self.params)?,
        ])
    }

    pub fn boundary_residual(&self, net: &Mlp, x1: &[f64], x2: &[f64]) -> Result<[f64; 2]> {
        let y = net.forward(&self.coords.encode(x1, x2, 0.0))?;
        let g = self.terminal_values(x1, x2)?;
        Ok([y[0] - g[0], y[1] - g[1]])
    }

    /// Boundary residuals `(n, 2)` for rows of `z` (their tau entry is ignored
    /// by the target but not by the network, so callers pass tau = 0).
    pub fn boundary_residual_batch(&self, net: &Mlp, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let y = net.forward_batch(z)?;
        let targets = self.boundary_targets(z)?;
        Ok(y - targets)
    }

    fn boundary_targets(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut t = Array2::zeros((z.nrows(), 2));
        for (i, zr) in z.rows().into_iter().enumerate() {
            let (x1, x2, _) = self.decode(&zr.to_vec());
            let g = self.terminal_values(&x1, &x2)?;
            t[(i, 0)] = g[0];
            t[(i, 1)] = g[1];
        }
        Ok(t)
    }

    /// Encoded random states with the given times.
    fn sample_rows(&self, taus: &[f64], rng: &mut ChaCha8Rng) -> Array2<f64> {
        let m = self.regions();
        let a = sample_simplex(m, taus.len(), rng);
        let b = sample_simplex(m, taus.len(), rng);
        self.coords.encode_batch(&a, &b, taus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub pde_loss: f64,
    pub boundary_loss: f64,
    pub total_loss: f64,
    pub lr: f64,
    pub max_tau: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
    pub wall_time: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,pde_loss,boundary_loss,lr,max_tau\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.9e},{:.9e},{:.6e},{:.6}",
                r.iteration, r.pde_loss, r.boundary_loss, r.lr, r.max_tau
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Where and how often to write checkpoints during training.
#[derive(Debug, Clone, Default)]
pub struct CheckpointSink {
    pub dir: Option<PathBuf>,
}

impl CheckpointSink {
    fn save(&self, net: &Mlp, name: &str) -> Result<Option<PathBuf>> {
        match &self.dir {
            None => Ok(None),
            Some(d) => {
                std::fs::create_dir_all(d)?;
                let p = d.join(name);
                checkpoint::save(net, &p)?;
                Ok(Some(p))
            }
        }
    }
}

struct Batch {
    z: Array2<f64>,
    tangents: Array3<f64>,
    interior: usize,
}

/// L1 loss on a stacked batch: interior rows first, boundary rows after.
fn l1_seeds(
    y: ArrayView2<f64>,
    ydot: ArrayView3<f64>,
    targets: &Array2<f64>,
    interior: usize,
    weight: f64,
    parts: &mut (f64, f64),
) -> LossSeeds {
    let n = y.nrows();
    let nb = n - interior;
    let k = ydot.shape()[0];
    let mut d_output = Array2::zeros((n, 2));
    let mut d_tangent = Array3::zeros((k, n, 2));
    let (mut pde, mut bnd) = (0.0, 0.0);
    if k > 0 && interior > 0 {
        for i in 0..interior {
            for p in 0..2 {
                let h = ydot[(0, i, p)];
                pde += h.abs();
                d_tangent[(0, i, p)] = h.signum() / interior as f64;
            }
        }
        pde /= interior as f64;
    }
    for i in 0..nb {
        for p in 0..2 {
            let b = y[(interior + i, p)] - targets[(i, p)];
            bnd += b.abs();
            d_output[(interior + i, p)] = weight * b.signum() / nb as f64;
        }
    }
    bnd /= nb.max(1) as f64;
    *parts = (pde, bnd);
    LossSeeds {
        loss: pde + weight * bnd,
        d_output,
        d_tangent,
    }
}

fn choose_rows(pool: &Array2<f64>, take: Option<usize>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    match take {
        Some(b) if b < pool.nrows() => {
            let idx = sample_indices(rng, pool.nrows(), b).into_vec();
            pool.select(ndarray::Axis(0), &idx)
        }
        _ => pool.clone(),
    }
}

/// Trains a value network from scratch. Checkpoints go to `sink` when it
/// names a directory.
pub fn train(graph: &RegionGraph, cfg: &PinnConfig, sink: &CheckpointSink) -> Result<(ValueNet, TrainReport)> {
    train_with_progress(graph, cfg, sink, |_| {})
}

pub fn train_with_progress(
    graph: &RegionGraph,
    cfg: &PinnConfig,
    sink: &CheckpointSink,
    mut progress: impl FnMut(&TrainRecord),
) -> Result<(ValueNet, TrainReport)> {
    cfg.validate()?;
    let problem = ValueProblem::from_config(graph.clone(), cfg)?;
    let coords = problem.coords;
    let d = coords.input_dim();
    let tau_col = coords.tau_index();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::init(cfg.seed, &cfg.widths(&coords))?;
    let mut adam = Adam::new(net.num_params());
    let mut records = Vec::with_capacity(cfg.pretrain_iters + cfg.num_epoch);
    let mut last_good: Option<PathBuf> = None;

    let boundary_pool = problem.sample_rows(&vec![0.0; cfg.boundary_samples], &mut rng);
    let boundary_targets = problem.boundary_targets(boundary_pool.view())?;
    let boundary_pool = ndarray::concatenate![ndarray::Axis(1), boundary_pool, boundary_targets];

    let total = cfg.pretrain_iters + cfg.num_epoch;
    let step = |net: &mut Mlp,
                    adam: &mut Adam,
                    iteration: usize,
                    batch: Batch,
                    targets: Array2<f64>,
                    lr: f64,
                    max_tau: f64,
                    last_good: &Option<PathBuf>|
     -> Result<TrainRecord> {
        let mut parts = (0.0, 0.0);
        let weight = if batch.interior == 0 { 1.0 } else { cfg.boundary_weight };
        let out = net.loss_gradient(batch.z.view(), batch.tangents.view(), |y, ydot| {
            Ok(l1_seeds(y, ydot, &targets, batch.interior, weight, &mut parts))
        });
        let (loss, grad) = match out {
            Ok(v) => v,
            Err(swarmgame_neural::NeuralError::NonFinite(_)) => {
                return Err(LearnError::Diverged {
                    iteration,
                    checkpoint: last_good.clone(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LearnError::Diverged {
                iteration,
                checkpoint: last_good.clone(),
            });
        }
        adam.step(net.params_mut(), &grad, lr)?;
        Ok(TrainRecord {
            iteration,
            pde_loss: parts.0,
            boundary_loss: parts.1,
            total_loss: loss,
            lr,
            max_tau,
        })
    };

    let split = |rows: &Array2<f64>| -> (Array2<f64>, Array2<f64>) {
        (rows.slice(s![.., ..d]).to_owned(), rows.slice(s![.., d..]).to_owned())
    };

    for it in 0..cfg.pretrain_iters {
        let (z, targets) = split(&choose_rows(&boundary_pool, cfg.boundary_minibatch, &mut rng));
        let n = z.nrows();
        let batch = Batch {
            z,
            tangents: Array3::zeros((0, n, d)),
            interior: 0,
        };
        let rec = step(&mut net, &mut adam, it, batch, targets, cfg.lr_start, 0.0, &last_good)?;
        progress(&rec);
        records.push(rec);
        if let Some(every) = cfg.checkpoint_every {
            if (it + 1) % every == 0 {
                last_good = sink.save(&net, "latest.sgnn")?.or(last_good);
            }
        }
    }

    let mut pool = problem.sample_rows(&vec![0.0; cfg.samples], &mut rng);
    for itr in 0..cfg.num_epoch {
        if itr > 0 && itr % cfg.growth_interval == 0 && cfg.samples_growth > 0 {
            let extra = problem.sample_rows(&vec![0.0; cfg.samples_growth], &mut rng);
            pool = ndarray::concatenate![ndarray::Axis(0), pool, extra];
        }
        let mut interior = choose_rows(&pool, cfg.minibatch, &mut rng);
        let taus = curriculum_times(cfg.horizon, itr + 1, cfg.num_epoch, interior.nrows(), &mut rng);
        interior.column_mut(tau_col).assign(&ndarray::Array1::from(taus));
        let max_tau = cfg.horizon * (itr + 1) as f64 / cfg.num_epoch as f64;
        let w = problem.residual_tangents(&net, interior.view())?;
        let (bz, targets) = split(&choose_rows(&boundary_pool, cfg.boundary_minibatch, &mut rng));
        let ni = interior.nrows();
        let z = ndarray::concatenate![ndarray::Axis(0), interior, bz];
        let mut tangents = Array3::zeros((1, z.nrows(), d));
        tangents.slice_mut(s![0, ..ni, ..]).assign(&w);
        let batch = Batch { z, tangents, interior: ni };
        let iteration = cfg.pretrain_iters + itr;
        let rec = step(
            &mut net,
            &mut adam,
            iteration,
            batch,
            targets,
            cfg.learning_rate(itr),
            max_tau,
            &last_good,
        )?;
        progress(&rec);
        records.push(rec);
        if let Some(every) = cfg.checkpoint_every {
            if (iteration + 1).is_multiple_of(every) && iteration + 1 < total {
                last_good = sink.save(&net, "latest.sgnn")?.or(last_good);
            }
        }
    }
    let checkpoint = sink.save(&net, "final.sgnn")?;
    let report = TrainReport {
        records,
        wall_time: start.elapsed().as_secs_f64(),
        checkpoint,
    };
    Ok((ValueNet::from_mlp(net)?, report))
}
