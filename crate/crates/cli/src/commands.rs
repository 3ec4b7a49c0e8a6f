use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use swarmgame_core::bvp::BvpSolver;
use swarmgame_core::payoff::PayoffParams;
use swarmgame_core::RegionGraph;
use swarmgame_learn::dqn;
use swarmgame_learn::pinn::{self, CheckpointSink, ValueProblem};
use swarmgame_learn::presets::RunConfig;
use swarmgame_learn::rollout::{self, Start, ROLLOUT_DT};
use swarmgame_neural::{checkpoint, Mlp};

use crate::config::{resolve, to_toml, Resolved};
use crate::manifest::Manifest;
use crate::{plot as figures, Common, PlotKind, StartArgs};

const DEFAULT_COUNT: usize = 100;

struct Run {
    preset: String,
    config: RunConfig,
    config_text: String,
    seed: u64,
    graph: RegionGraph,
    started: Instant,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let Resolved { preset, mut config } = resolve(common.config.as_deref(), common.preset.as_deref(), common.scale)?;
        if let Some(s) = common.seed {
            config.pinn.seed = s;
            config.dqn.seed = s;
        }
        let seed = config.pinn.seed;
        let graph = RegionGraph::builtin(&config.graph)?;
        let config_text = to_toml(&config)?;
        Ok(Self {
            preset,
            config,
            config_text,
            seed,
            graph,
            started: Instant::now(),
        })
    }

    fn problem(&self) -> Result<ValueProblem> {
        Ok(ValueProblem::from_config(self.graph.clone(), &self.config.pinn)?)
    }

    /// Creates the output directory only once every input has been read.
    fn out_dir(&self, common: &Common) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(&common.out_dir)
            .with_context(|| format!("cannot create {}", common.out_dir.display()))?;
        std::fs::write(common.out_dir.join("config.toml"), &self.config_text)?;
        Ok(common.out_dir.clone())
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, &self.preset, self.seed, &self.config_text)
    }

    fn finish(&self, m: Manifest, dir: &Path, outputs: Vec<String>) -> Result<()> {
        let mut all = vec!["config.toml".to_string()];
        all.extend(outputs);
        m.write(dir, &all, self.started.elapsed().as_secs_f64())
    }

    fn starts(&self, args: &StartArgs, manifest: &mut Manifest, fallback: Vec<Start>) -> Result<Vec<Start>> {
        let m = self.graph.num_regions();
        match (&args.starts, args.count) {
            (Some(p), _) => {
                let s = crate::starts::load(p, m)?;
                manifest.input(p)?;
                Ok(s)
            }
            (None, Some(0)) => bail!("--count must be positive"),
            (None, Some(n)) => Ok(rollout::uniform_starts(m, n, self.seed)),
            (None, None) => Ok(fallback),
        }
    }

    fn load_net(&self, path: &Path, manifest: &mut Manifest) -> Result<Mlp> {
        let net = checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
        let d = self.problem()?.coords.input_dim();
        if net.input_dim() != d || net.output_dim() != 2 {
            bail!(
                "checkpoint {} has widths {:?}; the {} graph needs {d} inputs and 2 outputs",
                path.display(),
                net.widths(),
                self.config.graph
            );
        }
        manifest.input(path)?;
        Ok(net)
    }
}

pub fn train_pinn(common: &Common) -> Result<()> {
    let run = Run::new(common)?;
    let dir = run.out_dir(common)?;
    let sink = CheckpointSink {
        dir: Some(dir.join("checkpoints")),
    };
    let log_every = (run.config.pinn.num_epoch / 20).max(1);
    let (net, report) = pinn::train_with_progress(&run.graph, &run.config.pinn, &sink, |r| {
        if r.iteration % log_every == 0 {
            eprintln!(
                "iteration {:>7}  pde {:.5}  boundary {:.5}  lr {:.2e}  max_tau {:.3}",
                r.iteration, r.pde_loss, r.boundary_loss, r.lr, r.max_tau
            );
        }
    })?;
    checkpoint::save(net.mlp(), dir.join("value.sgnn"))?;
    report.write_csv(dir.join("loss.csv"))?;
    eprintln!("trained in {:.1} s", report.wall_time);
    run.finish(
        run.manifest("train-pinn"),
        &dir,
        vec!["value.sgnn".into(), "loss.csv".into()],
    )
}

pub fn solve_bvp(common: &Common, starts_path: &Path) -> Result<()> {
    let run = Run::new(common)?;
    let mut manifest = run.manifest("solve-bvp");
    let starts = crate::starts::load(starts_path, run.graph.num_regions())?;
    manifest.input(starts_path)?;
    let params = PayoffParams::new(run.config.pinn.alpha)?;
    let solver = BvpSolver::new(&run.graph, params, run.config.bvp.clone())?;
    let dir = run.out_dir(common)?;
    let m = run.graph.num_regions();
    let mut csv = String::from("start");
    for p in 1..=2 {
        for j in 1..=m {
            let _ = write!(csv, ",x{p}_{j}");
        }
    }
    csv.push_str(",converged,v1,v2,residual,iterations");
    for p in 1..=2 {
        for j in 1..=m {
            let _ = write!(csv, ",final_bvp_x{p}_{j}");
        }
    }
    csv.push('\n');
    let mut converged = 0;
    for (i, (a, b)) in starts.iter().enumerate() {
        let guess = solver.initial_guess(a, b)?;
        let sol = solver.solve(a, b, &guess.mesh)?;
        converged += sol.converged as usize;
        let (f1, f2) = sol.trajectory.final_states();
        let _ = write!(csv, "{i}");
        for v in a.iter().chain(b) {
            let _ = write!(csv, ",{v:.9}");
        }
        let _ = write!(
            csv,
            ",{},{:.9},{:.9},{:.3e},{}",
            sol.converged as u8, sol.payoffs[0], sol.payoffs[1], sol.residual, sol.iterations
        );
        for v in f1.iter().chain(f2) {
            let _ = write!(csv, ",{v:.9}");
        }
        csv.push('\n');
    }
    std::fs::write(dir.join("bvp.csv"), csv)?;
    eprintln!("{converged}/{} starts converged", starts.len());
    run.finish(manifest, &dir, vec!["bvp.csv".into()])
}

pub fn rollout(common: &Common, ckpt: &Path, args: &StartArgs) -> Result<()> {
    let run = Run::new(common)?;
    let mut manifest = run.manifest("rollout");
    let net = run.load_net(ckpt, &mut manifest)?;
    let starts = run.starts(args, &mut manifest, rollout::showcase_starts(run.graph.num_regions()))?;
    let problem = run.problem()?;
    let runs = rollout::simulate_batch(&problem, &net, &starts, ROLLOUT_DT)?;
    let dir = run.out_dir(common)?;
    let m = run.graph.num_regions();
    let mut outputs = Vec::new();
    let mut finals = String::from("start");
    for p in 1..=2 {
        for j in 1..=m {
            let _ = write!(finals, ",x{p}_{j}");
        }
    }
    for p in 1..=2 {
        for j in 1..=m {
            let _ = write!(finals, ",final_net_x{p}_{j}");
        }
    }
    finals.push_str(",v1,v2\n");
    for (i, (r, (a, b))) in runs.iter().zip(&starts).enumerate() {
        let name = format!("trajectory_{i}.csv");
        std::fs::write(dir.join(&name), r.trajectory.to_csv())?;
        outputs.push(name);
        let (f1, f2) = r.trajectory.final_states();
        let _ = write!(finals, "{i}");
        for v in a.iter().chain(b).chain(f1).chain(f2) {
            let _ = write!(finals, ",{v:.9}");
        }
        let _ = writeln!(finals, ",{:.9},{:.9}", r.payoffs[0], r.payoffs[1]);
    }
    std::fs::write(dir.join("finals.csv"), finals)?;
    outputs.push("finals.csv".into());
    run.finish(manifest, &dir, outputs)
}

pub fn compare(common: &Common, ckpt: &Path, args: &StartArgs) -> Result<()> {
    let run = Run::new(common)?;
    let mut manifest = run.manifest("compare");
    let net = run.load_net(ckpt, &mut manifest)?;
    let m = run.graph.num_regions();
    let starts = run.starts(args, &mut manifest, rollout::uniform_starts(m, DEFAULT_COUNT, run.seed))?;
    let problem = run.problem()?;
    let cmp = rollout::compare_pinn_bvp(&problem, &net, &starts, &run.config.bvp, ROLLOUT_DT)?;
    let dir = run.out_dir(common)?;
    std::fs::write(dir.join("comparison.csv"), cmp.to_csv())?;
    std::fs::write(
        dir.join("errors.csv"),
        rollout::errors_to_csv(&rollout::value_error_histogram(&cmp)),
    )?;
    std::fs::write(dir.join("summary.txt"), cmp.summary_text())?;
    eprint!("{}", cmp.summary_text());
    run.finish(
        manifest,
        &dir,
        vec!["comparison.csv".into(), "errors.csv".into(), "summary.txt".into()],
    )
}

pub fn train_dqn(common: &Common, args: &StartArgs) -> Result<()> {
    let run = Run::new(common)?;
    if run.graph.num_regions() != 2 {
        bail!("invalid config: Nash DQN supports only the two_regions graph");
    }
    let mut manifest = run.manifest("train-dqn");
    let starts = run.starts(args, &mut manifest, rollout::uniform_starts(2, DEFAULT_COUNT, run.seed))?;
    let cfg = dqn::DqnConfig {
        horizon: run.config.pinn.horizon,
        alpha: run.config.pinn.alpha,
        ..run.config.dqn.clone()
    };
    let dir = run.out_dir(common)?;
    let log_every = (cfg.episodes / 20).max(1);
    let (agents, report) = dqn::train_with_progress(&cfg, |r| {
        if r.episode % log_every == 0 {
            eprintln!(
                "episode {:>6}  td {:.5} {:.5}  payoff {:.4} {:.4}",
                r.episode, r.td_loss[0], r.td_loss[1], r.payoffs[0], r.payoffs[1]
            );
        }
    })?;
    for (i, net) in agents.nets.iter().enumerate() {
        checkpoint::save(net.mlp(), dir.join(format!("dqn_agent{}.sgnn", i + 1)))?;
    }
    std::fs::write(dir.join("dqn_log.csv"), report.to_csv())?;
    let payoffs = dqn::evaluate(&agents, &cfg, &starts)?;
    let mut csv = String::from("start,x1_1,x2_1,v1,v2\n");
    let mut mean = [0.0; 2];
    for (i, ((a, b), v)) in starts.iter().zip(&payoffs).enumerate() {
        let _ = writeln!(csv, "{i},{:.9},{:.9},{:.9},{:.9}", a[0], b[0], v[0], v[1]);
        mean[0] += v[0] / starts.len() as f64;
        mean[1] += v[1] / starts.len() as f64;
    }
    std::fs::write(dir.join("dqn_eval.csv"), csv)?;
    let summary = format!("starts {}\nmean_v1 {:.6}\nmean_v2 {:.6}\n", starts.len(), mean[0], mean[1]);
    std::fs::write(dir.join("summary.txt"), &summary)?;
    eprint!("{summary}");
    run.finish(
        manifest,
        &dir,
        vec![
            "dqn_agent1.sgnn".into(),
            "dqn_agent2.sgnn".into(),
            "dqn_log.csv".into(),
            "dqn_eval.csv".into(),
            "summary.txt".into(),
        ],
    )
}

pub fn plot(kind: PlotKind, input: &Path, out: &Path, source: &str, bins: usize) -> Result<()> {
    if !matches!(source, "net" | "bvp") {
        bail!("--source must be net or bvp");
    }
    if bins == 0 {
        bail!("--bins must be positive");
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    match kind {
        PlotKind::Density => figures::density(input, out),
        PlotKind::Final => figures::finals(input, out, source),
        PlotKind::Histogram => figures::histogram(input, out, bins),
    }
}
