//! Named run configurations. Desk scale fits a single CPU core; paper
//! scale mirrors the published training budgets.

use serde::{Deserialize, Serialize};

use swarmgame_core::bvp::BvpConfig;

use crate::dqn::DqnConfig;
use crate::error::{LearnError, Result};
use crate::pinn::PinnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(LearnError::Config(format!("unknown scale `{s}` (expected desk or paper)"))),
        }
    }
}

/// Everything a command needs besides its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in graph name.
    pub graph: String,
    pub pinn: PinnConfig,
    pub bvp: BvpConfig,
    pub dqn: DqnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        preset("two-regions-desk").unwrap()
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "two-regions-desk",
    "two-regions-paper",
    "four-regions-desk",
    "four-regions-paper",
    "ten-regions-desk",
    "ten-regions-paper",
];

fn desk(pinn: PinnConfig) -> PinnConfig {
    PinnConfig {
        pretrain_iters: 2_000,
        num_epoch: 20_000,
        samples: 10_000,
        boundary_samples: 10_000,
        minibatch: Some(1_000),
        boundary_minibatch: Some(500),
        lr_start: 1e-3,
        lr_end: 1e-5,
        ..pinn
    }
}

fn paper(pinn: PinnConfig) -> PinnConfig {
    PinnConfig {
        minibatch: None,
        boundary_minibatch: None,
        lr_start: 2e-5,
        lr_end: 1e-6,
        ..pinn
    }
}

/// Looks up a preset by name, e.g. `four-regions-desk`.
pub fn preset(name: &str) -> Result<RunConfig> {
    let (case, scale) = name
        .rsplit_once('-')
        .ok_or_else(|| LearnError::Config(format!("unknown preset `{name}`")))?;
    let scale: Scale = scale
        .parse()
        .map_err(|_| LearnError::Config(format!("unknown preset `{name}`")))?;
    let base = PinnConfig::default();
    let (graph, pinn) = match (case, scale) {
        ("two-regions", Scale::Desk) => ("two_regions", desk(base)),
        ("two-regions", Scale::Paper) => (
            "two_regions",
            paper(PinnConfig {
                samples: 65_000,
                pretrain_iters: 10_000,
                num_epoch: 110_000,
                boundary_samples: 10_000,
                ..base
            }),
        ),
        ("four-regions", Scale::Desk) => (
            "four_regions",
            PinnConfig {
                minibatch: Some(2_000),
                boundary_minibatch: Some(1_000),
                ..desk(PinnConfig {
                    samples_growth: 2_000,
                    growth_interval: 2_000,
                    ..base
                })
            },
        ),
        ("four-regions", Scale::Paper) => (
            "four_regions",
            paper(PinnConfig {
                samples: 30_000,
                samples_growth: 10_000,
                growth_interval: 10_000,
                pretrain_iters: 20_000,
                num_epoch: 200_000,
                boundary_samples: 10_000,
                ..base
            }),
        ),
        ("ten-regions", Scale::Desk) => (
            "ten_regions",
            PinnConfig {
                reduced_coords: false,
                hidden: vec![128; 5],
                pretrain_iters: 1_000,
                num_epoch: 10_000,
                minibatch: Some(256),
                boundary_minibatch: Some(128),
                ..desk(base)
            },
        ),
        ("ten-regions", Scale::Paper) => (
            "ten_regions",
            paper(PinnConfig {
                reduced_coords: false,
                hidden: vec![128; 5],
                samples: 30_000,
                samples_growth: 10_000,
                growth_interval: 10_000,
                pretrain_iters: 20_000,
                num_epoch: 200_000,
                ..base
            }),
        ),
        _ => return Err(LearnError::Config(format!("unknown preset `{name}`"))),
    };
    Ok(RunConfig {
        graph: graph.to_string(),
        pinn,
        bvp: BvpConfig::default(),
        dqn: DqnConfig::default(),
    })
}
