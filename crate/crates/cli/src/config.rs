//! Run configuration: a named preset, optionally overridden by a TOML file.
//!
//! A config file may name its base with a top-level `preset = "..."` key;
//! every other key overrides the corresponding field of that preset.

use std::path::Path;

use anyhow::{bail, Context, Result};
use swarmgame_learn::presets::{preset, RunConfig, Scale, PRESET_NAMES};
use toml::{Table, Value};

/// Expands `two-regions` with a scale to `two-regions-desk`; full names
/// pass through.
pub fn preset_name(name: &str, scale: Scale) -> String {
    if PRESET_NAMES.contains(&name) {
        return name.to_string();
    }
    let suffix = match scale {
        Scale::Desk => "desk",
        Scale::Paper => "paper",
    };
    format!("{name}-{suffix}")
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Resolved configuration and the preset it started from.
pub struct Resolved {
    pub preset: String,
    pub config: RunConfig,
}

pub fn resolve(config: Option<&Path>, preset_arg: Option<&str>, scale: Scale) -> Result<Resolved> {
    let file = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config file {}", p.display()))?;
            Some(text.parse::<Table>().with_context(|| format!("config file {} is not valid TOML", p.display()))?)
        }
        None => None,
    };
    let from_file = file
        .as_ref()
        .and_then(|t| t.get("preset"))
        .map(|v| v.as_str().map(str::to_string).context("config key `preset` must be a string"))
        .transpose()?;
    let name = preset_name(preset_arg.or(from_file.as_deref()).unwrap_or("two-regions"), scale);
    let base = preset(&name)?;
    let config = match file {
        None => base,
        Some(mut over) => {
            over.remove("preset");
            let mut table = Table::try_from(&base).context("serializing preset")?;
            merge(&mut table, over);
            table.try_into().context("invalid config")?
        }
    };
    if swarmgame_core::RegionGraph::builtin(&config.graph).is_err() {
        bail!("invalid config: unknown graph `{}`", config.graph);
    }
    config.pinn.validate()?;
    config.bvp.validate()?;
    config.dqn.validate()?;
    Ok(Resolved { preset: name, config })
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_overrides_preset_fields() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "preset = \"four-regions\"\n[pinn]\nseed = 9\nalpha = 20.0").unwrap();
        let r = resolve(Some(f.path()), None, Scale::Desk).unwrap();
        assert_eq!(r.preset, "four-regions-desk");
        assert_eq!(r.config.graph, "four_regions");
        assert_eq!((r.config.pinn.seed, r.config.pinn.alpha), (9, 20.0));
        assert_eq!(r.config.pinn.num_epoch, preset("four-regions-desk").unwrap().pinn.num_epoch);
    }

    #[test]
    fn unknown_field_is_named() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[pinn]\nlearning_rat = 1.0").unwrap();
        let e = resolve(Some(f.path()), None, Scale::Desk).err().unwrap();
        assert!(format!("{e:#}").contains("learning_rat"), "{e:#}");
    }

    #[test]
    fn config_round_trips() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let text = to_toml(&cfg).unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn scale_suffix() {
        assert_eq!(preset_name("ten-regions", Scale::Paper), "ten-regions-paper");
        assert_eq!(preset_name("two-regions-desk", Scale::Paper), "two-regions-desk");
        assert!(resolve(None, Some("nine-regions"), Scale::Desk).is_err());
    }
}
