//! Initial-state files: one start per line, `x1_1..x1_M,x2_1..x2_M`. An
//! optional header line and `#` comments are skipped.

use std::path::Path;

use anyhow::{bail, Context, Result};
use swarmgame_learn::rollout::Start;

const SIMPLEX_TOL: f64 = 1e-6;

pub fn parse(text: &str, regions: usize) -> Result<Vec<Start>> {
    let mut starts = Vec::new();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(trimmed.as_bytes())
            .records()
            .next()
            .transpose()
            .with_context(|| format!("starts file line {line}: not valid CSV"))?
            .unwrap_or_default();
        let first = !seen_data;
        seen_data = true;
        if first && rec.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != 2 * regions {
            bail!("starts file line {line}: expected {} values, found {}", 2 * regions, rec.len());
        }
        let vals = rec
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| anyhow::anyhow!("starts file line {line}: {e}"))?;
        let (a, b) = vals.split_at(regions);
        for x in [a, b] {
            if x.iter().any(|v| !v.is_finite() || *v < 0.0) || (x.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
                bail!("starts file line {line}: densities must be non-negative and sum to 1");
            }
        }
        starts.push((a.to_vec(), b.to_vec()));
    }
    if starts.is_empty() {
        bail!("starts file contains no starts");
    }
    Ok(starts)
}

pub fn load(path: &Path, regions: usize) -> Result<Vec<Start>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read starts file {}", path.display()))?;
    parse(&text, regions)
}
