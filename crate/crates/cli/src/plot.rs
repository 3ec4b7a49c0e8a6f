//! Static SVG figures from the CSV outputs of the other commands.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use plotters::prelude::*;

const PALETTE: [RGBColor; 10] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(188, 189, 34),
    RGBColor(23, 190, 207),
];
const SWARM_COLORS: [RGBColor; 2] = [RGBColor(214, 39, 40), RGBColor(31, 119, 180)];

/// Numeric CSV with a header row; empty or non-numeric cells read as `None`.
pub struct Table {
    pub columns: HashMap<String, usize>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        let columns = r
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(|c| c.parse::<f64>().ok()).collect());
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = *self.columns.get(name)?;
        Some(self.rows.iter().map(|r| r.get(i).copied().flatten()).collect())
    }

    /// Number of `{prefix}1, {prefix}2, ...` columns present.
    fn count(&self, prefix: &str) -> usize {
        (1..).take_while(|j| self.columns.contains_key(&format!("{prefix}{j}"))).count()
    }
}

fn err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow::anyhow!("drawing failed: {e:?}")
}

/// Density of every region over time, one panel per swarm.
pub fn density(input: &Path, out: &Path) -> Result<()> {
    let t = Table::read(input)?;
    let m = t.count("x1_");
    let times: Vec<f64> = t.column("t").context("trajectory file needs a `t` column")?.into_iter().flatten().collect();
    if m == 0 || times.is_empty() {
        bail!("{} is not a trajectory file", input.display());
    }
    let t_end = times.last().copied().unwrap_or(1.0).max(1e-9);
    let root = SVGBackend::new(out, (900, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    for (p, area) in root.split_evenly((2, 1)).iter().enumerate() {
        let mut chart = ChartBuilder::on(area)
            .caption(format!("sub-swarm {}", p + 1), ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(45)
            .build_cartesian_2d(0f64..t_end, 0f64..1f64)
            .map_err(err)?;
        chart.configure_mesh().x_desc("t [s]").y_desc("density").draw().map_err(err)?;
        for j in 1..=m {
            let col = t.column(&format!("x{}_{j}", p + 1)).context("missing density column")?;
            let color = PALETTE[(j - 1) % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(
                    times.iter().zip(col).filter_map(|(a, b)| b.map(|b| (*a, b))),
                    color.stroke_width(2),
                ))
                .map_err(err)?
                .label(format!("region {j}"))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    root.present().map_err(err)?;
    Ok(())
}

/// Final distributions of both swarms for up to four starts.
pub fn finals(input: &Path, out: &Path, source: &str) -> Result<()> {
    let t = Table::read(input)?;
    let prefix = |p: usize| format!("final_{source}_x{p}_");
    let m = t.count(&prefix(1));
    if m == 0 {
        bail!("{} has no final_{source}_x1_* columns", input.display());
    }
    let shown = t.rows.len().min(4);
    if shown == 0 {
        bail!("{} has no rows", input.display());
    }
    let root = SVGBackend::new(out, (1000, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let panels = root.split_evenly((2, 2));
    for (i, area) in panels.iter().enumerate().take(shown) {
        let mut chart = ChartBuilder::on(area)
            .caption(format!("start {}", i + 1), ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(40)
            .build_cartesian_2d(0.5f64..m as f64 + 0.5, 0f64..1f64)
            .map_err(err)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(m)
            .x_label_formatter(&|v| format!("{}", v.round() as i64))
            .x_desc("region")
            .y_desc("final density")
            .draw()
            .map_err(err)?;
        for p in 0..2 {
            let color = SWARM_COLORS[p];
            let bars = (1..=m).filter_map(|j| {
                let v = t.column(&format!("{}{j}", prefix(p + 1)))?[i]?;
                let x0 = j as f64 - 0.4 + 0.4 * p as f64;
                Some(Rectangle::new([(x0, 0.0), (x0 + 0.4, v)], color.filled()))
            });
            chart
                .draw_series(bars)
                .map_err(err)?
                .label(format!("sub-swarm {}", p + 1))
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 15, y + 5)], color.filled()));
        }
        chart.configure_series_labels().border_style(BLACK).draw().map_err(err)?;
    }
    root.present().map_err(err)?;
    Ok(())
}

/// Histograms of absolute payoff errors per swarm.
pub fn histogram(input: &Path, out: &Path, bins: usize) -> Result<()> {
    let t = Table::read(input)?;
    let root = SVGBackend::new(out, (1000, 450)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    for (p, area) in root.split_evenly((1, 2)).iter().enumerate() {
        let vals: Vec<f64> = t
            .column(&format!("abs_err_v{}", p + 1))
            .with_context(|| format!("{} has no abs_err_v{} column", input.display(), p + 1))?
            .into_iter()
            .flatten()
            .collect();
        let hi = vals.iter().cloned().fold(0.0, f64::max).max(1e-6);
        let width = hi / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in &vals {
            counts[((v / width) as usize).min(bins - 1)] += 1;
        }
        let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64 * 1.1;
        let mut chart = ChartBuilder::on(area)
            .caption(format!("|V{0} network - V{0} BVP|", p + 1), ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(40)
            .build_cartesian_2d(0f64..hi, 0f64..top)
            .map_err(err)?;
        chart.configure_mesh().x_desc("absolute error").y_desc("starts").draw().map_err(err)?;
        let color = SWARM_COLORS[p];
        chart
            .draw_series(counts.iter().enumerate().map(|(b, c)| {
                let x0 = b as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, *c as f64)], color.mix(0.7).filled())
            }))
            .map_err(err)?;
    }
    root.present().map_err(err)?;
    Ok(())
}
