use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lrcalib::cost::{total_cost, CostConfig};
use lrcalib::dataio::{load_pair, write_point_cloud, FramePair, Manifest};
use lrcalib::geometry::{ExtrinsicsDoc, PARAMETER_NAMES};
use lrcalib::optimizer::{best_attempt, multistart_attempts_from, OptimizerConfig, TracePoint};
use lrcalib::radar_grid::{build_grid, OccupancyGridIndex};
use lrcalib::synth::SynthConfig;
use lrcalib::{Extrinsics, Point3};
use serde::{Deserialize, Serialize};

use crate::eval::{evaluate, EvalReport};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn check_in_bounds(e: &Extrinsics, ocfg: &OptimizerConfig, what: &str) -> Result<()> {
    let b = ocfg.half_widths();
    for (k, v) in e.to_array().into_iter().enumerate() {
        if v.abs() > b[k] {
            bail!("{what} {} = {v} lies outside the optimizer bounds of ±{}", PARAMETER_NAMES[k], b[k]);
        }
    }
    Ok(())
}

pub fn synth(config: Option<&Path>, gt: Option<&Path>, out: &Path, seed: u64) -> Result<PathBuf> {
    let cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let gt = match gt {
        Some(p) => Extrinsics::read_json(p)?,
        None => Extrinsics::IDENTITY,
    };
    check_in_bounds(&gt, &OptimizerConfig::default(), "ground truth")?;
    let pairs = cfg.render(&gt, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    gt.write_json(&out.join("gt.json"))?;
    let mut entries = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let lidar = format!("lidar_{i:03}.bin");
        let radar = format!("radar_{i:03}.pgm");
        let meta = format!("radar_{i:03}.json");
        write_point_cloud(&out.join(&lidar), &pair.cloud)?;
        pair.scan.write(&out.join(&radar), &out.join(&meta))?;
        entries.push(FramePair {
            lidar: lidar.into(),
            radar: radar.into(),
            radar_meta: meta.into(),
            gt: Some("gt.json".into()),
        });
    }
    let manifest = Manifest {
        pairs: entries,
        max_range_m: cfg.radar.range_bins as f64 * cfg.radar.range_resolution,
        cost: CostConfig::default(),
        optimizer: OptimizerConfig::default(),
    };
    let path = out.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Optional replacements for the manifest's settings. A section present in
/// the file replaces the manifest's section as a whole.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    cost: Option<CostConfig>,
    optimizer: Option<OptimizerConfig>,
    max_range_m: Option<f64>,
}

struct Dataset {
    manifest: Manifest,
    clouds: Vec<Vec<Point3>>,
    grids: Vec<OccupancyGridIndex>,
}

fn load_dataset(manifest: &Path, config: Option<&Path>) -> Result<Dataset> {
    let mut m = Manifest::load(manifest)?;
    if let Some(p) = config {
        let o: Overrides = read_json(p)?;
        if let Some(c) = o.cost {
            c.validate()?;
            m.cost = c;
        }
        if let Some(c) = o.optimizer {
            c.validate()?;
            m.optimizer = c;
        }
        if let Some(r) = o.max_range_m {
            m.max_range_m = r;
        }
    }
    let mut clouds = Vec::new();
    let mut grids = Vec::new();
    for pair in &m.pairs {
        let (cloud, scan) = load_pair(pair, m.max_range_m)?;
        clouds.push(cloud.points);
        grids.push(build_grid(&scan, m.cost.v_th));
    }
    Ok(Dataset {
        manifest: m,
        clouds,
        grids,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub start: [f64; 6],
    pub solution: [f64; 6],
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub extrinsics: ExtrinsicsDoc,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub attempt_index: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub attempts: Vec<AttemptSummary>,
    pub trace: Vec<TracePoint>,
}

pub fn calibrate(
    manifest: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: u64,
    restarts: Option<usize>,
    init: Option<&Path>,
) -> Result<CalibrationOutput> {
    let mut data = load_dataset(manifest, config)?;
    if let Some(r) = restarts {
        data.manifest.optimizer.restarts = r;
    }
    let ocfg = &data.manifest.optimizer;
    let x0 = match init {
        Some(p) => Extrinsics::read_json(p)?,
        None => Extrinsics::IDENTITY,
    };
    check_in_bounds(&x0, ocfg, "initial value")?;
    let attempts = multistart_attempts_from(&data.clouds, &data.grids, &x0, ocfg, &data.manifest.cost, seed)?;
    let summaries = attempts
        .iter()
        .map(|a| AttemptSummary {
            start: a.trace[0].x,
            solution: a.extrinsics.to_array(),
            final_cost: a.final_cost,
            iterations: a.iterations,
            converged: a.converged,
        })
        .collect();
    let best = best_attempt(attempts).expect("at least one attempt");
    let output = CalibrationOutput {
        extrinsics: ExtrinsicsDoc::from(best.extrinsics),
        final_cost: best.final_cost,
        iterations: best.iterations,
        converged: best.converged,
        attempt_index: best.attempt_index,
        evaluations: best.evaluations,
        seed,
        attempts: summaries,
        trace: best.trace,
    };
    write_json(out, &output)?;
    Ok(output)
}

pub fn parse_axis(s: &str) -> Result<usize, String> {
    if let Some(k) = PARAMETER_NAMES.iter().position(|n| *n == s) {
        return Ok(k);
    }
    match s.parse::<usize>() {
        Ok(k) if k < 6 => Ok(k),
        _ => Err(format!("expected one of {} or an index 0-5", PARAMETER_NAMES.join(", "))),
    }
}

/// Displacements `-range, -range + step, ..., range`.
pub fn sweep_offsets(range: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(range >= 0.0) || !step.is_finite() || !range.is_finite() {
        bail!("sweep needs step > 0 and range >= 0, got step {step} and range {range}");
    }
    let n = (2.0 * range / step).round() as usize;
    Ok((0..=n).map(|k| -range + k as f64 * step).collect())
}

pub fn cost_sweep(
    manifest: &Path,
    config: Option<&Path>,
    center: Option<&Path>,
    axis: usize,
    range: Option<f64>,
    step: Option<f64>,
    out: &Path,
) -> Result<usize> {
    let rotation = axis < 3;
    let range = range.unwrap_or(if rotation { 5.0 } else { 2.0 });
    let step = step.unwrap_or(if rotation { 0.1 } else { 0.05 });
    let offsets = sweep_offsets(range, step)?;
    let data = load_dataset(manifest, config)?;
    let center = match center {
        Some(p) => Extrinsics::read_json(p)?,
        None => match data.manifest.pairs.iter().find_map(|p| p.gt.as_ref()) {
            Some(p) => Extrinsics::read_json(p)?,
            None => Extrinsics::IDENTITY,
        },
    };
    let mut csv = String::from("displacement,cost\n");
    for d in &offsets {
        let mut v = center.to_array();
        v[axis] += d;
        let e = Extrinsics::from_array(v);
        let mut cost = 0.0;
        for (cloud, grid) in data.clouds.iter().zip(&data.grids) {
            cost += total_cost(cloud, &e, grid, &data.manifest.cost)?.total;
        }
        writeln!(csv, "{d:.4},{cost:.6}").unwrap();
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    Ok(offsets.len())
}

/// Extrinsics from a calibration output or a bare extrinsics document.
fn read_estimate(path: &Path) -> Result<Extrinsics> {
    let value: serde_json::Value = read_json(path)?;
    let doc = value.get("extrinsics").cloned().unwrap_or(value);
    let doc: ExtrinsicsDoc =
        serde_json::from_value(doc).with_context(|| format!("{}: no extrinsics document", path.display()))?;
    Extrinsics::try_from(doc).with_context(|| path.display().to_string())
}

pub fn eval(results: &str, gt: &Path, out: &Path) -> Result<EvalReport> {
    let gt = Extrinsics::read_json(gt)?;
    let mut paths: Vec<PathBuf> = glob::glob(results)
        .with_context(|| format!("bad pattern {results:?}"))?
        .collect::<std::result::Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        bail!("no result files match {results:?}");
    }
    let estimates = paths
        .iter()
        .map(|p| Ok((p.display().to_string(), read_estimate(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&estimates, &gt);
    write_json(out, &report)?;
    Ok(report)
}
