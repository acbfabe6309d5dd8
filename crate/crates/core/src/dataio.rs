//! Point-cloud files, frame metadata, stationary-frame selection and
//! dataset manifests.
//!
//! Point clouds are read from CSV with an `x,y,z[,intensity]` header, or from
//! little-endian `f32` records next to a `<file>.json` sidecar declaring the
//! record layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostConfig;
use crate::geometry::Point3;
use crate::optimizer::OptimizerConfig;
use crate::radar_grid::{crop_range, load_radar_scan, RadarScan};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Xyz,
    Xyzi,
}

impl Layout {
    pub fn fields(self) -> usize {
        match self {
            Layout::Xyz => 3,
            Layout::Xyzi => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BinarySidecar {
    layout: Layout,
}

/// Points read from a file, plus how many records were dropped as non-finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedCloud {
    pub points: Vec<Point3>,
    pub rejected: usize,
}

/// Path of the layout sidecar for a binary cloud.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn load_point_cloud(path: &Path) -> Result<LoadedCloud> {
    let (points, rejected) = if is_csv(path) {
        read_csv_cloud(path)?
    } else {
        read_binary_cloud(path)?
    };
    if rejected > 0 {
        log::warn!("{}: dropped {rejected} non-finite points", path.display());
    }
    if points.is_empty() {
        return Err(Error::format(path, "no finite points"));
    }
    Ok(LoadedCloud { points, rejected })
}

fn read_csv_cloud(path: &Path) -> Result<(Vec<Point3>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[..3] != ["x", "y", "z"] || (names.len() == 4 && names[3] != "intensity") || names.len() > 4 {
        return Err(Error::format(path, format!("expected header x,y,z[,intensity], got {}", names.join(","))));
    }
    let mut points = Vec::new();
    let mut rejected = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut xyz = [0.0; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            *v = record[k]
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: cannot parse {:?} as a number", line + 2, &record[k])))?;
        }
        let p = Point3::new(xyz[0], xyz[1], xyz[2]);
        if p.is_finite() {
            points.push(p);
        } else {
            rejected += 1;
        }
    }
    Ok((points, rejected))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn read_binary_cloud(path: &Path) -> Result<(Vec<Point3>, usize)> {
    let side = sidecar_path(path);
    let text = match fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                message: format!("not a .csv file and no layout sidecar at {}", side.display()),
            })
        }
        Err(e) => return Err(Error::io(&side, e)),
    };
    let sidecar: BinarySidecar =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let record = 4 * sidecar.layout.fields();
    if bytes.len() % record != 0 {
        return Err(Error::format(
            path,
            format!("{} bytes is not a whole number of {record}-byte records", bytes.len()),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / record);
    let mut rejected = 0;
    for rec in bytes.chunks_exact(record) {
        let f = |k: usize| f64::from(f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()));
        let p = Point3::new(f(0), f(1), f(2));
        if p.is_finite() {
            points.push(p);
        } else {
            rejected += 1;
        }
    }
    Ok((points, rejected))
}

/// Writes a cloud as CSV when the extension is `.csv`, otherwise as `f32`
/// binary with an `xyz` sidecar.
pub fn write_point_cloud(path: &Path, points: &[Point3]) -> Result<()> {
    if is_csv(path) {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["x", "y", "z"]).map_err(|e| csv_error(path, e))?;
        for p in points {
            w.write_record([p.x.to_string(), p.y.to_string(), p.z.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    } else {
        let mut bytes = Vec::with_capacity(points.len() * 12);
        for p in points {
            for v in [p.x, p.y, p.z] {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let text = serde_json::to_string(&BinarySidecar { layout: Layout::Xyz }).expect("sidecar serializes");
        fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_id: String,
    pub timestamp_us: i64,
    pub speed_mps: f64,
}

/// Reads a `frame_id,timestamp_us,speed_mps` CSV.
pub fn load_frame_meta(path: &Path) -> Result<Vec<FrameMeta>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let frames = reader
        .deserialize()
        .collect::<std::result::Result<Vec<FrameMeta>, _>>()
        .map_err(|e| csv_error(path, e))?;
    validate_frames(&frames).map_err(|e| match e {
        Error::Invalid(m) => Error::format(path, m),
        other => other,
    })?;
    Ok(frames)
}

pub fn validate_frames(frames: &[FrameMeta]) -> Result<()> {
    if let Some(f) = frames.iter().find(|f| !(f.speed_mps >= 0.0)) {
        return Err(Error::Invalid(format!("frame {}: speed must be non-negative", f.frame_id)));
    }
    if let Some(w) = frames.windows(2).find(|w| w[1].timestamp_us <= w[0].timestamp_us) {
        return Err(Error::Invalid(format!(
            "frame {}: timestamps must be strictly increasing",
            w[1].frame_id
        )));
    }
    Ok(())
}

/// Ids of frames whose speed, and that of the `window - 1` frames before
/// them, is below `v_max`.
pub fn select_stationary(frames: &[FrameMeta], v_max: f64, window: usize) -> Vec<String> {
    let window = window.max(1);
    let mut run = 0;
    let mut selected = Vec::new();
    for f in frames {
        run = if f.speed_mps < v_max { run + 1 } else { 0 };
        if run >= window {
            selected.push(f.frame_id.clone());
        }
    }
    selected
}

/// A radar frame and the LiDAR frame closest to it in time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub radar_id: String,
    pub lidar_id: String,
    /// LiDAR minus radar timestamp.
    pub dt_us: i64,
}

/// Pairs every radar frame with the nearest LiDAR frame; ties go to the earlier one.
pub fn pair_by_timestamp(lidar: &[FrameMeta], radar: &[FrameMeta]) -> Vec<FrameMatch> {
    if lidar.is_empty() {
        return Vec::new();
    }
    radar
        .iter()
        .map(|r| {
            // First LiDAR frame at or after the radar frame.
            let i = lidar.partition_point(|l| l.timestamp_us < r.timestamp_us);
            let candidates = [i.checked_sub(1), (i < lidar.len()).then_some(i)];
            let best = candidates
                .into_iter()
                .flatten()
                .min_by_key(|&j| ((lidar[j].timestamp_us - r.timestamp_us).abs(), j))
                .expect("lidar is non-empty");
            FrameMatch {
                radar_id: r.frame_id.clone(),
                lidar_id: lidar[best].frame_id.clone(),
                dt_us: lidar[best].timestamp_us - r.timestamp_us,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    pub lidar: PathBuf,
    pub radar: PathBuf,
    pub radar_meta: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
}

fn default_max_range() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<FramePair>,
    #[serde(default = "default_max_range")]
    pub max_range_m: f64,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl Manifest {
    /// Reads a manifest, resolving pair paths against its directory and
    /// checking that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.pairs.is_empty() {
            return Err(Error::format(path, "pairs must not be empty"));
        }
        if !(m.max_range_m > 0.0) {
            return Err(Error::format(path, "max_range_m must be positive"));
        }
        m.cost.validate().map_err(|e| Error::format(path, e.to_string()))?;
        m.optimizer.validate().map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for pair in &mut m.pairs {
            for p in [&mut pair.lidar, &mut pair.radar, &mut pair.radar_meta]
                .into_iter()
                .chain(pair.gt.as_mut())
            {
                *p = base.join(&*p);
                if !p.exists() {
                    return Err(Error::format(path, format!("referenced file {} does not exist", p.display())));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Loads one pair's cloud and its radar scan cropped to `max_range`.
pub fn load_pair(pair: &FramePair, max_range: f64) -> Result<(LoadedCloud, RadarScan)> {
    let cloud = load_point_cloud(&pair.lidar)?;
    let scan = crop_range(&load_radar_scan(&pair.radar, &pair.radar_meta)?, max_range)?;
    Ok((cloud, scan))
}
