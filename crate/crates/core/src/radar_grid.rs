//! Radar polar scans and the cylindrical occupancy grid built from them.
//!
//! A scan is an azimuth x range intensity image. Every pixel above the validity
//! threshold becomes a wedge-shaped 3-D cell: one azimuth bin wide, one range
//! bin deep, and as tall as the vertical beam cone at that range. Occupancy is
//! kept as a dense table so point lookup is a pair of index computations.

use std::f64::consts::TAU;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_two_pi, CylindricalPoint};
use crate::{Error, Result};

/// Direction in which azimuth bin indices increase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    #[default]
    Ccw,
    Cw,
}

/// Sidecar JSON describing a polar image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarMetadata {
    pub range_resolution_m: f64,
    pub azimuth_resolution_deg: f64,
    pub vertical_beamwidth_deg: f64,
    #[serde(default)]
    pub azimuth_start_deg: f64,
    #[serde(default)]
    pub sweep: Sweep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarScan {
    pub azimuth_bins: usize,
    pub range_bins: usize,
    /// Meters per range bin.
    pub range_resolution: f64,
    /// Degrees per azimuth bin.
    pub azimuth_resolution: f64,
    /// Full vertical beamwidth in degrees.
    pub vertical_beamwidth: f64,
    /// Azimuth of the leading edge of bin 0, degrees from the sensor +X axis.
    pub azimuth_start: f64,
    pub sweep: Sweep,
    /// Row-major, rows are azimuth bins and columns are range bins.
    pub intensities: Vec<u8>,
}

impl RadarScan {
    /// Scan of all-zero intensities.
    pub fn blank(azimuth_bins: usize, range_bins: usize, range_resolution: f64, vertical_beamwidth: f64) -> Self {
        Self {
            azimuth_bins,
            range_bins,
            range_resolution,
            azimuth_resolution: 360.0 / azimuth_bins as f64,
            vertical_beamwidth,
            azimuth_start: 0.0,
            sweep: Sweep::Ccw,
            intensities: vec![0; azimuth_bins * range_bins],
        }
    }

    pub fn metadata(&self) -> RadarMetadata {
        RadarMetadata {
            range_resolution_m: self.range_resolution,
            azimuth_resolution_deg: self.azimuth_resolution,
            vertical_beamwidth_deg: self.vertical_beamwidth,
            azimuth_start_deg: self.azimuth_start,
            sweep: self.sweep,
        }
    }

    pub fn from_parts(azimuth_bins: usize, range_bins: usize, meta: &RadarMetadata, intensities: Vec<u8>) -> Result<Self> {
        let scan = Self {
            azimuth_bins,
            range_bins,
            range_resolution: meta.range_resolution_m,
            azimuth_resolution: meta.azimuth_resolution_deg,
            vertical_beamwidth: meta.vertical_beamwidth_deg,
            azimuth_start: meta.azimuth_start_deg,
            sweep: meta.sweep,
            intensities,
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.azimuth_bins == 0 || self.range_bins == 0 {
            return Err(Error::Invalid("scan must have at least one azimuth and one range bin".into()));
        }
        if !(self.range_resolution > 0.0 && self.range_resolution.is_finite()) {
            return Err(Error::Invalid(format!(
                "range_resolution_m must be positive, got {}",
                self.range_resolution
            )));
        }
        let sweep = self.azimuth_bins as f64 * self.azimuth_resolution;
        if !((sweep - 360.0).abs() <= 1e-6) {
            return Err(Error::Invalid(format!(
                "azimuth_resolution_deg {} x {} azimuth rows covers {sweep} deg, expected 360",
                self.azimuth_resolution, self.azimuth_bins
            )));
        }
        if !(self.vertical_beamwidth > 0.0 && self.vertical_beamwidth < 180.0) {
            return Err(Error::Invalid(format!(
                "vertical_beamwidth_deg must be in (0, 180), got {}",
                self.vertical_beamwidth
            )));
        }
        if !self.azimuth_start.is_finite() {
            return Err(Error::Invalid("azimuth_start_deg must be finite".into()));
        }
        if self.intensities.len() != self.azimuth_bins * self.range_bins {
            return Err(Error::Invalid(format!(
                "intensities hold {} values, expected {} x {}",
                self.intensities.len(),
                self.azimuth_bins,
                self.range_bins
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn intensity(&self, azimuth_bin: usize, range_bin: usize) -> u8 {
        self.intensities[azimuth_bin * self.range_bins + range_bin]
    }

    pub fn set_intensity(&mut self, azimuth_bin: usize, range_bin: usize, value: u8) {
        self.intensities[azimuth_bin * self.range_bins + range_bin] = value;
    }

    /// Radial extent covered by the range bins.
    pub fn extent(&self) -> f64 {
        self.range_bins as f64 * self.range_resolution
    }

    pub fn azimuth_binning(&self) -> AzimuthBinning {
        AzimuthBinning::new(self.azimuth_bins, self.azimuth_start, self.sweep)
    }

    pub fn write(&self, image_path: &Path, metadata_path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(self.range_bins as u32, self.azimuth_bins as u32, self.intensities.clone())
            .expect("buffer length matches dimensions");
        let mut bytes = Vec::new();
        let encoder = image::codecs::pnm::PnmEncoder::new(&mut bytes).with_subtype(
            image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary),
        );
        img.write_with_encoder(encoder)
            .map_err(|e| Error::format(image_path, e.to_string()))?;
        std::fs::write(image_path, bytes).map_err(|e| Error::io(image_path, e))?;
        let meta = serde_json::to_string_pretty(&self.metadata()).expect("metadata serialize");
        std::fs::write(metadata_path, meta + "\n").map_err(|e| Error::io(metadata_path, e))
    }
}

/// Maps azimuth angles onto bin indices for a given start angle and sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AzimuthBinning {
    pub bins: usize,
    /// Radians per bin.
    pub width: f64,
    /// Radians.
    pub start: f64,
    pub sweep: Sweep,
}

impl AzimuthBinning {
    pub fn new(bins: usize, start_deg: f64, sweep: Sweep) -> Self {
        Self {
            bins,
            width: TAU / bins as f64,
            start: start_deg.to_radians(),
            sweep,
        }
    }

    /// Angle swept from the leading edge of bin 0, in `[0, 2π)`.
    #[inline]
    pub fn offset(&self, theta: f64) -> f64 {
        match self.sweep {
            Sweep::Ccw => wrap_two_pi(theta - self.start),
            Sweep::Cw => wrap_two_pi(self.start - theta),
        }
    }

    #[inline]
    pub fn bin_of(&self, theta: f64) -> usize {
        let b = (self.offset(theta) / self.width) as usize;
        b.min(self.bins - 1)
    }

    /// Sensor-frame azimuth of a bin center, in `[0, 2π)`.
    pub fn center(&self, bin: usize) -> f64 {
        self.edge(bin as f64 + 0.5)
    }

    /// Sensor-frame azimuth at a fractional bin position.
    pub fn edge(&self, position: f64) -> f64 {
        let swept = position * self.width;
        match self.sweep {
            Sweep::Ccw => wrap_two_pi(self.start + swept),
            Sweep::Cw => wrap_two_pi(self.start - swept),
        }
    }
}

/// Reads a binary PGM polar image and its JSON metadata sidecar.
pub fn load_radar_scan(polar_image_path: &Path, metadata_path: &Path) -> Result<RadarScan> {
    let meta_text = std::fs::read_to_string(metadata_path).map_err(|e| Error::io(metadata_path, e))?;
    let meta: RadarMetadata =
        serde_json::from_str(&meta_text).map_err(|e| Error::format(metadata_path, e.to_string()))?;

    let bytes = std::fs::read(polar_image_path).map_err(|e| Error::io(polar_image_path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| Error::format(polar_image_path, e.to_string()))?;
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::UnsupportedFormat {
                path: polar_image_path.to_path_buf(),
                message: format!("expected 8-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    let (cols, rows) = gray.dimensions();
    RadarScan::from_parts(rows as usize, cols as usize, &meta, gray.into_raw()).map_err(|e| match e {
        Error::Invalid(msg) => Error::format(metadata_path, msg),
        other => other,
    })
}

/// Drops range columns beyond `max_range`, keeping `floor(max_range / Δr)` bins.
pub fn crop_range(scan: &RadarScan, max_range: f64) -> Result<RadarScan> {
    if !(max_range > 0.0) {
        return Err(Error::Invalid(format!("max_range must be positive, got {max_range}")));
    }
    let keep = (max_range / scan.range_resolution).floor() as usize;
    if keep == 0 {
        return Err(Error::Invalid(format!(
            "max_range {max_range} m is shorter than one range bin ({} m)",
            scan.range_resolution
        )));
    }
    if keep >= scan.range_bins {
        return Ok(scan.clone());
    }
    let mut intensities = Vec::with_capacity(scan.azimuth_bins * keep);
    for row in scan.intensities.chunks_exact(scan.range_bins) {
        intensities.extend_from_slice(&row[..keep]);
    }
    Ok(RadarScan {
        range_bins: keep,
        intensities,
        ..scan.clone()
    })
}

/// Front and rear face heights of a cell centered at `center_r`.
pub fn cell_heights(center_r: f64, delta_r: f64, beta_v_deg: f64) -> Result<(f64, f64)> {
    if !(beta_v_deg > 0.0 && beta_v_deg < 90.0) {
        return Err(Error::Invalid(format!("vertical beamwidth must be in (0, 90) deg, got {beta_v_deg}")));
    }
    if center_r < delta_r / 2.0 {
        return Err(Error::DegenerateCell {
            center_r,
            half_bin: delta_r / 2.0,
        });
    }
    let slope = 2.0 * (beta_v_deg.to_radians() / 2.0).tan();
    Ok(((center_r - delta_r / 2.0) * slope, (center_r + delta_r / 2.0) * slope))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccupancyCell {
    pub azimuth_bin: usize,
    pub range_bin: usize,
    pub center_r: f64,
    pub center_theta: f64,
    pub intensity: u8,
    pub h_front: f64,
    pub h_rear: f64,
}

/// Result of a successful [`OccupancyGridIndex::locate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellHit {
    pub azimuth_bin: usize,
    pub range_bin: usize,
    pub intensity: u8,
    /// Full cone height `2 r tan(β_V / 2)` at the point's own range.
    pub height: f64,
}

#[derive(Clone, Debug)]
pub struct OccupancyGridIndex {
    azimuth: AzimuthBinning,
    range_bins: usize,
    range_resolution: f64,
    inv_range_resolution: f64,
    vertical_beamwidth: f64,
    half_cone_slope: f64,
    max_range: f64,
    v_th: u8,
    /// Cell intensity, or 0 when the cell is not occupied.
    occupancy: Vec<u8>,
    occupied: usize,
}

/// Builds the occupancy index from every pixel brighter than `v_th`.
pub fn build_grid(scan: &RadarScan, v_th: u8) -> OccupancyGridIndex {
    let max_range = scan.extent();
    let mut occupied = 0;
    let occupancy = scan
        .intensities
        .iter()
        .map(|&i| {
            if i > v_th {
                occupied += 1;
                i
            } else {
                0
            }
        })
        .collect();
    OccupancyGridIndex {
        azimuth: scan.azimuth_binning(),
        range_bins: scan.range_bins,
        range_resolution: scan.range_resolution,
        inv_range_resolution: 1.0 / scan.range_resolution,
        vertical_beamwidth: scan.vertical_beamwidth,
        half_cone_slope: (scan.vertical_beamwidth.to_radians() / 2.0).tan(),
        max_range,
        v_th,
        occupancy,
        occupied,
    }
}

impl OccupancyGridIndex {
    pub fn azimuth_binning(&self) -> AzimuthBinning {
        self.azimuth
    }

    pub fn azimuth_bins(&self) -> usize {
        self.azimuth.bins
    }

    pub fn range_bins(&self) -> usize {
        self.range_bins
    }

    pub fn range_resolution(&self) -> f64 {
        self.range_resolution
    }

    pub fn vertical_beamwidth(&self) -> f64 {
        self.vertical_beamwidth
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn v_th(&self) -> u8 {
        self.v_th
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    /// Cone height at range `r`.
    #[inline]
    pub fn height_at(&self, r: f64) -> f64 {
        2.0 * r * self.half_cone_slope
    }

    /// Intensity of an occupied cell, `None` when empty.
    #[inline]
    pub fn cell_intensity(&self, azimuth_bin: usize, range_bin: usize) -> Option<u8> {
        match self.occupancy[azimuth_bin * self.range_bins + range_bin] {
            0 => None,
            i => Some(i),
        }
    }

    /// Marks a cell empty. Used to probe monotonicity of the cost.
    pub fn clear_cell(&mut self, azimuth_bin: usize, range_bin: usize) {
        let slot = &mut self.occupancy[azimuth_bin * self.range_bins + range_bin];
        if *slot != 0 {
            *slot = 0;
            self.occupied -= 1;
        }
    }

    #[inline]
    pub fn locate(&self, p: &CylindricalPoint) -> Option<CellHit> {
        if !(p.r < self.max_range) {
            return None;
        }
        let range_bin = ((p.r * self.inv_range_resolution) as usize).min(self.range_bins - 1);
        let azimuth_bin = self.azimuth.bin_of(p.theta);
        let intensity = self.cell_intensity(azimuth_bin, range_bin)?;
        let height = self.height_at(p.r);
        if p.z.abs() > height / 2.0 {
            return None;
        }
        Some(CellHit {
            azimuth_bin,
            range_bin,
            intensity,
            height,
        })
    }

    /// Materializes every occupied cell in row-major order.
    pub fn cells(&self) -> Vec<OccupancyCell> {
        let mut out = Vec::with_capacity(self.occupied);
        for (idx, &intensity) in self.occupancy.iter().enumerate() {
            if intensity == 0 {
                continue;
            }
            let azimuth_bin = idx / self.range_bins;
            let range_bin = idx % self.range_bins;
            let center_r = (range_bin as f64 + 0.5) * self.range_resolution;
            let Ok((h_front, h_rear)) = cell_heights(center_r, self.range_resolution, self.vertical_beamwidth) else {
                continue;
            };
            out.push(OccupancyCell {
                azimuth_bin,
                range_bin,
                center_r,
                center_theta: self.azimuth.center(azimuth_bin),
                intensity,
                h_front,
                h_rear,
            });
        }
        out
    }
}
