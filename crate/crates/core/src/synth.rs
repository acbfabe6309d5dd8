//! Synthetic scenes and sensor models used as ground-truth oracles.
//!
//! Scenes are built from vertical walls and solid vertical cylinders. The
//! LiDAR is a ray caster returning the nearest hit per beam. The radar is
//! rendered geometrically: every primitive that intersects an azimuth bin's
//! beam wedge writes its reflectivity into the range bins it spans, with no
//! occlusion. Cylinders are treated as volume reflectors (foliage, poles), so
//! they fill every range bin between their near and far side.
//! Echoes can then be smeared with exponential falloff in range and azimuth,
//! which stands in for a real radar's range and beam sidelobes.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::exec::{map_range, ExecMode};
use crate::geometry::{Extrinsics, Point3, RigidTransform};
use crate::radar_grid::{AzimuthBinning, RadarScan, Sweep};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// `[bottom, top]` in meters.
    pub z_range: [f64; 2],
    pub reflectivity: u8,
    #[serde(default = "yes")]
    pub lidar_visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_range: [f64; 2],
    pub reflectivity: u8,
    #[serde(default = "yes")]
    pub lidar_visible: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub cylinders: Vec<Cylinder>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        for w in &self.walls {
            if !finite(&[w.start[0], w.start[1], w.end[0], w.end[1], w.z_range[0], w.z_range[1]]) {
                return Err(Error::Invalid("wall coordinates must be finite".into()));
            }
            if w.z_range[0] > w.z_range[1] {
                return Err(Error::Invalid("wall z_range must be [bottom, top]".into()));
            }
            if w.start == w.end {
                return Err(Error::Invalid("wall endpoints must differ".into()));
            }
        }
        for c in &self.cylinders {
            if !finite(&[c.center[0], c.center[1], c.radius, c.z_range[0], c.z_range[1]]) {
                return Err(Error::Invalid("cylinder parameters must be finite".into()));
            }
            if c.z_range[0] > c.z_range[1] || !(c.radius > 0.0) {
                return Err(Error::Invalid("cylinder needs positive radius and z_range [bottom, top]".into()));
            }
        }
        Ok(())
    }

    /// Rectangular courtyard with walls 20 to 60 m from the origin and 18
    /// bushes spread around the sensor. Every object is short enough to sit
    /// inside the radar's vertical beam at its range, and reflectivities cover
    /// both weighted intensity bands.
    pub fn canonical() -> Self {
        let wall = |start: [f64; 2], end: [f64; 2], half: f64, reflectivity: u8| Wall {
            start,
            end,
            z_range: [-half, half],
            reflectivity,
            lidar_visible: true,
        };
        let tree = |center: [f64; 2], radius: f64, half: f64, reflectivity: u8| Cylinder {
            center,
            radius,
            z_range: [-half, half],
            reflectivity,
            lidar_visible: true,
        };
        Scene {
            walls: vec![
                wall([44.0, -21.0], [44.0, 36.0], 0.60, 200),
                wall([44.0, 36.0], [-26.0, 36.0], 0.50, 120),
                wall([-26.0, 36.0], [-26.0, -21.0], 0.40, 200),
                wall([-26.0, -21.0], [44.0, -21.0], 0.30, 60),
            ],
            cylinders: vec![
                tree([26.72, -1.96], 2.81, 0.4, 120),
                tree([17.41, 7.39], 1.7, 0.28, 120),
                tree([21.86, 15.08], 1.86, 0.52, 60),
                tree([6.8, 12.91], 2.93, 0.26, 60),
                tree([0.91, 9.6], 0.67, 0.17, 120),
                tree([-6.17, 28.69], 2.7, 0.51, 120),
                tree([-11.83, 16.88], 1.6, 0.39, 120),
                tree([-23.36, 16.25], 1.81, 0.6, 200),
                tree([-20.2, 9.24], 2.7, 0.34, 200),
                tree([-24.14, 0.81], 2.66, 0.52, 120),
                tree([-26.4, -9.66], 1.15, 0.43, 120),
                tree([-14.11, -13.61], 2.31, 0.25, 60),
                tree([-8.0, -15.55], 2.53, 0.28, 200),
                tree([-2.92, -24.33], 0.85, 0.46, 60),
                tree([4.55, -19.41], 1.74, 0.34, 60),
                tree([7.66, -13.45], 3.06, 0.28, 200),
                tree([9.46, -8.29], 2.06, 0.27, 60),
                tree([25.51, -9.06], 1.27, 0.47, 200),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    /// Channel elevation angles in degrees, ascending.
    pub elevations_deg: Vec<f64>,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl LidarModel {
    /// `channels` beams spaced uniformly over `[fov_min, fov_max]` degrees.
    pub fn uniform(channels: usize, fov_min_deg: f64, fov_max_deg: f64, azimuth_step_deg: f64, max_range: f64) -> Self {
        let elevations_deg = if channels == 1 {
            vec![(fov_min_deg + fov_max_deg) / 2.0]
        } else {
            let step = (fov_max_deg - fov_min_deg) / (channels - 1) as f64;
            (0..channels).map(|i| fov_min_deg + step * i as f64).collect()
        };
        Self {
            elevations_deg,
            azimuth_step_deg,
            max_range,
        }
    }

    /// 32 channels over a 41.3 deg vertical field of view, 100 m.
    pub fn hdl32() -> Self {
        Self::uniform(32, -30.67, 10.63, 0.2, 100.0)
    }

    /// 128 channels over a 40 deg vertical field of view.
    pub fn alpha_prime() -> Self {
        Self::uniform(128, -25.0, 15.0, 0.2, 100.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elevations_deg.is_empty() {
            return Err(Error::Invalid("lidar needs at least one channel".into()));
        }
        if self.elevations_deg.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Invalid("lidar elevations must be sorted ascending".into()));
        }
        if !(self.max_range > 0.0) || !(self.azimuth_step_deg > 0.0 && self.azimuth_step_deg <= 360.0) {
            return Err(Error::Invalid("lidar max_range and azimuth_step_deg must be positive".into()));
        }
        Ok(())
    }

    fn columns(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarModel {
    pub azimuth_bins: usize,
    pub range_bins: usize,
    pub range_resolution: f64,
    /// Full vertical beamwidth in degrees.
    pub vertical_beamwidth: f64,
    pub noise_floor: u8,
    /// Decay length of echo smearing in range, meters. Zero disables it.
    #[serde(default)]
    pub range_spread: f64,
    /// Decay length of echo smearing across azimuth bins. Zero disables it.
    #[serde(default)]
    pub azimuth_spread: f64,
}

impl RadarModel {
    /// 400 x 2283 bins at 0.0438 m: a 100 m crop of a CTS350-X style scan.
    pub fn cts350x() -> Self {
        Self {
            azimuth_bins: 400,
            range_bins: 2283,
            range_resolution: 0.0438,
            vertical_beamwidth: 1.8,
            noise_floor: 20,
            range_spread: 0.4,
            azimuth_spread: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.azimuth_bins == 0 || self.range_bins == 0 || !(self.range_resolution > 0.0) {
            return Err(Error::Invalid("radar needs positive bin counts and range resolution".into()));
        }
        if !(self.vertical_beamwidth > 0.0 && self.vertical_beamwidth < 90.0) {
            return Err(Error::Invalid("radar vertical beamwidth must be in (0, 90) deg".into()));
        }
        if !(self.range_spread >= 0.0) || !(self.azimuth_spread >= 0.0) {
            return Err(Error::Invalid("radar spread lengths must be non-negative".into()));
        }
        Ok(())
    }

    pub fn azimuth_resolution(&self) -> f64 {
        360.0 / self.azimuth_bins as f64
    }
}

/// Pose of a vehicle rig on flat ground.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw_deg: f64,
}

impl PlanarPose {
    pub fn to_transform(&self) -> RigidTransform {
        Extrinsics::new(0.0, 0.0, self.yaw_deg, self.x, self.y, 0.0).to_transform()
    }
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Entry distance of a ray into a solid vertical cylinder with flat caps.
fn ray_cylinder(origin: &Point3, dir: &Point3, c: &Cylinder) -> Option<f64> {
    let (ox, oy) = (origin.x - c.center[0], origin.y - c.center[1]);
    let a = dir.x * dir.x + dir.y * dir.y;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let cc = ox * ox + oy * oy - c.radius * c.radius;
    if a < 1e-18 {
        if cc > 0.0 {
            return None;
        }
    } else {
        let b = ox * dir.x + oy * dir.y;
        let disc = b * b - a * cc;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        lo = (-b - s) / a;
        hi = (-b + s) / a;
    }
    if dir.z.abs() < 1e-18 {
        if origin.z < c.z_range[0] || origin.z > c.z_range[1] {
            return None;
        }
    } else {
        let t0 = (c.z_range[0] - origin.z) / dir.z;
        let t1 = (c.z_range[1] - origin.z) / dir.z;
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    (lo <= hi && lo > 1e-9).then_some(lo)
}

/// Hit distance of a ray on a vertical wall segment.
fn ray_wall(origin: &Point3, dir: &Point3, w: &Wall) -> Option<f64> {
    let seg = sub(w.end, w.start);
    let d = [dir.x, dir.y];
    let denom = cross(d, seg);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = sub(w.start, [origin.x, origin.y]);
    let t = cross(ao, seg) / denom;
    let s = cross(ao, d) / denom;
    if t <= 1e-9 || !(0.0..=1.0).contains(&s) {
        return None;
    }
    let z = origin.z + t * dir.z;
    (z >= w.z_range[0] && z <= w.z_range[1]).then_some(t)
}

/// Nearest-hit range along one ray, `None` beyond `max_range` or on a miss.
fn cast(scene: &Scene, origin: &Point3, dir: &Point3, max_range: f64) -> Option<f64> {
    let walls = scene.walls.iter().filter(|w| w.lidar_visible).filter_map(|w| ray_wall(origin, dir, w));
    let cyls = scene.cylinders.iter().filter(|c| c.lidar_visible).filter_map(|c| ray_cylinder(origin, dir, c));
    walls.chain(cyls).filter(|&t| t <= max_range).min_by(f64::total_cmp)
}

/// Renders the LiDAR cloud in the sensor frame. `sensor_pose` maps sensor
/// coordinates into the scene.
pub fn render_lidar(scene: &Scene, lidar: &LidarModel, sensor_pose: &RigidTransform) -> Vec<Point3> {
    render_lidar_with_noise(scene, lidar, sensor_pose, 0.0, 0)
}

/// Like [`render_lidar`], with zero-mean Gaussian range noise of `range_noise_std` meters.
pub fn render_lidar_with_noise(
    scene: &Scene,
    lidar: &LidarModel,
    sensor_pose: &RigidTransform,
    range_noise_std: f64,
    seed: u64,
) -> Vec<Point3> {
    let columns = lidar.columns();
    let step = TAU / columns as f64;
    let elevations: Vec<(f64, f64)> = lidar.elevations_deg.iter().map(|e| e.to_radians().sin_cos()).collect();
    let origin = Point3::from(sensor_pose.translation);
    let rot: Matrix3<f64> = sensor_pose.rotation;

    let per_column = map_range(columns, ExecMode::default(), |col| {
        let (sa, ca) = (col as f64 * step).sin_cos();
        let mut hits = Vec::new();
        for &(se, ce) in &elevations {
            let local = Point3::new(ce * ca, ce * sa, se);
            let dir = Point3::from(rot * local.to_vector());
            if let Some(t) = cast(scene, &origin, &dir, lidar.max_range) {
                hits.push((local, t));
            }
        }
        hits
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, range_noise_std.max(0.0)).expect("non-negative std");
    per_column
        .into_iter()
        .flatten()
        .map(|(d, t)| {
            let t = if range_noise_std > 0.0 { t + noise.sample(&mut rng) } else { t };
            Point3::new(d.x * t, d.y * t, d.z * t)
        })
        .collect()
}

/// Closed range interval `[near, far]` over which a primitive intersects the
/// horizontal sector between unit directions `lo` and `hi` (counterclockwise).
fn wall_sector_range(start: [f64; 2], end: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<(f64, f64)> {
    let d = sub(end, start);
    let (mut s0, mut s1) = (0.0f64, 1.0f64);
    // cross(lo, P(s)) >= 0 and cross(P(s), hi) >= 0
    for (c0, c1) in [(cross(lo, start), cross(lo, d)), (cross(start, hi), cross(d, hi))] {
        if c1.abs() < 1e-15 {
            if c0 < 0.0 {
                return None;
            }
        } else if c1 > 0.0 {
            s0 = s0.max(-c0 / c1);
        } else {
            s1 = s1.min(-c0 / c1);
        }
    }
    if s0 > s1 {
        return None;
    }
    let at = |s: f64| {
        let p = [start[0] + s * d[0], start[1] + s * d[1]];
        dot(p, p).sqrt()
    };
    let foot = (-dot(start, d) / dot(d, d)).clamp(s0, s1);
    Some((at(foot), at(s0).max(at(s1))))
}

fn disk_sector_range(center: [f64; 2], radius: f64, lo: [f64; 2], hi: [f64; 2]) -> Option<(f64, f64)> {
    let dist = dot(center, center).sqrt();
    let in_sector = |p: [f64; 2]| cross(lo, p) >= 0.0 && cross(p, hi) >= 0.0;
    let ray = |u: [f64; 2]| {
        let b = dot(u, center);
        let disc = b * b - dist * dist + radius * radius;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        (b + s > 0.0).then(|| ((b - s).max(0.0), b + s))
    };
    if dist <= radius {
        // Sensor inside the disk: every sector starts at zero range.
        let far = [lo, hi]
            .into_iter()
            .filter_map(ray)
            .map(|(_, f)| f)
            .fold(0.0, f64::max);
        let far = if in_sector(center) { far.max(dist + radius) } else { far };
        return Some((0.0, far));
    }
    if in_sector(center) {
        return Some((dist - radius, dist + radius));
    }
    let hits: Vec<_> = [lo, hi].into_iter().filter_map(ray).collect();
    if hits.is_empty() {
        return None;
    }
    let near = hits.iter().map(|h| h.0).fold(f64::INFINITY, f64::min);
    let far = hits.iter().map(|h| h.1).fold(0.0, f64::max);
    Some((near, far))
}

/// Spreads each value into its neighbors with geometric decay, keeping the
/// maximum: `out[i] = max_j v[j] * decay^|i - j|`.
fn smear(values: &mut [f64], decay: f64, circular: bool) {
    let n = values.len();
    // Two laps make the circular case wrap around fully.
    let laps = if circular { 2 } else { 1 };
    let mut carry = 0.0f64;
    for i in 0..n * laps {
        let v = &mut values[i % n];
        carry = (carry * decay).max(*v);
        *v = carry;
    }
    carry = 0.0;
    for i in (0..n * laps).rev() {
        let v = &mut values[i % n];
        carry = (carry * decay).max(*v);
        *v = carry;
    }
}

/// Renders the radar scan. The pose may translate and yaw the radar but not
/// tilt it, since walls and cylinders must stay vertical in the radar frame.
pub fn render_radar(scene: &Scene, radar: &RadarModel, sensor_pose: &RigidTransform) -> Result<RadarScan> {
    radar.validate()?;
    let z_axis = sensor_pose.rotation.column(2);
    if (z_axis[2] - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid("radar pose must not roll or pitch".into()));
    }
    let to_radar = sensor_pose.inverse();
    let planar = |p: [f64; 2]| {
        let q = to_radar.apply(Point3::new(p[0], p[1], 0.0));
        [q.x, q.y]
    };
    let dz = -sensor_pose.translation.z;
    let half_slope = (radar.vertical_beamwidth.to_radians() / 2.0).tan();

    enum Shape {
        Wall([f64; 2], [f64; 2]),
        Disk([f64; 2], f64),
    }
    let prims: Vec<(Shape, [f64; 2], u8)> = scene
        .walls
        .iter()
        .map(|w| (Shape::Wall(planar(w.start), planar(w.end)), w.z_range, w.reflectivity))
        .chain(
            scene
                .cylinders
                .iter()
                .map(|c| (Shape::Disk(planar(c.center), c.radius), c.z_range, c.reflectivity)),
        )
        .map(|(s, z, i)| (s, [z[0] + dz, z[1] + dz], i))
        .collect();

    let binning = AzimuthBinning::new(radar.azimuth_bins, 0.0, Sweep::Ccw);
    let extent = radar.range_bins as f64 * radar.range_resolution;
    let rows = map_range(radar.azimuth_bins, ExecMode::default(), |a| {
        let mut row = vec![0.0f64; radar.range_bins];
        let (l, h) = (binning.edge(a as f64), binning.edge(a as f64 + 1.0));
        let lo = [l.cos(), l.sin()];
        let hi = [h.cos(), h.sin()];
        for (shape, z, reflectivity) in &prims {
            let span = match shape {
                Shape::Wall(s, e) => wall_sector_range(*s, *e, lo, hi),
                Shape::Disk(c, r) => disk_sector_range(*c, *r, lo, hi),
            };
            let Some((near, far)) = span else { continue };
            // The cone |z| <= r * slope must reach the primitive's height interval.
            let visible_from = (z[0] / half_slope).max(-z[1] / half_slope).max(0.0);
            let near = near.max(visible_from);
            if near > far || near >= extent {
                continue;
            }
            let b0 = (near / radar.range_resolution) as usize;
            let b1 = ((far / radar.range_resolution) as usize).min(radar.range_bins - 1);
            for v in &mut row[b0..=b1] {
                *v = v.max(f64::from(*reflectivity));
            }
        }
        if radar.range_spread > 0.0 {
            smear(&mut row, (-radar.range_resolution / radar.range_spread).exp(), false);
        }
        row
    });

    let mut echo = rows.concat();
    if radar.azimuth_spread > 0.0 {
        let decay = (-1.0 / radar.azimuth_spread).exp();
        let n = radar.range_bins;
        let mut column = vec![0.0; radar.azimuth_bins];
        for b in 0..n {
            for (a, v) in column.iter_mut().enumerate() {
                *v = echo[a * n + b];
            }
            smear(&mut column, decay, true);
            for (a, v) in column.iter().enumerate() {
                echo[a * n + b] = *v;
            }
        }
    }
    let mut scan = RadarScan::blank(radar.azimuth_bins, radar.range_bins, radar.range_resolution, radar.vertical_beamwidth);
    scan.azimuth_resolution = radar.azimuth_resolution();
    scan.intensities = echo
        .into_iter()
        .map(|v| v.round().clamp(f64::from(radar.noise_floor), 255.0) as u8)
        .collect();
    Ok(scan)
}

/// Scene, sensors and rig poses for a synthetic data set. Missing fields
/// fall back to the canonical scene, the 128-channel LiDAR, the CTS350-X
/// style radar and a single frame at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scene: Scene,
    pub lidar: LidarModel,
    pub radar: RadarModel,
    /// Standard deviation of LiDAR range noise, meters.
    pub range_noise_std: f64,
    pub frames: Vec<PlanarPose>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene: Scene::canonical(),
            lidar: LidarModel::alpha_prime(),
            radar: RadarModel::cts350x(),
            range_noise_std: 0.0,
            frames: vec![PlanarPose::default()],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.lidar.validate()?;
        self.radar.validate()?;
        if !(self.range_noise_std >= 0.0) {
            return Err(Error::Invalid("range_noise_std must be non-negative".into()));
        }
        if self.frames.is_empty() {
            return Err(Error::Invalid("frames must not be empty".into()));
        }
        Ok(())
    }

    /// Renders every frame. Frame `i` draws its noise from `seed + i`.
    pub fn render(&self, gt: &Extrinsics, seed: u64) -> Result<Vec<SyntheticPair>> {
        self.validate()?;
        self.frames
            .iter()
            .enumerate()
            .map(|(i, rig)| {
                generate_pair_at(&self.scene, &self.lidar, &self.radar, gt, rig, seed.wrapping_add(i as u64), self.range_noise_std)
            })
            .collect()
    }
}

/// LiDAR cloud and radar scan of the same scene under a known extrinsic.
#[derive(Clone, Debug)]
pub struct SyntheticPair {
    pub cloud: Vec<Point3>,
    pub scan: RadarScan,
    pub gt: Extrinsics,
}

/// Renders a pair with the radar at the scene origin.
pub fn generate_pair(
    scene: &Scene,
    lidar: &LidarModel,
    radar: &RadarModel,
    gt: &Extrinsics,
    seed: u64,
    range_noise_std: f64,
) -> Result<SyntheticPair> {
    generate_pair_at(scene, lidar, radar, gt, &PlanarPose::default(), seed, range_noise_std)
}

/// Renders a pair with the radar at `rig`. The LiDAR sits at `rig ∘ gt`, so
/// `gt` maps its points into the radar frame.
pub fn generate_pair_at(
    scene: &Scene,
    lidar: &LidarModel,
    radar: &RadarModel,
    gt: &Extrinsics,
    rig: &PlanarPose,
    seed: u64,
    range_noise_std: f64,
) -> Result<SyntheticPair> {
    scene.validate()?;
    lidar.validate()?;
    let radar_pose = rig.to_transform();
    let lidar_pose = radar_pose.compose(&gt.to_transform());
    let scan = render_radar(scene, radar, &radar_pose)?;
    let cloud = render_lidar_with_noise(scene, lidar, &lidar_pose, range_noise_std, seed);
    Ok(SyntheticPair { cloud, scan, gt: *gt })
}
