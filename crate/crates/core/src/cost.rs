//! Spatial-consistency cost of a LiDAR cloud against a radar occupancy grid.
//!
//! Each transformed point contributes `indicator * height * intensity`:
//! whether it lands in an occupied wedge, how close it sits to the vertical
//! center of that wedge, and a weight from the cell's intensity band.

use serde::{Deserialize, Serialize};

use crate::exec::{chunked_reduce, ExecMode};
use crate::geometry::{to_cylindrical, CylindricalPoint, Extrinsics, Point3};
use crate::radar_grid::OccupancyGridIndex;
use crate::{Error, Result};

/// Shape of the vertical factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightVariant {
    /// `(1 - (2z/h)^2)^2`: 1 at the cell's mid-plane, 0 on its top and bottom faces.
    #[default]
    CenterPeaked,
    /// `h^2 / (2 d_u^2 d_l^2)` clamped to `literal_cap`; grows toward the faces.
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub v_th: u8,
    pub w_th: u8,
    pub high_intensity_weight: f64,
    pub height_variant: HeightVariant,
    pub literal_cap: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            v_th: 50,
            w_th: 80,
            high_intensity_weight: 1.5,
            height_variant: HeightVariant::CenterPeaked,
            literal_cap: 1e6,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v_th >= self.w_th {
            return Err(Error::Invalid(format!(
                "v_th ({}) must be below w_th ({})",
                self.v_th, self.w_th
            )));
        }
        if !(self.high_intensity_weight >= 1.0) {
            return Err(Error::Invalid(format!(
                "high_intensity_weight must be >= 1, got {}",
                self.high_intensity_weight
            )));
        }
        if !(self.literal_cap > 0.0) {
            return Err(Error::Invalid(format!("literal_cap must be positive, got {}", self.literal_cap)));
        }
        Ok(())
    }
}

/// Cost of one extrinsic hypothesis with its factor breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    /// Points with a strictly positive contribution.
    pub hit_count: usize,
    pub points_evaluated: usize,
    /// Points inside an occupied cell.
    pub indicator_sum: f64,
    /// Height factor summed over points inside an occupied cell.
    pub height_sum: f64,
    pub height_variant: HeightVariant,
}

impl CostReport {
    fn empty(variant: HeightVariant) -> Self {
        Self {
            total: 0.0,
            hit_count: 0,
            points_evaluated: 0,
            indicator_sum: 0.0,
            height_sum: 0.0,
            height_variant: variant,
        }
    }
}

pub fn indicator(p: &CylindricalPoint, index: &OccupancyGridIndex) -> u8 {
    u8::from(index.locate(p).is_some())
}

/// Vertical factor for a point at height `z` inside a cell of height `h`.
pub fn height_restrainer(z: f64, h: f64, cfg: &CostConfig) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("cell height must be positive, got {h}")));
    }
    Ok(height_factor(z, h, cfg))
}

#[inline]
fn height_factor(z: f64, h: f64, cfg: &CostConfig) -> f64 {
    match cfg.height_variant {
        HeightVariant::CenterPeaked => {
            let u = 2.0 * z / h;
            let v = (1.0 - u * u).max(0.0);
            v * v
        }
        HeightVariant::PaperLiteral => {
            let d_u = h / 2.0 - z;
            let d_l = z + h / 2.0;
            let denom = 2.0 * d_u * d_u * d_l * d_l;
            if denom > 0.0 {
                (h * h / denom).min(cfg.literal_cap)
            } else {
                cfg.literal_cap
            }
        }
    }
}

#[inline]
pub fn intensity_factor(cell_intensity: u8, cfg: &CostConfig) -> f64 {
    if cell_intensity > cfg.w_th {
        cfg.high_intensity_weight
    } else if cell_intensity > cfg.v_th {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn point_cost(p: &CylindricalPoint, index: &OccupancyGridIndex, cfg: &CostConfig) -> f64 {
    match index.locate(p) {
        Some(hit) => height_factor(p.z, hit.height, cfg) * intensity_factor(hit.intensity, cfg),
        None => 0.0,
    }
}

/// Fixed-point accumulator for per-point contributions.
///
/// Contributions are rounded to multiples of 2^-64 and summed as integers, so
/// the total does not depend on point order or on how work is split between
/// threads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct FixedSum(i128);

const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

impl FixedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        self.0 += (v * FIXED_SCALE).round() as i128;
    }

    fn merge(self, other: FixedSum) -> FixedSum {
        FixedSum(self.0 + other.0)
    }

    fn value(self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Partial {
    total: FixedSum,
    height: FixedSum,
    indicator: usize,
    hits: usize,
    points: usize,
}

impl Partial {
    fn merge(self, o: Partial) -> Partial {
        Partial {
            total: self.total.merge(o.total),
            height: self.height.merge(o.height),
            indicator: self.indicator + o.indicator,
            hits: self.hits + o.hits,
            points: self.points + o.points,
        }
    }
}

/// Cost of `cloud` (LiDAR frame) under `e` against `index`.
pub fn total_cost(
    cloud: &[Point3],
    e: &Extrinsics,
    index: &OccupancyGridIndex,
    cfg: &CostConfig,
) -> Result<CostReport> {
    total_cost_with(cloud, e, index, cfg, ExecMode::default())
}

pub fn total_cost_with(
    cloud: &[Point3],
    e: &Extrinsics,
    index: &OccupancyGridIndex,
    cfg: &CostConfig,
    mode: ExecMode,
) -> Result<CostReport> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tf = e.to_transform();
    let leaf = |chunk: &[Point3]| {
        let mut acc = Partial {
            points: chunk.len(),
            ..Partial::default()
        };
        for p in chunk {
            let c = to_cylindrical(tf.apply(*p));
            if let Some(hit) = index.locate(&c) {
                let h = height_factor(c.z, hit.height, cfg);
                let m = h * intensity_factor(hit.intensity, cfg);
                acc.indicator += 1;
                acc.height.add(h);
                if m > 0.0 {
                    acc.hits += 1;
                    acc.total.add(m);
                }
            }
        }
        acc
    };
    let sum = chunked_reduce(cloud, mode, leaf, Partial::default(), Partial::merge);
    Ok(CostReport {
        total: sum.total.value(),
        hit_count: sum.hits,
        points_evaluated: sum.points,
        indicator_sum: sum.indicator as f64,
        height_sum: sum.height.value(),
        ..CostReport::empty(cfg.height_variant)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform_cloud;
    use crate::radar_grid::{build_grid, RadarScan};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn single_cell_grid(intensity: u8) -> OccupancyGridIndex {
        let mut scan = RadarScan::blank(400, 200, 0.1, 1.8);
        scan.set_intensity(10, 100, intensity);
        build_grid(&scan, 50)
    }

    fn cell_center() -> CylindricalPoint {
        CylindricalPoint {
            r: 10.05,
            theta: 10.5 * 0.9f64.to_radians(),
            z: 0.0,
        }
    }

    fn random_grid(rng: &mut ChaCha8Rng) -> OccupancyGridIndex {
        let mut scan = RadarScan::blank(90, 120, 0.25, 6.0);
        for v in scan.intensities.iter_mut() {
            *v = if rng.gen_bool(0.3) { rng.gen() } else { 0 };
        }
        build_grid(&scan, 50)
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                let r = rng.gen_range(0.0..32.0);
                let t = rng.gen_range(0.0..TAU);
                Point3::new(r * t.cos(), r * t.sin(), rng.gen_range(-1.0..1.0))
            })
            .collect()
    }

    #[test]
    fn height_restrainer_center_peaked() {
        let cfg = CostConfig::default();
        for h in [0.1, 1.0, 3.7] {
            assert_eq!(height_restrainer(0.0, h, &cfg).unwrap(), 1.0);
            assert_eq!(height_restrainer(h / 2.0, h, &cfg).unwrap(), 0.0);
            assert_eq!(height_restrainer(-h / 2.0, h, &cfg).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(height_restrainer(0.25, 1.0, &cfg).unwrap(), 0.5625, epsilon = 1e-15);
        assert!(height_restrainer(0.0, 0.0, &cfg).is_err());
        assert!(height_restrainer(0.0, -1.0, &cfg).is_err());
    }

    #[test]
    fn height_restrainer_paper_literal() {
        let cfg = CostConfig {
            height_variant: HeightVariant::PaperLiteral,
            ..CostConfig::default()
        };
        assert_eq!(height_restrainer(0.0, 2.0, &cfg).unwrap(), 2.0);
        assert_eq!(height_restrainer(1.0, 2.0, &cfg).unwrap(), cfg.literal_cap);
        assert_eq!(height_restrainer(0.999_999, 2.0, &cfg).unwrap(), cfg.literal_cap);
    }

    #[test]
    fn intensity_bands() {
        let cfg = CostConfig::default();
        assert_eq!(intensity_factor(100, &cfg), 1.5);
        assert_eq!(intensity_factor(60, &cfg), 1.0);
        assert_eq!(intensity_factor(30, &cfg), 0.0);
        // band edges as printed: strict lower bound on each band
        assert_eq!(intensity_factor(80, &cfg), 1.0);
        assert_eq!(intensity_factor(81, &cfg), 1.5);
        assert_eq!(intensity_factor(50, &cfg), 0.0);
        assert_eq!(intensity_factor(51, &cfg), 1.0);
    }

    #[test]
    fn indicator_and_point_cost_examples() {
        let cfg = CostConfig::default();
        let grid = single_cell_grid(100);
        let center = cell_center();
        assert_eq!(indicator(&center, &grid), 1);
        let elsewhere = CylindricalPoint { theta: 1.0, ..center };
        assert_eq!(indicator(&elsewhere, &grid), 0);
        assert_eq!(point_cost(&elsewhere, &grid, &cfg), 0.0);
        assert_eq!(point_cost(&center, &grid, &cfg), 1.5);

        let grid = single_cell_grid(60);
        let h = grid.height_at(center.r);
        let quarter = CylindricalPoint { z: h / 4.0, ..center };
        assert_abs_diff_eq!(point_cost(&quarter, &grid, &cfg), 0.5625, epsilon = 1e-12);
    }

    #[test]
    fn indicator_agrees_with_locate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = random_grid(&mut rng);
        for _ in 0..10_000 {
            let p = CylindricalPoint {
                r: rng.gen_range(0.0..35.0),
                theta: rng.gen_range(0.0..TAU),
                z: rng.gen_range(-2.0..2.0),
            };
            assert_eq!(indicator(&p, &grid) == 1, grid.locate(&p).is_some());
        }
    }

    #[test]
    fn total_cost_against_empty_grid() {
        let grid = build_grid(&RadarScan::blank(400, 100, 0.1, 1.8), 50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 500);
        let r = total_cost(&cloud, &Extrinsics::IDENTITY, &grid, &CostConfig::default()).unwrap();
        assert_eq!((r.total, r.hit_count, r.points_evaluated), (0.0, 0, 500));
    }

    #[test]
    fn total_cost_of_singleton() {
        let cfg = CostConfig::default();
        let grid = single_cell_grid(100);
        let p = cell_center().to_cartesian();
        let r = total_cost(&[p], &Extrinsics::IDENTITY, &grid, &cfg).unwrap();
        assert_abs_diff_eq!(r.total, point_cost(&to_cylindrical(p), &grid, &cfg), epsilon = 1e-15);
        assert_eq!(r.hit_count, 1);
        assert!(total_cost(&[], &Extrinsics::IDENTITY, &grid, &cfg).is_err());
    }

    #[test]
    fn total_cost_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = random_grid(&mut rng);
        let cloud = random_cloud(&mut rng, 10_000);
        let e = Extrinsics::new(1.0, -2.0, 30.0, 0.3, -0.2, 0.1);
        for variant in [HeightVariant::CenterPeaked, HeightVariant::PaperLiteral] {
            let cfg = CostConfig {
                height_variant: variant,
                ..CostConfig::default()
            };
            let mut naive = 0.0;
            let mut hits = 0;
            for c in transform_cloud(&cloud, &e).unwrap() {
                let m = point_cost(&c, &grid, &cfg);
                naive += m;
                hits += usize::from(m > 0.0);
            }
            let r = total_cost(&cloud, &e, &grid, &cfg).unwrap();
            assert!(hits > 100);
            assert_eq!(r.hit_count, hits);
            assert_abs_diff_eq!(r.total, naive, epsilon = 1e-9 * naive.max(1.0));
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid = random_grid(&mut rng);
        let cloud = random_cloud(&mut rng, 50_000);
        let e = Extrinsics::new(0.5, 0.2, -3.0, 0.1, 0.0, -0.05);
        let cfg = CostConfig::default();
        let a = total_cost_with(&cloud, &e, &grid, &cfg, ExecMode::Sequential).unwrap();
        let b = total_cost_with(&cloud, &e, &grid, &cfg, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn removing_occupied_cell_never_increases_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut grid = random_grid(&mut rng);
        let cloud = random_cloud(&mut rng, 5_000);
        let cfg = CostConfig::default();
        let mut prev = total_cost(&cloud, &Extrinsics::IDENTITY, &grid, &cfg).unwrap().total;
        for cell in grid.cells().into_iter().take(200) {
            grid.clear_cell(cell.azimuth_bin, cell.range_bin);
            let now = total_cost(&cloud, &Extrinsics::IDENTITY, &grid, &cfg).unwrap().total;
            assert!(now <= prev);
            prev = now;
        }
    }

    #[test]
    fn saturating_high_band_leaves_cost_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut scan = RadarScan::blank(90, 120, 0.25, 6.0);
        for v in scan.intensities.iter_mut() {
            *v = rng.gen();
        }
        let cloud = random_cloud(&mut rng, 5_000);
        let cfg = CostConfig::default();
        let before = total_cost(&cloud, &Extrinsics::IDENTITY, &build_grid(&scan, cfg.v_th), &cfg).unwrap();
        for v in scan.intensities.iter_mut() {
            if *v > cfg.w_th {
                *v = 255;
            }
        }
        let after = total_cost(&cloud, &Extrinsics::IDENTITY, &build_grid(&scan, cfg.v_th), &cfg).unwrap();
        assert_eq!(before, after);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn center_peaked_is_even_and_decreasing(h in 0.01..10.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let cfg = CostConfig::default();
            let (za, zb) = (a.min(b) * h / 2.0, a.max(b) * h / 2.0);
            let fa = height_restrainer(za, h, &cfg).unwrap();
            let fb = height_restrainer(zb, h, &cfg).unwrap();
            prop_assert_eq!(fa, height_restrainer(-za, h, &cfg).unwrap());
            prop_assert!((0.0..=1.0).contains(&fa));
            prop_assert!(fb <= fa);
        }

        #[test]
        fn cost_bounds_and_monotone_in_points(seed in 0u64..500, extra in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = random_grid(&mut rng);
            let cloud = random_cloud(&mut rng, 400);
            let cfg = CostConfig::default();
            let base = total_cost(&cloud, &Extrinsics::IDENTITY, &grid, &cfg).unwrap();
            prop_assert!(base.total >= 0.0);
            prop_assert!(base.hit_count <= base.points_evaluated);
            prop_assert!(base.total <= cfg.high_intensity_weight * base.points_evaluated as f64);
            let mut more = cloud.clone();
            more.extend(random_cloud(&mut rng, extra));
            let grown = total_cost(&more, &Extrinsics::IDENTITY, &grid, &cfg).unwrap();
            prop_assert!(grown.total >= base.total);
        }

        #[test]
        fn cost_is_order_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = random_grid(&mut rng);
            let mut cloud = random_cloud(&mut rng, 3000);
            let cfg = CostConfig::default();
            let e = Extrinsics::new(0.3, 0.0, 5.0, 0.0, 0.2, 0.0);
            let a = total_cost(&cloud, &e, &grid, &cfg).unwrap();
            cloud.reverse();
            cloud.rotate_left(seed as usize % 3000);
            let b = total_cost(&cloud, &e, &grid, &cfg).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
