//! Rigid-transform parameterization and Cartesian/cylindrical conversion.
//!
//! Extrinsics are stored as three Euler angles in degrees plus a translation in
//! meters. The rotation is composed as `R = Rz(theta_z) * Ry(theta_y) * Rx(theta_x)`
//! (yaw, pitch, roll about fixed axes), and a LiDAR point maps into the radar
//! frame as `p_radar = R * p_lidar + t`.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::{Error, Result};

/// Cartesian point in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

impl From<Vector3<f64>> for Point3 {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Point in cylindrical coordinates around the sensor Z axis.
///
/// `theta` is always in `[0, 2π)` and `r` is never negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylindricalPoint {
    pub r: f64,
    pub theta: f64,
    pub z: f64,
}

impl CylindricalPoint {
    pub fn to_cartesian(&self) -> Point3 {
        Point3::new(self.r * self.theta.cos(), self.r * self.theta.sin(), self.z)
    }
}

/// Wraps an angle in radians into `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Six-parameter LiDAR-to-radar extrinsics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    /// Rotation about X in degrees.
    pub theta_x: f64,
    /// Rotation about Y in degrees.
    pub theta_y: f64,
    /// Rotation about Z in degrees.
    pub theta_z: f64,
    pub t_x: f64,
    pub t_y: f64,
    pub t_z: f64,
}

/// Names of the six parameters in vector order.
pub const PARAMETER_NAMES: [&str; 6] = ["theta_x", "theta_y", "theta_z", "t_x", "t_y", "t_z"];

impl Extrinsics {
    pub const IDENTITY: Extrinsics = Extrinsics {
        theta_x: 0.0,
        theta_y: 0.0,
        theta_z: 0.0,
        t_x: 0.0,
        t_y: 0.0,
        t_z: 0.0,
    };

    pub const fn new(theta_x: f64, theta_y: f64, theta_z: f64, t_x: f64, t_y: f64, t_z: f64) -> Self {
        Self {
            theta_x,
            theta_y,
            theta_z,
            t_x,
            t_y,
            t_z,
        }
    }

    /// Parameter vector `[theta_x, theta_y, theta_z, t_x, t_y, t_z]` (degrees, meters).
    pub fn to_array(&self) -> [f64; 6] {
        [self.theta_x, self.theta_y, self.theta_z, self.t_x, self.t_y, self.t_z]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.t_x, self.t_y, self.t_z)
    }

    /// `Rz * Ry * Rx`, angles converted from degrees here and nowhere else.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (sx, cx) = self.theta_x.to_radians().sin_cos();
        let (sy, cy) = self.theta_y.to_radians().sin_cos();
        let (sz, cz) = self.theta_z.to_radians().sin_cos();
        Matrix3::new(
            cz * cy,
            cz * sy * sx - sz * cx,
            cz * sy * cx + sz * sx,
            sz * cy,
            sz * sy * sx + cz * cx,
            sz * sy * cx - cz * sx,
            -sy,
            cy * sx,
            cy * cx,
        )
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.to_rotation_matrix(),
            translation: self.translation(),
        }
    }

    pub fn transform_point(&self, p: Point3) -> Point3 {
        self.to_transform().apply(p)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: ExtrinsicsDoc =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        doc.try_into().map_err(|e: Error| match e {
            Error::Invalid(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&ExtrinsicsDoc::from(*self))
            .expect("extrinsics serialize");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// On-disk extrinsics document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicsDoc {
    pub rotation_deg: [f64; 3],
    pub translation_m: [f64; 3],
    pub rotation_order: String,
}

impl From<Extrinsics> for ExtrinsicsDoc {
    fn from(e: Extrinsics) -> Self {
        Self {
            rotation_deg: [e.theta_x, e.theta_y, e.theta_z],
            translation_m: [e.t_x, e.t_y, e.t_z],
            rotation_order: "ZYX".to_string(),
        }
    }
}

impl TryFrom<ExtrinsicsDoc> for Extrinsics {
    type Error = Error;

    fn try_from(doc: ExtrinsicsDoc) -> Result<Self> {
        if doc.rotation_order != "ZYX" {
            return Err(Error::Invalid(format!(
                "rotation_order must be \"ZYX\", got {:?}",
                doc.rotation_order
            )));
        }
        let [tx, ty, tz] = doc.rotation_deg;
        let [x, y, z] = doc.translation_m;
        let e = Extrinsics::new(tx, ty, tz, x, y, z);
        if !e.is_finite() {
            return Err(Error::Invalid("extrinsics must be finite".into()));
        }
        Ok(e)
    }
}

/// General rigid transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        (self.rotation * p.to_vector() + self.translation).into()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

pub fn to_cylindrical(p: Point3) -> CylindricalPoint {
    let r = p.x.hypot(p.y);
    let theta = if r == 0.0 { 0.0 } else { wrap_two_pi(p.y.atan2(p.x)) };
    CylindricalPoint { r, theta, z: p.z }
}

pub fn transform_point(p: Point3, e: &Extrinsics) -> Point3 {
    e.transform_point(p)
}

/// Transforms every point into the radar frame and converts it to cylindrical
/// coordinates, preserving order.
pub fn transform_cloud(cloud: &[Point3], e: &Extrinsics) -> Result<Vec<CylindricalPoint>> {
    transform_cloud_with(cloud, e, ExecMode::default())
}

pub fn transform_cloud_with(
    cloud: &[Point3],
    e: &Extrinsics,
    mode: ExecMode,
) -> Result<Vec<CylindricalPoint>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tf = e.to_transform();
    let map = |p: &Point3| to_cylindrical(tf.apply(*p));
    Ok(crate::exec::map_collect(cloud, mode, map))
}
