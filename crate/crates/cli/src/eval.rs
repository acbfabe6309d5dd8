use lrcalib::geometry::ExtrinsicsDoc;
use lrcalib::Extrinsics;
use serde::{Deserialize, Serialize};

/// One value per extrinsic parameter. Angles in degrees, translations in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
    pub t_x: f64,
    pub t_y: f64,
    pub t_z: f64,
}

impl From<[f64; 6]> for Params {
    fn from(v: [f64; 6]) -> Self {
        Self {
            theta_x: v[0],
            theta_y: v[1],
            theta_z: v[2],
            t_x: v[3],
            t_y: v[4],
            t_z: v[5],
        }
    }
}

impl Params {
    pub fn to_array(self) -> [f64; 6] {
        [self.theta_x, self.theta_y, self.theta_z, self.t_x, self.t_y, self.t_z]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub source: String,
    /// Estimate minus ground truth.
    pub error: Params,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: usize,
    pub gt: ExtrinsicsDoc,
    pub mean: Params,
    /// Population standard deviation.
    pub std: Params,
    pub per_run: Vec<RunError>,
}

pub fn evaluate(estimates: &[(String, Extrinsics)], gt: &Extrinsics) -> EvalReport {
    let g = gt.to_array();
    let per_run: Vec<RunError> = estimates
        .iter()
        .map(|(source, e)| {
            let v = e.to_array();
            RunError {
                source: source.clone(),
                error: Params::from(std::array::from_fn(|k| v[k] - g[k])),
            }
        })
        .collect();
    // Welford's running mean and squared deviation.
    let mut mean = [0.0; 6];
    let mut m2 = [0.0; 6];
    for (i, run) in per_run.iter().enumerate() {
        let x = run.error.to_array();
        for k in 0..6 {
            let delta = x[k] - mean[k];
            mean[k] += delta / (i + 1) as f64;
            m2[k] += delta * (x[k] - mean[k]);
        }
    }
    let n = per_run.len().max(1) as f64;
    EvalReport {
        runs: per_run.len(),
        gt: ExtrinsicsDoc::from(*gt),
        mean: Params::from(mean),
        std: Params::from(m2.map(|s| (s / n).max(0.0).sqrt())),
        per_run,
    }
}
