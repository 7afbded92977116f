use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

/// Numbers from one fusion pass. Everything except the timings is a pure
/// function of the config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: String,
    pub sampler: String,
    pub points: usize,
    pub points_dropped: usize,
    pub fit_residual: f64,
    pub sampled_pixels: usize,
    pub rays: usize,
    pub ray_voxels: usize,
    pub anchors: usize,
    pub budget: usize,
    pub fused: usize,
    pub occupancy_before: usize,
    pub occupancy_after: usize,
    pub sampler_loss: f64,
    /// Absent when no rays were cast.
    pub ray_loss: Option<f64>,
    pub total_loss: f64,
    pub field_digest: String,
    pub grad_check: Option<f64>,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    /// SHA-256 over the canonical JSON of the report without timings.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.timings.clear();
        let bytes = serde_json::to_vec(&canon).expect("report serializes");
        hex(&Sha256::digest(bytes))
    }

    /// One JSON record per stage followed by a summary record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.timings {
            let rec = serde_json::json!({ "record": "stage", "stage": t.stage, "ms": t.ms });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        let mut summary = serde_json::to_value(self).expect("report serializes");
        let obj = summary.as_object_mut().expect("report is an object");
        obj.remove("timings");
        obj.insert("record".into(), "summary".into());
        obj.insert("hash".into(), self.hash().into());
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}
