use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix3x4, Matrix4};

use crate::{Error, Result};

/// The three matrices of a KITTI object-detection calibration file that
/// the left color camera needs.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiCalib {
    /// Rectified camera 2 projection.
    pub p2: Matrix3x4<f64>,
    pub r0_rect: Matrix3<f64>,
    pub tr_velo_to_cam: Matrix3x4<f64>,
}

fn parse_values(key: &str, rest: &str, expected: usize) -> Result<Vec<f64>> {
    let vals = rest
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Calib(format!("malformed float {tok:?} in {key}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(Error::Calib(format!(
            "{key}: expected {expected} values, got {}",
            vals.len()
        )));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Calib(format!("{key}: non-finite value")));
    }
    Ok(vals)
}

pub fn parse_kitti_calib(text: &str) -> Result<KittiCalib> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        match key.trim() {
            "P2" => p2 = Some(Matrix3x4::from_row_slice(&parse_values("P2", rest, 12)?)),
            "R0_rect" | "R_rect" => r0 = Some(Matrix3::from_row_slice(&parse_values("R0_rect", rest, 9)?)),
            "Tr_velo_to_cam" | "Tr_velo_cam" => {
                tr = Some(Matrix3x4::from_row_slice(&parse_values("Tr_velo_to_cam", rest, 12)?))
            }
            _ => {}
        }
    }
    Ok(KittiCalib {
        p2: p2.ok_or_else(|| Error::Calib("missing P2".into()))?,
        r0_rect: r0.ok_or_else(|| Error::Calib("missing R0_rect".into()))?,
        tr_velo_to_cam: tr.ok_or_else(|| Error::Calib("missing Tr_velo_to_cam".into()))?,
    })
}

fn pad4(m: &Matrix3x4<f64>) -> Matrix4<f64> {
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 4>(0, 0).copy_from(m);
    out
}

impl KittiCalib {
    pub fn identity() -> Self {
        Self {
            p2: Matrix3x4::identity(),
            r0_rect: Matrix3::identity(),
            tr_velo_to_cam: Matrix3x4::identity(),
        }
    }

    /// `P2 * R0_rect * Tr_velo_to_cam`: LiDAR point to homogeneous pixel.
    pub fn lidar_to_image(&self) -> Matrix3x4<f64> {
        let mut r0 = Matrix4::identity();
        r0.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r0_rect);
        self.p2 * r0 * pad4(&self.tr_velo_to_cam)
    }

    pub fn to_kitti_string(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, key: &str, vals: Vec<f64>| {
            let _ = write!(out, "{key}:");
            for v in vals {
                let _ = write!(out, " {v:.12e}");
            }
            out.push('\n');
        };
        let rows34 = |m: &Matrix3x4<f64>| (0..3).flat_map(|r| (0..4).map(move |c| m[(r, c)])).collect();
        row(&mut out, "P2", rows34(&self.p2));
        row(
            &mut out,
            "R0_rect",
            (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .map(|rc| self.r0_rect[rc])
                .collect(),
        );
        row(&mut out, "Tr_velo_to_cam", rows34(&self.tr_velo_to_cam));
        out
    }
}
