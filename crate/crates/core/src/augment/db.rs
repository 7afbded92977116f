//! On-disk GT-sample database.
//!
//! ```text
//! <root>/index.txt            one "<class> <record-dir>" per line, '#' comments
//! <root>/<record>/points.bin  KITTI .bin layout (f32 x, y, z, intensity)
//! <root>/<record>/meta.txt    box3d = cx cy cz l w h yaw
//!                             box2d = u0 v0 u1 v1
//!                             depth = d
//!                             crop  = width height channels
//! <root>/<record>/crop.bin    little-endian f32, interleaved H x W x C
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::image::Image;
use super::paste::{Box3D, PixelBox, SampledObject};
use crate::geometry::PointCloud;
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.txt";

pub fn save_db(root: &Path, objects: &[SampledObject]) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut index = String::from("# class record\n");
    for (i, obj) in objects.iter().enumerate() {
        let name = format!("{:06}_{}", i, obj.class);
        let dir = root.join(&name);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("points.bin"), obj.points.to_kitti_bin())?;
        let b = &obj.box3d;
        let meta = format!(
            "box3d = {} {} {} {} {} {} {}\nbox2d = {} {} {} {}\ndepth = {}\ncrop = {} {} {}\n",
            b.center[0],
            b.center[1],
            b.center[2],
            b.size[0],
            b.size[1],
            b.size[2],
            b.yaw,
            obj.box2d.u0,
            obj.box2d.v0,
            obj.box2d.u1,
            obj.box2d.v1,
            obj.depth,
            obj.crop.width,
            obj.crop.height,
            obj.crop.channels
        );
        fs::write(dir.join("meta.txt"), meta)?;
        let crop: Vec<u8> = obj.crop.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join("crop.bin"), crop)?;
        index.push_str(&format!("{} {}\n", obj.class, name));
    }
    fs::write(root.join(INDEX_FILE), index)?;
    Ok(())
}

fn floats(meta: &HashMap<String, String>, key: &str, n: usize) -> Result<Vec<f64>> {
    let raw = meta
        .get(key)
        .ok_or_else(|| Error::Scene(format!("database record missing {key}")))?;
    let vals = raw
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Scene(format!("bad value {t:?} for {key}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != n {
        return Err(Error::Scene(format!("{key}: expected {n} values, got {}", vals.len())));
    }
    Ok(vals)
}

pub fn load_db(root: &Path) -> Result<Vec<SampledObject>> {
    let index = fs::read_to_string(root.join(INDEX_FILE))?;
    let mut out = Vec::new();
    for line in index
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (class, rel) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::Scene(format!("bad index line {line:?}")))?;
        let dir = root.join(rel.trim());
        let meta: HashMap<String, String> = fs::read_to_string(dir.join("meta.txt"))?
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let b = floats(&meta, "box3d", 7)?;
        let p = floats(&meta, "box2d", 4)?;
        let depth = floats(&meta, "depth", 1)?[0];
        let c = floats(&meta, "crop", 3)?;
        let (w, h, ch) = (c[0] as usize, c[1] as usize, c[2] as usize);
        let bytes = fs::read(dir.join("crop.bin"))?;
        if bytes.len() != w * h * ch * 4 {
            return Err(Error::Scene(format!(
                "{rel}: crop.bin has {} bytes, expected {}",
                bytes.len(),
                w * h * ch * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(SampledObject {
            class: class.to_string(),
            points: PointCloud::from_kitti_bin(&fs::read(dir.join("points.bin"))?)?,
            box3d: Box3D {
                center: [b[0], b[1], b[2]],
                size: [b[3], b[4], b[5]],
                yaw: b[6],
            },
            crop: Image {
                width: w,
                height: h,
                channels: ch,
                data,
            },
            box2d: PixelBox {
                u0: p[0] as usize,
                v0: p[1] as usize,
                u1: p[2] as usize,
                v1: p[3] as usize,
            },
            depth,
        });
    }
    Ok(out)
}
