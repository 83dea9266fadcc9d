//! File formats: point-cloud and feature binaries, calibration/scene/model
//! JSON, PPM images, and the CSV reports.
//!
//! All binary formats are little-endian with a 4-byte magic and a u32
//! version so foreign tooling can sanity-check inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bev::BevMap;
use crate::calib::{Camera, CameraRig, Extrinsics, Intrinsics};
use crate::detect::{ApEntry, Detection, DetectionSet, EvalReport};
use crate::error::{Error, Result};
use crate::fusion::{conv_flops, conv_flops_cropped, ConvCostSpec};
use crate::image_bev::{FeatureImage, RgbImage};
use crate::pillar::{PillarEncoder, ENCODER_INPUTS};
use crate::sim::{SimSummary, SimTrace};
use crate::slicing::{Box3D, RawPoint};

pub const POINT_CLOUD_MAGIC: &[u8; 4] = b"LPCD";
pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const ENCODER_MAGIC: &[u8; 4] = b"PENC";
pub const BEV_MAGIC: &[u8; 4] = b"BEVM";
pub const FORMAT_VERSION: u32 = 1;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::data(format!("cannot open {}: {e}", path.display()))
    })?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::data(format!("cannot create {}: {e}", path.display()))
    })?))
}

fn read_magic(r: &mut impl Read, expect: &[u8; 4], what: &str) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expect {
        return Err(Error::data(format!("{what}: bad magic {magic:?}")));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::data(format!("{what}: unsupported version {version}")));
    }
    Ok(())
}

fn write_magic(w: &mut impl Write, magic: &[u8; 4]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32s(w: &mut impl Write, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

// ---------------------------------------------------------------- points --

pub fn write_point_cloud(path: &Path, points: &[RawPoint]) -> Result<()> {
    let mut w = create(path)?;
    write_magic(&mut w, POINT_CLOUD_MAGIC)?;
    w.write_all(&(points.len() as u64).to_le_bytes())?;
    for p in points {
        write_f32s(&mut w, &[p.x, p.y, p.z, p.r, p.m])?;
    }
    Ok(())
}

pub fn read_point_cloud(path: &Path) -> Result<Vec<RawPoint>> {
    let mut r = open(path)?;
    read_magic(&mut r, POINT_CLOUD_MAGIC, "point cloud")?;
    let count = read_u64(&mut r)? as usize;
    let values = read_f32s(&mut r, count * 5)?;
    Ok(values
        .chunks_exact(5)
        .map(|c| RawPoint { x: c[0], y: c[1], z: c[2], r: c[3], m: c[4] })
        .collect())
}

// ----------------------------------------------------------------- scene --

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFileBox {
    pub center: [f64; 3],
    pub dims: [f64; 3],
    pub yaw: f64,
    pub class_id: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub frame_id: u64,
    pub boxes: Vec<SceneFileBox>,
}

pub fn write_scene(path: &Path, frame_id: u64, boxes: &[Box3D]) -> Result<()> {
    let file = SceneFile {
        frame_id,
        boxes: boxes
            .iter()
            .map(|b| SceneFileBox {
                center: [b.center.x, b.center.y, b.center.z],
                dims: [b.dims.0, b.dims.1, b.dims.2],
                yaw: b.yaw,
                class_id: b.class_id,
            })
            .collect(),
    };
    write_json(path, &file)
}

pub fn read_scene(path: &Path) -> Result<(u64, Vec<Box3D>)> {
    let file: SceneFile = read_json(path)?;
    let boxes = file
        .boxes
        .iter()
        .map(|b| {
            Box3D::new(
                Vector3::new(b.center[0], b.center[1], b.center[2]),
                (b.dims[0], b.dims[1], b.dims[2]),
                b.yaw,
                b.class_id,
                1.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((file.frame_id, boxes))
}

// ----------------------------------------------------------- calibration --

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibFileCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
    /// Row-major 3x3 ego-to-camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub fov_deg: f64,
    pub azimuth_center_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibFile {
    pub cameras: Vec<CalibFileCamera>,
}

pub fn write_calibration(path: &Path, rig: &CameraRig) -> Result<()> {
    let cameras = rig
        .cameras()
        .iter()
        .map(|cam| {
            let r = cam.extrinsics.rotation();
            let t = cam.extrinsics.translation();
            CalibFileCamera {
                fx: cam.intrinsics.fx,
                fy: cam.intrinsics.fy,
                cx: cam.intrinsics.cx,
                cy: cam.intrinsics.cy,
                image_w: cam.intrinsics.image_w,
                image_h: cam.intrinsics.image_h,
                rotation: [
                    r[(0, 0)], r[(0, 1)], r[(0, 2)],
                    r[(1, 0)], r[(1, 1)], r[(1, 2)],
                    r[(2, 0)], r[(2, 1)], r[(2, 2)],
                ],
                translation: [t.x, t.y, t.z],
                fov_deg: cam.fov_deg,
                azimuth_center_deg: cam.azimuth_center_deg,
            }
        })
        .collect();
    write_json(path, &CalibFile { cameras })
}

pub fn read_calibration(path: &Path) -> Result<CameraRig> {
    let file: CalibFile = read_json(path)?;
    let cameras = file
        .cameras
        .iter()
        .map(|c| {
            let rotation = Matrix3::new(
                c.rotation[0], c.rotation[1], c.rotation[2],
                c.rotation[3], c.rotation[4], c.rotation[5],
                c.rotation[6], c.rotation[7], c.rotation[8],
            );
            let translation = Vector3::new(c.translation[0], c.translation[1], c.translation[2]);
            Camera::new(
                Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.image_w, c.image_h)?,
                Extrinsics::new(rotation, translation)?,
                c.fov_deg,
                c.azimuth_center_deg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraRig::new(cameras))
}

// ------------------------------------------------------------------- ppm --

/// Writes a binary (P6) portable pixmap.
pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    w.write_all(image.data())?;
    Ok(())
}

/// Reads a binary (P6) portable pixmap with 8-bit samples.
pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let mut r = open(path)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::data("truncated ppm header".to_string()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P6" {
        return Err(Error::data("not a P6 ppm".to_string()));
    }
    let width: usize = token(&bytes)?.parse().map_err(|_| Error::data("bad ppm width".to_string()))?;
    let height: usize =
        token(&bytes)?.parse().map_err(|_| Error::data("bad ppm height".to_string()))?;
    let maxval: usize =
        token(&bytes)?.parse().map_err(|_| Error::data("bad ppm maxval".to_string()))?;
    if maxval != 255 {
        return Err(Error::data(format!("unsupported ppm maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(Error::data("truncated ppm payload".to_string()));
    }
    RgbImage::new(width, height, bytes[pos..pos + need].to_vec())
}

// -------------------------------------------------------------- features --

pub fn write_feature_image(path: &Path, f: &FeatureImage) -> Result<()> {
    let mut w = create(path)?;
    write_magic(&mut w, FEATURE_MAGIC)?;
    for dim in [f.height as u32, f.width as u32, f.channels as u32] {
        w.write_all(&dim.to_le_bytes())?;
    }
    write_f32s(&mut w, f.data())
}

pub fn read_feature_image(path: &Path, camera: usize) -> Result<FeatureImage> {
    let mut r = open(path)?;
    read_magic(&mut r, FEATURE_MAGIC, "feature image")?;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let c = read_u32(&mut r)? as usize;
    let data = read_f32s(&mut r, h * w * c)?;
    FeatureImage::new(h, w, c, camera, data)
}

// -------------------------------------------------------- encoder weights --

pub fn write_encoder(path: &Path, enc: &PillarEncoder) -> Result<()> {
    let mut w = create(path)?;
    write_magic(&mut w, ENCODER_MAGIC)?;
    w.write_all(&(enc.channels() as u32).to_le_bytes())?;
    w.write_all(&(ENCODER_INPUTS as u32).to_le_bytes())?;
    w.write_all(&enc.seed().to_le_bytes())?;
    write_f32s(&mut w, enc.weights())
}

pub fn read_encoder(path: &Path) -> Result<PillarEncoder> {
    let mut r = open(path)?;
    read_magic(&mut r, ENCODER_MAGIC, "encoder weights")?;
    let channels = read_u32(&mut r)? as usize;
    let inputs = read_u32(&mut r)? as usize;
    if inputs != ENCODER_INPUTS {
        return Err(Error::data(format!(
            "encoder blob has {inputs} inputs per point, expected {ENCODER_INPUTS}"
        )));
    }
    let seed = read_u64(&mut r)?;
    let weights = read_f32s(&mut r, channels * ENCODER_INPUTS)?;
    PillarEncoder::from_parts(channels, weights, seed)
}

// ------------------------------------------------------------- bev dumps --

pub fn write_bev(path: &Path, map: &BevMap) -> Result<()> {
    let mut w = create(path)?;
    write_magic(&mut w, BEV_MAGIC)?;
    for dim in [map.nx() as u32, map.ny() as u32, map.channels() as u32] {
        w.write_all(&dim.to_le_bytes())?;
    }
    write_f32s(&mut w, map.data())?;
    let mask_bytes: Vec<u8> = map.mask().iter().map(|&m| m as u8).collect();
    w.write_all(&mask_bytes)?;
    Ok(())
}

pub fn read_bev(path: &Path) -> Result<BevMap> {
    let mut r = open(path)?;
    read_magic(&mut r, BEV_MAGIC, "bev map")?;
    let nx = read_u32(&mut r)? as usize;
    let ny = read_u32(&mut r)? as usize;
    let c = read_u32(&mut r)? as usize;
    let data = read_f32s(&mut r, nx * ny * c)?;
    let mut mask_bytes = vec![0u8; nx * ny];
    r.read_exact(&mut mask_bytes)?;
    let mut map = BevMap::zeros(nx, ny, c);
    map.data_mut().copy_from_slice(&data);
    for i in 0..nx {
        for j in 0..ny {
            map.set_occupied(i, j, mask_bytes[i * ny + j] != 0);
        }
    }
    Ok(map)
}

// ------------------------------------------------------------------ json --

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = open(path)?;
    Ok(serde_json::from_reader(r)?)
}

// ------------------------------------------------------------------- csv --

pub fn write_detections_csv(path: &Path, dets: &DetectionSet) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "frame_id,slice,class,score,cx,cy,cz,l,w,h,yaw")?;
    for d in dets.iter() {
        let b = &d.bbox;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            d.frame_id,
            d.slice_index,
            b.class_id,
            b.score,
            b.center.x,
            b.center.y,
            b.center.z,
            b.dims.0,
            b.dims.1,
            b.dims.2,
            b.yaw
        )?;
    }
    Ok(())
}

pub fn read_detections_csv(path: &Path) -> Result<DetectionSet> {
    let mut r = open(path)?;
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut dets = DetectionSet::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::data(format!(
                "{}: line {} has {} fields, expected 11",
                path.display(),
                ln + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::data(format!("bad number '{s}' on line {}", ln + 1)))
        };
        let parse_u = |s: &str| -> Result<u64> {
            s.trim().parse().map_err(|_| Error::data(format!("bad integer '{s}' on line {}", ln + 1)))
        };
        dets.push(Detection {
            frame_id: parse_u(fields[0])?,
            slice_index: parse_u(fields[1])? as u32,
            bbox: Box3D::new(
                Vector3::new(parse_f(fields[4])?, parse_f(fields[5])?, parse_f(fields[6])?),
                (parse_f(fields[7])?, parse_f(fields[8])?, parse_f(fields[9])?),
                parse_f(fields[10])?,
                parse_u(fields[2])? as u32,
                parse_f(fields[3])?,
            )?,
        });
    }
    Ok(dets)
}

pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "class,threshold_m,ap,n_gt,n_det")?;
    for ApEntry { class_id, threshold_m, ap, n_gt, n_det } in &report.entries {
        let ap = ap.map(|v| v.to_string()).unwrap_or_else(|| "absent".to_string());
        writeln!(w, "{class_id},{threshold_m},{ap},{n_gt},{n_det}")?;
    }
    let map = report.mean_ap.map(|v| v.to_string()).unwrap_or_else(|| "absent".to_string());
    writeln!(w, "mAP,,{map},,")?;
    Ok(())
}

pub fn write_flops_csv(path: &Path, stage: &[ConvCostSpec]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "stage,flops_full,flops_cropped,ratio")?;
    let mut total_full = 0u128;
    let mut total_cropped = 0u128;
    for spec in stage {
        let full = conv_flops(spec);
        let cropped = conv_flops_cropped(spec);
        total_full += full;
        total_cropped += cropped;
        writeln!(w, "{},{},{},{}", spec.name, full, cropped, cropped as f64 / full as f64)?;
    }
    writeln!(
        w,
        "total,{},{},{}",
        total_full,
        total_cropped,
        total_cropped as f64 / total_full as f64
    )?;
    Ok(())
}

pub fn write_sim_trace_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "slice,arrival_ms,start_ms,finish_ms,wait_ms,e2e_ms")?;
    for s in &trace.slices {
        let start = s.stages.first().map(|e| e.start_ms).unwrap_or(s.arrival_ms);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.slice,
            s.arrival_ms,
            start,
            s.finish_ms(),
            s.wait_ms,
            s.end_to_end_ms
        )?;
    }
    Ok(())
}

pub fn write_sim_summary_csv(path: &Path, rows: &[SimSummary]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "model,throughput_hz,completion_rate_hz,mean_e2e_ms,max_e2e_ms,mean_wait_ms,wait_growth_ms_per_slice"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.model,
            r.throughput_hz,
            r.completion_rate_hz,
            r.mean_e2e_ms,
            r.max_e2e_ms,
            r.mean_wait_ms,
            r.wait_growth_ms_per_slice
        )?;
    }
    Ok(())
}
