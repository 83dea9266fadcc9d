//! Deterministic synthetic scenes: boxes, surface-sampled points, ground
//! clutter, and flat silhouette images — enough signal for the reference
//! feature path without any real sensor data.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bev::GridSpec;
use crate::calib::{Camera, CameraRig};
use crate::error::{Error, Result};
use crate::image_bev::RgbImage;
use crate::io;
use crate::rng::DetRng;
use crate::slicing::{Box3D, RawPoint};

/// Rotation period of the simulated 20 Hz LiDAR, seconds.
pub const ROTATION_PERIOD_S: f32 = 0.05;

/// Ground plane height in the ego frame (sensor ~1.8 m above ground).
pub const GROUND_Z: f64 = -1.8;

/// Class templates: `(class_id, length, width, height, silhouette color)`.
pub const CLASS_TEMPLATES: [(u32, f64, f64, f64, [u8; 3]); 3] = [
    (0, 4.5, 1.9, 1.6, [210, 40, 40]),  // car
    (1, 0.7, 0.7, 1.7, [40, 210, 40]),  // pedestrian
    (2, 1.8, 0.6, 1.4, [40, 40, 210]),  // cyclist
];

pub fn class_color(class_id: u32) -> [u8; 3] {
    CLASS_TEMPLATES
        .iter()
        .find(|t| t.0 == class_id)
        .map(|t| t.4)
        .unwrap_or([255, 255, 255])
}

pub fn class_dims(class_id: u32) -> Option<(f64, f64, f64)> {
    CLASS_TEMPLATES.iter().find(|t| t.0 == class_id).map(|t| (t.1, t.2, t.3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub n_objects: usize,
    pub clutter_points: usize,
    /// Closest object center, meters.
    pub min_range_m: f64,
    /// Farthest object center as a fraction of the grid half-extent.
    pub max_range_frac: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams { n_objects: 8, clutter_points: 4000, min_range_m: 6.0, max_range_frac: 0.8 }
    }
}

/// A fully materialized synthetic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneData {
    pub frame_id: u64,
    pub points: Vec<RawPoint>,
    pub boxes: Vec<Box3D>,
    pub rig: CameraRig,
    pub images: Vec<RgbImage>,
}

fn half_extent(grid: &GridSpec) -> f64 {
    grid.x_max.min(-grid.x_min).min(grid.y_max).min(-grid.y_min)
}

fn sample_boxes(rng: &mut DetRng, params: &SceneParams, grid: &GridSpec) -> Vec<Box3D> {
    let max_range = params.max_range_frac * half_extent(grid);
    let mut boxes: Vec<Box3D> = Vec::new();
    for _ in 0..params.n_objects {
        let mut placed = false;
        for _attempt in 0..200 {
            let (class_id, l0, w0, h0, _) = CLASS_TEMPLATES[rng.next_index(CLASS_TEMPLATES.len())];
            let scale = rng.uniform(0.9, 1.1);
            let (l, w, h) = (l0 * scale, w0 * scale, h0 * scale);
            let range = rng.uniform(params.min_range_m, max_range);
            let az = rng.uniform(0.0, 360.0f64).to_radians();
            let center = Vector3::new(range * az.cos(), range * az.sin(), GROUND_Z + h / 2.0);
            let yaw = rng.uniform(-std::f64::consts::PI, std::f64::consts::PI);
            let diag = (l * l + w * w).sqrt();
            let clear = boxes.iter().all(|b| {
                let other_diag = (b.dims.0 * b.dims.0 + b.dims.1 * b.dims.1).sqrt();
                let dx = b.center.x - center.x;
                let dy = b.center.y - center.y;
                (dx * dx + dy * dy).sqrt() >= (diag + other_diag) / 2.0 + 1.5
            });
            if clear {
                boxes.push(Box3D::new(center, (l, w, h), yaw, class_id, 1.0).unwrap());
                placed = true;
                break;
            }
        }
        if !placed {
            break; // scene is full at this density
        }
    }
    boxes
}

/// Samples a point on one of the five visible faces (4 sides + top),
/// weighted by face area.
fn sample_surface_point(rng: &mut DetRng, bx: &Box3D) -> Vector3<f64> {
    let (l, w, h) = bx.dims;
    let side_lh = l * h;
    let side_wh = w * h;
    let top = l * w;
    let total = 2.0 * side_lh + 2.0 * side_wh + top;
    let pick = rng.uniform(0.0, total);
    let (lx, ly, lz) = if pick < side_lh {
        (rng.uniform(-l / 2.0, l / 2.0), w / 2.0, rng.uniform(-h / 2.0, h / 2.0))
    } else if pick < 2.0 * side_lh {
        (rng.uniform(-l / 2.0, l / 2.0), -w / 2.0, rng.uniform(-h / 2.0, h / 2.0))
    } else if pick < 2.0 * side_lh + side_wh {
        (l / 2.0, rng.uniform(-w / 2.0, w / 2.0), rng.uniform(-h / 2.0, h / 2.0))
    } else if pick < 2.0 * side_lh + 2.0 * side_wh {
        (-l / 2.0, rng.uniform(-w / 2.0, w / 2.0), rng.uniform(-h / 2.0, h / 2.0))
    } else {
        (rng.uniform(-l / 2.0, l / 2.0), rng.uniform(-w / 2.0, w / 2.0), h / 2.0)
    };
    let (s, c) = bx.yaw.sin_cos();
    Vector3::new(
        bx.center.x + c * lx - s * ly,
        bx.center.y + s * lx + c * ly,
        bx.center.z + lz,
    )
}

fn scan_timestamp(x: f64, y: f64) -> f32 {
    let az = crate::slicing::azimuth_deg(x, y).unwrap_or(0.0);
    (az / 360.0) as f32 * ROTATION_PERIOD_S
}

fn sample_points(rng: &mut DetRng, boxes: &[Box3D]) -> Vec<RawPoint> {
    let mut points = Vec::new();
    for bx in boxes {
        let range = (bx.center.x * bx.center.x + bx.center.y * bx.center.y).sqrt();
        let n = ((12_000.0 / range.max(1.0)) as usize).clamp(120, 450);
        for _ in 0..n {
            let p = sample_surface_point(rng, bx);
            points.push(RawPoint {
                x: p.x as f32,
                y: p.y as f32,
                z: p.z as f32,
                r: rng.uniform(0.45, 0.95) as f32,
                m: scan_timestamp(p.x, p.y),
            });
        }
    }
    points
}

fn sample_clutter(rng: &mut DetRng, params: &SceneParams, grid: &GridSpec) -> Vec<RawPoint> {
    let max_range = 0.95 * half_extent(grid);
    (0..params.clutter_points)
        .map(|_| {
            let range = rng.uniform(2.0, max_range);
            let az = rng.uniform(0.0, 360.0f64).to_radians();
            let (x, y) = (range * az.cos(), range * az.sin());
            let z = GROUND_Z + rng.uniform(0.0, 0.15);
            RawPoint {
                x: x as f32,
                y: y as f32,
                z: z as f32,
                r: rng.uniform(0.02, 0.2) as f32,
                m: scan_timestamp(x, y),
            }
        })
        .collect()
}

/// Projects the eight cuboid corners and fills the clamped pixel bounding
/// box with the class color. Boxes are painted far to near.
fn render_silhouettes(camera: &Camera, boxes: &[Box3D]) -> RgbImage {
    let intr = &camera.intrinsics;
    let mut img = RgbImage::filled(intr.image_w as usize, intr.image_h as usize, [64, 64, 64]);
    let cam_center = camera.extrinsics.camera_center();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (boxes[a].center - cam_center).norm();
        let db = (boxes[b].center - cam_center).norm();
        db.partial_cmp(&da).unwrap()
    });
    for bi in order {
        let bx = &boxes[bi];
        let (l, w, h) = bx.dims;
        let (s, c) = bx.yaw.sin_cos();
        let mut min_u = f64::INFINITY;
        let mut max_u = f64::NEG_INFINITY;
        let mut min_v = f64::INFINITY;
        let mut max_v = f64::NEG_INFINITY;
        let mut visible = 0;
        for &dx in &[-l / 2.0, l / 2.0] {
            for &dy in &[-w / 2.0, w / 2.0] {
                for &dz in &[-h / 2.0, h / 2.0] {
                    let corner = Vector3::new(
                        bx.center.x + c * dx - s * dy,
                        bx.center.y + s * dx + c * dy,
                        bx.center.z + dz,
                    );
                    let pc = camera.extrinsics.to_camera(&corner);
                    if pc.z <= 0.1 {
                        continue;
                    }
                    let u = intr.fx * pc.x / pc.z + intr.cx;
                    let v = intr.fy * pc.y / pc.z + intr.cy;
                    min_u = min_u.min(u);
                    max_u = max_u.max(u);
                    min_v = min_v.min(v);
                    max_v = max_v.max(v);
                    visible += 1;
                }
            }
        }
        if visible < 2 {
            continue;
        }
        let c0 = min_u.max(0.0) as usize;
        let c1 = (max_u.ceil().max(0.0) as usize).min(intr.image_w as usize);
        let r0 = min_v.max(0.0) as usize;
        let r1 = (max_v.ceil().max(0.0) as usize).min(intr.image_h as usize);
        if c0 < c1 && r0 < r1 {
            img.fill_rect(r0, c0, r1, c1, class_color(bx.class_id));
        }
    }
    img
}

/// Generates a full synthetic frame from a seed. Every draw comes from a
/// named sub-stream of `seed`, so the output is bit-identical per seed.
pub fn generate_scene(
    seed: u64,
    params: &SceneParams,
    rig: &CameraRig,
    grid: &GridSpec,
) -> Result<SceneData> {
    grid.validate()?;
    if params.min_range_m >= params.max_range_frac * half_extent(grid) {
        return Err(Error::config("object range band is empty for this grid".to_string()));
    }
    let mut box_rng = DetRng::substream(seed, "scene/boxes");
    let boxes = sample_boxes(&mut box_rng, params, grid);
    let mut point_rng = DetRng::substream(seed, "scene/points");
    let mut points = sample_points(&mut point_rng, &boxes);
    let mut clutter_rng = DetRng::substream(seed, "scene/clutter");
    points.extend(sample_clutter(&mut clutter_rng, params, grid));
    let images = rig.cameras().iter().map(|cam| render_silhouettes(cam, &boxes)).collect();
    Ok(SceneData { frame_id: seed, points, boxes, rig: rig.clone(), images })
}

/// Paths of a scene written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneBundle {
    pub frame_id: u64,
    pub points: PathBuf,
    pub scene: PathBuf,
    pub calib: PathBuf,
    pub images: Vec<PathBuf>,
}

pub const BUNDLE_MANIFEST: &str = "bundle.json";

/// Writes a scene into `dir` and returns the manifest, which is also stored
/// as `bundle.json` with paths relative to `dir`.
pub fn write_bundle(dir: &Path, scene: &SceneData) -> Result<SceneBundle> {
    std::fs::create_dir_all(dir)?;
    let rel_images: Vec<PathBuf> =
        (0..scene.images.len()).map(|i| PathBuf::from(format!("cam{i}.ppm"))).collect();
    let manifest = SceneBundle {
        frame_id: scene.frame_id,
        points: PathBuf::from("points.bin"),
        scene: PathBuf::from("scene.json"),
        calib: PathBuf::from("calib.json"),
        images: rel_images,
    };
    io::write_point_cloud(&dir.join(&manifest.points), &scene.points)?;
    io::write_scene(&dir.join(&manifest.scene), scene.frame_id, &scene.boxes)?;
    io::write_calibration(&dir.join(&manifest.calib), &scene.rig)?;
    for (img, rel) in scene.images.iter().zip(&manifest.images) {
        io::write_ppm(&dir.join(rel), img)?;
    }
    io::write_json(&dir.join(BUNDLE_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Loads a scene bundle written by [`write_bundle`].
pub fn read_bundle(dir: &Path) -> Result<SceneData> {
    let manifest: SceneBundle = io::read_json(&dir.join(BUNDLE_MANIFEST))?;
    let points = io::read_point_cloud(&dir.join(&manifest.points))?;
    let (frame_id, boxes) = io::read_scene(&dir.join(&manifest.scene))?;
    let rig = io::read_calibration(&dir.join(&manifest.calib))?;
    if manifest.images.len() != rig.len() {
        return Err(Error::data(format!(
            "bundle has {} images for a {}-camera rig",
            manifest.images.len(),
            rig.len()
        )));
    }
    let images = manifest
        .images
        .iter()
        .map(|rel| io::read_ppm(&dir.join(rel)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneData { frame_id, points, boxes, rig, images })
}
