//! Splitting a 360° sweep into azimuthal wedges, assigning ground-truth
//! boxes to wedges by the corner rule, and camera-wedge overlap.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::calib::CameraRig;
use crate::error::{Error, Result};

/// A LiDAR return as read from disk, before slice assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Reflectance in `[0, 1]`.
    pub r: f32,
    /// Relative timestamp within the sweep, seconds.
    pub m: f32,
}

/// A LiDAR return with its slice index: the `(x, y, z, r, m, s)` record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub r: f32,
    pub m: f32,
    /// Slice index within the sweep.
    pub s: u32,
}

impl PointRecord {
    pub fn from_raw(p: RawPoint, s: u32) -> Self {
        PointRecord { x: p.x, y: p.y, z: p.z, r: p.r, m: p.m, s }
    }
}

/// One azimuthal sector of the sweep: half-open `[az_start, az_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub n_slices: u32,
    pub index: u32,
    pub az_start_deg: f64,
    pub az_end_deg: f64,
}

impl SliceSpec {
    pub fn new(n_slices: u32, index: u32) -> Result<Self> {
        if n_slices == 0 {
            return Err(Error::config("n_slices must be >= 1".to_string()));
        }
        if index >= n_slices {
            return Err(Error::config(format!("slice index {index} >= n_slices {n_slices}")));
        }
        let width = 360.0 / n_slices as f64;
        Ok(SliceSpec {
            n_slices,
            index,
            az_start_deg: width * index as f64,
            az_end_deg: width * (index + 1) as f64,
        })
    }

    pub fn width_deg(&self) -> f64 {
        self.az_end_deg - self.az_start_deg
    }

    /// Half-open sector membership.
    pub fn contains_deg(&self, az: f64) -> bool {
        angle::arc_contains_half_open(self.az_start_deg, self.width_deg(), az)
    }
}

/// The streaming unit of work: one sector's points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudSlice {
    pub spec: SliceSpec,
    pub points: Vec<PointRecord>,
}

/// An oriented 3D box. Ground truth uses score 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    pub center: Vector3<f64>,
    /// (length, width, height), meters. Length is along the yaw direction.
    pub dims: (f64, f64, f64),
    /// Heading in radians, normalized to `[-pi, pi)`.
    pub yaw: f64,
    pub class_id: u32,
    pub score: f64,
}

impl Box3D {
    pub fn new(
        center: Vector3<f64>,
        dims: (f64, f64, f64),
        yaw: f64,
        class_id: u32,
        score: f64,
    ) -> Result<Self> {
        if dims.0 <= 0.0 || dims.1 <= 0.0 || dims.2 <= 0.0 {
            return Err(Error::data(format!("box dims must be positive, got {dims:?}")));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::data(format!("box score {score} outside [0, 1]")));
        }
        Ok(Box3D { center, dims, yaw: normalize_yaw(yaw), class_id, score })
    }

    pub fn bev_center(&self) -> (f64, f64) {
        (self.center.x, self.center.y)
    }
}

/// Wraps into `[-pi, pi)`. In-range values pass through bit-exact so the
/// normalization is idempotent.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-std::f64::consts::PI..std::f64::consts::PI).contains(&yaw) {
        return yaw;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = (yaw + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if y >= std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Counterclockwise angle of `(x, y)` from the +x axis, in `[0, 360)`.
///
/// The origin has no azimuth and is rejected.
pub fn azimuth_deg(x: f64, y: f64) -> Result<f64> {
    if x == 0.0 && y == 0.0 {
        return Err(Error::data("azimuth undefined at the origin".to_string()));
    }
    Ok(angle::normalize_deg(y.atan2(x).to_degrees()))
}

/// Slice index of an azimuth for an `n`-way split.
fn slice_index_of(az_deg: f64, n: u32) -> u32 {
    let width = 360.0 / n as f64;
    let idx = (az_deg / width) as u32;
    idx.min(n - 1)
}

/// Splits a sweep into `n` sectors, stamping each point's slice index.
///
/// Sectors are half-open, so every point lands in exactly one slice. Points
/// exactly on the rotation axis carry no azimuth and go to slice 0.
pub fn slice_sweep(points: &[RawPoint], n: u32) -> Result<Vec<PointCloudSlice>> {
    if n == 0 {
        return Err(Error::config("cannot slice a sweep into 0 sectors".to_string()));
    }
    let mut slices: Vec<PointCloudSlice> = (0..n)
        .map(|i| {
            Ok(PointCloudSlice { spec: SliceSpec::new(n, i)?, points: Vec::new() })
        })
        .collect::<Result<_>>()?;
    for &p in points {
        let s = match azimuth_deg(p.x as f64, p.y as f64) {
            Ok(az) => slice_index_of(az, n),
            Err(_) => 0,
        };
        slices[s as usize].points.push(PointRecord::from_raw(p, s));
    }
    Ok(slices)
}

/// BEV footprint corners of a box: the yaw-rotated length x width rectangle.
pub fn box_corners_bev(bx: &Box3D) -> [(f64, f64); 4] {
    let (l, w, _) = bx.dims;
    let (s, c) = bx.yaw.sin_cos();
    let (cx, cy) = bx.bev_center();
    let half = [(l / 2.0, w / 2.0), (l / 2.0, -w / 2.0), (-l / 2.0, -w / 2.0), (-l / 2.0, w / 2.0)];
    half.map(|(dx, dy)| (cx + c * dx - s * dy, cy + s * dx + c * dy))
}

/// Corner rule: a box belongs to the sector iff at least one of its four BEV
/// corners has an azimuth inside it. A box may belong to several sectors.
pub fn box_in_slice(bx: &Box3D, spec: &SliceSpec) -> bool {
    box_corners_bev(bx).iter().any(|&(x, y)| match azimuth_deg(x, y) {
        Ok(az) => spec.contains_deg(az),
        Err(_) => false,
    })
}

/// Boxes assigned to a sector by the corner rule.
pub fn assign_boxes_to_slice(boxes: &[Box3D], spec: &SliceSpec) -> Vec<Box3D> {
    boxes.iter().filter(|b| box_in_slice(b, spec)).cloned().collect()
}

/// Cameras whose closed field-of-view arc intersects the sector.
pub fn cameras_for_slice(spec: &SliceSpec, rig: &CameraRig) -> Vec<usize> {
    rig.cameras()
        .iter()
        .enumerate()
        .filter(|(_, cam)| {
            angle::closed_arc_intersects_half_open(
                cam.azimuth_center_deg - cam.fov_deg / 2.0,
                cam.fov_deg,
                spec.az_start_deg,
                spec.width_deg(),
            )
        })
        .map(|(i, _)| i)
        .collect()
}
