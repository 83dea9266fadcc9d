//! Camera models, rigid transforms, perspective projection, and
//! calibration-noise sampling.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * Camera frame: +z forward (optical axis), +x right, +y down.
//! * Extrinsics map ego/LiDAR frame to camera frame: `p_cam = R * p_ego + t`.
//! * Euler composition is `R = Rz(yaw) * Ry(pitch) * Rx(roll)`, angles in
//!   degrees.
//! * Noise composition: the sampled rotation is applied on the left of the
//!   ground-truth rotation, the sampled translation is added.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Orthonormality / determinant tolerance for rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// Pinhole intrinsics. Focal lengths and principal point in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_w: u32, image_h: u32) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::config(format!("focal lengths must be positive, got fx={fx} fy={fy}")));
        }
        if !(0.0..image_w as f64).contains(&cx) || !(0.0..image_h as f64).contains(&cy) {
            return Err(Error::config(format!(
                "principal point ({cx}, {cy}) outside {image_w}x{image_h} image"
            )));
        }
        Ok(Intrinsics { fx, fy, cx, cy, image_w, image_h })
    }

    /// Square-pixel intrinsics with the principal point at the image center,
    /// derived from a horizontal field of view.
    pub fn from_hfov(fov_deg: f64, image_w: u32, image_h: u32) -> Result<Self> {
        if !(0.0 < fov_deg && fov_deg < 180.0) {
            return Err(Error::config(format!("hfov {fov_deg} outside (0, 180)")));
        }
        let fx = image_w as f64 / (2.0 * (fov_deg.to_radians() / 2.0).tan());
        Self::new(fx, fx, image_w as f64 / 2.0, image_h as f64 / 2.0, image_w, image_h)
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        (0.0..self.image_w as f64).contains(&u) && (0.0..self.image_h as f64).contains(&v)
    }
}

/// Rigid ego-to-camera transform. Construction validates that the rotation
/// is in SO(3) to [`ROTATION_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(Error::config(format!("rotation not orthonormal (err {ortho_err:.3e})")));
        }
        let det_err = (rotation.determinant() - 1.0).abs();
        if det_err > ROTATION_TOL {
            return Err(Error::config(format!("rotation determinant != +1 (err {det_err:.3e})")));
        }
        Ok(Extrinsics { rotation, translation })
    }

    pub fn identity() -> Self {
        Extrinsics { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Camera looking outward along `azimuth_deg` in the ego x-y plane,
    /// optical axis horizontal, positioned at the ego origin.
    pub fn facing_azimuth(azimuth_deg: f64) -> Self {
        let az = azimuth_deg.to_radians();
        let (s, c) = (az.sin(), az.cos());
        // Rows are the camera axes expressed in the ego frame:
        // x_cam = right, y_cam = down, z_cam = forward.
        let rotation = Matrix3::new(
            s, -c, 0.0, //
            0.0, 0.0, -1.0, //
            c, s, 0.0,
        );
        Extrinsics { rotation, translation: Vector3::zeros() }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_camera(&self, p_ego: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_ego + self.translation
    }

    /// Camera center in the ego frame: `-R^T t`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Pixel hit of a projected point: sub-pixel coordinates plus camera-frame
/// depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// A ray in the ego frame with unit direction.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn point_at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }

    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.origin;
        (d - self.direction * d.dot(&self.direction)).norm()
    }
}

/// Perspective projection of an ego-frame point.
///
/// Returns the pixel only when the camera-frame depth is positive and the
/// pixel lies inside the image; anything else is out of frustum.
pub fn project_point(p: &Vector3<f64>, intr: &Intrinsics, extr: &Extrinsics) -> Option<PixelHit> {
    let pc = extr.to_camera(p);
    if pc.z <= 0.0 {
        return None;
    }
    let u = intr.fx * pc.x / pc.z + intr.cx;
    let v = intr.fy * pc.y / pc.z + intr.cy;
    if !intr.contains_pixel(u, v) {
        return None;
    }
    Some(PixelHit { u, v, depth: pc.z })
}

/// Back-projects a pixel to its ego-frame viewing ray.
///
/// Out-of-bounds pixels are a caller bug and produce an error.
pub fn cast_pixel_ray(u: f64, v: f64, intr: &Intrinsics, extr: &Extrinsics) -> Result<Ray> {
    if !intr.contains_pixel(u, v) {
        return Err(Error::config(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            intr.image_w, intr.image_h
        )));
    }
    let dir_cam = Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
    let rt = extr.rotation.transpose();
    let direction = (rt * dir_cam).normalize();
    Ok(Ray { origin: extr.camera_center(), direction })
}

/// Rotation from Euler angles in degrees, composed as
/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_to_rotation(roll_deg: f64, pitch_deg: f64, yaw_deg: f64) -> Matrix3<f64> {
    let (sr, cr) = roll_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Bounds and seed for uniform calibration-noise sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibNoise {
    /// Bound on each Euler angle, degrees.
    pub max_angle_deg: f64,
    /// Bound on each translation component, meters.
    pub max_trans_m: f64,
    pub seed: u64,
}

impl CalibNoise {
    pub fn new(max_angle_deg: f64, max_trans_m: f64, seed: u64) -> Result<Self> {
        if max_angle_deg < 0.0 || max_trans_m < 0.0 {
            return Err(Error::config("noise bounds must be non-negative".to_string()));
        }
        Ok(CalibNoise { max_angle_deg, max_trans_m, seed })
    }
}

/// Draws one noisy variant of `extr`.
///
/// Euler angles (roll, pitch, yaw) then translation components (x, y, z) are
/// drawn in that order, each uniform in its `±` bound. The noisy rotation is
/// left-composed with the original and the noisy translation added.
pub fn perturb_extrinsics(extr: &Extrinsics, noise: &CalibNoise) -> Extrinsics {
    let mut rng = DetRng::substream(noise.seed, "calib-noise");
    perturb_extrinsics_with(extr, noise, &mut rng)
}

/// Same as [`perturb_extrinsics`] but drawing from a caller-provided stream,
/// used to derive independent per-camera perturbations from one seed.
pub fn perturb_extrinsics_with(
    extr: &Extrinsics,
    noise: &CalibNoise,
    rng: &mut DetRng,
) -> Extrinsics {
    let a = noise.max_angle_deg;
    let t = noise.max_trans_m;
    let roll = rng.uniform(-a, a);
    let pitch = rng.uniform(-a, a);
    let yaw = rng.uniform(-a, a);
    let dt = Vector3::new(rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(-t, t));
    let rn = euler_to_rotation(roll, pitch, yaw);
    Extrinsics {
        rotation: rn * extr.rotation,
        translation: extr.translation + dt,
    }
}

/// One mounted camera of a rig.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    /// Horizontal field of view, degrees, used for slice-overlap tests.
    pub fov_deg: f64,
    /// Mounting azimuth of the optical axis in the ego frame, degrees.
    pub azimuth_center_deg: f64,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        fov_deg: f64,
        azimuth_center_deg: f64,
    ) -> Result<Self> {
        if !(0.0 < fov_deg && fov_deg <= 180.0) {
            return Err(Error::config(format!("fov {fov_deg} outside (0, 180]")));
        }
        if !(0.0..360.0).contains(&azimuth_center_deg) {
            return Err(Error::config(format!("azimuth {azimuth_center_deg} outside [0, 360)")));
        }
        Ok(Camera { intrinsics, extrinsics, fov_deg, azimuth_center_deg })
    }
}

/// Ordered collection of cameras covering the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Self {
        CameraRig { cameras }
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Six-camera surround rig: five 70° cameras plus a 110° back camera,
    /// arranged so the union of the fields of view covers the full circle.
    pub fn surround(image_w: u32, image_h: u32) -> Result<Self> {
        let layout: [(f64, f64); 6] = [
            (0.0, 70.0),
            (55.0, 70.0),
            (125.0, 70.0),
            (180.0, 110.0),
            (235.0, 70.0),
            (305.0, 70.0),
        ];
        let cameras = layout
            .iter()
            .map(|&(az, fov)| {
                Camera::new(
                    Intrinsics::from_hfov(fov, image_w, image_h)?,
                    Extrinsics::facing_azimuth(az),
                    fov,
                    az,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CameraRig::new(cameras))
    }

    /// Noisy variant of the whole rig. Each camera draws from an independent
    /// sub-stream of `noise.seed`, so adding cameras does not shift the
    /// perturbations of the others.
    pub fn perturbed(&self, noise: &CalibNoise) -> Self {
        let cameras = self
            .cameras
            .iter()
            .enumerate()
            .map(|(i, cam)| {
                let mut rng = DetRng::substream(noise.seed, &format!("calib-noise/cam{i}"));
                Camera {
                    intrinsics: cam.intrinsics.clone(),
                    extrinsics: perturb_extrinsics_with(&cam.extrinsics, noise, &mut rng),
                    fov_deg: cam.fov_deg,
                    azimuth_center_deg: cam.azimuth_center_deg,
                }
            })
            .collect();
        CameraRig::new(cameras)
    }
}
