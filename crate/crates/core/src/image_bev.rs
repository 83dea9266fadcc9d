//! Projection of per-pixel image features into the 3D voxel volume and the
//! reduction cascade that turns the volume into the image BEV map.
//!
//! Splatting is voxel-centric: every voxel center is projected into every
//! camera, and the feature at the hit pixel (nearest pixel at the
//! quarter-resolution feature map) is accumulated. This fills exactly the
//! voxels whose centers lie on a ray through a feature pixel, with
//! averaging where camera frusta intersect and zeros outside all frusta.

use crate::bev::{BevMap, GridSpec, VoxelVolume};
use crate::calib::{project_point, CameraRig};
use crate::error::{Error, Result};
use crate::fusion::Quadrant;
use crate::rng::DetRng;
use nalgebra::Vector3;

/// Feature-map downsampling relative to the input image.
pub const FEATURE_STRIDE: usize = 4;

/// Dense per-camera feature map of shape `(H/4, W/4, C)`, row-major with
/// channels last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub camera: usize,
    data: Vec<f32>,
}

impl FeatureImage {
    pub fn new(height: usize, width: usize, channels: usize, camera: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::data(format!(
                "feature payload holds {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature map contains non-finite values".to_string()));
        }
        Ok(FeatureImage { height, width, channels, camera, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, camera: usize) -> Self {
        FeatureImage { height, width, channels, camera, data: vec![0.0; height * width * channels] }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let o = (row * self.width + col) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let o = (row * self.width + col) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Raw 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::data(format!(
                "rgb payload holds {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RgbImage { width, height, data }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let o = (row * self.width + col) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let o = (row * self.width + col) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn fill_rect(&mut self, r0: usize, c0: usize, r1: usize, c1: usize, rgb: [u8; 3]) {
        for r in r0..r1.min(self.height) {
            for c in c0..c1.min(self.width) {
                self.set_pixel(r, c, rgb);
            }
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Produces a feature map from a camera image. Stands in for a learned
/// backbone; implementations must be deterministic for a fixed input.
pub trait FeatureProvider {
    fn channels(&self) -> usize;
    fn features(&self, image: &RgbImage, camera: usize) -> Result<FeatureImage>;
}

/// Reference provider: 4x4 box downsample of the RGB image followed by a
/// fixed seeded linear map from 3 to `channels` values.
#[derive(Debug, Clone)]
pub struct SeededLinearProvider {
    channels: usize,
    /// Row-major `channels x 3`.
    weights: Vec<f32>,
}

impl SeededLinearProvider {
    pub fn from_seed(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("provider channel count must be >= 1".to_string()));
        }
        let mut rng = DetRng::substream(seed, "feature-provider");
        let weights = (0..channels * 3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        Ok(SeededLinearProvider { channels, weights })
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }
}

impl FeatureProvider for SeededLinearProvider {
    fn channels(&self) -> usize {
        self.channels
    }

    fn features(&self, image: &RgbImage, camera: usize) -> Result<FeatureImage> {
        if !image.width.is_multiple_of(FEATURE_STRIDE) || !image.height.is_multiple_of(FEATURE_STRIDE) {
            return Err(Error::data(format!(
                "image {}x{} not divisible by feature stride {FEATURE_STRIDE}",
                image.width, image.height
            )));
        }
        let (fh, fw) = (image.height / FEATURE_STRIDE, image.width / FEATURE_STRIDE);
        let mut out = FeatureImage::zeros(fh, fw, self.channels, camera);
        let inv_area = 1.0f32 / (FEATURE_STRIDE * FEATURE_STRIDE) as f32;
        for fr in 0..fh {
            for fc in 0..fw {
                let mut rgb = [0.0f32; 3];
                for dr in 0..FEATURE_STRIDE {
                    for dc in 0..FEATURE_STRIDE {
                        let px = image.pixel(fr * FEATURE_STRIDE + dr, fc * FEATURE_STRIDE + dc);
                        for (acc, &v) in rgb.iter_mut().zip(px.iter()) {
                            *acc += v as f32 / 255.0;
                        }
                    }
                }
                for v in rgb.iter_mut() {
                    *v *= inv_area;
                }
                let pixel = out.pixel_mut(fr, fc);
                for (ch, slot) in pixel.iter_mut().enumerate() {
                    let row = &self.weights[ch * 3..ch * 3 + 3];
                    *slot = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
                }
            }
        }
        Ok(out)
    }
}

/// The sub-range of the grid a splat writes: the whole grid or one quadrant.
#[derive(Debug, Clone, Copy)]
struct SplatRegion {
    i0: usize,
    j0: usize,
    nx: usize,
    ny: usize,
}

/// Splats camera features into the voxel volume (voxel-centric projection).
///
/// `features[n]` belongs to `rig.cameras()[features[n].camera]`; cameras
/// without a feature map contribute nothing. With `crop_region` the returned
/// volume covers only that quadrant, `(X/2, Y/2, Z, C)`.
pub fn splat_to_volume(
    features: &[FeatureImage],
    rig: &CameraRig,
    grid: &GridSpec,
    crop_region: Option<Quadrant>,
) -> Result<VoxelVolume> {
    grid.validate()?;
    let (gnx, gny, nz) = (grid.nx(), grid.ny(), grid.nz());
    let region = match crop_region {
        Some(q) => {
            if gnx % 2 != 0 || gny % 2 != 0 {
                return Err(Error::config("cropped splat needs even grid dims".to_string()));
            }
            let (i0, j0) = q.grid_offset(gnx, gny);
            SplatRegion { i0, j0, nx: gnx / 2, ny: gny / 2 }
        }
        None => SplatRegion { i0: 0, j0: 0, nx: gnx, ny: gny },
    };

    for f in features {
        if f.channels != grid.channels {
            return Err(Error::config(format!(
                "feature map for camera {} has {} channels, grid expects {}",
                f.camera, f.channels, grid.channels
            )));
        }
        let cam = rig.cameras().get(f.camera).ok_or_else(|| {
            Error::config(format!("feature map references camera {} of a {}-camera rig", f.camera, rig.len()))
        })?;
        let (ew, eh) = (
            cam.intrinsics.image_w as usize / FEATURE_STRIDE,
            cam.intrinsics.image_h as usize / FEATURE_STRIDE,
        );
        if (f.width, f.height) != (ew, eh) {
            return Err(Error::config(format!(
                "feature map for camera {} is {}x{}, expected {}x{}",
                f.camera, f.width, f.height, ew, eh
            )));
        }
    }

    let mut vol = VoxelVolume::zeros(region.nx, region.ny, nz, grid.channels);
    for li in 0..region.nx {
        for lj in 0..region.ny {
            for k in 0..nz {
                let (x, y, z) = grid.voxel_center(region.i0 + li, region.j0 + lj, k);
                let p = Vector3::new(x, y, z);
                let mut contributed = false;
                for f in features {
                    let cam = &rig.cameras()[f.camera];
                    let Some(hit) = project_point(&p, &cam.intrinsics, &cam.extrinsics) else {
                        continue;
                    };
                    let fc = ((hit.u as usize) / FEATURE_STRIDE).min(f.width - 1);
                    let fr = ((hit.v as usize) / FEATURE_STRIDE).min(f.height - 1);
                    let pixel = f.pixel(fr, fc);
                    let voxel = vol.voxel_mut(li, lj, k);
                    for (acc, &v) in voxel.iter_mut().zip(pixel.iter()) {
                        *acc += v;
                    }
                    vol.add_count(li, lj, k);
                    contributed = true;
                }
                if contributed {
                    let n = vol.count(li, lj, k) as f32;
                    for v in vol.voxel_mut(li, lj, k) {
                        *v /= n;
                    }
                }
            }
        }
    }
    Ok(vol)
}

/// Standardization epsilon.
pub const STANDARDIZE_EPS: f64 = 1e-5;

/// Per-channel standardization across a batch of volumes.
///
/// Statistics are taken over voxels with a nonzero contribution count, with
/// the population-variance convention; untouched voxels stay exactly zero.
pub fn batch_standardize(volumes: &mut [VoxelVolume]) -> Result<()> {
    let Some(first) = volumes.first() else {
        return Err(Error::config("batch_standardize needs at least one volume".to_string()));
    };
    let channels = first.channels();
    if volumes.iter().any(|v| v.channels() != channels) {
        return Err(Error::config("batch entries disagree on channel count".to_string()));
    }

    let mut sums = vec![0.0f64; channels];
    let mut sq_sums = vec![0.0f64; channels];
    let mut n = 0u64;
    for vol in volumes.iter() {
        for (vox, &count) in vol.data().chunks_exact(channels).zip(vol.counts()) {
            if count == 0 {
                continue;
            }
            n += 1;
            for (ch, &v) in vox.iter().enumerate() {
                sums[ch] += v as f64;
                sq_sums[ch] += (v as f64) * (v as f64);
            }
        }
    }
    if n == 0 {
        return Ok(());
    }
    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0f64; channels];
    let mut denom = vec![0.0f64; channels];
    for ch in 0..channels {
        mean[ch] = sums[ch] * inv_n;
        let var = (sq_sums[ch] * inv_n - mean[ch] * mean[ch]).max(0.0);
        denom[ch] = (var + STANDARDIZE_EPS).sqrt();
    }
    for vol in volumes.iter_mut() {
        let counts: Vec<u32> = vol.counts().to_vec();
        for (vox, count) in vol.data_mut().chunks_exact_mut(channels).zip(counts) {
            if count == 0 {
                continue;
            }
            for (ch, v) in vox.iter_mut().enumerate() {
                *v = ((*v as f64 - mean[ch]) / denom[ch]) as f32;
            }
        }
    }
    Ok(())
}

/// Pluggable transform applied at the half-depth stage of the reduction.
pub trait VoxelTransform {
    fn apply(&self, volume: &mut VoxelVolume) -> Result<()>;
}

fn avg_pool_z(vol: &VoxelVolume) -> VoxelVolume {
    let nz = vol.nz() / 2;
    let c = vol.channels();
    let mut out = VoxelVolume::zeros(vol.nx(), vol.ny(), nz, c);
    for i in 0..vol.nx() {
        for j in 0..vol.ny() {
            for k in 0..nz {
                let a = vol.voxel(i, j, 2 * k).to_vec();
                let b = vol.voxel(i, j, 2 * k + 1);
                let pooled = out.voxel_mut(i, j, k);
                for ch in 0..c {
                    pooled[ch] = (a[ch] + b[ch]) * 0.5;
                }
                for _ in 0..vol.count(i, j, 2 * k) + vol.count(i, j, 2 * k + 1) {
                    out.add_count(i, j, k);
                }
            }
        }
    }
    out
}

/// Reduces the volume to a BEV map: average pool z by 2, optional transform,
/// average pool z by 2 again, then max over the remaining z.
///
/// The mask marks columns where any source voxel had a contribution.
pub fn reduce_volume_to_bev(
    vol: &VoxelVolume,
    transform: Option<&dyn VoxelTransform>,
) -> Result<BevMap> {
    if !vol.nz().is_multiple_of(4) || vol.nz() == 0 {
        return Err(Error::config(format!("volume depth {} not divisible by 4", vol.nz())));
    }
    let mut half = avg_pool_z(vol);
    if let Some(t) = transform {
        t.apply(&mut half)?;
    }
    let quarter = avg_pool_z(&half);
    let c = quarter.channels();
    let mut map = BevMap::zeros(quarter.nx(), quarter.ny(), c);
    for i in 0..quarter.nx() {
        for j in 0..quarter.ny() {
            let mut touched = false;
            let cell = map.cell_mut(i, j);
            for k in 0..quarter.nz() {
                let vox = quarter.voxel(i, j, k);
                if k == 0 {
                    cell.copy_from_slice(vox);
                } else {
                    for ch in 0..c {
                        cell[ch] = cell[ch].max(vox[ch]);
                    }
                }
                touched |= quarter.count(i, j, k) > 0;
            }
            map.set_occupied(i, j, touched);
        }
    }
    Ok(map)
}
