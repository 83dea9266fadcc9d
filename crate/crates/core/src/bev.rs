//! Dense BEV and voxel grids over the scene extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scene gridding parameters.
///
/// Defaults follow the usual surround-perception setup: x/y in
/// `[-51.2, 51.2] m` at 0.2 m cells (512x512 BEV), z in `[-3, 5] m` at 0.5 m
/// voxels (16 deep), 64 feature channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub cell_xy: f64,
    pub cell_z: f64,
    pub channels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_min: -51.2,
            x_max: 51.2,
            y_min: -51.2,
            y_max: 51.2,
            z_min: -3.0,
            z_max: 5.0,
            cell_xy: 0.2,
            cell_z: 0.5,
            channels: 64,
        }
    }
}

fn cells_along(min: f64, max: f64, cell: f64, axis: &str) -> Result<usize> {
    if cell <= 0.0 {
        return Err(Error::config(format!("{axis} cell size must be positive")));
    }
    let span = max - min;
    if span <= 0.0 {
        return Err(Error::config(format!("{axis} range is empty")));
    }
    let n = span / cell;
    if (n - n.round()).abs() > 1e-6 {
        return Err(Error::config(format!(
            "{axis} span {span} not divisible by cell {cell}"
        )));
    }
    Ok(n.round() as usize)
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        cells_along(self.x_min, self.x_max, self.cell_xy, "x")?;
        cells_along(self.y_min, self.y_max, self.cell_xy, "y")?;
        cells_along(self.z_min, self.z_max, self.cell_z, "z")?;
        if self.channels == 0 {
            return Err(Error::config("channel count must be >= 1".to_string()));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.cell_xy).round() as usize
    }

    pub fn ny(&self) -> usize {
        ((self.y_max - self.y_min) / self.cell_xy).round() as usize
    }

    pub fn nz(&self) -> usize {
        ((self.z_max - self.z_min) / self.cell_z).round() as usize
    }

    /// Pillar index of a point, or `None` when out of range on any axis.
    ///
    /// Ranges are half-open on the max side. The min corner tolerates a
    /// small negative fraction of a cell so that coordinates that are the
    /// grid minimum up to f32 representation noise land in cell 0 instead
    /// of being dropped.
    pub fn pillar_index(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize)> {
        const EDGE_EPS_CELLS: f64 = 1e-4;
        if z < self.z_min - EDGE_EPS_CELLS * self.cell_z || z >= self.z_max {
            return None;
        }
        let snap = |f: f64| if (-EDGE_EPS_CELLS..0.0).contains(&f) { 0.0 } else { f };
        let i = snap((x - self.x_min) / self.cell_xy).floor();
        let j = snap((y - self.y_min) / self.cell_xy).floor();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        let (i, j) = (i as usize, j as usize);
        if i >= self.nx() || j >= self.ny() {
            return None;
        }
        Some((i, j))
    }

    /// BEV center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.cell_xy,
            self.y_min + (j as f64 + 0.5) * self.cell_xy,
        )
    }

    /// 3D center of voxel `(i, j, k)`.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        let (x, y) = self.cell_center(i, j);
        (x, y, self.z_min + (k as f64 + 0.5) * self.cell_z)
    }

}

/// Dense 2D feature map `(X, Y, C)` with a per-cell occupancy mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    nx: usize,
    ny: usize,
    channels: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl BevMap {
    pub fn zeros(nx: usize, ny: usize, channels: usize) -> Self {
        BevMap {
            nx,
            ny,
            channels,
            data: vec![0.0; nx * ny * channels],
            mask: vec![false; nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn cell_offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        (i * self.ny + j) * self.channels
    }

    pub fn at(&self, i: usize, j: usize, ch: usize) -> f32 {
        self.data[self.cell_offset(i, j) + ch]
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let o = self.cell_offset(i, j);
        &self.data[o..o + self.channels]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f32] {
        let o = self.cell_offset(i, j);
        &mut self.data[o..o + self.channels]
    }

    pub fn occupied(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.ny + j]
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, occupied: bool) {
        self.mask[i * self.ny + j] = occupied;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Dense 3D feature volume `(X, Y, Z, C)` with per-voxel contribution
/// counts. Voxels with count 0 hold exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    nx: usize,
    ny: usize,
    nz: usize,
    channels: usize,
    data: Vec<f32>,
    counts: Vec<u32>,
}

impl VoxelVolume {
    pub fn zeros(nx: usize, ny: usize, nz: usize, channels: usize) -> Self {
        VoxelVolume {
            nx,
            ny,
            nz,
            channels,
            data: vec![0.0; nx * ny * nz * channels],
            counts: vec![0; nx * ny * nz],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn voxel_offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        ((i * self.ny + j) * self.nz + k) * self.channels
    }

    fn count_offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    pub fn voxel(&self, i: usize, j: usize, k: usize) -> &[f32] {
        let o = self.voxel_offset(i, j, k);
        &self.data[o..o + self.channels]
    }

    pub fn voxel_mut(&mut self, i: usize, j: usize, k: usize) -> &mut [f32] {
        let o = self.voxel_offset(i, j, k);
        &mut self.data[o..o + self.channels]
    }

    pub fn count(&self, i: usize, j: usize, k: usize) -> u32 {
        self.counts[self.count_offset(i, j, k)]
    }

    pub fn add_count(&mut self, i: usize, j: usize, k: usize) {
        let o = self.count_offset(i, j, k);
        self.counts[o] += 1;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}
