//! Pillarization of a point-cloud slice and the reference pillar encoder.
//!
//! The encoder stands in for a learned point network: each point is
//! augmented to nine inputs, pushed through a fixed seeded linear map,
//! clamped at zero, and max-pooled per pillar. This keeps the shape and
//! permutation-invariance contract of the learned original without any
//! training.

use std::collections::BTreeMap;

use crate::bev::{BevMap, GridSpec};
use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::slicing::{PointCloudSlice, PointRecord};

/// Number of per-point encoder inputs:
/// `(x, y, z, r, m, s, dx_pillar, dy_pillar, dz_centroid)`.
pub const ENCODER_INPUTS: usize = 9;

/// Per-input weight scaling of the reference encoder, chosen so each
/// augmented input contributes O(1) to a feature: positions span tens of
/// meters, offsets fractions of a meter, reflectance and timestamps are
/// already small. Part of the published encoder definition.
pub const INPUT_SCALES: [f32; ENCODER_INPUTS] =
    [0.01, 0.01, 0.25, 1.0, 1.0, 0.02, 2.5, 2.5, 0.5];

/// Points bucketed by pillar, plus the out-of-range drop count.
#[derive(Debug, Clone)]
pub struct Pillarized {
    pub pillars: BTreeMap<(usize, usize), Vec<PointRecord>>,
    pub dropped: usize,
}

/// Buckets each in-range point into its pillar by floor division.
pub fn pillarize(slice: &PointCloudSlice, grid: &GridSpec) -> Pillarized {
    let mut pillars: BTreeMap<(usize, usize), Vec<PointRecord>> = BTreeMap::new();
    let mut dropped = 0usize;
    for &p in &slice.points {
        match grid.pillar_index(p.x as f64, p.y as f64, p.z as f64) {
            Some(ij) => pillars.entry(ij).or_default().push(p),
            None => dropped += 1,
        }
    }
    Pillarized { pillars, dropped }
}

/// Fixed linear map from augmented points to `channels` features.
#[derive(Debug, Clone, PartialEq)]
pub struct PillarEncoder {
    channels: usize,
    /// Row-major `channels x ENCODER_INPUTS`.
    weights: Vec<f32>,
    seed: u64,
}

impl PillarEncoder {
    /// Weights drawn uniform in `[-1, 1)` from the `pillar-encoder`
    /// sub-stream of `seed`, column-scaled by [`INPUT_SCALES`].
    pub fn from_seed(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("encoder channel count must be >= 1".to_string()));
        }
        let mut rng = DetRng::substream(seed, "pillar-encoder");
        let weights = (0..channels * ENCODER_INPUTS)
            .map(|i| rng.uniform(-1.0, 1.0) as f32 * INPUT_SCALES[i % ENCODER_INPUTS])
            .collect();
        Ok(PillarEncoder { channels, weights, seed })
    }

    pub fn from_parts(channels: usize, weights: Vec<f32>, seed: u64) -> Result<Self> {
        if weights.len() != channels * ENCODER_INPUTS {
            return Err(Error::data(format!(
                "weight blob holds {} values, expected {}",
                weights.len(),
                channels * ENCODER_INPUTS
            )));
        }
        Ok(PillarEncoder { channels, weights, seed })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `clamp(W * aug, 0)` for one augmented point.
    fn encode_point(&self, aug: &[f32; ENCODER_INPUTS], out: &mut [f32]) {
        for (ch, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[ch * ENCODER_INPUTS..(ch + 1) * ENCODER_INPUTS];
            let mut acc = 0.0f32;
            for k in 0..ENCODER_INPUTS {
                acc += row[k] * aug[k];
            }
            *slot = acc.max(0.0);
        }
    }
}

/// Augments a point with offsets to its pillar center (x, y) and to the
/// pillar's point centroid (z).
fn augment(p: &PointRecord, pillar_center: (f64, f64), centroid_z: f32) -> [f32; ENCODER_INPUTS] {
    [
        p.x,
        p.y,
        p.z,
        p.r,
        p.m,
        p.s as f32,
        p.x - pillar_center.0 as f32,
        p.y - pillar_center.1 as f32,
        p.z - centroid_z,
    ]
}

/// Encodes bucketed pillars into the point-cloud BEV feature map.
///
/// Empty pillars stay zero with the mask cleared; occupied pillars hold the
/// per-channel max over their encoded points.
pub fn encode_pillars(
    pillarized: &Pillarized,
    grid: &GridSpec,
    encoder: &PillarEncoder,
) -> Result<BevMap> {
    if encoder.channels() != grid.channels {
        return Err(Error::config(format!(
            "encoder has {} channels but grid expects {}",
            encoder.channels(),
            grid.channels
        )));
    }
    let mut map = BevMap::zeros(grid.nx(), grid.ny(), grid.channels);
    let mut feat = vec![0.0f32; encoder.channels()];
    for (&(i, j), points) in &pillarized.pillars {
        if points.is_empty() {
            continue;
        }
        let center = grid.cell_center(i, j);
        let centroid_z = points.iter().map(|p| p.z).sum::<f32>() / points.len() as f32;
        let cell = map.cell_mut(i, j);
        for p in points {
            let aug = augment(p, center, centroid_z);
            encoder.encode_point(&aug, &mut feat);
            for (c, &f) in cell.iter_mut().zip(feat.iter()) {
                *c = c.max(f);
            }
        }
        map.set_occupied(i, j, true);
    }
    Ok(map)
}
