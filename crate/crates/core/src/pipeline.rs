//! End-to-end per-slice pipeline: pillar encoding, camera splatting,
//! crop/fuse, detection, cross-slice aggregation, and evaluation; plus the
//! calibration-noise sweep experiment.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bev::{BevMap, GridSpec};
use crate::calib::CalibNoise;
use crate::detect::{
    aggregate_slices, evaluate_map, nms_per_class, top_k, Detection, DetectionSet, EvalConfig,
    EvalReport, NmsConfig,
};
use crate::error::{Error, Result};
use crate::fusion::{crop, fuse, quadrants_of_slice};
use crate::image_bev::{
    batch_standardize, reduce_volume_to_bev, splat_to_volume, FeatureImage, FeatureProvider,
    SeededLinearProvider,
};
use crate::io;
use crate::pillar::{encode_pillars, pillarize, PillarEncoder};
use crate::scene::{class_dims, SceneData, SceneParams, CLASS_TEMPLATES, GROUND_Z};
use crate::slicing::{azimuth_deg, cameras_for_slice, slice_sweep, Box3D};

/// Calibration-noise bounds of a run. The sampling seed defaults to the run
/// seed when unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub max_angle_deg: f64,
    pub max_trans_m: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Occupancy-peak detector knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Peaks must exceed this multiple of the mean occupied-cell energy;
    /// elevated, reflective surfaces clear it, ground clutter does not.
    pub peak_rel_threshold: f64,
    /// Cells above this multiple of the mean occupied energy join the
    /// flood-filled object footprint.
    pub component_rel_threshold: f64,
    /// Local-maximum window radius, meters (also the positional resolution
    /// of the detector).
    pub suppress_radius_m: f64,
    /// Blend factor of the image-stream centroid against the point-stream
    /// centroid.
    pub image_weight: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            peak_rel_threshold: 1.5,
            component_rel_threshold: 1.2,
            suppress_radius_m: 2.0,
            image_weight: 0.3,
        }
    }
}

/// Full run configuration; file form is JSON with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_slices: u32,
    pub grid: GridSpec,
    pub scene: SceneParams,
    pub noise: Option<NoiseSpec>,
    pub nms: NmsConfig,
    pub eval: EvalConfig,
    pub detector: DetectorConfig,
    /// Cameras excluded from the image stream.
    pub disabled_cameras: Vec<usize>,
    /// Optional pillar-encoder weight blob; defaults to seeded weights.
    pub encoder_weights: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            n_slices: 8,
            grid: GridSpec {
                x_min: -25.6,
                x_max: 25.6,
                y_min: -25.6,
                y_max: 25.6,
                z_min: -3.0,
                z_max: 5.0,
                cell_xy: 0.4,
                cell_z: 1.0,
                channels: 8,
            },
            scene: SceneParams::default(),
            noise: None,
            nms: NmsConfig::default(),
            eval: EvalConfig::default(),
            detector: DetectorConfig::default(),
            disabled_cameras: Vec::new(),
            encoder_weights: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.nms.validate()?;
        self.eval.validate()?;
        if self.n_slices == 0 {
            return Err(Error::config("n_slices must be >= 1".to_string()));
        }
        if !self.grid.nz().is_multiple_of(4) {
            return Err(Error::config(format!(
                "volume depth {} must be divisible by 4 for the reduction cascade",
                self.grid.nz()
            )));
        }
        if let Some(n) = &self.noise {
            CalibNoise::new(n.max_angle_deg, n.max_trans_m, 0)?;
        }
        if self.detector.peak_rel_threshold <= 0.0 || self.detector.suppress_radius_m <= 0.0 {
            return Err(Error::config("detector thresholds must be positive".to_string()));
        }
        Ok(())
    }

    pub fn calib_noise(&self) -> Option<CalibNoise> {
        self.noise.map(|n| CalibNoise {
            max_angle_deg: n.max_angle_deg,
            max_trans_m: n.max_trans_m,
            seed: n.seed.unwrap_or(self.seed),
        })
    }
}

/// Detection stage over a fused BEV map. The default is the occupancy-peak
/// detector; external detectors (e.g. a real trained head) plug in here.
pub trait DetectorHook {
    fn detect(
        &self,
        fused: &BevMap,
        point_channels: usize,
        grid: &GridSpec,
        grid_offset: (usize, usize),
    ) -> Result<Vec<Box3D>>;
}

/// Non-learned reference detector: local maxima of point-stream energy
/// within GT-sized windows, thresholded against the map's mean occupied
/// energy, localized by a fused energy centroid that folds in the image
/// stream, and classified by footprint area.
pub struct OccupancyPeakDetector {
    cfg: DetectorConfig,
}

impl OccupancyPeakDetector {
    pub fn new(cfg: DetectorConfig) -> Self {
        OccupancyPeakDetector { cfg }
    }
}

fn l2(values: &[f32]) -> f64 {
    values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

impl DetectorHook for OccupancyPeakDetector {
    fn detect(
        &self,
        fused: &BevMap,
        point_channels: usize,
        grid: &GridSpec,
        grid_offset: (usize, usize),
    ) -> Result<Vec<Box3D>> {
        if point_channels >= fused.channels() {
            return Err(Error::config(
                "fused map must carry image channels after the point channels".to_string(),
            ));
        }
        let (nx, ny) = (fused.nx(), fused.ny());
        let mut p_energy = vec![0.0f64; nx * ny];
        let mut i_energy = vec![0.0f64; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let cell = fused.cell(i, j);
                p_energy[i * ny + j] = l2(&cell[..point_channels]);
                i_energy[i * ny + j] = l2(&cell[point_channels..]);
            }
        }
        // Reference level of the point stream: mean energy of occupied
        // cells, dominated by ground clutter.
        let occupied: Vec<f64> = p_energy.iter().cloned().filter(|&e| e > 0.0).collect();
        if occupied.is_empty() {
            return Ok(Vec::new());
        }
        let mean_occ = occupied.iter().sum::<f64>() / occupied.len() as f64;
        let p_rel: Vec<f64> = p_energy.iter().map(|&e| e / mean_occ).collect();
        // Image contrast: deviation from the map's median image energy
        // (the background), strongest along object silhouette rays.
        let mut nonzero_i: Vec<f64> = i_energy.iter().cloned().filter(|&e| e > 0.0).collect();
        let i_med = median(&mut nonzero_i);
        let i_dev: Vec<f64> = i_energy
            .iter()
            .map(|&e| if e > 0.0 { (e - i_med).abs() } else { 0.0 })
            .collect();
        let i_ref = i_dev.iter().cloned().fold(0.0, f64::max);
        // Typical deviation level of the map, the baseline for alignment.
        let in_frustum = i_energy.iter().filter(|&&e| e > 0.0).count();
        let i_mean_dev = if in_frustum > 0 {
            i_dev.iter().sum::<f64>() / in_frustum as f64
        } else {
            0.0
        };

        let rw = (self.cfg.suppress_radius_m / grid.cell_xy).ceil() as isize;
        let mut out = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let here = p_rel[i * ny + j];
                if here < self.cfg.peak_rel_threshold {
                    continue;
                }
                let mut is_peak = true;
                'window: for di in -rw..=rw {
                    for dj in -rw..=rw {
                        let (wi, wj) = (i as isize + di, j as isize + dj);
                        if wi < 0 || wj < 0 || wi >= nx as isize || wj >= ny as isize {
                            continue;
                        }
                        let (wi, wj) = (wi as usize, wj as usize);
                        let other = p_rel[wi * ny + wj];
                        if other > here || (other == here && (wi, wj) < (i, j)) {
                            is_peak = false;
                            break 'window;
                        }
                    }
                }
                if !is_peak {
                    continue;
                }
                // Flood-fill the object footprint: cells above the clutter
                // level, 8-connected from the peak. The footprint gives an
                // unbiased point-stream centroid and the extent for
                // classification even when the peak sits on a corner.
                let mut component: Vec<(usize, usize)> = vec![(i, j)];
                let mut seen = std::collections::BTreeSet::new();
                seen.insert((i, j));
                let mut cursor = 0;
                while cursor < component.len() && component.len() < 4096 {
                    let (ci, cj) = component[cursor];
                    cursor += 1;
                    for di in -1i64..=1 {
                        for dj in -1i64..=1 {
                            let (wi, wj) = (ci as i64 + di, cj as i64 + dj);
                            if wi < 0 || wj < 0 || wi >= nx as i64 || wj >= ny as i64 {
                                continue;
                            }
                            let cell = (wi as usize, wj as usize);
                            if seen.contains(&cell)
                                || p_rel[cell.0 * ny + cell.1] < self.cfg.component_rel_threshold
                            {
                                continue;
                            }
                            seen.insert(cell);
                            component.push(cell);
                        }
                    }
                }
                let mut p_sum = 0.0;
                let mut px = 0.0;
                let mut py = 0.0;
                for &(ci, cj) in &component {
                    let p = p_rel[ci * ny + cj];
                    let (x, y) = grid.cell_center(grid_offset.0 + ci, grid_offset.1 + cj);
                    p_sum += p;
                    px += p * x;
                    py += p * y;
                }
                let (px, py) = (px / p_sum, py / p_sum);
                // Image statistics over the local window: the deviation
                // centroid pulls the estimate toward the silhouette, and the
                // window maximum is the reference for the alignment score.
                let mut i_sum = 0.0;
                let mut ix = 0.0;
                let mut iy = 0.0;
                if i_ref > 0.0 {
                    for di in -rw..=rw {
                        for dj in -rw..=rw {
                            let (wi, wj) = (i as isize + di, j as isize + dj);
                            if wi < 0 || wj < 0 || wi >= nx as isize || wj >= ny as isize {
                                continue;
                            }
                            let (wi, wj) = (wi as usize, wj as usize);
                            let dev = i_dev[wi * ny + wj];
                            if dev <= 0.0 {
                                continue;
                            }
                            let (x, y) = grid.cell_center(grid_offset.0 + wi, grid_offset.1 + wj);
                            i_sum += dev;
                            ix += dev * x;
                            iy += dev * y;
                        }
                    }
                }
                let (cx, cy) = if i_sum > 0.0 {
                    let lambda = self.cfg.image_weight;
                    (
                        (px + lambda * ix / i_sum) / (1.0 + lambda),
                        (py + lambda * iy / i_sum) / (1.0 + lambda),
                    )
                } else {
                    (px, py)
                };
                // Point-image alignment: silhouette deviation on the LiDAR
                // footprint relative to the map's typical deviation. Correct
                // calibration puts the silhouette over the points;
                // miscalibration slides it off and the score decays.
                let alignment = if i_mean_dev > 0.0 {
                    let mean_dev = component
                        .iter()
                        .map(|&(ci, cj)| i_dev[ci * ny + cj])
                        .sum::<f64>()
                        / component.len() as f64;
                    let ratio = mean_dev / i_mean_dev;
                    ratio / (1.0 + ratio)
                } else {
                    1.0
                };
                // Classify by footprint extent: the largest spread between
                // component cells approximates the BEV diagonal.
                let mut extent: f64 = grid.cell_xy;
                for (ai, &a) in component.iter().enumerate() {
                    for &b in component.iter().skip(ai + 1) {
                        let (ax, ay) = grid.cell_center(grid_offset.0 + a.0, grid_offset.1 + a.1);
                        let (bx, by) = grid.cell_center(grid_offset.0 + b.0, grid_offset.1 + b.1);
                        let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
                        extent = extent.max(d);
                    }
                }
                let class_id = CLASS_TEMPLATES
                    .iter()
                    .min_by(|a, b| {
                        let da = ((a.1 * a.1 + a.2 * a.2).sqrt() - extent).abs();
                        let db = ((b.1 * b.1 + b.2 * b.2).sqrt() - extent).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap()
                    .0;
                let (l, w, h) = class_dims(class_id).unwrap();
                let score = here / (1.0 + here) * (0.15 + 0.85 * alignment);
                out.push(Box3D::new(
                    Vector3::new(cx, cy, GROUND_Z + h / 2.0),
                    (l, w, h),
                    0.0,
                    class_id,
                    score,
                )?);
            }
        }
        Ok(out)
    }
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub per_slice: Vec<DetectionSet>,
    pub detections: DetectionSet,
    pub eval: Option<EvalReport>,
    pub dropped_points: usize,
}

/// Runs the full per-slice pipeline over one frame.
///
/// Per slice: pillarize and encode the points, splat the overlapping
/// cameras' features into each quadrant the sector touches, standardize the
/// quadrant batch, reduce to BEV, crop the point map to the same quadrants,
/// fuse, detect, map detections back to full-grid coordinates, keep those
/// inside the sector, then top-500 and per-class NMS. Slices are aggregated
/// with a final cross-slice NMS and evaluated against ground truth.
pub fn run_pipeline(
    scene: &SceneData,
    cfg: &RunConfig,
    detector: Option<&dyn DetectorHook>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = &cfg.grid;
    let default_detector = OccupancyPeakDetector::new(cfg.detector.clone());
    let detector: &dyn DetectorHook = detector.unwrap_or(&default_detector);

    let encoder = match &cfg.encoder_weights {
        Some(path) => io::read_encoder(path)?,
        None => PillarEncoder::from_seed(grid.channels, cfg.seed)?,
    };
    let provider = SeededLinearProvider::from_seed(grid.channels, cfg.seed)?;

    // The splat rig carries the (possibly perturbed) extrinsics used at
    // projection time; camera-sector overlap uses the nominal mounting.
    let splat_rig = match cfg.calib_noise() {
        Some(noise) => scene.rig.perturbed(&noise),
        None => scene.rig.clone(),
    };

    if scene.images.len() != scene.rig.len() {
        return Err(Error::data(format!(
            "{} images for a {}-camera rig",
            scene.images.len(),
            scene.rig.len()
        )));
    }
    let features: Vec<Option<FeatureImage>> = scene
        .images
        .iter()
        .enumerate()
        .map(|(idx, img)| {
            if cfg.disabled_cameras.contains(&idx) {
                Ok(None)
            } else {
                provider.features(img, idx).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let slices = slice_sweep(&scene.points, cfg.n_slices)?;
    let mut dropped_points = 0usize;
    let mut per_slice: Vec<DetectionSet> = Vec::with_capacity(slices.len());
    for slice in &slices {
        let pillarized = pillarize(slice, grid);
        dropped_points += pillarized.dropped;
        let p_bev = encode_pillars(&pillarized, grid, &encoder)?;

        let cams = cameras_for_slice(&slice.spec, &scene.rig);
        let slice_features: Vec<FeatureImage> = cams
            .iter()
            .filter_map(|&c| features[c].clone())
            .collect();

        let quadrants = quadrants_of_slice(&slice.spec);
        let mut volumes = quadrants
            .iter()
            .map(|&q| splat_to_volume(&slice_features, &splat_rig, grid, Some(q)))
            .collect::<Result<Vec<_>>>()?;
        batch_standardize(&mut volumes)?;

        let mut found: Vec<Detection> = Vec::new();
        for (&q, volume) in quadrants.iter().zip(&volumes) {
            let i_bev_q = reduce_volume_to_bev(volume, None)?;
            let p_bev_q = crop(&p_bev, q)?;
            let fused = fuse(&p_bev_q, &i_bev_q)?;
            let offset = q.grid_offset(grid.nx(), grid.ny());
            for bbox in detector.detect(&fused, grid.channels, grid, offset)? {
                let in_sector = azimuth_deg(bbox.center.x, bbox.center.y)
                    .map(|az| slice.spec.contains_deg(az))
                    .unwrap_or(false);
                if in_sector {
                    found.push(Detection {
                        bbox,
                        slice_index: slice.spec.index,
                        frame_id: scene.frame_id,
                    });
                }
            }
        }
        let selected = top_k(&DetectionSet::from_vec(found), cfg.eval.max_detections);
        per_slice.push(nms_per_class(&selected, &cfg.nms));
    }

    let detections = aggregate_slices(&per_slice, &cfg.nms);
    let eval = if scene.boxes.is_empty() {
        None
    } else {
        Some(evaluate_map(&detections, &scene.boxes, &cfg.eval)?)
    };
    Ok(RunOutput { per_slice, detections, eval, dropped_points })
}

/// Writes the run artifacts: aggregated detections plus the evaluation
/// report when ground truth was present.
pub fn write_run_outputs(dir: &Path, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_detections_csv(&dir.join("detections.csv"), &output.detections)?;
    if let Some(eval) = &output.eval {
        io::write_eval_csv(&dir.join("eval.csv"), eval)?;
    }
    Ok(())
}

/// One measured point of a noise sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub max_angle_deg: f64,
    pub max_trans_m: f64,
    pub seed: u64,
    pub mean_ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Mean mAP per noise level, in input level order.
    pub level_means: Vec<f64>,
    /// Wins of the cleanest level over the noisiest, per seed.
    pub wins: usize,
    pub ties: usize,
    /// One-sided sign-test p-value for "clean beats noisiest".
    pub p_value: f64,
}

/// Sweeps calibration-noise levels over a set of scene seeds.
///
/// Scenes are generated once per seed and re-run per level, so levels are
/// paired; level `(0, 0)` is bit-identical to a clean run.
pub fn noise_sweep(
    base: &RunConfig,
    rig: &crate::calib::CameraRig,
    levels: &[(f64, f64)],
    seeds: &[u64],
) -> Result<SweepResult> {
    if levels.len() < 2 || seeds.is_empty() {
        return Err(Error::config("sweep needs >= 2 levels and >= 1 seed".to_string()));
    }
    let mut rows = Vec::new();
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); levels.len()];
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let scene = crate::scene::generate_scene(seed, &cfg.scene, rig, &cfg.grid)?;
        for (li, &(deg, trans)) in levels.iter().enumerate() {
            let mut level_cfg = cfg.clone();
            level_cfg.noise =
                Some(NoiseSpec { max_angle_deg: deg, max_trans_m: trans, seed: Some(seed) });
            let output = run_pipeline(&scene, &level_cfg, None)?;
            let mean_ap = output.eval.as_ref().and_then(|e| e.mean_ap).unwrap_or(0.0);
            rows.push(SweepRow { max_angle_deg: deg, max_trans_m: trans, seed, mean_ap });
            per_level[li].push(mean_ap);
        }
    }
    let level_means: Vec<f64> =
        per_level.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let first = &per_level[0];
    let last = &per_level[levels.len() - 1];
    let (wins, ties, p_value) = sign_test_greater(first, last);
    Ok(SweepResult { rows, level_means, wins, ties, p_value })
}

/// One-sided paired sign test for `a > b`: ties are dropped, the p-value is
/// the binomial tail `P[Bin(n, 1/2) >= wins]`.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    assert_eq!(a.len(), b.len());
    let mut wins = 0usize;
    let mut ties = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x == y {
            ties += 1;
        }
    }
    let n = a.len() - ties;
    if n == 0 {
        return (wins, ties, 1.0);
    }
    let mut tail = 0.0f64;
    for k in wins..=n {
        tail += binomial(n, k);
    }
    (wins, ties, tail / 2f64.powi(n as i32))
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    use std::io::Write;
    writeln!(w, "noise_deg,noise_m,seed,map")?;
    for r in &result.rows {
        writeln!(w, "{},{},{},{}", r.max_angle_deg, r.max_trans_m, r.seed, r.mean_ap)?;
    }
    Ok(())
}
