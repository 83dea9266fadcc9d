//! Streaming LiDAR-camera fusion data plane.
//!
//! A rotating LiDAR delivers its sweep as azimuthal slices; waiting for the
//! full rotation costs ~100 ms of perception latency. This crate implements
//! the geometric data plane of a streaming detector that processes each
//! slice as it arrives and substitutes wide-FoV camera images for the
//! missing context, along with a latency/FLOP analysis of why the
//! arrangement is fast:
//!
//! * [`slicing`] — azimuthal sectors, the corner rule for ground-truth
//!   assignment, camera-sector overlap.
//! * [`calib`] — pinhole cameras, rigid transforms, projection and ray
//!   casting, calibration-noise sampling.
//! * [`pillar`] — BEV pillarization with a deterministic reference encoder.
//! * [`image_bev`] — voxel-centric splatting of image features into a 3D
//!   volume, batch standardization, and the z-reduction cascade.
//! * [`fusion`] — quadrant crop/uncrop, channel-wise fusion, and the conv
//!   FLOP cost model.
//! * [`detect`] — top-k selection, per-class NMS, cross-slice aggregation,
//!   center-distance mAP.
//! * [`sim`] — deterministic discrete-event simulation of past-free vs
//!   past-dependent pipelines.
//! * [`scene`] / [`pipeline`] — synthetic scenes and the end-to-end
//!   per-slice run.
//!
//! Learned stages of the original architecture (image backbone, PointNet,
//! 3D convolutions, detection head) are replaced by deterministic seeded
//! reference transforms behind pluggable interfaces; the geometry, shape,
//! and invariance contracts are the point of this crate, not the weights.

mod angle;
pub mod bev;
pub mod calib;
pub mod detect;
pub mod error;
pub mod fusion;
pub mod image_bev;
pub mod io;
pub mod pillar;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod sim;
pub mod slicing;

pub use bev::{BevMap, GridSpec, VoxelVolume};
pub use calib::{CalibNoise, Camera, CameraRig, Extrinsics, Intrinsics, PixelHit, Ray};
pub use detect::{Detection, DetectionSet, EvalConfig, EvalReport, NmsConfig};
pub use error::{Error, Result};
pub use fusion::{ConvCostSpec, Quadrant};
pub use image_bev::{FeatureImage, FeatureProvider, RgbImage};
pub use pillar::PillarEncoder;
pub use pipeline::{RunConfig, RunOutput};
pub use rng::DetRng;
pub use scene::{SceneBundle, SceneData, SceneParams};
pub use sim::{PipelineModel, SimSummary, SimTrace, Stage};
pub use slicing::{Box3D, PointCloudSlice, PointRecord, RawPoint, SliceSpec};
