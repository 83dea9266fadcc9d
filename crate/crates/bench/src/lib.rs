//! Shared fixtures for the benchmarks: a desk-scale grid, a surround rig,
//! and a deterministic synthetic scene.

use slicefuse_core::bev::GridSpec;
use slicefuse_core::calib::CameraRig;
use slicefuse_core::scene::{generate_scene, SceneData, SceneParams};

pub fn desk_grid() -> GridSpec {
    GridSpec {
        x_min: -25.6,
        x_max: 25.6,
        y_min: -25.6,
        y_max: 25.6,
        z_min: -3.0,
        z_max: 5.0,
        cell_xy: 0.4,
        cell_z: 1.0,
        channels: 8,
    }
}

pub fn desk_rig() -> CameraRig {
    CameraRig::surround(512, 288).expect("static rig layout is valid")
}

pub fn bench_scene(seed: u64) -> SceneData {
    let params = SceneParams { n_objects: 8, clutter_points: 4000, ..SceneParams::default() };
    generate_scene(seed, &params, &desk_rig(), &desk_grid()).expect("bench scene generates")
}
