//! Synthetic camera fleets laid out as experiment inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::CameraImages;
use crate::imaging::ImagePlane;
use crate::sensorsim::{
    make_camera, make_scene, mix_seed, shoot, CameraProfile, SceneKind, SensorParams,
};

/// Flat-field levels cycled through by enrollment shots.
pub const ENROLL_LEVELS: [f64; 4] = [96.0, 128.0, 160.0, 192.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub cameras: usize,
    pub width: usize,
    pub height: usize,
    pub enroll_inject: usize,
    pub enroll_compare: usize,
    pub spoofable: usize,
    pub seed: u64,
    pub params: SensorParams,
    /// Camera ids are `<prefix><index:02>`.
    pub id_prefix: String,
}

impl FleetConfig {
    pub fn new(cameras: usize, width: usize, height: usize, seed: u64) -> Self {
        Self {
            cameras,
            width,
            height,
            enroll_inject: 50,
            enroll_compare: 50,
            spoofable: 10,
            seed,
            params: SensorParams::default(),
            id_prefix: "cam".into(),
        }
    }

    pub fn camera_id(&self, index: usize) -> String {
        format!("{}{index:02}", self.id_prefix)
    }

    pub fn camera_seed(&self, index: usize) -> u64 {
        mix_seed(&[self.seed, index as u64])
    }

    /// Scene of the `shot`-th target image: test charts and gradients alternate.
    pub fn spoofable_scene(shot: usize) -> SceneKind {
        if shot % 2 == 0 {
            SceneKind::Testchart
        } else {
            SceneKind::Gradient
        }
    }

    pub fn enroll_scene(shot: usize) -> SceneKind {
        SceneKind::Flat {
            level: ENROLL_LEVELS[shot % ENROLL_LEVELS.len()],
        }
    }
}

/// One simulated camera with its rendered image sets.
#[derive(Clone, Debug)]
pub struct SimulatedCamera {
    pub profile: CameraProfile,
    pub images: CameraImages,
}

fn render(
    cam: &CameraProfile,
    cfg: &FleetConfig,
    n: usize,
    offset: u64,
    scene: fn(usize) -> SceneKind,
) -> Result<Vec<ImagePlane>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let s = make_scene(scene(i), cfg.width, cfg.height)?;
            shoot(cam, &s, offset + i as u64)
        })
        .collect()
}

pub fn simulate_fleet(cfg: &FleetConfig) -> Result<Vec<SimulatedCamera>> {
    (0..cfg.cameras)
        .map(|c| {
            let profile = make_camera(
                cfg.camera_seed(c),
                cfg.width,
                cfg.height,
                cfg.params,
                cfg.camera_id(c),
            )?;
            // disjoint shot-seed ranges per set
            let images = CameraImages {
                camera_id: profile.camera_id.clone(),
                enroll_inject: render(
                    &profile,
                    cfg,
                    cfg.enroll_inject,
                    0,
                    FleetConfig::enroll_scene,
                )?,
                enroll_compare: render(
                    &profile,
                    cfg,
                    cfg.enroll_compare,
                    1 << 32,
                    FleetConfig::enroll_scene,
                )?,
                spoofable: render(
                    &profile,
                    cfg,
                    cfg.spoofable,
                    2 << 32,
                    FleetConfig::spoofable_scene,
                )?,
            };
            Ok(SimulatedCamera { profile, images })
        })
        .collect()
}
