//! Shared benchmark inputs: a five-camera ring around two players and a
//! ball, at a configurable voxel resolution.

use fvv_core::carve::{label_components, GridSpec, LabeledVolume};
use fvv_core::mesh::{mesh_all, LabeledMesh};
use fvv_core::synth::{ring_rig, Background, Primitive, Shape, SynthScene, TwoTone};
use fvv_core::Result;
use image::GrayImage;
use nalgebra::Point3;

pub struct Workload {
    pub scene: SynthScene,
    pub masks: Vec<GrayImage>,
    pub spec: GridSpec,
}

fn tone(front: [u8; 3], back: [u8; 3]) -> TwoTone {
    TwoTone { front, back, split: [1.0, 0.0, 0.0] }
}

/// `side` voxels along x and y over a 3 x 3 x 2 m box.
pub fn workload(side: usize) -> Result<Workload> {
    let primitives = vec![
        Primitive {
            id: 1,
            shape: Shape::Capsule { a: [-0.6, 0.0, 0.3], b: [-0.6, 0.0, 1.5], radius: 0.3 },
            colors: tone([200, 40, 40], [90, 20, 120]),
        },
        Primitive {
            id: 2,
            shape: Shape::Capsule { a: [0.7, 0.4, 0.3], b: [0.7, 0.4, 1.6], radius: 0.3 },
            colors: tone([30, 60, 200], [240, 200, 40]),
        },
        Primitive {
            id: 3,
            shape: Shape::Sphere { center: [0.1, -0.9, 0.2], radius: 0.15 },
            colors: tone([250, 250, 250], [20, 20, 20]),
        },
    ];
    let rig = ring_rig(5, 9.0, 3.0, 0.2, Point3::new(0.0, 0.0, 0.9), 600.0, 640, 400)?;
    let scene = SynthScene::new(primitives, rig, Background::Uniform { color: [40, 120, 50] })?;
    let masks = scene.rig.cameras().iter().map(|c| scene.render_analytic(c).mask).collect();
    let s = 3.0 / side as f64;
    let spec = GridSpec::new([-1.5, -1.5, 0.0], s, [side, side, (2.0 / s).ceil() as usize])?;
    Ok(Workload { scene, masks, spec })
}

impl Workload {
    pub fn labeled(&self) -> Result<LabeledVolume> {
        let grid = fvv_core::carve::carve(&self.scene.rig, &self.masks, &self.spec, self.scene.rig.len())?;
        Ok(label_components(&grid))
    }

    pub fn meshes(&self) -> Result<Vec<LabeledMesh>> {
        Ok(mesh_all(&self.labeled()?))
    }
}
