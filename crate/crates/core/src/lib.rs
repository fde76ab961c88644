//! Occlusion-aware billboard free-viewpoint reconstruction.
//!
//! Stages, in pipeline order:
//!
//! 1. [`silhouette`]: background model, global extraction, shadow
//!    classification and local chroma refinement.
//! 2. [`carve`]: volumetric visual hull, 26-connected labeling, per-object
//!    moments and size filtering.
//! 3. [`mesh`]: marching cubes per labeled object.
//! 4. [`viewmaps`]: per-camera depth and object-label maps, per-object
//!    visible/occluded regions.
//! 5. [`billboard`]: textures (with neighbor-camera fill for occluded
//!    pixels) and 3D anchoring.
//! 6. [`scene`]: scene persistence, reference-camera selection and offline
//!    rendering of virtual views.
//!
//! [`camgeom`] holds the camera model used everywhere and [`synth`]
//! generates synthetic scenes with analytic ground truth.

pub mod billboard;
pub mod camgeom;
pub mod carve;
pub mod error;
pub mod io;
mod mc_tables;
pub mod mesh;
pub mod raster;
pub mod scene;
pub mod silhouette;
pub mod synth;
pub mod viewmaps;

pub use billboard::{Billboard, CameraView, FillReport, TextureParams};
pub use camgeom::{Camera, CameraRig, Extrinsics, Intrinsics, PixelCoord, WorldPoint};
pub use carve::{GridSpec, LabeledVolume, ObjectStats, VoxelGrid};
pub use error::{Error, Result};
pub use mesh::LabeledMesh;
pub use scene::{BillboardScene, FieldTemplate, FrameBillboards, SceneMetadata, VirtualView};
pub use silhouette::{BackgroundModel, SegmentParams, ShadowClass, SilhouetteMask};
pub use synth::SynthScene;
pub use viewmaps::{DepthMap, LabelMap, ObjectRegion, PixelState};
