//! Stage runner behind the `fvv` binary.
//!
//! Stages talk to each other only through files under the output directory:
//!
//! ```text
//! rig.json                         undistorted calibration
//! background/c<id>.png             background model per camera
//! images/c<id>_f<N>.png            undistorted frames
//! masks/c<id>_f<N>.png             silhouettes
//! volume/f<N>.vhul                 labeled, noise-filtered volume
//! volume/f<N>_objects.json         per-object voxel count and barycenter
//! meshes/f<N>/object_<t>.obj       one closed-or-clipped mesh per object
//! viewmaps/c<id>_f<N>_depth.tiff   depth map (page 0) and coverage (page 1)
//! viewmaps/c<id>_f<N>_labels.png   16-bit object labels
//! billboards/f<N>/                 single-frame billboard scene + fill.json
//! scene/                           exported scene.json + textures/
//! renders/                         rendered virtual views
//! run.log.jsonl                    one JSON record per stage run
//! ```

pub mod config;
mod layout;
mod runlog;
mod stages;

use std::path::PathBuf;

pub use config::{load_config, validate_config, Overrides, PipelineConfig, Violation};
pub use layout::Layout;
pub use stages::{orbit_reference, run_pipeline, run_stage, OrbitRequest, OrbitSample, RenderRequest, StageOptions, StageReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Segment,
    Carve,
    Mesh,
    Viewmaps,
    Billboards,
    Export,
    Render,
}

impl Stage {
    /// Offline stages from frames to exported scene, in order.
    pub const PIPELINE: [Stage; 6] = [Stage::Segment, Stage::Carve, Stage::Mesh, Stage::Viewmaps, Stage::Billboards, Stage::Export];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Segment => "segment",
            Stage::Carve => "carve",
            Stage::Mesh => "mesh",
            Stage::Viewmaps => "viewmaps",
            Stage::Billboards => "billboards",
            Stage::Export => "export",
            Stage::Render => "render",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error("invalid configuration:{}", list(.0))]
    Config(Vec<Violation>),

    #[error("{stage}: missing input {}", path.display())]
    MissingInput { stage: Stage, path: PathBuf },

    #[error("{stage}: output directory is locked ({} exists); another run is active or crashed", path.display())]
    Locked { stage: Stage, path: PathBuf },

    #[error("{stage}: {source}")]
    Internal {
        stage: Stage,
        #[source]
        source: fvv_core::Error,
    },
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("\n  {x}")).collect()
}

impl StageError {
    pub const EXIT_CONFIG: u8 = 2;
    pub const EXIT_MISSING_INPUT: u8 = 3;
    pub const EXIT_INTERNAL: u8 = 4;

    pub fn exit_code(&self) -> u8 {
        match self {
            StageError::Config(_) => Self::EXIT_CONFIG,
            StageError::MissingInput { .. } => Self::EXIT_MISSING_INPUT,
            StageError::Locked { .. } | StageError::Internal { .. } => Self::EXIT_INTERNAL,
        }
    }

    pub(crate) fn core(stage: Stage) -> impl Fn(fvv_core::Error) -> StageError {
        move |e| match e {
            fvv_core::Error::MissingAsset(path) => StageError::MissingInput { stage, path },
            source => StageError::Internal { stage, source },
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> StageError {
        StageError::Config(vec![Violation {
            field: field.to_string(),
            message: message.into(),
        }])
    }
}

/// Parses `x,y,z`.
pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
        if !o.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(out)
}

/// Parses `WxH`.
pub fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|e| format!("width {w:?}: {e}"))?;
    let h: u32 = h.trim().parse().map_err(|e| format!("height {h:?}: {e}"))?;
    if w == 0 || h == 0 {
        return Err("size must be nonzero".into());
    }
    Ok((w, h))
}
