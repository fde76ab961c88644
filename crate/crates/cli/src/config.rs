//! Pipeline configuration: one JSON file, overridable from the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use fvv_core::SegmentParams;
use serde::{Deserialize, Serialize};

/// Default cap on the number of voxels a volume may contain.
pub const DEFAULT_VOXEL_BUDGET: u64 = 1 << 31;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub volume: VolumeConfig,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub shadow: ShadowConfig,
    #[serde(default)]
    pub stages: StageToggles,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub render: RenderConfig,
}

/// Relative paths resolve against the directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Per-camera frame folders `c<id>/` with `background/*.png` plates and
    /// `f<NNNNN>.png` frames.
    pub frames: PathBuf,
    pub calibration: PathBuf,
    pub output: PathBuf,
    /// Synthetic scene description consumed by the `synth` stage.
    #[serde(default)]
    pub synth_scene: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    pub origin: [f64; 3],
    pub extents: [f64; 3],
    pub voxel_size: f64,
    #[serde(default = "default_budget")]
    pub voxel_budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_VOXEL_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Global background-subtraction threshold (intensity levels).
    pub tau: u32,
    /// Objects keep `t_min < voxels < t_max`.
    pub t_min: u64,
    pub t_max: u64,
    /// Neighbor-camera depth agreement slack in meters; `null` means two
    /// voxel edges.
    #[serde(default)]
    pub depth_eps: Option<f64>,
    /// Cameras that must observe a voxel; `null` means every camera.
    #[serde(default)]
    pub min_observing: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowConfig {
    pub luma_min: f64,
    pub luma_max: f64,
    pub chroma_eps: u32,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        let p = SegmentParams::default();
        ShadowConfig {
            luma_min: p.shadow_luma_min,
            luma_max: p.shadow_luma_max,
            chroma_eps: p.chroma_eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    /// Classify and drop cast shadows after global extraction.
    pub shadow_removal: bool,
    /// Per-component Otsu refinement of the mask.
    pub local_refinement: bool,
    /// Fill occluded billboard pixels from neighbor cameras; when off they
    /// are inpainted.
    pub neighbor_fill: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            shadow_removal: true,
            local_refinement: true,
            neighbor_fill: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub frame_rate: f64,
    pub content: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            frame_rate: 30.0,
            content: String::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub fov_deg: f64,
    pub size: [u32; 2],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            fov_deg: 40.0,
            size: [960, 540],
        }
    }
}

/// One failed constraint, named by its dotted config path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Field overrides from the command line; flags beat the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub voxel_size: Option<f64>,
    pub tau: Option<u32>,
    pub t_min: Option<u64>,
    pub t_max: Option<u64>,
    pub depth_eps: Option<f64>,
    pub min_observing: Option<usize>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, Vec<Violation>> {
        serde_json::from_str(text).map_err(|e| {
            vec![Violation::new(
                "<file>",
                format!("parse error at line {} column {}: {e}", e.line(), e.column()),
            )]
        })
    }

    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let v = &self.volume;
        for (a, name) in ["x", "y", "z"].iter().enumerate() {
            if !v.origin[a].is_finite() {
                out.push(Violation::new(&format!("volume.origin.{name}"), "must be finite"));
            }
            if !(v.extents[a].is_finite() && v.extents[a] > 0.0) {
                out.push(Violation::new(&format!("volume.extents.{name}"), format!("must be positive, got {}", v.extents[a])));
            }
        }
        if !(v.voxel_size.is_finite() && v.voxel_size > 0.0) {
            out.push(Violation::new("volume.voxel_size", format!("must be positive, got {}", v.voxel_size)));
        } else if v.extents.iter().all(|e| e.is_finite() && *e > 0.0) {
            let count = self.voxel_count();
            if count > v.voxel_budget as f64 {
                out.push(Violation::new(
                    "volume.voxel_budget",
                    format!("volume needs {count:.0} voxels, over the budget of {}", v.voxel_budget),
                ));
            }
        }
        let t = &self.thresholds;
        if t.tau == 0 || t.tau > 255 {
            out.push(Violation::new("thresholds.tau", format!("must be in 1..=255, got {}", t.tau)));
        }
        if t.t_min == 0 {
            out.push(Violation::new("thresholds.t_min", "must be positive"));
        }
        if t.t_max <= t.t_min {
            out.push(Violation::new("thresholds.t_max", format!("must exceed t_min ({} <= {})", t.t_max, t.t_min)));
        }
        if let Some(eps) = t.depth_eps {
            if !(eps.is_finite() && eps > 0.0) {
                out.push(Violation::new("thresholds.depth_eps", format!("must be positive, got {eps}")));
            }
        }
        if t.min_observing == Some(0) {
            out.push(Violation::new("thresholds.min_observing", "must be positive"));
        }
        let s = &self.shadow;
        if !(0.0 < s.luma_min && s.luma_min < s.luma_max && s.luma_max <= 1.0) {
            out.push(Violation::new("shadow.luma_min", format!("need 0 < luma_min < luma_max <= 1, got {} and {}", s.luma_min, s.luma_max)));
        }
        if !(self.scene.frame_rate.is_finite() && self.scene.frame_rate > 0.0) {
            out.push(Violation::new("scene.frame_rate", format!("must be positive, got {}", self.scene.frame_rate)));
        }
        let r = &self.render;
        if !(r.fov_deg > 0.0 && r.fov_deg < 180.0) {
            out.push(Violation::new("render.fov_deg", format!("must be in (0, 180), got {}", r.fov_deg)));
        }
        if r.size[0] == 0 || r.size[1] == 0 {
            out.push(Violation::new("render.size", "must be nonzero"));
        }
        out
    }

    /// Voxel count implied by the volume, as f64 so huge volumes cannot overflow.
    pub fn voxel_count(&self) -> f64 {
        let v = &self.volume;
        v.extents.iter().map(|e| (e / v.voxel_size - 1e-9).ceil().max(1.0)).product()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.output {
            self.paths.output = p.clone();
        }
        if let Some(s) = o.voxel_size {
            self.volume.voxel_size = s;
        }
        if let Some(x) = o.tau {
            self.thresholds.tau = x;
        }
        if let Some(x) = o.t_min {
            self.thresholds.t_min = x;
        }
        if let Some(x) = o.t_max {
            self.thresholds.t_max = x;
        }
        if let Some(x) = o.depth_eps {
            self.thresholds.depth_eps = Some(x);
        }
        if let Some(x) = o.min_observing {
            self.thresholds.min_observing = Some(x);
        }
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.frames);
        fix(&mut self.paths.calibration);
        fix(&mut self.paths.output);
        if let Some(p) = self.paths.synth_scene.as_mut() {
            fix(p);
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            tau: self.thresholds.tau.min(255) as u8,
            shadow_luma_min: self.shadow.luma_min,
            shadow_luma_max: self.shadow.luma_max,
            chroma_eps: self.shadow.chroma_eps,
        }
    }

    pub fn depth_eps(&self) -> f64 {
        self.thresholds.depth_eps.unwrap_or(2.0 * self.volume.voxel_size)
    }
}

/// Reads and checks a config file. Parse failures produce a single
/// violation carrying line and column; otherwise every violation is listed.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, Vec<Violation>> {
    load_config(path, &Overrides::default())
}

/// [`validate_config`] with overrides applied before checking. Relative
/// paths come back resolved against the config file's directory.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<PipelineConfig, Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![Violation::new("<file>", format!("cannot read {}: {e}", path.display()))])?;
    let mut cfg = PipelineConfig::parse(&text)?;
    cfg.apply(overrides);
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(violations);
    }
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "paths": {"frames": "f", "calibration": "c.json", "output": "out"},
        "volume": {"origin": [0, 0, 0], "extents": [1, 1, 1], "voxel_size": 0.1},
        "thresholds": {"tau": 30, "t_min": 10, "t_max": 100}
    }"#;

    fn minimal() -> PipelineConfig {
        PipelineConfig::parse(MINIMAL).unwrap()
    }

    #[test]
    fn minimal_config_is_valid_with_defaults() {
        let c = minimal();
        assert!(c.violations().is_empty());
        assert_eq!(c.volume.voxel_budget, DEFAULT_VOXEL_BUDGET);
        assert_eq!(c.depth_eps(), 0.2);
        assert_eq!(c.stages, StageToggles::default());
        assert_eq!(c.voxel_count(), 1000.0);
    }

    #[test]
    fn every_violation_is_reported() {
        let mut c = minimal();
        c.volume.voxel_size = 0.0;
        c.thresholds.t_max = 5;
        c.thresholds.tau = 0;
        let fields: Vec<String> = c.violations().into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["volume.voxel_size", "thresholds.tau", "thresholds.t_max"]);
    }

    #[test]
    fn budget_violation_names_the_budget() {
        let mut c = minimal();
        c.volume.extents = [68.0, 55.5, 4.0];
        c.volume.voxel_size = 0.01;
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "volume.voxel_budget");
    }

    #[test]
    fn parse_error_has_position() {
        let err = PipelineConfig::parse("{\n  \"paths\": ,\n}").unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].message.contains("line 2 column"), "{}", err[0].message);
        let unknown = MINIMAL.replace("\"tau\"", "\"tua\"");
        assert!(PipelineConfig::parse(&unknown).is_err());
    }

    #[test]
    fn overrides_win_over_file() {
        let mut c = minimal();
        c.apply(&Overrides {
            voxel_size: Some(0.5),
            t_min: Some(1),
            output: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(c.volume.voxel_size, 0.5);
        assert_eq!(c.thresholds.t_min, 1);
        assert_eq!(c.paths.output, PathBuf::from("elsewhere"));
        assert_eq!(c.thresholds.t_max, 100);
    }
}
