//! The individual stages. Each reads only files written by earlier stages
//! (or the raw inputs named in the config) and writes only below the output
//! directory, so rerunning a stage with the same inputs reproduces its
//! outputs byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fvv_core::billboard::{billboards_for_camera, CameraView, TextureParams};
use fvv_core::carve::{carve, label_components, GridSpec, LabeledVolume};
use fvv_core::io;
use fvv_core::mesh::{mesh_all, LabeledMesh};
use fvv_core::scene::{self, BillboardScene, FieldTemplate, FrameBillboards, SceneMetadata, VirtualView};
use fvv_core::silhouette::{self, BackgroundModel, SilhouetteMask};
use fvv_core::synth::SynthScene;
use fvv_core::viewmaps::{rasterize, DepthMap, LabelMap};
use fvv_core::CameraRig;
use nalgebra::Point3;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::layout::{scan_frames, walk_files, Layout};
use crate::runlog::{self, DirLock, RunRecord};
use crate::{Stage, StageError};

type StageResult<T> = std::result::Result<T, StageError>;

/// A virtual view requested on the command line. Unset fields fall back to
/// the config's render section.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderRequest {
    pub view: Option<[f64; 3]>,
    pub look_at: Option<[f64; 3]>,
    pub fov_deg: Option<f64>,
    pub size: Option<(u32, u32)>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageOptions {
    /// Restrict the stage to one frame.
    pub frame: Option<u32>,
    pub render: RenderRequest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub frames: Vec<u32>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_ms: f64,
}

struct Ctx<'a> {
    stage: Stage,
    cfg: &'a PipelineConfig,
    opts: &'a StageOptions,
    out: Layout,
    frames: Vec<u32>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn core(&self) -> impl Fn(fvv_core::Error) -> StageError {
        StageError::core(self.stage)
    }

    fn io(&self) -> impl Fn(std::io::Error) -> StageError {
        let stage = self.stage;
        move |e| StageError::Internal {
            stage,
            source: e.into(),
        }
    }

    fn missing(&self, path: PathBuf) -> StageError {
        StageError::MissingInput { stage: self.stage, path }
    }

    /// Records `path` as an input, failing if it does not exist.
    fn input(&mut self, path: PathBuf) -> StageResult<PathBuf> {
        if !path.exists() {
            return Err(self.missing(path));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    fn output_tree(&mut self, dir: &Path) -> StageResult<()> {
        let files = walk_files(dir).map_err(self.io())?;
        self.outputs.extend(files);
        Ok(())
    }

    /// Frames available in `dir`, narrowed to `--frame` when given. An empty
    /// result names `dir` as the missing input.
    fn frames_from(&mut self, dir: &Path, prefix: &str, suffix: &str) -> StageResult<Vec<u32>> {
        if !dir.is_dir() {
            return Err(self.missing(dir.to_path_buf()));
        }
        let all = scan_frames(dir, prefix, suffix).map_err(self.io())?;
        let frames = match self.opts.frame {
            Some(f) if all.contains(&f) => vec![f],
            Some(f) => return Err(self.missing(dir.join(format!("{prefix}{f}{suffix}")))),
            None => all,
        };
        if frames.is_empty() {
            return Err(self.missing(dir.join(format!("{prefix}<N>{suffix}"))));
        }
        self.frames = frames.clone();
        Ok(frames)
    }

    fn rig(&mut self) -> StageResult<CameraRig> {
        let p = self.input(self.out.rig())?;
        CameraRig::load(&p).map_err(self.core())
    }

    fn grid_spec(&self) -> StageResult<GridSpec> {
        let v = &self.cfg.volume;
        GridSpec::from_extents(v.origin, v.extents, v.voxel_size).map_err(self.core())
    }

    fn fresh_dir(&self, dir: &Path) -> StageResult<()> {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(self.io())?;
        }
        fs::create_dir_all(dir).map_err(self.io())
    }
}

/// Runs one stage: takes the output-directory lock, does the work, and
/// appends a record to `run.log.jsonl` whether or not the stage succeeded.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, opts: &StageOptions) -> StageResult<StageReport> {
    let out = Layout::new(&cfg.paths.output);
    let io_err = |e: std::io::Error| StageError::Internal { stage, source: e.into() };
    fs::create_dir_all(out.root()).map_err(io_err)?;
    let _lock = DirLock::acquire(&out.lock())
        .map_err(io_err)?
        .ok_or_else(|| StageError::Locked { stage, path: out.lock() })?;

    let started = Instant::now();
    let mut ctx = Ctx {
        stage,
        cfg,
        opts,
        out: out.clone(),
        frames: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let result = match stage {
        Stage::Synth => synth(&mut ctx),
        Stage::Segment => segment(&mut ctx),
        Stage::Carve => carve_stage(&mut ctx),
        Stage::Mesh => mesh_stage(&mut ctx),
        Stage::Viewmaps => viewmaps_stage(&mut ctx),
        Stage::Billboards => billboards_stage(&mut ctx),
        Stage::Export => export_stage(&mut ctx),
        Stage::Render => render_stage(&mut ctx),
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let record = RunRecord {
        stage: stage.name(),
        status: if result.is_ok() { "ok" } else { "error" },
        frames: &ctx.frames,
        wall_ms,
        inputs: runlog::digests(out.root(), &ctx.inputs),
        outputs: runlog::digests(out.root(), &ctx.outputs),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    if let Err(e) = runlog::append(&out.run_log(), &record) {
        log::warn!("could not append to {}: {e}", out.run_log().display());
    }
    result?;
    log::info!("{stage}: done in {wall_ms:.0} ms ({} inputs, {} outputs)", ctx.inputs.len(), ctx.outputs.len());
    Ok(StageReport {
        stage,
        frames: ctx.frames,
        inputs: ctx.inputs,
        outputs: ctx.outputs,
        wall_ms,
    })
}

/// Runs segment through export in order, stopping at the first failure.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &StageOptions) -> StageResult<Vec<StageReport>> {
    Stage::PIPELINE.iter().map(|&s| run_stage(s, cfg, opts)).collect()
}

/// Renders every camera of the synthetic scene into the frames folder,
/// together with an object-free background plate, and writes the rig as the
/// calibration file.
fn synth(ctx: &mut Ctx) -> StageResult<()> {
    let Some(path) = ctx.cfg.paths.synth_scene.clone() else {
        return Err(StageError::config("paths.synth_scene", "the synth stage needs a synthetic scene file"));
    };
    let path = ctx.input(path)?;
    let scene = SynthScene::load(&path).map_err(ctx.core())?;
    let empty = SynthScene::new(Vec::new(), scene.rig.clone(), scene.background).map_err(ctx.core())?;
    let frames_dir = ctx.cfg.paths.frames.clone();
    for cam in scene.rig.cameras() {
        let cam_dir = frames_dir.join(format!("c{}", cam.id()));
        let plate = ctx.output(cam_dir.join("background").join("00000.png"));
        io::save_png(&plate, &empty.render_analytic(cam).image).map_err(ctx.core())?;
        let frame = ctx.output(cam_dir.join("f0.png"));
        io::save_png(&frame, &scene.render_analytic(cam).image).map_err(ctx.core())?;
    }
    let calib = ctx.output(ctx.cfg.paths.calibration.clone());
    scene.rig.save(&calib).map_err(ctx.core())?;
    ctx.frames = vec![0];
    Ok(())
}

/// Background models, undistortion and three-pass silhouette extraction.
fn segment(ctx: &mut Ctx) -> StageResult<()> {
    let calib = ctx.input(ctx.cfg.paths.calibration.clone())?;
    let rig = CameraRig::load(&calib).map_err(ctx.core())?;
    let first = rig.cameras().first().ok_or_else(|| StageError::config("paths.calibration", "calibration holds no cameras"))?;
    let frames_dir = ctx.cfg.paths.frames.clone();
    let frames = ctx.frames_from(&frames_dir.join(format!("c{}", first.id())), "f", ".png")?;
    let params = ctx.cfg.segment_params();
    let toggles = ctx.cfg.stages;

    for cam in rig.cameras() {
        let cam_dir = frames_dir.join(format!("c{}", cam.id()));
        let bg_dir = cam_dir.join("background");
        let mut plates: Vec<PathBuf> = match fs::read_dir(&bg_dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "png"))
                .collect(),
            Err(_) => Vec::new(),
        };
        if plates.is_empty() {
            return Err(ctx.missing(bg_dir));
        }
        plates.sort();
        let images = plates
            .into_iter()
            .map(|p| {
                let p = ctx.input(p)?;
                let img = io::load_rgb(&p).map_err(ctx.core())?;
                cam.undistort_image(&img).map_err(ctx.core())
            })
            .collect::<StageResult<Vec<_>>>()?;
        let bg = BackgroundModel::build(&images).map_err(ctx.core())?;
        let bg_path = ctx.output(ctx.out.background(cam.id()));
        bg.save(&bg_path).map_err(ctx.core())?;
        ctx.output(bg_path.with_extension("json"));

        for &f in &frames {
            let p = ctx.input(cam_dir.join(format!("f{f}.png")))?;
            let frame = cam.undistort_image(&io::load_rgb(&p).map_err(ctx.core())?).map_err(ctx.core())?;
            let global = silhouette::global_extract(&frame, &bg, params.tau).map_err(ctx.core())?;
            let mut mask = if toggles.shadow_removal {
                silhouette::classify_and_remove_shadows(&global, &frame, &bg, &params).map_err(ctx.core())?
            } else {
                SilhouetteMask::from_mask(global)
            };
            if toggles.local_refinement {
                mask = silhouette::refine_local(&mask, &frame, &bg, &params).map_err(ctx.core())?;
            }
            let img_path = ctx.output(ctx.out.image(cam.id(), f));
            io::save_png(&img_path, &frame).map_err(ctx.core())?;
            let mask_path = ctx.output(ctx.out.mask(cam.id(), f));
            io::save_png(&mask_path, mask.mask()).map_err(ctx.core())?;
        }
    }
    let rig_path = ctx.output(ctx.out.rig());
    rig.undistorted().save(&rig_path).map_err(ctx.core())
}

/// Visual hull, 26-connected labeling and size filtering.
fn carve_stage(ctx: &mut Ctx) -> StageResult<()> {
    let masks_dir = ctx.out.masks_dir();
    if !masks_dir.is_dir() {
        return Err(ctx.missing(masks_dir));
    }
    let rig = ctx.rig()?;
    let first = rig.cameras().first().map(|c| c.id()).unwrap_or(0);
    let frames = ctx.frames_from(&masks_dir, &format!("c{first}_f"), ".png")?;
    let spec = ctx.grid_spec()?;
    let min_observing = ctx.cfg.thresholds.min_observing.unwrap_or(rig.len());
    let (t_min, t_max) = (ctx.cfg.thresholds.t_min, ctx.cfg.thresholds.t_max);
    for f in frames {
        let masks = rig
            .cameras()
            .iter()
            .map(|c| {
                let p = ctx.input(ctx.out.mask(c.id(), f))?;
                io::load_gray(&p).map_err(ctx.core())
            })
            .collect::<StageResult<Vec<_>>>()?;
        let grid = carve(&rig, &masks, &spec, min_observing).map_err(ctx.core())?;
        let labeled = label_components(&grid);
        let kept = labeled.filter_noise(t_min, t_max).map_err(ctx.core())?;
        log::info!(
            "frame {f}: {} occupied voxels, {} components, {} kept in ({t_min}, {t_max})",
            grid.occupied_count(),
            labeled.object_count(),
            kept.object_count()
        );
        let vol = ctx.output(ctx.out.volume(f));
        kept.write_dump(&vol).map_err(ctx.core())?;
        let objs = ctx.output(ctx.out.objects(f));
        kept.write_objects_json(&objs).map_err(ctx.core())?;
    }
    Ok(())
}

fn mesh_stage(ctx: &mut Ctx) -> StageResult<()> {
    let frames = ctx.frames_from(&ctx.out.volume_dir(), "f", ".vhul")?;
    for f in frames {
        let p = ctx.input(ctx.out.volume(f))?;
        let volume = LabeledVolume::read_dump(&p).map_err(ctx.core())?;
        let dir = ctx.out.meshes_dir(f);
        ctx.fresh_dir(&dir)?;
        for mesh in mesh_all(&volume) {
            if !mesh.is_closed() {
                log::info!("frame {f}: mesh of object {} is clipped by the volume boundary", mesh.t);
            }
            let path = ctx.output(ctx.out.mesh(f, mesh.t));
            mesh.write_obj(&path).map_err(ctx.core())?;
        }
    }
    Ok(())
}

fn load_meshes(ctx: &mut Ctx, frame: u32) -> StageResult<Vec<LabeledMesh>> {
    let dir = ctx.out.meshes_dir(frame);
    if !dir.is_dir() {
        return Err(ctx.missing(dir));
    }
    let ids = scan_frames(&dir, "object_", ".obj").map_err(ctx.io())?;
    ids.into_iter()
        .map(|t| {
            let p = ctx.input(ctx.out.mesh(frame, t))?;
            LabeledMesh::read_obj(&p).map_err(ctx.core())
        })
        .collect()
}

fn viewmaps_stage(ctx: &mut Ctx) -> StageResult<()> {
    let rig = ctx.rig()?;
    let frames = ctx.frames_from(&ctx.out.meshes_root(), "f", "")?;
    for f in frames {
        let meshes = load_meshes(ctx, f)?;
        for cam in rig.cameras() {
            let (depth, labels) = rasterize(cam, &meshes);
            let dp = ctx.output(ctx.out.depth(cam.id(), f));
            depth.save_tiff(&dp).map_err(ctx.core())?;
            let lp = ctx.output(ctx.out.labels(cam.id(), f));
            labels.save_png(&lp).map_err(ctx.core())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FillEntry {
    camera: u32,
    object: u32,
    own_camera: u64,
    neighbors: BTreeMap<u32, u64>,
    inpainted: u64,
}

/// Per-camera billboards for each frame, kept as a one-frame scene.
fn billboards_stage(ctx: &mut Ctx) -> StageResult<()> {
    let rig = ctx.rig()?;
    let frames = ctx.frames_from(&ctx.out.volume_dir(), "f", ".vhul")?;
    let params = TextureParams { depth_eps: ctx.cfg.depth_eps() };
    let metadata = SceneMetadata {
        frame_rate: ctx.cfg.scene.frame_rate,
        content: ctx.cfg.scene.content.clone(),
    };
    for f in frames {
        let p = ctx.input(ctx.out.volume(f))?;
        let volume = LabeledVolume::read_dump(&p).map_err(ctx.core())?;
        let meshes = load_meshes(ctx, f)?;
        let mut images = Vec::with_capacity(rig.len());
        let mut maps: Vec<(DepthMap, LabelMap)> = Vec::with_capacity(rig.len());
        for cam in rig.cameras() {
            let ip = ctx.input(ctx.out.image(cam.id(), f))?;
            images.push(io::load_rgb(&ip).map_err(ctx.core())?);
            let dp = ctx.input(ctx.out.depth(cam.id(), f))?;
            let lp = ctx.input(ctx.out.labels(cam.id(), f))?;
            maps.push((DepthMap::load_tiff(&dp).map_err(ctx.core())?, LabelMap::load_png(&lp).map_err(ctx.core())?));
        }
        let views: Vec<CameraView> = rig
            .cameras()
            .iter()
            .zip(&images)
            .zip(&maps)
            .map(|((camera, image), (depth, labels))| CameraView { camera, image, depth, labels })
            .collect();
        let mut billboards = Vec::new();
        let mut fills = Vec::new();
        for (k, cam) in rig.cameras().iter().enumerate() {
            let own = std::slice::from_ref(&views[k]);
            let usable = if ctx.cfg.stages.neighbor_fill { &views[..] } else { own };
            for (bb, report) in billboards_for_camera(cam.id(), &volume, &meshes, usable, &params).map_err(ctx.core())? {
                fills.push(FillEntry {
                    camera: bb.camera_id,
                    object: bb.t,
                    own_camera: report.own_camera,
                    neighbors: report.neighbors,
                    inpainted: report.inpainted,
                });
                billboards.push(bb);
            }
        }
        let scene = BillboardScene::new(rig.clone(), vec![FrameBillboards { index: 0, billboards }], metadata.clone()).map_err(ctx.core())?;
        let dir = ctx.out.billboards_dir(f);
        ctx.fresh_dir(&dir)?;
        scene::export_scene(&scene, &dir).map_err(ctx.core())?;
        io::write_json(&ctx.out.fill_report(f), &fills).map_err(ctx.core())?;
        ctx.output_tree(&dir)?;
    }
    Ok(())
}

/// Gathers the per-frame billboard sets into the final scene directory.
/// Frames must run from 0 without gaps.
fn export_stage(ctx: &mut Ctx) -> StageResult<()> {
    let root = ctx.out.billboards_root();
    if !root.is_dir() {
        return Err(ctx.missing(root));
    }
    let found = scan_frames(&root, "f", "").map_err(ctx.io())?;
    if found.is_empty() {
        return Err(ctx.missing(root.join("f0")));
    }
    if let Some(gap) = (0..).zip(&found).find(|(want, got)| *want != **got).map(|(want, _)| want) {
        return Err(ctx.missing(ctx.out.billboards_dir(gap)));
    }
    ctx.frames = found.clone();
    let mut rig = None;
    let mut frames = Vec::with_capacity(found.len());
    for f in found {
        let dir = ctx.out.billboards_dir(f);
        ctx.input(dir.join(scene::SCENE_FILE))?;
        let part = scene::import_scene(&dir).map_err(ctx.core())?;
        let billboards = part.frames.into_iter().flat_map(|fr| fr.billboards).collect();
        frames.push(FrameBillboards { index: f, billboards });
        rig.get_or_insert(part.rig);
    }
    let metadata = SceneMetadata {
        frame_rate: ctx.cfg.scene.frame_rate,
        content: ctx.cfg.scene.content.clone(),
    };
    let scene = BillboardScene::new(rig.expect("at least one frame"), frames, metadata).map_err(ctx.core())?;
    let dir = ctx.out.scene_dir();
    ctx.fresh_dir(&dir)?;
    scene::export_scene(&scene, &dir).map_err(ctx.core())?;
    ctx.output_tree(&dir)
}

fn render_stage(ctx: &mut Ctx) -> StageResult<()> {
    let req = ctx.opts.render.clone();
    let (Some(view), Some(look_at)) = (req.view, req.look_at) else {
        return Err(StageError::config("--view/--lookat", "rendering needs both a viewpoint and a look-at point"));
    };
    let fov = req.fov_deg.unwrap_or(ctx.cfg.render.fov_deg);
    let (w, h) = req.size.unwrap_or((ctx.cfg.render.size[0], ctx.cfg.render.size[1]));
    let view = VirtualView::new(Point3::from(view), Point3::from(look_at), fov.to_radians(), w, h)
        .map_err(|e| StageError::config("--view/--lookat/--fov", e.to_string()))?;
    let dir = ctx.out.scene_dir();
    let scene = load_scene(ctx, &dir)?;
    let frame = ctx.opts.frame.unwrap_or(0);
    ctx.frames = vec![frame];
    let camera = view.to_camera().map_err(ctx.core())?;
    let out = scene::render_camera(&scene, frame, &camera, &FieldTemplate::default()).map_err(ctx.core())?;
    log::info!("frame {frame}: reference camera {}", out.reference);
    let path = ctx.output(req.output.unwrap_or_else(|| ctx.out.render(frame)));
    io::save_png(&path, &out.image).map_err(ctx.core())
}

fn load_scene(ctx: &mut Ctx, dir: &Path) -> StageResult<BillboardScene> {
    ctx.input(dir.join(scene::SCENE_FILE))?;
    scene::import_scene(dir).map_err(ctx.core())
}

/// Horizontal circle of viewpoints around `center` whose reference cameras
/// form the oracle sequence for viewer checks.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitRequest {
    pub center: [f64; 3],
    pub radius: f64,
    pub height: f64,
    pub steps: u32,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitSample {
    pub step: u32,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub reference: u32,
}

#[derive(Serialize)]
struct OrbitFile<'a> {
    center: [f64; 3],
    radius: f64,
    height: f64,
    samples: &'a [OrbitSample],
}

/// Reference camera for each sampled pose on the orbit, using the exported
/// scene's rig. Written as JSON next to the scene unless `output` is set.
pub fn orbit_reference(cfg: &PipelineConfig, req: &OrbitRequest) -> StageResult<(PathBuf, Vec<OrbitSample>)> {
    let stage = Stage::Render;
    if req.steps == 0 {
        return Err(StageError::config("--steps", "must be positive"));
    }
    if !(req.radius > 0.0 && req.radius.is_finite()) {
        return Err(StageError::config("--radius", "must be positive"));
    }
    let out = Layout::new(&cfg.paths.output);
    let scene_json = out.scene_dir().join(scene::SCENE_FILE);
    if !scene_json.exists() {
        return Err(StageError::MissingInput { stage, path: scene_json });
    }
    let scene = scene::import_scene(&out.scene_dir()).map_err(StageError::core(stage))?;
    let center = Point3::from(req.center);
    let views = scene::orbit_views(center, req.radius, req.height, req.steps, cfg.render.fov_deg.to_radians(), 1, 1)
        .map_err(|e| StageError::config("--center/--radius/--height", e.to_string()))?;
    let samples = views
        .iter()
        .zip(0..)
        .map(|(v, step)| {
            Ok(OrbitSample {
                step,
                position: v.position.coords.into(),
                look_at: req.center,
                reference: scene::select_reference(&scene.rig, v).map_err(StageError::core(stage))?,
            })
        })
        .collect::<StageResult<Vec<_>>>()?;
    let path = req.output.clone().unwrap_or_else(|| out.orbit_reference());
    io::write_json(
        &path,
        &OrbitFile {
            center: req.center,
            radius: req.radius,
            height: req.height,
            samples: &samples,
        },
    )
    .map_err(StageError::core(stage))?;
    Ok((path, samples))
}
