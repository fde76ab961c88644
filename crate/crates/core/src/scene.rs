//! Billboard scene: persistence, reference-camera selection and offline
//! rendering of virtual views.
//!
//! A view is rendered from the billboards of the single recording camera
//! nearest to the viewpoint. Each billboard turns about the vertical axis
//! through its anchor to face the viewer, and billboards are composited
//! back to front over a synthetic field.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgba, RgbaImage};
use nalgebra::{Matrix3, Point2, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billboard::Billboard;
use crate::camgeom::{Camera, CameraRecord, CameraRig, PixelCoord, WorldPoint};
use crate::error::{Error, Result};
use crate::io;

pub const SCENE_VERSION: u32 = 1;
pub const SCENE_FILE: &str = "scene.json";
pub const TEXTURE_DIR: &str = "textures";

/// Id given to cameras synthesized for virtual views.
pub const VIRTUAL_CAMERA_ID: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMetadata {
    pub frame_rate: f64,
    pub content: String,
}

impl Default for SceneMetadata {
    fn default() -> Self {
        SceneMetadata {
            frame_rate: 30.0,
            content: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBillboards {
    pub index: u32,
    pub billboards: Vec<Billboard>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BillboardScene {
    pub rig: CameraRig,
    pub frames: Vec<FrameBillboards>,
    pub metadata: SceneMetadata,
}

impl BillboardScene {
    /// Validates that frames are numbered `0..` in order and that every
    /// billboard names a rig camera.
    pub fn new(rig: CameraRig, frames: Vec<FrameBillboards>, metadata: SceneMetadata) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            if f.index as usize != i {
                return Err(Error::invalid(format!("frame indices must be contiguous from 0; position {i} has index {}", f.index)));
            }
            for bb in &f.billboards {
                if rig.get(bb.camera_id).is_none() {
                    return Err(Error::DanglingCamera(bb.camera_id));
                }
            }
        }
        Ok(BillboardScene { rig, frames, metadata })
    }

    pub fn frame(&self, index: u32) -> Result<&FrameBillboards> {
        self.frames
            .get(index as usize)
            .ok_or_else(|| Error::invalid(format!("frame {index} not in scene ({} frames)", self.frames.len())))
    }
}

/// A user-chosen viewpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualView {
    pub position: WorldPoint,
    pub look_at: WorldPoint,
    /// Vertical field of view, radians.
    pub vfov: f64,
    pub width: u32,
    pub height: u32,
}

impl VirtualView {
    pub fn new(position: WorldPoint, look_at: WorldPoint, vfov: f64, width: u32, height: u32) -> Result<Self> {
        let v = VirtualView {
            position,
            look_at,
            vfov,
            width,
            height,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.position - self.look_at).norm() == 0.0 {
            return Err(Error::invalid("view position coincides with look-at point"));
        }
        if !(self.vfov > 0.0 && self.vfov < std::f64::consts::PI) {
            return Err(Error::invalid(format!("vertical fov {} outside (0, pi)", self.vfov)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("view image must be nonempty"));
        }
        Ok(())
    }

    /// Level pinhole camera (no roll) realizing this view.
    pub fn to_camera(&self) -> Result<Camera> {
        self.validate()?;
        let focal = 0.5 * self.height as f64 / (0.5 * self.vfov).tan();
        Camera::look_at(VIRTUAL_CAMERA_ID, self.position, self.look_at, focal, self.width, self.height)
    }

    /// The view a camera of the rig would give: same center and axis.
    pub fn from_camera(cam: &Camera) -> Self {
        let k = cam.intrinsics();
        let forward = cam.ray_direction(&PixelCoord::new(k.cx, k.cy)).into_inner();
        VirtualView {
            position: cam.center(),
            look_at: cam.center() + forward,
            vfov: 2.0 * (0.5 * cam.height() as f64 / k.fy).atan(),
            width: cam.width(),
            height: cam.height(),
        }
    }
}

/// Id of the rig camera whose center is nearest to `position`; ties go to the
/// smallest id.
pub fn nearest_camera(rig: &CameraRig, position: &WorldPoint) -> Result<u32> {
    rig.cameras()
        .iter()
        .map(|c| ((c.center() - position).norm_squared(), c.id()))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or_else(|| Error::invalid("reference selection needs a nonempty rig"))
}

pub fn select_reference(rig: &CameraRig, view: &VirtualView) -> Result<u32> {
    nearest_camera(rig, &view.position)
}

/// Flat soccer field drawn on z = 0, centered on the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldTemplate {
    pub length: f64,
    pub width: f64,
    pub line_width: f64,
    pub center_circle_radius: f64,
    pub grass: [u8; 3],
    pub line: [u8; 3],
    pub surround: [u8; 3],
    pub sky: [u8; 3],
}

impl Default for FieldTemplate {
    fn default() -> Self {
        FieldTemplate {
            length: crate::synth::PITCH_LENGTH,
            width: crate::synth::PITCH_WIDTH,
            line_width: 0.12,
            center_circle_radius: 9.15,
            grass: [46, 130, 56],
            line: [240, 240, 240],
            surround: [60, 110, 60],
            sky: [140, 170, 210],
        }
    }
}

impl FieldTemplate {
    pub fn ground_color(&self, x: f64, y: f64) -> [u8; 3] {
        let (hl, hw, lw) = (self.length / 2.0, self.width / 2.0, self.line_width / 2.0);
        if x.abs() > hl + lw || y.abs() > hw + lw {
            return self.surround;
        }
        let on_line = (x.abs() - hl).abs() <= lw
            || (y.abs() - hw).abs() <= lw
            || x.abs() <= lw
            || (x.hypot(y) - self.center_circle_radius).abs() <= lw;
        if on_line {
            self.line
        } else {
            self.grass
        }
    }

    pub fn background(&self, origin: &WorldPoint, dir: &Vector3<f64>) -> [u8; 3] {
        if dir.z >= 0.0 || origin.z <= 0.0 {
            return self.sky;
        }
        let s = -origin.z / dir.z;
        self.ground_color(origin.x + s * dir.x, origin.y + s * dir.y)
    }
}

/// Rendered image plus the mask of pixels covered by any billboard.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub image: RgbaImage,
    pub coverage: GrayImage,
    pub reference: u32,
}

/// Renders `frame` as seen by `view`.
pub fn render_view(scene: &BillboardScene, frame: u32, view: &VirtualView, field: &FieldTemplate) -> Result<RgbaImage> {
    Ok(render_camera(scene, frame, &view.to_camera()?, field)?.image)
}

/// Renders `frame` through an arbitrary pinhole camera; the reference camera
/// is chosen from the camera's center.
pub fn render_camera(scene: &BillboardScene, frame: u32, camera: &Camera, field: &FieldTemplate) -> Result<Rendering> {
    let eye = camera.center();
    let reference = nearest_camera(&scene.rig, &eye)?;
    let mut bbs: Vec<&Billboard> = scene.frame(frame)?.billboards.iter().filter(|b| b.camera_id == reference).collect();
    // painter's order: far to near, ties by object id
    bbs.sort_by(|a, b| {
        let (da, db) = ((a.anchor3d - eye).norm_squared(), (b.anchor3d - eye).norm_squared());
        db.total_cmp(&da).then(a.t.cmp(&b.t))
    });
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<Vec<([u8; 4], bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let dir = camera.ray_direction(&PixelCoord::new(x as f64, y as f64)).into_inner();
                    let bg = field.background(&eye, &dir);
                    let mut out = [bg[0] as f64, bg[1] as f64, bg[2] as f64];
                    let mut covered = false;
                    for bb in &bbs {
                        if let Some((_, texel)) = bb.hit(&eye, &eye, &dir) {
                            let a = texel[3] as f64 / 255.0;
                            for c in 0..3 {
                                out[c] = a * texel[c] as f64 + (1.0 - a) * out[c];
                            }
                            covered = true;
                        }
                    }
                    ([out[0].round() as u8, out[1].round() as u8, out[2].round() as u8, 255], covered)
                })
                .collect()
        })
        .collect();
    let flat: Vec<([u8; 4], bool)> = rows.into_iter().flatten().collect();
    Ok(Rendering {
        image: RgbaImage::from_fn(w, h, |x, y| Rgba(flat[(y * w + x) as usize].0)),
        coverage: GrayImage::from_fn(w, h, |x, y| Luma([if flat[(y * w + x) as usize].1 { 255 } else { 0 }])),
        reference,
    })
}

/// Viewpoints on a horizontal circle around `center`, all looking at it.
pub fn orbit_views(center: WorldPoint, radius: f64, height: f64, steps: u32, vfov: f64, width: u32, height_px: u32) -> Result<Vec<VirtualView>> {
    (0..steps)
        .map(|k| {
            let ang = std::f64::consts::TAU * k as f64 / steps as f64;
            let pos = Point3::new(center.x + radius * ang.cos(), center.y + radius * ang.sin(), height);
            VirtualView::new(pos, center, vfov, width, height_px)
        })
        .collect()
}

pub fn texture_file_name(camera: u32, object: u32, frame: u32) -> String {
    format!("bb_c{camera}_o{object}_f{frame}.png")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BillboardRecord {
    camera: u32,
    object: u32,
    anchor3d: [f64; 3],
    anchor2d: [f64; 2],
    width_m: f64,
    height_m: f64,
    texture: String,
    crop_origin: [u32; 2],
    normal: [f64; 3],
    quad_min: [f64; 2],
    quad_max: [f64; 2],
    /// Row-major plane-to-texel homography.
    texture_map: [[f64; 3]; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    index: u32,
    billboards: Vec<BillboardRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    version: u32,
    metadata: SceneMetadata,
    cameras: Vec<CameraRecord>,
    frames: Vec<FrameRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Writes `scene.json` and `textures/*.png` under `dir`.
pub fn export_scene(scene: &BillboardScene, dir: &Path) -> Result<()> {
    let tex_dir = dir.join(TEXTURE_DIR);
    std::fs::create_dir_all(&tex_dir)?;
    let frames = scene
        .frames
        .iter()
        .map(|f| {
            let billboards = f
                .billboards
                .iter()
                .map(|bb| {
                    let name = texture_file_name(bb.camera_id, bb.t, f.index);
                    io::save_png(&tex_dir.join(&name), &bb.texture)?;
                    let m = &bb.texture_map;
                    Ok(BillboardRecord {
                        camera: bb.camera_id,
                        object: bb.t,
                        anchor3d: bb.anchor3d.coords.into(),
                        anchor2d: [bb.anchor2d.x, bb.anchor2d.y],
                        width_m: bb.width_m(),
                        height_m: bb.height_m(),
                        texture: format!("{TEXTURE_DIR}/{name}"),
                        crop_origin: [bb.crop_origin.0, bb.crop_origin.1],
                        normal: bb.normal.into(),
                        quad_min: bb.quad_min,
                        quad_max: bb.quad_max,
                        texture_map: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameRecord { index: f.index, billboards })
        })
        .collect::<Result<Vec<_>>>()?;
    let record = SceneRecord {
        version: SCENE_VERSION,
        metadata: scene.metadata.clone(),
        cameras: scene.rig.to_records(),
        frames,
    };
    io::write_json(&dir.join(SCENE_FILE), &record)
}

pub fn import_scene(dir: &Path) -> Result<BillboardScene> {
    let path = dir.join(SCENE_FILE);
    let text = io::read_to_string(&path)?;
    let json_err = |source| Error::Json { path: path.clone(), source };
    let probe: VersionProbe = serde_json::from_str(&text).map_err(json_err)?;
    if probe.version != SCENE_VERSION {
        return Err(Error::UnsupportedVersion(probe.version));
    }
    let record: SceneRecord = serde_json::from_str(&text).map_err(json_err)?;
    let rig = CameraRig::from_records(&record.cameras)?;
    let mut frames = Vec::with_capacity(record.frames.len());
    for f in record.frames {
        let mut billboards = Vec::with_capacity(f.billboards.len());
        for r in f.billboards {
            if rig.get(r.camera).is_none() {
                return Err(Error::DanglingCamera(r.camera));
            }
            let tex_path: PathBuf = dir.join(&r.texture);
            let texture = io::load_rgba(&tex_path)?;
            let m = r.texture_map;
            billboards.push(Billboard {
                camera_id: r.camera,
                t: r.object,
                texture,
                crop_origin: (r.crop_origin[0], r.crop_origin[1]),
                anchor3d: Point3::from(r.anchor3d),
                anchor2d: Point2::new(r.anchor2d[0], r.anchor2d[1]),
                normal: Vector3::from(r.normal),
                quad_min: r.quad_min,
                quad_max: r.quad_max,
                texture_map: Matrix3::from_fn(|i, j| m[i][j]),
            });
        }
        frames.push(FrameBillboards { index: f.index, billboards });
    }
    BillboardScene::new(rig, frames, record.metadata).map_err(|e| match e {
        Error::InvalidInput(reason) => Error::format(&path, &reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeom::{Extrinsics, Intrinsics};
    use proptest::prelude::*;

    fn cam_at(id: u32, c: [f64; 3]) -> Camera {
        Camera::look_at(id, Point3::from(c), Point3::new(0.0, 0.0, 1.0), 200.0, 64, 48).unwrap()
    }

    fn rig(centers: &[[f64; 3]]) -> CameraRig {
        CameraRig::new(centers.iter().enumerate().map(|(i, &c)| cam_at(i as u32, c)).collect()).unwrap()
    }

    fn view_at(p: [f64; 3]) -> VirtualView {
        VirtualView::new(Point3::from(p), Point3::new(0.0, 0.0, 1.0), 0.8, 64, 48).unwrap()
    }

    #[test]
    fn reference_selection_examples() {
        let r = rig(&[[20.0, 0.0, 5.0], [-30.0, 0.0, 5.0]]);
        assert_eq!(select_reference(&r, &view_at([0.0, 0.0, 10.0])).unwrap(), 0);
        assert_eq!(select_reference(&r, &view_at([-30.0, 0.0, 5.0])).unwrap(), 1);
        // equidistant: smaller id
        let r = rig(&[[10.0, 0.0, 5.0], [-10.0, 0.0, 5.0]]);
        assert_eq!(select_reference(&r, &view_at([0.0, 3.0, 5.0])).unwrap(), 0);
        assert!(nearest_camera(&CameraRig::default(), &Point3::origin()).is_err());
    }

    #[test]
    fn virtual_view_validation() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert!(VirtualView::new(p, p, 0.5, 10, 10).is_err());
        assert!(VirtualView::new(p, Point3::origin(), 0.0, 10, 10).is_err());
        assert!(VirtualView::new(p, Point3::origin(), std::f64::consts::PI, 10, 10).is_err());
        let cam = cam_at(3, [10.0, -4.0, 6.0]);
        let v = VirtualView::from_camera(&cam);
        let back = v.to_camera().unwrap();
        assert!((back.center() - cam.center()).norm() < 1e-9);
        let probe = Point3::new(0.5, 0.2, 1.3);
        assert!((back.project(&probe).unwrap() - cam.project(&probe).unwrap()).norm() < 1e-6);
    }

    fn flat_billboard(camera_id: u32, t: u32, anchor: [f64; 3], color: [u8; 3]) -> Billboard {
        // 1 m square facing +y... built directly: a = -0.5..0.5, b = -0.5..0.5 over a 10x10 texture
        let texture = RgbaImage::from_pixel(10, 10, Rgba([color[0], color[1], color[2], 255]));
        Billboard {
            camera_id,
            t,
            texture,
            crop_origin: (0, 0),
            anchor3d: Point3::from(anchor),
            anchor2d: Point2::new(4.5, 4.5),
            normal: Vector3::y(),
            quad_min: [-0.5, -0.5],
            quad_max: [0.5, 0.5],
            // texel = 10 * (a + 0.5) - 0.5, (0.5 - b) * 10 - 0.5
            texture_map: Matrix3::new(10.0, 0.0, 4.5, 0.0, -10.0, 4.5, 0.0, 0.0, 1.0),
        }
    }

    fn front_camera(id: u32) -> Camera {
        Camera::new(
            id,
            Intrinsics::pinhole(60.0, 60.0, 31.5, 23.5),
            Extrinsics::look_at(Point3::new(0.0, 30.0, 1.0), Point3::new(0.0, 0.0, 1.0), Vector3::z()).unwrap(),
            64,
            48,
        )
        .unwrap()
    }

    #[test]
    fn nearer_billboard_is_drawn_on_top() {
        let cam = front_camera(0);
        let r = CameraRig::new(vec![cam.clone()]).unwrap();
        let near = flat_billboard(0, 2, [0.0, 20.0, 1.0], [255, 0, 0]);
        let far = flat_billboard(0, 1, [0.0, 10.0, 1.0], [0, 0, 255]);
        let scene = BillboardScene::new(r, vec![FrameBillboards { index: 0, billboards: vec![near, far] }], SceneMetadata::default()).unwrap();
        let out = render_camera(&scene, 0, &cam, &FieldTemplate::default()).unwrap();
        assert_eq!(out.image.get_pixel(31, 23).0, [255, 0, 0, 255]);
        assert_eq!(out.coverage.get_pixel(31, 23)[0], 255);
        assert_eq!(out.coverage.get_pixel(0, 0)[0], 0);
    }

    #[test]
    fn rendering_ignores_other_cameras_billboards() {
        let cam = front_camera(0);
        let other = Camera::look_at(1, Point3::new(0.0, -30.0, 1.0), Point3::new(0.0, 0.0, 1.0), 60.0, 64, 48).unwrap();
        let r = CameraRig::new(vec![cam.clone(), other]).unwrap();
        let mine = flat_billboard(0, 1, [0.0, 10.0, 1.0], [255, 0, 0]);
        let theirs = flat_billboard(1, 1, [0.0, 12.0, 1.0], [0, 255, 0]);
        let full = BillboardScene::new(r.clone(), vec![FrameBillboards { index: 0, billboards: vec![mine.clone(), theirs] }], SceneMetadata::default()).unwrap();
        let only = BillboardScene::new(r, vec![FrameBillboards { index: 0, billboards: vec![mine] }], SceneMetadata::default()).unwrap();
        let view = VirtualView::from_camera(&cam);
        let f = FieldTemplate::default();
        assert_eq!(render_view(&full, 0, &view, &f).unwrap(), render_view(&only, 0, &view, &f).unwrap());
    }

    #[test]
    fn field_template_lines() {
        let f = FieldTemplate::default();
        assert_eq!(f.ground_color(0.0, 5.0), f.line);
        assert_eq!(f.ground_color(34.0, 0.0), f.line);
        assert_eq!(f.ground_color(9.15, 0.0), f.line);
        assert_eq!(f.ground_color(20.0, 10.0), f.grass);
        assert_eq!(f.ground_color(40.0, 0.0), f.surround);
    }

    fn sample_scene() -> BillboardScene {
        let r = CameraRig::new(vec![front_camera(0), front_camera(4)]).unwrap();
        let mut a = flat_billboard(0, 1, [0.1, 10.0, 1.0], [10, 20, 30]);
        a.texture.put_pixel(3, 3, Rgba([1, 2, 3, 0]));
        a.texture_map[(0, 2)] = 4.123456789012345;
        let b = flat_billboard(4, 2, [1.0 / 3.0, 11.0, 0.9], [200, 100, 0]);
        let c = flat_billboard(0, 3, [-2.0, 9.0, 1.1e-9], [0, 0, 0]);
        BillboardScene::new(
            r,
            vec![FrameBillboards { index: 0, billboards: vec![a, b, c] }, FrameBillboards { index: 1, billboards: vec![] }],
            SceneMetadata { frame_rate: 30.0, content: "test".into() },
        )
        .unwrap()
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample_scene();
        export_scene(&s, dir.path()).unwrap();
        assert!(dir.path().join("textures/bb_c4_o2_f0.png").exists());
        assert_eq!(import_scene(dir.path()).unwrap(), s);

        let empty = BillboardScene::new(CameraRig::new(vec![front_camera(0)]).unwrap(), vec![], SceneMetadata::default()).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        export_scene(&empty, dir2.path()).unwrap();
        assert_eq!(import_scene(dir2.path()).unwrap(), empty);
    }

    #[test]
    fn import_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        export_scene(&sample_scene(), dir.path()).unwrap();
        let json = dir.path().join(SCENE_FILE);
        let text = std::fs::read_to_string(&json).unwrap();

        std::fs::remove_file(dir.path().join("textures/bb_c0_o3_f0.png")).unwrap();
        match import_scene(dir.path()) {
            Err(Error::MissingAsset(p)) => assert!(p.ends_with("bb_c0_o3_f0.png")),
            other => panic!("expected missing asset, got {other:?}"),
        }
        export_scene(&sample_scene(), dir.path()).unwrap();

        std::fs::write(&json, text.replace("\"camera\": 4", "\"camera\": 9")).unwrap();
        assert!(matches!(import_scene(dir.path()), Err(Error::DanglingCamera(9))));

        std::fs::write(&json, &text[..text.len() / 2]).unwrap();
        assert!(matches!(import_scene(dir.path()), Err(Error::Json { .. })));

        std::fs::write(&json, text.replace("\"version\": 1", "\"version\": 2")).unwrap();
        assert!(matches!(import_scene(dir.path()), Err(Error::UnsupportedVersion(2))));

        std::fs::write(&json, text.replace("\"index\": 1", "\"index\": 5")).unwrap();
        assert!(matches!(import_scene(dir.path()), Err(Error::Format { .. })));

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(import_scene(empty.path()), Err(Error::MissingAsset(_))));
    }

    #[test]
    fn orbit_covers_the_circle() {
        let views = orbit_views(Point3::new(0.0, 0.0, 1.0), 30.0, 10.0, 8, 0.7, 32, 24).unwrap();
        assert_eq!(views.len(), 8);
        assert!((views[2].position - Point3::new(0.0, 30.0, 10.0)).norm() < 1e-9);
    }

    proptest! {
        #[test]
        fn reference_is_scale_invariant(
            pts in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64, 1.0..20.0f64), 1..8),
            v in (-60.0..60.0f64, -60.0..60.0f64, 0.5..30.0f64),
            k in 0.1..10.0f64,
        ) {
            let centers: Vec<[f64; 3]> = pts.iter().map(|p| [p.0, p.1, p.2]).collect();
            let scaled: Vec<[f64; 3]> = centers.iter().map(|c| c.map(|x| x * k)).collect();
            let (Ok(a), Ok(b)) = (
                CameraRig::new(centers.iter().enumerate().map(|(i, &c)| Camera::look_at(i as u32, Point3::from(c), Point3::new(0.0, 0.0, 0.0), 100.0, 8, 8)).collect::<Result<Vec<_>>>().unwrap()),
                CameraRig::new(scaled.iter().enumerate().map(|(i, &c)| Camera::look_at(i as u32, Point3::from(c), Point3::new(0.0, 0.0, 0.0), 100.0, 8, 8)).collect::<Result<Vec<_>>>().unwrap()),
            ) else { return Ok(()); };
            let p = Point3::new(v.0, v.1, v.2);
            let brute = |centers: &[[f64; 3]], p: &WorldPoint| {
                let mut best = 0usize;
                for i in 1..centers.len() {
                    if (Point3::from(centers[i]) - p).norm() < (Point3::from(centers[best]) - p).norm() {
                        best = i;
                    }
                }
                best as u32
            };
            let ra = nearest_camera(&a, &p).unwrap();
            let rb = nearest_camera(&b, &(p * k)).unwrap();
            prop_assert_eq!(ra, brute(&centers, &p));
            prop_assert_eq!(ra, rb);
        }
    }
}
