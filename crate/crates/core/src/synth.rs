//! Synthetic scenes with analytic ground truth: spheres, capsules and yawed
//! boxes rendered by exact ray casting under the pipeline's camera model.

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camgeom::{Camera, CameraRecord, CameraRig, PixelCoord, WorldPoint};
use crate::carve::{GridSpec, LabeledVolume};
use crate::error::{Error, Result};
use crate::viewmaps::{DepthMap, LabelMap};

/// Pitch extents (meters) of the soccer content, centered on the origin.
pub const PITCH_LENGTH: f64 = 68.0;
pub const PITCH_WIDTH: f64 = 55.5;
pub const BALL_RADIUS: f64 = 0.11;
pub const PLAYER_RADIUS: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Segment `a`-`b` swept by a ball of `radius`.
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
    /// Box rotated by `yaw` radians about the vertical axis through `center`.
    Box { center: [f64; 3], half_extents: [f64; 3], yaw: f64 },
}

/// Points with `(p - center) . split >= 0` take `front`, the rest `back`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoTone {
    pub front: [u8; 3],
    pub back: [u8; 3],
    pub split: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub id: u32,
    pub shape: Shape,
    pub colors: TwoTone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Uniform { color: [u8; 3] },
    /// Ground plane z = 0 mowed in stripes along x; everything else is sky.
    Pitch { grass: [u8; 3], stripe: [u8; 3], stripe_width: f64, sky: [u8; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile", into = "SceneFile")]
pub struct SynthScene {
    pub primitives: Vec<Primitive>,
    pub rig: CameraRig,
    pub background: Background,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    primitives: Vec<Primitive>,
    cameras: Vec<CameraRecord>,
    background: Background,
}

impl TryFrom<SceneFile> for SynthScene {
    type Error = Error;

    fn try_from(f: SceneFile) -> Result<Self> {
        SynthScene::new(f.primitives, CameraRig::from_records(&f.cameras)?, f.background)
    }
}

impl From<SynthScene> for SceneFile {
    fn from(s: SynthScene) -> Self {
        SceneFile {
            primitives: s.primitives,
            cameras: s.rig.to_records(),
            background: s.background,
        }
    }
}

impl Shape {
    pub fn center(&self) -> WorldPoint {
        match *self {
            Shape::Sphere { center, .. } | Shape::Box { center, .. } => Point3::from(center),
            Shape::Capsule { a, b, .. } => Point3::from((Vector3::from(a) + Vector3::from(b)) / 2.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Sphere { radius, .. } | Shape::Capsule { radius, .. } => radius > 0.0,
            Shape::Box { half_extents, .. } => half_extents.iter().all(|&h| h > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("primitive size must be positive: {self:?}")))
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Sphere { center, radius } => (center.map(|c| c - radius), center.map(|c| c + radius)),
            Shape::Capsule { a, b, radius } => (
                std::array::from_fn(|i| a[i].min(b[i]) - radius),
                std::array::from_fn(|i| a[i].max(b[i]) + radius),
            ),
            Shape::Box { center, half_extents: h, yaw } => {
                let (s, c) = yaw.sin_cos();
                let ex = (h[0] * c).abs() + (h[1] * s).abs();
                let ey = (h[0] * s).abs() + (h[1] * c).abs();
                let e = [ex, ey, h[2]];
                (std::array::from_fn(|i| center[i] - e[i]), std::array::from_fn(|i| center[i] + e[i]))
            }
        }
    }

    pub fn contains(&self, p: &WorldPoint) -> bool {
        match *self {
            Shape::Sphere { center, radius } => (p - Point3::from(center)).norm() <= radius,
            Shape::Capsule { a, b, radius } => {
                let (a, b) = (Point3::from(a), Point3::from(b));
                let ab = b - a;
                let s = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
                (p - (a + s * ab)).norm() <= radius
            }
            Shape::Box { center, half_extents, yaw } => {
                let local = Rotation3::from_axis_angle(&Vector3::z_axis(), -yaw) * (p - Point3::from(center));
                (0..3).all(|i| local[i].abs() <= half_extents[i])
            }
        }
    }

    /// Nearest positive ray parameter of the surface, for a unit `dir` and an
    /// origin outside the shape.
    pub fn intersect(&self, origin: &WorldPoint, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => ray_sphere(origin, dir, &Point3::from(center), radius),
            Shape::Capsule { a, b, radius } => {
                let (pa, pb) = (Point3::from(a), Point3::from(b));
                let mut best = [ray_sphere(origin, dir, &pa, radius), ray_sphere(origin, dir, &pb, radius)]
                    .into_iter()
                    .flatten()
                    .fold(f64::INFINITY, f64::min);
                // cylinder body, restricted to the segment's span
                let ba = pb - pa;
                let oa = origin - pa;
                let baba = ba.dot(&ba);
                let bard = ba.dot(dir);
                let baoa = ba.dot(&oa);
                let qa = baba - bard * bard;
                if qa > 1e-12 * baba {
                    let qb = baba * dir.dot(&oa) - baoa * bard;
                    let qc = baba * oa.dot(&oa) - baoa * baoa - radius * radius * baba;
                    let h = qb * qb - qa * qc;
                    if h >= 0.0 {
                        let t = (-qb - h.sqrt()) / qa;
                        let y = baoa + t * bard;
                        if t > 0.0 && y > 0.0 && y < baba {
                            best = best.min(t);
                        }
                    }
                }
                best.is_finite().then_some(best)
            }
            Shape::Box { center, half_extents, yaw } => {
                let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -yaw);
                let o = rot * (origin - Point3::from(center));
                let d = rot * dir;
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    if d[i].abs() < 1e-300 {
                        if o[i].abs() > half_extents[i] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-half_extents[i] - o[i]) / d[i], (half_extents[i] - o[i]) / d[i]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                (t0 <= t1 && t0 > 0.0).then_some(t0)
            }
        }
    }
}

fn ray_sphere(origin: &WorldPoint, dir: &Vector3<f64>, center: &WorldPoint, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let h = b * b - c;
    if h < 0.0 {
        return None;
    }
    let t = -b - h.sqrt();
    (t > 0.0).then_some(t)
}

impl Primitive {
    pub fn color_at(&self, p: &WorldPoint) -> [u8; 3] {
        if (p - self.shape.center()).dot(&Vector3::from(self.colors.split)) >= 0.0 {
            self.colors.front
        } else {
            self.colors.back
        }
    }
}

impl Background {
    pub fn color(&self, origin: &WorldPoint, dir: &Vector3<f64>) -> [u8; 3] {
        match *self {
            Background::Uniform { color } => color,
            Background::Pitch { grass, stripe, stripe_width, sky } => {
                if dir.z >= 0.0 || origin.z <= 0.0 {
                    return sky;
                }
                let s = -origin.z / dir.z;
                let x = origin.x + s * dir.x;
                if (x / stripe_width).floor().rem_euclid(2.0) == 0.0 {
                    grass
                } else {
                    stripe
                }
            }
        }
    }
}

/// Ground truth for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticRender {
    pub image: RgbImage,
    pub mask: GrayImage,
    pub depth: DepthMap,
    pub ids: LabelMap,
}

impl SynthScene {
    pub fn new(primitives: Vec<Primitive>, rig: CameraRig, background: Background) -> Result<Self> {
        let mut ids = std::collections::BTreeSet::new();
        for p in &primitives {
            p.shape.validate()?;
            if p.id == 0 || !ids.insert(p.id) {
                return Err(Error::invalid(format!("primitive ids must be unique and nonzero (id {})", p.id)));
            }
        }
        Ok(SynthScene { primitives, rig, background })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// Nearest primitive along a ray: `(t, id, color)`.
    pub fn cast(&self, origin: &WorldPoint, dir: &Vector3<f64>) -> Option<(f64, u32, [u8; 3])> {
        let mut best: Option<(f64, &Primitive)> = None;
        for p in &self.primitives {
            if let Some(t) = p.shape.intersect(origin, dir) {
                if best.is_none_or(|(bt, bp)| t < bt || (t == bt && p.id < bp.id)) {
                    best = Some((t, p));
                }
            }
        }
        best.map(|(t, p)| (t, p.id, p.color_at(&(origin + t * dir))))
    }

    /// Exact per-pixel ray casting through pixel centers.
    pub fn render_analytic(&self, camera: &Camera) -> AnalyticRender {
        let (w, h) = (camera.width(), camera.height());
        let origin = camera.center();
        let rows: Vec<Vec<(f64, u32, [u8; 3])>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let dir = camera.ray_direction(&PixelCoord::new(x as f64, y as f64)).into_inner();
                        self.cast(&origin, &dir)
                            .unwrap_or_else(|| (f64::INFINITY, 0, self.background.color(&origin, &dir)))
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<(f64, u32, [u8; 3])> = rows.into_iter().flatten().collect();
        let image = RgbImage::from_fn(w, h, |x, y| Rgb(flat[(y * w + x) as usize].2));
        let mask = GrayImage::from_fn(w, h, |x, y| Luma([if flat[(y * w + x) as usize].1 != 0 { 255 } else { 0 }]));
        let depth = DepthMap::from_raw(w, h, flat.iter().map(|p| p.0).collect()).expect("sized");
        let ids = LabelMap::from_raw(w, h, flat.iter().map(|p| p.1).collect()).expect("sized");
        AnalyticRender { image, mask, depth, ids }
    }

    /// Per-voxel primitive id (0 = empty) of voxel centers; overlaps go to
    /// the smaller id.
    pub fn voxelize(&self, spec: &GridSpec) -> Vec<u32> {
        let mut labels = vec![0u32; spec.voxel_count()];
        let mut prims: Vec<&Primitive> = self.primitives.iter().collect();
        prims.sort_by_key(|p| p.id);
        let s = spec.voxel_size;
        for p in prims {
            let (lo, hi) = p.shape.aabb();
            let range = |a: usize| {
                let i0 = ((lo[a] - spec.origin[a]) / s - 0.5).ceil().max(0.0) as usize;
                let i1 = ((hi[a] - spec.origin[a]) / s - 0.5).floor().min(spec.dims[a] as f64 - 1.0);
                (i0, i1)
            };
            let (rx, ry, rz) = (range(0), range(1), range(2));
            if rx.1 < 0.0 || ry.1 < 0.0 || rz.1 < 0.0 {
                continue;
            }
            for k in rz.0..=rz.1 as usize {
                for j in ry.0..=ry.1 as usize {
                    for i in rx.0..=rx.1 as usize {
                        let idx = spec.index(i, j, k);
                        if labels[idx] == 0 && p.shape.contains(&spec.center(i, j, k)) {
                            labels[idx] = p.id;
                        }
                    }
                }
            }
        }
        labels
    }

    /// Voxelized truth as a labeled volume, objects numbered by ascending
    /// primitive id. Also returns the primitive id of each object.
    pub fn truth_volume(&self, spec: &GridSpec) -> Result<(LabeledVolume, Vec<u32>)> {
        let raw = self.voxelize(spec);
        let mut present: Vec<u32> = raw.iter().copied().filter(|&l| l != 0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        present.sort_unstable();
        let max = present.last().copied().unwrap_or(0) as usize;
        let mut remap = vec![0u32; max + 1];
        for (i, &id) in present.iter().enumerate() {
            remap[id as usize] = i as u32 + 1;
        }
        let labels = raw.into_iter().map(|l| remap[l as usize]).collect();
        Ok((LabeledVolume::from_labels(*spec, labels)?, present))
    }
}

/// Cameras on a horizontal ring around `target`, evenly spaced from `phase`.
pub fn ring_rig(count: u32, radius: f64, height: f64, phase: f64, target: WorldPoint, focal: f64, width: u32, height_px: u32) -> Result<CameraRig> {
    let cams = (0..count)
        .map(|k| {
            let ang = phase + std::f64::consts::TAU * k as f64 / count as f64;
            let c = Point3::new(target.x + radius * ang.cos(), target.y + radius * ang.sin(), height);
            Camera::look_at(k, c, target, focal, width, height_px)
        })
        .collect::<Result<Vec<_>>>()?;
    CameraRig::new(cams)
}

fn random_split(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    [a.cos(), a.sin(), 0.0]
}

/// `n` standing players and a ball on the soccer pitch, seen by a 5-camera
/// ring. Deterministic for a given seed.
pub fn make_pitch_scene(n: usize, seed: u64) -> Result<SynthScene> {
    if n == 0 {
        return Err(Error::invalid("at least one player is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hx, hy) = (PITCH_LENGTH / 2.0 - 1.0, PITCH_WIDTH / 2.0 - 1.0);
    let mut spots: Vec<(f64, f64)> = Vec::with_capacity(n + 1);
    let place = |rng: &mut ChaCha8Rng, spots: &mut Vec<(f64, f64)>| {
        let mut p = (0.0, 0.0);
        for _ in 0..1000 {
            p = (rng.random_range(-hx..hx), rng.random_range(-hy..hy));
            if spots.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= 1.2) {
                break;
            }
        }
        spots.push(p);
        p
    };
    let teams = [([200, 40, 40], [90, 20, 120]), ([30, 60, 200], [240, 200, 40])];
    let mut primitives = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (x, y) = place(&mut rng, &mut spots);
        let height = rng.random_range(1.7..=1.9);
        let (front, back) = teams[i % 2];
        primitives.push(Primitive {
            id: i as u32 + 1,
            shape: Shape::Capsule {
                a: [x, y, PLAYER_RADIUS],
                b: [x, y, height - PLAYER_RADIUS],
                radius: PLAYER_RADIUS,
            },
            colors: TwoTone { front, back, split: random_split(&mut rng) },
        });
    }
    let (x, y) = place(&mut rng, &mut spots);
    primitives.push(Primitive {
        id: n as u32 + 1,
        shape: Shape::Sphere {
            center: [x, y, BALL_RADIUS],
            radius: BALL_RADIUS,
        },
        colors: TwoTone {
            front: [250, 250, 250],
            back: [20, 20, 20],
            split: random_split(&mut rng),
        },
    });
    let rig = ring_rig(5, 55.0, 14.0, 0.3, Point3::new(0.0, 0.0, 0.9), 1000.0, 960, 540)?;
    SynthScene::new(
        primitives,
        rig,
        Background::Pitch {
            grass: [40, 120, 50],
            stripe: [52, 140, 60],
            stripe_width: 5.0,
            sky: [150, 180, 220],
        },
    )
}
