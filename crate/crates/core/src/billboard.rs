//! Per-object, per-camera billboards: texture extraction with neighbor-camera
//! fill for occluded pixels, and anchoring of the textured plane at the
//! object's 3D barycenter.
//!
//! A billboard lives in a vertical plane through `anchor3d`. Plane points are
//! addressed by local coordinates `(a, b)`: `a` along the horizontal axis
//! `z × n` (n = horizontal unit normal toward the viewer), `b` along world z.
//! `texture_map` takes homogeneous `(a, b, 1)` to texel coordinates; it is the
//! reference camera's projection restricted to the plane, so the billboard
//! reprojects onto its reference camera exactly.

use std::collections::BTreeMap;

use image::{Rgba, RgbaImage, RgbImage};
use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camgeom::{Camera, PixelCoord, WorldPoint};
use crate::carve::{LabeledVolume, ObjectStats};
use crate::error::{Error, Result};
use crate::mesh::LabeledMesh;
use crate::viewmaps::{object_region, DepthMap, LabelMap, ObjectRegion, PixelState};

/// Color used when a region has no pixel visible in any camera.
pub const FALLBACK_GRAY: [u8; 3] = [128, 128, 128];

/// Neighbor samples must lie at least this many pixels inside the
/// neighbor's label-map silhouette of the object.
pub const NEIGHBOR_RIM_MARGIN: u32 = 2;

/// Everything known about one camera for one frame.
#[derive(Clone, Copy)]
pub struct CameraView<'a> {
    pub camera: &'a Camera,
    pub image: &'a RgbImage,
    pub depth: &'a DepthMap,
    pub labels: &'a LabelMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureParams {
    /// Slack (meters) when testing whether a lifted point is the surface a
    /// neighbor camera sees.
    pub depth_eps: f64,
}

impl TextureParams {
    /// Default slack of two voxel edges.
    pub fn for_voxel_size(voxel_size: f64) -> Self {
        TextureParams {
            depth_eps: 2.0 * voxel_size,
        }
    }
}

/// Where each region pixel's color came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillReport {
    pub own_camera: u64,
    pub neighbors: BTreeMap<u32, u64>,
    pub inpainted: u64,
}

impl FillReport {
    pub fn total(&self) -> u64 {
        self.own_camera + self.neighbors.values().sum::<u64>() + self.inpainted
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Billboard {
    pub camera_id: u32,
    pub t: u32,
    /// RGBA crop of the region's bounding box; alpha 255 exactly on region pixels.
    pub texture: RgbaImage,
    /// Image pixel of texel (0, 0).
    pub crop_origin: (u32, u32),
    pub anchor3d: WorldPoint,
    /// Mean region pixel, in crop coordinates.
    pub anchor2d: PixelCoord,
    /// Horizontal unit normal toward the reference camera at build time.
    pub normal: Vector3<f64>,
    /// Local-plane rectangle `[a_min, b_min]..[a_max, b_max]` (meters from anchor3d).
    pub quad_min: [f64; 2],
    pub quad_max: [f64; 2],
    pub texture_map: Matrix3<f64>,
}

impl Billboard {
    pub fn width_m(&self) -> f64 {
        self.quad_max[0] - self.quad_min[0]
    }

    pub fn height_m(&self) -> f64 {
        self.quad_max[1] - self.quad_min[1]
    }

    /// Horizontal unit normal facing a viewer at `eye`; falls back to the
    /// build-time normal when the eye is straight above or below the anchor.
    pub fn facing_normal(&self, eye: &WorldPoint) -> Vector3<f64> {
        let d = Vector3::new(eye.x - self.anchor3d.x, eye.y - self.anchor3d.y, 0.0);
        let n = d.norm();
        if n < 1e-12 {
            self.normal
        } else {
            d / n
        }
    }

    /// Intersects the ray `origin + s * dir` with the billboard turned toward
    /// `eye`. Returns the ray parameter and the texel hit, if the hit lies on
    /// an opaque texel of the quad.
    pub fn hit(&self, eye: &WorldPoint, origin: &WorldPoint, dir: &Vector3<f64>) -> Option<(f64, [u8; 4])> {
        let n = self.facing_normal(eye);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = n.dot(&(self.anchor3d - origin)) / denom;
        if s <= 0.0 {
            return None;
        }
        let rel = origin + s * dir - self.anchor3d;
        let a = rel.dot(&horizontal_axis(&n));
        let b = rel.z;
        if a < self.quad_min[0] || a > self.quad_max[0] || b < self.quad_min[1] || b > self.quad_max[1] {
            return None;
        }
        let texel = self.texel_of(a, b)?;
        let (tx, ty) = (texel.x.round(), texel.y.round());
        let (w, h) = self.texture.dimensions();
        if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
            return None;
        }
        let px = self.texture.get_pixel(tx as u32, ty as u32).0;
        (px[3] > 0).then_some((s, px))
    }

    pub fn texel_of(&self, a: f64, b: f64) -> Option<Point2<f64>> {
        let p = self.texture_map * Vector3::new(a, b, 1.0);
        (p.z.abs() > 1e-15).then(|| Point2::new(p.x / p.z, p.y / p.z))
    }
}

/// Horizontal plane axis for unit normal `n`: `z × n`, so it matches image
/// right for a level camera looking along `-n`.
pub fn horizontal_axis(n: &Vector3<f64>) -> Vector3<f64> {
    Vector3::z().cross(n)
}

/// Region texture from the reference camera, with occluded pixels taken from
/// neighbor cameras and remaining holes inpainted from the nearest filled
/// pixel. `views` must contain the region's camera.
pub fn extract_texture(region: &ObjectRegion, views: &[CameraView], params: &TextureParams) -> Result<(RgbaImage, FillReport)> {
    let (x0, y0, x1, y1) = region.bbox().ok_or_else(|| Error::invalid(format!("object {} has an empty region", region.t)))?;
    let reference = views
        .iter()
        .find(|v| v.camera.id() == region.camera_id)
        .ok_or(Error::UnknownCamera(region.camera_id))?;
    for v in views {
        let dims = (v.camera.width(), v.camera.height());
        for actual in [v.image.dimensions(), v.depth.dimensions(), v.labels.dimensions()] {
            if actual != dims {
                return Err(Error::DimensionMismatch { expected: dims, actual });
            }
        }
    }
    let c_ref = reference.camera.center();
    let mut neighbors: Vec<&CameraView> = views.iter().filter(|v| v.camera.id() != region.camera_id).collect();
    neighbors.sort_by(|a, b| {
        let (da, db) = ((a.camera.center() - c_ref).norm_squared(), (b.camera.center() - c_ref).norm_squared());
        da.total_cmp(&db).then(a.camera.id().cmp(&b.camera.id()))
    });

    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut tex = RgbaImage::new(cw, ch);
    // per region pixel: Some(source camera) or None when unfilled
    let sources: Vec<(Option<u32>, [u8; 3])> = region
        .pixels
        .par_iter()
        .map(|p| {
            if p.state == PixelState::Visible {
                return (Some(region.camera_id), reference.image.get_pixel(p.x, p.y).0);
            }
            let dir = reference.camera.ray_direction(&PixelCoord::new(p.x as f64, p.y as f64));
            let point = c_ref + p.own_depth * dir.into_inner();
            for nb in &neighbors {
                if let Some(rgb) = sample_neighbor(nb, &point, region.t, params.depth_eps) {
                    return (Some(nb.camera.id()), rgb);
                }
            }
            (None, [0; 3])
        })
        .collect();

    let mut report = FillReport::default();
    let mut filled = vec![false; (cw * ch) as usize];
    for (p, (src, rgb)) in region.pixels.iter().zip(&sources) {
        let (tx, ty) = (p.x - x0, p.y - y0);
        match src {
            Some(id) if *id == region.camera_id => report.own_camera += 1,
            Some(id) => *report.neighbors.entry(*id).or_insert(0) += 1,
            None => continue,
        }
        tex.put_pixel(tx, ty, Rgba([rgb[0], rgb[1], rgb[2], 255]));
        filled[(ty * cw + tx) as usize] = true;
    }
    let holes: Vec<(u32, u32)> = region
        .pixels
        .iter()
        .zip(&sources)
        .filter(|(_, (src, _))| src.is_none())
        .map(|(p, _)| (p.x - x0, p.y - y0))
        .collect();
    if !holes.is_empty() {
        let nearest = nearest_filled(cw, ch, &filled);
        for (tx, ty) in holes {
            let rgb = match nearest[(ty * cw + tx) as usize] {
                Some((sx, sy)) => {
                    let p = tex.get_pixel(sx, sy).0;
                    [p[0], p[1], p[2]]
                }
                None => FALLBACK_GRAY,
            };
            tex.put_pixel(tx, ty, Rgba([rgb[0], rgb[1], rgb[2], 255]));
            report.inpainted += 1;
        }
    }
    Ok((tex, report))
}

/// Bilinear color of `point` in a neighbor camera, provided the neighbor sees
/// `point` as the surface of `t` away from the silhouette of `t`.
fn sample_neighbor(nb: &CameraView, point: &WorldPoint, t: u32, depth_eps: f64) -> Option<[u8; 3]> {
    let px = nb.camera.project(point)?;
    let (u, v) = nb.camera.pixel_at(&px)?;
    // silhouette rims mix object and background colors and the meshed
    // silhouette may overhang the true one, so the sample keeps a margin
    let (w, h) = (nb.camera.width(), nb.camera.height());
    let m = NEIGHBOR_RIM_MARGIN;
    if u < m || v < m || u + m >= w || v + m >= h {
        return None;
    }
    if (v - m..=v + m).any(|y| (u - m..=u + m).any(|x| nb.labels.get(x, y) != t)) {
        return None;
    }
    let dist = nb.camera.depth(point);
    if (nb.depth.get(u, v) - dist).abs() >= depth_eps {
        return None;
    }
    // every bilinear tap lies inside the checked neighborhood
    let (fx, fy) = (px.x.floor() as u32, px.y.floor() as u32);
    let (ax, ay) = (px.x - fx as f64, px.y - fy as f64);
    let mut acc = [0.0f64; 3];
    for (dx, dy, wt) in [(0, 0, (1.0 - ax) * (1.0 - ay)), (1, 0, ax * (1.0 - ay)), (0, 1, (1.0 - ax) * ay), (1, 1, ax * ay)] {
        let c = nb.image.get_pixel(fx + dx, fy + dy).0;
        for k in 0..3 {
            acc[k] += wt * c[k] as f64;
        }
    }
    Some(acc.map(|a| a.round().clamp(0.0, 255.0) as u8))
}

/// Level-synchronous propagation (8-neighborhood) from filled pixels over the
/// crop; each newly reached pixel takes, among its reached neighbors' sources,
/// the one closest in Euclidean distance (ties by raster order).
fn nearest_filled(w: u32, h: u32, filled: &[bool]) -> Vec<Option<(u32, u32)>> {
    let mut src: Vec<Option<(u32, u32)>> = vec![None; filled.len()];
    let mut frontier = Vec::new();
    for (i, &f) in filled.iter().enumerate() {
        if f {
            src[i] = Some(((i as u32) % w, (i as u32) / w));
            frontier.push(i);
        }
    }
    let neighbors = |i: usize| {
        let (x, y) = ((i as u32 % w) as i64, (i as u32 / w) as i64);
        (-1i64..=1)
            .flat_map(move |dy| (-1i64..=1).map(move |dx| (x + dx, y + dy)))
            .filter(move |&(nx, ny)| nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && (nx, ny) != (x, y))
            .map(move |(nx, ny)| (ny as u32 * w + nx as u32) as usize)
    };
    while !frontier.is_empty() {
        let mut next: Vec<usize> = frontier.iter().flat_map(|&i| neighbors(i)).filter(|&j| src[j].is_none()).collect();
        next.sort_unstable();
        next.dedup();
        let chosen: Vec<Option<(u32, u32)>> = next
            .iter()
            .map(|&j| {
                let (x, y) = ((j as u32 % w) as f64, (j as u32 / w) as f64);
                neighbors(j)
                    .filter_map(|k| src[k])
                    .min_by(|a, b| {
                        let da = (a.0 as f64 - x).powi(2) + (a.1 as f64 - y).powi(2);
                        let db = (b.0 as f64 - x).powi(2) + (b.1 as f64 - y).powi(2);
                        da.total_cmp(&db).then((a.1, a.0).cmp(&(b.1, b.0)))
                    })
            })
            .collect();
        for (&j, c) in next.iter().zip(chosen) {
            src[j] = c;
        }
        frontier = next;
    }
    src
}

/// Anchors `texture` in a vertical plane through the object's barycenter,
/// facing `camera` horizontally.
pub fn build_billboard(region: &ObjectRegion, texture: RgbaImage, stats: &ObjectStats, camera: &Camera) -> Result<Billboard> {
    if camera.id() != region.camera_id {
        return Err(Error::invalid(format!(
            "region belongs to camera {}, not {}",
            region.camera_id,
            camera.id()
        )));
    }
    if stats.t != region.t {
        return Err(Error::invalid(format!("stats of object {} for region of object {}", stats.t, region.t)));
    }
    let (x0, y0, x1, y1) = region.bbox().ok_or_else(|| Error::invalid("empty region"))?;
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::invalid(format!(
            "degenerate bounding box {}x{} px for object {}",
            x1 - x0 + 1,
            y1 - y0 + 1,
            region.t
        )));
    }
    if texture.dimensions() != (x1 - x0 + 1, y1 - y0 + 1) {
        return Err(Error::DimensionMismatch {
            expected: (x1 - x0 + 1, y1 - y0 + 1),
            actual: texture.dimensions(),
        });
    }
    let anchor = stats.barycenter;
    let c = camera.center();
    let horiz = Vector3::new(c.x - anchor.x, c.y - anchor.y, 0.0);
    if horiz.norm() < 1e-9 {
        return Err(Error::invalid("camera is vertically above the anchor; facing direction undefined"));
    }
    let n = horiz.normalize();
    let r = horizontal_axis(&n);

    // plane (a, b) -> image: K [R r | R z | R A + t]; then shift to the crop
    let k = camera.intrinsics();
    let kmat = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
    let rot = camera.extrinsics().rotation();
    let cols = Matrix3::from_columns(&[rot * r, rot * Vector3::z(), camera.to_camera_frame(&anchor)]);
    let shift = Matrix3::new(1.0, 0.0, -(x0 as f64), 0.0, 1.0, -(y0 as f64), 0.0, 0.0, 1.0);
    let texture_map = shift * kmat * cols;

    // quad = bounds of the crop's outer corners cast onto the plane
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (u, v) in [(x0 as f64 - 0.5, y0 as f64 - 0.5), (x1 as f64 + 0.5, y0 as f64 - 0.5), (x0 as f64 - 0.5, y1 as f64 + 0.5), (x1 as f64 + 0.5, y1 as f64 + 0.5)] {
        let dir = camera.ray_direction(&PixelCoord::new(u, v)).into_inner();
        let denom = n.dot(&dir);
        let s = n.dot(&(anchor - c)) / denom;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("bounding-box ray misses the billboard plane of object {}", region.t)));
        }
        let rel = c + s * dir - anchor;
        let ab = Vector2::new(rel.dot(&r), rel.z);
        for a in 0..2 {
            lo[a] = lo[a].min(ab[a]);
            hi[a] = hi[a].max(ab[a]);
        }
    }

    let count = region.pixels.len() as f64;
    let (sx, sy) = region.pixels.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x as f64, sy + p.y as f64));
    let anchor2d = Point2::new(sx / count - x0 as f64, sy / count - y0 as f64);

    Ok(Billboard {
        camera_id: camera.id(),
        t: region.t,
        texture,
        crop_origin: (x0, y0),
        anchor3d: anchor,
        anchor2d,
        normal: n,
        quad_min: lo,
        quad_max: hi,
        texture_map,
    })
}

/// Billboards of every object for camera `camera_id`, in object order.
/// Objects with an empty region in this camera are skipped.
pub fn billboards_for_camera(
    camera_id: u32,
    volume: &LabeledVolume,
    meshes: &[LabeledMesh],
    views: &[CameraView],
    params: &TextureParams,
) -> Result<Vec<(Billboard, FillReport)>> {
    let view = views
        .iter()
        .find(|v| v.camera.id() == camera_id)
        .ok_or(Error::UnknownCamera(camera_id))?;
    let built: Vec<Option<(Billboard, FillReport)>> = meshes
        .par_iter()
        .map(|mesh| -> Result<Option<(Billboard, FillReport)>> {
            let region = object_region(view.camera, mesh, view.labels, view.depth)?;
            if region.is_empty() {
                log::info!("object {} not visible from camera {camera_id}; no billboard", mesh.t);
                return Ok(None);
            }
            let stats = volume.moments(mesh.t)?;
            let (texture, report) = extract_texture(&region, views, params)?;
            match build_billboard(&region, texture, &stats, view.camera) {
                Ok(bb) => Ok(Some((bb, report))),
                Err(Error::InvalidInput(reason)) => {
                    log::info!("object {} skipped for camera {camera_id}: {reason}", mesh.t);
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(built.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeom::{CameraRig, Extrinsics, Intrinsics};
    use crate::viewmaps::{rasterize, RegionPixel};
    use image::Rgb;
    use nalgebra::Point3;

    fn cube(t: u32, c: WorldPoint, h: f64) -> LabeledMesh {
        let v: Vec<WorldPoint> = (0..8)
            .map(|i| c + Vector3::new(if i & 1 == 0 { -h } else { h }, if i & 2 == 0 { -h } else { h }, if i & 4 == 0 { -h } else { h }))
            .collect();
        let faces = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let triangles = faces.iter().flat_map(|f| [[f[0], f[1], f[2]], [f[0], f[2], f[3]]]).collect();
        LabeledMesh { t, vertices: v, triangles }
    }

    fn stats_for(t: u32, c: WorldPoint) -> ObjectStats {
        ObjectStats {
            t,
            voxel_count: 1,
            barycenter: c,
            bbox: crate::carve::VoxelBox { min: [0; 3], max: [0; 3] },
        }
    }

    fn gradient(w: u32, h: u32, seed: u8) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 3) as u8 ^ seed, (y * 5) as u8, seed]))
    }

    fn rig3() -> CameraRig {
        let target = Point3::new(0.0, 0.0, 1.0);
        let cams = [(0, Point3::new(0.0, -8.0, 2.5)), (1, Point3::new(6.0, -6.0, 2.5)), (2, Point3::new(-8.0, 0.0, 2.5))]
            .into_iter()
            .map(|(id, c)| Camera::look_at(id, c, target, 90.0, 96, 72).unwrap())
            .collect();
        CameraRig::new(cams).unwrap()
    }

    struct Frame {
        images: Vec<RgbImage>,
        maps: Vec<(DepthMap, LabelMap)>,
    }

    fn frame(rig: &CameraRig, meshes: &[LabeledMesh]) -> Frame {
        Frame {
            images: rig.cameras().iter().map(|c| gradient(c.width(), c.height(), c.id() as u8 * 40)).collect(),
            maps: rig.cameras().iter().map(|c| rasterize(c, meshes)).collect(),
        }
    }

    fn views<'a>(rig: &'a CameraRig, f: &'a Frame) -> Vec<CameraView<'a>> {
        rig.cameras()
            .iter()
            .zip(&f.images)
            .zip(&f.maps)
            .map(|((camera, image), (depth, labels))| CameraView { camera, image, depth, labels })
            .collect()
    }

    #[test]
    fn fully_visible_object_copies_own_camera() {
        let rig = rig3();
        let mesh = cube(1, Point3::new(0.0, 0.0, 1.0), 0.5);
        let f = frame(&rig, std::slice::from_ref(&mesh));
        let vs = views(&rig, &f);
        let cam = &rig.cameras()[0];
        let region = object_region(cam, &mesh, &f.maps[0].1, &f.maps[0].0).unwrap();
        let (tex, report) = extract_texture(&region, &vs, &TextureParams::for_voxel_size(0.02)).unwrap();
        assert_eq!(report.own_camera as usize, region.pixels.len());
        assert_eq!(report.total() as usize, region.pixels.len());
        let (x0, y0, ..) = region.bbox().unwrap();
        let mut alpha_count = 0;
        for p in tex.pixels() {
            alpha_count += (p[3] > 0) as usize;
        }
        assert_eq!(alpha_count, region.pixels.len());
        for p in &region.pixels {
            let t = tex.get_pixel(p.x - x0, p.y - y0).0;
            assert_eq!(&t[..3], &f.images[0].get_pixel(p.x, p.y).0[..]);
        }
    }

    #[test]
    fn occluded_pixels_come_from_neighbors_or_inpainting() {
        let rig = rig3();
        let back = cube(1, Point3::new(0.0, 0.0, 1.0), 0.5);
        // small occluder right in front of camera 0 only
        let front = cube(2, Point3::new(0.0, -4.0, 1.8), 0.15);
        let meshes = [back.clone(), front];
        let f = frame(&rig, &meshes);
        let vs = views(&rig, &f);
        let cam = &rig.cameras()[0];
        let region = object_region(cam, &back, &f.maps[0].1, &f.maps[0].0).unwrap();
        assert!(region.count(PixelState::Occluded) > 0);
        let (tex, report) = extract_texture(&region, &vs, &TextureParams::for_voxel_size(0.02)).unwrap();
        assert_eq!(report.total() as usize, region.pixels.len());
        assert_eq!(report.own_camera as usize, region.count(PixelState::Visible));
        assert!(report.neighbors.values().sum::<u64>() + report.inpainted > 0);
        let (x0, y0, ..) = region.bbox().unwrap();
        assert!(region.pixels.iter().all(|p| tex.get_pixel(p.x - x0, p.y - y0)[3] == 255));
    }

    #[test]
    fn occluded_everywhere_is_inpainted_without_holes() {
        let cam = Camera::new(0, Intrinsics::pinhole(20.0, 20.0, 4.5, 4.5), Extrinsics::identity(), 10, 10).unwrap();
        let rig = CameraRig::new(vec![cam.clone()]).unwrap();
        let img = gradient(10, 10, 7);
        let depth = DepthMap::empty(10, 10);
        let labels = LabelMap::empty(10, 10);
        let vs = [CameraView { camera: &rig.cameras()[0], image: &img, depth: &depth, labels: &labels }];
        let pixels = (2..6)
            .flat_map(|y| (2..6).map(move |x| (x, y)))
            .map(|(x, y)| RegionPixel {
                x,
                y,
                state: if x < 4 { PixelState::Visible } else { PixelState::Occluded },
                own_depth: 3.0,
            })
            .collect();
        let region = ObjectRegion { t: 1, camera_id: 0, width: 10, height: 10, pixels };
        let (tex, report) = extract_texture(&region, &vs, &TextureParams::for_voxel_size(0.01)).unwrap();
        assert_eq!(report.inpainted, 8);
        assert_eq!(report.own_camera, 8);
        assert!(tex.pixels().all(|p| p[3] == 255));
        // nearest visible pixel on the same row
        assert_eq!(&tex.get_pixel(2, 1).0[..3], &img.get_pixel(3, 3).0[..]);

        let empty = ObjectRegion { t: 1, camera_id: 0, width: 10, height: 10, pixels: vec![] };
        assert!(extract_texture(&empty, &vs, &TextureParams::for_voxel_size(0.01)).is_err());
    }

    #[test]
    fn billboard_reprojects_onto_its_region() {
        let rig = rig3();
        let center = Point3::new(0.3, 0.2, 1.0);
        let mesh = cube(1, center, 0.6);
        let f = frame(&rig, std::slice::from_ref(&mesh));
        let vs = views(&rig, &f);
        for (ci, cam) in rig.cameras().iter().enumerate() {
            let region = object_region(cam, &mesh, &f.maps[ci].1, &f.maps[ci].0).unwrap();
            let (tex, _) = extract_texture(&region, &vs, &TextureParams::for_voxel_size(0.02)).unwrap();
            let bb = build_billboard(&region, tex, &stats_for(1, center), cam).unwrap();
            assert!(bb.width_m() > 0.0 && bb.height_m() > 0.0);
            // anchor projects inside the region bbox
            let (x0, y0, x1, y1) = region.bbox().unwrap();
            let a = cam.project(&bb.anchor3d).unwrap();
            assert!(a.x >= x0 as f64 - 0.5 && a.x <= x1 as f64 + 0.5 && a.y >= y0 as f64 - 0.5 && a.y <= y1 as f64 + 0.5);
            let mut inter = 0;
            let mut union = 0;
            let region_mask = region.mask(None);
            for y in 0..cam.height() {
                for x in 0..cam.width() {
                    let dir = cam.ray_direction(&PixelCoord::new(x as f64, y as f64)).into_inner();
                    let hit = bb.hit(&cam.center(), &cam.center(), &dir).is_some();
                    let truth = region_mask.get_pixel(x, y)[0] > 0;
                    inter += (hit && truth) as u32;
                    union += (hit || truth) as u32;
                }
            }
            assert_eq!(inter, union, "camera {}", cam.id());
        }
    }

    #[test]
    fn degenerate_region_is_rejected() {
        let cam = Camera::new(0, Intrinsics::pinhole(20.0, 20.0, 4.5, 4.5), Extrinsics::look_at(Point3::new(0.0, -5.0, 1.0), Point3::new(0.0, 0.0, 1.0), Vector3::z()).unwrap(), 10, 10).unwrap();
        let region = ObjectRegion {
            t: 1,
            camera_id: 0,
            width: 10,
            height: 10,
            pixels: vec![RegionPixel { x: 4, y: 4, state: PixelState::Visible, own_depth: 5.0 }],
        };
        let err = build_billboard(&region, RgbaImage::new(1, 1), &stats_for(1, Point3::new(0.0, 0.0, 1.0)), &cam);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn symmetric_disc_anchor2d_is_center() {
        let cam = Camera::new(0, Intrinsics::pinhole(20.0, 20.0, 15.5, 15.5), Extrinsics::look_at(Point3::new(0.0, -5.0, 1.0), Point3::new(0.0, 0.0, 1.0), Vector3::z()).unwrap(), 32, 32).unwrap();
        let pixels: Vec<RegionPixel> = (0..32u32)
            .flat_map(|y| (0..32u32).map(move |x| (x, y)))
            .filter(|&(x, y)| (x as f64 - 15.0).powi(2) + (y as f64 - 17.0).powi(2) <= 36.0)
            .map(|(x, y)| RegionPixel { x, y, state: PixelState::Visible, own_depth: 5.0 })
            .collect();
        let region = ObjectRegion { t: 1, camera_id: 0, width: 32, height: 32, pixels };
        let (x0, y0, x1, y1) = region.bbox().unwrap();
        let bb = build_billboard(&region, RgbaImage::new(x1 - x0 + 1, y1 - y0 + 1), &stats_for(1, Point3::new(0.0, 0.0, 1.0)), &cam).unwrap();
        let c = Point2::new(15.0 - x0 as f64, 17.0 - y0 as f64);
        assert!((bb.anchor2d - c).norm() < 0.5);
    }

    #[test]
    fn objects_outside_frustum_are_skipped() {
        let rig = rig3();
        let spec = crate::carve::GridSpec::new([-2.0, -2.0, 0.0], 0.5, [8, 8, 4]).unwrap();
        let mut labels = vec![0u32; spec.voxel_count()];
        labels[spec.index(4, 4, 2)] = 1;
        labels[spec.index(0, 7, 0)] = 2;
        let volume = LabeledVolume::from_labels(spec, labels).unwrap();
        let inside = cube(1, Point3::new(0.0, 0.0, 1.0), 0.4);
        let far = cube(2, Point3::new(0.0, -9.5, 2.5), 0.1); // behind camera 0
        let meshes = [inside, far];
        let f = frame(&rig, &meshes);
        let vs = views(&rig, &f);
        let bbs = billboards_for_camera(0, &volume, &meshes, &vs, &TextureParams::for_voxel_size(0.5)).unwrap();
        assert_eq!(bbs.len(), 1);
        assert_eq!(bbs[0].0.t, 1);
        assert!(matches!(billboards_for_camera(9, &volume, &meshes, &vs, &TextureParams::for_voxel_size(0.5)), Err(Error::UnknownCamera(9))));
    }
}
