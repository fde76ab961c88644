//! Per-camera depth and object-label maps from the labeled meshes, and
//! per-object projected regions split into visible and occluded pixels.
//!
//! Coverage: a pixel belongs to a triangle when its center lies inside the
//! projected triangle, with the top-left rule deciding pixels exactly on an
//! edge. Depth is the Euclidean distance from the camera center to the
//! surface point seen through the pixel center: camera-frame z interpolated
//! perspective-correctly, scaled by the length of the pixel ray.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};
use nalgebra::Vector3;
use rayon::prelude::*;
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use crate::camgeom::Camera;
use crate::error::{Error, Result};
use crate::io;
use crate::mesh::LabeledMesh;

/// Camera-frame z of the near clipping plane, in meters.
pub const NEAR_PLANE: f64 = 1e-4;
/// Depths closer than this are ties, resolved by the smaller object id.
pub const DEPTH_TIE_EPS: f64 = 1e-9;

const BAND_ROWS: usize = 16;

/// Per-pixel distance to the camera center; `f64::INFINITY` where empty.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

/// Per-pixel id of the nearest object; 0 where empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    data: Vec<u32>,
}

impl DepthMap {
    pub fn empty(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            data: vec![f64::INFINITY; width as usize * height as usize],
        }
    }

    /// Row-major depths; non-finite or non-positive entries mean empty.
    pub fn from_raw(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(format!("{} depths for a {width}x{height} map", data.len())));
        }
        let data = data.into_iter().map(|d| if d.is_finite() && d > 0.0 { d } else { f64::INFINITY }).collect();
        Ok(DepthMap { width, height, data })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn is_covered(&self, x: u32, y: u32) -> bool {
        self.get(x, y).is_finite()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn covered_count(&self) -> usize {
        self.data.iter().filter(|d| d.is_finite()).count()
    }

    pub fn coverage_mask(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if self.is_covered(x, y) { 255 } else { 0 }]))
    }

    /// Two-page TIFF: page 0 holds depths as 32-bit float (0 where empty),
    /// page 1 the 8-bit coverage mask.
    pub fn save_tiff(&self, path: &Path) -> Result<()> {
        io::ensure_parent(path)?;
        let file = BufWriter::new(std::fs::File::create(path)?);
        let mut enc = TiffEncoder::new(file)?;
        let depth: Vec<f32> = self.data.iter().map(|&d| if d.is_finite() { d as f32 } else { 0.0 }).collect();
        let mask: Vec<u8> = self.data.iter().map(|d| if d.is_finite() { 255 } else { 0 }).collect();
        enc.write_image::<colortype::Gray32Float>(self.width, self.height, &depth)?;
        enc.write_image::<colortype::Gray8>(self.width, self.height, &mask)?;
        Ok(())
    }

    /// Reads [`DepthMap::save_tiff`] output. Values carry f32 precision.
    pub fn load_tiff(path: &Path) -> Result<DepthMap> {
        let file = std::fs::File::open(path).map_err(|e| io::missing_or_io(path, e))?;
        let mut dec = Decoder::new(BufReader::new(file))?;
        let (width, height) = dec.dimensions()?;
        let DecodingResult::F32(depth) = dec.read_image()? else {
            return Err(Error::format(path, "depth page is not 32-bit float"));
        };
        if !dec.more_images() {
            return Err(Error::format(path, "missing mask page"));
        }
        dec.next_image()?;
        let DecodingResult::U8(mask) = dec.read_image()? else {
            return Err(Error::format(path, "mask page is not 8-bit"));
        };
        if depth.len() != mask.len() || depth.len() != width as usize * height as usize {
            return Err(Error::format(path, "page sizes differ"));
        }
        let data = depth
            .iter()
            .zip(&mask)
            .map(|(&d, &m)| if m > 0 { d as f64 } else { f64::INFINITY })
            .collect();
        Ok(DepthMap { width, height, data })
    }
}

impl LabelMap {
    pub fn empty(width: u32, height: u32) -> Self {
        LabelMap {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(format!("{} labels for a {width}x{height} map", data.len())));
        }
        Ok(LabelMap { width, height, data })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.data
    }

    /// 16-bit grayscale PNG; ids above 65535 are rejected.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(&bad) = self.data.iter().find(|&&l| l > u16::MAX as u32) {
            return Err(Error::invalid(format!("label {bad} does not fit a 16-bit PNG")));
        }
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, self.data.iter().map(|&l| l as u16).collect()).expect("buffer size");
        io::save_png(path, &img)
    }

    pub fn load_png(path: &Path) -> Result<LabelMap> {
        if !path.exists() {
            return Err(Error::MissingAsset(path.to_path_buf()));
        }
        let img = image::open(path)?.into_luma16();
        let (width, height) = img.dimensions();
        Ok(LabelMap {
            width,
            height,
            data: img.into_raw().into_iter().map(u32::from).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct ScreenVertex {
    u: f64,
    v: f64,
    inv_z: f64,
}

#[derive(Clone, Copy, Debug)]
struct TriSetup {
    v: [ScreenVertex; 3],
    area: f64,
    /// Edge `i` runs from vertex `i+1` to `i+2` (opposite vertex `i`).
    top_left: [bool; 3],
    x0: u32,
    x1: u32,
    y0: u32,
    y1: u32,
    label: u32,
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[derive(Clone, Copy)]
struct ClipVertex {
    pc: Vector3<f64>,
}

fn clip_near(poly: &[ClipVertex]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (pin, qin) = (p.pc.z >= NEAR_PLANE, q.pc.z >= NEAR_PLANE);
        if pin {
            out.push(p);
        }
        if pin != qin {
            let s = (NEAR_PLANE - p.pc.z) / (q.pc.z - p.pc.z);
            let mut pc = p.pc + s * (q.pc - p.pc);
            pc.z = NEAR_PLANE;
            out.push(ClipVertex { pc });
        }
    }
    out
}

fn setup_triangles(cam: &Camera, meshes: &[LabeledMesh]) -> Vec<TriSetup> {
    let (w, h) = (cam.width(), cam.height());
    let mut out = Vec::new();
    for mesh in meshes {
        let verts: Vec<ClipVertex> = mesh
            .vertices
            .iter()
            .map(|p| ClipVertex {
                pc: cam.to_camera_frame(p),
            })
            .collect();
        for tri in &mesh.triangles {
            let corners = tri.map(|i| verts[i as usize]);
            let poly = if corners.iter().all(|c| c.pc.z >= NEAR_PLANE) {
                corners.to_vec()
            } else {
                clip_near(&corners)
            };
            if poly.len() < 3 {
                continue;
            }
            let screen: Vec<ScreenVertex> = poly
                .iter()
                .map(|c| {
                    let px = cam.project_camera_frame(&c.pc).expect("clipped to the near plane");
                    ScreenVertex {
                        u: px.x,
                        v: px.y,
                        inv_z: 1.0 / c.pc.z,
                    }
                })
                .collect();
            for k in 1..screen.len() - 1 {
                if let Some(s) = setup_one([screen[0], screen[k], screen[k + 1]], mesh.t, w, h) {
                    out.push(s);
                }
            }
        }
    }
    out
}

fn setup_one(mut v: [ScreenVertex; 3], label: u32, w: u32, h: u32) -> Option<TriSetup> {
    let p = |s: &ScreenVertex| (s.u, s.v);
    let mut area = edge(p(&v[0]), p(&v[1]), p(&v[2]));
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    if area < 0.0 {
        v.swap(1, 2);
        area = -area;
    }
    let top_left = std::array::from_fn(|i| {
        let (a, b) = (p(&v[(i + 1) % 3]), p(&v[(i + 2) % 3]));
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        (dy == 0.0 && dx > 0.0) || dy < 0.0
    });
    let (umin, umax) = (v[0].u.min(v[1].u).min(v[2].u), v[0].u.max(v[1].u).max(v[2].u));
    let (vmin, vmax) = (v[0].v.min(v[1].v).min(v[2].v), v[0].v.max(v[1].v).max(v[2].v));
    let (x0, x1) = (umin.ceil().max(0.0), umax.floor().min(w as f64 - 1.0));
    let (y0, y1) = (vmin.ceil().max(0.0), vmax.floor().min(h as f64 - 1.0));
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(TriSetup {
        v,
        area,
        top_left,
        x0: x0 as u32,
        x1: x1 as u32,
        y0: y0 as u32,
        y1: y1 as u32,
        label,
    })
}

impl TriSetup {
    /// Perspective-correct camera-frame z at pixel center `(x, y)` if covered.
    #[inline]
    fn z_at(&self, x: u32, y: u32) -> Option<f64> {
        let q = (x as f64, y as f64);
        let p = |i: usize| (self.v[i].u, self.v[i].v);
        let mut lambda = [0.0; 3];
        for i in 0..3 {
            let e = edge(p((i + 1) % 3), p((i + 2) % 3), q);
            if e < 0.0 || (e == 0.0 && !self.top_left[i]) {
                return None;
            }
            lambda[i] = e / self.area;
        }
        let inv_z: f64 = (0..3).map(|i| lambda[i] * self.v[i].inv_z).sum();
        Some(1.0 / inv_z)
    }
}

/// Whether `(d, id)` should replace the current `(depth, label)` record.
#[inline]
pub fn nearer(d: f64, id: u32, depth: f64, label: u32) -> bool {
    d < depth - DEPTH_TIE_EPS || ((d - depth).abs() <= DEPTH_TIE_EPS && (id < label || (id == label && d < depth)))
}

/// Depth and label maps of `cam` over all `meshes`.
pub fn rasterize(cam: &Camera, meshes: &[LabeledMesh]) -> (DepthMap, LabelMap) {
    let (w, h) = (cam.width(), cam.height());
    let mut depth = DepthMap::empty(w, h);
    let mut labels = LabelMap::empty(w, h);
    let tris = setup_triangles(cam, meshes);
    if tris.is_empty() {
        return (depth, labels);
    }
    let k = cam.intrinsics();
    // length of the camera-frame ray (.., .., 1) through each pixel center
    let ray_len = |x: u32, y: u32| {
        let (a, b) = ((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy);
        (a * a + b * b + 1.0).sqrt()
    };
    let stride = w as usize;
    depth
        .data
        .par_chunks_mut(stride * BAND_ROWS)
        .zip(labels.data.par_chunks_mut(stride * BAND_ROWS))
        .enumerate()
        .for_each(|(band, (dband, lband))| {
            let by0 = (band * BAND_ROWS) as u32;
            let by1 = by0 + (dband.len() / stride) as u32 - 1;
            for tri in &tris {
                if tri.y1 < by0 || tri.y0 > by1 {
                    continue;
                }
                for y in tri.y0.max(by0)..=tri.y1.min(by1) {
                    let row = (y - by0) as usize * stride;
                    for x in tri.x0..=tri.x1 {
                        let Some(z) = tri.z_at(x, y) else { continue };
                        let d = z * ray_len(x, y);
                        let i = row + x as usize;
                        if nearer(d, tri.label, dband[i], if dband[i].is_finite() { lband[i] } else { u32::MAX }) {
                            dband[i] = d;
                            lband[i] = tri.label;
                        }
                    }
                }
            }
        });
    (depth, labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelState {
    Visible,
    Occluded,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionPixel {
    pub x: u32,
    pub y: u32,
    pub state: PixelState,
    pub own_depth: f64,
}

/// Pixels covered by object `t` alone in one camera, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectRegion {
    pub t: u32,
    pub camera_id: u32,
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<RegionPixel>,
}

impl ObjectRegion {
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let first = self.pixels.first()?;
        let mut b = (first.x, first.y, first.x, first.y);
        for p in &self.pixels {
            b = (b.0.min(p.x), b.1.min(p.y), b.2.max(p.x), b.3.max(p.y));
        }
        Some(b)
    }

    pub fn count(&self, state: PixelState) -> usize {
        self.pixels.iter().filter(|p| p.state == state).count()
    }

    /// Full-image mask of the covered pixels, optionally restricted to one state.
    pub fn mask(&self, state: Option<PixelState>) -> GrayImage {
        let mut m = GrayImage::new(self.width, self.height);
        for p in self.pixels.iter().filter(|p| state.is_none_or(|s| s == p.state)) {
            m.put_pixel(p.x, p.y, Luma([255]));
        }
        m
    }
}

/// Covered pixels of `mesh` in `cam`, each visible when the global label map
/// names the same object and occluded otherwise.
pub fn object_region(cam: &Camera, mesh: &LabeledMesh, label_map: &LabelMap, depth_map: &DepthMap) -> Result<ObjectRegion> {
    let dims = (cam.width(), cam.height());
    for actual in [label_map.dimensions(), depth_map.dimensions()] {
        if actual != dims {
            return Err(Error::DimensionMismatch { expected: dims, actual });
        }
    }
    let (own, _) = rasterize(cam, std::slice::from_ref(mesh));
    let mut pixels = Vec::new();
    for y in 0..dims.1 {
        for x in 0..dims.0 {
            let d = own.get(x, y);
            if d.is_finite() {
                let state = if label_map.get(x, y) == mesh.t {
                    PixelState::Visible
                } else {
                    PixelState::Occluded
                };
                pixels.push(RegionPixel { x, y, state, own_depth: d });
            }
        }
    }
    Ok(ObjectRegion {
        t: mesh.t,
        camera_id: cam.id(),
        width: dims.0,
        height: dims.1,
        pixels,
    })
}
