//! Pinhole camera model with two-term radial distortion.
//!
//! Conventions: world frame is right-handed with z up and the ground at z = 0.
//! Camera frame follows the usual computer-vision layout (x right, y down,
//! z forward). Pixel `(i, j)` has its center at continuous coordinate
//! `(i, j)`, so a continuous coordinate maps to the pixel `round(u), round(v)`.

use std::collections::BTreeSet;
use std::path::Path;

use image::RgbImage;
use nalgebra::{Matrix3, Point2, Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster;

pub type WorldPoint = Point3<f64>;
pub type PixelCoord = Point2<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Intrinsics {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Intrinsics {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
        }
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("extrinsics contain non-finite values"));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (max |R^T R - I| = {:e})",
                gram.amax()
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(Extrinsics {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Extrinsics {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose of a camera at `center` looking at `target`, with image rows
    /// running against `up`.
    pub fn look_at(center: WorldPoint, target: WorldPoint, up: Vector3<f64>) -> Result<Self> {
        let forward = target - center;
        if forward.norm() == 0.0 {
            return Err(Error::invalid("look-at target coincides with camera center"));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(Error::invalid("look-at direction is parallel to the up vector"));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * center.coords);
        Extrinsics::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    id: u32,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    width: u32,
    height: u32,
}

impl Camera {
    pub fn new(
        id: u32,
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("camera {id}: zero image size")));
        }
        let k = &intrinsics;
        let finite = [k.fx, k.fy, k.cx, k.cy, k.k1, k.k2].iter().all(|v| v.is_finite());
        if !finite || k.fx <= 0.0 || k.fy <= 0.0 {
            return Err(Error::invalid(format!("camera {id}: focal lengths must be positive")));
        }
        if !(0.0..width as f64).contains(&k.cx) || !(0.0..height as f64).contains(&k.cy) {
            return Err(Error::invalid(format!(
                "camera {id}: principal point ({}, {}) outside {}x{} image",
                k.cx, k.cy, width, height
            )));
        }
        Ok(Camera {
            id,
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    /// Distortion-free camera at `center` aimed at `target` (z up), principal
    /// point at the image center.
    pub fn look_at(
        id: u32,
        center: WorldPoint,
        target: WorldPoint,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let intrinsics = Intrinsics::pinhole(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        );
        let extrinsics = Extrinsics::look_at(center, target, Vector3::z())?;
        Camera::new(id, intrinsics, extrinsics, width, height)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &Extrinsics {
        &self.extrinsics
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Same camera with the distortion coefficients cleared, as used once
    /// images have been undistorted at ingest.
    pub fn undistorted(&self) -> Camera {
        let mut cam = self.clone();
        cam.intrinsics.k1 = 0.0;
        cam.intrinsics.k2 = 0.0;
        cam
    }

    pub fn to_camera_frame(&self, p: &WorldPoint) -> Vector3<f64> {
        self.extrinsics.rotation * p.coords + self.extrinsics.translation
    }

    /// Ideal pinhole projection; `None` when the point is not in front of
    /// the camera. Out-of-image coordinates are returned as-is.
    pub fn project(&self, p: &WorldPoint) -> Option<PixelCoord> {
        self.project_camera_frame(&self.to_camera_frame(p))
    }

    pub fn project_camera_frame(&self, pc: &Vector3<f64>) -> Option<PixelCoord> {
        if pc.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some(Point2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy))
    }

    /// Optical center in world coordinates, `-R^T t`.
    pub fn center(&self) -> WorldPoint {
        Point3::from(-(self.extrinsics.rotation.transpose() * self.extrinsics.translation))
    }

    /// Euclidean distance from the optical center to `p`.
    pub fn depth(&self, p: &WorldPoint) -> f64 {
        (p - self.center()).norm()
    }

    /// World-space unit direction of the ray through continuous pixel `px`.
    pub fn ray_direction(&self, px: &PixelCoord) -> Unit<Vector3<f64>> {
        let k = &self.intrinsics;
        let d = Vector3::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy, 1.0);
        Unit::new_normalize(self.extrinsics.rotation.transpose() * d)
    }

    /// Pixel containing the continuous coordinate, if it lies in the image.
    pub fn pixel_at(&self, px: &PixelCoord) -> Option<(u32, u32)> {
        let (u, v) = (px.x.round(), px.y.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some((u as u32, v as u32))
        } else {
            None
        }
    }

    /// Resample a distorted capture into the ideal pinhole image. Each output
    /// pixel is pushed through the forward radial model
    /// `r' = r (1 + k1 r^2 + k2 r^4)` (normalized coordinates) and the input is
    /// sampled bilinearly there. Samples falling outside the input are black.
    pub fn undistort_image(&self, image: &RgbImage) -> Result<RgbImage> {
        if image.dimensions() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: image.dimensions(),
            });
        }
        let k = self.intrinsics;
        if !k.has_distortion() {
            return Ok(image.clone());
        }
        let mut out = RgbImage::new(self.width, self.height);
        for (x, y, px) in out.enumerate_pixels_mut() {
            let xn = (x as f64 - k.cx) / k.fx;
            let yn = (y as f64 - k.cy) / k.fy;
            let r2 = xn * xn + yn * yn;
            let f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
            let (su, sv) = (k.fx * xn * f + k.cx, k.fy * yn * f + k.cy);
            if let Some(c) = raster::sample_rgb_bilinear(image, su, sv) {
                *px = image::Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8));
            }
        }
        Ok(out)
    }
}

/// On-disk camera record (`cameras.json` entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&Camera> for CameraRecord {
    fn from(cam: &Camera) -> Self {
        let rot = cam.extrinsics.rotation;
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = rot[(row, col)];
            }
        }
        let k = cam.intrinsics;
        CameraRecord {
            id: cam.id,
            width: cam.width,
            height: cam.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            k1: k.k1,
            k2: k.k2,
            r,
            t: cam.extrinsics.translation.into(),
        }
    }
}

impl TryFrom<&CameraRecord> for Camera {
    type Error = Error;

    fn try_from(rec: &CameraRecord) -> Result<Self> {
        let rotation = Matrix3::from_row_slice(&rec.r);
        let extrinsics = Extrinsics::new(rotation, Vector3::from(rec.t))?;
        let intrinsics = Intrinsics {
            fx: rec.fx,
            fy: rec.fy,
            cx: rec.cx,
            cy: rec.cy,
            k1: rec.k1,
            k2: rec.k2,
        };
        Camera::new(rec.id, intrinsics, extrinsics, rec.width, rec.height)
    }
}

/// A calibrated, synchronized set of cameras with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for cam in &cameras {
            if !seen.insert(cam.id) {
                return Err(Error::invalid(format!("duplicate camera id {}", cam.id)));
            }
        }
        Ok(CameraRig { cameras })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn camera(&self, id: u32) -> Result<&Camera> {
        self.get(id).ok_or(Error::UnknownCamera(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.cameras.iter().map(|c| c.id)
    }

    pub fn undistorted(&self) -> CameraRig {
        CameraRig {
            cameras: self.cameras.iter().map(Camera::undistorted).collect(),
        }
    }

    pub fn to_records(&self) -> Vec<CameraRecord> {
        self.cameras.iter().map(CameraRecord::from).collect()
    }

    pub fn from_records(records: &[CameraRecord]) -> Result<Self> {
        let cameras = records.iter().map(Camera::try_from).collect::<Result<Vec<_>>>()?;
        CameraRig::new(cameras)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let records: Vec<CameraRecord> = serde_json::from_str(s).map_err(|source| Error::Json {
            path: "cameras.json".into(),
            source,
        })?;
        CameraRig::from_records(&records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let records: Vec<CameraRecord> = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        CameraRig::from_records(&records)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, &self.to_records())
    }
}
