//! Marching cubes over the binary indicator field of one labeled object.
//!
//! Lattice points are voxel centers; a cell spans eight neighboring centers.
//! Vertices sit at edge midpoints, so each vertex is identified by the lower
//! lattice point of its edge plus the edge axis.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::camgeom::WorldPoint;
use crate::carve::LabeledVolume;
use crate::error::{Error, Result};
use crate::io;
use crate::mc_tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};

/// Triangle mesh of object `t`. Triangles wind counter-clockwise when seen
/// from outside.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMesh {
    pub t: u32,
    pub vertices: Vec<WorldPoint>,
    pub triangles: Vec<[u32; 3]>,
}

/// Meshes object `t` of `volume`.
///
/// Cells cover the object's bounding box padded by one voxel and clipped to
/// the grid, so objects touching the grid boundary yield open meshes.
pub fn marching_cubes(volume: &LabeledVolume, t: u32) -> Result<LabeledMesh> {
    let stats = volume.object(t)?;
    let spec = volume.spec();
    let dims = spec.dims.map(|d| d as i64);
    let inside = |p: [i64; 3]| -> bool {
        (0..3).all(|a| p[a] >= 0 && p[a] < dims[a]) && volume.label_at(p[0] as usize, p[1] as usize, p[2] as usize) == t
    };
    // cell (i, j, k) has lower corner at lattice point (i, j, k)
    let lo: [i64; 3] = std::array::from_fn(|a| (stats.bbox.min[a] as i64 - 1).max(0));
    let hi: [i64; 3] = std::array::from_fn(|a| (stats.bbox.max[a] as i64 + 1).min(dims[a] - 1));

    let mut index_of: HashMap<([i64; 3], u8), u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let s = spec.voxel_size;
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                let mut case = 0usize;
                for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                    if !inside([i + off[0] as i64, j + off[1] as i64, k + off[2] as i64]) {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (e, corners) in EDGE_CORNERS.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (a, b) = (CORNER_OFFSETS[corners[0]], CORNER_OFFSETS[corners[1]]);
                    let base = [i + a[0].min(b[0]) as i64, j + a[1].min(b[1]) as i64, k + a[2].min(b[2]) as i64];
                    let axis = (0..3).find(|&d| a[d] != b[d]).expect("edge spans one axis") as u8;
                    edge_vertex[e] = *index_of.entry((base, axis)).or_insert_with(|| {
                        let mut p = Point3::new(
                            spec.origin[0] + s * (base[0] as f64 + 0.5),
                            spec.origin[1] + s * (base[1] as f64 + 0.5),
                            spec.origin[2] + s * (base[2] as f64 + 0.5),
                        );
                        p[axis as usize] += 0.5 * s;
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    });
                }
                for tri in TRI_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    triangles.push([
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[1] as usize],
                        edge_vertex[tri[2] as usize],
                    ]);
                }
            }
        }
    }
    Ok(LabeledMesh { t, vertices, triangles })
}

/// Meshes every object of `volume`, ordered by id.
pub fn mesh_all(volume: &LabeledVolume) -> Vec<LabeledMesh> {
    (1..=volume.object_count() as u32)
        .into_par_iter()
        .map(|t| marching_cubes(volume, t).expect("object ids are dense"))
        .collect()
}

impl LabeledMesh {
    fn corners(&self, tri: &[u32; 3]) -> [WorldPoint; 3] {
        tri.map(|i| self.vertices[i as usize])
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = self.corners(tri);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Undirected edge -> incident triangle count.
    pub fn edge_incidence(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty() && self.edge_incidence().values().all(|&c| c == 2)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_incidence().len() as i64 + self.triangles.len() as i64
    }

    /// Enclosed volume and its centroid by the divergence theorem. Errors with
    /// [`Error::OpenMesh`] when the surface is not closed.
    pub fn volume_and_centroid(&self) -> Result<(f64, WorldPoint)> {
        if !self.is_closed() {
            return Err(Error::OpenMesh(self.t));
        }
        // tetrahedra against a reference point near the mesh keep cancellation small
        let reference = self.vertices.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / self.vertices.len() as f64;
        let mut volume = 0.0;
        let mut moment = Vector3::zeros();
        for tri in &self.triangles {
            let [a, b, c] = self.corners(tri).map(|p| p.coords - reference);
            let v = a.dot(&b.cross(&c)) / 6.0;
            volume += v;
            moment += v * (a + b + c) / 4.0;
        }
        if volume.abs() < f64::MIN_POSITIVE {
            return Err(Error::OpenMesh(self.t));
        }
        Ok((volume, Point3::from(reference + moment / volume)))
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = format!("o object_{}\n", self.t);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for tri in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1);
        }
        out
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        io::ensure_parent(path)?;
        std::fs::write(path, self.to_obj_string())?;
        Ok(())
    }

    /// Parses the subset of OBJ written by [`LabeledMesh::write_obj`].
    pub fn read_obj(path: &Path) -> Result<LabeledMesh> {
        let text = io::read_to_string(path)?;
        let bad = |r: String| Error::format(path, &r);
        let mut mesh = LabeledMesh {
            t: 0,
            vertices: Vec::new(),
            triangles: Vec::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("o") => {
                    let name = parts.next().unwrap_or("");
                    mesh.t = name
                        .strip_prefix("object_")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(format!("line {}: bad object name {name:?}", n + 1)))?;
                }
                Some("v") => {
                    let c: Vec<f64> = parts.map(str::parse).collect::<std::result::Result<_, _>>().map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
                    if c.len() != 3 {
                        return Err(bad(format!("line {}: vertex needs 3 coordinates", n + 1)));
                    }
                    mesh.vertices.push(Point3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let c: Vec<u32> = parts.map(str::parse).collect::<std::result::Result<_, _>>().map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
                    if c.len() != 3 || c.iter().any(|&i| i == 0 || i as usize > mesh.vertices.len()) {
                        return Err(bad(format!("line {}: bad face", n + 1)));
                    }
                    mesh.triangles.push([c[0] - 1, c[1] - 1, c[2] - 1]);
                }
                _ => {}
            }
        }
        Ok(mesh)
    }
}

/// Distance between the voxel barycenter of object `t` and the volume
/// centroid of its mesh.
pub fn mesh_barycenter_check(volume: &LabeledVolume, t: u32, mesh: &LabeledMesh) -> Result<f64> {
    let stats = volume.object(t)?;
    let (_, centroid) = mesh.volume_and_centroid()?;
    Ok((centroid - stats.barycenter).norm())
}
