//! Volumetric visual hull: silhouette carving, 26-connected object labeling,
//! zeroth/first order moments and size-band noise filtering.

use std::io::{Read, Write};
use std::path::Path;

use image::GrayImage;
use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camgeom::{CameraRig, WorldPoint};
use crate::error::{Error, Result};
use crate::io;

pub const VOLUME_MAGIC: &[u8; 5] = b"VHUL1";

/// Axis-aligned voxel lattice. Voxel `(i, j, k)` is centered at
/// `origin + voxel_size * (i + 0.5, j + 0.5, k + 0.5)`; linear indices run
/// x fastest, then y, then z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel_size must be positive, got {voxel_size}")));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("grid of zero extent: dims {dims:?}")));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::invalid("grid dimension exceeds u32"));
        }
        Ok(GridSpec {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Grid covering `extents` meters from `origin`, rounding partial voxels up.
    pub fn from_extents(origin: [f64; 3], extents: [f64; 3], voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel_size must be positive, got {voxel_size}")));
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            if !(extents[a] > 0.0 && extents[a].is_finite()) {
                return Err(Error::invalid(format!("grid of zero extent along axis {a}")));
            }
            dims[a] = (extents[a] / voxel_size - 1e-9).ceil().max(1.0) as usize;
        }
        GridSpec::new(origin, voxel_size, dims)
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> WorldPoint {
        let s = self.voxel_size;
        Point3::new(
            self.origin[0] + s * (i as f64 + 0.5),
            self.origin[1] + s * (j as f64 + 0.5),
            self.origin[2] + s * (k as f64 + 0.5),
        )
    }

    pub fn center_of(&self, idx: usize) -> WorldPoint {
        let [i, j, k] = self.coords(idx);
        self.center(i, j, k)
    }
}

/// Bit-packed occupancy over a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    words: Vec<u64>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        VoxelGrid {
            spec,
            words: vec![0; spec.voxel_count().div_ceil(64)],
        }
    }

    pub fn full(spec: GridSpec) -> Self {
        let n = spec.voxel_count();
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if !n.is_multiple_of(64) {
            *words.last_mut().unwrap() = (1u64 << (n % 64)) - 1;
        }
        VoxelGrid { spec, words }
    }

    pub fn from_indices(spec: GridSpec, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut g = VoxelGrid::empty(spec);
        for idx in indices {
            g.set(idx, true);
        }
        g
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, idx: usize, on: bool) {
        let bit = 1u64 << (idx % 64);
        if on {
            self.words[idx / 64] |= bit;
        } else {
            self.words[idx / 64] &= !bit;
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// Shape-from-silhouette carving. `masks` align with `rig.cameras()`.
///
/// A camera observes a voxel when the voxel center projects (in front of the
/// camera) to a pixel inside its image. A voxel survives when at least
/// `min_observing` cameras observe it and every observing camera's mask is
/// set at the rounded projected pixel.
pub fn carve(rig: &CameraRig, masks: &[GrayImage], spec: &GridSpec, min_observing: usize) -> Result<VoxelGrid> {
    if rig.is_empty() {
        return Err(Error::invalid("carving needs at least one camera"));
    }
    if masks.len() != rig.len() {
        return Err(Error::invalid(format!(
            "{} masks for {} cameras",
            masks.len(),
            rig.len()
        )));
    }
    if min_observing == 0 {
        return Err(Error::invalid("min_observing must be >= 1"));
    }
    for (cam, mask) in rig.cameras().iter().zip(masks) {
        if mask.dimensions() != (cam.width(), cam.height()) {
            return Err(Error::DimensionMismatch {
                expected: (cam.width(), cam.height()),
                actual: mask.dimensions(),
            });
        }
    }
    let spec = *spec;
    let n = spec.voxel_count();
    let mut grid = VoxelGrid::full(spec);
    let mut observed = vec![0u8; n];

    // camera-major so only one mask is touched per sweep
    for (cam, mask) in rig.cameras().iter().zip(masks) {
        grid.words
            .par_iter_mut()
            .zip(observed.par_chunks_mut(64))
            .enumerate()
            .for_each(|(wi, (word, obs))| {
                let mut bits = *word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let idx = wi * 64 + b;
                    let center = spec.center_of(idx);
                    let Some(px) = cam.project(&center) else { continue };
                    let Some((u, v)) = cam.pixel_at(&px) else { continue };
                    obs[b] = obs[b].saturating_add(1);
                    if mask.get_pixel(u, v)[0] == 0 {
                        *word &= !(1u64 << b);
                    }
                }
            });
    }
    grid.words
        .par_iter_mut()
        .zip(observed.par_chunks(64))
        .for_each(|(word, obs)| {
            for (b, &count) in obs.iter().enumerate() {
                if (count as usize) < min_observing {
                    *word &= !(1u64 << b);
                }
            }
        });
    Ok(grid)
}

/// Inclusive voxel-index bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl VoxelBox {
    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= c[a] && c[a] <= self.max[a])
    }

    pub fn touches_boundary(&self, dims: [usize; 3]) -> bool {
        (0..3).any(|a| self.min[a] == 0 || self.max[a] + 1 == dims[a])
    }
}

/// Raw moments `M_{abc} = sum x^a y^b z^c` over voxel centers (meters), for
/// the orders the pipeline needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectMoments {
    pub m000: u64,
    pub m100: f64,
    pub m010: f64,
    pub m001: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectStats {
    pub t: u32,
    pub voxel_count: u64,
    pub barycenter: WorldPoint,
    pub bbox: VoxelBox,
}

#[derive(Clone, Copy)]
struct Accum {
    count: u64,
    sum: [u64; 3],
    min: [usize; 3],
    max: [usize; 3],
}

impl Accum {
    const EMPTY: Accum = Accum {
        count: 0,
        sum: [0; 3],
        min: [usize::MAX; 3],
        max: [0; 3],
    };

    fn add(&mut self, c: [usize; 3]) {
        self.count += 1;
        for a in 0..3 {
            self.sum[a] += c[a] as u64;
            self.min[a] = self.min[a].min(c[a]);
            self.max[a] = self.max[a].max(c[a]);
        }
    }

    fn merge(mut self, o: &Accum) -> Accum {
        self.count += o.count;
        for a in 0..3 {
            self.sum[a] += o.sum[a];
            self.min[a] = self.min[a].min(o.min[a]);
            self.max[a] = self.max[a].max(o.max[a]);
        }
        self
    }

    fn moments(&self, spec: &GridSpec) -> ObjectMoments {
        let n = self.count as f64;
        let m = |a: usize| n * spec.origin[a] + spec.voxel_size * (self.sum[a] as f64 + 0.5 * n);
        ObjectMoments {
            m000: self.count,
            m100: m(0),
            m010: m(1),
            m001: m(2),
        }
    }
}

/// Per-voxel object labels plus per-object statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVolume {
    grid: VoxelGrid,
    labels: Vec<u32>,
    objects: Vec<ObjectStats>,
    moments: Vec<ObjectMoments>,
}

impl LabeledVolume {
    /// Builds a volume from dense labels (0 = empty). Labels must cover
    /// exactly `1..=T`.
    pub fn from_labels(spec: GridSpec, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != spec.voxel_count() {
            return Err(Error::invalid(format!(
                "{} labels for a grid of {} voxels",
                labels.len(),
                spec.voxel_count()
            )));
        }
        let max = labels.iter().copied().max().unwrap_or(0);
        let accums = accumulate(&spec, &labels, max);
        if let Some(t) = accums.iter().skip(1).position(|a| a.count == 0) {
            return Err(Error::invalid(format!("label {} missing; labels must be contiguous", t + 1)));
        }
        Ok(LabeledVolume::assemble(spec, labels, &accums))
    }

    fn assemble(spec: GridSpec, labels: Vec<u32>, accums: &[Accum]) -> Self {
        let grid = VoxelGrid::from_indices(spec, labels.iter().enumerate().filter(|(_, &l)| l != 0).map(|(i, _)| i));
        let moments: Vec<ObjectMoments> = accums.iter().skip(1).map(|a| a.moments(&spec)).collect();
        let objects = accums
            .iter()
            .skip(1)
            .zip(&moments)
            .enumerate()
            .map(|(i, (a, m))| ObjectStats {
                t: i as u32 + 1,
                voxel_count: a.count,
                barycenter: Point3::new(m.m100 / a.count as f64, m.m010 / a.count as f64, m.m001 / a.count as f64),
                bbox: VoxelBox { min: a.min, max: a.max },
            })
            .collect();
        LabeledVolume {
            grid,
            labels,
            objects,
            moments,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        self.grid.spec()
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label_at(&self, i: usize, j: usize, k: usize) -> u32 {
        self.labels[self.spec().index(i, j, k)]
    }

    pub fn objects(&self) -> &[ObjectStats] {
        &self.objects
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Voxel count and barycenter of object `t`.
    pub fn moments(&self, t: u32) -> Result<ObjectStats> {
        self.object(t).copied()
    }

    pub fn raw_moments(&self, t: u32) -> Result<ObjectMoments> {
        self.object(t)?;
        Ok(self.moments[t as usize - 1])
    }

    pub fn object(&self, t: u32) -> Result<&ObjectStats> {
        if t == 0 {
            return Err(Error::UnknownObject(t));
        }
        self.objects.get(t as usize - 1).ok_or(Error::UnknownObject(t))
    }

    /// Keeps objects with `t_min < N < t_max`, relabeling survivors
    /// `1..` in their original order.
    pub fn filter_noise(&self, t_min: u64, t_max: u64) -> Result<LabeledVolume> {
        if t_min >= t_max {
            return Err(Error::invalid(format!("t_min ({t_min}) must be below t_max ({t_max})")));
        }
        let mut remap = vec![0u32; self.objects.len() + 1];
        let mut next = 0u32;
        for o in &self.objects {
            if t_min < o.voxel_count && o.voxel_count < t_max {
                next += 1;
                remap[o.t as usize] = next;
            }
        }
        let labels: Vec<u32> = self.labels.par_iter().map(|&l| remap[l as usize]).collect();
        let spec = *self.spec();
        let grid = VoxelGrid::from_indices(spec, labels.iter().enumerate().filter(|(_, &l)| l != 0).map(|(i, _)| i));
        let mut objects = Vec::with_capacity(next as usize);
        let mut moments = Vec::with_capacity(next as usize);
        for (o, m) in self.objects.iter().zip(&self.moments) {
            let t = remap[o.t as usize];
            if t != 0 {
                objects.push(ObjectStats { t, ..*o });
                moments.push(*m);
            }
        }
        Ok(LabeledVolume {
            grid,
            labels,
            objects,
            moments,
        })
    }

    /// Writes the `VHUL1` binary dump.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        io::ensure_parent(path)?;
        let max = self.objects.len() as u64;
        let width: u8 = if max <= u8::MAX as u64 {
            1
        } else if max <= u16::MAX as u64 {
            2
        } else {
            4
        };
        let spec = self.spec();
        let mut buf = Vec::with_capacity(50 + self.labels.len() * width as usize);
        buf.extend_from_slice(VOLUME_MAGIC);
        for v in spec.origin {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&spec.voxel_size.to_le_bytes());
        for d in spec.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.push(width);
        for &l in &self.labels {
            match width {
                1 => buf.push(l as u8),
                2 => buf.extend_from_slice(&(l as u16).to_le_bytes()),
                _ => buf.extend_from_slice(&l.to_le_bytes()),
            }
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&buf)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_dump(path: &Path) -> Result<LabeledVolume> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| io::missing_or_io(path, e))?
            .read_to_end(&mut bytes)?;
        let bad = |r: &str| Error::format(path, r);
        if bytes.len() < 50 || &bytes[..5] != VOLUME_MAGIC {
            return Err(bad("missing VHUL1 header"));
        }
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let origin = [f64_at(5), f64_at(13), f64_at(21)];
        let voxel_size = f64_at(29);
        let dims = [u32_at(37) as usize, u32_at(41) as usize, u32_at(45) as usize];
        let width = bytes[49] as usize;
        let spec = GridSpec::new(origin, voxel_size, dims).map_err(|e| bad(&e.to_string()))?;
        if ![1, 2, 4].contains(&width) {
            return Err(bad("label_width must be 1, 2 or 4"));
        }
        let body = &bytes[50..];
        if body.len() != spec.voxel_count() * width {
            return Err(bad("label payload length does not match dims"));
        }
        let labels: Vec<u32> = match width {
            1 => body.iter().map(|&b| b as u32).collect(),
            2 => body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect(),
            _ => body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect(),
        };
        LabeledVolume::from_labels(spec, labels).map_err(|e| bad(&e.to_string()))
    }

    pub fn write_objects_json(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.objects)
    }
}

fn accumulate(spec: &GridSpec, labels: &[u32], max_label: u32) -> Vec<Accum> {
    const CHUNK: usize = 1 << 16;
    let n_obj = max_label as usize + 1;
    labels
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = vec![Accum::EMPTY; n_obj];
            for (o, &l) in chunk.iter().enumerate() {
                if l != 0 {
                    acc[l as usize].add(spec.coords(ci * CHUNK + o));
                }
            }
            acc
        })
        .reduce(
            || vec![Accum::EMPTY; n_obj],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect(),
        )
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// 26-connected components, numbered in raster-scan order of each
/// component's first voxel. Two-pass union-find.
pub fn label_components(grid: &VoxelGrid) -> LabeledVolume {
    let spec = *grid.spec();
    let [nx, ny, nz] = spec.dims;
    let n = spec.voxel_count();
    let mut prov = vec![0u32; n];
    let mut parent: Vec<u32> = vec![0];

    // neighbors preceding the current voxel in scan order
    let mut back = Vec::with_capacity(13);
    for dz in -1i64..=0 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dz == 0 && (dy > 0 || (dy == 0 && dx >= 0)) {
                    continue;
                }
                back.push((dx, dy, dz));
            }
        }
    }

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = spec.index(i, j, k);
                if !grid.get(idx) {
                    continue;
                }
                let mut label = 0u32;
                for &(dx, dy, dz) in &back {
                    let (ni, nj, nk) = (i as i64 + dx, j as i64 + dy, k as i64 + dz);
                    if ni < 0 || nj < 0 || nk < 0 || ni >= nx as i64 || nj >= ny as i64 {
                        continue;
                    }
                    let l = prov[spec.index(ni as usize, nj as usize, nk as usize)];
                    if l == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = find(&mut parent, l);
                    } else {
                        let (a, b) = (find(&mut parent, label), find(&mut parent, l));
                        if a != b {
                            let (lo, hi) = (a.min(b), a.max(b));
                            parent[hi as usize] = lo;
                            label = lo;
                        }
                    }
                }
                if label == 0 {
                    label = parent.len() as u32;
                    parent.push(label);
                }
                prov[idx] = label;
            }
        }
    }

    let mut final_of = vec![0u32; parent.len()];
    let mut next = 0u32;
    for l in prov.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l);
        if final_of[root as usize] == 0 {
            next += 1;
            final_of[root as usize] = next;
        }
        *l = final_of[root as usize];
    }
    let accums = accumulate(&spec, &prov, next);
    LabeledVolume::assemble(spec, prov, &accums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeom::{Camera, Extrinsics, Intrinsics};
    use image::Luma;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_spec(dims: [usize; 3]) -> GridSpec {
        GridSpec::new([0.0; 3], 1.0, dims).unwrap()
    }

    fn grid_with(dims: [usize; 3], pts: &[[usize; 3]]) -> VoxelGrid {
        let spec = unit_spec(dims);
        VoxelGrid::from_indices(spec, pts.iter().map(|p| spec.index(p[0], p[1], p[2])))
    }

    /// Flood-fill reference partition: component id per voxel, numbered by
    /// first voxel in scan order.
    fn flood_fill(grid: &VoxelGrid) -> Vec<u32> {
        let spec = *grid.spec();
        let mut out = vec![0u32; spec.voxel_count()];
        let mut next = 0;
        for start in 0..spec.voxel_count() {
            if !grid.get(start) || out[start] != 0 {
                continue;
            }
            next += 1;
            out[start] = next;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                let c = spec.coords(v);
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let q = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                            if (0..3).any(|a| q[a] < 0 || q[a] >= spec.dims[a] as i64) {
                                continue;
                            }
                            let qi = spec.index(q[0] as usize, q[1] as usize, q[2] as usize);
                            if grid.get(qi) && out[qi] == 0 {
                                out[qi] = next;
                                stack.push(qi);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn random_grid(dims: [usize; 3], density: f64, seed: u64) -> VoxelGrid {
        let spec = unit_spec(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VoxelGrid::from_indices(spec, (0..spec.voxel_count()).filter(|_| rng.random_bool(density)))
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new([0.0; 3], 0.0, [1, 1, 1]).is_err());
        assert!(GridSpec::new([0.0; 3], 1.0, [0, 1, 1]).is_err());
        let g = GridSpec::from_extents([0.0; 3], [68.0, 55.5, 4.0], 0.01).unwrap();
        assert_eq!(g.dims, [6800, 5550, 400]);
        let g = GridSpec::from_extents([1.0, 2.0, 3.0], [1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(g.center(1, 0, 1), Point3::new(1.75, 2.25, 3.75));
    }

    #[test]
    fn diagonal_neighbors_connect() {
        let v = label_components(&grid_with([3, 3, 3], &[[0, 0, 0], [1, 1, 1]]));
        assert_eq!(v.object_count(), 1);
        let v = label_components(&grid_with([3, 3, 3], &[[0, 0, 0], [2, 2, 2]]));
        assert_eq!(v.object_count(), 2);
        assert_eq!(v.label_at(0, 0, 0), 1);
        assert_eq!(v.label_at(2, 2, 2), 2);
        let v = label_components(&VoxelGrid::empty(unit_spec([4, 4, 4])));
        assert_eq!(v.object_count(), 0);
    }

    #[test]
    fn labels_follow_scan_discovery_order() {
        // a U whose arms are discovered separately and merge later
        let pts = [[0, 0, 0], [4, 0, 0], [0, 1, 0], [4, 1, 0], [0, 2, 0], [1, 2, 0], [2, 2, 0], [3, 2, 0], [4, 2, 0], [2, 0, 3]];
        let v = label_components(&grid_with([5, 3, 4], &pts));
        assert_eq!(v.object_count(), 2);
        assert_eq!(v.label_at(0, 0, 0), 1);
        assert_eq!(v.label_at(4, 0, 0), 1);
        assert_eq!(v.label_at(2, 0, 3), 2);
    }

    #[test]
    fn random_volume_matches_flood_fill() {
        for seed in 0..4 {
            let g = random_grid([32, 32, 32], 0.2, seed);
            let v = label_components(&g);
            assert_eq!(v.labels(), flood_fill(&g).as_slice());
            let total: u64 = v.objects().iter().map(|o| o.voxel_count).sum();
            assert_eq!(total as usize, g.occupied_count());
        }
    }

    #[test]
    fn moments_examples() {
        let spec = GridSpec::new([0.5, 1.5, 2.5], 1.0, [3, 3, 3]).unwrap();
        let mut labels = vec![0u32; 27];
        labels[spec.index(0, 0, 0)] = 1;
        let v = LabeledVolume::from_labels(spec, labels).unwrap();
        let s = v.moments(1).unwrap();
        assert_eq!(s.voxel_count, 1);
        assert_eq!(s.barycenter, Point3::new(1.0, 2.0, 3.0));
        assert!(matches!(v.moments(2), Err(Error::UnknownObject(2))));
        assert!(matches!(v.moments(0), Err(Error::UnknownObject(0))));

        let spec = GridSpec::new([-0.5, -0.5, -0.5], 1.0, [3, 1, 1]).unwrap();
        let v = LabeledVolume::from_labels(spec, vec![1, 0, 1]).unwrap();
        let s = v.moments(1).unwrap();
        assert_eq!(s.voxel_count, 2);
        assert_eq!(s.barycenter, Point3::new(1.0, 0.0, 0.0));
        let m = v.raw_moments(1).unwrap();
        assert_eq!((m.m000, m.m100, m.m010, m.m001), (2, 2.0, 0.0, 0.0));
    }

    #[test]
    fn sphere_barycenter_by_direct_summation() {
        let spec = GridSpec::from_extents([4.0, 4.0, 0.0], [2.0, 2.0, 2.0], 0.01).unwrap();
        let center = Point3::new(5.0, 5.0, 1.0);
        let mut labels = vec![0u32; spec.voxel_count()];
        let mut pts = Vec::new();
        for (idx, l) in labels.iter_mut().enumerate() {
            let c = spec.center_of(idx);
            if (c - center).norm() <= 0.5 {
                *l = 1;
                pts.push(c);
            }
        }
        let v = LabeledVolume::from_labels(spec, labels).unwrap();
        let s = v.moments(1).unwrap();
        let oracle = pts.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / pts.len() as f64;
        assert_eq!(s.voxel_count as usize, pts.len());
        assert!((s.barycenter.coords - oracle).norm() < 1e-9);
        assert!((s.barycenter - center).norm() < 0.01);
        assert!(s.bbox.contains(spec.coords(spec.index(100, 100, 100))));
    }

    #[test]
    fn filter_noise_keep_band() {
        // three objects of 2, 5 and 9 voxels along x
        let spec = unit_spec([20, 1, 1]);
        let mut labels = vec![0u32; 20];
        labels[0..2].fill(1);
        labels[3..8].fill(2);
        labels[9..18].fill(3);
        let v = LabeledVolume::from_labels(spec, labels).unwrap();
        let f = v.filter_noise(2, 9).unwrap();
        assert_eq!(f.object_count(), 1);
        assert_eq!(f.objects()[0].t, 1);
        assert_eq!(f.objects()[0].voxel_count, 5);
        assert_eq!(f.grid().occupied_count(), 5);
        assert_eq!(f.labels()[3], 1);
        assert_eq!(f.labels()[0], 0);
        let f = v.filter_noise(1, 10).unwrap();
        assert_eq!(f.object_count(), 3);
        assert!(v.filter_noise(5, 5).is_err());
    }

    #[test]
    fn filter_noise_removes_object_below_full_pitch_minimum() {
        let spec = unit_spec([100, 100, 2]);
        let mut labels = vec![0u32; spec.voxel_count()];
        labels[..20_000].fill(1);
        let v = LabeledVolume::from_labels(spec, labels).unwrap();
        assert_eq!(v.filter_noise(30_000, 300_000).unwrap().object_count(), 0);
    }

    #[test]
    fn dump_round_trip() {
        let g = random_grid([17, 9, 5], 0.3, 9);
        let v = label_components(&g);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f0.vhul");
        v.write_dump(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..5], b"VHUL1");
        assert_eq!(bytes.len(), 50 + 17 * 9 * 5);
        assert_eq!(LabeledVolume::read_dump(&p).unwrap(), v);
        std::fs::write(&p, &bytes[..40]).unwrap();
        assert!(matches!(LabeledVolume::read_dump(&p), Err(Error::Format { .. })));
    }

    fn axis_rig() -> CameraRig {
        // looks down from z = 10 at the unit cube region
        let ext = Extrinsics::look_at(Point3::new(2.0, 2.0, 10.0), Point3::new(2.0, 2.0, 0.0), nalgebra::Vector3::y()).unwrap();
        let cam = Camera::new(0, Intrinsics::pinhole(50.0, 50.0, 31.5, 31.5), ext, 64, 64).unwrap();
        CameraRig::new(vec![cam]).unwrap()
    }

    #[test]
    fn carve_full_and_empty_silhouettes() {
        let rig = axis_rig();
        let cam = &rig.cameras()[0];
        let spec = GridSpec::new([-4.0, -4.0, 0.0], 0.25, [48, 48, 8]).unwrap();
        let full = GrayImage::from_pixel(64, 64, Luma([255]));
        let g = carve(&rig, &[full], &spec, 1).unwrap();
        let in_frustum = (0..spec.voxel_count())
            .filter(|&i| cam.project(&spec.center_of(i)).and_then(|p| cam.pixel_at(&p)).is_some())
            .count();
        assert!(in_frustum > 0 && in_frustum < spec.voxel_count());
        assert_eq!(g.occupied_count(), in_frustum);

        let empty = GrayImage::new(64, 64);
        assert_eq!(carve(&rig, &[empty], &spec, 1).unwrap().occupied_count(), 0);

        assert!(carve(&rig, &[], &spec, 1).is_err());
        assert!(carve(&CameraRig::default(), &[], &spec, 1).is_err());
        assert!(carve(&rig, &[GrayImage::new(3, 3)], &spec, 1).is_err());
    }

    #[test]
    fn carve_min_observing_drops_unobserved() {
        let rig = axis_rig();
        let spec = GridSpec::new([-4.0, -4.0, 0.0], 0.25, [48, 48, 8]).unwrap();
        let full = GrayImage::from_pixel(64, 64, Luma([255]));
        assert_eq!(carve(&rig, &[full], &spec, 2).unwrap().occupied_count(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn partition_is_stable_under_axis_permutation(seed in 0u64..1000, density in 0.05..0.4f64) {
            let dims = [9, 7, 6];
            let g = random_grid(dims, density, seed);
            let spec = *g.spec();
            // reverse x and swap roles of y/z: a different scan order
            let pdims = [dims[0], dims[2], dims[1]];
            let pspec = unit_spec(pdims);
            let map = |c: [usize; 3]| pspec.index(dims[0] - 1 - c[0], c[2], c[1]);
            let pg = VoxelGrid::from_indices(pspec, g.occupied().map(|i| map(spec.coords(i))));
            let a = label_components(&g);
            let b = label_components(&pg);
            prop_assert_eq!(a.object_count(), b.object_count());
            let mut rename = std::collections::HashMap::new();
            for idx in g.occupied() {
                let la = a.labels()[idx];
                let lb = b.labels()[map(spec.coords(idx))];
                prop_assert_eq!(*rename.entry(la).or_insert(lb), lb);
            }
        }

        #[test]
        fn union_barycenter_is_count_weighted(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = GridSpec::new([rng.random_range(-5.0..5.0), 1.25, -0.5], 0.037, [20, 12, 9]).unwrap();
            let labels: Vec<u32> = (0..spec.voxel_count()).map(|_| rng.random_range(0..3u32)).collect();
            let merged: Vec<u32> = labels.iter().map(|&l| (l > 0) as u32).collect();
            let v = LabeledVolume::from_labels(spec, labels).unwrap();
            let u = LabeledVolume::from_labels(spec, merged).unwrap();
            let (a, b, ab) = (v.moments(1).unwrap(), v.moments(2).unwrap(), u.moments(1).unwrap());
            let n = (a.voxel_count + b.voxel_count) as f64;
            let w = (a.barycenter.coords * a.voxel_count as f64 + b.barycenter.coords * b.voxel_count as f64) / n;
            prop_assert!((w - ab.barycenter.coords).norm() <= 1e-9 * ab.barycenter.coords.norm().max(1.0));
        }
    }
}
