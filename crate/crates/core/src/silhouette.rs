//! Foreground extraction by background subtraction in three passes: global
//! thresholding against a mean background, shadow classification, and local
//! chroma refinement of shadows attached to objects.
//!
//! Color is decomposed with the lossless integer YCoCg-R transform. Shadows
//! scale all three channels roughly uniformly, so chroma is compared after
//! normalizing by luma; a darkened patch of pitch then keeps its chroma while
//! a player's shirt does not.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::raster::label_8connected;

/// Fixed-point scale of luma-normalized chroma.
const CHROMA_SCALE: i32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    /// Max-channel absolute difference above which a pixel is foreground.
    pub tau: u8,
    /// Luma ratio band (frame / background) of shadow candidates.
    pub shadow_luma_min: f64,
    pub shadow_luma_max: f64,
    /// Normalized chroma distance below which a darkened pixel is shadow.
    pub chroma_eps: u32,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            tau: 30,
            shadow_luma_min: 0.4,
            shadow_luma_max: 0.95,
            chroma_eps: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundModel {
    mean_image: RgbImage,
    frame_count: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackgroundSidecar {
    frame_count: u32,
}

impl BackgroundModel {
    /// Per-pixel, per-channel mean of `frames`, rounded half up.
    pub fn build(frames: &[RgbImage]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("background needs at least one frame"))?;
        let dims = first.dimensions();
        let mut sums = vec![0u64; first.as_raw().len()];
        for f in frames {
            if f.dimensions() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: f.dimensions(),
                });
            }
            for (s, &v) in sums.iter_mut().zip(f.as_raw()) {
                *s += v as u64;
            }
        }
        let n = frames.len() as u64;
        let raw: Vec<u8> = sums.iter().map(|s| ((2 * s + n) / (2 * n)) as u8).collect();
        let mean_image = RgbImage::from_raw(dims.0, dims.1, raw).expect("buffer size");
        Ok(BackgroundModel {
            mean_image,
            frame_count: frames.len() as u32,
        })
    }

    pub fn from_parts(mean_image: RgbImage, frame_count: u32) -> Result<Self> {
        if frame_count == 0 {
            return Err(Error::invalid("background frame_count must be >= 1"));
        }
        Ok(BackgroundModel {
            mean_image,
            frame_count,
        })
    }

    pub fn mean_image(&self) -> &RgbImage {
        &self.mean_image
    }

    pub fn frame_count(&self) -> u32 {
        self.frame_count
    }

    /// Writes the mean image as PNG and `{frame_count}` to a sibling `.json`.
    pub fn save(&self, png_path: &Path) -> Result<()> {
        io::save_png(png_path, &self.mean_image)?;
        io::write_json(
            &png_path.with_extension("json"),
            &BackgroundSidecar {
                frame_count: self.frame_count,
            },
        )
    }

    pub fn load(png_path: &Path) -> Result<Self> {
        let mean_image = io::load_rgb(png_path)?;
        let side: BackgroundSidecar = io::read_json(&png_path.with_extension("json"))?;
        BackgroundModel::from_parts(mean_image, side.frame_count)
    }

    fn check_dims(&self, frame: &RgbImage) -> Result<()> {
        if frame.dimensions() != self.mean_image.dimensions() {
            return Err(Error::DimensionMismatch {
                expected: self.mean_image.dimensions(),
                actual: frame.dimensions(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShadowClass {
    #[default]
    None,
    Independent,
    Dependent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SilhouetteMask {
    mask: GrayImage,
    shadow_map: Vec<ShadowClass>,
}

impl SilhouetteMask {
    /// Wraps a plain 0/255 mask with no shadow annotations.
    pub fn from_mask(mask: GrayImage) -> Self {
        let n = (mask.width() * mask.height()) as usize;
        SilhouetteMask {
            mask,
            shadow_map: vec![ShadowClass::None; n],
        }
    }

    pub fn new(mask: GrayImage, shadow_map: Vec<ShadowClass>) -> Result<Self> {
        if shadow_map.len() != (mask.width() * mask.height()) as usize {
            return Err(Error::invalid("shadow map size differs from mask"));
        }
        let s = SilhouetteMask { mask, shadow_map };
        if s.iter_shadow().any(|(x, y, c)| c == ShadowClass::Independent && s.is_foreground(x, y)) {
            return Err(Error::invalid("independent shadow pixel marked foreground"));
        }
        Ok(s)
    }

    pub fn mask(&self) -> &GrayImage {
        &self.mask
    }

    pub fn into_mask(self) -> GrayImage {
        self.mask
    }

    pub fn shadow_map(&self) -> &[ShadowClass] {
        &self.shadow_map
    }

    pub fn shadow_at(&self, x: u32, y: u32) -> ShadowClass {
        self.shadow_map[(y * self.mask.width() + x) as usize]
    }

    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        self.mask.get_pixel(x, y)[0] > 0
    }

    fn iter_shadow(&self) -> impl Iterator<Item = (u32, u32, ShadowClass)> + '_ {
        let w = self.mask.width();
        self.shadow_map
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as u32 % w, i as u32 / w, c))
    }
}

/// Integer YCoCg-R decomposition `(Y, Co, Cg)`.
pub fn ycocg(px: Rgb<u8>) -> (i32, i32, i32) {
    let [r, g, b] = px.0.map(i32::from);
    let co = r - b;
    let t = b + (co >> 1);
    let cg = g - t;
    let y = t + (cg >> 1);
    (y, co, cg)
}

fn normalized_chroma(px: Rgb<u8>) -> (i32, i32, i32) {
    let (y, co, cg) = ycocg(px);
    let d = y.max(1);
    (y, co * CHROMA_SCALE / d, cg * CHROMA_SCALE / d)
}

/// Distance between the luma-normalized chroma of two pixels (max norm).
pub fn chroma_distance(a: Rgb<u8>, b: Rgb<u8>) -> u32 {
    let (_, ao, ag) = normalized_chroma(a);
    let (_, bo, bg) = normalized_chroma(b);
    (ao - bo).unsigned_abs().max((ag - bg).unsigned_abs())
}

/// Foreground iff the max-channel absolute difference exceeds `tau`.
pub fn global_extract(frame: &RgbImage, bg: &BackgroundModel, tau: u8) -> Result<GrayImage> {
    bg.check_dims(frame)?;
    let (w, h) = frame.dimensions();
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let f = frame.get_pixel(x, y).0;
        let b = bg.mean_image.get_pixel(x, y).0;
        let diff = (0..3).map(|c| f[c].abs_diff(b[c])).max().unwrap_or(0);
        Luma([if diff > tau { 255 } else { 0 }])
    }))
}

fn is_shadow_candidate(f: Rgb<u8>, b: Rgb<u8>, params: &SegmentParams) -> bool {
    let (yf, _, _) = ycocg(f);
    let (yb, _, _) = ycocg(b);
    if yb <= 0 {
        return false;
    }
    let ratio = yf as f64 / yb as f64;
    (params.shadow_luma_min..=params.shadow_luma_max).contains(&ratio)
        && chroma_distance(f, b) < params.chroma_eps
}

/// Marks darkened, chroma-preserving foreground pixels as shadow. Shadow
/// components touching no object pixel (8-neighborhood) are independent and
/// dropped from the mask; the others are kept and marked dependent.
pub fn classify_and_remove_shadows(
    mask: &GrayImage,
    frame: &RgbImage,
    bg: &BackgroundModel,
    params: &SegmentParams,
) -> Result<SilhouetteMask> {
    bg.check_dims(frame)?;
    if mask.dimensions() != frame.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: frame.dimensions(),
            actual: mask.dimensions(),
        });
    }
    let (w, h) = mask.dimensions();
    let idx = |x: u32, y: u32| (y * w + x) as usize;
    let candidate: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            mask.get_pixel(x, y)[0] > 0
                && is_shadow_candidate(*frame.get_pixel(x, y), *bg.mean_image.get_pixel(x, y), params)
        })
        .collect();
    let (labels, count) = label_8connected(w, h, |x, y| candidate[idx(x, y)]);

    let mut attached = vec![false; count as usize + 1];
    for y in 0..h {
        for x in 0..w {
            let l = labels[idx(x, y)];
            if l == 0 || attached[l as usize] {
                continue;
            }
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    if mask.get_pixel(nx, ny)[0] > 0 && !candidate[idx(nx, ny)] {
                        attached[l as usize] = true;
                        break 'nb;
                    }
                }
            }
        }
    }

    let mut out = mask.clone();
    let mut shadow_map = vec![ShadowClass::None; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let l = labels[idx(x, y)];
            if l == 0 {
                continue;
            }
            if attached[l as usize] {
                shadow_map[idx(x, y)] = ShadowClass::Dependent;
            } else {
                shadow_map[idx(x, y)] = ShadowClass::Independent;
                out.put_pixel(x, y, Luma([0]));
            }
        }
    }
    Ok(SilhouetteMask {
        mask: out,
        shadow_map,
    })
}

/// Otsu threshold over a 256-bin histogram: returns `(threshold, mean_low,
/// mean_high)` where the low class is `<= threshold`, or `None` when fewer
/// than two bins are populated.
pub fn otsu(hist: &[u64; 256]) -> Option<(usize, f64, f64)> {
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (t, &c) in hist.iter().enumerate() {
        w0 += c;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(_, b, _, _)| between > b) {
            best = Some((t, between, m0, m1));
        }
    }
    best.map(|(t, _, m0, m1)| (t, m0, m1))
}

/// Local refinement of dependent shadows. Around each dependent-shadow
/// component, the chroma distances of all foreground pixels in a window are
/// split by Otsu; shadow pixels on the low side are removed. When the two
/// classes are not separated by at least `chroma_eps` the window is treated
/// as single-mode and everything is kept.
pub fn refine_local(
    s: &SilhouetteMask,
    frame: &RgbImage,
    bg: &BackgroundModel,
    params: &SegmentParams,
) -> Result<SilhouetteMask> {
    bg.check_dims(frame)?;
    let (w, h) = s.mask.dimensions();
    let idx = |x: u32, y: u32| (y * w + x) as usize;
    let (labels, count) = label_8connected(w, h, |x, y| {
        s.is_foreground(x, y) && s.shadow_map[idx(x, y)] == ShadowClass::Dependent
    });
    if count == 0 {
        return Ok(s.clone());
    }

    // component bounding boxes
    let mut bbox = vec![[u32::MAX, u32::MAX, 0u32, 0u32]; count as usize + 1];
    for y in 0..h {
        for x in 0..w {
            let l = labels[idx(x, y)] as usize;
            if l > 0 {
                let b = &mut bbox[l];
                b[0] = b[0].min(x);
                b[1] = b[1].min(y);
                b[2] = b[2].max(x);
                b[3] = b[3].max(y);
            }
        }
    }

    let dist = |x: u32, y: u32| {
        chroma_distance(*frame.get_pixel(x, y), *bg.mean_image.get_pixel(x, y)).min(255) as usize
    };
    let mut out = s.clone();
    for l in 1..=count as usize {
        let [x0, y0, x1, y1] = bbox[l];
        let margin = ((x1 - x0).max(y1 - y0) / 2).max(8);
        let (wx0, wy0) = (x0.saturating_sub(margin), y0.saturating_sub(margin));
        let (wx1, wy1) = ((x1 + margin).min(w - 1), (y1 + margin).min(h - 1));
        let mut hist = [0u64; 256];
        for y in wy0..=wy1 {
            for x in wx0..=wx1 {
                if s.is_foreground(x, y) {
                    hist[dist(x, y)] += 1;
                }
            }
        }
        let threshold = match otsu(&hist) {
            Some((t, m0, m1)) if m1 - m0 >= params.chroma_eps as f64 => Some(t),
            _ => None,
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                if labels[idx(x, y)] as usize != l {
                    continue;
                }
                match threshold {
                    Some(t) if dist(x, y) <= t => out.mask.put_pixel(x, y, Luma([0])),
                    _ => out.shadow_map[idx(x, y)] = ShadowClass::None,
                }
            }
        }
    }
    Ok(out)
}

/// All three passes with the given parameters.
pub fn segment(frame: &RgbImage, bg: &BackgroundModel, params: &SegmentParams) -> Result<SilhouetteMask> {
    let global = global_extract(frame, bg, params.tau)?;
    let classified = classify_and_remove_shadows(&global, frame, bg, params)?;
    refine_local(&classified, frame, bg, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::mask_iou;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const GRASS: [u8; 3] = [60, 140, 60];
    const SHIRT: [u8; 3] = [200, 30, 30];

    fn pitch(w: u32, h: u32) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb(GRASS))
    }

    fn darken(px: Rgb<u8>, k: f64) -> Rgb<u8> {
        Rgb(px.0.map(|v| (v as f64 * k).round() as u8))
    }

    fn in_disc(x: u32, y: u32, cx: f64, cy: f64, r: f64) -> bool {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= r * r
    }

    fn in_ellipse(x: u32, y: u32, cx: f64, cy: f64, a: f64, b: f64) -> bool {
        let (dx, dy) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
        dx * dx + dy * dy <= 1.0
    }

    fn truth_mask(w: u32, h: u32, f: impl Fn(u32, u32) -> bool) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| Luma([if f(x, y) { 255 } else { 0 }]))
    }

    /// Frame with a shirt-colored player disc and a darkened ground ellipse
    /// as its shadow; `attached` moves the shadow against the disc.
    fn player_with_shadow(attached: bool) -> (RgbImage, BackgroundModel, GrayImage) {
        let (w, h) = (160, 120);
        let bg = pitch(w, h);
        let (pcx, pcy, pr) = (60.0, 50.0, 18.0);
        let (scx, scy) = if attached { (90.0, 62.0) } else { (125.0, 95.0) };
        let mut frame = bg.clone();
        for (x, y, px) in frame.enumerate_pixels_mut() {
            if in_disc(x, y, pcx, pcy, pr) {
                *px = Rgb(SHIRT);
            } else if in_ellipse(x, y, scx, scy, 28.0, 10.0) {
                *px = darken(*px, 0.6);
            }
        }
        let truth = truth_mask(w, h, |x, y| in_disc(x, y, pcx, pcy, pr));
        (frame, BackgroundModel::build(&[bg]).unwrap(), truth)
    }

    #[test]
    fn background_mean_rules() {
        let a = RgbImage::from_pixel(4, 3, Rgb([10, 10, 10]));
        let b = RgbImage::from_pixel(4, 3, Rgb([20, 21, 0]));
        let one = BackgroundModel::build(std::slice::from_ref(&a)).unwrap();
        assert_eq!(one.mean_image(), &a);
        let two = BackgroundModel::build(&[a.clone(), b]).unwrap();
        assert_eq!(two.mean_image().get_pixel(0, 0).0, [15, 16, 5]);
        assert_eq!(two.frame_count(), 2);
        assert!(BackgroundModel::build(&[]).is_err());
        assert!(BackgroundModel::build(&[a, RgbImage::new(2, 2)]).is_err());
    }

    #[test]
    fn background_from_moving_disc() {
        let (w, h) = (128u32, 96u32);
        let truth = RgbImage::from_fn(w, h, |x, y| Rgb([50 + (x % 7) as u8, 120 + (y % 5) as u8, 60]));
        // disc of contrast 80 hopping 9 px per frame: no pixel is covered twice
        let frames: Vec<RgbImage> = (0..100)
            .map(|i| {
                let cx = 4.0 + (i % 14) as f64 * 9.0;
                let cy = 4.0 + (i / 14) as f64 * 9.0;
                let mut f = truth.clone();
                for (x, y, px) in f.enumerate_pixels_mut() {
                    if in_disc(x, y, cx, cy, 4.0) {
                        px.0 = px.0.map(|c| c + 80);
                    }
                }
                f
            })
            .collect();
        let bg = BackgroundModel::build(&frames).unwrap();
        let good = bg
            .mean_image()
            .pixels()
            .zip(truth.pixels())
            .filter(|(a, b)| (0..3).all(|c| a[c].abs_diff(b[c]) <= 1))
            .count();
        assert!(good as f64 >= 0.99 * (w * h) as f64, "{good}");
    }

    #[test]
    fn global_extract_cases() {
        let bg_img = pitch(20, 10);
        let bg = BackgroundModel::build(std::slice::from_ref(&bg_img)).unwrap();
        let m = global_extract(&bg_img, &bg, 0).unwrap();
        assert!(m.pixels().all(|p| p[0] == 0));

        let mut f = RgbImage::from_pixel(20, 10, Rgb([0, 0, 0]));
        let bg0 = BackgroundModel::build(std::slice::from_ref(&f)).unwrap();
        f.put_pixel(3, 4, Rgb([255, 0, 0]));
        let m = global_extract(&f, &bg0, 30).unwrap();
        let set: Vec<_> = m.enumerate_pixels().filter(|(_, _, p)| p[0] > 0).map(|(x, y, _)| (x, y)).collect();
        assert_eq!(set, vec![(3, 4)]);

        assert!(global_extract(&RgbImage::new(3, 3), &bg, 30).is_err());
    }

    #[test]
    fn global_extract_disc_over_noise() {
        let (w, h) = (200, 150);
        let bg_img = RgbImage::from_pixel(w, h, Rgb([100, 100, 100]));
        let bg = BackgroundModel::build(std::slice::from_ref(&bg_img)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let disc = |x, y| in_disc(x, y, 90.0, 70.0, 30.0);
        let frame = RgbImage::from_fn(w, h, |x, y| {
            let lift = if disc(x, y) { 80 } else { 0 };
            Rgb([0; 3].map(|_: u8| (100 + lift + rng.random_range(-20i32..=20)) as u8))
        });
        let m = global_extract(&frame, &bg, 30).unwrap();
        assert!(mask_iou(&m, &truth_mask(w, h, disc)) >= 0.95);
    }

    #[test]
    fn bright_object_has_no_shadow() {
        let (frame, bg, truth) = {
            let (w, h) = (80, 60);
            let bg = pitch(w, h);
            let mut f = bg.clone();
            for (x, y, px) in f.enumerate_pixels_mut() {
                if in_disc(x, y, 40.0, 30.0, 10.0) {
                    *px = Rgb([250, 250, 250]);
                }
            }
            let t = truth_mask(w, h, |x, y| in_disc(x, y, 40.0, 30.0, 10.0));
            (f, BackgroundModel::build(&[bg]).unwrap(), t)
        };
        let g = global_extract(&frame, &bg, 30).unwrap();
        let s = classify_and_remove_shadows(&g, &frame, &bg, &SegmentParams::default()).unwrap();
        assert_eq!(s.mask(), &g);
        assert_eq!(s.mask(), &truth);
        assert!(s.shadow_map().iter().all(|c| *c == ShadowClass::None));
    }

    #[test]
    fn detached_shadow_is_removed() {
        let (frame, bg, truth) = player_with_shadow(false);
        let params = SegmentParams::default();
        let g = global_extract(&frame, &bg, params.tau).unwrap();
        assert!(mask_iou(&g, &truth) < 0.8, "shadow should be in the global mask");
        let s = classify_and_remove_shadows(&g, &frame, &bg, &params).unwrap();
        assert_eq!(s.mask(), &truth);
        assert!(s.shadow_map().contains(&ShadowClass::Independent));
        assert!(!s.shadow_map().contains(&ShadowClass::Dependent));
        for (x, y, c) in s.iter_shadow() {
            if c == ShadowClass::Independent {
                assert!(!s.is_foreground(x, y));
            }
        }
    }

    #[test]
    fn attached_shadow_is_dependent_then_refined_away() {
        let (frame, bg, truth) = player_with_shadow(true);
        let params = SegmentParams::default();
        let g = global_extract(&frame, &bg, params.tau).unwrap();
        let s = classify_and_remove_shadows(&g, &frame, &bg, &params).unwrap();
        assert_eq!(s.mask(), &g, "dependent shadow stays until refinement");
        let dependent = s.shadow_map().iter().filter(|c| **c == ShadowClass::Dependent).count();
        assert!(dependent > 500, "{dependent}");

        let r = refine_local(&s, &frame, &bg, &params).unwrap();
        let iou = mask_iou(r.mask(), &truth);
        assert!(iou >= 0.9, "iou {iou}");
        // refinement only removes pixels
        for (a, b) in r.mask().pixels().zip(g.pixels()) {
            assert!(a[0] <= b[0]);
        }
    }

    #[test]
    fn refine_is_identity_without_dependent_shadow() {
        let (frame, bg, _) = player_with_shadow(false);
        let params = SegmentParams::default();
        let g = global_extract(&frame, &bg, params.tau).unwrap();
        let s = classify_and_remove_shadows(&g, &frame, &bg, &params).unwrap();
        assert_eq!(refine_local(&s, &frame, &bg, &params).unwrap(), s);
    }

    #[test]
    fn single_mode_region_is_kept() {
        // object is a brightened patch of pitch, shadow a darkened one: both
        // share the background chroma so the window histogram has one mode
        let (w, h) = (100, 80);
        let bg_img = pitch(w, h);
        let bg = BackgroundModel::build(std::slice::from_ref(&bg_img)).unwrap();
        let mut frame = bg_img.clone();
        for (x, y, px) in frame.enumerate_pixels_mut() {
            if in_disc(x, y, 40.0, 40.0, 12.0) {
                *px = Rgb(GRASS.map(|v| (v as f64 * 1.5) as u8));
            } else if in_ellipse(x, y, 62.0, 46.0, 16.0, 6.0) {
                *px = darken(*px, 0.6);
            }
        }
        let params = SegmentParams::default();
        let g = global_extract(&frame, &bg, params.tau).unwrap();
        let s = classify_and_remove_shadows(&g, &frame, &bg, &params).unwrap();
        assert!(s.shadow_map().contains(&ShadowClass::Dependent));
        let r = refine_local(&s, &frame, &bg, &params).unwrap();
        assert_eq!(r.mask(), &g);
    }

    #[test]
    fn segmentation_is_deterministic_with_low_false_negatives() {
        let params = SegmentParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (240u32, 160u32);
        let bg_img = RgbImage::from_fn(w, h, |x, _| if (x / 30) % 2 == 0 { Rgb(GRASS) } else { Rgb([70, 150, 66]) });
        let bg = BackgroundModel::build(std::slice::from_ref(&bg_img)).unwrap();
        let (mut missed, mut total) = (0u64, 0u64);
        for _ in 0..8 {
            let mut frame = bg_img.clone();
            let mut objects = Vec::new();
            for _ in 0..3 {
                let (cx, cy) = (rng.random_range(30.0..210.0), rng.random_range(30.0..110.0));
                let shirt = [rng.random_range(150..255u8), rng.random_range(0..60u8), rng.random_range(120..255u8)];
                objects.push((cx, cy, shirt));
            }
            for (x, y, px) in frame.enumerate_pixels_mut() {
                for &(cx, cy, _) in &objects {
                    if in_ellipse(x, y, cx + 16.0, cy + 10.0, 20.0, 6.0) {
                        *px = darken(bg_img[(x, y)], 0.55);
                    }
                }
                for &(cx, cy, shirt) in &objects {
                    if in_ellipse(x, y, cx, cy, 7.0, 16.0) {
                        *px = Rgb(shirt);
                    }
                }
            }
            let truth = truth_mask(w, h, |x, y| objects.iter().any(|&(cx, cy, _)| in_ellipse(x, y, cx, cy, 7.0, 16.0)));
            let a = segment(&frame, &bg, &params).unwrap();
            let b = segment(&frame, &bg, &params).unwrap();
            assert_eq!(a, b);
            for (t, m) in truth.pixels().zip(a.mask().pixels()) {
                if t[0] > 0 {
                    total += 1;
                    missed += (m[0] == 0) as u64;
                }
            }
        }
        let fnr = missed as f64 / total as f64;
        assert!(fnr <= 0.05, "false negative rate {fnr}");
    }

    #[test]
    fn background_persists_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam0.png");
        let bg = BackgroundModel::from_parts(pitch(8, 6), 120).unwrap();
        bg.save(&path).unwrap();
        assert_eq!(BackgroundModel::load(&path).unwrap(), bg);
    }

    #[test]
    fn otsu_splits_bimodal_histogram() {
        let mut hist = [0u64; 256];
        hist[2] = 50;
        hist[3] = 40;
        hist[90] = 30;
        let (t, m0, m1) = otsu(&hist).unwrap();
        assert!((3..90).contains(&t));
        assert!(m0 < 3.0 && m1 == 90.0);
        let mut single = [0u64; 256];
        single[7] = 10;
        assert!(otsu(&single).is_none());
    }
}
