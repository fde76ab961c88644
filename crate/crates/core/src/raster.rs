//! Small raster utilities shared by the image-space stages.

use image::{GrayImage, Luma, RgbImage};

/// Bilinear RGB sample at continuous coordinate `(u, v)` (pixel centers at
/// integers). `None` outside `[0, w-1] x [0, h-1]`.
pub fn sample_rgb_bilinear(img: &RgbImage, u: f64, v: f64) -> Option<[f64; 3]> {
    let (w, h) = img.dimensions();
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let x0 = u.floor() as u32;
    let y0 = v.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let mut out = [0.0; 3];
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    for (x, y, wgt) in taps {
        if wgt == 0.0 {
            continue;
        }
        let p = img.get_pixel(x, y).0;
        for c in 0..3 {
            out[c] += wgt * p[c] as f64;
        }
    }
    Some(out)
}

/// Square binary dilation of a 0/255 mask; `radius` 1 is the 3x3 neighborhood.
pub fn dilate(mask: &GrayImage, radius: u32) -> GrayImage {
    let (w, h) = mask.dimensions();
    let r = radius as i64;
    GrayImage::from_fn(w, h, |x, y| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && mask.get_pixel(nx as u32, ny as u32)[0] > 0 {
                    return Luma([255]);
                }
            }
        }
        Luma([0])
    })
}

/// Intersection over union of the nonzero supports of two equally sized masks.
/// Two empty masks have IoU 1.
pub fn mask_iou(a: &GrayImage, b: &GrayImage) -> f64 {
    assert_eq!(a.dimensions(), b.dimensions(), "mask dimensions differ");
    let (mut inter, mut union) = (0u64, 0u64);
    for (pa, pb) in a.pixels().zip(b.pixels()) {
        let (x, y) = (pa[0] > 0, pb[0] > 0);
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// 8-connected component labeling of the pixels selected by `member`.
/// Returns per-pixel labels (0 = not a member) and the component count.
/// Labels follow raster-scan discovery order.
pub fn label_8connected(w: u32, h: u32, member: impl Fn(u32, u32) -> bool) -> (Vec<u32>, u32) {
    let (wu, hu) = (w as usize, h as usize);
    let mut labels = vec![0u32; wu * hu];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for y in 0..hu {
        for x in 0..wu {
            if labels[y * wu + x] != 0 || !member(x as u32, y as u32) {
                continue;
            }
            next += 1;
            labels[y * wu + x] = next;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= wu as i64 || ny >= hu as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if labels[ny * wu + nx] == 0 && member(nx as u32, ny as u32) {
                            labels[ny * wu + nx] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
    }
    (labels, next)
}
