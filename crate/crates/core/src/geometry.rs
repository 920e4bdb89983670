//! Mask geometry: exact Euclidean distance transforms, the normalized
//! interior SDF used as conditioning, box dilation and bounding boxes.
//!
//! The distance transform is the separable lower-envelope-of-parabolas
//! method: one 1-D pass down every column, then one along every row, each
//! linear in the line length. Squared distances between pixel centres are
//! integers and are computed exactly.

use crate::error::{Error, Result};
use crate::model::{ImagePlane, MaskGrid};
use crate::par::Execution;

/// Which pixels distances are measured to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seeds {
    Foreground,
    Background,
}

/// Euclidean pixel distance to the nearest seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField(ImagePlane<f32>);

impl DistanceField {
    pub fn plane(&self) -> &ImagePlane<f32> {
        &self.0
    }

    pub fn values(&self) -> &[f32] {
        self.0.data()
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.0.get(x, y, 0)
    }
}

/// Interior distance to the background, max-normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSdf(ImagePlane<f32>);

impl NormalizedSdf {
    pub fn plane(&self) -> &ImagePlane<f32> {
        &self.0
    }

    pub fn into_plane(self) -> ImagePlane<f32> {
        self.0
    }

    pub fn values(&self) -> &[f32] {
        self.0.data()
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.0.get(x, y, 0)
    }
}

/// Half-open pixel box: `x0..x1`, `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 < x1 && y0 < y1, "degenerate bbox");
        BBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }
}

const INF: f64 = f64::INFINITY;

/// 1-D squared distance transform of the sampled function `f` (infinite
/// entries are not sites). Writes `min_q (p - q)^2 + f[q]` into `out`.
fn envelope_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if fq == INF {
            continue;
        }
        let qf = q as f64;
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(-INF);
                break;
            };
            let vf = v as f64;
            let s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * qf - 2.0 * vf);
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.fill(INF);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while k + 1 < sites.len() && bounds[k + 1] < pf {
            k += 1;
        }
        let d = pf - sites[k] as f64;
        *o = d * d + f[sites[k]];
    }
}

fn is_seed(mask: &MaskGrid, seeds: Seeds, x: usize, y: usize) -> bool {
    mask.get(x, y) == (seeds == Seeds::Foreground)
}

fn squared_field(exec: Execution, mask: &MaskGrid, seeds: Seeds) -> Result<Vec<f64>> {
    let (w, h) = mask.dims();
    if w == 0
        || h == 0
        || !mask
            .bits()
            .iter()
            .any(|&b| b == (seeds == Seeds::Foreground))
    {
        return Err(Error::NoSeeds);
    }
    // columns stored contiguously: cols[x * h + y]
    let mut cols = vec![0.0f64; w * h];
    exec.for_each_chunk_mut(&mut cols, h, |x, col| {
        let f: Vec<f64> = (0..h)
            .map(|y| if is_seed(mask, seeds, x, y) { 0.0 } else { INF })
            .collect();
        envelope_1d(
            &f,
            col,
            &mut Vec::with_capacity(h),
            &mut Vec::with_capacity(h),
        );
    });
    let mut out = vec![0.0f64; w * h];
    exec.for_each_chunk_mut(&mut out, w, |y, row| {
        let f: Vec<f64> = (0..w).map(|x| cols[x * h + y]).collect();
        envelope_1d(
            &f,
            row,
            &mut Vec::with_capacity(w),
            &mut Vec::with_capacity(w),
        );
    });
    Ok(out)
}

/// Exact squared Euclidean distances (row-major) to the nearest seed.
pub fn squared_edt_with(exec: Execution, mask: &MaskGrid, seeds: Seeds) -> Result<Vec<u64>> {
    Ok(squared_field(exec, mask, seeds)?
        .into_iter()
        .map(|d| d as u64)
        .collect())
}

pub fn squared_edt(mask: &MaskGrid, seeds: Seeds) -> Result<Vec<u64>> {
    squared_edt_with(Execution::default(), mask, seeds)
}

pub fn edt_with(exec: Execution, mask: &MaskGrid, seeds: Seeds) -> Result<DistanceField> {
    let (w, h) = mask.dims();
    let data = squared_field(exec, mask, seeds)?
        .into_iter()
        .map(|d| d.sqrt() as f32)
        .collect();
    Ok(DistanceField(ImagePlane::new(w, h, 1, data)?))
}

pub fn edt(mask: &MaskGrid, seeds: Seeds) -> Result<DistanceField> {
    edt_with(Execution::default(), mask, seeds)
}

/// Signed distance: negative inside the subject (distance to the nearest
/// background pixel), positive outside (distance to the nearest subject
/// pixel). `None` when the mask is empty or covers the whole frame.
pub fn signed_distance(mask: &MaskGrid) -> Option<ImagePlane<f32>> {
    let inside = edt(mask, Seeds::Background).ok()?;
    let outside = edt(mask, Seeds::Foreground).ok()?;
    let (w, h) = mask.dims();
    let data = mask
        .bits()
        .iter()
        .zip(inside.values().iter().zip(outside.values()))
        .map(|(&m, (&i, &o))| if m { -i } else { o })
        .collect();
    ImagePlane::new(w, h, 1, data).ok()
}

/// Inverted signed distance with negatives clamped to zero, divided by its
/// maximum: 0 on the background, rising to exactly 1 at the interior pixel
/// farthest from the background.
///
/// An empty mask yields all zeros and a full-frame mask all ones.
pub fn normalized_sdf_with(exec: Execution, mask: &MaskGrid) -> NormalizedSdf {
    let (w, h) = mask.dims();
    if mask.is_empty() {
        return NormalizedSdf(ImagePlane::filled(w, h, 1, 0.0));
    }
    if mask.is_full() {
        return NormalizedSdf(ImagePlane::filled(w, h, 1, 1.0));
    }
    let sq = squared_field(exec, mask, Seeds::Background).expect("mask has background pixels");
    let inside: Vec<f64> = sq
        .iter()
        .zip(mask.bits())
        .map(|(&d, &m)| if m { d.sqrt() } else { 0.0 })
        .collect();
    let max = inside.iter().copied().fold(0.0, f64::max);
    let data = inside.iter().map(|&d| (d / max) as f32).collect();
    NormalizedSdf(ImagePlane::new(w, h, 1, data).expect("dims preserved"))
}

pub fn normalized_sdf(mask: &MaskGrid) -> NormalizedSdf {
    normalized_sdf_with(Execution::default(), mask)
}

/// Inclusive window `[x - before, x + after]` of source positions feeding an
/// output pixel, for a kernel of length `k`. Offsets from a set pixel to the
/// pixels it turns on span `[-floor(k/2), ceil(k/2) - 1]`, e.g. `[-4, 3]` for 8.
fn kernel_reach(k: usize) -> (usize, usize) {
    let before = k.div_ceil(2) - 1;
    let after = k / 2;
    (before, after)
}

/// Box dilation with a `kw x kh` rectangle.
pub fn dilate(mask: &MaskGrid, kw: usize, kh: usize) -> MaskGrid {
    dilate_with(Execution::default(), mask, kw, kh)
}

pub fn dilate_with(exec: Execution, mask: &MaskGrid, kw: usize, kh: usize) -> MaskGrid {
    let (w, h) = mask.dims();
    let kw = kw.max(1);
    let kh = kh.max(1);
    if w == 0 || h == 0 {
        return mask.clone();
    }
    let (bx, ax) = kernel_reach(kw);
    let (by, ay) = kernel_reach(kh);

    let mut horiz = vec![false; w * h];
    exec.for_each_chunk_mut(&mut horiz, w, |y, row| {
        let mut prefix = vec![0u32; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + u32::from(mask.get(x, y));
        }
        for (x, o) in row.iter_mut().enumerate() {
            let lo = x.saturating_sub(bx);
            let hi = (x + ax).min(w - 1);
            *o = prefix[hi + 1] > prefix[lo];
        }
    });

    // column prefix counts: colsum[y * w + x] = # set in rows < y
    let mut colsum = vec![0u32; (h + 1) * w];
    for y in 0..h {
        for x in 0..w {
            colsum[(y + 1) * w + x] = colsum[y * w + x] + u32::from(horiz[y * w + x]);
        }
    }
    let mut bits = vec![false; w * h];
    exec.for_each_chunk_mut(&mut bits, w, |y, row| {
        let lo = y.saturating_sub(by);
        let hi = (y + ay).min(h - 1);
        for (x, o) in row.iter_mut().enumerate() {
            *o = colsum[(hi + 1) * w + x] > colsum[lo * w + x];
        }
    });
    MaskGrid::new(w, h, bits).expect("dims preserved")
}

/// Tightest box around the foreground.
pub fn bbox_of(mask: &MaskGrid) -> Result<BBox> {
    let (w, h) = mask.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::EmptyMask);
    }
    Ok(BBox { x0, y0, x1, y1 })
}

/// Grows each side by `round(frac * side length)` of its own axis, clamped
/// to `width x height`.
pub fn pad_bbox(b: BBox, frac: f64, width: usize, height: usize) -> BBox {
    let frac = frac.clamp(0.0, 1.0);
    let px = (frac * b.width() as f64).round() as usize;
    let py = (frac * b.height() as f64).round() as usize;
    BBox {
        x0: b.x0.saturating_sub(px),
        y0: b.y0.saturating_sub(py),
        x1: (b.x1 + px).min(width),
        y1: (b.y1 + py).min(height),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(bits: &[u8]) -> MaskGrid {
        MaskGrid::new(bits.len(), 1, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn row_distances_to_background_seeds() {
        // background seeds at 0,1,3,4 means foreground only at 2
        let m = row(&[0, 0, 1, 0, 0]);
        let d = edt(&m, Seeds::Background).unwrap();
        assert_eq!(d.values(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn all_seeds_gives_zeros() {
        let m = MaskGrid::from_fn(4, 3, |_, _| true);
        let d = edt(&m, Seeds::Foreground).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_seed_diagonal() {
        let m = MaskGrid::from_fn(3, 3, |x, y| x == 0 && y == 0);
        let sq = squared_edt(&m, Seeds::Foreground).unwrap();
        assert_eq!(sq[8], 8);
        let d = edt(&m, Seeds::Foreground).unwrap();
        assert_eq!(d.get(2, 2), (8.0f64).sqrt() as f32);
    }

    #[test]
    fn no_seeds_is_error() {
        let m = MaskGrid::empty(3, 3);
        assert!(matches!(edt(&m, Seeds::Foreground), Err(Error::NoSeeds)));
    }

    #[test]
    fn sdf_row_example() {
        let s = normalized_sdf(&row(&[0, 1, 1, 1, 0]));
        assert_eq!(s.values(), &[0.0, 0.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn sdf_degenerate_masks() {
        assert!(normalized_sdf(&MaskGrid::empty(4, 4))
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let full = MaskGrid::from_fn(4, 4, |_, _| true);
        assert!(normalized_sdf(&full).values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sdf_is_clamped_inverted_signed_distance() {
        let m = MaskGrid::from_fn(9, 7, |x, y| (2..7).contains(&x) && (1..6).contains(&y));
        let s = signed_distance(&m).unwrap();
        let max = s.data().iter().map(|&v| -v).fold(0.0f32, f32::max);
        let n = normalized_sdf(&m);
        for (a, b) in s.data().iter().zip(n.values()) {
            assert!(((-a).max(0.0) / max - b).abs() < 1e-6);
        }
    }

    #[test]
    fn even_kernel_dilation_offsets() {
        let m = MaskGrid::from_fn(11, 11, |x, y| x == 5 && y == 5);
        let d = dilate(&m, 8, 8);
        for y in 0..11 {
            for x in 0..11 {
                let dx = x as i64 - 5;
                let dy = y as i64 - 5;
                let expect = (-4..=3).contains(&dx) && (-4..=3).contains(&dy);
                assert_eq!(d.get(x, y), expect, "({x},{y})");
            }
        }
        assert_eq!(d.count(), 64);
    }

    #[test]
    fn odd_kernel_is_symmetric() {
        let m = row(&[0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(dilate(&m, 3, 1), row(&[0, 0, 1, 1, 1, 0, 0]));
        assert_eq!(dilate(&m, 5, 1), row(&[0, 1, 1, 1, 1, 1, 0]));
    }

    #[test]
    fn dilation_trivial_cases() {
        let empty = MaskGrid::empty(6, 5);
        assert_eq!(dilate(&empty, 8, 8), empty);
        let m = MaskGrid::from_fn(6, 5, |x, y| (x * y) % 4 == 1);
        assert_eq!(dilate(&m, 1, 1), m);
    }

    #[test]
    fn bbox_examples() {
        let m = MaskGrid::from_fn(10, 10, |x, y| (x, y) == (2, 3) || (x, y) == (5, 7));
        assert_eq!(bbox_of(&m).unwrap(), BBox::new(2, 3, 6, 8));
        let m = MaskGrid::from_fn(4, 4, |x, y| x == 0 && y == 0);
        assert_eq!(bbox_of(&m).unwrap(), BBox::new(0, 0, 1, 1));
        assert!(matches!(
            bbox_of(&MaskGrid::empty(3, 3)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn pad_examples() {
        assert_eq!(
            pad_bbox(BBox::new(10, 10, 20, 30), 0.1, 100, 100),
            BBox::new(9, 8, 21, 32)
        );
        let b = BBox::new(3, 4, 7, 9);
        assert_eq!(pad_bbox(b, 0.0, 100, 100), b);
        assert_eq!(
            pad_bbox(BBox::new(0, 0, 10, 10), 0.5, 12, 12),
            BBox::new(0, 0, 12, 12)
        );
    }
}
