//! Conditioning bundle for the translation backend: padded person crop,
//! masked RGB, background and SDF crops, all resized to a square input and
//! stacked as `[R, G, B, background, SDF]`.

use crate::error::{Error, Result};
use crate::geometry::{bbox_of, pad_bbox, BBox, NormalizedSdf};
use crate::model::{ImagePlane, MaskGrid, Tensor};
use crate::par::Execution;

/// Side length of the square backend input.
pub const INPUT_SIZE: usize = 256;

/// Channel order of [`FiveChannelInput`].
pub const INPUT_CHANNELS: [&str; 5] = ["r", "g", "b", "background", "sdf"];

pub fn resize_bilinear(img: &ImagePlane<f32>, out_w: usize, out_h: usize) -> ImagePlane<f32> {
    resize_bilinear_with(Execution::Sequential, img, out_w, out_h)
}

/// Half-pixel-centre bilinear resampling with border clamping.
pub fn resize_bilinear_with(
    exec: Execution,
    img: &ImagePlane<f32>,
    out_w: usize,
    out_h: usize,
) -> ImagePlane<f32> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    assert!(out_w >= 1 && out_h >= 1 && w >= 1 && h >= 1, "empty resize");
    if (w, h) == (out_w, out_h) {
        return img.clone();
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = taps(w, out_w);
    let ys = taps(h, out_h);
    let src = img.data();
    let mut out = vec![0.0f32; out_w * out_h * c];
    exec.for_each_chunk_mut(&mut out, out_w * c, |y, row| {
        let (y0, y1, fy) = ys[y];
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for ch in 0..c {
                let p = |xx: usize, yy: usize| f64::from(src[(yy * w + xx) * c + ch]);
                let top = p(x0, y0) + fx * (p(x1, y0) - p(x0, y0));
                let bot = p(x0, y1) + fx * (p(x1, y1) - p(x0, y1));
                row[x * c + ch] = (top + fy * (bot - top)) as f32;
            }
        }
    });
    ImagePlane::new(out_w, out_h, c, out).expect("dims computed")
}

/// Nearest-neighbour resampling, same pixel-centre convention; keeps masks binary.
pub fn resize_nearest(mask: &MaskGrid, out_w: usize, out_h: usize) -> MaskGrid {
    let (w, h) = mask.dims();
    let pick = |d: usize, n_in: usize, n_out: usize| {
        (((d as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
    };
    let xs: Vec<usize> = (0..out_w).map(|x| pick(x, w, out_w)).collect();
    MaskGrid::from_fn(out_w, out_h, |x, y| mask.get(xs[x], pick(y, h, out_h)))
}

pub fn crop_plane<T: crate::model::Sample>(img: &ImagePlane<T>, b: BBox) -> ImagePlane<T> {
    ImagePlane::from_fn(b.width(), b.height(), img.channels(), |x, y, c| {
        img.get(b.x0 + x, b.y0 + y, c)
    })
}

pub fn crop_mask(mask: &MaskGrid, b: BBox) -> MaskGrid {
    MaskGrid::from_fn(b.width(), b.height(), |x, y| mask.get(b.x0 + x, b.y0 + y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropBundle {
    /// Crop region in source-frame coordinates.
    pub bbox: BBox,
    /// 3 channels, zero wherever `mask_crop` is false.
    pub rgb_masked: ImagePlane<f32>,
    pub bg_crop: ImagePlane<f32>,
    pub sdf_crop: ImagePlane<f32>,
    pub mask_crop: MaskGrid,
}

fn same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch(format!(
            "{what} is {a:?}, frame is {b:?}"
        )));
    }
    Ok(())
}

/// Crops every plane to the padded person box and resizes to
/// `INPUT_SIZE x INPUT_SIZE`. The SDF is expected on the full frame.
pub fn build_crop_bundle(
    rgb: &ImagePlane<f32>,
    mask: &MaskGrid,
    bg: &ImagePlane<f32>,
    sdf: &NormalizedSdf,
    pad_frac: f64,
) -> Result<CropBundle> {
    build_crop_bundle_sized(rgb, mask, bg, sdf, pad_frac, INPUT_SIZE)
}

pub fn build_crop_bundle_sized(
    rgb: &ImagePlane<f32>,
    mask: &MaskGrid,
    bg: &ImagePlane<f32>,
    sdf: &NormalizedSdf,
    pad_frac: f64,
    size: usize,
) -> Result<CropBundle> {
    let frame = rgb.dims();
    if rgb.channels() != 3 {
        return Err(Error::DimMismatch(format!(
            "rgb has {} channels",
            rgb.channels()
        )));
    }
    if bg.channels() != 1 {
        return Err(Error::DimMismatch(format!(
            "background has {} channels",
            bg.channels()
        )));
    }
    same_dims("mask", mask.dims(), frame)?;
    same_dims("background", bg.dims(), frame)?;
    same_dims("sdf", sdf.plane().dims(), frame)?;

    let bbox = pad_bbox(bbox_of(mask)?, pad_frac, frame.0, frame.1);
    let mask_box = crop_mask(mask, bbox);
    let mut rgb_box = crop_plane(rgb, bbox);
    zero_outside(&mut rgb_box, &mask_box);

    let mask_crop = resize_nearest(&mask_box, size, size);
    let mut rgb_masked = resize_bilinear(&rgb_box, size, size);
    // bilinear taps can pull colour across the mask edge
    zero_outside(&mut rgb_masked, &mask_crop);

    Ok(CropBundle {
        bbox,
        rgb_masked,
        bg_crop: resize_bilinear(&crop_plane(bg, bbox), size, size),
        sdf_crop: resize_bilinear(&crop_plane(sdf.plane(), bbox), size, size),
        mask_crop,
    })
}

fn zero_outside(img: &mut ImagePlane<f32>, mask: &MaskGrid) {
    let c = img.channels();
    for (px, &m) in img.data_mut().chunks_exact_mut(c).zip(mask.bits()) {
        if !m {
            px.fill(0.0);
        }
    }
}

/// Planar `5 x size x size` tensor, channels `[R, G, B, background, SDF]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiveChannelInput {
    size: usize,
    data: Vec<f32>,
}

impl FiveChannelInput {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_plane(&self, c: usize) -> ImagePlane<f32> {
        ImagePlane::new(self.size, self.size, 1, self.channel(c).to_vec()).expect("square plane")
    }

    pub fn background(&self) -> &[f32] {
        self.channel(3)
    }

    pub fn sdf(&self) -> &[f32] {
        self.channel(4)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::f32(vec![5, self.size, self.size], self.data.clone()).expect("shape matches")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let data = t
            .as_f32()
            .ok_or_else(|| Error::Format(format!("input tensor has dtype {:?}", t.dtype())))?;
        match t.dims() {
            &[5, h, w] if h == w && h > 0 => {}
            other => {
                return Err(Error::DimMismatch(format!(
                    "input tensor dims {other:?}, expected [5, n, n]"
                )))
            }
        }
        Self::from_planar(t.dims()[1], data.to_vec())
    }

    pub fn from_planar(size: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 5 * size * size {
            return Err(Error::DimMismatch(format!(
                "{} values for a 5x{size}x{size} input",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("input value {v} outside [0, 1]")));
        }
        Ok(FiveChannelInput { size, data })
    }
}

pub fn assemble_input(b: &CropBundle) -> FiveChannelInput {
    let size = b.mask_crop.width();
    let n = size * size;
    let mut data = Vec::with_capacity(5 * n);
    for c in 0..3 {
        data.extend(b.rgb_masked.data().iter().skip(c).step_by(3));
    }
    data.extend_from_slice(b.bg_crop.data());
    data.extend_from_slice(b.sdf_crop.data());
    FiveChannelInput { size, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalized_sdf;

    #[test]
    fn identity_resize() {
        let img = ImagePlane::from_fn(7, 5, 3, |x, y, c| (x * 3 + y * 5 + c) as f32 / 40.0);
        assert_eq!(resize_bilinear(&img, 7, 5), img);
    }

    #[test]
    fn two_by_two_to_one_averages() {
        let img = ImagePlane::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(resize_bilinear(&img, 1, 1).data(), &[0.5]);
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImagePlane::filled(13, 9, 1, 0.37f32);
        for (w, h) in [(256, 256), (3, 20), (1, 1)] {
            assert!(resize_bilinear(&img, w, h)
                .data()
                .iter()
                .all(|&v| v == 0.37));
        }
    }

    #[test]
    fn nearest_keeps_binary_and_identity() {
        let m = MaskGrid::from_fn(6, 4, |x, y| (x + y) % 2 == 0);
        assert_eq!(resize_nearest(&m, 6, 4), m);
        let up = resize_nearest(&m, 12, 8);
        assert_eq!(up.get(0, 0), m.get(0, 0));
        assert_eq!(up.get(3, 0), m.get(1, 0));
    }

    fn frame(
        w: usize,
        h: usize,
        mask: &MaskGrid,
    ) -> (ImagePlane<f32>, ImagePlane<f32>, NormalizedSdf) {
        let rgb = ImagePlane::from_fn(w, h, 3, |x, y, c| ((x + 2 * y + c) % 17) as f32 / 16.0);
        let bg = ImagePlane::from_fn(w, h, 1, |x, y, _| ((x * y) % 11) as f32 / 10.0);
        (rgb, bg, normalized_sdf(mask))
    }

    #[test]
    fn full_mask_no_pad_is_whole_frame() {
        let mask = MaskGrid::from_fn(20, 12, |_, _| true);
        let (rgb, bg, sdf) = frame(20, 12, &mask);
        let b = build_crop_bundle(&rgb, &mask, &bg, &sdf, 0.0).unwrap();
        assert_eq!(b.bbox, BBox::new(0, 0, 20, 12));
        assert_eq!(b.rgb_masked, resize_bilinear(&rgb, 256, 256));
        assert_eq!(b.bg_crop, resize_bilinear(&bg, 256, 256));
    }

    #[test]
    fn padded_region_matches_pad_bbox() {
        let mask = MaskGrid::from_fn(100, 100, |x, y| {
            (10..20).contains(&x) && (10..30).contains(&y)
        });
        let (rgb, bg, sdf) = frame(100, 100, &mask);
        let b = build_crop_bundle(&rgb, &mask, &bg, &sdf, 0.1).unwrap();
        assert_eq!(b.bbox, BBox::new(9, 8, 21, 32));
        for (px, &m) in b.rgb_masked.data().chunks_exact(3).zip(b.mask_crop.bits()) {
            if !m {
                assert_eq!(px, &[0.0, 0.0, 0.0]);
            }
        }
        assert!(b.sdf_crop.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(b.mask_crop.dims(), (256, 256));
    }

    #[test]
    fn bundle_errors() {
        let mask = MaskGrid::empty(8, 8);
        let (rgb, bg, sdf) = frame(8, 8, &mask);
        assert!(matches!(
            build_crop_bundle(&rgb, &mask, &bg, &sdf, 0.1),
            Err(Error::EmptyMask)
        ));
        let mask = MaskGrid::from_fn(8, 8, |x, _| x == 3);
        let (rgb, _, sdf) = frame(8, 8, &mask);
        let small_bg = ImagePlane::filled(4, 4, 1, 0.0);
        assert!(matches!(
            build_crop_bundle(&rgb, &mask, &small_bg, &sdf, 0.1),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn assembly_layout() {
        let mask = MaskGrid::from_fn(30, 30, |x, y| (5..25).contains(&x) && (8..20).contains(&y));
        let rgb = ImagePlane::from_fn(30, 30, 3, |_, _, c| [0.1, 0.2, 0.3][c]);
        let bg = ImagePlane::filled(30, 30, 1, 0.5f32);
        let zero_sdf = normalized_sdf(&MaskGrid::empty(30, 30));
        let b = build_crop_bundle(&rgb, &mask, &bg, &zero_sdf, 0.1).unwrap();
        let input = assemble_input(&b);
        assert!(input.background().iter().all(|&v| v == 0.5));
        assert!(input.sdf().iter().all(|&v| v == 0.0));
        for (i, &m) in b.mask_crop.bits().iter().enumerate() {
            let g = input.channel(1)[i];
            if m {
                assert!(g > 0.0 && g <= 0.2 + 1e-6);
            } else {
                assert_eq!(g, 0.0);
            }
        }
        let t = input.to_tensor();
        let back = FiveChannelInput::from_tensor(
            &crate::model::Tensor::from_bytes(&t.to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, input);
        assert_eq!(back.to_tensor().to_bytes(), t.to_bytes());
    }
}
