//! Small synthetic trimodal dataset for demos and tests: RGB frames with an
//! elliptical "person", matching masks, and empty-scene depth/thermal
//! backgrounds. Fully deterministic.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{
    save_gray16, save_manifest, save_mask8, save_rgb8, DatasetManifest, ImagePlane, MaskGrid,
    Modality, ModalityMeta, SampleEntry, Split,
};

#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub manifest: PathBuf,
    /// Holds `depth/*.png` and `thermal/*.png` backgrounds.
    pub bg_dir: PathBuf,
}

pub const WIDTH: usize = 64;
pub const HEIGHT: usize = 48;
pub const BACKGROUNDS: usize = 3;

pub fn depth_meta() -> ModalityMeta {
    ModalityMeta::new(Modality::Depth, "millimeter", 0.0, 10000.0).expect("valid range")
}

pub fn thermal_meta() -> ModalityMeta {
    ModalityMeta::new(Modality::Thermal, "centikelvin", 27000.0, 31000.0).expect("valid range")
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

/// Person mask of sample `i`: an ellipse that drifts across the frame.
pub fn person_mask(i: usize) -> MaskGrid {
    let cx = 14.0 + (i * 7 % 36) as f64;
    let cy = 20.0 + (i * 5 % 12) as f64;
    let (rx, ry) = (6.0 + (i % 3) as f64, 12.0 + (i % 4) as f64);
    MaskGrid::from_fn(WIDTH, HEIGHT, |x, y| {
        let dx = (x as f64 - cx) / rx;
        let dy = (y as f64 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    })
}

fn rgb_frame(i: usize, mask: &MaskGrid) -> ImagePlane<u8> {
    ImagePlane::from_fn(WIDTH, HEIGHT, 3, |x, y, c| {
        if mask.get(x, y) {
            [200, 120 + (i * 9 % 100), 80][c] as u8
        } else {
            ((x * 3 + y * 2 + c * 40 + i) % 256) as u8
        }
    })
}

fn background(k: usize, meta: &ModalityMeta) -> ImagePlane<u16> {
    let span = meta.norm_max - meta.norm_min;
    ImagePlane::from_fn(WIDTH, HEIGHT, 1, |x, y, _| {
        let t =
            0.2 + 0.5 * (y as f64 / HEIGHT as f64) + 0.1 * k as f64 + 0.05 * ((x / 8) % 2) as f64;
        (meta.norm_min + t * span).round() as u16
    })
}

/// Writes `samples` RGB+mask frames (`rgb/`, `mask/`), `BACKGROUNDS` frames
/// per modality (`bg/depth/`, `bg/thermal/`) and `manifest.json`.
pub fn write_fixture(dir: &Path, samples: usize) -> Result<FixturePaths> {
    for sub in ["rgb", "mask", "bg/depth", "bg/thermal"] {
        mkdir(&dir.join(sub))?;
    }
    let mut manifest = DatasetManifest::default();
    for i in 0..samples {
        let id = format!("s{i:03}");
        let mask = person_mask(i);
        save_rgb8(&rgb_frame(i, &mask), dir.join(format!("rgb/{id}.png")))?;
        save_mask8(&mask, dir.join(format!("mask/{id}.png")))?;
        let mut s = SampleEntry::new(id.clone(), format!("rgb/{id}.png"));
        s.mask = Some(format!("mask/{id}.png").into());
        s.action_label = Some(["walk", "sit", "stand"][i % 3].to_string());
        s.split = Some(if i % 5 == 4 {
            Split::Test
        } else {
            Split::Train
        });
        manifest.samples.push(s);
    }
    for meta in [depth_meta(), thermal_meta()] {
        for k in 0..BACKGROUNDS {
            save_gray16(
                &background(k, &meta),
                dir.join(format!("bg/{}/bg{k}.png", meta.modality)),
            )?;
        }
        manifest.modality_meta.insert(meta.modality, meta);
    }
    let path = dir.join("manifest.json");
    save_manifest(&manifest, &path)?;
    Ok(FixturePaths {
        root: dir.to_path_buf(),
        manifest: path,
        bg_dir: dir.join("bg"),
    })
}
