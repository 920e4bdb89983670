//! Frame embeddings for background retrieval.

use serde_json::json;

use crate::error::Result;
use crate::model::{ImagePlane, ModalityMeta, Tensor, TensorData};
use crate::retrieval::histogram_embedding;
use crate::translation::SidecarPool;

pub const HISTOGRAM_BINS: usize = 32;

pub enum Embedder {
    /// Luminance histogram; deterministic and dependency-free.
    Histogram { bins: usize },
    /// `embed` op of a sidecar process pool.
    Sidecar(SidecarPool),
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::Histogram {
            bins: HISTOGRAM_BINS,
        }
    }
}

fn chw<T: crate::model::Sample>(img: &ImagePlane<T>) -> Vec<T> {
    let c = img.channels();
    (0..c)
        .flat_map(|ch| img.data().iter().skip(ch).step_by(c).copied())
        .collect()
}

impl Embedder {
    pub fn embed_rgb(&self, img: &ImagePlane<u8>) -> Result<Vec<f32>> {
        match self {
            Embedder::Histogram { bins } => Ok(histogram_embedding(&img.to_unit_f32(), *bins)),
            Embedder::Sidecar(pool) => {
                let t = Tensor::new(
                    vec![img.channels(), img.height(), img.width()],
                    TensorData::U8(chw(img)),
                )?;
                pool.with_client(|c| c.vector("embed", &t, json!({"modality": "rgb"})))
            }
        }
    }

    pub fn embed_gray16(&self, img: &ImagePlane<u16>, meta: &ModalityMeta) -> Result<Vec<f32>> {
        match self {
            Embedder::Histogram { bins } => Ok(histogram_embedding(
                &crate::model::normalize(img, meta)?,
                *bins,
            )),
            Embedder::Sidecar(pool) => {
                let t = Tensor::new(
                    vec![1, img.height(), img.width()],
                    TensorData::U16(img.data().to_vec()),
                )?;
                let modality = meta.modality.as_str();
                pool.with_client(|c| c.vector("embed", &t, json!({"modality": modality})))
            }
        }
    }
}
