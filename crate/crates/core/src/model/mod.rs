//! Domain types, raster containers and the on-disk formats shared by every
//! pipeline stage.

mod image;
mod manifest;
mod tensor;

pub use self::image::{
    load_gray16, load_image, load_mask8, load_rgb8, save_gray16, save_mask8, save_rgb8, Expected,
    ImagePlane, Loaded, MaskGrid, Sample,
};
pub use self::manifest::{
    denormalize, load_manifest, normalize, save_manifest, DatasetManifest, Encoding, Modality,
    ModalityMeta, SampleEntry, Split, MANIFEST_VERSION,
};
pub use self::tensor::{read_tensor, write_tensor, Dtype, Tensor, TensorData, TMF_MAGIC};
