//! Binary masks: blob generation, the bundled metal-silhouette library,
//! placement, and the pooling pyramid.

pub mod blob;
pub mod library;
mod mask;
pub mod pyramid;

pub use blob::{gen_blob_mask, BlobParams};
pub use library::{builtin_library, load_library, place_metal_mask, write_library, Placed};
pub use mask::{Mask, MaskDomain};
pub use pyramid::{mask_pyramid, PyramidSpec};
