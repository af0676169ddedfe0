//! Classical sinogram-completion baselines.

pub mod li;
pub mod nmar;

pub use li::{li_complete, li_complete_report, LiReport};
pub use nmar::{nmar_complete, nmar_with_prior, segment_prior, NmarReport, SegmentationThresholds};
