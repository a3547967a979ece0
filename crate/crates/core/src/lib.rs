//! Multispectral aerial image fusion.
//!
//! A basis image `B` is enriched with salient detail from feature channels
//! `F_n`: each channel is split into smooth and high-detail layers by a
//! quadratic gradient filter, a shallow VGG-19 pass scores where the
//! channel is salient, and the weighted detail masks the channel before it
//! is added to `B`. Integral images for the feature channels come from
//! [`aos`], and [`metrics`] scores the result.

pub mod aos;
pub mod cnn;
pub mod colormap;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod image;
pub mod io;
pub mod metrics;
pub mod par;

pub use colormap::Colormap;
pub use error::{Error, ErrorKind, Result};
pub use fusion::{fuse, fuse_detailed, Ablation, Channel, FusionConfig, FusionJob, FusionOutput};
pub use image::{Acquisition, ChannelDescriptor, Modality, PlanarImage, Role};
