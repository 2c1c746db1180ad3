//! RMAFF-PSN: residual multi-scale attention feature fusion photometric
//! stereo network. Per-image shallow-deep feature extraction conditioned on
//! the light direction, order-agnostic max-pool fusion across lights, and a
//! dense-block normal regressor with L2-normalized outputs, plus the
//! ablation variants (no_rmaff, single_rmaff, no_attention).

mod config;
mod error;
mod module;
mod network;

pub use config::{Downsample, NetworkConfig, Precision, RmaffPlacement, Variant};
pub use error::{NetError, NetResult};
pub use module::{AsyConv, ChannelAttention, ConvBn, RmaffModule, SpatialAttention};
pub use network::{
    assemble_inputs, fuse_maxpool, network_forward, Extractor, Regressor, RmaffPsn,
};
