//! Per-subcarrier MIMO channels: clustered multipath synthesis, blockage
//! attenuation and the channel-trace file format.

pub mod model;
mod set;
mod synth;
pub mod trace;

pub use model::{generate_channel_set, ChannelDims, ChannelModelConfig, ObjectPlacement};
pub use set::{EchoAttenuation, LinkState, Object, ObjectChannels, SubcarrierChannelSet};
pub use trace::{load_channel_trace, save_channel_trace};
pub use synth::{
    apply_blockage, blockage_amplitude, steering_vector, subcarrier_frequencies, synthesize_channel,
    ArrayGeometry, LinkSpec, PathParams,
};
