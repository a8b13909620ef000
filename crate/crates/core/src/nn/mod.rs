//! Float reference layers (forward and backward) for the network.

pub mod layers;
pub mod ops;

pub use layers::{
    batchnorm_forward, AvgPool, BatchNorm, ChannelMix, DepthwiseTemporal, FakeQuant, Layer, Linear, Mode, Param, Relu,
    BN_EPSILON, BN_MOMENTUM,
};
pub use ops::{
    avg_pool, fully_connected, pointwise_conv_forward, relu, softmax_cross_entropy, spatial_conv_forward,
    temporal_depthwise_forward,
};
