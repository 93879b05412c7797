//! Policy/value network: record vectorizer, CLS token, stacked post-norm
//! transformer encoders, a per-record actor head and a critic head.

mod layers;
mod policy;

pub use layers::{gaussian_param, Ctx, EncoderBlock, LayerNorm, Linear, SelfAttention, LAYER_NORM_EPS};
pub use policy::{CriticMode, EncoderConfig, NetOutput, PolicyValueNet};

#[cfg(test)]
mod tests;
