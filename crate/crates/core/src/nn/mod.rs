//! Minimal feed-forward neural core: a two-hidden-layer ReLU MLP with
//! inverted dropout, reverse-mode gradients, Adam, and an experience replay
//! ring buffer. No autograd generality; exactly what the agents need.

mod adam;
mod mlp;
mod replay;

pub use adam::{adam_step, global_norm_clip, AdamState};
pub use mlp::{Cache, Grads, Mlp};
pub use replay::{ReplayBuffer, Transition};
