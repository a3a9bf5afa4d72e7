pub mod bits;
pub mod channel;
pub mod cli;
pub mod codec;
pub mod config;
pub mod ecc;
pub mod error;
pub mod image;
pub mod key;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod security;
pub mod stats;
pub mod sweep;
pub mod text;
pub mod vq;

pub use error::{Error, Result};
