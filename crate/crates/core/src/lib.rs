pub mod com;
pub mod config;
pub mod corpus;
pub mod dynamics;
pub mod emergence;
pub mod error;
pub mod layout;
pub mod linkage;
pub mod matcher;
pub mod pipeline;
pub mod stats;
pub mod taxonomy;

pub use error::{Error, Result};
