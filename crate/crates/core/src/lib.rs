//! Curvilinear-structure enhancement with oriented derivative-of-stick
//! filters, four-channel input construction for segmentation networks,
//! seeded patch datasets and segmentation metrics.

pub mod channels;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod image;
pub mod metrics;
pub mod par;
pub mod stick;
pub mod vector;

pub use error::{Error, Result};
pub use par::Execution;
