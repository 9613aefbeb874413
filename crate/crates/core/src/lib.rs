pub mod clustering;
pub mod copula;
pub mod density;
pub mod error;
pub mod ingest;
pub mod model;
pub mod numeric;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod synthetic;
pub mod validate;

pub use error::{Error, ErrorClass, Result};
