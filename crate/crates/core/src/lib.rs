pub mod error;
pub mod fourier;
pub mod graph;
pub mod ldg;
pub mod linalg;
pub mod lti;
pub mod models;
pub mod pipeline;
pub mod spectra;
pub mod wiener;

pub use error::{Error, Result};
