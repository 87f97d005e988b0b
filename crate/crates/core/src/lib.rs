pub mod error;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
pub mod checkpoint;
pub mod evaluation;
pub mod imaging;
pub mod inpainting;
pub mod masks;
pub mod models;
pub mod raster;
pub mod semantic_map;
pub mod toy_corpus;
pub mod training;
