pub mod dataset;
pub mod error;
pub mod latent;
pub mod model;
pub mod raster;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use raster::Image;
pub use rng::Rng;
pub use tensor::{Real, Tensor};
