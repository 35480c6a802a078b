pub mod error;
pub mod discrete_operator;
pub mod geometry;
pub mod kernel;
pub mod oracle;
pub mod presets;
pub mod resolvent;
pub mod semigroup;
pub mod specfun;

pub use error::{Error, Result};
