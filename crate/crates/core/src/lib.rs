pub mod agm;
pub mod error;
pub mod harness;
pub mod ode;
pub mod oracle;
pub mod params;
pub mod pgm;
pub mod trace;

pub use error::{Error, Result};
