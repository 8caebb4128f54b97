pub mod circuit;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod liouville;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod sparse;

pub use error::{Error, Result};
