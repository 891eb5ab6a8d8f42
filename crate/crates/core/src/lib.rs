//! Day-ahead co-simulation of EV aggregators offering balancing energy under
//! TSO-DSO coordination.

pub mod aggregator;
pub mod coordination;
pub mod dso;
pub mod error;
pub mod io;
pub(crate) mod linalg;
pub mod model;
pub mod solver;
pub mod synthetic;
pub mod tso;

pub use error::{Error, Result};
