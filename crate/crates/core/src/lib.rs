pub mod closed_test;
pub mod correlation;
pub mod crossing;
pub mod design;
pub mod error;
pub mod graph;
pub mod gs_single;
pub mod mvn;
pub mod normal;
pub mod roots;
pub mod sim;
pub mod spending;

pub use error::{Error, Result};
