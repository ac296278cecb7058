pub mod embed;
pub mod error;
pub mod flight;
pub mod geom;
pub mod oracle;
pub mod gp;
pub mod plan;
pub mod refine;
pub mod retrieve;
pub mod scan;
pub mod traj;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
