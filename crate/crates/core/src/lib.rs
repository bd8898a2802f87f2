pub mod config;
pub mod ctl;
pub mod datahub;
pub mod engine;
pub mod error;
pub mod kinrep;
pub mod model;
pub mod util;

pub use config::HdysConfig;
pub use error::{HdysError, Result};
pub use model::Model;
