//! Session state, guidance, chart data, persistence and the HTTP API.

pub mod charts;
pub mod error;
pub mod guidance;
pub mod http;
pub mod llm_client;
pub mod session;
pub mod store;
pub mod views;

pub use error::{ErrorBody, Result, ServiceError};
pub use session::{Session, SessionSettings};
