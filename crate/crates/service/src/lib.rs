//! HTTP mission service: a registry of running missions persisted as
//! append-only event logs, served over JSON.

pub mod api;
pub mod app;
pub mod error;
pub mod store;

pub use api::{bind_and_serve, router, serve};
pub use app::{ManualClock, Service, ServiceClock};
pub use error::{ApiError, ErrorKind};
pub use store::Store;
