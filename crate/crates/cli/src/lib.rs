//! Library surface of the CLI crate: configuration loading and the HTTP
//! gateway, shared between the binary and its integration tests.

pub mod config;
pub mod gateway;
