//! Private shortest-path discovery for payment-channel graphs.
//!
//! A preprocessing pipeline turns a channel graph into a compact per-node hub
//! database ([`hubs`], [`hubdb`]). Two non-colluding servers host identical
//! copies and answer XOR queries ([`pir`], [`transport`]), so a client can
//! fetch the two records it needs and rebuild the exact shortest route without
//! either server learning the endpoints.

pub mod apsp;
pub mod cli;
pub mod graph;
pub mod hubdb;
pub mod hubs;
pub mod pir;
pub mod transport;
