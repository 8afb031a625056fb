// SPDX-License-Identifier: Apache-2.0

//! Deterministic AS-level BGP route-leak simulation with Peerlock and
//! Peerlock-lite filtering.

pub mod campaign;
pub mod encoding;
pub mod engine;
pub mod error;
pub mod filters;
pub mod inference;
pub mod report;
pub mod synth;
pub mod topology;
pub mod types;

pub use error::{Error, Result};
pub use types::{Asn, PrefixId};
