// SPDX-License-Identifier: Apache-2.0

//! Run configuration digest. Everything that can change an output byte goes
//! in; thread count and output location stay out.

use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Default)]
pub struct ConfigDigest {
    hasher: Sha256,
}

impl ConfigDigest {
    pub fn new(command: &str) -> Self {
        let mut d = ConfigDigest::default();
        d.field("tool", env!("CARGO_PKG_VERSION"));
        d.field("command", command);
        d
    }

    pub fn field(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let entry = format!("{key}={value}\n");
        self.hasher.update(entry.as_bytes());
        self
    }

    /// Hashes a file's bytes, not its path.
    pub fn file(&mut self, key: &str, bytes: &[u8]) -> &mut Self {
        let digest = hex::encode(Sha256::digest(bytes));
        self.field(key, digest)
    }

    pub fn finish(&self) -> String {
        hex::encode(self.hasher.clone().finalize())[..16].to_string()
    }
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}
