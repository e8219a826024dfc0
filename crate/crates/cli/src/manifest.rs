//! Run manifests: the resolved configuration of a command, written beside
//! its output so a deterministic run can be reproduced bit for bit.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

/// Ordered `key: value` lines; insertion order is the file order.
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest { lines: Vec::new() };
        m.set("command", command);
        m.set("tool_version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Records a path plus the SHA-256 of its current contents.
    pub fn input(&mut self, key: &str, path: &Path) -> io::Result<()> {
        self.set(key, path.display());
        let bytes = fs::read(path)?;
        self.set(&format!("{key}_sha256"), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.lines {
            out.push_str(key);
            out.push_str(": ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }

    /// Writes `<output>.manifest` next to the output file.
    pub fn write_beside(&self, output: &Path) -> io::Result<()> {
        let mut path = output.as_os_str().to_os_string();
        path.push(".manifest");
        fs::write(path, self.render())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
