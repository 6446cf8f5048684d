//! Self-describing output files: every JSON carries a `provenance` block,
//! every CSV the same facts as leading `#` comments.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use kesten_core::error::{Error, Result};

pub const TOOL: &str = "kesten";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<InputRef>,
}

impl Provenance {
    pub fn new(seed: u64, config_sha256: String) -> Self {
        Provenance {
            tool: TOOL,
            version: VERSION,
            seed,
            config_sha256,
            inputs: Vec::new(),
        }
    }

    pub fn with_inputs(&self, inputs: Vec<InputRef>) -> Self {
        Provenance { inputs, ..self.clone() }
    }

    pub fn comments(&self) -> Vec<String> {
        let mut out = vec![
            format!("{} {}", self.tool, self.version),
            format!("seed {}", self.seed),
            format!("config_sha256 {}", self.config_sha256),
        ];
        for i in &self.inputs {
            out.push(format!("input {} sha256 {}", i.file, i.sha256));
        }
        out
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The output directory, remembering what has been written to it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<InputRef>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        let probe = root.join(".kesten-write-probe");
        fs::write(&probe, b"")?;
        fs::remove_file(&probe)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[InputRef] {
        &self.written
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<InputRef> {
        fs::write(self.path(name), &bytes)?;
        let r = InputRef {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
        };
        self.written.retain(|w| w.file != name);
        self.written.push(r.clone());
        Ok(r)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, body: &T) -> Result<InputRef> {
        let mut bytes = serde_json::to_vec_pretty(&Envelope { provenance: prov, body })
            .map_err(|e| Error::Numerical(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.put(name, bytes)
    }

    pub fn csv<F>(&mut self, name: &str, prov: &Provenance, write: F) -> Result<InputRef>
    where
        F: FnOnce(&mut Vec<u8>, &[String]) -> Result<()>,
    {
        let mut bytes = Vec::new();
        write(&mut bytes, &prov.comments())?;
        self.put(name, bytes)
    }

    /// Hash of an existing file, for files produced by an earlier run.
    pub fn existing(&self, name: &str) -> Option<InputRef> {
        let bytes = fs::read(self.path(name)).ok()?;
        Some(InputRef {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}
