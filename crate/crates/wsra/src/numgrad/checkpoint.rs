//! Parameter checkpoint files: a plain-text manifest naming each tensor's
//! shape and byte offset into one raw little-endian f64 blob.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Result, WsraError};

const HEADER: &str = "wsra-checkpoint v1";

#[derive(Debug, Clone)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct CheckpointFile {
    /// Ordered key/value metadata lines.
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<TensorRecord>,
}

impl CheckpointFile {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta_value(key)
            .ok_or_else(|| WsraError::Checkpoint(format!("missing meta key '{}'", key)))
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorRecord> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| WsraError::Checkpoint(format!("missing tensor '{}'", name)))
    }

    pub fn push_tensor(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) {
        self.tensors.push(TensorRecord { name: name.to_string(), shape, values });
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    let mut os = manifest_path.as_os_str().to_owned();
    os.push(".blob");
    PathBuf::from(os)
}

pub fn save(manifest_path: &Path, ckpt: &CheckpointFile) -> Result<()> {
    let blob = blob_path(manifest_path);
    let blob_name = blob
        .file_name()
        .ok_or_else(|| WsraError::Checkpoint("checkpoint path has no file name".into()))?
        .to_string_lossy()
        .into_owned();

    let mut text = String::new();
    text.push_str(HEADER);
    text.push('\n');
    text.push_str(&format!("blob={}\n", blob_name));
    for (k, v) in &ckpt.meta {
        text.push_str(&format!("meta {}={}\n", k, v));
    }

    let mut bytes: Vec<u8> = Vec::new();
    for t in &ckpt.tensors {
        let shape_str: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
        text.push_str(&format!(
            "tensor name={} shape={} offset={}\n",
            t.name,
            shape_str.join(","),
            bytes.len()
        ));
        for v in &t.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut mf = fs::File::create(manifest_path)?;
    mf.write_all(text.as_bytes())?;
    let mut bf = fs::File::create(&blob)?;
    bf.write_all(&bytes)?;
    Ok(())
}

pub fn load(manifest_path: &Path) -> Result<CheckpointFile> {
    let text = fs::read_to_string(manifest_path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        other => {
            return Err(WsraError::Checkpoint(format!(
                "{}: bad header {:?}",
                manifest_path.display(),
                other
            )))
        }
    }

    let mut ckpt = CheckpointFile::default();
    let mut blob_name: Option<String> = None;
    struct Pending {
        name: String,
        shape: Vec<usize>,
        offset: usize,
    }
    let mut pending: Vec<Pending> = Vec::new();

    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("blob=") {
            blob_name = Some(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| WsraError::Checkpoint(format!("bad meta line: {}", line)))?;
            ckpt.meta.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let mut name = None;
            let mut shape = None;
            let mut offset = None;
            for tok in rest.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| WsraError::Checkpoint(format!("bad tensor line: {}", line)))?;
                match k {
                    "name" => name = Some(v.to_string()),
                    "shape" => {
                        let dims: std::result::Result<Vec<usize>, _> =
                            v.split(',').map(|d| d.parse::<usize>()).collect();
                        shape = Some(dims.map_err(|e| {
                            WsraError::Checkpoint(format!("bad shape in '{}': {}", line, e))
                        })?);
                    }
                    "offset" => {
                        offset = Some(v.parse::<usize>().map_err(|e| {
                            WsraError::Checkpoint(format!("bad offset in '{}': {}", line, e))
                        })?);
                    }
                    _ => return Err(WsraError::Checkpoint(format!("unknown field '{}' in '{}'", k, line))),
                }
            }
            match (name, shape, offset) {
                (Some(name), Some(shape), Some(offset)) => pending.push(Pending { name, shape, offset }),
                _ => return Err(WsraError::Checkpoint(format!("incomplete tensor line: {}", line))),
            }
        } else {
            return Err(WsraError::Checkpoint(format!("unrecognized line: {}", line)));
        }
    }

    let blob_name =
        blob_name.ok_or_else(|| WsraError::Checkpoint("manifest missing blob= line".into()))?;
    let blob_file = manifest_path
        .parent()
        .map(|p| p.join(&blob_name))
        .unwrap_or_else(|| PathBuf::from(&blob_name));
    let bytes = fs::read(&blob_file)?;

    for p in pending {
        let numel: usize = p.shape.iter().product();
        let end = p.offset + numel * 8;
        if end > bytes.len() {
            return Err(WsraError::Checkpoint(format!(
                "tensor '{}' needs bytes {}..{} but blob has {}",
                p.name,
                p.offset,
                end,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[p.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ckpt.tensors.push(TensorRecord { name: p.name, shape: p.shape, values });
    }
    Ok(ckpt)
}
