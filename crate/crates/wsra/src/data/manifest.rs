//! Dataset manifest format: a line-oriented text file plus raw
//! little-endian f64 blob files, all paths relative to the manifest.
//!
//! ```text
//! wsra-manifest v1
//! d_visual=32
//! d_text=16
//! video id=v0000 snippets=8 snippet_duration=1.0 blob=train.features.bin offset=0
//! query id=q0000 video=v0000 blob=train.queries.bin offset=0 span=2.0:4.0
//! ```
//!
//! The `span=` field is optional and only present on evaluation manifests.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Result, WsraError};
use crate::grounding::{SpanMode, TemporalSpan};

use super::{DatasetManifest, FeatureMatrix, QueryRecord, VideoRecord};

const HEADER: &str = "wsra-manifest v1";

fn parse_fields(line: &str) -> Result<HashMap<&str, &str>> {
    let mut map = HashMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| WsraError::Manifest(format!("bad token '{}' in line '{}'", tok, line)))?;
        map.insert(k, v);
    }
    Ok(map)
}

fn field<'a>(map: &HashMap<&str, &'a str>, key: &str, line: &str) -> Result<&'a str> {
    map.get(key)
        .copied()
        .ok_or_else(|| WsraError::Manifest(format!("missing '{}' in line '{}'", key, line)))
}

struct BlobCache {
    base: PathBuf,
    files: HashMap<String, Vec<u8>>,
}

impl BlobCache {
    fn read(&mut self, rel: &str, offset: usize, count: usize, owner: &str) -> Result<Vec<f64>> {
        if !self.files.contains_key(rel) {
            let full = self.base.join(rel);
            let bytes = fs::read(&full).map_err(|e| {
                WsraError::Manifest(format!("blob '{}' for '{}': {}", full.display(), owner, e))
            })?;
            self.files.insert(rel.to_string(), bytes);
        }
        let bytes = &self.files[rel];
        let end = offset + count * 8;
        if end > bytes.len() {
            return Err(WsraError::Manifest(format!(
                "blob '{}' too short for '{}': need bytes {}..{}, have {}",
                rel,
                owner,
                offset,
                end,
                bytes.len()
            )));
        }
        Ok(bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| WsraError::Manifest(format!("{}: {}", path.display(), e)))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => return Err(WsraError::Manifest(format!("{}: bad header {:?}", path.display(), other))),
    }

    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut blobs = BlobCache { base, files: HashMap::new() };
    let mut d_visual: Option<usize> = None;
    let mut d_text: Option<usize> = None;
    let mut videos: Vec<VideoRecord> = Vec::new();
    let mut queries: Vec<QueryRecord> = Vec::new();

    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("d_visual=") {
            d_visual = Some(v.parse().map_err(|e| WsraError::Manifest(format!("d_visual: {}", e)))?);
        } else if let Some(v) = line.strip_prefix("d_text=") {
            d_text = Some(v.parse().map_err(|e| WsraError::Manifest(format!("d_text: {}", e)))?);
        } else if let Some(rest) = line.strip_prefix("video ") {
            let dv = d_visual.ok_or_else(|| WsraError::Manifest("d_visual must precede video lines".into()))?;
            let f = parse_fields(rest)?;
            let id = field(&f, "id", line)?.to_string();
            let snippets: usize = field(&f, "snippets", line)?
                .parse()
                .map_err(|e| WsraError::Manifest(format!("video '{}': bad snippets: {}", id, e)))?;
            let dur: f64 = field(&f, "snippet_duration", line)?
                .parse()
                .map_err(|e| WsraError::Manifest(format!("video '{}': bad snippet_duration: {}", id, e)))?;
            let blob = field(&f, "blob", line)?;
            let offset: usize = field(&f, "offset", line)?
                .parse()
                .map_err(|e| WsraError::Manifest(format!("video '{}': bad offset: {}", id, e)))?;
            let values = blobs.read(blob, offset, snippets * dv, &format!("video {}", id))?;
            videos.push(VideoRecord {
                id,
                snippet_duration: dur,
                features: FeatureMatrix::new(snippets, dv, values)?,
            });
        } else if let Some(rest) = line.strip_prefix("query ") {
            let dt = d_text.ok_or_else(|| WsraError::Manifest("d_text must precede query lines".into()))?;
            let f = parse_fields(rest)?;
            let id = field(&f, "id", line)?.to_string();
            let video_id = field(&f, "video", line)?.to_string();
            let blob = field(&f, "blob", line)?;
            let offset: usize = field(&f, "offset", line)?
                .parse()
                .map_err(|e| WsraError::Manifest(format!("query '{}': bad offset: {}", id, e)))?;
            let embedding = blobs.read(blob, offset, dt, &format!("query {}", id))?;
            let span = match f.get("span") {
                Some(s) => {
                    let (a, b) = s
                        .split_once(':')
                        .ok_or_else(|| WsraError::Manifest(format!("query '{}': bad span '{}'", id, s)))?;
                    let start: f64 = a
                        .parse()
                        .map_err(|e| WsraError::Manifest(format!("query '{}': bad span start: {}", id, e)))?;
                    let end: f64 = b
                        .parse()
                        .map_err(|e| WsraError::Manifest(format!("query '{}': bad span end: {}", id, e)))?;
                    Some(TemporalSpan::new(start, end, SpanMode::Time)?)
                }
                None => None,
            };
            queries.push(QueryRecord { id, video_id, embedding, span });
        } else {
            return Err(WsraError::Manifest(format!("{}: unrecognized line '{}'", path.display(), line)));
        }
    }

    let manifest = DatasetManifest {
        d_visual: d_visual.ok_or_else(|| WsraError::Manifest("missing d_visual".into()))?,
        d_text: d_text.ok_or_else(|| WsraError::Manifest("missing d_text".into()))?,
        videos,
        queries,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Write a manifest plus its blobs under `dir`, using `base` as the file stem.
/// Produces `<base>.manifest`, `<base>.features.bin`, `<base>.queries.bin`.
pub fn write_manifest(manifest: &DatasetManifest, dir: &Path, base: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let feat_name = format!("{}.features.bin", base);
    let query_name = format!("{}.queries.bin", base);

    let mut text = String::new();
    text.push_str(HEADER);
    text.push('\n');
    text.push_str(&format!("d_visual={}\n", manifest.d_visual));
    text.push_str(&format!("d_text={}\n", manifest.d_text));

    let mut feat_bytes: Vec<u8> = Vec::new();
    for v in &manifest.videos {
        text.push_str(&format!(
            "video id={} snippets={} snippet_duration={} blob={} offset={}\n",
            v.id,
            v.features.num_snippets(),
            v.snippet_duration,
            feat_name,
            feat_bytes.len()
        ));
        for x in v.features.values() {
            feat_bytes.extend_from_slice(&x.to_le_bytes());
        }
    }

    let mut query_bytes: Vec<u8> = Vec::new();
    for q in &manifest.queries {
        let span_field = match &q.span {
            Some(s) => format!(" span={}:{}", s.start, s.end),
            None => String::new(),
        };
        text.push_str(&format!(
            "query id={} video={} blob={} offset={}{}\n",
            q.id,
            q.video_id,
            query_name,
            query_bytes.len(),
            span_field
        ));
        for x in &q.embedding {
            query_bytes.extend_from_slice(&x.to_le_bytes());
        }
    }

    let manifest_path = dir.join(format!("{}.manifest", base));
    fs::File::create(&manifest_path)?.write_all(text.as_bytes())?;
    fs::File::create(dir.join(&feat_name))?.write_all(&feat_bytes)?;
    fs::File::create(dir.join(&query_name))?.write_all(&query_bytes)?;
    Ok(manifest_path)
}
