//! Output files: JSON (`{"meta": ..., "data": ...}`) for single-result
//! runs, CSV with `# key: value` header comments for tabular sweeps. The
//! meta section carries the wall clock; the data section is a pure
//! function of config + seed.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub artifact_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub timestamp_utc: String,
}

impl Meta {
    pub fn new(command: &str, config_bytes: &[u8], seed: u64, threads: usize) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_bytes);
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: format!("{:x}", hasher.finalize()),
            seed,
            threads,
            timestamp_utc: chrono::Utc::now().to_rfc3339(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    data: &'a T,
}

pub fn write_json<T: Serialize>(
    out_dir: &Path,
    name: &str,
    meta: &Meta,
    data: &T,
) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{name}.json"));
    let body = serde_json::to_string_pretty(&Envelope { meta, data })?;
    std::fs::write(&path, body + "\n")?;
    Ok(path)
}

pub fn write_csv(
    out_dir: &Path,
    name: &str,
    meta: &Meta,
    header: &str,
    rows: &[String],
) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{name}.csv"));
    let mut body = String::new();
    body.push_str(&format!("# artifact_version: {}\n", meta.artifact_version));
    body.push_str(&format!("# command: {}\n", meta.command));
    body.push_str(&format!("# config_hash: {}\n", meta.config_hash));
    body.push_str(&format!("# seed: {}\n", meta.seed));
    body.push_str(&format!("# threads: {}\n", meta.threads));
    body.push_str(&format!("# timestamp_utc: {}\n", meta.timestamp_utc));
    body.push_str(header);
    body.push('\n');
    for row in rows {
        body.push_str(row);
        body.push('\n');
    }
    std::fs::write(&path, body)?;
    Ok(path)
}
