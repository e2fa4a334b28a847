//! Versioned JSON reports: `{"format_version", "kind", "data"}`.

use std::path::Path;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::FORMAT_VERSION;

#[derive(Debug, Serialize, Deserialize)]
pub struct Report<D> {
    pub format_version: u32,
    pub kind: String,
    pub data: D,
}

pub fn to_json<S: Serialize>(kind: &str, data: &S) -> String {
    let r = Report { format_version: FORMAT_VERSION, kind: kind.to_string(), data };
    let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report<S: Serialize>(path: &Path, kind: &str, data: &S) -> anyhow::Result<()> {
    std::fs::write(path, to_json(kind, data)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_report<D: DeserializeOwned>(path: &Path, kind: &str) -> anyhow::Result<D> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let r: Report<D> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if r.kind != kind {
        bail!("{}: expected a {kind:?} report, found {:?}", path.display(), r.kind);
    }
    if r.format_version != FORMAT_VERSION {
        bail!("{}: unsupported format_version {}", path.display(), r.format_version);
    }
    Ok(r.data)
}
