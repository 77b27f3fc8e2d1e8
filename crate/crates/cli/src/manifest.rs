use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Record of one CLI run. Nothing in it depends on the worker count or the
/// wall clock, so equal manifests mean equal outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub version: String,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else if p.strip_prefix(root).map(|r| r != Path::new(MANIFEST)).unwrap_or(false) {
            out.push(p);
        }
    }
    Ok(())
}

impl RunManifest {
    /// Hashes every file under `out` and writes `out/manifest.json`.
    pub fn write(
        command: &str,
        raw_config: &[u8],
        seed: Option<u64>,
        config: &impl Serialize,
        out: &Path,
    ) -> Result<RunManifest, CliError> {
        let mut files = Vec::new();
        collect(out, out, &mut files)?;
        files.sort();
        let outputs = files
            .iter()
            .map(|p| {
                let rel = p.strip_prefix(out).expect("collected under out").to_string_lossy().replace('\\', "/");
                Ok(OutputFile { path: rel, sha256: sha256_hex(&std::fs::read(p)?) })
            })
            .collect::<Result<Vec<_>, std::io::Error>>()?;
        let m = RunManifest {
            command: command.to_string(),
            config_digest: format!("sha256:{}", sha256_hex(raw_config)),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            outputs,
        };
        std::fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_lists_nested_files_but_not_itself() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/x.csv"), "x\n1\n").unwrap();
        std::fs::write(dir.path().join("b.json"), "{}").unwrap();
        RunManifest::write("props", b"{}", Some(1), &serde_json::json!({}), dir.path()).unwrap();
        let m = RunManifest::write("props", b"{}", Some(1), &serde_json::json!({}), dir.path()).unwrap();
        let paths: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
        assert_eq!(paths, ["a/x.csv", "b.json"]);
    }
}
