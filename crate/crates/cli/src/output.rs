//! Output plumbing: CSV files and the run manifest.
//!
//! Every command that writes files also drops a `manifest.toml` next to
//! them. The manifest lists the tool version, the command, every resolved
//! setting, and the files written; feeding it back through `--config`
//! reproduces those files byte for byte (the timestamp aside, which only
//! records when the run happened).

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Resolved;
use crate::CmdError;

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CmdError> {
    fs::create_dir_all(dir)
        .map_err(|e| CmdError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| CmdError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Renders header + rows with a trailing newline, the shape every CSV here
/// shares. Values must already be locale-free (plain `format!` output).
pub fn csv(header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(header.len() + rows.len() * 32 + 8);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    out
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    resolved: &Resolved,
    outputs: &[&str],
) -> Result<PathBuf, CmdError> {
    let listed: Vec<String> = outputs.iter().map(|o| format!("\"{o}\"")).collect();
    let content = format!(
        "# run manifest; reproduce with: cardest {command} --config <this file>\n\
         version = \"{}\"\n\
         command = \"{command}\"\n\
         timestamp = \"{}\"\n\
         outputs = [{}]\n\
         {}",
        env!("CARGO_PKG_VERSION"),
        chrono::Utc::now().to_rfc3339(),
        listed.join(", "),
        resolved.to_toml_lines(),
    );
    write_file(dir, "manifest.toml", &content)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_ends_every_line() {
        let body = csv("a,b", &["1,2".into(), "3,4".into()]);
        assert_eq!(body, "a,b\n1,2\n3,4\n");
    }

    #[test]
    fn manifests_parse_back_as_configs() {
        let dir = tempfile::tempdir().unwrap();
        let resolved = Resolved::default();
        let path = write_manifest(dir.path(), "simulate", &resolved, &["estimates.csv"]).unwrap();
        let back = crate::config::resolve(Some(&path), &Default::default()).unwrap();
        assert_eq!(back, resolved);
    }
}
