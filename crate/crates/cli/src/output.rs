//! Buffered result files and the run manifest.
//!
//! Commands assemble everything in memory and only touch the filesystem in
//! [`Outputs::commit`], so a failed run leaves no partial output behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Fails early when `dir` exists as something other than a directory.
pub fn check_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(CliError::config(format!(
            "output path {} exists and is not a directory",
            dir.display()
        )));
    }
    Ok(())
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Provenance record written as `manifest.toml` next to the results.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
    seeds: Vec<(String, u64)>,
}

impl Manifest {
    pub fn for_config(path: &Path, bytes: &[u8]) -> Self {
        Self::for_file("config", path, bytes)
    }

    pub fn for_file(role: &str, path: &Path, bytes: &[u8]) -> Self {
        let mut m = Manifest::default();
        m.value(role, path.display().to_string());
        m.value(&format!("{role}_sha256"), hex::encode(Sha256::digest(bytes)));
        m
    }

    pub fn without_config() -> Self {
        Manifest::default()
    }

    pub fn value(&mut self, key: &str, value: String) {
        self.entries.push((key.to_string(), value));
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.push((name.to_string(), seed));
    }

    pub fn command(mut self, name: &str, argv: &[String]) -> Self {
        self.entries.insert(0, ("command".into(), name.into()));
        let args: Vec<String> = argv.iter().map(|a| quote(a)).collect();
        self.entries.insert(1, ("args".into(), format!("[{}]", args.join(", "))));
        self
    }

    fn render(&self, files: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tool = {}", quote(env!("CARGO_PKG_NAME")));
        let _ = writeln!(out, "version = {}", quote(env!("CARGO_PKG_VERSION")));
        for (k, v) in &self.entries {
            if k == "args" {
                let _ = writeln!(out, "{k} = {v}");
            } else {
                let _ = writeln!(out, "{k} = {}", quote(v));
            }
        }
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let _ = writeln!(out, "created_unix = {created}");
        let names: Vec<String> = files.iter().map(|f| quote(f)).collect();
        let _ = writeln!(out, "files = [{}]", names.join(", "));
        if !self.seeds.is_empty() {
            out.push_str("\n[seeds]\n");
            for (k, v) in &self.seeds {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

/// Files and stdout text produced by one command.
pub struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
    files: Vec<(PathBuf, Vec<u8>)>,
    write_files: bool,
    stdout: String,
}

impl Outputs {
    pub fn new(dir: &Path, manifest: Manifest) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            manifest,
            files: Vec::new(),
            write_files: true,
            stdout: String::new(),
        }
    }

    /// Print only; used when a command's output directory is optional and
    /// was not given.
    pub fn skip_files(&mut self) {
        self.write_files = false;
    }

    pub fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        let path = self.dir.join(name);
        self.files.push((path, contents.into()));
    }

    /// A file outside the main output directory.
    pub fn file_in(&mut self, dir: &Path, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((dir.join(name), contents.into()));
    }

    pub fn stdout(&mut self, text: String) {
        self.stdout = text;
    }

    pub fn commit(self, verbose: bool) -> CliResult<()> {
        if self.write_files {
            let mut dirs: Vec<PathBuf> = vec![self.dir.clone()];
            for (p, _) in &self.files {
                if let Some(parent) = p.parent() {
                    if !dirs.iter().any(|d| d == parent) {
                        dirs.push(parent.to_path_buf());
                    }
                }
            }
            for d in &dirs {
                std::fs::create_dir_all(d).map_err(|e| {
                    CliError::data(format!("cannot create output directory {}: {e}", d.display()))
                })?;
            }
            let names: Vec<String> = self
                .files
                .iter()
                .map(|(p, _)| match p.strip_prefix(&self.dir) {
                    Ok(rel) => rel.display().to_string(),
                    Err(_) => p.display().to_string(),
                })
                .collect();
            for (path, contents) in &self.files {
                std::fs::write(path, contents)?;
                if verbose {
                    eprintln!("wrote {}", path.display());
                }
            }
            let manifest_path = self.dir.join("manifest.toml");
            std::fs::write(&manifest_path, self.manifest.render(&names))?;
            for d in dirs.iter().skip(1) {
                std::fs::write(d.join("manifest.toml"), self.manifest.render(&names))?;
            }
            if verbose {
                eprintln!("wrote {}", manifest_path.display());
            }
        }
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(self.stdout.as_bytes())?;
        stdout.flush()?;
        Ok(())
    }
}
