//! Input expansion, output placement and batch error reporting.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};

pub const STRUCTURE_EXTS: &[&str] = &["xyz", "extxyz"];
pub const JSON_EXTS: &[&str] = &["json"];

/// Files named on the command line plus the matching files of each named
/// directory, in sorted order. `several` is true when more than one file
/// may result (any directory, or several arguments).
pub struct Inputs {
    pub files: Vec<PathBuf>,
    pub several: bool,
}

pub fn expand(inputs: &[PathBuf], exts: &[&str]) -> anyhow::Result<Inputs> {
    let mut files = Vec::new();
    let mut several = inputs.len() > 1;
    for p in inputs {
        if p.is_dir() {
            several = true;
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading directory {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && has_ext(f, exts))
                .collect();
            found.sort();
            if found.is_empty() {
                log::warn!("{}: no .{} files", p.display(), exts.join("/."));
            }
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no input files");
    }
    Ok(Inputs { files, several })
}

fn has_ext(p: &Path, exts: &[&str]) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

pub fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub enum Sink {
    Stdout,
    File(PathBuf),
    Dir(PathBuf),
}

impl Sink {
    /// Decides where outputs go before any work starts.
    pub fn plan(out: Option<&Path>, inputs: &Inputs) -> anyhow::Result<Sink> {
        let sink = match out {
            None if inputs.several => bail!("--out DIR is required when there are several inputs"),
            None => Sink::Stdout,
            Some(p) if inputs.several || p.is_dir() => {
                fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
                Sink::Dir(p.to_path_buf())
            }
            Some(p) => Sink::File(p.to_path_buf()),
        };
        if matches!(sink, Sink::Dir(_)) {
            let mut seen = HashSet::new();
            if let Some(dup) = inputs.files.iter().map(|f| stem(f)).find(|s| !seen.insert(s.clone())) {
                bail!("two inputs share the file stem `{dup}`; their outputs would collide");
            }
        }
        Ok(sink)
    }

    pub fn write(&self, input: &Path, ext: &str, text: &str) -> anyhow::Result<()> {
        match self {
            Sink::Stdout => {
                print!("{text}");
                Ok(())
            }
            Sink::File(p) => write_file(p, text),
            Sink::Dir(d) => write_file(&d.join(format!("{}.{ext}", stem(input))), text),
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_file(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Per-file failures of a batch command.
#[derive(Default)]
pub struct Failures(Vec<(PathBuf, anyhow::Error)>);

impl Failures {
    pub fn record(&mut self, path: &Path, err: anyhow::Error) {
        self.0.push((path.to_path_buf(), err));
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Prints the report and turns it into the exit code.
    pub fn finish(self, total: usize) -> ExitCode {
        if self.0.is_empty() {
            return ExitCode::SUCCESS;
        }
        eprintln!("error: {} of {total} input(s) failed:", self.0.len());
        for (p, e) in &self.0 {
            eprintln!("  {}: {e:#}", p.display());
        }
        ExitCode::FAILURE
    }
}
