use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::OutputArgs;

/// Resolved settings of one run, written next to its artifacts.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a, T: Serialize> {
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    pub inputs: Vec<String>,
    pub order: Option<usize>,
    /// Model size actually used, or the size selected by cross-validation.
    pub target_r: Option<usize>,
    pub cv: bool,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub schedule_factor: Option<f64>,
    pub out_dir: String,
    pub outputs: Vec<String>,
    pub threads: usize,
    pub args: &'a T,
}

impl<'a, T: Serialize> RunConfig<'a, T> {
    pub fn new(subcommand: &'static str, out: &OutputArgs, threads: usize, args: &'a T) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            inputs: Vec::new(),
            order: None,
            target_r: None,
            cv: false,
            k: None,
            seed: None,
            trials: None,
            schedule_factor: None,
            out_dir: out.out_dir.display().to_string(),
            outputs: Vec::new(),
            threads,
            args,
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.display().to_string());
        self
    }

    /// Writes `<stem>.<subcommand>.config.json` in the output directory.
    pub fn write(&mut self, out: &Artifacts) -> Result<()> {
        let path = out.path(&format!("{}.config.json", self.subcommand));
        self.outputs.sort();
        let mut w = out.create(&path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Naming and creation of output files.
pub struct Artifacts {
    dir: PathBuf,
    stem: String,
}

impl Artifacts {
    pub fn new(out: &OutputArgs, input: &Path) -> Result<Self> {
        let stem = match &out.name {
            Some(n) => n.clone(),
            None => input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "flowlump".into()),
        };
        std::fs::create_dir_all(&out.out_dir)
            .with_context(|| format!("cannot create output directory {}", out.out_dir.display()))?;
        Ok(Self {
            dir: out.out_dir.clone(),
            stem,
        })
    }

    /// `<out_dir>/<stem>.<suffix>`
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.stem))
    }

    pub fn create(&self, path: &Path) -> Result<BufWriter<File>> {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    /// Creates `<stem>.<suffix>`, fills it and records it in `config`.
    pub fn write<T: Serialize>(
        &self,
        config: &mut RunConfig<'_, T>,
        suffix: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<PathBuf> {
        let path = self.path(suffix);
        let mut w = self.create(&path)?;
        fill(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        config.outputs.push(path.display().to_string());
        println!("wrote {}", path.display());
        Ok(path)
    }
}
