//! Artifact writers: tidy CSV and pretty JSON.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use weakkam_core::characteristics::Trajectory;
use weakkam_core::{PeriodicGrid, SpaceTimeField, BIG};

use crate::CliError;

/// Output directory plus the list of files written so far.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write_text(name, &text)
    }
}

fn push_value(out: &mut String, v: f64) {
    if v >= BIG / 2.0 {
        out.push_str("inf");
    } else {
        write!(out, "{v}").unwrap();
    }
}

fn push_slice(out: &mut String, t: f64, grid: &PeriodicGrid, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        write!(out, "{t},{},", grid.node(i)).unwrap();
        push_value(out, *v);
        out.push('\n');
    }
}

/// `t,x,value` rows for every `stride`-th slice and the final one.
/// Unreached entries are written as `inf`.
pub fn field_csv(field: &SpaceTimeField, stride: usize) -> String {
    let mut out = String::from("t,x,value\n");
    let steps = field.steps();
    for k in (0..=steps).filter(|k| k % stride == 0 || *k == steps) {
        push_slice(&mut out, field.tgrid.time(k), &field.grid, field.slice(k));
    }
    out
}

/// A single slice as `t,x,value`.
pub fn slice_csv(t: f64, grid: &PeriodicGrid, values: &[f64]) -> String {
    let mut out = String::from("t,x,value\n");
    push_slice(&mut out, t, grid, values);
    out
}

/// `t,x,u,p` rows; `x` is the lifted (unwrapped) position.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,x,u,p\n");
    for (k, s) in traj.states.iter().enumerate() {
        writeln!(out, "{},{},{},{}", k as f64 * traj.dt, s.x, s.u, s.p).unwrap();
    }
    out
}
