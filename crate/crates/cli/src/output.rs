//! File emission: schema-tagged CSV, whitespace-separated plot data and JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nematic_core::state::CSV_SCHEMA;
use nematic_core::PhysicalState;
use serde::Serialize;

/// Output directory that remembers every file it wrote.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write_with(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(self.root.join(name))?);
        body(&mut w)?;
        w.flush()?;
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> std::io::Result<()> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        self.write_text(name, &(text + "\n"))
    }

    /// CSV with the schema line and a header.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        self.write_with(name, |w| {
            writeln!(w, "{CSV_SCHEMA}")?;
            writeln!(w, "{}", header.join(","))?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            Ok(())
        })
    }

    /// Whitespace-separated columns behind a `#` header, for plotting tools.
    pub fn write_plot(&mut self, name: &str, title: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        self.write_with(name, |w| {
            writeln!(w, "# {title}")?;
            writeln!(w, "# {}", header.join(" "))?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
                writeln!(w, "{}", cells.join(" "))?;
            }
            Ok(())
        })
    }
}

pub const STATE_COLUMNS: [&str; 8] = ["t", "x", "u", "theta", "theta_t", "v", "J", "A"];

/// One row per node and state, in the order of [`STATE_COLUMNS`].
pub fn state_rows<'a>(states: impl IntoIterator<Item = &'a PhysicalState>) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for s in states {
        for i in 0..s.grid.n {
            rows.push(vec![s.t, s.grid.x(i), s.u[i], s.theta[i], s.theta_t[i], s.v[i], s.j[i], s.a[i]]);
        }
    }
    rows
}

/// Index of the stored state nearest to each requested time.
pub fn nearest_states(times: &[f64], requested: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = requested
        .iter()
        .map(|&r| {
            (0..times.len())
                .min_by(|&a, &b| (times[a] - r).abs().total_cmp(&(times[b] - r).abs()))
                .unwrap_or(0)
        })
        .collect();
    out.dedup();
    out
}
