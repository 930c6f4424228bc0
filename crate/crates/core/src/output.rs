//! Result files. Everything is staged in a hidden directory and moved into
//! place only when the whole run succeeds, so a failed run leaves nothing.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Staging area inside the output directory.
#[derive(Debug)]
pub struct OutputSet {
    root: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl OutputSet {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        let staging = root.join(format!(".partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        Ok(OutputSet { root: root.to_path_buf(), staging, files: Vec::new(), committed: false })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes one staged file through `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let mut w = BufWriter::new(fs::File::create(self.staging.join(name))?);
        fill(&mut w)?;
        w.flush()?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// Moves every staged file into the output directory.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let dest = self.root.join(name);
            fs::rename(self.staging.join(name), &dest)?;
            done.push(dest);
        }
        fs::remove_dir_all(&self.staging)?;
        self.committed = true;
        Ok(done)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// One line of the per-experiment summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub seed: u64,
    pub n: usize,
    pub regret: f64,
    /// Fitted exponent of this seed's regret curve, if a fit was possible.
    pub slope: Option<f64>,
}

/// `seed,n,regret,slope`; a missing slope is written as `nan`.
pub fn write_summary_csv(w: &mut dyn Write, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "seed,n,regret,slope")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.seed, r.n, r.regret, r.slope.map_or("nan".to_string(), |s| s.to_string()))?;
    }
    Ok(())
}

/// Whitespace-separated columns with a `#` comment header.
pub fn write_plot_data(w: &mut dyn Write, columns: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(w, "# {}", columns.join(" "))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Effective-dimension report row.
#[derive(Debug, Clone, PartialEq)]
pub struct EffDimRow {
    pub n: usize,
    pub tau: f64,
    pub d_eff: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

/// `n,tau,d_eff,lambda_max,lambda_min`.
pub fn write_effdim_csv(w: &mut dyn Write, rows: &[EffDimRow]) -> std::io::Result<()> {
    writeln!(w, "n,tau,d_eff,lambda_max,lambda_min")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.n, r.tau, r.d_eff, r.lambda_max, r.lambda_min)?;
    }
    Ok(())
}
