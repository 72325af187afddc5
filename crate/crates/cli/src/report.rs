//! Report files written by `bench` and `experiment`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use oclu_core::baselines::Method;
use oclu_core::evaluation::{write_records_csv, write_summary_csv, EvalRecord, Summary};

use crate::bench::{BenchResult, GridRow};

/// One point of a learning curve or noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub dataset: String,
    pub x: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub summaries: Vec<Summary>,
    pub records: Vec<EvalRecord>,
    pub grid: Vec<GridRow>,
    pub loss_history: Vec<f64>,
    /// Learning-curve or noise-sweep rows, with the name of the x column.
    pub curve: Option<(String, Vec<CurveRow>)>,
    /// Extra named rows, e.g. the transfer comparison.
    pub notes: Vec<(String, f64, f64)>,
    pub wall_clock_secs: f64,
}

impl Report {
    pub fn from_bench(b: BenchResult) -> Self {
        Self {
            summaries: b.summaries,
            records: b.records,
            grid: b.grid,
            ..Self::default()
        }
    }

    pub fn mean_of(&self, method: Method) -> Option<f64> {
        self.summaries.iter().find(|s| s.method == method).map(|s| s.mean)
    }

    /// Writes the CSV files and the config echo into `dir`. In
    /// deterministic mode runtimes are zeroed so reruns are byte-identical.
    pub fn write(&self, dir: &Path, config: &impl Serialize, deterministic: bool) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let create = |name: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            Ok(BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?))
        };
        let mut records = self.records.clone();
        if deterministic {
            records.iter_mut().for_each(|r| r.runtime_secs = 0.0);
        }
        if !self.summaries.is_empty() {
            let mut w = create("report.csv")?;
            write_summary_csv(&mut w, &self.summaries)?;
            w.flush()?;
            let mut w = create("table.csv")?;
            write_table(&mut w, &self.summaries)?;
            w.flush()?;
            let mut w = create("records.csv")?;
            write_records_csv(&mut w, &records)?;
            w.flush()?;
        }
        if !self.grid.is_empty() {
            let mut w = create("grid.csv")?;
            writeln!(w, "method,param,value,mean,std")?;
            for g in &self.grid {
                writeln!(w, "{},{},{},{},{}", g.method, g.param, g.value, g.mean, g.std)?;
            }
            w.flush()?;
        }
        if !self.loss_history.is_empty() {
            let mut w = create("loss.csv")?;
            write_loss_csv(&mut w, &self.loss_history)?;
            w.flush()?;
        }
        if let Some((x_name, rows)) = &self.curve {
            let mut w = create("curve.csv")?;
            writeln!(w, "dataset,{x_name},mean,std")?;
            for r in rows {
                writeln!(w, "{},{},{},{}", r.dataset, r.x, r.mean, r.std)?;
            }
            w.flush()?;
        }
        if !self.notes.is_empty() {
            let mut w = create("notes.csv")?;
            writeln!(w, "name,mean,std")?;
            for (name, mean, std) in &self.notes {
                writeln!(w, "{name},{mean},{std}")?;
            }
            w.flush()?;
        }
        let mut w = create("config.json")?;
        serde_json::to_writer_pretty(&mut w, config)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn write_loss_csv(mut w: impl Write, history: &[f64]) -> std::io::Result<()> {
    writeln!(w, "epoch,loss")?;
    for (e, l) in history.iter().enumerate() {
        writeln!(w, "{},{}", e + 1, l)?;
    }
    Ok(())
}

/// A one-row table with a `mean±std` cell per method, in table order.
pub fn write_table(mut w: impl Write, summaries: &[Summary]) -> std::io::Result<()> {
    let header: Vec<&str> = summaries.iter().map(|s| s.method.short_name()).collect();
    writeln!(w, "{}", header.join(","))?;
    let cells: Vec<String> = summaries.iter().map(|s| format!("{:.3}±{:.3}", s.mean, s.std)).collect();
    writeln!(w, "{}", cells.join(","))
}

/// Human-readable summary for the terminal.
pub fn format_summaries(summaries: &[Summary]) -> String {
    summaries
        .iter()
        .map(|s| format!("{:>7}  {:.3} ± {:.3}", s.method.short_name(), s.mean, s.std))
        .collect::<Vec<_>>()
        .join("\n")
}
