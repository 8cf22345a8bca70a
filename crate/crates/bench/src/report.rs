//! Report rows and the CSV files written by a run. Floats are printed in
//! shortest round-trip form, so parsing a file back gives the same bits.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use gnnlab_core::train::EpochRecord;
use gnnlab_core::zoo::Variant;

use crate::config::parse_variant;
use crate::BenchError;

pub const REPORT_HEADER: &str = "variant,depth,mean_acc,std_acc,runs,seconds";
pub const RUNS_HEADER: &str = "variant,depth,run,seed,test_acc,best_epoch,best_val_acc,epochs";
pub const CURVES_HEADER: &str = "variant,depth,epoch,train_loss,train_acc,val_loss,val_acc";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub variant: Variant,
    pub depth: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub runs: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub variant: Variant,
    pub depth: usize,
    pub run: usize,
    pub seed: u64,
    pub test_acc: f64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs: usize,
}

fn row_line(r: &ReportRow) -> String {
    format!("{},{},{},{},{},{}", r.variant, r.depth, r.mean_acc, r.std_acc, r.runs, r.seconds)
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in rows {
        s.push_str(&row_line(r));
        s.push('\n');
    }
    s
}

pub fn format_runs(runs: &[RunRecord]) -> String {
    let mut s = format!("{RUNS_HEADER}\n");
    for r in runs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.variant, r.depth, r.run, r.seed, r.test_acc, r.best_epoch, r.best_val_acc, r.epochs
        );
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn format_curves(curves: &[(Variant, usize, &[EpochRecord])]) -> String {
    let mut s = format!("{CURVES_HEADER}\n");
    for (v, depth, epochs) in curves {
        for e in epochs.iter() {
            let _ = writeln!(
                s,
                "{v},{depth},{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                opt(e.train_acc),
                opt(e.val_loss),
                opt(e.val_acc)
            );
        }
    }
    s
}

fn field<T: std::str::FromStr>(line: usize, name: &str, v: Option<&str>) -> Result<T, BenchError> {
    let v = v.ok_or_else(|| BenchError::Data(format!("line {line}: missing {name}")))?;
    v.trim()
        .parse()
        .map_err(|_| BenchError::Data(format!("line {line}: bad {name} {v:?}")))
}

fn parse_row(no: usize, line: &str) -> Result<ReportRow, BenchError> {
    let mut it = line.split(',');
    let variant = parse_variant(it.next().unwrap_or(""))
        .map_err(|e| BenchError::Data(format!("line {no}: {e}")))?;
    let row = ReportRow {
        variant,
        depth: field(no, "depth", it.next())?,
        mean_acc: field(no, "mean_acc", it.next())?,
        std_acc: field(no, "std_acc", it.next())?,
        runs: field(no, "runs", it.next())?,
        seconds: field(no, "seconds", it.next())?,
    };
    if it.next().is_some() {
        return Err(BenchError::Data(format!("line {no}: too many fields")));
    }
    Ok(row)
}

/// Parses `report.csv` text.
pub fn parse_report(text: &str) -> Result<Vec<ReportRow>, BenchError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => return Err(BenchError::Data("missing report header".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(i + 1, l))
        .collect()
}

/// Parses `runs.csv` text.
pub fn parse_runs(text: &str) -> Result<Vec<RunRecord>, BenchError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RUNS_HEADER => {}
        _ => return Err(BenchError::Data("missing runs header".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let no = i + 1;
            let mut it = l.split(',');
            let variant = parse_variant(it.next().unwrap_or(""))
                .map_err(|e| BenchError::Data(format!("line {no}: {e}")))?;
            Ok(RunRecord {
                variant,
                depth: field(no, "depth", it.next())?,
                run: field(no, "run", it.next())?,
                seed: field(no, "seed", it.next())?,
                test_acc: field(no, "test_acc", it.next())?,
                best_epoch: field(no, "best_epoch", it.next())?,
                best_val_acc: field(no, "best_val_acc", it.next())?,
                epochs: field(no, "epochs", it.next())?,
            })
        })
        .collect()
}

/// Gnuplot-ready series: rows sorted by `(variant, depth)`, a blank-line
/// pair between variants so each is its own data block, and a `#` header.
/// Read it with `set datafile separator ','`.
pub fn emit_plot_data(rows: &[ReportRow]) -> Result<String, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::Data("cannot plot an empty report".into()));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (a.variant.name(), a.depth).cmp(&(b.variant.name(), b.depth)));
    let mut s = format!("# {REPORT_HEADER}\n");
    for (i, r) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1].variant != r.variant {
            s.push_str("\n\n");
        }
        s.push_str(&row_line(r));
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_plot_data(text: &str) -> Result<Vec<ReportRow>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| parse_row(i + 1, l))
        .collect()
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), BenchError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| BenchError::Io(e.error))?;
    Ok(())
}
