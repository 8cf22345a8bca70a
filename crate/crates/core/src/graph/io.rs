use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GraphDataset, GraphError, Split};
use crate::tensor::Tensor;

fn read(dir: &Path, name: &str) -> Result<String, GraphError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(GraphError::MissingFile(path.display().to_string()));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank lines with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn expect_count(file: &str, got: usize, want: usize) -> Result<(), GraphError> {
    if got != want {
        return Err(parse_err(file, 0, format!("expected {want} records, found {got}")));
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<GraphDataset, GraphError> {
    let dir = dir.as_ref();

    let meta = read(dir, "meta")?;
    let nums: Vec<usize> = meta
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err("meta", 1, format!("bad integer {t:?}"))))
        .collect::<Result<_, _>>()?;
    let [n, d, c] = nums[..] else {
        return Err(parse_err("meta", 1, "expected `n d c`"));
    };

    let text = read(dir, "features.csv")?;
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line, rec) in records(&text) {
        let before = data.len();
        for tok in rec.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err("features.csv", line, format!("bad float {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != d {
            return Err(parse_err(
                "features.csv",
                line,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    expect_count("features.csv", rows, n)?;
    let features = Tensor::new(vec![n, d], data)
        .map_err(|e| GraphError::Invalid(e.to_string()))?;

    let text = read(dir, "edges.txt")?;
    let mut edges = Vec::new();
    for (line, rec) in records(&text) {
        let mut it = rec.split_whitespace();
        let mut next = || -> Result<usize, GraphError> {
            let tok = it.next().ok_or_else(|| parse_err("edges.txt", line, "expected `u v`"))?;
            tok.parse()
                .map_err(|_| parse_err("edges.txt", line, format!("bad node index {tok:?}")))
        };
        let (u, v) = (next()?, next()?);
        edges.push((u, v));
    }

    let text = read(dir, "labels.txt")?;
    let mut labels = Vec::with_capacity(n);
    for (line, rec) in records(&text) {
        let l: i64 = rec
            .parse()
            .map_err(|_| parse_err("labels.txt", line, format!("bad label {rec:?}")))?;
        if l < 0 || l as usize >= c {
            return Err(GraphError::LabelOutOfRange {
                node: labels.len(),
                label: l,
                classes: c,
            });
        }
        labels.push(l as usize);
    }
    expect_count("labels.txt", labels.len(), n)?;

    let text = read(dir, "split.txt")?;
    let mut split = Vec::with_capacity(n);
    for (line, rec) in records(&text) {
        let s = Split::parse(rec)
            .ok_or_else(|| parse_err("split.txt", line, format!("unknown split {rec:?}")))?;
        split.push(s);
    }
    expect_count("split.txt", split.len(), n)?;

    GraphDataset::new(features, labels, c, edges, split)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), GraphError> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Writes the dataset in the directory format. Floats use the shortest
/// representation that parses back to the same bits.
pub fn save_dataset(g: &GraphDataset, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_file(dir, "meta", &format!("{} {} {}\n", g.n(), g.d(), g.n_classes()))?;

    let mut body = String::new();
    for r in 0..g.n() {
        let row: Vec<String> = g.features().row(r).iter().map(|v| format!("{v:?}")).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    write_file(dir, "features.csv", &body)?;

    let body: String = g.edges().iter().map(|(u, v)| format!("{u} {v}\n")).collect();
    write_file(dir, "edges.txt", &body)?;
    let body: String = g.labels().iter().map(|l| format!("{l}\n")).collect();
    write_file(dir, "labels.txt", &body)?;
    let body: String = g.split().iter().map(|s| format!("{}\n", s.token())).collect();
    write_file(dir, "split.txt", &body)?;
    Ok(())
}
