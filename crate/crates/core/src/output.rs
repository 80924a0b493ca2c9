//! Flat-file artifact format: CSV tables whose first line is a `#`-prefixed
//! JSON object holding the resolved configuration, so every file can be
//! traced back to the run that made it. Floats are written with the shortest
//! representation that round-trips, which keeps repeat runs byte-identical.

use crate::error::{Error, Result};
use crate::model::TickSeries;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Clone, Debug)]
pub struct Table {
    pub meta: serde_json::Value,
    pub columns: Vec<String>,
    /// rows[i][j] = value of column j in row i.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse(format!("no column {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn write_table(
    path: &Path,
    meta: &serde_json::Value,
    columns: &[(&str, &[f64])],
) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::InvalidConfig("table needs at least one column".into()));
    }
    let len = columns[0].1.len();
    for (name, col) in columns {
        if col.len() != len {
            return Err(Error::InvalidConfig(format!(
                "column {name:?} has {} rows, expected {len}",
                col.len()
            )));
        }
        if name.contains(',') || name.contains('\n') {
            return Err(Error::InvalidConfig(format!("column name {name:?} breaks CSV")));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {}", serde_json::to_string(meta)?)?;
    let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    writeln!(w, "{}", names.join(","))?;
    let mut line = String::new();
    for i in 0..len {
        line.clear();
        for (j, (_, col)) in columns.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            // shortest round-trip form; integers keep a bare form
            let v = col[i];
            if v == v.trunc() && v.abs() < 1e15 {
                line.push_str(&format!("{}", v as i64));
            } else {
                line.push_str(&format!("{v}"));
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty file".into()))??;
    let meta = match header.strip_prefix("# ") {
        Some(json) => serde_json::from_str(json)?,
        None => return Err(Error::Parse("missing `# {json}` header line".into())),
    };
    let names = lines
        .next()
        .ok_or_else(|| Error::Parse("missing column line".into()))??;
    let columns: Vec<String> = names.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::Parse(format!(
                "row has {} fields, expected {}",
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { meta, columns, rows })
}

pub fn write_tick_series(path: &Path, meta: &serde_json::Value, s: &TickSeries) -> Result<()> {
    let tick: Vec<f64> = s.tick.iter().map(|&v| v as f64).collect();
    let mut cols: Vec<(&str, &[f64])> =
        vec![("tick", &tick), ("t", &s.t), ("p", &s.p), ("dp", &s.dp)];
    let buyer: Vec<f64>;
    let seller: Vec<f64>;
    if !s.buyer.is_empty() {
        buyer = s.buyer.iter().map(|&v| v as f64).collect();
        seller = s.seller.iter().map(|&v| v as f64).collect();
        cols.push(("buyer", &buyer));
        cols.push(("seller", &seller));
    }
    write_table(path, meta, &cols)
}

pub fn read_tick_series(path: &Path) -> Result<(serde_json::Value, TickSeries)> {
    let table = read_table(path)?;
    let mut s = TickSeries::default();
    s.tick = table.column("tick")?.into_iter().map(|v| v as u64).collect();
    s.t = table.column("t")?;
    s.p = table.column("p")?;
    s.dp = table.column("dp")?;
    if table.columns.iter().any(|c| c == "buyer") {
        s.buyer = table.column("buyer")?.into_iter().map(|v| v as u32).collect();
        s.seller = table.column("seller")?.into_iter().map(|v| v as u32).collect();
    }
    Ok((table.meta, s))
}
