//! Metric reports: `key=value` text plus a `metric,value` rows file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, f64)>,
    counts: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), value));
    }

    /// An integer quantity, printed without decimals.
    pub fn push_count(&mut self, key: impl Into<String>, value: usize) {
        let key = key.into();
        self.counts.push(key.clone());
        self.entries.push((key, value as f64));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    /// Metrics with three decimals, counts bare.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            if self.counts.contains(k) {
                let _ = writeln!(s, "{k}={v}");
            } else {
                let _ = writeln!(s, "{k}={v:.3}");
            }
        }
        s
    }

    /// Full precision, round-trippable.
    pub fn to_rows(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k},{v:?}");
        }
        s
    }

    pub fn parse_rows(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("metric,value") {
            return Err(Error::MalformedCsvRow {
                line: 1,
                reason: "expected header `metric,value`".into(),
            });
        }
        let entries = lines
            .enumerate()
            .map(|(i, l)| {
                let (k, v) = l.rsplit_once(',').ok_or_else(|| Error::MalformedCsvRow {
                    line: i + 2,
                    reason: "expected `metric,value`".into(),
                })?;
                let v = v.parse().map_err(|_| Error::MalformedCsvRow {
                    line: i + 2,
                    reason: format!("bad value `{v}`"),
                })?;
                Ok((k.to_string(), v))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            entries,
            counts: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_file(&dir.join(format!("{stem}.txt")), &self.to_text())?;
        write_file(&dir.join(format!("{stem}.csv")), &self.to_rows())
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_rows() {
        let mut r = Report::new();
        r.push("Recall@1", 1.0);
        r.push("NMI", 0.87654321);
        r.push_count("queries", 12);
        assert_eq!(r.to_text(), "Recall@1=1.000\nNMI=0.877\nqueries=12\n");
        assert_eq!(Report::parse_rows(&r.to_rows()).unwrap().entries(), r.entries());
    }
}
