//! Feature files.
//!
//! Binary: `"GLPP"`, u16 version = 1, u64 n, u64 d, then `n·d` little-endian
//! f32 values row-major. Labels for a binary file live next to it in
//! `<file>.labels`, one integer per line.
//!
//! CSV: header `id,label,f0,…,f{d−1}`, one row per item. Values are written
//! as the shortest decimal that reads back to the same f32, so both forms
//! load to identical matrices.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"GLPP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

impl FeatureFormat {
    /// `.csv` files are CSV, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Binary => "glpp",
            Self::Csv => "csv",
        }
    }
}

impl std::str::FromStr for FeatureFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bin" | "binary" | "glpp" => Ok(Self::Binary),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown feature format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl LabeledFeatures {
    pub fn require_labels(&self, what: &str) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::MissingRequired(format!("labels for {what}")))
    }
}

pub fn encode_binary(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Matrix> {
    let short = |offset: usize, expected: u64| Error::TruncatedPayload {
        offset: offset as u64,
        expected,
    };
    if bytes.len() < 4 {
        return Err(short(bytes.len(), HEADER_LEN as u64));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(short(bytes.len(), HEADER_LEN as u64));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n, d) = (word(6), word(14));
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| short(HEADER_LEN, u64::MAX))?;
    if (bytes.len() as u64) < expected {
        return Err(short(bytes.len(), expected));
    }
    if bytes.len() as u64 > expected {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing bytes after a {n}x{d} payload",
            bytes.len() as u64 - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Matrix::from_vec(n as usize, d as usize, data)
}

pub fn encode_csv(m: &Matrix, labels: &[usize]) -> Result<String> {
    if labels.len() != m.rows() {
        return Err(Error::LengthMismatch(m.rows(), labels.len()));
    }
    let mut s = String::from("id,label");
    for j in 0..m.cols() {
        s.push_str(&format!(",f{j}"));
    }
    s.push('\n');
    for (i, row) in m.iter_rows().enumerate() {
        s.push_str(&format!("{i},{}", labels[i]));
        for &v in row {
            s.push_str(&format!(",{}", v as f32));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn decode_csv(text: &str) -> Result<LabeledFeatures> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::MalformedCsvRow {
        line: 1,
        reason: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(2);
    let expected: Vec<String> = ["id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..d).map(|j| format!("f{j}")))
        .collect();
    if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::MalformedCsvRow {
            line: 1,
            reason: "header must be `id,label,f0,…,f{d-1}`".into(),
        });
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let bad = |reason: String| Error::MalformedCsvRow { line: i + 1, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 2 {
            return Err(bad(format!("expected {} fields, found {}", d + 2, fields.len())));
        }
        fields[0]
            .parse::<u64>()
            .map_err(|_| bad(format!("bad id `{}`", fields[0])))?;
        labels.push(
            fields[1]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad label `{}`", fields[1])))?,
        );
        for f in &fields[2..] {
            let v: f32 = f.parse().map_err(|_| bad(format!("bad value `{f}`")))?;
            data.push(f64::from(v));
        }
    }
    Ok(LabeledFeatures {
        features: Matrix::from_vec(labels.len(), d, data)?,
        labels: Some(labels),
    })
}

pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn save_features(path: &Path, m: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    match FeatureFormat::from_path(path) {
        FeatureFormat::Csv => {
            let labels = labels.ok_or_else(|| Error::MissingRequired("labels for CSV output".into()))?;
            std::fs::write(path, encode_csv(m, labels)?).map_err(|e| io_err(path, e))
        }
        FeatureFormat::Binary => {
            std::fs::write(path, encode_binary(m)).map_err(|e| io_err(path, e))?;
            if let Some(l) = labels {
                if l.len() != m.rows() {
                    return Err(Error::LengthMismatch(m.rows(), l.len()));
                }
                let text: String = l.iter().map(|v| format!("{v}\n")).collect();
                let lp = labels_path(path);
                std::fs::write(&lp, text).map_err(|e| io_err(&lp, e))?;
            }
            Ok(())
        }
    }
}

pub fn load_features(path: &Path) -> Result<LabeledFeatures> {
    match FeatureFormat::from_path(path) {
        FeatureFormat::Csv => decode_csv(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?),
        FeatureFormat::Binary => {
            let features = decode_binary(&std::fs::read(path).map_err(|e| io_err(path, e))?)?;
            let lp = labels_path(path);
            let labels = if lp.exists() {
                let text = std::fs::read_to_string(&lp).map_err(|e| io_err(&lp, e))?;
                let l: Vec<usize> = text
                    .lines()
                    .enumerate()
                    .filter(|(_, s)| !s.trim().is_empty())
                    .map(|(i, s)| {
                        s.trim().parse().map_err(|_| Error::MalformedCsvRow {
                            line: i + 1,
                            reason: format!("bad label `{s}` in {}", lp.display()),
                        })
                    })
                    .collect::<Result<_>>()?;
                if l.len() != features.rows() {
                    return Err(Error::LengthMismatch(features.rows(), l.len()));
                }
                Some(l)
            } else {
                None
            };
            Ok(LabeledFeatures { features, labels })
        }
    }
}
