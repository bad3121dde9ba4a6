//! Probability-matrix CSV and the binary SVM model file.
//!
//! The CSV header is `video_id,<class0>,<class1>,...`; values carry nine
//! significant digits, enough to reproduce any `f32` exactly.
//!
//! The model file is `"LSVM"`, u32 version, u32 class count, u32 dim, f64
//! cost, then per class a u32 byte length and UTF-8 name, then the weight
//! rows and biases as f64, all little-endian.

use std::path::Path;

use super::{LinearSvmModel, ProbabilityMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Formats with nine significant digits, dropping trailing zeros.
pub(crate) fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    let trim = |int: &str, frac: &str| {
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac}")
        }
    };
    match exp {
        0..=8 => {
            let split = exp as usize + 1;
            trim(&digits[..split], &digits[split..])
        }
        -5..=-1 => trim("0", &format!("{}{digits}", "0".repeat((-exp - 1) as usize))),
        _ => {
            let m = trim(&digits[..1], &digits[1..]);
            format!("{m}e{exp}")
        }
    }
}

pub fn probability_csv<T: Scalar>(m: &ProbabilityMatrix<T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["video_id".to_string()];
    header.extend(m.classes().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (id, row) in m.video_ids().iter().zip(m.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format_sig9(v.as_f64())));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn parse_probability_csv<T: Scalar>(text: &str, context: &str) -> Result<ProbabilityMatrix<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format(context, None, e.to_string()))?
        .clone();
    if header.len() < 2 || &header[0] != "video_id" {
        return Err(Error::format(context, None, "header must be `video_id,<class>...`"));
    }
    let classes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(context, None, format!("row {}: {e}", r + 1)))?;
        ids.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::format(context, None, format!("row {}: bad number `{c}`", r + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    ProbabilityMatrix::new(ids, classes, rows).map_err(|e| Error::format(context, None, e.to_string()))
}

pub fn write_probability_csv<T: Scalar>(m: &ProbabilityMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, probability_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_probability_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<ProbabilityMatrix<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_probability_csv(&text, &path.display().to_string())
}

const SVM_MAGIC: &[u8; 4] = b"LSVM";

pub fn encode_svm(m: &LinearSvmModel<f64>) -> Vec<u8> {
    let mut out = SVM_MAGIC.to_vec();
    for v in [1u32, m.classes.len() as u32, m.dim() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&m.c_param.to_le_bytes());
    for c in &m.classes {
        out.extend_from_slice(&(c.len() as u32).to_le_bytes());
        out.extend_from_slice(c.as_bytes());
    }
    for v in m.weights.iter().flatten().chain(&m.biases) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos.saturating_add(n))
            .ok_or_else(|| Error::format(self.context, None, "truncated model file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_svm(bytes: &[u8], context: &str) -> Result<LinearSvmModel<f64>> {
    let bad = |m: &str| Error::format(context, None, m.to_string());
    let mut cur = Cursor { bytes, pos: 0, context };
    if cur.take(4)? != SVM_MAGIC {
        return Err(bad("missing LSVM header"));
    }
    if cur.u32()? != 1 {
        return Err(bad("unsupported model version"));
    }
    let n = cur.u32()?;
    let dim = cur.u32()?;
    let c_param = cur.f64()?;
    let mut classes = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let len = cur.u32()?;
        let name = std::str::from_utf8(cur.take(len)?).map_err(|_| bad("class name is not UTF-8"))?;
        classes.push(name.to_string());
    }
    let weights = (0..n)
        .map(|_| (0..dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let biases = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    if cur.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(LinearSvmModel {
        classes,
        weights,
        biases,
        c_param,
    })
}

pub fn write_svm(m: &LinearSvmModel<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_svm(m)).map_err(|e| Error::io(path, e))
}

pub fn read_svm(path: impl AsRef<Path>) -> Result<LinearSvmModel<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_svm(&bytes, &path.display().to_string())
}
