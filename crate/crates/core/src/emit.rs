//! Deterministic text output: 9-significant-digit numbers, CSV tables with a
//! provenance comment line, and JSON with non-finite values as `null`.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::Value;

use crate::region::SweepPoint;

pub const SIG_DIGITS: usize = 9;

/// `x` with 9 significant digits, trailing zeros trimmed. Plain notation for
/// decimal exponents in `[-5, 9)`, scientific otherwise.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.into() }
}

/// `x` rounded to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_sig(x).parse().unwrap_or(x)
}

/// Serialize to a JSON value with every float rounded to 9 significant
/// digits. Non-finite floats become `null`.
pub fn to_rounded_json<T: Serialize>(value: &T) -> serde_json::Result<Value> {
    Ok(round_value(serde_json::to_value(value)?))
}

pub fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_text<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(&to_rounded_json(value)?)?;
    s.push('\n');
    Ok(s)
}

/// Provenance line written first in every CSV file.
pub fn provenance_line(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}")
}

pub struct CsvWriter<W: Write> {
    out: W,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, config_hash: &str, seed: u64, columns: &[&str]) -> io::Result<Self> {
        writeln!(out, "{}", provenance_line(config_hash, seed))?;
        writeln!(out, "{}", columns.join(","))?;
        Ok(CsvWriter { out })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        let cells: Vec<String> = values.iter().map(|&v| format_sig(v)).collect();
        writeln!(self.out, "{}", cells.join(","))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub const SWEEP_COLUMNS: [&str; 3] = ["gamma", "mu", "c_value"];
pub const POLYGON_COLUMNS: [&str; 2] = ["r1", "r2"];
pub const SURFACE_COLUMNS: [&str; 8] = ["r1", "r2", "f_value", "alpha", "beta", "gamma", "mu", "lambda"];

/// Hyperplane sweep table; grid points whose optimization failed are skipped.
pub fn write_sweep_csv<W: Write>(
    out: W,
    config_hash: &str,
    seed: u64,
    sweep: &[Option<SweepPoint>],
) -> io::Result<W> {
    let mut w = CsvWriter::new(out, config_hash, seed, &SWEEP_COLUMNS)?;
    for p in sweep.iter().flatten() {
        w.row(&[p.gamma, p.mu, p.value])?;
    }
    w.finish()
}

/// Region polygon vertices in order.
pub fn write_polygon_csv<W: Write>(
    out: W,
    config_hash: &str,
    seed: u64,
    vertices: &[(f64, f64)],
) -> io::Result<W> {
    let mut w = CsvWriter::new(out, config_hash, seed, &POLYGON_COLUMNS)?;
    for &(r1, r2) in vertices {
        w.row(&[r1, r2])?;
    }
    w.finish()
}

/// One row of the exponent surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub r1: f64,
    pub r2: f64,
    pub f_value: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
}

pub fn write_surface_csv<W: Write>(
    out: W,
    config_hash: &str,
    seed: u64,
    rows: &[SurfaceRow],
) -> io::Result<W> {
    let mut w = CsvWriter::new(out, config_hash, seed, &SURFACE_COLUMNS)?;
    for r in rows {
        w.row(&[r.r1, r.r2, r.f_value, r.alpha, r.beta, r.gamma, r.mu, r.lambda])?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(0.368064207168497), "0.368064207");
        assert_eq!(format_sig(std::f64::consts::LN_2), "0.693147181");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(123456789.4), "123456789");
        assert_eq!(format_sig(1234567894.0), "1.23456789e9");
        assert_eq!(format_sig(1.5e-7), "1.5e-7");
        assert_eq!(format_sig(0.00012345678912), "0.000123456789");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(-0.0), "0");
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-9, 6.02214076e23, -7.77777777777] {
            let r = round_sig(x);
            assert_eq!(round_sig(r), r);
            assert!((r - x).abs() <= x.abs() * 1e-8);
        }
    }

    #[test]
    fn json_nulls_non_finite() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: f64,
            c: Vec<f64>,
        }
        let v = to_rounded_json(&S { a: f64::INFINITY, b: 1.0 / 3.0, c: vec![f64::NAN, 0.5] }).unwrap();
        assert_eq!(v["a"], Value::Null);
        assert_eq!(v["b"].as_f64(), Some(0.333333333));
        assert_eq!(v["c"][0], Value::Null);
    }

    #[test]
    fn csv_layout() {
        let buf = write_polygon_csv(Vec::new(), "abc", 7, &[(0.0, 0.0), (0.5, 1.0 / 3.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# config_hash=abc seed=7\nr1,r2\n0,0\n0.5,0.333333333\n");
    }
}
