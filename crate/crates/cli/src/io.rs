//! Reading loss series and bias tables; writing CSV and JSON.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tailgauge::SurfaceRow;

use crate::Invalid;

/// One number per line. A non-numeric first line is taken as a header;
/// blank lines are ignored.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(Invalid(format!("line {}: non-finite value {line}", i + 1)).into()),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Invalid(format!("line {}: not a number: {line}", i + 1)).into()),
        }
    }
    Ok(out)
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_values(&text).with_context(|| format!("parsing {}", path.display()))
}

pub const SURFACE_HEADER: &str = "n,xi,alpha,sigma,bias,variance";

/// Parse a table written by `bias-table`. Returns the rows and the common
/// `(alpha, sigma)`.
pub fn parse_surface(text: &str) -> Result<(Vec<SurfaceRow>, f64, f64)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SURFACE_HEADER => {}
        _ => return Err(Invalid(format!("bias table must start with the header {SURFACE_HEADER}")).into()),
    }
    let mut rows = Vec::new();
    let mut common: Option<(f64, f64)> = None;
    for (i, line) in lines {
        let bad = || Invalid(format!("bias table line {}: {line}", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad().into());
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
        let n = f[0].parse::<u64>().map_err(|_| bad())?;
        let (alpha, sigma) = (num(2)?, num(3)?);
        match common {
            None => common = Some((alpha, sigma)),
            Some(c) if c != (alpha, sigma) => {
                return Err(Invalid(format!("bias table mixes (alpha, sigma) values at line {}", i + 1)).into())
            }
            _ => {}
        }
        rows.push(SurfaceRow { n, xi: num(1)?, bias: num(4)?, variance: num(5)?, outside_validated_region: false });
    }
    let (alpha, sigma) = common.ok_or_else(|| Invalid("bias table has no rows".into()))?;
    Ok((rows, alpha, sigma))
}

/// Nine significant digits, without trailing zeros.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let s = format!("{:.*}", (8 - mag).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (m, e) = s.split_once('e').unwrap();
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    }
}

/// JSON numbers with 17 significant digits, so every float round-trips.
struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON of `value`, newline-terminated.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf)?)
}

/// Write `text` to `path`, or stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing stdout")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_with_and_without_header() {
        assert_eq!(parse_values("loss\n1.5\n\n2\r\n").unwrap(), vec![1.5, 2.0]);
        assert_eq!(parse_values("3\n-4e2\n").unwrap(), vec![3.0, -400.0]);
        assert!(parse_values("1\nx\n").is_err());
        assert!(parse_values("1\nNaN\n").is_err());
    }

    #[test]
    fn nine_digit_formatting() {
        assert_eq!(sig9(18.493653007613235), "18.493653");
        assert_eq!(sig9(18.4936534), "18.4936534");
        assert_eq!(sig9(0.000123456789123), "0.000123456789");
        assert_eq!(sig9(2.0), "2");
        assert_eq!(sig9(1e-12), "1e-12");
        assert_eq!(sig9(-3.3729134660e-12), "-3.37291347e-12");
        assert_eq!(sig9(1234567891234.0), "1.23456789e12");
    }

    #[test]
    fn json_round_trips_bytes() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: u64,
            c: Vec<f64>,
            d: Option<f64>,
        }
        let s = to_json(&R { a: 0.1, b: 7, c: vec![1.0 / 3.0, -2.5e-300], d: None }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(to_json(&v).unwrap(), s);
        assert_eq!(v["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn surface_table_parsing() {
        let t = "n,xi,alpha,sigma,bias,variance\n50,0,0.999,1,0.5,3\n100,0.1,0.999,1,0.3,2\n";
        let (rows, a, s) = parse_surface(t).unwrap();
        assert_eq!((rows.len(), a, s), (2, 0.999, 1.0));
        assert!(parse_surface("n,xi\n1,2\n").is_err());
        assert!(parse_surface("n,xi,alpha,sigma,bias,variance\n50,0,0.99,1,0.5,3\n50,0,0.999,1,0.5,3\n").is_err());
    }
}
