//! CSV and JSON writers.
//!
//! Floats go out in shortest round-trip form, so re-parsing an output file
//! recovers every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kp_rankone::ScaledComplex;
use serde_json::Value;

use crate::CliError;

/// One CSV row: coordinates, then the sample value.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coords: Vec<f64>,
    pub value: Option<ScaledComplex>,
    pub pole: bool,
}

/// Shortest representation that parses back to the same `f64`.
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

pub fn csv(header: &[&str], rows: &[Row]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str(",re,im,log_magnitude,pole\n");
    for row in rows {
        for c in &row.coords {
            let _ = write!(out, "{},", float(*c));
        }
        match row.value {
            Some(v) => {
                let z = v.to_complex();
                let _ = write!(out, "{},{},{},", float(z.re), float(z.im), float(v.log_magnitude()));
            }
            None => out.push_str(",,,"),
        }
        out.push_str(if row.pole { "true\n" } else { "false\n" });
    }
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn json(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -2.0 / 9.0, 1e-300, 6.02e23, f64::MIN_POSITIVE, 1.0 / 3.0] {
            assert_eq!(float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [
            Row {
                coords: vec![0.5],
                value: Some(ScaledComplex::from_complex(Complex64::new(2.0, -1.0))),
                pole: false,
            },
            Row {
                coords: vec![1.0],
                value: None,
                pole: true,
            },
        ];
        let text = csv(&["t1"], &rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t1,re,im,log_magnitude,pole");
        assert!(lines[1].starts_with("0.5,2.0,-1.0,"));
        assert!(lines[1].ends_with(",false"));
        assert_eq!(lines[2], "1.0,,,,true");
    }
}
