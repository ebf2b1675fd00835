//! Text and binary serialization of fields, trajectories and control results.
//!
//! Floats are written with `{:e}`, which is the shortest representation that
//! parses back to the same bits, so identical data give identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::linalg::C64;
use crate::spectral::Field;

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

fn parse_i64(s: &str) -> Result<i64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad integer {s:?}")))
}

/// Collects `(n, value)` pairs into a field; every mode `−N..=N` must appear once.
fn assemble(entries: Vec<(i64, C64)>) -> Result<Field> {
    let nmax = entries.iter().map(|(k, _)| k.unsigned_abs()).max().unwrap_or(0) as usize;
    let mut f = Field::zeros(nmax);
    let mut seen = vec![false; 2 * nmax + 1];
    for (k, v) in entries {
        let j = (k + nmax as i64) as usize;
        if seen[j] {
            return Err(Error::Parse(format!("mode {k} repeated")));
        }
        seen[j] = true;
        f.set(k, v);
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Parse(format!("mode {} missing", j as i64 - nmax as i64)));
    }
    Ok(f)
}

/// One `n,re,im` row per mode, with a header line.
pub fn field_to_csv(f: &Field) -> String {
    let mut out = String::from("n,re,im\n");
    for (j, z) in f.coeffs.iter().enumerate() {
        writeln!(out, "{},{:e},{:e}", f.mode(j), z.re, z.im).expect("string write");
    }
    out
}

pub fn field_from_csv(text: &str) -> Result<Field> {
    let mut entries = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('n')) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!("expected 3 columns in {line:?}")));
        }
        entries.push((parse_i64(cols[0])?, C64::new(parse_f64(cols[1])?, parse_f64(cols[2])?)));
    }
    assemble(entries)
}

/// `[[n, re, im], ...]`.
pub fn field_to_json(f: &Field) -> Value {
    Value::Array(f.coeffs.iter().enumerate().map(|(j, z)| json!([f.mode(j), z.re, z.im])).collect())
}

pub fn field_from_json(v: &Value) -> Result<Field> {
    let arr = v.as_array().ok_or_else(|| Error::Parse("field must be an array".into()))?;
    let mut entries = Vec::with_capacity(arr.len());
    for item in arr {
        let t = item.as_array().filter(|t| t.len() == 3);
        let t = t.ok_or_else(|| Error::Parse(format!("expected [n, re, im], got {item}")))?;
        let n = t[0].as_i64().ok_or_else(|| Error::Parse(format!("bad mode {}", t[0])))?;
        let num = |x: &Value| x.as_f64().ok_or_else(|| Error::Parse(format!("bad number {x}")));
        entries.push((n, C64::new(num(&t[1])?, num(&t[2])?)));
    }
    assemble(entries)
}

/// One `k,t,n,re,im` row per record and mode.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut out = String::from("k,t,n,re,im\n");
    for (k, (t, f)) in traj.t.iter().zip(&traj.values).enumerate() {
        for (j, z) in f.coeffs.iter().enumerate() {
            writeln!(out, "{k},{t:e},{},{:e},{:e}", f.mode(j), z.re, z.im).expect("string write");
        }
    }
    out
}

pub fn trajectory_from_csv(text: &str) -> Result<Trajectory> {
    let mut records: Vec<(f64, Vec<(i64, C64)>)> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('k')) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("expected 5 columns in {line:?}")));
        }
        let k = parse_i64(cols[0])?;
        let t = parse_f64(cols[1])?;
        if k as usize == records.len() && k >= 0 {
            records.push((t, Vec::new()));
        } else if k < 0 || k as usize + 1 != records.len() {
            return Err(Error::Parse(format!("record index {k} out of order")));
        }
        records.last_mut().expect("pushed").1.push((parse_i64(cols[2])?, C64::new(parse_f64(cols[3])?, parse_f64(cols[4])?)));
    }
    let mut t = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len());
    for (tk, entries) in records {
        t.push(tk);
        values.push(assemble(entries)?);
    }
    Ok(Trajectory { t, values })
}

/// Little-endian `f64` block: header `N`, record count, then per record `t`
/// followed by `(re, im)` for modes `−N..=N`.
pub fn trajectory_to_bin(traj: &Trajectory) -> Vec<u8> {
    let n = traj.values.first().map_or(0, Field::nmax);
    let mut out = Vec::with_capacity(8 * (2 + traj.t.len() * (1 + 2 * (2 * n + 1))));
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    put(n as f64);
    put(traj.t.len() as f64);
    for (t, f) in traj.t.iter().zip(&traj.values) {
        put(*t);
        for z in f.coeffs.iter() {
            put(z.re);
            put(z.im);
        }
    }
    out
}

pub fn trajectory_from_bin(bytes: &[u8]) -> Result<Trajectory> {
    if bytes.len() % 8 != 0 || bytes.len() < 16 {
        return Err(Error::Parse("binary block is not a sequence of f64".into()));
    }
    let words: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let (n, records) = (words[0], words[1]);
    if n < 0.0 || records < 0.0 || n.fract() != 0.0 || records.fract() != 0.0 {
        return Err(Error::Parse("bad header".into()));
    }
    let (n, records) = (n as usize, records as usize);
    let stride = 1 + 2 * (2 * n + 1);
    if words.len() != 2 + records * stride {
        return Err(Error::Length { expected: 8 * (2 + records * stride), got: bytes.len() });
    }
    let mut t = Vec::with_capacity(records);
    let mut values = Vec::with_capacity(records);
    for rec in words[2..].chunks_exact(stride) {
        t.push(rec[0]);
        let mut f = Field::zeros(n);
        for (j, p) in rec[1..].chunks_exact(2).enumerate() {
            f.coeffs[j] = C64::new(p[0], p[1]);
        }
        values.push(f);
    }
    Ok(Trajectory { t, values })
}

/// Writes `control.csv`, `state.csv` and `report.json` into `dir`.
pub fn write_control_result(dir: &Path, control: &Trajectory, state: &Trajectory, report: &Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("control.csv"), trajectory_to_csv(control))?;
    fs::write(dir.join("state.csv"), trajectory_to_csv(state))?;
    write_json(&dir.join("report.json"), report)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field_strategy() -> impl Strategy<Value = Field> {
        (0usize..6).prop_flat_map(|n| {
            prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2 * n + 1)
                .prop_map(move |v| Field::from_vec(v.into_iter().map(|(a, b)| C64::new(a, b)).collect::<Vec<_>>().into()))
        })
    }

    fn traj_strategy() -> impl Strategy<Value = Trajectory> {
        (0usize..4, 0usize..5).prop_flat_map(|(n, k)| {
            prop::collection::vec(prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2 * n + 1), k).prop_map(|recs| {
                let t = (0..recs.len()).map(|k| 0.1 * k as f64).collect();
                let values = recs
                    .into_iter()
                    .map(|v| Field::from_vec(v.into_iter().map(|(a, b)| C64::new(a, b)).collect::<Vec<_>>().into()))
                    .collect();
                Trajectory { t, values }
            })
        })
    }

    proptest! {
        #[test]
        fn field_text_round_trips_bitwise(f in field_strategy()) {
            prop_assert_eq!(&field_from_csv(&field_to_csv(&f)).unwrap(), &f);
            prop_assert_eq!(&field_from_json(&field_to_json(&f)).unwrap(), &f);
        }

        #[test]
        fn trajectory_round_trips_bitwise(tr in traj_strategy()) {
            let back = trajectory_from_csv(&trajectory_to_csv(&tr)).unwrap();
            prop_assert_eq!(&back.t, &tr.t);
            prop_assert_eq!(&back.values, &tr.values);
            let back = trajectory_from_bin(&trajectory_to_bin(&tr)).unwrap();
            prop_assert_eq!(&back.t, &tr.t);
            prop_assert_eq!(&back.values, &tr.values);
        }
    }

    #[test]
    fn csv_layout() {
        let mut f = Field::zeros(1);
        f.set(1, C64::new(0.5, -2.0));
        assert_eq!(field_to_csv(&f), "n,re,im\n-1,0e0,0e0\n0,0e0,0e0\n1,5e-1,-2e0\n");
        assert_eq!(field_to_json(&f).to_string(), "[[-1,0.0,0.0],[0,0.0,0.0],[1,0.5,-2.0]]");
    }

    #[test]
    fn binary_header_and_size() {
        let tr = Trajectory { t: vec![0.0, 1.0], values: vec![Field::zeros(2); 2] };
        let b = trajectory_to_bin(&tr);
        assert_eq!(b.len(), 8 * (2 + 2 * 11));
        assert_eq!(f64::from_le_bytes(b[..8].try_into().unwrap()), 2.0);
        assert_eq!(f64::from_le_bytes(b[8..16].try_into().unwrap()), 2.0);
        assert!(trajectory_from_bin(&b[..b.len() - 8]).is_err());
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(field_from_csv("n,re,im\n-1,0,0\n1,0,0\n").is_err());
        assert!(field_from_csv("0,1,2,3\n").is_err());
        assert!(field_from_csv("0,x,0\n").is_err());
        assert!(field_from_json(&json!([[0, 1.0]])).is_err());
        assert!(field_from_json(&json!([[0, 1.0, 0.0], [0, 1.0, 0.0]])).is_err());
        assert!(trajectory_from_csv("1,0,0,0,0\n").is_err());
    }
}
