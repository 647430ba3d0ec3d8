//! Dataset, ground-truth and draws files.
//!
//! Dataset CSV header: `x1_0,...,x1_{p-1},z1,w1,x2,z2,w2,y`. Binary columns
//! are written `0`/`1`; reals use the shortest decimal that round-trips.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::domain::{Dataset, ObservedUnit};
use crate::error::{Error, Result};
use crate::gibbs::FitResult;
use crate::model::Theta;
use crate::simulate::GroundTruth;

const TAIL: [&str; 6] = ["z1", "w1", "x2", "z2", "w2", "y"];

pub fn dataset_header(p: usize) -> Vec<String> {
    (0..p)
        .map(|j| format!("x1_{j}"))
        .chain(TAIL.iter().map(|s| s.to_string()))
        .collect()
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn unit_fields(u: &ObservedUnit) -> Vec<String> {
    let mut row: Vec<String> = u.x1.iter().map(|v| v.to_string()).collect();
    row.extend([
        bit(u.z1).to_string(),
        bit(u.w1).to_string(),
        u.x2.to_string(),
        bit(u.z2).to_string(),
        bit(u.w2).to_string(),
        u.y.to_string(),
    ]);
    row
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dataset_header(data.covariate_dim()))
        .map_err(csv_err)?;
    for u in data.units() {
        w.write_record(unit_fields(u)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("{other:?}")),
    }
}

fn covariate_dim_from_header(header: &[String]) -> Result<usize> {
    if header.len() < TAIL.len() {
        return Err(Error::Schema(format!(
            "header has {} columns, need at least {}",
            header.len(),
            TAIL.len()
        )));
    }
    let p = header.len() - TAIL.len();
    let expected = dataset_header(p);
    if header != expected.as_slice() {
        return Err(Error::Schema(format!(
            "header `{}` does not match `{}`",
            header.join(","),
            expected.join(",")
        )));
    }
    Ok(p)
}

fn parse_bit(row: usize, col: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Value {
            row,
            message: format!("{col} must be 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_real(row: usize, col: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Value {
        row,
        message: format!("{col} is not a number: `{s}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Value {
            row,
            message: format!("{col} is not finite"),
        });
    }
    Ok(v)
}

/// Row numbers in errors count data rows from 1.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let header: Vec<String> = match records.next() {
        None => return Err(Error::Schema("empty file".into())),
        Some(rec) => rec.map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect(),
    };
    let p = covariate_dim_from_header(&header)?;
    let mut units = Vec::new();
    for (k, rec) in records.enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Value {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != p + TAIL.len() {
            return Err(Error::Value {
                row,
                message: format!("expected {} fields, got {}", p + TAIL.len(), rec.len()),
            });
        }
        let x1 = (0..p)
            .map(|j| parse_real(row, &header[j], &rec[j]))
            .collect::<Result<Vec<_>>>()?;
        let f = |i: usize| &rec[p + i];
        units.push(ObservedUnit {
            x1,
            z1: parse_bit(row, "z1", f(0))?,
            w1: parse_bit(row, "w1", f(1))?,
            x2: parse_real(row, "x2", f(2))?,
            z2: parse_bit(row, "z2", f(3))?,
            w2: parse_bit(row, "w2", f(4))?,
            y: parse_real(row, "y", f(5))?,
        });
    }
    Dataset::new(p, units)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_dataset_csv(BufReader::new(File::open(path)?))
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_dataset_csv(data, &mut f)?;
    f.flush()?;
    Ok(())
}

/// JSON mirror of the CSV: an array of row objects keyed by the CSV header.
pub fn dataset_to_json(data: &Dataset) -> Value {
    let header = dataset_header(data.covariate_dim());
    let rows = data
        .units()
        .iter()
        .map(|u| {
            let mut m = Map::new();
            for (j, v) in u.x1.iter().enumerate() {
                m.insert(header[j].clone(), Value::from(*v));
            }
            m.insert("z1".into(), Value::from(u.z1 as u8));
            m.insert("w1".into(), Value::from(u.w1 as u8));
            m.insert("x2".into(), Value::from(u.x2));
            m.insert("z2".into(), Value::from(u.z2 as u8));
            m.insert("w2".into(), Value::from(u.w2 as u8));
            m.insert("y".into(), Value::from(u.y));
            Value::Object(m)
        })
        .collect();
    Value::Array(rows)
}

pub fn dataset_from_json(v: &Value) -> Result<Dataset> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Schema("expected an array of rows".into()))?;
    let Some(first) = rows.first().and_then(Value::as_object) else {
        return Err(Error::Schema("no rows".into()));
    };
    let p = first.keys().filter(|k| k.starts_with("x1_")).count();
    let header = dataset_header(p);
    let mut units = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let row = k + 1;
        let obj = r.as_object().ok_or_else(|| Error::Value {
            row,
            message: "row is not an object".into(),
        })?;
        if obj.len() != header.len() || header.iter().any(|h| !obj.contains_key(h)) {
            return Err(Error::Schema(format!("row {row} keys do not match `{}`", header.join(","))));
        }
        let num = |key: &str| -> Result<f64> {
            obj[key].as_f64().filter(|v| v.is_finite()).ok_or_else(|| Error::Value {
                row,
                message: format!("{key} is not a finite number"),
            })
        };
        let bitv = |key: &str| -> Result<bool> {
            match obj[key].as_u64() {
                Some(0) => Ok(false),
                Some(1) => Ok(true),
                _ => Err(Error::Value {
                    row,
                    message: format!("{key} must be 0 or 1"),
                }),
            }
        };
        units.push(ObservedUnit {
            x1: (0..p).map(|j| num(&header[j])).collect::<Result<_>>()?,
            z1: bitv("z1")?,
            w1: bitv("w1")?,
            x2: num("x2")?,
            z2: bitv("z2")?,
            w2: bitv("w2")?,
            y: num("y")?,
        });
    }
    Dataset::new(p, units)
}

/// Sidecar path for a dataset: `data.csv` -> `data.truth.json`.
pub fn truth_path(dataset: &Path) -> std::path::PathBuf {
    dataset.with_extension("truth.json")
}

pub fn write_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, truth)?;
    f.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `iter,chain,late,<theta fields>`; a missing LATE draw is an empty field.
pub fn write_draws_csv<W: Write>(fit: &FitResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iter".to_string(), "chain".into(), "late".into()];
    header.extend(Theta::field_names(fit.covariate_dim));
    w.write_record(&header).map_err(csv_err)?;
    for chain in &fit.chains {
        for d in &chain.draws {
            let mut row = vec![
                d.iter.to_string(),
                chain.chain.to_string(),
                d.late.map(|v| v.to_string()).unwrap_or_default(),
            ];
            row.extend(d.theta.to_flat().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-chain LATE draws from a draws CSV, missing draws skipped.
pub fn read_late_draws<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("draws file has no `{name}` column")))
    };
    let (chain_col, late_col) = (col("chain")?, col("late")?);
    let mut chains: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let chain: usize = rec[chain_col].parse().map_err(|_| Error::Value {
            row: k + 1,
            message: "bad chain index".into(),
        })?;
        if chains.len() <= chain {
            chains.resize_with(chain + 1, Vec::new);
        }
        if !rec[late_col].is_empty() {
            chains[chain].push(parse_real(k + 1, "late", &rec[late_col])?);
        }
    }
    Ok(chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_dataset, DgpConfig};
    use proptest::prelude::*;

    #[test]
    fn write_read_write_is_byte_identical() {
        let (data, _) = simulate_dataset(&DgpConfig::with_defaults(200, 3, 4)).unwrap();
        let mut first = Vec::new();
        write_dataset_csv(&data, &mut first).unwrap();
        let back = read_dataset_csv(first.as_slice()).unwrap();
        assert_eq!(back, data);
        let mut second = Vec::new();
        write_dataset_csv(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn non_binary_assignment_names_row() {
        let text = "x1_0,z1,w1,x2,z2,w2,y\n0.5,0,0,1.0,1,1,2.0\n0.1,2,0,1.0,1,1,2.0\n";
        match read_dataset_csv(text.as_bytes()) {
            Err(Error::Value { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("z1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let text = "z1,w1,x2,z2,w2,y\n0,0,NaN,1,1,2.0\n";
        assert!(matches!(read_dataset_csv(text.as_bytes()), Err(Error::Value { row: 1, .. })));
        let text = "z1,w1,x2,z2,w2,y\n0,0,1.0,1,1,inf\n";
        assert!(matches!(read_dataset_csv(text.as_bytes()), Err(Error::Value { row: 1, .. })));
    }

    #[test]
    fn empty_and_bad_header() {
        assert!(matches!(read_dataset_csv(&b""[..]), Err(Error::Schema(_))));
        let text = "x1_0,z1,w1,x2,w2,z2,y\n";
        assert!(matches!(read_dataset_csv(text.as_bytes()), Err(Error::Schema(_))));
        let text = "a,b\n";
        assert!(matches!(read_dataset_csv(text.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn json_mirror() {
        let (data, _) = simulate_dataset(&DgpConfig::with_defaults(20, 2, 5)).unwrap();
        let v = dataset_to_json(&data);
        assert!(v[0].get("x1_1").is_some() && v[0].get("y").is_some());
        assert_eq!(dataset_from_json(&v).unwrap(), data);
    }

    proptest! {
        #[test]
        fn finite_doubles_round_trip(vals in proptest::collection::vec(
            (any::<f64>().prop_filter("finite", |v| v.is_finite()),
             any::<f64>().prop_filter("finite", |v| v.is_finite()),
             any::<f64>().prop_filter("finite", |v| v.is_finite()),
             any::<[bool; 4]>()), 1..20)) {
            let units: Vec<ObservedUnit> = vals.iter().map(|(a, b, c, z)| ObservedUnit {
                x1: vec![*a], z1: z[0], w1: z[1], x2: *b, z2: z[2], w2: z[3], y: *c,
            }).collect();
            let data = Dataset::new(1, units).unwrap();
            let mut buf = Vec::new();
            write_dataset_csv(&data, &mut buf).unwrap();
            prop_assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), data);
        }
    }
}
