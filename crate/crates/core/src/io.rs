//! LIBSVM text files, train/test splits, and run manifests.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// Features and 0/1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Read `label idx:value ...` lines. Labels greater than zero map to 1 and
/// everything else to 0. Indices are 1-based and must increase along a line.
/// The column count is the largest index seen unless `dims` is given, in
/// which case larger indices are an error. Blank lines and `#` comments are
/// skipped.
pub fn parse_libsvm<R: BufRead>(input: R, dims: Option<usize>) -> Result<Dataset> {
    let mut offsets = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut max_index = 0;
    for (k, line) in input.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let label_text = fields.next().expect("nonempty line has a field");
        let label: f64 = label_text
            .parse()
            .map_err(|_| parse_err(lineno, format!("label {label_text:?} is not a number")))?;
        if !label.is_finite() {
            return Err(parse_err(lineno, "label is not finite"));
        }
        y.push(u8::from(label > 0.0));
        let mut last = 0;
        for field in fields {
            let (idx, val) = field
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected index:value, got {field:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index {idx:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature value {val:?}")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices start at 1"));
            }
            if idx <= last {
                return Err(parse_err(lineno, format!("index {idx} does not increase")));
            }
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("value at index {idx} is not finite")));
            }
            if let Some(d) = dims {
                if idx > d {
                    return Err(parse_err(lineno, format!("index {idx} exceeds dims {d}")));
                }
            }
            last = idx;
            max_index = max_index.max(idx);
            if val != 0.0 {
                indices.push(idx - 1);
                values.push(val);
            }
        }
        offsets.push(values.len());
    }
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = dims.unwrap_or(max_index);
    let x = DesignMatrix::from_csr(y.len(), d, offsets, indices, values)?;
    Ok(Dataset { x, y })
}

pub fn read_libsvm_file(path: &Path, dims: Option<usize>) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file), dims)
}

/// Write labels as `+1`/`-1` and nonzero features with 17 significant digits.
pub fn write_libsvm<W: Write>(x: &DesignMatrix, y: &[u8], mut out: W) -> Result<()> {
    crate::error::check_len("label count", x.nrows(), y.len())?;
    for (i, &label) in y.iter().enumerate() {
        write!(out, "{}", if label > 0 { "+1" } else { "-1" })?;
        for (j, v) in x.row(i).iter() {
            if v != 0.0 {
                write!(out, " {}:{:.16e}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Row indices of a train/test split, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform random split of `0..n` with `n_train` training rows.
pub fn split_train_test(n: usize, n_train: usize, seed: u64) -> Result<Split> {
    if n_train >= n {
        return Err(Error::InvalidParameter(format!(
            "training size {n_train} must be below the number of rows {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn split_dataset(data: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let split = split_train_test(data.len(), n_train, seed)?;
    let pick = |rows: &[usize]| Dataset {
        x: data.x.select_rows(rows),
        y: rows.iter().map(|&i| data.y[i]).collect(),
    };
    Ok((pick(&split.train), pick(&split.test)))
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub package: String,
    pub version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            args,
            config,
            seeds,
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_small_example() {
        let data = parse_libsvm("1 3:0.5\n-1 1:2".as_bytes(), None).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.x.ncols(), 3);
        assert_eq!(data.y, vec![1, 0]);
        assert!(data.x.is_sparse());
        assert_eq!(data.x.get(0, 2), 0.5);
        assert_eq!(data.x.get(1, 0), 2.0);
        assert_eq!(data.x.get(0, 0), 0.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, line) in [
            ("1 1:1\n1 2:1 2:3\n", 2),
            ("1 1:1\n\n0 1:x\n", 3),
            ("abc 1:1\n", 1),
            ("1 0:1\n", 1),
            ("1 1-2\n", 1),
        ] {
            match parse_libsvm(text.as_bytes(), None) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(parse_libsvm("".as_bytes(), None), Err(Error::EmptyDataset)));
        assert!(matches!(parse_libsvm("1 5:1\n".as_bytes(), Some(4)), Err(Error::Parse { .. })));
    }

    #[test]
    fn dims_override_and_zero_labels() {
        let data = parse_libsvm("0 1:1\n+1 2:1 # note\n".as_bytes(), Some(10)).unwrap();
        assert_eq!(data.x.ncols(), 10);
        assert_eq!(data.y, vec![0, 1]);
    }

    #[test]
    fn libsvm_round_trip() {
        let x = DesignMatrix::from_rows(&[vec![0.1, 0.0, -1.0 / 3.0], vec![0.0, 2e-300, 12345.678]]).unwrap();
        let y = vec![1, 0];
        let mut buf = Vec::new();
        write_libsvm(&x, &y, &mut buf).unwrap();
        let back = parse_libsvm(buf.as_slice(), Some(3)).unwrap();
        assert_eq!(back.y, y);
        assert_eq!(back.x.to_dense(), x);
    }

    #[test]
    fn split_examples() {
        assert!(split_train_test(10, 10, 1).is_err());
        let a = split_train_test(100, 70, 4).unwrap();
        assert_eq!(a, split_train_test(100, 70, 4).unwrap());
        assert_eq!(a.train.len(), 70);
        assert_eq!(a.test.len(), 30);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_ne!(a, split_train_test(100, 70, 5).unwrap());
    }
}
