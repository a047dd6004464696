//! Tensor files and CSV output.
//!
//! Tensor files are little-endian: the magic `KTN1`, a `u32` version, the
//! order as one byte, one `u64` per dimension, then the entries as `f64` in
//! row-major lexicographic order.

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::tensor::{DenseMatrix, DenseTensor};

use super::experiments::ResultRow;
use crate::tucker::AlsReport;

pub const TENSOR_MAGIC: [u8; 4] = *b"KTN1";
pub const TENSOR_VERSION: u32 = 1;

/// Size in bytes of an encoded tensor with this shape.
pub fn encoded_len(shape: &[usize]) -> usize {
    4 + 4 + 1 + 8 * shape.len() + 8 * shape.iter().product::<usize>()
}

pub fn encode_tensor(x: &DenseTensor) -> Result<Vec<u8>> {
    let order = u8::try_from(x.order())
        .map_err(|_| Error::InvalidInput(format!("tensor order {} does not fit in one byte", x.order())))?;
    let mut out = Vec::with_capacity(encoded_len(x.shape()));
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(order);
    for &d in x.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> std::result::Result<&'a [u8], FormatError> {
    let end = pos.checked_add(n).ok_or(FormatError::DimensionOverflow)?;
    if end > bytes.len() {
        return Err(FormatError::Truncated {
            needed: end,
            found: bytes.len(),
        });
    }
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> std::result::Result<DenseTensor, FormatError> {
    let mut pos = 0;
    let magic: [u8; 4] = take(bytes, &mut pos, 4)?.try_into().expect("4 bytes");
    if magic != TENSOR_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().expect("4 bytes"));
    if version != TENSOR_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let order = take(bytes, &mut pos, 1)?[0] as usize;
    let mut shape = Vec::with_capacity(order);
    for _ in 0..order {
        let d = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
        shape.push(usize::try_from(d).map_err(|_| FormatError::DimensionOverflow)?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(FormatError::DimensionOverflow)?;
    let payload = len.checked_mul(8).ok_or(FormatError::DimensionOverflow)?;
    let raw = take(bytes, &mut pos, payload)?;
    if pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - pos));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseTensor::new(shape, data).map_err(|e| FormatError::Malformed {
        line: 0,
        detail: e.to_string(),
    })
}

pub fn write_tensor(path: &Path, x: &DenseTensor) -> Result<()> {
    let bytes = encode_tensor(x)?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_tensor(&bytes).map_err(|kind| Error::Format {
        path: path.to_path_buf(),
        kind,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            kind: FormatError::Malformed {
                line,
                detail: format!("{other:?}"),
            },
        },
    }
}

/// Reads a numeric matrix from a CSV file whose first line is a header.
pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = k + 2;
        let row = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| Error::Format {
                    path: path.to_path_buf(),
                    kind: FormatError::Malformed {
                        line,
                        detail: format!("{field:?}: {e}"),
                    },
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    DenseMatrix::new(rows.len(), cols, rows.into_iter().flatten().collect())
}

pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = (0..m.cols()).map(|j| format!("c{j}")).collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| float(*v)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub const RESULT_HEADER: [&str; 11] = [
    "solver",
    "n",
    "d",
    "order",
    "seed",
    "loss",
    "ratio",
    "rows_sampled",
    "iterations",
    "wall_time_s",
    "error",
];

pub fn result_record(row: &ResultRow) -> Vec<String> {
    vec![
        row.solver.to_string(),
        row.n.to_string(),
        row.d.to_string(),
        row.order.to_string(),
        row.seed.to_string(),
        opt_float(row.loss),
        opt_float(row.ratio),
        row.rows_sampled.map(|s| s.to_string()).unwrap_or_default(),
        row.iterations.map(|s| s.to_string()).unwrap_or_default(),
        opt_float(row.wall_time.map(|t| t.as_secs_f64())),
        row.error.clone().unwrap_or_default(),
    ]
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(RESULT_HEADER).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(result_record(row)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const ALS_HEADER: [&str; 6] = ["sweep", "loss", "rre", "sweep_time_s", "mean_sweep_time_s", "final_rre"];

/// One row per completed sweep.
pub fn write_als_csv(path: &Path, report: &AlsReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(ALS_HEADER).map_err(|e| csv_error(path, e))?;
    let mean = report.mean_sweep_time().as_secs_f64();
    for (k, t) in report.sweep_times.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            float(report.sweep_losses[k + 1]),
            float(report.sweep_rre[k + 1]),
            float(t.as_secs_f64()),
            float(mean),
            float(report.rre),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
