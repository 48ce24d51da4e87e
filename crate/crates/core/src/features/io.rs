//! Feature-matrix file formats.
//!
//! Binary `ADFM`: magic, version, row count (feature dimension), column
//! count (segments), labels as u16 LE, then values as f64 LE column-major
//! (one column per segment). A plain CSV export (one row per vector, label
//! last) is provided for other tools.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::FEATURE_DIM;

const MAGIC: &[u8; 4] = b"ADFM";
const VERSION: u32 = 1;

pub fn write_adfm(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let m = matrix.len();
    let mut out = Vec::with_capacity(16 + 2 * m + 8 * m * FEATURE_DIM);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u32).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for &label in matrix.labels() {
        out.extend_from_slice(&label.to_le_bytes());
    }
    // Column-major: one segment's vector is contiguous, which is row i of
    // the in-memory matrix.
    for i in 0..m {
        for &v in matrix.vector(i).iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_adfm(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path)?;
    parse_adfm(&bytes)
}

fn parse_adfm(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < 16 {
        return Err(Error::Format("feature file too small for a header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad feature-file magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "feature-file version {version}, expected {VERSION}"
        )));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if rows != FEATURE_DIM {
        return Err(Error::Format(format!(
            "feature dimension {rows}, expected {FEATURE_DIM}"
        )));
    }
    let label_bytes = cols
        .checked_mul(2)
        .ok_or_else(|| Error::Format("column count overflows".into()))?;
    let value_bytes = cols
        .checked_mul(rows * 8)
        .ok_or_else(|| Error::Format("column count overflows".into()))?;
    let expect = 16 + label_bytes + value_bytes;
    if bytes.len() != expect {
        return Err(Error::Format(format!(
            "feature file holds {} bytes, expected {expect}",
            bytes.len()
        )));
    }

    let mut labels = Vec::with_capacity(cols);
    let mut pos = 16;
    for _ in 0..cols {
        labels.push(u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()));
        pos += 2;
    }
    let mut data = Array2::zeros((cols, rows));
    for i in 0..cols {
        for j in 0..rows {
            data[(i, j)] = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            pos += 8;
        }
    }
    FeatureMatrix::from_parts(data, labels)
}

/// One row per vector, 2049 values then the label, full float precision.
pub fn export_csv(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let mut line = String::new();
    for i in 0..matrix.len() {
        line.clear();
        for v in matrix.vector(i).iter() {
            line.push_str(&format!("{v}"));
            line.push(',');
        }
        line.push_str(&format!("{}\n", matrix.labels()[i]));
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::features::FeatureVector;
    use crate::seeding::rng_from_seed;

    fn small_matrix(seed: u64, m: usize) -> FeatureMatrix {
        let mut rng = rng_from_seed(seed);
        let vectors = (0..m)
            .map(|i| {
                let values: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random_range(0.0..3.0)).collect();
                FeatureVector::new(values, (i % 4) as u16).unwrap()
            })
            .collect();
        FeatureMatrix::from_vectors(vectors).unwrap()
    }

    #[test]
    fn adfm_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.adfm");
        let matrix = small_matrix(4, 6);
        write_adfm(&path, &matrix).unwrap();
        let back = read_adfm(&path).unwrap();
        assert_eq!(matrix, back);
    }

    #[test]
    fn adfm_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.adfm");
        let matrix = small_matrix(4, 2);
        write_adfm(&path, &matrix).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_adfm(&path), Err(Error::Format(_))));
    }

    #[test]
    fn adfm_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.adfm");
        let matrix = small_matrix(4, 2);
        write_adfm(&path, &matrix).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_adfm(&path), Err(Error::Format(_))));
    }

    #[test]
    fn csv_parses_back_to_the_same_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let matrix = small_matrix(9, 3);
        export_csv(&path, &matrix).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), FEATURE_DIM + 1);
            for (j, field) in fields[..FEATURE_DIM].iter().enumerate() {
                let v: f64 = field.parse().unwrap();
                assert_eq!(v, matrix.vector(i)[j], "row {i} col {j}");
            }
            assert_eq!(
                fields[FEATURE_DIM].parse::<u16>().unwrap(),
                matrix.labels()[i]
            );
        }
    }
}
