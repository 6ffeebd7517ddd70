//! Observation matrices and CSV ingestion.

use crate::error::{Error, Result};
use std::path::Path;

/// An n x d matrix of observations, rows = observations, columns = variables
/// (or stations), stored row-major with optional header names.
#[derive(Debug, Clone)]
pub struct ObsMatrix {
    n: usize,
    d: usize,
    names: Vec<String>,
    data: Vec<f64>,
}

impl ObsMatrix {
    pub fn new(n: usize, d: usize, names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if names.len() != d {
            return Err(Error::Data(format!(
                "expected {d} column names, got {}",
                names.len()
            )));
        }
        if data.len() != n * d {
            return Err(Error::Data(format!(
                "expected {n}x{d} = {} values, got {}",
                n * d,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("observations must be finite".to_string()));
        }
        Ok(Self { n, d, names, data })
    }

    pub fn from_columns(names: Vec<String>, cols: &[Vec<f64>]) -> Result<Self> {
        let d = cols.len();
        if d == 0 {
            return Err(Error::Data("no columns".to_string()));
        }
        let n = cols[0].len();
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Data("columns have unequal lengths".to_string()));
        }
        let mut data = vec![0.0; n * d];
        for (j, col) in cols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate() {
                data[i * d + j] = x;
            }
        }
        Self::new(n, d, names, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        self.column(j).iter().sum::<f64>() / self.n as f64
    }

    /// Reads a headered CSV: columns = variables, rows = observations.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Data(format!("bad CSV header: {e}")))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let d = names.len();
        if d == 0 {
            return Err(Error::Data("CSV has no columns".to_string()));
        }
        let mut data = Vec::new();
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Data(format!("bad CSV record: {e}")))?;
            if rec.len() != d {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {d}",
                    n + 1,
                    rec.len()
                )));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("non-numeric value '{field}'")))?;
                data.push(v);
            }
            n += 1;
        }
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {n}")));
        }
        Self::new(n, d, names, data)
    }

    /// Writes the matrix back out as headered CSV using shortest
    /// round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(&self.names)?;
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Station coordinates keyed by name, read from a CSV with columns
/// `station,x,y`.
#[derive(Debug, Clone)]
pub struct StationCoords {
    pub names: Vec<String>,
    pub coords: Vec<(f64, f64)>,
}

impl StationCoords {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut names = Vec::new();
        let mut coords = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Data(format!("bad coords record: {e}")))?;
            if rec.len() < 3 {
                return Err(Error::Data(
                    "coords CSV needs columns station,x,y".to_string(),
                ));
            }
            let x: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric coordinate '{}'", &rec[1])))?;
            let y: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric coordinate '{}'", &rec[2])))?;
            names.push(rec[0].trim().to_string());
            coords.push((x, y));
        }
        if names.is_empty() {
            return Err(Error::Data("coords CSV is empty".to_string()));
        }
        Ok(Self { names, coords })
    }

    /// Orders coordinates to match the data header, erroring on any
    /// station missing from the coords file.
    pub fn aligned_to(&self, station_names: &[String]) -> Result<Vec<(f64, f64)>> {
        station_names
            .iter()
            .map(|name| {
                self.names
                    .iter()
                    .position(|n| n == name)
                    .map(|i| self.coords[i])
                    .ok_or_else(|| Error::Data(format!("station '{name}' missing from coords")))
            })
            .collect()
    }
}

/// Reads per-station GEV margin parameters from a CSV with columns
/// `station,mu,gamma,zeta`, ordered to match `names`.
pub fn read_margins_csv(
    path: &Path,
    names: &[String],
) -> Result<Vec<crate::models::gev::GevMargin>> {
    use crate::models::gev::GevMargin;
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot read margins {}: {e}", path.display())))?;
    let mut by_name = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("bad margins record: {e}")))?;
        if rec.len() < 4 {
            return Err(Error::Data(
                "margins CSV needs columns station,mu,gamma,zeta".to_string(),
            ));
        }
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric margin value '{}'", &rec[i])))
        };
        by_name.insert(
            rec[0].trim().to_string(),
            GevMargin::new(parse(1)?, parse(2)?, parse(3)?)?,
        );
    }
    names
        .iter()
        .map(|n| {
            by_name
                .get(n)
                .copied()
                .ok_or_else(|| Error::Data(format!("station '{n}' missing from margins")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_extraction_and_means() {
        let m = ObsMatrix::from_columns(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap();
        assert_eq!(m.n(), 3);
        assert_eq!(m.column(1), vec![4.0, 5.0, 6.0]);
        assert_eq!(m.column_mean(0), 2.0);
        assert_eq!(m.row(1), &[2.0, 5.0]);
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let m = ObsMatrix::from_columns(
            vec!["u".into(), "v".into()],
            &[
                vec![0.123456789012345, -1e-17, 3.0],
                vec![9.87654321098765e110, 2.5, -0.0001],
            ],
        )
        .unwrap();
        m.write_csv(&path).unwrap();
        let back = ObsMatrix::read_csv(&path).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(m.get(i, j), back.get(i, j));
            }
        }
    }

    #[test]
    fn rejects_short_and_bad_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n").unwrap();
        assert!(ObsMatrix::read_csv(&path).is_err());
        std::fs::write(&path, "a,b\n1.0,x\n3.0,4.0\n").unwrap();
        assert!(ObsMatrix::read_csv(&path).is_err());
    }
}
