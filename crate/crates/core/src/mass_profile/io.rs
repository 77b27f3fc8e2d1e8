//! CSV files with a JSON sidecar holding grid and tail metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Grid, MassProfile, PointMeasure, TailModel};
use crate::error::{usage, Result};

#[derive(Serialize, Deserialize)]
struct ProfileMeta {
    grid: Grid,
    tail: TailModel,
}

#[derive(Serialize, Deserialize)]
struct PointMeta {
    weight: f64,
    count: usize,
}

pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl MassProfile {
    /// Writes `x,v` rows and the metadata sidecar next to `path`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,v")?;
        for (x, v) in self.grid.nodes().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        w.flush()?;
        let meta = ProfileMeta { grid: self.grid, tail: self.tail.clone() };
        std::fs::write(sidecar(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<MassProfile> {
        let meta: ProfileMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
        let mut rdr = csv::Reader::from_path(path)?;
        let mut values = Vec::with_capacity(meta.grid.count);
        for row in rdr.deserialize() {
            let (_x, v): (f64, f64) = row?;
            values.push(v);
        }
        if values.len() != meta.grid.count {
            return usage(format!(
                "{} rows in {} but the sidecar declares {} nodes",
                values.len(),
                path.display(),
                meta.grid.count
            ));
        }
        MassProfile::signed(meta.grid, values, meta.tail)
    }
}

impl PointMeasure {
    /// Writes one `atom` per row; the weight goes into the sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "atom")?;
        for a in &self.atoms {
            writeln!(w, "{a}")?;
        }
        w.flush()?;
        let meta = PointMeta { weight: self.weight, count: self.atoms.len() };
        std::fs::write(sidecar(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<PointMeasure> {
        let meta: PointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)?;
        let mut rdr = csv::Reader::from_path(path)?;
        let atoms = rdr.deserialize::<f64>().collect::<std::result::Result<Vec<_>, _>>()?;
        if atoms.len() != meta.count {
            return usage(format!("{} atoms in {} but {} declared", atoms.len(), path.display(), meta.count));
        }
        PointMeasure::new(atoms, meta.weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        let g = Grid::new(-1.0, 2.0, 0.01).unwrap();
        let v = MassProfile::from_fn(g, TailModel::Power { coef: 1.0, exponent: 1.5 }, |x| {
            x.max(0.0).powf(1.5)
        })
        .unwrap();
        v.write_csv(&p).unwrap();
        let back = MassProfile::read_csv(&p).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn points_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mu.csv");
        let mu = PointMeasure::new(vec![0.1, 1.0 / 3.0, -2.5e-7], 0.25).unwrap();
        mu.write_csv(&p).unwrap();
        assert_eq!(PointMeasure::read_csv(&p).unwrap(), mu);
    }
}
