//! Reading and writing densities, particle paths and reports.
//!
//! Formats:
//!
//! * Density CSV: a `# left=<f> dy=<f>` header followed by one value per
//!   line, written with 17 significant digits so that round trips are exact.
//! * Particle path CSV: one row per snapshot, `t,x_1,...,x_n`.
//! * Particle path binary: magic `RODP`, `u32` version, `u64` particle count,
//!   `u64` snapshot count, the times, then the positions snapshot by
//!   snapshot. Everything little-endian.
//! * Density path: a long-format CSV `t,y,value` next to a JSON manifest.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::Side;
use crate::measures::{EmpiricalMeasure, GridDensity};
use crate::pde::DensityPath;
use crate::simulate::ParticlePath;

const MAGIC: &[u8; 4] = b"RODP";
const VERSION: u32 = 1;

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

pub fn write_density_csv(path: impl AsRef<Path>, rho: &GridDensity) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# left={:.16e} dy={:.16e}", rho.left(), rho.dy())?;
    for v in rho.values() {
        writeln!(w, "{v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_csv(path: impl AsRef<Path>) -> Result<GridDensity> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut header = None;
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let mut left = None;
            let mut dy = None;
            for tok in rest.split_whitespace() {
                match tok.split_once('=') {
                    Some(("left", v)) => left = Some(parse_f64(v)?),
                    Some(("dy", v)) => dy = Some(parse_f64(v)?),
                    _ => {}
                }
            }
            if let (Some(l), Some(d)) = (left, dy) {
                header = Some((l, d));
            }
        } else if !line.is_empty() {
            values.push(parse_f64(line)?);
        }
    }
    let (left, dy) = header.ok_or_else(|| Error::Parse("missing `# left= dy=` header".into()))?;
    GridDensity::from_normalized(left, dy, values)
}

pub fn write_particle_path_csv(path: impl AsRef<Path>, p: &ParticlePath) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "t")?;
    for i in 0..p.n() {
        write!(w, ",x{i}")?;
    }
    writeln!(w)?;
    for (t, s) in p.times.iter().zip(&p.states) {
        write!(w, "{t:.16e}")?;
        for x in s.points() {
            write!(w, ",{x:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_particle_path_binary(path: impl AsRef<Path>, p: &ParticlePath) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(p.n() as u64).to_le_bytes())?;
    w.write_all(&(p.times.len() as u64).to_le_bytes())?;
    for t in &p.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for s in &p.states {
        for x in s.points() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary particle path. The format does not record which side the
/// positions live on, so the caller supplies it.
pub fn read_particle_path_binary(path: impl AsRef<Path>, side: Side) -> Result<ParticlePath> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a particle path file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported particle path version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut read_f64 = |r: &mut BufReader<fs::File>| -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let times = (0..count).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        let xs = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        states.push(EmpiricalMeasure::new(xs)?);
    }
    Ok(ParticlePath { times, states, side })
}

/// Metadata written next to a density path CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPathManifest {
    pub side: Side,
    pub left: f64,
    pub dy: f64,
    pub count: usize,
    pub times: Vec<f64>,
    pub csv: String,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_density_path(dir: impl AsRef<Path>, stem: &str, path: &DensityPath) -> Result<()> {
    let dir = dir.as_ref();
    let first = path.states.first().ok_or_else(|| Error::InvalidParameter("empty density path".into()))?;
    let csv = format!("{stem}.csv");
    let mut w = BufWriter::new(fs::File::create(dir.join(&csv))?);
    writeln!(w, "t,y,value")?;
    for (t, s) in path.times.iter().zip(&path.states) {
        for (j, v) in s.values().iter().enumerate() {
            writeln!(w, "{t:.16e},{:.16e},{v:.16e}", s.center(j))?;
        }
    }
    w.flush()?;
    let manifest = DensityPathManifest {
        side: path.side,
        left: first.left(),
        dy: first.dy(),
        count: first.len(),
        times: path.times.clone(),
        csv,
    };
    write_json(dir.join(format!("{stem}.json")), &manifest)
}

pub fn read_density_path(dir: impl AsRef<Path>, stem: &str) -> Result<DensityPath> {
    let dir = dir.as_ref();
    let m: DensityPathManifest = read_json(dir.join(format!("{stem}.json")))?;
    let reader = BufReader::new(fs::File::open(dir.join(&m.csv))?);
    let mut values = Vec::with_capacity(m.count * m.times.len());
    for line in reader.lines().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = line.rsplit(',').next().ok_or_else(|| Error::Parse(line.clone()))?;
        values.push(parse_f64(v)?);
    }
    if values.len() != m.count * m.times.len() {
        return Err(Error::Parse("density path CSV does not match its manifest".into()));
    }
    let states = values
        .chunks(m.count)
        .map(|c| GridDensity::from_normalized(m.left, m.dy, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityPath { times: m.times, states, side: m.side })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rho = GridDensity::from_fn(-3.0, 0.01, 600, |y| (-(y * y)).exp() / 3.0).unwrap();
        write_density_csv(dir.path().join("r.csv"), &rho).unwrap();
        assert_eq!(read_density_csv(dir.path().join("r.csv")).unwrap(), rho);
    }

    #[test]
    fn particle_path_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ParticlePath {
            times: vec![0.0, 0.5],
            states: vec![
                EmpiricalMeasure::new(vec![0.1, -1.0 / 3.0, 2.0]).unwrap(),
                EmpiricalMeasure::new(vec![0.2, -0.3, 2.5]).unwrap(),
            ],
            side: Side::Compressed,
        };
        let f = dir.path().join("p.bin");
        write_particle_path_binary(&f, &p).unwrap();
        assert_eq!(read_particle_path_binary(&f, Side::Compressed).unwrap(), p);
        let bytes = fs::read(&f).unwrap();
        assert_eq!(&bytes[..4], b"RODP");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 8 * 2 + 8 * 6);
        write_particle_path_csv(dir.path().join("p.csv"), &p).unwrap();
        let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn density_path_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rho = GridDensity::uniform(0.0, 1.0, 8).unwrap();
        let path = DensityPath::stationary(rho, vec![0.0, 0.25, 0.5], Side::Expanded);
        write_density_path(dir.path(), "rho", &path).unwrap();
        assert_eq!(read_density_path(dir.path(), "rho").unwrap(), path);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x");
        fs::write(&f, b"NOPE").unwrap();
        assert!(read_particle_path_binary(&f, Side::Expanded).is_err());
        fs::write(&f, "1\n2\n").unwrap();
        assert!(matches!(read_density_csv(&f), Err(Error::Parse(_))));
    }
}
