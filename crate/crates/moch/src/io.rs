//! Persistence: the binary field-snapshot format, CSV serializers for
//! every report type, and run manifests with content checksums.
//!
//! All text serializers return `String`s built with `{:.16e}` floats
//! (17 significant digits, full `f64` round trip) and `\n` line endings,
//! so identical inputs serialize byte-identically on every platform.
//! Writers go through a temp-file-plus-rename so concurrent sweep
//! members never observe half-written files.

use crate::besov::NormProfile;
use crate::dynamics::NormRow;
use crate::error::{MochError, Result};
use crate::estimates::{
    EnsembleSummary, InflationSummary, MemberReports, ScalingTable,
};
use crate::grid::{Grid, RealField};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const SNAPSHOT_MAGIC: [u8; 4] = *b"MOCH";
const SNAPSHOT_VERSION: u32 = 1;

/// Serialize a field to the binary snapshot layout: magic, version,
/// point count, period, then the samples, all little-endian.
pub fn snapshot_bytes(field: &RealField) -> Vec<u8> {
    let samples = field.samples();
    let mut out = Vec::with_capacity(4 + 4 + 8 + 8 + 8 * samples.len());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    out.extend_from_slice(&field.grid().period().to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Parse the binary snapshot layout back into a field.
pub fn snapshot_from_bytes(bytes: &[u8]) -> Result<RealField> {
    let bad = |msg: String| MochError::BadSnapshot(msg);
    if bytes.len() < 24 {
        return Err(bad(format!("file truncated at {} bytes", bytes.len())));
    }
    if bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(bad("missing MOCH magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let num_points = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let period = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = 24 + 8 * num_points;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for {num_points} samples, found {}",
            bytes.len()
        )));
    }
    let samples: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(bad("snapshot holds non-finite samples".into()));
    }
    let grid = Grid::new(num_points, period)
        .map_err(|e| bad(format!("snapshot header describes an unusable grid: {e}")))?;
    RealField::from_samples(&grid, samples)
}

/// Write bytes through a sibling temp file and an atomic rename.
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| MochError::Io(e.error))?;
    Ok(())
}

pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_bytes_atomic(path, text.as_bytes())
}

pub fn write_snapshot(path: &Path, field: &RealField) -> Result<()> {
    write_bytes_atomic(path, &snapshot_bytes(field))
}

pub fn read_snapshot(path: &Path) -> Result<RealField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    snapshot_from_bytes(&bytes)
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV of node positions and samples, header `x,value`.
pub fn field_csv(field: &RealField) -> String {
    let mut out = String::from("x,value\n");
    for (i, s) in field.samples().iter().enumerate() {
        out.push_str(&fmt(field.grid().node(i)));
        out.push(',');
        out.push_str(&fmt(*s));
        out.push('\n');
    }
    out
}

/// CSV of per-block sup norms, header `j,block_sup_norm`.
pub fn profile_csv(profile: &NormProfile) -> String {
    let mut out = String::from("j,block_sup_norm\n");
    for &(j, v) in profile.entries() {
        out.push_str(&format!("{j},{}\n", fmt(v)));
    }
    out
}

/// CSV of a solver norm series, header `t,B0inf1,B0infinf1_weighted,Linf`.
pub fn norm_series_csv(rows: &[NormRow]) -> String {
    let mut out = String::from("t,B0inf1,B0infinf1_weighted,Linf\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(r.t),
            fmt(r.b0_inf_1),
            fmt(r.weighted),
            fmt(r.linf)
        ));
    }
    out
}

/// CSV of ensemble estimate reports, one row per member and inequality.
pub fn estimate_reports_csv(members: &[MemberReports]) -> String {
    let mut out = String::from("member,inequality,lhs,rhs,ratio\n");
    for m in members {
        for r in &m.reports {
            let ratio = r.ratio.map(fmt).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{ratio}\n",
                m.member,
                r.id.as_str(),
                fmt(r.lhs),
                fmt(r.rhs)
            ));
        }
    }
    out
}

/// CSV of the roughness scaling sweep, one row per scale plus a fitted
/// exponent comment row is deliberately omitted — exponents live in the
/// summary JSON.
pub fn scaling_table_csv(table: &ScalingTable) -> String {
    let mut out = String::from("N,sum_norm,weighted_norm,square_norm\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.scale,
            fmt(r.sum_norm),
            fmt(r.weighted_norm),
            fmt(r.square_norm)
        ));
    }
    out
}

/// CSV of inflation reports, one row per scale.
pub fn inflation_csv(summary: &InflationSummary) -> String {
    let mut out = String::from(
        "N,horizon,dt,datum_sum_norm,datum_weighted_norm,datum_square_norm,\
         sup_norm,argmax_time,initial_slope,rhs_norm,square_half_norm,linear_norm,\
         stretch_norm,commutator_sum,amplification,weighted_ceiling,truncated,blowup_time\n",
    );
    for r in &summary.reports {
        let b = &r.slope_budget;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scale,
            fmt(r.horizon),
            fmt(r.dt),
            fmt(r.datum_sum_norm),
            fmt(r.datum_weighted_norm),
            fmt(r.datum_square_norm),
            fmt(r.sup_norm),
            fmt(r.argmax_time),
            fmt(r.initial_slope),
            fmt(b.rhs_norm),
            fmt(b.square_half_norm),
            fmt(b.linear_norm),
            fmt(b.stretch_norm),
            fmt(b.commutator_sum),
            fmt(r.amplification),
            fmt(r.weighted_ceiling),
            r.truncated,
            r.blowup_time.map(fmt).unwrap_or_default()
        ));
    }
    out
}

/// Per-inequality ensemble maxima as a small CSV.
pub fn ensemble_maxima_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("inequality,max_ratio\n");
    for &(id, v) in &summary.max_ratios {
        out.push_str(&format!("{},{}\n", id.as_str(), fmt(v)));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// One produced file: name, size, content checksum.
#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Manifest written next to every run's outputs: the configuration that
/// produced them, the crate version, wall-clock spent, and a checksummed
/// inventory. Re-running the same configuration must reproduce every
/// inventory checksum.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub version: String,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: 0.0,
            files: Vec::new(),
        }
    }

    /// Write `bytes` to `dir/name` atomically and add it to the
    /// inventory.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = dir.join(name);
        write_bytes_atomic(&path, bytes)?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Serialize the manifest itself (pretty JSON, trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_text_atomic(&path, &self.to_json())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::norm_profile;
    use crate::dyadic::DyadicPartition;
    use std::sync::Arc;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    fn sample_field() -> RealField {
        let grid = Grid::new(64, TAU).unwrap();
        RealField::from_fn(&grid, |x| x.sin() + 0.25 * (3.0 * x).cos()).unwrap()
    }

    #[test]
    fn snapshot_roundtrip_is_exact() {
        let f = sample_field();
        let bytes = snapshot_bytes(&f);
        assert_eq!(&bytes[0..4], b"MOCH");
        let back = snapshot_from_bytes(&bytes).unwrap();
        assert_eq!(back.grid().num_points(), 64);
        assert_eq!(back.grid().period(), TAU);
        for (a, b) in f.samples().iter().zip(back.samples()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn snapshot_rejects_corrupt_headers() {
        let f = sample_field();
        let good = snapshot_bytes(&f);

        let mut wrong_magic = good.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(
            snapshot_from_bytes(&wrong_magic),
            Err(MochError::BadSnapshot(_))
        ));

        let mut wrong_version = good.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            snapshot_from_bytes(&wrong_version),
            Err(MochError::BadSnapshot(_))
        ));

        let truncated = &good[..good.len() - 5];
        assert!(matches!(
            snapshot_from_bytes(truncated),
            Err(MochError::BadSnapshot(_))
        ));

        assert!(matches!(
            snapshot_from_bytes(&good[..10]),
            Err(MochError::BadSnapshot(_))
        ));

        // 6 points is below the smallest legal grid.
        let mut tiny = Vec::new();
        tiny.extend_from_slice(b"MOCH");
        tiny.extend_from_slice(&1u32.to_le_bytes());
        tiny.extend_from_slice(&6u64.to_le_bytes());
        tiny.extend_from_slice(&TAU.to_le_bytes());
        tiny.extend_from_slice(&[0u8; 48]);
        assert!(matches!(
            snapshot_from_bytes(&tiny),
            Err(MochError::BadSnapshot(_))
        ));

        let mut nan = good;
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            snapshot_from_bytes(&nan),
            Err(MochError::BadSnapshot(_))
        ));
    }

    #[test]
    fn snapshot_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.snap");
        let f = sample_field();
        write_snapshot(&path, &f).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(f.samples(), back.samples());
        assert!(matches!(
            read_snapshot(&dir.path().join("missing.snap")),
            Err(MochError::Io(_))
        ));
    }

    #[test]
    fn csv_serializers_are_stable_and_roundtrip_precise() {
        let f = sample_field();
        let csv = field_csv(&f);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,value"));
        let first = lines.next().unwrap();
        let (x, v) = first.split_once(',').unwrap();
        assert_eq!(x.parse::<f64>().unwrap(), f.grid().node(0));
        assert_eq!(v.parse::<f64>().unwrap(), f.samples()[0]);
        assert_eq!(csv.lines().count(), 65);
        // Byte stability.
        assert_eq!(csv, field_csv(&f));

        let part = DyadicPartition::new(&Arc::clone(f.grid())).unwrap();
        let profile = norm_profile(&part, &f).unwrap();
        let pcsv = profile_csv(&profile);
        assert!(pcsv.starts_with("j,block_sup_norm\n-1,"));
        assert_eq!(pcsv.lines().count(), 1 + profile.entries().len());

        let rows = vec![
            NormRow {
                t: 0.0,
                b0_inf_1: 1.0,
                weighted: 2.0,
                linf: 0.5,
            },
            NormRow {
                t: 0.1,
                b0_inf_1: 1.5,
                weighted: 2.5,
                linf: 0.75,
            },
        ];
        let scsv = norm_series_csv(&rows);
        assert!(scsv.starts_with("t,B0inf1,B0infinf1_weighted,Linf\n"));
        assert_eq!(scsv.lines().count(), 3);
        let reparsed: f64 = scsv.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(reparsed, 1.5);
    }

    #[test]
    fn manifest_tracks_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new("norms", serde_json::json!({"points": 64}));
        manifest.emit(dir.path(), "a.csv", b"x,value\n1,2\n").unwrap();
        manifest.wall_seconds = 0.25;
        let path = manifest.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["command"], "norms");
        assert_eq!(parsed["files"][0]["name"], "a.csv");
        assert_eq!(
            parsed["files"][0]["sha256"],
            sha256_hex(b"x,value\n1,2\n").as_str()
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join("a.csv")).unwrap(),
            "x,value\n1,2\n"
        );
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
