//! Pulse → expectation-table datasets stored as JSON Lines.
//!
//! One record per line:
//! `{"amps": [[x..], [y..]], "expectations": [18], "meta": {...}}`.
//! Every record carries enough metadata to regenerate it bit-identically:
//! amplitudes come from a ChaCha stream keyed by `(seed, index)` and the noise
//! ensemble from a per-record seed derived from the same pair.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::pulse::{PulseSequence, PulseShape, TimeGrid};
use crate::simulator::{ExpectationTable, SimConfig, Simulator};

pub const FORMAT_VERSION: u32 = 1;

/// Records generated per parallel batch before being flushed to disk.
const WRITE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeLaw {
    /// Independent `Uniform[−A_max, A_max]` per amplitude.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub format_version: u32,
    pub g: f64,
    pub gamma: f64,
    pub omega: f64,
    /// Master seed of the dataset.
    pub seed: u64,
    pub index: u64,
    pub t_us: f64,
    pub steps: usize,
    pub realizations: usize,
    pub sigma_us: f64,
    pub a_max: f64,
    pub amplitude_law: AmplitudeLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// `[[x_1..x_N], [y_1..y_N]]` in MHz.
    pub amps: [Vec<f64>; 2],
    pub expectations: Vec<f64>,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    pub fn shape(&self) -> Result<PulseShape> {
        PulseShape::new(self.meta.t_us, self.amps[0].len(), Some(self.meta.sigma_us), self.meta.a_max)
    }

    pub fn pulses(&self) -> Result<PulseSequence> {
        let amps = self.amps[0].iter().zip(&self.amps[1]).map(|(x, y)| [*x, *y]).collect();
        PulseSequence::new(self.shape()?, amps)
    }

    pub fn table(&self) -> Result<ExpectationTable> {
        ExpectationTable::from_slice(&self.expectations)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let noise = NoiseConfig::new(
            self.meta.gamma,
            self.meta.g,
            self.meta.omega,
            record_noise_seed(self.meta.seed, self.meta.index),
        )?;
        SimConfig::new(TimeGrid::new(self.meta.t_us, self.meta.steps)?, self.meta.realizations, noise)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.meta.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", self.meta.format_version));
        }
        if self.amps[0].len() != self.amps[1].len() || self.amps[0].is_empty() {
            return Err(format!(
                "amplitude rows must be non-empty and equal length, got {} and {}",
                self.amps[0].len(),
                self.amps[1].len()
            ));
        }
        if self.expectations.len() != ExpectationTable::LEN {
            return Err(format!("expected 18 expectations, got {}", self.expectations.len()));
        }
        if self.expectations.iter().chain(&self.amps[0]).chain(&self.amps[1]).any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        Ok(())
    }
}

/// Everything needed to generate a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub sim: SimConfig,
    pub shape: PulseShape,
    pub law: AmplitudeLaw,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the noise ensemble used for record `index`.
pub fn record_noise_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}

pub fn record_amplitudes(shape: &PulseShape, law: AmplitudeLaw, seed: u64, index: u64) -> Result<PulseSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5151_a3a3_0000_0001));
    rng.set_stream(index);
    let amps = match law {
        AmplitudeLaw::Uniform => (0..shape.n_pulses)
            .map(|_| {
                let x = rng.random_range(-shape.a_max..=shape.a_max);
                let y = rng.random_range(-shape.a_max..=shape.a_max);
                [x, y]
            })
            .collect(),
    };
    PulseSequence::new(*shape, amps)
}

/// Builds one record from scratch.
pub fn generate_record(spec: &DatasetSpec, sim: &Simulator, index: u64) -> Result<DatasetRecord> {
    let p = record_amplitudes(&spec.shape, spec.law, spec.sim.noise.seed, index)?;
    let noise = spec.sim.noise.with_seed(record_noise_seed(spec.sim.noise.seed, index));
    let table = sim.with_noise(noise)?.simulate_ensemble(&p)?;
    let flat = p.to_flat();
    let n = spec.shape.n_pulses;
    Ok(DatasetRecord {
        amps: [flat[..n].to_vec(), flat[n..].to_vec()],
        expectations: table.0.to_vec(),
        meta: RecordMeta {
            format_version: FORMAT_VERSION,
            g: spec.sim.noise.g,
            gamma: spec.sim.noise.gamma,
            omega: spec.sim.noise.omega,
            seed: spec.sim.noise.seed,
            index,
            t_us: spec.sim.grid.total(),
            steps: spec.sim.grid.steps(),
            realizations: spec.sim.realizations,
            sigma_us: spec.shape.width,
            a_max: spec.shape.a_max,
            amplitude_law: spec.law,
        },
    })
}

/// Regenerates a record from its stored metadata.
pub fn regenerate(record: &DatasetRecord) -> Result<DatasetRecord> {
    let shape = record.shape()?;
    let mut sim = record.sim_config()?;
    sim.noise.seed = record.meta.seed;
    let spec = DatasetSpec {
        sim,
        shape,
        law: record.meta.amplitude_law,
    };
    let simulator = Simulator::new(sim, shape)?;
    generate_record(&spec, &simulator, record.meta.index)
}

/// Generates `n` records in memory.
pub fn generate_records(spec: &DatasetSpec, n: usize) -> Result<Vec<DatasetRecord>> {
    let sim = Simulator::new(spec.sim, spec.shape)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| generate_record(spec, &sim, i))
        .collect()
}

/// Streams `n` records to `path` as JSON Lines.
pub fn generate_dataset(n: usize, spec: &DatasetSpec, path: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let sim = Simulator::new(spec.sim, spec.shape)?;
    let io_err = |position: usize| {
        let path = path.to_path_buf();
        move |source| Error::Io {
            path,
            position,
            source,
        }
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err(0))?);
    for start in (0..n).step_by(WRITE_CHUNK) {
        let end = (start + WRITE_CHUNK).min(n);
        let chunk: Vec<DatasetRecord> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| generate_record(spec, &sim, i))
            .collect::<Result<_>>()?;
        for (k, rec) in chunk.iter().enumerate() {
            let line = serde_json::to_string(rec)?;
            writeln!(out, "{line}").map_err(io_err(start + k))?;
        }
    }
    out.flush().map_err(io_err(n))?;
    Ok(())
}

pub fn write_records(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let io_err = |position: usize| {
        let path = path.to_path_buf();
        move |source| Error::Io {
            path,
            position,
            source,
        }
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err(0))?);
    for (k, rec) in records.iter().enumerate() {
        writeln!(out, "{}", serde_json::to_string(rec)?).map_err(io_err(k))?;
    }
    out.flush().map_err(io_err(records.len()))
}

fn record_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a JSON-Lines dataset; malformed records are reported with their
/// 1-based line number. Blank lines are skipped.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        position: 0,
        source,
    })?;
    let mut records = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            position: records.len(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| record_error(path, k + 1, e.to_string()))?;
        rec.validate().map_err(|m| record_error(path, k + 1, m))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(record_error(path, 0, "dataset is empty"));
    }
    Ok(records)
}

/// SHA-256 of the file contents, hex encoded.
pub fn file_hash(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        position: 0,
        source,
    })?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        position: 0,
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// SHA-256 over the canonical serialization of in-memory records.
pub fn records_hash(records: &[DatasetRecord]) -> Result<String> {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_string(r)?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DatasetSpec {
        let noise = NoiseConfig::new(0.02, 0.3, 0.0, 5).unwrap();
        DatasetSpec {
            sim: SimConfig::new(TimeGrid::new(3.2, 300).unwrap(), 50, noise).unwrap(),
            shape: PulseShape::new(3.2, 5, None, 100.0).unwrap(),
            law: AmplitudeLaw::Uniform,
        }
    }

    #[test]
    fn single_record_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        generate_dataset(1, &spec(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let recs = read_dataset(&path).unwrap();
        assert_eq!(recs[0].expectations.len(), 18);
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        generate_dataset(5, &spec(), &path).unwrap();
        for rec in read_dataset(&path).unwrap() {
            assert_eq!(regenerate(&rec).unwrap(), rec);
        }
    }

    #[test]
    fn amplitudes_bounded_and_distinct() {
        let s = spec();
        let a = record_amplitudes(&s.shape, s.law, 1, 0).unwrap();
        let b = record_amplitudes(&s.shape, s.law, 1, 1).unwrap();
        assert_ne!(a, b);
        assert!(a.to_flat().iter().all(|v| v.abs() <= 100.0));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        generate_dataset(2, &spec(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        rec["expectations"].as_array_mut().unwrap().pop();
        lines[1] = rec.to_string();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset(&path) {
            Err(Error::Record { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("18"));
            }
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Record { line: 1, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_dataset(Path::new("/nonexistent/x.jsonl")), Err(Error::Io { .. })));
    }
}
