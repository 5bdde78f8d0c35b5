//! On-disk formats: matrix files, spectra streams, constraint set
//! manifests, and content hashing.
//!
//! Matrix file: one JSON header line `{"dim":N,"layout":"row-major",
//! "scalar":"complex-f64-interleaved"}` terminated by `\n`, followed by
//! a binary payload of 2 N^2 little-endian f64 (re, im interleaved).
//!
//! Spectra stream: CSV with one row per sample (`sample_index` then the
//! ascending eigenvalues), accompanied by a JSON manifest carrying the
//! full ensemble spec and code version. Floats are written in Rust's
//! shortest round-trip form, so parsing them back is lossless.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::basis::ConstraintSet;
use crate::ensemble::{EnsembleSpec, SpectraSet, SpectrumSample};
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    dim: usize,
    layout: String,
    scalar: String,
}

pub fn write_matrix(path: &Path, m: &HermitianMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = MatrixHeader {
        dim: m.dim(),
        layout: "row-major".into(),
        scalar: "complex-f64-interleaved".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for z in m.entries() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<HermitianMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: MatrixHeader = serde_json::from_str(header_line.trim_end())?;
    if header.layout != "row-major" || header.scalar != "complex-f64-interleaved" {
        return Err(Error::Parse(format!(
            "unsupported matrix encoding: layout={} scalar={}",
            header.layout, header.scalar
        )));
    }
    let n = header.dim;
    let mut payload = vec![0u8; 16 * n * n];
    r.read_exact(&mut payload)?;
    let entries: Vec<Complex64> = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    HermitianMatrix::from_entries(n, entries)
}

/// Writes one CSV row per sample: index, then the eigenvalues.
pub fn write_spectra_csv(path: &Path, samples: &[SpectrumSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        write!(w, "{}", s.sample_index)?;
        for v in &s.eigenvalues {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectra_csv(path: &Path) -> Result<Vec<SpectrumSample>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let idx: u64 = fields
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: empty row", lineno + 1)))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad sample index: {e}", lineno + 1)))?;
        let eigenvalues: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: bad eigenvalue: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if eigenvalues.is_empty() {
            return Err(Error::Parse(format!(
                "line {}: row has no eigenvalues",
                lineno + 1
            )));
        }
        out.push(SpectrumSample {
            sample_index: idx,
            eigenvalues,
        });
    }
    if out.is_empty() {
        return Err(Error::Parse("spectra file contains no rows".into()));
    }
    Ok(out)
}

/// Manifest accompanying a spectra stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectraManifest {
    pub spec: EnsembleSpec,
    pub samples: usize,
    pub version: String,
    /// sha256 of the CSV payload.
    pub data_sha256: String,
}

pub fn write_spectra_set(dir: &Path, name: &str, set: &SpectraSet) -> Result<SpectraManifest> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    write_spectra_csv(&csv_path, &set.samples)?;
    let manifest = SpectraManifest {
        spec: set.spec.clone(),
        samples: set.samples.len(),
        version: crate::VERSION.to_string(),
        data_sha256: sha256_file(&csv_path)?,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join(format!("{name}.manifest.json")), json)?;
    Ok(manifest)
}

pub fn read_spectra_set(csv_path: &Path) -> Result<SpectraSet> {
    let samples = read_spectra_csv(csv_path)?;
    let manifest_path = csv_path.with_extension("").with_extension("manifest.json");
    let manifest_path = if manifest_path.exists() {
        manifest_path
    } else {
        // `name.csv` -> `name.manifest.json`
        let stem = csv_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Parse("bad spectra path".into()))?;
        csv_path.with_file_name(format!("{stem}.manifest.json"))
    };
    let manifest: SpectraManifest =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).map_err(|e| {
            Error::Parse(format!(
                "missing manifest {}: {e}",
                manifest_path.display()
            ))
        })?)?;
    Ok(SpectraSet {
        spec: manifest.spec,
        samples,
    })
}

/// Serialized form of a constraint set: generator record plus, for
/// explicit sets, a concatenation of matrix files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintManifest {
    pub dim: usize,
    pub n_q: usize,
    #[serde(flatten)]
    pub generator: crate::basis::GeneratorTag,
}

pub fn constraint_manifest(cs: &ConstraintSet) -> ConstraintManifest {
    ConstraintManifest {
        dim: cs.dim(),
        n_q: cs.n_constraints(),
        generator: cs.generator().clone(),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher)?;
    Ok(hex(&hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleSpec, Sampler};
    use tempfile::tempdir;

    #[test]
    fn matrix_file_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.herm");
        let m = {
            let sampler = Sampler::new(EnsembleSpec::Gue {
                dim: 7,
                lambda: 1.0,
                seed: 5,
            })
            .unwrap();
            sampler.sample_matrix(0)
        };
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m.entries(), back.entries());
    }

    #[test]
    fn spectra_csv_round_trip_is_lossless() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let samples = vec![
            SpectrumSample {
                sample_index: 0,
                eigenvalues: vec![-1.2345678901234567, 0.1, 2.0 / 3.0],
            },
            SpectrumSample {
                sample_index: 1,
                eigenvalues: vec![f64::MIN_POSITIVE, 1e300, -3.3e-17],
            },
        ];
        write_spectra_csv(&path, &samples).unwrap();
        let back = read_spectra_csv(&path).unwrap();
        assert_eq!(samples, back);
    }

    #[test]
    fn empty_spectra_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_spectra_csv(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn spectra_set_round_trip_with_manifest() {
        let dir = tempdir().unwrap();
        let sampler = Sampler::new(EnsembleSpec::Gue {
            dim: 5,
            lambda: 2.0,
            seed: 3,
        })
        .unwrap();
        let set = sampler.sample_batch(4).unwrap();
        let manifest = write_spectra_set(dir.path(), "run", &set).unwrap();
        assert_eq!(manifest.samples, 4);
        let back = read_spectra_set(&dir.path().join("run.csv")).unwrap();
        assert_eq!(back.spec, set.spec);
        assert_eq!(back.samples, set.samples);
    }

    #[test]
    fn hashes_are_stable() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
