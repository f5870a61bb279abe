//! File formats: trace and plot-data CSVs, JSON sidecars, packed bit files.
//!
//! Every write goes to a temporary file in the destination directory and is
//! renamed into place, so readers never observe a partial file.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{AcfReport, HistogramReport, PsdReport};
use crate::bits::BitStream;
use crate::digitizer::{AdcConfig, DigitalTrace};
use crate::error::{Error, Result};
use crate::extractor::LfsrConfig;
use crate::signal::{DetectorModel, NoiseModel, SignalTrace, SourceModel};

pub const TRACE_HEADER: [&str; 2] = ["index", "voltage_mV"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` via a same-directory temporary file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialise");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `trace.csv` → `trace.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn csv_bytes<R, I>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub sample_rate_hz: f64,
    pub label: String,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
}

impl TraceMeta {
    pub fn bare(trace: &SignalTrace) -> Self {
        Self {
            sample_rate_hz: trace.sample_rate_hz(),
            label: trace.label.clone(),
            n_samples: trace.len(),
            source: None,
            detector: None,
            noise: None,
        }
    }
}

pub fn trace_csv_bytes(trace: &SignalTrace) -> Vec<u8> {
    csv_bytes(
        &TRACE_HEADER,
        trace
            .samples()
            .iter()
            .enumerate()
            .map(|(i, v)| [i.to_string(), v.to_string()]),
    )
}

/// Trace CSV plus its JSON sidecar.
pub fn write_trace(path: &Path, trace: &SignalTrace, meta: &TraceMeta) -> Result<()> {
    atomic_write(path, &trace_csv_bytes(trace))?;
    write_json(&sidecar_path(path), meta)
}

/// Reads a trace CSV; the sample rate comes from the sidecar unless given.
pub fn read_trace(path: &Path, sample_rate_hz: Option<f64>) -> Result<(SignalTrace, Option<TraceMeta>)> {
    let side = sidecar_path(path);
    let meta: Option<TraceMeta> = if side.exists() { Some(read_json(&side)?) } else { None };
    let rate = sample_rate_hz
        .or(meta.as_ref().map(|m| m.sample_rate_hz))
        .ok_or_else(|| Error::Parse {
            path: side.clone(),
            line: 0,
            message: "no sidecar metadata and no sample rate given".into(),
        })?;

    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(parse_err(1, format!("expected header `{}`", TRACE_HEADER.join(","))));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let index: usize = record[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("bad index {:?}: {e}", &record[0])))?;
        if index != samples.len() {
            return Err(parse_err(line, format!("index {index} out of sequence")));
        }
        let v: f64 = record[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("bad voltage {:?}: {e}", &record[1])))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite voltage {v}")));
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(parse_err(1, "trace has no samples".into()));
    }
    let label = meta
        .as_ref()
        .map(|m| m.label.clone())
        .unwrap_or_else(|| path.display().to_string());
    Ok((SignalTrace::new(samples, rate, label)?, meta))
}

pub fn codes_csv_bytes(dt: &DigitalTrace) -> Vec<u8> {
    csv_bytes(
        &["index", "code"],
        dt.codes()
            .iter()
            .enumerate()
            .map(|(i, c)| [i.to_string(), c.to_string()]),
    )
}

pub fn acf_csv_bytes(acf: &AcfReport) -> Vec<u8> {
    csv_bytes(
        &["lag", "r"],
        acf.coefficients
            .iter()
            .enumerate()
            .map(|(k, r)| [k.to_string(), r.to_string()]),
    )
}

/// Adds a constant `shot_noise_line_dBm` column when the report carries one.
pub fn psd_csv_bytes(psd: &PsdReport) -> Vec<u8> {
    let rows = psd.frequencies_hz.iter().zip(&psd.power_dbm_per_hz);
    match psd.shot_noise_line_dbm {
        Some(line) => csv_bytes(
            &["freq_hz", "power_dBm_per_Hz", "shot_noise_line_dBm"],
            rows.map(|(f, p)| [f.to_string(), p.to_string(), line.to_string()]),
        ),
        None => csv_bytes(
            &["freq_hz", "power_dBm_per_Hz"],
            rows.map(|(f, p)| [f.to_string(), p.to_string()]),
        ),
    }
}

pub fn histogram_csv_bytes(h: &HistogramReport) -> Vec<u8> {
    csv_bytes(
        &["bin_center_mV", "count"],
        h.bin_centers()
            .iter()
            .zip(&h.counts)
            .map(|(c, n)| [c.to_string(), n.to_string()]),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitFileMeta {
    pub bit_length: usize,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adc_config: Option<AdcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lfsr: Option<LfsrConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_bits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_bits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discarded_bits: Option<usize>,
}

impl BitFileMeta {
    pub fn for_bits(bits: &BitStream) -> Self {
        Self {
            bit_length: bits.len(),
            source: bits.source.clone(),
            adc_config: None,
            lfsr: None,
            keep_bits: None,
            block_bits: None,
            discarded_bits: None,
        }
    }
}

/// Raw packed bytes plus a JSON sidecar carrying the exact bit length.
pub fn write_bitstream(path: &Path, bits: &BitStream, meta: &BitFileMeta) -> Result<()> {
    atomic_write(path, bits.bytes())?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_bitstream(path: &Path) -> Result<(BitStream, BitFileMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let meta: BitFileMeta = if side.exists() {
        read_json(&side)?
    } else {
        BitFileMeta {
            bit_length: bytes.len() * 8,
            source: path.display().to_string(),
            ..BitFileMeta::for_bits(&BitStream::new(""))
        }
    };
    let bits = BitStream::from_bytes(bytes, meta.bit_length, meta.source.clone()).map_err(|e| {
        Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        }
    })?;
    Ok((bits, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let trace = SignalTrace::new(vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0], 40e9, "x").unwrap();
        write_trace(&path, &trace, &TraceMeta::bare(&trace)).unwrap();
        let (back, meta) = read_trace(&path, None).unwrap();
        assert_eq!(back.samples(), trace.samples());
        assert_eq!(back.sample_rate_hz(), 40e9);
        assert_eq!(meta.unwrap().n_samples, 4);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "index,voltage_mV\n0,1.0\n1,abc\n").unwrap();
        match read_trace(&path, Some(1.0)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "i,v\n0,1.0\n").unwrap();
        assert!(matches!(read_trace(&path, Some(1.0)), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_trace(&path, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn bitstream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let bits = BitStream::parse("1011001110").unwrap();
        write_bitstream(&path, &bits, &BitFileMeta::for_bits(&bits)).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), vec![0xB3, 0x80]);
        let (back, meta) = read_bitstream(&path).unwrap();
        assert_eq!(back.to_string(), bits.to_string());
        assert_eq!(meta.bit_length, 10);
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
