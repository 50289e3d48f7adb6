//! File emission: atomic writes, number formatting and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use purcellkit::units::FrequencyUnit;
use purcellkit::DeviceParams;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Locale-free, round-trippable number text.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else {
            format!("{x}")
        };
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Rows of named columns, rendered as CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|x| fmt_f64(*x)).collect());
    }

    pub fn to_csv(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub source: String,
    pub units: String,
    pub params: Value,
    pub options: Value,
    pub outputs: Vec<OutputFile>,
    pub duration_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Collects the files of one run and writes them together with a manifest.
pub struct Emitter {
    dir: PathBuf,
    command: String,
    started: Instant,
    files: Vec<(String, Vec<u8>)>,
}

impl Emitter {
    pub fn new(dir: &Path, command: &str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            started: Instant::now(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json(&mut self, name: impl Into<String>, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        self.add(name, text.into_bytes());
    }

    /// Writes every file and the manifest; returns the written paths.
    pub fn finish(
        self,
        source: &str,
        units: FrequencyUnit,
        params: Value,
        options: Value,
    ) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            write_atomic(&path, bytes)?;
            outputs.push(OutputFile {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            });
            written.push(path);
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            source: source.to_string(),
            units: units.suffix().to_string(),
            params,
            options,
            outputs,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
        Ok(written)
    }
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Device parameters as plain numbers, frequencies in `units`.
pub fn echo_params(p: &DeviceParams, units: FrequencyUnit) -> Value {
    let sfx = units.suffix();
    let mut m = Map::new();
    let mut freq = |name: &str, w: f64| {
        m.insert(format!("{name}_{sfx}"), num(units.from_rad_ns(w)));
    };
    freq("omega_q", p.omega_q_bare);
    freq("omega_r", p.omega_r_bare);
    freq("omega_f", p.omega_f);
    freq("g", p.g);
    freq("g_ef", p.g_ef());
    freq("g_fh", p.g_fh());
    freq("G", p.coupling.norm());
    freq("delta_q", p.delta_q);
    if let Some((wg, we)) = p.dressed_readout {
        freq("omega_r_g", wg);
        freq("omega_r_e", we);
    }
    m.insert("G_phase_rad".into(), num(p.coupling.arg()));
    m.insert("kappa_f_per_ns".into(), num(p.kappa_f));
    m.insert("q_factor_f".into(), num(p.omega_f / p.kappa_f));
    m.insert("kappa_r_int_per_ns".into(), num(p.kappa_r_int));
    m.insert("kappa_f_out_fraction".into(), num(p.kappa_f_out_fraction));
    m.insert("t1_intrinsic_ns".into(), num(p.t1_intrinsic));
    m.insert("eta".into(), num(p.eta));
    Value::Object(m)
}

/// Name of a frequency column in the chosen units.
pub fn freq_column(name: &str, units: FrequencyUnit) -> String {
    format!("{name}_{}", units.suffix())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_text_round_trips() {
        for x in [0.021, 1.0, -3.5e-7, 6.80273, 1e20, 123456.789, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(2.5e-5), "2.5e-5");
    }

    #[test]
    fn atomic_write_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_atomic(&path, b"x,y\n1,2\n").unwrap();
        write_atomic(&path, b"x,y\n3,4\n").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes, b"x,y\n3,4\n");
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_header_and_rows() {
        let mut t = Table::new(["a", "b"]);
        t.push_numbers(&[1.0, 0.5]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "a,b\n1,0.5\n"
        );
    }
}
