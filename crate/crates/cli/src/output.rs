//! Output files. Each one opens with a timestamp line followed by a line
//! carrying the config hash and seed; everything after that is a pure
//! function of (config, seed).

use crate::CliError;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
    config_sha256: String,
    seed: u64,
    generated: u64,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct JsonEnvelope<'a, T: Serialize> {
    generated_unix: u64,
    config_sha256: &'a str,
    seed: u64,
    report: &'a T,
}

impl OutputDir {
    pub fn create(dir: &Path, config_sha256: &str, seed: u64) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_sha256: config_sha256.to_string(),
            seed,
            generated: timestamp(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok((path, BufWriter::new(f)))
    }

    fn header_lines(&self, open: &str, close: &str) -> String {
        format!(
            "{open}generated_unix={}{close}\n{open}config_sha256={} seed={}{close}\n",
            self.generated, self.config_sha256, self.seed
        )
    }

    /// Streaming CSV writer; rows are flushed as they are written.
    pub fn csv(&mut self, name: &str, headers: &[&str]) -> Result<CsvSink, CliError> {
        let header = self.header_lines("# ", "");
        let (path, mut w) = self.open(name)?;
        w.write_all(header.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(headers).map_err(|e| CliError::csv(&path, e))?;
        Ok(CsvSink { path, writer })
    }

    /// Writes every row of `rows` in one go.
    pub fn csv_rows<I>(&mut self, name: &str, headers: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut sink = self.csv(name, headers)?;
        for r in rows {
            sink.row(&r)?;
        }
        sink.finish()
    }

    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<(), CliError> {
        let (path, mut w) = self.open(name)?;
        let env = JsonEnvelope {
            generated_unix: self.generated,
            config_sha256: &self.config_sha256,
            seed: self.seed,
            report,
        };
        serde_json::to_writer_pretty(&mut w, &env)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
    }

    pub fn svg(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let header = self.header_lines("<!-- ", " -->");
        let (path, mut w) = self.open(name)?;
        w.write_all(header.as_bytes())
            .and_then(|_| w.write_all(body.as_bytes()))
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))
    }
}

pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<(), CliError> {
        self.writer.write_record(fields).map_err(|e| CliError::csv(&self.path, e))?;
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Shortest round-trip form; `inf`/`-inf`/`NaN` for non-finite values.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_carry_both_header_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "abc", 7).unwrap();
        out.csv_rows("a.csv", &["x", "y"], vec![vec!["1".into(), "a,b".into()]]).unwrap();
        out.json("a.json", &vec![1, 2]).unwrap();
        out.svg("a.svg", "<svg/>\n").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# generated_unix="));
        assert_eq!(lines[1], "# config_sha256=abc seed=7");
        assert_eq!(lines[2], "x,y");
        assert_eq!(lines[3], "1,\"a,b\"");
        let json = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(json.lines().filter(|l| l.contains("generated_unix")).count(), 1);
        let svg = std::fs::read_to_string(dir.path().join("a.svg")).unwrap();
        assert!(svg.lines().nth(1).unwrap().contains("config_sha256=abc"));
        assert_eq!(out.written().len(), 3);
    }
}
