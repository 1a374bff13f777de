//! Failure-to-exit-code mapping, config hashing, and report emission.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

/// One failure class per exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2: the request itself is unusable.
    Config(String),
    /// Exit 3: reading or writing a file failed.
    Io(String),
    /// Exit 4: a computed bound chain is out of order.
    Chain(String),
    /// Exit 1: a solver failed on valid input.
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Chain(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Internal(m) | Failure::Config(m) | Failure::Io(m) | Failure::Chain(m) => m,
        }
    }
}

/// Reads a file, or stdin when the path is "-".
pub fn read_text(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| Failure::Io(format!("stdin: {e}")))?;
        Ok(buf)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Io(format!("{path}: {e}")))
    }
}

/// Writes to a file, or stdout when no path is given.
pub fn write_text(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// FNV-1a 64-bit hash; fixes the config fingerprint independently of file
/// paths by hashing contents.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Accumulates a task's canonical config string and timing, then stamps the
/// report skeleton. Output paths and thread counts stay out of the hash so
/// relocated or parallel runs of the same experiment fingerprint identically.
pub struct ReportCtx {
    task: &'static str,
    seed: u64,
    config: String,
    started: Instant,
}

impl ReportCtx {
    pub fn new(task: &'static str, seed: u64) -> Self {
        ReportCtx {
            task,
            seed,
            config: format!("task={task} seed={seed}"),
            started: Instant::now(),
        }
    }

    /// Appends one config field; call in a fixed order per task.
    pub fn field(&mut self, key: &str, value: impl std::fmt::Display) {
        self.config.push_str(&format!(" {key}={value}"));
    }

    /// Appends a content-addressed config field.
    pub fn content(&mut self, key: &str, text: &str) {
        self.field(key, format!("{:016x}", fnv1a64(text.as_bytes())));
    }

    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.config.as_bytes()))
    }

    /// Writes the JSON report (file or stdout) plus, next to a file report,
    /// a one-row CSV summary under the same stem.
    pub fn finish(
        self,
        body: Map<String, Value>,
        summary: &[(&str, String)],
        out: Option<&PathBuf>,
    ) -> Result<(), Failure> {
        let wall = self.started.elapsed().as_secs_f64();
        let hash = self.config_hash();
        let mut report = json!({
            "schema": "pbskit-report/1",
            "version": env!("CARGO_PKG_VERSION"),
            "task": self.task,
            "seed": self.seed,
            "config_hash": hash,
            "wall_time_s": wall,
        });
        let obj = report.as_object_mut().unwrap();
        for (k, v) in body {
            obj.insert(k, v);
        }
        let text = format!("{}\n", serde_json::to_string_pretty(&report).unwrap());
        write_text(out, &text)?;
        if let Some(p) = out {
            let mut header = String::from("task,seed,config_hash");
            let mut row = format!("{},{},{}", self.task, self.seed, hash);
            for (k, v) in summary {
                header.push(',');
                header.push_str(k);
                row.push(',');
                row.push_str(v);
            }
            header.push_str(",wall_time_s");
            row.push_str(&format!(",{wall}"));
            let csv_path = csv_sibling(p);
            fs::write(&csv_path, format!("{header}\n{row}\n"))
                .map_err(|e| Failure::Io(format!("{}: {e}", csv_path.display())))?;
        }
        Ok(())
    }
}

/// The CSV summary lives next to the JSON report with a .csv extension.
pub fn csv_sibling(report_path: &Path) -> PathBuf {
    report_path.with_extension("csv")
}
