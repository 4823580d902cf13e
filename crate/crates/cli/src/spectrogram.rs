//! Text dumps of STFT magnitudes for external plotting.
//!
//! ```text
//! # arraysep spectrogram
//! # sample_rate = 16000
//! # frame_size = 1024
//! # hop_size = 512
//! # frames = 312
//! # bins = 513
//! # floor_db = -120
//! # rows: frames in time order; columns: bins 0..bins-1; cells: 10 log10 |X|^2 in dB
//! -38.2 -41.7 ...
//! ```
//!
//! Cells use the shortest representation that parses back to the same `f64`.

use std::io::Write;
use std::path::Path;

use arraysep::stft::{analyze_mono, StftConfig};

use crate::error::{CliError, Result};

pub const FLOOR_DB: f64 = -120.0;
const MAGIC: &str = "# arraysep spectrogram";

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub sample_rate: f64,
    pub frame_size: usize,
    pub hop_size: usize,
    /// `db[frame][bin]`.
    pub db: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn compute(signal: &[f64], cfg: StftConfig) -> Result<Self> {
        let frames = analyze_mono(signal, cfg)?;
        let db = frames
            .iter()
            .map(|f| f.iter().map(|x| (10.0 * x.norm_sqr().log10()).max(FLOOR_DB)).collect())
            .collect();
        Ok(Self {
            sample_rate: cfg.sample_rate,
            frame_size: cfg.frame_size,
            hop_size: cfg.hop_size,
            db,
        })
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        s.push_str(&format!("# sample_rate = {}\n", self.sample_rate));
        s.push_str(&format!("# frame_size = {}\n", self.frame_size));
        s.push_str(&format!("# hop_size = {}\n", self.hop_size));
        s.push_str(&format!("# frames = {}\n", self.db.len()));
        s.push_str(&format!("# bins = {}\n", self.num_bins()));
        s.push_str(&format!("# floor_db = {FLOOR_DB}\n"));
        s.push_str("# rows: frames in time order; columns: bins 0..bins-1; cells: 10 log10 |X|^2 in dB\n");
        for row in &self.db {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| CliError::Config(format!("spectrogram: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header line".into()));
        }
        let mut header = std::collections::HashMap::new();
        let mut db = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(" = ") {
                    header.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            let row = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            db.push(row);
        }
        let get = |k: &str| header.get(k).ok_or_else(|| bad(format!("missing '{k}'")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad '{k}'"))) };
        let spec = Self {
            sample_rate: get("sample_rate")?.parse().map_err(|_| bad("bad 'sample_rate'".into()))?,
            frame_size: num("frame_size")?,
            hop_size: num("hop_size")?,
            db,
        };
        if spec.db.len() != num("frames")? {
            return Err(bad("frame count does not match the header".into()));
        }
        let bins = num("bins")?;
        if bins != spec.num_bins() || spec.db.iter().any(|r| r.len() != bins) {
            return Err(bad("bin count does not match the header".into()));
        }
        Ok(spec)
    }
}
