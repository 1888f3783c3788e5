//! Append-only comma-separated training log.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::losses::LossReport;

pub const LOG_HEADER: &str = "step,chd,l_e,l_g,l_sk,l_str,l_def,l_ol,total,wall_s";

/// One row per step. The header is written only when the file is new or
/// empty, so resumed runs keep appending to the same log.
pub struct TrainLog {
    out: BufWriter<File>,
}

impl TrainLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let mut out = BufWriter::new(file);
        if empty {
            writeln!(out, "{LOG_HEADER}")?;
        }
        Ok(Self { out })
    }

    pub fn append(&mut self, step: u64, r: &LossReport, wall_s: f64) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{step},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{wall_s:.3}",
            r.chd, r.l_e, r.l_g, r.l_sk, r.l_str, r.l_def, r.l_ol, r.total
        )
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

impl Drop for TrainLog {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}
