//! Shared streaming runner: one pass over an event stream feeding both
//! detectors and the log statistics.

use std::io::BufRead;

use crate::ingest::{EventStream, IngestError};
use crate::native::{NativeDetector, NativeIceberg};
use crate::stats::{IcebergStats, LogStats};
use crate::synthetic::{DetectorConfig, SyntheticDetector, TrancheTree};

#[derive(Debug)]
pub struct DetectionRun {
    pub native: Vec<NativeIceberg>,
    pub synthetic: Vec<TrancheTree>,
    pub log_stats: LogStats,
    /// Lines the parser rejected (counted, capped diagnostics inside).
    pub rejected_lines: u64,
    pub diagnostics: Vec<String>,
}

impl DetectionRun {
    pub fn iceberg_stats(&self) -> IcebergStats {
        IcebergStats::compute(&self.native, &self.synthetic)
    }
}

/// Run both detectors over a stream in a single pass.
pub fn run_detection<R: BufRead>(
    reader: R,
    config: &DetectorConfig,
) -> Result<DetectionRun, IngestError> {
    let mut stream = EventStream::from_reader(reader)?;
    let mut native_det = NativeDetector::new();
    let mut synthetic_det = SyntheticDetector::new(config.clone());
    let mut log_stats = LogStats::default();
    let mut native = Vec::new();
    let mut synthetic = Vec::new();

    for ev in &mut stream {
        log_stats.update(&ev);
        native.extend(native_det.apply_event(&ev));
        synthetic.extend(synthetic_det.process_event(&ev));
    }
    native.extend(native_det.finalize_all());
    synthetic.extend(synthetic_det.finish());

    let mut diagnostics: Vec<String> =
        stream.diagnostics().iter().map(|d| format!("line {}: {}", d.line, d.message)).collect();
    diagnostics.extend(
        native_det.diagnostics().iter().map(|d| format!("event {}: {}", d.line, d.message)),
    );

    Ok(DetectionRun {
        native,
        synthetic,
        log_stats,
        rejected_lines: stream.rejected(),
        diagnostics,
    })
}
