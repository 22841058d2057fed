use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{ensure, Result};
use cflog::blockmem::blockmem_size_bytes;
use cflog::{encode_raw, slice_compress, Engine, EngineConfig, SubPathSpec, Transfer};
use serde::{Deserialize, Serialize};

/// Byte and slice accounting for one compression run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub raw_bytes: usize,
    /// Size of the unsliced compressed log.
    pub compressed_bytes: usize,
    pub blockmem_bytes: usize,
    /// `compressed_bytes + blockmem_bytes`.
    pub total_bytes: usize,
    /// `100 * (1 - compressed_bytes / raw_bytes)`, 0 for an empty trace.
    pub reduction_pct: f64,
    /// Slices cut at the configured slice size.
    pub slice_count: usize,
    /// Detections per sub-path id.
    pub hits: BTreeMap<u8, u64>,
}

impl MetricsReport {
    pub fn new(
        raw_bytes: usize,
        compressed_bytes: usize,
        blockmem_bytes: usize,
        slice_count: usize,
        hits: BTreeMap<u8, u64>,
    ) -> Self {
        let reduction_pct =
            if raw_bytes == 0 { 0.0 } else { 100.0 * (1.0 - compressed_bytes as f64 / raw_bytes as f64) };
        MetricsReport {
            raw_bytes,
            compressed_bytes,
            blockmem_bytes,
            total_bytes: compressed_bytes + blockmem_bytes,
            reduction_pct,
            slice_count,
            hits,
        }
    }

    /// Runs `trace` through the engine, unsliced and sliced.
    pub fn measure(trace: &[Transfer], specs: &[SubPathSpec], config: &EngineConfig) -> Result<Self> {
        let raw = encode_raw(trace, config)?;
        let mut engine = Engine::new(specs.to_vec(), config.clone())?;
        for &t in trace {
            engine.step(t)?;
        }
        let hits = engine.stats().hits.clone();
        let log = engine.finalize();
        let slices = slice_compress(trace, specs, config)?;
        Ok(Self::new(raw.size_bytes(), log.size_bytes(), blockmem_size_bytes(specs, config.width), slices.len(), hits))
    }

    pub fn check(&self) -> Result<()> {
        ensure!(self.total_bytes == self.compressed_bytes + self.blockmem_bytes, "total_bytes mismatch");
        ensure!((0.0..=100.0).contains(&self.reduction_pct), "reduction_pct out of range");
        Ok(())
    }
}

/// One CSV row per report; column order is fixed by field order.
#[derive(Debug, Serialize)]
struct Row<'a> {
    run: &'a str,
    raw_bytes: usize,
    compressed_bytes: usize,
    blockmem_bytes: usize,
    total_bytes: usize,
    reduction_pct: String,
    slice_count: usize,
    /// `id:count` pairs joined by `;`.
    hits: String,
}

pub const CSV_COLUMNS: [&str; 8] =
    ["run", "raw_bytes", "compressed_bytes", "blockmem_bytes", "total_bytes", "reduction_pct", "slice_count", "hits"];

pub fn write_csv(reports: &[(String, MetricsReport)], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for (run, r) in reports {
        let hits = r.hits.iter().map(|(id, n)| format!("{id}:{n}")).collect::<Vec<_>>().join(";");
        w.serialize(Row {
            run,
            raw_bytes: r.raw_bytes,
            compressed_bytes: r.compressed_bytes,
            blockmem_bytes: r.blockmem_bytes,
            total_bytes: r.total_bytes,
            reduction_pct: format!("{:.4}", r.reduction_pct),
            slice_count: r.slice_count,
            hits,
        })?;
    }
    w.flush()?;
    Ok(())
}
