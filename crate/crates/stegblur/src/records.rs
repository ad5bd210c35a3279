//! JSONL record files: a header line carrying the scenario (with its
//! hash and seed), then one probe record per line.
//!
//! Embedding the scenario makes a record file self-contained: analysis
//! and localization reconstruct routes, methods and units from the
//! header alone, and the hash catches records paired with a scenario
//! they did not come from.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::sim::{ProbeRecord, RunResult};

pub const RECORD_FORMAT: &str = "stegblur-records-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFileHeader {
    pub format: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub scenario: ScenarioConfig,
}

/// Serializes a run to `path`. The write order is the run's record
/// order, so identical runs produce byte-identical files.
pub fn write_records(path: &Path, run: &RunResult) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    let header = RecordFileHeader {
        format: RECORD_FORMAT.to_string(),
        scenario_hash: run.scenario.hash(),
        seed: run.seed,
        scenario: run.scenario.clone(),
    };
    writeln!(
        out,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )?;
    for record in &run.records {
        writeln!(
            out,
            "{}",
            serde_json::to_string(record).expect("record serializes")
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a record file back. Errors name the offending line; an empty
/// file is insufficient data rather than a parse error.
pub fn read_records(path: &Path) -> Result<(RecordFileHeader, Vec<ProbeRecord>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::InsufficientData("record file is empty".into()))?;
    let header: RecordFileHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::Parse(format!("line 1 (header): {e}")))?;
    if header.format != RECORD_FORMAT {
        return Err(Error::Parse(format!(
            "line 1 (header): unknown format {:?}",
            header.format
        )));
    }
    if header.scenario.hash() != header.scenario_hash {
        return Err(Error::Parse(
            "line 1 (header): scenario hash mismatch: records do not belong to the embedded scenario"
                .into(),
        ));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let record: ProbeRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok((header, records))
}

/// Rebuilds a `RunResult` from a record file, recomputing the (fully
/// deterministic) stream routes from the embedded scenario.
pub fn to_run_result(header: RecordFileHeader, records: Vec<ProbeRecord>) -> Result<RunResult> {
    let topo = header.scenario.build_topology()?;
    let routes = header
        .scenario
        .streams
        .iter()
        .map(|entry| {
            topo.shortest_path(entry.spec.source, entry.spec.destination)
                .map(|route| (entry.spec.id.clone(), route))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        records,
        routes,
        seed: header.seed,
        scenario: header.scenario,
    })
}
