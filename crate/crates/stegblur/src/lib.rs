//! Timing-steganography traffic simulation and blur-based steganalysis.
//!
//! The crate models how the inter-packet timing structure of a stream
//! degrades ("blurs") as packets cross network nodes that each add
//! processing delay and jitter, and uses that degradation gradient to
//! locate the node where the timing structure originates.
//!
//! Pipeline, end to end:
//!
//! 1. [`topology`]: line / Manhattan-grid graphs with deterministic
//!    shortest-path routing.
//! 2. [`steg`]: per-packet emission schedules for clean streams and for
//!    two timing-steganography methods (LACK-style delayed packets and
//!    delay modulation), plus the analytic gap profile and the
//!    delay-modulation decoder.
//! 3. [`sim`]: discrete-event forwarding of the schedules along routes
//!    under configurable per-node noise, producing probe records.
//! 4. [`analysis`]: gap series, delay statistics, 100-bin histograms,
//!    gap-group segmentation and scalar blur metrics per probe.
//! 5. [`localize`]: ranking of candidate source nodes by correlating
//!    blur against hop distance, with a confidence flag.
//! 6. [`scenario`] / [`records`]: TOML scenario files, canned presets
//!    and JSONL record persistence behind the `stegblur` CLI.

pub mod analysis;
pub mod error;
pub mod localize;
pub mod records;
pub mod scenario;
pub mod sim;
pub mod steg;
pub mod topology;

pub use analysis::{
    analyze_run, build_gap_series, build_histograms, compute_blur, compute_stats, segment_groups,
    BlurMetrics, DelayStats, GapSeries, GroupSegmentation, HistogramSet, ProbeAnalysis,
    RunAnalysis, StreamAnalysis,
};
pub use error::{Error, Result};
pub use localize::{
    localize, localize_run, min_supported_correlation, spearman, CandidateScore,
    LocalizationResult, SourceReport, DEFAULT_DELTA, DEFAULT_TAU,
};
pub use records::{read_records, write_records, RecordFileHeader};
pub use scenario::{preset, preset_names, ScenarioConfig, TopologySpec};
pub use sim::{
    draw_node_delay, run_scenario, DisturbanceSpec, Jitter, NoiseModel, ProbeRecord, RunResult,
};
pub use steg::{
    analytic_gap_profile, decode_delaymod, schedule_clean, schedule_delaymod, schedule_lack,
    EmissionEntry, EmissionSchedule, GapProfile, StegMethod, StreamSpec,
};
pub use topology::{NodeId, Route, Topology};
