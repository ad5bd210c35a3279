//! Gap series, statistics, histograms, gap-group segmentation and blur
//! metrics: the quantitative reading of probe records.
//!
//! Gaps are differences of consecutive **arrival-order** times: a
//! LACK-delayed packet overtaken by its successor only shows its
//! characteristic short gap in arrival order. Histograms always use 100
//! bins over a range shared by every probe of a stream, which is what
//! makes per-node histograms comparable along a route.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::{ProbeRecord, RunResult};
use crate::steg::{analytic_gap_profile, GapProfile};
use crate::topology::NodeId;

pub const HISTOGRAM_BINS: usize = 100;

/// Cap applied where a separation ratio divides by a zero spread.
pub const SEPARATION_CAP: f64 = 1e6;

/// Inter-arrival gaps of one stream at one probe, in arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSeries {
    pub probe: NodeId,
    pub stream_id: String,
    pub gaps: Vec<u64>,
}

/// Min / max / mean / population standard deviation over all gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    pub min_us: u64,
    pub max_us: u64,
    pub mean_us: f64,
    pub stddev_us: f64,
}

/// Per-probe 100-bin histograms over one shared range.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    pub bin_width_us: f64,
    /// Closed range covering every gap of every probe.
    pub range_us: (u64, u64),
    pub rows: BTreeMap<NodeId, Vec<u64>>,
}

impl HistogramSet {
    /// Bin holding `value`, clamped into the histogram (values at the
    /// upper edge land in the last bin).
    pub fn bin_index_of(&self, value_us: u64) -> usize {
        let lo = self.range_us.0;
        if value_us <= lo {
            return 0;
        }
        (((value_us - lo) as f64 / self.bin_width_us) as usize).min(HISTOGRAM_BINS - 1)
    }

    pub fn bin_lower_us(&self, index: usize) -> f64 {
        self.range_us.0 as f64 + index as f64 * self.bin_width_us
    }
}

/// Result of 1-d k-means over a gap series, seeded at the expected gap
/// values of the stream's method.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSegmentation {
    /// Final centers, ascending. May be fewer than the seeds when the
    /// data collapses groups.
    pub centers_us: Vec<f64>,
    /// Group index per gap, parallel to the series.
    pub assignments: Vec<usize>,
    pub fractions: Vec<f64>,
    pub within_stddev_us: Vec<f64>,
}

/// Scalar blur summary of one (probe, stream) pair. `gap_stddev_us` is
/// the largest within-group spread: the width of the timing structure
/// itself, independent of the spacing between groups (for a single-group
/// stream it equals the plain gap standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct BlurMetrics {
    pub probe: NodeId,
    pub gap_stddev_us: f64,
    pub separation_score: f64,
    pub histogram_entropy_bits: f64,
}

/// Sorts records of one (probe, stream) pair by arrival time and takes
/// consecutive differences.
pub fn build_gap_series(records: &[ProbeRecord]) -> Result<GapSeries> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 records for a gap series, got {}",
            records.len()
        )));
    }
    let probe = records[0].probe;
    let stream_id = records[0].stream.clone();
    if records
        .iter()
        .any(|r| r.probe != probe || r.stream != stream_id)
    {
        return Err(Error::InvalidParameter(
            "gap series input mixes probes or streams".into(),
        ));
    }
    let mut arrivals: Vec<(u64, u64)> = records.iter().map(|r| (r.arrival_us, r.seq)).collect();
    arrivals.sort_unstable();
    let gaps = arrivals.windows(2).map(|w| w[1].0 - w[0].0).collect();
    Ok(GapSeries {
        probe,
        stream_id,
        gaps,
    })
}

pub fn compute_stats(series: &GapSeries) -> Result<DelayStats> {
    if series.gaps.is_empty() {
        return Err(Error::InsufficientData("empty gap series".into()));
    }
    let min_us = *series.gaps.iter().min().unwrap();
    let max_us = *series.gaps.iter().max().unwrap();
    let n = series.gaps.len() as f64;
    let mean_us = series.gaps.iter().map(|&g| g as f64).sum::<f64>() / n;
    let var = series
        .gaps
        .iter()
        .map(|&g| {
            let d = g as f64 - mean_us;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(DelayStats {
        min_us,
        max_us,
        mean_us,
        stddev_us: var.sqrt(),
    })
}

/// Bins every probe's gaps into 100 bins over the union range of all
/// probes. A degenerate range (every gap equal) falls back to 1 us bins
/// around the value, putting all counts into one bin.
pub fn build_histograms(series: &[&GapSeries]) -> Result<HistogramSet> {
    let mut lo = u64::MAX;
    let mut hi = 0u64;
    let mut any = false;
    for s in series {
        for &g in &s.gaps {
            lo = lo.min(g);
            hi = hi.max(g);
            any = true;
        }
    }
    if !any {
        return Err(Error::InsufficientData(
            "no gaps to build histograms from".into(),
        ));
    }
    let (range_us, bin_width_us) = if lo == hi {
        let start = lo.saturating_sub(HISTOGRAM_BINS as u64 / 2);
        ((start, start + HISTOGRAM_BINS as u64), 1.0)
    } else {
        ((lo, hi), (hi - lo) as f64 / HISTOGRAM_BINS as f64)
    };

    let mut set = HistogramSet {
        bin_width_us,
        range_us,
        rows: BTreeMap::new(),
    };
    for s in series {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for &g in &s.gaps {
            counts[set.bin_index_of(g)] += 1;
        }
        set.rows.insert(s.probe, counts);
    }
    Ok(set)
}

/// 1-d k-means, centers seeded at the profile's expected gap values and
/// iterated until the largest center shift is below 1 us. Groups left
/// empty are dropped and centers that converge onto the same value are
/// collapsed, so the reported group count can be smaller than the seed
/// count.
pub fn segment_groups(series: &GapSeries, profile: &GapProfile) -> Result<GroupSegmentation> {
    if series.gaps.is_empty() {
        return Err(Error::InsufficientData("empty gap series".into()));
    }
    let mut centers = profile.centers();
    if centers.is_empty() {
        return Err(Error::InvalidParameter("profile has no gap values".into()));
    }

    let gaps: Vec<f64> = series.gaps.iter().map(|&g| g as f64).collect();
    let mut assignments = vec![0usize; gaps.len()];
    for _ in 0..200 {
        assign_nearest(&gaps, &centers, &mut assignments);

        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (&gap, &group) in gaps.iter().zip(&assignments) {
            sums[group] += gap;
            counts[group] += 1;
        }

        let mut shift: f64 = 0.0;
        let mut next = Vec::with_capacity(centers.len());
        let mut dropped = false;
        for (i, &c) in centers.iter().enumerate() {
            if counts[i] == 0 {
                dropped = true;
                continue;
            }
            let mean = sums[i] / counts[i] as f64;
            shift = shift.max((mean - c).abs());
            next.push(mean);
        }
        next.sort_by(f64::total_cmp);
        next.dedup_by(|a, b| (*a - *b).abs() < 1.0);
        let merged = next.len() < centers.len() && !dropped;
        centers = next;
        if !dropped && !merged && shift < 1.0 {
            break;
        }
    }
    assign_nearest(&gaps, &centers, &mut assignments);

    let total = gaps.len() as f64;
    let mut fractions = vec![0.0; centers.len()];
    let mut within = vec![0.0; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    let mut sums = vec![0.0; centers.len()];
    for (&gap, &group) in gaps.iter().zip(&assignments) {
        counts[group] += 1;
        sums[group] += gap;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    for (&gap, &group) in gaps.iter().zip(&assignments) {
        let d = gap - means[group];
        within[group] += d * d;
    }
    for i in 0..centers.len() {
        fractions[i] = counts[i] as f64 / total;
        within[i] = if counts[i] > 0 {
            (within[i] / counts[i] as f64).sqrt()
        } else {
            0.0
        };
    }

    Ok(GroupSegmentation {
        centers_us: centers,
        assignments,
        fractions,
        within_stddev_us: within,
    })
}

fn assign_nearest(gaps: &[f64], centers: &[f64], assignments: &mut [usize]) {
    for (slot, &gap) in assignments.iter_mut().zip(gaps) {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, &c) in centers.iter().enumerate() {
            let d = (gap - c).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        *slot = best;
    }
}

/// Shannon entropy in bits of a normalized count row.
pub fn shannon_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Condenses segmentation and histogram shape into the three blur
/// scalars used by localization.
pub fn compute_blur(
    series: &GapSeries,
    segmentation: &GroupSegmentation,
    histogram_row: &[u64],
) -> BlurMetrics {
    let max_within = segmentation
        .within_stddev_us
        .iter()
        .copied()
        .fold(0.0, f64::max);

    let k = segmentation.centers_us.len();
    let separation_score = if k < 2 {
        0.0
    } else {
        let mut min_pair = f64::INFINITY;
        for i in 0..k {
            for j in i + 1..k {
                min_pair =
                    min_pair.min((segmentation.centers_us[i] - segmentation.centers_us[j]).abs());
            }
        }
        if max_within == 0.0 {
            SEPARATION_CAP
        } else {
            (min_pair / max_within).min(SEPARATION_CAP)
        }
    };

    BlurMetrics {
        probe: series.probe,
        gap_stddev_us: max_within,
        separation_score,
        histogram_entropy_bits: shannon_entropy(histogram_row),
    }
}

// ---------------------------------------------------------------------
// Whole-run orchestration

/// Everything derived from one stream's records.
#[derive(Debug, Clone)]
pub struct StreamAnalysis {
    pub stream_id: String,
    pub histograms: HistogramSet,
    pub probes: Vec<ProbeAnalysis>,
}

#[derive(Debug, Clone)]
pub struct ProbeAnalysis {
    pub probe: NodeId,
    pub stats: DelayStats,
    pub segmentation: GroupSegmentation,
    pub blur: BlurMetrics,
}

#[derive(Debug, Clone)]
pub struct RunAnalysis {
    pub streams: Vec<StreamAnalysis>,
    /// Streams or probes skipped for lack of data.
    pub warnings: Vec<String>,
}

impl RunAnalysis {
    pub fn stream(&self, id: &str) -> Option<&StreamAnalysis> {
        self.streams.iter().find(|s| s.stream_id == id)
    }
}

impl StreamAnalysis {
    pub fn probe(&self, probe: NodeId) -> Option<&ProbeAnalysis> {
        self.probes.iter().find(|p| p.probe == probe)
    }
}

/// Runs the full per-(probe, stream) analysis over a run: gap series,
/// stats, shared-range histograms, method-seeded segmentation and blur
/// metrics. Streams without enough data are skipped with a warning; the
/// run fails only when nothing at all is analyzable.
pub fn analyze_run(run: &RunResult) -> Result<RunAnalysis> {
    // group records per stream, per probe, in scenario stream order
    let mut grouped: BTreeMap<&str, BTreeMap<NodeId, Vec<ProbeRecord>>> = BTreeMap::new();
    for r in &run.records {
        grouped
            .entry(r.stream.as_str())
            .or_default()
            .entry(r.probe)
            .or_default()
            .push(r.clone());
    }

    let mut streams = Vec::new();
    let mut warnings = Vec::new();
    for entry in &run.scenario.streams {
        let id = entry.spec.id.as_str();
        let Some(per_probe) = grouped.get(id) else {
            warnings.push(format!("stream {id}: no probe records"));
            continue;
        };
        let mut series = Vec::new();
        for (probe, records) in per_probe {
            match build_gap_series(records) {
                Ok(s) => series.push(s),
                Err(e) => warnings.push(format!("stream {id} probe {probe}: {e}")),
            }
        }
        if series.is_empty() {
            warnings.push(format!("stream {id}: no analyzable probes"));
            continue;
        }
        let histograms = build_histograms(&series.iter().collect::<Vec<_>>())?;
        let profile = analytic_gap_profile(&entry.method, entry.spec.t1_us);
        let mut probes = Vec::new();
        for s in &series {
            let stats = compute_stats(s)?;
            let segmentation = segment_groups(s, &profile)?;
            let row = &histograms.rows[&s.probe];
            let blur = compute_blur(s, &segmentation, row);
            probes.push(ProbeAnalysis {
                probe: s.probe,
                stats,
                segmentation,
                blur,
            });
        }
        streams.push(StreamAnalysis {
            stream_id: id.to_string(),
            histograms,
            probes,
        });
    }
    if streams.is_empty() {
        return Err(Error::InsufficientData(
            "no stream in the run is analyzable".into(),
        ));
    }
    Ok(RunAnalysis { streams, warnings })
}

/// CSV export of every stream's histograms:
/// `stream,probe,bin_index,bin_lower_us,count`.
pub fn histogram_csv(analysis: &RunAnalysis) -> String {
    let mut out = String::from("stream,probe,bin_index,bin_lower_us,count\n");
    for s in &analysis.streams {
        for (probe, counts) in &s.histograms.rows {
            for (i, &count) in counts.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{:.6},{}\n",
                    s.stream_id,
                    probe,
                    i,
                    s.histograms.bin_lower_us(i),
                    count
                ));
            }
        }
    }
    out
}

/// CSV export of per-probe delay statistics:
/// `stream,probe,min_us,max_us,mean_us,stddev_us`.
pub fn stats_csv(analysis: &RunAnalysis) -> String {
    let mut out = String::from("stream,probe,min_us,max_us,mean_us,stddev_us\n");
    for s in &analysis.streams {
        for p in &s.probes {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6}\n",
                s.stream_id,
                p.probe,
                p.stats.min_us,
                p.stats.max_us,
                p.stats.mean_us,
                p.stats.stddev_us
            ));
        }
    }
    out
}
