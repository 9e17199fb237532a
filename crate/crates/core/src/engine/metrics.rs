//! Run output: a header followed by append-only typed records.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub algorithm: String,
    pub slot_duration_s: f64,
    pub slot_count: usize,
    pub crate_version: String,
    pub schema_version: u32,
}

/// Per-slot summary of the graph in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub slot_index: usize,
    pub t_s: f64,
    pub node_count: usize,
    pub isl_count: usize,
    pub gsl_count: usize,
    pub failed_links: usize,
}

/// A path with node names resolved, as exported to files and the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecordOut {
    pub slot_index: usize,
    pub src: String,
    pub dst: String,
    pub hops: Vec<String>,
    pub total_distance_km: f64,
    pub theoretical_rtt_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttSample {
    pub launch_t_s: f64,
    pub src: String,
    pub dst: String,
    pub rtt_s: f64,
    pub hop_count: usize,
    pub path: Vec<String>,
    pub theoretical_rtt_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeoutReason {
    NoRoute,
    Loop,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PingTimeout {
    pub launch_t_s: f64,
    pub src: String,
    pub dst: String,
    pub timeout_at_s: f64,
    pub reason: TimeoutReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PingOutcome {
    Reply(RttSample),
    Timeout(PingTimeout),
}

impl PingOutcome {
    pub fn sample(&self) -> Option<&RttSample> {
        match self {
            PingOutcome::Reply(s) => Some(s),
            PingOutcome::Timeout(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRateSample {
    pub slot_index: usize,
    pub t_s: f64,
    pub src: String,
    pub dst: String,
    pub send_rate_bit_s: f64,
    pub cwnd_segments: f64,
    pub bottleneck_bit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum MetricRecord {
    Header(RunHeader),
    Topology(TopologyRecord),
    PathRecord(PathRecordOut),
    RttSample(RttSample),
    PingTimeout(PingTimeout),
    FlowRateSample(FlowRateSample),
}

/// The queryable record streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Rtt,
    Flow,
    Path,
    Topology,
}

impl StreamKind {
    pub const ALL: [StreamKind; 4] = [
        StreamKind::Rtt,
        StreamKind::Flow,
        StreamKind::Path,
        StreamKind::Topology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Rtt => "rtt",
            StreamKind::Flow => "flow",
            StreamKind::Path => "path",
            StreamKind::Topology => "topology",
        }
    }

    pub fn matches(self, rec: &MetricRecord) -> bool {
        matches!(
            (self, rec),
            (
                StreamKind::Rtt,
                MetricRecord::RttSample(_) | MetricRecord::PingTimeout(_)
            ) | (StreamKind::Flow, MetricRecord::FlowRateSample(_))
                | (StreamKind::Path, MetricRecord::PathRecord(_))
                | (StreamKind::Topology, MetricRecord::Topology(_))
        )
    }
}

impl FromStr for StreamKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rtt" | "rtt_samples" => Ok(StreamKind::Rtt),
            "flow" | "flow_samples" => Ok(StreamKind::Flow),
            "path" | "path_records" => Ok(StreamKind::Path),
            "topology" | "topology_records" => Ok(StreamKind::Topology),
            other => Err(format!(
                "unknown stream kind `{other}` (expected one of rtt, flow, path, topology)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<MetricRecord>,
}

impl MetricsLog {
    pub fn header(&self) -> Option<&RunHeader> {
        match self.records.first() {
            Some(MetricRecord::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn stream(&self, kind: StreamKind) -> impl Iterator<Item = &MetricRecord> {
        self.records.iter().filter(move |r| kind.matches(r))
    }

    pub fn rtt_samples(&self) -> impl Iterator<Item = &RttSample> {
        self.records.iter().filter_map(|r| match r {
            MetricRecord::RttSample(s) => Some(s),
            _ => None,
        })
    }

    pub fn ping_timeouts(&self) -> impl Iterator<Item = &PingTimeout> {
        self.records.iter().filter_map(|r| match r {
            MetricRecord::PingTimeout(s) => Some(s),
            _ => None,
        })
    }

    pub fn flow_samples(&self) -> impl Iterator<Item = &FlowRateSample> {
        self.records.iter().filter_map(|r| match r {
            MetricRecord::FlowRateSample(s) => Some(s),
            _ => None,
        })
    }

    pub fn path_records(&self) -> impl Iterator<Item = &PathRecordOut> {
        self.records.iter().filter_map(|r| match r {
            MetricRecord::PathRecord(s) => Some(s),
            _ => None,
        })
    }

    pub fn topology_records(&self) -> impl Iterator<Item = &TopologyRecord> {
        self.records.iter().filter_map(|r| match r {
            MetricRecord::Topology(s) => Some(s),
            _ => None,
        })
    }

    /// Newline-delimited JSON, header first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&record_line(r));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> serde_json::Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    /// Writes one stream as CSV.
    pub fn write_csv<W: Write>(&self, kind: StreamKind, out: W) -> csv::Result<()> {
        write_csv(self.stream(kind), kind, out)
    }
}

pub fn record_line(r: &MetricRecord) -> String {
    serde_json::to_string(r).expect("metric records serialise")
}

pub fn write_csv<'a, W: Write>(
    records: impl Iterator<Item = &'a MetricRecord>,
    kind: StreamKind,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: &[&str] = match kind {
        StreamKind::Rtt => &[
            "launch_t_s",
            "src",
            "dst",
            "outcome",
            "rtt_s",
            "theoretical_rtt_s",
            "hop_count",
            "path",
        ],
        StreamKind::Flow => &[
            "slot_index",
            "t_s",
            "src",
            "dst",
            "send_rate_bit_s",
            "cwnd_segments",
            "bottleneck_bit_s",
        ],
        StreamKind::Path => &[
            "slot_index",
            "src",
            "dst",
            "hops",
            "total_distance_km",
            "theoretical_rtt_s",
        ],
        StreamKind::Topology => &[
            "slot_index",
            "t_s",
            "node_count",
            "isl_count",
            "gsl_count",
            "failed_links",
        ],
    };
    w.write_record(header)?;
    for r in records {
        let row: Vec<String> = match r {
            MetricRecord::RttSample(s) => vec![
                s.launch_t_s.to_string(),
                s.src.clone(),
                s.dst.clone(),
                "reply".into(),
                s.rtt_s.to_string(),
                s.theoretical_rtt_s.to_string(),
                s.hop_count.to_string(),
                s.path.join(" "),
            ],
            MetricRecord::PingTimeout(t) => vec![
                t.launch_t_s.to_string(),
                t.src.clone(),
                t.dst.clone(),
                "timeout".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
            MetricRecord::FlowRateSample(f) => vec![
                f.slot_index.to_string(),
                f.t_s.to_string(),
                f.src.clone(),
                f.dst.clone(),
                f.send_rate_bit_s.to_string(),
                f.cwnd_segments.to_string(),
                f.bottleneck_bit_s.to_string(),
            ],
            MetricRecord::PathRecord(p) => vec![
                p.slot_index.to_string(),
                p.src.clone(),
                p.dst.clone(),
                p.hops.join(" "),
                p.total_distance_km.to_string(),
                p.theoretical_rtt_s.to_string(),
            ],
            MetricRecord::Topology(t) => vec![
                t.slot_index.to_string(),
                t.t_s.to_string(),
                t.node_count.to_string(),
                t.isl_count.to_string(),
                t.gsl_count.to_string(),
                t.failed_links.to_string(),
            ],
            MetricRecord::Header(_) => continue,
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_kind_parsing() {
        assert_eq!("rtt".parse::<StreamKind>(), Ok(StreamKind::Rtt));
        assert_eq!("path_records".parse::<StreamKind>(), Ok(StreamKind::Path));
        assert!("bogus".parse::<StreamKind>().is_err());
    }

    #[test]
    fn jsonl_round_trip_and_csv() {
        let log = MetricsLog {
            records: vec![
                MetricRecord::Header(RunHeader {
                    scenario_name: "t".into(),
                    scenario_hash: "00".into(),
                    seed: 1,
                    algorithm: "centralized".into(),
                    slot_duration_s: 1.0,
                    slot_count: 1,
                    crate_version: "0".into(),
                    schema_version: 1,
                }),
                MetricRecord::PingTimeout(PingTimeout {
                    launch_t_s: 0.0,
                    src: "a".into(),
                    dst: "b".into(),
                    timeout_at_s: 2.0,
                    reason: TimeoutReason::NoRoute,
                }),
            ],
        };
        let text = log.to_jsonl();
        assert!(text.starts_with("{\"record\":\"header\""));
        assert_eq!(MetricsLog::from_jsonl(&text).unwrap(), log);
        let mut csv = Vec::new();
        log.write_csv(StreamKind::Rtt, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().contains("timeout"));
    }
}
