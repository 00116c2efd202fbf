//! `.series.jsonl` sidecar files: one header line, then one sample per line.

use serde::{Deserialize, Serialize};

use super::{NodeProfile, ResourceSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub node: String,
    pub interval_ms: u64,
    pub profile: Option<NodeProfile>,
    #[serde(skip)]
    pub samples: Vec<ResourceSample>,
}

#[derive(Debug, thiserror::Error)]
pub enum SeriesError {
    #[error("series file is empty")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: samples must be strictly increasing in time")]
    NotIncreasing { line: usize },
    #[error("line {line}: sample out of range")]
    OutOfRange { line: usize },
}

pub const CSV_HEADER: &str = "taken_at,cpu_util,mem_used_bytes,net_rx_bytes_per_s,net_tx_bytes_per_s";

impl TimeSeries {
    pub fn new(node: impl Into<String>, interval_ms: u64) -> Self {
        TimeSeries { node: node.into(), interval_ms, profile: None, samples: Vec::new() }
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(self).expect("header serializes")
    }

    pub fn sample_line(sample: &ResourceSample) -> String {
        serde_json::to_string(sample).expect("sample serializes")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for s in &self.samples {
            out.push_str(&Self::sample_line(s));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SeriesError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(SeriesError::MissingHeader)?;
        let mut series: TimeSeries =
            serde_json::from_str(header).map_err(|source| SeriesError::Json { line: 1, source })?;
        for (i, line) in lines {
            let sample: ResourceSample =
                serde_json::from_str(line).map_err(|source| SeriesError::Json { line: i + 1, source })?;
            if !sample.in_range() {
                return Err(SeriesError::OutOfRange { line: i + 1 });
            }
            if series.samples.last().is_some_and(|prev| prev.taken_at >= sample.taken_at) {
                return Err(SeriesError::NotIncreasing { line: i + 1 });
            }
            series.samples.push(sample);
        }
        Ok(series)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&Self::csv_row(s));
        }
        out
    }

    pub fn csv_row(s: &ResourceSample) -> String {
        format!(
            "{},{},{},{},{}\n",
            s.taken_at,
            fmt_f64(s.cpu_util),
            s.mem_used_bytes,
            fmt_f64(s.net_rx_bytes_per_s),
            fmt_f64(s.net_tx_bytes_per_s)
        )
    }
}

// Same shortest round-trip form the JSON lines use.
fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Timestamp;
    use proptest::prelude::*;

    fn sample(ms: i64, util: f64) -> ResourceSample {
        ResourceSample {
            taken_at: Timestamp::from_millis(ms),
            cpu_util: util,
            mem_used_bytes: 1,
            net_rx_bytes_per_s: 0.1,
            net_tx_bytes_per_s: 3.0,
        }
    }

    #[test]
    fn csv_layout() {
        let mut ts = TimeSeries::new("n", 1000);
        ts.samples.push(sample(0, 0.5));
        assert_eq!(ts.to_csv(), format!("{CSV_HEADER}\n1970-01-01T00:00:00.000Z,0.5,1,0.1,3.0\n"));
    }

    #[test]
    fn rejects_unordered_and_out_of_range() {
        let mut ts = TimeSeries::new("n", 1000);
        ts.samples = vec![sample(5, 0.1), sample(5, 0.2)];
        assert!(matches!(TimeSeries::from_jsonl(&ts.to_jsonl()), Err(SeriesError::NotIncreasing { line: 3 })));
        ts.samples = vec![sample(5, 1.5)];
        assert!(matches!(TimeSeries::from_jsonl(&ts.to_jsonl()), Err(SeriesError::OutOfRange { line: 2 })));
        assert!(matches!(TimeSeries::from_jsonl(""), Err(SeriesError::MissingHeader)));
    }

    proptest! {
        #[test]
        fn jsonl_round_trip_is_byte_identical(
            utils in proptest::collection::vec(0.0f64..=1.0, 0..20),
            rate in 0.0f64..1e12,
            mem in any::<u64>(),
        ) {
            let mut ts = TimeSeries::new("node-x", 250);
            ts.profile = Some(NodeProfile::named("node-x"));
            ts.samples = utils.iter().enumerate().map(|(i, u)| ResourceSample {
                taken_at: Timestamp::from_millis(i as i64 * 250),
                cpu_util: *u,
                mem_used_bytes: mem,
                net_rx_bytes_per_s: rate,
                net_tx_bytes_per_s: rate / 3.0,
            }).collect();
            let text = ts.to_jsonl();
            let back = TimeSeries::from_jsonl(&text).unwrap();
            prop_assert_eq!(&back, &ts);
            prop_assert_eq!(back.to_jsonl(), text);
        }
    }
}
