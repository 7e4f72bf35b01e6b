//! CSV encoding of sweep rows.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sweep::SweepRow;
use crate::sim::{MetricsRecord, ProtocolKind};

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

/// Flat CSV row; column order is the header order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsvRow {
    protocol: String,
    parameter: String,
    value: f64,
    repetition: usize,
    seed: u64,
    injected: u64,
    delivered: u64,
    expired: u64,
    dropped_no_route: u64,
    buffer_drops: u64,
    control_packets: u64,
    mean_delay: f64,
    p95_delay: f64,
    energy_total: f64,
    jump_transmissions: u64,
    node_tx: String,
}

pub const HEADER: [&str; 16] = [
    "protocol",
    "parameter",
    "value",
    "repetition",
    "seed",
    "injected",
    "delivered",
    "expired",
    "dropped_no_route",
    "buffer_drops",
    "control_packets",
    "mean_delay",
    "p95_delay",
    "energy_total",
    "jump_transmissions",
    "node_tx",
];

impl From<&SweepRow> for CsvRow {
    fn from(r: &SweepRow) -> Self {
        let m = &r.metrics;
        CsvRow {
            protocol: r.protocol.as_str().to_string(),
            parameter: r.parameter.clone(),
            value: r.value,
            repetition: r.repetition,
            seed: r.seed,
            injected: m.injected,
            delivered: m.delivered,
            expired: m.expired,
            dropped_no_route: m.dropped_no_route,
            buffer_drops: m.buffer_drops,
            control_packets: m.control_packets,
            mean_delay: m.mean_delay,
            p95_delay: m.p95_delay,
            energy_total: m.energy_total,
            jump_transmissions: m.jump_transmissions,
            node_tx: m.node_tx.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

impl CsvRow {
    fn into_row(self, index: usize) -> Result<SweepRow, ResultsError> {
        let bad = |reason: String| ResultsError::Malformed { row: index + 1, reason };
        let protocol =
            ProtocolKind::parse(&self.protocol).ok_or_else(|| bad(format!("unknown protocol `{}`", self.protocol)))?;
        let node_tx = if self.node_tx.is_empty() {
            Vec::new()
        } else {
            self.node_tx
                .split(';')
                .map(|s| s.parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("node_tx: {e}")))?
        };
        let metrics = MetricsRecord {
            injected: self.injected,
            delivered: self.delivered,
            expired: self.expired,
            dropped_no_route: self.dropped_no_route,
            buffer_drops: self.buffer_drops,
            control_packets: self.control_packets,
            mean_delay: self.mean_delay,
            p95_delay: self.p95_delay,
            energy_total: self.energy_total,
            jump_transmissions: self.jump_transmissions,
            node_tx,
        };
        Ok(SweepRow {
            protocol,
            parameter: self.parameter,
            value: self.value,
            repetition: self.repetition,
            seed: self.seed,
            metrics,
        })
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ResultsError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(HEADER)?;
    }
    for r in rows {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, ResultsError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(ResultsError::Malformed { row: 0, reason: "unexpected header".into() });
    }
    r.deserialize::<CsvRow>()
        .enumerate()
        .map(|(i, rec)| rec.map_err(ResultsError::from).and_then(|row| row.into_row(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> SweepRow {
        SweepRow {
            protocol: ProtocolKind::Bypass,
            parameter: "void_radius".into(),
            value: 7.0,
            repetition: 3,
            seed: u64::MAX,
            metrics: MetricsRecord {
                injected: 10,
                delivered: 7,
                expired: 1,
                dropped_no_route: 1,
                buffer_drops: 1,
                control_packets: 42,
                mean_delay: 31.25,
                p95_delay: 40.1,
                energy_total: 1.536e-5,
                jump_transmissions: 0,
                node_tx: vec![3, 0, 5],
            },
        }
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(), SweepRow { metrics: MetricsRecord::default(), ..row() }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&HEADER.join(",")));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_table_keeps_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), HEADER.join(","));
    }

    #[test]
    fn malformed_input_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_csv(&[row()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("bypass", "flood");
        assert!(matches!(read_csv(text.as_bytes()), Err(ResultsError::Malformed { row: 1, .. })));
        let text = String::from_utf8({
            let mut b = Vec::new();
            write_csv(&[row()], &mut b).unwrap();
            b
        })
        .unwrap()
        .replace(",7.0,", ",seven,");
        assert!(read_csv(text.as_bytes()).is_err());
    }
}
