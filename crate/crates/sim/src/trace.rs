//! Mobility trace events and their CSV form.
//!
//! The on-disk shape is a header `time_sec,vehicle_id,x_m,y_m` followed by
//! one row per vehicle per second; a vehicle leaves the area with a sentinel
//! row `time_sec,vehicle_id,departed,departed`. Rows are sorted by time.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// What one trace row says about a vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// The vehicle is at this position, in meters.
    Position { x: f64, y: f64 },
    /// The vehicle left the area; its chain's resources are released at the
    /// next decision instant.
    Departed,
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time_s: f64,
    pub vehicle: u64,
    pub kind: EventKind,
}

/// The sentinel text marking a departure row.
const DEPARTED: &str = "departed";

/// Writes events as CSV. Events must already be time-sorted; the writer
/// checks and refuses otherwise, so every produced file is a valid input.
pub fn write_trace(events: &[TraceEvent], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_sec", "vehicle_id", "x_m", "y_m"])?;
    let mut prev = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        if e.time_s < prev {
            return Err(Error::UnsortedTrace { line: i as u64 + 2, prev, next: e.time_s });
        }
        prev = e.time_s;
        match e.kind {
            EventKind::Position { x, y } => {
                w.write_record([
                    e.time_s.to_string(),
                    e.vehicle.to_string(),
                    x.to_string(),
                    y.to_string(),
                ])?;
            }
            EventKind::Departed => {
                w.write_record([
                    e.time_s.to_string(),
                    e.vehicle.to_string(),
                    DEPARTED.into(),
                    DEPARTED.into(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes events to a file.
pub fn write_trace_file(events: &[TraceEvent], path: impl AsRef<Path>) -> Result<()> {
    let mut f = File::create(path)?;
    write_trace(events, &mut f)
}

/// Reads a trace CSV, validating the header, the sort order, and every
/// field.
pub fn read_trace(input: &mut dyn Read) -> Result<Vec<TraceEvent>> {
    let mut reader = csv::Reader::from_reader(input);
    {
        let headers = reader.headers()?;
        let expect = ["time_sec", "vehicle_id", "x_m", "y_m"];
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expect {
            return Err(Error::BadRow {
                line: 1,
                reason: format!("header {got:?}, expected {expect:?}"),
            });
        }
    }
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record?;
        if record.len() != 4 {
            return Err(Error::BadRow { line, reason: format!("{} fields", record.len()) });
        }
        let time_s: f64 = record[0].trim().parse().map_err(|e| Error::BadRow {
            line,
            reason: format!("time_sec: {e}"),
        })?;
        let vehicle: u64 = record[1].trim().parse().map_err(|e| Error::BadRow {
            line,
            reason: format!("vehicle_id: {e}"),
        })?;
        if !time_s.is_finite() || time_s < 0.0 {
            return Err(Error::BadRow { line, reason: format!("time {time_s}") });
        }
        if time_s < prev {
            return Err(Error::UnsortedTrace { line, prev, next: time_s });
        }
        prev = time_s;
        let (xf, yf) = (record[2].trim(), record[3].trim());
        let kind = if xf == DEPARTED || yf == DEPARTED {
            if xf != yf {
                return Err(Error::BadRow {
                    line,
                    reason: "departure must fill both position fields".into(),
                });
            }
            EventKind::Departed
        } else {
            let x: f64 = xf.parse().map_err(|e| Error::BadRow {
                line,
                reason: format!("x_m: {e}"),
            })?;
            let y: f64 = yf.parse().map_err(|e| Error::BadRow {
                line,
                reason: format!("y_m: {e}"),
            })?;
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::BadRow { line, reason: format!("position ({x}, {y})") });
            }
            EventKind::Position { x, y }
        };
        out.push(TraceEvent { time_s, vehicle, kind });
    }
    Ok(out)
}

/// Reads a trace file.
pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Vec<TraceEvent>> {
    let mut f = File::open(path)?;
    read_trace(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(t: f64, v: u64, x: f64, y: f64) -> TraceEvent {
        TraceEvent { time_s: t, vehicle: v, kind: EventKind::Position { x, y } }
    }

    #[test]
    fn round_trips_positions_and_departures() {
        let events = vec![
            pos(0.0, 1, 10.0, 20.5),
            pos(0.0, 2, 30.0, 40.0),
            pos(1.0, 1, 11.0, 21.0),
            TraceEvent { time_s: 1.0, vehicle: 2, kind: EventKind::Departed },
        ];
        let mut buf = Vec::new();
        write_trace(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_sec,vehicle_id,x_m,y_m\n"));
        assert!(text.contains("1,2,departed,departed"));
        let back = read_trace(&mut buf.as_slice()).unwrap();
        assert_eq!(back, events);
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            "time,vehicle_id,x_m,y_m\n1,1,2,3\n",        // wrong header
            "time_sec,vehicle_id,x_m,y_m\n2,1,5,5\n1,1,5,5\n", // unsorted
            "time_sec,vehicle_id,x_m,y_m\n1,1,departed,7\n",   // half departure
            "time_sec,vehicle_id,x_m,y_m\n1,1,nan,0\n",        // non-finite
            "time_sec,vehicle_id,x_m,y_m\n-1,1,5,5\n",         // negative time
        ];
        for text in cases {
            assert!(read_trace(&mut text.as_bytes()).is_err(), "accepted: {text}");
        }
    }

    #[test]
    fn writer_refuses_unsorted_events() {
        let events = vec![pos(2.0, 1, 0.0, 0.0), pos(1.0, 1, 0.0, 0.0)];
        let mut buf = Vec::new();
        assert!(write_trace(&events, &mut buf).is_err());
    }
}
