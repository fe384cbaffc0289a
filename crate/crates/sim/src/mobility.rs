//! Seeded random-waypoint mobility: a reproducible stand-in for external
//! vehicle traces.
//!
//! Each vehicle spawns at a uniform position, draws a personal speed
//! uniformly from `[0.5, 1.5]` times the configured mean, and walks toward
//! uniformly drawn waypoints without pausing. Positions are emitted once per
//! whole second. Optional Poisson arrivals add vehicles over time and
//! exponential dwell times remove them with a departure sentinel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scenario::{ScenarioConfig, TraceKind};
use crate::trace::{read_trace_file, EventKind, TraceEvent};

/// RNG stream for vehicle movement; the harness draws service classes and
/// handling order from other streams of the same seed, so traces and
/// decisions stay independently reproducible.
const STREAM_MOBILITY: u64 = 1;

#[derive(Debug)]
struct Vehicle {
    x: f64,
    y: f64,
    waypoint: (f64, f64),
    speed: f64,
    departs_at: Option<u64>,
}

/// Draws from Poisson(`lambda`) by Knuth's product method; `lambda` is a
/// per-second arrival rate, small in every intended scenario.
fn poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let floor = (-lambda).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= floor || k >= 1_000 {
            return k;
        }
        k += 1;
    }
}

/// Seconds a late arrival stays, exponentially distributed with the given
/// mean and rounded up to at least one second.
fn dwell_seconds(rng: &mut impl Rng, mean: f64) -> u64 {
    let u: f64 = rng.gen();
    let secs = -mean * (1.0 - u).ln();
    (secs.ceil() as u64).max(1)
}

/// Generates the synthetic trace for a scenario. The same `(config, seed)`
/// pair always yields the identical event list.
pub fn synth_mobility(cfg: &ScenarioConfig, seed: u64) -> Vec<TraceEvent> {
    let t = &cfg.trace;
    let a = &cfg.area;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_MOBILITY);

    let t_end = t.duration_s.floor().max(0.0) as u64;
    let mut events = Vec::new();
    let mut active: std::collections::BTreeMap<u64, Vehicle> = Default::default();
    let mut next_id = 0u64;

    let spawn = |rng: &mut ChaCha8Rng, now: u64, t_cfg: &crate::scenario::TraceConfig| {
        let x = rng.gen_range(a.x_min..a.x_max);
        let y = rng.gen_range(a.y_min..a.y_max);
        let waypoint = (rng.gen_range(a.x_min..a.x_max), rng.gen_range(a.y_min..a.y_max));
        let speed = if t_cfg.mean_speed_mps > 0.0 {
            rng.gen_range(0.5 * t_cfg.mean_speed_mps..1.5 * t_cfg.mean_speed_mps)
        } else {
            0.0
        };
        let departs_at = if t_cfg.mean_dwell_s > 0.0 {
            Some(now + dwell_seconds(rng, t_cfg.mean_dwell_s))
        } else {
            None
        };
        Vehicle { x, y, waypoint, speed, departs_at }
    };

    for s in 0..=t_end {
        // Departures scheduled for this second leave before moving.
        let leaving: Vec<u64> = active
            .iter()
            .filter(|(_, v)| v.departs_at == Some(s))
            .map(|(&id, _)| id)
            .collect();
        for id in leaving {
            active.remove(&id);
            events.push(TraceEvent { time_s: s as f64, vehicle: id, kind: EventKind::Departed });
        }

        // Everyone already present walks for one second.
        for v in active.values_mut() {
            let mut remaining = v.speed;
            // A waypoint switch mid-second carries the leftover distance
            // into the new leg; the bound only guards degenerate areas.
            for _ in 0..64 {
                if remaining <= 0.0 {
                    break;
                }
                let (dx, dy) = (v.waypoint.0 - v.x, v.waypoint.1 - v.y);
                let dist = (dx * dx + dy * dy).sqrt();
                if dist <= remaining {
                    v.x = v.waypoint.0;
                    v.y = v.waypoint.1;
                    remaining -= dist;
                    v.waypoint =
                        (rng.gen_range(a.x_min..a.x_max), rng.gen_range(a.y_min..a.y_max));
                } else {
                    v.x += dx / dist * remaining;
                    v.y += dy / dist * remaining;
                    remaining = 0.0;
                }
            }
        }

        // The initial population spawns at second zero, Poisson arrivals
        // afterwards.
        let n_new =
            if s == 0 { t.vehicles } else { poisson(&mut rng, t.arrivals_per_s) };
        for _ in 0..n_new {
            active.insert(next_id, spawn(&mut rng, s, t));
            next_id += 1;
        }

        for (&id, v) in &active {
            events.push(TraceEvent {
                time_s: s as f64,
                vehicle: id,
                kind: EventKind::Position { x: v.x, y: v.y },
            });
        }
    }
    events
}

/// The scenario's trace: generated when synthetic, read from disk when a
/// file. `seed` only affects the synthetic kind.
pub fn trace_events(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<TraceEvent>> {
    match cfg.trace.kind {
        TraceKind::Synthetic => Ok(synth_mobility(cfg, seed)),
        TraceKind::File => read_trace_file(cfg.trace.path.as_ref().expect("validated")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::write_trace;

    fn config(text: &str) -> ScenarioConfig {
        ScenarioConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn same_seed_gives_byte_identical_traces() {
        let cfg = config("[trace]\nvehicles = 20\nduration_s = 10.0\narrivals_per_s = 0.5\nmean_dwell_s = 4.0");
        let (a, b) = (synth_mobility(&cfg, 42), synth_mobility(&cfg, 42));
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_trace(&a, &mut csv_a).unwrap();
        write_trace(&b, &mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_ne!(synth_mobility(&cfg, 43), a, "different seeds should differ");
    }

    #[test]
    fn empirical_mean_speed_matches_the_configuration() {
        let cfg = config("[trace]\nvehicles = 300\nduration_s = 60.0\nmean_speed_mps = 4.28");
        let events = synth_mobility(&cfg, 7);
        // Average the per-hop distances per vehicle; hops are one second
        // apart, so each hop length is the speed over that second.
        let mut last: std::collections::HashMap<u64, (f64, f64)> = Default::default();
        let mut per_vehicle: std::collections::HashMap<u64, (f64, u64)> = Default::default();
        for e in &events {
            if let EventKind::Position { x, y } = e.kind {
                if let Some((px, py)) = last.insert(e.vehicle, (x, y)) {
                    let hop = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
                    let entry = per_vehicle.entry(e.vehicle).or_insert((0.0, 0));
                    entry.0 += hop;
                    entry.1 += 1;
                }
            }
        }
        let speeds: Vec<f64> =
            per_vehicle.values().map(|(d, n)| d / *n as f64).collect();
        let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
        assert!(
            (mean - 4.28).abs() / 4.28 < 0.05,
            "empirical mean speed {mean} strays more than 5% from 4.28"
        );
    }

    #[test]
    fn zero_speed_vehicles_never_move() {
        let cfg = config("[trace]\nvehicles = 5\nduration_s = 10.0\nmean_speed_mps = 0.0");
        let events = synth_mobility(&cfg, 3);
        let mut first: std::collections::HashMap<u64, (f64, f64)> = Default::default();
        for e in &events {
            if let EventKind::Position { x, y } = e.kind {
                let p = first.entry(e.vehicle).or_insert((x, y));
                assert_eq!(*p, (x, y), "vehicle {} moved at speed zero", e.vehicle);
            }
        }
        assert_eq!(first.len(), 5);
    }

    #[test]
    fn arrivals_and_departures_shape_the_population() {
        let cfg = config(
            "[trace]\nvehicles = 10\nduration_s = 30.0\narrivals_per_s = 1.0\nmean_dwell_s = 5.0",
        );
        let events = synth_mobility(&cfg, 11);
        let mut departed: std::collections::HashSet<u64> = Default::default();
        let mut max_id = 0u64;
        for e in &events {
            max_id = max_id.max(e.vehicle);
            match e.kind {
                EventKind::Departed => {
                    assert!(departed.insert(e.vehicle), "vehicle departed twice");
                }
                EventKind::Position { .. } => {
                    assert!(
                        !departed.contains(&e.vehicle),
                        "vehicle {} reappeared after departing",
                        e.vehicle
                    );
                }
            }
        }
        assert!(max_id >= 10, "no arrivals beyond the initial population");
        assert!(!departed.is_empty(), "no vehicle ever departed");
    }

    #[test]
    fn positions_stay_inside_the_area() {
        let cfg = config(
            "[area]\nx_max = 100.0\ny_max = 50.0\n[trace]\nvehicles = 8\nduration_s = 20.0\nmean_speed_mps = 30.0",
        );
        let events = synth_mobility(&cfg, 5);
        for e in &events {
            if let EventKind::Position { x, y } = e.kind {
                assert!((0.0..=100.0).contains(&x) && (0.0..=50.0).contains(&y));
            }
        }
    }
}
