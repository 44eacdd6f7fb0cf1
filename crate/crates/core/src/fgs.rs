//! Fusion center and controller logic at the access point.
//!
//! The fusion center declares an object detected on the first valid report,
//! extrapolates tracks at constant velocity and picks sleeping cameras to
//! wake along the predicted path.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::Square;
use crate::geometry::{sensing_power, SensorPose, Vec2};

/// One uplink detection update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub device_id: u32,
    pub object_id: u64,
    pub tti: u64,
    /// Trajectory-level confidence carried by the report.
    pub confidence: f64,
    pub observed_position: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEstimate {
    pub last_position: Vec2,
    /// m/s
    pub velocity: Vec2,
    pub last_tti: u64,
}

impl TrackEstimate {
    /// Predicted position at `tti` under constant velocity.
    pub fn extrapolate(&self, tti: u64, tti_duration: f64) -> Vec2 {
        let dt = (tti as f64 - self.last_tti as f64) * tti_duration;
        self.last_position + self.velocity * dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WakeUpRequest {
    pub device_id: u32,
    pub issue_tti: u64,
}

pub fn validate_report(confidence: f64, p_th: f64) -> bool {
    confidence >= p_th
}

/// Earliest valid report, ties broken by the lower device id.
pub fn first_valid(reports: &[DetectionReport], p_th: f64) -> Option<&DetectionReport> {
    reports
        .iter()
        .filter(|r| validate_report(r.confidence, p_th))
        .min_by_key(|r| (r.tti, r.device_id))
}

/// Detection TTI of an object given all its reports, if any report is valid.
pub fn fuse(reports: &[DetectionReport], p_th: f64) -> Option<u64> {
    first_valid(reports, p_th).map(|r| r.tti)
}

/// Inputs of the constant-velocity predictor that do not come from reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorParams {
    /// Where a single-report track is assumed to head.
    pub center: Vec2,
    /// Expected intruder speed, m/s.
    pub nominal_speed: f64,
    pub tti_duration: f64,
}

/// Constant-velocity track from the last two distinct-TTI reports, or a
/// heading toward the layout centre when only one TTI has been observed.
/// Returns `None` for an empty report list.
pub fn predict(reports: &[DetectionReport], params: &PredictorParams) -> Option<TrackEstimate> {
    let mut ordered: Vec<&DetectionReport> = reports.iter().collect();
    ordered.sort_by_key(|r| (r.tti, r.device_id));
    // same-TTI duplicates collapse onto the later device id
    ordered.dedup_by(|later, earlier| {
        if later.tti == earlier.tti {
            *earlier = *later;
            true
        } else {
            false
        }
    });
    let last = *ordered.last()?;
    let velocity = match ordered.len() {
        1 => {
            let to_center = params.center - last.observed_position;
            let dist = to_center.norm();
            if dist == 0.0 {
                Vec2::ZERO
            } else {
                to_center * (params.nominal_speed / dist)
            }
        }
        n => {
            let prev = ordered[n - 2];
            let elapsed = (last.tti - prev.tti) as f64 * params.tti_duration;
            let v = (last.observed_position - prev.observed_position) * (1.0 / elapsed);
            let limit = 2.0 * params.nominal_speed;
            let speed = v.norm();
            if speed > limit {
                v * (limit / speed)
            } else {
                v
            }
        }
    };
    Some(TrackEstimate {
        last_position: last.observed_position,
        velocity,
        last_tti: last.tti,
    })
}

/// How far ahead and how densely predicted paths are checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WakeupParams {
    pub horizon_ttis: u64,
    pub sample_every_ttis: u64,
    /// Upper bound on wake-ups per triggering report; `None` for no cap.
    pub max_per_event: Option<usize>,
}

impl Default for WakeupParams {
    fn default() -> Self {
        Self {
            horizon_ttis: 2000,
            sample_every_ttis: 50,
            max_per_event: None,
        }
    }
}

/// Controller's view of one device when choosing wake-up targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WakeCandidate {
    pub device_id: u32,
    pub pose: SensorPose,
    pub sleeping: bool,
    pub available: bool,
}

/// Sleeping, available devices that would see the predicted path with
/// confidence at least `p_th` within the horizon. Devices that would see it
/// sooner come first.
pub fn select_wakeups(
    track: &TrackEstimate,
    candidates: &[WakeCandidate],
    now: u64,
    params: &WakeupParams,
    tti_duration: f64,
    p_th: f64,
) -> Vec<u32> {
    let every = params.sample_every_ttis.max(1);
    let samples: Vec<Vec2> = (0..=params.horizon_ttis / every)
        .map(|k| track.extrapolate(now + k * every, tti_duration))
        .collect();
    let mut hits: Vec<(usize, u32)> = candidates
        .iter()
        .filter(|c| c.sleeping && c.available)
        .filter_map(|c| {
            samples
                .iter()
                .position(|&p| sensing_power(&c.pose, p) >= p_th)
                .map(|k| (k, c.device_id))
        })
        .collect();
    hits.sort_unstable();
    if let Some(cap) = params.max_per_event {
        hits.truncate(cap);
    }
    hits.into_iter().map(|(_, id)| id).collect()
}

/// Indices of the perimeter samples `pose` covers with confidence `>= p_th`.
pub fn covered_points(pose: &SensorPose, points: &[Vec2], p_th: f64) -> Vec<u32> {
    points
        .iter()
        .enumerate()
        .filter(|(_, &p)| sensing_power(pose, p) >= p_th)
        .map(|(i, _)| i as u32)
        .collect()
}

/// Fraction of `m` equally spaced points on `perimeter` covered by at least
/// one of `active` with confidence `>= p_th`.
pub fn coverage_fraction(active: &[SensorPose], perimeter: &Square, m: usize, p_th: f64) -> f64 {
    if active.is_empty() || m == 0 {
        return 0.0;
    }
    let covered = perimeter
        .sample_perimeter(m)
        .into_iter()
        .filter(|&p| active.iter().any(|pose| sensing_power(pose, p) >= p_th))
        .count();
    covered as f64 / m as f64
}

/// Counts the union of several covered-point lists without allocating.
#[derive(Debug, Clone)]
pub struct CoverageUnion {
    stamps: Vec<u64>,
    generation: u64,
}

impl CoverageUnion {
    pub fn new(m: usize) -> Self {
        Self {
            stamps: vec![0; m],
            generation: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn union_count<'a, I>(&mut self, lists: I) -> usize
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        self.generation += 1;
        let g = self.generation;
        let mut count = 0;
        for list in lists {
            for &i in list {
                let slot = &mut self.stamps[i as usize];
                if *slot != g {
                    *slot = g;
                    count += 1;
                }
            }
        }
        count
    }

    /// For each list in order, how many of its points no earlier list
    /// covered. The counts sum to [`union_count`](Self::union_count).
    pub fn incremental_counts<'a, I>(&mut self, lists: I) -> Vec<usize>
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        self.generation += 1;
        let g = self.generation;
        lists
            .into_iter()
            .map(|list| {
                let mut fresh = 0;
                for &i in list {
                    let slot = &mut self.stamps[i as usize];
                    if *slot != g {
                        *slot = g;
                        fresh += 1;
                    }
                }
                fresh
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ObjectSpawned,
    ReportReceived,
    SightingReceived,
    FusedDetection,
    WakeUpIssued,
    ObjectMissed,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tti: u64,
    pub event_kind: EventKind,
    pub device_id: Option<u32>,
    pub object_id: Option<u64>,
    pub value: Option<f64>,
}

/// Append-only event log; disabled logs drop records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    enabled: bool,
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            records: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        tti: u64,
        event_kind: EventKind,
        device_id: Option<u32>,
        object_id: Option<u64>,
        value: Option<f64>,
    ) {
        if self.enabled {
            self.records.push(EventRecord {
                tti,
                event_kind,
                device_id,
                object_id,
                value,
            });
        }
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SensingParams;

    fn report(device_id: u32, tti: u64, confidence: f64, pos: Vec2) -> DetectionReport {
        DetectionReport {
            device_id,
            object_id: 0,
            tti,
            confidence,
            observed_position: pos,
            class_label: None,
        }
    }

    fn params() -> PredictorParams {
        PredictorParams {
            center: Vec2::ZERO,
            nominal_speed: 1.0,
            tti_duration: 1e-3,
        }
    }

    #[test]
    fn validation_is_non_strict() {
        let th = (-0.5f64).exp();
        assert!(validate_report(th, th));
        assert!(!validate_report(0.0, th));
        assert!(validate_report(1.0, th));
    }

    #[test]
    fn fuse_cases() {
        let th = 0.5;
        assert_eq!(fuse(&[], th), None);
        let r = [
            report(0, 120, 0.9, Vec2::ZERO),
            report(1, 90, 0.9, Vec2::ZERO),
        ];
        assert_eq!(fuse(&r, th), Some(90));
        let r = [
            report(0, 50, 0.1, Vec2::ZERO),
            report(1, 200, 0.9, Vec2::ZERO),
        ];
        assert_eq!(fuse(&r, th), Some(200));
    }

    #[test]
    fn predict_cases() {
        let r = [
            report(0, 0, 0.9, Vec2::new(-4.0, 0.0)),
            report(1, 100, 0.9, Vec2::new(-3.9, 0.0)),
        ];
        let t = predict(&r, &params()).unwrap();
        assert!((t.velocity.x - 1.0).abs() < 1e-9 && t.velocity.y.abs() < 1e-12);

        let t = predict(&[report(0, 0, 0.9, Vec2::new(-4.0, 0.0))], &params()).unwrap();
        assert_eq!(t.velocity, Vec2::new(1.0, 0.0));

        let r = [
            report(0, 0, 0.9, Vec2::new(1.0, 1.0)),
            report(1, 10, 0.9, Vec2::new(1.0, 1.0)),
        ];
        assert_eq!(predict(&r, &params()).unwrap().velocity, Vec2::ZERO);
        assert!(predict(&[], &params()).is_none());
    }

    #[test]
    fn predict_collapses_same_tti() {
        let r = [
            report(3, 0, 0.9, Vec2::new(0.0, -4.0)),
            report(5, 0, 0.9, Vec2::new(-4.0, 0.0)),
        ];
        let t = predict(&r, &params()).unwrap();
        assert_eq!(t.last_position, Vec2::new(-4.0, 0.0));
        assert_eq!(t.velocity, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn predict_clamps_speed() {
        let r = [
            report(0, 0, 0.9, Vec2::new(0.0, 0.0)),
            report(1, 1, 0.9, Vec2::new(1.0, 0.0)),
        ];
        let t = predict(&r, &params()).unwrap();
        assert!((t.velocity.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wakeup_selection() {
        let sp = SensingParams::default();
        let track = TrackEstimate {
            last_position: Vec2::new(-2.0, 0.0),
            velocity: Vec2::new(1.0, 0.0),
            last_tti: 0,
        };
        // device 0.3 m above the path looking down; device 1 far away
        let near = sp.pose_facing(Vec2::new(-1.0, 0.3), 270.0);
        let far = sp.pose_facing(Vec2::new(3.0, 3.0), 90.0);
        let cands = |sleeping_near: bool| {
            vec![
                WakeCandidate {
                    device_id: 0,
                    pose: near,
                    sleeping: sleeping_near,
                    available: true,
                },
                WakeCandidate {
                    device_id: 1,
                    pose: far,
                    sleeping: true,
                    available: true,
                },
            ]
        };
        let p = WakeupParams::default();
        assert_eq!(
            select_wakeups(&track, &cands(true), 0, &p, 1e-3, sp.p_th),
            vec![0]
        );
        assert!(select_wakeups(&track, &cands(false), 0, &p, 1e-3, sp.p_th).is_empty());
        let away = TrackEstimate {
            velocity: Vec2::new(-1.0, 0.0),
            ..track
        };
        assert!(select_wakeups(&away, &cands(true), 0, &p, 1e-3, sp.p_th).is_empty());
    }

    #[test]
    fn coverage_extremes() {
        let sq = Square::new(Vec2::ZERO, 3.5);
        assert_eq!(coverage_fraction(&[], &sq, 1024, 0.5), 0.0);
        let omni = SensorPose::new(Vec2::ZERO, 0.0, 360.0, 10.0, 0.0).unwrap();
        assert_eq!(coverage_fraction(&[omni], &sq, 1024, 0.5), 1.0);
    }

    #[test]
    fn union_counts_overlap_once() {
        let mut u = CoverageUnion::new(10);
        let a = [1u32, 2, 3];
        let b = [3u32, 4];
        assert_eq!(u.union_count([&a[..], &b[..]]), 4);
        assert_eq!(u.union_count([&b[..]]), 2);
    }

    #[test]
    fn event_log_jsonl() {
        let mut log = EventLog::new(true);
        log.push(5, EventKind::FusedDetection, Some(2), Some(7), Some(0.9));
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"tti\":5,\"event_kind\":\"fused_detection\",\"device_id\":2,\"object_id\":7,\"value\":0.9}\n"
        );
        let mut off = EventLog::new(false);
        off.push(5, EventKind::FusedDetection, None, None, None);
        assert!(off.records().is_empty());
    }
}
