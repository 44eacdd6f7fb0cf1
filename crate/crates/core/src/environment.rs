//! Geofence geometry, intruder arrivals and intruder kinematics.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

const SECONDS_PER_DAY: f64 = 86_400.0;
const POS_EPS: f64 = 1e-9;

/// Largest per-TTI arrival probability accepted by the thinning sampler.
pub const MAX_ARRIVAL_PROB_PER_TTI: f64 = 0.1;

/// One side of an axis-aligned square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bottom => Side::Top,
            Side::Right => Side::Left,
            Side::Top => Side::Bottom,
            Side::Left => Side::Right,
        }
    }

    /// Outward normal direction in degrees.
    pub fn normal_deg(self) -> f64 {
        match self {
            Side::Right => 0.0,
            Side::Top => 90.0,
            Side::Left => 180.0,
            Side::Bottom => 270.0,
        }
    }

    pub fn normal(self) -> Vec2 {
        match self {
            Side::Right => Vec2::new(1.0, 0.0),
            Side::Top => Vec2::new(0.0, 1.0),
            Side::Left => Vec2::new(-1.0, 0.0),
            Side::Bottom => Vec2::new(0.0, -1.0),
        }
    }
}

/// Axis-aligned square, parameterized by counter-clockwise arc length
/// starting at the midpoint of the bottom side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub center: Vec2,
    pub half_width: f64,
}

impl Square {
    pub fn new(center: Vec2, half_width: f64) -> Self {
        Self { center, half_width }
    }

    pub fn perimeter(&self) -> f64 {
        8.0 * self.half_width
    }

    /// Closed containment test with a small tolerance.
    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.center;
        d.x.abs() <= self.half_width + POS_EPS && d.y.abs() <= self.half_width + POS_EPS
    }

    /// Chebyshev distance from the centre.
    pub fn chebyshev(&self, p: Vec2) -> f64 {
        let d = p - self.center;
        d.x.abs().max(d.y.abs())
    }

    fn wrap(&self, s: f64) -> f64 {
        let p = self.perimeter();
        let v = s.rem_euclid(p);
        if v >= p {
            0.0
        } else {
            v
        }
    }

    /// Side that owns arc position `s`. Corners belong to the side that
    /// starts there.
    pub fn side_at(&self, s: f64) -> Side {
        let h = self.half_width;
        let s = self.wrap(s);
        if s < h || s >= 7.0 * h {
            Side::Bottom
        } else if s < 3.0 * h {
            Side::Right
        } else if s < 5.0 * h {
            Side::Top
        } else {
            Side::Left
        }
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let h = self.half_width;
        let s = self.wrap(s);
        let local = if s < h {
            Vec2::new(s, -h)
        } else if s < 3.0 * h {
            Vec2::new(h, -h + (s - h))
        } else if s < 5.0 * h {
            Vec2::new(h - (s - 3.0 * h), h)
        } else if s < 7.0 * h {
            Vec2::new(-h, h - (s - 5.0 * h))
        } else {
            Vec2::new(-h + (s - 7.0 * h), -h)
        };
        self.center + local
    }

    /// Outward normal at `s`; corners get the diagonal.
    pub fn outward_normal_deg(&self, s: f64) -> f64 {
        let h = self.half_width;
        let s = self.wrap(s);
        let tol = 1e-9 * h.max(1.0);
        for (corner, diag) in [
            (h, 315.0),
            (3.0 * h, 45.0),
            (5.0 * h, 135.0),
            (7.0 * h, 225.0),
        ] {
            if (s - corner).abs() <= tol {
                return diag;
            }
        }
        self.side_at(s).normal_deg()
    }

    /// Point on `side` at signed offset `u` from that side's midpoint,
    /// measured counter-clockwise.
    pub fn point_on_side(&self, side: Side, u: f64) -> Vec2 {
        let h = self.half_width;
        let local = match side {
            Side::Bottom => Vec2::new(u, -h),
            Side::Right => Vec2::new(h, u),
            Side::Top => Vec2::new(-u, h),
            Side::Left => Vec2::new(-h, -u),
        };
        self.center + local
    }

    /// `m` equally spaced perimeter points starting at arc position 0.
    pub fn sample_perimeter(&self, m: usize) -> Vec<Vec2> {
        let step = self.perimeter() / m as f64;
        (0..m).map(|i| self.point_at(i as f64 * step)).collect()
    }

    /// Arc-length parameter at which the segment `a -> b` first touches the
    /// closed square, as a fraction of the segment in `[0, 1]`.
    pub fn first_entry(&self, a: Vec2, b: Vec2) -> Option<f64> {
        let (lo, hi) = (
            self.center - Vec2::new(self.half_width, self.half_width),
            self.center + Vec2::new(self.half_width, self.half_width),
        );
        let d = b - a;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-d.x, a.x - lo.x),
            (d.x, hi.x - a.x),
            (-d.y, a.y - lo.y),
            (d.y, hi.y - a.y),
        ] {
            if p == 0.0 {
                if q < -POS_EPS {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t0 <= t1 + POS_EPS).then_some(t0)
    }
}

/// Protected square and the surrounding early-warning band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeofenceLayout {
    pub protected_half_width: f64,
    pub outer_half_width: f64,
    pub center: Vec2,
}

impl Default for GeofenceLayout {
    fn default() -> Self {
        Self {
            protected_half_width: 3.5,
            outer_half_width: 4.0,
            center: Vec2::ZERO,
        }
    }
}

impl GeofenceLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.protected_half_width > 0.0 && self.protected_half_width.is_finite()) {
            return Err(Error::config(
                "layout.protected_half_width",
                "must be positive",
            ));
        }
        if !(self.outer_half_width > self.protected_half_width && self.outer_half_width.is_finite())
        {
            return Err(Error::config(
                "layout.outer_half_width",
                "must exceed protected_half_width",
            ));
        }
        if !self.center.is_finite() {
            return Err(Error::config("layout.center", "must be finite"));
        }
        Ok(())
    }

    pub fn protected(&self) -> Square {
        Square::new(self.center, self.protected_half_width)
    }

    pub fn outer(&self) -> Square {
        Square::new(self.center, self.outer_half_width)
    }

    /// Square halfway between the protected boundary and the outer boundary.
    pub fn barrier(&self) -> Square {
        Square::new(
            self.center,
            0.5 * (self.protected_half_width + self.outer_half_width),
        )
    }
}

/// Piecewise-constant day/night arrival intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalProfile {
    /// Arrivals per hour during the day window.
    pub day_rate: f64,
    /// Arrivals per hour outside it.
    pub night_rate: f64,
    /// Hour of day at which the day window opens.
    pub day_start: f64,
    /// Hour of day at which it closes.
    pub day_end: f64,
    /// Wall-clock hour corresponding to TTI 0.
    pub clock_origin: f64,
}

impl Default for ArrivalProfile {
    fn default() -> Self {
        Self {
            day_rate: 10.0,
            night_rate: 0.5,
            day_start: 6.0,
            day_end: 18.0,
            clock_origin: 0.0,
        }
    }
}

impl ArrivalProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.day_rate >= 0.0 && self.day_rate.is_finite()) {
            return Err(Error::config("arrivals.day_rate", "must be non-negative"));
        }
        if !(self.night_rate >= 0.0 && self.night_rate.is_finite()) {
            return Err(Error::config("arrivals.night_rate", "must be non-negative"));
        }
        if !(0.0 <= self.day_start && self.day_start < self.day_end && self.day_end <= 24.0) {
            return Err(Error::config(
                "arrivals.day_start",
                "need 0 <= day_start < day_end <= 24",
            ));
        }
        if !(0.0..24.0).contains(&self.clock_origin) {
            return Err(Error::config(
                "arrivals.clock_origin",
                "must lie in [0, 24)",
            ));
        }
        Ok(())
    }

    /// Wall-clock seconds since midnight at the start of `tti`.
    pub fn time_of_day(&self, tti: u64, tti_duration: f64) -> f64 {
        (self.clock_origin * 3600.0 + tti as f64 * tti_duration).rem_euclid(SECONDS_PER_DAY)
    }

    /// Intensity in arrivals per second at wall-clock second `tod`.
    pub fn rate_at(&self, tod: f64) -> f64 {
        let hour = tod / 3600.0;
        let per_hour = if hour >= self.day_start && hour < self.day_end {
            self.day_rate
        } else {
            self.night_rate
        };
        per_hour / 3600.0
    }

    /// TTI at which the intensity next changes, strictly after `tti`.
    fn next_change(&self, tti: u64, tti_duration: f64) -> u64 {
        let tod = self.time_of_day(tti, tti_duration);
        let mut best = f64::INFINITY;
        for edge in [self.day_start * 3600.0, self.day_end * 3600.0] {
            let mut dt = edge - tod;
            if dt <= 0.0 {
                dt += SECONDS_PER_DAY;
            }
            best = best.min(dt);
        }
        let steps = (best / tti_duration).ceil().max(1.0);
        tti.saturating_add(steps as u64)
    }

    /// Piecewise-constant windows `(start, end, p_per_tti)` covering `[0, horizon)`.
    pub fn windows(&self, horizon: u64, tti_duration: f64) -> Vec<(u64, u64, f64)> {
        let mut out = Vec::new();
        let mut t = 0;
        while t < horizon {
            let end = self.next_change(t, tti_duration).min(horizon);
            let p = self.rate_at(self.time_of_day(t, tti_duration)) * tti_duration;
            out.push((t, end, p));
            t = end;
        }
        out
    }

    /// Expected arrivals per TTI averaged over `horizon` TTIs (one day when
    /// `horizon` is zero).
    pub fn alpha(&self, horizon: u64, tti_duration: f64) -> f64 {
        let horizon = if horizon == 0 {
            (SECONDS_PER_DAY / tti_duration).round() as u64
        } else {
            horizon
        };
        let expected: f64 = self
            .windows(horizon, tti_duration)
            .iter()
            .map(|&(a, b, p)| (b - a) as f64 * p)
            .sum();
        expected / horizon as f64
    }
}

/// Spawn TTIs of intruders over `[0, horizon)`, by per-TTI Bernoulli
/// thinning of the time-varying intensity. Gaps inside a constant-rate
/// window are drawn geometrically, which is distributionally identical to
/// flipping one coin per TTI.
pub fn sample_arrivals<R: Rng + ?Sized>(
    profile: &ArrivalProfile,
    horizon_ttis: u64,
    tti_duration: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    profile.validate()?;
    if !(tti_duration > 0.0 && tti_duration.is_finite()) {
        return Err(Error::config("tti_duration", "must be positive"));
    }
    for (field, rate) in [
        ("arrivals.day_rate", profile.day_rate),
        ("arrivals.night_rate", profile.night_rate),
    ] {
        if rate / 3600.0 * tti_duration > MAX_ARRIVAL_PROB_PER_TTI {
            return Err(Error::config(
                field,
                "per-TTI arrival probability exceeds 0.1; Bernoulli thinning is not valid",
            ));
        }
    }
    let mut spawns = Vec::new();
    for (start, end, p) in profile.windows(horizon_ttis, tti_duration) {
        if p <= 0.0 {
            continue;
        }
        let geo = Geometric::new(p).map_err(|e| Error::config("arrivals", e.to_string()))?;
        let mut t = start;
        loop {
            let gap = geo.sample(rng);
            t = t.saturating_add(gap);
            if t >= end {
                break;
            }
            spawns.push(t);
            t += 1;
        }
    }
    Ok(spawns)
}

/// Straight-segment path entry -> via -> exit at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntruderTrajectory {
    pub id: u64,
    pub t_spawn: u64,
    pub entry_point: Vec2,
    pub via_point: Vec2,
    pub exit_point: Vec2,
    /// m/s
    pub speed: f64,
}

/// Entry, geofence-crossing and despawn TTIs of a trajectory. The object
/// is present for `t_in <= t < t_exit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingTimes {
    pub t_in: u64,
    pub t_g: u64,
    pub t_exit: u64,
}

impl IntruderTrajectory {
    pub fn new(
        id: u64,
        t_spawn: u64,
        entry: Vec2,
        via: Vec2,
        exit: Vec2,
        speed: f64,
    ) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::config("intruder.speed", "must be positive"));
        }
        if entry.distance(via) == 0.0 {
            return Err(Error::config(
                "intruder.via_point",
                "must differ from entry_point",
            ));
        }
        Ok(Self {
            id,
            t_spawn,
            entry_point: entry,
            via_point: via,
            exit_point: exit,
            speed,
        })
    }

    fn leg_lengths(&self) -> (f64, f64) {
        (
            self.entry_point.distance(self.via_point),
            self.via_point.distance(self.exit_point),
        )
    }

    pub fn path_length(&self) -> f64 {
        let (a, b) = self.leg_lengths();
        a + b
    }

    /// Point at arc length `s` along the path (clamped to the path).
    pub fn point_at_arclength(&self, s: f64) -> Vec2 {
        let (l1, l2) = self.leg_lengths();
        if s <= l1 {
            self.entry_point.lerp(self.via_point, (s / l1).max(0.0))
        } else if l2 > 0.0 {
            self.via_point
                .lerp(self.exit_point, ((s - l1) / l2).min(1.0))
        } else {
            self.via_point
        }
    }

    /// Position at TTI `t`, or `None` before spawning or after leaving.
    pub fn position_at(&self, t: u64, tti_duration: f64) -> Option<Vec2> {
        if t < self.t_spawn {
            return None;
        }
        let s = (t - self.t_spawn) as f64 * self.speed * tti_duration;
        if s > self.path_length() + POS_EPS {
            return None;
        }
        Some(self.point_at_arclength(s))
    }

    pub fn crossing_times(&self, layout: &GeofenceLayout, tti_duration: f64) -> CrossingTimes {
        let step = self.speed * tti_duration;
        let steps_on_path = ((self.path_length() + POS_EPS) / step).floor() as u64;
        let t_exit = self.t_spawn + steps_on_path + 1;

        let protected = layout.protected();
        let (l1, _) = self.leg_lengths();
        let s_enter = protected
            .first_entry(self.entry_point, self.via_point)
            .map(|f| f * l1)
            .or_else(|| {
                protected
                    .first_entry(self.via_point, self.exit_point)
                    .map(|f| l1 + f * (self.path_length() - l1))
            });
        let t_g = match s_enter {
            None => t_exit,
            Some(s) => {
                let inside = |k: u64| {
                    self.position_at(self.t_spawn + k, tti_duration)
                        .is_some_and(|p| protected.contains(p))
                };
                let mut k = ((s / step) - 1e-6).ceil().max(0.0) as u64;
                while k > 0 && inside(k - 1) {
                    k -= 1;
                }
                while k <= steps_on_path && !inside(k) {
                    k += 1;
                }
                self.t_spawn + k
            }
        };
        CrossingTimes {
            t_in: self.t_spawn,
            t_g,
            t_exit,
        }
    }
}

/// Source of intruder paths for a simulation.
pub trait TrajectorySampler: Sync {
    fn sample(&self, id: u64, t_spawn: u64, rng: &mut dyn rand::RngCore) -> IntruderTrajectory;
}

/// Default intruder law: uniform entry on the outer boundary, uniform
/// approach point on the protected boundary facing the entry, and a uniform
/// exit on the opposite outer side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformTraversal {
    pub layout: GeofenceLayout,
    pub speed: f64,
}

impl TrajectorySampler for UniformTraversal {
    fn sample(&self, id: u64, t_spawn: u64, rng: &mut dyn rand::RngCore) -> IntruderTrajectory {
        spawn_trajectory(&self.layout, id, t_spawn, self.speed, rng)
    }
}

pub fn spawn_trajectory<R: Rng + ?Sized>(
    layout: &GeofenceLayout,
    id: u64,
    t_spawn: u64,
    speed: f64,
    rng: &mut R,
) -> IntruderTrajectory {
    let outer = layout.outer();
    let protected = layout.protected();
    let entry = outer.point_at(rng.random_range(0.0..outer.perimeter()));
    let (via, side) = loop {
        let s = rng.random_range(0.0..protected.perimeter());
        let side = protected.side_at(s);
        let via = protected.point_at(s);
        // Approaching from the outside of the via side keeps the first leg
        // clear of the protected interior.
        if (entry - via).dot(side.normal()) > 1e-12 {
            break (via, side);
        }
    };
    let h = outer.half_width;
    let exit = outer.point_on_side(side.opposite(), rng.random_range(-h..h));
    IntruderTrajectory {
        id,
        t_spawn,
        entry_point: entry,
        via_point: via,
        exit_point: exit,
        speed,
    }
}

/// Writes per-TTI positions as CSV with header `id,tti,x,y`.
pub fn write_trace_csv<W: Write>(
    mut out: W,
    trajectories: &[IntruderTrajectory],
    tti_duration: f64,
) -> std::io::Result<()> {
    writeln!(out, "id,tti,x,y")?;
    for traj in trajectories {
        let mut t = traj.t_spawn;
        while let Some(p) = traj.position_at(t, tti_duration) {
            writeln!(out, "{},{},{},{}", traj.id, t, p.x, p.y)?;
            t += 1;
        }
    }
    Ok(())
}
