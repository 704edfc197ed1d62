//! Event-driven simulation of the finite-`eps` Lorentz process.
//!
//! Motion between contacts is the exact Larmor rotation; contacts come from
//! the closed-form orbit/disk intersection, so there is no time step anywhere.
//! After a reflection the return to the same disk is scheduled directly from
//! the self-recollision geometry, which keeps long daisies cheap.

use serde::{Deserialize, Serialize};

use crate::field::{FieldConfig, ObstacleSource, PoissonField, Scatterer};
use crate::geometry::{
    advance_free, first_hit, larmor_center, reflect, scattering_angle, self_recollision_geometry, Arc, FirstHit,
    MagneticConfig, ParticleState, Reflection, Vec2, GRAZING_TOL,
};

/// Events closer than this in time are treated as simultaneous.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Impact,
    SelfRecollision,
    OtherRecollision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub time: f64,
    pub obstacle_id: u64,
    pub center: Vec2,
    /// Unit vector from the disk center to the contact point.
    pub n: Vec2,
    pub kind: EventKind,
    pub theta: f64,
}

/// Counters for measure-zero situations met during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub grazing: u64,
    pub tangencies: u64,
    pub simultaneous: u64,
    pub contact_mismatch: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, o: &Diagnostics) {
        self.grazing += o.grazing;
        self.tangencies += o.tangencies;
        self.simultaneous += o.simultaneous;
        self.contact_mismatch += o.contact_mismatch;
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub mag: MagneticConfig,
    pub initial: ParticleState,
    pub horizon: f64,
    pub arcs: Vec<Arc>,
    pub events: Vec<CollisionEvent>,
    pub circling: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
struct PendingReturn {
    id: u64,
    center: Vec2,
    time: f64,
}

/// Incremental event loop over an obstacle source.
pub struct Stepper<S> {
    source: S,
    mag: MagneticConfig,
    eps: f64,
    time: f64,
    state: ParticleState,
    pending: Option<PendingReturn>,
    grazed: Option<u64>,
    arcs: Vec<Arc>,
    events: Vec<CollisionEvent>,
    diagnostics: Diagnostics,
    buf: Vec<Scatterer>,
}

impl<S: ObstacleSource> Stepper<S> {
    pub fn new(source: S, mag: MagneticConfig, start: ParticleState) -> Self {
        let eps = source.eps();
        Self {
            source,
            mag,
            eps,
            time: 0.0,
            state: start,
            pending: None,
            grazed: None,
            arcs: Vec::new(),
            events: Vec::new(),
            diagnostics: Diagnostics::default(),
            buf: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Current state; at a contact time this is the precollisional value
    /// until [`Stepper::collide_with`] is called.
    pub fn state(&self) -> ParticleState {
        self.state
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn events(&self) -> &[CollisionEvent] {
        &self.events
    }

    fn next_event(&mut self) -> Option<(f64, Scatterer)> {
        let q = larmor_center(self.state, &self.mag);
        self.source.near_circle(q, self.mag.radius(), &mut self.buf);
        let mut best: Option<(f64, Scatterer)> =
            self.pending.map(|p| (p.time, Scatterer { c: p.center, id: p.id }));
        for s in &self.buf {
            if Some(s.id) == self.grazed || self.pending.is_some_and(|p| p.id == s.id) {
                continue;
            }
            let te = match first_hit(self.state, &self.mag, s.c, self.eps, 0.0) {
                FirstHit::Hit(dt) => self.time + dt,
                FirstHit::Tangent => {
                    self.diagnostics.tangencies += 1;
                    continue;
                }
                FirstHit::Miss => continue,
            };
            match best {
                Some((tb, sb)) if (te - tb).abs() <= TIE_TOL => {
                    self.diagnostics.simultaneous += 1;
                    if s.id < sb.id {
                        best = Some((te, *s));
                    }
                }
                Some((tb, _)) if te > tb => {}
                _ => best = Some((te, *s)),
            }
        }
        best
    }

    fn fly(&mut self, until: f64) {
        let dt = until - self.time;
        self.arcs.push(Arc { start: self.time, state: self.state, duration: dt });
        self.state = advance_free(self.state, dt, &self.mag);
        self.time = until;
    }

    /// Run the dynamics up to `t_stop`, excluding contacts at `t_stop` itself.
    pub fn advance_to(&mut self, t_stop: f64) {
        while self.time < t_stop {
            match self.next_event() {
                Some((te, s)) if te < t_stop - TIE_TOL => {
                    self.fly(te);
                    self.collide_with(s);
                }
                _ => {
                    self.fly(t_stop);
                    break;
                }
            }
        }
    }

    /// Reflect on `s` at the current time. The state must be on its boundary.
    pub fn collide_with(&mut self, s: Scatterer) {
        let incoming = self.state;
        let rel = incoming.x - s.c;
        let n = rel.normalized();
        let outcome = match reflect(incoming, s.c, self.eps) {
            Ok(r) => r,
            Err(_) => {
                self.diagnostics.contact_mismatch += 1;
                if incoming.v.dot(n).abs() <= GRAZING_TOL {
                    Reflection::Grazing(incoming)
                } else {
                    Reflection::Reflected(ParticleState::new(incoming.x, crate::geometry::scatter(n, incoming.v)))
                }
            }
        };
        match outcome {
            Reflection::Reflected(out) => {
                let theta = scattering_angle(n, incoming.v);
                self.events.push(CollisionEvent {
                    time: self.time,
                    obstacle_id: s.id,
                    center: s.c,
                    n,
                    kind: EventKind::Impact,
                    theta,
                });
                let back = match self_recollision_geometry(s.c, n, incoming.v, self.eps, &self.mag) {
                    Ok(g) => g.return_time(&self.mag),
                    Err(_) => {
                        let dt_min = crate::geometry::EXCLUSION_FRACTION * self.mag.period();
                        first_hit(out, &self.mag, s.c, self.eps, dt_min).time().unwrap_or(f64::INFINITY)
                    }
                };
                self.pending = Some(PendingReturn { id: s.id, center: s.c, time: self.time + back });
                self.grazed = None;
                self.state = out;
            }
            Reflection::Grazing(_) => {
                self.diagnostics.grazing += 1;
                self.grazed = Some(s.id);
                if self.pending.is_some_and(|p| p.id == s.id) {
                    self.pending = None;
                }
            }
        }
    }

    pub fn finish(self, initial: ParticleState, horizon: f64) -> (TrajectoryRecord, S) {
        let mut events = self.events;
        classify_events(&mut events);
        let record = TrajectoryRecord {
            mag: self.mag,
            initial,
            horizon,
            arcs: self.arcs,
            circling: events.is_empty(),
            events,
            diagnostics: self.diagnostics,
        };
        (record, self.source)
    }
}

/// One trajectory of the Lorentz process over `[0, horizon)` in the Poisson
/// field described by `field`.
pub fn run_trajectory(field: &FieldConfig, mag: &MagneticConfig, start: ParticleState, horizon: f64) -> TrajectoryRecord {
    run_in(PoissonField::new(field.clone()), mag, start, horizon).0
}

/// Same as [`run_trajectory`] over an arbitrary obstacle source.
pub fn run_in<S: ObstacleSource>(source: S, mag: &MagneticConfig, start: ParticleState, horizon: f64) -> (TrajectoryRecord, S) {
    let mut stepper = Stepper::new(source, *mag, start);
    stepper.advance_to(horizon);
    stepper.finish(start, horizon)
}

/// Label each contact: first contact with a disk is an impact, a later one is
/// a self-recollision when the previous reflection was on the same disk and
/// an other-recollision otherwise.
pub fn classify_events(events: &mut [CollisionEvent]) {
    let mut seen = std::collections::HashSet::new();
    let mut prev: Option<u64> = None;
    for e in events.iter_mut() {
        e.kind = if seen.insert(e.obstacle_id) {
            EventKind::Impact
        } else if prev == Some(e.obstacle_id) {
            EventKind::SelfRecollision
        } else {
            EventKind::OtherRecollision
        };
        prev = Some(e.obstacle_id);
    }
}

/// `floor(gap / T)` with the boundary flag raised when `gap` is within `tol`
/// of a whole number of periods.
pub fn periods_in_gap(gap: f64, period: f64, tol: f64) -> (usize, bool) {
    let k = (gap * (1.0 - 1e-15) / period).floor().max(0.0) as usize;
    let nearest = (gap / period).round();
    (k, (gap - nearest * period).abs() <= tol && nearest >= 1.0)
}

impl TrajectoryRecord {
    pub fn impact_events(&self) -> impl Iterator<Item = &CollisionEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Impact)
    }

    /// Impact times and impact vectors in order.
    pub fn impacts(&self) -> Vec<(f64, Vec2)> {
        self.impact_events().map(|e| (e.time, e.n)).collect()
    }

    pub fn first_impact_time(&self) -> Option<f64> {
        self.impact_events().next().map(|e| e.time)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn impacts_before(&self, t: f64) -> usize {
        self.impact_events().filter(|e| e.time < t).count()
    }

    /// Self-recollisions with the `i`-th impacted disk between impact `i` and
    /// impact `i + 1` (or the horizon).
    pub fn self_recollision_count(&self, i: usize) -> Option<usize> {
        let impacts: Vec<&CollisionEvent> = self.impact_events().collect();
        let cur = impacts.get(i)?;
        let end = impacts.get(i + 1).map_or(self.horizon, |e| e.time);
        Some(
            self.events
                .iter()
                .filter(|e| {
                    e.kind == EventKind::SelfRecollision
                        && e.obstacle_id == cur.obstacle_id
                        && e.time > cur.time
                        && e.time < end
                })
                .count(),
        )
    }

    fn arc_index(&self, s: f64, right: bool) -> usize {
        let idx = if right {
            self.arcs.partition_point(|a| a.start <= s)
        } else {
            self.arcs.partition_point(|a| a.start < s)
        };
        idx.saturating_sub(1)
    }

    /// State at time `s`, right-continuous at contacts.
    pub fn state_at(&self, s: f64) -> ParticleState {
        let a = &self.arcs[self.arc_index(s, true)];
        a.at(s, &self.mag)
    }

    /// Left limit of the state at time `s`.
    pub fn state_before(&self, s: f64) -> ParticleState {
        let a = &self.arcs[self.arc_index(s, false)];
        a.at(s, &self.mag)
    }

    pub fn final_state(&self) -> ParticleState {
        self.arcs.last().map_or(self.initial, |a| a.end_state(&self.mag))
    }

    /// Positions sampled uniformly on each arc, endpoints included.
    pub fn polyline(&self, per_arc: usize) -> Vec<Vec2> {
        self.arcs.iter().flat_map(|a| a.polyline(per_arc, &self.mag)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotate, Vec2};
    use std::f64::consts::PI;

    fn mag4() -> MagneticConfig {
        MagneticConfig::new(4.0).unwrap()
    }

    fn start() -> ParticleState {
        ParticleState::new(Vec2::ZERO, Vec2::new(1.0, 0.0))
    }

    #[test]
    fn empty_field_circles() {
        let mag = mag4();
        let field = FieldConfig::empty(0.01, &mag).unwrap();
        let rec = run_trajectory(&field, &mag, start(), 3.0 * mag.period());
        assert!(rec.circling);
        assert_eq!(rec.arcs.len(), 1);
        assert!(rec.impacts().is_empty());
        let end = rec.final_state();
        assert!((end.x - start().x).norm() < 1e-12);
    }

    // A disk touched by the launch orbit at arc time s_star.
    fn single_disk(eps: f64, s_star: f64, depth: f64) -> (MagneticConfig, FieldConfig, Vec2) {
        let mag = mag4();
        let q = larmor_center(start(), &mag);
        let on_orbit = advance_free(start(), s_star, &mag).x;
        // Move the center slightly off the orbit so the contact is not grazing.
        let c = on_orbit + depth * (on_orbit - q).normalized();
        let field = FieldConfig::empty(eps, &mag).unwrap().inject([c]);
        (mag, field, c)
    }

    #[test]
    fn single_disk_daisy() {
        let eps = 0.05 * 0.25;
        let (mag, field, c) = single_disk(eps, 0.6, 0.3 * eps);
        let horizon = 5.5 * mag.period();
        let rec = run_trajectory(&field, &mag, start(), horizon);
        assert!(!rec.circling);
        assert_eq!(rec.count(EventKind::Impact), 1);
        assert_eq!(rec.count(EventKind::OtherRecollision), 0);
        let selfs = rec.count(EventKind::SelfRecollision);
        assert_eq!(selfs, 5);
        // Oracle: first contact by closed-form intersection with the single disk.
        let t1 = first_hit(start(), &mag, c, eps, 0.0).time().unwrap();
        let (ti, ni) = rec.impacts()[0];
        assert!((ti - t1).abs() < 1e-12);
        let contact = advance_free(start(), t1, &mag);
        assert!((ni - (contact.x - c).normalized()).norm() < 1e-12);
        assert!(ni.dot(contact.v) <= 0.0);
        // Returns are separated by just under one period.
        for w in rec.events.windows(2) {
            let gap = w[1].time - w[0].time;
            assert!(gap < mag.period() && gap > mag.period() * 0.9, "{gap}");
        }
        assert_eq!(rec.self_recollision_count(0), Some(5));
    }

    #[test]
    fn recollision_count_matches_floor_rule() {
        let eps = 0.0025; // R/100
        let (mag, field, _) = single_disk(eps, 0.3, 0.5 * eps);
        let rec0 = run_trajectory(&field, &mag, start(), 10.0);
        let t1 = rec0.impacts()[0].0;
        let period = mag.period();
        for (gap_periods, want) in [(0.5, 0), (2.5, 2)] {
            let rec = run_trajectory(&field, &mag, start(), t1 + gap_periods * period);
            assert_eq!(rec.self_recollision_count(0), Some(want));
            assert_eq!(periods_in_gap(gap_periods * period, period, eps).0, want);
        }
        assert!(periods_in_gap(2.0 * period + 0.5 * eps, period, eps).1);
    }

    #[test]
    fn classification_rules() {
        let ev = |id| CollisionEvent {
            time: 0.0,
            obstacle_id: id,
            center: Vec2::ZERO,
            n: Vec2::new(1.0, 0.0),
            kind: EventKind::Impact,
            theta: 0.0,
        };
        let mut events = vec![ev(1), ev(2), ev(1), ev(1)];
        classify_events(&mut events);
        let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [EventKind::Impact, EventKind::Impact, EventKind::OtherRecollision, EventKind::SelfRecollision]
        );
    }

    #[test]
    fn random_field_invariants() {
        let mag = mag4();
        let eps = 0.01;
        for seed in 0..40 {
            let field = FieldConfig::with_default_cells(eps, &mag, seed, Vec2::ZERO).unwrap();
            let horizon = 3.0 * mag.period();
            let rec = run_trajectory(&field, &mag, start(), horizon);
            assert_eq!(rec.circling, rec.events.is_empty());
            // Arcs tile [0, horizon] continuously.
            assert_eq!(rec.arcs[0].start, 0.0);
            for w in rec.arcs.windows(2) {
                assert!((w[0].end() - w[1].start).abs() < 1e-12);
                assert!((w[0].end_state(&mag).x - w[1].state.x).norm() < 1e-9);
            }
            assert!((rec.arcs.last().unwrap().end() - horizon).abs() < 1e-12);
            for w in rec.events.windows(2) {
                assert!(w[0].time < w[1].time);
            }
            let mut ids = std::collections::HashSet::new();
            for e in rec.impact_events() {
                assert!(ids.insert(e.obstacle_id));
            }
            // Sampled invariants: unit speed, exact circles, no penetration.
            let centers: Vec<Vec2> = rec.events.iter().map(|e| e.center).collect();
            let all = crate::field::scatterers_in_rect(&field, Vec2::new(-4.0, -4.0), Vec2::new(4.0, 4.0));
            for a in &rec.arcs {
                let q = larmor_center(a.state, &mag);
                for k in 0..=64 {
                    let s = a.at(a.start + a.duration * k as f64 / 64.0, &mag);
                    assert!((s.v.norm() - 1.0).abs() < 1e-10);
                    assert!(((s.x - q).norm() - mag.radius()).abs() < 1e-9);
                    for d in all.iter().map(|d| d.c).chain(centers.iter().copied()) {
                        assert!(s.x.dist(d) >= eps - 1e-9, "penetration seed {seed}");
                    }
                }
            }
            for (_, n) in rec.impacts() {
                assert!((n.norm() - 1.0).abs() < 1e-12);
            }
            for e in rec.impact_events() {
                assert!(e.n.dot(rec.state_before(e.time).v) <= 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_records() {
        let mag = mag4();
        let field = FieldConfig::with_default_cells(0.02, &mag, 99, Vec2::ZERO).unwrap();
        let a = run_trajectory(&field, &mag, start(), 5.0);
        let b = run_trajectory(&field, &mag, start(), 5.0);
        assert_eq!(a.events, b.events);
        assert_eq!(a.arcs, b.arcs);
    }

    #[test]
    fn state_lookup_is_right_continuous() {
        let eps = 0.01;
        let (mag, field, _) = single_disk(eps, 0.5, 0.2 * eps);
        let rec = run_trajectory(&field, &mag, start(), 2.0);
        let e = rec.events[0];
        let before = rec.state_before(e.time);
        let after = rec.state_at(e.time);
        assert!((before.x - after.x).norm() < 1e-12);
        assert!((rotate(e.theta, before.v) - after.v).norm() < 1e-12);
        assert_eq!(rec.state_at(0.0), start());
        let _ = PI;
    }
}
