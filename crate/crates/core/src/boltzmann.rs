//! Sampler for the limiting jump process and its piecewise flow.
//!
//! Obstacles have zero size in the limit, so a path is just the list of
//! impact times and impact vectors. Between impacts `i` and `i + 1` the
//! particle comes back to `xi(t_i)` every period and its velocity is rotated
//! by the same angle `theta_i` each time.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    advance_free, rotate, scattering_angle, total_cross_section, Arc, MagneticConfig, ParticleState, Vec2,
};

/// Total collision rate for unit speed and unit intensity.
pub const COLLISION_RATE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub t: f64,
    pub n: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannPath {
    pub horizon: f64,
    pub circling: bool,
    pub events: Vec<PathEvent>,
}

/// Number of whole periods in `gap`, nudged down so exact multiples do not
/// round up.
pub fn periods_in(gap: f64, period: f64) -> usize {
    (gap * (1.0 - 1e-15) / period).floor().max(0.0) as usize
}

impl BoltzmannPath {
    pub fn m(&self) -> usize {
        self.events.len()
    }

    fn gap_end(&self, i: usize) -> f64 {
        self.events.get(i + 1).map_or(self.horizon, |e| e.t)
    }

    /// Self-recollision counts `k_i` for every gap, the last one closing at
    /// the horizon.
    pub fn k(&self, mag: &MagneticConfig) -> Vec<usize> {
        (0..self.events.len())
            .map(|i| periods_in(self.gap_end(i) - self.events[i].t, mag.period()))
            .collect()
    }

    pub fn sum_k(&self, mag: &MagneticConfig) -> usize {
        self.k(mag).iter().sum()
    }

    pub fn events_before(&self, t: f64) -> usize {
        self.events.iter().filter(|e| e.t < t).count()
    }
}

/// Impact vector with density `(n . v)_- / 2` on the half circle facing `v`.
pub fn sample_impact_vector<R: Rng + ?Sized>(v: Vec2, rng: &mut R) -> Vec2 {
    let u: f64 = rng.random();
    let psi = (2.0 * u - 1.0).asin();
    rotate(psi, -v)
}

fn waiting_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp::new(COLLISION_RATE).expect("positive rate").sample(rng)
}

/// Draw one path on `[0, horizon)`. The first impact must come within one
/// period; otherwise the particle circles forever and the path is empty.
pub fn sample_path<R: Rng + ?Sized>(
    horizon: f64,
    mag: &MagneticConfig,
    start: ParticleState,
    rng: &mut R,
) -> BoltzmannPath {
    let period = mag.period();
    let mut events = Vec::new();
    let mut t = waiting_time(rng);
    if t < period.min(horizon) {
        let mut flow = FlowCursor::new(start, *mag);
        while t < horizon {
            let v = flow.velocity_before(t);
            let n = sample_impact_vector(v, rng);
            flow.impact(t, n);
            events.push(PathEvent { t, n });
            t += waiting_time(rng);
        }
    }
    BoltzmannPath { horizon, circling: events.is_empty(), events }
}

/// Forward construction of the flow one impact at a time.
struct FlowCursor {
    mag: MagneticConfig,
    /// State right after the latest impact (or the start).
    anchor: ParticleState,
    anchor_time: f64,
    theta: f64,
    started: bool,
}

impl FlowCursor {
    fn new(start: ParticleState, mag: MagneticConfig) -> Self {
        Self { mag, anchor: start, anchor_time: 0.0, theta: 0.0, started: false }
    }

    /// State at `t` (left limit) after replaying the self-recollision
    /// rotations of the current gap.
    fn state_before(&self, t: f64) -> ParticleState {
        let gap = t - self.anchor_time;
        if !self.started {
            return advance_free(self.anchor, gap, &self.mag);
        }
        let k = periods_in(gap, self.mag.period());
        let v = rotate(k as f64 * self.theta, self.anchor.v);
        let rest = gap - k as f64 * self.mag.period();
        advance_free(ParticleState { x: self.anchor.x, v }, rest, &self.mag)
    }

    fn velocity_before(&self, t: f64) -> Vec2 {
        self.state_before(t).v
    }

    fn impact(&mut self, t: f64, n: Vec2) -> (ParticleState, f64) {
        let before = self.state_before(t);
        let theta = if n.dot(before.v) <= 0.0 { scattering_angle(n, before.v) } else { 0.0 };
        self.anchor = ParticleState { x: before.x, v: rotate(theta, before.v) };
        self.anchor_time = t;
        self.theta = theta;
        self.started = true;
        (before, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    Impact,
    SelfRecollision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub position: Vec2,
    pub theta: f64,
    /// Index of the impact this jump belongs to.
    pub impact: usize,
    pub kind: JumpKind,
}

/// The flow of a Boltzmann path: arcs tiling `[0, horizon]` and the
/// velocity jumps between them.
#[derive(Debug, Clone)]
pub struct LimitTrajectory {
    pub mag: MagneticConfig,
    pub initial: ParticleState,
    pub horizon: f64,
    pub arcs: Vec<Arc>,
    pub jumps: Vec<Jump>,
}

/// Build the forward flow of `path` from `start`.
pub fn build_flow(path: &BoltzmannPath, mag: &MagneticConfig, start: ParticleState) -> LimitTrajectory {
    let period = mag.period();
    let mut arcs = Vec::new();
    let mut jumps = Vec::new();
    let mut time = 0.0;
    let mut state = start;
    for (i, e) in path.events.iter().enumerate() {
        arcs.push(Arc { start: time, state, duration: e.t - time });
        let before = advance_free(state, e.t - time, mag);
        let theta = if e.n.dot(before.v) <= 0.0 { scattering_angle(e.n, before.v) } else { 0.0 };
        let p = before.x;
        jumps.push(Jump { time: e.t, position: p, theta, impact: i, kind: JumpKind::Impact });
        time = e.t;
        state = ParticleState { x: p, v: rotate(theta, before.v) };
        let end = path.events.get(i + 1).map_or(path.horizon, |n| n.t);
        for j in 1..=periods_in(end - e.t, period) {
            let tj = e.t + j as f64 * period;
            arcs.push(Arc { start: time, state, duration: tj - time });
            // Back at the collision point after one full turn; pin it exactly.
            let v = advance_free(state, tj - time, mag).v;
            jumps.push(Jump { time: tj, position: p, theta, impact: i, kind: JumpKind::SelfRecollision });
            time = tj;
            state = ParticleState { x: p, v: rotate(theta, v) };
        }
    }
    arcs.push(Arc { start: time, state, duration: path.horizon - time });
    LimitTrajectory { mag: *mag, initial: start, horizon: path.horizon, arcs, jumps }
}

impl LimitTrajectory {
    fn arc_index(&self, s: f64, right: bool) -> usize {
        let idx = if right {
            self.arcs.partition_point(|a| a.start <= s)
        } else {
            self.arcs.partition_point(|a| a.start < s)
        };
        idx.saturating_sub(1)
    }

    /// State at `s`, taking the value after a jump.
    pub fn eval(&self, s: f64) -> Result<ParticleState> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(Error::OutOfRange(format!("time {s} outside [0, {}]", self.horizon)));
        }
        Ok(self.arcs[self.arc_index(s, true)].at(s, &self.mag))
    }

    /// Left limit of the state at `s`.
    pub fn state_before(&self, s: f64) -> ParticleState {
        self.arcs[self.arc_index(s, false)].at(s, &self.mag)
    }

    pub fn final_state(&self) -> ParticleState {
        let a = self.arcs.last().expect("flow has at least one arc");
        a.end_state(&self.mag)
    }

    /// Impact positions `xi(t_i)`.
    pub fn impact_points(&self) -> Vec<Vec2> {
        self.jumps.iter().filter(|j| j.kind == JumpKind::Impact).map(|j| j.position).collect()
    }

    pub fn polyline(&self, per_arc: usize) -> Vec<Vec2> {
        self.arcs.iter().flat_map(|a| a.polyline(per_arc, &self.mag)).collect()
    }
}

/// Quadrature check of the total cross-section used as the collision rate.
pub fn check_collision_rate() -> Result<()> {
    let s = total_cross_section(64);
    if (s - COLLISION_RATE).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("cross-section quadrature gave {s}, expected 2")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::first_hit;
    use crate::rng::{stream, STREAM_BOLTZMANN};
    use std::f64::consts::PI;

    fn mag4() -> MagneticConfig {
        MagneticConfig::new(4.0).unwrap()
    }

    fn start() -> ParticleState {
        ParticleState::new(Vec2::ZERO, Vec2::new(1.0, 0.0))
    }

    #[test]
    fn impact_vectors_are_precollisional_with_mean_minus_pi_over_4() {
        let mut rng = stream(1, STREAM_BOLTZMANN, 0);
        let v = Vec2::from_angle(0.3);
        let n = 100_000;
        let dots: Vec<f64> = (0..n).map(|_| sample_impact_vector(v, &mut rng).dot(v)).collect();
        assert!(dots.iter().all(|&d| d <= 0.0));
        let mean = dots.iter().sum::<f64>() / n as f64;
        let var = dots.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Oracle: E[n.v] = -int cos^2(psi)/2 over (-pi/2, pi/2), by quadrature.
        let rule = crate::quadrature::gauss_legendre(32);
        let oracle: f64 =
            -crate::quadrature::on_interval(&rule, -PI / 2.0, PI / 2.0).map(|(x, w)| w * x.cos().powi(2) / 2.0).sum::<f64>();
        assert!((oracle + PI / 4.0).abs() < 1e-12);
        assert!((mean - oracle).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn circling_paths_are_empty() {
        let mag = mag4();
        let mut rng = stream(2, STREAM_BOLTZMANN, 0);
        for _ in 0..2000 {
            let p = sample_path(3.0 * mag.period(), &mag, start(), &mut rng);
            assert_eq!(p.circling, p.events.is_empty());
            if let Some(e) = p.events.first() {
                assert!(e.t > 0.0 && e.t < mag.period());
            }
            for w in p.events.windows(2) {
                assert!(w[0].t < w[1].t);
            }
            assert!(p.events.iter().all(|e| e.t < p.horizon));
        }
    }

    #[test]
    fn circling_fraction_matches_exponential_weight() {
        let mag = mag4();
        let n = 20_000;
        let mut rng = stream(3, STREAM_BOLTZMANN, 0);
        let hits = (0..n).filter(|_| sample_path(3.0 * mag.period(), &mag, start(), &mut rng).circling).count();
        let p = (-2.0 * mag.period()).exp();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn empty_by_t_below_period() {
        let mag = mag4();
        let t = 0.4 * mag.period();
        let n = 20_000;
        let mut rng = stream(4, STREAM_BOLTZMANN, 0);
        let zero = (0..n).filter(|_| sample_path(t, &mag, start(), &mut rng).events.is_empty()).count();
        let p = (-2.0 * t).exp();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((zero as f64 / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn precollisional_along_the_flow() {
        let mag = mag4();
        let mut rng = stream(5, STREAM_BOLTZMANN, 0);
        for _ in 0..500 {
            let p = sample_path(3.0 * mag.period(), &mag, start(), &mut rng);
            let flow = build_flow(&p, &mag, start());
            for e in &p.events {
                assert!(e.n.dot(flow.state_before(e.t).v) <= 0.0);
            }
            let jumps = flow.jumps.len();
            assert_eq!(jumps, p.m() + p.sum_k(&mag));
        }
    }

    #[test]
    fn empty_path_is_periodic_orbit() {
        let mag = mag4();
        let path = BoltzmannPath { horizon: 2.0, circling: true, events: vec![] };
        let flow = build_flow(&path, &mag, start());
        assert_eq!(flow.arcs.len(), 1);
        assert!(flow.jumps.is_empty());
        let end = flow.eval(2.0).unwrap();
        assert!((end.x - advance_free(start(), 2.0, &mag).x).norm() < 1e-15);
        assert_eq!(flow.eval(0.0).unwrap(), start());
        assert!(flow.eval(2.5).is_err());
    }

    #[test]
    fn gap_of_two_and_a_half_periods_gives_two_rotations() {
        let mag = mag4();
        let period = mag.period();
        let t1 = 0.3;
        let v1 = advance_free(start(), t1, &mag).v;
        let n1 = rotate(0.4, -v1);
        let path = BoltzmannPath { horizon: t1 + 2.5 * period, circling: false, events: vec![PathEvent { t: t1, n: n1 }] };
        assert_eq!(path.k(&mag), vec![2]);
        let flow = build_flow(&path, &mag, start());
        let theta = scattering_angle(n1, v1);
        assert_eq!(flow.jumps.len(), 3);
        let p1 = flow.jumps[0].position;
        for j in &flow.jumps[1..] {
            assert_eq!(j.kind, JumpKind::SelfRecollision);
            assert!((j.position - p1).norm() < 1e-9);
            let before = flow.state_before(j.time);
            let after = flow.eval(j.time).unwrap();
            assert!((before.x - p1).norm() < 1e-9);
            assert!((after.x - p1).norm() < 1e-15);
            assert!((rotate(theta, before.v) - after.v).norm() < 1e-12);
        }
    }

    #[test]
    fn single_event_short_gap_is_two_arcs() {
        let mag = mag4();
        let t1 = 0.5;
        let before = advance_free(start(), t1, &mag);
        let n1 = rotate(-0.2, -before.v);
        let path = BoltzmannPath { horizon: 1.2, circling: false, events: vec![PathEvent { t: t1, n: n1 }] };
        let flow = build_flow(&path, &mag, start());
        assert_eq!(flow.arcs.len(), 2);
        // Oracle: a tiny disk placed behind the contact is first hit there.
        let c = before.x - 1e-6 * n1;
        let hit = first_hit(start(), &mag, c, 1e-6, 0.0).time().unwrap();
        assert!((hit - t1).abs() < 1e-5);
        let out = crate::geometry::scatter(n1, before.v);
        let s = 1.0;
        let want = advance_free(ParticleState { x: before.x, v: out }, s - t1, &mag);
        let got = flow.eval(s).unwrap();
        assert!((got.x - want.x).norm() < 1e-12 && (got.v - want.v).norm() < 1e-12);
    }

    #[test]
    fn non_precollisional_vector_means_no_scatter() {
        let mag = mag4();
        let t1 = 0.5;
        let v1 = advance_free(start(), t1, &mag).v;
        let path = BoltzmannPath { horizon: 1.0, circling: false, events: vec![PathEvent { t: t1, n: v1 }] };
        let flow = build_flow(&path, &mag, start());
        assert_eq!(flow.jumps[0].theta, 0.0);
        assert!((flow.final_state().x - advance_free(start(), 1.0, &mag).x).norm() < 1e-12);
    }

    #[test]
    fn rate_quadrature() {
        check_collision_rate().unwrap();
    }

    #[test]
    fn sampler_is_deterministic() {
        let mag = mag4();
        let a = sample_path(5.0, &mag, start(), &mut stream(9, STREAM_BOLTZMANN, 3));
        let b = sample_path(5.0, &mag, start(), &mut stream(9, STREAM_BOLTZMANN, 3));
        assert_eq!(a, b);
    }
}
