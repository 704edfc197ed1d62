//! Coupling between the two processes: finite-`eps` disks are placed exactly
//! where a sampled limit path says the collisions happen, and the two
//! trajectories are compared.

use rand::Rng;

use crate::boltzmann::{build_flow, periods_in, BoltzmannPath, JumpKind, LimitTrajectory};
use crate::ensemble::par_map;
use crate::error::{Error, Result};
use crate::field::{PlacedObstacles, Scatterer};
use crate::geometry::{Arc, MagneticConfig, ParticleState, Vec2};
use crate::lorentz::{run_in, EventKind, Stepper, TrajectoryRecord};
use crate::rng::{stream, STREAM_COUPLING};

/// Relative slack when deciding whether a past arc enters a new disk.
const OVERLAP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub path: BoltzmannPath,
    pub eps: f64,
    pub start: ParticleState,
    pub placed: Vec<Vec2>,
    pub lorentz: TrajectoryRecord,
    pub limit: LimitTrajectory,
}

/// Build the finite-`eps` trajectory whose `i`-th new disk is placed at
/// `xi_eps(t_i) - eps n_i`, so impacts happen exactly at the path's times and
/// vectors. Fails with [`Error::Inadmissible`] when a disk would overlap the
/// trajectory already travelled.
pub fn couple(path: &BoltzmannPath, eps: f64, mag: &MagneticConfig, start: ParticleState) -> Result<CoupledPair> {
    if path.circling || path.events.is_empty() {
        return Err(Error::CirclingPath);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let mut stepper = Stepper::new(PlacedObstacles::new(eps), *mag, start);
    let mut placed = Vec::with_capacity(path.m());
    for (i, e) in path.events.iter().enumerate() {
        stepper.advance_to(e.t);
        let before = stepper.state();
        if e.n.dot(before.v) >= 0.0 {
            return Err(Error::Inadmissible { index: i });
        }
        let c = before.x - eps * e.n;
        if overlaps_past(stepper.arcs(), c, eps, mag) {
            return Err(Error::Inadmissible { index: i });
        }
        let id = stepper.source_mut().push(c);
        stepper.collide_with(Scatterer { c, id });
        placed.push(c);
    }
    stepper.advance_to(path.horizon);
    let (lorentz, _) = stepper.finish(start, path.horizon);
    let limit = build_flow(path, mag, start);
    Ok(CoupledPair { path: path.clone(), eps, start, placed, lorentz, limit })
}

fn overlaps_past(arcs: &[Arc], c: Vec2, eps: f64, mag: &MagneticConfig) -> bool {
    arcs.iter().any(|a| a.closest_approach(c, mag).0 < eps * (1.0 - OVERLAP_SLACK))
}

/// Whether the path can be coupled at `eps`.
pub fn is_admissible(path: &BoltzmannPath, eps: f64, mag: &MagneticConfig, start: ParticleState) -> bool {
    couple(path, eps, mag, start).is_ok()
}

/// Largest difference between the coupled trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    /// Sup of `|xi_eps(s) - xi(s)|` over the sampled times.
    pub position: f64,
    /// Max over impacts of the difference of precollisional velocities.
    pub velocity: f64,
}

/// Deviation on a grid of step `1e-3 T` plus every event time of both flows.
pub fn deviation(pair: &CoupledPair) -> Deviation {
    let mag = &pair.limit.mag;
    let horizon = pair.path.horizon;
    let step = 1e-3 * mag.period();
    let steps = (horizon / step).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * step).collect();
    times.push(horizon);
    times.extend(pair.lorentz.events.iter().map(|e| e.time));
    times.extend(pair.limit.jumps.iter().map(|j| j.time));
    let position = times
        .iter()
        .filter(|&&s| s <= horizon)
        .map(|&s| {
            let a = pair.lorentz.state_at(s).x;
            let b = pair.limit.eval(s).expect("time in range").x;
            let a_left = pair.lorentz.state_before(s).x;
            let b_left = pair.limit.state_before(s).x;
            (a - b).norm().max((a_left - b_left).norm())
        })
        .fold(0.0, f64::max);
    let velocity = pair
        .path
        .events
        .iter()
        .map(|e| (pair.lorentz.state_before(e.t).v - pair.limit.state_before(e.t).v).norm())
        .fold(0.0, f64::max);
    Deviation { position, velocity }
}

/// Max discrepancy between the path's impacts and those found by re-running
/// the event loop from scratch among the placed disks.
pub fn placement_error(pair: &CoupledPair) -> f64 {
    let mut src = PlacedObstacles::new(pair.eps);
    for &c in &pair.placed {
        src.push(c);
    }
    let (rec, _) = run_in(src, &pair.limit.mag, pair.start, pair.path.horizon);
    let got = rec.impacts();
    if got.len() != pair.path.m() {
        return f64::INFINITY;
    }
    got.iter()
        .zip(&pair.path.events)
        .map(|(&(t, n), e)| (t - e.t).abs().max((n.x - e.n.x).abs()).max((n.y - e.n.y).abs()))
        .fold(0.0, f64::max)
}

/// No other-recollisions and, in every gap, as many self-recollisions as
/// whole periods: the regime where the two flows differ only by O(eps).
pub fn is_regular(pair: &CoupledPair) -> bool {
    let mag = &pair.limit.mag;
    pair.lorentz.count(EventKind::OtherRecollision) == 0
        && pair.path.k(mag).iter().enumerate().all(|(i, &k)| pair.lorentz.self_recollision_count(i) == Some(k))
}

/// Near-returns of the limit flow to its collision points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathologyFlags {
    /// Comes back near `xi(t_j)` after the next impact.
    pub recollision: bool,
    /// A collision point lies near the path travelled before it.
    pub interference: bool,
}

impl PathologyFlags {
    pub fn any(&self) -> bool {
        self.recollision || self.interference
    }
}

/// Times and values of the local minima of `|xi(s) - p|` below `tol`,
/// excluding the endpoints `s = 0` (unless it is a minimum) and the horizon.
fn local_minima(flow: &LimitTrajectory, p: Vec2, tol: f64) -> Vec<(f64, f64)> {
    let mag = &flow.mag;
    let omega = mag.omega();
    let mut out = Vec::new();
    for (k, a) in flow.arcs.iter().enumerate() {
        let q = crate::geometry::larmor_center(a.state, mag);
        let rel = p - q;
        // Interior minimum on the circle, repeated each period on long arcs.
        if rel.norm_sq() > 0.0 {
            let phi0 = (a.state.x - q).angle();
            let mut s = (rel.angle() - phi0).rem_euclid(std::f64::consts::TAU) / omega;
            let d = (rel.norm() - mag.radius()).abs();
            while s < a.duration {
                if s > 0.0 && d < tol {
                    out.push((a.start + s, d));
                }
                s += mag.period();
            }
        }
        // Minimum at the start of this arc: approaching before, leaving after.
        let x = a.state.x;
        let leaving = (x - p).dot(a.state.v) > 0.0;
        let approaching = match k {
            0 => true,
            _ => (x - p).dot(flow.arcs[k - 1].end_state(mag).v) < 0.0,
        };
        let d = x.dist(p);
        if leaving && approaching && d < tol {
            out.push((a.start, d));
        }
    }
    out
}

/// Flag near-returns within `tol` that the limit dynamics does not plan for:
/// the crossings of `xi(t_j)` at `t_j` and `t_j + kT` (`k <= k_j`) are
/// expected, any other local approach below `tol` is a pathology.
pub fn detect_pathologies(path: &BoltzmannPath, flow: &LimitTrajectory, tol: f64) -> PathologyFlags {
    let mut flags = PathologyFlags::default();
    let planned_tol = 1e-9;
    let impacts: Vec<f64> = path.events.iter().map(|e| e.t).collect();
    for (j, jump) in flow.jumps.iter().filter(|j| j.kind == JumpKind::Impact).enumerate() {
        let p = jump.position;
        let tj = impacts[j];
        let next = impacts.get(j + 1).copied().unwrap_or(path.horizon);
        // End of the previous gap's last full loop.
        let prev_loop = match j {
            0 => 0.0,
            _ => impacts[j - 1] + (periods_in(tj - impacts[j - 1], flow.mag.period()) as f64) * flow.mag.period(),
        };
        let planned: Vec<f64> = flow
            .jumps
            .iter()
            .filter(|x| x.impact == j)
            .map(|x| x.time)
            .collect();
        for (s, _) in local_minima(flow, p, tol) {
            if planned.iter().any(|&t| (s - t).abs() < planned_tol) {
                continue;
            }
            if s >= next {
                flags.recollision = true;
            } else if s <= prev_loop {
                flags.interference = true;
            }
        }
    }
    flags
}

/// Area estimate of one daisy (or the stem before the first impact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapArea {
    /// 0 for the stem, `i` for the daisy after impact `i`.
    pub index: usize,
    pub gap: f64,
    pub area: f64,
    pub sigma: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Region of one gap: points closer than `eps` to `arcs` and outside the
/// disks in `excluded`.
#[derive(Debug, Clone)]
pub struct TubeRegion {
    pub arcs: Vec<Arc>,
    pub excluded: Vec<Vec2>,
    pub eps: f64,
    pub mag: MagneticConfig,
}

impl TubeRegion {
    pub fn contains(&self, p: Vec2) -> bool {
        self.excluded.iter().all(|c| p.dist(*c) > self.eps)
            && self.arcs.iter().any(|a| a.closest_approach(p, &self.mag).0 < self.eps)
    }

    /// Axis-aligned box containing the region.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for a in &self.arcs {
            // Sample densely enough that chord sagitta stays far below eps.
            let pieces = ((a.duration / self.eps).ceil() as usize).max(1) + 1;
            for x in a.polyline(pieces + 1, &self.mag) {
                lo = Vec2::new(lo.x.min(x.x), lo.y.min(x.y));
                hi = Vec2::new(hi.x.max(x.x), hi.y.max(x.y));
            }
        }
        let m = 2.0 * self.eps;
        (lo - Vec2::new(m, m), hi + Vec2::new(m, m))
    }

    /// Rejection-sampling estimate of the area and its standard error.
    pub fn mc_area<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (f64, f64) {
        if self.arcs.iter().all(|a| a.duration <= 0.0) || n == 0 {
            return (0.0, 0.0);
        }
        let (lo, hi) = self.bounding_box();
        let span = hi - lo;
        let box_area = span.x * span.y;
        let hits = (0..n)
            .filter(|_| {
                let p = lo + Vec2::new(span.x * rng.random::<f64>(), span.y * rng.random::<f64>());
                self.contains(p)
            })
            .count();
        let p = hits as f64 / n as f64;
        (box_area * p, box_area * (p * (1.0 - p) / n as f64).sqrt())
    }
}

/// Regions of the stem and of every daisy of a classified record, each
/// traced with the flow that sees only the obstacle just hit.
pub fn gap_regions(record: &TrajectoryRecord, eps: f64) -> Vec<(usize, f64, TubeRegion)> {
    let mag = record.mag;
    let impacts: Vec<_> = record.impact_events().copied().collect();
    let mut out = Vec::new();
    let t1 = impacts.first().map_or(record.horizon, |e| e.time);
    out.push((
        0,
        t1,
        TubeRegion {
            arcs: vec![Arc { start: 0.0, state: record.initial, duration: t1 }],
            excluded: impacts.first().map(|e| e.center).into_iter().collect(),
            eps,
            mag,
        },
    ));
    for (i, e) in impacts.iter().enumerate() {
        let end = impacts.get(i + 1).map_or(record.horizon, |n| n.time);
        let gap = end - e.time;
        let mut src = PlacedObstacles::new(eps);
        let id = src.push(e.center);
        let mut stepper = Stepper::new(src, mag, record.state_before(e.time));
        stepper.collide_with(Scatterer { c: e.center, id });
        stepper.advance_to(gap);
        let arcs = stepper.arcs().to_vec();
        let mut excluded = vec![e.center];
        excluded.extend(impacts.get(i + 1).map(|n| n.center));
        out.push((i + 1, gap, TubeRegion { arcs, excluded, eps, mag }));
    }
    out
}

/// Monte Carlo area of the stem and of every daisy of `record`, each checked
/// against `2 eps gap`.
pub fn tube_and_daisy_area<R: Rng + ?Sized>(record: &TrajectoryRecord, eps: f64, n_mc: usize, rng: &mut R) -> Vec<GapArea> {
    gap_regions(record, eps)
        .into_iter()
        .map(|(index, gap, region)| {
            let (area, sigma) = if gap > 0.0 { region.mc_area(n_mc, rng) } else { (0.0, 0.0) };
            let bound = 2.0 * eps * gap;
            let rel = if area > 0.0 { sigma / area } else { 0.0 };
            GapArea { index, gap, area, sigma, bound, within_bound: area <= bound * (1.0 + 3.0 * rel) }
        })
        .collect()
}

/// One row of the coupling study.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRow {
    pub path_id: usize,
    pub eps: f64,
    pub m: usize,
    pub sum_k: usize,
    pub deviation: Option<Deviation>,
    pub regular: bool,
    pub flags: PathologyFlags,
}

impl CouplingRow {
    pub fn admissible(&self) -> bool {
        self.deviation.is_some()
    }
}

/// Settings for a corpus of coupled paths.
#[derive(Debug, Clone)]
pub struct CouplingStudy {
    pub mag: MagneticConfig,
    pub start: ParticleState,
    pub horizon: f64,
    pub eps: Vec<f64>,
    pub seed: u64,
    /// Number of admissible paths to collect.
    pub paths: usize,
}

impl CouplingStudy {
    pub fn path(&self, i: usize) -> BoltzmannPath {
        let mut rng = stream(self.seed, STREAM_COUPLING, i as u64);
        crate::boltzmann::sample_path(self.horizon, &self.mag, self.start, &mut rng)
    }

    fn rows_for(&self, i: usize, path: &BoltzmannPath) -> Vec<CouplingRow> {
        let flow = build_flow(path, &self.mag, self.start);
        self.eps
            .iter()
            .map(|&eps| {
                let pair = couple(path, eps, &self.mag, self.start).ok();
                CouplingRow {
                    path_id: i,
                    eps,
                    m: path.m(),
                    sum_k: path.sum_k(&self.mag),
                    deviation: pair.as_ref().map(deviation),
                    regular: pair.as_ref().is_some_and(is_regular),
                    flags: detect_pathologies(path, &flow, eps),
                }
            })
            .collect()
    }

    /// Scan non-circling paths in index order until `paths` of them are
    /// admissible at the largest `eps`. Inadmissible candidates are kept in
    /// the output with no deviation.
    pub fn run(&self) -> Vec<CouplingRow> {
        let eps_max = self.eps.iter().copied().fold(0.0, f64::max);
        let mut rows = Vec::new();
        let mut found = 0;
        let mut next = 0;
        let batch = 64;
        while found < self.paths {
            let chunk = par_map(batch, |b| {
                let i = next + b;
                let path = self.path(i);
                if path.circling {
                    return None;
                }
                let ok = is_admissible(&path, eps_max, &self.mag, self.start);
                Some((ok, self.rows_for(i, &path)))
            });
            for (ok, r) in chunk.into_iter().flatten() {
                if found == self.paths {
                    break;
                }
                found += ok as usize;
                rows.extend(r);
            }
            next += batch;
        }
        rows
    }
}

/// Per-`eps` fit of `C` in `dev <= C floor(t/T) eps` over regular admissible rows.
pub fn fit_constant(rows: &[CouplingRow], eps: f64, horizon: f64, mag: &MagneticConfig) -> Option<f64> {
    let periods = (horizon / mag.period()).floor().max(1.0);
    rows.iter()
        .filter(|r| r.eps == eps && r.regular)
        .filter_map(|r| r.deviation)
        .map(|d| d.position / (periods * eps))
        .reduce(f64::max)
}
