//! Ensemble statistics and the convergence study.

use std::time::Instant;

use crate::boltzmann::build_flow;
use crate::density::{DensityGrid, GridSpec, InitialDatum};
use crate::ensemble::{par_fold, BoltzmannSetup, LorentzSetup};
use crate::error::{Error, Result};
use crate::geometry::{MagneticConfig, ParticleState};
use crate::lorentz::{EventKind, TrajectoryRecord};

/// A proportion with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: u64,
    pub n: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// 95% Wilson interval.
pub fn wilson(successes: u64, n: u64) -> Result<Proportion> {
    wilson_z(successes, n, 1.959_963_984_540_054)
}

pub fn wilson_z(successes: u64, n: u64, z: f64) -> Result<Proportion> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let mid = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Ok(Proportion { successes, n, estimate: p, lo: (mid - half).max(0.0), hi: (mid + half).min(1.0) })
}

/// Fraction of circling records.
pub fn circling_fraction<'a>(records: impl IntoIterator<Item = &'a TrajectoryRecord>) -> Result<Proportion> {
    let (mut k, mut n) = (0, 0);
    for r in records {
        n += 1;
        k += r.circling as u64;
    }
    wilson(k, n)
}

/// Sup distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    Ok(d)
}

/// Dvoretzky-Kiefer-Wolfowitz bound: the KS distance of `n` samples from
/// their own law exceeds this with probability at most `alpha`.
pub fn dkw_bound(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// First-impact CDF conditioned on a collision within the first period.
pub fn first_impact_cdf(s: f64, mag: &MagneticConfig) -> f64 {
    let t = mag.period();
    if s <= 0.0 {
        0.0
    } else if s >= t {
        1.0
    } else {
        (-(-2.0 * s).exp_m1()) / (-(-2.0 * t).exp_m1())
    }
}

/// Sum of absolute mass differences over cells, plus the difference of the
/// mass that left the box.
pub fn l1_density_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    if a.spec != b.spec {
        return Err(Error::GridMismatch);
    }
    let cells: f64 = (0..a.spec.len()).map(|i| (a.cell_mass(i) - b.cell_mass(i)).abs()).sum();
    Ok(cells + (a.escaped_mass() - b.escaped_mass()).abs())
}

/// Standard deviation of the L1 distance due to sampling noise. Each bin
/// difference has variance about `m (1/N_a + 1/N_b)` and the absolute values
/// fluctuate independently, so the spread of the sum is bounded by the square
/// root of the total.
pub fn l1_sigma(a: &DensityGrid, b: &DensityGrid) -> f64 {
    let na = a.samples.max(1) as f64;
    let nb = b.samples.max(1) as f64;
    (a.mass() / na + b.mass() / nb).sqrt()
}

pub fn poisson_pmf(lambda: f64, k: usize) -> f64 {
    let mut p = (-lambda).exp();
    for j in 1..=k {
        p *= lambda / j as f64;
    }
    p
}

/// Total variation between the empirical law of `counts` and Poisson(`lambda`),
/// truncated at the largest observed count plus five.
pub fn count_tv(counts: &[usize], lambda: f64) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::EmptySample);
    }
    let top = counts.iter().copied().max().unwrap_or(0) + 5;
    let mut hist = vec![0usize; top + 1];
    for &c in counts {
        hist[c] += 1;
    }
    let n = counts.len() as f64;
    Ok(0.5 * hist.iter().enumerate().map(|(k, &h)| (h as f64 / n - poisson_pmf(lambda, k)).abs()).sum::<f64>())
}

/// Impact counts before `t` (which must be below the period) against Poisson(2t).
pub fn collision_count_tv<'a>(records: impl IntoIterator<Item = &'a TrajectoryRecord>, t: f64) -> Result<f64> {
    let counts: Vec<usize> = records.into_iter().map(|r| r.impacts_before(t)).collect();
    count_tv(&counts, 2.0 * t)
}

/// Settings of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub mag: MagneticConfig,
    pub start: ParticleState,
    /// Density comparison time.
    pub t: f64,
    /// Time for the collision-count law, below one period.
    pub count_time: f64,
    pub n: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub cell_side: Option<f64>,
}

impl ConvergenceConfig {
    pub fn standard(mag: MagneticConfig, start: ParticleState, n: usize, seed: u64) -> Self {
        Self {
            t: 2.0 * mag.period(),
            count_time: 0.8 * mag.period(),
            grid: GridSpec::standard(start.x, &mag),
            cell_side: None,
            mag,
            start,
            n,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub n: usize,
    pub circling: Proportion,
    pub ks_first_impact: f64,
    pub ks_bound: f64,
    pub tv_collision_count: f64,
    /// L1 distance with circling samples dropped after one period.
    pub l1_density: f64,
    /// L1 distance with circling samples kept.
    pub l1_density_with_circling: f64,
    pub l1_sigma: f64,
    pub other_recollision: Proportion,
    pub runtime_s: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    /// One entry per `eps`; a failure keeps its message.
    pub rows: Vec<Result<ConvergenceRow, String>>,
    pub boltzmann_mass: f64,
}

struct LorentzTally {
    circling: u64,
    other: u64,
    first_impacts: Vec<f64>,
    counts: Vec<usize>,
    cut: DensityGrid,
    full: DensityGrid,
}

impl LorentzTally {
    fn new(spec: GridSpec) -> Self {
        Self {
            circling: 0,
            other: 0,
            first_impacts: Vec::new(),
            counts: Vec::new(),
            cut: DensityGrid::new(spec),
            full: DensityGrid::new(spec),
        }
    }

    fn merge(&mut self, o: LorentzTally) {
        self.circling += o.circling;
        self.other += o.other;
        self.first_impacts.extend(o.first_impacts);
        self.counts.extend(o.counts);
        self.cut.merge(&o.cut).expect("same spec");
        self.full.merge(&o.full).expect("same spec");
    }
}

fn boltzmann_grids(cfg: &ConvergenceConfig) -> (DensityGrid, DensityGrid) {
    let setup = BoltzmannSetup { mag: cfg.mag, f0: InitialDatum::PointMass(cfg.start), seed: cfg.seed };
    let period = cfg.mag.period();
    par_fold(
        cfg.n,
        || (DensityGrid::new(cfg.grid), DensityGrid::new(cfg.grid)),
        |(a, b), i| {
            let (start, path) = setup.sample(i, cfg.t);
            if path.circling {
                let s = crate::geometry::advance_free(start, cfg.t, &cfg.mag);
                a.record((cfg.t < period).then_some(s));
                b.record(Some(s));
            } else {
                let s = build_flow(&path, &cfg.mag, start).final_state();
                a.record(Some(s));
                b.record(Some(s));
            }
        },
        |(a, b), (c, d)| {
            a.merge(&c).expect("same spec");
            b.merge(&d).expect("same spec");
        },
    )
}

fn lorentz_row(cfg: &ConvergenceConfig, eps: f64, bz: &(DensityGrid, DensityGrid)) -> Result<ConvergenceRow> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let clock = Instant::now();
    let setup = LorentzSetup { mag: cfg.mag, eps, cell_side: cfg.cell_side, f0: InitialDatum::PointMass(cfg.start), seed: cfg.seed };
    let period = cfg.mag.period();
    let tally = par_fold(
        cfg.n,
        || LorentzTally::new(cfg.grid),
        |acc, i| {
            let rec = setup.trajectory(i, cfg.t);
            acc.counts.push(rec.impacts_before(cfg.count_time));
            if rec.count(EventKind::OtherRecollision) > 0 {
                acc.other += 1;
            }
            if rec.circling {
                acc.circling += 1;
                let s = crate::geometry::advance_free(rec.initial, cfg.t, &cfg.mag);
                acc.cut.record((cfg.t < period).then_some(s));
                acc.full.record(Some(s));
            } else {
                if let Some(t1) = rec.first_impact_time() {
                    acc.first_impacts.push(t1);
                }
                let s = rec.final_state();
                acc.cut.record(Some(s));
                acc.full.record(Some(s));
            }
        },
        LorentzTally::merge,
    );
    let n = cfg.n as u64;
    let ks = ks_distance(&tally.first_impacts, |s| first_impact_cdf(s, &cfg.mag))?;
    Ok(ConvergenceRow {
        eps,
        n: cfg.n,
        circling: wilson(tally.circling, n)?,
        ks_first_impact: ks,
        ks_bound: dkw_bound(tally.first_impacts.len().max(1), 0.01),
        tv_collision_count: count_tv(&tally.counts, 2.0 * cfg.count_time)?,
        l1_density: l1_density_distance(&tally.cut, &bz.0)?,
        l1_density_with_circling: l1_density_distance(&tally.full, &bz.1)?,
        l1_sigma: l1_sigma(&tally.cut, &bz.0),
        other_recollision: wilson(tally.other, n)?,
        runtime_s: clock.elapsed().as_secs_f64(),
    })
}

/// Run both ensembles for every `eps` and compare them. A failing `eps` is
/// reported in its row without stopping the others.
pub fn convergence_table(eps_list: &[f64], cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("empty eps list".into()));
    }
    if cfg.n == 0 {
        return Err(Error::EmptySample);
    }
    let bz = boltzmann_grids(cfg);
    let rows = eps_list.iter().map(|&eps| lorentz_row(cfg, eps, &bz).map_err(|e| e.to_string())).collect();
    Ok(ConvergenceReport { eps: eps_list.to_vec(), rows, boltzmann_mass: bz.0.mass() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::rng::{stream, STREAM_DENSITY};
    use rand::Rng;

    #[test]
    fn wilson_contains_truth_and_scales() {
        let p = wilson(432, 10_000).unwrap();
        assert!(p.contains(0.0432));
        let q = wilson(4 * 432, 40_000).unwrap();
        assert!((p.width() / q.width() - 2.0).abs() < 0.4);
        let all = wilson(50, 50).unwrap();
        assert_eq!(all.estimate, 1.0);
        assert!(wilson(0, 0).is_err());
    }

    #[test]
    fn ks_self_and_degenerate() {
        let mut rng = stream(1, STREAM_DENSITY, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_distance(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d <= dkw_bound(xs.len(), 0.01));
        let c = vec![0.5; 100];
        let exp_cdf = |x: f64| 1.0 - (-50.0 * x).exp();
        assert!(ks_distance(&c, exp_cdf).unwrap() > 0.99);
        assert!(ks_distance(&[], exp_cdf).is_err());
    }

    #[test]
    fn two_sample_ks() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.1], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn poisson_tv() {
        let pmf: f64 = (0..60).map(|k| poisson_pmf(3.0, k)).sum();
        assert!((pmf - 1.0).abs() < 1e-12);
        assert!(count_tv(&vec![0; 100], 1e-9).unwrap() < 1e-8);
    }

    #[test]
    fn l1_examples() {
        let mag = MagneticConfig::new(4.0).unwrap();
        let spec = GridSpec::standard(Vec2::ZERO, &mag);
        let mut a = DensityGrid::new(spec);
        let mut b = DensityGrid::new(spec);
        a.record(Some(ParticleState::with_heading(Vec2::new(0.1, 0.1), 0.0)));
        b.record(Some(ParticleState::with_heading(Vec2::new(-0.5, 0.1), 2.0)));
        assert_eq!(l1_density_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_density_distance(&a, &b).unwrap(), 2.0);
        let c = DensityGrid::new(GridSpec { nx: 8, ..spec });
        assert!(l1_density_distance(&a, &c).is_err());
    }

    #[test]
    fn tiny_convergence_report() {
        let mag = MagneticConfig::new(4.0).unwrap();
        let start = ParticleState::new(Vec2::ZERO, Vec2::new(1.0, 0.0));
        let cfg = ConvergenceConfig::standard(mag, start, 100, 3);
        let rep = convergence_table(&[0.04, 0.04, -1.0], &cfg).unwrap();
        assert_eq!(rep.rows.len(), 3);
        let a = rep.rows[0].as_ref().unwrap();
        let b = rep.rows[1].as_ref().unwrap();
        assert_eq!((a.circling, a.ks_first_impact, a.l1_density), (b.circling, b.ks_first_impact, b.l1_density));
        assert!(a.circling.width() > 0.0);
        assert!(rep.rows[2].is_err());
        assert!(convergence_table(&[], &cfg).is_err());
    }
}
