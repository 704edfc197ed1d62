//! Time-`t` densities of both processes as phase-space histograms, the
//! closed-form circling density, and a deterministic quadrature of the
//! one-collision term used to cross-check the sampler.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::boltzmann::build_flow;
use crate::ensemble::{par_fold, BoltzmannSetup, LorentzSetup};
use crate::error::{Error, Result};
use crate::geometry::{advance_free, rotate, scatter, MagneticConfig, ParticleState, Vec2};
use crate::quadrature::{gauss_legendre, on_interval};

/// Initial phase-space distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDatum {
    PointMass(ParticleState),
    /// Isotropic Gaussian in position (standard deviation `width`) times a
    /// uniform velocity angle.
    Gaussian { center: Vec2, width: f64 },
}

impl InitialDatum {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleState {
        match *self {
            InitialDatum::PointMass(s) => s,
            InitialDatum::Gaussian { center, width } => {
                let gx: f64 = StandardNormal.sample(rng);
                let gy: f64 = StandardNormal.sample(rng);
                let phi = PI * (2.0 * rng.random::<f64>() - 1.0);
                ParticleState::with_heading(center + width * Vec2::new(gx, gy), phi)
            }
        }
    }

    /// Density with respect to `dx dphi`; `None` for a point mass.
    pub fn density(&self, x: Vec2, _v: Vec2) -> Option<f64> {
        match *self {
            InitialDatum::PointMass(_) => None,
            InitialDatum::Gaussian { center, width } => {
                let s2 = width * width;
                Some((-(x - center).norm_sq() / (2.0 * s2)).exp() / (2.0 * PI * s2) / (2.0 * PI))
            }
        }
    }

    pub fn center(&self) -> Vec2 {
        match *self {
            InitialDatum::PointMass(s) => s.x,
            InitialDatum::Gaussian { center, .. } => center,
        }
    }
}

/// Box-and-bins layout of a phase-space histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub center: Vec2,
    pub half_width: f64,
    pub nx: usize,
    pub ny: usize,
    pub na: usize,
}

impl GridSpec {
    /// `64 x 64 x 32` bins on a box of half-width `4R`.
    pub fn standard(center: Vec2, mag: &MagneticConfig) -> Self {
        Self { center, half_width: 4.0 * mag.radius(), nx: 64, ny: 64, na: 32 }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.na
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        let w = 2.0 * self.half_width;
        (w / self.nx as f64) * (w / self.ny as f64) * (2.0 * PI / self.na as f64)
    }

    /// Flat index of the bin holding `s`, or `None` outside the box.
    pub fn index_of(&self, s: ParticleState) -> Option<usize> {
        let w = 2.0 * self.half_width;
        let lo = self.center - Vec2::new(self.half_width, self.half_width);
        let fx = (s.x.x - lo.x) / w;
        let fy = (s.x.y - lo.y) / w;
        if !(0.0..1.0).contains(&fx) || !(0.0..1.0).contains(&fy) {
            return None;
        }
        let ix = ((fx * self.nx as f64) as usize).min(self.nx - 1);
        let iy = ((fy * self.ny as f64) as usize).min(self.ny - 1);
        let fa = (s.v.angle() + PI) / (2.0 * PI);
        let ia = ((fa * self.na as f64) as usize).min(self.na - 1);
        Some((ix * self.ny + iy) * self.na + ia)
    }

    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        (idx / (self.ny * self.na), (idx / self.na) % self.ny, idx % self.na)
    }
}

/// Histogram of sample positions at a fixed time. Counts are integers so that
/// merging partial grids is exact and order-free. Samples that land outside
/// the box are kept in `escaped`, samples that are dropped (circling after a
/// period, when excluded) only in `samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub counts: Vec<u64>,
    pub escaped: u64,
    pub samples: u64,
}

impl DensityGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self { spec, counts: vec![0; spec.len()], escaped: 0, samples: 0 }
    }

    /// Register one sample, deposited at `s` unless `None`.
    pub fn record(&mut self, s: Option<ParticleState>) {
        self.samples += 1;
        if let Some(s) = s {
            match self.spec.index_of(s) {
                Some(i) => self.counts[i] += 1,
                None => self.escaped += 1,
            }
        }
    }

    pub fn merge(&mut self, other: &DensityGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.escaped += other.escaped;
        self.samples += other.samples;
        Ok(())
    }

    fn weight(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            1.0 / self.samples as f64
        }
    }

    pub fn cell_mass(&self, idx: usize) -> f64 {
        self.counts[idx] as f64 * self.weight()
    }

    pub fn escaped_mass(&self) -> f64 {
        self.escaped as f64 * self.weight()
    }

    pub fn in_box_mass(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 * self.weight()
    }

    /// Total deposited mass, inside and outside the box.
    pub fn mass(&self) -> f64 {
        (self.counts.iter().sum::<u64>() + self.escaped) as f64 * self.weight()
    }

    /// Monte Carlo standard error of the total mass.
    pub fn mass_stderr(&self) -> f64 {
        let p = self.mass();
        (p * (1.0 - p) * self.weight()).sqrt()
    }
}

/// What to do with samples that never collide.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CirclingPolicy {
    /// Deposit circling samples also when `t >= T`.
    pub include_after_period: bool,
    /// Evaluate circling samples at time `min(t, T)` instead of `t`.
    pub strict_phase: bool,
}

impl CirclingPolicy {
    fn place(&self, start: ParticleState, t: f64, mag: &MagneticConfig) -> Option<ParticleState> {
        if t >= mag.period() && !self.include_after_period {
            return None;
        }
        let s = if self.strict_phase { t.min(mag.period()) } else { t };
        Some(advance_free(start, s, mag))
    }
}

/// Closed-form density of particles that have not collided by `t`.
pub fn circling_density(
    t: f64,
    x: Vec2,
    v: Vec2,
    f0: &InitialDatum,
    mag: &MagneticConfig,
    strict_phase: bool,
) -> Option<f64> {
    let back = if strict_phase { t.min(mag.period()) } else { t };
    let pre = advance_free(ParticleState { x, v }, -back, mag);
    f0.density(pre.x, pre.v).map(|f| (-2.0 * t.min(mag.period())).exp() * f)
}

/// Histogram of the limit process at time `t` from `n` samples.
pub fn estimate_density(
    t: f64,
    setup: &BoltzmannSetup,
    n: usize,
    policy: CirclingPolicy,
    spec: GridSpec,
) -> DensityGrid {
    par_fold(
        n,
        || DensityGrid::new(spec),
        |grid, i| {
            let (start, path) = setup.sample(i, t);
            let s = if path.circling {
                policy.place(start, t, &setup.mag)
            } else {
                Some(build_flow(&path, &setup.mag, start).final_state())
            };
            grid.record(s);
        },
        |a, b| a.merge(&b).expect("same spec"),
    )
}

/// Histogram of the finite-`eps` process at time `t` from `n` samples.
pub fn estimate_lorentz_density(
    t: f64,
    setup: &LorentzSetup,
    n: usize,
    policy: CirclingPolicy,
    spec: GridSpec,
) -> DensityGrid {
    par_fold(
        n,
        || DensityGrid::new(spec),
        |grid, i| {
            let rec = setup.trajectory(i, t);
            let s = if rec.circling { policy.place(rec.initial, t, &setup.mag) } else { Some(rec.final_state()) };
            grid.record(s);
        },
        |a, b| a.merge(&b).expect("same spec"),
    )
}

/// Total mass of a grid.
pub fn mass(grid: &DensityGrid) -> f64 {
    grid.mass()
}

/// Mass of the one-collision term at `t < T`.
pub fn m1_mass(t: f64) -> f64 {
    2.0 * t * (-2.0 * t).exp()
}

/// Tensor Gauss-Legendre quadrature of the one-collision term of the limit
/// density at `(x, v)`, integrating over the collision time and the impact
/// vector along the backward flow.
pub fn term_m1_quadrature(
    t: f64,
    f0: &InitialDatum,
    x: Vec2,
    v: Vec2,
    mag: &MagneticConfig,
    nodes: usize,
) -> Result<f64> {
    if !(t > 0.0 && t < mag.period()) {
        return Err(Error::OutOfRange(format!("one-collision quadrature needs 0 < t < T, got {t}")));
    }
    let rule = gauss_legendre(nodes);
    let end = ParticleState { x, v };
    let mut acc = 0.0;
    for (t1, wt) in on_interval(&rule, 0.0, t) {
        let after = advance_free(end, t1 - t, mag);
        let mut inner = 0.0;
        for (psi, wp) in on_interval(&rule, -PI / 2.0, PI / 2.0) {
            // Impact vector at angle psi from the outgoing velocity; (n . v+) = cos psi.
            let n = rotate(psi, after.v);
            let before = ParticleState { x: after.x, v: scatter(n, after.v) };
            let s0 = advance_free(before, -t1, mag);
            let f = f0.density(s0.x, s0.v).ok_or_else(|| {
                Error::InvalidParameter("one-collision quadrature needs an initial density".into())
            })?;
            inner += wp * psi.cos() * f;
        }
        acc += wt * inner;
    }
    Ok((-2.0 * t).exp() * acc)
}

/// Phase-space window around a probe point, used for kernel estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x: Vec2,
    pub phi: f64,
    pub h: f64,
    pub h_phi: f64,
}

impl Window {
    pub fn contains(&self, s: ParticleState) -> bool {
        let d = s.x - self.x;
        let da = crate::geometry::wrap_angle(s.v.angle() - self.phi);
        d.x.abs() < self.h && d.y.abs() < self.h && da.abs() < self.h_phi
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.h * self.h * self.h_phi
    }

    /// Window average of the one-collision quadrature, `k^3` Gauss points.
    pub fn average_m1(&self, t: f64, f0: &InitialDatum, mag: &MagneticConfig, nodes: usize, k: usize) -> Result<f64> {
        let rule = gauss_legendre(k);
        let mut acc = 0.0;
        for (dx, wx) in on_interval(&rule, -self.h, self.h) {
            for (dy, wy) in on_interval(&rule, -self.h, self.h) {
                for (da, wa) in on_interval(&rule, -self.h_phi, self.h_phi) {
                    let p = self.x + Vec2::new(dx, dy);
                    let f = term_m1_quadrature(t, f0, p, Vec2::from_angle(self.phi + da), mag, nodes)?;
                    acc += wx * wy * wa * f;
                }
            }
        }
        Ok(acc / self.volume())
    }
}

/// Kernel estimate of the one-collision density in `window` from `n` samples
/// of the limit process, with its standard error.
pub fn m1_kernel_estimate(t: f64, setup: &BoltzmannSetup, n: usize, window: &Window) -> (f64, f64) {
    let hits = par_fold(
        n,
        || 0u64,
        |acc, i| {
            let (start, path) = setup.sample(i, t);
            if path.m() == 1 && window.contains(build_flow(&path, &setup.mag, start).final_state()) {
                *acc += 1;
            }
        },
        |a, b| *a += b,
    );
    let scale = 1.0 / (n as f64 * window.volume());
    (hits as f64 * scale, (hits as f64).sqrt() * scale)
}
