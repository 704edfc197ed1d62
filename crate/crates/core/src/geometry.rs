//! Exact planar kinematics of a unit-speed charge in a perpendicular magnetic
//! field, specular reflection on hard disks, and the closed-form first contact
//! between a Larmor circle and a disk.
//!
//! Orientation follows `ẋ = v`, `v̇ = -B v⊥` with `v⊥ = (v₂, -v₁)`, which turns
//! the velocity counterclockwise at angular rate `B`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contacts with `|v·n|` at or below this are treated as grazing.
pub const GRAZING_TOL: f64 = 1e-12;
/// Orbit/disk configurations this close to tangency are reported as misses.
pub const TANGENCY_TOL: f64 = 1e-12;
/// Accepted distance mismatch for a state claimed to sit on a disk boundary.
pub const CONTACT_TOL: f64 = 1e-10;
/// Exclusion window after a reflection, as a fraction of the period.
pub const EXCLUSION_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at polar angle `phi`.
    #[inline]
    pub fn from_angle(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-d cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counterclockwise quarter turn.
    #[inline]
    pub fn perp_ccw(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Phase point: position and unit velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub x: Vec2,
    pub v: Vec2,
}

impl ParticleState {
    pub fn new(x: Vec2, v: Vec2) -> Self {
        Self { x, v }
    }

    /// State at `x` heading along polar angle `phi`.
    pub fn with_heading(x: Vec2, phi: f64) -> Self {
        Self { x, v: Vec2::from_angle(phi) }
    }
}

/// Field strength and the derived cyclotron quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagneticConfig {
    b: f64,
    radius: f64,
    period: f64,
}

impl MagneticConfig {
    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidParameter(format!("field strength B must be positive, got {b}")));
        }
        Ok(Self { b, radius: 1.0 / b, period: TAU / b })
    }

    /// Magnitude of the field, equal to the angular velocity.
    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn omega(&self) -> f64 {
        self.b
    }

    /// Larmor radius `1/B`.
    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Cyclotron period `2π/B`.
    #[inline]
    pub fn period(&self) -> f64 {
        self.period
    }
}

/// Reduce an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

#[inline]
pub fn rotate(alpha: f64, v: Vec2) -> Vec2 {
    let (s, c) = alpha.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Specular reflection `v - 2(v·n)n`.
#[inline]
pub fn scatter(n: Vec2, v: Vec2) -> Vec2 {
    v - (2.0 * v.dot(n)) * n
}

/// Signed angle from `v` to `scatter(n, v)`, in `(-π, π]`.
pub fn scattering_angle(n: Vec2, v: Vec2) -> f64 {
    let w = scatter(n, v);
    let a = v.cross(w).atan2(v.dot(w));
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// `k`-fold scattering: velocity turned by `k` times the scattering angle.
pub fn iterated_scatter(k: u32, n: Vec2, state: ParticleState) -> ParticleState {
    if k == 0 {
        return state;
    }
    let theta = scattering_angle(n, state.v);
    ParticleState { x: state.x, v: rotate(k as f64 * theta, state.v) }
}

#[inline]
pub fn larmor_center(state: ParticleState, cfg: &MagneticConfig) -> Vec2 {
    state.x + cfg.radius() * state.v.perp_ccw()
}

/// Free cyclotron motion for time `dt` (negative `dt` runs backward).
pub fn advance_free(state: ParticleState, dt: f64, cfg: &MagneticConfig) -> ParticleState {
    let q = larmor_center(state, cfg);
    let phase = (cfg.omega() * dt).rem_euclid(TAU);
    let v = rotate(phase, state.v);
    ParticleState { x: q - cfg.radius() * v.perp_ccw(), v }
}

/// Outcome of the orbit/disk contact search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstHit {
    Hit(f64),
    Miss,
    /// Orbit and inflated disk are tangent to within [`TANGENCY_TOL`].
    Tangent,
}

impl FirstHit {
    pub fn time(self) -> Option<f64> {
        match self {
            FirstHit::Hit(t) => Some(t),
            _ => None,
        }
    }
}

/// Earliest arc time in `(dt_min, T]` at which the orbit of `state` touches
/// the disk of radius `eps` centered at `c`.
pub fn first_hit(state: ParticleState, cfg: &MagneticConfig, c: Vec2, eps: f64, dt_min: f64) -> FirstHit {
    let r = cfg.radius();
    let q = larmor_center(state, cfg);
    let d = c - q;
    let dist = d.norm();
    if (dist - (r + eps)).abs() < TANGENCY_TOL || (dist - (r - eps)).abs() < TANGENCY_TOL {
        return FirstHit::Tangent;
    }
    if dist > r + eps || dist < r - eps {
        return FirstHit::Miss;
    }
    // Half-opening of the chord seen from q, via Heron's product for stability
    // near tangency.
    let heron = (r + dist + eps) * (r + dist - eps) * (eps + r - dist) * (eps - r + dist);
    let half = heron.max(0.0).sqrt().atan2(r * r + dist * dist - eps * eps);
    let psi = d.angle();
    let phi0 = (state.x - q).angle();
    let mut best: Option<f64> = None;
    for phi in [psi - half, psi + half] {
        let dt = (phi - phi0).rem_euclid(TAU) / cfg.omega();
        if dt > dt_min && dt <= cfg.period() && best.is_none_or(|b| dt < b) {
            best = Some(dt);
        }
    }
    best.map_or(FirstHit::Miss, FirstHit::Hit)
}

/// Outcome of a boundary reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reflection {
    Reflected(ParticleState),
    /// `|v·n| ≤ GRAZING_TOL`; the state is returned unchanged.
    Grazing(ParticleState),
}

impl Reflection {
    pub fn state(self) -> ParticleState {
        match self {
            Reflection::Reflected(s) | Reflection::Grazing(s) => s,
        }
    }
}

/// Specular reflection on the disk of radius `eps` centered at `c`.
pub fn reflect(state: ParticleState, c: Vec2, eps: f64) -> Result<Reflection> {
    let rel = state.x - c;
    let dist = rel.norm();
    if (dist - eps).abs() > CONTACT_TOL {
        return Err(Error::NotOnBoundary { distance: dist, radius: eps });
    }
    let n = (1.0 / dist) * rel;
    if state.v.dot(n).abs() <= GRAZING_TOL {
        return Ok(Reflection::Grazing(state));
    }
    let v = scatter(n, state.v).normalized();
    Ok(Reflection::Reflected(ParticleState { x: state.x, v }))
}

/// Geometry of the return to the same disk after one reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfRecollisionGeometry {
    /// Distance from the post-collision orbit center to the disk center.
    pub delta: f64,
    /// Half the rotation of the contact point on the disk.
    pub beta: f64,
    /// Half the arc missing from a full period, seen from the orbit center.
    pub alpha: f64,
    /// Point-scatterer angle of the collision.
    pub theta: f64,
    /// Rotation between consecutive precollisional velocities.
    pub theta_eps: f64,
}

impl SelfRecollisionGeometry {
    /// Arc time between the reflection and the next contact with the same disk.
    pub fn return_time(&self, cfg: &MagneticConfig) -> f64 {
        (TAU - 2.0 * self.alpha) / cfg.omega()
    }
}

/// Geometry of the next contact for a particle at `c + eps·n` with
/// precollisional velocity `v`.
pub fn self_recollision_geometry(
    c: Vec2,
    n: Vec2,
    v: Vec2,
    eps: f64,
    cfg: &MagneticConfig,
) -> Result<SelfRecollisionGeometry> {
    let r = cfg.radius();
    let contact = c + eps * n;
    let outgoing = scatter(n, v);
    let q = contact + r * outgoing.perp_ccw();
    let mut delta = q.dist(c);
    if delta < r - eps - TANGENCY_TOL || delta > r + eps + TANGENCY_TOL {
        return Err(Error::OutOfRange(format!(
            "orbit center distance {delta} outside [{}, {}]",
            r - eps,
            r + eps
        )));
    }
    delta = delta.clamp(r - eps, r + eps);
    let cos_beta = ((delta * delta - r * r + eps * eps) / (2.0 * delta * eps)).clamp(-1.0, 1.0);
    let beta = cos_beta.acos();
    let alpha = ((eps / r) * beta.sin()).clamp(-1.0, 1.0).asin();
    let theta = scattering_angle(n, v);
    Ok(SelfRecollisionGeometry { delta, beta, alpha, theta, theta_eps: wrap_angle(theta - 2.0 * alpha) })
}

/// Contact point and precollisional velocity at the next return to the disk.
pub fn self_recollision_map(c: Vec2, n: Vec2, v: Vec2, eps: f64, cfg: &MagneticConfig) -> Result<(Vec2, Vec2)> {
    let g = self_recollision_geometry(c, n, v, eps, cfg)?;
    Ok((c + eps * rotate(2.0 * g.beta, n), rotate(g.theta_eps, v)))
}

/// A stretch of free motion: `state` at `start`, flown for `duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub state: ParticleState,
    pub duration: f64,
}

impl Arc {
    #[inline]
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    #[inline]
    pub fn at(&self, t: f64, cfg: &MagneticConfig) -> ParticleState {
        advance_free(self.state, t - self.start, cfg)
    }

    pub fn end_state(&self, cfg: &MagneticConfig) -> ParticleState {
        advance_free(self.state, self.duration, cfg)
    }

    /// Distance from `p` to the traced arc together with the arc time of the
    /// closest point.
    pub fn closest_approach(&self, p: Vec2, cfg: &MagneticConfig) -> (f64, f64) {
        let q = larmor_center(self.state, cfg);
        let sweep = (cfg.omega() * self.duration).min(TAU);
        let phi0 = (self.state.x - q).angle();
        let rel = p - q;
        let end = self.end_state(cfg).x;
        let d_start = self.state.x.dist(p);
        let d_end = end.dist(p);
        let mut best = if d_start <= d_end { (d_start, 0.0) } else { (d_end, self.duration) };
        if rel.norm_sq() > 0.0 {
            let off = (rel.angle() - phi0).rem_euclid(TAU);
            if off <= sweep {
                let d = (rel.norm() - cfg.radius()).abs();
                if d < best.0 {
                    best = (d, off / cfg.omega());
                }
            }
        }
        best
    }

    /// `n` equally spaced positions including both endpoints.
    pub fn polyline(&self, n: usize, cfg: &MagneticConfig) -> Vec<Vec2> {
        let n = n.max(2);
        (0..n)
            .map(|i| advance_free(self.state, self.duration * i as f64 / (n - 1) as f64, cfg).x)
            .collect()
    }
}

/// `∫ (n·v)₊ dn` over the unit circle by Gauss-Legendre quadrature in the angle
/// of `n` relative to `v`. Equals 2 for unit `v`.
pub fn total_cross_section(nodes: usize) -> f64 {
    let (x, w) = crate::quadrature::gauss_legendre(nodes);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let psi = FRAC_PI_2 * xi;
            wi * FRAC_PI_2 * psi.cos().max(0.0)
        })
        .sum()
}
