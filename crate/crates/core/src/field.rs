//! Poisson field of hard disks on the unbounded plane, generated lazily cell by
//! cell from a counter-keyed generator.
//!
//! The content of a lattice cell depends only on `(seed, cell key)`, so any
//! region can be revisited in any order and by any number of workers and will
//! always hold the same disks. Disks may overlap each other; the only
//! conditioning is that no center lies within `eps` of the excluded start point.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{MagneticConfig, Vec2};
use crate::rng::{derive_seed, StreamRng, STREAM_FIELD};
use rand::SeedableRng;

/// Identifier bit reserved for explicitly placed disks.
pub const INJECTED_BIT: u64 = 1 << 63;
const CELL_BITS: u32 = 24;
const CELL_OFFSET: i64 = 1 << (CELL_BITS - 1);
const INDEX_BITS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub c: Vec2,
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    /// Disk radius.
    pub eps: f64,
    pub cell_side: f64,
    pub seed: u64,
    pub excluded_point: Vec2,
    /// When false only the injected disks exist.
    pub poisson_background: bool,
    pub injected: Vec<Vec2>,
}

impl FieldConfig {
    pub fn new(eps: f64, cell_side: f64, seed: u64, excluded_point: Vec2) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if !(cell_side.is_finite() && cell_side > 0.0) {
            return Err(Error::InvalidParameter(format!("cell side must be positive, got {cell_side}")));
        }
        Ok(Self { eps, cell_side, seed, excluded_point, poisson_background: true, injected: Vec::new() })
    }

    /// Field with the default cell side `max(4 eps, R/2)`.
    pub fn with_default_cells(eps: f64, mag: &MagneticConfig, seed: u64, excluded_point: Vec2) -> Result<Self> {
        Self::new(eps, default_cell_side(eps, mag), seed, excluded_point)
    }

    /// A field containing only explicitly placed disks.
    pub fn empty(eps: f64, mag: &MagneticConfig) -> Result<Self> {
        let mut f = Self::with_default_cells(eps, mag, 0, Vec2::ZERO)?;
        f.poisson_background = false;
        Ok(f)
    }

    pub fn inject(mut self, centers: impl IntoIterator<Item = Vec2>) -> Self {
        self.injected.extend(centers);
        self
    }

    /// Number density `1/eps` (unit intensity before Grad scaling).
    #[inline]
    pub fn intensity(&self) -> f64 {
        1.0 / self.eps
    }

    fn cell_key(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.cell_side).floor() as i64, (p.y / self.cell_side).floor() as i64)
    }
}

pub fn default_cell_side(eps: f64, mag: &MagneticConfig) -> f64 {
    (4.0 * eps).max(0.5 * mag.radius())
}

fn scatterer_id(key: (i64, i64), index: usize) -> u64 {
    let mask = (1u64 << CELL_BITS) - 1;
    let ix = ((key.0 + CELL_OFFSET) as u64) & mask;
    let iy = ((key.1 + CELL_OFFSET) as u64) & mask;
    (ix << (CELL_BITS + INDEX_BITS)) | (iy << INDEX_BITS) | index as u64
}

/// Disks whose centers fall in lattice cell `key`.
pub fn cell_scatterers(cfg: &FieldConfig, key: (i64, i64)) -> Vec<Scatterer> {
    if !cfg.poisson_background {
        return Vec::new();
    }
    let mut rng = StreamRng::seed_from_u64(derive_seed(&[cfg.seed, STREAM_FIELD, key.0 as u64, key.1 as u64]));
    let side = cfg.cell_side;
    let mean = cfg.intensity() * side * side;
    let count = Poisson::new(mean).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
    let origin = Vec2::new(key.0 as f64 * side, key.1 as f64 * side);
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let c = origin + Vec2::new(side * rng.random::<f64>(), side * rng.random::<f64>());
        if c.dist(cfg.excluded_point) >= cfg.eps {
            out.push(Scatterer { c, id: scatterer_id(key, index) });
        }
    }
    out
}

/// Cells of side `side` that can hold a center at distance within
/// `[r_in, r_out]` of `q`.
fn annulus_cells(q: Vec2, r_in: f64, r_out: f64, side: f64) -> impl Iterator<Item = (i64, i64)> {
    let lo_x = ((q.x - r_out) / side).floor() as i64;
    let hi_x = ((q.x + r_out) / side).floor() as i64;
    let lo_y = ((q.y - r_out) / side).floor() as i64;
    let hi_y = ((q.y + r_out) / side).floor() as i64;
    (lo_x..=hi_x).flat_map(move |ix| (lo_y..=hi_y).map(move |iy| (ix, iy))).filter(move |&(ix, iy)| {
        let (x0, y0) = (ix as f64 * side, iy as f64 * side);
        let (x1, y1) = (x0 + side, y0 + side);
        let nx = q.x.clamp(x0, x1) - q.x;
        let ny = q.y.clamp(y0, y1) - q.y;
        let fx = (q.x - x0).abs().max((q.x - x1).abs());
        let fy = (q.y - y0).abs().max((q.y - y1).abs());
        nx.hypot(ny) <= r_out && fx.hypot(fy) >= r_in
    })
}

fn in_annulus(c: Vec2, q: Vec2, r_in: f64, r_out: f64) -> bool {
    let d = c.dist(q);
    d >= r_in && d <= r_out
}

fn injected(cfg: &FieldConfig) -> impl Iterator<Item = Scatterer> + '_ {
    cfg.injected.iter().enumerate().map(|(i, &c)| Scatterer { c, id: INJECTED_BIT | i as u64 })
}

/// Every disk whose center lies within `[radius - eps, radius + eps]` of `q`,
/// i.e. every disk the circle of that radius about `q` can touch. Sorted by id.
pub fn scatterers_near_circle(cfg: &FieldConfig, q: Vec2, radius: f64) -> Vec<Scatterer> {
    let (r_in, r_out) = (radius - cfg.eps, radius + cfg.eps);
    let mut out: Vec<Scatterer> = annulus_cells(q, r_in, r_out, cfg.cell_side)
        .flat_map(|key| cell_scatterers(cfg, key))
        .chain(injected(cfg))
        .filter(|s| in_annulus(s.c, q, r_in, r_out))
        .collect();
    out.sort_unstable_by_key(|s| s.id);
    out
}

/// All disks with centers in the axis-aligned rectangle, sorted by id.
pub fn scatterers_in_rect(cfg: &FieldConfig, lo: Vec2, hi: Vec2) -> Vec<Scatterer> {
    let (a, b) = (cfg.cell_key(lo), cfg.cell_key(hi));
    let inside = |c: Vec2| c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y;
    let mut out: Vec<Scatterer> = (a.0..=b.0)
        .flat_map(|ix| (a.1..=b.1).map(move |iy| (ix, iy)))
        .flat_map(|key| cell_scatterers(cfg, key))
        .chain(injected(cfg))
        .filter(|s| inside(s.c))
        .collect();
    out.sort_unstable_by_key(|s| s.id);
    out
}

/// Anything the event loop can ask for disks touching a Larmor circle.
pub trait ObstacleSource {
    fn eps(&self) -> f64;

    /// Replace `out` with the disks whose centers lie within
    /// `[radius - eps, radius + eps]` of `q`, sorted by id.
    fn near_circle(&mut self, q: Vec2, radius: f64, out: &mut Vec<Scatterer>);
}

/// Poisson field with a memo of materialized cells. The memo never changes
/// results, only avoids regenerating cells revisited along a daisy.
#[derive(Debug, Clone)]
pub struct PoissonField {
    cfg: FieldConfig,
    cells: HashMap<(i64, i64), Vec<Scatterer>>,
}

impl PoissonField {
    pub fn new(cfg: FieldConfig) -> Self {
        Self { cfg, cells: HashMap::new() }
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn materialized_cells(&self) -> usize {
        self.cells.len()
    }
}

impl ObstacleSource for PoissonField {
    fn eps(&self) -> f64 {
        self.cfg.eps
    }

    fn near_circle(&mut self, q: Vec2, radius: f64, out: &mut Vec<Scatterer>) {
        out.clear();
        let (r_in, r_out) = (radius - self.cfg.eps, radius + self.cfg.eps);
        if self.cfg.poisson_background {
            for key in annulus_cells(q, r_in, r_out, self.cfg.cell_side) {
                let cfg = &self.cfg;
                let cell = self.cells.entry(key).or_insert_with(|| cell_scatterers(cfg, key));
                out.extend(cell.iter().copied().filter(|s| in_annulus(s.c, q, r_in, r_out)));
            }
        }
        out.extend(injected(&self.cfg).filter(|s| in_annulus(s.c, q, r_in, r_out)));
        out.sort_unstable_by_key(|s| s.id);
    }
}

/// A finite, explicit list of disks.
#[derive(Debug, Clone, Default)]
pub struct PlacedObstacles {
    eps: f64,
    list: Vec<Scatterer>,
}

impl PlacedObstacles {
    pub fn new(eps: f64) -> Self {
        Self { eps, list: Vec::new() }
    }

    /// Adds a disk and returns its id (its insertion index).
    pub fn push(&mut self, c: Vec2) -> u64 {
        let id = self.list.len() as u64;
        self.list.push(Scatterer { c, id });
        id
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.list.iter().map(|s| s.c)
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }
}

impl ObstacleSource for PlacedObstacles {
    fn eps(&self) -> f64 {
        self.eps
    }

    fn near_circle(&mut self, q: Vec2, radius: f64, out: &mut Vec<Scatterer>) {
        out.clear();
        let (r_in, r_out) = (radius - self.eps, radius + self.eps);
        out.extend(self.list.iter().copied().filter(|s| in_annulus(s.c, q, r_in, r_out)));
    }
}
