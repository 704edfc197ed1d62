//! Ensemble plumbing: per-index seeding and order-preserving parallel maps.
//!
//! Sample `i` of any ensemble depends only on `(seed, i)`, and results are
//! gathered in index order, so outputs do not depend on the worker count.

use crate::boltzmann::{sample_path, BoltzmannPath};
use crate::density::InitialDatum;
use crate::field::{default_cell_side, FieldConfig};
use crate::geometry::{MagneticConfig, ParticleState};
use crate::lorentz::{run_trajectory, TrajectoryRecord};
use crate::rng::{derive_seed, stream, StreamRng, STREAM_BOLTZMANN, STREAM_FIELD, STREAM_LORENTZ};

/// Map `f` over `0..n`, in parallel when the `parallel` feature is on.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fold `0..n` in fixed blocks and merge the block results in index order.
/// Blocks are processed a bounded group at a time so large accumulators
/// (density grids) do not pile up in memory.
pub fn par_fold<A, I, F, M>(n: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    const BLOCK: usize = 256;
    let blocks = n.div_ceil(BLOCK);
    let group = 4 * worker_count().max(4);
    let mut out = init();
    for g in (0..blocks).step_by(group) {
        let parts = par_map(group.min(blocks - g), |b| {
            let b = g + b;
            let mut acc = init();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                fold(&mut acc, i);
            }
            acc
        });
        for p in parts {
            merge(&mut out, p);
        }
    }
    out
}

fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Everything needed to reproduce sample `i` of a Lorentz ensemble.
#[derive(Debug, Clone, Copy)]
pub struct LorentzSetup {
    pub mag: MagneticConfig,
    pub eps: f64,
    pub cell_side: Option<f64>,
    pub f0: InitialDatum,
    pub seed: u64,
}

impl LorentzSetup {
    pub fn rng(&self, i: usize) -> StreamRng {
        stream(self.seed, STREAM_LORENTZ, i as u64)
    }

    pub fn start(&self, i: usize) -> ParticleState {
        self.f0.sample(&mut self.rng(i))
    }

    /// The field of sample `i`, conditioned to leave `start` uncovered.
    pub fn field(&self, i: usize, start: ParticleState) -> FieldConfig {
        let side = self.cell_side.unwrap_or_else(|| default_cell_side(self.eps, &self.mag));
        let seed = derive_seed(&[self.seed, STREAM_FIELD, i as u64]);
        FieldConfig::new(self.eps, side, seed, start.x).expect("validated setup")
    }

    pub fn trajectory(&self, i: usize, horizon: f64) -> TrajectoryRecord {
        let start = self.start(i);
        run_trajectory(&self.field(i, start), &self.mag, start, horizon)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoltzmannSetup {
    pub mag: MagneticConfig,
    pub f0: InitialDatum,
    pub seed: u64,
}

impl BoltzmannSetup {
    pub fn rng(&self, i: usize) -> StreamRng {
        stream(self.seed, STREAM_BOLTZMANN, i as u64)
    }

    /// Start state and path of sample `i`.
    pub fn sample(&self, i: usize, horizon: f64) -> (ParticleState, BoltzmannPath) {
        let mut rng = self.rng(i);
        let start = self.f0.sample(&mut rng);
        let path = sample_path(horizon, &self.mag, start, &mut rng);
        (start, path)
    }
}

pub fn lorentz_ensemble(setup: &LorentzSetup, n: usize, horizon: f64) -> Vec<TrajectoryRecord> {
    par_map(n, |i| setup.trajectory(i, horizon))
}

pub fn boltzmann_ensemble(setup: &BoltzmannSetup, n: usize, horizon: f64) -> Vec<(ParticleState, BoltzmannPath)> {
    par_map(n, |i| setup.sample(i, horizon))
}
