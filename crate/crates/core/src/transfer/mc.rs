use rayon::prelude::*;
use serde::Serialize;

use super::grid::{BoxGrid, GridDensity};
use crate::error::{Error, Result};
use crate::model::SkewModel;
use crate::orbit::{Orbit, DEFAULT_NOISE_BITS};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct McOptions {
    pub n_orbits: usize,
    pub burn_in: usize,
    pub orbit_len: usize,
    pub seed: u64,
    pub noise_bits: u32,
}

impl McOptions {
    pub fn new(n_orbits: usize, burn_in: usize, orbit_len: usize, seed: u64) -> Self {
        Self { n_orbits, burn_in, orbit_len, seed, noise_bits: DEFAULT_NOISE_BITS }
    }

    pub fn samples(&self) -> u64 {
        self.n_orbits as u64 * self.orbit_len as u64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McHistogram {
    #[serde(skip)]
    pub density: GridDensity,
    pub samples: u64,
    /// Post-burn-in points outside the box (expected 0).
    pub escaped: u64,
}

const ORBITS_PER_CHUNK: usize = 8;

/// Birkhoff histogram of `n_orbits` independent orbits, each started
/// uniformly in the box and recorded after `burn_in` steps. Orbit `i` uses
/// random stream `i` of `seed`; counts are merged as integers, so the result
/// does not depend on the thread schedule.
pub fn srb_histogram_mc(model: &SkewModel, grid: &BoxGrid, opts: &McOptions) -> Result<McHistogram> {
    if opts.n_orbits == 0 || opts.orbit_len == 0 {
        return Err(Error::InvalidArgument("need at least one orbit of positive length".into()));
    }
    let cells = grid.n_cells();
    let chunks = opts.n_orbits.div_ceil(ORBITS_PER_CHUNK);
    let (counts, escaped) = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut counts = vec![0u64; cells];
            let mut escaped = 0u64;
            let start = chunk * ORBITS_PER_CHUNK;
            for i in start..(start + ORBITS_PER_CHUNK).min(opts.n_orbits) {
                let mut orbit = Orbit::new(model, opts.seed, i as u64, opts.noise_bits);
                orbit.advance(opts.burn_in);
                for _ in 0..opts.orbit_len {
                    orbit.step();
                    match grid.locate(orbit.x(), orbit.y()) {
                        Some(j) => counts[j] += 1,
                        None => escaped += 1,
                    }
                }
            }
            (counts, escaped)
        })
        .reduce(
            || (vec![0u64; cells], 0u64),
            |(mut a, ea), (b, eb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, ea + eb)
            },
        );
    let recorded: u64 = counts.iter().sum();
    if recorded == 0 {
        return Err(Error::InvalidArgument("no orbit point landed in the grid".into()));
    }
    let mass = counts.iter().map(|&c| c as f64 / recorded as f64).collect();
    Ok(McHistogram { density: GridDensity::new(grid.clone(), mass)?, samples: opts.samples(), escaped })
}
