//! Monte-Carlo reference for thermal averages.
//!
//! Samples relative velocities directly (each Cartesian component of
//! `v₁ - v₂` is normal with variance `2k_BT/m`) and averages `σ(E)·v` with
//! `E = m v²/4`. It shares only the cross-section formulas with
//! [`crate::thermal`], not the energy-space change of variables or the
//! quadrature.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::born::{cross_sections, CollisionKinematics};
use crate::channels::Species;
use crate::thermal::{ChannelWeights, ThermalConditions};
use crate::units::CODATA_2018;
use crate::Result;

const CHUNK: usize = 1 << 16;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Estimates `⟨Σ w_c σ_c v⟩` from `samples` draws. Deterministic for a given
/// seed regardless of the number of worker threads.
pub fn monte_carlo_thermal_average(
    species: &Species,
    conditions: &ThermalConditions,
    weights: ChannelWeights,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let sd = (2.0 * CODATA_2018.boltzmann * conditions.temperature() / species.mass()).sqrt();
    let normal = Normal::new(0.0, sd).expect("positive standard deviation");
    let chunks = samples.div_ceil(CHUNK);
    let partial: Result<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let n = CHUNK.min(samples - chunk * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n {
                let (vx, vy, vz) = (normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
                let v = (vx * vx + vy * vy + vz * vz).sqrt();
                let energy = species.mass() * v * v / 4.0;
                let kin = CollisionKinematics::from_energy(species, energy)?;
                let xs = cross_sections(species, &kin, conditions.field())?;
                let value = v
                    * (weights.elastic * xs.sigma0 + weights.single * xs.sigma1 + weights.double * xs.sigma2);
                sum += value;
                sum_sq += value * value;
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let (sum, sum_sq) = partial?
        .into_iter()
        .fold((0.0, 0.0), |acc, (s, q)| (acc.0 + s, acc.1 + q));
    let n = samples as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(Estimate {
        mean,
        std_error: (variance / n).sqrt(),
    })
}
