//! Shared fixtures for the criterion benchmarks.

use nowcast_core::models::{AffineMap, FunctionalDecoderSpec, FunctionalModel};
use nowcast_core::nn::{init_params, InitScheme};
use nowcast_core::{NodeLocation, Observation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small decoder of the shape typical for surface work.
pub fn decoder(seed: u64) -> FunctionalModel {
    let spec = FunctionalDecoderSpec { dim: 2, n_exogenous: 0, factors: 4, hidden: vec![20, 20] };
    let net = spec.network();
    let params = init_params(&net, InitScheme::GlorotNormal, seed);
    FunctionalModel { spec, net, params, transform: AffineMap::identity(2) }
}

/// A smooth synthetic surface observation on `n` scattered points.
pub fn scattered_observation(n: usize, seed: u64) -> Observation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.05..1.95);
            let y: f64 = rng.gen_range(-0.4..0.4);
            let v = 0.2 + 0.05 * (2.0 * x).sin() + 0.1 * y * y;
            (NodeLocation::new(vec![x, y]), v)
        })
        .collect();
    Observation { date: "bench".into(), points, grid_id: None }
}

/// The same surface sampled on a regular grid, for query locations.
pub fn grid_queries(rows: usize, cols: usize) -> Vec<NodeLocation> {
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let x = 0.1 + 1.8 * (i as f64) / ((rows - 1) as f64);
            let y = -0.35 + 0.7 * (j as f64) / ((cols - 1) as f64);
            out.push(NodeLocation::new(vec![x, y]));
        }
    }
    out
}
