use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network, ParamVector};

/// Weight initialization rules. Biases are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum InitScheme {
    /// Centered normal with std sqrt(4 / (n_inputs + n_outputs)).
    GlorotNormal,
    /// Centered normal with the given std, redrawing any |w| > 2 std.
    TruncatedNormal { std: f64 },
    /// Glorot on dense layers, truncated normal (std 0.1) on conv kinds.
    PerLayerKind,
}

pub fn init_params(net: &Network, scheme: InitScheme, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = net.zero_params();
    for (i, layer) in net.layers.iter().enumerate() {
        let layer_scheme = match scheme {
            InitScheme::PerLayerKind => match layer {
                LayerSpec::Dense { .. } => InitScheme::GlorotNormal,
                _ => InitScheme::TruncatedNormal { std: 0.1 },
            },
            s => s,
        };
        let block = params.block_mut(&Network::weight_name(i)).expect("own layout");
        match layer_scheme {
            InitScheme::GlorotNormal => {
                let (fan_in, fan_out) = layer.fans();
                let std = (4.0 / (fan_in + fan_out) as f64).sqrt();
                for w in &mut block.data {
                    *w = std * standard_normal(&mut rng);
                }
            }
            InitScheme::TruncatedNormal { std } => {
                for w in &mut block.data {
                    *w = loop {
                        let draw = std * standard_normal(&mut rng);
                        if draw.abs() <= 2.0 * std {
                            break draw;
                        }
                    };
                }
            }
            InitScheme::PerLayerKind => unreachable!(),
        }
        // Bias blocks stay zero.
    }
    params
}

/// Box-Muller; keeps the draw sequence independent of platform libm.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn glorot_std_matches_formula() {
        // dense 20 -> 20: std should be sqrt(4/40) ~ 0.3162.
        let net = Network::new(vec![LayerSpec::Dense {
            input: 20,
            output: 20,
            activation: Activation::Tanh,
        }]);
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..25 {
            let p = init_params(&net, InitScheme::GlorotNormal, seed);
            for w in &p.block("layer0.weight").unwrap().data {
                sum_sq += w * w;
                count += 1;
            }
        }
        let std = (sum_sq / count as f64).sqrt();
        let target = (4.0f64 / 40.0).sqrt();
        assert!(
            (std - target).abs() / target < 0.1,
            "empirical std {std}, expected {target}"
        );
    }

    #[test]
    fn truncated_normal_respects_bound() {
        let net = Network::new(vec![LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 9,
            kernel: (4, 3),
            activation: Activation::Softplus,
        }]);
        for seed in 0..20 {
            let p = init_params(&net, InitScheme::TruncatedNormal { std: 0.1 }, seed);
            for w in &p.block("layer0.weight").unwrap().data {
                assert!(w.abs() <= 0.2, "weight {w} exceeds 2 sigma");
            }
        }
    }

    #[test]
    fn biases_are_zero_under_every_scheme() {
        let net = Network::new(vec![
            LayerSpec::Dense { input: 5, output: 3, activation: Activation::Tanh },
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 3,
                kernel: (2, 2),
                activation: Activation::Softplus,
            },
        ]);
        for scheme in [
            InitScheme::GlorotNormal,
            InitScheme::TruncatedNormal { std: 0.1 },
            InitScheme::PerLayerKind,
        ] {
            let p = init_params(&net, scheme, 7);
            assert!(p.block("layer0.bias").unwrap().data.iter().all(|&b| b == 0.0));
            assert!(p.block("layer1.bias").unwrap().data.iter().all(|&b| b == 0.0));
        }
    }
}
