//! Desk-scale fixture networks with seeded random weights.
//!
//! Weights are drawn on the 2^-7 grid inside [-1/sqrt(fan_in), 1/sqrt(fan_in)].
//! The coarse grid matters: a weight w times a power-of-two blinding factor
//! up to 2^3 lands exactly on the canonical f = 10 wire grid, so the blinded
//! linear step introduces no operand rounding at all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{ActivationKind, ConvSpec, Dims, FcSpec, LayerSpec, NetworkSpec, PaddingMode};
use crate::real::Real;

/// Fractional bits of the weight grid (f - max blinding exponent).
pub const WEIGHT_GRID_BITS: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetTemplate {
    /// 1 conv + ReLU; smoke tests.
    Tiny,
    /// 1 conv and 2 FC layers with ReLU.
    NetA,
    /// 2 conv and 2 FC layers with ReLU and mean pooling.
    NetB,
    /// First two VGG-16 conv blocks at desk scale, then a small classifier.
    VggHead,
    /// Architecture-only templates for the cost model.
    Alexnet,
    Vgg16,
}

impl NetTemplate {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Some(NetTemplate::Tiny),
            "neta" => Some(NetTemplate::NetA),
            "netb" => Some(NetTemplate::NetB),
            "vgghead" | "vgg-head" => Some(NetTemplate::VggHead),
            "alexnet" => Some(NetTemplate::Alexnet),
            "vgg16" | "vgg-16" => Some(NetTemplate::Vgg16),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NetTemplate::Tiny => "tiny",
            NetTemplate::NetA => "netA",
            NetTemplate::NetB => "netB",
            NetTemplate::VggHead => "vggHead",
            NetTemplate::Alexnet => "alexnet",
            NetTemplate::Vgg16 => "vgg16",
        }
    }
}

fn grid_uniform<R: Real>(rng: &mut ChaCha20Rng, bound: f64, count: usize) -> Vec<R> {
    let step = 2.0f64.powi(-(WEIGHT_GRID_BITS as i32));
    let g = ((bound / step).floor() as i64).max(1);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(-g..=g);
            R::from_f64(k as f64 * step).unwrap()
        })
        .collect()
}

fn conv<R: Real>(
    rng: &mut ChaCha20Rng,
    k: usize,
    c_in: usize,
    c_out: usize,
    stride: usize,
) -> LayerSpec<R> {
    let fan_in = (k * k * c_in) as f64;
    LayerSpec::Conv(ConvSpec {
        kernel_h: k,
        kernel_w: k,
        in_channels: c_in,
        out_channels: c_out,
        stride,
        padding: PaddingMode::Same,
        weights: grid_uniform(rng, 1.0 / fan_in.sqrt(), k * k * c_in * c_out),
        bias: Some(grid_uniform(rng, 0.125, c_out)),
    })
}

fn conv_arch<R: Real>(k: usize, c_in: usize, c_out: usize, stride: usize) -> LayerSpec<R> {
    LayerSpec::Conv(ConvSpec {
        kernel_h: k,
        kernel_w: k,
        in_channels: c_in,
        out_channels: c_out,
        stride,
        padding: PaddingMode::Same,
        weights: Vec::new(),
        bias: None,
    })
}

fn fc_arch<R: Real>(inputs: usize, outputs: usize) -> LayerSpec<R> {
    LayerSpec::Fc(FcSpec {
        inputs,
        outputs,
        weights: Vec::new(),
        bias: None,
    })
}

fn fc<R: Real>(rng: &mut ChaCha20Rng, inputs: usize, outputs: usize) -> LayerSpec<R> {
    LayerSpec::Fc(FcSpec {
        inputs,
        outputs,
        weights: grid_uniform(rng, 1.0 / (inputs as f64).sqrt(), inputs * outputs),
        bias: Some(grid_uniform(rng, 0.125, outputs)),
    })
}

fn relu<R: Real>() -> LayerSpec<R> {
    LayerSpec::Activation(ActivationKind::Relu)
}

fn pool<R: Real>() -> LayerSpec<R> {
    LayerSpec::MeanPool {
        region_h: 2,
        region_w: 2,
    }
}

/// Deterministic fixture for the given template and seed.
pub fn gen_random_network<R: Real>(template: NetTemplate, seed: u64) -> NetworkSpec<R> {
    let mut rng = ChaCha20Rng::seed_from_u64(
        seed.wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(template.name().len() as u64),
    );
    let r = &mut rng;
    let (input, layers) = match template {
        NetTemplate::Tiny => (
            Dims {
                width: 4,
                height: 4,
                channels: 1,
            },
            vec![conv(r, 3, 1, 1, 1), relu()],
        ),
        NetTemplate::NetA => {
            let input = Dims {
                width: 28,
                height: 28,
                channels: 1,
            };
            let conv0 = conv(r, 5, 1, 5, 2); // 28x28@1 -> 14x14@5
            let flat = 14 * 14 * 5;
            (
                input,
                vec![conv0, relu(), fc(r, flat, 100), relu(), fc(r, 100, 10)],
            )
        }
        NetTemplate::NetB => {
            let input = Dims {
                width: 28,
                height: 28,
                channels: 1,
            };
            let layers = vec![
                conv(r, 5, 1, 8, 1), // 28x28@8
                relu(),
                pool(), // 14x14@8
                conv(r, 5, 8, 8, 1),
                relu(),
                pool(), // 7x7@8
                fc(r, 7 * 7 * 8, 100),
                relu(),
                fc(r, 100, 10),
            ];
            (input, layers)
        }
        NetTemplate::VggHead => {
            let input = Dims {
                width: 32,
                height: 32,
                channels: 3,
            };
            let layers = vec![
                conv(r, 3, 3, 16, 1),
                relu(),
                conv(r, 3, 16, 16, 1),
                relu(),
                pool(), // 16x16@16
                conv(r, 3, 16, 32, 1),
                relu(),
                conv(r, 3, 32, 32, 1),
                relu(),
                pool(), // 8x8@32
                fc(r, 8 * 8 * 32, 10),
            ];
            (input, layers)
        }
        // Architecture-only manifests: weights at this scale are outside the
        // desk scope, and the cost model needs only the dims.
        NetTemplate::Alexnet => {
            let input = Dims {
                width: 224,
                height: 224,
                channels: 3,
            };
            let layers = vec![
                conv_arch(11, 3, 96, 2), // stride capped at 2 by the engine
                relu(),
                pool(),
                conv_arch(5, 96, 256, 1),
                relu(),
                pool(),
                conv_arch(3, 256, 384, 1),
                relu(),
                conv_arch(3, 384, 384, 1),
                relu(),
                conv_arch(3, 384, 256, 1),
                relu(),
                pool(),
                fc_arch(14 * 14 * 256, 4096),
                relu(),
                fc_arch(4096, 4096),
                relu(),
                fc_arch(4096, 1000),
            ];
            (input, layers)
        }
        NetTemplate::Vgg16 => {
            let input = Dims {
                width: 224,
                height: 224,
                channels: 3,
            };
            let mut layers = Vec::new();
            let blocks: &[(usize, usize, usize)] = &[
                (3, 64, 2),
                (64, 128, 2),
                (128, 256, 3),
                (256, 512, 3),
                (512, 512, 3),
            ];
            for &(c_in, c_out, convs) in blocks {
                for i in 0..convs {
                    layers.push(conv_arch(3, if i == 0 { c_in } else { c_out }, c_out, 1));
                    layers.push(relu());
                }
                layers.push(pool());
            }
            layers.push(fc_arch(7 * 7 * 512, 4096));
            layers.push(relu());
            layers.push(fc_arch(4096, 4096));
            layers.push(relu());
            layers.push(fc_arch(4096, 1000));
            (input, layers)
        }
    };
    let net = NetworkSpec {
        name: template.name().to_string(),
        input,
        layers,
    };
    debug_assert!(
        net.layer_dims().is_ok(),
        "template {} must type-check",
        template.name()
    );
    net
}
