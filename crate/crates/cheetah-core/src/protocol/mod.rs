//! The two-party inference protocol: blinded permutation-free linear
//! evaluation on the server, decrypt-and-block-sum plus sign-indicator
//! nonlinear recovery on the client, additive re-sharing between layers,
//! and the sigmoid/softmax subprotocols.
//!
//! Numeric discipline: everything crossing the wire is on the f-bit grid.
//! Blinding magnitudes are powers of two (exactly invertible on the grid),
//! fixture weights sit on the 2^-(f-3) grid, and masks cancel exactly, so
//! the only rounding in a ReLU network is the one documented requantize of
//! each activation back to the f-grid at the layer boundary.

mod client;
pub mod model;
mod run;
mod server;

pub use client::ClientSession;
pub use run::{
    argmax, compare_with_oracle, describe_plan, run_client, run_local_inference, run_server,
    InferenceOutcome,
};
pub use server::{ServerRunStats, ServerSession};

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::fixedpoint::{self, FpParams};
use crate::nn::{ActivationKind, Dims, LayerSpec, NetworkSpec, NnError, Tensor};
use crate::packing::{ConvLayout, FcLayout, LinearLayout};
use crate::phe::{Ciphertext, PheError};
use crate::real::exp2;
use crate::transport::WireError;
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Phe(#[from] PheError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Fp(#[from] fixedpoint::FpError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("peer reported error {code}: {message}")]
    Remote { code: u16, message: String },
    #[error("unexpected message: wanted {want}, got {got}")]
    Unexpected {
        want: &'static str,
        got: &'static str,
    },
    #[error("parameter digest mismatch")]
    ParamsDigest,
    #[error("network digest mismatch")]
    NetworkDigest,
    #[error("unsupported network shape: {0}")]
    Unsupported(String),
    #[error("corrupted nonlinear exchange: {0}")]
    Corrupted(String),
}

/// Tunables for the blinding distributions. Defaults keep every blinding
/// factor exactly invertible on the f-bit grid and hold the nonlinear
/// subprotocol error under 1e-3.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    /// ReLU blinding v1 = ±2^e with |e| <= relu_exp_range (default 3, so
    /// the indicator magnitudes stay within 2^(f-7) grid exactness).
    pub relu_exp_range: i32,
    /// Softmax blinding v1 = 2^-e with 0 <= e <= softmax_exp_range.
    pub softmax_exp_range: i32,
    /// Sigmoid additive blind r1 uniform on the grid in [0, r1_max].
    pub sigmoid_r1_max: Scalar,
    /// Cap on the client-side e^{-y} operand; bounds ring magnitudes while
    /// keeping the saturated-sigmoid error under tolerance.
    pub sigmoid_exp_cap: Scalar,
    /// Activation shares drawn uniformly on the grid in [-share_bound, +].
    pub share_bound: Scalar,
    /// Mask entries drawn as grid integers within ±2^(f + mask_extra_bits).
    pub mask_extra_bits: u32,
    /// Test-only mode: v = 1, masks carry only the bias, shares are zero.
    pub degenerate: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            relu_exp_range: 3,
            softmax_exp_range: 2,
            sigmoid_r1_max: 1.5,
            sigmoid_exp_cap: 8192.0,
            share_bound: 8.0,
            mask_extra_bits: 3,
            degenerate: false,
        }
    }
}

/// The linear step of one protocol layer.
#[derive(Debug, Clone)]
pub enum LinearStep {
    Conv { spec_idx: usize, layout: ConvLayout },
    Fc { spec_idx: usize, layout: FcLayout },
}

impl LinearStep {
    pub fn input_ct_count(&self) -> usize {
        match self {
            LinearStep::Conv { layout, .. } => layout.input_ct_count,
            LinearStep::Fc { .. } => 1,
        }
    }

    pub fn output_ct_count(&self) -> usize {
        match self {
            LinearStep::Conv { layout, .. } => layout.out_channels * layout.output_cts_per_kernel(),
            LinearStep::Fc { layout, .. } => layout.ct_count,
        }
    }
}

/// One protocol layer: linear step, optional activation, optional pooling.
#[derive(Debug, Clone)]
pub struct LayerPlan {
    pub index: usize,
    pub linear: LinearStep,
    pub activation: Option<ActivationKind>,
    pub pool: Option<(usize, usize)>,
    pub input_dims: Dims,
    pub linear_out_dims: Dims,
    pub final_out_dims: Dims,
    pub terminal: bool,
}

impl LayerPlan {
    pub fn linear_outputs(&self) -> usize {
        self.linear_out_dims.count()
    }

    /// Ciphertexts needed for the compact (one value per slot) packing of
    /// this layer's activation values.
    pub fn compact_ct_count(&self, slots: usize) -> usize {
        self.linear_outputs().div_ceil(slots).max(1)
    }
}

/// Parse a network into protocol layers. Grammar per layer:
/// (Conv | Fc) Activation? MeanPool?; a missing activation is only legal on
/// the terminal layer, where the blinded sums are the client's own output.
pub fn plan_network<R: crate::real::Real>(
    net: &NetworkSpec<R>,
    slots: usize,
) -> Result<Vec<LayerPlan>, ProtocolError> {
    let dims_chain = net.layer_dims()?;
    let mut plans: Vec<LayerPlan> = Vec::new();
    let mut idx = 0usize;
    let mut input_dims = net.input;
    while idx < net.layers.len() {
        let spec_idx = idx;
        let linear = match &net.layers[idx] {
            LayerSpec::Conv(c) => LinearStep::Conv {
                spec_idx,
                layout: ConvLayout::new(input_dims, c, slots)?,
            },
            LayerSpec::Fc(f) => LinearStep::Fc {
                spec_idx,
                layout: FcLayout::new(f.inputs, f.outputs, slots)?,
            },
            other => {
                return Err(ProtocolError::Unsupported(format!(
                    "layer {idx}: expected a linear layer, found {other:?}"
                )))
            }
        };
        let linear_out_dims = dims_chain[idx];
        idx += 1;
        let mut activation = None;
        if let Some(LayerSpec::Activation(kind)) = net.layers.get(idx) {
            activation = Some(*kind);
            idx += 1;
        }
        let mut pool = None;
        if let Some(LayerSpec::MeanPool { region_h, region_w }) = net.layers.get(idx) {
            if activation.is_none() {
                return Err(ProtocolError::Unsupported(format!(
                    "layer {spec_idx}: pooling without a preceding activation"
                )));
            }
            pool = Some((*region_h, *region_w));
            idx += 1;
        }
        let final_out_dims = dims_chain[idx - 1];
        let terminal = idx == net.layers.len();
        if !terminal && activation.is_none() {
            return Err(ProtocolError::Unsupported(format!(
                "layer {spec_idx}: a non-terminal linear layer needs an activation"
            )));
        }
        if activation == Some(ActivationKind::Softmax) && (!terminal || pool.is_some()) {
            return Err(ProtocolError::Unsupported(
                "softmax must be the terminal step".into(),
            ));
        }
        plans.push(LayerPlan {
            index: plans.len(),
            linear,
            activation,
            pool,
            input_dims,
            linear_out_dims,
            final_out_dims,
            terminal,
        });
        input_dims = final_out_dims;
    }
    Ok(plans)
}

/// Layout the next layer expects uploads in (compact for the terminal).
pub fn next_layout(plans: &[LayerPlan], layer: usize, slots: usize) -> LinearLayout {
    match plans.get(layer + 1) {
        Some(next) => match &next.linear {
            LinearStep::Conv { layout, .. } => LinearLayout::Conv(layout.clone()),
            LinearStep::Fc { layout, .. } => LinearLayout::Fc(layout.clone()),
        },
        None => LinearLayout::Compact {
            len: plans[layer].final_out_dims.count(),
            slots,
        },
    }
}

/// Sign-indicator pair for one blinding factor.
pub fn indicator_pair(v1: Scalar) -> (Scalar, Scalar) {
    let v2 = 1.0 / v1;
    if v1 > 0.0 {
        (0.0, v2)
    } else {
        (v2, -v2)
    }
}

/// The additive-mask bundle for one layer's output ciphertexts: slot
/// vectors at scale 2f whose per-output-group sums equal the stated
/// targets exactly on the grid.
pub type MaskVectors = Vec<Vec<Scalar>>;

/// Enumerate (output ct index, group slots) for one linear step, in the
/// canonical tensor order of outputs.
pub fn output_groups(step: &LinearStep) -> Vec<(usize, Vec<usize>)> {
    match step {
        LinearStep::Conv { layout, .. } => {
            let segs = layout.output_cts_per_kernel();
            let mut groups = Vec::with_capacity(layout.blocks_per_channel * layout.out_channels);
            for i in 0..layout.blocks_per_channel {
                for t in 0..layout.out_channels {
                    let (seg, slots) = layout.output_group_slots(i);
                    groups.push((t * segs + seg, slots));
                }
            }
            groups
        }
        LinearStep::Fc { layout, .. } => (0..layout.outputs)
            .map(|i| {
                let (ct, slots) = layout.output_group_slots(i);
                (ct, slots)
            })
            .collect(),
    }
}

/// Generate mask vectors whose group sums hit `targets` (tensor order)
/// exactly on the f-bit grid. The final slot of each group absorbs the
/// negated partial sum and is redrawn if it lands out of range.
pub fn gen_masks(
    step: &LinearStep,
    targets: &[Scalar],
    fp: &FpParams,
    cfg: &ProtocolConfig,
    rng: &mut ChaCha20Rng,
) -> MaskVectors {
    let slots = match step {
        LinearStep::Conv { layout, .. } => layout.slots,
        LinearStep::Fc { layout, .. } => layout.slots,
    };
    let groups = output_groups(step);
    assert_eq!(groups.len(), targets.len());
    let mut masks = vec![
        vec![0.0; slots];
        match step {
            LinearStep::Conv { layout, .. } => layout.out_channels * layout.output_cts_per_kernel(),
            LinearStep::Fc { layout, .. } => layout.ct_count,
        }
    ];
    let scale = exp2::<Scalar>(fp.scale_bits as i32);
    let bound = 1i64 << (fp.scale_bits + cfg.mask_extra_bits);
    for ((ct, slots_of_group), &target) in groups.iter().zip(targets) {
        let target_units = (target * scale).round() as i64;
        debug_assert_eq!(
            target_units as Scalar,
            target * scale,
            "mask target must lie on the grid"
        );
        if cfg.degenerate {
            // Bias-only: the whole target on the first slot.
            masks[*ct][slots_of_group[0]] = target_units as Scalar / scale;
            continue;
        }
        loop {
            let mut partial = 0i64;
            for &s in &slots_of_group[..slots_of_group.len() - 1] {
                let draw = rng.gen_range(-bound..=bound);
                masks[*ct][s] = draw as Scalar / scale;
                partial += draw;
            }
            let last = target_units - partial;
            if last.abs() <= 2 * bound {
                masks[*ct][*slots_of_group.last().unwrap()] = last as Scalar / scale;
                break;
            }
        }
    }
    masks
}

/// Per-layer randomness bundle held by the server.
#[derive(Debug)]
pub enum LayerBlinding {
    Relu(ReluBlinding),
    Sigmoid(SigmoidBlinding),
    Softmax(SoftmaxBlinding),
    /// Terminal linear layer: additive masks only (the sums are the
    /// client's own result, so no multiplicative blind is needed).
    Plain {
        masks: MaskVectors,
    },
}

/// Multiplicative blinds with exact grid inverses, their sign-indicator
/// encryptions, and the zero-sum masks.
#[derive(Debug)]
pub struct ReluBlinding {
    pub v1: Vec<Scalar>,
    pub v2: Vec<Scalar>,
    pub id1: Vec<Ciphertext>,
    pub id2: Vec<Ciphertext>,
    pub masks: MaskVectors,
}

/// Additive exponential blinds for the sigmoid (and tanh) path.
#[derive(Debug)]
pub struct SigmoidBlinding {
    pub r1: Vec<Scalar>,
    /// Grid values of e^{r1} as actually encrypted; the recovery divides
    /// by these, cancelling their own quantization.
    pub exp_r1_grid: Vec<Scalar>,
    pub exp_r1: Vec<Ciphertext>,
    pub masks: MaskVectors,
    /// tanh runs sigmoid on a doubled pre-activation.
    pub doubled: bool,
}

/// Logarithmic blinds for the softmax path; v2 values are small integers
/// encrypted at scale 0 so the client's product stays at scale 2f.
#[derive(Debug)]
pub struct SoftmaxBlinding {
    pub v1: Vec<Scalar>,
    pub ln_v1_grid: Vec<Scalar>,
    /// exp(ln_v1_grid): the blind actually in effect after grid rounding.
    pub v_eff: Vec<Scalar>,
    pub vvec: Vec<Ciphertext>,
    pub masks: MaskVectors,
}

/// Draw ±2^e blinding factors, fair sign, |e| <= range.
pub fn draw_relu_blinds(
    count: usize,
    range: i32,
    degenerate: bool,
    rng: &mut ChaCha20Rng,
) -> Vec<Scalar> {
    (0..count)
        .map(|_| {
            if degenerate {
                1.0
            } else {
                let e = rng.gen_range(-range..=range);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                sign * exp2::<Scalar>(e)
            }
        })
        .collect()
}

/// Mean-pool a share vector laid out as a tensor; exact for shares drawn
/// on the region-coarsened grid.
pub fn pool_share(share: &[Scalar], dims: Dims, region: (usize, usize)) -> Vec<Scalar> {
    let t = Tensor::new(dims, share.to_vec());
    crate::nn::meanpool_ref(&t, region.0, region.1)
        .expect("plan guarantees tiling")
        .data
}
