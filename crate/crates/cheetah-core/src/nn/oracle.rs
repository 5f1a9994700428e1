//! Plaintext reference implementations. These define the values every
//! secure execution is checked against, so they stay as direct as possible:
//! nested sums, no layout tricks.

use super::{ActivationKind, ConvSpec, Dims, FcSpec, LayerSpec, NetworkSpec, NnError, Tensor};
use crate::real::Real;

/// Cross-correlation with the kernel anchored by the padding geometry:
/// out(m,n,t) = sum_j sum_u sum_v k(u,v,j,t) * x(m*s - pad + u, n*s - pad + v, j) + bias_t.
pub fn conv2d_ref<R: Real>(x: &Tensor<R>, layer: &ConvSpec<R>) -> Result<Tensor<R>, NnError> {
    if x.dims.channels != layer.in_channels {
        return Err(NnError::DimMismatch(format!(
            "conv expects {} channels, input has {}",
            layer.in_channels, x.dims.channels
        )));
    }
    let g = layer.geometry(x.dims);
    let out_dims = Dims {
        width: g.out_w,
        height: g.out_h,
        channels: layer.out_channels,
    };
    let mut out = Tensor::zeros(out_dims);
    for m in 0..g.out_h {
        for n in 0..g.out_w {
            for t in 0..layer.out_channels {
                let mut acc = R::zero();
                for j in 0..layer.in_channels {
                    for u in 0..layer.kernel_h {
                        for v in 0..layer.kernel_w {
                            let row = (m * layer.stride + u) as isize - g.pad_top as isize;
                            let col = (n * layer.stride + v) as isize - g.pad_left as isize;
                            acc = acc + layer.weight(u, v, j, t) * x.at_padded(row, col, j);
                        }
                    }
                }
                if let Some(b) = &layer.bias {
                    acc = acc + b[t];
                }
                out.set(m, n, t, acc);
            }
        }
    }
    Ok(out)
}

pub fn fc_ref<R: Real>(x: &[R], layer: &FcSpec<R>) -> Result<Vec<R>, NnError> {
    if x.len() != layer.inputs {
        return Err(NnError::DimMismatch(format!(
            "fc expects {} inputs, got {}",
            layer.inputs,
            x.len()
        )));
    }
    Ok((0..layer.outputs)
        .map(|i| {
            let dot = (0..layer.inputs)
                .map(|j| layer.weights[i * layer.inputs + j] * x[j])
                .sum::<R>();
            match &layer.bias {
                Some(b) => dot + b[i],
                None => dot,
            }
        })
        .collect())
}

pub fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

pub fn softmax<R: Real>(x: &[R]) -> Vec<R> {
    // Shift by the max for stability; softmax is shift-invariant.
    let m = x.iter().cloned().fold(R::neg_infinity(), R::max);
    let exps: Vec<R> = x.iter().map(|&v| (v - m).exp()).collect();
    let sum: R = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn activation_ref<R: Real>(kind: ActivationKind, x: &Tensor<R>) -> Tensor<R> {
    let data = match kind {
        ActivationKind::Relu => x.data.iter().map(|&v| v.max(R::zero())).collect(),
        ActivationKind::Sigmoid => x.data.iter().map(|&v| sigmoid(v)).collect(),
        // tanh(x) = 2*sigmoid(2x) - 1
        ActivationKind::Tanh => {
            let two = R::from_f64(2.0).unwrap();
            x.data
                .iter()
                .map(|&v| two * sigmoid(two * v) - R::one())
                .collect()
        }
        ActivationKind::Softmax => softmax(&x.data),
    };
    Tensor { dims: x.dims, data }
}

pub fn meanpool_ref<R: Real>(
    x: &Tensor<R>,
    region_h: usize,
    region_w: usize,
) -> Result<Tensor<R>, NnError> {
    if x.dims.height % region_h != 0 || x.dims.width % region_w != 0 {
        return Err(NnError::DimMismatch(format!(
            "pool region {region_h}x{region_w} does not tile {}x{}",
            x.dims.height, x.dims.width
        )));
    }
    let out_dims = Dims {
        width: x.dims.width / region_w,
        height: x.dims.height / region_h,
        channels: x.dims.channels,
    };
    let mut out = Tensor::zeros(out_dims);
    let area = R::from_usize(region_h * region_w).unwrap();
    for m in 0..out_dims.height {
        for n in 0..out_dims.width {
            for ch in 0..x.dims.channels {
                let mut acc = R::zero();
                for u in 0..region_h {
                    for v in 0..region_w {
                        acc = acc + x.at(m * region_h + u, n * region_w + v, ch);
                    }
                }
                out.set(m, n, ch, acc / area);
            }
        }
    }
    Ok(out)
}

/// Full plaintext inference: the ground truth for secure runs.
pub fn infer_ref<R: Real>(net: &NetworkSpec<R>, input: &Tensor<R>) -> Result<Vec<R>, NnError> {
    if input.dims != net.input {
        return Err(NnError::DimMismatch(format!(
            "input dims {:?} do not match network {:?}",
            input.dims, net.input
        )));
    }
    net.layer_dims()?;
    let mut cur = input.clone();
    for layer in &net.layers {
        cur = match layer {
            LayerSpec::Conv(c) => conv2d_ref(&cur, c)?,
            LayerSpec::Fc(f) => Tensor::vector(fc_ref(&cur.data, f)?),
            LayerSpec::Activation(kind) => activation_ref(*kind, &cur),
            LayerSpec::MeanPool { region_h, region_w } => meanpool_ref(&cur, *region_h, *region_w)?,
        };
    }
    Ok(cur.data)
}
