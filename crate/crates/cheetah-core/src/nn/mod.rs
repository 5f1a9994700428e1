//! Network architecture, weights, and the plaintext inference oracle that
//! defines ground truth for every secure-path comparison.

mod gen;
mod io;
mod oracle;

pub use gen::{gen_random_network, NetTemplate, WEIGHT_GRID_BITS};
pub use io::{load_architecture, load_network, load_tensor, save_network, save_tensor};
pub use oracle::{activation_ref, conv2d_ref, fc_ref, infer_ref, meanpool_ref};
pub use oracle::{sigmoid as sigmoid_ref, softmax as softmax_ref};

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("malformed manifest: {0}")]
    BadManifest(String),
    #[error("tensor file {path}: {reason}")]
    BadTensor { path: String, reason: String },
    #[error("checksum failure in {0}")]
    Checksum(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Spatial dimensions of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Dims {
    pub fn count(&self) -> usize {
        self.width * self.height * self.channels
    }
}

/// Row-major tensor: `data[(row*width + col)*channels + ch]`.
/// Vectors are width-only tensors; this indexing is also the frozen
/// flatten order between convolutional and dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    pub dims: Dims,
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn new(dims: Dims, data: Vec<R>) -> Self {
        assert_eq!(
            dims.count(),
            data.len(),
            "dims {:?} do not match data length {}",
            dims,
            data.len()
        );
        assert!(
            data.iter().all(|v| v.is_finite()),
            "tensor values must be finite"
        );
        Tensor { dims, data }
    }

    pub fn zeros(dims: Dims) -> Self {
        Tensor {
            dims,
            data: vec![R::zero(); dims.count()],
        }
    }

    pub fn vector(data: Vec<R>) -> Self {
        Tensor::new(
            Dims {
                width: data.len(),
                height: 1,
                channels: 1,
            },
            data,
        )
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> R {
        self.data[(row * self.dims.width + col) * self.dims.channels + ch]
    }

    /// Signed-index access with zero padding outside the map.
    #[inline]
    pub fn at_padded(&self, row: isize, col: isize, ch: usize) -> R {
        if row < 0 || col < 0 || row >= self.dims.height as isize || col >= self.dims.width as isize
        {
            R::zero()
        } else {
            self.at(row as usize, col as usize, ch)
        }
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: R) {
        self.data[(row * self.dims.width + col) * self.dims.channels + ch] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

/// Convolution hyperparameters plus (server-private) weights.
/// Weight order: `weights[((u*kernel_w + v)*in_channels + j)*out_channels + t]`
/// for tap row u, tap col v, input channel j, kernel t.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec<R> {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: PaddingMode,
    pub weights: Vec<R>,
    pub bias: Option<Vec<R>>,
}

impl<R: Real> ConvSpec<R> {
    pub fn weight(&self, u: usize, v: usize, j: usize, t: usize) -> R {
        self.weights[((u * self.kernel_w + v) * self.in_channels + j) * self.out_channels + t]
    }

    /// Output spatial dims and the top/left padding offsets.
    pub fn geometry(&self, input: Dims) -> ConvGeometry {
        match self.padding {
            PaddingMode::Same => {
                let out_h = input.height.div_ceil(self.stride);
                let out_w = input.width.div_ceil(self.stride);
                let pad_h =
                    ((out_h - 1) * self.stride + self.kernel_h).saturating_sub(input.height);
                let pad_w = ((out_w - 1) * self.stride + self.kernel_w).saturating_sub(input.width);
                ConvGeometry {
                    out_h,
                    out_w,
                    pad_top: pad_h / 2,
                    pad_left: pad_w / 2,
                }
            }
            PaddingMode::Valid => ConvGeometry {
                out_h: (input.height - self.kernel_h) / self.stride + 1,
                out_w: (input.width - self.kernel_w) / self.stride + 1,
                pad_top: 0,
                pad_left: 0,
            },
        }
    }

    pub fn output_dims(&self, input: Dims) -> Dims {
        let g = self.geometry(input);
        Dims {
            width: g.out_w,
            height: g.out_h,
            channels: self.out_channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

/// Dense layer: weights row-major, `weights[i*inputs + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcSpec<R> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<R>,
    pub bias: Option<Vec<R>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec<R> {
    Conv(ConvSpec<R>),
    Fc(FcSpec<R>),
    Activation(ActivationKind),
    MeanPool { region_h: usize, region_w: usize },
}

/// Ordered layers plus input dims. The architecture (everything except
/// weight and bias values) is public between the two parties.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec<R> {
    pub name: String,
    pub input: Dims,
    pub layers: Vec<LayerSpec<R>>,
}

impl<R: Real> NetworkSpec<R> {
    /// Type-check the layer chain; returns the dims flowing out of each layer.
    pub fn layer_dims(&self) -> Result<Vec<Dims>, NnError> {
        if self.layers.is_empty() {
            return Err(NnError::DimMismatch("network has no layers".into()));
        }
        let mut dims = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv(c) => {
                    if c.in_channels != dims.channels {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: conv expects {} channels, input has {}",
                            c.in_channels, dims.channels
                        )));
                    }
                    // Empty weights mark an architecture-only (client-side) spec.
                    if !c.weights.is_empty()
                        && c.weights.len()
                            != c.kernel_h * c.kernel_w * c.in_channels * c.out_channels
                    {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: conv weight count"
                        )));
                    }
                    if let Some(b) = &c.bias {
                        if !b.is_empty() && b.len() != c.out_channels {
                            return Err(NnError::DimMismatch(format!(
                                "layer {idx}: conv bias count"
                            )));
                        }
                    }
                    if c.stride == 0 || c.stride > 2 {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: stride must be 1 or 2"
                        )));
                    }
                    dims = c.output_dims(dims);
                }
                LayerSpec::Fc(f) => {
                    if f.inputs != dims.count() {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: fc expects {} inputs, got {}",
                            f.inputs,
                            dims.count()
                        )));
                    }
                    if !f.weights.is_empty() && f.weights.len() != f.inputs * f.outputs {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: fc weight count"
                        )));
                    }
                    if let Some(b) = &f.bias {
                        if !b.is_empty() && b.len() != f.outputs {
                            return Err(NnError::DimMismatch(format!(
                                "layer {idx}: fc bias count"
                            )));
                        }
                    }
                    dims = Dims {
                        width: f.outputs,
                        height: 1,
                        channels: 1,
                    };
                }
                LayerSpec::Activation(kind) => {
                    if *kind == ActivationKind::Softmax && idx + 1 != self.layers.len() {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: softmax must be terminal"
                        )));
                    }
                }
                LayerSpec::MeanPool { region_h, region_w } => {
                    if dims.height % region_h != 0 || dims.width % region_w != 0 {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: pool region {region_h}x{region_w} does not tile {}x{}",
                            dims.height, dims.width
                        )));
                    }
                    dims = Dims {
                        width: dims.width / region_w,
                        height: dims.height / region_h,
                        channels: dims.channels,
                    };
                }
            }
            out.push(dims);
        }
        Ok(out)
    }

    pub fn output_dims(&self) -> Result<Dims, NnError> {
        Ok(*self.layer_dims()?.last().unwrap())
    }

    /// Copy with all weight/bias values dropped: what the client may hold.
    pub fn strip_weights(&self) -> NetworkSpec<R> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(c) => LayerSpec::Conv(ConvSpec {
                    weights: Vec::new(),
                    bias: c.bias.as_ref().map(|_| Vec::new()),
                    ..c.clone()
                }),
                LayerSpec::Fc(f) => LayerSpec::Fc(FcSpec {
                    weights: Vec::new(),
                    bias: f.bias.as_ref().map(|_| Vec::new()),
                    inputs: f.inputs,
                    outputs: f.outputs,
                }),
                other => other.clone(),
            })
            .collect();
        NetworkSpec {
            name: self.name.clone(),
            input: self.input,
            layers,
        }
    }

    /// 8-byte digest over the public architecture (never the weights), used
    /// in the HELLO exchange.
    pub fn architecture_digest(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.input.width as u64);
        eat(self.input.height as u64);
        eat(self.input.channels as u64);
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv(c) => {
                    eat(1);
                    for v in [
                        c.kernel_h,
                        c.kernel_w,
                        c.in_channels,
                        c.out_channels,
                        c.stride,
                    ] {
                        eat(v as u64);
                    }
                    eat(matches!(c.padding, PaddingMode::Same) as u64);
                    eat(c.bias.is_some() as u64);
                }
                LayerSpec::Fc(f) => {
                    eat(2);
                    eat(f.inputs as u64);
                    eat(f.outputs as u64);
                    eat(f.bias.is_some() as u64);
                }
                LayerSpec::Activation(k) => {
                    eat(3);
                    eat(*k as u64);
                }
                LayerSpec::MeanPool { region_h, region_w } => {
                    eat(4);
                    eat(*region_h as u64);
                    eat(*region_w as u64);
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests;
