//! Network manifests and tensor files.
//!
//! Tensor file format: 16-byte header (magic "CHTW", rank as u32 LE, dims
//! as four u16 LE, unused dims zero), raw little-endian f32 payload in
//! row-major order, CRC-32 footer over header plus payload.
//!
//! A manifest is a JSON document listing layers with dims and per-tensor
//! file references. `save_network` also writes `public.json`, the same
//! document with the weight references removed, which is what the client
//! side loads.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ActivationKind, ConvSpec, Dims, FcSpec, LayerSpec, NetworkSpec, NnError, PaddingMode};
use crate::crc32::crc32;
use crate::real::Real;

const MAGIC: &[u8; 4] = b"CHTW";

pub fn save_tensor<R: Real>(path: &Path, dims: &[usize], data: &[R]) -> Result<(), NnError> {
    assert!(!dims.is_empty() && dims.len() <= 4);
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut bytes = Vec::with_capacity(16 + data.len() * 4 + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for i in 0..4 {
        let d = dims.get(i).copied().unwrap_or(0);
        assert!(
            d <= u16::MAX as usize,
            "dim {d} exceeds tensor header width"
        );
        bytes.extend_from_slice(&(d as u16).to_le_bytes());
    }
    for v in data {
        bytes.extend_from_slice(&(v.to_f32().expect("tensor value fits f32")).to_le_bytes());
    }
    let crc = crc32(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_tensor<R: Real>(path: &Path) -> Result<(Vec<usize>, Vec<R>), NnError> {
    let disp = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| NnError::BadTensor {
        path: disp.clone(),
        reason: e.to_string(),
    })?;
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(NnError::BadTensor {
            path: disp,
            reason: "missing CHTW header".into(),
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let footer = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32(body) != footer {
        return Err(NnError::Checksum(disp));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rank == 0 || rank > 4 {
        return Err(NnError::BadTensor {
            path: disp,
            reason: format!("bad rank {rank}"),
        });
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(u16::from_le_bytes(bytes[8 + 2 * i..10 + 2 * i].try_into().unwrap()) as usize);
    }
    let count: usize = dims.iter().product();
    let payload = &body[16..];
    if payload.len() != count * 4 {
        return Err(NnError::BadTensor {
            path: disp,
            reason: format!(
                "payload holds {} values, dims need {count}",
                payload.len() / 4
            ),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| R::from_f32(f32::from_le_bytes(c.try_into().unwrap())).expect("f32 fits scalar"))
        .collect();
    Ok((dims, data))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerManifest {
    Conv {
        kernel: [usize; 2],
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: PaddingMode,
        has_bias: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        weights: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
    },
    Fc {
        inputs: usize,
        outputs: usize,
        has_bias: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        weights: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        bias: Option<String>,
    },
    Activation {
        kind: ActivationKind,
    },
    MeanPool {
        region: [usize; 2],
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkManifest {
    name: String,
    input: Dims,
    layers: Vec<LayerManifest>,
}

/// Write manifest.json, public.json, and one tensor file per weight/bias.
pub fn save_network<R: Real>(dir: &Path, net: &NetworkSpec<R>) -> Result<(), NnError> {
    net.layer_dims()?;
    fs::create_dir_all(dir)?;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (idx, layer) in net.layers.iter().enumerate() {
        layers.push(match layer {
            LayerSpec::Conv(c) => {
                let weights = if c.weights.is_empty() {
                    None
                } else {
                    let wname = format!("layer{idx}_w.chtw");
                    save_tensor(
                        &dir.join(&wname),
                        &[c.kernel_h, c.kernel_w, c.in_channels, c.out_channels],
                        &c.weights,
                    )?;
                    Some(wname)
                };
                let bias = match &c.bias {
                    Some(b) if !b.is_empty() => {
                        let bname = format!("layer{idx}_b.chtw");
                        save_tensor(&dir.join(&bname), &[b.len()], b)?;
                        Some(bname)
                    }
                    _ => None,
                };
                LayerManifest::Conv {
                    kernel: [c.kernel_h, c.kernel_w],
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    stride: c.stride,
                    padding: c.padding,
                    has_bias: c.bias.is_some(),
                    weights,
                    bias,
                }
            }
            LayerSpec::Fc(f) => {
                let weights = if f.weights.is_empty() {
                    None
                } else {
                    let wname = format!("layer{idx}_w.chtw");
                    save_tensor(&dir.join(&wname), &[f.outputs, f.inputs], &f.weights)?;
                    Some(wname)
                };
                let bias = match &f.bias {
                    Some(b) if !b.is_empty() => {
                        let bname = format!("layer{idx}_b.chtw");
                        save_tensor(&dir.join(&bname), &[b.len()], b)?;
                        Some(bname)
                    }
                    _ => None,
                };
                LayerManifest::Fc {
                    inputs: f.inputs,
                    outputs: f.outputs,
                    has_bias: f.bias.is_some(),
                    weights,
                    bias,
                }
            }
            LayerSpec::Activation(kind) => LayerManifest::Activation { kind: *kind },
            LayerSpec::MeanPool { region_h, region_w } => LayerManifest::MeanPool {
                region: [*region_h, *region_w],
            },
        });
    }
    let manifest = NetworkManifest {
        name: net.name.clone(),
        input: net.input,
        layers,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )?;
    // Public copy: drop the tensor references.
    let mut public = manifest;
    for l in &mut public.layers {
        match l {
            LayerManifest::Conv { weights, bias, .. } | LayerManifest::Fc { weights, bias, .. } => {
                *weights = None;
                *bias = None;
            }
            _ => {}
        }
    }
    fs::write(
        dir.join("public.json"),
        serde_json::to_vec_pretty(&public).expect("manifest serializes"),
    )?;
    Ok(())
}

fn parse_manifest(path: &Path) -> Result<(NetworkManifest, PathBuf), NnError> {
    let text = fs::read_to_string(path)?;
    let manifest: NetworkManifest =
        serde_json::from_str(&text).map_err(|e| NnError::BadManifest(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, base))
}

fn build_network<R: Real>(
    manifest: NetworkManifest,
    base: &Path,
    with_weights: bool,
) -> Result<NetworkSpec<R>, NnError> {
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (idx, lm) in manifest.layers.into_iter().enumerate() {
        layers.push(match lm {
            LayerManifest::Conv {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
                has_bias,
                weights,
                bias,
            } => {
                let count = kernel[0] * kernel[1] * in_channels * out_channels;
                let w = if with_weights {
                    let name = weights.ok_or_else(|| {
                        NnError::BadManifest(format!("layer {idx}: missing weights reference"))
                    })?;
                    let (dims, data) = load_tensor::<R>(&base.join(&name))?;
                    if dims != [kernel[0], kernel[1], in_channels, out_channels] {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: weight tensor dims {dims:?}"
                        )));
                    }
                    data
                } else {
                    let _ = count;
                    Vec::new()
                };
                let b = if !has_bias {
                    None
                } else if with_weights {
                    let name = bias.ok_or_else(|| {
                        NnError::BadManifest(format!("layer {idx}: missing bias reference"))
                    })?;
                    let (dims, data) = load_tensor::<R>(&base.join(&name))?;
                    if dims != [out_channels] {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: bias tensor dims {dims:?}"
                        )));
                    }
                    Some(data)
                } else {
                    Some(Vec::new())
                };
                LayerSpec::Conv(ConvSpec {
                    kernel_h: kernel[0],
                    kernel_w: kernel[1],
                    in_channels,
                    out_channels,
                    stride,
                    padding,
                    weights: w,
                    bias: b,
                })
            }
            LayerManifest::Fc {
                inputs,
                outputs,
                has_bias,
                weights,
                bias,
            } => {
                let w = if with_weights {
                    let name = weights.ok_or_else(|| {
                        NnError::BadManifest(format!("layer {idx}: missing weights reference"))
                    })?;
                    let (dims, data) = load_tensor::<R>(&base.join(&name))?;
                    if dims != [outputs, inputs] {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: weight tensor dims {dims:?}"
                        )));
                    }
                    data
                } else {
                    Vec::new()
                };
                let b = if !has_bias {
                    None
                } else if with_weights {
                    let name = bias.ok_or_else(|| {
                        NnError::BadManifest(format!("layer {idx}: missing bias reference"))
                    })?;
                    let (dims, data) = load_tensor::<R>(&base.join(&name))?;
                    if dims != [outputs] {
                        return Err(NnError::DimMismatch(format!(
                            "layer {idx}: bias tensor dims {dims:?}"
                        )));
                    }
                    Some(data)
                } else {
                    Some(Vec::new())
                };
                LayerSpec::Fc(FcSpec {
                    inputs,
                    outputs,
                    weights: w,
                    bias: b,
                })
            }
            LayerManifest::Activation { kind } => LayerSpec::Activation(kind),
            LayerManifest::MeanPool { region } => LayerSpec::MeanPool {
                region_h: region[0],
                region_w: region[1],
            },
        });
    }
    let net = NetworkSpec {
        name: manifest.name,
        input: manifest.input,
        layers,
    };
    net.layer_dims()?;
    Ok(net)
}

/// Load a full network (weights included) from a manifest path.
pub fn load_network<R: Real>(manifest_path: &Path) -> Result<NetworkSpec<R>, NnError> {
    let (manifest, base) = parse_manifest(manifest_path)?;
    build_network(manifest, &base, true)
}

/// Load the public architecture only; weight vectors come back zeroed.
pub fn load_architecture<R: Real>(manifest_path: &Path) -> Result<NetworkSpec<R>, NnError> {
    let (manifest, base) = parse_manifest(manifest_path)?;
    build_network(manifest, &base, false)
}
