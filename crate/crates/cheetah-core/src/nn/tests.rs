use super::*;
use proptest::prelude::*;

fn conv_layer(kernel: usize, weights: Vec<f64>) -> ConvSpec<f64> {
    ConvSpec {
        kernel_h: kernel,
        kernel_w: kernel,
        in_channels: 1,
        out_channels: 1,
        stride: 1,
        padding: PaddingMode::Same,
        weights,
        bias: None,
    }
}

/// Brute-force receptive-field sum, independent of conv2d_ref's loop order.
fn conv_brute(x: &Tensor<f64>, c: &ConvSpec<f64>) -> Tensor<f64> {
    let g = c.geometry(x.dims);
    let mut out = Tensor::zeros(Dims {
        width: g.out_w,
        height: g.out_h,
        channels: c.out_channels,
    });
    for t in 0..c.out_channels {
        for m in 0..g.out_h {
            for n in 0..g.out_w {
                let mut acc = 0.0;
                for j in 0..c.in_channels {
                    for u in 0..c.kernel_h {
                        for v in 0..c.kernel_w {
                            let r = (m * c.stride + u) as isize - g.pad_top as isize;
                            let cc = (n * c.stride + v) as isize - g.pad_left as isize;
                            acc += c.weight(u, v, j, t) * x.at_padded(r, cc, j);
                        }
                    }
                }
                if let Some(b) = &c.bias {
                    acc += b[t];
                }
                out.set(m, n, t, acc);
            }
        }
    }
    out
}

#[test]
fn conv_allones_same_padding() {
    // 2x2 input, 3x3 all-ones kernel, same padding: the corner output sums
    // the full receptive field.
    let x = Tensor::new(
        Dims {
            width: 2,
            height: 2,
            channels: 1,
        },
        vec![1.0, 2.0, 3.0, 4.0],
    );
    let out = conv2d_ref(&x, &conv_layer(3, vec![1.0; 9])).unwrap();
    assert_eq!(out.at(0, 0, 0), 10.0);
    assert_eq!(
        out.dims,
        Dims {
            width: 2,
            height: 2,
            channels: 1
        }
    );
}

#[test]
fn conv_worked_corner_taps() {
    // With a 2x2 input and 3x3 kernel under same padding, output (0,0) must
    // touch exactly kernel taps (1,1),(1,2),(2,1),(2,2) (0-indexed).
    let x = Tensor::new(
        Dims {
            width: 2,
            height: 2,
            channels: 1,
        },
        vec![1.0, 2.0, 3.0, 4.0],
    );
    let mut w = vec![0.0; 9];
    w[1 * 3 + 1] = 10.0; // k(2,2) in 1-indexed terms
    w[1 * 3 + 2] = 20.0; // k(2,3)
    w[2 * 3 + 1] = 30.0; // k(3,2)
    w[2 * 3 + 2] = 40.0; // k(3,3)
    let out = conv2d_ref(&x, &conv_layer(3, w)).unwrap();
    assert_eq!(
        out.at(0, 0, 0),
        10.0 * 1.0 + 20.0 * 2.0 + 30.0 * 3.0 + 40.0 * 4.0
    );
}

#[test]
fn conv_zero_kernel_and_scaling() {
    let x = Tensor::new(
        Dims {
            width: 3,
            height: 2,
            channels: 1,
        },
        vec![1.0, -2.0, 0.5, 4.0, 0.0, 3.0],
    );
    let zeros = conv2d_ref(&x, &conv_layer(3, vec![0.0; 9])).unwrap();
    assert!(zeros.data.iter().all(|&v| v == 0.0));
    let scale = conv2d_ref(&x, &conv_layer(1, vec![2.0])).unwrap();
    assert_eq!(
        scale.data,
        x.data.iter().map(|v| 2.0 * v).collect::<Vec<_>>()
    );
}

#[test]
fn conv_matches_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
    for (w, h) in [(2usize, 2usize), (5, 4), (8, 8)] {
        for k in [1usize, 3, 5] {
            for (ci, co) in [(1usize, 1usize), (2, 3), (4, 2)] {
                for stride in [1usize, 2] {
                    for padding in [PaddingMode::Same, PaddingMode::Valid] {
                        if padding == PaddingMode::Valid && (w < k || h < k) {
                            continue;
                        }
                        let x = Tensor::new(
                            Dims {
                                width: w,
                                height: h,
                                channels: ci,
                            },
                            (0..w * h * ci).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                        );
                        let c = ConvSpec {
                            kernel_h: k,
                            kernel_w: k,
                            in_channels: ci,
                            out_channels: co,
                            stride,
                            padding,
                            weights: (0..k * k * ci * co)
                                .map(|_| rng.gen_range(-1.0..1.0))
                                .collect(),
                            bias: Some((0..co).map(|_| rng.gen_range(-0.5..0.5)).collect()),
                        };
                        let got = conv2d_ref(&x, &c).unwrap();
                        let want = conv_brute(&x, &c);
                        assert_eq!(got.dims, want.dims);
                        for (a, b) in got.data.iter().zip(&want.data) {
                            assert!((a - b).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn fc_identity_zero_random() {
    let x = vec![1.5, -2.0, 3.0];
    let ident = FcSpec {
        inputs: 3,
        outputs: 3,
        weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        bias: None,
    };
    assert_eq!(fc_ref(&x, &ident).unwrap(), x);
    let zero = FcSpec {
        inputs: 3,
        outputs: 2,
        weights: vec![0.0; 6],
        bias: None,
    };
    assert_eq!(fc_ref(&x, &zero).unwrap(), vec![0.0, 0.0]);

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
    let layer = FcSpec {
        inputs: 16,
        outputs: 8,
        weights: (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        bias: None,
    };
    let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let got = fc_ref(&v, &layer).unwrap();
    for (i, g) in got.iter().enumerate() {
        // Independent dot-product oracle.
        let want: f64 = v
            .iter()
            .enumerate()
            .map(|(j, &x)| layer.weights[i * 16 + j] * x)
            .sum();
        assert!((g - want).abs() < 1e-12);
    }
}

#[test]
fn activations() {
    let x = Tensor::vector(vec![-1.0, 2.0, 0.0]);
    let relu = activation_ref(ActivationKind::Relu, &x);
    assert_eq!(relu.data, vec![0.0, 2.0, 0.0]);
    let sig = activation_ref(ActivationKind::Sigmoid, &Tensor::vector(vec![0.0]));
    assert_eq!(sig.data, vec![0.5]);
    let sm = activation_ref(ActivationKind::Softmax, &Tensor::vector(vec![3.7f64, 3.7]));
    assert!((sm.data[0] - 0.5).abs() < 1e-12 && (sm.data[1] - 0.5).abs() < 1e-12);
    // tanh through the sigmoid identity stays close to the library tanh.
    let t = activation_ref(ActivationKind::Tanh, &Tensor::vector(vec![0.7, -1.3]));
    assert!((t.data[0] - 0.7f64.tanh()).abs() < 1e-12);
    assert!((t.data[1] - (-1.3f64).tanh()).abs() < 1e-12);
}

#[test]
fn softmax_properties() {
    let logits = vec![1.0, -2.0, 0.25, 4.0, -1.0];
    let s = oracle::softmax(&logits);
    let total: f64 = s.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let shifted: Vec<f64> = logits.iter().map(|v| v + 123.5).collect();
    let s2 = oracle::softmax(&shifted);
    for (a, b) in s.iter().zip(&s2) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn meanpool_examples() {
    let x = Tensor::new(
        Dims {
            width: 2,
            height: 2,
            channels: 1,
        },
        vec![1.0, 3.0, 5.0, 7.0],
    );
    let p = meanpool_ref(&x, 2, 2).unwrap();
    assert_eq!(p.data, vec![4.0]);
    let c = Tensor::new(
        Dims {
            width: 4,
            height: 4,
            channels: 1,
        },
        vec![2.5; 16],
    );
    assert!(meanpool_ref(&c, 2, 2)
        .unwrap()
        .data
        .iter()
        .all(|&v| v == 2.5));
    let ident = meanpool_ref(&x, 1, 1).unwrap();
    assert_eq!(ident.data, x.data);
    // Affine commutation: pool(a*x + b) = a*pool(x) + b.
    let ax = Tensor::new(x.dims, x.data.iter().map(|v| 3.0 * v - 1.0).collect());
    let pax = meanpool_ref(&ax, 2, 2).unwrap();
    assert_eq!(pax.data[0], 3.0 * p.data[0] - 1.0);
}

#[test]
fn infer_composes_layers() {
    // A single-activation network equals activation_ref.
    let net = NetworkSpec::<f64> {
        name: "relu-only".into(),
        input: Dims {
            width: 3,
            height: 1,
            channels: 1,
        },
        layers: vec![LayerSpec::Activation(ActivationKind::Relu)],
    };
    let x = Tensor::new(net.input, vec![-1.0, 0.5, 2.0]);
    assert_eq!(infer_ref(&net, &x).unwrap(), vec![0.0, 0.5, 2.0]);

    // Manual layer-by-layer composition agrees on a netA-shaped fixture.
    let net = gen_random_network::<f64>(NetTemplate::NetA, 11);
    let x = Tensor::new(
        net.input,
        (0..net.input.count())
            .map(|i| ((i % 17) as f64 - 8.0) / 8.0)
            .collect(),
    );
    let want = {
        let mut cur = x.clone();
        for layer in &net.layers {
            cur = match layer {
                LayerSpec::Conv(c) => conv2d_ref(&cur, c).unwrap(),
                LayerSpec::Fc(f) => Tensor::vector(fc_ref(&cur.data, f).unwrap()),
                LayerSpec::Activation(k) => activation_ref(*k, &cur),
                LayerSpec::MeanPool { region_h, region_w } => {
                    meanpool_ref(&cur, *region_h, *region_w).unwrap()
                }
            };
        }
        cur.data
    };
    assert_eq!(infer_ref(&net, &x).unwrap(), want);

    // Wrong input dims rejected.
    let bad = Tensor::new(
        Dims {
            width: 2,
            height: 2,
            channels: 1,
        },
        vec![0.0; 4],
    );
    assert!(infer_ref(&net, &bad).is_err());
}

#[test]
fn save_load_roundtrip() {
    let dir = std::env::temp_dir().join(format!("cheetah-nn-{}", std::process::id()));
    let net = gen_random_network::<f64>(NetTemplate::NetB, 3);
    save_network(&dir, &net).unwrap();
    let back: NetworkSpec<f64> = load_network(&dir.join("manifest.json")).unwrap();
    assert_eq!(back, net);
    assert_eq!(
        back.input,
        Dims {
            width: 28,
            height: 28,
            channels: 1
        }
    );
    assert_eq!(back.architecture_digest(), net.architecture_digest());

    // The public manifest loads as architecture-only and keeps the digest.
    let arch: NetworkSpec<f64> = load_architecture(&dir.join("public.json")).unwrap();
    assert_eq!(arch.architecture_digest(), net.architecture_digest());
    assert!(matches!(&arch.layers[0], LayerSpec::Conv(c) if c.weights.is_empty()));

    // Truncated tensor file is rejected.
    let victim = dir.join("layer0_w.chtw");
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 6]).unwrap();
    assert!(load_network::<f64>(&dir.join("manifest.json")).is_err());
    // Flipped payload bit fails the checksum.
    let mut flipped = bytes.clone();
    flipped[20] ^= 1;
    std::fs::write(&victim, &flipped).unwrap();
    assert!(matches!(
        load_network::<f64>(&dir.join("manifest.json")),
        Err(NnError::Checksum(_))
    ));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_manifest_rejected() {
    let dir = std::env::temp_dir().join(format!("cheetah-manifest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("manifest.json");
    std::fs::write(&path, b"{ not json").unwrap();
    assert!(matches!(
        load_network::<f64>(&path),
        Err(NnError::BadManifest(_))
    ));
    // Well-formed JSON with an inconsistent layer chain is a dim error.
    std::fs::write(
        &path,
        br#"{"name":"x","input":{"width":4,"height":1,"channels":1},
             "layers":[{"type":"fc","inputs":7,"outputs":2,"has_bias":false}]}"#,
    )
    .unwrap();
    assert!(matches!(
        load_architecture::<f64>(&path),
        Err(NnError::DimMismatch(_))
    ));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fixtures_deterministic_and_bounded() {
    let a = gen_random_network::<f64>(NetTemplate::NetA, 7);
    let b = gen_random_network::<f64>(NetTemplate::NetA, 7);
    assert_eq!(a, b);
    let c = gen_random_network::<f64>(NetTemplate::NetA, 8);
    assert_ne!(a, c);
    for layer in &a.layers {
        if let LayerSpec::Conv(cv) = layer {
            assert!(cv.weights.iter().all(|w| w.abs() <= 1.0));
            assert!(cv
                .weights
                .iter()
                .all(|w| crate::fixedpoint::on_grid(*w, WEIGHT_GRID_BITS)));
        }
        if let LayerSpec::Fc(f) = layer {
            assert!(f.weights.iter().all(|w| w.abs() <= 1.0));
        }
    }
    // Layer shape checks for the named templates.
    let kinds: Vec<&str> = a
        .layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::Fc(_) => "fc",
            LayerSpec::Activation(_) => "act",
            LayerSpec::MeanPool { .. } => "pool",
        })
        .collect();
    assert_eq!(kinds, ["conv", "act", "fc", "act", "fc"]);
    let nb = gen_random_network::<f64>(NetTemplate::NetB, 1);
    assert!(nb
        .layers
        .iter()
        .any(|l| matches!(l, LayerSpec::MeanPool { .. })));
    let tiny = gen_random_network::<f64>(NetTemplate::Tiny, 1);
    assert_eq!(tiny.layers.len(), 2);
    // Architecture-only templates type-check without weights.
    gen_random_network::<f64>(NetTemplate::Alexnet, 1)
        .layer_dims()
        .unwrap();
    gen_random_network::<f64>(NetTemplate::Vgg16, 1)
        .layer_dims()
        .unwrap();
}

#[test]
fn f32_oracle_matches_f64_for_grid_nets() {
    let net64 = gen_random_network::<f64>(NetTemplate::Tiny, 9);
    let net32 = gen_random_network::<f32>(NetTemplate::Tiny, 9);
    let x64 = Tensor::new(
        net64.input,
        (0..16).map(|i| (i as f64 - 8.0) / 8.0).collect(),
    );
    let x32 = Tensor::new(net32.input, x64.data.iter().map(|&v| v as f32).collect());
    let o64 = infer_ref(&net64, &x64).unwrap();
    let o32 = infer_ref(&net32, &x32).unwrap();
    for (a, b) in o64.iter().zip(&o32) {
        assert!((a - *b as f64).abs() < 1e-5);
    }
}

proptest! {
    // Pooling commutes with scalar affine maps on random tensors.
    #[test]
    fn pool_affine_commutes(vals in proptest::collection::vec(-4.0f64..4.0, 16), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x = Tensor::new(Dims { width: 4, height: 4, channels: 1 }, vals);
        let ax = Tensor::new(x.dims, x.data.iter().map(|v| a * v + b).collect());
        let p1 = meanpool_ref(&ax, 2, 2).unwrap();
        let p0 = meanpool_ref(&x, 2, 2).unwrap();
        for (l, r) in p1.data.iter().zip(&p0.data) {
            prop_assert!((l - (a * r + b)).abs() < 1e-9);
        }
    }
}
