//! Client side: owns the input, decrypts blinded sums, evaluates the
//! nonlinear steps through the server-encrypted indicator material, and
//! re-shares activations for the next layer.

use std::sync::Arc;

use rand::Rng;

use super::*;
use crate::fixedpoint::{decode_vector, encode_vector_at_scale, encode_vector_counted};
use crate::packing::{compact_chunks, relayout_share};
use crate::phe::{Ciphertext, Owner, PackedPlaintext, PheEngine, PheSession, SecretKey};
use crate::transport::{errcode, Channel, IndicatorKind, Message};

/// Offline material the client holds per layer.
#[derive(Debug, Default)]
enum ClientMaterial {
    #[default]
    None,
    Relu {
        id1: Vec<Ciphertext>,
        id2: Vec<Ciphertext>,
    },
    Sigmoid {
        exp_r1: Vec<Ciphertext>,
        r2: Vec<Scalar>,
    },
    Softmax {
        vvec: Vec<Ciphertext>,
    },
}

pub struct ClientSession {
    pub phe: PheSession,
    key: SecretKey,
    pub name: String,
    arch: NetworkSpec<Scalar>,
    pub plan: Vec<LayerPlan>,
    cfg: ProtocolConfig,
    fp: FpParams,
    material: Vec<ClientMaterial>,
    /// Per-layer wall-clock, measured around the online exchanges.
    pub layer_wall_ms: Vec<f64>,
    /// Per-layer client op-counter deltas from the last driven run.
    pub layer_counters: Vec<crate::phe::OpCounters>,
}

impl ClientSession {
    pub fn new(
        engine: Arc<PheEngine>,
        key: SecretKey,
        arch: NetworkSpec<Scalar>,
        cfg: ProtocolConfig,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        assert_eq!(
            key.owner,
            Owner::Client,
            "client session needs the client key"
        );
        let fp = engine.params.fixedpoint();
        fp.check_batching(engine.params.slots)?;
        let plan = plan_network(&arch, engine.params.slots)?;
        let layers = plan.len();
        Ok(ClientSession {
            phe: PheSession::new(engine, seed),
            key,
            name: arch.name.clone(),
            arch,
            plan,
            cfg,
            fp,
            material: (0..layers).map(|_| ClientMaterial::None).collect(),
            layer_wall_ms: Vec::new(),
            layer_counters: Vec::new(),
        })
    }

    fn slots(&self) -> usize {
        self.phe.params().slots
    }

    fn enc(&self, values: &[Scalar], scale: u32) -> PackedPlaintext {
        PackedPlaintext::new(
            encode_vector_at_scale(values, scale, &self.fp),
            scale,
            self.phe.params(),
        )
    }

    /// Expand, encode (with saturation counting), and encrypt the private
    /// input for the first layer.
    pub fn upload_input(
        &mut self,
        input: &Tensor<Scalar>,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let vectors = match &self.plan[0].linear {
            LinearStep::Conv { layout, .. } => layout.expand_input(input),
            LinearStep::Fc { .. } => {
                let LinearStep::Fc { layout, .. } = &self.plan[0].linear else {
                    unreachable!()
                };
                vec![layout.expand_input(&input.data)]
            }
        };
        Ok(vectors
            .iter()
            .map(|v| {
                let pt = PackedPlaintext::new(
                    encode_vector_counted(v, &self.fp, &self.phe.saturation),
                    self.fp.scale_bits,
                    self.phe.params(),
                );
                self.phe.encrypt(&pt, &self.key)
            })
            .collect())
    }

    /// Decrypt the blinded linear output and finish the convolution (or
    /// dot product) by exact block sums, in tensor order.
    pub fn decrypt_and_sum(
        &mut self,
        l: usize,
        cts: &[Ciphertext],
    ) -> Result<Vec<Scalar>, ProtocolError> {
        let plan = &self.plan[l];
        let scale2f = 2 * self.fp.scale_bits;
        let mut decoded = Vec::with_capacity(cts.len());
        for ct in cts {
            let pt = self.phe.decrypt(ct, &self.key)?;
            if pt.scale_bits != scale2f {
                return Err(PheError::ScaleMismatch {
                    a: pt.scale_bits,
                    b: scale2f,
                }
                .into());
            }
            decoded.push(decode_vector::<Scalar>(&pt.slots, &self.fp, scale2f)?);
        }
        let mut y = vec![0.0; plan.linear_outputs()];
        match &plan.linear {
            LinearStep::Conv { layout, .. } => {
                let segs = layout.output_cts_per_kernel();
                for t in 0..layout.out_channels {
                    let sums = layout.block_sum(&decoded[t * segs..(t + 1) * segs]);
                    for (i, s) in sums.into_iter().enumerate() {
                        y[i * layout.out_channels + t] = s;
                    }
                }
            }
            LinearStep::Fc { layout, .. } => {
                y = layout.block_sum(&decoded);
            }
        }
        Ok(y)
    }

    /// Recover the server-encrypted true ReLU from the blinded sums via the
    /// sign-indicator pair: ID1*y + ID2*relu(y).
    pub fn relu_eval(&mut self, l: usize, y: &[Scalar]) -> Result<Vec<Ciphertext>, ProtocolError> {
        let ClientMaterial::Relu { id1, id2 } = &self.material[l] else {
            return Err(ProtocolError::Unsupported(format!(
                "layer {l}: indicator material missing"
            )));
        };
        let (id1, id2) = (id1.clone(), id2.clone());
        let scale2f = 2 * self.fp.scale_bits;
        let y_chunks = compact_chunks(y, self.slots());
        let relu_y: Vec<Scalar> = y.iter().map(|&v| v.max(0.0)).collect();
        let r_chunks = compact_chunks(&relu_y, self.slots());
        let mut out = Vec::with_capacity(y_chunks.len());
        for ((yc, rc), (i1, i2)) in y_chunks.iter().zip(&r_chunks).zip(id1.iter().zip(&id2)) {
            let a = self.phe.mul_plain(i1, &self.enc(yc, scale2f))?;
            let b = self.phe.mul_plain(i2, &self.enc(rc, scale2f))?;
            out.push(self.phe.add_ct(&a, &b)?);
        }
        Ok(out)
    }

    /// Draw the client share s1 and build both transmissions: the
    /// server-keyed `[activation - s1]_S` and the client-keyed
    /// re-laid-out `[s1]_C` for the next layer.
    pub fn make_shares(
        &mut self,
        l: usize,
        act_cts: &[Ciphertext],
    ) -> Result<(Vec<Ciphertext>, Vec<Ciphertext>, Vec<Scalar>), ProtocolError> {
        let plan = self.plan[l].clone();
        let outputs = plan.linear_outputs();
        let s1 = self.draw_share(outputs, plan.pool);
        let neg_chunks = compact_chunks(&s1.iter().map(|v| -v).collect::<Vec<_>>(), self.slots());
        let mut share_cts = Vec::with_capacity(act_cts.len());
        for (ct, chunk) in act_cts.iter().zip(&neg_chunks) {
            share_cts.push(self.phe.add_plain(ct, &self.enc(chunk, ct.scale_bits))?);
        }
        let uploads = self.upload_share(l, &s1, plan.pool, plan.linear_out_dims)?;
        Ok((share_cts, uploads, s1))
    }

    /// Shares land on the grid; when pooling follows, on the coarser grid
    /// that keeps the pooled share exactly representable.
    fn draw_share(&mut self, count: usize, pool: Option<(usize, usize)>) -> Vec<Scalar> {
        let step = self.fp.grid_step::<Scalar>();
        let area = pool.map_or(1, |(h, w)| h * w) as Scalar;
        let coarse = step * area;
        let units = (self.cfg.share_bound / coarse) as i64;
        (0..count)
            .map(|_| {
                if self.cfg.degenerate {
                    0.0
                } else {
                    self.phe.rng().gen_range(-units..=units) as Scalar * coarse
                }
            })
            .collect()
    }

    /// Pool + re-lay-out + encrypt a client-held share for the next layer.
    fn upload_share(
        &mut self,
        l: usize,
        share: &[Scalar],
        pool: Option<(usize, usize)>,
        dims: Dims,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let pooled = match pool {
            Some(region) => pool_share(share, dims, region),
            None => share.to_vec(),
        };
        let next = next_layout(&self.plan, l, self.slots());
        Ok(relayout_share(&pooled, &next)
            .iter()
            .map(|v| {
                let pt = self.enc(v, self.fp.scale_bits);
                self.phe.encrypt(&pt, &self.key)
            })
            .collect())
    }

    #[cfg(test)]
    pub(super) fn draw_share_for_test(
        &mut self,
        count: usize,
        pool: Option<(usize, usize)>,
    ) -> Vec<Scalar> {
        self.draw_share(count, pool)
    }

    /// Sigmoid step: y = pre-activation minus r1; send r2*(e^{r1} + e^{-y})
    /// under the server's key, with the small-magnitude part carried at 2f
    /// so the denominator precision holds.
    pub fn sigmoid_eval(
        &mut self,
        l: usize,
        y: &[Scalar],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let ClientMaterial::Sigmoid { exp_r1, r2, .. } = &self.material[l] else {
            return Err(ProtocolError::Unsupported(format!(
                "layer {l}: sigmoid material missing"
            )));
        };
        let (exp_r1, r2) = (exp_r1.clone(), r2.clone());
        let scale2f = 2 * self.fp.scale_bits;
        let w: Vec<Scalar> = y
            .iter()
            .map(|&v| (-v).exp().min(self.cfg.sigmoid_exp_cap))
            .collect();
        let r2w: Vec<Scalar> = r2.iter().zip(&w).map(|(a, b)| a * b).collect();
        let r2_chunks = compact_chunks(&r2, self.slots());
        let r2w_chunks = compact_chunks(&r2w, self.slots());
        let mut out = Vec::with_capacity(exp_r1.len());
        for ((ct, r2c), r2wc) in exp_r1.iter().zip(&r2_chunks).zip(&r2w_chunks) {
            let prod = self.phe.mul_plain(ct, &self.enc(r2c, self.fp.scale_bits))?;
            out.push(self.phe.add_plain(&prod, &self.enc(r2wc, scale2f))?);
        }
        Ok(out)
    }

    /// Softmax step: shift by the max for range control, blind the scale
    /// with a random grid factor r, and send both the blinded denominator
    /// terms (server key) and [e^y * r]_C (own key).
    pub fn softmax_eval(
        &mut self,
        l: usize,
        y: &[Scalar],
    ) -> Result<(Vec<Ciphertext>, Vec<Ciphertext>), ProtocolError> {
        let ClientMaterial::Softmax { vvec } = &self.material[l] else {
            return Err(ProtocolError::Unsupported(format!(
                "layer {l}: softmax material missing"
            )));
        };
        let vvec = vvec.clone();
        let scale2f = 2 * self.fp.scale_bits;
        let step = self.fp.grid_step::<Scalar>();
        let shift = y.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
        let r = if self.cfg.degenerate {
            8.0
        } else {
            self.phe
                .rng()
                .gen_range((8.0 / step) as i64..=(16.0 / step) as i64) as Scalar
                * step
        };
        let w: Vec<Scalar> = y.iter().map(|&v| (v - shift).exp() * r).collect();
        // Zero-sum disturbance per chunk, on the grid.
        let units = 1i64 << (self.fp.scale_bits + self.cfg.mask_extra_bits);
        let w_chunks = compact_chunks(&w, self.slots());
        let mut partials = Vec::with_capacity(w_chunks.len());
        let mut used = 0usize;
        for (ct, wc) in vvec.iter().zip(&w_chunks) {
            let here = (y.len() - used).min(self.slots());
            let mut bprime = vec![0.0; self.slots()];
            if here > 1 && !self.cfg.degenerate {
                let mut sum = 0i64;
                for slot in bprime.iter_mut().take(here - 1) {
                    let d = self.phe.rng().gen_range(-units..=units);
                    *slot = d as Scalar * step * r;
                    sum += d;
                }
                bprime[here - 1] = -sum as Scalar * step * r;
            }
            used += here;
            let prod = self.phe.mul_plain(ct, &self.enc(wc, scale2f))?;
            partials.push(self.phe.add_plain(&prod, &self.enc(&bprime, scale2f))?);
        }
        let eyr = w_chunks
            .iter()
            .map(|wc| {
                let pt = self.enc(wc, self.fp.scale_bits);
                self.phe.encrypt(&pt, &self.key)
            })
            .collect();
        Ok((partials, eyr))
    }

    fn store_indicators(
        &mut self,
        layer: usize,
        which: IndicatorKind,
        cts: Vec<Ciphertext>,
    ) -> Result<(), ProtocolError> {
        match which {
            IndicatorKind::Id1 => {
                if let ClientMaterial::Relu { id1, .. } = &mut self.material[layer] {
                    *id1 = cts;
                } else {
                    self.material[layer] = ClientMaterial::Relu {
                        id1: cts,
                        id2: Vec::new(),
                    };
                }
            }
            IndicatorKind::Id2 => {
                if let ClientMaterial::Relu { id2, .. } = &mut self.material[layer] {
                    *id2 = cts;
                } else {
                    self.material[layer] = ClientMaterial::Relu {
                        id1: Vec::new(),
                        id2: cts,
                    };
                }
            }
            IndicatorKind::ExpR1 => {
                self.material[layer] = ClientMaterial::Sigmoid {
                    exp_r1: cts,
                    r2: Vec::new(),
                };
            }
            IndicatorKind::VVec => {
                self.material[layer] = ClientMaterial::Softmax { vvec: cts };
            }
            IndicatorKind::R2 => {
                return Err(ProtocolError::Unexpected {
                    want: "server indicators",
                    got: "INDICATORS(R2)",
                })
            }
        }
        Ok(())
    }

    /// Generate r2 for sigmoid layers and return the offline upload frames.
    fn r2_messages(&mut self) -> Vec<Message> {
        let step = self.fp.grid_step::<Scalar>();
        let mut msgs = Vec::new();
        for l in 0..self.plan.len() {
            if !matches!(
                self.plan[l].activation,
                Some(ActivationKind::Sigmoid) | Some(ActivationKind::Tanh)
            ) {
                continue;
            }
            let outputs = self.plan[l].linear_outputs();
            let lo = (0.0625 / step) as i64; // 2^-4
            let hi = (0.125 / step) as i64; // 2^-3
            let r2: Vec<Scalar> = (0..outputs)
                .map(|_| {
                    if self.cfg.degenerate {
                        0.0625
                    } else {
                        self.phe.rng().gen_range(lo..=hi) as Scalar * step
                    }
                })
                .collect();
            let cts: Vec<Ciphertext> = compact_chunks(&r2, self.slots())
                .iter()
                .map(|c| {
                    let pt = self.enc(c, self.fp.scale_bits);
                    self.phe.encrypt(&pt, &self.key)
                })
                .collect();
            let ser = cts
                .iter()
                .map(|c| self.phe.engine.serialize_ct(c))
                .collect();
            if let ClientMaterial::Sigmoid { r2: slot, .. } = &mut self.material[l] {
                *slot = r2;
            }
            msgs.push(Message::Indicators {
                layer: l as u16,
                which: IndicatorKind::R2,
                cts: ser,
            });
        }
        msgs
    }

    /// How many indicator frames the server will send.
    fn expected_indicator_frames(&self) -> usize {
        self.plan
            .iter()
            .map(|p| match p.activation {
                Some(ActivationKind::Relu) => 2,
                Some(ActivationKind::Sigmoid)
                | Some(ActivationKind::Tanh)
                | Some(ActivationKind::Softmax) => 1,
                None => 0,
            })
            .sum()
    }

    /// Full driven session. Returns the class scores.
    pub fn run(
        &mut self,
        channel: &mut Channel,
        input: &Tensor<Scalar>,
    ) -> Result<Vec<Scalar>, ProtocolError> {
        match self.run_inner(channel, input) {
            Ok(scores) => Ok(scores),
            Err(e) => {
                let code = match &e {
                    ProtocolError::Unexpected { .. } => errcode::UNEXPECTED_MESSAGE,
                    ProtocolError::Wire(_) => errcode::BAD_FRAME,
                    ProtocolError::Phe(_) | ProtocolError::Corrupted(_) => errcode::CRYPTO,
                    _ => errcode::INTERNAL,
                };
                let _ = channel.send(&Message::Error {
                    code,
                    message: e.to_string(),
                });
                Err(e)
            }
        }
    }

    fn recv_blinded(
        &mut self,
        channel: &mut Channel,
        layer: u16,
        count: usize,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let mut cts = Vec::with_capacity(count);
        for want_seq in 0..count {
            match channel.recv()? {
                Message::BlindedLinear { layer: l, seq, ct }
                    if l == layer && seq as usize == want_seq =>
                {
                    cts.push(self.phe.engine.deserialize_ct(&ct)?);
                }
                Message::Error { code, message } => {
                    return Err(ProtocolError::Remote { code, message })
                }
                other => {
                    return Err(ProtocolError::Unexpected {
                        want: "BLINDED_LINEAR",
                        got: other.msg_type().name(),
                    })
                }
            }
        }
        Ok(cts)
    }

    fn recv_results(
        &mut self,
        channel: &mut Channel,
        count: usize,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let mut cts = Vec::with_capacity(count);
        for _ in 0..count {
            match channel.recv()? {
                Message::Result { ct } => cts.push(self.phe.engine.deserialize_ct(&ct)?),
                Message::Error { code, message } => {
                    return Err(ProtocolError::Remote { code, message })
                }
                other => {
                    return Err(ProtocolError::Unexpected {
                        want: "RESULT",
                        got: other.msg_type().name(),
                    })
                }
            }
        }
        Ok(cts)
    }

    fn decrypt_values(
        &mut self,
        cts: &[Ciphertext],
        scale: u32,
        count: usize,
    ) -> Result<Vec<Scalar>, ProtocolError> {
        let mut values = Vec::with_capacity(count);
        for ct in cts {
            let pt = self.phe.decrypt(ct, &self.key)?;
            values.extend(decode_vector::<Scalar>(&pt.slots, &self.fp, scale)?);
        }
        values.truncate(count);
        Ok(values)
    }

    fn run_inner(
        &mut self,
        channel: &mut Channel,
        input: &Tensor<Scalar>,
    ) -> Result<Vec<Scalar>, ProtocolError> {
        let hello = Message::Hello {
            params_digest: self.phe.params().digest(),
            network_digest: self.arch.architecture_digest(),
        };
        channel.send(&hello)?;
        match channel.recv()? {
            Message::Hello {
                params_digest,
                network_digest,
            } => {
                if params_digest != self.phe.params().digest() {
                    return Err(ProtocolError::ParamsDigest);
                }
                if network_digest != self.arch.architecture_digest() {
                    return Err(ProtocolError::NetworkDigest);
                }
            }
            Message::Error { code, message } => {
                return Err(ProtocolError::Remote { code, message })
            }
            other => {
                return Err(ProtocolError::Unexpected {
                    want: "HELLO",
                    got: other.msg_type().name(),
                })
            }
        }
        for _ in 0..self.expected_indicator_frames() {
            match channel.recv()? {
                Message::Indicators { layer, which, cts } => {
                    let cts = cts
                        .iter()
                        .map(|b| self.phe.engine.deserialize_ct(b))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.store_indicators(layer as usize, which, cts)?;
                }
                Message::Error { code, message } => {
                    return Err(ProtocolError::Remote { code, message })
                }
                other => {
                    return Err(ProtocolError::Unexpected {
                        want: "INDICATORS",
                        got: other.msg_type().name(),
                    })
                }
            }
        }
        for msg in self.r2_messages() {
            channel.send(&msg)?;
        }

        self.layer_wall_ms.clear();
        self.layer_counters.clear();
        // Clamp (counted, once per element) and quantize the private input
        // onto the wire grid before expansion; the secure pipeline computes
        // on exactly these values.
        let input = Tensor::new(
            input.dims,
            input
                .data
                .iter()
                .map(|&v| {
                    let clipped = crate::fixedpoint::clamp_counted(v, &self.fp, &self.phe.saturation);
                    crate::fixedpoint::round_to_grid(clipped, self.fp.scale_bits)
                })
                .collect(),
        );
        let first = self.upload_input(&input)?;
        for (seq, ct) in first.iter().enumerate() {
            channel.send(&Message::CtUpload {
                layer: 0,
                seq: seq as u16,
                ct: self.phe.engine.serialize_ct(ct),
            })?;
        }
        let mut scores: Option<Vec<Scalar>> = None;
        for l in 0..self.plan.len() {
            let t0 = std::time::Instant::now();
            let before = self.phe.counters_snapshot();
            let plan = self.plan[l].clone();
            let layer = l as u16;
            let blinded = self.recv_blinded(channel, layer, plan.linear.output_ct_count())?;
            let y = self.decrypt_and_sum(l, &blinded)?;
            let compact = plan.compact_ct_count(self.slots());
            match plan.activation {
                None => {
                    debug_assert!(plan.terminal);
                    scores = Some(y);
                }
                Some(ActivationKind::Relu) => {
                    let relu_cts = self.relu_eval(l, &y)?;
                    let (share_cts, uploads, s1) = self.make_shares(l, &relu_cts)?;
                    for ct in &share_cts {
                        channel.send(&Message::NonlinearShare {
                            layer,
                            ct: self.phe.engine.serialize_ct(ct),
                        })?;
                    }
                    for (seq, ct) in uploads.iter().enumerate() {
                        channel.send(&Message::CtUpload {
                            layer: layer + 1,
                            seq: seq as u16,
                            ct: self.phe.engine.serialize_ct(ct),
                        })?;
                    }
                    if plan.terminal {
                        let count = plan.final_out_dims.count();
                        let results =
                            self.recv_results(channel, count.div_ceil(self.slots()).max(1))?;
                        scores = Some(self.decrypt_values(&results, self.fp.scale_bits, count)?);
                    }
                    let _ = s1;
                }
                Some(ActivationKind::Sigmoid) | Some(ActivationKind::Tanh) => {
                    let doubled = plan.activation == Some(ActivationKind::Tanh);
                    let d_cts = self.sigmoid_eval(l, &y)?;
                    for ct in &d_cts {
                        channel.send(&Message::NonlinearShare {
                            layer,
                            ct: self.phe.engine.serialize_ct(ct),
                        })?;
                    }
                    let outputs = plan.linear_outputs();
                    if plan.terminal {
                        let results = self.recv_results(channel, compact)?;
                        let sig = self.decrypt_values(&results, 2 * self.fp.scale_bits, outputs)?;
                        scores = Some(if doubled {
                            sig.iter().map(|s| 2.0 * s - 1.0).collect()
                        } else {
                            sig
                        });
                    } else {
                        let masked = {
                            let mut cts = Vec::with_capacity(compact);
                            for _ in 0..compact {
                                match channel.recv()? {
                                    Message::NonlinearShare { layer: ml, ct } if ml == layer => {
                                        cts.push(self.phe.engine.deserialize_ct(&ct)?)
                                    }
                                    Message::Error { code, message } => {
                                        return Err(ProtocolError::Remote { code, message })
                                    }
                                    other => {
                                        return Err(ProtocolError::Unexpected {
                                            want: "NONLINEAR_SHARE",
                                            got: other.msg_type().name(),
                                        })
                                    }
                                }
                            }
                            cts
                        };
                        let sig_minus_m =
                            self.decrypt_values(&masked, 2 * self.fp.scale_bits, outputs)?;
                        let client_share: Vec<Scalar> = if doubled {
                            sig_minus_m.iter().map(|v| 2.0 * v - 1.0).collect()
                        } else {
                            sig_minus_m
                        };
                        let uploads =
                            self.upload_share(l, &client_share, plan.pool, plan.linear_out_dims)?;
                        for (seq, ct) in uploads.iter().enumerate() {
                            channel.send(&Message::CtUpload {
                                layer: layer + 1,
                                seq: seq as u16,
                                ct: self.phe.engine.serialize_ct(ct),
                            })?;
                        }
                    }
                }
                Some(ActivationKind::Softmax) => {
                    let (partials, eyr) = self.softmax_eval(l, &y)?;
                    for ct in &partials {
                        channel.send(&Message::NonlinearShare {
                            layer,
                            ct: self.phe.engine.serialize_ct(ct),
                        })?;
                    }
                    for (seq, ct) in eyr.iter().enumerate() {
                        channel.send(&Message::CtUpload {
                            layer,
                            seq: seq as u16,
                            ct: self.phe.engine.serialize_ct(ct),
                        })?;
                    }
                    let outputs = plan.linear_outputs();
                    let results = self.recv_results(channel, compact)?;
                    scores =
                        Some(self.decrypt_values(&results, 3 * self.fp.scale_bits, outputs)?);
                }
            }
            self.layer_wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            self.layer_counters
                .push(self.phe.counters_snapshot().since(&before));
        }
        scores.ok_or_else(|| ProtocolError::Unsupported("network produced no scores".into()))
    }
}
