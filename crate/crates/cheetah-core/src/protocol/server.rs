//! Server side: owns the weights, blinds the linear algebra, recovers
//! nothing it should not, and never permutes a ciphertext.

use std::sync::Arc;

use rand::Rng;

use super::*;
use crate::fixedpoint::{decode_vector, encode_vector_at_scale, round_to_grid};
use crate::nn::{ActivationKind, LayerSpec};
use crate::packing::{compact_chunks, relayout_share};
use crate::phe::{
    Ciphertext, OpCounters, Owner, PackedPlaintext, PheEngine, PheSession, SecretKey,
};
use crate::transport::{errcode, Channel, IndicatorKind, Message};

/// Statistics returned by a completed server run.
#[derive(Debug, Clone)]
pub struct ServerRunStats {
    pub per_layer: Vec<OpCounters>,
    pub total: OpCounters,
    pub bytes: crate::transport::ByteCounters,
}

pub struct ServerSession {
    pub phe: PheSession,
    key: SecretKey,
    net: NetworkSpec<Scalar>,
    pub plan: Vec<LayerPlan>,
    cfg: ProtocolConfig,
    fp: FpParams,
    blindings: Vec<LayerBlinding>,
    /// Client-encrypted r2 vectors for sigmoid/tanh layers, received offline.
    r2_cts: Vec<Option<Vec<Ciphertext>>>,
}

impl ServerSession {
    pub fn new(
        engine: Arc<PheEngine>,
        key: SecretKey,
        net: NetworkSpec<Scalar>,
        cfg: ProtocolConfig,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        assert_eq!(
            key.owner,
            Owner::Server,
            "server session needs the server key"
        );
        let fp = engine.params.fixedpoint();
        fp.check_batching(engine.params.slots)?;
        let plan = plan_network(&net, engine.params.slots)?;
        let layers = plan.len();
        Ok(ServerSession {
            phe: PheSession::new(engine, seed),
            key,
            net,
            plan,
            cfg,
            fp,
            blindings: Vec::new(),
            r2_cts: (0..layers).map(|_| None).collect(),
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

    /// Per-output bias at the linear step, in tensor order (zero when the
    /// layer has no bias).
    fn bias_vector(&self, plan: &LayerPlan) -> Vec<Scalar> {
        let outputs = plan.linear_outputs();
        match &plan.linear {
            LinearStep::Conv { spec_idx, layout } => {
                let LayerSpec::Conv(c) = &self.net.layers[*spec_idx] else {
                    unreachable!()
                };
                let co = layout.out_channels;
                (0..outputs)
                    .map(|o| c.bias.as_ref().map_or(0.0, |b| b[o % co]))
                    .collect()
            }
            LinearStep::Fc { spec_idx, .. } => {
                let LayerSpec::Fc(f) = &self.net.layers[*spec_idx] else {
                    unreachable!()
                };
                (0..outputs)
                    .map(|o| f.bias.as_ref().map_or(0.0, |b| b[o]))
                    .collect()
            }
        }
    }

    /// Pre-generate every layer's blinding bundle (the offline phase).
    pub fn gen_blindings(&mut self) -> Result<(), ProtocolError> {
        self.blindings.clear();
        for l in 0..self.plan.len() {
            let plan = self.plan[l].clone();
            let outputs = plan.linear_outputs();
            let bias = self.bias_vector(&plan);
            let b = match plan.activation {
                Some(ActivationKind::Relu) => {
                    let v1 = draw_relu_blinds(
                        outputs,
                        self.cfg.relu_exp_range,
                        self.cfg.degenerate,
                        self.phe.rng(),
                    );
                    let v2: Vec<Scalar> = v1.iter().map(|v| 1.0 / v).collect();
                    let targets: Vec<Scalar> = v1.iter().zip(&bias).map(|(v, b)| v * b).collect();
                    let masks =
                        gen_masks(&plan.linear, &targets, &self.fp, &self.cfg, self.phe.rng());
                    let (mut id1v, mut id2v) =
                        (Vec::with_capacity(outputs), Vec::with_capacity(outputs));
                    for &v in &v1 {
                        let (a, b) = indicator_pair(v);
                        id1v.push(a);
                        id2v.push(b);
                    }
                    let id1 = self.encrypt_compact(&id1v, self.fp.scale_bits);
                    let id2 = self.encrypt_compact(&id2v, self.fp.scale_bits);
                    LayerBlinding::Relu(ReluBlinding {
                        v1,
                        v2,
                        id1,
                        id2,
                        masks,
                    })
                }
                Some(ActivationKind::Sigmoid) | Some(ActivationKind::Tanh) => {
                    let doubled = plan.activation == Some(ActivationKind::Tanh);
                    let step = self.fp.grid_step::<Scalar>();
                    let max_units = (self.cfg.sigmoid_r1_max / step) as i64;
                    let r1: Vec<Scalar> = (0..outputs)
                        .map(|_| {
                            if self.cfg.degenerate {
                                0.0
                            } else {
                                self.phe.rng().gen_range(0..=max_units) as Scalar * step
                            }
                        })
                        .collect();
                    let exp_r1_grid: Vec<Scalar> = r1
                        .iter()
                        .map(|r| round_to_grid(r.exp(), self.fp.scale_bits))
                        .collect();
                    let mult = if doubled { 2.0 } else { 1.0 };
                    let targets: Vec<Scalar> =
                        r1.iter().zip(&bias).map(|(r, b)| mult * b - r).collect();
                    let masks =
                        gen_masks(&plan.linear, &targets, &self.fp, &self.cfg, self.phe.rng());
                    let exp_r1 = self.encrypt_compact(&exp_r1_grid, self.fp.scale_bits);
                    LayerBlinding::Sigmoid(SigmoidBlinding {
                        r1,
                        exp_r1_grid,
                        exp_r1,
                        masks,
                        doubled,
                    })
                }
                Some(ActivationKind::Softmax) => {
                    let v1: Vec<Scalar> = (0..outputs)
                        .map(|_| {
                            if self.cfg.degenerate {
                                1.0
                            } else {
                                exp2::<Scalar>(
                                    -self.phe.rng().gen_range(0..=self.cfg.softmax_exp_range),
                                )
                            }
                        })
                        .collect();
                    let ln_v1_grid: Vec<Scalar> = v1
                        .iter()
                        .map(|v| round_to_grid(v.ln(), self.fp.scale_bits))
                        .collect();
                    let v_eff: Vec<Scalar> = ln_v1_grid.iter().map(|l| l.exp()).collect();
                    let targets: Vec<Scalar> =
                        ln_v1_grid.iter().zip(&bias).map(|(l, b)| b + l).collect();
                    let masks =
                        gen_masks(&plan.linear, &targets, &self.fp, &self.cfg, self.phe.rng());
                    // v2 = 1/v1 are small integers; encrypting them at scale 0
                    // keeps the client's product at scale 2f.
                    let v2: Vec<Scalar> = v1.iter().map(|v| 1.0 / v).collect();
                    let vvec = self.encrypt_compact(&v2, 0);
                    LayerBlinding::Softmax(SoftmaxBlinding {
                        v1,
                        ln_v1_grid,
                        v_eff,
                        vvec,
                        masks,
                    })
                }
                None => LayerBlinding::Plain {
                    masks: gen_masks(&plan.linear, &bias, &self.fp, &self.cfg, self.phe.rng()),
                },
            };
            self.blindings.push(b);
        }
        Ok(())
    }

    fn encrypt_compact(&mut self, values: &[Scalar], scale: u32) -> Vec<Ciphertext> {
        let chunks = compact_chunks(values, self.slots());
        chunks
            .iter()
            .map(|c| {
                let pt = self.enc(c, scale);
                self.phe.encrypt(&pt, &self.key)
            })
            .collect()
    }

    /// Offline messages: indicator bundles per layer, in layer order.
    pub fn indicator_messages(&self) -> Vec<Message> {
        let mut msgs = Vec::new();
        for (l, b) in self.blindings.iter().enumerate() {
            let ser = |cts: &[Ciphertext]| {
                cts.iter()
                    .map(|c| self.phe.engine.serialize_ct(c))
                    .collect::<Vec<_>>()
            };
            match b {
                LayerBlinding::Relu(r) => {
                    msgs.push(Message::Indicators {
                        layer: l as u16,
                        which: IndicatorKind::Id1,
                        cts: ser(&r.id1),
                    });
                    msgs.push(Message::Indicators {
                        layer: l as u16,
                        which: IndicatorKind::Id2,
                        cts: ser(&r.id2),
                    });
                }
                LayerBlinding::Sigmoid(s) => {
                    msgs.push(Message::Indicators {
                        layer: l as u16,
                        which: IndicatorKind::ExpR1,
                        cts: ser(&s.exp_r1),
                    });
                }
                LayerBlinding::Softmax(s) => {
                    msgs.push(Message::Indicators {
                        layer: l as u16,
                        which: IndicatorKind::VVec,
                        cts: ser(&s.vvec),
                    });
                }
                LayerBlinding::Plain { .. } => {}
            }
        }
        msgs
    }

    /// Layers that expect a client-encrypted r2 bundle offline.
    pub fn r2_layers(&self) -> Vec<usize> {
        self.plan
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                matches!(
                    p.activation,
                    Some(ActivationKind::Sigmoid) | Some(ActivationKind::Tanh)
                )
            })
            .map(|(l, _)| l)
            .collect()
    }

    pub fn store_r2(&mut self, layer: usize, cts: Vec<Ciphertext>) {
        self.r2_cts[layer] = Some(cts);
    }

    /// The blinded permutation-free linear step: per kernel, one
    /// plaintext multiplication per input ciphertext, slot-aligned
    /// additions across ciphertexts, one mask addition per output.
    pub fn linear_eval(
        &mut self,
        l: usize,
        inputs: &[Ciphertext],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let plan = self.plan[l].clone();
        assert_eq!(
            inputs.len(),
            plan.linear.input_ct_count(),
            "layer {l} input ciphertext count"
        );
        let outputs = plan.linear_outputs();
        let blind: Vec<Scalar> = match &self.blindings[l] {
            LayerBlinding::Relu(r) => r.v1.clone(),
            _ => vec![1.0; outputs],
        };
        // tanh doubles the pre-activation so sigma(2x) is what comes back.
        let blind: Vec<Scalar> = match &self.blindings[l] {
            LayerBlinding::Sigmoid(s) if s.doubled => blind.iter().map(|b| 2.0 * b).collect(),
            _ => blind,
        };
        let masks: &MaskVectors = match &self.blindings[l] {
            LayerBlinding::Relu(r) => &r.masks,
            LayerBlinding::Sigmoid(s) => &s.masks,
            LayerBlinding::Softmax(s) => &s.masks,
            LayerBlinding::Plain { masks } => masks,
        };
        let scale2f = 2 * self.fp.scale_bits;
        let mut out = Vec::with_capacity(plan.linear.output_ct_count());
        match &plan.linear {
            LinearStep::Conv { spec_idx, layout } => {
                let LayerSpec::Conv(conv) = self.net.layers[*spec_idx].clone() else {
                    unreachable!()
                };
                let segs = layout.output_cts_per_kernel();
                for t in 0..layout.out_channels {
                    let blind_t: Vec<Scalar> = (0..layout.blocks_per_channel)
                        .map(|i| blind[i * layout.out_channels + t])
                        .collect();
                    let operands = layout.expand_kernel(&conv, t, &blind_t);
                    let mut acc: Vec<Option<Ciphertext>> = vec![None; segs];
                    for (c, operand) in operands.iter().enumerate() {
                        let prod = self
                            .phe
                            .mul_plain(&inputs[c], &self.enc(operand, self.fp.scale_bits))?;
                        let seg = layout.segment_of_input_ct(c);
                        acc[seg] = Some(match acc[seg].take() {
                            Some(a) => self.phe.add_ct(&a, &prod)?,
                            None => prod,
                        });
                    }
                    for (seg, a) in acc.into_iter().enumerate() {
                        let a = a.expect("every segment receives a contribution");
                        let masked = self
                            .phe
                            .add_plain(&a, &self.enc(&masks[t * segs + seg], scale2f))?;
                        out.push(masked);
                    }
                }
            }
            LinearStep::Fc { spec_idx, layout } => {
                let LayerSpec::Fc(fc) = self.net.layers[*spec_idx].clone() else {
                    unreachable!()
                };
                let operands = layout.expand_weights(&fc, &blind);
                for (m, operand) in operands.iter().enumerate() {
                    let prod = self
                        .phe
                        .mul_plain(&inputs[0], &self.enc(operand, self.fp.scale_bits))?;
                    out.push(self.phe.add_plain(&prod, &self.enc(&masks[m], scale2f))?);
                }
            }
        }
        Ok(out)
    }

    /// Decrypt the client's [activation - s1]_S ciphertexts into the
    /// server's plaintext share, in tensor order.
    pub fn decrypt_share(
        &mut self,
        l: usize,
        share_cts: &[Ciphertext],
    ) -> Result<Vec<Scalar>, ProtocolError> {
        let plan = &self.plan[l];
        let scale3f = 3 * self.fp.scale_bits;
        let mut values = Vec::with_capacity(plan.linear_outputs());
        for ct in share_cts {
            if ct.scale_bits != scale3f {
                return Err(PheError::ScaleMismatch {
                    a: ct.scale_bits,
                    b: scale3f,
                }
                .into());
            }
            let pt = self.phe.decrypt(ct, &self.key)?;
            values.extend(decode_vector::<Scalar>(&pt.slots, &self.fp, scale3f)?);
        }
        values.truncate(plan.linear_outputs());
        Ok(values)
    }

    /// Pool the server share, re-lay it out for the next layer, and add it
    /// onto the client's uploaded share encryptions. For the terminal layer
    /// this produces the compact result ciphertexts.
    pub fn absorb_shares(
        &mut self,
        l: usize,
        server_share: &[Scalar],
        uploads: &[Ciphertext],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let plan = self.plan[l].clone();
        let share = match plan.pool {
            Some(region) => pool_share(server_share, plan.linear_out_dims, region),
            None => server_share.to_vec(),
        };
        let next = next_layout(&self.plan, l, self.slots());
        assert_eq!(
            uploads.len(),
            next.input_ct_count(),
            "layer {l} upload count"
        );
        let vectors = relayout_share(&share, &next);
        let mut out = Vec::with_capacity(uploads.len());
        for (ct, v) in uploads.iter().zip(&vectors) {
            // encode_at_scale rounds: this is the documented per-layer
            // requantize of the activation back onto the f-grid.
            out.push(self.phe.add_plain(ct, &self.enc(v, self.fp.scale_bits))?);
        }
        Ok(out)
    }

    /// Finish the sigmoid: divide the blinded denominator out and multiply
    /// the client-encrypted r2 back in.
    pub fn sigmoid_finish(
        &mut self,
        l: usize,
        d_cts: &[Ciphertext],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let plan = self.plan[l].clone();
        let LayerBlinding::Sigmoid(sb) = &self.blindings[l] else {
            return Err(ProtocolError::Unsupported(format!(
                "layer {l} is not a sigmoid layer"
            )));
        };
        let exp_r1_grid = sb.exp_r1_grid.clone();
        let scale2f = 2 * self.fp.scale_bits;
        let mut d = Vec::with_capacity(plan.linear_outputs());
        for ct in d_cts {
            let pt = self.phe.decrypt(ct, &self.key)?;
            d.extend(decode_vector::<Scalar>(&pt.slots, &self.fp, scale2f)?);
        }
        d.truncate(plan.linear_outputs());
        let mut factor = Vec::with_capacity(d.len());
        for (i, (&di, eg)) in d.iter().zip(&exp_r1_grid).enumerate() {
            if di <= 0.0 {
                return Err(ProtocolError::Corrupted(format!(
                    "sigmoid denominator {di} at output {i}"
                )));
            }
            factor.push(eg / di);
        }
        let r2_cts = self.r2_cts[l]
            .clone()
            .ok_or_else(|| ProtocolError::Unsupported(format!("layer {l}: r2 material missing")))?;
        let chunks = compact_chunks(&factor, self.slots());
        let mut out = Vec::with_capacity(r2_cts.len());
        for (ct, chunk) in r2_cts.iter().zip(&chunks) {
            out.push(
                self.phe
                    .mul_plain(ct, &self.enc(chunk, self.fp.scale_bits))?,
            );
        }
        Ok(out)
    }

    /// Split a server-held client-encrypted activation into additive
    /// plaintext shares: the server keeps m, the client decrypts act - m.
    pub fn mask_activation(
        &mut self,
        act_cts: &[Ciphertext],
        count: usize,
    ) -> Result<(Vec<Ciphertext>, Vec<Scalar>), ProtocolError> {
        let step = self.fp.grid_step::<Scalar>();
        let units = (self.cfg.share_bound / step) as i64;
        let m: Vec<Scalar> = (0..count)
            .map(|_| {
                if self.cfg.degenerate {
                    0.0
                } else {
                    self.phe.rng().gen_range(-units..=units) as Scalar * step
                }
            })
            .collect();
        let chunks = compact_chunks(&m.iter().map(|v| -v).collect::<Vec<_>>(), self.slots());
        let mut masked = Vec::with_capacity(act_cts.len());
        for (ct, chunk) in act_cts.iter().zip(&chunks) {
            masked.push(self.phe.add_plain(ct, &self.enc(chunk, ct.scale_bits))?);
        }
        Ok((masked, m))
    }

    /// Recover the softmax under the client's key from the blinded
    /// denominator and the client's e^y upload.
    pub fn softmax_finish(
        &mut self,
        l: usize,
        partial_cts: &[Ciphertext],
        eyr_cts: &[Ciphertext],
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let plan = self.plan[l].clone();
        let LayerBlinding::Softmax(sb) = &self.blindings[l] else {
            return Err(ProtocolError::Unsupported(format!(
                "layer {l} is not a softmax layer"
            )));
        };
        let v_eff = sb.v_eff.clone();
        let scale2f = 2 * self.fp.scale_bits;
        let outputs = plan.linear_outputs();
        let mut values = Vec::with_capacity(outputs);
        for ct in partial_cts {
            let pt = self.phe.decrypt(ct, &self.key)?;
            values.extend(decode_vector::<Scalar>(&pt.slots, &self.fp, scale2f)?);
        }
        values.truncate(outputs);
        let d: Scalar = values.iter().sum();
        if d <= 0.0 {
            return Err(ProtocolError::Corrupted(format!("softmax denominator {d}")));
        }
        let u: Vec<Scalar> = v_eff.iter().map(|v| 1.0 / (v * d)).collect();
        let chunks = compact_chunks(&u, self.slots());
        let mut out = Vec::with_capacity(eyr_cts.len());
        for (ct, chunk) in eyr_cts.iter().zip(&chunks) {
            out.push(self.phe.mul_plain(ct, &self.enc(chunk, scale2f))?);
        }
        Ok(out)
    }

    pub fn blinding(&self, l: usize) -> &LayerBlinding {
        &self.blindings[l]
    }

    /// Message-driven session: HELLO, offline indicators, then the layer
    /// loop. Returns per-layer and total op counters.
    pub fn run(&mut self, channel: &mut Channel) -> Result<ServerRunStats, ProtocolError> {
        match self.run_inner(channel) {
            Ok(stats) => Ok(stats),
            Err(e) => {
                let code = match &e {
                    ProtocolError::ParamsDigest => errcode::PARAMS_DIGEST,
                    ProtocolError::NetworkDigest => errcode::NETWORK_DIGEST,
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

    fn expect_ct_uploads(
        &mut self,
        channel: &mut Channel,
        layer: u16,
        count: usize,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let mut cts = Vec::with_capacity(count);
        for want_seq in 0..count {
            match channel.recv()? {
                Message::CtUpload { layer: l, seq, ct }
                    if l == layer && seq as usize == want_seq =>
                {
                    cts.push(self.phe.engine.deserialize_ct(&ct)?);
                }
                Message::Error { code, message } => {
                    return Err(ProtocolError::Remote { code, message })
                }
                other => {
                    return Err(ProtocolError::Unexpected {
                        want: "CT_UPLOAD",
                        got: other.msg_type().name(),
                    })
                }
            }
        }
        Ok(cts)
    }

    fn expect_nonlinear_shares(
        &mut self,
        channel: &mut Channel,
        layer: u16,
        count: usize,
    ) -> Result<Vec<Ciphertext>, ProtocolError> {
        let mut cts = Vec::with_capacity(count);
        for _ in 0..count {
            match channel.recv()? {
                Message::NonlinearShare { layer: l, ct } if l == layer => {
                    cts.push(self.phe.engine.deserialize_ct(&ct)?);
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
        Ok(cts)
    }

    fn run_inner(&mut self, channel: &mut Channel) -> Result<ServerRunStats, ProtocolError> {
        // HELLO: digests must match before anything else flows.
        match channel.recv()? {
            Message::Hello {
                params_digest,
                network_digest,
            } => {
                if params_digest != self.phe.params().digest() {
                    return Err(ProtocolError::ParamsDigest);
                }
                if network_digest != self.net.architecture_digest() {
                    return Err(ProtocolError::NetworkDigest);
                }
                channel.send(&Message::Hello {
                    params_digest,
                    network_digest,
                })?;
            }
            other => {
                return Err(ProtocolError::Unexpected {
                    want: "HELLO",
                    got: other.msg_type().name(),
                })
            }
        }
        if self.blindings.is_empty() {
            self.gen_blindings()?;
        }
        for msg in self.indicator_messages() {
            channel.send(&msg)?;
        }
        // Client offline material: one R2 bundle per sigmoid/tanh layer.
        for l in self.r2_layers() {
            match channel.recv()? {
                Message::Indicators {
                    layer,
                    which: IndicatorKind::R2,
                    cts,
                } if layer as usize == l => {
                    let cts = cts
                        .iter()
                        .map(|b| self.phe.engine.deserialize_ct(b))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.store_r2(l, cts);
                }
                Message::Error { code, message } => {
                    return Err(ProtocolError::Remote { code, message })
                }
                other => {
                    return Err(ProtocolError::Unexpected {
                        want: "INDICATORS(R2)",
                        got: other.msg_type().name(),
                    })
                }
            }
        }

        let mut per_layer = Vec::with_capacity(self.plan.len());
        let mut inputs: Option<Vec<Ciphertext>> = None;
        for l in 0..self.plan.len() {
            let before = self.phe.counters_snapshot();
            let plan = self.plan[l].clone();
            let layer = l as u16;
            let inputs_l = match inputs.take() {
                Some(cts) => cts,
                None => self.expect_ct_uploads(channel, layer, plan.linear.input_ct_count())?,
            };
            let outs = self.linear_eval(l, &inputs_l)?;
            for (seq, ct) in outs.iter().enumerate() {
                channel.send(&Message::BlindedLinear {
                    layer,
                    seq: seq as u16,
                    ct: self.phe.engine.serialize_ct(ct),
                })?;
            }
            let compact = plan.compact_ct_count(self.slots());
            let next = next_layout(&self.plan, l, self.slots());
            match plan.activation {
                None => {
                    // Terminal linear: the client's block sums are its result.
                }
                Some(ActivationKind::Relu) => {
                    let share_cts = self.expect_nonlinear_shares(channel, layer, compact)?;
                    let uploads =
                        self.expect_ct_uploads(channel, layer + 1, next.input_ct_count())?;
                    let server_share = self.decrypt_share(l, &share_cts)?;
                    let absorbed = self.absorb_shares(l, &server_share, &uploads)?;
                    if plan.terminal {
                        for ct in &absorbed {
                            channel.send(&Message::Result {
                                ct: self.phe.engine.serialize_ct(ct),
                            })?;
                        }
                    } else {
                        inputs = Some(absorbed);
                    }
                }
                Some(ActivationKind::Sigmoid) | Some(ActivationKind::Tanh) => {
                    let d_cts = self.expect_nonlinear_shares(channel, layer, compact)?;
                    let act_cts = self.sigmoid_finish(l, &d_cts)?;
                    if plan.terminal {
                        for ct in &act_cts {
                            channel.send(&Message::Result {
                                ct: self.phe.engine.serialize_ct(ct),
                            })?;
                        }
                    } else {
                        let outputs = plan.linear_outputs();
                        let (masked, m) = self.mask_activation(&act_cts, outputs)?;
                        for ct in &masked {
                            channel.send(&Message::NonlinearShare {
                                layer,
                                ct: self.phe.engine.serialize_ct(ct),
                            })?;
                        }
                        // tanh shares carry the affine map: act = 2*sigma - 1,
                        // split as client 2(sigma - m) - 1, server 2m.
                        let doubled =
                            matches!(&self.blindings[l], LayerBlinding::Sigmoid(s) if s.doubled);
                        let server_share: Vec<Scalar> = m
                            .iter()
                            .map(|&v| if doubled { 2.0 * v } else { v })
                            .collect();
                        let uploads =
                            self.expect_ct_uploads(channel, layer + 1, next.input_ct_count())?;
                        inputs = Some(self.absorb_shares(l, &server_share, &uploads)?);
                    }
                }
                Some(ActivationKind::Softmax) => {
                    let partial = self.expect_nonlinear_shares(channel, layer, compact)?;
                    let eyr = self.expect_ct_uploads(channel, layer, compact)?;
                    for ct in &self.softmax_finish(l, &partial, &eyr)? {
                        channel.send(&Message::Result {
                            ct: self.phe.engine.serialize_ct(ct),
                        })?;
                    }
                }
            }
            per_layer.push(self.phe.counters_snapshot().since(&before));
        }
        Ok(ServerRunStats {
            per_layer,
            total: self.phe.counters_snapshot(),
            bytes: channel.counters(),
        })
    }
}
