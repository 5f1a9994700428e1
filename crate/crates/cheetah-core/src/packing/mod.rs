//! Slot-layout mathematics: receptive-field expansion of inputs and
//! kernels, dense-layer block layout, client-side block summation, and the
//! share re-layout that chains layers — all without a single ciphertext
//! rotation.
//!
//! A convolution output element corresponds to one *block* of k_p*k_q
//! adjacent slots. Blocks are uniform: taps whose receptive-field position
//! falls outside the input are zero-filled, which costs nothing in the
//! block sums and keeps the addressing stride-regular. Channels are
//! accumulated by slot-aligned ciphertext addition across ciphertexts
//! (never within one), so the permutation count stays identically zero.
//!
//! Two packing regimes cover all shapes:
//! - a whole expanded channel fits in a ciphertext: each ciphertext holds
//!   `channels_per_ct` channels side by side at region offsets, and one
//!   output ciphertext per kernel accumulates the channel groups;
//! - one channel spans several ciphertexts: blocks are split into
//!   `segments_per_channel` segments, channels are accumulated per
//!   segment, and each kernel produces one output ciphertext per segment.

use crate::nn::{ConvGeometry, ConvSpec, Dims, FcSpec, NnError, Tensor};
use crate::real::Real;

/// Deterministic map between conv tensor coordinates and ciphertext slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayout {
    pub input: Dims,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
    pub slots: usize,
    /// k_p * k_q.
    pub block_size: usize,
    /// w_o * h_o blocks for one channel.
    pub blocks_per_channel: usize,
    /// Channels packed side by side in one ciphertext; 0 when a single
    /// expanded channel does not fit.
    pub channels_per_ct: usize,
    /// Region offsets that actually hold data (min(channels_per_ct, c_i)).
    pub regions_used: usize,
    /// Ciphertexts covering one channel (1 unless channels_per_ct == 0).
    pub segments_per_channel: usize,
    /// Blocks per segment in the spanning regime.
    pub blocks_per_segment: usize,
    pub input_ct_count: usize,
}

impl ConvLayout {
    pub fn new(
        input: Dims,
        conv: &ConvSpec<impl Real>,
        slots: usize,
    ) -> Result<ConvLayout, NnError> {
        let block_size = conv.kernel_h * conv.kernel_w;
        if block_size > slots {
            return Err(NnError::DimMismatch(format!(
                "kernel {}x{} needs {block_size} slots, ciphertext has {slots}",
                conv.kernel_h, conv.kernel_w
            )));
        }
        if conv.in_channels != input.channels {
            return Err(NnError::DimMismatch("conv channel mismatch".into()));
        }
        let geometry = conv.geometry(input);
        let blocks_per_channel = geometry.out_h * geometry.out_w;
        let channel_span = blocks_per_channel * block_size;
        let (channels_per_ct, regions_used, segments, blocks_per_segment, input_ct_count) =
            if channel_span <= slots {
                let g = slots / channel_span;
                let groups = input.channels.div_ceil(g);
                (g, g.min(input.channels), 1, blocks_per_channel, groups)
            } else {
                let bps = slots / block_size;
                let segments = blocks_per_channel.div_ceil(bps);
                (0, 1, segments, bps, input.channels * segments)
            };
        Ok(ConvLayout {
            input,
            kernel_h: conv.kernel_h,
            kernel_w: conv.kernel_w,
            stride: conv.stride,
            out_channels: conv.out_channels,
            geometry,
            slots,
            block_size,
            blocks_per_channel,
            channels_per_ct,
            regions_used,
            segments_per_channel: segments,
            blocks_per_segment,
            input_ct_count,
        })
    }

    /// Output ciphertexts per kernel (the segment count).
    pub fn output_cts_per_kernel(&self) -> usize {
        self.segments_per_channel
    }

    /// Which output ciphertext an input ciphertext accumulates into.
    pub fn segment_of_input_ct(&self, ct: usize) -> usize {
        if self.channels_per_ct > 0 {
            0
        } else {
            ct % self.segments_per_channel
        }
    }

    /// Slot position for (channel j, output block i, tap index).
    /// Returns (input ct index, slot).
    pub fn slot_of(&self, j: usize, i: usize, tap: usize) -> (usize, usize) {
        debug_assert!(
            j < self.input.channels && i < self.blocks_per_channel && tap < self.block_size
        );
        if self.channels_per_ct > 0 {
            let ct = j / self.channels_per_ct;
            let region = j % self.channels_per_ct;
            (
                ct,
                region * self.blocks_per_channel * self.block_size + i * self.block_size + tap,
            )
        } else {
            let seg = i / self.blocks_per_segment;
            let ct = j * self.segments_per_channel + seg;
            (ct, (i % self.blocks_per_segment) * self.block_size + tap)
        }
    }

    /// Inverse of [`Self::slot_of`]: which (channel, block, tap) a slot holds,
    /// if any.
    pub fn source_of(&self, ct: usize, slot: usize) -> Option<(usize, usize, usize)> {
        if self.channels_per_ct > 0 {
            let span = self.blocks_per_channel * self.block_size;
            let region = slot / span;
            if region >= self.channels_per_ct {
                return None;
            }
            let j = ct * self.channels_per_ct + region;
            if j >= self.input.channels {
                return None;
            }
            let within = slot % span;
            Some((j, within / self.block_size, within % self.block_size))
        } else {
            let j = ct / self.segments_per_channel;
            let seg = ct % self.segments_per_channel;
            let block_in_seg = slot / self.block_size;
            if block_in_seg >= self.blocks_per_segment {
                return None;
            }
            let i = seg * self.blocks_per_segment + block_in_seg;
            if i >= self.blocks_per_channel || j >= self.input.channels {
                return None;
            }
            Some((j, i, slot % self.block_size))
        }
    }

    /// Receptive-field source pixel for output block i and tap index, or
    /// None when the tap is zero-fill (outside the input).
    pub fn tap_source(&self, i: usize, tap: usize) -> Option<(usize, usize)> {
        let (m, n) = (i / self.geometry.out_w, i % self.geometry.out_w);
        let (u, v) = (tap / self.kernel_w, tap % self.kernel_w);
        let row = (m * self.stride + u) as isize - self.geometry.pad_top as isize;
        let col = (n * self.stride + v) as isize - self.geometry.pad_left as isize;
        if row < 0
            || col < 0
            || row >= self.input.height as isize
            || col >= self.input.width as isize
        {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }

    /// Slots the client sums (in the output ciphertext of the stated
    /// segment) to finish output block i. Zero-fill tap positions are
    /// included: they hold only mask values that cancel within the group.
    pub fn output_group_slots(&self, i: usize) -> (usize, Vec<usize>) {
        if self.channels_per_ct > 0 {
            let span = self.blocks_per_channel * self.block_size;
            let mut slots = Vec::with_capacity(self.regions_used * self.block_size);
            for region in 0..self.regions_used {
                let base = region * span + i * self.block_size;
                slots.extend(base..base + self.block_size);
            }
            (0, slots)
        } else {
            let seg = i / self.blocks_per_segment;
            let base = (i % self.blocks_per_segment) * self.block_size;
            (seg, (base..base + self.block_size).collect())
        }
    }

    /// Receptive-field expansion of the input: one slot vector per input
    /// ciphertext, values copied per (channel, block, tap).
    pub fn expand_input<R: Real>(&self, x: &Tensor<R>) -> Vec<Vec<R>> {
        assert_eq!(x.dims, self.input, "input dims do not match layout");
        let mut cts = vec![vec![R::zero(); self.slots]; self.input_ct_count];
        for j in 0..self.input.channels {
            for i in 0..self.blocks_per_channel {
                for tap in 0..self.block_size {
                    if let Some((row, col)) = self.tap_source(i, tap) {
                        let (ct, slot) = self.slot_of(j, i, tap);
                        cts[ct][slot] = x.at(row, col, j);
                    }
                }
            }
        }
        cts
    }

    /// Kernel expansion for kernel t, with a per-output-block blinding
    /// factor multiplied in: slot (j, i, tap) of the returned operand for
    /// input ciphertext c holds `k(tap, j, t) * blind[i]`.
    pub fn expand_kernel<R: Real>(&self, conv: &ConvSpec<R>, t: usize, blind: &[R]) -> Vec<Vec<R>> {
        assert_eq!(
            blind.len(),
            self.blocks_per_channel,
            "one blinding factor per output block"
        );
        let mut cts = vec![vec![R::zero(); self.slots]; self.input_ct_count];
        for j in 0..self.input.channels {
            for i in 0..self.blocks_per_channel {
                for tap in 0..self.block_size {
                    if self.tap_source(i, tap).is_some() {
                        let (u, v) = (tap / self.kernel_w, tap % self.kernel_w);
                        let (ct, slot) = self.slot_of(j, i, tap);
                        cts[ct][slot] = conv.weight(u, v, j, t) * blind[i];
                    }
                }
            }
        }
        cts
    }

    /// Client-side block summation over the decoded output ciphertexts of
    /// one kernel; exact real addition.
    pub fn block_sum<R: Real>(&self, decoded: &[Vec<R>]) -> Vec<R> {
        assert_eq!(decoded.len(), self.output_cts_per_kernel());
        (0..self.blocks_per_channel)
            .map(|i| {
                let (seg, slots) = self.output_group_slots(i);
                slots.iter().map(|&s| decoded[seg][s]).sum()
            })
            .collect()
    }
}

/// Dense-layer layout: each output row is one block of n_i slots; the
/// input vector is repeated across the row positions of a single uploaded
/// ciphertext.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayout {
    pub inputs: usize,
    pub outputs: usize,
    pub slots: usize,
    pub rows_per_ct: usize,
    pub ct_count: usize,
}

impl FcLayout {
    pub fn new(inputs: usize, outputs: usize, slots: usize) -> Result<FcLayout, NnError> {
        if inputs > slots {
            return Err(NnError::DimMismatch(format!(
                "fc input width {inputs} exceeds slot count {slots}"
            )));
        }
        let rows_per_ct = slots / inputs;
        Ok(FcLayout {
            inputs,
            outputs,
            slots,
            rows_per_ct,
            ct_count: outputs.div_ceil(rows_per_ct),
        })
    }

    /// (output ciphertext, slot) holding weight (row i, column j).
    pub fn slot_of(&self, i: usize, j: usize) -> (usize, usize) {
        debug_assert!(i < self.outputs && j < self.inputs);
        (
            i / self.rows_per_ct,
            (i % self.rows_per_ct) * self.inputs + j,
        )
    }

    /// Rows materialized in the shared input ciphertext.
    pub fn rows_repeated(&self) -> usize {
        self.rows_per_ct.min(self.outputs)
    }

    /// The single uploaded slot vector: x repeated across row positions.
    pub fn expand_input<R: Real>(&self, x: &[R]) -> Vec<R> {
        assert_eq!(x.len(), self.inputs);
        let mut v = vec![R::zero(); self.slots];
        for row in 0..self.rows_repeated() {
            v[row * self.inputs..(row + 1) * self.inputs].copy_from_slice(x);
        }
        v
    }

    /// Weight operands, one per output ciphertext, with per-row blinding.
    pub fn expand_weights<R: Real>(&self, fc: &FcSpec<R>, blind: &[R]) -> Vec<Vec<R>> {
        assert_eq!(blind.len(), self.outputs);
        let mut cts = vec![vec![R::zero(); self.slots]; self.ct_count];
        for i in 0..self.outputs {
            for j in 0..self.inputs {
                let (ct, slot) = self.slot_of(i, j);
                cts[ct][slot] = fc.weights[i * self.inputs + j] * blind[i];
            }
        }
        cts
    }

    pub fn output_group_slots(&self, i: usize) -> (usize, Vec<usize>) {
        let (ct, base) = self.slot_of(i, 0);
        (ct, (base..base + self.inputs).collect())
    }

    pub fn block_sum<R: Real>(&self, decoded: &[Vec<R>]) -> Vec<R> {
        assert_eq!(decoded.len(), self.ct_count);
        (0..self.outputs)
            .map(|i| {
                let (ct, slots) = self.output_group_slots(i);
                slots.iter().map(|&s| decoded[ct][s]).sum()
            })
            .collect()
    }
}

/// Layout of the linear step a layer feeds into.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearLayout {
    Conv(ConvLayout),
    Fc(FcLayout),
    /// One value per slot, used for indicators and final results.
    Compact {
        len: usize,
        slots: usize,
    },
}

impl LinearLayout {
    pub fn input_ct_count(&self) -> usize {
        match self {
            LinearLayout::Conv(c) => c.input_ct_count,
            LinearLayout::Fc(_) => 1,
            LinearLayout::Compact { len, slots } => len.div_ceil(*slots).max(1),
        }
    }
}

/// Pack a flat value vector one-per-slot into ceil(len/n) vectors.
pub fn compact_chunks<R: Real>(values: &[R], slots: usize) -> Vec<Vec<R>> {
    if values.is_empty() {
        return vec![vec![R::zero(); slots]];
    }
    values
        .chunks(slots)
        .map(|c| {
            let mut v = c.to_vec();
            v.resize(slots, R::zero());
            v
        })
        .collect()
}

/// Re-lay-out a plaintext activation share for the next layer's linear
/// step. Linear in the share: relayout(a) + relayout(b) = relayout(a + b)
/// slotwise, which is what keeps additive shares additive across layers.
pub fn relayout_share<R: Real>(share: &[R], next: &LinearLayout) -> Vec<Vec<R>> {
    match next {
        LinearLayout::Conv(c) => {
            let t = Tensor::new(c.input, share.to_vec());
            c.expand_input(&t)
        }
        LinearLayout::Fc(f) => vec![f.expand_input(share)],
        LinearLayout::Compact { slots, .. } => compact_chunks(share, *slots),
    }
}
