//! Closed-form operation counts the implementation must hit, derived from
//! the layer layouts. The bench command asserts measured counters equal
//! these predictions layer by layer; the analytic complexity-table model in
//! the CLI follows the published accounting convention for cross-scheme
//! comparison.

use super::{LayerPlan, LinearStep};
use crate::nn::ActivationKind;

/// Combined (both parties) predicted counts for one protocol layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCountModel {
    pub mult: u64,
    pub add: u64,
    pub perm: u64,
    pub encrypt: u64,
    pub decrypt: u64,
}

/// Predict one layer's counts under the implementation's accounting:
/// ct+ct and ct+pt additions both count as Add.
pub fn predict_layer(plans: &[LayerPlan], l: usize, slots: usize) -> LayerCountModel {
    let plan = &plans[l];
    let compact = plan.compact_ct_count(slots) as u64;
    let next_in = super::next_layout(plans, l, slots).input_ct_count() as u64;
    let (linear_mult, linear_add) = match &plan.linear {
        LinearStep::Conv { layout, .. } => {
            let in_cts = layout.input_ct_count as u64;
            let segs = layout.output_cts_per_kernel() as u64;
            let co = layout.out_channels as u64;
            // Per kernel: one mult per input ct, aligned adds across input
            // cts into each segment, one mask addition per output ct.
            (in_cts * co, (in_cts - segs) * co + segs * co)
        }
        LinearStep::Fc { layout, .. } => {
            let cts = layout.ct_count as u64;
            (cts, cts)
        }
    };
    let mut m = LayerCountModel {
        mult: linear_mult,
        add: linear_add,
        perm: 0,
        // Client encrypts the first layer's input; later layers are fed by
        // the share exchange below.
        encrypt: if l == 0 {
            plan.linear.input_ct_count() as u64
        } else {
            0
        },
        decrypt: plan.linear.output_ct_count() as u64,
    };
    match plan.activation {
        None => {}
        Some(ActivationKind::Relu) => {
            // Recovery: 2 mults + 1 add per compact ct; client share
            // subtraction: 1 add per ct; server absorb: 1 add per next ct.
            m.mult += 2 * compact;
            m.add += compact + compact + next_in;
            m.encrypt += next_in;
            m.decrypt += compact;
        }
        Some(ActivationKind::Sigmoid) | Some(ActivationKind::Tanh) => {
            // Client denominator: 1 mult + 1 add per ct; server recovery:
            // 1 mult per ct.
            m.mult += compact + compact;
            m.add += compact;
            m.decrypt += compact;
            if plan.terminal {
                m.decrypt += compact; // client reads the result
            } else {
                // Mask split, client decrypt, re-upload, absorb.
                m.add += compact + next_in;
                m.decrypt += compact;
                m.encrypt += next_in;
            }
        }
        Some(ActivationKind::Softmax) => {
            // Client partial: 1 mult + 1 add per ct, plus the e^y upload;
            // server recovery: 1 mult per ct.
            m.mult += compact + compact;
            m.add += compact;
            m.encrypt += compact;
            m.decrypt += compact + compact;
        }
    }
    m
}

pub fn predict_all(plans: &[LayerPlan], slots: usize) -> Vec<LayerCountModel> {
    (0..plans.len())
        .map(|l| predict_layer(plans, l, slots))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gen_random_network, NetTemplate};
    use crate::protocol::plan_network;

    #[test]
    fn siso_conv_relu_is_three_mults_four_adds() {
        let net = gen_random_network::<f64>(NetTemplate::Tiny, 1);
        let plans = plan_network(&net, 256).unwrap();
        let m = predict_layer(&plans, 0, 256);
        assert_eq!((m.mult, m.add, m.perm), (3, 4, 0));
    }

    #[test]
    fn neta_layer_counts_are_structured() {
        let net = gen_random_network::<f64>(NetTemplate::NetA, 1);
        let plans = plan_network(&net, 4096).unwrap();
        let models = predict_all(&plans, 4096);
        assert_eq!(models.len(), 3);
        assert!(models.iter().all(|m| m.perm == 0));
        // Terminal FC has no activation: linear counts only.
        let last = models.last().unwrap();
        assert_eq!(last.mult, 1);
        assert_eq!(last.add, 1);
    }
}
