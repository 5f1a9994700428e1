//! Signed fixed-point encoding between reals and the plaintext ring Z_p.
//!
//! Values are encoded as `round(x * 2^f) mod p` with the centered
//! representative convention: ring elements above p/2 decode as negatives.
//! Every value that crosses the wire sits at the canonical scale `f`; a
//! depth-1 ciphertext-plaintext product sits at `2f`, and the sign-indicator
//! ReLU step produces `3f` (a scale-f indicator times a scale-2f operand).
//! Whichever party next holds a value in plaintext requantizes it back to
//! the f-bit grid.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::modmath::is_prime;
use crate::real::Real;

/// Fixed-point parameters shared by both parties.
///
/// `clip_bound` applies to data values (inputs, activations): encoding clamps
/// to `[-B, B]` and counts saturations. Protocol-internal operands (blinded
/// kernels, indicator factors) use the unclamped entry points, which instead
/// enforce the no-wraparound bound against p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpParams {
    /// Fractional bits f; values are encoded as round(x * 2^f).
    pub scale_bits: u32,
    /// Plaintext modulus p (prime, ≡ 1 mod 2n for the companion PHE params).
    pub plaintext_modulus: u64,
    /// Clip bound B for data values.
    pub clip_bound: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FpError {
    #[error("scale {got} not one of the legal scales {legal:?}")]
    BadScale { got: u32, legal: [u32; 3] },
    #[error("invalid fixed-point parameters: {0}")]
    BadParams(String),
}

impl FpParams {
    pub fn new(scale_bits: u32, plaintext_modulus: u64, clip_bound: f64) -> Result<Self, FpError> {
        let p = FpParams {
            scale_bits,
            plaintext_modulus,
            clip_bound,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults: f = 10, B = 16, used with a 37-bit plaintext prime chosen by
    /// the PHE parameter builder so that scale-3f values up to 2B clear p/2.
    pub fn with_modulus(plaintext_modulus: u64) -> Result<Self, FpError> {
        Self::new(10, plaintext_modulus, 16.0)
    }

    pub fn validate(&self) -> Result<(), FpError> {
        if self.scale_bits < 1 {
            return Err(FpError::BadParams("scale_bits must be >= 1".into()));
        }
        if !is_prime(self.plaintext_modulus) {
            return Err(FpError::BadParams(format!(
                "p = {} is not prime",
                self.plaintext_modulus
            )));
        }
        if !(self.clip_bound > 0.0) {
            return Err(FpError::BadParams("clip_bound must be positive".into()));
        }
        // No wraparound for any in-protocol value: the deepest scale is 3f and
        // the largest value held at that scale is a share, bounded by 2B.
        let deepest = 3 * self.scale_bits;
        if deepest >= 62 {
            return Err(FpError::BadParams("3f too large for u64 grid".into()));
        }
        let need = (2.0 * self.clip_bound) * (1u64 << deepest) as f64;
        if need >= self.plaintext_modulus as f64 / 2.0 {
            return Err(FpError::BadParams(format!(
                "2B * 2^(3f) = {need} does not clear p/2 = {}",
                self.plaintext_modulus / 2
            )));
        }
        Ok(())
    }

    /// Legal decode scales: fresh (f), one product (2f), indicator product (3f).
    pub fn legal_scales(&self) -> [u32; 3] {
        [self.scale_bits, 2 * self.scale_bits, 3 * self.scale_bits]
    }

    /// Grid step 2^-f.
    pub fn grid_step<R: Real>(&self) -> R {
        crate::real::exp2(-(self.scale_bits as i32))
    }

    /// Batching requirement against the companion PHE slot count.
    pub fn check_batching(&self, slots: usize) -> Result<(), FpError> {
        let two_n = 2 * slots as u64;
        if (self.plaintext_modulus - 1) % two_n != 0 {
            return Err(FpError::BadParams(format!(
                "p = {} is not 1 mod 2n = {two_n}",
                self.plaintext_modulus
            )));
        }
        Ok(())
    }
}

/// Counts silent clamps during data encoding; surfaced in run reports.
#[derive(Debug, Default)]
pub struct SaturationCounter(AtomicU64);

impl SaturationCounter {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

#[inline]
fn to_ring(v: i64, p: u64) -> u64 {
    v.rem_euclid(p as i64) as u64
}

/// Centered representative of e in (-p/2, p/2].
#[inline]
pub fn centered(e: u64, p: u64) -> i64 {
    debug_assert!(e < p);
    if e > p / 2 {
        e as i64 - p as i64
    } else {
        e as i64
    }
}

/// Encode a data value at the canonical scale f, clamping to [-B, B].
pub fn encode_scalar<R: Real>(x: R, params: &FpParams) -> u64 {
    encode_scalar_counted(x, params, None)
}

/// As [`encode_scalar`], bumping `sat` when the clamp saturates.
pub fn encode_scalar_counted<R: Real>(
    x: R,
    params: &FpParams,
    sat: Option<&SaturationCounter>,
) -> u64 {
    let bound = R::from_f64(params.clip_bound).expect("clip bound");
    let x = if x > bound {
        if let Some(s) = sat {
            s.bump();
        }
        bound
    } else if x < -bound {
        if let Some(s) = sat {
            s.bump();
        }
        -bound
    } else {
        x
    };
    encode_at_scale(x, params.scale_bits, params)
}

/// Round to the nearest integer, ties toward +infinity. Translation
/// invariant under integer shifts: round(x + k) = round(x) + k, which is
/// what makes share requantization independent of the share offset.
#[inline]
pub fn round_half_up<R: Real>(x: R) -> R {
    (x + R::from_f64(0.5).unwrap()).floor()
}

/// Encode at an explicit scale without clamping. Used for protocol operands
/// (blinded kernels, indicators, masks) whose magnitudes are validated
/// against the ring instead of the data clip bound.
///
/// Panics if the scaled value would wrap mod p; that is a parameterization
/// bug, not a runtime condition.
pub fn encode_at_scale<R: Real>(x: R, scale_bits: u32, params: &FpParams) -> u64 {
    let scaled = x * crate::real::exp2(scale_bits as i32);
    let r = round_half_up(scaled)
        .to_i64()
        .expect("scaled value in i64 range");
    assert!(
        (r.unsigned_abs() as u128) < params.plaintext_modulus as u128 / 2 + 1,
        "scaled value {r} wraps mod p = {}",
        params.plaintext_modulus
    );
    to_ring(r, params.plaintext_modulus)
}

/// Decode a ring element at the stated scale (f, 2f or 3f).
pub fn decode_scalar<R: Real>(
    e: u64,
    params: &FpParams,
    scale_bits_actual: u32,
) -> Result<R, FpError> {
    let legal = params.legal_scales();
    if !legal.contains(&scale_bits_actual) {
        return Err(FpError::BadScale {
            got: scale_bits_actual,
            legal,
        });
    }
    let c = centered(e, params.plaintext_modulus);
    Ok(R::from_i64_exact(c) * crate::real::exp2(-(scale_bits_actual as i32)))
}

/// Clamp a data value to [-B, B], counting saturations.
pub fn clamp_counted<R: Real>(x: R, params: &FpParams, sat: &SaturationCounter) -> R {
    let bound = R::from_f64(params.clip_bound).expect("clip bound");
    if x > bound {
        sat.bump();
        bound
    } else if x < -bound {
        sat.bump();
        -bound
    } else {
        x
    }
}

pub fn encode_vector<R: Real>(xs: &[R], params: &FpParams) -> Vec<u64> {
    xs.iter().map(|&x| encode_scalar(x, params)).collect()
}

pub fn encode_vector_counted<R: Real>(
    xs: &[R],
    params: &FpParams,
    sat: &SaturationCounter,
) -> Vec<u64> {
    xs.iter()
        .map(|&x| encode_scalar_counted(x, params, Some(sat)))
        .collect()
}

pub fn encode_vector_at_scale<R: Real>(xs: &[R], scale_bits: u32, params: &FpParams) -> Vec<u64> {
    xs.iter()
        .map(|&x| encode_at_scale(x, scale_bits, params))
        .collect()
}

pub fn decode_vector<R: Real>(
    es: &[u64],
    params: &FpParams,
    scale_bits_actual: u32,
) -> Result<Vec<R>, FpError> {
    es.iter()
        .map(|&e| decode_scalar(e, params, scale_bits_actual))
        .collect()
}

/// Re-round a value produced at a deeper scale back onto the f-bit grid.
pub fn requantize<R: Real>(y: R, params: &FpParams) -> R {
    round_to_grid(y, params.scale_bits)
}

/// Round onto the 2^-bits grid (same tie rule as the encoder).
pub fn round_to_grid<R: Real>(y: R, bits: u32) -> R {
    let s: R = crate::real::exp2(bits as i32);
    round_half_up(y * s) / s
}

/// True when x is exactly a multiple of 2^-bits.
pub fn on_grid<R: Real>(x: R, bits: u32) -> bool {
    let s: R = crate::real::exp2(bits as i32);
    (x * s).fract() == R::zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modmath::find_ntt_prime;
    use proptest::prelude::*;

    fn params() -> FpParams {
        let p = find_ntt_prime(37, 8192, 0).unwrap();
        FpParams::with_modulus(p).unwrap()
    }

    #[test]
    fn encode_examples() {
        let fp = params();
        assert_eq!(encode_scalar(1.0, &fp), 1024);
        assert_eq!(encode_scalar(0.0, &fp), 0);
        assert_eq!(encode_scalar(-1.5, &fp), fp.plaintext_modulus - 1536);
    }

    #[test]
    fn decode_examples() {
        let fp = params();
        assert_eq!(decode_scalar::<f64>(1024, &fp, 10).unwrap(), 1.0);
        assert_eq!(
            decode_scalar::<f64>(fp.plaintext_modulus - 1536, &fp, 10).unwrap(),
            -1.5
        );
        assert!(decode_scalar::<f64>(0, &fp, 11).is_err());
    }

    #[test]
    fn product_scale() {
        // Oracle: plain real multiplication of the inputs.
        let fp = params();
        let a = encode_scalar(0.7, &fp);
        let b = encode_scalar(0.3, &fp);
        let prod = crate::modmath::mod_mul(a, b, fp.plaintext_modulus);
        let got: f64 = decode_scalar(prod, &fp, 20).unwrap();
        assert!((got - 0.7 * 0.3).abs() <= 2.0f64.powi(-10), "got {got}");
    }

    #[test]
    fn requantize_examples() {
        let fp = params();
        assert_eq!(requantize(0.2099990, &fp), 215.0 / 1024.0);
        assert_eq!(requantize(0.0, &fp), 0.0);
        assert_eq!(requantize(-3.5, &fp), -3.5);
    }

    #[test]
    fn vector_forms() {
        let fp = params();
        assert_eq!(
            encode_vector(&[1.0, -1.0], &fp),
            vec![1024, fp.plaintext_modulus - 1024]
        );
        assert_eq!(encode_vector::<f64>(&[], &fp), Vec::<u64>::new());
        assert_eq!(
            decode_vector::<f64>(&[], &fp, 10).unwrap(),
            Vec::<f64>::new()
        );
    }

    #[test]
    fn saturation_counting() {
        let fp = params();
        let sat = SaturationCounter::new();
        let v = encode_vector_counted(&[100.0, -0.5, -40.0], &fp, &sat);
        assert_eq!(sat.get(), 2);
        assert_eq!(decode_scalar::<f64>(v[0], &fp, 10).unwrap(), fp.clip_bound);
    }

    #[test]
    fn f32_grid_exact() {
        let fp = params();
        let x = 0.125f32;
        let e = encode_scalar(x, &fp);
        assert_eq!(decode_scalar::<f32>(e, &fp, 10).unwrap(), x);
    }

    #[test]
    fn batching_check() {
        let fp = params();
        fp.check_batching(4096).unwrap();
        assert!(fp.check_batching(4095).is_err());
    }

    proptest! {
        // Grid round-trip is exact for |x| <= B.
        #[test]
        fn roundtrip_on_grid(g in -16384i64..=16384) {
            let fp = params();
            let x = g as f64 / 1024.0;
            let e = encode_scalar(x, &fp);
            prop_assert_eq!(decode_scalar::<f64>(e, &fp, 10).unwrap(), x);
        }

        // decode(encode(x)) within half a grid step for arbitrary reals in range.
        #[test]
        fn roundtrip_quantizes(x in -8.0f64..8.0) {
            let fp = params();
            let e = encode_scalar(x, &fp);
            let d: f64 = decode_scalar(e, &fp, 10).unwrap();
            prop_assert!((d - x).abs() <= 2.0f64.powi(-11));
        }

        // Additive homomorphism compatibility under the no-wraparound bound.
        #[test]
        fn additive_compat(a in -7.0f64..7.0, b in -7.0f64..7.0) {
            let fp = params();
            let ea = encode_scalar(a, &fp);
            let eb = encode_scalar(b, &fp);
            let sum = crate::modmath::mod_add(ea, eb, fp.plaintext_modulus);
            let want = decode_scalar::<f64>(ea, &fp, 10).unwrap() + decode_scalar::<f64>(eb, &fp, 10).unwrap();
            prop_assert_eq!(decode_scalar::<f64>(sum, &fp, 10).unwrap(), want);
        }

        // Product scale law on the grid.
        #[test]
        fn product_law(a in -4.0f64..4.0, b in -4.0f64..4.0) {
            let fp = params();
            let ea = encode_scalar(a, &fp);
            let eb = encode_scalar(b, &fp);
            let prod = crate::modmath::mod_mul(ea, eb, fp.plaintext_modulus);
            let da: f64 = decode_scalar(ea, &fp, 10).unwrap();
            let db: f64 = decode_scalar(eb, &fp, 10).unwrap();
            prop_assert_eq!(decode_scalar::<f64>(prod, &fp, 20).unwrap(), da * db);
        }
    }
}
