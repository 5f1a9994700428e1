//! Packed homomorphic encryption with exactly the operation set the
//! protocol needs: encrypt, decrypt, ct+ct add, ct+pt add, ct*pt multiply,
//! plus instrumentation counters. Slot rotation/permutation is deliberately
//! absent; channel accumulation is always slot-aligned ct+ct addition.
//!
//! Two backends sit behind one contract: an instrumented `Clear` backend
//! (plaintext slots with simulated ownership) for protocol logic and
//! counter tests, and a private-key RLWE/BFV backend with two NTT-friendly
//! ~55-bit ciphertext primes held in residue form.

mod clear;
pub mod ntt;
mod rlwe;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::fixedpoint::{FpParams, SaturationCounter};
use crate::modmath::find_ntt_prime;

pub use rlwe::NOISE_BUDGET_INFINITE;

/// Which party's key a ciphertext or key belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Owner {
    Client,
    Server,
}

impl Owner {
    pub fn wire_byte(self) -> u8 {
        match self {
            Owner::Client => 0,
            Owner::Server => 1,
        }
    }
    pub fn from_wire(b: u8) -> Result<Self, PheError> {
        match b {
            0 => Ok(Owner::Client),
            1 => Ok(Owner::Server),
            _ => Err(PheError::Serialization("bad owner byte".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Clear,
    Rlwe,
}

#[derive(Debug, thiserror::Error)]
pub enum PheError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("owner mismatch: operation needs {expected:?}, got {got:?}")]
    OwnerMismatch { expected: Owner, got: Owner },
    #[error("scale mismatch: {a} vs {b}")]
    ScaleMismatch { a: u32, b: u32 },
    #[error("multiplicative depth exceeded (ciphertext already at depth 1)")]
    DepthExceeded,
    #[error("noise budget exhausted; parameterization bug")]
    NoiseExhausted,
    #[error("serialization: {0}")]
    Serialization(String),
}

/// BFV-style parameter set: n slots, plaintext prime p, ciphertext modulus
/// q = q0*q1 in residue form, Gaussian error width sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PheParams {
    pub slots: usize,
    pub plaintext_modulus: u64,
    pub q_moduli: [u64; 2],
    pub sigma: f64,
}

impl PheParams {
    /// Derive a parameter set for `slots` slots with a `p_bits`-wide
    /// plaintext prime. Both ciphertext primes satisfy the batching
    /// condition q ≡ 1 (mod 2n); the second is additionally chosen so that
    /// q0*q1 ≡ 1 (mod p), which collapses the plaintext-multiplication
    /// wraparound term (q mod p)*k to k and keeps depth-1 noise far below
    /// Delta/2 even with a wide plaintext prime.
    pub fn generate(slots: usize, p_bits: u32) -> Result<Self, PheError> {
        if !slots.is_power_of_two() {
            return Err(PheError::BadParams(format!(
                "slot count {slots} is not a power of two"
            )));
        }
        let two_n = 2 * slots as u64;
        let p = find_ntt_prime(p_bits, two_n, 0)
            .ok_or_else(|| PheError::BadParams(format!("no {p_bits}-bit prime ≡ 1 mod {two_n}")))?;
        let q0 = find_ntt_prime(55, two_n, 0)
            .ok_or_else(|| PheError::BadParams("no 55-bit NTT prime".into()))?;
        let q1 = Self::find_companion_prime(two_n, p, q0)?;
        let params = PheParams {
            slots,
            plaintext_modulus: p,
            q_moduli: [q0, q1],
            sigma: 3.2,
        };
        params.validate()?;
        Ok(params)
    }

    /// Smallest prime >= 2^54 with q1 ≡ 1 (mod 2n) and q0*q1 ≡ 1 (mod p).
    fn find_companion_prime(two_n: u64, p: u64, q0: u64) -> Result<u64, PheError> {
        use crate::modmath::{is_prime, mod_inv, mod_mul};
        let target = mod_inv(q0 % p, p); // q1 mod p
                                         // CRT: x ≡ 1 (mod 2n), x ≡ target (mod p). With x = 1 + 2n*t,
                                         // t ≡ (target - 1) * (2n)^{-1} (mod p).
        let t0 = mod_mul((target + p - 1) % p, mod_inv(two_n % p, p), p);
        let x0 = 1u128 + two_n as u128 * t0 as u128;
        let step = two_n as u128 * p as u128;
        let lo = 1u128 << 54;
        let mut x = if x0 >= lo {
            x0
        } else {
            x0 + step * ((lo - x0).div_ceil(step))
        };
        while x < (1u128 << 62) {
            let c = x as u64;
            if c != q0 && is_prime(c) {
                debug_assert_eq!(mod_mul(q0 % p, c % p, p), 1);
                return Ok(c);
            }
            x += step;
        }
        Err(PheError::BadParams(
            "no companion ciphertext prime in range".into(),
        ))
    }

    /// Default protocol parameters: n = 4096, 37-bit p.
    pub fn recommended() -> Self {
        Self::generate(4096, 37).expect("recommended parameters exist")
    }

    pub fn validate(&self) -> Result<(), PheError> {
        let two_n = 2 * self.slots as u64;
        if !self.slots.is_power_of_two() {
            return Err(PheError::BadParams("n must be a power of two".into()));
        }
        for &m in [self.plaintext_modulus].iter().chain(self.q_moduli.iter()) {
            if !crate::modmath::is_prime(m) {
                return Err(PheError::BadParams(format!("{m} is not prime")));
            }
            if (m - 1) % two_n != 0 {
                return Err(PheError::BadParams(format!(
                    "{m} is not 1 mod 2n = {two_n}"
                )));
            }
        }
        if self.q_moduli[0] == self.q_moduli[1] {
            return Err(PheError::BadParams(
                "q residue primes must be distinct".into(),
            ));
        }
        let p = self.plaintext_modulus;
        if (self.q() % p as u128) != 1 {
            return Err(PheError::BadParams(
                "q must be 1 mod p (wraparound control)".into(),
            ));
        }
        // Delta must dominate post-multiplication noise by >= 2^10. With
        // q ≡ 1 mod p the dominant term is n * (p/2) * fresh-error.
        let q_bits = self.log2_q();
        let p_bits = (p as f64).log2();
        let n_bits = (self.slots as f64).log2();
        let delta_bits = q_bits - p_bits;
        let mul_noise_bits = n_bits + p_bits + 8.0; // n * |pt| * fresh error
        if delta_bits - 1.0 < mul_noise_bits + 10.0 {
            return Err(PheError::BadParams(format!(
                "delta ({delta_bits:.0} bits) does not clear mul noise ({mul_noise_bits:.0} bits) by 2^10"
            )));
        }
        Ok(())
    }

    /// Companion fixed-point parameters sharing this plaintext modulus.
    pub fn fixedpoint(&self) -> FpParams {
        FpParams::with_modulus(self.plaintext_modulus)
            .expect("plaintext prime fits the fp defaults")
    }

    pub fn q(&self) -> u128 {
        self.q_moduli[0] as u128 * self.q_moduli[1] as u128
    }

    pub fn delta(&self) -> u128 {
        self.q() / self.plaintext_modulus as u128
    }

    pub fn log2_q(&self) -> f64 {
        (self.q_moduli[0] as f64).log2() + (self.q_moduli[1] as f64).log2()
    }

    /// 8-byte digest pinning every parameter; exchanged in HELLO and stamped
    /// on each serialized ciphertext.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64; // FNV-1a
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.slots as u64);
        eat(self.plaintext_modulus);
        eat(self.q_moduli[0]);
        eat(self.q_moduli[1]);
        eat(self.sigma.to_bits());
        h
    }

    /// Serialized ciphertext size in bytes (both backends share the format).
    pub fn ciphertext_bytes(&self) -> usize {
        11 + 2 * self.slots * self.q_moduli.len() * 8
    }
}

/// Slot vector in Z_p^n with scale metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedPlaintext {
    pub slots: Vec<u64>,
    pub scale_bits: u32,
}

impl PackedPlaintext {
    /// Builds a packed plaintext, zero-padding to exactly n slots.
    pub fn new(mut slots: Vec<u64>, scale_bits: u32, params: &PheParams) -> Self {
        assert!(
            slots.len() <= params.slots,
            "value count {} exceeds slot count {}",
            slots.len(),
            params.slots
        );
        slots.resize(params.slots, 0);
        PackedPlaintext { slots, scale_bits }
    }

    pub fn zeros(scale_bits: u32, params: &PheParams) -> Self {
        PackedPlaintext {
            slots: vec![0; params.slots],
            scale_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum KeyBody {
    // The id is the clear backend's stand-in key material.
    Clear { id: u64 },
    Rlwe { key: rlwe::RlweSecretKey },
}

/// Party-held secret key; never crosses the transport.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub owner: Owner,
    body: KeyBody,
}

#[derive(Debug, Clone)]
enum CtBody {
    Clear { slots: Vec<u64>, nonce: u64 },
    Rlwe { ct: rlwe::RlweCiphertext },
}

/// Packed ciphertext tagged with its owner, scale, and multiplicative depth.
#[derive(Debug, Clone)]
pub struct Ciphertext {
    pub owner: Owner,
    pub scale_bits: u32,
    pub mult_depth: u8,
    body: CtBody,
}

/// Per-session operation tallies; `perm` exists only to prove it stays zero.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub mult_plain: u64,
    pub add_ct: u64,
    pub add_plain: u64,
    pub perm: u64,
    pub encrypt: u64,
    pub decrypt: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

impl OpCounters {
    pub fn merge(&mut self, other: &OpCounters) {
        self.mult_plain += other.mult_plain;
        self.add_ct += other.add_ct;
        self.add_plain += other.add_plain;
        self.perm += other.perm;
        self.encrypt += other.encrypt;
        self.decrypt += other.decrypt;
        self.bytes_sent += other.bytes_sent;
        self.bytes_received += other.bytes_received;
    }

    /// Difference since an earlier snapshot.
    pub fn since(&self, base: &OpCounters) -> OpCounters {
        OpCounters {
            mult_plain: self.mult_plain - base.mult_plain,
            add_ct: self.add_ct - base.add_ct,
            add_plain: self.add_plain - base.add_plain,
            perm: self.perm - base.perm,
            encrypt: self.encrypt - base.encrypt,
            decrypt: self.decrypt - base.decrypt,
            bytes_sent: self.bytes_sent - base.bytes_sent,
            bytes_received: self.bytes_received - base.bytes_received,
        }
    }
}

/// Stateless evaluator for one backend and parameter set.
#[derive(Debug)]
pub struct PheEngine {
    pub params: PheParams,
    pub backend: Backend,
    rlwe: Option<rlwe::RlweContext>,
}

impl PheEngine {
    pub fn new(params: PheParams, backend: Backend) -> Result<Self, PheError> {
        params.validate()?;
        let rlwe = match backend {
            Backend::Clear => None,
            Backend::Rlwe => Some(rlwe::RlweContext::new(&params)?),
        };
        Ok(PheEngine {
            params,
            backend,
            rlwe,
        })
    }

    fn rlwe(&self) -> &rlwe::RlweContext {
        self.rlwe.as_ref().expect("rlwe backend context")
    }

    pub fn keygen(&self, owner: Owner, seed: u64) -> SecretKey {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ ((owner.wire_byte() as u64) << 63));
        let body = match self.backend {
            Backend::Clear => KeyBody::Clear {
                id: rand::Rng::gen(&mut rng),
            },
            Backend::Rlwe => KeyBody::Rlwe {
                key: self.rlwe().keygen(&mut rng),
            },
        };
        SecretKey { owner, body }
    }

    pub fn encrypt(
        &self,
        pt: &PackedPlaintext,
        key: &SecretKey,
        rng: &mut ChaCha20Rng,
    ) -> Ciphertext {
        assert_eq!(
            pt.slots.len(),
            self.params.slots,
            "plaintext must span all slots"
        );
        let body = match (&key.body, self.backend) {
            (KeyBody::Clear { .. }, Backend::Clear) => CtBody::Clear {
                slots: pt.slots.clone(),
                nonce: rand::Rng::gen(rng),
            },
            (KeyBody::Rlwe { key }, Backend::Rlwe) => CtBody::Rlwe {
                ct: self.rlwe().encrypt(&pt.slots, key, rng),
            },
            _ => panic!("key backend does not match engine backend"),
        };
        Ciphertext {
            owner: key.owner,
            scale_bits: pt.scale_bits,
            mult_depth: 0,
            body,
        }
    }

    pub fn decrypt(&self, ct: &Ciphertext, key: &SecretKey) -> Result<PackedPlaintext, PheError> {
        if ct.owner != key.owner {
            return Err(PheError::OwnerMismatch {
                expected: ct.owner,
                got: key.owner,
            });
        }
        let slots = match (&ct.body, &key.body) {
            (CtBody::Clear { slots, .. }, KeyBody::Clear { .. }) => slots.clone(),
            (CtBody::Rlwe { ct: body }, KeyBody::Rlwe { key }) => {
                if self.rlwe().noise_budget(body, key) == 0 {
                    return Err(PheError::NoiseExhausted);
                }
                self.rlwe().decrypt(body, key)
            }
            _ => panic!("ciphertext backend does not match key backend"),
        };
        Ok(PackedPlaintext {
            slots,
            scale_bits: ct.scale_bits,
        })
    }

    pub fn add_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PheError> {
        if a.owner != b.owner {
            return Err(PheError::OwnerMismatch {
                expected: a.owner,
                got: b.owner,
            });
        }
        if a.scale_bits != b.scale_bits {
            return Err(PheError::ScaleMismatch {
                a: a.scale_bits,
                b: b.scale_bits,
            });
        }
        let body = match (&a.body, &b.body) {
            (CtBody::Clear { slots: sa, nonce }, CtBody::Clear { slots: sb, .. }) => {
                CtBody::Clear {
                    slots: clear::add_slots(sa, sb, self.params.plaintext_modulus),
                    nonce: *nonce,
                }
            }
            (CtBody::Rlwe { ct: ca }, CtBody::Rlwe { ct: cb }) => CtBody::Rlwe {
                ct: self.rlwe().add_ct(ca, cb),
            },
            _ => panic!("mixed-backend ciphertext addition"),
        };
        Ok(Ciphertext {
            owner: a.owner,
            scale_bits: a.scale_bits,
            mult_depth: a.mult_depth.max(b.mult_depth),
            body,
        })
    }

    pub fn add_plain(&self, a: &Ciphertext, u: &PackedPlaintext) -> Result<Ciphertext, PheError> {
        if a.scale_bits != u.scale_bits {
            return Err(PheError::ScaleMismatch {
                a: a.scale_bits,
                b: u.scale_bits,
            });
        }
        let body = match &a.body {
            CtBody::Clear { slots, nonce } => CtBody::Clear {
                slots: clear::add_slots(slots, &u.slots, self.params.plaintext_modulus),
                nonce: *nonce,
            },
            CtBody::Rlwe { ct } => CtBody::Rlwe {
                ct: self.rlwe().add_plain(ct, &u.slots),
            },
        };
        Ok(Ciphertext {
            owner: a.owner,
            scale_bits: a.scale_bits,
            mult_depth: a.mult_depth,
            body,
        })
    }

    pub fn mul_plain(&self, a: &Ciphertext, u: &PackedPlaintext) -> Result<Ciphertext, PheError> {
        if a.mult_depth != 0 {
            return Err(PheError::DepthExceeded);
        }
        let body = match &a.body {
            CtBody::Clear { slots, nonce } => CtBody::Clear {
                slots: clear::mul_slots(slots, &u.slots, self.params.plaintext_modulus),
                nonce: *nonce,
            },
            CtBody::Rlwe { ct } => CtBody::Rlwe {
                ct: self.rlwe().mul_plain(ct, &u.slots),
            },
        };
        Ok(Ciphertext {
            owner: a.owner,
            scale_bits: a.scale_bits + u.scale_bits,
            mult_depth: 1,
            body,
        })
    }

    /// Remaining noise headroom in bits; the clear backend reports the
    /// infinite sentinel.
    pub fn noise_budget(&self, ct: &Ciphertext, key: &SecretKey) -> Result<u32, PheError> {
        if ct.owner != key.owner {
            return Err(PheError::OwnerMismatch {
                expected: ct.owner,
                got: key.owner,
            });
        }
        match (&ct.body, &key.body) {
            (CtBody::Clear { .. }, _) => Ok(NOISE_BUDGET_INFINITE),
            (CtBody::Rlwe { ct: body }, KeyBody::Rlwe { key }) => {
                Ok(self.rlwe().noise_budget(body, key))
            }
            _ => panic!("ciphertext backend does not match key backend"),
        }
    }

    /// Wire form: params digest (8B), owner (1B), scale_bits (1B),
    /// mult_depth (1B), then 2*n*(#q residues) little-endian words.
    pub fn serialize_ct(&self, ct: &Ciphertext) -> Vec<u8> {
        let n = self.params.slots;
        let words = 2 * n * self.params.q_moduli.len();
        let mut out = Vec::with_capacity(11 + words * 8);
        out.extend_from_slice(&self.params.digest().to_le_bytes());
        out.push(ct.owner.wire_byte());
        assert!(ct.scale_bits < 256);
        out.push(ct.scale_bits as u8);
        out.push(ct.mult_depth);
        match &ct.body {
            CtBody::Clear { slots, nonce } => {
                for &s in slots {
                    out.extend_from_slice(&s.to_le_bytes());
                }
                out.extend_from_slice(&nonce.to_le_bytes());
                out.resize(11 + words * 8, 0);
            }
            CtBody::Rlwe { ct } => {
                for poly in [&ct.c0, &ct.c1] {
                    for residue in &poly.residues {
                        for &w in residue {
                            out.extend_from_slice(&w.to_le_bytes());
                        }
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), self.params.ciphertext_bytes());
        out
    }

    pub fn deserialize_ct(&self, bytes: &[u8]) -> Result<Ciphertext, PheError> {
        let expect = self.params.ciphertext_bytes();
        if bytes.len() != expect {
            return Err(PheError::Serialization(format!(
                "ciphertext length {} != {expect}",
                bytes.len()
            )));
        }
        let digest = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
        if digest != self.params.digest() {
            return Err(PheError::Serialization("params digest mismatch".into()));
        }
        let owner = Owner::from_wire(bytes[8])?;
        let scale_bits = bytes[9] as u32;
        let mult_depth = bytes[10];
        let n = self.params.slots;
        let mut words = bytes[11..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()));
        let body = match self.backend {
            Backend::Clear => {
                let slots: Vec<u64> = (&mut words).take(n).collect();
                let nonce = words.next().unwrap_or(0);
                for s in &slots {
                    if *s >= self.params.plaintext_modulus {
                        return Err(PheError::Serialization("slot out of ring range".into()));
                    }
                }
                CtBody::Clear { slots, nonce }
            }
            Backend::Rlwe => {
                let mut polys = Vec::with_capacity(2);
                for _ in 0..2 {
                    let mut residues = Vec::with_capacity(self.params.q_moduli.len());
                    for &qi in &self.params.q_moduli {
                        let r: Vec<u64> = (&mut words).take(n).collect();
                        if r.iter().any(|&w| w >= qi) {
                            return Err(PheError::Serialization("residue out of range".into()));
                        }
                        residues.push(r);
                    }
                    polys.push(rlwe::RnsPoly { residues });
                }
                let c1 = polys.pop().unwrap();
                let c0 = polys.pop().unwrap();
                CtBody::Rlwe {
                    ct: rlwe::RlweCiphertext { c0, c1 },
                }
            }
        };
        Ok(Ciphertext {
            owner,
            scale_bits,
            mult_depth,
            body,
        })
    }
}

/// One party's handle on the engine: counters, encryption randomness, and
/// the saturation tally. Confined to a single logical thread.
pub struct PheSession {
    pub engine: Arc<PheEngine>,
    counters: OpCounters,
    rng: ChaCha20Rng,
    pub saturation: SaturationCounter,
}

impl PheSession {
    pub fn new(engine: Arc<PheEngine>, seed: u64) -> Self {
        PheSession {
            engine,
            counters: OpCounters::default(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            saturation: SaturationCounter::new(),
        }
    }

    pub fn params(&self) -> &PheParams {
        &self.engine.params
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn encrypt(&mut self, pt: &PackedPlaintext, key: &SecretKey) -> Ciphertext {
        self.counters.encrypt += 1;
        self.engine.encrypt(pt, key, &mut self.rng)
    }

    pub fn decrypt(
        &mut self,
        ct: &Ciphertext,
        key: &SecretKey,
    ) -> Result<PackedPlaintext, PheError> {
        self.counters.decrypt += 1;
        self.engine.decrypt(ct, key)
    }

    pub fn add_ct(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PheError> {
        self.counters.add_ct += 1;
        self.engine.add_ct(a, b)
    }

    pub fn add_plain(
        &mut self,
        a: &Ciphertext,
        u: &PackedPlaintext,
    ) -> Result<Ciphertext, PheError> {
        self.counters.add_plain += 1;
        self.engine.add_plain(a, u)
    }

    pub fn mul_plain(
        &mut self,
        a: &Ciphertext,
        u: &PackedPlaintext,
    ) -> Result<Ciphertext, PheError> {
        self.counters.mult_plain += 1;
        self.engine.mul_plain(a, u)
    }

    pub fn note_sent(&mut self, bytes: usize) {
        self.counters.bytes_sent += bytes as u64;
    }

    pub fn note_received(&mut self, bytes: usize) {
        self.counters.bytes_received += bytes as u64;
    }

    pub fn counters_snapshot(&self) -> OpCounters {
        self.counters
    }

    pub fn counters_reset(&mut self) {
        self.counters = OpCounters::default();
    }
}

#[cfg(test)]
mod tests;
