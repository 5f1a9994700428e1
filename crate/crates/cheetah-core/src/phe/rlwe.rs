//! Private-key BFV over Z_q[x]/(x^n + 1), q = q0*q1 in residue (RNS) form.
//!
//! Ring elements are kept in the NTT evaluation domain throughout, so
//! ciphertext addition and ciphertext-plaintext multiplication are
//! pointwise. Decryption reconstructs coefficients through Garner's CRT
//! and rescales by Delta = floor(q/p); with a 37-bit p and ~110-bit q the
//! depth-1 noise never comes near Delta/2.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::ntt::NttTable;
use super::{PheError, PheParams};
use crate::modmath::{mod_add, mod_inv, mod_mul, mod_sub};

/// Sentinel returned by the clear backend (and by a ciphertext with no
/// measurable noise).
pub const NOISE_BUDGET_INFINITE: u32 = u32::MAX;

/// Polynomial in RNS + NTT form: one evaluation vector per q prime.
#[derive(Debug, Clone, PartialEq)]
pub struct RnsPoly {
    pub residues: Vec<Vec<u64>>,
}

impl RnsPoly {
    fn zip_with(&self, other: &RnsPoly, moduli: &[u64], f: fn(u64, u64, u64) -> u64) -> RnsPoly {
        let residues = self
            .residues
            .iter()
            .zip(&other.residues)
            .zip(moduli)
            .map(|((a, b), &m)| a.iter().zip(b).map(|(&x, &y)| f(x, y, m)).collect())
            .collect();
        RnsPoly { residues }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlweSecretKey {
    s_ntt: RnsPoly,
}

#[derive(Debug, Clone)]
pub struct RlweCiphertext {
    pub c0: RnsPoly,
    pub c1: RnsPoly,
}

#[derive(Debug)]
pub struct RlweContext {
    n: usize,
    p: u64,
    q_moduli: [u64; 2],
    q: u128,
    delta: u128,
    sigma: f64,
    q_tables: Vec<NttTable>,
    p_table: NttTable,
    inv_q0_mod_q1: u64,
}

impl RlweContext {
    pub fn new(params: &PheParams) -> Result<Self, PheError> {
        let [q0, q1] = params.q_moduli;
        Ok(RlweContext {
            n: params.slots,
            p: params.plaintext_modulus,
            q_moduli: params.q_moduli,
            q: params.q(),
            delta: params.delta(),
            sigma: params.sigma,
            q_tables: vec![
                NttTable::new(q0, params.slots),
                NttTable::new(q1, params.slots),
            ],
            p_table: NttTable::new(params.plaintext_modulus, params.slots),
            inv_q0_mod_q1: mod_inv(q0 % q1, q1),
        })
    }

    /// Slots (evaluation domain over Z_p) -> plaintext polynomial coefficients.
    fn slots_to_coeffs(&self, slots: &[u64]) -> Vec<u64> {
        self.p_table.inverse_vec(slots)
    }

    fn coeffs_to_slots(&self, coeffs: &[u64]) -> Vec<u64> {
        self.p_table.forward_vec(coeffs)
    }

    /// Coefficient vectors per prime -> NTT-form RnsPoly.
    fn to_ntt(&self, coeffs_per_prime: Vec<Vec<u64>>) -> RnsPoly {
        let residues = coeffs_per_prime
            .into_iter()
            .zip(&self.q_tables)
            .map(|(mut c, t)| {
                t.forward(&mut c);
                c
            })
            .collect();
        RnsPoly { residues }
    }

    /// Reconstruct the centered coefficient vector of an NTT-form poly.
    fn to_centered_coeffs(&self, poly: &RnsPoly) -> Vec<i128> {
        let [q0, _q1] = self.q_moduli;
        let c0 = self.q_tables[0].inverse_vec(&poly.residues[0]);
        let c1 = self.q_tables[1].inverse_vec(&poly.residues[1]);
        let q1m = self.q_moduli[1];
        let half_q = self.q / 2;
        c0.iter()
            .zip(&c1)
            .map(|(&x0, &x1)| {
                // Garner: v = x0 + q0 * ((x1 - x0) * q0^{-1} mod q1)
                let h = mod_mul(mod_sub(x1, x0 % q1m, q1m), self.inv_q0_mod_q1, q1m);
                let v = x0 as u128 + q0 as u128 * h as u128;
                if v > half_q {
                    v as i128 - self.q as i128
                } else {
                    v as i128
                }
            })
            .collect()
    }

    pub fn keygen(&self, rng: &mut ChaCha20Rng) -> RlweSecretKey {
        // Uniform ternary secret.
        let tern: Vec<i8> = (0..self.n).map(|_| rng.gen_range(-1i8..=1)).collect();
        let coeffs = self
            .q_moduli
            .iter()
            .map(|&qi| {
                tern.iter()
                    .map(|&t| (t as i64).rem_euclid(qi as i64) as u64)
                    .collect()
            })
            .collect();
        RlweSecretKey {
            s_ntt: self.to_ntt(coeffs),
        }
    }

    fn sample_error(&self, rng: &mut ChaCha20Rng) -> Vec<i64> {
        let normal = Normal::new(0.0, self.sigma).expect("valid sigma");
        (0..self.n)
            .map(|_| normal.sample(rng).round() as i64)
            .collect()
    }

    pub fn encrypt(
        &self,
        slots: &[u64],
        key: &RlweSecretKey,
        rng: &mut ChaCha20Rng,
    ) -> RlweCiphertext {
        let m = self.slots_to_coeffs(slots);
        let e = self.sample_error(rng);
        // d = Delta*m + e, per prime, then into NTT form.
        let coeffs: Vec<Vec<u64>> = self
            .q_moduli
            .iter()
            .map(|&qi| {
                let delta_qi = (self.delta % qi as u128) as u64;
                m.iter()
                    .zip(&e)
                    .map(|(&mj, &ej)| {
                        let dm = mod_mul(delta_qi, mj % qi, qi);
                        mod_add(dm, ej.rem_euclid(qi as i64) as u64, qi)
                    })
                    .collect()
            })
            .collect();
        let d = self.to_ntt(coeffs);
        // c1 uniform (sampled directly in the evaluation domain), c0 = d - c1*s.
        let c1 = RnsPoly {
            residues: self
                .q_moduli
                .iter()
                .map(|&qi| (0..self.n).map(|_| rng.gen_range(0..qi)).collect())
                .collect(),
        };
        let c1s = c1.zip_with(&key.s_ntt, &self.q_moduli, mod_mul);
        let c0 = d.zip_with(&c1s, &self.q_moduli, mod_sub);
        RlweCiphertext { c0, c1 }
    }

    /// Raw phase c0 + c1*s, centered.
    fn phase(&self, ct: &RlweCiphertext, key: &RlweSecretKey) -> Vec<i128> {
        let c1s = ct.c1.zip_with(&key.s_ntt, &self.q_moduli, mod_mul);
        let x = ct.c0.zip_with(&c1s, &self.q_moduli, mod_add);
        self.to_centered_coeffs(&x)
    }

    pub fn decrypt(&self, ct: &RlweCiphertext, key: &RlweSecretKey) -> Vec<u64> {
        let half_delta = (self.delta / 2) as i128;
        let coeffs: Vec<u64> = self
            .phase(ct, key)
            .into_iter()
            .map(|v| {
                let m = (v + half_delta).div_euclid(self.delta as i128);
                m.rem_euclid(self.p as i128) as u64
            })
            .collect();
        self.coeffs_to_slots(&coeffs)
    }

    pub fn noise_budget(&self, ct: &RlweCiphertext, key: &RlweSecretKey) -> u32 {
        let half_delta = (self.delta / 2) as i128;
        let max_err = self
            .phase(ct, key)
            .into_iter()
            .map(|v| {
                let m = (v + half_delta).div_euclid(self.delta as i128);
                (v - m * self.delta as i128).unsigned_abs()
            })
            .max()
            .unwrap_or(0);
        if max_err == 0 {
            return NOISE_BUDGET_INFINITE;
        }
        let err_bits = 128 - max_err.leading_zeros();
        let cap_bits = 128 - (self.delta / 2).leading_zeros();
        cap_bits.saturating_sub(err_bits)
    }

    pub fn add_ct(&self, a: &RlweCiphertext, b: &RlweCiphertext) -> RlweCiphertext {
        RlweCiphertext {
            c0: a.c0.zip_with(&b.c0, &self.q_moduli, mod_add),
            c1: a.c1.zip_with(&b.c1, &self.q_moduli, mod_add),
        }
    }

    pub fn add_plain(&self, a: &RlweCiphertext, slots: &[u64]) -> RlweCiphertext {
        let m = self.slots_to_coeffs(slots);
        let coeffs: Vec<Vec<u64>> = self
            .q_moduli
            .iter()
            .map(|&qi| {
                m.iter()
                    .map(|&mj| {
                        let c = crate::fixedpoint::centered(mj, self.p);
                        let dm = self.delta as i128 * c as i128;
                        dm.rem_euclid(qi as i128) as u64
                    })
                    .collect()
            })
            .collect();
        let dm = self.to_ntt(coeffs);
        RlweCiphertext {
            c0: a.c0.zip_with(&dm, &self.q_moduli, mod_add),
            c1: a.c1.clone(),
        }
    }

    pub fn mul_plain(&self, a: &RlweCiphertext, slots: &[u64]) -> RlweCiphertext {
        let m = self.slots_to_coeffs(slots);
        // Centered lift keeps the multiplier's coefficients small in
        // magnitude, which is what bounds the noise growth.
        let coeffs: Vec<Vec<u64>> = self
            .q_moduli
            .iter()
            .map(|&qi| {
                m.iter()
                    .map(|&mj| crate::fixedpoint::centered(mj, self.p).rem_euclid(qi as i64) as u64)
                    .collect()
            })
            .collect();
        let u = self.to_ntt(coeffs);
        RlweCiphertext {
            c0: a.c0.zip_with(&u, &self.q_moduli, mod_mul),
            c1: a.c1.zip_with(&u, &self.q_moduli, mod_mul),
        }
    }
}
