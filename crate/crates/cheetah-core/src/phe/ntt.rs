//! Negacyclic number-theoretic transform over `Z_m[x]/(x^n + 1)`.
//!
//! The forward transform evaluates a polynomial at the odd powers of a
//! primitive 2n-th root of unity; pointwise products in that domain
//! correspond to negacyclic polynomial products. The same transform over
//! the plaintext prime realizes SIMD batching: slot vectors are the
//! evaluation domain, so slotwise ops on ciphertext polynomials act
//! elementwise on slots without any permutation machinery.

use crate::modmath::{mod_add, mod_inv, mod_mul, mod_sub, root_of_unity};

/// Precomputed twiddle tables for one modulus and ring degree.
#[derive(Debug, Clone)]
pub struct NttTable {
    pub modulus: u64,
    pub n: usize,
    /// psi^brv(i), merged-twist forward table.
    psi_rev: Vec<u64>,
    /// psi^{-brv(i)}, inverse table.
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

impl NttTable {
    pub fn new(modulus: u64, n: usize) -> Self {
        assert!(n.is_power_of_two(), "ring degree must be a power of two");
        let two_n = 2 * n as u64;
        let psi = root_of_unity(modulus, two_n);
        let psi_inv = mod_inv(psi, modulus);
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        let mut powers = vec![0u64; n];
        let mut powers_inv = vec![0u64; n];
        for i in 0..n {
            powers[i] = pw;
            powers_inv[i] = pw_inv;
            pw = mod_mul(pw, psi, modulus);
            pw_inv = mod_mul(pw_inv, psi_inv, modulus);
        }
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[i] = powers[r];
            psi_inv_rev[i] = powers_inv[r];
        }
        let n_inv = mod_inv(n as u64, modulus);
        NttTable {
            modulus,
            n,
            psi_rev,
            psi_inv_rev,
            n_inv,
        }
    }

    /// Coefficients -> evaluation domain (in place).
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = self.modulus;
        let mut t = self.n;
        let mut groups = 1usize;
        while groups < self.n {
            t /= 2;
            for i in 0..groups {
                let s = self.psi_rev[groups + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mod_mul(a[j + t], s, m);
                    a[j] = mod_add(u, v, m);
                    a[j + t] = mod_sub(u, v, m);
                }
            }
            groups *= 2;
        }
    }

    /// Evaluation domain -> coefficients (in place).
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m = self.modulus;
        let mut t = 1usize;
        let mut groups = self.n;
        while groups > 1 {
            let h = groups / 2;
            let mut j1 = 0usize;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = mod_add(u, v, m);
                    a[j + t] = mod_mul(mod_sub(u, v, m), s, m);
                }
                j1 += 2 * t;
            }
            t *= 2;
            groups = h;
        }
        for x in a.iter_mut() {
            *x = mod_mul(*x, self.n_inv, m);
        }
    }

    pub fn forward_vec(&self, coeffs: &[u64]) -> Vec<u64> {
        let mut v = coeffs.to_vec();
        self.forward(&mut v);
        v
    }

    pub fn inverse_vec(&self, evals: &[u64]) -> Vec<u64> {
        let mut v = evals.to_vec();
        self.inverse(&mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modmath::find_ntt_prime;
    use rand::{Rng, SeedableRng};

    /// Schoolbook negacyclic product, the independent oracle.
    fn negacyclic_mul(a: &[u64], b: &[u64], m: u64) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let c = mod_mul(a[i], b[j], m);
                let k = i + j;
                if k < n {
                    out[k] = mod_add(out[k], c, m);
                } else {
                    out[k - n] = mod_sub(out[k - n], c, m);
                }
            }
        }
        out
    }

    #[test]
    fn roundtrip() {
        let m = find_ntt_prime(37, 256, 0).unwrap();
        let t = NttTable::new(m, 128);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let orig: Vec<u64> = (0..128).map(|_| rng.gen_range(0..m)).collect();
        let mut a = orig.clone();
        t.forward(&mut a);
        assert_ne!(a, orig);
        t.inverse(&mut a);
        assert_eq!(a, orig);
    }

    #[test]
    fn pointwise_is_negacyclic_product() {
        let m = find_ntt_prime(55, 128, 0).unwrap();
        let t = NttTable::new(m, 64);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        for _ in 0..10 {
            let a: Vec<u64> = (0..64).map(|_| rng.gen_range(0..m)).collect();
            let b: Vec<u64> = (0..64).map(|_| rng.gen_range(0..m)).collect();
            let want = negacyclic_mul(&a, &b, m);
            let fa = t.forward_vec(&a);
            let fb = t.forward_vec(&b);
            let prod: Vec<u64> = fa
                .iter()
                .zip(&fb)
                .map(|(&x, &y)| mod_mul(x, y, m))
                .collect();
            assert_eq!(t.inverse_vec(&prod), want);
        }
    }

    #[test]
    fn x_to_n_is_minus_one() {
        let m = find_ntt_prime(37, 32, 0).unwrap();
        let n = 16;
        let t = NttTable::new(m, n);
        let mut xp = vec![0u64; n];
        xp[1] = 1; // x
        let mut xn1 = vec![0u64; n];
        xn1[n - 1] = 1; // x^{n-1}
        let fa = t.forward_vec(&xp);
        let fb = t.forward_vec(&xn1);
        let prod: Vec<u64> = fa
            .iter()
            .zip(&fb)
            .map(|(&x, &y)| mod_mul(x, y, m))
            .collect();
        let got = t.inverse_vec(&prod);
        let mut want = vec![0u64; n];
        want[0] = m - 1;
        assert_eq!(got, want);
    }
}
