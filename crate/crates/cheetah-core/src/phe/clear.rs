//! Instrumented plaintext backend: slot vectors in Z_p with simulated
//! ownership. Observationally equivalent to the RLWE backend on every
//! decrypted value, which is exactly what the protocol and counter tests
//! rely on.

use crate::modmath::{mod_add, mod_mul};

pub fn add_slots(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| mod_add(x, y, p)).collect()
}

pub fn mul_slots(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| mod_mul(x, y, p)).collect()
}
