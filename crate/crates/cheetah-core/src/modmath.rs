//! Modular arithmetic over word-sized primes, plus deterministic prime
//! search for NTT-friendly moduli (q ≡ 1 mod 2n).

/// (a + b) mod m, assuming a, b < m.
#[inline]
pub fn mod_add(a: u64, b: u64, m: u64) -> u64 {
    let s = a.wrapping_add(b);
    if s >= m || s < a {
        s.wrapping_sub(m)
    } else {
        s
    }
}

/// (a - b) mod m, assuming a, b < m.
#[inline]
pub fn mod_sub(a: u64, b: u64, m: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        m - b + a
    }
}

/// (a * b) mod m via 128-bit widening.
#[inline]
pub fn mod_mul(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// base^exp mod m.
pub fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, m);
        }
        base = mod_mul(base, base, m);
        exp >>= 1;
    }
    acc
}

/// a^(-1) mod m for prime m.
pub fn mod_inv(a: u64, m: u64) -> u64 {
    mod_pow(a, m - 2, m)
}

/// Deterministic Miller-Rabin for u64 (the listed bases are exact below 2^64).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest prime with the given bit width that is ≡ 1 (mod modulus_step),
/// skipping `skip` hits (so distinct co-prime moduli can be drawn from the
/// same width). Returns None if the width is exhausted.
pub fn find_ntt_prime(bits: u32, modulus_step: u64, skip: usize) -> Option<u64> {
    assert!(bits >= 2 && bits < 64);
    let hi = (1u128 << bits) as u64 - 1;
    let lo = 1u64 << (bits - 1);
    // Largest candidate ≡ 1 mod step at or below hi.
    let mut c = hi - ((hi - 1) % modulus_step);
    let mut remaining = skip;
    while c >= lo {
        if is_prime(c) {
            if remaining == 0 {
                return Some(c);
            }
            remaining -= 1;
        }
        if c < modulus_step {
            break;
        }
        c -= modulus_step;
    }
    None
}

/// A generator of the multiplicative group mod prime p (smallest witness).
pub fn primitive_root(p: u64) -> u64 {
    // Factor p-1 by trial division; p-1 is smooth enough at our sizes.
    let mut factors = Vec::new();
    let mut m = p - 1;
    let mut d = 2u64;
    while d * d <= m {
        if m % d == 0 {
            factors.push(d);
            while m % d == 0 {
                m /= d;
            }
        }
        d += 1;
    }
    if m > 1 {
        factors.push(m);
    }
    'cand: for g in 2..p {
        for &f in &factors {
            if mod_pow(g, (p - 1) / f, p) == 1 {
                continue 'cand;
            }
        }
        return g;
    }
    unreachable!("prime has a generator")
}

/// Primitive 2n-th root of unity mod p (requires p ≡ 1 mod 2n).
pub fn root_of_unity(p: u64, two_n: u64) -> u64 {
    assert_eq!((p - 1) % two_n, 0, "p must be 1 mod 2n");
    let g = primitive_root(p);
    let psi = mod_pow(g, (p - 1) / two_n, p);
    debug_assert_eq!(mod_pow(psi, two_n, p), 1);
    debug_assert_ne!(mod_pow(psi, two_n / 2, p), 1);
    psi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_primes() {
        assert!(is_prime(2));
        assert!(is_prime(7919));
        assert!(!is_prime(1));
        assert!(!is_prime(561)); // Carmichael
        assert!(is_prime(2013265921));
    }

    #[test]
    fn ntt_prime_search() {
        let p = find_ntt_prime(37, 8192, 0).unwrap();
        assert!(is_prime(p));
        assert_eq!(p % 8192, 1);
        assert_eq!(64 - p.leading_zeros(), 37);
        let q0 = find_ntt_prime(55, 8192, 0).unwrap();
        let q1 = find_ntt_prime(55, 8192, 1).unwrap();
        assert_ne!(q0, q1);
        assert!(is_prime(q0) && is_prime(q1));
    }

    #[test]
    fn roots() {
        let p = find_ntt_prime(37, 8192, 0).unwrap();
        let psi = root_of_unity(p, 8192);
        assert_eq!(mod_pow(psi, 8192, p), 1);
        assert_eq!(mod_pow(psi, 4096, p), p - 1); // psi^n = -1 (negacyclic)
    }

    #[test]
    fn inverse() {
        let p = 2013265921u64;
        for a in [1u64, 2, 12345, p - 1] {
            assert_eq!(mod_mul(a, mod_inv(a, p), p), 1);
        }
    }
}
