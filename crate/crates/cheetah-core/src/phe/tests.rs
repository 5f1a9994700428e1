use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::modmath::{mod_add, mod_mul};

fn small_params() -> PheParams {
    PheParams::generate(256, 37).unwrap()
}

fn engine(backend: Backend) -> Arc<PheEngine> {
    Arc::new(PheEngine::new(small_params(), backend).unwrap())
}

fn random_slots(params: &PheParams, rng: &mut ChaCha20Rng) -> Vec<u64> {
    (0..params.slots)
        .map(|_| rng.gen_range(0..params.plaintext_modulus))
        .collect()
}

#[test]
fn params_reject_non_batching_modulus() {
    let mut p = small_params();
    p.plaintext_modulus = 2013265921; // prime, but 1 mod 2n fails for n=256? 2013265921 = 15*2^27+1, 1 mod 512 holds
                                      // pick a prime that is definitely not 1 mod 2n
    p.plaintext_modulus = 97;
    assert!(matches!(p.validate(), Err(PheError::BadParams(_))));
}

#[test]
fn recommended_params_well_formed() {
    let p = PheParams::recommended();
    assert_eq!(p.slots, 4096);
    assert_eq!(64 - p.plaintext_modulus.leading_zeros(), 37);
    assert_eq!(p.q() % p.plaintext_modulus as u128, 1);
    p.validate().unwrap();
    p.fixedpoint().check_batching(p.slots).unwrap();
    // Full-size backend round-trips.
    let eng = PheEngine::new(p, Backend::Rlwe).unwrap();
    let key = eng.keygen(Owner::Client, 1);
    let mut s = PheSession::new(Arc::new(eng), 1);
    let pt = PackedPlaintext::new(vec![1, 2, 3], 10, s.params());
    let ct = s.encrypt(&pt, &key);
    assert!(s.engine.noise_budget(&ct, &key).unwrap() >= 40);
    assert_eq!(s.decrypt(&ct, &key).unwrap().slots[..3], [1, 2, 3]);
}

#[test]
fn params_digest_changes() {
    let a = small_params();
    let mut b = a.clone();
    b.sigma = 4.0;
    assert_ne!(a.digest(), b.digest());
}

#[test]
fn keygen_deterministic_and_distinct() {
    for backend in [Backend::Clear, Backend::Rlwe] {
        let eng = engine(backend);
        let k1 = eng.keygen(Owner::Client, 1);
        let k2 = eng.keygen(Owner::Client, 1);
        let k3 = eng.keygen(Owner::Client, 2);
        assert_eq!(k1, k2, "keygen is deterministic under the seed");
        assert_ne!(k1, k3, "distinct seeds give distinct key material");
        let mut s = PheSession::new(eng.clone(), 42);
        let pt = PackedPlaintext::new(vec![5, 6, 7], 10, &eng.params);
        let ct = s.encrypt(&pt, &k1);
        assert_eq!(s.decrypt(&ct, &k2).unwrap().slots, pt.slots);
    }
}

#[test]
fn encrypt_decrypt_roundtrip() {
    for backend in [Backend::Clear, Backend::Rlwe] {
        let eng = engine(backend);
        let key = eng.keygen(Owner::Client, 7);
        let mut s = PheSession::new(eng.clone(), 1);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let zero = PackedPlaintext::zeros(10, &eng.params);
        assert_eq!(
            s.decrypt(&s.engine.encrypt(&zero, &key, &mut rng), &key)
                .unwrap()
                .slots,
            zero.slots
        );
        for _ in 0..25 {
            let pt = PackedPlaintext {
                slots: random_slots(&eng.params, &mut rng),
                scale_bits: 10,
            };
            let ct = s.encrypt(&pt, &key);
            let back = s.decrypt(&ct, &key).unwrap();
            assert_eq!(back.slots, pt.slots);
            assert_eq!(back.scale_bits, 10);
            assert_eq!(ct.mult_depth, 0);
        }
    }
}

#[test]
fn fresh_encryptions_differ() {
    let eng = engine(Backend::Rlwe);
    let key = eng.keygen(Owner::Client, 7);
    let mut s = PheSession::new(eng.clone(), 1);
    let pt = PackedPlaintext::new(vec![1, 2, 3], 10, &eng.params);
    let a = eng.serialize_ct(&s.encrypt(&pt, &key));
    let b = eng.serialize_ct(&s.encrypt(&pt, &key));
    assert_ne!(a, b);
}

#[test]
fn wrong_owner_decrypt_rejected() {
    for backend in [Backend::Clear, Backend::Rlwe] {
        let eng = engine(backend);
        let ck = eng.keygen(Owner::Client, 1);
        let sk = eng.keygen(Owner::Server, 1);
        let mut s = PheSession::new(eng.clone(), 1);
        let ct = s.encrypt(&PackedPlaintext::zeros(10, &eng.params), &ck);
        assert!(matches!(
            s.decrypt(&ct, &sk),
            Err(PheError::OwnerMismatch { .. })
        ));
    }
}

#[test]
fn homomorphic_ops_match_slotwise_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for backend in [Backend::Clear, Backend::Rlwe] {
        let eng = engine(backend);
        let p = eng.params.plaintext_modulus;
        let key = eng.keygen(Owner::Client, 5);
        let mut s = PheSession::new(eng.clone(), 2);
        for _ in 0..10 {
            let a = random_slots(&eng.params, &mut rng);
            let b = random_slots(&eng.params, &mut rng);
            let ea = s.encrypt(
                &PackedPlaintext {
                    slots: a.clone(),
                    scale_bits: 10,
                },
                &key,
            );
            let eb = s.encrypt(
                &PackedPlaintext {
                    slots: b.clone(),
                    scale_bits: 10,
                },
                &key,
            );
            let sum = s.add_ct(&ea, &eb).unwrap();
            let want_sum: Vec<u64> = a.iter().zip(&b).map(|(&x, &y)| mod_add(x, y, p)).collect();
            assert_eq!(s.decrypt(&sum, &key).unwrap().slots, want_sum);

            let aps = s
                .add_plain(
                    &ea,
                    &PackedPlaintext {
                        slots: b.clone(),
                        scale_bits: 10,
                    },
                )
                .unwrap();
            assert_eq!(s.decrypt(&aps, &key).unwrap().slots, want_sum);

            let prod = s
                .mul_plain(
                    &ea,
                    &PackedPlaintext {
                        slots: b.clone(),
                        scale_bits: 10,
                    },
                )
                .unwrap();
            let want_prod: Vec<u64> = a.iter().zip(&b).map(|(&x, &y)| mod_mul(x, y, p)).collect();
            let dec = s.decrypt(&prod, &key).unwrap();
            assert_eq!(dec.slots, want_prod);
            assert_eq!(dec.scale_bits, 20);
            assert_eq!(prod.mult_depth, 1);
        }
    }
}

#[test]
fn identity_and_annihilator() {
    let eng = engine(Backend::Rlwe);
    let p = eng.params.plaintext_modulus;
    let key = eng.keygen(Owner::Server, 9);
    let mut s = PheSession::new(eng.clone(), 4);
    let v = PackedPlaintext::new(vec![3, p - 2, 7, 0, 1], 10, &eng.params);
    let ones = PackedPlaintext {
        slots: vec![1; eng.params.slots],
        scale_bits: 0,
    };
    let zeros = PackedPlaintext::zeros(10, &eng.params);
    let ev = s.encrypt(&v, &key);
    assert_eq!(
        s.decrypt(&s.engine.mul_plain(&ev, &ones).unwrap(), &key)
            .unwrap()
            .slots,
        v.slots
    );
    assert_eq!(
        s.decrypt(&s.engine.mul_plain(&ev, &zeros).unwrap(), &key)
            .unwrap()
            .slots,
        vec![0; eng.params.slots]
    );
    // add_ct with the encryption of the negation cancels.
    let neg: Vec<u64> = v
        .slots
        .iter()
        .map(|&x| if x == 0 { 0 } else { p - x })
        .collect();
    let eneg = s.encrypt(
        &PackedPlaintext {
            slots: neg,
            scale_bits: 10,
        },
        &key,
    );
    assert_eq!(
        s.decrypt(&s.engine.add_ct(&ev, &eneg).unwrap(), &key)
            .unwrap()
            .slots,
        vec![0; eng.params.slots]
    );
}

#[test]
fn sum_of_many_ciphertexts() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let eng = engine(Backend::Rlwe);
    let p = eng.params.plaintext_modulus;
    let key = eng.keygen(Owner::Client, 5);
    let mut s = PheSession::new(eng.clone(), 2);
    let vecs: Vec<Vec<u64>> = (0..32)
        .map(|_| random_slots(&eng.params, &mut rng))
        .collect();
    let mut acc = s.encrypt(
        &PackedPlaintext {
            slots: vecs[0].clone(),
            scale_bits: 10,
        },
        &key,
    );
    for v in &vecs[1..] {
        let ct = s.encrypt(
            &PackedPlaintext {
                slots: v.clone(),
                scale_bits: 10,
            },
            &key,
        );
        acc = s.add_ct(&acc, &ct).unwrap();
    }
    let mut want = vec![0u64; eng.params.slots];
    for v in &vecs {
        for (w, &x) in want.iter_mut().zip(v) {
            *w = mod_add(*w, x, p);
        }
    }
    assert_eq!(s.decrypt(&acc, &key).unwrap().slots, want);
}

#[test]
fn depth_violation_rejected() {
    let eng = engine(Backend::Clear);
    let key = eng.keygen(Owner::Client, 1);
    let mut s = PheSession::new(eng.clone(), 1);
    let v = PackedPlaintext::new(vec![1], 10, &eng.params);
    let ct = s.encrypt(&v, &key);
    let once = s.mul_plain(&ct, &v).unwrap();
    assert!(matches!(
        s.mul_plain(&once, &v),
        Err(PheError::DepthExceeded)
    ));
}

#[test]
fn scale_mismatch_rejected() {
    let eng = engine(Backend::Clear);
    let key = eng.keygen(Owner::Client, 1);
    let mut s = PheSession::new(eng.clone(), 1);
    let a = s.encrypt(&PackedPlaintext::new(vec![1], 10, &eng.params), &key);
    let b = s.encrypt(&PackedPlaintext::new(vec![1], 20, &eng.params), &key);
    assert!(matches!(
        s.add_ct(&a, &b),
        Err(PheError::ScaleMismatch { .. })
    ));
}

#[test]
fn noise_budget_profile() {
    let eng = engine(Backend::Rlwe);
    let key = eng.keygen(Owner::Client, 13);
    let mut s = PheSession::new(eng.clone(), 6);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let v = PackedPlaintext {
        slots: random_slots(&eng.params, &mut rng),
        scale_bits: 10,
    };
    let fresh = s.encrypt(&v, &key);
    let fresh_budget = eng.noise_budget(&fresh, &key).unwrap();
    assert!(fresh_budget >= 40, "fresh budget {fresh_budget}");
    let after = s.mul_plain(&fresh, &v).unwrap();
    let after_budget = eng.noise_budget(&after, &key).unwrap();
    assert!(after_budget >= 10, "post-mul budget {after_budget}");
    assert!(after_budget < fresh_budget, "mul must consume budget");

    let clear_eng = engine(Backend::Clear);
    let ck = clear_eng.keygen(Owner::Client, 1);
    let mut cs = PheSession::new(clear_eng.clone(), 1);
    let cct = cs.encrypt(&PackedPlaintext::zeros(10, &clear_eng.params), &ck);
    assert_eq!(
        clear_eng.noise_budget(&cct, &ck).unwrap(),
        NOISE_BUDGET_INFINITE
    );
}

#[test]
fn counters_track_ops() {
    let eng = engine(Backend::Clear);
    let key = eng.keygen(Owner::Client, 1);
    let mut s = PheSession::new(eng.clone(), 1);
    assert_eq!(s.counters_snapshot(), OpCounters::default());
    let v = PackedPlaintext::new(vec![2], 10, &eng.params);
    let ct = s.encrypt(&v, &key);
    let _ = s.mul_plain(&ct, &v).unwrap();
    let c = s.counters_snapshot();
    assert_eq!(c.mult_plain, 1);
    assert_eq!(c.encrypt, 1);
    assert_eq!(c.perm, 0);
    s.counters_reset();
    assert_eq!(s.counters_snapshot(), OpCounters::default());
}

#[test]
fn serialization_roundtrip_and_canonical() {
    for backend in [Backend::Clear, Backend::Rlwe] {
        let eng = engine(backend);
        let key = eng.keygen(Owner::Server, 3);
        let mut s = PheSession::new(eng.clone(), 9);
        let pt = PackedPlaintext::new(vec![1, 2, 3, 4], 10, &eng.params);
        let ct = s.encrypt(&pt, &key);
        let bytes = eng.serialize_ct(&ct);
        assert_eq!(bytes.len(), eng.params.ciphertext_bytes());
        assert_eq!(
            bytes,
            eng.serialize_ct(&ct),
            "serialization must be canonical"
        );
        let back = eng.deserialize_ct(&bytes).unwrap();
        assert_eq!(back.owner, Owner::Server);
        assert_eq!(back.scale_bits, 10);
        assert_eq!(s.decrypt(&back, &key).unwrap().slots, pt.slots);
        // Corrupted digest rejected.
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(eng.deserialize_ct(&bad).is_err());
    }
}

/// Clear and RLWE backends must agree on every decrypted value for random
/// depth-<=1 op sequences.
#[test]
fn backend_equivalence_random_programs() {
    let params = small_params();
    let clear = Arc::new(PheEngine::new(params.clone(), Backend::Clear).unwrap());
    let rlwe = Arc::new(PheEngine::new(params.clone(), Backend::Rlwe).unwrap());
    let kc = clear.keygen(Owner::Client, 4);
    let kr = rlwe.keygen(Owner::Client, 4);
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for _ in 0..20 {
        let mut sc = PheSession::new(clear.clone(), 10);
        let mut sr = PheSession::new(rlwe.clone(), 10);
        let base = random_slots(&params, &mut rng);
        let mut cc = sc.encrypt(
            &PackedPlaintext {
                slots: base.clone(),
                scale_bits: 10,
            },
            &kc,
        );
        let mut cr = sr.encrypt(
            &PackedPlaintext {
                slots: base,
                scale_bits: 10,
            },
            &kr,
        );
        let ops = rng.gen_range(1..=50);
        for _ in 0..ops {
            let operand = PackedPlaintext {
                slots: random_slots(&params, &mut rng),
                scale_bits: cc.scale_bits,
            };
            match rng.gen_range(0..3) {
                0 => {
                    cc = sc.add_plain(&cc, &operand).unwrap();
                    cr = sr.add_plain(&cr, &operand).unwrap();
                }
                1 => {
                    let ec = sc.encrypt(&operand, &kc);
                    let er = sr.encrypt(&operand, &kr);
                    cc = sc.add_ct(&cc, &ec).unwrap();
                    cr = sr.add_ct(&cr, &er).unwrap();
                }
                _ => {
                    if cc.mult_depth == 0 {
                        let m = PackedPlaintext {
                            slots: random_slots(&params, &mut rng),
                            scale_bits: 10,
                        };
                        cc = sc.mul_plain(&cc, &m).unwrap();
                        cr = sr.mul_plain(&cr, &m).unwrap();
                    }
                }
            }
        }
        assert_eq!(
            sc.decrypt(&cc, &kc).unwrap().slots,
            sr.decrypt(&cr, &kr).unwrap().slots,
            "backends diverged"
        );
    }
}
