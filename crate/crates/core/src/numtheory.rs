//! Arbitrary-precision number theory used by every reduction layer.
//!
//! Everything here is exact: prime thresholds are compared with integer
//! roots, inverses come from the extended Euclidean algorithm and square
//! roots are re-squared before they are returned.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumError {
    #[error("extended gcd of (0, 0) is undefined")]
    BothZero,
    #[error("{a} has no inverse modulo {modulus} (gcd {gcd})")]
    NotCoprime {
        a: BigInt,
        modulus: BigInt,
        gcd: BigInt,
    },
    #[error("modulus must be at least 2, got {0}")]
    BadModulus(BigInt),
    #[error("moduli {0} and {1} are not coprime")]
    ModuliNotCoprime(BigUint, BigUint),
    #[error("residue {residue} is not below its modulus {modulus}")]
    ResidueOutOfRange { residue: BigUint, modulus: BigUint },
    #[error("invalid factorization: {0}")]
    InvalidFactorization(String),
}

/// Prime factorization with strictly increasing primes and positive exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Factorization {
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn new(factors: Vec<(u64, u32)>) -> Result<Self, NumError> {
        if factors.is_empty() {
            return Err(NumError::InvalidFactorization("no factors".into()));
        }
        for (i, &(p, e)) in factors.iter().enumerate() {
            if !is_prime(p) {
                return Err(NumError::InvalidFactorization(format!("{p} is not prime")));
            }
            if e == 0 {
                return Err(NumError::InvalidFactorization(format!(
                    "exponent of {p} is zero"
                )));
            }
            if i > 0 && factors[i - 1].0 >= p {
                return Err(NumError::InvalidFactorization(
                    "primes must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { factors })
    }

    /// Builds a factorization from unordered (prime, exponent) pairs,
    /// merging repeated primes.
    pub fn from_unsorted(mut pairs: Vec<(u64, u32)>) -> Result<Self, NumError> {
        pairs.sort_unstable();
        let mut merged: Vec<(u64, u32)> = Vec::with_capacity(pairs.len());
        for (p, e) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += e,
                _ => merged.push((p, e)),
            }
        }
        Self::new(merged)
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn value(&self) -> BigUint {
        self.factors
            .iter()
            .map(|&(p, e)| BigUint::from(p).pow(e))
            .product()
    }

    pub fn exponent_of(&self, prime: u64) -> u32 {
        self.factors
            .iter()
            .find(|(p, _)| *p == prime)
            .map_or(0, |(_, e)| *e)
    }

    /// Prime powers p^e in factor order.
    pub fn prime_powers(&self) -> Vec<BigUint> {
        self.factors
            .iter()
            .map(|&(p, e)| BigUint::from(p).pow(e))
            .collect()
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (p, e)) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str(" * ")?;
            }
            if *e == 1 {
                write!(f, "{p}")?;
            } else {
                write!(f, "{p}^{e}")?;
            }
        }
        Ok(())
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin; the first twelve prime bases are exact below 2^64.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn sieve(limit: usize) -> Vec<u64> {
    let mut composite = vec![false; limit + 1];
    let mut out = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// The first `count` primes in increasing order.
pub fn nth_primes(count: usize) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    // Rosser's bound p_k < k(ln k + ln ln k) for k >= 6.
    let k = count.max(6) as f64;
    let mut limit = (k * (k.ln() + k.ln().ln())).ceil() as usize + 16;
    loop {
        let primes = sieve(limit);
        if primes.len() >= count {
            return primes[..count].to_vec();
        }
        limit *= 2;
    }
}

/// The `k`-th prime, 1-based.
pub fn kth_prime(k: usize) -> u64 {
    assert!(k >= 1, "primes are 1-indexed");
    nth_primes(k)[k - 1]
}

pub fn next_prime_after(n: u64) -> u64 {
    let mut c = n + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// The first `count` primes `p` with `p > floor` and `p^exponent > bound`.
///
/// The power threshold is resolved with an exact integer root: the least
/// admissible value is `floor_root(bound, exponent) + 1`.
pub fn primes_above(count: usize, exponent: u32, bound: &BigUint, floor: u64) -> Vec<u64> {
    assert!(exponent >= 1, "exponent must be positive");
    let root = bound.nth_root(exponent);
    let start = match root.to_u64() {
        Some(r) => r.max(floor),
        None => panic!("power threshold root {root} exceeds u64"),
    };
    let mut out = Vec::with_capacity(count);
    let mut c = start;
    while out.len() < count {
        c = next_prime_after(c);
        out.push(c);
    }
    out
}

/// Extended Euclid: returns `(g, u, v)` with `u*a + v*b = g = gcd(|a|, |b|)`.
pub fn ext_gcd(a: &BigInt, b: &BigInt) -> Result<(BigInt, BigInt, BigInt), NumError> {
    if a.is_zero() && b.is_zero() {
        return Err(NumError::BothZero);
    }
    let (mut old_r, mut r) = (a.clone(), b.clone());
    let (mut old_u, mut u) = (BigInt::one(), BigInt::zero());
    let (mut old_v, mut v) = (BigInt::zero(), BigInt::one());
    while !r.is_zero() {
        let q = old_r.div_floor(&r);
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_u = &old_u - &q * &u;
        old_u = std::mem::replace(&mut u, next_u);
        let next_v = &old_v - &q * &v;
        old_v = std::mem::replace(&mut v, next_v);
    }
    if old_r.is_negative() {
        Ok((-old_r, -old_u, -old_v))
    } else {
        Ok((old_r, old_u, old_v))
    }
}

/// Inverse of `a` modulo `m` in `[1, m-1]`.
pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Result<BigInt, NumError> {
    if *m < BigInt::from(2) {
        return Err(NumError::BadModulus(m.clone()));
    }
    let (g, u, _) = ext_gcd(a, m)?;
    if !g.is_one() {
        return Err(NumError::NotCoprime {
            a: a.clone(),
            modulus: m.clone(),
            gcd: g,
        });
    }
    Ok(u.mod_floor(m))
}

pub fn mod_inverse_u(a: &BigUint, m: &BigUint) -> Result<BigUint, NumError> {
    let inv = mod_inverse(&BigInt::from(a.clone()), &BigInt::from(m.clone()))?;
    Ok(inv.to_biguint().expect("inverse is nonnegative"))
}

/// Precomputed CRT basis for a fixed list of pairwise coprime moduli.
///
/// For each modulus `q_i` the basis element is `s_i * N_i` where
/// `N_i = M / q_i` and `s_i * N_i + r_i * q_i = 1`, so a residue vector
/// combines as `Σ v_i s_i N_i mod M`.
#[derive(Debug, Clone)]
pub struct CrtBasis {
    moduli: Vec<BigUint>,
    basis: Vec<BigUint>,
    product: BigUint,
}

impl CrtBasis {
    pub fn new(moduli: &[BigUint]) -> Result<Self, NumError> {
        for m in moduli {
            if *m < BigUint::from(2u8) {
                return Err(NumError::BadModulus(BigInt::from(m.clone())));
            }
        }
        for i in 0..moduli.len() {
            for j in i + 1..moduli.len() {
                if !moduli[i].gcd(&moduli[j]).is_one() {
                    return Err(NumError::ModuliNotCoprime(
                        moduli[i].clone(),
                        moduli[j].clone(),
                    ));
                }
            }
        }
        let product: BigUint = moduli.iter().product();
        let mut basis = Vec::with_capacity(moduli.len());
        for q in moduli {
            let rest = &product / q;
            let (_, _, s) = ext_gcd(&BigInt::from(q.clone()), &BigInt::from(rest.clone()))?;
            let e = (s * BigInt::from(rest)).mod_floor(&BigInt::from(product.clone()));
            basis.push(e.to_biguint().expect("reduced value is nonnegative"));
        }
        Ok(Self {
            moduli: moduli.to_vec(),
            basis,
            product,
        })
    }

    pub fn product(&self) -> &BigUint {
        &self.product
    }

    pub fn moduli(&self) -> &[BigUint] {
        &self.moduli
    }

    /// Combines residues (each already below its modulus) into `z ∈ [0, M)`.
    pub fn combine(&self, residues: &[&BigUint]) -> BigUint {
        debug_assert_eq!(residues.len(), self.basis.len());
        let sum: BigUint = residues.iter().zip(&self.basis).map(|(r, e)| *r * e).sum();
        sum % &self.product
    }
}

/// Solves `z ≡ r_i (mod m_i)` for pairwise coprime moduli; returns `(z, M)`.
pub fn crt(congruences: &[(BigUint, BigUint)]) -> Result<(BigUint, BigUint), NumError> {
    for (r, m) in congruences {
        if r >= m {
            return Err(NumError::ResidueOutOfRange {
                residue: r.clone(),
                modulus: m.clone(),
            });
        }
    }
    let moduli: Vec<BigUint> = congruences.iter().map(|(_, m)| m.clone()).collect();
    let basis = CrtBasis::new(&moduli)?;
    let residues: Vec<&BigUint> = congruences.iter().map(|(r, _)| r).collect();
    Ok((basis.combine(&residues), basis.product().clone()))
}

fn legendre_is_residue(a: &BigUint, p: &BigUint) -> bool {
    let e = (p - 1u32) >> 1;
    a.modpow(&e, p).is_one()
}

/// All square roots of `a` modulo an odd prime `p`, ascending.
///
/// Uses Tonelli–Shanks; every root is re-squared before it is returned.
pub fn sqrt_mod_odd_prime(a: &BigUint, p: &BigUint) -> Vec<BigUint> {
    let a = a % p;
    if a.is_zero() {
        return vec![BigUint::zero()];
    }
    if !legendre_is_residue(&a, p) {
        return Vec::new();
    }
    let one = BigUint::one();
    let p_minus_1 = p - &one;
    let s = p_minus_1.trailing_zeros().expect("p - 1 is nonzero");
    let q = &p_minus_1 >> s;

    let root = if s == 1 {
        a.modpow(&((p + &one) >> 2), p)
    } else {
        let mut z = BigUint::from(2u8);
        while legendre_is_residue(&z, p) {
            z += 1u8;
        }
        let mut m = s;
        let mut c = z.modpow(&q, p);
        let mut t = a.modpow(&q, p);
        let mut r = a.modpow(&((&q + &one) >> 1), p);
        while !t.is_one() {
            let mut i = 0;
            let mut t2 = t.clone();
            while !t2.is_one() {
                t2 = &t2 * &t2 % p;
                i += 1;
            }
            let b = c.modpow(&(BigUint::one() << (m - i - 1)), p);
            m = i;
            c = &b * &b % p;
            t = t * &c % p;
            r = r * b % p;
        }
        r
    };
    assert_eq!(
        &root * &root % p,
        a,
        "Tonelli–Shanks root failed its square check"
    );
    let other = p - &root;
    let mut roots = vec![root, other];
    roots.sort();
    roots.dedup();
    roots
}

/// All square roots of `a` modulo `2^k` by exhaustive scan, ascending.
pub fn sqrt_mod_two_pow(a: u64, k: u32) -> Vec<u64> {
    assert!((1..=16).contains(&k), "k must be in 1..=16");
    let m = 1u64 << k;
    assert!(a < m, "residue must be below 2^k");
    (0..m).filter(|r| r * r % m == a).collect()
}

/// Root set of `a` modulo the prime power `p^e` for the shapes the pipeline
/// produces: odd primes with exponent 1 and powers of two up to `2^16`.
pub fn sqrt_mod_prime_power(a: &BigUint, p: u64, e: u32) -> Option<BTreeSet<BigUint>> {
    if p == 2 {
        if e > 16 {
            return None;
        }
        let m = 1u64 << e;
        let r = (a % m).to_u64().expect("reduced below 2^16");
        Some(
            sqrt_mod_two_pow(r, e)
                .into_iter()
                .map(BigUint::from)
                .collect(),
        )
    } else if e == 1 {
        Some(
            sqrt_mod_odd_prime(a, &BigUint::from(p))
                .into_iter()
                .collect(),
        )
    } else {
        None
    }
}

/// Converts a signed value to its least nonnegative residue.
pub fn reduce_signed(x: &BigInt, m: &BigUint) -> BigUint {
    let m = BigInt::from_biguint(Sign::Plus, m.clone());
    x.mod_floor(&m)
        .to_biguint()
        .expect("mod_floor is nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        n >= 2
            && (2..)
                .take_while(|d| d * d <= n)
                .all(|d| !n.is_multiple_of(d))
    }

    fn big(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn ubig(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn first_primes() {
        assert_eq!(nth_primes(5), vec![2, 3, 5, 7, 11]);
        assert_eq!(nth_primes(1), vec![2]);
        assert_eq!(*nth_primes(13).last().unwrap(), 41);
    }

    #[test]
    fn nth_primes_matches_trial_division() {
        let oracle: Vec<u64> = (2..).filter(|&n| trial_division(n)).take(10_000).collect();
        assert_eq!(nth_primes(10_000), oracle);
    }

    #[test]
    fn miller_rabin_matches_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        assert!(is_prime(18_446_744_073_709_551_557));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2,3,5,7
    }

    #[test]
    fn primes_above_examples() {
        assert_eq!(primes_above(2, 1, &ubig(10), 0), vec![11, 13]);
        assert_eq!(primes_above(1, 3, &ubig(7), 0), vec![2]);
        assert_eq!(primes_above(1, 2, &ubig(25), 0), vec![7]);
        assert_eq!(primes_above(3, 1, &ubig(0), 11), vec![13, 17, 19]);
    }

    #[test]
    fn ext_gcd_examples() {
        let (g, u, v) = ext_gcd(&big(240), &big(46)).unwrap();
        assert_eq!(g, big(2));
        assert_eq!(u * 240 + v * 46, big(2));
        assert_eq!(ext_gcd(&big(7), &big(0)).unwrap(), (big(7), big(1), big(0)));
        let (g, u, v) = ext_gcd(&big(3), &big(7)).unwrap();
        assert_eq!(g, big(1));
        assert_eq!(u * 3 + v * 7, big(1));
        assert_eq!(ext_gcd(&big(0), &big(0)), Err(NumError::BothZero));
        let (g, u, v) = ext_gcd(&big(-12), &big(18)).unwrap();
        assert_eq!(g, big(6));
        assert_eq!(u * -12 + v * 18, big(6));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(mod_inverse(&big(3), &big(7)).unwrap(), big(5));
        assert_eq!(mod_inverse(&big(1), &big(9)).unwrap(), big(1));
        assert!(matches!(
            mod_inverse(&big(2), &big(4)),
            Err(NumError::NotCoprime { .. })
        ));
        assert_eq!(mod_inverse(&big(-3), &big(7)).unwrap(), big(2));
    }

    #[test]
    fn crt_examples() {
        assert_eq!(
            crt(&[(ubig(2), ubig(3)), (ubig(3), ubig(5))]).unwrap(),
            (ubig(8), ubig(15))
        );
        assert_eq!(crt(&[(ubig(4), ubig(9))]).unwrap(), (ubig(4), ubig(9)));
        assert!(matches!(
            crt(&[(ubig(1), ubig(4)), (ubig(3), ubig(6))]),
            Err(NumError::ModuliNotCoprime(_, _))
        ));
        assert!(matches!(
            crt(&[(ubig(5), ubig(4))]),
            Err(NumError::ResidueOutOfRange { .. })
        ));
    }

    #[test]
    fn crt_matches_scan() {
        let moduli = [4u64, 9, 5, 7];
        let m: u64 = moduli.iter().product();
        for seed in 0..200u64 {
            let residues: Vec<u64> = moduli.iter().map(|q| (seed * 7919 + q * 31) % q).collect();
            let input: Vec<_> = residues
                .iter()
                .zip(&moduli)
                .map(|(r, q)| (ubig(*r), ubig(*q)))
                .collect();
            let (z, prod) = crt(&input).unwrap();
            let scan = (0..m)
                .find(|z| moduli.iter().zip(&residues).all(|(q, r)| z % q == *r))
                .unwrap();
            assert_eq!(prod, ubig(m));
            assert_eq!(z, ubig(scan));
        }
    }

    #[test]
    fn sqrt_odd_prime_examples() {
        assert_eq!(
            sqrt_mod_odd_prime(&ubig(2), &ubig(7)),
            vec![ubig(3), ubig(4)]
        );
        assert_eq!(
            sqrt_mod_odd_prime(&ubig(13), &ubig(17)),
            vec![ubig(8), ubig(9)]
        );
        assert!(sqrt_mod_odd_prime(&ubig(3), &ubig(5)).is_empty());
        assert_eq!(sqrt_mod_odd_prime(&ubig(0), &ubig(11)), vec![ubig(0)]);
    }

    #[test]
    fn sqrt_odd_prime_matches_scan() {
        // 17, 41, 97, 193 and 257 exercise the s > 1 Tonelli–Shanks branch.
        for p in [3u64, 5, 7, 11, 13, 17, 41, 97, 193, 257, 65537] {
            for a in (0..p).step_by(((p / 200) as usize).max(1)) {
                let scan: Vec<BigUint> = (0..p).filter(|r| r * r % p == a).map(ubig).collect();
                assert_eq!(sqrt_mod_odd_prime(&ubig(a), &ubig(p)), scan, "a={a} p={p}");
            }
        }
    }

    #[test]
    fn sqrt_two_pow_examples() {
        assert_eq!(sqrt_mod_two_pow(1, 4), vec![1, 7, 9, 15]);
        assert_eq!(sqrt_mod_two_pow(9, 4), vec![3, 5, 11, 13]);
        assert!(sqrt_mod_two_pow(2, 4).is_empty());
        assert_eq!(sqrt_mod_two_pow(0, 4), vec![0, 4, 8, 12]);
    }

    #[test]
    fn factorization_invariants() {
        let f = Factorization::from_unsorted(vec![(5, 1), (2, 4), (3, 1)]).unwrap();
        assert_eq!(f.factors(), &[(2, 4), (3, 1), (5, 1)]);
        assert_eq!(f.value(), ubig(240));
        assert_eq!(f.exponent_of(2), 4);
        assert!(Factorization::new(vec![(4, 1)]).is_err());
        assert!(Factorization::new(vec![(3, 1), (2, 1)]).is_err());
        assert!(Factorization::new(vec![(3, 0)]).is_err());
    }
}
