//! Small number-theoretic helpers shared by the other modules.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Primes up to and including `limit`.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i as u64).collect()
}

/// Prime factorization by trial division, as (prime, exponent) pairs.
pub fn factor(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Prime divisors of a nonzero big integer with all prime factors below
/// `trial_limit`; returns `None` if a cofactor survives.
pub fn prime_divisors_big(n: &BigInt, trial_limit: u64) -> Option<Vec<u64>> {
    let mut n = n.abs();
    let mut out = Vec::new();
    for p in primes_up_to(trial_limit) {
        let bp = BigInt::from(p);
        if (&n % &bp).is_zero() {
            out.push(p);
            while (&n % &bp).is_zero() {
                n /= &bp;
            }
        }
        if n.is_one() {
            return Some(out);
        }
    }
    if n.is_one() {
        Some(out)
    } else {
        n.to_u64().map(|q| {
            out.extend(factor(q).into_iter().map(|(p, _)| p));
            out
        })
    }
}

pub fn divisors(n: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for (p, e) in factor(n) {
        let len = out.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                out.push(out[i] * pk);
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn divisor_count(n: u64) -> u64 {
    factor(n).iter().map(|&(_, e)| e as u64 + 1).product()
}

/// Sum of `d^k` over divisors of `n`.
pub fn divisor_sigma(n: u64, k: u32) -> BigInt {
    divisors(n).into_iter().map(|d| BigInt::from(d).pow(k)).sum()
}

/// p-adic valuation of a nonzero integer.
pub fn valuation(n: &BigInt, p: u64) -> u32 {
    assert!(!n.is_zero(), "valuation of zero");
    let bp = BigInt::from(p);
    let mut n = n.clone();
    let mut v = 0;
    while (&n % &bp).is_zero() {
        n /= &bp;
        v += 1;
    }
    v
}

/// Kronecker symbol (a / n) for n > 0.
pub fn kronecker(a: i64, n: u64) -> i32 {
    assert!(n > 0);
    let mut a = a as i128;
    let mut n = n as i128;
    let mut result = 1i32;
    while n % 2 == 0 {
        n /= 2;
        match a.rem_euclid(8) {
            0 | 2 | 4 | 6 => return 0,
            3 | 5 => result = -result,
            _ => {}
        }
    }
    a = a.rem_euclid(n);
    // Jacobi symbol for odd n.
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

/// Legendre symbol of a big integer modulo an odd prime.
pub fn legendre_big(a: &BigInt, p: u64) -> i32 {
    let r = a.mod_floor(&BigInt::from(p)).to_i64().unwrap();
    kronecker(r, p)
}

/// Floor of the square root of a nonnegative i128.
pub fn isqrt_i128(n: i128) -> i128 {
    assert!(n >= 0);
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|s| s <= n) {
        x += 1;
    }
    x
}

pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn factorial(n: u64) -> BigInt {
    (1..=n).map(BigInt::from).product()
}

/// Bernoulli number `B_n` with `B_1 = -1/2`.
pub fn bernoulli(n: usize) -> BigRational {
    let mut b: Vec<BigRational> = vec![BigRational::one()];
    for k in 1..=n {
        let s: BigRational = (0..k).map(|j| BigRational::from_integer(binomial(k as u64 + 1, j as u64)) * &b[j]).sum();
        b.push(-s / BigRational::from_integer(BigInt::from(k + 1)));
    }
    b.swap_remove(n)
}

/// Ceiling division for i128 with positive divisor.
pub fn div_ceil_i128(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    -((-a).div_euclid(b))
}
