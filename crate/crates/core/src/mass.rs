//! Siegel's mass formula for one-dimensional targets: local densities, the
//! archimedean factor, genus averages of representation numbers, and the
//! numerics behind the representation cutoff.

use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::{E, PI};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::arith;
use crate::enumeration::{rep_count, rep_count_with_budget};
use crate::error::{Error, Result};
use crate::forms::{GenusData, QuadForm};

/// Default last exponent tried at `p = 2`.
pub const DEFAULT_K_MAX_2: u32 = 12;
/// Default last exponent tried at odd primes.
pub const DEFAULT_K_MAX_ODD: u32 = 6;
/// Truncation point of the Euler product over good primes.
pub const PRIME_CUTOFF: u64 = 10_000;
/// Largest modulus for which residue tables are built.
const MAX_MODULUS: u64 = 1 << 24;
/// Brute-force counting is refused above this many residue vectors.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// `sigma_p(A, N)` with the exponent at which it was confirmed stable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalDensity {
    pub p: u64,
    #[serde(serialize_with = "crate::report::rational")]
    pub value: BigRational,
    /// First `k` with equal normalized counts mod `p^k` and `p^(k+1)`.
    pub stabilized_at: u32,
}

/// Orthogonal block of a `p`-adic Jordan splitting. `Two([a, b, c])` is the
/// binary form `a x^2 + 2b xy + c y^2`; it only occurs for `p = 2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JordanBlock {
    One(BigRational),
    Two([BigRational; 3]),
}

fn rat_val(x: &BigRational, p: u64) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    Some(arith::valuation(x.numer(), p) as i64 - arith::valuation(x.denom(), p) as i64)
}

/// Splits the form over `Z_(p)` into 1x1 and (for `p = 2`) 2x2 blocks by
/// repeated Schur complements on an entry of least valuation. Every step is
/// invertible over `Z_(p)`, so counts mod `p^k` are unchanged.
pub fn jordan_blocks(form: &QuadForm, p: u64) -> Vec<JordanBlock> {
    let mut s = form.rational_gram();
    let mut out = Vec::new();
    while !s.is_empty() {
        let n = s.len();
        let mut best: Option<(i64, usize, usize)> = None;
        for i in 0..n {
            for j in i..n {
                if let Some(v) = rat_val(&s[i][j], p) {
                    let better = match best {
                        None => true,
                        Some((bv, bi, bj)) => v < bv || (v == bv && i == j && bi != bj),
                    };
                    if better {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        let (_, i, j) = best.expect("positive definite forms have nonzero entries");
        let pivot = if i == j {
            Some(i)
        } else if p != 2 {
            // e_i += e_j: the new diagonal entry has the least valuation.
            for k in 0..n {
                let t = s[j][k].clone();
                s[i][k] += t;
            }
            for k in 0..n {
                let t = s[k][j].clone();
                s[k][i] += t;
            }
            Some(i)
        } else {
            None
        };
        match pivot {
            Some(i) => {
                let a = s[i][i].clone();
                let rest: Vec<usize> = (0..n).filter(|&k| k != i).collect();
                let next =
                    rest.iter().map(|&k| rest.iter().map(|&l| &s[k][l] - &s[k][i] * &s[i][l] / &a).collect()).collect();
                out.push(JordanBlock::One(a));
                s = next;
            }
            None => {
                let (a, b, c) = (s[i][i].clone(), s[i][j].clone(), s[j][j].clone());
                let det = &a * &c - &b * &b;
                let rest: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
                let next = rest
                    .iter()
                    .map(|&k| {
                        rest.iter()
                            .map(|&l| {
                                let (u1, u2) = (&s[k][i], &s[k][j]);
                                let (v1, v2) = (&s[i][l], &s[j][l]);
                                let corr = (u1 * (&c * v1 - &b * v2) + u2 * (&a * v2 - &b * v1)) / &det;
                                &s[k][l] - corr
                            })
                            .collect()
                    })
                    .collect();
                out.push(JordanBlock::Two([a, b, c]));
                s = next;
            }
        }
    }
    out
}

fn mod_inverse(a: u64, m: u64) -> u64 {
    let (mut r0, mut r1) = (m as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    assert_eq!(r0, 1, "denominator is not a unit");
    t0.rem_euclid(m as i128) as u64
}

/// Reduces a rational with unit denominator modulo `q`.
fn rat_mod(x: &BigRational, q: u64) -> u64 {
    let bq = BigInt::from(q);
    let num = x.numer().mod_floor(&bq).to_u64().unwrap();
    let den = x.denom().mod_floor(&bq).to_u64().unwrap();
    ((num as u128 * mod_inverse(den, q) as u128) % q as u128) as u64
}

/// Orbits of `Z/p^k` under multiplication by squares of units. Value
/// distributions of quadratic forms are constant on these classes, so they
/// are stored and convolved per class.
struct Residues {
    q: u64,
    classes: usize,
    class_of: Vec<u32>,
    size: Vec<u64>,
    /// `trans[(c3 * C + c1) * C + c2]` = #{a in c1 : rep(c3) - a in c2}.
    trans: Vec<u64>,
}

impl Residues {
    fn new(p: u64, k: u32) -> Self {
        let q = p.pow(k);
        let slots = if p == 2 { 4 } else { 2 };
        let classes = 1 + k as usize * slots;
        let mut class_of = vec![0u32; q as usize];
        for (a, c) in class_of.iter_mut().enumerate().skip(1) {
            let mut u = a as u64;
            let mut v = 0usize;
            while u % p == 0 {
                u /= p;
                v += 1;
            }
            let sub = if p == 2 {
                let j = k as usize - v;
                ((u % (1u64 << j.min(3))) >> 1) as usize
            } else if arith::kronecker((u % p) as i64, p) == 1 {
                0
            } else {
                1
            };
            *c = (1 + v * slots + sub) as u32;
        }
        let mut size = vec![0u64; classes];
        let mut rep = vec![u64::MAX; classes];
        for (a, &c) in class_of.iter().enumerate() {
            size[c as usize] += 1;
            if rep[c as usize] == u64::MAX {
                rep[c as usize] = a as u64;
            }
        }
        let mut trans = vec![0u64; classes * classes * classes];
        for c3 in 0..classes {
            if size[c3] == 0 {
                continue;
            }
            let t = rep[c3];
            for a in 0..q {
                let c1 = class_of[a as usize] as usize;
                let c2 = class_of[((t + q - a) % q) as usize] as usize;
                trans[(c3 * classes + c1) * classes + c2] += 1;
            }
        }
        Self { q, classes, class_of, size, trans }
    }

    fn per_class(&self, tally: &[u64]) -> Vec<BigUint> {
        let mut sums = vec![0u64; self.classes];
        for (a, &n) in tally.iter().enumerate() {
            sums[self.class_of[a] as usize] += n;
        }
        sums.iter()
            .zip(&self.size)
            .map(|(&s, &z)| {
                if z == 0 {
                    return BigUint::zero();
                }
                debug_assert_eq!(s % z, 0);
                BigUint::from(s / z)
            })
            .collect()
    }

    fn convolve(&self, f: &[BigUint], g: &[BigUint]) -> Vec<BigUint> {
        let c = self.classes;
        (0..c)
            .map(|c3| {
                let mut acc = BigUint::zero();
                if self.size[c3] == 0 {
                    return acc;
                }
                for (c1, f1) in f.iter().enumerate() {
                    if f1.is_zero() {
                        continue;
                    }
                    for (c2, g2) in g.iter().enumerate() {
                        let t = self.trans[(c3 * c + c1) * c + c2];
                        if t != 0 && !g2.is_zero() {
                            acc += f1 * g2 * t;
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

/// Per-element value counts of one block mod `q`, as a class function.
fn block_counts(block: &[u64], res: &Residues) -> Vec<BigUint> {
    let q = res.q;
    let mut tally = vec![0u64; q as usize];
    let sq: Vec<u64> = (0..q).map(|x| ((x as u128 * x as u128) % q as u128) as u64).collect();
    match *block {
        [d] => {
            for &s in &sq {
                tally[((d as u128 * s as u128) % q as u128) as usize] += 1;
            }
        }
        [a, b, c] => {
            let ax: Vec<u64> = sq.iter().map(|&s| ((a as u128 * s as u128) % q as u128) as u64).collect();
            let cy: Vec<u64> = sq.iter().map(|&s| ((c as u128 * s as u128) % q as u128) as u64).collect();
            let b2 = (2 * b as u128 % q as u128) as u64;
            for x in 0..q {
                let bx = ((b2 as u128 * x as u128) % q as u128) as u64;
                let mut cross = 0u64;
                for y in 0..q {
                    let v = (ax[x as usize] + cross + cy[y as usize]) % q;
                    tally[v as usize] += 1;
                    cross = (cross + bx) % q;
                }
            }
        }
        _ => unreachable!(),
    }
    res.per_class(&tally)
}

/// Number of `x mod p^k` with `Q(x) = n mod p^k`, from the Jordan splitting.
pub fn count_mod(form: &QuadForm, n: i64, p: u64, k: u32) -> Result<BigUint> {
    let q = p
        .checked_pow(k)
        .filter(|&q| q <= MAX_MODULUS)
        .ok_or_else(|| Error::InvalidArgument(format!("modulus {p}^{k} exceeds the residue table limit")))?;
    let res = Residues::new(p, k);
    let blocks = jordan_blocks(form, p);
    let mut cache: HashMap<Vec<u64>, Vec<BigUint>> = HashMap::new();
    let mut acc: Option<Vec<BigUint>> = None;
    for b in &blocks {
        let key: Vec<u64> = match b {
            JordanBlock::One(d) => vec![rat_mod(d, q)],
            JordanBlock::Two(t) => t.iter().map(|x| rat_mod(x, q)).collect(),
        };
        let f = cache.entry(key.clone()).or_insert_with(|| block_counts(&key, &res)).clone();
        acc = Some(match acc {
            None => f,
            Some(g) => res.convolve(&g, &f),
        });
    }
    let acc = acc.expect("forms have positive dimension");
    let r = n.rem_euclid(q as i64) as usize;
    Ok(acc[res.class_of[r] as usize].clone())
}

/// Direct count over all of `(Z/p^k)^m`; refused above [`BRUTE_FORCE_LIMIT`].
pub fn count_mod_brute(form: &QuadForm, n: i64, p: u64, k: u32) -> Result<u64> {
    let m = form.dim();
    let q = p.pow(k) as i128;
    let total = (q as u128).checked_pow(m as u32).filter(|&t| t <= BRUTE_FORCE_LIMIT as u128);
    if total.is_none() {
        return Err(Error::InvalidArgument(format!("{p}^{k} in dimension {m} is too large to brute force")));
    }
    let g = form.gram();
    let target = (n as i128).rem_euclid(q);
    let mut x = vec![0i128; m];
    let mut count = 0u64;
    loop {
        let mut v = 0i128;
        for i in 0..m {
            let mut row = 0i128;
            for j in 0..m {
                row += g[i * m + j] as i128 * x[j];
            }
            v += row % q * x[i];
        }
        if v.rem_euclid(q) == target {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == m {
                return Ok(count);
            }
            x[i] += 1;
            if x[i] < q {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

fn normalized(count: BigUint, p: u64, k: u32, m: usize) -> BigRational {
    let den = BigInt::from(p).pow(k * (m as u32 - 1));
    BigRational::new(BigInt::from(count), den)
}

fn is_good_prime(form: &QuadForm, n: i64, p: u64) -> bool {
    p != 2 && !(form.det() % p).is_zero() && n % p as i64 != 0
}

/// Closed form at `p` not dividing `2 det N`: the count mod `p` already
/// equals the limit.
pub fn good_prime_density(form: &QuadForm, n: i64, p: u64) -> BigRational {
    let m = form.dim();
    let pb = BigInt::from(p);
    if m % 2 == 0 {
        let sign = if (m / 2) % 2 == 0 { 1 } else { -1 };
        let chi = arith::legendre_big(&(form.det() * sign), p);
        BigRational::one() - BigRational::new(BigInt::from(chi), pb.pow(m as u32 / 2))
    } else {
        let sign = if ((m - 1) / 2) % 2 == 0 { 1 } else { -1 };
        let chi = arith::legendre_big(&(form.det() * n * sign), p);
        BigRational::one() + BigRational::new(BigInt::from(chi), pb.pow((m as u32 - 1) / 2))
    }
}

/// Exponent from which the stability check starts at a bad prime.
pub fn stabilization_start(form: &QuadForm, n: i64, p: u64) -> u32 {
    let vn = arith::valuation(&BigInt::from(n), p);
    let vd = arith::valuation(form.det(), p);
    2 * vn + vd + if p == 2 { 3 } else { 1 }
}

/// Normalized counts `p^{-k(m-1)} #{x mod p^k : Q(x) = N}` for `k` from
/// `k_min`, stopping at the first `k` that agrees with `k + 1`.
pub fn local_density_counted(form: &QuadForm, n: i64, p: u64, k_min: u32, k_max: u32) -> Result<LocalDensity> {
    let m = form.dim();
    let mut prev = normalized(count_mod(form, n, p, k_min)?, p, k_min, m);
    for k in k_min..k_max {
        let next = normalized(count_mod(form, n, p, k + 1)?, p, k + 1, m);
        if next == prev {
            return Ok(LocalDensity { p, value: prev, stabilized_at: k });
        }
        if k + 1 == k_max {
            return Err(Error::NotStabilized { p, k_max, last: [prev.to_string(), next.to_string()] });
        }
        prev = next;
    }
    Err(Error::NotStabilized { p, k_max, last: [prev.to_string(), prev.to_string()] })
}

/// `sigma_p(A, N)`. Good primes use the closed form; bad primes count
/// solutions mod `p^k` until two consecutive exponents agree.
pub fn local_density(form: &QuadForm, n: i64, p: u64, k_max: Option<u32>) -> Result<LocalDensity> {
    if n <= 0 {
        return Err(Error::UnsupportedN(n));
    }
    if is_good_prime(form, n, p) {
        return Ok(LocalDensity { p, value: good_prime_density(form, n, p), stabilized_at: 1 });
    }
    let k_min = stabilization_start(form, n, p);
    let k_max = k_max.unwrap_or(if p == 2 { DEFAULT_K_MAX_2 } else { DEFAULT_K_MAX_ODD });
    local_density_counted(form, n, p, k_min, k_max.max(k_min + 1))
}

/// `pi^{m/2} / Gamma(m/2) * det^{-1/2} * N^{(m-2)/2}`.
pub fn archimedean_density(form: &QuadForm, n: i64) -> Result<f64> {
    if n <= 0 {
        return Err(Error::UnsupportedN(n));
    }
    let m = form.dim() as f64;
    let det = form.det().to_f64().unwrap();
    let ln = 0.5 * m * PI.ln() - ln_gamma(0.5 * m) - 0.5 * det.ln() + (0.5 * m - 1.0) * (n as f64).ln();
    Ok(ln.exp())
}

/// `L(1, chi_D)` for the Kronecker character of `D = 0, 1 mod 4`, `D < 0`,
/// via `-(1/q) sum_a chi(a) psi(a/q)`.
pub fn l_value_at_one(disc: i64) -> f64 {
    let q = disc.unsigned_abs();
    let s: f64 = (1..=q).map(|a| arith::kronecker(disc, a) as f64 * digamma(a as f64 / q as f64)).sum();
    -s / q as f64
}

/// How the good-prime part of the Euler product is handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TailPolicy {
    /// Closed form through `L(1, chi)` (dimensions 2 and 3).
    LFunction,
    /// Product truncated at [`PRIME_CUTOFF`] with a reported relative bound.
    Truncated,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalProduct {
    pub sigma_inf: f64,
    /// Densities at the primes dividing `2 det N`.
    pub bad_primes: Vec<LocalDensity>,
    /// Product over good primes up to the cutoff.
    pub good_product_truncated: f64,
    /// Good-prime factor actually used.
    pub good_product: f64,
    pub tail: TailPolicy,
    /// Relative error bound for `good_product`.
    pub tail_bound: f64,
    /// Siegel's factor: 1/2 in dimension 2, else 1.
    pub epsilon: f64,
    pub value: f64,
}

fn bad_primes(form: &QuadForm, n: i64) -> Result<Vec<u64>> {
    let mut ps = arith::prime_divisors_big(&(form.det() * 2 * n), 1 << 24)
        .ok_or_else(|| Error::InvalidArgument("2 det N has a prime factor beyond 2^24".into()))?;
    ps.sort_unstable();
    ps.dedup();
    Ok(ps)
}

/// `epsilon * sigma_inf * prod_p sigma_p(A, N)` for `m >= 2`.
pub fn local_product(form: &QuadForm, n: i64) -> Result<LocalProduct> {
    let m = form.dim();
    if m < 2 {
        return Err(Error::DimensionTooSmall(m));
    }
    let sigma_inf = archimedean_density(form, n)?;
    let bad = bad_primes(form, n)?;
    let densities: Vec<LocalDensity> = bad.iter().map(|&p| local_density(form, n, p, None)).collect::<Result<_>>()?;
    let mut ln_trunc = 0.0;
    for p in arith::primes_up_to(PRIME_CUTOFF) {
        if bad.binary_search(&p).is_ok() {
            continue;
        }
        ln_trunc += good_prime_density(form, n, p).to_f64().unwrap().ln();
    }
    let truncated = ln_trunc.exp();
    let d = form.det().to_i64().filter(|d| d.checked_mul(4 * n * n).is_some());
    let (good, tail, bound) = match (m, d) {
        (2, Some(d)) => (1.0 / l_value_at_one(-4 * d * n * n), TailPolicy::LFunction, 1e-12),
        (3, Some(d)) => {
            let euler: f64 = bad.iter().map(|&p| 1.0 - (p as f64).powi(-2)).product();
            (l_value_at_one(-4 * d * n) * 6.0 / (PI * PI) / euler, TailPolicy::LFunction, 1e-12)
        }
        _ => {
            let e = if m % 2 == 0 { m / 2 } else { (m - 1) / 2 } as f64;
            let p = PRIME_CUTOFF as f64;
            let bound = if e > 1.0 { 2.0 * p.powf(1.0 - e) / ((e - 1.0) * p.ln()) } else { f64::INFINITY };
            (truncated, TailPolicy::Truncated, bound)
        }
    };
    let epsilon = if m == 2 { 0.5 } else { 1.0 };
    let bad_product: f64 = densities.iter().map(|d| d.value.to_f64().unwrap()).product();
    Ok(LocalProduct {
        sigma_inf,
        bad_primes: densities,
        good_product_truncated: truncated,
        good_product: good,
        tail,
        tail_bound: bound,
        epsilon,
        value: epsilon * sigma_inf * bad_product * good,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AverageMethod {
    Enumerate,
    Local,
    Both,
}

#[derive(Clone, Debug, Serialize)]
pub struct SiegelAverage {
    pub n: i64,
    /// `R_{A_i}(N)` per class, when enumerated.
    pub per_class: Vec<u64>,
    #[serde(serialize_with = "crate::report::opt_rational")]
    pub enumerated: Option<BigRational>,
    pub local: Option<LocalProduct>,
    pub relative_gap: Option<f64>,
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_gap(exact: &BigRational, approx: f64) -> f64 {
    let e = exact.to_f64().unwrap();
    let scale = e.abs().max(approx.abs());
    if scale == 0.0 {
        0.0
    } else {
        (e - approx).abs() / scale
    }
}

/// Genus average `R(N) = sum_i w_i R_{A_i}(N)`.
pub fn siegel_average(genus: &GenusData, n: i64, method: AverageMethod) -> Result<SiegelAverage> {
    if n <= 0 {
        return Err(Error::UnsupportedN(n));
    }
    let mut out = SiegelAverage { n, per_class: Vec::new(), enumerated: None, local: None, relative_gap: None };
    if method != AverageMethod::Local {
        let weights = genus.weights()?;
        out.per_class = genus.classes.iter().map(|c| rep_count(&c.form, n)).collect::<Result<_>>()?;
        out.enumerated = Some(weights.iter().zip(&out.per_class).map(|(w, &r)| w * BigInt::from(r)).sum());
    }
    if method != AverageMethod::Enumerate {
        out.local = Some(local_product(&genus.classes[0].form, n)?);
    }
    if let (Some(e), Some(l)) = (&out.enumerated, &out.local) {
        out.relative_gap = Some(relative_gap(e, l.value));
    }
    Ok(out)
}

/// Siegel probability that `N` is represented: total weight of the classes
/// with `R_{A_i}(N) > 0`.
pub fn mass_probability(genus: &GenusData, n: i64) -> Result<BigRational> {
    let weights = genus.weights()?;
    let mut total = BigRational::zero();
    for (c, w) in genus.classes.iter().zip(weights) {
        if rep_count(&c.form, n)? > 0 {
            total += w;
        }
    }
    Ok(total)
}

/// `m N^{m/2-1} pi^{m/2} / Gamma(m/2 + 1)`, in logarithmic form.
pub fn ln_main_term(m: u64, n: f64) -> f64 {
    let h = m as f64 / 2.0;
    (m as f64).ln() + (h - 1.0) * n.ln() + h * PI.ln() - ln_gamma(h + 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffReport {
    pub m: u64,
    pub t: f64,
    /// `floor(e^{pi e})`.
    pub constant: u64,
    /// Odd unimodular case, thresholds on `q`.
    pub odd_lower: f64,
    pub odd_upper: f64,
    /// Even unimodular case, thresholds on `2q`.
    pub even_lower: f64,
    pub even_upper: f64,
    /// The pair matching the parity available in dimension `m`
    /// (even when `8 | m`, odd otherwise).
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    /// `floor(m/(2 pi e) + log(m)/(2 pi e) - 1)`.
    pub cutoff_norm: i64,
    pub ln_main_term_at_cutoff: f64,
    pub main_term_at_cutoff: f64,
    /// `(1 + 4 pi e / m)^{m/2 - 1}`.
    pub ratio_main_term: f64,
    /// `ratio_main_term / e^{2 pi e} - 1`.
    pub ratio_deviation: f64,
}

pub fn cutoff_thresholds(m: u64, t: f64) -> Result<CutoffReport> {
    if m < 4 {
        return Err(Error::DimensionTooSmall(m as usize));
    }
    let mf = m as f64;
    let c = 2.0 * PI * E;
    let lg = mf.ln();
    let odd_lower = mf / c + 0.5 / c * lg - t - 1.0;
    let odd_upper = mf / c + 1.6 / (PI * E) * lg + t;
    let even_lower = mf / c + 0.5 / (PI * E) * lg - t - 1.0;
    let even_upper = mf / c + 2.6 / (PI * E) * lg + t;
    let (lower_threshold, upper_threshold) = if m % 8 == 0 { (even_lower, even_upper) } else { (odd_lower, odd_upper) };
    let cutoff_norm = (mf / c + lg / c - 1.0).floor() as i64;
    let ln_main = if cutoff_norm >= 1 { ln_main_term(m, cutoff_norm as f64) } else { f64::NEG_INFINITY };
    let ln_ratio = (mf / 2.0 - 1.0) * (2.0 * c / mf).ln_1p();
    Ok(CutoffReport {
        m,
        t,
        constant: (PI * E).exp().floor() as u64,
        odd_lower,
        odd_upper,
        even_lower,
        even_upper,
        lower_threshold,
        upper_threshold,
        cutoff_norm,
        ln_main_term_at_cutoff: ln_main,
        main_term_at_cutoff: ln_main.exp(),
        ratio_main_term: ln_ratio.exp(),
        ratio_deviation: (ln_ratio - c).exp_m1(),
    })
}

/// Mass `sum 1/|O(L)|` of the even unimodular genus in dimension `n`:
/// `|B_{n/2}|/n * prod_{j=1}^{n/2-1} |B_{2j}|/(4j)`.
pub fn even_unimodular_mass(n: usize) -> Result<BigRational> {
    if n == 0 || n % 8 != 0 {
        return Err(Error::InvalidArgument(format!("no even unimodular lattices in dimension {n}")));
    }
    let h = n / 2;
    let mut acc = arith::bernoulli(h).abs() / BigInt::from(n);
    for j in 1..h {
        acc *= arith::bernoulli(2 * j).abs() / BigInt::from(4 * j);
    }
    Ok(acc)
}

/// Numeric audit of the trivial-kernel variance chain
/// `Var(b) <= max_i R_i(b) * sum w_i |R_i(b) - R(b)| <= 2 max_i R_i(b) R(b) <= 2 cap R(b)`
/// with `b` the least norm (1 for odd, 2 for even genera) and `cap` the
/// root-count bound `2m` resp. `10 m^2`, followed by the Hecke step to `bq`.
#[derive(Clone, Debug, Serialize)]
pub struct ChainAudit {
    pub m: usize,
    pub base_norm: i64,
    pub q: u64,
    pub per_class: Vec<u64>,
    #[serde(serialize_with = "crate::report::rational")]
    pub r_base: BigRational,
    pub max_r_base: u64,
    pub root_cap: u64,
    #[serde(serialize_with = "crate::report::rational")]
    pub var_base: BigRational,
    #[serde(serialize_with = "crate::report::rational")]
    pub bound_cauchy: BigRational,
    #[serde(serialize_with = "crate::report::rational")]
    pub bound_two_max: BigRational,
    #[serde(serialize_with = "crate::report::rational")]
    pub bound_root: BigRational,
    /// `bound_root * q^{m/2-1} d(q)^2`.
    pub rhs: f64,
    /// Trivial-kernel `Var(bq)`, when enumeration fits the budget.
    #[serde(serialize_with = "crate::report::opt_rational")]
    pub var_target: Option<BigRational>,
    /// `Var(bq) <= q^{m/2-1} d(q)^2 Var(b)`, when `var_target` is known.
    pub hecke_step_ok: Option<bool>,
    pub chain_ok: bool,
}

fn weighted_variance(weights: &[BigRational], counts: &[u64]) -> (BigRational, BigRational) {
    let mean: BigRational = weights.iter().zip(counts).map(|(w, &r)| w * BigInt::from(r)).sum();
    let var = weights
        .iter()
        .zip(counts)
        .map(|(w, &r)| {
            let d = BigRational::from_integer(r.into()) - &mean;
            w * &d * &d
        })
        .sum();
    (mean, var)
}

pub fn variance_chain_audit(genus: &GenusData, q: u64, target_budget: Option<u64>) -> Result<ChainAudit> {
    let m = genus.dim();
    let even = genus.classes[0].form.is_even();
    let base_norm = if even { 2 } else { 1 };
    let root_cap = if even { 10 * (m * m) as u64 } else { 2 * m as u64 };
    let weights = genus.weights()?;
    let per_class: Vec<u64> = genus.classes.iter().map(|c| rep_count(&c.form, base_norm)).collect::<Result<_>>()?;
    let (r_base, var_base) = weighted_variance(&weights, &per_class);
    let max_r = *per_class.iter().max().unwrap();
    let abs_dev: BigRational =
        weights.iter().zip(&per_class).map(|(w, &r)| w * (BigRational::from_integer(r.into()) - &r_base).abs()).sum();
    let bound_cauchy = abs_dev * BigInt::from(max_r);
    let bound_two_max = &r_base * BigInt::from(2 * max_r);
    let bound_root = &r_base * BigInt::from(2 * root_cap);
    let growth = (q as f64).powf(m as f64 / 2.0 - 1.0) * (arith::divisor_count(q) as f64).powi(2);
    let rhs = bound_root.to_f64().unwrap() * growth;
    let chain_ok = var_base <= bound_cauchy && bound_cauchy <= bound_two_max && bound_two_max <= bound_root;
    let mut var_target = None;
    if let Some(budget) = target_budget {
        let target = base_norm * q as i64;
        let counts: Result<Vec<u64>> =
            genus.classes.iter().map(|c| rep_count_with_budget(&c.form, target, budget)).collect();
        match counts {
            Ok(c) => var_target = Some(weighted_variance(&weights, &c).1),
            Err(Error::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let hecke_step_ok =
        var_target.as_ref().map(|v| v.to_f64().unwrap() <= var_base.to_f64().unwrap() * growth * (1.0 + 1e-12));
    Ok(ChainAudit {
        m,
        base_norm,
        q,
        per_class,
        r_base,
        max_r_base: max_r,
        root_cap,
        var_base,
        bound_cauchy,
        bound_two_max,
        bound_root,
        rhs,
        var_target,
        hecke_step_ok,
        chain_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::root_lattices;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    fn forms() -> Vec<QuadForm> {
        vec![
            QuadForm::identity(3),
            QuadForm::identity(4),
            root_lattices::a(2),
            root_lattices::d(4),
            QuadForm::diagonal(&[1, 2, 3]).unwrap(),
            QuadForm::from_rows(&[vec![2, 1, 0], vec![1, 2, 1], vec![0, 1, 4]]).unwrap(),
        ]
    }

    #[test]
    fn block_counts_match_brute_force() {
        for f in forms() {
            for &p in &[2u64, 3, 5] {
                for k in 1..=4u32 {
                    let total = (p.pow(k) as u128).pow(f.dim() as u32);
                    if total > 200_000 {
                        continue;
                    }
                    for n in 0..12 {
                        let fast = count_mod(&f, n, p, k).unwrap();
                        let slow = count_mod_brute(&f, n, p, k).unwrap();
                        assert_eq!(fast, BigUint::from(slow), "{f} n={n} p={p} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_counting() {
        for f in forms() {
            for &p in &[3u64, 5, 7, 11] {
                for n in 1..15 {
                    if !is_good_prime(&f, n, p) {
                        continue;
                    }
                    let counted = local_density_counted(&f, n, p, 1, 3).unwrap();
                    assert_eq!(counted.stabilized_at, 1);
                    assert_eq!(counted.value, good_prime_density(&f, n, p), "{f} n={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn documented_densities() {
        let i3 = QuadForm::identity(3);
        let d = local_density(&i3, 7, 2, None).unwrap();
        assert!(d.value.is_zero());
        assert_eq!(local_density(&i3, 1, 2, None).unwrap().value, rat(3, 2));
        assert_eq!(local_density(&QuadForm::identity(4), 1, 2, None).unwrap().value, rat(1, 1));

        let i4 = QuadForm::identity(4);
        let d = local_density(&i4, 1, 3, None).unwrap();
        assert_eq!(d.stabilized_at, 1);
        let c3 = count_mod_brute(&i4, 1, 3, 1).unwrap();
        let c9 = count_mod_brute(&i4, 1, 3, 2).unwrap();
        assert_eq!(d.value, rat(c3 as i64, 27));
        assert_eq!(d.value, rat(c9 as i64, 9i64.pow(3)));

        let e8 = root_lattices::e8();
        let d = local_density(&e8, 2, 5, None).unwrap();
        assert_eq!(d.stabilized_at, 1);
        assert!(d.value.is_positive());
        let c5 = count_mod_brute(&e8, 2, 5, 1).unwrap();
        assert_eq!(d.value, rat(c5 as i64, 5i64.pow(7)));
    }

    #[test]
    fn archimedean_normalization() {
        let i4 = QuadForm::identity(4);
        assert!((archimedean_density(&i4, 1).unwrap() - PI * PI).abs() < 1e-12);
        for m in 3..9 {
            let f = QuadForm::identity(m);
            let r = archimedean_density(&f, 12).unwrap() / archimedean_density(&f, 3).unwrap();
            assert!((r / 4f64.powf((m as f64 - 2.0) / 2.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_four_squares_via_densities() {
        let i4 = QuadForm::identity(4);
        for n in 1..=30i64 {
            let jacobi: i64 = arith::divisors(n as u64).iter().filter(|&&d| d % 4 != 0).map(|&d| d as i64).sum();
            let lp = local_product(&i4, n).unwrap();
            assert!((lp.value / (8 * jacobi) as f64 - 1.0).abs() < 1e-4, "n={n}");
        }
    }

    #[test]
    fn class_number_one_agreement() {
        let cases: Vec<(QuadForm, u64, Vec<i64>)> = vec![
            (QuadForm::identity(2), 8, (1..=20).collect()),
            (QuadForm::identity(3), 48, (1..=20).collect()),
            (QuadForm::identity(5), 3840, (1..=12).collect()),
            (root_lattices::a(2), 12, (1..=20).collect()),
            (root_lattices::e8(), 696_729_600, vec![2, 4, 6, 8, 10]),
        ];
        for (f, aut, ns) in cases {
            let g = GenusData::single("f", f, Some(aut.into()));
            for n in ns {
                let avg = siegel_average(&g, n, AverageMethod::Both).unwrap();
                assert!(avg.relative_gap.unwrap() < 1e-3, "n={n} gap={:?}", avg.relative_gap);
            }
        }
    }

    #[test]
    fn l_completion_matches_truncation() {
        let lp = local_product(&QuadForm::identity(3), 5).unwrap();
        assert_eq!(lp.tail, TailPolicy::LFunction);
        assert!((lp.good_product / lp.good_product_truncated - 1.0).abs() < 1e-2);
    }

    #[test]
    fn cutoff_numbers() {
        let r = cutoff_thresholds(1_000_000, 0.0).unwrap();
        assert_eq!(r.constant, 5113);
        assert!(r.ratio_deviation.abs() < 1e-3);
        for m in [10_000u64, 100_000] {
            assert!(cutoff_thresholds(m, 0.0).unwrap().main_term_at_cutoff <= 1.0);
        }
        assert!(cutoff_thresholds(3, 0.0).is_err());
    }

    #[test]
    fn even_unimodular_masses() {
        assert_eq!(even_unimodular_mass(8).unwrap(), rat(1, 696_729_600));
        let e8 = BigInt::from(696_729_600u64);
        let d16 = BigInt::from(2).pow(15) * arith::factorial(16);
        let sum = BigRational::new(1.into(), e8.clone() * e8 * 2) + BigRational::new(1.into(), d16);
        assert_eq!(even_unimodular_mass(16).unwrap(), sum);
    }

    #[test]
    fn chain_audit_on_single_class() {
        let g = GenusData::single("E8", root_lattices::e8(), Some(696_729_600u64.into()));
        let a = variance_chain_audit(&g, 3, Some(1_000_000_000)).unwrap();
        assert!(a.var_base.is_zero());
        assert!(a.chain_ok);
        assert_eq!(a.hecke_step_ok, Some(true));
    }
}
