//! Harmonic polynomials for `Delta_A`, zonal functions, Weyl sums,
//! reproducing-kernel pair sums and harmonic theta series.

use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith;
use crate::enumeration::{short_vectors, vectors_of_norm};
use crate::error::{Error, Result};
use crate::forms::{GenusData, QuadForm};
use crate::isometry::orbit_decompose;
use crate::linalg::QMatrix;

/// Sparse polynomial with rational coefficients, keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, BigRational>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        Self::monomial(vec![0; nvars], c)
    }

    pub fn monomial(exps: Vec<u32>, c: BigRational) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, BigRational::one())
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, BigRational)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars);
            p.add_term(e, c);
        }
        p
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(exps).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree of the highest term; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms.keys().all(|e| e.iter().sum::<u32>() == d)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly { nvars: self.nvars, terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect() }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }

    /// Second partial derivative `d^2 / dx_i dx_j`.
    pub fn second_derivative(&self, i: usize, j: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut e = e.clone();
            let mut c = c.clone();
            for &v in &[i, j] {
                if e[v] == 0 {
                    c = BigRational::zero();
                    break;
                }
                c *= BigInt::from(e[v]);
                e[v] -= 1;
            }
            out.add_term(e, c);
        }
        out
    }

    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = c.clone();
                for (xi, &k) in x.iter().zip(e) {
                    if k > 0 {
                        t *= num_traits::pow(xi.clone(), k as usize);
                    }
                }
                t
            })
            .sum()
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c.to_f64().unwrap() * x.iter().zip(e).map(|(xi, &k)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }
}

/// All exponent vectors of total degree `k` in `n` variables, in
/// lexicographically decreasing order.
pub fn monomials(n: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == n {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=k).rev() {
            prefix.push(a);
            rec(n, k - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// `Delta_A p = sum_{ij} (A^{-1})_{ij} d^2 p / dx_i dx_j`.
pub fn laplacian_apply(form: &QuadForm, poly: &Poly) -> Poly {
    let inv = form.inverse();
    let m = form.dim();
    let mut out = Poly::zero(m);
    for i in 0..m {
        for j in 0..m {
            if !inv[i][j].is_zero() {
                out = out.add(&poly.second_derivative(i, j).scale(&inv[i][j]));
            }
        }
    }
    out
}

/// `sum_i d_i^{-1} d^2 p / dy_i^2`, the Laplacian in the LDL frame.
pub fn frame_laplacian(d: &[BigRational], poly: &Poly) -> Poly {
    let mut out = Poly::zero(poly.nvars);
    for (i, di) in d.iter().enumerate() {
        out = out.add(&poly.second_derivative(i, i).scale(&di.recip()));
    }
    out
}

/// Coordinates `y = L^T x` from `A = L D L^T`, in which
/// `x^T A x = sum d_i y_i^2` and `Delta_A = sum d_i^{-1} d^2/dy_i^2`.
#[derive(Clone, Debug)]
pub struct Frame {
    pub l: QMatrix,
    pub d: Vec<BigRational>,
    /// Common denominator `s` of the entries of `L`.
    pub scale: BigInt,
    /// Integer rows of `s L^T`: `s y_i = sum_j rows[i][j] x_j`.
    pub rows: Vec<Vec<i64>>,
}

impl Frame {
    pub fn new(form: &QuadForm) -> Self {
        let ldl = form.ldl();
        let m = form.dim();
        let mut s = BigInt::one();
        for row in &ldl.l {
            for x in row {
                s = s.lcm(x.denom());
            }
        }
        let sq = BigRational::from_integer(s.clone());
        let rows = (0..m)
            .map(|i| {
                (0..m).map(|j| (&ldl.l[j][i] * &sq).to_integer().to_i64().expect("frame entries fit i64")).collect()
            })
            .collect();
        Self { l: ldl.l, d: ldl.d, scale: s, rows }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// `s * y` for an integer vector `x`.
    pub fn scaled_coords(&self, x: &[i64]) -> Vec<i128> {
        self.rows.iter().map(|r| r.iter().zip(x).map(|(a, b)| *a as i128 * *b as i128).sum()).collect()
    }

    pub fn coords_f64(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scale.to_f64().unwrap();
        self.rows.iter().map(|r| r.iter().zip(x).map(|(a, b)| *a as f64 * b).sum::<f64>() / s).collect()
    }

    /// Rewrites a frame polynomial in the original coordinates.
    pub fn to_x(&self, p: &Poly) -> Poly {
        let m = self.dim();
        let linear: Vec<Poly> =
            (0..m).map(|i| Poly::from_terms(m, (0..m).map(|j| (unit(m, j), self.l[j][i].clone())))).collect();
        let mut cache: HashMap<Vec<u32>, Poly> = HashMap::new();
        cache.insert(vec![0; m], Poly::constant(m, BigRational::one()));
        let mut out = Poly::zero(m);
        for (e, c) in &p.terms {
            out = out.add(&expand_monomial(e, &linear, &mut cache).scale(c));
        }
        out
    }

    /// Rewrites a polynomial in `x` as a frame polynomial (`x = L^{-T} y`).
    pub fn from_x(&self, p: &Poly) -> Poly {
        let m = self.dim();
        let lt: QMatrix = (0..m).map(|i| (0..m).map(|j| self.l[j][i].clone()).collect()).collect();
        let inv = crate::linalg::inverse(&lt).expect("unit triangular");
        let linear: Vec<Poly> =
            (0..m).map(|i| Poly::from_terms(m, (0..m).map(|j| (unit(m, j), inv[i][j].clone())))).collect();
        let mut cache: HashMap<Vec<u32>, Poly> = HashMap::new();
        cache.insert(vec![0; m], Poly::constant(m, BigRational::one()));
        let mut out = Poly::zero(m);
        for (e, c) in &p.terms {
            out = out.add(&expand_monomial(e, &linear, &mut cache).scale(c));
        }
        out
    }
}

fn unit(m: usize, j: usize) -> Vec<u32> {
    let mut e = vec![0; m];
    e[j] = 1;
    e
}

fn expand_monomial(e: &[u32], linear: &[Poly], cache: &mut HashMap<Vec<u32>, Poly>) -> Poly {
    if let Some(p) = cache.get(e) {
        return p.clone();
    }
    let i = e.iter().position(|&k| k > 0).unwrap();
    let mut smaller = e.to_vec();
    smaller[i] -= 1;
    let p = expand_monomial(&smaller, linear, cache).mul(&linear[i]);
    cache.insert(e.to_vec(), p.clone());
    p
}

/// `dim H_k = C(m+k-1, k) - C(m+k-3, k-2)`.
pub fn harmonic_dim(m: usize, k: u32) -> u64 {
    let m = m as u64;
    let k = k as u64;
    let a = arith::binomial(m + k - 1, k).to_u64().unwrap();
    let b = if k >= 2 { arith::binomial(m + k - 3, k - 2).to_u64().unwrap() } else { 0 };
    a - b
}

/// Basis of degree-`k` harmonics. Polynomials are stored in the frame
/// coordinates `y = L^T x` of [`Frame`]; [`HarmonicBasis::to_x`] expands them.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub form: QuadForm,
    pub degree: u32,
    pub frame: Frame,
    pub basis: Vec<Poly>,
    pub dim: usize,
}

impl HarmonicBasis {
    pub fn to_x(&self, i: usize) -> Poly {
        self.frame.to_x(&self.basis[i])
    }

    pub fn harmonic(&self, i: usize) -> Harmonic {
        Harmonic { frame: self.frame.clone(), poly: self.basis[i].clone() }
    }
}

/// Each harmonic is fixed by its parts of degree 0 and 1 in `y_0`:
/// `h = sum_j y_0^j h_j` with `h_{j+2} = -d_0 Delta' h_j / ((j+2)(j+1))`.
pub fn harmonic_basis(form: &QuadForm, k: u32) -> HarmonicBasis {
    let frame = Frame::new(form);
    let m = form.dim();
    let d0 = frame.d[0].clone();
    let mut basis = Vec::new();
    let mut seeds: Vec<(u32, Vec<u32>)> = Vec::new();
    for beta in monomials(m - 1, k) {
        seeds.push((0, beta));
    }
    if k >= 1 {
        for beta in monomials(m - 1, k - 1) {
            seeds.push((1, beta));
        }
    }
    for (j0, beta) in seeds {
        let mut e = vec![j0];
        e.extend(&beta);
        let mut h = Poly::monomial(e, BigRational::one());
        let mut cur = Poly::monomial(std::iter::once(0).chain(beta.iter().copied()).collect(), BigRational::one());
        let mut j = j0;
        loop {
            // cur is h_j (no y_0); Delta' acts on the other variables.
            let mut lap = Poly::zero(m);
            for i in 1..m {
                lap = lap.add(&cur.second_derivative(i, i).scale(&frame.d[i].recip()));
            }
            if lap.is_zero() {
                break;
            }
            let factor = -&d0 / BigInt::from((j + 2) * (j + 1));
            cur = lap.scale(&factor);
            j += 2;
            let shifted = Poly::from_terms(
                m,
                cur.terms.iter().map(|(e, c)| {
                    let mut e = e.clone();
                    e[0] = j;
                    (e, c.clone())
                }),
            );
            h = h.add(&shifted);
        }
        basis.push(h);
    }
    let dim = basis.len();
    HarmonicBasis { form: form.clone(), degree: k, frame, basis, dim }
}

/// A polynomial in frame coordinates together with its frame; evaluated
/// exactly at integer vectors.
#[derive(Clone, Debug)]
pub struct Harmonic {
    pub frame: Frame,
    pub poly: Poly,
}

impl Harmonic {
    pub fn from_x(form: &QuadForm, p: &Poly) -> Self {
        let frame = Frame::new(form);
        let poly = frame.from_x(p);
        Self { frame, poly }
    }

    pub fn constant(form: &QuadForm) -> Self {
        Self { frame: Frame::new(form), poly: Poly::constant(form.dim(), BigRational::one()) }
    }

    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }

    pub fn is_harmonic(&self) -> bool {
        frame_laplacian(&self.frame.d, &self.poly).is_zero()
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator::new(self)
    }

    pub fn eval(&self, x: &[i64]) -> BigRational {
        self.evaluator().eval(x)
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.poly.eval_f64(&self.frame.coords_f64(x))
    }
}

/// `Re` or `Im` of `(sqrt(d_i) y_i + sqrt(-1) sqrt(d_j) y_j)^k`, divided by the
/// square-root factor common to all its terms so that the coefficients are
/// rational. Harmonic for the frame Laplacian.
pub fn plane_harmonic(form: &QuadForm, k: u32, i: usize, j: usize, imaginary: bool) -> Harmonic {
    let frame = Frame::new(form);
    let m = form.dim();
    let mut p = Poly::zero(m);
    for t in (0..=k).filter(|t| (t % 2 == 1) == imaginary) {
        let sign = if (t / 2) % 2 == 0 { 1 } else { -1 };
        let mut c = BigRational::from_integer(arith::binomial(k as u64, t as u64) * sign);
        c *= num_traits::pow(frame.d[i].clone(), ((k - t) / 2) as usize);
        c *= num_traits::pow(frame.d[j].clone(), (t / 2) as usize);
        let mut e = vec![0; m];
        e[i] = k - t;
        e[j] = t;
        p.add_term(e, c);
    }
    Harmonic { frame, poly: p }
}

/// Integerized evaluator: `phi(x) = numer(s y) / den`.
#[derive(Clone, Debug)]
pub struct Evaluator {
    rows: Vec<Vec<i64>>,
    terms: Vec<(Vec<u32>, BigInt)>,
    small: Option<Vec<(Vec<u32>, i128)>>,
    den: BigInt,
    maxdeg: u32,
}

impl Evaluator {
    fn new(h: &Harmonic) -> Self {
        let maxdeg = h.poly.degree();
        let mut lcm = BigInt::one();
        for c in h.poly.terms.values() {
            lcm = lcm.lcm(c.denom());
        }
        let s = &h.frame.scale;
        let terms: Vec<(Vec<u32>, BigInt)> = h
            .poly
            .terms
            .iter()
            .map(|(e, c)| {
                let deg: u32 = e.iter().sum();
                let v = (c * BigRational::from_integer(lcm.clone())).to_integer() * s.pow(maxdeg - deg);
                (e.clone(), v)
            })
            .collect();
        let small = terms.iter().map(|(e, c)| c.to_i128().map(|c| (e.clone(), c))).collect();
        Self { rows: h.frame.rows.clone(), terms, small, den: lcm * s.pow(maxdeg), maxdeg }
    }

    fn numer_small(&self, y: &[i128]) -> Option<i128> {
        let small = self.small.as_ref()?;
        let mut total: i128 = 0;
        for (e, c) in small {
            let mut t = *c;
            for (yi, &k) in y.iter().zip(e) {
                for _ in 0..k {
                    t = t.checked_mul(*yi)?;
                }
            }
            total = total.checked_add(t)?;
        }
        Some(total)
    }

    fn numer_big(&self, y: &[i128]) -> BigInt {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = c.clone();
                for (yi, &k) in y.iter().zip(e) {
                    if k > 0 {
                        t *= BigInt::from(*yi).pow(k);
                    }
                }
                t
            })
            .sum()
    }

    fn numer(&self, x: &[i64]) -> BigInt {
        let y: Vec<i128> =
            self.rows.iter().map(|r| r.iter().zip(x).map(|(a, b)| *a as i128 * *b as i128).sum()).collect();
        match self.numer_small(&y) {
            Some(v) => BigInt::from(v),
            None => self.numer_big(&y),
        }
    }

    pub fn eval(&self, x: &[i64]) -> BigRational {
        BigRational::new(self.numer(x), self.den.clone())
    }

    /// Exact `sum_x phi(x)`.
    pub fn sum(&self, xs: &[Vec<i64>]) -> BigRational {
        let total: BigInt = xs
            .par_chunks(4096)
            .map(|chunk| {
                let mut acc = BigInt::zero();
                let mut small: i128 = 0;
                for x in chunk {
                    let v = self.numer(x);
                    match v.to_i128().and_then(|v| small.checked_add(v)) {
                        Some(s) => small = s,
                        None => acc += v,
                    }
                }
                acc + small
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        BigRational::new(total, self.den.clone())
    }

    pub fn degree(&self) -> u32 {
        self.maxdeg
    }
}

/// `sum_x y(x)^gamma` over the points, for every degree-`k` frame monomial
/// `gamma`, in scaled coordinates `s y`.
fn moment_sums(frame: &Frame, k: u32, points: &[Vec<i64>]) -> HashMap<Vec<u32>, BigInt> {
    let m = frame.dim();
    let mons = monomials(m, k);
    let partial: Vec<Vec<BigInt>> = points
        .par_chunks(1024)
        .map(|chunk| {
            let mut small = vec![0i128; mons.len()];
            let mut big = vec![BigInt::zero(); mons.len()];
            for x in chunk {
                let y = frame.scaled_coords(x);
                let pows: Vec<Vec<Option<i128>>> = y
                    .iter()
                    .map(|&v| {
                        let mut p = vec![Some(1i128)];
                        for e in 1..=k as usize {
                            let prev = p[e - 1];
                            p.push(prev.and_then(|a| a.checked_mul(v)));
                        }
                        p
                    })
                    .collect();
                for (idx, g) in mons.iter().enumerate() {
                    let mut t = Some(1i128);
                    for (i, &e) in g.iter().enumerate() {
                        if e > 0 {
                            t = t.and_then(|a| pows[i][e as usize].and_then(|b| a.checked_mul(b)));
                        }
                    }
                    match t.and_then(|v| small[idx].checked_add(v)) {
                        Some(s) => small[idx] = s,
                        None => {
                            let v: BigInt = g.iter().zip(&y).map(|(&e, &yi)| BigInt::from(yi).pow(e)).product();
                            big[idx] += v;
                        }
                    }
                }
            }
            big.into_iter().zip(small).map(|(b, s)| b + s).collect()
        })
        .collect();
    let mut total = vec![BigInt::zero(); mons.len()];
    for p in partial {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    mons.into_iter().zip(total).collect()
}

/// `sum_{x in points} phi(x)` for every basis element, exactly, through one
/// table of monomial moments.
pub fn basis_sums(basis: &HarmonicBasis, points: &[Vec<i64>]) -> Vec<BigRational> {
    let k = basis.degree;
    let moments = moment_sums(&basis.frame, k, points);
    let sk = BigRational::from_integer(basis.frame.scale.pow(k));
    basis
        .basis
        .iter()
        .map(|p| {
            let s: BigRational = p.terms.iter().map(|(e, c)| c * BigRational::from_integer(moments[e].clone())).sum();
            s / &sk
        })
        .collect()
}

/// Normalized Gegenbauer values `R_0(t), ..., R_K(t)` with `R_k(1) = 1`,
/// orthogonal for the weight `(1 - t^2)^{(m-3)/2}`:
/// `(k+m-2) R_{k+1} = (2k+m-2) t R_k - k R_{k-1}`.
pub fn gegenbauer_all(m: usize, kmax: usize, t: f64) -> Vec<f64> {
    let mut r = Vec::with_capacity(kmax + 1);
    r.push(1.0);
    if kmax >= 1 {
        r.push(t);
    }
    let mf = m as f64;
    for k in 1..kmax {
        let kf = k as f64;
        let next = ((2.0 * kf + mf - 2.0) * t * r[k] - kf * r[k - 1]) / (kf + mf - 2.0);
        r.push(next);
    }
    r
}

pub fn gegenbauer(m: usize, k: usize, t: f64) -> f64 {
    gegenbauer_all(m, k, t)[k]
}

/// `p_{k,e}(x)`: the zonal harmonic at `e` evaluated at `x`, both on the
/// same level set of the form.
pub fn zonal(form: &QuadForm, k: usize, e: &[f64], x: &[f64]) -> Result<f64> {
    let m = form.dim();
    if m < 2 {
        return Err(Error::DimensionTooSmall(m));
    }
    let n = form.inner_f64(e, e);
    let nx = form.inner_f64(x, x);
    if n <= 0.0 || (nx - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidArgument(format!("points have norms {n} and {nx}")));
    }
    let t = (form.inner_f64(x, e) / n).clamp(-1.0, 1.0);
    Ok(gegenbauer(m, k, t))
}

/// Weyl sum in its two forms: directly over all points, and over
/// automorphism orbits weighted by `1/|Stab|`.
#[derive(Clone, Debug, Serialize)]
pub struct WeylSums {
    pub n: i64,
    pub degree: u32,
    /// `sum_x phi_i(x)` per class.
    #[serde(serialize_with = "crate::report::rationals")]
    pub per_class: Vec<BigRational>,
    /// `sum_i w_i sum_x phi_i(x)`.
    #[serde(serialize_with = "crate::report::rational")]
    pub full: BigRational,
    /// `mass^{-1} sum_i sum_orbits avg_orbit(phi_i) / |Stab|`.
    #[serde(serialize_with = "crate::report::rational")]
    pub orbit: BigRational,
}

pub fn weyl_sum(genus: &GenusData, phis: &[Harmonic], n: i64, budget: u64) -> Result<WeylSums> {
    if phis.len() != genus.len() {
        return Err(Error::InvalidArgument(format!("{} harmonics for {} classes", phis.len(), genus.len())));
    }
    let degree = phis[0].degree();
    let weights = genus.weights()?;
    let mass = genus.mass().expect("weights resolved");
    let mut per_class = Vec::new();
    let mut full = BigRational::zero();
    let mut orbit = BigRational::zero();
    for ((class, phi), w) in genus.classes.iter().zip(phis).zip(&weights) {
        let pts = vectors_of_norm(&class.form, n)?;
        let ev = phi.evaluator();
        let values: Vec<BigRational> = pts.iter().map(|x| ev.eval(x)).collect();
        let s: BigRational = values.iter().sum();
        full += w * &s;
        for o in orbit_decompose(&class.form, &pts, budget)? {
            let avg: BigRational = o.members.iter().map(|&i| &values[i]).sum::<BigRational>() / BigInt::from(o.size);
            orbit += avg / o.stabilizer_order.clone();
        }
        per_class.push(s);
    }
    Ok(WeylSums { n, degree, per_class, full, orbit: orbit / mass })
}

/// Histogram of `<x, y>_A` over ordered pairs of a point set.
pub fn inner_product_counts(form: &QuadForm, pts: &[Vec<i64>]) -> BTreeMap<i64, u64> {
    let images: Vec<Vec<i64>> = pts.iter().map(|x| form.apply(x)).collect();
    images
        .par_chunks(256)
        .map(|chunk| {
            let mut h: BTreeMap<i64, u64> = BTreeMap::new();
            for ax in chunk {
                for y in pts {
                    let t: i64 = ax.iter().zip(y).map(|(a, b)| a * b).sum();
                    *h.entry(t).or_insert(0) += 1;
                }
            }
            h
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        })
}

/// Largest number of ordered pairs a pair sum will visit.
pub const PAIR_BUDGET: u64 = 20_000_000_000;

/// Everything the spectral side needs from the integer points of norm `N`.
#[derive(Clone, Debug, Serialize)]
pub struct PairData {
    pub n: i64,
    pub m: usize,
    #[serde(serialize_with = "crate::report::rationals")]
    pub weights: Vec<BigRational>,
    pub counts: Vec<u64>,
    pub histograms: Vec<BTreeMap<i64, u64>>,
    /// `sum_i w_i R_i^2 - R^2`, exact.
    #[serde(serialize_with = "crate::report::rational")]
    pub constant_term: BigRational,
}

impl PairData {
    pub fn new(genus: &GenusData, n: i64) -> Result<Self> {
        let weights = genus.weights()?;
        let mut counts = Vec::new();
        let mut histograms = Vec::new();
        for c in &genus.classes {
            let pts = vectors_of_norm(&c.form, n)?;
            let pairs = (pts.len() as u64).saturating_mul(pts.len() as u64);
            if pairs > PAIR_BUDGET {
                return Err(Error::BudgetExceeded { budget: PAIR_BUDGET });
            }
            counts.push(pts.len() as u64);
            histograms.push(inner_product_counts(&c.form, &pts));
        }
        let mean: BigRational = weights.iter().zip(&counts).map(|(w, &r)| w * BigInt::from(r)).sum();
        let second: BigRational =
            weights.iter().zip(&counts).map(|(w, &r)| w * BigInt::from(r) * BigInt::from(r)).sum();
        let constant_term = second - &mean * &mean;
        Ok(Self { n, m: genus.dim(), weights, counts, histograms, constant_term })
    }

    /// `sum_j |W(phi_{k,j}, N)|^2` for `k = 0..=kmax`.
    pub fn pair_sums(&self, kmax: usize) -> Vec<f64> {
        let mut out = vec![0.0; kmax + 1];
        out[0] = self.constant_term.to_f64().unwrap();
        for (w, hist) in self.weights.iter().zip(&self.histograms) {
            let w = w.to_f64().unwrap();
            for (&t, &c) in hist {
                let r = gegenbauer_all(self.m, kmax, t as f64 / self.n as f64);
                for k in 1..=kmax {
                    out[k] += w * c as f64 * r[k];
                }
            }
        }
        for (k, v) in out.iter_mut().enumerate().skip(1) {
            *v *= harmonic_dim_f64(self.m, k);
        }
        out
    }
}

/// `dim H_k` as a float, usable for large `k`.
pub fn harmonic_dim_f64(m: usize, k: usize) -> f64 {
    if m == 1 {
        return if k <= 1 { 1.0 } else { 0.0 };
    }
    // (2k + m - 2) (k + m - 3)! / (k! (m - 2)!)
    let ln = statrs::function::gamma::ln_gamma((k + m - 2) as f64)
        - statrs::function::gamma::ln_gamma(k as f64 + 1.0)
        - statrs::function::gamma::ln_gamma((m - 1) as f64);
    if k == 0 {
        return 1.0;
    }
    (2 * k + m - 2) as f64 * ln.exp()
}

/// Reproducing-kernel evaluation of `sum_j |W(phi_{k,j}, N)|^2`.
pub fn spectral_pair_sum(genus: &GenusData, k: usize, n: i64) -> Result<f64> {
    Ok(PairData::new(genus, n)?.pair_sums(k)[k])
}

/// q-expansion `a(N) = sum_{x^T A x = N} phi(x)`.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaSeries {
    /// Twice the weight `m/2 + deg(phi)`.
    pub weight_twice: u32,
    #[serde(serialize_with = "crate::report::bigint")]
    pub level: BigInt,
    #[serde(serialize_with = "crate::report::rational_map")]
    pub coeffs: BTreeMap<i64, BigRational>,
}

impl ThetaSeries {
    pub fn weight(&self) -> f64 {
        self.weight_twice as f64 / 2.0
    }

    pub fn get(&self, n: i64) -> Option<&BigRational> {
        self.coeffs.get(&n)
    }
}

fn theta_header(form: &QuadForm, phi: &Harmonic) -> Result<(u32, BigInt)> {
    if !phi.poly.is_homogeneous() || !phi.is_harmonic() {
        return Err(Error::InvalidArgument("theta series needs a homogeneous harmonic polynomial".into()));
    }
    Ok((form.dim() as u32 + 2 * phi.degree(), form.level().clone()))
}

/// Coefficients `a(0..=prec)`.
pub fn harmonic_theta(form: &QuadForm, phi: &Harmonic, prec: i64) -> Result<ThetaSeries> {
    let (weight_twice, level) = theta_header(form, phi)?;
    let ev = phi.evaluator();
    let mut coeffs: BTreeMap<i64, BigRational> = (0..=prec).map(|n| (n, BigRational::zero())).collect();
    coeffs.insert(0, ev.eval(&vec![0; form.dim()]));
    for x in short_vectors(form, prec)? {
        *coeffs.get_mut(&form.norm(&x)).unwrap() += ev.eval(&x);
    }
    Ok(ThetaSeries { weight_twice, level, coeffs })
}

/// Coefficients at the listed norms only.
pub fn harmonic_theta_at(form: &QuadForm, phi: &Harmonic, norms: &[i64]) -> Result<ThetaSeries> {
    let (weight_twice, level) = theta_header(form, phi)?;
    let ev = phi.evaluator();
    let mut coeffs = BTreeMap::new();
    for &n in norms {
        let v = if n == 0 { ev.eval(&vec![0; form.dim()]) } else { ev.sum(&vectors_of_norm(form, n)?) };
        coeffs.insert(n, v);
    }
    Ok(ThetaSeries { weight_twice, level, coeffs })
}

/// First frame-coordinate plane harmonic of degree `k` whose theta
/// coefficient at `norm` is nonzero.
pub fn nonzero_plane_harmonic(form: &QuadForm, k: u32, norm: i64) -> Result<Harmonic> {
    let pts = vectors_of_norm(form, norm)?;
    let m = form.dim();
    for i in 0..m {
        for j in i + 1..m {
            for imaginary in [false, true] {
                let h = plane_harmonic(form, k, i, j, imaginary);
                if !h.poly.is_zero() && !h.evaluator().sum(&pts).is_zero() {
                    return Ok(h);
                }
            }
        }
    }
    Err(Error::AllZeroSeries)
}

#[derive(Clone, Debug, Serialize)]
pub struct RamanujanEntry {
    pub n: i64,
    pub normalized: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HeckeReport {
    /// First index `N0 >= 1` with `a(N0) != 0`; `b(n) = a(N0 n) / a(N0)`.
    pub first_index: i64,
    #[serde(serialize_with = "crate::report::rational")]
    pub normalizer: BigRational,
    /// `a(0) = 0`.
    pub cuspidal: bool,
    /// `(p, q, b(p) b(q) == b(pq))` for coprime `p, q` prime to the level.
    pub multiplicativity: Vec<(i64, i64, bool)>,
    /// `|b(n)| <= d(n) n^{(weight-1)/2}`.
    pub ramanujan: Vec<RamanujanEntry>,
    pub multiplicative_ok: bool,
    pub ramanujan_ok: bool,
}

pub fn hecke_eigen_check(series: &ThetaSeries) -> Result<HeckeReport> {
    let (&n0, a0) = series.coeffs.iter().find(|(&n, a)| n >= 1 && !a.is_zero()).ok_or(Error::AllZeroSeries)?;
    let b = |n: i64| series.coeffs.get(&(n0 * n)).map(|a| a / a0);
    let available: Vec<i64> = series.coeffs.keys().filter(|&&n| n >= 1 && n % n0 == 0).map(|n| n / n0).collect();
    let level = &series.level;
    let mut multiplicativity = Vec::new();
    for (i, &p) in available.iter().enumerate() {
        for &r in &available[i + 1..] {
            if p < 2 || p.gcd(&r) != 1 || !(BigInt::from(p * r).gcd(level)).is_one() {
                continue;
            }
            if let (Some(bp), Some(br), Some(bpr)) = (b(p), b(r), b(p * r)) {
                multiplicativity.push((p, r, bp * br == bpr));
            }
        }
    }
    let exponent = (series.weight() - 1.0) / 2.0;
    let ramanujan: Vec<RamanujanEntry> = available
        .iter()
        .map(|&n| {
            let normalized = b(n).unwrap().to_f64().unwrap();
            let bound = arith::divisor_count(n as u64) as f64 * (n as f64).powf(exponent);
            RamanujanEntry { n, normalized, bound, ok: normalized.abs() <= bound * (1.0 + 1e-12) }
        })
        .collect();
    Ok(HeckeReport {
        first_index: n0,
        normalizer: a0.clone(),
        cuspidal: series.coeffs.get(&0).map_or(true, |a| a.is_zero()),
        multiplicative_ok: multiplicativity.iter().all(|t| t.2),
        ramanujan_ok: ramanujan.iter().all(|r| r.ok),
        multiplicativity,
        ramanujan,
    })
}

/// Rank of `Delta_A` from degree `k` to degree `k-2` over `F_p`, with the
/// operator scaled by `det A` to clear denominators.
pub fn laplacian_rank_mod_p(form: &QuadForm, k: u32, p: u64) -> usize {
    let m = form.dim();
    let inv = form.inverse();
    let det = BigRational::from_integer(form.det().clone());
    let pb = BigInt::from(p);
    let adj: Vec<Vec<u64>> = inv
        .iter()
        .map(|r| r.iter().map(|x| (x * &det).to_integer().mod_floor(&pb).to_u64().unwrap()).collect())
        .collect();
    let cols = monomials(m, k);
    let rows = monomials(m, k - 2);
    let row_index: HashMap<&Vec<u32>, usize> = rows.iter().enumerate().map(|(i, r)| (r, i)).collect();
    // Dense matrix with rows = target monomials, columns = source monomials.
    let mut mat = vec![vec![0u64; cols.len()]; rows.len()];
    for (c, e) in cols.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                if adj[i][j] == 0 {
                    continue;
                }
                let mut f = e.clone();
                let mut coef = adj[i][j];
                let mut ok = true;
                for &v in &[i, j] {
                    if f[v] == 0 {
                        ok = false;
                        break;
                    }
                    coef = coef * f[v] as u64 % p;
                    f[v] -= 1;
                }
                if ok {
                    let r = row_index[&f];
                    mat[r][c] = (mat[r][c] + coef) % p;
                }
            }
        }
    }
    rank_mod_p(mat, p)
}

fn rank_mod_p(mut mat: Vec<Vec<u64>>, p: u64) -> usize {
    let nrows = mat.len();
    let ncols = mat.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(piv) = (rank..nrows).find(|&r| mat[r][col] != 0) else { continue };
        mat.swap(rank, piv);
        let inv = pow_mod(mat[rank][col], p - 2, p);
        for v in mat[rank].iter_mut() {
            *v = *v * inv % p;
        }
        let pivot_row = mat[rank].clone();
        for (r, row) in mat.iter_mut().enumerate() {
            if r == rank || row[col] == 0 {
                continue;
            }
            let f = row[col];
            for (x, &y) in row.iter_mut().zip(&pivot_row).skip(col) {
                *x = (*x + p - f * y % p) % p;
            }
        }
        rank += 1;
        if rank == nrows {
            break;
        }
    }
    rank
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}
