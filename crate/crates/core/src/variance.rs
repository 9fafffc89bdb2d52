//! Point-pair kernels on level sets, their spherical transforms, and the
//! geometric and spectral evaluations of the smoothed counting variance.
//!
//! Everything here is for a single target norm `N` (rank-one targets). A
//! kernel depends on a pair of points only through `<x, y>_A / N`, so all
//! integrals reduce to one or two angular variables.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::enumeration::vectors_of_norm;
use crate::error::{Error, Result};
use crate::forms::{GenusData, QuadForm};
use crate::harmonics::{gegenbauer_all, harmonic_dim_f64, PairData};

/// Samples per Monte Carlo block. Each block owns one ChaCha stream, and
/// blocks are merged in index order, so results do not depend on threads.
pub const BLOCK: u64 = 4096;

// Stream families; the class or instance index goes in bits 32..48.
const STREAM_GEOMETRIC: u64 = 1;
const STREAM_EQUIDIST: u64 = 2;
const STREAM_CAPS: u64 = 3;
const STREAM_COVERING: u64 = 4;
const STREAM_SPHERE: u64 = 5;
const STREAM_DIOPHANTINE: u64 = 6;

fn stream_id(family: u64, index: u64, block: u64) -> u64 {
    (family << 56) | (index << 32) | block
}

/// Radial profile `k(s)` of the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 1 on `[0, 1]`, `exp(1 - 1/(1 - (s-1)^2))` on `(1, 2)`, 0 beyond.
    Bump,
    /// `k = 1` everywhere; the kernel is the constant 1.
    Constant,
}

impl Profile {
    pub fn value(self, s: f64) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::Bump => {
                let s = s.abs();
                if s <= 1.0 {
                    1.0
                } else if s >= 2.0 {
                    0.0
                } else {
                    let u = s - 1.0;
                    (1.0 - 1.0 / (1.0 - u * u)).exp()
                }
            }
        }
    }

    /// Values of `s` where the profile is not smooth.
    fn breaks(self) -> &'static [f64] {
        match self {
            Profile::Constant => &[],
            Profile::Bump => &[1.0, 2.0],
        }
    }
}

// ---------------------------------------------------------------------------
// Quadrature

const GL_ORDER: usize = 16;

fn gl_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(GL_ORDER).unwrap()).as_node_weight_pairs().to_vec())
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * gl_rule().iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>()
}

/// Adaptive bisection with a 16-point Gauss-Legendre rule. Returns the value
/// and the summed `|coarse - fine|` estimates, which bound the error of the
/// returned (fine) value with a wide margin for smooth panels.
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> (f64, f64) {
        let mid = 0.5 * (a + b);
        let l = gl_panel(f, a, mid);
        let r = gl_panel(f, mid, b);
        let err = (l + r - whole).abs();
        let noise = 64.0 * f64::EPSILON * (l.abs() + r.abs());
        if err <= tol.max(noise) || depth >= 48 {
            return (l + r, err);
        }
        let (v1, e1) = rec(f, a, mid, l, tol / 2.0, depth + 1);
        let (v2, e2) = rec(f, mid, b, r, tol / 2.0, depth + 1);
        (v1 + v2, e1 + e2)
    }
    if b <= a {
        return (0.0, 0.0);
    }
    rec(f, a, b, gl_panel(f, a, b), tol, 0)
}

/// Adaptive integral over `[a, b]`, split at the given interior points.
fn integrate_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    let mut value = 0.0;
    let mut err = 0.0;
    for w in pts.windows(2) {
        let (v, e) = adaptive(f, w[0], w[1], tol * (w[1] - w[0]) / (b - a));
        value += v;
        err += e;
    }
    (value, err)
}

/// `int_0^pi sin^j(t) dt = sqrt(pi) Gamma((j+1)/2) / Gamma(j/2 + 1)`.
fn sine_power_integral(j: usize) -> f64 {
    let j = j as f64;
    PI.sqrt() * (ln_gamma((j + 1.0) / 2.0) - ln_gamma(j / 2.0 + 1.0)).exp()
}

fn sin_pow(x: f64, j: usize) -> f64 {
    x.sin().max(0.0).powi(j as i32)
}

// ---------------------------------------------------------------------------
// Kernel

/// `K(x, y) = C k(|x - y|_A / r)` on the level set `x^T A x = N`.
#[derive(Clone, Debug, Serialize)]
pub struct Kernel {
    pub profile: Profile,
    pub r: f64,
    /// Level of the sphere the kernel lives on.
    pub n: f64,
    pub m: usize,
    /// `C_{r,N} = 1 / int k(|x - y| / r) dmu(y)`.
    pub norm_constant: f64,
    /// The support contains the whole sphere (`r >= sqrt(N)` for the bump,
    /// always for the constant profile), so every point sees every other.
    pub degenerate: bool,
    /// Error estimate of the normalizing quadrature, relative.
    pub quadrature_error: f64,
}

pub fn kernel_normalize(form: &QuadForm, n: i64, r: f64) -> Result<Kernel> {
    Kernel::new(form.dim(), n as f64, r, Profile::Bump)
}

impl Kernel {
    pub fn new(m: usize, n: f64, r: f64, profile: Profile) -> Result<Self> {
        if m < 2 {
            return Err(Error::DimensionTooSmall(m));
        }
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(format!("sphere level {n} must be positive")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale r = {r} must be positive")));
        }
        let mut k = Kernel { profile, r, n, m, norm_constant: 1.0, degenerate: false, quadrature_error: 0.0 };
        let end = k.support_end();
        k.degenerate = end >= PI;
        if profile == Profile::Constant {
            return Ok(k);
        }
        let z = sine_power_integral(m - 2);
        let f = |t: f64| sin_pow(t, m - 2) * k.profile_at_angle(t);
        let bound = end.powi(m as i32 - 1) / (m as f64 - 1.0);
        let (v, e) = integrate_split(&f, 0.0, end, &k.angle_breaks(), 1e-14 * bound);
        k.norm_constant = z / v;
        k.quadrature_error = e / v;
        Ok(k)
    }

    /// The same kernel for another scale on the same sphere.
    pub fn with_scale(&self, r: f64) -> Result<Self> {
        Kernel::new(self.m, self.n, r, self.profile)
    }

    /// `eta = r / sqrt(N)`: the scale after rescaling the sphere to level 1.
    pub fn eta(&self) -> f64 {
        self.r / self.n.sqrt()
    }

    /// Distance argument `s = |x - y| / r` at angle `theta`.
    fn s_at_angle(&self, theta: f64) -> f64 {
        2.0 * self.n.sqrt() * (theta / 2.0).sin() / self.r
    }

    fn s_at_cos(&self, c: f64) -> f64 {
        (2.0 * self.n * (1.0 - c).max(0.0)).sqrt() / self.r
    }

    fn profile_at_angle(&self, theta: f64) -> f64 {
        self.profile.value(self.s_at_angle(theta))
    }

    /// Kernel as a function of the angle between the two points.
    pub fn at_angle(&self, theta: f64) -> f64 {
        self.norm_constant * self.profile_at_angle(theta)
    }

    /// Kernel as a function of `t = <x, y>_A / N`.
    pub fn at_cos(&self, t: f64) -> f64 {
        self.norm_constant * self.profile.value(self.s_at_cos(t))
    }

    /// `K(x, y)` for two points of the level set, distance in the A-metric.
    pub fn eval(&self, form: &QuadForm, x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let d2 = form.inner_f64(&d, &d).max(0.0);
        self.norm_constant * self.profile.value(d2.sqrt() / self.r)
    }

    /// Angles where the profile has a kink, in `(0, pi)`.
    fn angle_breaks(&self) -> Vec<f64> {
        self.profile
            .breaks()
            .iter()
            .filter_map(|&b| {
                let a = b * self.r / (2.0 * self.n.sqrt());
                (a < 1.0).then(|| 2.0 * a.asin())
            })
            .collect()
    }

    /// Largest angle inside the support.
    pub fn support_end(&self) -> f64 {
        match self.profile {
            Profile::Constant => PI,
            Profile::Bump => {
                let a = self.r / self.n.sqrt();
                if a >= 1.0 {
                    PI
                } else {
                    2.0 * a.asin()
                }
            }
        }
    }

    /// Squared Euclidean radius of the support in orthonormal coordinates.
    fn support_radius(&self) -> f64 {
        match self.profile {
            Profile::Constant => f64::INFINITY,
            Profile::Bump => 2.0 * self.r,
        }
    }

    /// `int K(x, y)^2 dmu(y)`.
    pub fn self_pair_integral(&self) -> f64 {
        pair_integral(self, 0.0).0
    }
}

// ---------------------------------------------------------------------------
// Spherical transform

/// How far to take a degree expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KMax {
    Fixed(usize),
    Auto,
}

/// Threshold of the automatic degree cutoff for the transform alone.
pub const TRANSFORM_TOL: f64 = 1e-12;
/// Largest degree the automatic modes will try.
pub const KMAX_CAP: usize = 1 << 15;

#[derive(Clone, Debug, Serialize)]
pub struct SphericalTransform {
    /// `h(0), ..., h(K_max)`.
    pub h: Vec<f64>,
    pub k_max: usize,
    /// Estimate of `sum_{k > K_max} h(k)^2 dim H_k`; multiply by a per-pair
    /// Weyl-sum cap to bound the spectral tail.
    pub tail_bound: f64,
    /// Largest change of any `h(k)` under doubling the quadrature panels.
    pub quadrature_error: f64,
}

pub fn spherical_transform(form: &QuadForm, n: i64, r: f64, kmax: KMax) -> Result<SphericalTransform> {
    kernel_normalize(form, n, r)?.transform(kmax)
}

impl Kernel {
    /// `h(k) = int K(e, y) R_k(<e, y>/N) dmu(y)` for `k = 0..=kmax`, with
    /// `R_k` the Gegenbauer polynomial normalized by `R_k(1) = 1`.
    pub fn transform_values(&self, kmax: usize) -> (Vec<f64>, f64) {
        let end = self.support_end();
        let mut cuts = vec![0.0];
        cuts.extend(self.angle_breaks().into_iter().filter(|&b| b < end));
        cuts.push(end);
        let coarse = self.transform_panels(&cuts, kmax, 1);
        let fine = self.transform_panels(&cuts, kmax, 2);
        let err = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (fine, err)
    }

    fn transform_panels(&self, cuts: &[f64], kmax: usize, refine: usize) -> Vec<f64> {
        let m = self.m;
        let mut panels = Vec::new();
        for w in cuts.windows(2) {
            let width = w[1] - w[0];
            if width <= 0.0 {
                continue;
            }
            // One panel per oscillation of R_kmax, at least four per region.
            let count = refine * (4 + (width * kmax as f64 / (2.0 * PI)).ceil() as usize);
            let h = width / count as f64;
            panels.extend((0..count).map(|i| (w[0] + i as f64 * h, w[0] + (i + 1) as f64 * h)));
        }
        let z = sine_power_integral(m - 2);
        let parts: Vec<Vec<f64>> = panels
            .par_iter()
            .map(|&(a, b)| {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                let mut acc = vec![0.0; kmax + 1];
                for &(x, w) in gl_rule() {
                    let t = c + h * x;
                    let weight = h * w * sin_pow(t, m - 2) * self.at_angle(t) / z;
                    if weight == 0.0 {
                        continue;
                    }
                    let r = gegenbauer_all(m, kmax, t.cos());
                    for (a, v) in acc.iter_mut().zip(&r) {
                        *a += weight * v;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; kmax + 1];
        for p in parts {
            for (o, v) in out.iter_mut().zip(&p) {
                *o += v;
            }
        }
        out
    }

    pub fn transform(&self, kmax: KMax) -> Result<SphericalTransform> {
        if let KMax::Fixed(0) = kmax {
            return Err(Error::InvalidArgument("K_max must be at least 1".into()));
        }
        let (k_max, h, err) = match kmax {
            KMax::Fixed(k) => {
                let (h, err) = self.transform_values(2 * k);
                (k, h, err)
            }
            KMax::Auto => {
                let mut k = 64;
                loop {
                    let (h, err) = self.transform_values(2 * k);
                    if let Some(stop) = first_run_below(&h[..=k], TRANSFORM_TOL, 3) {
                        break (stop, h, err);
                    }
                    if k >= KMAX_CAP {
                        return Err(Error::QuadratureFailure { estimate: h[k].abs() });
                    }
                    k *= 2;
                }
            }
        };
        let caps: Vec<f64> = (0..h.len()).map(|j| h[j] * h[j] * harmonic_dim_f64(self.m, j)).collect();
        let tail_bound = tail_estimate(&caps, k_max);
        let mut h = h;
        h.truncate(k_max + 1);
        Ok(SphericalTransform { h, k_max, tail_bound, quadrature_error: err })
    }
}

/// Last index of the first run of `len` consecutive `|v| < tol`, from k = 1.
fn first_run_below(v: &[f64], tol: f64, len: usize) -> Option<usize> {
    let mut run = 0;
    for (k, x) in v.iter().enumerate().skip(1) {
        if x.abs() < tol {
            run += 1;
            if run == len {
                return Some(k);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Tail `sum_{k > K} terms[k]` from the computed window `(K, 2K]` plus a
/// power-law extrapolation of its envelope; infinite if the envelope does
/// not decay fast enough to be summable with margin.
fn tail_estimate(terms: &[f64], k: usize) -> f64 {
    let top = (2 * k).min(terms.len() - 1);
    if top <= k {
        return f64::INFINITY;
    }
    let window: f64 = terms[k + 1..=top].iter().sum();
    let mid = k + (top - k) / 2;
    let a = terms[k + 1..=mid].iter().copied().fold(0.0, f64::max);
    let b = terms[mid + 1..=top].iter().copied().fold(0.0, f64::max);
    if b == 0.0 {
        return window;
    }
    if a <= b {
        return f64::INFINITY;
    }
    // Envelope b (j / mid)^(-alpha) for j > top, integrated from top.
    let alpha = (a / b).ln() / ((top as f64) / ((k + 1) as f64)).ln();
    if alpha <= 1.5 {
        return f64::INFINITY;
    }
    let rest = b * mid as f64 / (alpha - 1.0) * (top as f64 / mid as f64).powf(1.0 - alpha);
    window + rest
}

// ---------------------------------------------------------------------------
// Pair integrals

/// `G(gamma) = int K(x, e1) K(x, e2) dmu(x)` for two points at angle `gamma`.
/// Returns the value and an error estimate.
pub fn pair_integral(kernel: &Kernel, gamma: f64) -> (f64, f64) {
    let c2 = kernel.norm_constant * kernel.norm_constant;
    let f = |t: f64| kernel.profile_at_angle(t);
    let g = |c: f64| kernel.profile.value(kernel.s_at_cos(c));
    let breaks = kernel.angle_breaks();
    let (v, e) =
        angular_pair_integral(kernel.m, &f, &breaks, kernel.support_end(), &g, &breaks, kernel.support_end(), gamma);
    (c2 * v, c2 * e)
}

/// `int f(angle(x, e1)) g(cos angle(x, e2)) dmu(x)` over the unit sphere in
/// `R^m` with the normalized invariant measure, for `angle(e1, e2) = gamma`.
/// `f` vanishes beyond `f_end`, `g` beyond the angle `g_end`; the break
/// lists hold the angles where either is not smooth.
#[allow(clippy::too_many_arguments)]
fn angular_pair_integral<F: Fn(f64) -> f64 + Sync, G: Fn(f64) -> f64 + Sync>(
    m: usize,
    f: &F,
    f_breaks: &[f64],
    f_end: f64,
    g: &G,
    g_breaks: &[f64],
    g_end: f64,
    gamma: f64,
) -> (f64, f64) {
    let z_outer = sine_power_integral(m - 2);
    let bound = f_end.powi(m as i32 - 1) / (m as f64 - 1.0);
    let tol = 1e-13 * bound;
    let (cg, sg) = (gamma.cos(), gamma.sin());
    if gamma >= f_end + g_end {
        return (0.0, 0.0);
    }
    let mut g_all: Vec<f64> = g_breaks.to_vec();
    g_all.push(g_end);
    if sg.abs() < 1e-14 {
        // Collinear: angle(x, e2) is theta or pi - theta.
        let flip = cg < 0.0;
        let h = |t: f64| sin_pow(t, m - 2) * f(t) * g(if flip { -t.cos() } else { t.cos() });
        let mut br: Vec<f64> = f_breaks.to_vec();
        br.extend(g_all.iter().map(|&b| if flip { PI - b } else { b }));
        let (v, e) = integrate_split(&h, 0.0, f_end, &br, tol);
        return (v / z_outer, e / z_outer);
    }
    let mut outer_breaks: Vec<f64> = f_breaks.to_vec();
    for &b in &g_all {
        outer_breaks.extend([(gamma - b).abs(), gamma + b, 2.0 * PI - gamma - b]);
    }
    if m == 2 {
        // On the circle the azimuth takes two values.
        let fold = |a: f64| {
            let a = a.abs() % (2.0 * PI);
            if a > PI {
                2.0 * PI - a
            } else {
                a
            }
        };
        let h = |t: f64| f(t) * 0.5 * (g(fold(t - gamma).cos()) + g(fold(t + gamma).cos()));
        let (v, e) = integrate_split(&h, 0.0, f_end, &outer_breaks, tol);
        return (v / PI, e / PI);
    }
    let z_inner = sine_power_integral(m - 3);
    let cos_breaks: Vec<f64> = g_all.iter().map(|b| b.cos()).collect();
    let inner = |t: f64| -> (f64, f64) {
        let (ct, st) = (t.cos(), t.sin());
        if st <= 0.0 {
            return (z_inner * g(ct * cg), 0.0);
        }
        let a = ct * cg;
        let b = st * sg;
        let psi_breaks: Vec<f64> = cos_breaks
            .iter()
            .filter_map(|&cb| {
                let c = (cb - a) / b;
                (c.abs() < 1.0).then(|| c.acos())
            })
            .collect();
        let h = |p: f64| sin_pow(p, m - 3) * g((a + b * p.cos()).clamp(-1.0, 1.0));
        integrate_split(&h, 0.0, PI, &psi_breaks, 1e-14 * z_inner)
    };
    let lo = (gamma - g_end).max(0.0);
    // Outer integrand evaluated on a fixed grid of panels, in parallel.
    let mut cuts = vec![lo];
    cuts.extend(outer_breaks.iter().copied().filter(|&x| x > lo && x < f_end));
    cuts.push(f_end);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
    let results: Vec<(f64, f64)> = cuts
        .par_windows(2)
        .map(|w| {
            let inner_err = std::cell::Cell::new(0.0f64);
            let h = |t: f64| {
                let (v, e) = inner(t);
                inner_err.set(inner_err.get().max(e));
                sin_pow(t, m - 2) * f(t) * v
            };
            let (v, e) = adaptive(&h, w[0], w[1], tol * (w[1] - w[0]) / (f_end - lo));
            // The worst inner error times the outer weight mass on this panel.
            (v, e + inner_err.get() * (w[1] - w[0]))
        })
        .collect();
    let (v, e) = results.iter().fold((0.0, 0.0), |(a, b), (v, e)| (a + v, b + e));
    (v / (z_outer * z_inner), e / (z_outer * z_inner))
}

// ---------------------------------------------------------------------------
// Sampling

/// Row-major real frame `T` with `T^T A T = I` and its inverse
/// `T^{-1} = D^{1/2} L^T`, from the rational LDL^T decomposition.
#[derive(Clone, Debug)]
pub struct RealFrame {
    pub m: usize,
    pub t: Vec<f64>,
    pub t_inv: Vec<f64>,
}

impl RealFrame {
    pub fn new(form: &QuadForm) -> Self {
        let m = form.dim();
        let ldl = form.ldl();
        let mut t_inv = vec![0.0; m * m];
        for i in 0..m {
            let sd = ldl.d[i].to_f64().unwrap().sqrt();
            for j in 0..m {
                t_inv[i * m + j] = sd * ldl.l[j][i].to_f64().unwrap();
            }
        }
        Self { m, t: form.orthonormal_frame(), t_inv }
    }

    /// Orthonormal coordinates `u = T^{-1} x`, so `|u|^2 = x^T A x`.
    pub fn to_unit<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|i| (0..m).map(|j| self.t_inv[i * m + j] * x[j].into()).sum()).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|i| (0..m).map(|j| self.t[i * m + j] * u[j]).sum()).collect()
    }
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point on the sphere of radius `sqrt(level)` in `R^m`.
fn gaussian_direction(rng: &mut ChaCha8Rng, m: usize, level: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let n2: f64 = g.iter().map(|x| x * x).sum();
        if n2 > 0.0 {
            let s = (level / n2).sqrt();
            return g.into_iter().map(|x| x * s).collect();
        }
    }
}

fn block_ranges(count: u64) -> Vec<(u64, u64)> {
    (0..count.div_ceil(BLOCK)).map(|b| (b, BLOCK.min(count - b * BLOCK))).collect()
}

/// Runs `f` on a pool with `tasks` threads, or on the global pool.
pub fn with_tasks<T: Send>(tasks: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match tasks {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build().expect("thread pool").install(f),
        None => f(),
    }
}

/// I.i.d. samples from the invariant probability measure on `x^T A x = N`.
pub fn sample_sphere(form: &QuadForm, n: f64, count: u64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if n.is_nan() || n <= 0.0 {
        return Err(Error::InvalidArgument(format!("level {n} must be positive")));
    }
    let frame = RealFrame::new(form);
    let m = form.dim();
    let blocks: Vec<Vec<Vec<f64>>> = block_ranges(count)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = block_rng(seed, stream_id(STREAM_SPHERE, 0, b));
            (0..len).map(|_| frame.from_unit(&gaussian_direction(&mut rng, m, n))).collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Point sets

/// Points in orthonormal coordinates, bucketed on a grid over the first
/// (up to four) coordinates for radius queries.
struct PointIndex {
    pts: Vec<Vec<f64>>,
    cell: f64,
    dims: usize,
    cells: HashMap<[i64; 4], Vec<usize>>,
}

impl PointIndex {
    /// Cells sized for a handful of points each, or at least `radius` so
    /// that radius queries touch only the adjacent cells.
    fn new(pts: Vec<Vec<f64>>, level: f64, radius: f64) -> Self {
        let m = pts.first().map_or(1, |p| p.len());
        let dims = m.min(4);
        let count = pts.len().max(1) as f64;
        let spread = if dims == m { (dims - 1).max(1) } else { dims } as f64;
        let mut cell = (level.sqrt() * (16.0 / count).powf(1.0 / spread)).max(1e-9);
        if radius.is_finite() {
            cell = cell.max(radius);
        }
        let mut cells: HashMap<[i64; 4], Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            cells.entry(Self::key(p, cell, dims)).or_default().push(i);
        }
        Self { pts, cell, dims, cells }
    }

    fn key(p: &[f64], cell: f64, dims: usize) -> [i64; 4] {
        let mut k = [0i64; 4];
        for (i, slot) in k.iter_mut().enumerate().take(dims) {
            *slot = (p[i] / cell).floor() as i64;
        }
        k
    }

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Calls `visit` with the squared distance of every point within
    /// `radius` of `u` (and possibly some farther ones), in a fixed order.
    fn for_near(&self, u: &[f64], radius: f64, mut visit: impl FnMut(f64)) {
        let reach = if radius.is_finite() { (radius / self.cell).ceil() } else { f64::INFINITY };
        let cube = (2.0 * reach + 1.0).powi(self.dims as i32);
        if cube.is_nan() || cube >= self.pts.len() as f64 {
            for p in &self.pts {
                visit(Self::dist2(u, p));
            }
            return;
        }
        let reach = reach as i64;
        let center = Self::key(u, self.cell, self.dims);
        let mut offset = [0i64; 4];
        for d in 0..self.dims {
            offset[d] = -reach;
        }
        loop {
            let mut k = center;
            for d in 0..self.dims {
                k[d] += offset[d];
            }
            if let Some(ids) = self.cells.get(&k) {
                for &i in ids {
                    visit(Self::dist2(u, &self.pts[i]));
                }
            }
            // Odometer over the cube of offsets.
            let mut d = 0;
            loop {
                if d == self.dims {
                    return;
                }
                offset[d] += 1;
                if offset[d] <= reach {
                    break;
                }
                offset[d] = -reach;
                d += 1;
            }
        }
    }

    /// Squared distance from `u` to the nearest point.
    fn nearest2(&self, u: &[f64]) -> f64 {
        let mut reach = 1.0;
        loop {
            let mut best = f64::INFINITY;
            let radius = reach * self.cell;
            self.for_near(u, radius, |d2| best = best.min(d2));
            if best <= radius * radius || (2.0 * reach + 1.0).powi(self.dims as i32) >= self.pts.len() as f64 {
                if best <= radius * radius {
                    return best;
                }
                let mut all = f64::INFINITY;
                self.for_near(u, f64::INFINITY, |d2| all = all.min(d2));
                return all;
            }
            reach *= 2.0;
        }
    }
}

/// Running mean and sum of squared deviations (Welford/Chan).
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.count == 0.0 {
            return;
        }
        let n = self.count + o.count;
        let d = o.mean - self.mean;
        self.mean += d * o.count / n;
        self.m2 += o.m2 + d * d * self.count * o.count / n;
        self.count = n;
    }

    fn stderr(&self) -> f64 {
        if self.count < 2.0 {
            return f64::INFINITY;
        }
        (self.m2 / (self.count - 1.0) / self.count).sqrt()
    }
}

/// Monte Carlo estimate of `int (sum_y K(x, y) - R)^2 dmu(x)` over the
/// points `pts` (orthonormal coordinates on the sphere of level `kernel.n`).
fn mc_within(kernel: &Kernel, pts: Vec<Vec<f64>>, samples: u64, seed: u64, stream: (u64, u64)) -> Moments {
    let m = kernel.m;
    let level = kernel.n;
    let r_count = pts.len() as f64;
    let radius = kernel.support_radius();
    let index = PointIndex::new(pts, level, radius);
    let blocks: Vec<Moments> = block_ranges(samples)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = block_rng(seed, stream_id(stream.0, stream.1, b));
            let mut mom = Moments::default();
            for _ in 0..len {
                let u = gaussian_direction(&mut rng, m, level);
                let mut s = 0.0;
                index.for_near(&u, radius, |d2| s += kernel.profile.value(d2.sqrt() / kernel.r));
                let dev = kernel.norm_constant * s - r_count;
                mom.push(dev * dev);
            }
            mom
        })
        .collect();
    let mut total = Moments::default();
    for b in &blocks {
        total.merge(b);
    }
    total
}

/// Exact-quadrature value of `int (sum_y K(x, y) - R)^2 dmu(x)` from the
/// histogram of pairings `<y, y'>` over ordered pairs; value and bound.
fn quad_within(kernel: &Kernel, hist: &BTreeMap<i64, u64>, n: i64, r_count: u64) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    let support = kernel.support_end();
    for (&t, &c) in hist {
        let gamma = (t as f64 / n as f64).clamp(-1.0, 1.0).acos();
        if gamma >= 2.0 * support {
            continue;
        }
        let (g, e) = pair_integral(kernel, gamma);
        total += c as f64 * g;
        err += c as f64 * e;
    }
    let r2 = (r_count as f64).powi(2);
    // A relative error d in C moves the pair sum by about 2 d R^2.
    err += 2.0 * kernel.quadrature_error * r2;
    (total - r2, err)
}

// ---------------------------------------------------------------------------
// Geometric and spectral variance

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometricMode {
    /// Angular product quadrature over pair integrals.
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceConfig {
    pub profile: Profile,
    pub mode: GeometricMode,
    pub samples: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Results do not depend on it.
    #[serde(skip)]
    pub tasks: Option<usize>,
    pub kmax: KMax,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Bump,
            mode: GeometricMode::Quadrature,
            samples: 100_000,
            seed: 0,
            tasks: None,
            kmax: KMax::Auto,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassVariance {
    pub name: String,
    pub r_i: u64,
    /// `int (sum_y K(x, y) - R_i)^2 dmu_i(x)`.
    pub within: f64,
    /// Standard error (Monte Carlo) or quadrature bound.
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometricVariance {
    pub value: f64,
    pub mode: GeometricMode,
    pub per_class: Vec<ClassVariance>,
    /// `sum_i w_i (R_i - R)^2`, exact.
    #[serde(serialize_with = "crate::report::rational")]
    pub between: BigRational,
    /// The whole variance as an exact rational, for the constant profile.
    #[serde(serialize_with = "crate::report::opt_rational")]
    pub exact: Option<BigRational>,
    pub stderr: Option<f64>,
    pub quadrature_bound: Option<f64>,
    pub samples: Option<u64>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralVariance {
    pub value: f64,
    pub k_max: usize,
    pub tail_bound: f64,
    /// `h(k)^2 sum_j |W(phi_{k,j}, N)|^2` for `k = 0..=K_max`.
    pub terms: Vec<f64>,
    /// Exact rational value, for the constant profile.
    #[serde(serialize_with = "crate::report::opt_rational")]
    pub exact: Option<BigRational>,
    pub transform_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Agreement {
    pub relative_gap: f64,
    /// `|geometric - spectral| / (error bars)`, when the error bars are positive.
    pub z_score: Option<f64>,
    /// Exact rational equality, when both sides are exact.
    pub exact_match: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub n: i64,
    pub r: f64,
    pub eta: f64,
    /// `R(N) = sum_i w_i R_i` from enumeration.
    #[serde(serialize_with = "crate::report::rational")]
    pub r_enumerated: BigRational,
    /// The same from the local-density product, when available.
    pub r_local: Option<f64>,
    pub kernel: Kernel,
    pub geometric: GeometricVariance,
    pub spectral: SpectralVariance,
    pub agreement: Agreement,
}

fn genus_kernel(genus: &GenusData, n: i64, r: f64, profile: Profile) -> Result<Kernel> {
    if n <= 0 {
        return Err(Error::UnsupportedN(n));
    }
    Kernel::new(genus.dim(), n as f64, r, profile)
}

pub fn geometric_variance(genus: &GenusData, n: i64, r: f64, config: &VarianceConfig) -> Result<GeometricVariance> {
    let kernel = genus_kernel(genus, n, r, config.profile)?;
    let data = PairData::new(genus, n)?;
    geometric_from(genus, &data, &kernel, config)
}

fn geometric_from(
    genus: &GenusData,
    data: &PairData,
    kernel: &Kernel,
    config: &VarianceConfig,
) -> Result<GeometricVariance> {
    let n = data.n;
    let weights = &data.weights;
    let mean: BigRational = weights.iter().zip(&data.counts).map(|(w, &c)| w * BigInt::from(c)).sum();
    let between: BigRational = weights
        .iter()
        .zip(&data.counts)
        .map(|(w, &c)| {
            let d = BigRational::from_integer(BigInt::from(c)) - &mean;
            w * &d * &d
        })
        .sum();
    let mut per_class = Vec::new();
    let mut exact = None;
    if config.profile == Profile::Constant {
        // K = 1: sum_y K = R_i identically, so each class contributes
        // sum over ordered pairs of 1 minus R_i^2.
        let mut within = BigRational::zero();
        for ((c, w), hist) in genus.classes.iter().zip(weights).zip(&data.histograms) {
            let pairs: u64 = hist.values().sum();
            let r_i = data.counts[per_class.len()];
            let v = BigInt::from(pairs) - BigInt::from(r_i) * BigInt::from(r_i);
            within += w * BigRational::from_integer(v.clone());
            per_class.push(ClassVariance { name: c.name.clone(), r_i, within: v.to_f64().unwrap(), error: 0.0 });
        }
        exact = Some(within + &between);
    }
    let (stderr, bound, samples) = if exact.is_some() {
        (None, Some(0.0), None)
    } else {
        match config.mode {
            GeometricMode::Quadrature => {
                let results: Vec<(f64, f64)> = with_tasks(config.tasks, || {
                    data.histograms.iter().zip(&data.counts).map(|(h, &c)| quad_within(kernel, h, n, c)).collect()
                });
                let mut bound = 0.0;
                for (((c, w), &r_i), (v, e)) in genus.classes.iter().zip(weights).zip(&data.counts).zip(results) {
                    bound += w.to_f64().unwrap() * e;
                    per_class.push(ClassVariance { name: c.name.clone(), r_i, within: v, error: e });
                }
                (None, Some(bound), None)
            }
            GeometricMode::MonteCarlo => {
                let mut var_se = 0.0;
                for (i, ((c, w), &r_i)) in genus.classes.iter().zip(weights).zip(&data.counts).enumerate() {
                    let frame = RealFrame::new(&c.form);
                    let pts: Vec<Vec<f64>> = vectors_of_norm(&c.form, n)?
                        .iter()
                        .map(|y| frame.to_unit(&y.iter().map(|&v| v as f64).collect::<Vec<_>>()))
                        .collect();
                    let mom = with_tasks(config.tasks, || {
                        mc_within(kernel, pts, config.samples, config.seed, (STREAM_GEOMETRIC, i as u64))
                    });
                    let w = w.to_f64().unwrap();
                    var_se += w * w * mom.stderr().powi(2);
                    per_class.push(ClassVariance { name: c.name.clone(), r_i, within: mom.mean, error: mom.stderr() });
                }
                (Some(var_se.sqrt()), None, Some(config.samples))
            }
        }
    };
    let value = match &exact {
        Some(e) => e.to_f64().unwrap(),
        None => {
            per_class.iter().zip(weights).map(|(c, w)| w.to_f64().unwrap() * c.within).sum::<f64>()
                + between.to_f64().unwrap()
        }
    };
    Ok(GeometricVariance {
        value,
        mode: if exact.is_some() { GeometricMode::Quadrature } else { config.mode },
        per_class,
        between,
        exact,
        stderr,
        quadrature_bound: bound,
        samples,
        seed: config.seed,
    })
}

/// Relative size of a negligible spectral term in the automatic cutoff.
pub const SPECTRAL_TOL: f64 = 1e-8;

pub fn spectral_variance(genus: &GenusData, n: i64, r: f64, config: &VarianceConfig) -> Result<SpectralVariance> {
    let kernel = genus_kernel(genus, n, r, config.profile)?;
    let data = PairData::new(genus, n)?;
    spectral_from(&data, &kernel, config)
}

fn spectral_from(data: &PairData, kernel: &Kernel, config: &VarianceConfig) -> Result<SpectralVariance> {
    let m = data.m;
    // Cauchy-Schwarz cap on the pair sum: dim H_k sum_i w_i R_i^2.
    let second: f64 =
        data.weights.iter().zip(&data.counts).map(|(w, &c)| w.to_f64().unwrap() * (c as f64).powi(2)).sum();
    let exact = (config.profile == Profile::Constant).then(|| data.constant_term.clone());
    let mut k_try = match config.kmax {
        KMax::Fixed(0) => return Err(Error::InvalidArgument("K_max must be at least 1".into())),
        KMax::Fixed(k) => k,
        KMax::Auto => 64,
    };
    loop {
        let (h, err) = with_tasks(config.tasks, || kernel.transform_values(2 * k_try));
        let sums = data.pair_sums(k_try);
        let terms: Vec<f64> = sums.iter().enumerate().map(|(k, s)| h[k] * h[k] * s).collect();
        let caps: Vec<f64> = (0..h.len()).map(|k| h[k] * h[k] * harmonic_dim_f64(m, k) * second).collect();
        let k_max = match config.kmax {
            KMax::Fixed(k) => Some(k),
            KMax::Auto => {
                let mut total = 0.0;
                let mut run = 0;
                let mut stop = None;
                for k in 0..=k_try {
                    total += terms[k];
                    // Transform values at the quadrature noise floor count as zero.
                    let negligible = caps[k] < SPECTRAL_TOL * total || h[k].abs() <= 10.0 * err + 1e-14;
                    if k >= 1 && negligible {
                        run += 1;
                        if run == 3 {
                            stop = Some(k);
                            break;
                        }
                    } else {
                        run = 0;
                    }
                }
                stop
            }
        };
        if let Some(k_max) = k_max {
            let terms = terms[..=k_max].to_vec();
            let value = terms.iter().sum();
            let tail_bound = tail_estimate(&caps, k_max);
            return Ok(SpectralVariance { value, k_max, tail_bound, terms, exact, transform_error: err });
        }
        if k_try >= KMAX_CAP {
            return Err(Error::QuadratureFailure { estimate: caps[k_try] });
        }
        k_try *= 2;
    }
}

pub fn variance_report(genus: &GenusData, n: i64, r: f64, config: &VarianceConfig) -> Result<VarianceReport> {
    let kernel = genus_kernel(genus, n, r, config.profile)?;
    let data = PairData::new(genus, n)?;
    let geometric = geometric_from(genus, &data, &kernel, config)?;
    let spectral = spectral_from(&data, &kernel, config)?;
    let r_enumerated: BigRational = data.weights.iter().zip(&data.counts).map(|(w, &c)| w * BigInt::from(c)).sum();
    let r_local = crate::mass::local_product(&genus.classes[0].form, n).ok().map(|p| p.value);
    let (g, s) = (geometric.value, spectral.value);
    let relative_gap = if g == 0.0 && s == 0.0 { 0.0 } else { (g - s).abs() / g.abs().max(s.abs()) };
    let bars = geometric.stderr.unwrap_or(0.0) + geometric.quadrature_bound.unwrap_or(0.0) + spectral.tail_bound;
    let z_score = (bars > 0.0 && bars.is_finite()).then(|| (g - s).abs() / bars);
    let exact_match = match (&geometric.exact, &spectral.exact) {
        (Some(a), Some(b)) => Some(a == b),
        _ => None,
    };
    Ok(VarianceReport {
        n,
        r,
        eta: kernel.eta(),
        r_enumerated,
        r_local,
        kernel,
        geometric,
        spectral,
        agreement: Agreement { relative_gap, z_score, exact_match },
    })
}

// ---------------------------------------------------------------------------
// Equidistribution statistics on V_1

fn unit_points(form: &QuadForm, n: i64) -> Result<Vec<Vec<f64>>> {
    if n <= 0 {
        return Err(Error::UnsupportedN(n));
    }
    let frame = RealFrame::new(form);
    let s = 1.0 / (n as f64).sqrt();
    Ok(vectors_of_norm(form, n)?
        .iter()
        .map(|y| frame.to_unit(&y.iter().map(|&v| v as f64 * s).collect::<Vec<_>>()))
        .collect())
}

fn coprimality_warnings(form: &QuadForm, n: i64) -> Vec<String> {
    let g = BigInt::from(n).gcd(&(form.det() * 2));
    if g == BigInt::from(1) {
        Vec::new()
    } else {
        vec![format!("gcd(N, 2 det) = {g} is not 1")]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquidistReport {
    pub n: i64,
    pub eta: f64,
    pub r_f: u64,
    /// `int_{V_1} (sum_y K_eta(x, y / sqrt N) - R_F(N))^2 dmu(x)`.
    pub var_f: f64,
    pub stderr: f64,
    /// `var_F eta^{m-1} / R_F(N)`.
    pub normalized: f64,
    pub normalized_stderr: f64,
    /// The normalized statistic for `R_F(N)` independent uniform points:
    /// `eta^{m-1} (int K_eta^2 dmu - 1)`.
    pub random_benchmark: f64,
    pub samples: u64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

pub fn equidist_variance(form: &QuadForm, n: i64, eta: f64, samples: u64, seed: u64) -> Result<EquidistReport> {
    let pts = unit_points(form, n)?;
    if pts.is_empty() {
        return Err(Error::EmptySolutionSet);
    }
    let m = form.dim();
    let kernel = Kernel::new(m, 1.0, eta, Profile::Bump)?;
    let r_f = pts.len() as u64;
    let mom = mc_within(&kernel, pts, samples, seed, (STREAM_EQUIDIST, 0));
    let scale = eta.powi(m as i32 - 1) / r_f as f64;
    Ok(EquidistReport {
        n,
        eta,
        r_f,
        var_f: mom.mean,
        stderr: mom.stderr(),
        normalized: mom.mean * scale,
        normalized_stderr: mom.stderr() * scale,
        random_benchmark: eta.powi(m as i32 - 1) * (kernel.self_pair_integral() - 1.0),
        samples,
        seed,
        warnings: coprimality_warnings(form, n),
    })
}

/// Quadrature value of the equidistribution variance (no sampling).
pub fn equidist_quadrature(form: &QuadForm, n: i64, eta: f64) -> Result<(f64, f64)> {
    let pts = vectors_of_norm(form, n)?;
    if pts.is_empty() {
        return Err(Error::EmptySolutionSet);
    }
    let kernel = Kernel::new(form.dim(), n as f64, eta * (n as f64).sqrt(), Profile::Bump)?;
    let hist = crate::harmonics::inner_product_counts(form, &pts);
    Ok(quad_within(&kernel, &hist, n, pts.len() as u64))
}

#[derive(Clone, Debug, Serialize)]
pub struct CapReport {
    pub n: i64,
    pub r_f: u64,
    pub etas: Vec<f64>,
    /// Fraction of samples farther than `eta` from every point, per `eta`.
    pub miss: Vec<f64>,
    /// Smallest distance between two distinct points of the set on `V_1`.
    pub min_spacing: f64,
    /// Largest nearest-point distance seen on an independent sample.
    pub covering_radius: Option<f64>,
    pub covering_samples: Option<u64>,
    pub monotone: bool,
    pub samples: u64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Nearest-point distances on `V_1` for `count` samples from one stream family.
fn nearest_distances(index: &PointIndex, m: usize, count: u64, seed: u64, family: u64) -> Vec<f64> {
    let blocks: Vec<Vec<f64>> = block_ranges(count)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = block_rng(seed, stream_id(family, 0, b));
            (0..len).map(|_| index.nearest2(&gaussian_direction(&mut rng, m, 1.0)).sqrt()).collect()
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// `mu(E(N, eta))` for each `eta`, all on one sample set. With
/// `covering_factor > 0` an independent sample of `covering_factor * samples`
/// points estimates the covering radius.
pub fn cap_miss_fraction(
    form: &QuadForm,
    n: i64,
    etas: &[f64],
    samples: u64,
    seed: u64,
    covering_factor: u64,
) -> Result<CapReport> {
    let pts = unit_points(form, n)?;
    if pts.is_empty() {
        return Err(Error::EmptySolutionSet);
    }
    let m = form.dim();
    let r_f = pts.len() as u64;
    let ints = vectors_of_norm(form, n)?;
    let images: Vec<Vec<i64>> = ints.iter().map(|x| form.apply(x)).collect();
    // |y - y'|^2 = 2N - 2<y, y'>, minimized at the largest pairing below N.
    let max_pair = images
        .par_iter()
        .enumerate()
        .map(|(i, ax)| {
            ints.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, y)| ax.iter().zip(y).map(|(a, b)| a * b).sum::<i64>())
                .max()
                .unwrap_or(-n)
        })
        .max()
        .unwrap_or(-n);
    let min_spacing = ((2 * n - 2 * max_pair) as f64 / n as f64).sqrt();
    let index = PointIndex::new(pts, 1.0, 0.0);
    let dists = nearest_distances(&index, m, samples, seed, STREAM_CAPS);
    let miss: Vec<f64> =
        etas.iter().map(|&eta| dists.iter().filter(|&&d| d >= eta).count() as f64 / samples as f64).collect();
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by(|&a, &b| etas[a].partial_cmp(&etas[b]).unwrap());
    let monotone = order.windows(2).all(|w| miss[w[1]] <= miss[w[0]]);
    let (covering_radius, covering_samples) = if covering_factor > 0 {
        let count = samples * covering_factor;
        let d = nearest_distances(&index, m, count, seed, STREAM_COVERING);
        (Some(d.into_iter().fold(0.0, f64::max)), Some(count))
    } else {
        (None, None)
    };
    Ok(CapReport {
        n,
        r_f,
        etas: etas.to_vec(),
        miss,
        min_spacing,
        covering_radius,
        covering_samples,
        monotone,
        samples,
        seed,
        warnings: coprimality_warnings(form, n),
    })
}

// ---------------------------------------------------------------------------
// Rational points on the unit sphere with p-power denominators

/// `S^{m-1}(Z[1/p])` points of height dividing `p^k`, as `y / p^k` with
/// `|y|^2 = p^{2k}`.
pub struct SphereRationals {
    pub m: usize,
    pub p: u64,
    pub k: u32,
    pub points: Vec<Vec<i64>>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiophantineWitness {
    /// Reduced numerator of the nearest point `z = y / H`.
    pub numerator: Vec<i64>,
    /// Height `H(z)`: the reduced denominator, a power of `p`.
    pub height: u64,
    /// Euclidean distance `|x - z|`.
    pub dist: f64,
    /// `log H / log(1/dist)`; undefined when `dist = 0` or `dist >= 1`.
    pub exponent: Option<f64>,
}

impl SphereRationals {
    pub fn new(m: usize, p: u64, k: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::DimensionTooSmall(m));
        }
        let pk = i64::try_from(p).ok().and_then(|p| p.checked_pow(k)).ok_or(Error::Overflow("p^k"))?;
        let target = pk.checked_mul(pk).ok_or(Error::Overflow("p^{2k}"))?;
        let mut warnings = Vec::new();
        if !(crate::arith::factor(p).len() == 1 && crate::arith::factor(p)[0].1 == 1) {
            warnings.push(format!("{p} is not prime"));
        } else if p % 4 != 1 {
            warnings.push(format!("{p} is not 1 mod 4"));
        }
        let points = vectors_of_norm(&QuadForm::identity(m), target)?;
        if points.is_empty() {
            return Err(Error::NoPoints(target));
        }
        Ok(Self { m, p, k, points, warnings })
    }

    /// The point `z` nearest to `x` on the unit sphere.
    pub fn witness(&self, x: &[f64]) -> Result<DiophantineWitness> {
        if x.len() != self.m {
            return Err(Error::InvalidArgument(format!("point has {} coordinates, expected {}", x.len(), self.m)));
        }
        let norm: f64 = x.iter().map(|v| v * v).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("point has squared norm {norm}, expected 1")));
        }
        let best = self
            .points
            .iter()
            .map(|y| y.iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let y = &self.points[best.0];
        let pk = (self.p as f64).powi(self.k as i32);
        let dist = y.iter().zip(x).map(|(&a, b)| (a as f64 / pk - b).powi(2)).sum::<f64>().sqrt();
        let mut numerator = y.clone();
        let mut height = self.p.pow(self.k);
        let p = self.p as i64;
        while height > 1 && numerator.iter().all(|v| v % p == 0) {
            numerator.iter_mut().for_each(|v| *v /= p);
            height /= self.p;
        }
        let exponent = (dist > 0.0 && dist < 1.0).then(|| (height as f64).ln() / (1.0 / dist).ln());
        Ok(DiophantineWitness { numerator, height, dist, exponent })
    }
}

pub fn diophantine_witness(m: usize, p: u64, k: u32, x: &[f64]) -> Result<DiophantineWitness> {
    SphereRationals::new(m, p, k)?.witness(x)
}

#[derive(Clone, Debug, Serialize)]
pub struct DiophantineStats {
    pub m: usize,
    pub p: u64,
    pub k: u32,
    pub points: u64,
    pub samples: u64,
    pub seed: u64,
    /// Quantiles (50%, 90%, 99%) of `dist * p^{k (m-2)/(m-1)}`.
    pub scaled_dist_quantiles: [f64; 3],
    pub exponent_median: f64,
    /// `(m - 1)/(m - 2)`, the optimal exponent.
    pub exponent_target: f64,
    pub warnings: Vec<String>,
}

/// Nearest-point statistics for `samples` uniform random `x`.
pub fn diophantine_stats(m: usize, p: u64, k: u32, samples: u64, seed: u64) -> Result<DiophantineStats> {
    let set = SphereRationals::new(m, p, k)?;
    let blocks: Vec<Vec<DiophantineWitness>> = block_ranges(samples)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = block_rng(seed, stream_id(STREAM_DIOPHANTINE, 0, b));
            (0..len).map(|_| set.witness(&gaussian_direction(&mut rng, m, 1.0))).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let ws: Vec<DiophantineWitness> = blocks.into_iter().flatten().collect();
    let scale = (p as f64).powf(k as f64 * (m as f64 - 2.0) / (m as f64 - 1.0));
    let mut scaled: Vec<f64> = ws.iter().map(|w| w.dist * scale).collect();
    scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut exps: Vec<f64> = ws.iter().filter_map(|w| w.exponent).collect();
    exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |v: &[f64], f: f64| if v.is_empty() { f64::NAN } else { v[((v.len() - 1) as f64 * f).round() as usize] };
    Ok(DiophantineStats {
        m,
        p,
        k,
        points: set.points.len() as u64,
        samples,
        seed,
        scaled_dist_quantiles: [q(&scaled, 0.5), q(&scaled, 0.9), q(&scaled, 0.99)],
        exponent_median: q(&exps, 0.5),
        exponent_target: if m > 2 { (m as f64 - 1.0) / (m as f64 - 2.0) } else { f64::INFINITY },
        warnings: set.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn adaptive_quadrature_on_known_integrals() {
        let (v, _) = integrate_split(&|x: f64| x.sin(), 0.0, PI, &[1.0], 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
        let (v, _) = adaptive(&|x: f64| x.abs().sqrt(), 0.0, 1.0, 1e-12);
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
        for j in 0..6 {
            let (v, _) = adaptive(&|x: f64| x.sin().powi(j as i32), 0.0, PI, 1e-14);
            assert!((v - sine_power_integral(j)).abs() < 1e-12, "j = {j}");
        }
    }

    /// `int K(x, y) dmu(y)` in polar coordinates around an axis at angle
    /// `gamma` from `x`: the normalization seen from another basepoint frame.
    #[test]
    fn normalization_independent_of_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [3, 4, 5] {
            let k = Kernel::new(m, 2.0, 0.7, Profile::Bump).unwrap();
            let breaks = k.angle_breaks();
            for _ in 0..3 {
                let gamma = rng.random_range(0.1..3.0);
                let one = |_: f64| 1.0;
                let g = |c: f64| k.at_cos(c);
                let (v, _) = angular_pair_integral(m, &one, &[], PI, &g, &breaks, k.support_end(), gamma);
                assert!((v - 1.0).abs() < 1e-4, "m = {m}, gamma = {gamma}: {v}");
            }
        }
    }

    #[test]
    fn pair_integral_limits() {
        let k = Kernel::new(3, 1.0, 0.5, Profile::Bump).unwrap();
        // Disjoint supports.
        assert_eq!(pair_integral(&k, 2.5).0, 0.0);
        // Continuity at gamma = 0 from the two-variable formula.
        let (g0, _) = pair_integral(&k, 0.0);
        let (g1, _) = pair_integral(&k, 1e-6);
        assert!((g0 - g1).abs() < 1e-4 * g0);
        // On the circle: constant in the rotation angle through zero.
        let c = Kernel::new(2, 1.0, 0.5, Profile::Bump).unwrap();
        let (a, _) = pair_integral(&c, 0.0);
        let (b, _) = pair_integral(&c, 1e-7);
        assert!((a - b).abs() < 1e-5 * a);
    }

    #[test]
    fn tail_estimate_on_power_law() {
        let terms: Vec<f64> = (0..=400).map(|k| if k == 0 { 0.0 } else { (k as f64).powi(-4) }).collect();
        let exact: f64 = (101..200_000).map(|k| (k as f64).powi(-4)).sum();
        let est = tail_estimate(&terms, 100);
        assert!(est >= 0.9 * exact && est < 3.0 * exact, "{est} vs {exact}");
        assert_eq!(tail_estimate(&vec![1.0; 50], 10), f64::INFINITY);
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.5).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut merged = Moments::default();
        for chunk in xs.chunks(77) {
            let mut m = Moments::default();
            chunk.iter().for_each(|&x| m.push(x));
            merged.merge(&m);
        }
        assert!((all.mean - merged.mean).abs() < 1e-12);
        assert!((all.m2 - merged.m2).abs() < 1e-8 * all.m2);
    }

    #[test]
    fn nearest_matches_brute_force() {
        let form = QuadForm::identity(4);
        let pts = unit_points(&form, 101).unwrap();
        let index = PointIndex::new(pts.clone(), 1.0, 0.0);
        let mut rng = block_rng(9, 0);
        for _ in 0..200 {
            let u = gaussian_direction(&mut rng, 4, 1.0);
            let brute = pts.iter().map(|p| PointIndex::dist2(&u, p)).fold(f64::INFINITY, f64::min);
            assert_eq!(index.nearest2(&u), brute);
        }
    }
}
