//! Fincke-Pohst enumeration with exact integer bounds.
//!
//! The form is completed to squares through its fraction-free (Bareiss)
//! elimination: with `D_i` the leading principal minors, fixing
//! `x_{i+1}, .., x_{m-1}` leaves
//!
//! ```text
//! S_i = (D_{i+1} x_i + B_i)^2 / (D_{i+1} D_i) + S_{i+1}
//! ```
//!
//! where `B_i` is an integer linear form in the fixed coordinates and
//! `D_{i+1} S_{i+1}` is an integer. Every bound is therefore an integer
//! square-root comparison and no rounding can drop a vector.

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::arith::{div_ceil_i128, isqrt_i128};
use crate::error::{Error, Result};
use crate::forms::QuadForm;

/// Default cap on visited tree nodes.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

/// Environment variable overriding the node budget.
pub const BUDGET_ENV: &str = "SIEGEL_NODE_BUDGET";

pub fn budget_from_env() -> u64 {
    std::env::var(BUDGET_ENV).ok().and_then(|s| s.trim().replace('_', "").parse().ok()).unwrap_or(DEFAULT_BUDGET)
}

#[derive(Clone, Copy, Debug)]
pub struct EnumOptions {
    pub lll: bool,
    pub budget: u64,
    pub tasks: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        Self { lll: false, budget: DEFAULT_BUDGET, tasks: 1 }
    }
}

/// Precomputed integer data for the square completion.
#[derive(Clone, Debug)]
struct Plan {
    m: usize,
    /// `piv[i] = D_{i+1}`.
    piv: Vec<i128>,
    /// `prev[i] = D_i` (with `D_0 = 1`).
    prev: Vec<i128>,
    /// `row[i][l]` for `l > i`: Bareiss entry `a^{(i)}_{i,l}`.
    row: Vec<Vec<i128>>,
}

impl Plan {
    fn new(form: &QuadForm) -> Result<Self> {
        let m = form.dim();
        let mut a: Vec<Vec<BigInt>> =
            (0..m).map(|i| (0..m).map(|j| BigInt::from(form.entry(i, j))).collect()).collect();
        let mut piv = Vec::with_capacity(m);
        let mut prev = Vec::with_capacity(m);
        let mut row = Vec::with_capacity(m);
        let mut p = BigInt::from(1);
        let conv = |x: &BigInt| x.to_i128().ok_or(Error::Overflow("enumeration setup"));
        for k in 0..m {
            piv.push(conv(&a[k][k])?);
            prev.push(conv(&p)?);
            row.push((0..m).map(|l| if l > k { conv(&a[k][l]) } else { Ok(0) }).collect::<Result<Vec<_>>>()?);
            let pk = a[k][k].clone();
            for i in k + 1..m {
                for j in k + 1..m {
                    a[i][j] = (&a[i][j] * &pk - &a[i][k] * &a[k][j]) / &p;
                }
            }
            p = pk;
        }
        Ok(Self { m, piv, prev, row })
    }

    fn linear(&self, i: usize, x: &[i64]) -> i128 {
        let r = &self.row[i];
        let mut b = 0i128;
        for l in i + 1..self.m {
            b += r[l] * x[l] as i128;
        }
        b
    }

    /// Integer interval for `x_i` given the tail and `E_{i+1} = D_{i+1} S_{i+1}`.
    fn interval(&self, i: usize, b: i128, e_next: i128, bound: i128) -> Result<Option<(i128, i128)>> {
        let piv = self.piv[i];
        let slack = piv
            .checked_mul(bound)
            .and_then(|v| v.checked_sub(e_next))
            .and_then(|v| v.checked_mul(self.prev[i]))
            .ok_or(Error::Overflow("enumeration bound"))?;
        if slack < 0 {
            return Ok(None);
        }
        let s = isqrt_i128(slack);
        let lo = div_ceil_i128(-s - b, piv);
        let hi = (s - b).div_euclid(piv);
        Ok((lo <= hi).then_some((lo, hi)))
    }

    fn next_e(&self, i: usize, x: i128, b: i128, e_next: i128) -> i128 {
        let t = self.piv[i] * x + b;
        (t * t + self.prev[i] * e_next) / self.piv[i]
    }
}

/// Bound type: all vectors up to a norm, or exactly one norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    AtMost(i64),
    Exactly(i64),
}

struct Walker<'a, F: FnMut(&[i64], i64)> {
    plan: &'a Plan,
    target: Target,
    x: Vec<i64>,
    nodes: u64,
    budget: u64,
    shared: Option<&'a AtomicU64>,
    visit: F,
}

impl<F: FnMut(&[i64], i64)> Walker<'_, F> {
    fn tick(&mut self, n: u64) -> Result<()> {
        self.nodes += n;
        if let Some(shared) = self.shared {
            if self.nodes >= 4096 {
                let total = shared.fetch_add(self.nodes, Ordering::Relaxed) + self.nodes;
                self.nodes = 0;
                if total > self.budget {
                    return Err(Error::BudgetExceeded { budget: self.budget });
                }
            }
        } else if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    fn walk(&mut self, i: usize, e_next: i128) -> Result<()> {
        let bound = match self.target {
            Target::AtMost(n) | Target::Exactly(n) => n as i128,
        };
        let b = self.plan.linear(i, &self.x);
        if i == 0 {
            if let Target::Exactly(n) = self.target {
                return self.solve_last(n as i128, b, e_next);
            }
        }
        let Some((lo, hi)) = self.plan.interval(i, b, e_next, bound)? else {
            return Ok(());
        };
        self.tick((hi - lo + 1) as u64)?;
        for v in lo..=hi {
            self.x[i] = v as i64;
            let e = self.plan.next_e(i, v, b, e_next);
            if i == 0 {
                (self.visit)(&self.x, e as i64);
            } else {
                self.walk(i - 1, e)?;
            }
        }
        self.x[i] = 0;
        Ok(())
    }

    /// Level 0 with an exact target: `(D_1 x + B)^2 = D_1 N - E_1`.
    fn solve_last(&mut self, n: i128, b: i128, e_next: i128) -> Result<()> {
        let piv = self.plan.piv[0];
        let t = piv * n - e_next;
        self.tick(1)?;
        if t < 0 {
            return Ok(());
        }
        let s = isqrt_i128(t);
        if s * s != t {
            return Ok(());
        }
        let mut sols = [-s - b, s - b];
        if s == 0 {
            sols[1] = i128::MAX;
        }
        for &num in &sols {
            if num != i128::MAX && num.rem_euclid(piv) == 0 {
                self.x[0] = (num / piv) as i64;
                (self.visit)(&self.x, n as i64);
            }
        }
        self.x[0] = 0;
        Ok(())
    }
}

/// Calls `visit(x, norm)` for every integer vector of the target set
/// (the zero vector included when it qualifies). Returns nodes visited.
fn enumerate_with<F>(form: &QuadForm, target: Target, budget: u64, visit: F) -> Result<u64>
where
    F: FnMut(&[i64], i64),
{
    let plan = Plan::new(form)?;
    let mut w = Walker { plan: &plan, target, x: vec![0; form.dim()], nodes: 0, budget, shared: None, visit };
    w.walk(form.dim() - 1, 0)?;
    Ok(w.nodes)
}

fn collect(form: &QuadForm, target: Target, opts: EnumOptions) -> Result<Vec<Vec<i64>>> {
    let (work, u) = if opts.lll {
        let (f, u) = form.lll();
        (f, Some(u))
    } else {
        (form.clone(), None)
    };
    let m = form.dim();
    let mut out = if opts.tasks > 1 && m > 1 {
        collect_parallel(&work, target, opts)?
    } else {
        let mut out = Vec::new();
        enumerate_with(&work, target, opts.budget, |x, _| {
            if x.iter().any(|&c| c != 0) {
                out.push(x.to_vec());
            }
        })?;
        out
    };
    if let Some(u) = u {
        for v in out.iter_mut() {
            let y = v.clone();
            for (r, slot) in v.iter_mut().enumerate() {
                *slot = (0..m).map(|c| u[r * m + c] * y[c]).sum();
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Splits the tree at the outermost coordinate; the merged result does not
/// depend on the number of tasks.
fn collect_parallel(form: &QuadForm, target: Target, opts: EnumOptions) -> Result<Vec<Vec<i64>>> {
    let plan = Plan::new(form)?;
    let m = form.dim();
    let bound = match target {
        Target::AtMost(n) | Target::Exactly(n) => n as i128,
    };
    let Some((lo, hi)) = plan.interval(m - 1, 0, 0, bound)? else {
        return Ok(Vec::new());
    };
    let shared = AtomicU64::new((hi - lo + 1) as u64);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.tasks)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let parts: Vec<Result<Vec<Vec<i64>>>> = pool.install(|| {
        (lo..=hi)
            .into_par_iter()
            .map(|top| {
                let mut found = Vec::new();
                let e = plan.next_e(m - 1, top, 0, 0);
                let mut w = Walker {
                    plan: &plan,
                    target,
                    x: vec![0; m],
                    nodes: 0,
                    budget: opts.budget,
                    shared: Some(&shared),
                    visit: |x: &[i64], _| {
                        if x.iter().any(|&c| c != 0) {
                            found.push(x.to_vec());
                        }
                    },
                };
                w.x[m - 1] = top as i64;
                w.walk(m - 2, e)?;
                Ok(found)
            })
            .collect()
    });
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// All nonzero `x` with `x^T A x <= bound`, in lexicographic order.
pub fn short_vectors(form: &QuadForm, bound: i64) -> Result<Vec<Vec<i64>>> {
    short_vectors_with(form, bound, EnumOptions { budget: budget_from_env(), ..Default::default() })
}

pub fn short_vectors_with(form: &QuadForm, bound: i64, opts: EnumOptions) -> Result<Vec<Vec<i64>>> {
    if bound < 0 {
        return Ok(Vec::new());
    }
    collect(form, Target::AtMost(bound), opts)
}

/// All `x` with `x^T A x = n` (n >= 1), in lexicographic order.
pub fn vectors_of_norm(form: &QuadForm, n: i64) -> Result<Vec<Vec<i64>>> {
    vectors_of_norm_with(form, n, EnumOptions { budget: budget_from_env(), ..Default::default() })
}

pub fn vectors_of_norm_with(form: &QuadForm, n: i64, opts: EnumOptions) -> Result<Vec<Vec<i64>>> {
    if n < 0 {
        return Err(Error::UnsupportedN(n));
    }
    if n == 0 {
        return Ok(vec![vec![0; form.dim()]]);
    }
    collect(form, Target::Exactly(n), opts)
}

/// `#{x : x^T A x = n}` without storing the vectors.
pub fn rep_count(form: &QuadForm, n: i64) -> Result<u64> {
    rep_count_with_budget(form, n, budget_from_env())
}

pub fn rep_count_with_budget(form: &QuadForm, n: i64, budget: u64) -> Result<u64> {
    if n < 0 {
        return Err(Error::UnsupportedN(n));
    }
    if n == 0 {
        return Ok(1);
    }
    let mut count = 0u64;
    enumerate_with(form, Target::Exactly(n), budget, |_, _| count += 1)?;
    Ok(count)
}

/// Representation numbers `r(0), .., r(bound)` in one pass.
pub fn rep_counts_up_to(form: &QuadForm, bound: i64) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; bound.max(0) as usize + 1];
    enumerate_with(form, Target::AtMost(bound), budget_from_env(), |_, n| counts[n as usize] += 1)?;
    Ok(counts)
}

/// All integer `m x n` matrices `X` with `X^T A X = target`, each returned as
/// its list of columns. Columns are filled in increasing order of the
/// target's diagonal.
pub fn rep_matrices(form: &QuadForm, target: &[Vec<i64>]) -> Result<Vec<Vec<Vec<i64>>>> {
    let n = target.len();
    let m = form.dim();
    if target.iter().any(|r| r.len() != n) {
        return Err(Error::BadShape { dim: n, len: target.iter().map(Vec::len).sum() });
    }
    if n > m {
        return Err(Error::TargetTooLarge { target: n, form: m });
    }
    for i in 0..n {
        for j in 0..n {
            if target[i][j] != target[j][i] {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    if !is_positive_semidefinite(target) {
        return Err(Error::TargetNotPositive);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (target[i][i], i));
    let candidates: Vec<Vec<Vec<i64>>> =
        order.iter().map(|&c| vectors_of_norm(form, target[c][c])).collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut chosen: Vec<Vec<i64>> = Vec::with_capacity(n);
    let mut images: Vec<Vec<i64>> = Vec::with_capacity(n);
    extend_columns(form, target, &order, &candidates, &mut chosen, &mut images, &mut out);
    out.sort();
    Ok(out)
}

fn extend_columns(
    form: &QuadForm,
    target: &[Vec<i64>],
    order: &[usize],
    candidates: &[Vec<Vec<i64>>],
    chosen: &mut Vec<Vec<i64>>,
    images: &mut Vec<Vec<i64>>,
    out: &mut Vec<Vec<Vec<i64>>>,
) {
    let depth = chosen.len();
    if depth == order.len() {
        let mut cols = vec![Vec::new(); order.len()];
        for (k, &c) in order.iter().enumerate() {
            cols[c] = chosen[k].clone();
        }
        out.push(cols);
        return;
    }
    let col = order[depth];
    'cand: for v in &candidates[depth] {
        for (k, av) in images.iter().enumerate() {
            let ip: i64 = av.iter().zip(v).map(|(a, b)| a * b).sum();
            if ip != target[order[k]][col] {
                continue 'cand;
            }
        }
        chosen.push(v.clone());
        images.push(form.apply(v));
        extend_columns(form, target, order, candidates, chosen, images, out);
        chosen.pop();
        images.pop();
    }
}

fn is_positive_semidefinite(b: &[Vec<i64>]) -> bool {
    let n = b.len();
    (1u32..(1 << n)).all(|mask| {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vec<BigInt>> = idx.iter().map(|&i| idx.iter().map(|&j| BigInt::from(b[i][j])).collect()).collect();
        crate::linalg::det_bigint(&sub) >= BigInt::from(0)
    })
}
