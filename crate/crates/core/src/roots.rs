//! Norm-1 and norm-2 vectors and the orthogonal splitting they induce.

use num_bigint::BigInt;
use num_traits::{One, Signed};
use serde::Serialize;

use crate::enumeration::short_vectors;
use crate::error::Result;
use crate::forms::QuadForm;
use crate::linalg;

#[derive(Clone, Debug, Serialize)]
pub struct RootData {
    /// Number of norm-1 vectors.
    pub n1: u64,
    /// Number of norm-2 vectors.
    pub n2: u64,
    /// One vector from each `±` pair of norm-1 vectors; pairwise orthogonal.
    pub unit_basis: Vec<Vec<i64>>,
    /// Basis of the orthogonal complement of the norm-1 span.
    pub complement_basis: Vec<Vec<i64>>,
    /// Gram matrix of `complement_basis`, if nonempty.
    #[serde(skip)]
    pub complement: Option<QuadForm>,
    /// `[Z^m : V + V^perp]`; equals 1 whenever the norm-1 span splits off.
    #[serde(serialize_with = "crate::report::bigint")]
    pub split_index: BigInt,
    /// Norm-2 vectors that lie in neither the norm-1 span nor its complement.
    pub mixed_roots: u64,
    /// Norm-2 vectors split as (in the norm-1 span, in the complement).
    pub roots_in_span: u64,
    pub roots_in_complement: u64,
}

pub fn root_vectors(form: &QuadForm) -> Result<RootData> {
    let vs = short_vectors(form, 2)?;
    let (ones, twos): (Vec<_>, Vec<_>) = vs.into_iter().partition(|v| form.norm(v) == 1);
    let m = form.dim();
    let mut unit_basis: Vec<Vec<i64>> =
        ones.iter().filter(|v| v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)).cloned().collect();
    unit_basis.sort();
    for (i, a) in unit_basis.iter().enumerate() {
        for b in &unit_basis[i + 1..] {
            assert_eq!(form.inner(a, b), 0, "norm-1 vectors must be orthogonal");
        }
    }
    let constraints: Vec<Vec<BigInt>> =
        unit_basis.iter().map(|v| form.apply(v).into_iter().map(BigInt::from).collect()).collect();
    let kernel = linalg::integer_kernel(&constraints, m);
    let complement_basis: Vec<Vec<i64>> = kernel
        .iter()
        .map(|r| r.iter().map(|x| i64::try_from(x).expect("kernel entries are small")).collect())
        .collect();
    let mut all: Vec<Vec<BigInt>> = unit_basis.iter().map(|v| v.iter().map(|&x| BigInt::from(x)).collect()).collect();
    all.extend(kernel);
    let split_index = linalg::det_bigint(&all).abs();
    let complement = if complement_basis.is_empty() {
        None
    } else {
        let k = complement_basis.len();
        let g: Vec<i64> = (0..k * k).map(|t| form.inner(&complement_basis[t / k], &complement_basis[t % k])).collect();
        Some(QuadForm::new(k, g)?)
    };
    let mut in_span = 0;
    let mut in_comp = 0;
    let mut mixed = 0;
    for r in &twos {
        let coords: Vec<i64> = unit_basis.iter().map(|u| form.inner(r, u)).collect();
        if coords.iter().all(|&c| c == 0) {
            in_comp += 1;
        } else {
            let mut rest = r.clone();
            for (u, &c) in unit_basis.iter().zip(&coords) {
                for (x, y) in rest.iter_mut().zip(u) {
                    *x -= c * y;
                }
            }
            if rest.iter().all(|&x| x == 0) {
                in_span += 1;
            } else {
                mixed += 1;
            }
        }
    }
    Ok(RootData {
        n1: ones.len() as u64,
        n2: twos.len() as u64,
        unit_basis,
        complement_basis,
        complement,
        split_index,
        mixed_roots: mixed,
        roots_in_span: in_span,
        roots_in_complement: in_comp,
    })
}

/// A maximum-size set of pairwise orthogonal norm-2 vectors, one per `±`
/// pair. Maximality is certified: no norm-2 vector is orthogonal to all of it.
#[derive(Clone, Debug)]
pub struct OrthogonalRoots {
    pub roots: Vec<Vec<i64>>,
    /// Whether the set has `dim` elements, i.e. spans `R^m`.
    pub spans: bool,
}

pub fn orthogonal_root_basis(form: &QuadForm) -> Result<OrthogonalRoots> {
    let roots: Vec<Vec<i64>> = short_vectors(form, 2)?
        .into_iter()
        .filter(|v| form.norm(v) == 2)
        .filter(|v| v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0))
        .collect();
    let images: Vec<Vec<i64>> = roots.iter().map(|r| form.apply(r)).collect();
    let n = roots.len();
    let ortho = |i: usize, j: usize| dot(&images[i], &roots[j]) == 0;
    let rank_cap = form.dim();
    let mut best: Vec<usize> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let candidates: Vec<usize> = (0..n).collect();
    let mut nodes = 0u64;
    search_clique(&candidates, &mut current, &mut best, rank_cap, &ortho, &mut nodes);
    // The node cap can stop the search early; make the result inclusion-maximal.
    for r in 0..n {
        if !best.contains(&r) && best.iter().all(|&b| ortho(r, b)) {
            best.push(r);
        }
    }
    let set: Vec<Vec<i64>> = best.iter().map(|&i| roots[i].clone()).collect();
    debug_assert!((0..n).all(|r| best.contains(&r) || best.iter().any(|&b| !ortho(r, b))));
    Ok(OrthogonalRoots { spans: set.len() == rank_cap, roots: set })
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Branch-and-bound maximum clique in the orthogonality graph, stopping as
/// soon as a clique of size `cap` (the rank) is found.
fn search_clique(
    cands: &[usize],
    current: &mut Vec<usize>,
    best: &mut Vec<usize>,
    cap: usize,
    ortho: &dyn Fn(usize, usize) -> bool,
    nodes: &mut u64,
) -> bool {
    *nodes += 1;
    if current.len() > best.len() {
        *best = current.clone();
        if best.len() == cap {
            return true;
        }
    }
    if cands.is_empty() || current.len() + cands.len() <= best.len() || *nodes > 1_000_000 {
        return false;
    }
    for (k, &c) in cands.iter().enumerate() {
        if current.len() + (cands.len() - k) <= best.len() {
            break;
        }
        let next: Vec<usize> = cands[k + 1..].iter().copied().filter(|&d| ortho(c, d)).collect();
        current.push(c);
        if search_clique(&next, current, best, cap, ortho, nodes) {
            return true;
        }
        current.pop();
    }
    false
}

/// Outcome of the root-count bounds check.
#[derive(Clone, Debug, Serialize)]
pub struct RootBounds {
    pub dim: usize,
    pub n1: u64,
    pub n2: u64,
    /// `n1 <= 2m`.
    pub unit_bound_ok: bool,
    /// `n2 <= 10 m^2`.
    pub root_bound_ok: bool,
    /// `n2 <= 6m^2 - 4m`, checked when there are no norm-1 vectors and an
    /// orthogonal norm-2 basis exists; `None` otherwise.
    pub orthogonal_case_ok: Option<bool>,
    pub split_index_is_one: bool,
    pub mixed_roots: u64,
}

impl RootBounds {
    pub fn all_ok(&self) -> bool {
        self.unit_bound_ok
            && self.root_bound_ok
            && self.orthogonal_case_ok.unwrap_or(true)
            && self.split_index_is_one
            && self.mixed_roots == 0
    }
}

pub fn verify_root_bounds(form: &QuadForm) -> Result<RootBounds> {
    let data = root_vectors(form)?;
    let m = form.dim() as u64;
    let orthogonal_case_ok = if data.n1 == 0 {
        let ob = orthogonal_root_basis(form)?;
        ob.spans.then_some(data.n2 <= 6 * m * m - 4 * m)
    } else {
        None
    };
    Ok(RootBounds {
        dim: form.dim(),
        n1: data.n1,
        n2: data.n2,
        unit_bound_ok: data.n1 <= 2 * m,
        root_bound_ok: data.n2 <= 10 * m * m,
        orthogonal_case_ok,
        split_index_is_one: data.split_index.is_one(),
        mixed_roots: data.mixed_roots,
    })
}
