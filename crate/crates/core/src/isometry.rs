//! Automorphism groups and isometry testing by backtracking over basis images.
//!
//! The form is first LLL-reduced and its basis reordered so that each vector
//! meets an earlier one. An isometry is fixed by the images of the basis
//! vectors; images are drawn from vectors of the right norm and filtered by
//! inner products against every image already chosen (forward checking).
//! Group orders are assembled level by level from orbit lengths under the
//! pointwise stabilizers of the leading basis vectors, so no group element
//! list is ever built.

use serde::Serialize;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::enumeration::{short_vectors_with, EnumOptions};
use crate::error::{Error, Result};
use crate::forms::QuadForm;
use crate::linalg;

/// Integer matrix acting on column vectors, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IntMatrix {
    pub dim: usize,
    pub entries: Vec<i64>,
}

impl IntMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        Self { dim, entries }
    }

    /// Builds the matrix whose columns are `cols`.
    pub fn from_columns(cols: &[Vec<i64>]) -> Self {
        let dim = cols.len();
        let mut entries = vec![0; dim * dim];
        for (c, col) in cols.iter().enumerate() {
            for r in 0..dim {
                entries[r * dim + c] = col[r];
            }
        }
        Self { dim, entries }
    }

    pub fn apply(&self, v: &[i64]) -> Vec<i64> {
        let m = self.dim;
        (0..m).map(|r| (0..m).map(|c| self.entries[r * m + c] * v[c]).sum()).collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        let m = self.dim;
        let mut entries = vec![0; m * m];
        for i in 0..m {
            for k in 0..m {
                let a = self.entries[i * m + k];
                if a != 0 {
                    for j in 0..m {
                        entries[i * m + j] += a * other.entries[k * m + j];
                    }
                }
            }
        }
        IntMatrix { dim: m, entries }
    }

    pub fn inverse(&self) -> Option<IntMatrix> {
        let q = linalg::to_q_matrix(self.dim, &self.entries);
        let inv = linalg::inverse(&q)?;
        let mut entries = Vec::with_capacity(self.dim * self.dim);
        for row in inv {
            for x in row {
                if !x.is_integer() {
                    return None;
                }
                entries.push(x.to_integer().to_i64()?);
            }
        }
        Some(IntMatrix { dim: self.dim, entries })
    }

    /// `self^T A self == A`.
    pub fn preserves(&self, form: &QuadForm) -> bool {
        linalg::congruence(form.dim(), form.gram(), &self.entries, self.dim) == form.gram()
    }
}

/// Reduced working copy of a form: `reduced = W^T A W`.
#[derive(Clone, Debug)]
struct Prepared {
    reduced: QuadForm,
    w: IntMatrix,
    w_inv: IntMatrix,
}

fn prepare(form: &QuadForm) -> Prepared {
    let m = form.dim();
    let (red, u) = form.lll();
    // Greedy order: small norms first, preferring vectors that meet earlier ones.
    let mut order: Vec<usize> = Vec::with_capacity(m);
    let mut used = vec![false; m];
    while order.len() < m {
        let best = (0..m)
            .filter(|&j| !used[j])
            .min_by_key(|&j| {
                let links = order.iter().filter(|&&i| red.entry(i, j) != 0).count();
                let connected = order.is_empty() || links > 0;
                (!connected, red.entry(j, j), std::cmp::Reverse(links), j)
            })
            .unwrap();
        used[best] = true;
        order.push(best);
    }
    let mut p = vec![0i64; m * m];
    for (new, &old) in order.iter().enumerate() {
        p[old * m + new] = 1;
    }
    let w_entries = IntMatrix { dim: m, entries: u }.mul(&IntMatrix { dim: m, entries: p });
    let reduced = form.pullback(&w_entries.entries, m).expect("unimodular change");
    let w_inv = w_entries.inverse().expect("unimodular");
    Prepared { reduced, w: w_entries, w_inv }
}

/// Pairs `(v, A v)`.
type VectorsWithImages = Vec<(Vec<i64>, Vec<i64>)>;

/// Vectors of a form grouped by norm, with `A v` cached.
struct VectorPool {
    by_norm: BTreeMap<i64, VectorsWithImages>,
}

impl VectorPool {
    fn new(form: &QuadForm, norms: &[i64], budget: u64) -> Result<Self> {
        let max = norms.iter().copied().max().unwrap_or(0);
        let wanted: HashSet<i64> = norms.iter().copied().collect();
        let mut by_norm: BTreeMap<i64, VectorsWithImages> = BTreeMap::new();
        for n in &wanted {
            by_norm.insert(*n, Vec::new());
        }
        for v in short_vectors_with(form, max, EnumOptions { budget, ..Default::default() })? {
            let n = form.norm(&v);
            if wanted.contains(&n) {
                let av = form.apply(&v);
                by_norm.get_mut(&n).unwrap().push((v, av));
            }
        }
        Ok(Self { by_norm })
    }
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking search for images of basis vectors `fixed.len()..m` of the
/// target Gram `target`, inside the lattice described by `pool`.
struct Search<'a> {
    target: &'a QuadForm,
    pool: &'a VectorPool,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    /// Returns the first completion of `prefix` (images as vectors, with
    /// their `A`-images), or `None` if there is none.
    fn complete(&mut self, prefix: &[(Vec<i64>, Vec<i64>)]) -> Result<Option<Vec<Vec<i64>>>> {
        let m = self.target.dim();
        let start = prefix.len();
        // Candidate index lists for every remaining level.
        let mut lists: Vec<Vec<usize>> = Vec::with_capacity(m - start);
        for j in start..m {
            let cands = &self.pool.by_norm[&self.target.entry(j, j)];
            let list: Vec<usize> = (0..cands.len())
                .filter(|&c| {
                    prefix.iter().enumerate().all(|(i, (_, ai))| dot(ai, &cands[c].0) == self.target.entry(i, j))
                })
                .collect();
            if list.is_empty() {
                return Ok(None);
            }
            lists.push(list);
        }
        let mut chosen: Vec<(Vec<i64>, Vec<i64>)> = prefix.to_vec();
        if self.descend(start, lists, &mut chosen)? {
            Ok(Some(chosen.into_iter().map(|(v, _)| v).collect()))
        } else {
            Ok(None)
        }
    }

    fn descend(
        &mut self,
        level: usize,
        lists: Vec<Vec<usize>>,
        chosen: &mut Vec<(Vec<i64>, Vec<i64>)>,
    ) -> Result<bool> {
        let m = self.target.dim();
        if level == m {
            return Ok(true);
        }
        let cands = &self.pool.by_norm[&self.target.entry(level, level)];
        for &c in &lists[0] {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::BudgetExceeded { budget: self.budget });
            }
            let (v, av) = &cands[c];
            let mut next: Vec<Vec<usize>> = Vec::with_capacity(lists.len() - 1);
            let mut dead = false;
            for (k, list) in lists[1..].iter().enumerate() {
                let j = level + 1 + k;
                let pool_j = &self.pool.by_norm[&self.target.entry(j, j)];
                let want = self.target.entry(level, j);
                let filtered: Vec<usize> = list.iter().copied().filter(|&d| dot(av, &pool_j[d].0) == want).collect();
                if filtered.is_empty() {
                    dead = true;
                    break;
                }
                next.push(filtered);
            }
            if dead {
                continue;
            }
            chosen.push((v.clone(), av.clone()));
            if self.descend(level + 1, next, chosen)? {
                return Ok(true);
            }
            chosen.pop();
        }
        Ok(false)
    }
}

/// Order of `O_A(Z)` together with a generating set (in the form's own
/// coordinates).
#[derive(Clone, Debug, Serialize)]
pub struct AutGroup {
    #[serde(serialize_with = "crate::report::bigint")]
    pub order: BigInt,
    pub generators: Vec<IntMatrix>,
    /// Orbit length of each basis vector under its level stabilizer.
    pub orbit_lengths: Vec<u64>,
}

pub fn aut_order(form: &QuadForm, budget: u64) -> Result<BigInt> {
    Ok(automorphism_group(form, budget)?.order)
}

pub fn automorphism_group(form: &QuadForm, budget: u64) -> Result<AutGroup> {
    let prep = prepare(form);
    let red = &prep.reduced;
    let m = red.dim();
    let norms: Vec<i64> = (0..m).map(|j| red.entry(j, j)).collect();
    let pool = VectorPool::new(red, &norms, budget)?;
    let basis: Vec<Vec<i64>> = (0..m).map(|j| (0..m).map(|i| (i == j) as i64).collect()).collect();
    let mut gens: Vec<(usize, IntMatrix)> = Vec::new();
    let mut orbit_lengths = vec![0u64; m];
    let mut search = Search { target: red, pool: &pool, nodes: 0, budget };
    for level in (0..m).rev() {
        let level_gens: Vec<IntMatrix> = gens.iter().filter(|(l, _)| *l >= level).map(|(_, g)| g.clone()).collect();
        let mut level_gens = level_gens;
        let prefix: Vec<(Vec<i64>, Vec<i64>)> = basis[..level].iter().map(|b| (b.clone(), red.apply(b))).collect();
        let cands: Vec<&Vec<i64>> = pool.by_norm[&norms[level]]
            .iter()
            .filter(|(v, _)| prefix.iter().enumerate().all(|(i, (_, ab))| dot(ab, v) == red.entry(i, level)))
            .map(|(v, _)| v)
            .collect();
        let mut orbit = orbit_closure(&basis[level], &level_gens);
        let mut excluded: HashSet<Vec<i64>> = HashSet::new();
        for v in cands {
            if orbit.contains(v) || excluded.contains(v) {
                continue;
            }
            let mut pre = prefix.clone();
            pre.push((v.clone(), red.apply(v)));
            match search.complete(&pre)? {
                Some(images) => {
                    let g = IntMatrix::from_columns(&images);
                    debug_assert!(g.preserves(red));
                    level_gens.push(g.clone());
                    gens.push((level, g));
                    orbit = orbit_closure(&basis[level], &level_gens);
                }
                None => {
                    excluded.extend(orbit_closure(v, &level_gens));
                }
            }
        }
        orbit_lengths[level] = orbit.len() as u64;
    }
    let order = orbit_lengths.iter().map(|&n| BigInt::from(n)).product();
    let generators = gens.into_iter().map(|(_, g)| prep.w.mul(&g).mul(&prep.w_inv)).collect();
    Ok(AutGroup { order, generators, orbit_lengths })
}

fn orbit_closure(start: &[i64], gens: &[IntMatrix]) -> HashSet<Vec<i64>> {
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    seen.insert(start.to_vec());
    let mut queue: VecDeque<Vec<i64>> = VecDeque::from([start.to_vec()]);
    while let Some(v) = queue.pop_front() {
        for g in gens {
            let w = g.apply(&v);
            if seen.insert(w.clone()) {
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Cheap isometry invariants: theta prefix and the component sizes of the
/// graph on minimal vectors (edges join non-orthogonal pairs).
fn invariants_differ(a: &QuadForm, b: &QuadForm, up_to: i64, budget: u64) -> Result<bool> {
    if a.dim() != b.dim() || a.det() != b.det() || a.parity() != b.parity() || a.level() != b.level() {
        return Ok(true);
    }
    let opts = EnumOptions { lll: true, budget, tasks: 1 };
    let va = short_vectors_with(a, up_to, opts)?;
    let vb = short_vectors_with(b, up_to, opts)?;
    let hist = |f: &QuadForm, vs: &[Vec<i64>]| {
        let mut h = BTreeMap::new();
        for v in vs {
            *h.entry(f.norm(v)).or_insert(0u64) += 1;
        }
        h
    };
    let (ha, hb) = (hist(a, &va), hist(b, &vb));
    if ha != hb {
        return Ok(true);
    }
    let Some((&min, _)) = ha.iter().next() else {
        return Ok(false);
    };
    Ok(min_graph_components(a, &va, min) != min_graph_components(b, &vb, min))
}

fn min_graph_components(f: &QuadForm, vs: &[Vec<i64>], min: i64) -> Vec<usize> {
    let mins: Vec<&Vec<i64>> = vs.iter().filter(|v| f.norm(v) == min).collect();
    let images: Vec<Vec<i64>> = mins.iter().map(|v| f.apply(v)).collect();
    let n = mins.len();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[s] = id;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            for j in 0..n {
                if comp[j] == usize::MAX && dot(&images[i], mins[j]) != 0 {
                    comp[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable();
    sizes
}

/// An integer matrix `P` with `P^T A_1 P = A_2`, or `None`.
pub fn is_isometric(f1: &QuadForm, f2: &QuadForm, budget: u64) -> Result<Option<IntMatrix>> {
    let p2 = prepare(f2);
    let t = &p2.reduced;
    let m = t.dim();
    let norms: Vec<i64> = (0..m).map(|j| t.entry(j, j)).collect();
    let max = *norms.iter().max().unwrap();
    if invariants_differ(f1, f2, max, budget)? {
        return Ok(None);
    }
    backtrack_isometry(f1, f2, budget)
}

/// Pure backtracking without the invariant screen.
pub fn backtrack_isometry(f1: &QuadForm, f2: &QuadForm, budget: u64) -> Result<Option<IntMatrix>> {
    if f1.dim() != f2.dim() || f1.det() != f2.det() {
        return Ok(None);
    }
    let p1 = prepare(f1);
    let p2 = prepare(f2);
    let t = &p2.reduced;
    let m = t.dim();
    let norms: Vec<i64> = (0..m).map(|j| t.entry(j, j)).collect();
    let pool = VectorPool::new(&p1.reduced, &norms, budget)?;
    let mut search = Search { target: t, pool: &pool, nodes: 0, budget };
    let Some(images) = search.complete(&[])? else {
        return Ok(None);
    };
    // Y^T A1' Y = A2'  =>  X = W1 Y W2^{-1}.
    let y = IntMatrix::from_columns(&images);
    let x = p1.w.mul(&y).mul(&p2.w_inv);
    debug_assert_eq!(linalg::congruence(m, f1.gram(), &x.entries, m), f2.gram());
    Ok(Some(x))
}

/// An orbit of `O_A(Z)` acting on a finite invariant set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Orbit<T> {
    pub representative: T,
    pub size: u64,
    #[serde(serialize_with = "crate::report::bigint")]
    pub stabilizer_order: BigInt,
    /// Indices of the orbit's elements in the input set.
    pub members: Vec<usize>,
}

/// Orbits of the automorphism group on a set of vectors (closed under the
/// group, e.g. all vectors of one norm).
pub fn orbit_decompose(form: &QuadForm, set: &[Vec<i64>], budget: u64) -> Result<Vec<Orbit<Vec<i64>>>> {
    let group = automorphism_group(form, budget)?;
    orbits_with(&group, set, |g, v| g.apply(v))
}

/// Orbits on representation matrices (lists of columns), acting column-wise.
pub fn orbit_decompose_matrices(
    form: &QuadForm,
    set: &[Vec<Vec<i64>>],
    budget: u64,
) -> Result<Vec<Orbit<Vec<Vec<i64>>>>> {
    let group = automorphism_group(form, budget)?;
    orbits_with(&group, set, |g, x| x.iter().map(|c| g.apply(c)).collect())
}

fn orbits_with<T, F>(group: &AutGroup, set: &[T], act: F) -> Result<Vec<Orbit<T>>>
where
    T: Clone + Eq + std::hash::Hash + Ord,
    F: Fn(&IntMatrix, &T) -> T,
{
    let index: HashMap<&T, usize> = set.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut seen = vec![false; set.len()];
    let mut out = Vec::new();
    for s in 0..set.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut members = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for g in &group.generators {
                let y = act(g, &set[i]);
                let j = *index
                    .get(&y)
                    .ok_or_else(|| Error::InvalidArgument("set is not closed under the automorphism group".into()))?;
                if !seen[j] {
                    seen[j] = true;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        let size = members.len() as u64;
        let representative = members.iter().map(|&i| set[i].clone()).min().unwrap();
        let stab = &group.order / BigInt::from(size);
        debug_assert!((&stab * BigInt::from(size)) == group.order);
        members.sort_unstable();
        out.push(Orbit { representative, size, stabilizer_order: stab, members });
    }
    out.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(out)
}

/// `sum_orbits 1/|Stab|` equals `|set| / |O|`; a consistency helper.
pub fn orbit_mass(orbits: &[Orbit<Vec<i64>>]) -> BigRational {
    orbits
        .iter()
        .map(|o| BigRational::new(BigInt::one(), o.stabilizer_order.clone()))
        .fold(BigRational::zero(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::{vectors_of_norm, DEFAULT_BUDGET};
    use crate::forms::root_lattices;

    #[test]
    fn small_group_orders() {
        assert_eq!(aut_order(&QuadForm::identity(3), DEFAULT_BUDGET).unwrap(), BigInt::from(48));
        assert_eq!(aut_order(&QuadForm::identity(4), DEFAULT_BUDGET).unwrap(), BigInt::from(384));
        assert_eq!(aut_order(&root_lattices::a(2), DEFAULT_BUDGET).unwrap(), BigInt::from(12));
        // W(D4) has order 192; O(D4) includes triality, order 1152.
        assert_eq!(aut_order(&root_lattices::d(4), DEFAULT_BUDGET).unwrap(), BigInt::from(1152));
    }

    #[test]
    fn e8_group_order() {
        assert_eq!(aut_order(&root_lattices::e8(), DEFAULT_BUDGET).unwrap(), BigInt::from(696_729_600u64));
    }

    #[test]
    fn generators_preserve_form() {
        let f = QuadForm::new(3, vec![2, 1, 0, 1, 3, 1, 0, 1, 4]).unwrap();
        let g = automorphism_group(&f, DEFAULT_BUDGET).unwrap();
        for h in &g.generators {
            assert!(h.preserves(&f));
        }
    }

    #[test]
    fn isometry_witness() {
        let a = root_lattices::a(2);
        let b = QuadForm::new(2, vec![2, -1, -1, 2]).unwrap();
        let p = is_isometric(&a, &b, DEFAULT_BUDGET).unwrap().unwrap();
        assert_eq!(linalg::congruence(2, a.gram(), &p.entries, 2), b.gram());
        let c = QuadForm::new(2, vec![2, 0, 0, 2]).unwrap();
        assert!(is_isometric(&a, &c, DEFAULT_BUDGET).unwrap().is_none());
    }

    #[test]
    fn orbit_stabilizer() {
        let e8 = root_lattices::e8();
        let roots = vectors_of_norm(&e8, 2).unwrap();
        let orbits = orbit_decompose(&e8, &roots, DEFAULT_BUDGET).unwrap();
        assert_eq!(orbits.len(), 1);
        assert_eq!(orbits[0].size, 240);
        assert_eq!(orbits[0].stabilizer_order, BigInt::from(2_903_040u64));
    }
}
