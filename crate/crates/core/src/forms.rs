//! Positive definite integral quadratic forms and genus data files.

use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, QMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        })
    }
}

/// A positive definite symmetric integral Gram matrix `A`, acting by
/// `x -> x^T A x`. Determinant, level and parity are cached at construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadForm {
    dim: usize,
    gram: Vec<i64>,
    det: BigInt,
    level: BigInt,
    parity: Parity,
}

/// `A = L D L^T` over the rationals.
#[derive(Clone, Debug)]
pub struct RationalLdl {
    pub l: QMatrix,
    pub d: Vec<BigRational>,
}

impl QuadForm {
    /// Validates symmetry and positive definiteness (Sylvester's criterion).
    pub fn new(dim: usize, gram: Vec<i64>) -> Result<Self> {
        if dim == 0 || gram.len() != dim * dim {
            return Err(Error::BadShape { dim, len: gram.len() });
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if gram[i * dim + j] != gram[j * dim + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let minors = linalg::leading_minors(dim, &gram);
        if let Some((i, m)) = minors.iter().enumerate().find(|(_, m)| !m.is_positive()) {
            return Err(Error::NotPositiveDefinite { index: i + 1, minor: m.to_string() });
        }
        let det = minors[dim - 1].clone();
        let parity = if (0..dim).all(|i| gram[i * dim + i] % 2 == 0) { Parity::Even } else { Parity::Odd };
        let level = compute_level(dim, &gram);
        Ok(Self { dim, gram, det, level, parity })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::BadShape { dim, len: rows.iter().map(Vec::len).sum() });
        }
        Self::new(dim, rows.concat())
    }

    pub fn identity(dim: usize) -> Self {
        let mut g = vec![0; dim * dim];
        for i in 0..dim {
            g[i * dim + i] = 1;
        }
        Self::new(dim, g).expect("identity is positive definite")
    }

    pub fn diagonal(entries: &[i64]) -> Result<Self> {
        let dim = entries.len();
        let mut g = vec![0; dim * dim];
        for (i, &e) in entries.iter().enumerate() {
            g[i * dim + i] = e;
        }
        Self::new(dim, g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &[i64] {
        &self.gram
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.gram[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.gram.chunks(self.dim).map(<[i64]>::to_vec).collect()
    }

    pub fn det(&self) -> &BigInt {
        &self.det
    }

    pub fn level(&self) -> &BigInt {
        &self.level
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_even(&self) -> bool {
        self.parity == Parity::Even
    }

    /// `x^T A y`.
    pub fn inner(&self, x: &[i64], y: &[i64]) -> i64 {
        let m = self.dim;
        let mut s = 0i64;
        for i in 0..m {
            if x[i] == 0 {
                continue;
            }
            let row = &self.gram[i * m..(i + 1) * m];
            let mut t = 0i64;
            for j in 0..m {
                t += row[j] * y[j];
            }
            s += x[i] * t;
        }
        s
    }

    pub fn norm(&self, x: &[i64]) -> i64 {
        self.inner(x, x)
    }

    /// `A x` as an integer vector.
    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        let m = self.dim;
        (0..m).map(|i| (0..m).map(|j| self.gram[i * m + j] * x[j]).sum()).collect()
    }

    pub fn inner_f64(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.dim;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += x[i] * self.gram[i * m + j] as f64 * y[j];
            }
        }
        s
    }

    pub fn rational_gram(&self) -> QMatrix {
        linalg::to_q_matrix(self.dim, &self.gram)
    }

    pub fn inverse(&self) -> QMatrix {
        linalg::inverse(&self.rational_gram()).expect("positive definite forms are invertible")
    }

    pub fn ldl(&self) -> RationalLdl {
        let (l, d) = linalg::ldl(&self.rational_gram()).expect("positive definite forms have an LDL factorization");
        RationalLdl { l, d }
    }

    /// Gram matrix of `P^T A P` for an integer `m x n` matrix `P` (row-major).
    pub fn pullback(&self, p: &[i64], cols: usize) -> Result<Self> {
        Self::new(cols, linalg::congruence(self.dim, &self.gram, p, cols))
    }

    pub fn direct_sum(&self, other: &QuadForm) -> QuadForm {
        let m = self.dim + other.dim;
        let mut g = vec![0; m * m];
        for i in 0..self.dim {
            for j in 0..self.dim {
                g[i * m + j] = self.entry(i, j);
            }
        }
        for i in 0..other.dim {
            for j in 0..other.dim {
                g[(i + self.dim) * m + j + self.dim] = other.entry(i, j);
            }
        }
        QuadForm::new(m, g).expect("direct sum of positive definite forms")
    }

    /// LLL-reduced equivalent form together with the basis change `U`
    /// (`reduced = U^T A U`, columns of `U` are the new basis).
    pub fn lll(&self) -> (QuadForm, Vec<i64>) {
        let (g, u) = linalg::lll_gram(self.dim, &self.gram, (99, 100));
        (QuadForm::new(self.dim, g).expect("LLL preserves definiteness"), u)
    }

    /// Cholesky-type real frame `T` (row-major) with `T^T A T = I`.
    pub fn orthonormal_frame(&self) -> Vec<f64> {
        let m = self.dim;
        // A = L D L^T, so T = L^{-T} D^{-1/2}.
        let ldl = self.ldl();
        let l: Vec<f64> = (0..m * m).map(|k| ldl.l[k / m][k % m].to_f64().unwrap_or(0.0)).collect();
        let d: Vec<f64> = ldl.d.iter().map(|x| x.to_f64().unwrap()).collect();
        // Solve L^T X = I column by column (upper triangular back substitution).
        let mut t = vec![0.0; m * m];
        for c in 0..m {
            for i in (0..m).rev() {
                let mut s = if i == c { 1.0 } else { 0.0 };
                for k in i + 1..m {
                    s -= l[k * m + i] * t[k * m + c];
                }
                t[i * m + c] = s;
            }
        }
        for i in 0..m {
            for c in 0..m {
                t[i * m + c] /= d[c].sqrt();
            }
        }
        t
    }
}

impl fmt::Display for QuadForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, row) in self.gram.chunks(self.dim).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{row:?}")?;
        }
        write!(f, "]")
    }
}

fn compute_level(dim: usize, gram: &[i64]) -> BigInt {
    let inv = linalg::inverse(&linalg::to_q_matrix(dim, gram)).expect("nonsingular");
    let mut d0 = BigInt::one();
    for row in &inv {
        for x in row {
            d0 = d0.lcm(x.denom());
        }
    }
    let d0q = BigRational::from_integer(d0.clone());
    let even_diag = (0..dim).all(|i| (&inv[i][i] * &d0q).to_integer().is_even());
    if even_diag {
        d0
    } else {
        d0 * 2
    }
}

/// Level `D`: least positive integer with `D A^{-1}` integral with even diagonal.
pub fn level(form: &QuadForm) -> BigInt {
    form.level.clone()
}

pub fn validate_form(dim: usize, gram: Vec<i64>) -> Result<QuadForm> {
    QuadForm::new(dim, gram)
}

/// Cartan matrices of the simply laced root systems.
pub mod root_lattices {
    use super::QuadForm;

    fn from_edges(n: usize, edges: &[(usize, usize)]) -> QuadForm {
        let mut g = vec![0; n * n];
        for i in 0..n {
            g[i * n + i] = 2;
        }
        for &(a, b) in edges {
            g[a * n + b] = -1;
            g[b * n + a] = -1;
        }
        QuadForm::new(n, g).expect("Cartan matrices are positive definite")
    }

    pub fn a(n: usize) -> QuadForm {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        from_edges(n, &edges)
    }

    /// `D_n` with the chain `0..n-2` and the fork `n-3 -- n-1`.
    pub fn d(n: usize) -> QuadForm {
        assert!(n >= 3);
        let mut edges: Vec<_> = (1..n - 1).map(|i| (i - 1, i)).collect();
        edges.push((n - 3, n - 1));
        from_edges(n, &edges)
    }

    /// `E_n` (n = 6, 7, 8): chain `0..n-2` with node `n-1` attached to node 2.
    pub fn e(n: usize) -> QuadForm {
        assert!((6..=8).contains(&n));
        let mut edges: Vec<_> = (1..n - 1).map(|i| (i - 1, i)).collect();
        edges.push((2, n - 1));
        from_edges(n, &edges)
    }

    pub fn e8() -> QuadForm {
        e(8)
    }
}

/// One class of a genus, with its automorphism group order if known.
#[derive(Clone, Debug)]
pub struct GenusClass {
    pub name: String,
    pub form: QuadForm,
    pub aut_order: Option<BigInt>,
}

#[derive(Clone, Debug)]
pub struct GenusData {
    pub classes: Vec<GenusClass>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutOrderField {
    Int(u64),
    Text(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormRecord {
    pub name: String,
    pub dim: usize,
    pub gram: Vec<i64>,
    pub aut_order: AutOrderField,
}

impl FormRecord {
    pub fn parse(&self) -> Result<GenusClass> {
        let form =
            QuadForm::new(self.dim, self.gram.clone()).map_err(|e| Error::Parse(format!("{}: {e}", self.name)))?;
        let aut_order = match &self.aut_order {
            AutOrderField::Int(n) => Some(BigInt::from(*n)),
            AutOrderField::Text(s) if s == "compute" => None,
            AutOrderField::Text(s) => Some(
                s.parse::<BigInt>()
                    .ok()
                    .filter(|n| n.is_positive())
                    .ok_or_else(|| Error::Parse(format!("{}: bad aut_order {s:?}", self.name)))?,
            ),
        };
        Ok(GenusClass { name: self.name.clone(), form, aut_order })
    }
}

/// Parses a JSON list of form records without any genus consistency check.
pub fn parse_forms(json: &str) -> Result<Vec<GenusClass>> {
    let records: Vec<FormRecord> = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    records.iter().map(FormRecord::parse).collect()
}

pub fn load_forms(path: impl AsRef<Path>) -> Result<Vec<GenusClass>> {
    parse_forms(&std::fs::read_to_string(path)?)
}

/// Parses a genus file: every class must share dim, det, parity and level.
pub fn parse_genus(json: &str) -> Result<GenusData> {
    let classes = parse_forms(json)?;
    GenusData::new(classes)
}

pub fn load_genus(path: impl AsRef<Path>) -> Result<GenusData> {
    parse_genus(&std::fs::read_to_string(path)?)
}

/// Resolves `file#name` to a single form; a bare path must hold exactly one.
pub fn load_form_ref(reference: &str) -> Result<GenusClass> {
    let (path, name) = match reference.rsplit_once('#') {
        Some((p, n)) => (p, Some(n)),
        None => (reference, None),
    };
    let forms = load_forms(path)?;
    match name {
        Some(n) => forms.into_iter().find(|c| c.name == n).ok_or_else(|| Error::UnknownForm(n.to_string())),
        None if forms.len() == 1 => Ok(forms.into_iter().next().unwrap()),
        None => Err(Error::Parse(format!("{path} holds {} forms; use {path}#name", forms.len()))),
    }
}

impl GenusData {
    pub fn new(classes: Vec<GenusClass>) -> Result<Self> {
        let first = classes.first().ok_or(Error::EmptyGenus)?;
        for c in &classes[1..] {
            let (a, b) = (&first.form, &c.form);
            if a.dim() != b.dim() {
                return Err(Error::InconsistentGenus(format!("{}: dim {} vs {}", c.name, b.dim(), a.dim())));
            }
            if a.det() != b.det() {
                return Err(Error::InconsistentGenus(format!("{}: det {} vs {}", c.name, b.det(), a.det())));
            }
            if a.parity() != b.parity() {
                return Err(Error::InconsistentGenus(format!("{}: parity {} vs {}", c.name, b.parity(), a.parity())));
            }
            if a.level() != b.level() {
                return Err(Error::InconsistentGenus(format!("{}: level {} vs {}", c.name, b.level(), a.level())));
            }
        }
        Ok(Self { classes })
    }

    pub fn single(name: &str, form: QuadForm, aut_order: Option<BigInt>) -> Self {
        Self { classes: vec![GenusClass { name: name.to_string(), form, aut_order }] }
    }

    pub fn dim(&self) -> usize {
        self.classes[0].form.dim()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Fills in automorphism orders marked `"compute"`.
    pub fn resolve_aut_orders(&mut self, budget: u64) -> Result<()> {
        for c in &mut self.classes {
            if c.aut_order.is_none() {
                c.aut_order = Some(crate::isometry::aut_order(&c.form, budget)?);
            }
        }
        Ok(())
    }

    /// Normalized class weights `w_i = |O_i|^{-1} / sum_j |O_j|^{-1}`.
    pub fn weights(&self) -> Result<Vec<BigRational>> {
        let inv: Vec<BigRational> = self
            .classes
            .iter()
            .map(|c| {
                c.aut_order
                    .as_ref()
                    .map(|o| BigRational::new(BigInt::one(), o.clone()))
                    .ok_or_else(|| Error::InvalidArgument(format!("aut_order of {} not resolved", c.name)))
            })
            .collect::<Result<_>>()?;
        let total: BigRational = inv.iter().sum();
        Ok(inv.into_iter().map(|x| x / &total).collect())
    }

    /// `sum_i 1/|O_i|`.
    pub fn mass(&self) -> Option<BigRational> {
        self.classes.iter().map(|c| c.aut_order.as_ref().map(|o| BigRational::new(BigInt::one(), o.clone()))).sum()
    }

    pub fn to_records(&self) -> Vec<FormRecord> {
        self.classes
            .iter()
            .map(|c| FormRecord {
                name: c.name.clone(),
                dim: c.form.dim(),
                gram: c.form.gram().to_vec(),
                aut_order: match &c.aut_order {
                    Some(o) => match o.to_u64() {
                        Some(v) => AutOrderField::Int(v),
                        None => AutOrderField::Text(o.to_string()),
                    },
                    None => AutOrderField::Text("compute".into()),
                },
            })
            .collect()
    }
}

/// Random unimodular matrix (row-major) with entries bounded by `max_entry`,
/// built from elementary moves, permutations and sign changes.
pub fn random_unimodular<R: rand::Rng + ?Sized>(dim: usize, max_entry: i64, rng: &mut R) -> Vec<i64> {
    use rand::RngExt;
    let mut p = vec![0i64; dim * dim];
    for i in 0..dim {
        p[i * dim + i] = 1;
    }
    let moves = 4 * dim;
    for _ in 0..moves {
        let mut next = p.clone();
        let i = rng.random_range(0..dim);
        let j = rng.random_range(0..dim);
        match rng.random_range(0..3) {
            0 if i != j => {
                let f = if rng.random::<bool>() { 1 } else { -1 };
                for r in 0..dim {
                    next[r * dim + i] += f * next[r * dim + j];
                }
            }
            1 => {
                for r in 0..dim {
                    next.swap(r * dim + i, r * dim + j);
                }
            }
            _ => {
                for r in 0..dim {
                    next[r * dim + i] = -next[r * dim + i];
                }
            }
        }
        if next.iter().all(|x| x.abs() <= max_entry) {
            p = next;
        }
    }
    p
}
