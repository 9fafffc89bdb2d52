//! Writes the shipped lattice databases under `data/`:
//! `unimodular.json` (odd unimodular lattices of dims 1-9 and `E8`),
//! `odd9.json` (the two-class genus of `I9`), `dim16.json` (the two even
//! unimodular lattices of dim 16) and `niemeier.json` (the 24 Niemeier lattices).
//!
//! Each Niemeier lattice with roots is the root lattice plus glue vectors (classes
//! of the discriminant groups, in Bourbaki weight coordinates); the Leech
//! lattice comes from the extended Golay code. Every output is checked to be
//! even, unimodular and to have exactly the roots of its root system, which
//! pins it down up to isometry. Automorphism orders are `|W(R)| |G1| |G2|`
//! and the total is checked against the mass formula.
//!
//! Run from the repository root with `cargo run --release --example gen_data [dir]`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::json;
use siegel::forms::root_lattices;
use siegel::linalg::{inverse, lattice_basis, to_q_matrix};
use siegel::mass::even_unimodular_mass;
use siegel::roots::root_vectors;
use siegel::QuadForm;

#[derive(Clone, Copy, Debug)]
enum Comp {
    A(usize),
    D(usize),
    E(usize),
}

impl Comp {
    fn rank(self) -> usize {
        match self {
            Comp::A(n) | Comp::D(n) | Comp::E(n) => n,
        }
    }

    /// Edges of the Dynkin diagram, Bourbaki numbering from 0.
    fn edges(self) -> Vec<(usize, usize)> {
        match self {
            Comp::A(n) => (1..n).map(|i| (i - 1, i)).collect(),
            Comp::D(n) => {
                let mut e: Vec<_> = (1..n - 1).map(|i| (i - 1, i)).collect();
                e.push((n - 3, n - 1));
                e
            }
            Comp::E(n) => {
                // 1-3-4-5-...-n with 2 on 4 (one-based).
                let mut e = vec![(0, 2), (1, 3)];
                e.extend((3..n).map(|i| (i - 1, i)));
                e
            }
        }
    }

    fn cartan(self) -> Vec<Vec<i64>> {
        let n = self.rank();
        let mut c = vec![vec![0; n]; n];
        for (i, row) in c.iter_mut().enumerate() {
            row[i] = 2;
        }
        for (a, b) in self.edges() {
            c[a][b] = -1;
            c[b][a] = -1;
        }
        c
    }

    fn roots(self) -> u64 {
        match self {
            Comp::A(n) => (n * (n + 1)) as u64,
            Comp::D(n) => (2 * n * (n - 1)) as u64,
            Comp::E(6) => 72,
            Comp::E(7) => 126,
            Comp::E(8) => 240,
            Comp::E(_) => unreachable!(),
        }
    }

    fn weyl_order(self) -> BigInt {
        let fact = |k: usize| (1..=k as u64).map(BigInt::from).product::<BigInt>();
        match self {
            Comp::A(n) => fact(n + 1),
            Comp::D(n) => BigInt::from(2).pow(n as u32 - 1) * fact(n),
            Comp::E(6) => BigInt::from(51_840),
            Comp::E(7) => BigInt::from(2_903_040),
            Comp::E(8) => BigInt::from(696_729_600),
            Comp::E(_) => unreachable!(),
        }
    }

    /// Glue class `c` as a weight, in root-basis coordinates.
    fn glue(self, c: usize) -> Vec<BigRational> {
        let n = self.rank();
        let inv = inverse(&to_q_matrix(n, &self.cartan().concat())).unwrap();
        let weight = |i: usize| -> Vec<BigRational> { (0..n).map(|j| inv[j][i].clone()).collect() };
        let scaled = |w: Vec<BigRational>, k: usize| w.into_iter().map(|x| x * BigInt::from(k)).collect();
        match self {
            Comp::A(_) => scaled(weight(0), c),
            Comp::D(_) => match c {
                0 => vec![BigRational::zero(); n],
                1 => weight(n - 1),
                2 => weight(0),
                3 => weight(n - 2),
                _ => panic!("D glue class {c}"),
            },
            Comp::E(6) => scaled(weight(0), c),
            Comp::E(7) => scaled(weight(6), c),
            Comp::E(_) => vec![BigRational::zero(); n],
        }
    }
}

fn cyclic(prefix: &[usize], cycle: &[usize], suffix: &[usize]) -> Vec<Vec<usize>> {
    (0..cycle.len())
        .map(|s| {
            let mut w = prefix.to_vec();
            w.extend((0..cycle.len()).map(|i| cycle[(i + cycle.len() - s) % cycle.len()]));
            w.extend_from_slice(suffix);
            w
        })
        .collect()
}

fn even_perms_0123() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (0..i).all(|j| p[i] != p[j]));
                    let inversions =
                        (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
                    if distinct && inversions % 2 == 0 {
                        out.push(p.to_vec());
                    }
                }
            }
        }
    }
    out
}

struct Spec {
    name: &'static str,
    comps: Vec<Comp>,
    glue: Vec<Vec<usize>>,
    g1: u64,
    g2: u64,
}

fn specs() -> Vec<Spec> {
    use Comp::*;
    let rep = |c: Comp, k: usize| vec![c; k];
    vec![
        Spec { name: "D24", comps: vec![D(24)], glue: vec![vec![1]], g1: 1, g2: 1 },
        Spec { name: "D16E8", comps: vec![D(16), E(8)], glue: vec![vec![1, 0]], g1: 1, g2: 1 },
        Spec { name: "E8^3", comps: rep(E(8), 3), glue: vec![], g1: 1, g2: 6 },
        Spec { name: "A24", comps: vec![A(24)], glue: vec![vec![5]], g1: 2, g2: 1 },
        Spec { name: "D12^2", comps: rep(D(12), 2), glue: vec![vec![1, 2], vec![2, 1]], g1: 1, g2: 2 },
        Spec { name: "A17E7", comps: vec![A(17), E(7)], glue: vec![vec![3, 1]], g1: 2, g2: 1 },
        Spec {
            name: "D10E7^2",
            comps: vec![D(10), E(7), E(7)],
            glue: vec![vec![1, 1, 0], vec![3, 0, 1]],
            g1: 1,
            g2: 2,
        },
        Spec { name: "A15D9", comps: vec![A(15), D(9)], glue: vec![vec![2, 1]], g1: 2, g2: 1 },
        Spec { name: "D8^3", comps: rep(D(8), 3), glue: cyclic(&[], &[1, 2, 2], &[]), g1: 1, g2: 6 },
        Spec { name: "A12^2", comps: rep(A(12), 2), glue: vec![vec![1, 5]], g1: 2, g2: 2 },
        Spec { name: "A11D7E6", comps: vec![A(11), D(7), E(6)], glue: vec![vec![1, 1, 1]], g1: 2, g2: 1 },
        Spec { name: "E6^4", comps: rep(E(6), 4), glue: cyclic(&[1], &[0, 1, 2], &[]), g1: 2, g2: 24 },
        Spec {
            name: "A9^2D6",
            comps: vec![A(9), A(9), D(6)],
            glue: vec![vec![2, 4, 0], vec![5, 0, 1], vec![0, 5, 3]],
            g1: 2,
            g2: 2,
        },
        Spec { name: "D6^4", comps: rep(D(6), 4), glue: even_perms_0123(), g1: 1, g2: 24 },
        Spec { name: "A8^3", comps: rep(A(8), 3), glue: cyclic(&[], &[1, 1, 4], &[]), g1: 2, g2: 6 },
        Spec {
            name: "A7^2D5^2",
            comps: vec![A(7), A(7), D(5), D(5)],
            glue: vec![vec![1, 1, 1, 2], vec![1, 7, 2, 1]],
            g1: 2,
            g2: 4,
        },
        Spec { name: "A6^4", comps: rep(A(6), 4), glue: cyclic(&[1], &[2, 1, 6], &[]), g1: 2, g2: 12 },
        Spec {
            name: "A5^4D4",
            comps: vec![A(5), A(5), A(5), A(5), D(4)],
            glue: {
                let mut g = cyclic(&[2], &[0, 2, 4], &[0]);
                g.extend([vec![3, 3, 0, 0, 1], vec![3, 0, 3, 0, 2], vec![3, 0, 0, 3, 3]]);
                g
            },
            g1: 2,
            g2: 24,
        },
        Spec {
            name: "D4^6",
            comps: rep(D(4), 6),
            glue: {
                // The hexacode is closed under the triality cycle 1 -> 2 -> 3 -> 1.
                let mut g = vec![vec![1; 6]];
                g.extend(cyclic(&[0], &[0, 2, 3, 3, 2], &[]));
                let tri = |w: &Vec<usize>| w.iter().map(|&c| if c == 0 { 0 } else { c % 3 + 1 }).collect::<Vec<_>>();
                let more: Vec<Vec<usize>> = g.iter().map(tri).collect();
                g.extend(more);
                g
            },
            g1: 3,
            g2: 720,
        },
        Spec { name: "A4^6", comps: rep(A(4), 6), glue: cyclic(&[1], &[0, 1, 4, 4, 1], &[]), g1: 2, g2: 120 },
        Spec { name: "A3^8", comps: rep(A(3), 8), glue: cyclic(&[3], &[2, 0, 0, 1, 0, 1, 1], &[]), g1: 2, g2: 1344 },
        Spec {
            name: "A2^12",
            comps: rep(A(2), 12),
            glue: cyclic(&[2], &[1, 1, 2, 1, 1, 1, 2, 2, 2, 1, 2], &[]),
            g1: 2,
            g2: 95_040,
        },
        Spec { name: "A1^24", comps: rep(A(1), 24), glue: cyclic(&[1], &GOLAY_QR, &[]), g1: 1, g2: 244_823_040 },
    ]
}

/// Cyclic part of a generator of the extended Golay code (length 23).
const GOLAY_QR: [usize; 23] = [0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 1, 0, 1, 1, 1, 1];

const CO0_ORDER: &str = "8315553613086720000";

/// Z-span of rational rows, as an integer basis over a common denominator.
fn span_gram(rows: &[Vec<BigRational>], gram: &dyn Fn(&[BigRational], &[BigRational]) -> BigRational) -> QuadForm {
    let mut den = BigInt::one();
    for r in rows {
        for x in r {
            den = den.lcm(x.denom());
        }
    }
    let ints: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| r.iter().map(|x| (x * BigRational::from_integer(den.clone())).to_integer()).collect())
        .collect();
    let basis: Vec<Vec<BigRational>> = lattice_basis(&ints)
        .into_iter()
        .map(|r| r.into_iter().map(|x| BigRational::new(x, den.clone())).collect())
        .collect();
    let k = basis.len();
    let mut g = Vec::with_capacity(k * k);
    for a in &basis {
        for b in &basis {
            let v = gram(a, b);
            assert!(v.is_integer(), "non-integral inner product {v}");
            g.push(i64::try_from(v.to_integer()).unwrap());
        }
    }
    QuadForm::new(k, g).unwrap().lll().0
}

fn glued(spec: &Spec) -> QuadForm {
    let offsets: Vec<usize> = spec
        .comps
        .iter()
        .scan(0, |s, c| {
            let o = *s;
            *s += c.rank();
            Some(o)
        })
        .collect();
    let dim: usize = spec.comps.iter().map(|c| c.rank()).sum();
    let mut cartan = vec![vec![0i64; dim]; dim];
    for (c, &o) in spec.comps.iter().zip(&offsets) {
        for (i, row) in c.cartan().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                cartan[o + i][o + j] = v;
            }
        }
    }
    let mut rows: Vec<Vec<BigRational>> = (0..dim)
        .map(|i| (0..dim).map(|j| BigRational::from_integer(BigInt::from((i == j) as i64))).collect())
        .collect();
    for word in &spec.glue {
        assert_eq!(word.len(), spec.comps.len(), "{}", spec.name);
        let mut v = vec![BigRational::zero(); dim];
        for ((c, &o), &cls) in spec.comps.iter().zip(&offsets).zip(word) {
            for (i, x) in c.glue(cls).into_iter().enumerate() {
                v[o + i] = x;
            }
        }
        rows.push(v);
    }
    let gram = |a: &[BigRational], b: &[BigRational]| -> BigRational {
        let mut s = BigRational::zero();
        for i in 0..dim {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..dim {
                if cartan[i][j] != 0 && !b[j].is_zero() {
                    s += &a[i] * &b[j] * BigInt::from(cartan[i][j]);
                }
            }
        }
        s
    };
    span_gram(&rows, &gram)
}

/// Extended Golay code: span of the 23 cyclic shifts of the generator.
fn golay_code() -> Vec<Vec<u8>> {
    let gens: Vec<Vec<u8>> =
        cyclic(&[1], &GOLAY_QR, &[]).into_iter().map(|w| w.iter().map(|&x| x as u8).collect()).collect();
    let mut basis: Vec<Vec<u8>> = Vec::new();
    for g in gens {
        let mut v = g;
        for b in &basis {
            let p = b.iter().position(|&x| x == 1).unwrap();
            if v[p] == 1 {
                v.iter_mut().zip(b).for_each(|(x, y)| *x ^= y);
            }
        }
        if let Some(p) = v.iter().position(|&x| x == 1) {
            for b in basis.iter_mut() {
                if b[p] == 1 {
                    b.iter_mut().zip(&v).for_each(|(x, y)| *x ^= y);
                }
            }
            basis.push(v);
        }
    }
    assert_eq!(basis.len(), 12, "Golay code dimension");
    (0u32..1 << 12)
        .map(|mask| {
            let mut w = vec![0u8; 24];
            for (i, b) in basis.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    w.iter_mut().zip(b).for_each(|(x, y)| *x ^= y);
                }
            }
            w
        })
        .collect()
}

/// Leech lattice in coordinates scaled by `sqrt 8`: spanned by `2 c` for
/// octads `c`, `4 e_i +- 4 e_j`, and `(-3, 1^23)`.
fn leech() -> QuadForm {
    let code = golay_code();
    let min_weight = code.iter().map(|w| w.iter().filter(|&&x| x == 1).count()).filter(|&k| k > 0).min().unwrap();
    assert_eq!(min_weight, 8, "Golay minimum weight");
    let q = |k: i64| BigRational::from_integer(BigInt::from(k));
    let mut rows: Vec<Vec<BigRational>> = code
        .iter()
        .filter(|w| w.iter().filter(|&&x| x == 1).count() == 8)
        .map(|w| w.iter().map(|&x| q(2 * x as i64)).collect())
        .collect();
    for i in 0..24 {
        for j in i + 1..24 {
            for s in [4, -4] {
                let mut v = vec![q(0); 24];
                v[i] = q(4);
                v[j] = q(s);
                rows.push(v);
            }
        }
    }
    let mut v = vec![q(1); 24];
    v[0] = q(-3);
    rows.push(v);
    let gram = |a: &[BigRational], b: &[BigRational]| -> BigRational {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<BigRational>() / BigInt::from(8)
    };
    span_gram(&rows, &gram)
}

fn check(name: &str, form: &QuadForm, roots: u64) {
    assert!(form.det().is_one(), "{name}: det {}", form.det());
    assert!(form.is_even(), "{name}: odd");
    let r = root_vectors(form).unwrap();
    assert_eq!((r.n1, r.n2), (0, roots), "{name}: roots");
}

fn write(path: &str, records: &[serde_json::Value]) {
    let text = serde_json::to_string(records).unwrap();
    // One record per line keeps the files diffable.
    let text = text.replace("},{", "},\n{");
    std::fs::write(path, text + "\n").unwrap();
    eprintln!("wrote {path}");
}

fn record(name: &str, form: &QuadForm, aut: serde_json::Value) -> serde_json::Value {
    json!({"name": name, "dim": form.dim(), "gram": form.gram(), "aut_order": aut})
}

fn niemeier() -> Vec<serde_json::Value> {
    let mut records = Vec::new();
    let mut mass = BigRational::zero();
    for spec in specs() {
        let form = glued(&spec);
        assert_eq!(form.dim(), 24, "{}", spec.name);
        let roots: u64 = spec.comps.iter().map(|c| c.roots()).sum();
        check(spec.name, &form, roots);
        let aut: BigInt = spec.comps.iter().map(|c| c.weyl_order()).product::<BigInt>()
            * BigInt::from(spec.g1)
            * BigInt::from(spec.g2);
        mass += BigRational::new(BigInt::one(), aut.clone());
        eprintln!("{:10} roots {:4} |Aut| {}", spec.name, roots, aut);
        records.push(record(spec.name, &form, json!(aut.to_string())));
    }
    let form = leech();
    check("Leech", &form, 0);
    let aut: BigInt = CO0_ORDER.parse().unwrap();
    mass += BigRational::new(BigInt::one(), aut.clone());
    records.push(record("Leech", &form, json!(aut.to_string())));
    let expected = even_unimodular_mass(24).unwrap();
    assert_eq!(mass, expected, "mass formula");
    assert!(mass.is_positive());
    eprintln!("mass {mass} matches");
    records
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data".to_string());
    let e8 = root_lattices::e8();
    let e8i1 = e8.direct_sum(&QuadForm::identity(1));

    let mut uni: Vec<_> = (1..=9).map(|n| record(&format!("I{n}"), &QuadForm::identity(n), json!("compute"))).collect();
    uni.push(record("E8", &e8, json!("compute")));
    uni.push(record("E8+I1", &e8i1, json!("compute")));
    write(&format!("{dir}/unimodular.json"), &uni);

    let odd9 = vec![
        record("I9", &QuadForm::identity(9), json!(185_794_560u64)),
        record("E8+I1", &e8i1, json!(1_393_459_200u64)),
    ];
    write(&format!("{dir}/odd9.json"), &odd9);

    let e8e8 = e8.direct_sum(&e8);
    check("E8+E8", &e8e8, 480);
    let d16 = glued(&Spec { name: "D16+", comps: vec![Comp::D(16)], glue: vec![vec![1]], g1: 1, g2: 1 });
    check("D16+", &d16, 480);
    let aut_e8 = BigInt::from(696_729_600u64);
    let aut_e8e8 = BigInt::from(2) * &aut_e8 * &aut_e8;
    let aut_d16 = Comp::D(16).weyl_order();
    assert_eq!(
        BigRational::new(BigInt::one(), aut_e8e8.clone()) + BigRational::new(BigInt::one(), aut_d16.clone()),
        even_unimodular_mass(16).unwrap(),
        "dim 16 mass"
    );
    let dim16 = vec![
        record("E8+E8", &e8e8, json!(aut_e8e8.to_string().parse::<u64>().unwrap())),
        record("D16+", &d16, json!(aut_d16.to_string().parse::<u64>().unwrap())),
    ];
    write(&format!("{dir}/dim16.json"), &dim16);

    write(&format!("{dir}/niemeier.json"), &niemeier());
}
