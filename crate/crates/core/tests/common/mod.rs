#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siegel::forms::{load_form_ref, load_genus, random_unimodular, root_lattices, GenusData};
use siegel::QuadForm;

pub fn data(file: &str) -> String {
    format!("{}/../../data/{file}", env!("CARGO_MANIFEST_DIR"))
}

pub fn form(reference: &str) -> QuadForm {
    load_form_ref(&data(reference)).unwrap().form
}

pub fn genus(file: &str) -> GenusData {
    let mut g = load_genus(data(file)).unwrap();
    g.resolve_aut_orders(1_000_000_000).unwrap();
    g
}

pub fn one_class(form: QuadForm) -> GenusData {
    let mut g = GenusData::single("A", form, None);
    g.resolve_aut_orders(1_000_000_000).unwrap();
    g
}

/// Small test corpus: identity forms, root lattices and a few odd shapes.
pub fn corpus() -> Vec<QuadForm> {
    vec![
        QuadForm::identity(2),
        QuadForm::identity(3),
        QuadForm::identity(4),
        QuadForm::identity(5),
        QuadForm::from_rows(&[vec![2, 1], vec![1, 2]]).unwrap(),
        QuadForm::diagonal(&[1, 2, 3]).unwrap(),
        QuadForm::from_rows(&[vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 4]]).unwrap(),
        root_lattices::a(3),
        root_lattices::d(4),
        root_lattices::d(5),
        root_lattices::e(6),
        root_lattices::e8(),
    ]
}

pub fn unimodular(m: usize, bound: i64, seed: u64) -> Vec<i64> {
    random_unimodular(m, bound, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn conjugate(form: &QuadForm, seed: u64) -> QuadForm {
    form.pullback(&unimodular(form.dim(), 3, seed), form.dim()).unwrap()
}

/// All integer vectors in the box `|x_i| <= b`.
pub fn box_vectors(m: usize, b: i64) -> Vec<Vec<i64>> {
    let side = (2 * b + 1) as usize;
    (0..side.pow(m as u32))
        .map(|mut idx| {
            (0..m)
                .map(|_| {
                    let d = (idx % side) as i64 - b;
                    idx /= side;
                    d
                })
                .collect()
        })
        .collect()
}

pub fn brute_count(form: &QuadForm, n: i64, b: i64) -> usize {
    box_vectors(form.dim(), b).iter().filter(|x| form.norm(x) == n).count()
}

pub fn sigma(k: u32, n: u64) -> u64 {
    (1..=n).filter(|d| n % d == 0).map(|d| d.pow(k)).sum()
}

/// Coordinate bound `|x_i| <= sqrt(N (A^{-1})_{ii})` valid for every vector of norm `<= N`.
pub fn box_bound(form: &QuadForm, n: i64) -> i64 {
    use num_traits::ToPrimitive;
    let inv = form.inverse();
    (0..form.dim()).map(|i| (n as f64 * inv[i][i].to_f64().unwrap()).sqrt().floor() as i64).max().unwrap()
}

pub fn brute_vectors(form: &QuadForm, n: i64) -> Vec<Vec<i64>> {
    box_vectors(form.dim(), box_bound(form, n)).into_iter().filter(|x| form.norm(x) == n).collect()
}

/// Norm-`n` vectors of E8 in the even coordinate system: integer or
/// all-half-integer coordinates with even coordinate sum. Returned doubled.
pub fn e8_coordinate_count(n: i64) -> usize {
    let b = (2.0 * (n as f64).sqrt()).floor() as i64;
    box_vectors(8, b)
        .into_iter()
        .filter(|v| {
            let parity = v[0].rem_euclid(2);
            v.iter().all(|x| x.rem_euclid(2) == parity) && (v.iter().sum::<i64>() / 2).rem_euclid(2) == 0
        })
        .filter(|v| v.iter().map(|x| x * x).sum::<i64>() == 4 * n)
        .count()
}
