mod common;

use common::*;
use proptest::prelude::*;
use siegel::enumeration::{
    rep_count, rep_count_with_budget, rep_counts_up_to, rep_matrices, short_vectors, vectors_of_norm,
    vectors_of_norm_with, EnumOptions,
};
use siegel::forms::root_lattices;
use siegel::{Error, QuadForm};

#[test]
fn units_of_i3() {
    let v = vectors_of_norm(&QuadForm::identity(3), 1).unwrap();
    assert_eq!(v.len(), 6);
    assert!(v.iter().all(|x| x.iter().map(|c| c.abs()).sum::<i64>() == 1));
}

#[test]
fn e8_roots_match_coordinate_model() {
    assert_eq!(e8_coordinate_count(2), 240);
    assert_eq!(vectors_of_norm(&root_lattices::e8(), 2).unwrap().len(), 240);
}

#[test]
fn e8_norm_four_matches_coordinate_model_and_sigma3() {
    let n = rep_count(&root_lattices::e8(), 4).unwrap();
    assert_eq!(n as usize, e8_coordinate_count(4));
    assert_eq!(n, 240 * sigma(3, 2));
}

#[test]
fn seven_is_not_a_sum_of_three_squares() {
    let i3 = QuadForm::identity(3);
    assert!(vectors_of_norm(&i3, 7).unwrap().is_empty());
    assert_eq!(brute_count(&i3, 7, 2), 0);
}

#[test]
fn small_counts_of_i4() {
    let i4 = QuadForm::identity(4);
    assert_eq!(rep_count(&i4, 1).unwrap(), 8);
    assert_eq!(rep_count(&i4, 2).unwrap(), 24);
    assert_eq!(brute_count(&i4, 2, 1), 24);
}

#[test]
fn counts_match_box_search_on_corpus() {
    for f in corpus().into_iter().filter(|f| f.dim() <= 5) {
        for n in 1..=6 {
            let mut fast = vectors_of_norm(&f, n).unwrap();
            let mut slow = brute_vectors(&f, n);
            fast.sort();
            slow.sort();
            assert_eq!(fast, slow, "{:?} N = {n}", f.gram());
        }
    }
}

#[test]
fn counts_up_to_agree_with_single_norms() {
    let f = root_lattices::d(4);
    let all = rep_counts_up_to(&f, 8).unwrap();
    for n in 1..=8 {
        assert_eq!(all[n as usize], rep_count(&f, n).unwrap());
    }
    assert_eq!(short_vectors(&f, 8).unwrap().len() as u64, all[1..].iter().sum::<u64>());
}

#[test]
fn signed_permutations_represent_i2() {
    let sols = rep_matrices(&QuadForm::identity(2), &[vec![1, 0], vec![0, 1]]).unwrap();
    // Brute force over entries in {-1, 0, 1}.
    let brute = box_vectors(4, 1)
        .into_iter()
        .filter(|x| {
            let (a, b, c, d) = (x[0], x[1], x[2], x[3]);
            a * a + c * c == 1 && b * b + d * d == 1 && a * b + c * d == 0
        })
        .count();
    assert_eq!(sols.len(), 8);
    assert_eq!(brute, 8);
}

#[test]
fn one_by_one_target_is_rep_count() {
    let e8 = root_lattices::e8();
    assert_eq!(rep_matrices(&e8, &[vec![2]]).unwrap().len(), 240);
}

#[test]
fn full_rank_target_counts_automorphisms() {
    let a2 = QuadForm::from_rows(&[vec![2, 1], vec![1, 2]]).unwrap();
    assert_eq!(rep_matrices(&a2, &a2.rows()).unwrap().len(), 12);
}

#[test]
fn rep_matrices_agree_with_rep_count_on_corpus() {
    for f in corpus() {
        for n in 1..=20 {
            if f.dim() >= 6 && n > 6 {
                continue;
            }
            let a = rep_matrices(&f, &[vec![n]]).unwrap().len() as u64;
            assert_eq!(a, rep_count(&f, n).unwrap(), "{:?} N = {n}", f.gram());
        }
    }
}

#[test]
fn budget_exhaustion_is_reported() {
    let r = rep_count_with_budget(&QuadForm::identity(8), 8, 100);
    assert!(matches!(r, Err(Error::BudgetExceeded { budget: 100 })));
}

#[test]
fn lll_preprocessing_gives_the_same_vectors() {
    let f = conjugate(&root_lattices::d(5), 3);
    let plain = vectors_of_norm_with(&f, 4, EnumOptions::default()).unwrap();
    let reduced = vectors_of_norm_with(&f, 4, EnumOptions { lll: true, ..Default::default() }).unwrap();
    assert_eq!(plain, reduced);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solutions_are_closed_under_negation(idx in 0usize..12, n in 1i64..8) {
        let f = &corpus()[idx];
        let v = vectors_of_norm(f, n).unwrap();
        for x in &v {
            let neg: Vec<i64> = x.iter().map(|c| -c).collect();
            prop_assert!(v.binary_search(&neg).is_ok());
        }
    }

    #[test]
    fn counts_are_basis_invariant(idx in 0usize..12, n in 1i64..6, seed in any::<u64>()) {
        let f = &corpus()[idx];
        let g = conjugate(f, seed);
        prop_assert_eq!(rep_count(f, n).unwrap(), rep_count(&g, n).unwrap());
    }

    #[test]
    fn raising_the_budget_never_changes_an_answer(idx in 0usize..12, n in 1i64..6, extra in 1u64..1000) {
        let f = &corpus()[idx];
        let base = 1_000_000;
        let a = rep_count_with_budget(f, n, base);
        let b = rep_count_with_budget(f, n, base * extra);
        if let Ok(a) = a {
            prop_assert_eq!(a, b.unwrap());
        }
    }
}
