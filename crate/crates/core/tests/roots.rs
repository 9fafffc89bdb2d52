mod common;

use common::*;
use proptest::prelude::*;
use siegel::forms::root_lattices;
use siegel::isometry::is_isometric;
use siegel::roots::{orthogonal_root_basis, root_vectors, verify_root_bounds};
use siegel::QuadForm;

#[test]
fn identity_root_counts() {
    for m in 2..=8u64 {
        let r = root_vectors(&QuadForm::identity(m as usize)).unwrap();
        assert_eq!((r.n1, r.n2), (2 * m, 2 * m * (m - 1)));
        assert!(r.complement.is_none());
        assert_eq!(r.unit_basis.len(), m as usize);
    }
}

#[test]
fn e8_has_no_units() {
    let r = root_vectors(&root_lattices::e8()).unwrap();
    assert_eq!((r.n1, r.n2), (0, 240));
    assert_eq!(r.complement_basis.len(), 8);
}

#[test]
fn leech_is_rootless() {
    let r = root_vectors(&form("niemeier.json#Leech")).unwrap();
    assert_eq!((r.n1, r.n2), (0, 0));
    assert!(orthogonal_root_basis(&form("niemeier.json#Leech")).unwrap().roots.is_empty());
}

#[test]
fn i1_plus_e8_splits_off_e8() {
    let f = QuadForm::identity(1).direct_sum(&root_lattices::e8());
    let r = root_vectors(&f).unwrap();
    assert_eq!(r.unit_basis.len(), 1);
    let c = r.complement.expect("nonzero complement");
    assert!(is_isometric(&c, &root_lattices::e8(), 1_000_000_000).unwrap().is_some());
}

/// Largest set of pairwise orthogonal roots, by exhaustive search.
fn max_orthogonal_roots(form: &QuadForm) -> usize {
    let mut roots = brute_vectors(form, 2);
    roots.retain(|x| x.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0));
    fn grow(form: &QuadForm, roots: &[Vec<i64>], start: usize, chosen: &mut Vec<usize>) -> usize {
        let mut best = chosen.len();
        for i in start..roots.len() {
            if chosen.iter().all(|&j| form.inner(&roots[i], &roots[j]) == 0) {
                chosen.push(i);
                best = best.max(grow(form, roots, i + 1, chosen));
                chosen.pop();
            }
        }
        best
    }
    grow(form, &roots, 0, &mut Vec::new())
}

#[test]
fn orthogonal_root_sets() {
    let d4 = root_lattices::d(4);
    assert_eq!(max_orthogonal_roots(&d4), 4);
    let o = orthogonal_root_basis(&d4).unwrap();
    assert_eq!(o.roots.len(), 4);
    assert!(o.spans);
    let e8f = root_lattices::e8();
    let e8 = orthogonal_root_basis(&e8f).unwrap();
    // Eight orthogonal vectors already span, so the search is maximal.
    assert_eq!(e8.roots.len(), 8);
    for (f, set) in [(&d4, &o.roots), (&e8f, &e8.roots)] {
        for (i, x) in set.iter().enumerate() {
            assert_eq!(f.norm(x), 2);
            for y in &set[i + 1..] {
                assert_eq!(f.inner(x, y), 0);
            }
        }
    }
}

#[test]
fn i8_and_e8_bounds() {
    let b = verify_root_bounds(&QuadForm::identity(8)).unwrap();
    assert_eq!((b.n1, b.n2), (16, 112));
    assert!(b.all_ok());
    let b = verify_root_bounds(&root_lattices::e8()).unwrap();
    assert_eq!((b.n1, b.n2), (0, 240));
    assert!(b.all_ok());
}

#[test]
fn d4_meets_the_orthogonal_basis_bound() {
    let b = verify_root_bounds(&root_lattices::d(4)).unwrap();
    assert_eq!(b.orthogonal_case_ok, Some(true));
}

#[test]
fn unit_vectors_are_orthogonal_and_roots_never_mix() {
    let mut forms = corpus();
    forms.push(QuadForm::identity(3).direct_sum(&root_lattices::d(4)));
    forms.push(QuadForm::identity(2).direct_sum(&root_lattices::e(6)));
    for f in forms {
        let r = root_vectors(&f).unwrap();
        for (i, x) in r.unit_basis.iter().enumerate() {
            for y in &r.unit_basis[i + 1..] {
                assert_eq!(f.inner(x, y), 0);
            }
        }
        assert_eq!(r.mixed_roots, 0, "{:?}", f.gram());
        assert_eq!(r.roots_in_span + r.roots_in_complement, r.n2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_hold_on_random_conjugates(idx in 0usize..12, seed in any::<u64>()) {
        let f = conjugate(&corpus()[idx], seed);
        let b = verify_root_bounds(&f).unwrap();
        prop_assert!(b.all_ok());
        let r = root_vectors(&f).unwrap();
        let plain = root_vectors(&corpus()[idx]).unwrap();
        prop_assert_eq!((r.n1, r.n2), (plain.n1, plain.n2));
    }
}
