mod common;

use std::f64::consts::{E, PI};

use common::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use siegel::enumeration::rep_count;
use siegel::forms::root_lattices;
use siegel::mass::{
    archimedean_density, count_mod, cutoff_thresholds, even_unimodular_mass, ln_main_term, local_density,
    local_product, mass_probability, siegel_average, AverageMethod,
};
use siegel::QuadForm;

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// Solutions of `x^T A x = n mod q`, looping over all residues.
fn naive_count_mod(form: &QuadForm, n: i64, q: i64) -> u64 {
    let m = form.dim();
    let mut x = vec![0i64; m];
    let mut count = 0;
    loop {
        if (form.norm(&x) - n).rem_euclid(q) == 0 {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == m {
                return count;
            }
            x[i] += 1;
            if x[i] < q {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn densities_match_naive_counts() {
    let i3 = QuadForm::identity(3);
    assert_eq!(naive_count_mod(&i3, 7, 8), 0);
    assert!(local_density(&i3, 7, 2, None).unwrap().value.is_zero());

    let i4 = QuadForm::identity(4);
    let d = local_density(&i4, 1, 3, None).unwrap();
    assert_eq!(d.stabilized_at, 1);
    assert_eq!(d.value, rat(naive_count_mod(&i4, 1, 3) as i64, 27));
}

#[test]
fn archimedean_scaling() {
    for f in corpus() {
        let m = f.dim() as f64;
        let r = archimedean_density(&f, 20).unwrap() / archimedean_density(&f, 5).unwrap();
        assert!((r / 4f64.powf((m - 2.0) / 2.0) - 1.0).abs() < 1e-12);
    }
    let i4 = QuadForm::identity(4);
    for n in [1, 3, 5] {
        assert!((archimedean_density(&i4, n).unwrap() / (PI * PI * n as f64) - 1.0).abs() < 1e-12);
    }
    // Doubling the form scales det by 2^m and the density by 2^{-m/2} at fixed N.
    let two_i4 = QuadForm::diagonal(&[2, 2, 2, 2]).unwrap();
    let r = archimedean_density(&two_i4, 4).unwrap() / archimedean_density(&i4, 4).unwrap();
    assert!((r - 0.25).abs() < 1e-12);
}

#[test]
fn sigma_infinity_fits_jacobi_counts() {
    // R_{I4}(N) / prod_p sigma_p recovers pi^2 N.
    let i4 = QuadForm::identity(4);
    for n in [1i64, 3, 5] {
        let exact = rep_count(&i4, n).unwrap() as f64;
        let p = local_product(&i4, n).unwrap();
        let fitted = exact / (p.value / p.sigma_inf);
        assert!((fitted / (PI * PI * n as f64) - 1.0).abs() < 1e-3, "N = {n}");
    }
}

#[test]
fn e8_roots_by_both_methods() {
    let g = one_class(root_lattices::e8());
    let avg = siegel_average(&g, 2, AverageMethod::Both).unwrap();
    assert_eq!(avg.enumerated, Some(BigRational::from_integer(240.into())));
    assert!(avg.relative_gap.unwrap() < 1e-3);
}

#[test]
fn dim16_classes_have_equal_counts() {
    let g = genus("dim16.json");
    for n in 1..=8 {
        let a = rep_count(&g.classes[0].form, n).unwrap();
        let b = rep_count(&g.classes[1].form, n).unwrap();
        assert_eq!(a, b, "N = {n}");
        let avg = siegel_average(&g, n, AverageMethod::Enumerate).unwrap();
        assert_eq!(avg.enumerated, Some(BigRational::from_integer(a.into())));
    }
}

#[test]
fn odd_nine_average() {
    let g = genus("odd9.json");
    let avg = siegel_average(&g, 1, AverageMethod::Enumerate).unwrap();
    assert_eq!(avg.per_class, vec![18, 2]);
    let w = g.weights().unwrap();
    assert_eq!(avg.enumerated.unwrap(), &w[0] * BigInt::from(18) + &w[1] * BigInt::from(2));
}

#[test]
fn represented_probability() {
    let single = one_class(QuadForm::identity(3));
    assert_eq!(mass_probability(&single, 7).unwrap(), BigRational::zero());
    assert_eq!(mass_probability(&single, 3).unwrap(), BigRational::one());
    assert_eq!(mass_probability(&genus("odd9.json"), 1).unwrap(), BigRational::one());

    let niemeier = genus("niemeier.json");
    let w = niemeier.weights().unwrap();
    let leech = niemeier.classes.iter().position(|c| c.name == "Leech").unwrap();
    assert_eq!(mass_probability(&niemeier, 2).unwrap(), BigRational::one() - &w[leech]);
}

#[test]
fn niemeier_mass_and_orders() {
    let g = genus("niemeier.json");
    assert_eq!(g.len(), 24);
    assert_eq!(g.mass().unwrap(), even_unimodular_mass(24).unwrap());
    let dim16 = genus("dim16.json");
    assert_eq!(dim16.mass().unwrap(), even_unimodular_mass(16).unwrap());
    assert_eq!(even_unimodular_mass(8).unwrap(), rat(1, 696_729_600));
}

#[test]
fn main_term_tracks_even_unimodular_averages() {
    // Genus averages of R(2): 240, 480 and the weight-12 Eisenstein coefficient.
    let r24: BigRational = {
        let g = genus("niemeier.json");
        siegel_average(&g, 2, AverageMethod::Enumerate).unwrap().enumerated.unwrap()
    };
    assert_eq!(r24, rat(65520, 691));
    let cases = [(8u64, 240.0), (16, 480.0), (24, r24.to_f64().unwrap())];
    let mut last = f64::INFINITY;
    for (m, r) in cases {
        let dev = (ln_main_term(m, 2.0).exp() / r - 1.0).abs();
        assert!(dev <= 0.25, "m = {m}: {dev}");
        assert!(dev < last);
        last = dev;
    }
}

#[test]
fn cutoff_numbers() {
    for m in [24u64, 1000, 1_000_000] {
        assert_eq!(cutoff_thresholds(m, 0.0).unwrap().constant, 5113);
    }
    assert_eq!((PI * E).exp().floor() as u64, 5113);
    let c = cutoff_thresholds(1_000_000, 0.0).unwrap();
    assert!(c.ratio_deviation.abs() < 1e-3);
    // Independent evaluation of (1 + 4 pi e / m)^{m/2 - 1} / e^{2 pi e}.
    let m = 1e6f64;
    let direct = ((m / 2.0 - 1.0) * (4.0 * PI * E / m).ln_1p() - 2.0 * PI * E).exp() - 1.0;
    assert!((c.ratio_deviation - direct).abs() < 1e-9);
    for m in [10_000u64, 100_000] {
        let c = cutoff_thresholds(m, 0.0).unwrap();
        let mf = m as f64;
        let n = (mf / (2.0 * PI * E) + mf.ln() / (2.0 * PI * E) - 1.0).floor() as i64;
        assert_eq!(c.cutoff_norm, n);
        assert!(c.main_term_at_cutoff <= 1.0);
    }
}

#[test]
fn jacobi_four_squares() {
    let i4 = QuadForm::identity(4);
    for n in 1..=50u64 {
        let expected: u64 = 8 * (1..=n).filter(|d| n % d == 0 && d % 4 != 0).sum::<u64>();
        assert_eq!(rep_count(&i4, n as i64).unwrap(), expected, "N = {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residue_counts_match_naive_loop(idx in 0usize..8, n in 1i64..20, p in prop::sample::select(vec![2u64, 3, 5]), k in 1u32..3) {
        let f = &corpus()[idx];
        let q = p.pow(k) as i64;
        prop_assume!((q as u64).pow(f.dim() as u32) <= 200_000);
        prop_assert_eq!(count_mod(f, n, p, k).unwrap(), naive_count_mod(f, n, q).into());
    }

    #[test]
    fn represented_probability_is_in_unit_interval(n in 1i64..12) {
        let g = genus("odd9.json");
        let mu = mass_probability(&g, n).unwrap();
        prop_assert!(mu >= BigRational::zero() && mu <= BigRational::one());
    }
}
