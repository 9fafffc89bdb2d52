mod common;

use common::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use siegel::enumeration::vectors_of_norm;
use siegel::forms::root_lattices;
use siegel::harmonics::{
    basis_sums, gegenbauer, harmonic_basis, harmonic_dim, harmonic_theta, harmonic_theta_at, hecke_eigen_check,
    laplacian_apply, nonzero_plane_harmonic, spectral_pair_sum, weyl_sum, zonal, Harmonic, Poly,
};
use siegel::{Error, QuadForm};

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

fn x(n: usize, i: usize) -> Poly {
    Poly::var(n, i)
}

#[test]
fn laplacian_examples() {
    let i2 = QuadForm::identity(2);
    let p = x(2, 0).mul(&x(2, 0)).add(&x(2, 1).mul(&x(2, 1)).scale(&rat(-1, 1)));
    assert!(laplacian_apply(&i2, &p).is_zero());
    let sq = x(2, 0).mul(&x(2, 0));
    assert_eq!(laplacian_apply(&i2, &sq), Poly::constant(2, rat(2, 1)));
    let a2 = QuadForm::from_rows(&[vec![2, 1], vec![1, 2]]).unwrap();
    assert_eq!(laplacian_apply(&a2, &sq), Poly::constant(2, rat(4, 3)));
}

#[test]
fn basis_dimensions() {
    for f in corpus() {
        assert_eq!(harmonic_basis(&f, 0).dim, 1);
    }
    assert_eq!(harmonic_basis(&QuadForm::identity(3), 2).dim, 5);
    assert_eq!(harmonic_basis(&QuadForm::identity(2), 1).dim, 2);
}

#[test]
fn bases_are_harmonic_up_to_degree_ten() {
    for f in corpus() {
        let kmax = if f.dim() <= 3 {
            10
        } else if f.dim() <= 5 {
            6
        } else {
            3
        };
        for k in 0..=kmax {
            let b = harmonic_basis(&f, k);
            assert_eq!(b.dim as u64, harmonic_dim(f.dim(), k), "{:?} k = {k}", f.gram());
            for i in 0..b.dim {
                assert!(laplacian_apply(&f, &b.to_x(i)).is_zero());
            }
        }
    }
}

/// Legendre polynomials by Bonnet's recurrence.
fn legendre(k: usize, t: f64) -> f64 {
    let (mut a, mut b) = (1.0, t);
    if k == 0 {
        return a;
    }
    for n in 1..k {
        let c = ((2 * n + 1) as f64 * t * b - n as f64 * a) / (n + 1) as f64;
        a = b;
        b = c;
    }
    b
}

#[test]
fn zonal_values() {
    let i3 = QuadForm::identity(3);
    let e = [0.0, 0.0, 2.0];
    for k in 0..8 {
        assert!((zonal(&i3, k, &e, &e).unwrap() - 1.0).abs() < 1e-14);
    }
    assert!((zonal(&i3, 2, &e, &[2.0, 0.0, 0.0]).unwrap() + 0.5).abs() < 1e-14);
    for k in 0..12 {
        for t in [-0.9, -0.3, 0.1, 0.77] {
            assert!((gegenbauer(3, k, t) - legendre(k, t)).abs() < 1e-12);
        }
    }
}

#[test]
fn zonal_is_symmetric_under_inverse_automorphisms() {
    let f = root_lattices::d(4);
    let g = siegel::isometry::automorphism_group(&f, 1_000_000_000).unwrap();
    let e = [1.0, 0.0, 0.0, 0.0];
    for u in &g.generators {
        let inv = u.inverse().unwrap();
        let ue: Vec<f64> = u.apply(&[1, 0, 0, 0]).iter().map(|&c| c as f64).collect();
        let uie: Vec<f64> = inv.apply(&[1, 0, 0, 0]).iter().map(|&c| c as f64).collect();
        for k in 0..6 {
            let a = zonal(&f, k, &e, &ue).unwrap();
            let b = zonal(&f, k, &e, &uie).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn odd_degree_sums_vanish() {
    let f = root_lattices::d(4);
    let b = harmonic_basis(&f, 3);
    for n in 1..=6 {
        let pts = vectors_of_norm(&f, n).unwrap();
        assert!(basis_sums(&b, &pts).iter().all(Zero::is_zero));
    }
}

#[test]
fn e8_degree_two_sums_vanish() {
    let e8 = root_lattices::e8();
    let b = harmonic_basis(&e8, 2);
    for n in 1..=10 {
        let pts = vectors_of_norm(&e8, n).unwrap();
        assert!(basis_sums(&b, &pts).iter().all(Zero::is_zero), "N = {n}");
    }
}

#[test]
fn full_and_orbit_forms_agree_on_i4() {
    let g = one_class(QuadForm::identity(4));
    let b = harmonic_basis(&g.classes[0].form, 4);
    for i in 0..b.dim {
        let w = weyl_sum(&g, &[b.harmonic(i)], 2, 1_000_000_000).unwrap();
        assert_eq!(w.full, w.orbit);
    }
}

#[test]
fn theta_coefficients_are_weyl_sums() {
    let f = QuadForm::identity(4);
    let g = one_class(f.clone());
    let phi = nonzero_plane_harmonic(&f, 4, 1).unwrap();
    let theta = harmonic_theta(&f, &phi, 8).unwrap();
    for n in 1..=8 {
        let w = weyl_sum(&g, std::slice::from_ref(&phi), n, 1_000_000_000).unwrap();
        assert_eq!(theta.get(n).unwrap(), &w.full);
    }
}

#[test]
fn pair_sum_vanishes_on_dim16_constant_term() {
    let g = genus("dim16.json");
    // Norm 4 already has about 62000 vectors per class, so stay at norm 2.
    for n in 1..=2 {
        assert_eq!(spectral_pair_sum(&g, 0, n).unwrap(), 0.0);
    }
}

/// `E[u^a]` over the uniform measure on the unit sphere in `R^m`.
fn sphere_moment(a: &[u32]) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if a.iter().any(|e| e % 2 == 1) {
        return 0.0;
    }
    let m = a.len() as f64;
    let s: f64 = a.iter().map(|&e| e as f64).sum();
    let ln = a.iter().map(|&e| ln_gamma((e as f64 + 1.0) / 2.0)).sum::<f64>() - ln_gamma((s + m) / 2.0)
        + ln_gamma(m / 2.0)
        - m / 2.0 * std::f64::consts::PI.ln();
    ln.exp()
}

fn poly_inner(p: &Poly, q: &Poly) -> f64 {
    let mut s = 0.0;
    for (ea, ca) in &p.terms {
        for (eb, cb) in &q.terms {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
            s += ca.to_f64().unwrap() * cb.to_f64().unwrap() * sphere_moment(&e);
        }
    }
    s
}

#[test]
fn pair_sum_matches_gram_schmidt_oracle() {
    let i3 = QuadForm::identity(3);
    // Degree 2 sums vanish on I3 by cubic symmetry; degree 4 does not.
    let b = harmonic_basis(&i3, 4);
    // Orthonormalize the basis in L^2 of the unit sphere.
    let polys: Vec<Poly> = (0..b.dim).map(|i| b.to_x(i)).collect();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for i in 0..polys.len() {
        let mut c = vec![0.0; polys.len()];
        c[i] = 1.0;
        for o in &ortho {
            let proj: f64 = (0..polys.len())
                .map(|a| (0..polys.len()).map(|b| o[a] * c[b] * poly_inner(&polys[a], &polys[b])).sum::<f64>())
                .sum();
            for a in 0..c.len() {
                c[a] -= proj * o[a];
            }
        }
        let norm: f64 = (0..polys.len())
            .map(|a| (0..polys.len()).map(|b| c[a] * c[b] * poly_inner(&polys[a], &polys[b])).sum::<f64>())
            .sum();
        ortho.push(c.iter().map(|v| v / norm.sqrt()).collect());
    }
    let n = 2;
    let pts = vectors_of_norm(&i3, n).unwrap();
    let scale = (n as f64).sqrt();
    let total: f64 = ortho
        .iter()
        .map(|c| {
            let w: f64 = pts
                .iter()
                .map(|p| {
                    let u: Vec<f64> = p.iter().map(|&v| v as f64 / scale).collect();
                    c.iter().zip(&polys).map(|(ci, q)| ci * q.eval_f64(&u)).sum::<f64>()
                })
                .sum();
            w * w
        })
        .sum();
    let fast = spectral_pair_sum(&one_class(i3), 4, n).unwrap();
    assert!((fast / total - 1.0).abs() < 1e-8, "{fast} vs {total}");
}

/// Mean value property: averaging a harmonic over the stabilizer of `e`
/// gives `q(e) p_{k,e}(x)`.
#[test]
fn mean_value_over_stabilizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for f in [QuadForm::identity(3), root_lattices::d(4)] {
        let m = f.dim();
        let t = f.orthonormal_frame();
        let to_x = |u: &[f64]| -> Vec<f64> { (0..m).map(|i| (0..m).map(|j| t[i * m + j] * u[j]).sum()).collect() };
        let b = harmonic_basis(&f, 4);
        let coeffs: Vec<f64> = (0..b.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let q = |x: &[f64]| -> f64 { (0..b.dim).map(|i| coeffs[i] * b.harmonic(i).eval_f64(x)).sum() };
        // Frame coordinates: e is the first axis, x a random unit vector.
        let eu: Vec<f64> = (0..m).map(|i| (i == 0) as u8 as f64).collect();
        let mut xu: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = xu.iter().map(|v| v * v).sum::<f64>().sqrt();
        xu.iter_mut().for_each(|v| *v /= len);
        let samples = 4000;
        let mut values = Vec::with_capacity(samples);
        for _ in 0..samples {
            // Haar rotation of the last m - 1 axes by Gram-Schmidt.
            let mut g: Vec<Vec<f64>> = Vec::new();
            while g.len() < m - 1 {
                let mut v: Vec<f64> = (0..m - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
                for w in &g {
                    let d: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(w).for_each(|(a, b)| *a -= d * b);
                }
                let l = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                g.push(v.into_iter().map(|a| a / l).collect());
            }
            let mut y = xu.clone();
            for i in 1..m {
                y[i] = (1..m).map(|j| g[i - 1][j - 1] * xu[j]).sum();
            }
            values.push(q(&to_x(&y)));
        }
        let mean = values.iter().sum::<f64>() / samples as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64).sqrt();
        let e = to_x(&eu);
        let xx = to_x(&xu);
        let expected = q(&e) * zonal(&f, 4, &e, &xx).unwrap();
        assert!((mean - expected).abs() <= 3.0 * sd / (samples as f64).sqrt() + 1e-12, "{mean} vs {expected}");
    }
}

#[test]
fn e8_theta_is_eisenstein() {
    let e8 = root_lattices::e8();
    let one = Harmonic::constant(&e8);
    let theta = harmonic_theta(&e8, &one, 20).unwrap();
    for n in 1..=10u64 {
        assert_eq!(theta.get(2 * n as i64).unwrap(), &BigRational::from_integer((240 * sigma(3, n)).into()));
        assert!(theta.get(2 * n as i64 - 1).unwrap().is_zero());
    }
    let h = hecke_eigen_check(&theta).unwrap();
    assert!(!h.cuspidal);
    assert!(h.multiplicative_ok);
}

/// `tau(1..=n)` from `q prod (1 - q^k)^24`.
pub fn ramanujan_tau(n: usize) -> Vec<i128> {
    let mut c = vec![0i128; n + 1];
    c[0] = 1;
    for k in 1..=n {
        for _ in 0..24 {
            for i in (k..=n).rev() {
                c[i] -= c[i - k];
            }
        }
    }
    let mut tau = vec![0i128; n + 1];
    tau[1..].copy_from_slice(&c[..n]);
    tau
}

#[test]
fn degree_eight_theta_is_delta() {
    let e8 = root_lattices::e8();
    let phi = nonzero_plane_harmonic(&e8, 8, 2).unwrap();
    let theta = harmonic_theta(&e8, &phi, 20).unwrap();
    let tau = ramanujan_tau(10);
    let a2 = theta.get(2).unwrap().clone();
    for n in 1..=10usize {
        let expected = &a2 * BigInt::from(tau[n]);
        assert_eq!(theta.get(2 * n as i64).unwrap(), &expected, "n = {n}");
    }
    let h = hecke_eigen_check(&theta).unwrap();
    assert!(h.cuspidal && h.ramanujan_ok);
}

#[test]
fn odd_degree_theta_is_zero() {
    let d4 = root_lattices::d(4);
    let b = harmonic_basis(&d4, 3);
    for i in 0..b.dim {
        let t = harmonic_theta(&d4, &b.harmonic(i), 8).unwrap();
        assert!(t.coeffs.values().all(Zero::is_zero));
        assert!(matches!(hecke_eigen_check(&t), Err(Error::AllZeroSeries)));
    }
}

#[test]
fn sparse_theta_uses_requested_norms() {
    let e8 = root_lattices::e8();
    let phi = nonzero_plane_harmonic(&e8, 8, 2).unwrap();
    let sparse = harmonic_theta_at(&e8, &phi, &[2, 6]).unwrap();
    let full = harmonic_theta(&e8, &phi, 6).unwrap();
    assert_eq!(sparse.get(6), full.get(6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pair_sums_are_nonnegative(idx in 0usize..8, n in 1i64..8, k in 0usize..12) {
        let g = one_class(corpus()[idx].clone());
        prop_assert!(spectral_pair_sum(&g, k, n).unwrap() >= -1e-9);
    }

    #[test]
    fn basis_sums_are_basis_invariant_in_total(idx in 0usize..8, n in 1i64..6, seed in any::<u64>()) {
        // The pair sum depends only on the point set, not on the basis.
        let f = corpus()[idx].clone();
        let g = conjugate(&f, seed);
        let a = spectral_pair_sum(&one_class(f), 2, n).unwrap();
        let b = spectral_pair_sum(&one_class(g), 2, n).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}
