mod common;

use num_complex::Complex;
use otoc_lab::schatten::*;
use otoc_lab::semicircle::ell_of;
use otoc_lab::Observable;
use proptest::prelude::*;

fn pm_one(n: usize) -> Observable {
    Observable::diagonal((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect())
}

#[test]
fn moment_examples() {
    let id = SingularSpectrum::new(vec![1.0f64; 7]);
    for p in [1.0, 2.0, 3.5, 10.0] {
        assert!((id.moment(NormIndex::Finite(p)) - 1.0).abs() < 1e-15);
    }
    assert_eq!(id.moment(NormIndex::Infinity), 1.0);
    let a = SingularSpectrum::new(vec![1.0, -1.0, 0.0, 0.0]);
    assert!((a.moment(NormIndex::Finite(2.0)) - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn weighted_norm_examples() {
    let a = pm_one(64);
    let v = weighted_norm(&a, WeightedNormSpec { p: NormIndex::Finite(4.0), ell: 0.04 }).unwrap();
    assert!((v - (5.0 + 0.04f64.powf(-0.25))).abs() < 1e-12);
    assert!((v - 7.2361).abs() < 1e-4);
    let id = SingularSpectrum::new(vec![1.0f64; 5]);
    for p in [NormIndex::Finite(2.0), NormIndex::Finite(7.0), NormIndex::Infinity] {
        assert!((id.weighted_norm(p, 1.0).unwrap() - 2.0).abs() < 1e-15);
    }
}

#[test]
fn norm_index_guards() {
    assert!(matches!(NormIndex::<f64>::finite(1.5), Err(NormError::IndexTooSmall(_))));
    assert!(NormIndex::<f64>::from_order(1).is_err());
    let id = SingularSpectrum::new(vec![1.0; 5]);
    assert!(matches!(id.weighted_norm(NormIndex::Infinity, 0.0), Err(NormError::NonPositiveEll(_))));
}

#[test]
fn averaged_envelope_example() {
    let n = 512;
    let a = pm_one(n);
    let spectra = [a.spectrum(), a.spectrum()];
    let r = SizeReport::from_spectra(0.01, &spectra).unwrap();
    let want = (10.0 + 0.01f64.powf(-0.25)).powi(2);
    assert!((r.s - want).abs() < 1e-10);
    assert!((r.s - 173.24).abs() < 0.01);
}

#[test]
fn envelope_through_spectral_parameters() {
    let n = 256;
    let a = pm_one(n);
    let zs = [Complex::new(0.3f64, 0.05), Complex::new(-0.3, 0.05)];
    let ell: f64 = ell_of(&zs).unwrap();
    let want = (ell.powf(-0.5) + ell.powf(-0.25)).powi(2) / n as f64;
    assert!((local_law_envelope_avg(&zs, &[&a, &a]).unwrap() - want).abs() < 1e-12);
    let iso = local_law_envelope_iso(&zs[..1], &[], n).unwrap();
    assert!((iso - 1.0 / (n as f64 * ell_of(&zs[..1]).unwrap()).sqrt()).abs() < 1e-14);
}

#[test]
fn size_report_conventions() {
    let a = pm_one(16);
    let r = SizeReport::from_spectra(0.1, &[a.spectrum()]).unwrap();
    assert_eq!(r.m, 0.0);
    let e = SizeReport::<f64>::from_spectra(0.25, &[]).unwrap();
    assert_eq!(e.m_iso, 1.0);
    assert!((e.s_iso - 2.0).abs() < 1e-15);
}

#[test]
fn otoc_envelope_examples() {
    let a = pm_one(64);
    let m = EnvelopeMoments::of(&a);
    assert!((m.second - 1.0).abs() < 1e-14);
    assert!((m.eighth_sqrt - 1.0).abs() < 1e-14);
    assert_eq!(otoc_error_envelope(0.0, 64, m, m, 0.05), 0.0);
    let (t, n, q, eps) = (2.5f64, 1024usize, 3.0f64, 0.05f64);
    let mq = EnvelopeMoments { second: 1.0, eighth_sqrt: q };
    let nf = n as f64;
    let want = (t / nf.powf(0.5 - eps)).exp() * (t.powi(4) / nf + t * q / nf);
    assert!((otoc_error_envelope(t, n, mq, mq, eps) - want).abs() < 1e-14 * want);
}

#[test]
fn otoc_envelope_for_sparse_observable() {
    // half-filled support of size 32 in N = 1024: ⟨A²⟩ = 1/32, ⟨A⁸⟩^{1/2} = (1/32)^{1/2}
    let n = 1024;
    let a = Observable::diagonal((0..n).map(|i| if i < 32 { if i % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 }).collect());
    let m = EnvelopeMoments::of(&a);
    assert!((m.second - 1.0 / 32.0).abs() < 1e-15);
    assert!((m.eighth_sqrt - (1.0f64 / 32.0).sqrt()).abs() < 1e-15);
}

#[test]
fn full_rank_envelope_gain() {
    // for flat spectra the (2k, ℓ) envelope undercuts the Hilbert–Schmidt one ⟨|A|²⟩^{k/2} / (N ℓ^{k/2})
    let n = 4096;
    let a = pm_one(n);
    let ell = 0.05;
    for k in 2..=4 {
        let spectra: Vec<_> = (0..k).map(|_| a.spectrum()).collect();
        let ours = SizeReport::from_spectra(ell, &spectra).unwrap().s / n as f64;
        let hs_form = (2.0f64).powi(k) * ell.powf(-(k as f64) / 2.0) / n as f64;
        assert!(ours <= hs_form);
    }
}

#[test]
fn size_relations_hold_with_their_sharp_constants() {
    for row in common::size_relation_suite(11, 1000) {
        // 𝔪₂𝔪₂/𝔪₄ is a product of four ratios |||A|||_{2,ℓ}/|||A|||_{4,ℓ} < 2
        let sharp = if row.name == "m super-multiplicative" { 16.0 } else { 4.0 };
        assert!(row.max_ratio <= sharp, "{}: {}", row.name, row.max_ratio);
    }
}

#[test]
fn mean_size_super_multiplicativity_approaches_sixteen() {
    let a = pm_one(1024);
    let ell = 1e-8;
    let two = SizeReport::from_spectra(ell, &[a.spectrum(), a.spectrum()]).unwrap();
    let four = SizeReport::from_spectra(ell, &[a.spectrum(); 4]).unwrap();
    let ratio = two.m * two.m / four.m;
    let want = 16.0 / (1.0 + ell.powf(0.25)).powi(4);
    assert!((ratio - want).abs() < 1e-10 * want);
    assert!(ratio > 15.0);
}

proptest! {
    #[test]
    fn moments_are_monotone_in_p(values in prop::collection::vec(-5.0f64..5.0, 1..40), p in 1.0f64..10.0, dq in 0.0f64..10.0) {
        let s = SingularSpectrum::new(values);
        let lo = s.moment(NormIndex::Finite(p));
        let hi = s.moment(NormIndex::Finite(p + dq));
        prop_assert!(lo <= hi * (1.0 + 1e-12));
        prop_assert!(hi <= s.op_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn weighted_norm_is_homogeneous(values in prop::collection::vec(-5.0f64..5.0, 1..40), c in -10.0f64..10.0, ell in 1e-3f64..1.0) {
        let s = SingularSpectrum::new(values.clone());
        let cs = SingularSpectrum::new(values.iter().map(|v| c * v).collect());
        for p in [NormIndex::Finite(2.0), NormIndex::Finite(5.0), NormIndex::Infinity] {
            let a = s.weighted_norm(p, ell).unwrap();
            let b = cs.weighted_norm(p, ell).unwrap();
            prop_assert!((b - c.abs() * a).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn single_precision_agrees(values in prop::collection::vec(-5.0f64..5.0, 1..40), ell in 1e-2f64..1.0) {
        let s64 = SingularSpectrum::new(values.clone());
        let s32 = SingularSpectrum::new(values.iter().map(|&v| v as f32).collect());
        let a = s64.weighted_norm(NormIndex::Finite(4.0), ell).unwrap();
        let b = s32.weighted_norm(NormIndex::Finite(4.0), ell as f32).unwrap() as f64;
        prop_assert!((a - b).abs() <= 1e-5 * a.max(1.0));
    }
}
