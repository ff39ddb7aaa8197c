use faer::{c64, Mat};
use otoc_lab::ensemble::*;
use otoc_lab::otoc::*;
use otoc_lab::schatten::NormIndex;
use otoc_lab::semicircle::phi;
use otoc_lab::Observable;
use proptest::prelude::*;

fn ntr(a: &Mat<c64>) -> c64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum::<c64>() / a.nrows() as f64
}

fn op_inf_norm(m: &Mat<c64>) -> f64 {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `e^M` by scaling and squaring a truncated Taylor series.
fn expm(m: &Mat<c64>) -> Mat<c64> {
    let n = m.nrows();
    let mut s = 0;
    let mut scale = 1.0;
    while op_inf_norm(m) * scale > 0.25 {
        scale *= 0.5;
        s += 1;
    }
    let x = Mat::<c64>::from_fn(n, n, |i, j| m[(i, j)] * scale);
    let mut term = Mat::<c64>::identity(n, n);
    let mut sum = Mat::<c64>::identity(n, n);
    for k in 1..24 {
        term = scaled(&(&term * &x), c64::new(1.0 / k as f64, 0.0));
        sum = &sum + &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn scaled(w: &Mat<c64>, f: c64) -> Mat<c64> {
    Mat::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] * f)
}

/// `A(t) = e^{−iWt} A e^{iWt}` by dense exponentials.
fn heisenberg(w: &Mat<c64>, a: &Mat<c64>, t: f64) -> Mat<c64> {
    let u = expm(&scaled(w, c64::new(0.0, -t)));
    let v = expm(&scaled(w, c64::new(0.0, t)));
    &(&u * a) * &v
}

fn dense_otoc(w: &Mat<c64>, a: &Mat<c64>, b: &Mat<c64>, t: f64) -> (f64, c64) {
    let at = heisenberg(w, a, t);
    let d = ntr(&(&(&at * &at) * &(b * b)));
    let f = ntr(&(&(&(&at * b) * &at) * b));
    (d.re, f)
}

/// `½ Tr(|[A(t), B]|² e^{−βW}) / Tr e^{−βW}` by dense exponentials.
fn dense_otoc_beta(w: &Mat<c64>, a: &Mat<c64>, b: &Mat<c64>, t: f64, beta: f64) -> f64 {
    let at = heisenberg(w, a, t);
    let comm = &(&at * b) - &(b * &at);
    let sq = comm.adjoint() * &comm;
    let g = expm(&scaled(w, c64::new(-beta, 0.0)));
    (ntr(&(&sq * &g)) / ntr(&g)).re / 2.0
}

fn pair(n: usize, seed: u64) -> (Observable, Observable) {
    (random_hermitian_observable(n, seed, 0, true), random_hermitian_observable(n, seed, 1, true))
}

#[test]
fn empirical_parts_match_dense_evolution() {
    let n = 12;
    let diag = Observable::diagonal((0..n).map(|i| [1.0, -1.0, 0.0, 2.0][i % 4] - 0.5).collect());
    for spec in [WignerSpec::gue(n, 3), WignerSpec::goe(n, 3)] {
        let w = sample_wigner(&spec, 0);
        let wc = w.to_complex();
        let fact = eigendecompose(&w).unwrap();
        let (a, b) = pair(n, 9);
        let ts = [0.0, 0.4, 1.3, 3.7];
        for (x, y) in [(&a, &b), (&diag, &b), (&a, &diag)] {
            let pts = empirical_otoc(&fact, x, y, &ts).unwrap();
            for p in &pts {
                let (d, f) = dense_otoc(&wc, &x.to_dense(), &y.to_dense(), p.t);
                assert!((p.d - d).abs() < 1e-10, "t={} D {} vs {}", p.t, p.d, d);
                assert!((p.f - f).norm() < 1e-10, "t={} F {} vs {}", p.t, p.f, f);
                assert!((p.c - (d - f.re)).abs() < 1e-10);
                assert!(p.c >= -1e-10);
            }
        }
    }
}

#[test]
fn commuting_observables_start_at_zero() {
    let n = 16;
    let fact = eigendecompose(&sample_wigner(&WignerSpec::gue(n, 4), 0)).unwrap();
    let a = Observable::diagonal((0..n).map(|i| (i % 3) as f64 - 1.0).collect());
    let b = Observable::diagonal((0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect());
    let p = empirical_otoc(&fact, &a, &b, &[0.0]).unwrap();
    assert!(p[0].c.abs() < 1e-13, "{}", p[0].c);
}

#[test]
fn general_start_is_half_the_commutator_norm() {
    let n = 10;
    let fact = eigendecompose(&sample_wigner(&WignerSpec::gue(n, 5), 0)).unwrap();
    let (a, b) = pair(n, 5);
    let (ad, bd) = (a.to_dense(), b.to_dense());
    let comm = &(&ad * &bd) - &(&bd * &ad);
    let half = ntr(&(comm.adjoint() * &comm)).re / 2.0;
    let m = moment_set(&a, &b).unwrap();
    let p = empirical_otoc(&fact, &a, &b, &[0.0]).unwrap();
    assert!((p[0].c - half).abs() < 1e-10);
    assert!((m.a2b2 - m.abab - half).abs() < 1e-10);
    assert!(half > 0.0);
}

#[test]
fn diagonal_dynamics_freeze_the_curve() {
    let n = 8;
    let lambda: Vec<f64> = (0..n).map(|i| -1.5 + 0.4 * i as f64).collect();
    let fact = SpectralFactorization { eigenvalues: lambda, vectors: Eigenvectors::Real(Mat::identity(n, n)) };
    let a = Observable::diagonal((0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
    let b = Observable::diagonal((0..n).map(|i| (i as f64 - 3.5) / 2.0).collect());
    let ts: Vec<f64> = (0..20).map(|i| 0.5 * i as f64).collect();
    let pts = empirical_otoc(&fact, &a, &b, &ts).unwrap();
    let first = pts[0];
    for p in &pts {
        assert!((p.d - first.d).abs() < 1e-13 && (p.f - first.f).norm() < 1e-13);
        assert!(p.c.abs() < 1e-13);
    }
    for beta in [0.5, 2.0] {
        for c in empirical_otoc_beta(&fact, &a, &b, &ts, beta).unwrap() {
            assert!(c.abs() < 1e-13);
        }
    }
}

#[test]
fn zero_temperature_parameter_reduces_exactly() {
    let n = 24;
    let fact = eigendecompose(&sample_wigner(&WignerSpec::gue(n, 6), 0)).unwrap();
    let (a, b) = pair(n, 6);
    let ts: Vec<f64> = (0..30).map(|i| 0.25 * i as f64).collect();
    let inf = empirical_otoc(&fact, &a, &b, &ts).unwrap();
    let zero_beta = empirical_otoc_beta(&fact, &a, &b, &ts, 0.0).unwrap();
    for (p, c) in inf.iter().zip(&zero_beta) {
        assert!((p.c - c).abs() < 1e-12 * p.c.abs().max(1.0), "{} vs {c}", p.c);
    }
    let m = moment_set(&a, &b).unwrap();
    let th = theoretical_otoc(&m, &ts);
    let th0 = theoretical_otoc_beta(&m, &ts, 0.0).unwrap();
    for (x, y) in th.iter().zip(&th0) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn thermal_otoc_matches_dense_gibbs_state() {
    let n = 10;
    for spec in [WignerSpec::gue(n, 7), WignerSpec::goe(n, 7)] {
        let w = sample_wigner(&spec, 0);
        let wc = w.to_complex();
        let fact = eigendecompose(&w).unwrap();
        let (a, b) = pair(n, 7);
        let ts = [0.0, 0.8, 2.5];
        for beta in [0.5, 2.0] {
            let got = empirical_otoc_beta(&fact, &a, &b, &ts, beta).unwrap();
            for (&t, g) in ts.iter().zip(&got) {
                let want = dense_otoc_beta(&wc, &a.to_dense(), &b.to_dense(), t, beta);
                assert!((g - want).abs() < 1e-10 * want.abs().max(1.0), "β={beta} t={t}: {g} vs {want}");
            }
        }
    }
}

#[test]
fn disjoint_supports_make_temperature_irrelevant() {
    let (a, b) = build_example_observables(256, 0.7, 0.7).unwrap();
    let m = moment_set(&a, &b).unwrap();
    assert_eq!((m.ab, m.a2b2, m.abab), (0.0, 0.0, 0.0));
    let ts: Vec<f64> = (0..50).map(|i| 0.2 * i as f64).collect();
    let base = theoretical_otoc_beta(&m, &ts, 0.0).unwrap();
    for beta in [1.0, 3.0] {
        for (x, y) in base.iter().zip(theoretical_otoc_beta(&m, &ts, beta).unwrap()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let ex2 = example2_theory(m.a2, m.b2, &ts);
    for (x, y) in base.iter().zip(&ex2) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn temperature_sharpens_the_self_otoc_peak() {
    let a = build_example1_observable(1024, 0.5).unwrap();
    let m = moment_set(&a, &a).unwrap();
    let ts: Vec<f64> = (0..=500).map(|i| 0.01 * i as f64).collect();
    let peak = |beta: f64| {
        let c = theoretical_otoc_beta(&m, &ts, beta).unwrap();
        estimate_scrambling_time(&ts, &c).unwrap().1
    };
    assert!(peak(3.0) > peak(0.0));
}

#[test]
fn theory_endpoints() {
    let m: MomentSet<f64> = MomentSet { a2: 1.3, b2: 0.7, ab: 0.4, a2b2: 1.1, abab: 0.6 };
    let c0 = theoretical_otoc(&m, &[0.0])[0];
    assert!((c0 - (m.a2b2 - m.abab)).abs() < 1e-15);
    let late = theoretical_otoc(&m, &[1e6])[0];
    assert!((late - m.thermal()).abs() < 1e-8);
}

#[test]
fn short_time_growth_coefficients() {
    let t = 1e-3;
    let c2: f64 = example2_theory(1.0, 1.0, &[t])[0];
    assert!((c2 / (t * t) - 1.0).abs() < 0.01);
    let a = build_example1_observable(1024, 0.5).unwrap();
    let m = moment_set(&a, &a).unwrap();
    let a4 = m.a2b2;
    let c1 = example1_theory(m.a2, a4, &[t])[0];
    let want = a4 - m.a2 * m.a2;
    assert!((c1 / (t * t) / want - 1.0).abs() < 0.01, "{} vs {want}", c1 / (t * t));
}

#[test]
fn example_observables_layout() {
    let (a, b) = build_example_observables(16, 0.5, 0.5).unwrap();
    let (da, db) = (a.diagonal_entries().unwrap(), b.diagonal_entries().unwrap());
    assert_eq!(da.iter().filter(|x| **x != 0.0).count(), 4);
    assert_eq!(db.iter().filter(|x| **x != 0.0).count(), 4);
    assert!(da.iter().zip(db).all(|(x, y)| x * y == 0.0));
    assert_eq!(a.normalized_trace().re, 0.0);
    assert_eq!(b.normalized_trace().re, 0.0);
    let m = moment_set(&a, &b).unwrap();
    assert!((m.a2 - 1.0).abs() < 1e-15 && (m.b2 - 1.0).abs() < 1e-15);

    for (n, ex) in [(16usize, 0.5), (1024, 0.5), (4096, 0.5)] {
        let a = build_example1_observable(n, ex).unwrap();
        let nf = n as f64;
        let want = nf.powf((1.0 - ex) * 2.0) * (nf.powf(ex) / nf).sqrt();
        let got = a.spectrum().moment(NormIndex::Finite(8.0)).powi(4);
        assert!((got / want - 1.0).abs() < 1e-12, "N={n}: {got} vs {want}");
    }
}

#[test]
fn example_rounding_and_guards() {
    assert_eq!(support_size(1000, 0.7).unwrap(), 124);
    assert_eq!(support_size(64, 0.5).unwrap(), 8);
    assert!(matches!(support_size(64, 0.0), Err(OtocError::BadExponent(_))));
    assert!(matches!(build_example_observables(16, 1.0, 0.5), Err(OtocError::SupportOverlap { .. })));
    // achieved ⟨A²⟩ differs from 1 when the support is rounded
    let (a, _) = build_example_observables(1000, 0.7, 0.7).unwrap();
    let m = moment_set(&a, &a).unwrap();
    let want = 124.0 * 1000f64.powf(0.3) / 1000.0;
    assert!((m.a2 - want).abs() < 1e-12);
}

#[test]
fn moment_set_special_cases() {
    let n = 14;
    let a = random_hermitian_observable(n, 11, 0, true);
    let ad = a.to_dense();
    let a2 = &ad * &ad;
    let m = moment_set(&a, &a).unwrap();
    let (t2, t4) = (ntr(&a2).re, ntr(&(&a2 * &a2)).re);
    for (x, y) in [(m.a2, t2), (m.b2, t2), (m.ab, t2), (m.a2b2, t4), (m.abab, t4)] {
        assert!((x - y).abs() < 1e-10 * y.abs().max(1.0), "{x} vs {y}");
    }

    let b = random_hermitian_observable(n, 11, 1, false);
    let bd = b.to_dense();
    let m = moment_set(&a, &b).unwrap();
    assert!((m.ab - ntr(&(&ad * &bd)).re).abs() < 1e-10);
    assert!((m.a2b2 - ntr(&(&a2 * &(&bd * &bd))).re).abs() < 1e-10);
    assert!((m.abab - ntr(&(&(&ad * &bd) * &(&ad * &bd))).re).abs() < 1e-10);
    assert!(m.a2b2 - m.abab >= 0.0);

    let short = Observable::diagonal(vec![1.0; 4]);
    assert_eq!(moment_set(&a, &short).unwrap_err(), OtocError::SizeMismatch(n, 4));
}

#[test]
fn form_factor_closed_form_values() {
    for n in [8usize, 100, 512] {
        assert!((sff_closed_form(0.0f64, n) - 1.0).abs() < 1e-15);
        let t = 2.0 * n as f64;
        let want = phi(t).powi(2) + 1.0 / n as f64;
        assert!((sff_closed_form(t, n) - want).abs() < 1e-15);
        assert!((sff_closed_form(t + 1.0, n) - phi(t + 1.0).powi(2) - 1.0 / n as f64).abs() < 1e-15);
    }
    assert!((sff_closed_form(0.5f32, 64) as f64 - sff_closed_form(0.5, 64)).abs() < 1e-6);
    let eigs = [-1.0, 0.2, 0.7];
    assert!((sff_sample(&eigs, 0.0) - 1.0).abs() < 1e-15);
    let s: c64 = eigs.iter().map(|&l| c64::cis(1.7 * l)).sum();
    assert!((sff_sample(&eigs, 1.7) - (s / 3.0).norm_sqr()).abs() < 1e-15);
}

#[test]
fn overlap_prediction_endpoints() {
    let (ta, tb, tab, n): (f64, f64, f64, usize) = (0.3, -0.2, 0.9, 8);
    assert!((gue_overlap_prediction(ta, tb, tab, 0.0, n) - tab).abs() < 1e-14);
    let nf = n as f64;
    let stationary = (1.0 - 1.0 / (nf + 1.0)) * ta * tb + tab / (nf + 1.0);
    assert!((gue_overlap_prediction(ta, tb, tab, 1e4, n) - stationary).abs() < 1e-9);
}

#[test]
fn empirical_overlap_matches_dense() {
    let n = 10;
    let w = sample_wigner(&WignerSpec::gue(n, 12), 0);
    let wc = w.to_complex();
    let fact = eigendecompose(&w).unwrap();
    let a = random_hermitian_observable(n, 12, 0, false);
    let b = Observable::diagonal((0..n).map(|i| i as f64 / n as f64).collect());
    let ts = [0.0, 0.9, 4.0];
    let got = empirical_overlap(&fact, &a, &b, &ts);
    for (&t, g) in ts.iter().zip(&got) {
        let want = ntr(&(&heisenberg(&wc, &a.to_dense(), t) * &b.to_dense()));
        assert!((g - want).norm() < 1e-10, "t={t}: {g} vs {want}");
    }
    let ab = ntr(&(&a.to_dense() * &b.to_dense()));
    assert!((got[0] - ab).norm() < 1e-12);
}

#[test]
fn scrambling_time_estimates() {
    let ts: Vec<f64> = (0..=1000).map(|i| 0.01 * i as f64).collect();
    let ex2 = example2_theory(1.0, 1.0, &ts);
    let (t_star, peak) = estimate_scrambling_time(&ts, &ex2).unwrap();
    assert!((1.0..=3.0).contains(&t_star), "{t_star}");
    assert!((peak - 1.0).abs() < 1e-3);

    let a = build_example1_observable(1024, 0.5).unwrap();
    let m = moment_set(&a, &a).unwrap();
    let (_, peak) = estimate_scrambling_time(&ts, &example1_theory(m.a2, m.a2b2, &ts)).unwrap();
    // ⟨A⁴⟩ = N^{1−a} and φ² − φ⁴ tops out at 1/4
    assert!((peak - 32.0 / 4.0).abs() < 0.5, "{peak}");

    assert_eq!(estimate_scrambling_time(&[6.0, 7.0], &[1.0, 2.0]), None);
    // near-ties resolve to the earliest time
    let t = [0.0, 1.0, 2.0, 3.0];
    assert_eq!(estimate_scrambling_time(&t, &[0.0, 0.9999, 0.5, 1.0]), Some((1.0, 1.0)));
    assert_eq!(estimate_scrambling_time(&t, &[0.0, 0.9, 0.5, 1.0]), Some((3.0, 1.0)));
}

#[test]
fn relaxation_time_semantics() {
    let ts = [0.0, 1.0, 2.0, 3.0, 4.0];
    assert_eq!(estimate_relaxation_time(&ts, &[1.0, 1.05, 0.95, 1.0, 1.0], 1.0, 0.1), Some(0.0));
    assert_eq!(estimate_relaxation_time(&ts, &[1.0, 1.0, 1.0, 1.0, 2.0], 1.0, 0.1), None);
    // last exit: 1.5 → 1.0 crosses 1.1 at 4/5 of the step
    let t = estimate_relaxation_time(&ts, &[3.0, 1.0, 1.5, 1.0, 1.0], 1.0, 0.1).unwrap();
    assert!((t - 2.8).abs() < 1e-12, "{t}");
    let t = estimate_relaxation_time(&ts, &[0.0, 0.0, 0.0, 0.5, 1.0], 1.0, 0.1).unwrap();
    assert!((t - 3.8).abs() < 1e-12, "{t}");
    assert_eq!(estimate_relaxation_time(&[], &[], 1.0, 0.1), None);
}

proptest! {
    #[test]
    fn self_otoc_reduces_to_example_one(a2 in 0.1f64..5.0, extra in 0.0f64..20.0, t in 0.0f64..30.0) {
        let a4 = a2 * a2 + extra;
        let m = MomentSet { a2, b2: a2, ab: a2, a2b2: a4, abab: a4 };
        let x = theoretical_otoc(&m, &[t])[0];
        let y = example1_theory(a2, a4, &[t])[0];
        prop_assert!((x - y).abs() < 1e-12 * (a4 + a2 * a2));
    }

    #[test]
    fn disjoint_theory_is_example_two(a2 in 0.1f64..5.0, b2 in 0.1f64..5.0, t in 0.0f64..30.0) {
        let m = MomentSet { a2, b2, ab: 0.0, a2b2: 0.0, abab: 0.0 };
        prop_assert!((theoretical_otoc(&m, &[t])[0] - example2_theory(a2, b2, &[t])[0]).abs() < 1e-14 * a2 * b2);
    }

    #[test]
    fn empirical_curve_is_nonnegative(seed in 0u64..1000, t in 0.0f64..20.0) {
        let n = 16;
        let fact = eigendecompose(&sample_wigner(&WignerSpec::goe(n, seed), 0)).unwrap();
        let (a, b) = pair(n, seed);
        let p = empirical_otoc(&fact, &a, &b, &[t]).unwrap();
        prop_assert!(p[0].c >= -1e-10);
        let c = empirical_otoc_beta(&fact, &a, &b, &[t], 1.0).unwrap();
        prop_assert!(c[0] >= -1e-10);
    }

    #[test]
    fn single_precision_theory_agrees(t in 0.0f64..10.0) {
        let m = MomentSet { a2: 1.0, b2: 1.0, ab: 0.3, a2b2: 0.8, abab: 0.2 };
        let m32 = MomentSet { a2: 1.0f32, b2: 1.0, ab: 0.3, a2b2: 0.8, abab: 0.2 };
        let x = theoretical_otoc(&m, &[t])[0];
        let y = theoretical_otoc(&m32, &[t as f32])[0] as f64;
        prop_assert!((x - y).abs() < 1e-5);
    }
}
