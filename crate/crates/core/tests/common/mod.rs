#![allow(dead_code)]

use num_complex::Complex;
use otoc_lab::ensemble::{integrate_characteristic, CharOptions};
use otoc_lab::schatten::{NormIndex, SingularSpectrum, SizeReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worst observed ratio `lhs / rhs` of one size relation, with the implicit constant set to 1.
#[derive(Debug, Clone)]
pub struct RelationOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub max_ratio: f64,
}

fn random_spectrum(rng: &mut ChaCha8Rng, n: usize) -> SingularSpectrum<f64> {
    let values: Vec<f64> = match rng.random_range(0..4) {
        0 => (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        1 => {
            let r = rng.random_range(1..=(n / 4).max(1));
            (0..n).map(|i| if i < r { if i % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 }).collect()
        }
        2 => {
            let rate = rng.random_range(0.0..0.2);
            (0..n).map(|i| (-rate * i as f64).exp()).collect()
        }
        _ => (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect(),
    };
    SingularSpectrum::new(values)
}

fn random_ell(rng: &mut ChaCha8Rng, floor: f64) -> f64 {
    let lo = floor.max(1e-4).ln();
    rng.random_range(lo..0.0).exp()
}

fn report(ell: f64, spectra: &[&SingularSpectrum<f64>]) -> SizeReport<f64> {
    SizeReport::from_spectra(ell, spectra).unwrap()
}

fn iso_sizes(ell: f64, spectra: &[&SingularSpectrum<f64>]) -> (f64, f64) {
    if spectra.is_empty() {
        (1.0, ell.powf(-0.5))
    } else {
        let r = report(ell, spectra);
        (r.m_iso, r.s_iso)
    }
}

fn doubled<'a>(js: &[&'a SingularSpectrum<f64>]) -> Vec<&'a SingularSpectrum<f64>> {
    js.iter().chain(js.iter()).copied().collect()
}

fn norm(s: &SingularSpectrum<f64>, p: Option<f64>, ell: f64) -> f64 {
    let idx = p.map_or(NormIndex::Infinity, NormIndex::Finite);
    s.weighted_norm(idx, ell).unwrap()
}

/// `ℓ` along a backward-shot characteristic, reordered into forward time.
fn forward_ells(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z_t = Complex::new(rng.random_range(-1.8..1.8), rng.random_range(0.01..0.3));
    let span = rng.random_range(0.1..1.0);
    let mut traj = integrate_characteristic(z_t, -span, CharOptions::default()).unwrap();
    traj.ell.reverse();
    traj.ell
}

#[derive(Default)]
struct Tally {
    rows: Vec<RelationOutcome>,
}

impl Tally {
    fn record(&mut self, name: &'static str, ratio: f64) {
        assert!(ratio.is_finite(), "{name}: ratio {ratio}");
        match self.rows.iter_mut().find(|r| r.name == name) {
            Some(r) => {
                r.instances += 1;
                r.max_ratio = r.max_ratio.max(ratio);
            }
            None => self.rows.push(RelationOutcome { name, instances: 1, max_ratio: ratio }),
        }
    }
}

/// Evaluates every size relation on `instances` random configurations each.
pub fn size_relation_suite(seed: u64, instances: usize) -> Vec<RelationOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    let trajectories: Vec<Vec<f64>> = (0..32).map(|_| forward_ells(&mut rng)).collect();
    let orders = [2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 12.0];
    for _ in 0..instances {
        let n = 1usize << rng.random_range(3..12);
        let ell = random_ell(&mut rng, 0.0);
        let pool: Vec<SingularSpectrum<f64>> = (0..4).map(|_| random_spectrum(&mut rng, n)).collect();
        let k = rng.random_range(1..=4usize);
        let js: Vec<&SingularSpectrum<f64>> = pool[..k].iter().collect();
        let nl = n as f64 * ell;

        // two-sided comparison of weighted norms
        let b = &pool[0];
        let i = rng.random_range(0..orders.len());
        let j = rng.random_range(i..=orders.len());
        let p = orders[i];
        let q = orders.get(j).copied();
        let (np, nq) = (norm(b, Some(p), ell), norm(b, q, ell));
        let expo = q.map_or(1.0 / p, |q| (q - p) / (p * q));
        tally.record("weighted norm p<=q", np / nq);
        tally.record("weighted norm q<=p", nq / ((1.0 + nl.powf(expo)) * np));

        // averaged sizes
        let rk = report(ell, &js);
        if k >= 2 {
            let split = rng.random_range(1..k);
            let (a, c) = (report(ell, &js[..split]), report(ell, &js[split..]));
            if rk.m > 0.0 {
                tally.record("m super-multiplicative", a.m * c.m / rk.m);
            }
            tally.record("s super-multiplicative", a.s * c.s / rk.s);
            tally.record("m <= s", rk.m / rk.s);
        }
        let dd = report(ell, &doubled(&js));
        tally.record("sqrt(m_2k) <= s", dd.m.sqrt() / rk.s);
        tally.record("s doubling", dd.s / ((1.0 + nl.sqrt()) * rk.s * rk.s));

        // isotropic sizes
        let split = rng.random_range(0..=k);
        let (mi, si) = iso_sizes(ell, &js);
        let (ma, sa) = iso_sizes(ell, &js[..split]);
        let (mc, sc) = iso_sizes(ell, &js[split..]);
        tally.record("iso m super-multiplicative", ma * mc / mi);
        tally.record("iso s super-multiplicative", sa * sc / (ell.powf(-0.5) * si));
        tally.record("iso m <= s", mi / (ell.sqrt() * si));
        let (_, sdd) = iso_sizes(ell, &doubled(&js));
        tally.record("iso s doubling", sdd / (ell.sqrt() * si * si));

        // averaged against isotropic
        if k >= 2 {
            tally.record("m <= m_iso", rk.m / mi);
        }
        tally.record("s <= sqrt(l) s_iso", rk.s / (ell.sqrt() * si));
        tally.record("s_iso <= N s", si / (n as f64 * (1.0 + nl.powf(-0.5)) * rk.s));

        // isotropic envelope against the averaged one with a rank-one closing matrix
        let ell_c = random_ell(&mut rng, 1.0 / n as f64);
        let nlc = n as f64 * ell_c;
        let mut rank_one = vec![0.0; n];
        rank_one[0] = n as f64;
        let closing = SingularSpectrum::new(rank_one);
        let order = 2.0 * (k + 1) as f64;
        let lhs = js.iter().map(|s| norm(s, None, ell_c)).product::<f64>() / nlc.sqrt();
        let rhs = js.iter().chain([&&closing]).map(|s| norm(s, Some(order), ell_c)).product::<f64>() / n as f64;
        tally.record("iso envelope <= avg envelope", lhs / rhs);

        // monotonicity along a characteristic
        let ells = &trajectories[rng.random_range(0..trajectories.len())];
        let a = rng.random_range(0..ells.len());
        let c = rng.random_range(a..ells.len());
        let (ls, lt) = (ells[a], ells[c]);
        let (rs, rt) = (report(ls, &js), report(lt, &js));
        let alpha = rng.random::<f64>();
        let beta = 0.5 * rng.random::<f64>();
        if k >= 2 {
            tally.record("m monotone", rs.m * ls.powf(alpha) / (rt.m * lt.powf(alpha)));
        }
        tally.record("s monotone", rs.s * ls.powf(beta) / (rt.s * lt.powf(beta)));
        tally.record("iso m monotone", rs.m_iso / rt.m_iso);
        tally.record("iso s monotone", rs.s_iso * ls.powf(beta) / (rt.s_iso * lt.powf(beta)));
    }
    tally.rows
}
