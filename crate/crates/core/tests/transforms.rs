use num_complex::Complex64;
use otfs_radar::rng::{gaussian_pair, seeded};
use otfs_radar::{
    heisenberg_modulate, isfft, map_probe_symbols, sfft, wigner_demodulate, DdMatrix, FrameParams, TfMatrix, TimeFrame,
};
use std::f64::consts::TAU;

fn params(m: usize, n: usize) -> FrameParams {
    FrameParams::new(m, n, 150e3, 60e9).unwrap()
}

fn random_values(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = seeded(seed);
    (0..len)
        .map(|_| {
            let (a, b) = gaussian_pair(&mut rng);
            Complex64::new(a, b)
        })
        .collect()
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn cis(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, x)
}

fn isfft_naive(dd: &DdMatrix, p: &FrameParams) -> Vec<Complex64> {
    let (m_dim, n_dim) = (p.m as f64, p.n as f64);
    let mut out = Vec::new();
    for n in 0..p.n {
        for m in 0..p.m {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..p.n {
                for l in 0..p.m {
                    let ph = n as f64 * k as f64 / n_dim - m as f64 * l as f64 / m_dim;
                    acc += dd.get(k, l) * cis(TAU * ph);
                }
            }
            out.push(acc / (m_dim * n_dim).sqrt());
        }
    }
    out
}

fn sfft_naive(tf: &TfMatrix, p: &FrameParams) -> Vec<Complex64> {
    let (m_dim, n_dim) = (p.m as f64, p.n as f64);
    let mut out = Vec::new();
    for k in 0..p.n {
        for l in 0..p.m {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..p.n {
                for m in 0..p.m {
                    let ph = n as f64 * k as f64 / n_dim - m as f64 * l as f64 / m_dim;
                    acc += tf.get(n, m) * cis(-TAU * ph);
                }
            }
            out.push(acc / (m_dim * n_dim).sqrt());
        }
    }
    out
}

#[test]
fn isfft_matches_double_sum() {
    for (m, n) in [(8, 8), (5, 7), (8, 3)] {
        let p = params(m, n);
        let dd = DdMatrix::from_vec(&p, random_values(p.cells(), 11)).unwrap();
        let fast = isfft(&dd, &p).unwrap();
        assert!(rel_err(fast.as_slice(), &isfft_naive(&dd, &p)) < 1e-10);
    }
}

#[test]
fn sfft_matches_double_sum() {
    for (m, n) in [(8, 8), (6, 4)] {
        let p = params(m, n);
        let tf = TfMatrix::from_vec(&p, random_values(p.cells(), 12)).unwrap();
        let fast = sfft(&tf, &p).unwrap();
        assert!(rel_err(fast.as_slice(), &sfft_naive(&tf, &p)) < 1e-10);
    }
}

#[test]
fn round_trips_and_energy_over_sizes() {
    let sizes = [(2, 2), (3, 5), (8, 8), (16, 9), (28, 28), (64, 64), (64, 2)];
    for (i, &(m, n)) in sizes.iter().enumerate() {
        let p = params(m, n);
        let dd = DdMatrix::from_vec(&p, random_values(p.cells(), 100 + i as u64)).unwrap();
        let tf = isfft(&dd, &p).unwrap();
        let back = sfft(&tf, &p).unwrap();
        assert!(rel_err(back.as_slice(), dd.as_slice()) < 1e-12, "{m}x{n}");
        assert!((tf.energy() - dd.energy()).abs() / dd.energy() < 1e-12);
        assert!((back.energy() - tf.energy()).abs() / tf.energy() < 1e-12);

        let x = heisenberg_modulate(&tf, &p).unwrap();
        assert!((x.energy() - tf.energy()).abs() / tf.energy() < 1e-12);
        let tf2 = wigner_demodulate(&x, &p).unwrap();
        assert!(rel_err(tf2.as_slice(), tf.as_slice()) < 1e-12);
        assert!((tf2.energy() - x.energy()).abs() / x.energy() < 1e-12);

        let chain = sfft(&tf2, &p).unwrap();
        assert!(rel_err(chain.as_slice(), dd.as_slice()) < 1e-10);
    }
}

#[test]
fn modulation_equals_inverse_zak() {
    let p = params(8, 8);
    let dd = DdMatrix::from_vec(&p, random_values(p.cells(), 13)).unwrap();
    let x = heisenberg_modulate(&isfft(&dd, &p).unwrap(), &p).unwrap();
    for n in 0..p.n {
        for i in 0..p.m {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..p.n {
                acc += dd.get(k, i) * cis(TAU * (n * k) as f64 / p.n as f64);
            }
            acc /= (p.n as f64).sqrt();
            assert!((x.samples()[i + n * p.m] - acc).norm() < 1e-10);
        }
    }
}

#[test]
fn demodulation_matches_direct_dft() {
    let p = params(8, 8);
    let r = TimeFrame::new(&p, random_values(p.cells(), 14)).unwrap();
    let tf = wigner_demodulate(&r, &p).unwrap();
    for n in 0..p.n {
        for m in 0..p.m {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..p.m {
                acc += r.samples()[n * p.m + i] * cis(-TAU * (m * i) as f64 / p.m as f64);
            }
            acc /= (p.m as f64).sqrt();
            assert!((tf.get(n, m) - acc).norm() < 1e-10);
        }
    }
}

#[test]
fn probe_chain_identity() {
    let p = FrameParams::paper();
    let dd = map_probe_symbols(&p, 5);
    let x = heisenberg_modulate(&isfft(&dd, &p).unwrap(), &p).unwrap();
    let back = sfft(&wigner_demodulate(&x, &p).unwrap(), &p).unwrap();
    assert!(rel_err(back.as_slice(), dd.as_slice()) < 1e-10);
}
