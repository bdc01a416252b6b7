use num_complex::Complex64;
use otfs_radar::correlator::pick_peaks_in;
use otfs_radar::rng::{gaussian_pair, seeded};
use otfs_radar::{
    add_awgn, apply_channel, correlate_dd, heisenberg_modulate, isfft, map_probe_symbols, pick_peaks, sample_targets,
    sfft, wigner_demodulate, DdMatrix, FrameParams, NoiseSpec, Target, TargetSet,
};
use std::f64::consts::TAU;

fn random_dd(p: &FrameParams, seed: u64) -> DdMatrix {
    let mut rng = seeded(seed);
    DdMatrix::from_fn(p, |_, _| {
        let (a, b) = gaussian_pair(&mut rng);
        Complex64::new(a, b)
    })
}

/// Four nested loops straight from the definition.
fn correlate_naive(b: &DdMatrix, a: &DdMatrix, p: &FrameParams) -> Vec<Complex64> {
    let (n_dim, m_dim) = (p.n as i64, p.m as i64);
    let mut out = Vec::new();
    for k in 0..n_dim {
        for l in 0..m_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_dim {
                for m in 0..m_dim {
                    let (dn, dm) = (n - k, m - l);
                    let gamma = if dm >= 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::from_polar(1.0, -TAU * dn as f64 / n_dim as f64)
                    };
                    let ramp = Complex64::from_polar(1.0, TAU * (dm * k) as f64 / (n_dim * m_dim) as f64);
                    let av = a.get(dn.rem_euclid(n_dim) as usize, dm.rem_euclid(m_dim) as usize);
                    acc += b.get(n as usize, m as usize).conj() * av * gamma * ramp;
                }
            }
            out.push(acc);
        }
    }
    out
}

fn received(p: &FrameParams, probe: &DdMatrix, ts: &TargetSet, noise: NoiseSpec) -> DdMatrix {
    let x = heisenberg_modulate(&isfft(probe, p).unwrap(), p).unwrap();
    let r = add_awgn(&apply_channel(&x, ts, p).unwrap(), noise).unwrap();
    sfft(&wigner_demodulate(&r, p).unwrap(), p).unwrap()
}

fn argmax(mags: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in mags.iter().enumerate() {
        if v > mags[best] {
            best = i;
        }
    }
    best
}

fn unit_target(p: &FrameParams, delay: usize, doppler: usize) -> TargetSet {
    TargetSet::new(
        p,
        vec![Target {
            delay,
            doppler,
            gain: Complex64::new(1.0, 0.0),
        }],
    )
    .unwrap()
}

#[test]
fn kernel_matches_four_loop_definition() {
    for (m, n, seed) in [(8, 8, 1), (5, 7, 2), (7, 4, 3)] {
        let p = FrameParams::new(m, n, 1.0, 1.0).unwrap();
        let a = random_dd(&p, seed);
        let b = random_dd(&p, seed + 50);
        let fast = correlate_dd(&b, &a, &p).unwrap();
        let slow = correlate_naive(&b, &a, &p);
        let scale: f64 = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (x, y) in fast.values.as_slice().iter().zip(&slow) {
            assert!((x - y).norm() / scale < 1e-10);
        }
    }
}

#[test]
fn conjugate_linear_in_received_and_linear_in_reference() {
    let p = FrameParams::new(6, 5, 1.0, 1.0).unwrap();
    let (a1, a2, b1, b2) = (random_dd(&p, 1), random_dd(&p, 2), random_dd(&p, 3), random_dd(&p, 4));
    let (alpha, beta) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
    let comb = |x: &DdMatrix, y: &DdMatrix| DdMatrix::from_fn(&p, |k, l| alpha * x.get(k, l) + beta * y.get(k, l));
    let v = |b: &DdMatrix, a: &DdMatrix| correlate_dd(b, a, &p).unwrap().values.into_vec();

    let lhs = v(&b1, &comb(&a1, &a2));
    let (r1, r2) = (v(&b1, &a1), v(&b1, &a2));
    for i in 0..lhs.len() {
        assert!((lhs[i] - (alpha * r1[i] + beta * r2[i])).norm() < 1e-12 * 100.0);
    }
    let lhs = v(&comb(&b1, &b2), &a1);
    let (r1, r2) = (v(&b1, &a1), v(&b2, &a1));
    for i in 0..lhs.len() {
        let expect = alpha.conj() * r1[i] + beta.conj() * r2[i];
        assert!((lhs[i] - expect).norm() < 1e-12 * 100.0);
    }
}

#[test]
fn single_target_sweep_peaks_exactly_everywhere() {
    let p = FrameParams::new(8, 8, 150e3, 60e9).unwrap();
    let probe = map_probe_symbols(&p, 21);
    let mut hits = 0;
    for doppler in 0..p.n {
        for delay in 0..p.m {
            let b = received(&p, &probe, &unit_target(&p, delay, doppler), NoiseSpec::noiseless());
            let v = correlate_dd(&b, &probe, &p).unwrap();
            let mags = v.magnitudes();
            let best = argmax(&mags);
            if best == doppler * p.m + delay {
                hits += 1;
            }
            // peak is fully coherent
            assert!((mags[best] - p.cells() as f64).abs() < 1e-9);
        }
    }
    assert_eq!(hits, 64);
}

#[test]
fn reference_grid_single_target_location() {
    let p = FrameParams::paper();
    let probe = map_probe_symbols(&p, 3);
    let b = received(&p, &probe, &unit_target(&p, 2, 10), NoiseSpec::noiseless());
    let v = correlate_dd(&b, &probe, &p).unwrap();
    let best = argmax(&v.magnitudes());
    assert_eq!((best / p.m, best % p.m), (10, 2));
}

#[test]
fn two_target_scene_is_recovered() {
    let p = FrameParams::paper();
    let probe = map_probe_symbols(&p, 4);
    let ts = TargetSet::new(
        &p,
        vec![
            Target {
                delay: 2,
                doppler: 10,
                gain: Complex64::new(0.6, 0.2),
            },
            Target {
                delay: 7,
                doppler: 17,
                gain: Complex64::new(-0.3, 0.5),
            },
        ],
    )
    .unwrap();
    let b = received(&p, &probe, &ts, NoiseSpec::noiseless());
    let peaks = pick_peaks(&correlate_dd(&b, &probe, &p).unwrap(), 2).unwrap();
    let cells: Vec<_> = peaks.iter().map(|pk| (pk.delay, pk.doppler)).collect();
    assert_eq!(cells, vec![(2, 10), (7, 17)]);
}

#[test]
fn sampled_scenes_at_high_snr() {
    let p = FrameParams::paper();
    let mut exact = 0;
    let trials = 60;
    for seed in 0..trials {
        let probe = map_probe_symbols(&p, 1000 + seed);
        let ts = sample_targets(&p, 2, 2000 + seed).unwrap();
        let noise = NoiseSpec {
            snr_db: 20.0,
            seed: 3000 + seed,
        };
        let b = received(&p, &probe, &ts, noise);
        let peaks = pick_peaks(&correlate_dd(&b, &probe, &p).unwrap(), 2).unwrap();
        let got: Vec<_> = peaks.iter().map(|pk| (pk.delay, pk.doppler)).collect();
        let want: Vec<_> = ts.targets().iter().map(|t| (t.delay, t.doppler)).collect();
        exact += usize::from(got == want);
    }
    assert!(exact as f64 / trials as f64 >= 0.9, "{exact}/{trials}");
}

/// Sort by magnitude then index, take greedily with cyclic neighbour exclusion.
fn peaks_oracle(mags: &[f64], rows: usize, cols: usize, count: usize) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    cells.sort_by(|x, y| {
        let (mx, my) = (mags[x.0 * cols + x.1], mags[y.0 * cols + y.1]);
        my.partial_cmp(&mx).unwrap().then(x.cmp(y))
    });
    let near = |a: (usize, usize), b: (usize, usize)| {
        let dr = (a.0 + rows - b.0) % rows;
        let dc = (a.1 + cols - b.1) % cols;
        (dr <= 1 || dr == rows - 1) && (dc <= 1 || dc == cols - 1)
    };
    let mut out: Vec<(usize, usize)> = Vec::new();
    for c in cells {
        if out.len() < count && out.iter().all(|&o| !near(o, c)) {
            out.push(c);
        }
    }
    let mut out: Vec<_> = out.into_iter().map(|(r, c)| (c, r)).collect();
    out.sort();
    out
}

#[test]
fn equal_isolated_peaks_exhaustive() {
    let (rows, cols) = (6, 6);
    let mut rng = seeded(9);
    for first in 0..rows * cols {
        for second in 0..rows * cols {
            if first == second {
                continue;
            }
            let mut mags: Vec<f64> = (0..rows * cols)
                .map(|_| rand::Rng::gen_range(&mut rng, 0.0..0.5))
                .collect();
            mags[first] = 2.0;
            mags[second] = 2.0;
            let got: Vec<_> = pick_peaks_in(&mags, rows, cols, 2)
                .unwrap()
                .iter()
                .map(|pk| (pk.delay, pk.doppler))
                .collect();
            assert_eq!(got, peaks_oracle(&mags, rows, cols, 2));
            let (r1, c1, r2, c2) = (first / cols, first % cols, second / cols, second % cols);
            let dr = (r1 + rows - r2) % rows;
            let dc = (c1 + cols - c2) % cols;
            let adjacent = (dr <= 1 || dr == rows - 1) && (dc <= 1 || dc == cols - 1);
            if !adjacent {
                let mut want = vec![(c1, r1), (c2, r2)];
                want.sort();
                assert_eq!(got, want);
            }
        }
    }
}
