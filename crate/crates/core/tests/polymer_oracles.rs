use polymerlab_core::polymer::{
    log_partition, logz_derivatives, sample_path, DisorderGrid, OccupationTable, MAX_DERIVATIVE_ORDER,
};
use polymerlab_core::rng::{stream, Lane};
use polymerlab_core::weights::WeightFamily;
use proptest::prelude::*;
use rand::Rng;

/// Every up-right path as a list of 0-based sites.
fn all_paths(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(n: usize, i: usize, j: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        cur.push((i, j));
        if i + 1 == n && j + 1 == n {
            out.push(cur.clone());
        } else {
            if i + 1 < n {
                walk(n, i + 1, j, cur, out);
            }
            if j + 1 < n {
                walk(n, i, j + 1, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    walk(n, 0, 0, &mut Vec::new(), &mut out);
    out
}

fn path_energies(grid: &DisorderGrid) -> Vec<(Vec<(usize, usize)>, f64)> {
    let n = grid.n;
    all_paths(n)
        .into_iter()
        .map(|p| {
            let e = p.iter().map(|&(i, j)| grid.weights[i * n + j]).sum();
            (p, e)
        })
        .collect()
}

fn brute_log_z(grid: &DisorderGrid) -> f64 {
    let energies: Vec<f64> = path_energies(grid).into_iter().map(|(_, e)| e).collect();
    let m = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + energies.iter().map(|e| (e - m).exp()).sum::<f64>().ln()
}

fn random_grid(n: usize, seed: u64) -> DisorderGrid {
    DisorderGrid::generate(n, &WeightFamily::exp_gamma(1.3), seed, n as u64).unwrap()
}

#[test]
fn dynamic_programme_matches_path_enumeration() {
    for n in 1..=6usize {
        assert_eq!(all_paths(n).len() as u64, (1..n as u64).fold(1, |a, k| a * (n as u64 - 1 + k) / k));
        for seed in 0..50u64 {
            let g = random_grid(n, seed);
            let dp = log_partition(&g);
            let bf = brute_log_z(&g);
            assert!((dp - bf).abs() <= 1e-10 * bf.abs().max(1.0), "n={n} seed={seed}: {dp} vs {bf}");
        }
    }
}

#[test]
fn occupations_match_enumeration_and_sum_to_one_per_antidiagonal() {
    let g = random_grid(4, 8);
    let table = OccupationTable::new(&g);
    let paths = path_energies(&g);
    let log_z = brute_log_z(&g);
    for i in 0..4 {
        for j in 0..4 {
            let visit: f64 = paths.iter().filter(|(p, _)| p.contains(&(i, j))).map(|(_, e)| (e - log_z).exp()).sum();
            let p = table.occupation(i + 1, j + 1).unwrap();
            assert!((p - visit).abs() < 1e-12, "({i},{j}): {p} vs {visit}");
        }
    }
    assert!((table.occupation(1, 1).unwrap() - 1.0).abs() < 1e-12);
    assert!((table.occupation(4, 4).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn antidiagonal_sums_on_larger_grids() {
    for n in [5usize, 9, 16] {
        for seed in 0..5 {
            let g = random_grid(n, 100 + seed);
            let table = OccupationTable::new(&g);
            for c in 2..=2 * n {
                let s: f64 = (1..=n)
                    .filter(|&i| c > i && c - i >= 1 && c - i <= n)
                    .map(|i| table.occupation(i, c - i).unwrap())
                    .sum();
                assert!((s - 1.0).abs() < 1e-10, "n={n} c={c}: {s}");
            }
        }
    }
}

/// Fornberg weights for the `order`-th derivative at 0 on the given nodes.
fn fornberg(order: usize, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

#[test]
fn derivatives_match_finite_differences() {
    let h = 0.1;
    let offsets: Vec<f64> = (-7..=7).map(|k| k as f64 * h).collect();
    for seed in 0..5u64 {
        let g = random_grid(5, 500 + seed);
        for &(i, j) in &[(2usize, 3usize), (3, 3), (1, 4), (5, 2)] {
            let y0 = g.get(i, j).unwrap();
            let values: Vec<f64> = offsets
                .iter()
                .map(|d| {
                    let mut shifted = g.clone();
                    shifted.set(i, j, y0 + d).unwrap();
                    log_partition(&shifted)
                })
                .collect();
            let exact = logz_derivatives(&g, i, j, 4).unwrap();
            for order in 1..=4 {
                let w = fornberg(order, &offsets);
                let fd: f64 = w.iter().zip(&values).map(|(a, b)| a * b).sum();
                assert!((fd - exact[order - 1]).abs() < 1e-6, "seed={seed} ({i},{j}) order={order}: {fd} vs {}", exact[order - 1]);
            }
        }
    }
    assert!(logz_derivatives(&random_grid(3, 1), 1, 1, MAX_DERIVATIVE_ORDER).is_ok());
}

#[test]
fn sampled_paths_reproduce_occupations() {
    let g = random_grid(4, 77);
    let table = OccupationTable::new(&g);
    let draws = 100_000usize;
    let mut rng = stream(3, 0, Lane::Paths);
    let mut counts = [[0usize; 4]; 4];
    for _ in 0..draws {
        let path = sample_path(&table, &mut rng);
        assert_eq!(path.sites.len(), 7);
        for w in path.sites.windows(2) {
            let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(step == (1, 0) || step == (0, 1));
        }
        for &(i, j) in &path.sites {
            counts[i - 1][j - 1] += 1;
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            let p = table.occupation(i + 1, j + 1).unwrap();
            let freq = counts[i][j] as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-9);
            assert!((freq - p).abs() <= 4.0 * se, "({i},{j}): {freq} vs {p}");
        }
    }
    let _ = rng.random::<u8>();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_weight_raises_log_z(n in 1usize..8, seed in 0u64..1000, site in 0usize..64, bump in 1e-3f64..2.0) {
        let g = random_grid(n, seed);
        let k = site % (n * n);
        let mut h = g.clone();
        h.weights[k] += bump;
        prop_assert!(log_partition(&h) > log_partition(&g));
    }
}
