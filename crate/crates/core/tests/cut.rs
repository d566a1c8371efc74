mod common;

use common::*;
use rand::Rng;
use thermotop::optimizer::cut_and_bisect;
use thermotop::optimizer::volume::element_hard_fraction;
use thermotop::optimizer::Problem;

const TOL_C: f64 = 1e-3;

fn soft_fraction(p: &Problem, xi: &[f64], lambda: f64) -> f64 {
    let psi: Vec<f64> = xi.iter().map(|v| v - lambda).collect();
    p.constraint(0.0, &psi).0.abs()
}

/// Smallest breakpoint-bracketed λ with soft fraction ≥ `target`, refined by plain bisection.
fn brute_root(p: &Problem, xi: &[f64], sorted: &[f64], fracs: &[f64], target: f64) -> f64 {
    let k = fracs.iter().position(|&f| f >= target).expect("target reachable");
    if k == 0 {
        return sorted[0];
    }
    let (mut a, mut b) = (sorted[k - 1], sorted[k]);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if soft_fraction(p, xi, m) >= target {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

/// Random superposition of a few plane waves sampled at the nodes.
fn smooth_field(p: &Problem, r: &mut impl Rng) -> Vec<f64> {
    let waves: Vec<([f64; 3], f64, f64)> = (0..4)
        .map(|_| {
            let k = std::array::from_fn(|_| r.gen_range(-4.0..4.0));
            (k, r.gen_range(0.0..6.3), r.gen_range(0.2..1.0))
        })
        .collect();
    (0..p.mesh().n_nodes())
        .map(|n| {
            let x = p.mesh().node_coords(n);
            waves.iter().map(|(k, ph, a)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + ph).sin()).sum()
        })
        .collect()
}

#[test]
fn bisection_matches_sorted_scan() {
    let p = problem(&slab_toml([10, 10, 10], [1.0, 1.0, 1.0], 1.0, 1.0, 0.0));
    let mut r = rng(77);
    for field in 0..100 {
        let xi = smooth_field(&p, &mut r);
        let t = r.gen_range(0.05..0.9);
        let cut = cut_and_bisect(&p, &xi, t, TOL_C, 200, None).unwrap();
        assert!(cut.residual.abs() <= TOL_C);
        assert!((soft_fraction(&p, &xi, cut.lambda) - t).abs() <= TOL_C);

        let mut sorted = xi.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        let fracs: Vec<f64> = sorted.iter().map(|&l| soft_fraction(&p, &xi, l)).collect();
        for w in fracs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "field {field}: soft volume decreased {} -> {}", w[0], w[1]);
        }
        let lo = brute_root(&p, &xi, &sorted, &fracs, t - TOL_C);
        let hi = brute_root(&p, &xi, &sorted, &fracs, t + TOL_C);
        assert!(
            cut.lambda >= lo && cut.lambda <= hi,
            "field {field}: λ = {} outside [{lo}, {hi}]",
            cut.lambda
        );
    }
}

fn trilinear(v: &[f64; 8], x: f64, y: f64, z: f64) -> f64 {
    let c = |i: usize, j: usize, k: usize| v[thermotop::mesh::LOCAL_OFFSETS.iter().position(|o| *o == [i, j, k]).unwrap()];
    let lx = |i: usize| if i == 0 { 1.0 - x } else { x };
    let ly = |j: usize| if j == 0 { 1.0 - y } else { y };
    let lz = |k: usize| if k == 0 { 1.0 - z } else { z };
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                s += c(i, j, k) * lx(i) * ly(j) * lz(k);
            }
        }
    }
    s
}

#[test]
fn hard_fraction_matches_sampling() {
    const N: usize = 100;
    let mut r = rng(2024);
    let mut done = 0;
    while done < 100 {
        let v: [f64; 8] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        if v.iter().all(|&x| x >= 0.0) || v.iter().all(|&x| x < 0.0) {
            continue;
        }
        done += 1;
        let exact = element_hard_fraction(3, &v);
        let mut hits = 0usize;
        for i in 0..N {
            for j in 0..N {
                for k in 0..N {
                    let x = (i as f64 + r.gen::<f64>()) / N as f64;
                    let y = (j as f64 + r.gen::<f64>()) / N as f64;
                    let z = (k as f64 + r.gen::<f64>()) / N as f64;
                    if trilinear(&v, x, y, z) >= 0.0 {
                        hits += 1;
                    }
                }
            }
        }
        let sampled = hits as f64 / (N * N * N) as f64;
        assert!((exact - sampled).abs() <= 1e-3, "{v:?}: {exact} vs {sampled}");
    }
}
