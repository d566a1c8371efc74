//! Exact hard-phase fractions of Q1 elements from nodal level values.

use crate::mesh::Mesh;

const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// ∫_{u0}^{u1} (a0 + a1 u)/(a2 + a3 u) du, denominator non-zero on the interval.
fn ratio_integral(a: [f64; 4], u0: f64, u1: f64) -> f64 {
    let [a0, a1, a2, a3] = a;
    let du = u1 - u0;
    if a3 == 0.0 {
        return (a0 * du + 0.5 * a1 * (u1 * u1 - u0 * u0)) / a2;
    }
    let pole = -a2 / a3;
    let dist = (pole - u0).abs().min((pole - u1).abs());
    if dist > 4.0 * du {
        let (c, h) = (0.5 * (u0 + u1), 0.5 * du);
        return h * GL8_X
            .iter()
            .zip(&GL8_W)
            .map(|(x, w)| {
                let u = c + h * x;
                w * (a0 + a1 * u) / (a2 + a3 * u)
            })
            .sum::<f64>();
    }
    let d0 = a2 + a3 * u0;
    let log = (a3 * du / d0).ln_1p();
    a1 / a3 * du + (a0 - a1 * a2 / a3) / a3 * log
}

/// Area of {(u,v) ∈ [0,1]² : a0 + a1 u + a2 v + a3 u v > 0}.
pub fn bilinear_positive_area(a: [f64; 4]) -> f64 {
    let [a0, a1, a2, a3] = a;
    let mut cuts = [0.0, 1.0, f64::NAN, f64::NAN, f64::NAN];
    let mut k = 2;
    for (num, den) in [(a0, a1), (a0 + a2, a1 + a3), (a2, a3)] {
        if den != 0.0 {
            let u = -num / den;
            if u > 0.0 && u < 1.0 {
                cuts[k] = u;
                k += 1;
            }
        }
    }
    let cuts = &mut cuts[..k];
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 <= u0 {
            continue;
        }
        let um = 0.5 * (u0 + u1);
        let am = a0 + a1 * um;
        let bm = a2 + a3 * um;
        let du = u1 - u0;
        if bm == 0.0 {
            if am > 0.0 {
                area += du;
            }
            continue;
        }
        let vstar = -am / bm;
        if vstar <= 0.0 || vstar >= 1.0 {
            // root outside the unit interval: sign of f at v = 0.5 decides
            if am + 0.5 * bm > 0.0 {
                area += du;
            }
            continue;
        }
        // ∫ v* du = −∫ (a0 + a1 u)/(a2 + a3 u) du
        let int_vstar = -ratio_integral([a0, a1, a2, a3], u0, u1);
        area += if bm > 0.0 { du - int_vstar } else { int_vstar };
    }
    area.clamp(0.0, 1.0)
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let x = h * GK_X[i];
        let s = f(c - x) + f(c + x);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, 0.5 * tol, depth - 1) + adaptive(f, m, b, 0.5 * tol, depth - 1)
}

/// Volume fraction of the unit cube where the trilinear interpolant is positive.
/// `c[i][j][k]` is the value at corner (i, j, k).
pub fn trilinear_positive_volume(c: [[[f64; 2]; 2]; 2]) -> f64 {
    // slice at x: bilinear in (y, z)
    let coeffs = |x: f64| {
        let g = |j: usize, k: usize| c[0][j][k] + x * (c[1][j][k] - c[0][j][k]);
        let (g00, g10, g01, g11) = (g(0, 0), g(1, 0), g(0, 1), g(1, 1));
        [g00, g10 - g00, g01 - g00, g11 - g10 - g01 + g00]
    };
    let slice = |x: f64| bilinear_positive_area(coeffs(x));

    // kinks of the slice area: corner sign changes, B = 0 edges, degenerate saddles
    let mut xs = vec![0.0, 1.0];
    let mut push_linear = |v0: f64, v1: f64| {
        let d = v1 - v0;
        if d != 0.0 {
            let x = -v0 / d;
            if x > 0.0 && x < 1.0 {
                xs.push(x);
            }
        }
    };
    let s0 = coeffs(0.0);
    let s1 = coeffs(1.0);
    let lin = |i: usize| (s0[i], s1[i]);
    for (j, k) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        push_linear(c[0][j][k], c[1][j][k]);
    }
    push_linear(lin(2).0, lin(2).1);
    push_linear(lin(2).0 + lin(3).0, lin(2).1 + lin(3).1);
    push_linear(lin(1).0, lin(1).1);
    push_linear(lin(1).0 + lin(3).0, lin(1).1 + lin(3).1);
    // a0 a3 − a1 a2 = 0 is quadratic in x
    let p = |x: f64| {
        let a = coeffs(x);
        a[0] * a[3] - a[1] * a[2]
    };
    let (p0, ph, p1) = (p(0.0), p(0.5), p(1.0));
    let qa = 2.0 * p1 - 4.0 * ph + 2.0 * p0;
    let qb = -p1 + 4.0 * ph - 3.0 * p0;
    let qc = p0;
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            for r in [q / qa, if q != 0.0 { qc / q } else { f64::NAN }] {
                if r > 0.0 && r < 1.0 {
                    xs.push(r);
                }
            }
        }
    } else if qb != 0.0 {
        let r = -qc / qb;
        if r > 0.0 && r < 1.0 {
            xs.push(r);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut vol = 0.0;
    for w in xs.windows(2) {
        if w[1] > w[0] {
            vol += adaptive(&slice, w[0], w[1], 1e-10 * (w[1] - w[0]), 12);
        }
    }
    vol.clamp(0.0, 1.0)
}

/// Hard fraction of an element from its nodal values (VTK node order).
pub fn element_hard_fraction(dim: usize, v: &[f64]) -> f64 {
    if v.iter().all(|&x| x >= 0.0) {
        return 1.0;
    }
    if v.iter().all(|&x| x < 0.0) {
        return 0.0;
    }
    if dim == 2 {
        bilinear_positive_area([v[0], v[1] - v[0], v[3] - v[0], v[2] - v[1] - v[3] + v[0]])
    } else {
        let mut c = [[[0.0; 2]; 2]; 2];
        for (a, o) in crate::mesh::LOCAL_OFFSETS.iter().enumerate() {
            c[o[0]][o[1]][o[2]] = v[a];
        }
        trilinear_positive_volume(c)
    }
}

/// Soft volume over `optimizable` elements and the hard fraction of every element.
/// Non-optimizable active elements report fraction 1.
pub fn marching_volume(mesh: &Mesh, optimizable: &[bool], psi: &[f64]) -> (f64, Vec<f64>) {
    let mut fractions = vec![1.0; mesh.n_elements()];
    let mut soft = 0.0;
    let vol = mesh.element_volume();
    let mut vals = [0.0; 8];
    for e in 0..mesh.n_elements() {
        if !optimizable[e] {
            continue;
        }
        let nodes = mesh.element_nodes(e);
        for (a, &n) in nodes.iter().enumerate() {
            vals[a] = psi[n];
        }
        let h = element_hard_fraction(mesh.dim, &vals[..nodes.len()]);
        fractions[e] = h;
        soft += (1.0 - h) * vol;
    }
    (soft, fractions)
}
