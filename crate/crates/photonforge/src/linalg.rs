//! Small dense complex-matrix utilities: matrix exponential, random
//! unitaries, and deviation norms.
//!
//! Mode counts stay in the single digits here, so everything is written
//! for clarity over asymptotics.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

/// Matrix exponential by scaling-and-squaring with Pade approximants,
/// degree chosen from the 1-norm (Higham 2005). Accurate to near machine
/// precision for the matrix sizes used in this crate.
pub fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return Array2::zeros((0, 0));
    }

    let norm = one_norm(a);
    // Degree thresholds theta_m from Higham 2005, Table 10.3.
    if norm <= 1.495_585_217_958_292e-2 {
        return pade_low(a, &PADE3);
    }
    if norm <= 2.539_398_330_063_230e-1 {
        return pade_low(a, &PADE5);
    }
    if norm <= 9.504_178_996_162_932e-1 {
        return pade_low(a, &PADE7);
    }
    if norm <= 2.097_847_961_257_068 {
        return pade_low(a, &PADE9);
    }
    let theta13 = 5.371_920_351_148_152;
    let scaling = if norm > theta13 {
        (norm / theta13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a * Complex64::new(0.5f64.powi(scaling as i32), 0.0);
    let mut result = pade13(&scaled);
    for _ in 0..scaling {
        result = result.dot(&result);
    }
    result
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];

/// Evaluate an odd/even-split Pade approximant of degree 3, 5, 7, or 9.
fn pade_low(a: &Array2<Complex64>, coeffs: &[f64]) -> Array2<Complex64> {
    let n = a.nrows();
    let eye = Array2::<Complex64>::eye(n);
    let a2 = a.dot(a);

    // Powers of A^2 up to what the degree needs.
    let mut even = &eye * Complex64::new(coeffs[0], 0.0);
    let mut odd_poly = &eye * Complex64::new(coeffs[1], 0.0);
    let mut power = eye.clone();
    for k in 1..=(coeffs.len() / 2 - 1) {
        power = power.dot(&a2);
        even = even + &power * Complex64::new(coeffs[2 * k], 0.0);
        if 2 * k + 1 < coeffs.len() {
            odd_poly = odd_poly + &power * Complex64::new(coeffs[2 * k + 1], 0.0);
        }
    }
    let u = a.dot(&odd_poly);
    let numerator = &even + &u;
    let denominator = &even - &u;
    solve(&denominator, &numerator)
}

// Pade(13) coefficients, Higham 2005 Table 10.4 (normalized form).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn pade13(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let eye = Array2::<Complex64>::eye(n);
    let c = |k: usize| Complex64::new(PADE13[k], 0.0);

    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let w1 = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let w2 = &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &eye * c(1);
    let u = a.dot(&(w1.dot(&a6) + w2));

    let z1 = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let z2 = &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &eye * c(0);
    let v = z1.dot(&a6) + z2;

    let numerator = &v + &u;
    let denominator = &v - &u;
    solve(&denominator, &numerator)
}

/// Solve A X = B by Gaussian elimination with partial pivoting.
fn solve(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut lhs = a.clone();
    let mut rhs = b.clone();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = lhs[[col, col]].norm();
        for row in col + 1..n {
            let mag = lhs[[row, col]].norm();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        assert!(pivot_mag > 0.0, "singular matrix in Pade solve");
        if pivot_row != col {
            for j in 0..n {
                lhs.swap([col, j], [pivot_row, j]);
            }
            for j in 0..m {
                rhs.swap([col, j], [pivot_row, j]);
            }
        }
        let pivot = lhs[[col, col]];
        for row in col + 1..n {
            let factor = lhs[[row, col]] / pivot;
            if factor.norm_sqr() == 0.0 {
                continue;
            }
            for j in col..n {
                let v = lhs[[col, j]];
                lhs[[row, j]] -= factor * v;
            }
            for j in 0..m {
                let v = rhs[[col, j]];
                rhs[[row, j]] -= factor * v;
            }
        }
    }

    let mut x = Array2::<Complex64>::zeros((n, m));
    for col in (0..n).rev() {
        for j in 0..m {
            let mut sum = rhs[[col, j]];
            for k in col + 1..n {
                sum -= lhs[[col, k]] * x[[k, j]];
            }
            x[[col, j]] = sum / lhs[[col, col]];
        }
    }
    x
}

/// Maximum column sum of absolute values.
fn one_norm(a: &Array2<Complex64>) -> f64 {
    let mut max = 0.0f64;
    for j in 0..a.ncols() {
        let sum: f64 = (0..a.nrows()).map(|i| a[[i, j]].norm()).sum();
        max = max.max(sum);
    }
    max
}

/// Conjugate transpose.
pub fn dagger(a: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}

/// Largest entry magnitude of A - B.
pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entry magnitude of U^dagger U - I.
pub fn unitarity_deviation(u: &Array2<Complex64>) -> f64 {
    let product = dagger(u).dot(u);
    let eye = Array2::<Complex64>::eye(u.nrows());
    max_abs_diff(&product, &eye)
}

/// One standard-normal sample (Box-Muller).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-like random unitary from Gram-Schmidt orthonormalization of a
/// complex Gaussian matrix. Deterministic given the generator state.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array2<Complex64> {
    loop {
        let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
        let mut degenerate = false;
        for _ in 0..dim {
            let mut col: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(standard_normal(rng), standard_normal(rng)))
                .collect();
            for prev in &columns {
                let overlap: Complex64 =
                    prev.iter().zip(&col).map(|(p, c)| p.conj() * c).sum();
                for (c, p) in col.iter_mut().zip(prev) {
                    *c -= overlap * p;
                }
            }
            let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-8 {
                degenerate = true;
                break;
            }
            for c in &mut col {
                *c /= norm;
            }
            columns.push(col);
        }
        if degenerate {
            continue;
        }
        let mut u = Array2::<Complex64>::zeros((dim, dim));
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                u[[i, j]] = v;
            }
        }
        return u;
    }
}
