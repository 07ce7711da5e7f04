//! Mode unitaries and the many-photon transfer operator they induce on
//! Fock space, rendered on explicitly declared input/output bases.
//!
//! The transfer matrix element between occupations `n` and `n'` is
//!
//! ```text
//! A(U)[n', n] = prod_p sqrt(n'_p!)/sqrt(n_p!)
//!               * sum over distinct permutations of m'(n')
//!                 of U[m_1, m'_1] ... U[m_N, m'_N]
//! ```
//!
//! with `m(n)` any photon-to-mode assignment of `n`. The inner sum is a
//! permanent of a row/column-repeated submatrix of `U`; it is evaluated by
//! multiset-permutation enumeration at small photon number and by Ryser's
//! formula at larger photon number.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{mode_assignment, FockBasis, Occupation, StateVector};
use crate::linalg::unitarity_deviation;

const UNITARY_TOL: f64 = 1e-10;

/// Photon count at which the Ryser permanent path takes over from plain
/// multiset-permutation enumeration.
const RYSER_MIN_PHOTONS: usize = 6;

/// Exact factorials as doubles; desk-scale photon numbers stop well short
/// of the table end.
pub(crate) const FACTORIAL: [f64; 13] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
];

pub(crate) fn factorial(n: usize) -> f64 {
    if n < FACTORIAL.len() {
        FACTORIAL[n]
    } else {
        (1..=n).map(|i| i as f64).product()
    }
}

/// Product of count factorials of an occupation vector.
pub(crate) fn occupation_factorial(n: &Occupation) -> f64 {
    n.counts().iter().map(|&c| factorial(c)).product()
}

/// An M x M unitary acting on optical modes.
#[derive(Clone, Debug)]
pub struct ModeUnitary {
    matrix: Array2<Complex64>,
}

impl ModeUnitary {
    /// Validates unitarity to within 1e-10 in max norm.
    pub fn new(matrix: Array2<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows(),
                right: matrix.ncols(),
            });
        }
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(ModeUnitary { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        ModeUnitary {
            matrix: Array2::eye(dim),
        }
    }

    /// The symmetric 50/50 beam splitter [[1, 1], [1, -1]] / sqrt(2).
    pub fn balanced_beam_splitter() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = Array2::zeros((2, 2));
        m[[0, 0]] = Complex64::new(s, 0.0);
        m[[0, 1]] = Complex64::new(s, 0.0);
        m[[1, 0]] = Complex64::new(s, 0.0);
        m[[1, 1]] = Complex64::new(-s, 0.0);
        ModeUnitary { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    /// Row-major (re, im) pairs, the serialization used in files.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.matrix.iter().map(|z| [z.re, z.im]).collect()
    }

    pub fn from_pairs(dim: usize, pairs: &[[f64; 2]]) -> Result<Self> {
        if pairs.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                left: pairs.len(),
                right: dim * dim,
            });
        }
        let matrix = Array2::from_shape_vec(
            (dim, dim),
            pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        )
        .expect("shape checked above");
        ModeUnitary::new(matrix)
    }
}

/// Compile an optical circuit into a single mode matrix.
///
/// `components` are listed in application order (first applied first); the
/// compiled matrix is the reversed product `U_1 U_2 ... U_K`, which is the
/// order that makes `A(compose(...))` equal the composition of the
/// individual transfer operators.
pub fn compose_circuit(components: &[ModeUnitary]) -> Result<ModeUnitary> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty circuit".into()))?;
    let dim = first.dim();
    let mut product = first.matrix.clone();
    for component in &components[1..] {
        if component.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: component.dim(),
            });
        }
        product = product.dot(&component.matrix);
    }
    ModeUnitary::new(product)
}

/// Scratch buffers for matrix-element evaluation, reused across calls.
#[derive(Clone)]
pub(crate) struct ElementWorkspace {
    perm: Vec<usize>,
    row_sums: Vec<Complex64>,
    submatrix: Vec<Complex64>,
    local_column: [usize; 64],
}

impl Default for ElementWorkspace {
    fn default() -> Self {
        ElementWorkspace {
            perm: Vec::new(),
            row_sums: Vec::new(),
            submatrix: Vec::new(),
            local_column: [0; 64],
        }
    }
}

/// Sum over all distinct permutations of `m_out` of the entry products
/// `U[m_in[0], perm[0]] * ... * U[m_in[N-1], perm[N-1]]`.
///
/// `m_out` must be sorted non-decreasing. This is the inner bracket of the
/// transfer-element formula, without the factorial prefactor.
pub(crate) fn distinct_permutation_sum(
    u: &Array2<Complex64>,
    m_in: &[usize],
    m_out: &[usize],
    ws: &mut ElementWorkspace,
) -> Complex64 {
    debug_assert_eq!(m_in.len(), m_out.len());
    debug_assert!(m_out.windows(2).all(|w| w[0] <= w[1]));
    let photons = m_in.len();
    if photons == 0 {
        return Complex64::new(1.0, 0.0);
    }
    // Ryser wins once the distinct-permutation count clears 2^N; with
    // heavy mode repetition plain enumeration is both cheaper and better
    // conditioned (no alternating subset sums).
    if photons >= RYSER_MIN_PHOTONS
        && photons < 64
        && distinct_permutation_count(m_out) >= (1u64 << photons) as f64
    {
        return ryser_sum(u, m_in, m_out, ws);
    }

    // Gather the needed entries once: submatrix[a * width + d] holds
    // U[m_in[a], value_d] for the distinct values of m_out, so the hot
    // permutation loop runs over a compact buffer.
    debug_assert!(m_out.last().map_or(true, |&m| m < 64));
    let mut width = 0usize;
    for (position, &value) in m_out.iter().enumerate() {
        if position == 0 || m_out[position - 1] != value {
            ws.local_column[value] = width;
            width += 1;
        }
    }
    ws.submatrix.clear();
    for &row in m_in {
        for (position, &value) in m_out.iter().enumerate() {
            if position == 0 || m_out[position - 1] != value {
                ws.submatrix.push(u[[row, value]]);
            }
        }
    }

    ws.perm.clear();
    ws.perm
        .extend(m_out.iter().map(|&value| ws.local_column[value]));
    let submatrix = &ws.submatrix;
    let mut total = Complex64::new(0.0, 0.0);
    loop {
        let mut term = Complex64::new(1.0, 0.0);
        for (alpha, &local) in ws.perm.iter().enumerate() {
            term *= submatrix[alpha * width + local];
        }
        total += term;
        if !next_permutation(&mut ws.perm) {
            break;
        }
    }
    total
}

/// Number of distinct permutations of a sorted multiset: N! over the
/// product of multiplicity factorials.
fn distinct_permutation_count(m_out: &[usize]) -> f64 {
    let mut count = factorial(m_out.len());
    let mut run = 1usize;
    for w in m_out.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            count /= factorial(run);
            run = 1;
        }
    }
    count / factorial(run)
}

/// Advance to the next lexicographic permutation; false once exhausted.
fn next_permutation(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// Ryser evaluation of the distinct-permutation sum: the permanent of the
/// repeated-index submatrix divided by the multiplicity factorials of
/// `m_out`, computed with Gray-code subset updates.
fn ryser_sum(
    u: &Array2<Complex64>,
    m_in: &[usize],
    m_out: &[usize],
    ws: &mut ElementWorkspace,
) -> Complex64 {
    let n = m_in.len();
    debug_assert!(n < 64);

    ws.submatrix.clear();
    for &row in m_in {
        for &col in m_out {
            ws.submatrix.push(u[[row, col]]);
        }
    }
    ws.row_sums.clear();
    ws.row_sums.resize(n, Complex64::new(0.0, 0.0));

    let mut total = Complex64::new(0.0, 0.0);
    for k in 1u64..(1u64 << n) {
        let gray = k ^ (k >> 1);
        let flipped = k.trailing_zeros() as usize;
        if gray & (1 << flipped) != 0 {
            for (r, sum) in ws.row_sums.iter_mut().enumerate() {
                *sum += ws.submatrix[r * n + flipped];
            }
        } else {
            for (r, sum) in ws.row_sums.iter_mut().enumerate() {
                *sum -= ws.submatrix[r * n + flipped];
            }
        }
        let mut product = Complex64::new(1.0, 0.0);
        for sum in &ws.row_sums {
            product *= sum;
        }
        if gray.count_ones() % 2 == 0 {
            total += product;
        } else {
            total -= product;
        }
    }
    if n % 2 == 1 {
        total = -total;
    }

    // Each distinct arrangement of m_out was counted multiplicity! times.
    let mut multiplicity = 1.0;
    let mut run = 1usize;
    for w in m_out.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            multiplicity *= factorial(run);
            run = 1;
        }
    }
    multiplicity *= factorial(run);
    total / multiplicity
}

/// Transfer matrix element `A(U)[n_out, n_in]`.
pub fn matrix_element(
    u: &ModeUnitary,
    n_in: &Occupation,
    n_out: &Occupation,
) -> Result<Complex64> {
    if n_in.photons() != n_out.photons() {
        return Err(Error::PhotonMismatch {
            left: n_in.photons(),
            right: n_out.photons(),
        });
    }
    if n_in.modes() != u.dim() || n_out.modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: n_in.modes().max(n_out.modes()),
            right: u.dim(),
        });
    }
    let m_in = mode_assignment(n_in);
    let m_out = mode_assignment(n_out);
    let mut ws = ElementWorkspace::default();
    let sum = distinct_permutation_sum(u.matrix(), m_in.modes(), m_out.modes(), &mut ws);
    let prefactor = (occupation_factorial(n_out) / occupation_factorial(n_in)).sqrt();
    Ok(sum * prefactor)
}

/// The many-photon transfer operator `A(U)` restricted to declared bases.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    input_basis: Arc<FockBasis>,
    output_basis: Arc<FockBasis>,
    matrix: Array2<Complex64>,
}

impl TransferOperator {
    pub fn input_basis(&self) -> &Arc<FockBasis> {
        &self.input_basis
    }

    pub fn output_basis(&self) -> &Arc<FockBasis> {
        &self.output_basis
    }

    /// Shape (output states) x (input states).
    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }
}

/// Render `A(U)` on the given bases. Rows are independent and are computed
/// in parallel; every entry is a pure function of `(U, n_in, n_out)`, so
/// the result does not depend on scheduling.
pub fn render_transfer(
    u: &ModeUnitary,
    input_basis: Arc<FockBasis>,
    output_basis: Arc<FockBasis>,
) -> Result<TransferOperator> {
    if input_basis.modes() != u.dim() || output_basis.modes() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: input_basis.modes().max(output_basis.modes()),
            right: u.dim(),
        });
    }
    if !input_basis.is_empty()
        && !output_basis.is_empty()
        && input_basis.photons() != output_basis.photons()
    {
        return Err(Error::PhotonMismatch {
            left: input_basis.photons(),
            right: output_basis.photons(),
        });
    }

    let col_assignments: Vec<Vec<usize>> = input_basis
        .iter()
        .map(|n| mode_assignment(n).modes().to_vec())
        .collect();
    let col_inv_sqrt_fact: Vec<f64> = input_basis
        .iter()
        .map(|n| 1.0 / occupation_factorial(n).sqrt())
        .collect();
    let row_assignments: Vec<Vec<usize>> = output_basis
        .iter()
        .map(|n| mode_assignment(n).modes().to_vec())
        .collect();
    let row_sqrt_fact: Vec<f64> = output_basis
        .iter()
        .map(|n| occupation_factorial(n).sqrt())
        .collect();

    let rows: Vec<Vec<Complex64>> = (0..output_basis.len())
        .into_par_iter()
        .map(|i| {
            let mut ws = ElementWorkspace::default();
            let m_out = &row_assignments[i];
            (0..input_basis.len())
                .map(|j| {
                    let sum =
                        distinct_permutation_sum(u.matrix(), &col_assignments[j], m_out, &mut ws);
                    sum * (row_sqrt_fact[i] * col_inv_sqrt_fact[j])
                })
                .collect()
        })
        .collect();

    let mut matrix = Array2::zeros((output_basis.len(), input_basis.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            matrix[[i, j]] = v;
        }
    }
    Ok(TransferOperator {
        input_basis,
        output_basis,
        matrix,
    })
}

/// Apply a rendered transfer operator to a state vector.
pub fn apply(t: &TransferOperator, psi: &StateVector) -> Result<StateVector> {
    if **psi.basis() != *t.input_basis {
        return Err(Error::BasisMismatch);
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); t.output_basis.len()];
    for (i, amp) in amplitudes.iter_mut().enumerate() {
        for (j, c) in psi.amplitudes().iter().enumerate() {
            *amp += t.matrix[[i, j]] * c;
        }
    }
    StateVector::new(Arc::clone(&t.output_basis), amplitudes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, max_abs_diff, random_unitary};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn occ(counts: &[usize]) -> Occupation {
        Occupation::new(counts.to_vec())
    }

    fn random_mode_unitary(dim: usize, rng: &mut ChaCha8Rng) -> ModeUnitary {
        ModeUnitary::new(random_unitary(dim, rng)).unwrap()
    }

    #[test]
    fn unitarity_is_validated() {
        let mut m = Array2::<Complex64>::eye(2);
        m[[0, 0]] = Complex64::new(1.5, 0.0);
        assert!(matches!(ModeUnitary::new(m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn compose_base_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_mode_unitary(3, &mut rng);
        let composed = compose_circuit(&[u.clone()]).unwrap();
        assert!(max_abs_diff(composed.matrix(), u.matrix()) < 1e-14);

        let v = random_mode_unitary(3, &mut rng);
        let composed = compose_circuit(&[ModeUnitary::identity(3), v.clone()]).unwrap();
        assert!(max_abs_diff(composed.matrix(), v.matrix()) < 1e-14);

        assert!(compose_circuit(&[]).is_err());
        let w = random_mode_unitary(2, &mut rng);
        assert!(compose_circuit(&[u, w]).is_err());
    }

    #[test]
    fn single_photon_element_is_unitary_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_mode_unitary(4, &mut rng);
        for alpha in 0..4 {
            for beta in 0..4 {
                let mut n_in = vec![0; 4];
                n_in[alpha] = 1;
                let mut n_out = vec![0; 4];
                n_out[beta] = 1;
                let e = matrix_element(&u, &occ(&n_in), &occ(&n_out)).unwrap();
                assert!((e - u.matrix()[[alpha, beta]]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn hong_ou_mandel_dip() {
        let bs = ModeUnitary::balanced_beam_splitter();
        let e = matrix_element(&bs, &occ(&[1, 1]), &occ(&[1, 1])).unwrap();
        assert!(e.norm() < 1e-13);
    }

    #[test]
    fn bunched_element_is_squared_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_mode_unitary(2, &mut rng);
        let e = matrix_element(&u, &occ(&[2, 0]), &occ(&[2, 0])).unwrap();
        let expected = u.matrix()[[0, 0]] * u.matrix()[[0, 0]];
        assert!((e - expected).norm() < 1e-13);
    }

    #[test]
    fn photon_mismatch_is_rejected() {
        let u = ModeUnitary::identity(2);
        assert!(matches!(
            matrix_element(&u, &occ(&[1, 0]), &occ(&[1, 1])),
            Err(Error::PhotonMismatch { .. })
        ));
    }

    #[test]
    fn beam_splitter_two_photon_column() {
        let bs = ModeUnitary::balanced_beam_splitter();
        let basis = Arc::new(FockBasis::full(2, 2));
        let t = render_transfer(&bs, Arc::clone(&basis), Arc::clone(&basis)).unwrap();
        let j = basis.position(&occ(&[1, 1])).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [s, 0.0, -s];
        for (i, &value) in expect.iter().enumerate() {
            assert!((t.matrix()[[i, j]] - Complex64::new(value, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn single_photon_rendering_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in 2..=5 {
            let u = random_mode_unitary(dim, &mut rng);
            let basis = Arc::new(FockBasis::full(1, dim));
            let t = render_transfer(&u, Arc::clone(&basis), basis).unwrap();
            assert!(max_abs_diff(t.matrix(), &u.matrix().t().to_owned()) < 1e-12);
        }
    }

    #[test]
    fn identity_renders_to_identity() {
        let basis = Arc::new(FockBasis::full(3, 3));
        let t = render_transfer(
            &ModeUnitary::identity(3),
            Arc::clone(&basis),
            Arc::clone(&basis),
        )
        .unwrap();
        assert!(max_abs_diff(t.matrix(), &Array2::eye(basis.len())) < 1e-13);
    }

    #[test]
    fn full_basis_rendering_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, m) in [(2usize, 3usize), (3, 4), (3, 5)] {
            let u = random_mode_unitary(m, &mut rng);
            let basis = Arc::new(FockBasis::full(n, m));
            let t = render_transfer(&u, Arc::clone(&basis), Arc::clone(&basis)).unwrap();
            let product = dagger(t.matrix()).dot(t.matrix());
            assert!(
                max_abs_diff(&product, &Array2::eye(basis.len())) < 1e-9,
                "N={n} M={m}"
            );
        }
    }

    #[test]
    fn restricted_columns_have_bounded_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_mode_unitary(4, &mut rng);
        let input = Arc::new(FockBasis::full(2, 4));
        let output = Arc::new(FockBasis::filtered(2, 4, |s| s.counts()[0] == 0));
        let t = render_transfer(&u, Arc::clone(&input), output).unwrap();
        for j in 0..input.len() {
            let norm_sq: f64 = (0..t.output_basis().len())
                .map(|i| t.matrix()[[i, j]].norm_sqr())
                .sum();
            assert!(norm_sq <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn homomorphism_on_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 2..=4 {
            for n in 1..=3 {
                let u1 = random_mode_unitary(m, &mut rng);
                let u2 = random_mode_unitary(m, &mut rng);
                let basis = Arc::new(FockBasis::full(n, m));
                let combined = compose_circuit(&[u1.clone(), u2.clone()]).unwrap();
                let a_combined =
                    render_transfer(&combined, Arc::clone(&basis), Arc::clone(&basis)).unwrap();
                let a1 = render_transfer(&u1, Arc::clone(&basis), Arc::clone(&basis)).unwrap();
                let a2 = render_transfer(&u2, Arc::clone(&basis), Arc::clone(&basis)).unwrap();
                let sequential = a2.matrix().dot(a1.matrix());
                assert!(
                    max_abs_diff(a_combined.matrix(), &sequential) < 1e-9,
                    "N={n} M={m}"
                );
            }
        }
    }

    #[test]
    fn apply_identity_rendering_is_identity() {
        let basis = Arc::new(FockBasis::full(2, 3));
        let t = render_transfer(
            &ModeUnitary::identity(3),
            Arc::clone(&basis),
            Arc::clone(&basis),
        )
        .unwrap();
        let psi = StateVector::basis_state(Arc::clone(&basis), &occ(&[1, 1, 0])).unwrap();
        let out = apply(&t, &psi).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn apply_preserves_norm_on_full_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_mode_unitary(3, &mut rng);
        let basis = Arc::new(FockBasis::full(2, 3));
        let t = render_transfer(&u, Arc::clone(&basis), Arc::clone(&basis)).unwrap();
        let amplitudes: Vec<Complex64> = (0..basis.len())
            .map(|_| {
                Complex64::new(
                    crate::linalg::standard_normal(&mut rng),
                    crate::linalg::standard_normal(&mut rng),
                )
            })
            .collect();
        let psi = StateVector::new(Arc::clone(&basis), amplitudes)
            .unwrap()
            .normalized()
            .unwrap();
        let out = apply(&t, &psi).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);

        let other = Arc::new(FockBasis::full(1, 3));
        let bad = StateVector::basis_state(other, &occ(&[1, 0, 0])).unwrap();
        assert!(matches!(apply(&t, &bad), Err(Error::BasisMismatch)));
    }

    #[test]
    fn element_invariant_under_input_labeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_mode_unitary(4, &mut rng);
        let basis = FockBasis::full(3, 4);
        let mut ws = ElementWorkspace::default();
        for n_in in basis.iter() {
            for n_out in basis.iter() {
                let canonical = mode_assignment(n_in).modes().to_vec();
                let mut shuffled = canonical.clone();
                shuffled.shuffle(&mut rng);
                let m_out = mode_assignment(n_out).modes().to_vec();
                let a = distinct_permutation_sum(u.matrix(), &canonical, &m_out, &mut ws);
                let b = distinct_permutation_sum(u.matrix(), &shuffled, &m_out, &mut ws);
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ryser_path_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dim = 4;
        // Plain matrix is enough: the identity under test is pure algebra.
        let mut m = Array2::<Complex64>::zeros((dim, dim));
        for v in m.iter_mut() {
            *v = Complex64::new(
                crate::linalg::standard_normal(&mut rng),
                crate::linalg::standard_normal(&mut rng),
            );
        }
        let mut ws = ElementWorkspace::default();
        for photons in [6usize, 7] {
            for _ in 0..20 {
                let mut m_in: Vec<usize> =
                    (0..photons).map(|_| rng.gen_range(0..dim)).collect();
                let mut m_out: Vec<usize> =
                    (0..photons).map(|_| rng.gen_range(0..dim)).collect();
                m_in.sort_unstable();
                m_out.sort_unstable();
                let fast = ryser_sum(&m, &m_in, &m_out, &mut ws);

                // Reference path: force enumeration regardless of size.
                ws.perm.clear();
                ws.perm.extend_from_slice(&m_out);
                let mut slow = Complex64::new(0.0, 0.0);
                loop {
                    let mut term = Complex64::new(1.0, 0.0);
                    for (&row, &col) in m_in.iter().zip(ws.perm.iter()) {
                        term *= m[[row, col]];
                    }
                    slow += term;
                    if !next_permutation(&mut ws.perm) {
                        break;
                    }
                }
                assert!(
                    (fast - slow).norm() <= 1e-10 * slow.norm().max(1.0),
                    "N={photons}"
                );
            }
        }
    }

    #[test]
    fn vacuum_element_is_one() {
        let u = ModeUnitary::identity(3);
        let e = matrix_element(&u, &occ(&[0, 0, 0]), &occ(&[0, 0, 0])).unwrap();
        assert!((e - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
