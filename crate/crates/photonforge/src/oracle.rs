//! Brute-force reference simulator: applies a mode unitary to a Fock state
//! by literally expanding the transformed creation-operator polynomial
//! over the vacuum, collecting the M^N monomials by sorted photon
//! assignment. Deliberately the simplest possible code; it exists to
//! cross-check the rendered transfer operator at small scale and is never
//! used in optimization loops.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{mode_assignment, occupation_from_assignment, FockBasis, Occupation, StateVector};
use crate::transfer::{occupation_factorial, ModeUnitary};

const EXPANSION_GUARD: u128 = 1_000_000;

/// Accumulated coefficients of the expanded creation-operator monomials,
/// keyed by sorted assignment.
#[derive(Debug, Clone)]
pub struct MonomialExpansion {
    terms: BTreeMap<Vec<usize>, Complex64>,
}

impl MonomialExpansion {
    pub fn terms(&self) -> &BTreeMap<Vec<usize>, Complex64> {
        &self.terms
    }
}

/// Expand the polynomial for one input occupation: each photon at input
/// mode `m` contributes a factor `sum_b U[m, b] a^dag_b`.
pub fn expand(u: &ModeUnitary, n: &Occupation) -> Result<MonomialExpansion> {
    let modes = u.dim();
    if n.modes() != modes {
        return Err(Error::DimensionMismatch {
            left: n.modes(),
            right: modes,
        });
    }
    let photons = n.photons();
    let raw_terms = (modes as u128).pow(photons as u32);
    if raw_terms > EXPANSION_GUARD {
        return Err(Error::ResourceGuard {
            quantity: "M^N expansion terms",
            value: raw_terms,
            limit: EXPANSION_GUARD,
        });
    }

    let assignment = mode_assignment(n);
    let mut terms = BTreeMap::new();
    let mut chosen = Vec::with_capacity(photons);
    // 1/sqrt(prod n_p!) from writing |n> as normalized creation operators.
    let initial = Complex64::new(1.0 / occupation_factorial(n).sqrt(), 0.0);
    expand_rec(
        u,
        assignment.modes(),
        0,
        initial,
        &mut chosen,
        &mut terms,
    );
    Ok(MonomialExpansion { terms })
}

fn expand_rec(
    u: &ModeUnitary,
    input_modes: &[usize],
    depth: usize,
    coefficient: Complex64,
    chosen: &mut Vec<usize>,
    terms: &mut BTreeMap<Vec<usize>, Complex64>,
) {
    if depth == input_modes.len() {
        let mut key = chosen.clone();
        key.sort_unstable();
        *terms.entry(key).or_insert(Complex64::new(0.0, 0.0)) += coefficient;
        return;
    }
    let row = input_modes[depth];
    for beta in 0..u.dim() {
        let factor = u.matrix()[[row, beta]];
        if factor.norm_sqr() == 0.0 {
            continue;
        }
        chosen.push(beta);
        expand_rec(u, input_modes, depth + 1, coefficient * factor, chosen, terms);
        chosen.pop();
    }
}

/// Apply `A(U)` to a single Fock state by direct expansion; the output is
/// expressed over the full (N, M) basis.
pub fn symbolic_apply(u: &ModeUnitary, n: &Occupation) -> Result<StateVector> {
    let expansion = expand(u, n)?;
    let modes = u.dim();
    let basis = Arc::new(FockBasis::full(n.photons(), modes));
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (key, coefficient) in expansion.terms() {
        let assignment = crate::fock::ModeAssignment::from_sorted(key.clone())?;
        let occupation = occupation_from_assignment(&assignment, modes)?;
        // a^dag string over vacuum carries sqrt(prod n'_p!).
        let amplitude = coefficient * occupation_factorial(&occupation).sqrt();
        let position = basis.position(&occupation).expect("full basis");
        amplitudes[position] = amplitude;
    }
    StateVector::new(basis, amplitudes)
}
