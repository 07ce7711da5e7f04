//! Bosonic Fock bases: occupation vectors, photon-to-mode assignments, and
//! indexed basis enumerations.
//!
//! The canonical enumeration order is lexicographically decreasing in the
//! occupation entries, so `|N,0,...,0>` comes first and `|0,...,0,N>` last.
//! All mode indices are 0-based.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Photon counts per optical mode.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(Vec<usize>);

impl Occupation {
    pub fn new(counts: Vec<usize>) -> Self {
        Occupation(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    /// Number of modes.
    pub fn modes(&self) -> usize {
        self.0.len()
    }

    /// Total photon number.
    pub fn photons(&self) -> usize {
        self.0.iter().sum()
    }

    /// Concatenate two registers. `self` comes first, matching the
    /// ancilla-before-computational mode convention used throughout.
    pub fn concat(&self, other: &Occupation) -> Occupation {
        let mut counts = Vec::with_capacity(self.0.len() + other.0.len());
        counts.extend_from_slice(&self.0);
        counts.extend_from_slice(&other.0);
        Occupation(counts)
    }

    /// Restriction to a subset of modes, in the order given.
    pub fn restrict(&self, mode_indices: &[usize]) -> Occupation {
        Occupation(mode_indices.iter().map(|&m| self.0[m]).collect())
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl fmt::Debug for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}>", self)
    }
}

impl FromStr for Occupation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Occupation(Vec::new()));
        }
        let counts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad occupation entry {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Occupation(counts))
    }
}

/// Mode location of each photon, sorted non-decreasing. The canonical
/// representative of the labeling freedom in choosing which photon sits
/// where.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeAssignment(Vec<usize>);

impl ModeAssignment {
    /// Wrap an already-sorted photon-to-mode list.
    pub fn from_sorted(modes: Vec<usize>) -> Result<Self> {
        if modes.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig(
                "mode assignment must be sorted non-decreasing".into(),
            ));
        }
        Ok(ModeAssignment(modes))
    }

    pub fn modes(&self) -> &[usize] {
        &self.0
    }

    pub fn photons(&self) -> usize {
        self.0.len()
    }
}

/// Canonical (sorted) assignment of photons to modes for an occupation.
pub fn mode_assignment(n: &Occupation) -> ModeAssignment {
    let mut modes = Vec::with_capacity(n.photons());
    for (mode, &count) in n.counts().iter().enumerate() {
        for _ in 0..count {
            modes.push(mode);
        }
    }
    ModeAssignment(modes)
}

/// Inverse of [`mode_assignment`]: count multiplicities of each mode index.
pub fn occupation_from_assignment(m: &ModeAssignment, modes: usize) -> Result<Occupation> {
    let mut counts = vec![0usize; modes];
    for &mode in m.modes() {
        if mode >= modes {
            return Err(Error::ModeOutOfRange { index: mode, modes });
        }
        counts[mode] += 1;
    }
    Ok(Occupation(counts))
}

/// Dimension of the Fock space of `photons` bosons in `modes` modes:
/// the binomial coefficient C(photons + modes - 1, photons).
///
/// Evaluated multiplicatively so intermediates stay exact whenever the
/// result fits the machine word; overflow is reported, never wrapped.
pub fn hilbert_dim(photons: usize, modes: usize) -> Result<usize> {
    if modes == 0 {
        // Only the empty register; no photon can be placed.
        return if photons == 0 {
            Ok(1)
        } else {
            Err(Error::InvalidModeCount { photons, modes })
        };
    }
    let n = photons as u128;
    let k = (modes - 1) as u128;
    let r = n.min(k);
    let mut result: u128 = 1;
    for i in 1..=r {
        // Multiplying before dividing keeps every step an exact integer.
        result = result
            .checked_mul(n + k - r + i)
            .ok_or(Error::DimensionOverflow { photons, modes })?
            / i;
    }
    usize::try_from(result).map_err(|_| Error::DimensionOverflow { photons, modes })
}

/// An ordered Fock basis with an exact reverse index.
#[derive(Clone, Debug)]
pub struct FockBasis {
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
    modes: usize,
    photons: usize,
}

impl FockBasis {
    /// Full basis of `photons` bosons in `modes` modes, canonical order.
    pub fn full(photons: usize, modes: usize) -> Self {
        Self::filtered(photons, modes, |_| true)
    }

    /// Canonically ordered basis keeping only states satisfying `keep`.
    pub fn filtered<F>(photons: usize, modes: usize, keep: F) -> Self
    where
        F: Fn(&Occupation) -> bool,
    {
        let mut states = Vec::new();
        if modes == 0 {
            if photons == 0 {
                let vacuum = Occupation(Vec::new());
                if keep(&vacuum) {
                    states.push(vacuum);
                }
            }
        } else {
            let mut prefix = Vec::with_capacity(modes);
            enumerate_rec(photons, modes, &mut prefix, &keep, &mut states);
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        FockBasis {
            states,
            index,
            modes,
            photons,
        }
    }

    /// Basis from an explicit state list (e.g. the inputs of a gate table).
    /// States must share one mode count and one photon number and contain
    /// no duplicates.
    pub fn from_states(states: Vec<Occupation>, modes: usize) -> Result<Self> {
        let photons = states.first().map(|s| s.photons()).unwrap_or(0);
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if s.modes() != modes {
                return Err(Error::DimensionMismatch {
                    left: s.modes(),
                    right: modes,
                });
            }
            if s.photons() != photons {
                return Err(Error::PhotonMismatch {
                    left: s.photons(),
                    right: photons,
                });
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::DuplicateState {
                    state: s.to_string(),
                });
            }
        }
        Ok(FockBasis {
            states,
            index,
            modes,
            photons,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn state(&self, i: usize) -> &Occupation {
        &self.states[i]
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Occupation> {
        self.states.iter()
    }

    /// Position of a state in the enumeration, if present.
    pub fn position(&self, state: &Occupation) -> Option<usize> {
        self.index.get(state).copied()
    }
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes && self.states == other.states
    }
}

fn enumerate_rec<F>(
    remaining: usize,
    modes_left: usize,
    prefix: &mut Vec<usize>,
    keep: &F,
    out: &mut Vec<Occupation>,
) where
    F: Fn(&Occupation) -> bool,
{
    if modes_left == 1 {
        prefix.push(remaining);
        let state = Occupation(prefix.clone());
        if keep(&state) {
            out.push(state);
        }
        prefix.pop();
        return;
    }
    // Descending first entry yields the lexicographically decreasing order.
    for count in (0..=remaining).rev() {
        prefix.push(count);
        enumerate_rec(remaining - count, modes_left - 1, prefix, keep, out);
        prefix.pop();
    }
}

/// Complex amplitudes over a Fock basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    basis: Arc<FockBasis>,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(basis: Arc<FockBasis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if basis.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch {
                left: basis.len(),
                right: amplitudes.len(),
            });
        }
        Ok(StateVector { basis, amplitudes })
    }

    /// Unit amplitude on a single basis state.
    pub fn basis_state(basis: Arc<FockBasis>, state: &Occupation) -> Result<Self> {
        let pos = basis.position(state).ok_or(Error::BasisMismatch)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
        amplitudes[pos] = Complex64::new(1.0, 0.0);
        Ok(StateVector { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, state: &Occupation) -> Option<Complex64> {
        self.basis.position(state).map(|i| self.amplitudes[i])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Scale to unit norm. Errors on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < 1e-300 {
            return Err(Error::NotNormalized { norm });
        }
        let amplitudes = self.amplitudes.iter().map(|a| a / norm).collect();
        Ok(StateVector {
            basis: Arc::clone(&self.basis),
            amplitudes,
        })
    }
}
