//! Measurement-assisted (post-selected) Kraus operators: attach an ancilla
//! state, apply the many-photon transfer operator of a mode unitary, and
//! project the ancilla modes onto one Fock outcome. Also houses the gate
//! fidelity and success-probability measures and the embedding of ideal
//! gate tables into larger registers.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{mode_assignment, FockBasis, Occupation, StateVector};
use crate::gates::GateTable;
use crate::transfer::{
    distinct_permutation_sum, occupation_factorial, ElementWorkspace, ModeUnitary,
};

/// A normalized ancilla resource: N_a photons in M_a modes with explicit
/// amplitudes over the full ancilla Fock basis.
#[derive(Clone, Debug)]
pub struct Ancilla {
    photons: usize,
    modes: usize,
    state: StateVector,
}

impl Ancilla {
    pub fn new(photons: usize, modes: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        let basis = Arc::new(FockBasis::full(photons, modes));
        let state = StateVector::new(basis, amplitudes)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Ancilla {
            photons,
            modes,
            state,
        })
    }

    /// The empty ancilla: no photons, no modes. Linking with it is the
    /// identity.
    pub fn trivial() -> Self {
        let basis = Arc::new(FockBasis::full(0, 0));
        let state = StateVector::new(basis, vec![Complex64::new(1.0, 0.0)])
            .expect("single vacuum state");
        Ancilla {
            photons: 0,
            modes: 0,
            state,
        }
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        self.state.basis()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.state.amplitudes()
    }
}

/// A projective measurement outcome on the ancilla modes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projector {
    outcome: Occupation,
}

impl Projector {
    pub fn new(outcome: Occupation) -> Self {
        Projector { outcome }
    }

    pub fn outcome(&self) -> &Occupation {
        &self.outcome
    }
}

/// Inputs a Kraus operator was assembled from, kept for records and
/// re-verification.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub unitary: ModeUnitary,
    pub ancilla: Ancilla,
    pub projector: Projector,
}

/// The post-selected operator E restricted to computational bases. Shape
/// is (output states) x (input states); photon and mode number are
/// preserved by construction.
#[derive(Clone, Debug)]
pub struct KrausOperator {
    input_basis: Arc<FockBasis>,
    output_basis: Arc<FockBasis>,
    matrix: Array2<Complex64>,
    provenance: Provenance,
}

impl KrausOperator {
    pub fn input_basis(&self) -> &Arc<FockBasis> {
        &self.input_basis
    }

    pub fn output_basis(&self) -> &Arc<FockBasis> {
        &self.output_basis
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Row-major (re, im) pairs for file output.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.matrix.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// Assemble E: link the ancilla in front of each computational input,
/// evaluate the needed transfer elements of `u`, and keep only the rows
/// selected by the projector outcome. Only those rows and columns of the
/// joint-space operator are ever built.
pub fn assemble_paula(
    u: &ModeUnitary,
    ancilla: &Ancilla,
    projector: &Projector,
    input_basis: Arc<FockBasis>,
    output_basis: Arc<FockBasis>,
) -> Result<KrausOperator> {
    if input_basis.modes() != output_basis.modes() {
        return Err(Error::DimensionMismatch {
            left: input_basis.modes(),
            right: output_basis.modes(),
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
    if u.dim() != ancilla.modes() + input_basis.modes() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: ancilla.modes() + input_basis.modes(),
        });
    }
    if projector.outcome().modes() != ancilla.modes() {
        return Err(Error::DimensionMismatch {
            left: projector.outcome().modes(),
            right: ancilla.modes(),
        });
    }
    if projector.outcome().photons() != ancilla.photons() {
        return Err(Error::PhotonMismatch {
            left: projector.outcome().photons(),
            right: ancilla.photons(),
        });
    }

    let mut ws = ElementWorkspace::default();
    let mut matrix = Array2::zeros((output_basis.len(), input_basis.len()));
    for (i, out_state) in output_basis.iter().enumerate() {
        let joint_out = projector.outcome().concat(out_state);
        let m_out = mode_assignment(&joint_out);
        let out_fact = occupation_factorial(&joint_out).sqrt();
        for (j, in_state) in input_basis.iter().enumerate() {
            let mut element = Complex64::new(0.0, 0.0);
            for (k, amplitude) in ancilla.amplitudes().iter().enumerate() {
                if amplitude.norm_sqr() == 0.0 {
                    continue;
                }
                let joint_in = ancilla.basis().state(k).concat(in_state);
                let m_in = mode_assignment(&joint_in);
                let sum =
                    distinct_permutation_sum(u.matrix(), m_in.modes(), m_out.modes(), &mut ws);
                let prefactor = out_fact / occupation_factorial(&joint_in).sqrt();
                element += amplitude * sum * prefactor;
            }
            matrix[[i, j]] = element;
        }
    }

    Ok(KrausOperator {
        input_basis,
        output_basis,
        matrix,
        provenance: Provenance {
            unitary: u.clone(),
            ancilla: ancilla.clone(),
            projector: projector.clone(),
        },
    })
}

/// Real part of the fidelity amplitude between E and a target matrix:
/// Re[tr(E^dag T)] / sqrt(d_c tr(E^dag E)). Zero when E is annihilated by
/// the projector/ancilla combination, so optimizers can traverse such
/// regions smoothly.
pub fn fidelity(e: &KrausOperator, target: &Array2<Complex64>) -> Result<f64> {
    if e.matrix.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            left: e.matrix.len(),
            right: target.len(),
        });
    }
    Ok(fidelity_raw(&e.matrix, target))
}

pub(crate) fn fidelity_raw(e: &Array2<Complex64>, target: &Array2<Complex64>) -> f64 {
    let d_c = e.ncols() as f64;
    let mut overlap = Complex64::new(0.0, 0.0);
    let mut weight = 0.0;
    for (x, t) in e.iter().zip(target.iter()) {
        overlap += x.conj() * t;
        weight += x.norm_sqr();
    }
    if weight < 1e-300 {
        return 0.0;
    }
    overlap.re / (d_c * weight).sqrt()
}

/// Success probability at unit fidelity: tr(E^dag E) / d_c.
pub fn success(e: &KrausOperator) -> f64 {
    success_raw(&e.matrix)
}

pub(crate) fn success_raw(e: &Array2<Complex64>) -> f64 {
    let d_c = e.ncols() as f64;
    e.iter().map(|x| x.norm_sqr()).sum::<f64>() / d_c
}

/// A gate table lifted onto a larger register: states whose restriction to
/// the embedded modes matches a table input are mapped with all spectator
/// modes untouched; anything else would leak photons between blocks and is
/// rejected.
#[derive(Clone, Debug)]
pub struct EmbeddedGate {
    rows: HashMap<Occupation, Occupation>,
    mode_indices: Vec<usize>,
    total_modes: usize,
    table_name: &'static str,
}

pub fn embed_gate(
    table: &GateTable,
    mode_indices: &[usize],
    total_modes: usize,
) -> Result<EmbeddedGate> {
    if mode_indices.len() != table.mode_count() {
        return Err(Error::DimensionMismatch {
            left: mode_indices.len(),
            right: table.mode_count(),
        });
    }
    for (position, &mode) in mode_indices.iter().enumerate() {
        if mode >= total_modes {
            return Err(Error::ModeOutOfRange {
                index: mode,
                modes: total_modes,
            });
        }
        if mode_indices[..position].contains(&mode) {
            return Err(Error::InvalidConfig(format!(
                "duplicate mode index {mode} in embedding"
            )));
        }
    }
    let rows = table
        .rows()
        .iter()
        .map(|(input, output)| (input.clone(), output.clone()))
        .collect();
    Ok(EmbeddedGate {
        rows,
        mode_indices: mode_indices.to_vec(),
        total_modes,
        table_name: table.name(),
    })
}

impl EmbeddedGate {
    pub fn apply(&self, state: &Occupation) -> Result<Occupation> {
        if state.modes() != self.total_modes {
            return Err(Error::DimensionMismatch {
                left: state.modes(),
                right: self.total_modes,
            });
        }
        let restricted = state.restrict(&self.mode_indices);
        let image = self.rows.get(&restricted).ok_or_else(|| {
            Error::GateInputRejected {
                state: state.to_string(),
                table: self.table_name.to_string(),
            }
        })?;
        let mut counts = state.counts().to_vec();
        for (position, &mode) in self.mode_indices.iter().enumerate() {
            counts[mode] = image.counts()[position];
        }
        Ok(Occupation::new(counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{builtin_table, targets_from_table, SubOp};
    use crate::linalg::{max_abs_diff, random_unitary, standard_normal};
    use crate::transfer::render_transfer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn occ(counts: &[usize]) -> Occupation {
        Occupation::new(counts.to_vec())
    }

    fn random_ancilla(photons: usize, modes: usize, rng: &mut ChaCha8Rng) -> Ancilla {
        let dim = crate::fock::hilbert_dim(photons, modes).unwrap();
        let raw: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(standard_normal(rng), standard_normal(rng)))
            .collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Ancilla::new(photons, modes, raw.into_iter().map(|z| z / norm).collect()).unwrap()
    }

    #[test]
    fn no_ancilla_identity_circuit_gives_identity_kraus() {
        let basis = Arc::new(FockBasis::full(1, 3));
        let e = assemble_paula(
            &ModeUnitary::identity(3),
            &Ancilla::trivial(),
            &Projector::new(occ(&[])),
            Arc::clone(&basis),
            Arc::clone(&basis),
        )
        .unwrap();
        assert!(max_abs_diff(e.matrix(), &Array2::eye(3)) < 1e-12);
    }

    #[test]
    fn vacuum_subspace_kraus_is_scalar_with_bounded_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u = ModeUnitary::new(random_unitary(5, &mut rng)).unwrap();
        let ancilla = random_ancilla(2, 2, &mut rng);
        let basis = Arc::new(FockBasis::full(0, 3));
        let e = assemble_paula(
            &u,
            &ancilla,
            &Projector::new(occ(&[1, 1])),
            Arc::clone(&basis),
            basis,
        )
        .unwrap();
        assert_eq!(e.matrix().dim(), (1, 1));
        assert!(e.matrix()[[0, 0]].norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn assemble_matches_direct_joint_space_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (n_a, m_a, n_c, m_c) = (1usize, 2usize, 1usize, 2usize);
        let u = ModeUnitary::new(random_unitary(m_a + m_c, &mut rng)).unwrap();
        let ancilla = random_ancilla(n_a, m_a, &mut rng);
        let outcome = occ(&[0, 1]);
        let input_basis = Arc::new(FockBasis::full(n_c, m_c));
        let output_basis = Arc::new(FockBasis::full(n_c, m_c));

        let e = assemble_paula(
            &u,
            &ancilla,
            &Projector::new(outcome.clone()),
            Arc::clone(&input_basis),
            Arc::clone(&output_basis),
        )
        .unwrap();

        // Direct route: full joint-space rendering, explicit ancilla
        // contraction, explicit projector row selection.
        let joint = Arc::new(FockBasis::full(n_a + n_c, m_a + m_c));
        let a_full = render_transfer(&u, Arc::clone(&joint), Arc::clone(&joint)).unwrap();
        let mut direct = Array2::<Complex64>::zeros((output_basis.len(), input_basis.len()));
        for (i, out_state) in output_basis.iter().enumerate() {
            let row = joint.position(&outcome.concat(out_state)).unwrap();
            for (j, in_state) in input_basis.iter().enumerate() {
                for (k, amp) in ancilla.amplitudes().iter().enumerate() {
                    let col = joint
                        .position(&ancilla.basis().state(k).concat(in_state))
                        .unwrap();
                    direct[[i, j]] += amp * a_full.matrix()[[row, col]];
                }
            }
        }
        assert!(max_abs_diff(e.matrix(), &direct) < 1e-10);
    }

    #[test]
    fn linking_preserves_inner_products() {
        // L_a maps |psi_c> to |psi_a> x |psi_c>; with a normalized ancilla
        // the joint norm equals the computational norm.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let ancilla = random_ancilla(2, 3, &mut rng);
        let input_basis = FockBasis::full(1, 2);
        let psi: Vec<Complex64> = (0..input_basis.len())
            .map(|_| Complex64::new(standard_normal(&mut rng), standard_normal(&mut rng)))
            .collect();
        let psi_norm_sq: f64 = psi.iter().map(|z| z.norm_sqr()).sum();

        let mut joint: HashMap<Occupation, Complex64> = HashMap::new();
        for (j, c) in psi.iter().enumerate() {
            for (k, a) in ancilla.amplitudes().iter().enumerate() {
                *joint
                    .entry(ancilla.basis().state(k).concat(input_basis.state(j)))
                    .or_insert(Complex64::new(0.0, 0.0)) += a * c;
            }
        }
        let joint_norm_sq: f64 = joint.values().map(|z| z.norm_sqr()).sum();
        assert!((joint_norm_sq - psi_norm_sq).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let target = targets_from_table(&builtin_table(SubOp::C1), 2).unwrap();
        let t = target.matrix.clone();
        let as_kraus = |m: Array2<Complex64>| KrausOperator {
            input_basis: Arc::clone(&target.input_basis),
            output_basis: Arc::clone(&target.output_basis),
            matrix: m,
            provenance: Provenance {
                unitary: ModeUnitary::identity(1),
                ancilla: Ancilla::trivial(),
                projector: Projector::new(occ(&[])),
            },
        };

        let exact = as_kraus(t.clone());
        assert!((fidelity(&exact, &t).unwrap() - 1.0).abs() < 1e-12);

        let scaled = as_kraus(&t * Complex64::new(0.5f64.sqrt(), 0.0));
        assert!((fidelity(&scaled, &t).unwrap() - 1.0).abs() < 1e-12);

        let rotated = as_kraus(&t * Complex64::new(0.0, 1.0));
        assert!(fidelity(&rotated, &t).unwrap().abs() < 1e-12);

        let zero = as_kraus(Array2::zeros(t.dim()));
        assert_eq!(fidelity(&zero, &t).unwrap(), 0.0);
        assert_eq!(success(&zero), 0.0);

        let p: f64 = 0.37;
        let heralded = as_kraus(&t * Complex64::new(p.sqrt(), 0.0));
        assert!((success(&heralded) - p).abs() < 1e-12);
    }

    #[test]
    fn success_bounded_by_one_for_assembled_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..5 {
            let u = ModeUnitary::new(random_unitary(4, &mut rng)).unwrap();
            let ancilla = random_ancilla(1, 2, &mut rng);
            let basis = Arc::new(FockBasis::full(1, 2));
            let e = assemble_paula(
                &u,
                &ancilla,
                &Projector::new(occ(&[1, 0])),
                Arc::clone(&basis),
                Arc::clone(&basis),
            )
            .unwrap();
            let s = success(&e);
            assert!((0.0..=1.0 + 1e-9).contains(&s));
            // Largest singular value of a projected unitary restriction
            // stays below 1; probe it by power iteration on E^dag E.
            let ee = crate::linalg::dagger(e.matrix()).dot(e.matrix());
            let mut v = vec![Complex64::new(1.0, 0.0); ee.nrows()];
            for _ in 0..200 {
                let mut next = vec![Complex64::new(0.0, 0.0); ee.nrows()];
                for r in 0..ee.nrows() {
                    for c in 0..ee.ncols() {
                        next[r] += ee[[r, c]] * v[c];
                    }
                }
                let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for z in &mut next {
                    *z /= norm;
                }
                v = next;
            }
            let mut rayleigh = Complex64::new(0.0, 0.0);
            for r in 0..ee.nrows() {
                for c in 0..ee.ncols() {
                    rayleigh += v[r].conj() * ee[[r, c]] * v[c];
                }
            }
            assert!(rayleigh.re <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn fidelity_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let target = targets_from_table(&builtin_table(SubOp::C1), 1).unwrap();
        let basis = Arc::new(FockBasis::full(1, 3));
        for _ in 0..10 {
            let u = ModeUnitary::new(random_unitary(5, &mut rng)).unwrap();
            let ancilla = random_ancilla(1, 2, &mut rng);
            let e = assemble_paula(
                &u,
                &ancilla,
                &Projector::new(occ(&[0, 1])),
                Arc::clone(&basis),
                Arc::clone(&basis),
            )
            .unwrap();
            let f = fidelity(&e, &target.matrix).unwrap();
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&f), "F = {f}");
        }
    }

    #[test]
    fn embedded_c1_swaps_targets_with_spectators_untouched() {
        let table = builtin_table(SubOp::C1);
        let gate = embed_gate(&table, &[2, 4, 5], 8).unwrap();
        let mapped = gate.apply(&occ(&[0, 0, 1, 0, 1, 0, 0, 0])).unwrap();
        assert_eq!(mapped, occ(&[0, 0, 1, 0, 0, 1, 0, 0]));

        // Zero photons in the embedded modes: identity row applies.
        let state = occ(&[1, 0, 0, 0, 0, 0, 1, 0]);
        assert_eq!(gate.apply(&state).unwrap(), state);

        // Two photons inside the embedded modes match no row.
        let leak = occ(&[0, 0, 0, 0, 1, 1, 0, 0]);
        assert!(matches!(
            gate.apply(&leak),
            Err(Error::GateInputRejected { .. })
        ));
    }

    #[test]
    fn embed_gate_validates_mode_indices() {
        let table = builtin_table(SubOp::C1);
        assert!(embed_gate(&table, &[0, 1], 8).is_err());
        assert!(embed_gate(&table, &[0, 1, 9], 8).is_err());
        assert!(embed_gate(&table, &[0, 1, 1], 8).is_err());
    }

    #[test]
    fn ancilla_requires_normalization() {
        let dim = crate::fock::hilbert_dim(1, 2).unwrap();
        let raw = vec![Complex64::new(2.0, 0.0); dim];
        assert!(matches!(
            Ancilla::new(1, 2, raw),
            Err(Error::NotNormalized { .. })
        ));
    }
}
