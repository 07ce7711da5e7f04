//! Parametrization of the circuit unitary and ancilla state, the
//! multi-subspace merit function, and restart-based local optimization
//! with resource sweeps.
//!
//! The merit of a candidate (U, psi_a, P) is the sum over the gate
//! table's photon-number subspaces of `F + epsilon * S`, where F and S
//! are the fidelity and success probability of the post-selected Kraus
//! operator against the subspace target. Local searches are gradient
//! ascent on finite-difference gradients with a backtracking line search
//! (Barzilai-Borwein trial steps), followed by a polish phase that
//! maximizes total success under a quadratic fidelity penalty.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{hilbert_dim, mode_assignment, FockBasis, Occupation};
use crate::gates::{joint_dimension, targets_from_table, GateTable, SubOp};
use crate::kraus::{
    assemble_paula, fidelity, fidelity_raw, success, success_raw, Ancilla, KrausOperator,
    Projector,
};
use crate::linalg::{expm, standard_normal, unitarity_deviation};
use crate::transfer::{
    distinct_permutation_sum, occupation_factorial, ElementWorkspace, ModeUnitary,
};

use search::{ascend, Objective, SearchOptions};

/// All subspace fidelities must clear 1 - FIDELITY_TOL for a candidate to
/// count as an exact solution.
pub const FIDELITY_TOL: f64 = 1e-4;

/// Default guard on the joint Hilbert-space dimension per sub-operation
/// application.
pub const DIMENSION_GUARD: usize = 10_000;

/// Real parameters of an M x M mode unitary: M diagonal entries of a
/// Hermitian generator followed by (re, im) pairs for the upper triangle,
/// realized as U = exp(iH).
#[derive(Clone, Debug)]
pub struct UnitaryParams {
    modes: usize,
    theta: Vec<f64>,
}

impl UnitaryParams {
    pub fn param_count(modes: usize) -> usize {
        modes * modes
    }

    pub fn new(modes: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != Self::param_count(modes) {
            return Err(Error::DimensionMismatch {
                left: theta.len(),
                right: Self::param_count(modes),
            });
        }
        Ok(UnitaryParams { modes, theta })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

/// Realize the parametrized unitary. Smooth in every parameter and
/// surjective onto the unitary group.
pub fn realize_unitary(params: &UnitaryParams) -> ModeUnitary {
    let u = realize_unitary_matrix(params.modes, &params.theta);
    ModeUnitary::new(u).expect("exp(iH) of a Hermitian generator is unitary")
}

fn realize_unitary_matrix(modes: usize, theta: &[f64]) -> Array2<Complex64> {
    let mut h = Array2::<Complex64>::zeros((modes, modes));
    for d in 0..modes {
        h[[d, d]] = Complex64::new(theta[d], 0.0);
    }
    let mut k = modes;
    for row in 0..modes {
        for col in row + 1..modes {
            let z = Complex64::new(theta[k], theta[k + 1]);
            k += 2;
            h[[row, col]] = z;
            h[[col, row]] = z.conj();
        }
    }
    let mut u = expm(&(&h * Complex64::new(0.0, 1.0)));
    // Pade round-off can creep above the constructor tolerance for very
    // large generators; polar-Newton sweeps restore it.
    for _ in 0..3 {
        if unitarity_deviation(&u) <= 1e-12 {
            break;
        }
        let correction = Array2::<Complex64>::eye(modes) * Complex64::new(3.0, 0.0)
            - crate::linalg::dagger(&u).dot(&u);
        u = u.dot(&correction) * Complex64::new(0.5, 0.0);
    }
    u
}

/// Normalize raw (re, im) pairs into an ancilla state over the full
/// (N_a, M_a) basis. An all-zero vector falls back to the first canonical
/// basis state.
pub fn realize_ancilla(raw: &[f64], photons: usize, modes: usize) -> Result<Ancilla> {
    let amplitudes = ancilla_amplitudes(raw, hilbert_dim(photons, modes)?)?;
    Ancilla::new(photons, modes, amplitudes)
}

fn ancilla_amplitudes(raw: &[f64], dim: usize) -> Result<Vec<Complex64>> {
    if raw.len() != 2 * dim {
        return Err(Error::DimensionMismatch {
            left: raw.len(),
            right: 2 * dim,
        });
    }
    let mut amplitudes: Vec<Complex64> = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        amplitudes
            .iter_mut()
            .for_each(|z| *z = Complex64::new(0.0, 0.0));
        amplitudes[0] = Complex64::new(1.0, 0.0);
    } else {
        amplitudes.iter_mut().for_each(|z| *z /= norm);
    }
    Ok(amplitudes)
}

/// Joint search parameters: unitary generator plus raw ancilla vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub theta: Vec<f64>,
    pub ancilla_raw: Vec<f64>,
}

/// An optimization problem: gate table, ancilla resources, measurement
/// candidates, and the weights of the merit function.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub gate: GateTable,
    pub ancilla_photons: usize,
    pub ancilla_modes: usize,
    pub projectors: Vec<Projector>,
    pub epsilons: Vec<f64>,
    pub subspaces: Vec<usize>,
}

impl ProblemSpec {
    /// Spec with default projector candidates and epsilon schedule.
    pub fn new(gate: GateTable, ancilla_photons: usize, ancilla_modes: usize) -> Result<Self> {
        let projectors = default_projectors(ancilla_photons, ancilla_modes)?;
        let subspaces = gate.photon_numbers();
        Ok(ProblemSpec {
            gate,
            ancilla_photons,
            ancilla_modes,
            projectors,
            epsilons: vec![0.1, 1.0],
            subspaces,
        })
    }

    pub fn with_projectors(mut self, projectors: Vec<Projector>) -> Self {
        self.projectors = projectors;
        self
    }

    pub fn with_epsilons(mut self, epsilons: Vec<f64>) -> Self {
        self.epsilons = epsilons;
        self
    }

    pub fn total_modes(&self) -> usize {
        self.ancilla_modes + self.gate.mode_count()
    }

    /// (theta length, raw ancilla length) of the flat parameter layout.
    pub fn param_split(&self) -> Result<(usize, usize)> {
        let theta_len = UnitaryParams::param_count(self.total_modes());
        let ancilla_len = 2 * hilbert_dim(self.ancilla_photons, self.ancilla_modes)?;
        Ok((theta_len, ancilla_len))
    }
}

/// Default measurement candidates: one representative per outcome
/// multiset. Outcomes differing only by a mode permutation are related by
/// an ancilla-mode relabeling absorbed into U, so restricting to the
/// sorted-decreasing representative loses no optima.
pub fn default_projectors(photons: usize, modes: usize) -> Result<Vec<Projector>> {
    if modes == 0 && photons > 0 {
        return Err(Error::InvalidModeCount { photons, modes });
    }
    let basis = FockBasis::filtered(photons, modes, |s| {
        s.counts().windows(2).all(|w| w[0] >= w[1])
    });
    Ok(basis.iter().cloned().map(Projector::new).collect())
}

/// Fidelity and success of one photon-number subspace.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SubspaceMeasures {
    pub photons: usize,
    pub d_c: usize,
    pub fidelity: f64,
    pub success: f64,
}

/// Best parameters found for a problem, with everything needed to
/// reproduce and re-verify them.
#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub gate: SubOp,
    pub ancilla_photons: usize,
    pub ancilla_modes: usize,
    pub projector: Occupation,
    pub theta: Vec<f64>,
    pub ancilla_raw: Vec<f64>,
    pub subspaces: Vec<SubspaceMeasures>,
    pub merit: f64,
    pub epsilon: f64,
    pub passed: bool,
    pub seed: u64,
    pub restarts: usize,
    pub winning_projector: usize,
    pub winning_restart: usize,
    pub iterations: u64,
    pub wall_time_s: f64,
}

impl OptimizationResult {
    pub fn min_success(&self) -> f64 {
        self.subspaces
            .iter()
            .map(|s| s.success)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_fidelity(&self) -> f64 {
        self.subspaces
            .iter()
            .map(|s| s.fidelity)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Kraus operators and measures recomputed from stored parameters via the
/// plain assembly path.
pub struct SolutionReport {
    pub measures: Vec<SubspaceMeasures>,
    pub kraus: Vec<KrausOperator>,
    pub merit: f64,
}

/// Evaluate stored parameters from scratch: realize the unitary and
/// ancilla, assemble the subspace Kraus operators, and measure them.
pub fn evaluate_solution(
    gate: &GateTable,
    ancilla_photons: usize,
    ancilla_modes: usize,
    theta: &[f64],
    ancilla_raw: &[f64],
    projector_outcome: &Occupation,
    epsilon: f64,
) -> Result<SolutionReport> {
    let total_modes = ancilla_modes + gate.mode_count();
    let unitary = realize_unitary(&UnitaryParams::new(total_modes, theta.to_vec())?);
    let ancilla = realize_ancilla(ancilla_raw, ancilla_photons, ancilla_modes)?;
    let projector = Projector::new(projector_outcome.clone());

    let mut measures = Vec::new();
    let mut kraus = Vec::new();
    let mut merit = 0.0;
    for &photons in &gate.photon_numbers() {
        let target = targets_from_table(gate, photons)?;
        let e = assemble_paula(
            &unitary,
            &ancilla,
            &projector,
            Arc::clone(&target.input_basis),
            Arc::clone(&target.output_basis),
        )?;
        let f = fidelity(&e, &target.matrix)?;
        let s = success(&e);
        merit += f + epsilon * s;
        measures.push(SubspaceMeasures {
            photons,
            d_c: target.input_basis.len(),
            fidelity: f,
            success: s,
        });
        kraus.push(e);
    }
    Ok(SolutionReport {
        measures,
        kraus,
        merit,
    })
}

/// Cached rendering structure for one photon-number subspace: the joint
/// input/output assignments and prefactors are fixed by the bases, so a
/// merit evaluation only recomputes permanents and the ancilla
/// contraction.
struct SubspaceEvaluator {
    d_c: usize,
    d_out: usize,
    d_a: usize,
    target: Array2<Complex64>,
    row_assignments: Vec<Vec<usize>>,
    col_assignments: Vec<Vec<usize>>,
    prefactors: Vec<f64>,
    rendered: Vec<Complex64>,
    kraus_scratch: Array2<Complex64>,
}

impl SubspaceEvaluator {
    fn new(
        gate: &GateTable,
        photons: usize,
        ancilla_basis: &FockBasis,
        outcome: &Occupation,
    ) -> Result<Self> {
        let target = targets_from_table(gate, photons)?;
        let d_c = target.input_basis.len();
        let d_out = target.output_basis.len();
        let d_a = ancilla_basis.len();

        let mut row_assignments = Vec::with_capacity(d_out);
        let mut row_fact = Vec::with_capacity(d_out);
        for out_state in target.output_basis.iter() {
            let joint = outcome.concat(out_state);
            row_assignments.push(mode_assignment(&joint).modes().to_vec());
            row_fact.push(occupation_factorial(&joint).sqrt());
        }
        let mut col_assignments = Vec::with_capacity(d_a * d_c);
        let mut col_inv_fact = Vec::with_capacity(d_a * d_c);
        for anc_state in ancilla_basis.iter() {
            for in_state in target.input_basis.iter() {
                let joint = anc_state.concat(in_state);
                col_assignments.push(mode_assignment(&joint).modes().to_vec());
                col_inv_fact.push(1.0 / occupation_factorial(&joint).sqrt());
            }
        }
        let mut prefactors = Vec::with_capacity(d_out * d_a * d_c);
        for rf in &row_fact {
            for cf in &col_inv_fact {
                prefactors.push(rf * cf);
            }
        }
        Ok(SubspaceEvaluator {
            d_c,
            d_out,
            d_a,
            target: target.matrix.clone(),
            row_assignments,
            col_assignments,
            prefactors,
            rendered: vec![Complex64::new(0.0, 0.0); d_out * d_a * d_c],
            kraus_scratch: Array2::zeros((d_out, d_c)),
        })
    }

    /// Recompute the per-ancilla-component transfer elements for a new U.
    fn refresh(&mut self, u: &Array2<Complex64>, ws: &mut ElementWorkspace) {
        let cols = self.d_a * self.d_c;
        for (i, m_out) in self.row_assignments.iter().enumerate() {
            for (c, m_in) in self.col_assignments.iter().enumerate() {
                let sum = distinct_permutation_sum(u, m_in, m_out, ws);
                self.rendered[i * cols + c] = sum * self.prefactors[i * cols + c];
            }
        }
    }

    /// Contract the rendered elements with ancilla amplitudes and measure.
    fn measures(&mut self, ancilla: &[Complex64]) -> (f64, f64) {
        let cols = self.d_a * self.d_c;
        for i in 0..self.d_out {
            for j in 0..self.d_c {
                let mut element = Complex64::new(0.0, 0.0);
                for (k, amp) in ancilla.iter().enumerate() {
                    element += amp * self.rendered[i * cols + k * self.d_c + j];
                }
                self.kraus_scratch[[i, j]] = element;
            }
        }
        (
            fidelity_raw(&self.kraus_scratch, &self.target),
            success_raw(&self.kraus_scratch),
        )
    }
}

/// Evaluator for a full problem instance (one projector candidate).
pub(crate) struct MeritEvaluator {
    subspaces: Vec<SubspaceEvaluator>,
    total_modes: usize,
    ancilla_dim: usize,
    ws: ElementWorkspace,
    ancilla_scratch: Vec<Complex64>,
}

impl MeritEvaluator {
    pub(crate) fn new(spec: &ProblemSpec, projector: &Projector) -> Result<Self> {
        if projector.outcome().modes() != spec.ancilla_modes
            || projector.outcome().photons() != spec.ancilla_photons
        {
            return Err(Error::InvalidConfig(format!(
                "projector {} incompatible with ancilla ({}, {})",
                projector.outcome(),
                spec.ancilla_photons,
                spec.ancilla_modes
            )));
        }
        let ancilla_basis = FockBasis::full(spec.ancilla_photons, spec.ancilla_modes);
        let subspaces = spec
            .subspaces
            .iter()
            .map(|&photons| {
                SubspaceEvaluator::new(&spec.gate, photons, &ancilla_basis, projector.outcome())
            })
            .collect::<Result<Vec<_>>>()?;
        let ancilla_dim = ancilla_basis.len();
        Ok(MeritEvaluator {
            subspaces,
            total_modes: spec.ancilla_modes + spec.gate.mode_count(),
            ancilla_dim,
            ws: ElementWorkspace::default(),
            ancilla_scratch: vec![Complex64::new(0.0, 0.0); ancilla_dim],
        })
    }

    fn set_unitary_from_theta(&mut self, theta: &[f64]) {
        let u = realize_unitary_matrix(self.total_modes, theta);
        for sub in &mut self.subspaces {
            sub.refresh(&u, &mut self.ws);
        }
    }

    fn set_ancilla_from_raw(&mut self, raw: &[f64]) {
        debug_assert_eq!(raw.len(), 2 * self.ancilla_dim);
        let mut norm_sq = 0.0;
        for (z, p) in self.ancilla_scratch.iter_mut().zip(raw.chunks_exact(2)) {
            *z = Complex64::new(p[0], p[1]);
            norm_sq += z.norm_sqr();
        }
        let norm = norm_sq.sqrt();
        if norm < 1e-12 {
            self.ancilla_scratch
                .iter_mut()
                .for_each(|z| *z = Complex64::new(0.0, 0.0));
            self.ancilla_scratch[0] = Complex64::new(1.0, 0.0);
        } else {
            self.ancilla_scratch.iter_mut().for_each(|z| *z /= norm);
        }
    }

    /// (fidelity, success) per subspace for the current unitary and the
    /// given raw ancilla parameters.
    fn measures_with_current_unitary(&mut self, raw: &[f64]) -> Vec<(f64, f64)> {
        self.set_ancilla_from_raw(raw);
        let ancilla = std::mem::take(&mut self.ancilla_scratch);
        let out = self
            .subspaces
            .iter_mut()
            .map(|sub| sub.measures(&ancilla))
            .collect();
        self.ancilla_scratch = ancilla;
        out
    }

    pub(crate) fn measures(&mut self, params: &Params) -> Vec<(f64, f64)> {
        self.set_unitary_from_theta(&params.theta);
        self.measures_with_current_unitary(&params.ancilla_raw)
    }
}

mod search {
    //! Gradient-ascent local search shared by all optimization phases.

    use super::MeritEvaluator;

    /// What a search phase maximizes.
    #[derive(Clone, Copy, Debug)]
    pub(crate) enum Objective {
        /// Sum of F + epsilon * S over subspaces.
        Merit { epsilon: f64 },
        /// Sum of S with a quadratic penalty keeping every F at 1.
        Polish { weight: f64 },
    }

    impl Objective {
        pub(crate) fn value(self, measures: &[(f64, f64)]) -> f64 {
            match self {
                Objective::Merit { epsilon } => {
                    measures.iter().map(|&(f, s)| f + epsilon * s).sum()
                }
                Objective::Polish { weight } => measures
                    .iter()
                    .map(|&(f, s)| s - weight * (1.0 - f) * (1.0 - f))
                    .sum(),
            }
        }
    }

    #[derive(Clone, Copy, Debug)]
    pub(crate) struct SearchOptions {
        pub max_iterations: usize,
        pub improvement_tol: f64,
        pub gradient_tol: f64,
        pub fd_step: f64,
        pub armijo: f64,
    }

    impl Default for SearchOptions {
        fn default() -> Self {
            SearchOptions {
                max_iterations: 100_000,
                improvement_tol: 1e-12,
                gradient_tol: 1e-8,
                fd_step: 1e-6,
                armijo: 1e-4,
            }
        }
    }

    /// Central finite-difference gradient of `objective` in the flat
    /// parameter layout [theta | ancilla_raw]. Ancilla coordinates reuse
    /// the unitary rendered at the center point.
    pub(crate) fn fd_gradient(
        evaluator: &mut MeritEvaluator,
        theta: &mut [f64],
        ancilla_raw: &mut [f64],
        objective: Objective,
        step: f64,
        gradient: &mut [f64],
    ) {
        let theta_len = theta.len();
        for i in 0..theta_len {
            let saved = theta[i];
            theta[i] = saved + step;
            evaluator.set_unitary_from_theta(theta);
            let plus = objective.value(&evaluator.measures_with_current_unitary(ancilla_raw));
            theta[i] = saved - step;
            evaluator.set_unitary_from_theta(theta);
            let minus = objective.value(&evaluator.measures_with_current_unitary(ancilla_raw));
            theta[i] = saved;
            gradient[i] = (plus - minus) / (2.0 * step);
        }
        // Restore the center unitary once for the ancilla block.
        evaluator.set_unitary_from_theta(theta);
        for i in 0..ancilla_raw.len() {
            let saved = ancilla_raw[i];
            ancilla_raw[i] = saved + step;
            let plus = objective.value(&evaluator.measures_with_current_unitary(ancilla_raw));
            ancilla_raw[i] = saved - step;
            let minus = objective.value(&evaluator.measures_with_current_unitary(ancilla_raw));
            ancilla_raw[i] = saved;
            gradient[theta_len + i] = (plus - minus) / (2.0 * step);
        }
    }

    pub(crate) struct SearchOutcome {
        pub iterations: u64,
        #[allow(dead_code)]
        pub value: f64,
    }

    /// Backtracking gradient ascent. The trial step starts from a
    /// Barzilai-Borwein estimate and halves until the Armijo condition
    /// holds; convergence is declared on vanishing gradient or on
    /// per-iteration improvement below tolerance.
    pub(crate) fn ascend(
        evaluator: &mut MeritEvaluator,
        theta: &mut Vec<f64>,
        ancilla_raw: &mut Vec<f64>,
        objective: Objective,
        options: &SearchOptions,
    ) -> SearchOutcome {
        let n = theta.len() + ancilla_raw.len();
        let mut gradient = vec![0.0; n];
        let mut prev_gradient = vec![0.0; n];
        let mut prev_point: Option<Vec<f64>> = None;
        let mut step = 0.1;

        evaluator.set_unitary_from_theta(theta);
        let mut value = objective.value(&evaluator.measures_with_current_unitary(ancilla_raw));
        let mut iterations = 0u64;

        for _ in 0..options.max_iterations {
            fd_gradient(
                evaluator,
                theta,
                ancilla_raw,
                objective,
                options.fd_step,
                &mut gradient,
            );
            let grad_inf = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if grad_inf < options.gradient_tol {
                break;
            }
            let grad_sq: f64 = gradient.iter().map(|g| g * g).sum();

            // Barzilai-Borwein step from the previous (dx, dg) pair.
            if let Some(prev) = &prev_point {
                let mut dx_dg = 0.0;
                let mut dx_dx = 0.0;
                for i in 0..n {
                    let dx = point_coordinate(theta, ancilla_raw, i) - prev[i];
                    let dg = gradient[i] - prev_gradient[i];
                    dx_dg += dx * dg;
                    dx_dx += dx * dx;
                }
                if dx_dg.abs() > 1e-300 {
                    step = (dx_dx / dx_dg.abs()).clamp(1e-12, 1e3);
                }
            }

            prev_point = Some(flat_point(theta, ancilla_raw));
            prev_gradient.copy_from_slice(&gradient);

            let mut trial = step;
            let mut improvement = 0.0;
            loop {
                apply_step(theta, ancilla_raw, &gradient, trial);
                evaluator.set_unitary_from_theta(theta);
                let new_value =
                    objective.value(&evaluator.measures_with_current_unitary(ancilla_raw));
                if new_value >= value + options.armijo * trial * grad_sq {
                    improvement = new_value - value;
                    value = new_value;
                    break;
                }
                apply_step(theta, ancilla_raw, &gradient, -trial);
                trial *= 0.5;
                if trial < 1e-16 {
                    break;
                }
            }
            iterations += 1;
            if improvement < options.improvement_tol * value.abs().max(1.0) {
                break;
            }
        }
        SearchOutcome { iterations, value }
    }

    fn point_coordinate(theta: &[f64], ancilla_raw: &[f64], i: usize) -> f64 {
        if i < theta.len() {
            theta[i]
        } else {
            ancilla_raw[i - theta.len()]
        }
    }

    fn flat_point(theta: &[f64], ancilla_raw: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(theta.len() + ancilla_raw.len());
        out.extend_from_slice(theta);
        out.extend_from_slice(ancilla_raw);
        out
    }

    fn apply_step(theta: &mut [f64], ancilla_raw: &mut [f64], gradient: &[f64], scale: f64) {
        let theta_len = theta.len();
        for (i, t) in theta.iter_mut().enumerate() {
            *t += scale * gradient[i];
        }
        for (i, a) in ancilla_raw.iter_mut().enumerate() {
            *a += scale * gradient[theta_len + i];
        }
    }
}

/// Merit of a parameter point for one projector candidate: the sum over
/// subspaces of F + epsilon * S, all sharing the one (U, psi_a, P).
pub fn merit(
    spec: &ProblemSpec,
    projector: &Projector,
    params: &Params,
    epsilon: f64,
) -> Result<f64> {
    let mut evaluator = MeritEvaluator::new(spec, projector)?;
    let measures = evaluator.measures(params);
    Ok(Objective::Merit { epsilon }.value(&measures))
}

/// Central finite-difference gradient of [`merit`] in the flat layout
/// [theta | ancilla_raw], step 1e-6 per coordinate.
pub fn gradient(
    spec: &ProblemSpec,
    projector: &Projector,
    params: &Params,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let mut evaluator = MeritEvaluator::new(spec, projector)?;
    let mut theta = params.theta.clone();
    let mut ancilla_raw = params.ancilla_raw.clone();
    let mut out = vec![0.0; theta.len() + ancilla_raw.len()];
    search::fd_gradient(
        &mut evaluator,
        &mut theta,
        &mut ancilla_raw,
        Objective::Merit { epsilon },
        1e-6,
        &mut out,
    );
    Ok(out)
}

/// Weights of the staged polish phase; the quadratic fidelity penalty is
/// tightened until the final point sits hard against the F = 1 boundary.
/// The success landscape climbs at a slope of order 10 per unit fidelity
/// near the boundary, so pinning F to ~1e-6 takes a weight of order 1e7.
const POLISH_WEIGHTS: [f64; 5] = [1e3, 1e5, 1e7, 1e9, 1e11];

struct Candidate {
    projector_index: usize,
    restart_index: usize,
    params: Params,
    measures: Vec<(f64, f64)>,
    merit: f64,
    iterations: u64,
}

impl Candidate {
    fn passes_filter(&self) -> bool {
        self.measures.iter().all(|&(f, _)| f >= 1.0 - FIDELITY_TOL)
    }

    fn min_success(&self) -> f64 {
        self.measures
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::INFINITY, f64::min)
    }
}

fn run_restart(
    spec: &ProblemSpec,
    projector_index: usize,
    restart_index: usize,
    seed: u64,
) -> Result<Candidate> {
    let projector = &spec.projectors[projector_index];
    let mut evaluator = MeritEvaluator::new(spec, projector)?;
    let (theta_len, ancilla_len) = spec.param_split()?;
    let total_modes = spec.total_modes();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((projector_index as u64) << 32) | restart_index as u64);
    let mut theta: Vec<f64> = (0..theta_len)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI) / total_modes as f64)
        .collect();
    let mut ancilla_raw: Vec<f64> = (0..ancilla_len)
        .map(|_| standard_normal(&mut rng))
        .collect();

    let trace = std::env::var("PHOTONFORGE_TRACE").is_ok();
    let mut iterations = 0u64;
    let last_epsilon = spec.epsilons.last().copied().unwrap_or(1.0);

    // Merit phases are basin finders: larger epsilon values can drag a
    // trajectory off the F = 1 manifold toward raw-success maxima, so each
    // epsilon's endpoint is snapshotted and the most constrainable one
    // (largest minimum fidelity) seeds the polish.
    let mut snapshots: Vec<(Params, Vec<(f64, f64)>)> = Vec::new();
    for &epsilon in &spec.epsilons {
        let options = SearchOptions {
            improvement_tol: 1e-10,
            max_iterations: 3_000,
            ..SearchOptions::default()
        };
        let t0 = std::time::Instant::now();
        let outcome = ascend(
            &mut evaluator,
            &mut theta,
            &mut ancilla_raw,
            Objective::Merit { epsilon },
            &options,
        );
        if trace {
            eprintln!(
                "[restart {restart_index}] Merit {{ epsilon: {epsilon} }}: {} iters val={:.12} in {:?}",
                outcome.iterations,
                outcome.value,
                t0.elapsed()
            );
        }
        iterations += outcome.iterations;
        let params = Params {
            theta: theta.clone(),
            ancilla_raw: ancilla_raw.clone(),
        };
        let measures = evaluator.measures(&params);
        snapshots.push((params, measures));
    }

    let seed_point = snapshots
        .into_iter()
        .max_by(|a, b| {
            let key = |(_, m): &(Params, Vec<(f64, f64)>)| {
                let min_f = m.iter().map(|&(f, _)| f).fold(f64::INFINITY, f64::min);
                let value: f64 = m.iter().map(|&(f, s)| f + last_epsilon * s).sum();
                (min_f, value)
            };
            key(a)
                .partial_cmp(&key(b))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one epsilon phase");
    theta = seed_point.0.theta;
    ancilla_raw = seed_point.0.ancilla_raw;

    // Polish maximizes S on the F = 1 manifold; when no merit phase got
    // near it the candidate cannot pass the filter and polishing would
    // only fight the penalty term.
    let near_boundary = seed_point.1.iter().all(|&(f, _)| f >= 1.0 - 1e-2);
    if near_boundary {
        for (stage, &weight) in POLISH_WEIGHTS.iter().enumerate() {
            let last = stage + 1 == POLISH_WEIGHTS.len();
            let options = SearchOptions {
                improvement_tol: if last { 1e-12 } else { 1e-11 },
                max_iterations: if last { 100_000 } else { 2_000 },
                ..SearchOptions::default()
            };
            let t0 = std::time::Instant::now();
            let outcome = ascend(
                &mut evaluator,
                &mut theta,
                &mut ancilla_raw,
                Objective::Polish { weight },
                &options,
            );
            if trace {
                eprintln!(
                    "[restart {restart_index}] Polish {{ weight: {weight} }}: {} iters val={:.12} in {:?}",
                    outcome.iterations,
                    outcome.value,
                    t0.elapsed()
                );
            }
            iterations += outcome.iterations;
        }
    }

    let params = Params { theta, ancilla_raw };
    let measures = evaluator.measures(&params);
    let merit = Objective::Merit {
        epsilon: last_epsilon,
    }
    .value(&measures);
    Ok(Candidate {
        projector_index,
        restart_index,
        params,
        measures,
        merit,
        iterations,
    })
}

/// Restart-based global search over every projector candidate. Restarts
/// are independent and run concurrently; the reduction is a deterministic
/// argmax, so results depend only on (spec, restarts, seed).
pub fn optimize(spec: &ProblemSpec, restarts: usize, seed: u64) -> Result<OptimizationResult> {
    let started = Instant::now();
    if restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be >= 1".into()));
    }
    if spec.projectors.is_empty() {
        return Err(Error::InvalidConfig("no projector candidates".into()));
    }
    let joint = joint_dimension(
        spec.gate.sub_op(),
        spec.ancilla_photons,
        spec.ancilla_modes,
    )?;
    if joint > DIMENSION_GUARD {
        return Err(Error::ResourceGuard {
            quantity: "joint Hilbert-space dimension",
            value: joint as u128,
            limit: DIMENSION_GUARD as u128,
        });
    }

    let tasks: Vec<(usize, usize)> = (0..spec.projectors.len())
        .flat_map(|p| (0..restarts).map(move |r| (p, r)))
        .collect();
    let candidates: Vec<Candidate> = tasks
        .par_iter()
        .map(|&(p, r)| run_restart(spec, p, r, seed))
        .collect::<Result<Vec<_>>>()?;

    let best = candidates
        .iter()
        .max_by(|a, b| {
            (a.passes_filter(), a.merit, a.min_success())
                .partial_cmp(&(b.passes_filter(), b.merit, b.min_success()))
                .unwrap_or(std::cmp::Ordering::Equal)
                // Deterministic tie-break: earlier task wins.
                .then_with(|| {
                    (b.projector_index, b.restart_index).cmp(&(a.projector_index, a.restart_index))
                })
        })
        .expect("at least one candidate");

    let epsilon = *spec.epsilons.last().unwrap_or(&1.0);
    let outcome = spec.projectors[best.projector_index].outcome().clone();
    // Final numbers come from the from-scratch assembly path, the same one
    // verification uses.
    let report = evaluate_solution(
        &spec.gate,
        spec.ancilla_photons,
        spec.ancilla_modes,
        &best.params.theta,
        &best.params.ancilla_raw,
        &outcome,
        epsilon,
    )?;
    let passed = report
        .measures
        .iter()
        .all(|m| m.fidelity >= 1.0 - FIDELITY_TOL);

    Ok(OptimizationResult {
        gate: spec.gate.sub_op(),
        ancilla_photons: spec.ancilla_photons,
        ancilla_modes: spec.ancilla_modes,
        projector: outcome,
        theta: best.params.theta.clone(),
        ancilla_raw: best.params.ancilla_raw.clone(),
        subspaces: report.measures,
        merit: report.merit,
        epsilon,
        passed,
        seed,
        restarts,
        winning_projector: best.projector_index,
        winning_restart: best.restart_index,
        iterations: best.iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// One grid point of a resource sweep.
pub struct SweepEntry {
    pub ancilla_photons: usize,
    pub ancilla_modes: usize,
    pub outcome: std::result::Result<OptimizationResult, String>,
}

/// Grid of optimize calls over ancilla resources. Guarded configurations
/// are skipped with a recorded reason; results are sorted best-first
/// (fidelity filter passed, then larger minimum success).
pub fn sweep(
    gate: &GateTable,
    ancilla_photons: &[usize],
    ancilla_modes: &[usize],
    epsilons: &[f64],
    restarts: usize,
    seed: u64,
    dimension_guard: usize,
) -> Result<Vec<SweepEntry>> {
    let mut entries = Vec::new();
    for &n_a in ancilla_photons {
        for &m_a in ancilla_modes {
            if m_a == 0 && n_a > 0 {
                entries.push(SweepEntry {
                    ancilla_photons: n_a,
                    ancilla_modes: m_a,
                    outcome: Err(format!("{n_a} photons cannot occupy 0 modes")),
                });
                continue;
            }
            let joint = joint_dimension(gate.sub_op(), n_a, m_a)?;
            if joint > dimension_guard {
                entries.push(SweepEntry {
                    ancilla_photons: n_a,
                    ancilla_modes: m_a,
                    outcome: Err(format!(
                        "joint dimension {joint} exceeds guard {dimension_guard}"
                    )),
                });
                continue;
            }
            let spec =
                ProblemSpec::new(gate.clone(), n_a, m_a)?.with_epsilons(epsilons.to_vec());
            let sub_seed = splitmix64(seed ^ (((n_a as u64) << 24) | m_a as u64));
            let outcome = optimize(&spec, restarts, sub_seed).map_err(|e| e.to_string());
            entries.push(SweepEntry {
                ancilla_photons: n_a,
                ancilla_modes: m_a,
                outcome,
            });
        }
    }
    entries.sort_by(|a, b| {
        let key = |e: &SweepEntry| match &e.outcome {
            Ok(r) => (r.passed, r.min_success()),
            Err(_) => (false, f64::NEG_INFINITY),
        };
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(entries)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::builtin_table;
    use crate::linalg::max_abs_diff;

    fn occ(counts: &[usize]) -> Occupation {
        Occupation::new(counts.to_vec())
    }

    #[test]
    fn realize_unitary_zero_theta_is_identity() {
        let params = UnitaryParams::new(3, vec![0.0; 9]).unwrap();
        let u = realize_unitary(&params);
        assert!(max_abs_diff(u.matrix(), &Array2::eye(3)) < 1e-14);
    }

    #[test]
    fn realize_unitary_pauli_x_generator() {
        // theta encoding H = (pi/2) sigma_x on 2 modes: diagonal 0, one
        // off-diagonal (re, im) = (pi/2, 0). U = i sigma_x.
        let half_pi = std::f64::consts::FRAC_PI_2;
        let params = UnitaryParams::new(2, vec![0.0, 0.0, half_pi, 0.0]).unwrap();
        let u = realize_unitary(&params);
        let mut expected = Array2::<Complex64>::zeros((2, 2));
        expected[[0, 1]] = Complex64::new(0.0, 1.0);
        expected[[1, 0]] = Complex64::new(0.0, 1.0);
        assert!(max_abs_diff(u.matrix(), &expected) < 1e-12);
    }

    #[test]
    fn realize_unitary_random_theta_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for modes in [2usize, 4, 6] {
            for scale in [1.0, 10.0, 300.0] {
                let theta: Vec<f64> = (0..modes * modes)
                    .map(|_| scale * standard_normal(&mut rng))
                    .collect();
                let u = realize_unitary(&UnitaryParams::new(modes, theta).unwrap());
                assert!(unitarity_deviation(u.matrix()) <= 1e-10);
            }
        }
    }

    #[test]
    fn realize_ancilla_rules() {
        let a = realize_ancilla(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1, 3).unwrap();
        assert_eq!(a.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert_eq!(a.basis().state(0), &occ(&[1, 0, 0]));

        let b = realize_ancilla(&[0.0, 3.7, 0.0, 0.0, 0.0, 0.0], 1, 3).unwrap();
        assert!((b.amplitudes()[0] - Complex64::new(0.0, 1.0)).norm() < 1e-12);

        let c = realize_ancilla(&[0.0; 6], 1, 3).unwrap();
        assert_eq!(c.amplitudes()[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn default_projectors_are_multiset_representatives() {
        let p = default_projectors(2, 2).unwrap();
        let outcomes: Vec<String> = p.iter().map(|x| x.outcome().to_string()).collect();
        assert_eq!(outcomes, vec!["2,0", "1,1"]);
        let p = default_projectors(4, 4).unwrap();
        assert_eq!(p.len(), 5); // partitions of 4 into at most 4 parts

        let trivial = default_projectors(0, 0).unwrap();
        assert_eq!(trivial.len(), 1);
        assert_eq!(trivial[0].outcome().modes(), 0);
    }

    #[test]
    fn merit_of_annihilating_projector_is_zero() {
        // U = I keeps the ancilla photon in mode 0, and the projector asks
        // for it in mode 1: every Kraus block vanishes.
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 1, 2)
            .unwrap()
            .with_projectors(vec![Projector::new(occ(&[0, 1]))]);
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let params = Params {
            theta: vec![0.0; theta_len],
            ancilla_raw: {
                let mut raw = vec![0.0; anc_len];
                raw[0] = 1.0; // ancilla |1,0>
                raw
            },
        };
        let m = merit(&spec, &spec.projectors[0], &params, 1.0).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn merit_counts_subspaces_at_exact_solutions() {
        // The identity circuit with a trivial ancilla solves the N_c = 0
        // and N_c = 1 blocks of C1 exactly with S = 1, so restricting the
        // problem to those subspaces gives merit = sum (1 + eps).
        let mut spec = ProblemSpec::new(builtin_table(SubOp::C1), 0, 0).unwrap();
        spec.subspaces = vec![0, 1];
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let mut ancilla_raw = vec![0.0; anc_len];
        ancilla_raw[0] = 1.0;
        let params = Params {
            theta: vec![0.0; theta_len],
            ancilla_raw,
        };
        let m = merit(&spec, &spec.projectors[0], &params, 1.0).unwrap();
        assert!((m - 4.0).abs() < 1e-10);
    }

    #[test]
    fn merit_invariant_under_raw_ancilla_rescaling() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 2, 2).unwrap();
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let theta: Vec<f64> = (0..theta_len).map(|_| standard_normal(&mut rng)).collect();
        let raw: Vec<f64> = (0..anc_len).map(|_| standard_normal(&mut rng)).collect();
        let params = Params {
            theta: theta.clone(),
            ancilla_raw: raw.clone(),
        };
        let scaled = Params {
            theta,
            ancilla_raw: raw.iter().map(|x| 2.9 * x).collect(),
        };
        let p = &spec.projectors[1];
        let a = merit(&spec, p, &params, 0.7).unwrap();
        let b = merit(&spec, p, &scaled, 0.7).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_directional_difference() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 1, 2).unwrap();
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let params = Params {
            theta: (0..theta_len)
                .map(|_| 0.3 * standard_normal(&mut rng))
                .collect(),
            ancilla_raw: (0..anc_len).map(|_| standard_normal(&mut rng)).collect(),
        };
        let p = &spec.projectors[0];
        let g = gradient(&spec, p, &params, 0.5).unwrap();

        let mut direction: Vec<f64> = (0..g.len()).map(|_| standard_normal(&mut rng)).collect();
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        direction.iter_mut().for_each(|d| *d /= norm);

        let h = 1e-4;
        let shift = |sign: f64| {
            let mut q = params.clone();
            for i in 0..theta_len {
                q.theta[i] += sign * h * direction[i];
            }
            for i in 0..anc_len {
                q.ancilla_raw[i] += sign * h * direction[theta_len + i];
            }
            merit(&spec, p, &q, 0.5).unwrap()
        };
        let fd = (shift(1.0) - shift(-1.0)) / (2.0 * h);
        let analytic: f64 = g.iter().zip(&direction).map(|(a, b)| a * b).sum();
        assert!(
            (fd - analytic).abs() <= 1e-3 * analytic.abs().max(1e-3),
            "fd {fd} vs g.d {analytic}"
        );
    }

    #[test]
    fn gradient_vanishes_along_ancilla_scaling_direction() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 2, 2).unwrap();
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let params = Params {
            theta: (0..theta_len)
                .map(|_| 0.3 * standard_normal(&mut rng))
                .collect(),
            ancilla_raw: (0..anc_len).map(|_| standard_normal(&mut rng)).collect(),
        };
        let g = gradient(&spec, &spec.projectors[1], &params, 1.0).unwrap();
        let radial: f64 = g[theta_len..]
            .iter()
            .zip(&params.ancilla_raw)
            .map(|(gi, xi)| gi * xi)
            .sum();
        assert!(radial.abs() < 1e-6, "radial derivative {radial}");
    }

    #[test]
    fn merit_gradient_vanishes_at_converged_ascent() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 1, 2).unwrap();
        let projector = &spec.projectors[0];
        let mut evaluator = MeritEvaluator::new(&spec, projector).unwrap();
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let mut theta: Vec<f64> = (0..theta_len)
            .map(|_| 0.4 * standard_normal(&mut rng))
            .collect();
        let mut ancilla_raw: Vec<f64> = (0..anc_len).map(|_| standard_normal(&mut rng)).collect();
        let options = SearchOptions {
            improvement_tol: 1e-13,
            ..SearchOptions::default()
        };
        ascend(
            &mut evaluator,
            &mut theta,
            &mut ancilla_raw,
            Objective::Merit { epsilon: 1.0 },
            &options,
        );
        let params = Params {
            theta,
            ancilla_raw,
        };
        let g = gradient(&spec, projector, &params, 1.0).unwrap();
        let max = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max <= 1e-4, "gradient max-norm {max} at converged point");
    }

    #[test]
    fn evaluator_agrees_with_assembly_path() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 2, 2).unwrap();
        let (theta_len, anc_len) = spec.param_split().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let params = Params {
            theta: (0..theta_len)
                .map(|_| 0.5 * standard_normal(&mut rng))
                .collect(),
            ancilla_raw: (0..anc_len).map(|_| standard_normal(&mut rng)).collect(),
        };
        let projector = &spec.projectors[1];
        let mut evaluator = MeritEvaluator::new(&spec, projector).unwrap();
        let fast = evaluator.measures(&params);
        let report = evaluate_solution(
            &spec.gate,
            2,
            2,
            &params.theta,
            &params.ancilla_raw,
            projector.outcome(),
            1.0,
        )
        .unwrap();
        for (quick, slow) in fast.iter().zip(&report.measures) {
            assert!((quick.0 - slow.fidelity).abs() < 1e-12);
            assert!((quick.1 - slow.success).abs() < 1e-12);
        }
    }

    #[test]
    fn optimize_is_deterministic_given_seed() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 1, 1).unwrap();
        let a = optimize(&spec, 2, 9).unwrap();
        let b = optimize(&spec, 2, 9).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.ancilla_raw, b.ancilla_raw);
        assert_eq!(a.merit, b.merit);
        assert_eq!(a.winning_restart, b.winning_restart);
    }

    #[test]
    fn optimize_without_ancilla_flags_no_exact_solution() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 0, 0).unwrap();
        let result = optimize(&spec, 4, 3).unwrap();
        assert!(!result.passed, "C1 is impossible without ancilla resources");
    }

    #[test]
    fn optimize_rejects_bad_configs() {
        let spec = ProblemSpec::new(builtin_table(SubOp::C1), 1, 1).unwrap();
        assert!(optimize(&spec, 0, 1).is_err());
        let guarded = ProblemSpec::new(builtin_table(SubOp::C4), 8, 8).unwrap();
        // 10 photons in 14 modes blows straight past the guard.
        assert!(matches!(
            optimize(&guarded, 1, 1),
            Err(Error::ResourceGuard { .. })
        ));
    }

    #[test]
    fn sweep_empty_ranges_give_empty_results() {
        let entries = sweep(&builtin_table(SubOp::C1), &[], &[], &[1.0], 1, 0, 10_000).unwrap();
        assert!(entries.is_empty());
    }

    #[test]
    #[ignore = "extended run (about a minute)"]
    fn sweep_c1_prefers_two_photon_two_mode_ancilla() {
        let entries = sweep(
            &builtin_table(SubOp::C1),
            &[1, 2],
            &[1, 2],
            &[0.1, 1.0],
            10,
            11,
            10_000,
        )
        .unwrap();
        let best = entries
            .first()
            .and_then(|e| e.outcome.as_ref().ok())
            .expect("best entry is a completed run");
        assert!(best.passed);
        assert_eq!((best.ancilla_photons, best.ancilla_modes), (2, 2));
        assert!((best.min_success() - 2.0 / 27.0).abs() < 1e-4);
    }

    #[test]
    fn sweep_skips_guarded_points_with_reason() {
        let entries = sweep(
            &builtin_table(SubOp::C1),
            &[1, 6],
            &[1, 8],
            &[1.0],
            1,
            5,
            200,
        )
        .unwrap();
        assert_eq!(entries.len(), 4);
        let skipped: Vec<_> = entries
            .iter()
            .filter(|e| matches!(&e.outcome, Err(reason) if reason.contains("guard")))
            .collect();
        assert!(!skipped.is_empty());
    }
}
