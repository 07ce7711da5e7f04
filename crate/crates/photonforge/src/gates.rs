//! The elementary inter-block entangling operations C1-C4 as Fock-basis
//! gate tables, the single-photon block encoding, the schedules that
//! compose a CNOT between the first qubit of one block and the last qubit
//! of another, and the resulting success-probability formulas.
//!
//! Mode indices are 0-based everywhere; the tables below are the only
//! place where published (1-based) data is transcribed.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{hilbert_dim, FockBasis, Occupation};
use crate::kraus::embed_gate;

/// The four elementary controlled mode-swap sub-operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubOp {
    C1,
    C2,
    C3,
    C4,
}

impl SubOp {
    pub const ALL: [SubOp; 4] = [SubOp::C1, SubOp::C2, SubOp::C3, SubOp::C4];

    pub fn name(self) -> &'static str {
        match self {
            SubOp::C1 => "c1",
            SubOp::C2 => "c2",
            SubOp::C3 => "c3",
            SubOp::C4 => "c4",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "c1" => Ok(SubOp::C1),
            "c2" => Ok(SubOp::C2),
            "c3" => Ok(SubOp::C3),
            "c4" => Ok(SubOp::C4),
            other => Err(Error::InvalidConfig(format!("unknown sub-operation {other:?}"))),
        }
    }

    /// Modes the sub-operation acts on.
    pub fn mode_count(self) -> usize {
        match self {
            SubOp::C1 => 3,
            SubOp::C2 => 4,
            SubOp::C3 => 5,
            SubOp::C4 => 6,
        }
    }

    pub fn control_mode_count(self) -> usize {
        match self {
            SubOp::C1 | SubOp::C3 => 1,
            SubOp::C2 | SubOp::C4 => 2,
        }
    }

    pub fn target_mode_count(self) -> usize {
        match self {
            SubOp::C1 | SubOp::C2 => 2,
            SubOp::C3 | SubOp::C4 => 4,
        }
    }

    /// Smallest block size the sub-operation composes a CNOT for.
    pub fn min_block_size(self) -> usize {
        match self {
            SubOp::C1 => 1,
            SubOp::C2 | SubOp::C3 | SubOp::C4 => 2,
        }
    }

    /// Number of applications needed for a CNOT_first,last at block size q:
    /// 2^(2q-2), 2^(2q-3), 2^(2q-3), 2^(2q-4) for C1..C4.
    pub fn applications(self, q: usize) -> Result<usize> {
        if q < self.min_block_size() {
            return Err(Error::BlockSizeTooSmall {
                sub_op: self.name(),
                q,
                min_q: self.min_block_size(),
            });
        }
        let exponent = match self {
            SubOp::C1 => 2 * q - 2,
            SubOp::C2 | SubOp::C3 => 2 * q - 3,
            SubOp::C4 => 2 * q - 4,
        };
        Ok(1usize << exponent)
    }
}

impl std::fmt::Display for SubOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// Table data. Row layout per sub-operation: control modes first, then
// target modes, matching the published ordering.
const C1_ROWS: &[(&[usize], &[usize])] = &[
    (&[0, 0, 0], &[0, 0, 0]),
    (&[0, 0, 1], &[0, 0, 1]),
    (&[0, 1, 0], &[0, 1, 0]),
    (&[1, 0, 0], &[1, 0, 0]),
    (&[1, 0, 1], &[1, 1, 0]),
    (&[1, 1, 0], &[1, 0, 1]),
];

const C2_ROWS: &[(&[usize], &[usize])] = &[
    (&[0, 0, 0, 0], &[0, 0, 0, 0]),
    (&[0, 0, 0, 1], &[0, 0, 0, 1]),
    (&[0, 0, 1, 0], &[0, 0, 1, 0]),
    (&[0, 1, 0, 0], &[0, 1, 0, 0]),
    (&[1, 0, 0, 0], &[1, 0, 0, 0]),
    (&[1, 0, 0, 1], &[1, 0, 1, 0]),
    (&[1, 0, 1, 0], &[1, 0, 0, 1]),
    (&[0, 1, 0, 1], &[0, 1, 1, 0]),
    (&[0, 1, 1, 0], &[0, 1, 0, 1]),
];

const C3_ROWS: &[(&[usize], &[usize])] = &[
    (&[0, 0, 0, 0, 0], &[0, 0, 0, 0, 0]),
    (&[0, 0, 0, 0, 1], &[0, 0, 0, 0, 1]),
    (&[0, 0, 0, 1, 0], &[0, 0, 0, 1, 0]),
    (&[0, 0, 1, 0, 0], &[0, 0, 1, 0, 0]),
    (&[0, 1, 0, 0, 0], &[0, 1, 0, 0, 0]),
    (&[1, 0, 0, 0, 0], &[1, 0, 0, 0, 0]),
    (&[1, 0, 0, 0, 1], &[1, 0, 0, 1, 0]),
    (&[1, 0, 0, 1, 0], &[1, 0, 0, 0, 1]),
    (&[1, 0, 1, 0, 0], &[1, 1, 0, 0, 0]),
    (&[1, 1, 0, 0, 0], &[1, 0, 1, 0, 0]),
];

const C4_ROWS: &[(&[usize], &[usize])] = &[
    (&[0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 0]),
    (&[0, 0, 0, 0, 0, 1], &[0, 0, 0, 0, 0, 1]),
    (&[0, 0, 0, 0, 1, 0], &[0, 0, 0, 0, 1, 0]),
    (&[0, 0, 0, 1, 0, 0], &[0, 0, 0, 1, 0, 0]),
    (&[0, 0, 1, 0, 0, 0], &[0, 0, 1, 0, 0, 0]),
    (&[0, 1, 0, 0, 0, 0], &[0, 1, 0, 0, 0, 0]),
    (&[1, 0, 0, 0, 0, 0], &[1, 0, 0, 0, 0, 0]),
    (&[0, 1, 0, 0, 0, 1], &[0, 1, 0, 0, 1, 0]),
    (&[0, 1, 0, 0, 1, 0], &[0, 1, 0, 0, 0, 1]),
    (&[0, 1, 0, 1, 0, 0], &[0, 1, 1, 0, 0, 0]),
    (&[0, 1, 1, 0, 0, 0], &[0, 1, 0, 1, 0, 0]),
    (&[1, 0, 0, 0, 0, 1], &[1, 0, 0, 0, 1, 0]),
    (&[1, 0, 0, 0, 1, 0], &[1, 0, 0, 0, 0, 1]),
    (&[1, 0, 0, 1, 0, 0], &[1, 0, 1, 0, 0, 0]),
    (&[1, 0, 1, 0, 0, 0], &[1, 0, 0, 1, 0, 0]),
];

/// A partial Fock-basis permutation specifying a target operation.
#[derive(Clone, Debug)]
pub struct GateTable {
    sub_op: SubOp,
    rows: Vec<(Occupation, Occupation)>,
}

/// Exact transcription of the published table for a sub-operation.
pub fn builtin_table(sub_op: SubOp) -> GateTable {
    let raw = match sub_op {
        SubOp::C1 => C1_ROWS,
        SubOp::C2 => C2_ROWS,
        SubOp::C3 => C3_ROWS,
        SubOp::C4 => C4_ROWS,
    };
    let rows = raw
        .iter()
        .map(|(input, output)| {
            (
                Occupation::new(input.to_vec()),
                Occupation::new(output.to_vec()),
            )
        })
        .collect();
    GateTable { sub_op, rows }
}

impl GateTable {
    pub fn sub_op(&self) -> SubOp {
        self.sub_op
    }

    pub fn name(&self) -> &'static str {
        self.sub_op.name()
    }

    pub fn mode_count(&self) -> usize {
        self.sub_op.mode_count()
    }

    pub fn rows(&self) -> &[(Occupation, Occupation)] {
        &self.rows
    }

    /// Image of a listed input state, if present.
    pub fn apply(&self, input: &Occupation) -> Option<&Occupation> {
        self.rows
            .iter()
            .find(|(i, _)| i == input)
            .map(|(_, o)| o)
    }

    /// Photon numbers occurring among table inputs, ascending.
    pub fn photon_numbers(&self) -> Vec<usize> {
        let mut numbers: Vec<usize> = self.rows.iter().map(|(i, _)| i.photons()).collect();
        numbers.sort_unstable();
        numbers.dedup();
        numbers
    }

    /// Table inputs with a given photon number, in row order.
    pub fn inputs_with_photons(&self, photons: usize) -> Vec<Occupation> {
        self.rows
            .iter()
            .filter(|(i, _)| i.photons() == photons)
            .map(|(i, _)| i.clone())
            .collect()
    }

    /// CSV rendering (input occupation, output occupation), one row each.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("input,output\n");
        for (input, output) in &self.rows {
            out.push_str(&format!("\"{input}\",\"{output}\"\n"));
        }
        out
    }
}

/// Target operator for one photon-number subspace of a gate table: the
/// table inputs form the input basis, the full physical space the output
/// basis, and the matrix has a single 1 per column at the image row.
#[derive(Clone, Debug)]
pub struct TargetOperator {
    pub input_basis: Arc<FockBasis>,
    pub output_basis: Arc<FockBasis>,
    pub matrix: Array2<Complex64>,
}

pub fn targets_from_table(table: &GateTable, photons: usize) -> Result<TargetOperator> {
    if !table.photon_numbers().contains(&photons) {
        return Err(Error::InvalidConfig(format!(
            "gate table {} has no inputs with {photons} photons",
            table.name()
        )));
    }
    let mut inputs = table.inputs_with_photons(photons);
    // Canonical (lexicographically decreasing) order, matching the full
    // output enumeration so identity rows land on the diagonal.
    inputs.sort_by(|a, b| b.cmp(a));
    let input_basis = Arc::new(FockBasis::from_states(inputs, table.mode_count())?);
    let output_basis = Arc::new(FockBasis::full(photons, table.mode_count()));
    let mut matrix = Array2::zeros((output_basis.len(), input_basis.len()));
    for (j, input) in input_basis.iter().enumerate() {
        let image = table.apply(input).expect("input taken from table");
        let i = output_basis.position(image).expect("full basis");
        matrix[[i, j]] = Complex64::new(1.0, 0.0);
    }
    Ok(TargetOperator {
        input_basis,
        output_basis,
        matrix,
    })
}

/// Blocks of q qubits encoded into one photon over 2^q modes.
#[derive(Clone, Copy, Debug)]
pub struct BlockEncoding {
    qubits_per_block: usize,
}

impl BlockEncoding {
    pub fn new(qubits_per_block: usize) -> Result<Self> {
        if qubits_per_block == 0 {
            return Err(Error::InvalidConfig("block size q must be >= 1".into()));
        }
        Ok(BlockEncoding { qubits_per_block })
    }

    pub fn qubits_per_block(&self) -> usize {
        self.qubits_per_block
    }

    pub fn block_modes(&self) -> usize {
        1 << self.qubits_per_block
    }

    /// Modes of the two-block register.
    pub fn register_modes(&self) -> usize {
        2 * self.block_modes()
    }
}

/// Map a logical label of 2q bits (first q bits = first block, each block
/// big-endian) onto the two-block register: one photon per block, at the
/// binary-indexed mode within the block.
pub fn encode_logical(q: usize, bits: &[u8]) -> Result<Occupation> {
    let encoding = BlockEncoding::new(q)?;
    if bits.len() != 2 * q {
        return Err(Error::InvalidConfig(format!(
            "expected {} logical bits, got {}",
            2 * q,
            bits.len()
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::InvalidConfig("logical bits must be 0 or 1".into()));
    }
    let block_modes = encoding.block_modes();
    let mut counts = vec![0usize; encoding.register_modes()];
    for block in 0..2 {
        let mut index = 0usize;
        for &bit in &bits[block * q..(block + 1) * q] {
            index = (index << 1) | bit as usize;
        }
        counts[block * block_modes + index] = 1;
    }
    Ok(Occupation::new(counts))
}

/// Bits of a logical label, big-endian, for iteration over all states.
pub fn logical_bits(q: usize, label: usize) -> Vec<u8> {
    (0..2 * q)
        .rev()
        .map(|position| ((label >> position) & 1) as u8)
        .collect()
}

/// One application of a sub-operation on the two-block register.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Application {
    pub control_modes: Vec<usize>,
    pub target_modes: Vec<usize>,
}

impl Application {
    /// Register modes in table order: controls first, then targets.
    pub fn mode_indices(&self) -> Vec<usize> {
        let mut modes = self.control_modes.clone();
        modes.extend_from_slice(&self.target_modes);
        modes
    }
}

/// The deterministic application list composing CNOT_first,last.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub sub_op: SubOp,
    pub q: usize,
    pub applications: Vec<Application>,
}

impl Schedule {
    pub fn count(&self) -> usize {
        self.applications.len()
    }
}

/// Enumerate the applications of `sub_op` composing CNOT_first,last at
/// block size `q`: controls range over the second half of the control
/// block (singly or in sequential pairs), targets over sequential pairs
/// or quads of the target block.
pub fn cnot_schedule(q: usize, sub_op: SubOp) -> Result<Schedule> {
    let expected = sub_op.applications(q)?;
    let encoding = BlockEncoding::new(q)?;
    let block = encoding.block_modes();
    let control_base = block / 2;
    let target_base = block;

    let control_groups: Vec<Vec<usize>> = match sub_op.control_mode_count() {
        1 => (0..block / 2).map(|i| vec![control_base + i]).collect(),
        2 => (0..block / 4)
            .map(|i| vec![control_base + 2 * i, control_base + 2 * i + 1])
            .collect(),
        _ => unreachable!(),
    };
    let group = sub_op.target_mode_count();
    let target_groups: Vec<Vec<usize>> = (0..block / group)
        .map(|i| (0..group).map(|k| target_base + group * i + k).collect())
        .collect();

    let mut applications = Vec::with_capacity(expected);
    for controls in &control_groups {
        for targets in &target_groups {
            applications.push(Application {
                control_modes: controls.clone(),
                target_modes: targets.clone(),
            });
        }
    }
    debug_assert_eq!(applications.len(), expected);
    Ok(Schedule {
        sub_op,
        q,
        applications,
    })
}

/// Brute-force check that the schedule composes to CNOT_first,last on all
/// 2^(2q) encoded logical basis states. Register growth limits this to
/// desk scale.
pub fn verify_schedule(q: usize, sub_op: SubOp) -> Result<bool> {
    if q > 3 {
        return Err(Error::ResourceGuard {
            quantity: "block size q for truth-table verification",
            value: q as u128,
            limit: 3,
        });
    }
    let schedule = cnot_schedule(q, sub_op)?;
    let table = builtin_table(sub_op);
    let register = BlockEncoding::new(q)?.register_modes();
    let embedded: Vec<_> = schedule
        .applications
        .iter()
        .map(|application| embed_gate(&table, &application.mode_indices(), register))
        .collect::<Result<_>>()?;

    for label in 0..(1usize << (2 * q)) {
        let bits = logical_bits(q, label);
        let mut state = encode_logical(q, &bits)?;
        for gate in &embedded {
            state = gate.apply(&state)?;
        }
        let mut expected_bits = bits.clone();
        if expected_bits[0] == 1 {
            let last = expected_bits.len() - 1;
            expected_bits[last] ^= 1;
        }
        let expected = encode_logical(q, &expected_bits)?;
        if state != expected {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Success probability of the composed CNOT_first,last: the per-application
/// success raised to the schedule count.
pub fn block_cnot_probability(q: usize, sub_op: SubOp, per_application: f64) -> Result<f64> {
    let count = sub_op.applications(q)?;
    Ok(per_application.powi(count as i32))
}

/// Joint Hilbert-space dimension of one sub-operation application with an
/// ancilla attached, used by resource guards.
pub fn joint_dimension(sub_op: SubOp, ancilla_photons: usize, ancilla_modes: usize) -> Result<usize> {
    let max_photons = ancilla_photons + 2;
    hilbert_dim(max_photons, ancilla_modes + sub_op.mode_count())
}
