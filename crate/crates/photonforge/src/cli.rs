//! Run configuration, result records, verification, and CSV emission
//! behind the `photonforge` binary.
//!
//! Records are JSON with two top-level sections: `payload` holds
//! everything derived from the configuration (bit-reproducible given the
//! seed), `meta` holds timing and provenance that legitimately varies
//! between runs.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hilbert_dim, FockBasis, Occupation};
use crate::gates::{block_cnot_probability, builtin_table, verify_schedule, SubOp};
use crate::kraus::Projector;
use crate::optim::{
    evaluate_solution, optimize, sweep, OptimizationResult, ProblemSpec, SubspaceMeasures,
};
use crate::oracle::symbolic_apply;
use crate::transfer::{render_transfer, ModeUnitary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FILTER_UNMET: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_RESOURCE_GUARD: i32 = 3;

/// Published per-application success probabilities used by
/// `figure --paper-constants`.
pub fn paper_success(sub_op: SubOp) -> f64 {
    match sub_op {
        SubOp::C1 => 2.0 / 27.0,
        SubOp::C2 => 0.0221391,
        SubOp::C3 => 0.0221266,
        SubOp::C4 => 0.00691511,
    }
}

/// 17-significant-digit float formatting: exact double round trip in
/// text output.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// An optimize invocation, echoed verbatim into its record.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OptimizeConfig {
    pub gate: String,
    pub ancilla_photons: usize,
    pub ancilla_modes: usize,
    pub epsilons: Vec<f64>,
    pub restarts: usize,
    pub seed: u64,
    /// Explicit projector outcomes (comma-separated occupations); empty
    /// means the default multiset representatives.
    pub projectors: Vec<String>,
    pub jobs: Option<usize>,
    pub emit_kraus: bool,
}

impl OptimizeConfig {
    pub fn sub_op(&self) -> Result<SubOp> {
        SubOp::parse(&self.gate)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let sub_op = self.sub_op()?;
        let mut spec = ProblemSpec::new(
            builtin_table(sub_op),
            self.ancilla_photons,
            self.ancilla_modes,
        )?;
        if !self.epsilons.is_empty() {
            spec = spec.with_epsilons(self.epsilons.clone());
        }
        if !self.projectors.is_empty() {
            let projectors = self
                .projectors
                .iter()
                .map(|text| {
                    let outcome: Occupation = text.parse()?;
                    if outcome.modes() != self.ancilla_modes
                        || outcome.photons() != self.ancilla_photons
                    {
                        return Err(Error::InvalidConfig(format!(
                            "projector {text:?} does not match ancilla ({}, {})",
                            self.ancilla_photons, self.ancilla_modes
                        )));
                    }
                    Ok(Projector::new(outcome))
                })
                .collect::<Result<Vec<_>>>()?;
            spec = spec.with_projectors(projectors);
        }
        Ok(spec)
    }
}

/// p(q) for one block size derived from an achieved per-application
/// success.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScheduleEntry {
    pub q: usize,
    pub applications: usize,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScheduleInfo {
    pub sub_op: String,
    pub per_application_success: f64,
    pub entries: Vec<ScheduleEntry>,
}

/// Kraus matrix export: row-major (re, im) pairs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KrausExport {
    pub photons: usize,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RecordOutcome {
    pub passed: bool,
    pub projector: String,
    pub theta: Vec<f64>,
    pub ancilla_raw: Vec<f64>,
    pub subspaces: Vec<SubspaceMeasures>,
    pub merit: f64,
    pub epsilon: f64,
    pub winning_projector: usize,
    pub winning_restart: usize,
    pub iterations: u64,
    pub schedule: ScheduleInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<KrausExport>>,
}

/// The reproducible part of a record.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RecordPayload {
    pub config: OptimizeConfig,
    pub outcome: RecordOutcome,
}

/// Timing and provenance; excluded from determinism comparisons.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordMeta {
    pub timestamp_unix: u64,
    pub wall_time_s: f64,
    pub tool: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub payload: RecordPayload,
    pub meta: RecordMeta,
}

impl ResultRecord {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Largest block size included in a record's derived p(q) listing.
const SCHEDULE_REPORT_MAX_Q: usize = 4;

fn schedule_info(sub_op: SubOp, per_application_success: f64) -> Result<ScheduleInfo> {
    let mut entries = Vec::new();
    for q in sub_op.min_block_size()..=SCHEDULE_REPORT_MAX_Q {
        entries.push(ScheduleEntry {
            q,
            applications: sub_op.applications(q)?,
            p: block_cnot_probability(q, sub_op, per_application_success)?,
        });
    }
    Ok(ScheduleInfo {
        sub_op: sub_op.name().to_string(),
        per_application_success,
        entries,
    })
}

fn build_record(config: &OptimizeConfig, result: &OptimizationResult) -> Result<ResultRecord> {
    let sub_op = config.sub_op()?;
    let schedule = schedule_info(sub_op, result.min_success())?;
    let kraus = if config.emit_kraus {
        let report = evaluate_solution(
            &builtin_table(sub_op),
            result.ancilla_photons,
            result.ancilla_modes,
            &result.theta,
            &result.ancilla_raw,
            &result.projector,
            result.epsilon,
        )?;
        Some(
            report
                .kraus
                .iter()
                .zip(&report.measures)
                .map(|(e, m)| KrausExport {
                    photons: m.photons,
                    rows: e.matrix().nrows(),
                    cols: e.matrix().ncols(),
                    entries: e.to_pairs(),
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(ResultRecord {
        payload: RecordPayload {
            config: config.clone(),
            outcome: RecordOutcome {
                passed: result.passed,
                projector: result.projector.to_string(),
                theta: result.theta.clone(),
                ancilla_raw: result.ancilla_raw.clone(),
                subspaces: result.subspaces.clone(),
                merit: result.merit,
                epsilon: result.epsilon,
                winning_projector: result.winning_projector,
                winning_restart: result.winning_restart,
                iterations: result.iterations,
                schedule,
                kraus,
            },
        },
        meta: RecordMeta {
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_s: result.wall_time_s,
            tool: format!("photonforge {}", env!("CARGO_PKG_VERSION")),
        },
    })
}

/// `basis N M`: canonical enumeration with its dimension.
pub fn cmd_basis(photons: usize, modes: usize, out: &mut dyn std::io::Write) -> Result<()> {
    let dim = hilbert_dim(photons, modes)?;
    let basis = FockBasis::full(photons, modes);
    writeln!(out, "# {photons} photons in {modes} modes: dimension {dim}")?;
    for state in basis.iter() {
        writeln!(out, "{state}")?;
    }
    Ok(())
}

/// `render`: print the transfer matrix of a unitary on the full bases.
pub fn cmd_render(
    unitary: &ModeUnitary,
    photons: usize,
    out: &mut dyn std::io::Write,
) -> Result<()> {
    let basis = std::sync::Arc::new(FockBasis::full(photons, unitary.dim()));
    let transfer = render_transfer(
        unitary,
        std::sync::Arc::clone(&basis),
        std::sync::Arc::clone(&basis),
    )?;
    writeln!(
        out,
        "# transfer operator: {} photons in {} modes, {} x {}",
        photons,
        unitary.dim(),
        basis.len(),
        basis.len()
    )?;
    for (i, row_state) in basis.iter().enumerate() {
        let row: Vec<String> = (0..basis.len())
            .map(|j| {
                let z = transfer.matrix()[[i, j]];
                format!("({},{})", fmt_f64(z.re), fmt_f64(z.im))
            })
            .collect();
        writeln!(out, "{row_state} | {}", row.join(" "))?;
    }
    Ok(())
}

/// `oracle`: brute-force expansion of one input state (debugging aid).
pub fn cmd_oracle(
    unitary: &ModeUnitary,
    input: &Occupation,
    out: &mut dyn std::io::Write,
) -> Result<()> {
    let result = symbolic_apply(unitary, input)?;
    writeln!(
        out,
        "# expansion of {input} over {} basis states",
        result.basis().len()
    )?;
    for (state, amp) in result.basis().iter().zip(result.amplitudes()) {
        if amp.norm_sqr() > 1e-24 {
            writeln!(out, "{state} ({},{})", fmt_f64(amp.re), fmt_f64(amp.im))?;
        }
    }
    Ok(())
}

/// `optimize`: run the search and persist a record.
pub fn cmd_optimize(config: &OptimizeConfig, out_path: &Path) -> Result<ResultRecord> {
    let spec = config.problem_spec()?;
    let result = match config.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            pool.install(|| optimize(&spec, config.restarts, config.seed))?
        }
        None => optimize(&spec, config.restarts, config.seed)?,
    };
    let record = build_record(config, &result)?;
    record.write(out_path)?;
    Ok(record)
}

/// One entry of a sweep output file: either a full record payload or the
/// reason the grid point was skipped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecordEntry {
    pub ancilla_photons: usize,
    pub ancilla_modes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<RecordPayload>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// `sweep`: optimize over a grid of ancilla resources.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    gate: SubOp,
    ancilla_photons: &[usize],
    ancilla_modes: &[usize],
    epsilons: &[f64],
    restarts: usize,
    seed: u64,
    guard: usize,
    out_path: &Path,
    out: &mut dyn std::io::Write,
) -> Result<Vec<SweepRecordEntry>> {
    let table = builtin_table(gate);
    let entries = sweep(
        &table,
        ancilla_photons,
        ancilla_modes,
        epsilons,
        restarts,
        seed,
        guard,
    )?;
    let mut records = Vec::new();
    for entry in &entries {
        match &entry.outcome {
            Ok(result) => {
                let config = OptimizeConfig {
                    gate: gate.name().to_string(),
                    ancilla_photons: entry.ancilla_photons,
                    ancilla_modes: entry.ancilla_modes,
                    epsilons: epsilons.to_vec(),
                    restarts,
                    seed: result.seed,
                    projectors: Vec::new(),
                    jobs: None,
                    emit_kraus: false,
                };
                let record = build_record(&config, result)?;
                writeln!(
                    out,
                    "N_a={} M_a={} projector=({}) passed={} min_S={}",
                    entry.ancilla_photons,
                    entry.ancilla_modes,
                    result.projector,
                    result.passed,
                    fmt_f64(result.min_success()),
                )?;
                records.push(SweepRecordEntry {
                    ancilla_photons: entry.ancilla_photons,
                    ancilla_modes: entry.ancilla_modes,
                    record: Some(record.payload),
                    skipped: None,
                });
            }
            Err(reason) => {
                writeln!(
                    out,
                    "N_a={} M_a={} skipped: {reason}",
                    entry.ancilla_photons, entry.ancilla_modes
                )?;
                records.push(SweepRecordEntry {
                    ancilla_photons: entry.ancilla_photons,
                    ancilla_modes: entry.ancilla_modes,
                    record: None,
                    skipped: Some(reason.clone()),
                });
            }
        }
    }
    let mut file = std::fs::File::create(out_path)?;
    serde_json::to_writer_pretty(&mut file, &records)?;
    file.write_all(b"\n")?;
    Ok(records)
}

/// Where `figure` takes its per-application success values from.
pub enum FigureSource {
    PaperConstants,
    Records(Vec<ResultRecord>),
}

/// `figure`: CSV of composed-gate success probabilities p(q).
pub fn cmd_figure(sub_ops: &[SubOp], q_values: &[usize], source: &FigureSource) -> Result<String> {
    let mut csv = String::from("sub_op,q,applications,s_per_application,p\n");
    for &sub_op in sub_ops {
        let success = match source {
            FigureSource::PaperConstants => paper_success(sub_op),
            FigureSource::Records(records) => {
                let record = records
                    .iter()
                    .find(|r| r.payload.config.gate == sub_op.name())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "no record supplies {} and --paper-constants not given",
                            sub_op.name()
                        ))
                    })?;
                record.payload.outcome.schedule.per_application_success
            }
        };
        for &q in q_values {
            if q < sub_op.min_block_size() {
                continue;
            }
            let applications = sub_op.applications(q)?;
            let p = block_cnot_probability(q, sub_op, success)?;
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                sub_op.name(),
                q,
                applications,
                fmt_f64(success),
                fmt_f64(p)
            ));
        }
    }
    Ok(csv)
}

/// Outcome of `verify`.
#[derive(Debug)]
pub struct VerifyReport {
    pub passed: bool,
    pub max_deviation: f64,
    pub lines: Vec<String>,
}

const VERIFY_TOL: f64 = 1e-10;

/// Recompute every stored measure from the record's parameters and check
/// the schedule claims. A deviation anywhere above 1e-10 fails.
pub fn cmd_verify(record: &ResultRecord) -> Result<VerifyReport> {
    let config = &record.payload.config;
    let outcome = &record.payload.outcome;
    let sub_op = config.sub_op()?;
    let projector: Occupation = outcome.projector.parse()?;
    let report = evaluate_solution(
        &builtin_table(sub_op),
        config.ancilla_photons,
        config.ancilla_modes,
        &outcome.theta,
        &outcome.ancilla_raw,
        &projector,
        outcome.epsilon,
    )?;

    let mut lines = Vec::new();
    let mut max_deviation = 0.0f64;
    if report.measures.len() != outcome.subspaces.len() {
        return Err(Error::VerifyFailed(format!(
            "record lists {} subspaces, recomputation produced {}",
            outcome.subspaces.len(),
            report.measures.len()
        )));
    }
    for (stored, fresh) in outcome.subspaces.iter().zip(&report.measures) {
        let df = (stored.fidelity - fresh.fidelity).abs();
        let ds = (stored.success - fresh.success).abs();
        max_deviation = max_deviation.max(df).max(ds);
        lines.push(format!(
            "N_c={}: fidelity deviation {:.3e}, success deviation {:.3e}",
            stored.photons, df, ds
        ));
    }
    let dm = (outcome.merit - report.merit).abs();
    max_deviation = max_deviation.max(dm);
    lines.push(format!("merit deviation {dm:.3e}"));

    for entry in &outcome.schedule.entries {
        let expected =
            block_cnot_probability(entry.q, sub_op, outcome.schedule.per_application_success)?;
        let dp = (entry.p - expected).abs();
        max_deviation = max_deviation.max(dp);
        if entry.q <= 3 {
            let ok = verify_schedule(entry.q, sub_op)?;
            let states = 1usize << (2 * entry.q);
            if ok {
                lines.push(format!(
                    "schedule verified: CNOT_1,{} reproduced on {states}/{states} states ({}, q={})",
                    2 * entry.q,
                    sub_op.name(),
                    entry.q
                ));
            } else {
                return Err(Error::VerifyFailed(format!(
                    "schedule for {} at q={} does not compose to CNOT_first,last",
                    sub_op.name(),
                    entry.q
                )));
            }
        }
    }

    let passed = max_deviation <= VERIFY_TOL;
    lines.push(format!(
        "max deviation {max_deviation:.3e} (tolerance {VERIFY_TOL:.0e}): {}",
        if passed { "PASS" } else { "FAIL" }
    ));
    Ok(VerifyReport {
        passed,
        max_deviation,
        lines,
    })
}

/// Parse "a..b" (inclusive) or a single integer.
pub fn parse_range(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad range start {lo:?}")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad range end {hi:?}")))?;
        if hi < lo {
            return Err(Error::InvalidConfig(format!("empty range {text:?}")));
        }
        Ok((lo..=hi).collect())
    } else {
        let v: usize = text
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad integer {text:?}")))?;
        Ok(vec![v])
    }
}

/// Parse a comma-separated list of f64.
pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad number {p:?}")))
        })
        .collect()
}

/// Parse a comma-separated list of sub-operation names.
pub fn parse_sub_ops(text: &str) -> Result<Vec<SubOp>> {
    text.split(',').map(|p| SubOp::parse(p.trim())).collect()
}

/// Serialized mode unitary: {"dim": M, "entries": [[re, im], ...]}
/// row-major.
#[derive(Serialize, Deserialize)]
pub struct UnitaryFile {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

pub fn read_unitary(path: &Path) -> Result<ModeUnitary> {
    let text = std::fs::read_to_string(path)?;
    let file: UnitaryFile = serde_json::from_str(&text)?;
    ModeUnitary::from_pairs(file.dim, &file.entries)
}

pub fn write_unitary(unitary: &ModeUnitary, path: &Path) -> Result<()> {
    let file = UnitaryFile {
        dim: unitary.dim(),
        entries: unitary.to_pairs(),
    };
    let mut out = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    Ok(())
}
