//! End-to-end run of the reduction chain with witness propagation, plus
//! output files and a seeded formula generator.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::formats::{self, FormatError, Witness};
use crate::ilp::{self, EncodedIlp, IlpError, TwoStageIlp};
use crate::mrd::{self, MrdError, MrdReduction, ResidueMode};
use crate::qc::{
    self, AuditReport, CoeffMode, QcError, QcInstance, SatLinearSystem, UniquenessReport,
};
use crate::sat::{self, Assignment, Clause, Formula, Literal, SatError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sat layer: {0}")]
    Sat(#[from] SatError),
    #[error("qc layer: {0}")]
    Qc(#[from] QcError),
    #[error("mrd layer: {0}")]
    Mrd(#[from] MrdError),
    #[error("ilp layer: {0}")]
    Ilp(#[from] IlpError),
    #[error("format: {0}")]
    Format(#[from] FormatError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn layer(&self) -> &'static str {
        match self {
            Self::Sat(_) => "sat",
            Self::Qc(_) => "qc",
            Self::Mrd(_) => "mrd",
            Self::Ilp(_) => "ilp",
            Self::Format(_) | Self::Io(_) => "output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub coeff_mode: CoeffMode,
    pub residue_mode: ResidueMode,
    pub encode: bool,
    /// Seeds the random samples of the uniqueness check.
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            coeff_mode: CoeffMode::Derived,
            residue_mode: ResidueMode::Full,
            encode: false,
            seed: 0,
        }
    }
}

/// Largest sign count for which the pipeline runs the uniqueness check.
pub const UNIQUENESS_MAX_SIGNS: usize = 12;
pub const UNIQUENESS_SAMPLES: usize = 1000;

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub source: Formula,
    /// The simplified formula the reduction runs on.
    pub formula: Formula,
    pub var_map: Vec<usize>,
    /// Model of `formula`, if any.
    pub sat_answer: Option<Assignment>,
    pub qc: QcInstance,
    pub system: SatLinearSystem,
    pub mrd: MrdReduction,
    pub ilp: Option<TwoStageIlp>,
    pub encoded: Option<EncodedIlp>,
    pub witness: Witness,
    pub audit: AuditReport,
    pub uniqueness: Option<UniquenessReport>,
    /// Layer name → whether its check passed. Witness layers only appear
    /// when the formula is satisfiable.
    pub layer_checks: BTreeMap<String, bool>,
}

impl PipelineResult {
    pub fn all_checks_pass(&self) -> bool {
        self.layer_checks.values().all(|&ok| ok)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.layer_checks
            .iter()
            .filter(|(_, &ok)| !ok)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

pub fn run_pipeline(cnf: &str, opts: &PipelineOptions) -> Result<PipelineResult, PipelineError> {
    let formula = sat::parse_dimacs(cnf)?;
    run_pipeline_formula(&formula, opts)
}

pub fn run_pipeline_formula(
    source: &Formula,
    opts: &PipelineOptions,
) -> Result<PipelineResult, PipelineError> {
    let simplified = sat::simplify(source);
    let formula = simplified.formula.clone();
    let sat_answer = sat::solve_brute(&formula)?;
    let (qc_inst, system) = qc::reduce_sat_to_qc(&formula, opts.coeff_mode)?;
    let audit = qc::audit_report(&qc_inst, &system);
    let mrd_red = mrd::reduce_qc_to_mrd(&qc_inst, opts.residue_mode)?;
    let ilp_inst = match &mrd_red {
        MrdReduction::Instance(_) => Some(ilp::reduce_mrd_to_ilp(&mrd_red)?),
        MrdReduction::NoInstance => None,
    };
    let encoded = match (&ilp_inst, opts.encode) {
        (Some(i), true) => Some(ilp::encode_binary(i)?),
        _ => None,
    };

    let mut checks = BTreeMap::new();
    checks.insert("audit".to_string(), audit.passed());
    let uniqueness = if system.n < UNIQUENESS_MAX_SIGNS {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let report = qc::uniqueness_check(&system, UNIQUENESS_SAMPLES, &mut rng)?;
        checks.insert("uniqueness".to_string(), report.holds());
        Some(report)
    } else {
        None
    };

    let mut witness = Witness::default();
    if let Some(model) = &sat_answer {
        propagate(
            model,
            &system,
            &qc_inst,
            &mrd_red,
            ilp_inst.as_ref(),
            encoded.as_ref(),
            &mut witness,
            &mut checks,
        )?;
    }

    Ok(PipelineResult {
        source: source.clone(),
        formula,
        var_map: simplified.var_map,
        sat_answer,
        qc: qc_inst,
        system,
        mrd: mrd_red,
        ilp: ilp_inst,
        encoded,
        witness,
        audit,
        uniqueness,
        layer_checks: checks,
    })
}

/// Pushes a model down the chain, recording a check per layer. A witness
/// that fails to map (e.g. z outside a pair-mode residue set) is recorded as
/// a failed check and stops propagation, not an error.
#[allow(clippy::too_many_arguments)]
fn propagate(
    model: &Assignment,
    system: &SatLinearSystem,
    qc_inst: &QcInstance,
    mrd_red: &MrdReduction,
    ilp_inst: Option<&TwoStageIlp>,
    encoded: Option<&EncodedIlp>,
    witness: &mut Witness,
    checks: &mut BTreeMap<String, bool>,
) -> Result<(), PipelineError> {
    witness.assignment = Some(model.clone());
    checks.insert("sat".into(), sat::eval(&system.formula, model).0);

    let (z, signs) = qc::qc_witness(system, model)?;
    let qc_ok = qc::verify_qc(qc_inst, &z);
    checks.insert("qc".into(), qc_ok);
    witness.signs = Some(signs);
    witness.z = Some(z.clone());

    let MrdReduction::Instance(mrd_inst) = mrd_red else {
        checks.insert("mrd".into(), false);
        return Ok(());
    };
    let choice = match mrd::mrd_witness_from_z(mrd_inst, &z) {
        Ok(c) => c,
        Err(_) => {
            checks.insert("mrd".into(), false);
            return Ok(());
        }
    };
    checks.insert("mrd".into(), mrd::verify_mrd(mrd_inst, &z));
    witness.choice = Some(choice.clone());

    let Some(ilp_inst) = ilp_inst else {
        return Ok(());
    };
    let sol = ilp::ilp_from_witness(mrd_inst, &z, &choice)?;
    checks.insert("ilp".into(), ilp::verify_solution(ilp_inst, &sol)?);

    if let Some(enc) = encoded {
        let lifted = ilp::encode_solution(enc, &sol)?;
        let ok =
            ilp::verify_solution(&enc.ilp, &lifted)? && ilp::decode_solution(enc, &lifted)? == sol;
        checks.insert("encoded".into(), ok);
        witness.encoded_solution = Some(lifted);
    }
    witness.solution = Some(sol);
    Ok(())
}

/// File names written by [`write_outputs`], in write order.
pub const OUTPUT_FILES: [&str; 7] = [
    "formula.cnf",
    "qc.json",
    "mrd.json",
    "ilp.2ssilp",
    "encoded.2ssilp",
    "witness.json",
    "audit.json",
];

/// Writes every artifact of a run into `dir`; returns the names written.
pub fn write_outputs(result: &PipelineResult, dir: &Path) -> Result<Vec<String>, PipelineError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<(), PipelineError> {
        fs::write(dir.join(name), text)?;
        written.push(name.to_string());
        Ok(())
    };
    put("formula.cnf", result.formula.to_dimacs())?;
    put("qc.json", formats::qc_to_json(&result.qc))?;
    put("mrd.json", formats::mrd_to_json(&result.mrd))?;
    if let Some(i) = &result.ilp {
        put("ilp.2ssilp", i.to_text())?;
    }
    if let Some(e) = &result.encoded {
        put("encoded.2ssilp", e.ilp.to_text())?;
    }
    put("witness.json", formats::witness_to_json(&result.witness))?;
    put(
        "audit.json",
        formats::audit_to_json(
            &result.audit,
            result.uniqueness.as_ref(),
            &result.layer_checks,
        ),
    )?;
    Ok(written)
}

/// Seeded random 3-CNF formulas; each clause has 3 distinct variables with
/// independent signs. Uses only `next_u32` so corpora match across platforms.
pub fn generate_corpus(
    count: usize,
    num_vars: usize,
    num_clauses: usize,
    seed: u64,
) -> Result<Vec<Formula>, SatError> {
    if !(3..=5).contains(&num_vars) || !(1..=6).contains(&num_clauses) {
        return Err(SatError::InvalidFormula(format!(
            "corpus needs 3..=5 variables and 1..=6 clauses, got {num_vars} and {num_clauses}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |k: usize| (rng.next_u32() % k as u32) as usize;
    (0..count)
        .map(|_| {
            let clauses = (0..num_clauses)
                .map(|_| {
                    let mut vars: Vec<usize> = Vec::with_capacity(3);
                    while vars.len() < 3 {
                        let v = pick(num_vars) + 1;
                        if !vars.contains(&v) {
                            vars.push(v);
                        }
                    }
                    Clause::new(vars.into_iter().map(|v| {
                        let l = v as Literal;
                        if pick(2) == 1 {
                            -l
                        } else {
                            l
                        }
                    }))
                })
                .collect();
            Formula::new(num_vars, clauses)
        })
        .collect()
}

/// Smallest `z` found by brute force on a QC instance and by the CRT solver
/// on its MRD image; for instances with `γ` small enough to scan.
pub fn qc_mrd_minimal(
    inst: &QcInstance,
    mode: ResidueMode,
    cap: &BigUint,
) -> Result<(Option<BigUint>, Option<BigUint>), PipelineError> {
    let brute = qc::solve_qc_brute(inst, cap)?;
    let red = mrd::reduce_qc_to_mrd(inst, mode)?;
    let crt = red.solve()?.map(|s| s.z);
    Ok((brute, crt))
}
