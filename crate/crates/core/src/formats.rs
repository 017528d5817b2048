//! Versioned JSON documents for QC and MRD instances, witnesses and audits.
//!
//! Every document carries `"kind"` and `"version": 1`. Big integers are
//! written as decimal strings.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ilp::Solution;
use crate::mrd::{Equation, MrdInstance, MrdReduction, ResidueMode};
use crate::numtheory::Factorization;
use crate::qc::{AuditReport, QcInstance, UniquenessReport};
use crate::sat::Assignment;

pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("malformed document: {0}")]
    Json(String),
    #[error("expected a {expected:?} document, found {found:?}")]
    WrongKind { expected: String, found: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("bad integer {0:?}")]
    BadInteger(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

fn num<T: FromStr>(s: &str) -> Result<T, FormatError> {
    s.parse()
        .map_err(|_| FormatError::BadInteger(s.to_string()))
}

fn check_header(kind: &str, version: u32, expected: &str) -> Result<(), FormatError> {
    if kind != expected {
        return Err(FormatError::WrongKind {
            expected: expected.to_string(),
            found: kind.to_string(),
        });
    }
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    Ok(())
}

fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents always serialize");
    s.push('\n');
    s
}

fn from_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    version: u32,
}

/// Reads only the `"kind"` field.
pub fn document_kind(text: &str) -> Result<String, FormatError> {
    Ok(from_json::<Header>(text)?.kind)
}

/// Checks kind and version before decoding the body, so a wrong document
/// reports its kind rather than a missing field.
fn parse_doc<'a, T: Deserialize<'a>>(text: &'a str, expected: &str) -> Result<T, FormatError> {
    let header: Header = from_json(text)?;
    check_header(&header.kind, header.version, expected)?;
    from_json(text)
}

#[derive(Serialize, Deserialize)]
struct PrimePower {
    prime: String,
    exponent: u32,
}

#[derive(Serialize, Deserialize)]
struct QcDoc {
    kind: String,
    version: u32,
    alpha: String,
    beta: String,
    gamma: String,
    factorization: Vec<PrimePower>,
}

pub fn qc_to_json(inst: &QcInstance) -> String {
    to_json(&QcDoc {
        kind: "qc".into(),
        version: VERSION,
        alpha: inst.alpha().to_string(),
        beta: inst.beta().to_string(),
        gamma: inst.gamma().to_string(),
        factorization: inst
            .factorization()
            .factors()
            .iter()
            .map(|&(p, e)| PrimePower {
                prime: p.to_string(),
                exponent: e,
            })
            .collect(),
    })
}

pub fn qc_from_json(text: &str) -> Result<QcInstance, FormatError> {
    let doc: QcDoc = parse_doc(text, "qc")?;
    let factors = doc
        .factorization
        .iter()
        .map(|f| Ok((num::<u64>(&f.prime)?, f.exponent)))
        .collect::<Result<Vec<_>, FormatError>>()?;
    let fact = Factorization::new(factors).map_err(|e| FormatError::Invalid(e.to_string()))?;
    QcInstance::new(num(&doc.alpha)?, num(&doc.beta)?, num(&doc.gamma)?, fact)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct EquationDoc {
    modulus: String,
    roots: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MrdDoc {
    kind: String,
    version: u32,
    no_instance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<ResidueMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta: Option<String>,
    #[serde(default)]
    equations: Vec<EquationDoc>,
}

pub fn mrd_to_json(red: &MrdReduction) -> String {
    let doc = match red {
        MrdReduction::NoInstance => MrdDoc {
            kind: "mrd".into(),
            version: VERSION,
            no_instance: true,
            mode: None,
            zeta: None,
            equations: Vec::new(),
        },
        MrdReduction::Instance(inst) => MrdDoc {
            kind: "mrd".into(),
            version: VERSION,
            no_instance: false,
            mode: Some(inst.mode()),
            zeta: Some(inst.zeta().to_string()),
            equations: inst
                .equations()
                .iter()
                .map(|e| EquationDoc {
                    modulus: e.modulus.to_string(),
                    roots: e.roots.iter().map(BigUint::to_string).collect(),
                })
                .collect(),
        },
    };
    to_json(&doc)
}

pub fn mrd_from_json(text: &str) -> Result<MrdReduction, FormatError> {
    let doc: MrdDoc = parse_doc(text, "mrd")?;
    if doc.no_instance {
        return Ok(MrdReduction::NoInstance);
    }
    let missing = |f: &str| FormatError::Invalid(format!("missing {f}"));
    let mode = doc.mode.ok_or_else(|| missing("mode"))?;
    let zeta = num(doc.zeta.as_deref().ok_or_else(|| missing("zeta"))?)?;
    let equations = doc
        .equations
        .iter()
        .map(|e| {
            Ok(Equation {
                modulus: num(&e.modulus)?,
                roots: e.roots.iter().map(|r| num(r)).collect::<Result<_, _>>()?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let inst =
        MrdInstance::new(equations, zeta, mode).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(MrdReduction::Instance(inst))
}

/// Certificates for whichever layers have one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Witness {
    pub assignment: Option<Assignment>,
    pub signs: Option<Vec<i8>>,
    pub z: Option<BigUint>,
    pub choice: Option<Vec<BigUint>>,
    pub solution: Option<Solution>,
    pub encoded_solution: Option<Solution>,
}

#[derive(Serialize, Deserialize)]
struct WitnessDoc {
    kind: String,
    version: u32,
    #[serde(default)]
    assignment: Option<Vec<bool>>,
    #[serde(default)]
    signs: Option<Vec<i8>>,
    #[serde(default)]
    z: Option<String>,
    #[serde(default)]
    choice: Option<Vec<String>>,
    #[serde(default)]
    solution: Option<Vec<String>>,
    #[serde(default)]
    encoded_solution: Option<Vec<String>>,
}

fn strings<T: ToString>(v: &[T]) -> Vec<String> {
    v.iter().map(T::to_string).collect()
}

pub fn witness_to_json(w: &Witness) -> String {
    to_json(&WitnessDoc {
        kind: "witness".into(),
        version: VERSION,
        assignment: w.assignment.as_ref().map(|a| a.values().to_vec()),
        signs: w.signs.clone(),
        z: w.z.as_ref().map(BigUint::to_string),
        choice: w.choice.as_deref().map(strings),
        solution: w.solution.as_ref().map(|s| strings(&s.0)),
        encoded_solution: w.encoded_solution.as_ref().map(|s| strings(&s.0)),
    })
}

pub fn witness_from_json(text: &str) -> Result<Witness, FormatError> {
    let doc: WitnessDoc = parse_doc(text, "witness")?;
    let solution = |v: Option<Vec<String>>| -> Result<Option<Solution>, FormatError> {
        v.map(|v| {
            v.iter()
                .map(|x| num::<BigInt>(x))
                .collect::<Result<_, _>>()
                .map(Solution)
        })
        .transpose()
    };
    Ok(Witness {
        assignment: doc.assignment.map(Assignment::new),
        signs: doc.signs,
        z: doc.z.as_deref().map(num).transpose()?,
        choice: doc
            .choice
            .map(|v| v.iter().map(|x| num(x)).collect::<Result<_, _>>())
            .transpose()?,
        solution: solution(doc.solution)?,
        encoded_solution: solution(doc.encoded_solution)?,
    })
}

#[derive(Serialize)]
struct AuditDoc<'a> {
    kind: &'static str,
    version: u32,
    report: &'a AuditReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    uniqueness: Option<&'a UniquenessReport>,
    layer_checks: &'a BTreeMap<String, bool>,
}

pub fn audit_to_json(
    report: &AuditReport,
    uniqueness: Option<&UniquenessReport>,
    layer_checks: &BTreeMap<String, bool>,
) -> String {
    to_json(&AuditDoc {
        kind: "audit",
        version: VERSION,
        report,
        uniqueness,
        layer_checks,
    })
}
