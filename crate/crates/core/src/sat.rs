//! 3-CNF formulas: DIMACS input, clause simplification and a brute-force
//! satisfiability oracle for small instances.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SatError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: literal {literal} outside 1..={num_vars}")]
    LiteralOutOfRange {
        line: usize,
        literal: i64,
        num_vars: usize,
    },
    #[error("line {line}: clause has more than 3 distinct literals")]
    ClauseTooLarge { line: usize },
    #[error("clause is missing its terminating 0")]
    MissingTerminator,
    #[error("line {line}: unexpected token {token:?}")]
    BadToken { line: usize, token: String },
    #[error("header declares {declared} clauses but {found} were read")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("brute force is limited to 24 variables, formula has {0}")]
    TooManyVariables(usize),
    #[error("invalid formula: {0}")]
    InvalidFormula(String),
}

/// Nonzero signed variable index: `+i` is `x_i`, `-i` is `¬x_i`.
pub type Literal = i32;

/// A clause as a set of literals, kept sorted by variable then sign.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause(Vec<Literal>);

impl Clause {
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Self {
        let mut lits: Vec<Literal> = literals.into_iter().collect();
        lits.sort_by_key(|l| (l.unsigned_abs(), *l > 0));
        lits.dedup();
        Clause(lits)
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_tautology(&self) -> bool {
        self.0.windows(2).any(|w| w[0] == -w[1])
    }

    /// Number of literals made true by `a`.
    pub fn sat_count(&self, a: &Assignment) -> usize {
        self.0.iter().filter(|&&l| a.literal(l)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    num_vars: usize,
    clauses: Vec<Clause>,
}

impl Formula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self, SatError> {
        for c in &clauses {
            if c.is_empty() || c.len() > 3 {
                return Err(SatError::InvalidFormula(format!(
                    "clause size {} outside 1..=3",
                    c.len()
                )));
            }
            if let Some(l) = c
                .literals()
                .iter()
                .find(|l| l.unsigned_abs() as usize > num_vars)
            {
                return Err(SatError::InvalidFormula(format!(
                    "literal {l} exceeds {num_vars} variables"
                )));
            }
        }
        Ok(Self { num_vars, clauses })
    }

    /// Builds a formula from literal lists, e.g. `[[1, -2, 3], [-1, 2]]`.
    pub fn from_lists(num_vars: usize, clauses: &[&[Literal]]) -> Result<Self, SatError> {
        Self::new(
            num_vars,
            clauses
                .iter()
                .map(|c| Clause::new(c.iter().copied()))
                .collect(),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// DIMACS rendering; `parse_dimacs(f.to_dimacs())` returns `f`.
    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c.literals() {
                out.push_str(&l.to_string());
                out.push(' ');
            }
            out.push_str("0\n");
        }
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clauses
            .iter()
            .map(|c| {
                let lits: Vec<String> = c
                    .literals()
                    .iter()
                    .map(|l| {
                        if *l > 0 {
                            format!("x{l}")
                        } else {
                            format!("¬x{}", -l)
                        }
                    })
                    .collect();
                format!("({})", lits.join(" ∨ "))
            })
            .collect();
        if parts.is_empty() {
            f.write_str("⊤")
        } else {
            f.write_str(&parts.join(" ∧ "))
        }
    }
}

/// Total truth assignment; index 0 holds `x_1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Assignment(values)
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn var(&self, v: usize) -> bool {
        self.0[v - 1]
    }

    pub fn literal(&self, l: Literal) -> bool {
        let v = self.var(l.unsigned_abs() as usize);
        if l > 0 {
            v
        } else {
            !v
        }
    }

    /// Assignment for `num_vars` variables encoded as bits, `x_1` most significant.
    fn from_mask(mask: u64, num_vars: usize) -> Self {
        Assignment(
            (0..num_vars)
                .map(|i| mask >> (num_vars - 1 - i) & 1 == 1)
                .collect(),
        )
    }
}

/// Parses DIMACS CNF. Clause literals are collected as sets, so a literal
/// repeated inside one clause collapses; more than 3 distinct literals is
/// rejected.
pub fn parse_dimacs(text: &str) -> Result<Formula, SatError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut current_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(SatError::MalformedHeader {
                    line: line_no,
                    reason: "duplicate header".into(),
                });
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "p" || fields[1] != "cnf" {
                return Err(SatError::MalformedHeader {
                    line: line_no,
                    reason: "expected `p cnf <vars> <clauses>`".into(),
                });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| SatError::MalformedHeader {
                    line: line_no,
                    reason: format!("{s:?} is not a count"),
                })
            };
            header = Some((parse(fields[2])?, parse(fields[3])?));
            continue;
        }
        let (num_vars, _) = header.ok_or(SatError::MalformedHeader {
            line: line_no,
            reason: "clause before header".into(),
        })?;
        for tok in line.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| SatError::BadToken {
                line: line_no,
                token: tok.to_string(),
            })?;
            if current.is_empty() {
                current_line = line_no;
            }
            if lit == 0 {
                let clause = Clause::new(current.drain(..));
                if clause.len() > 3 {
                    return Err(SatError::ClauseTooLarge { line: current_line });
                }
                if clause.is_empty() {
                    return Err(SatError::InvalidFormula(format!(
                        "line {line_no}: empty clause"
                    )));
                }
                clauses.push(clause);
                continue;
            }
            if lit.unsigned_abs() as usize > num_vars {
                return Err(SatError::LiteralOutOfRange {
                    line: line_no,
                    literal: lit,
                    num_vars,
                });
            }
            current.push(lit as Literal);
        }
    }
    let (num_vars, declared) = header.ok_or(SatError::MalformedHeader {
        line: 0,
        reason: "missing header".into(),
    })?;
    if !current.is_empty() {
        return Err(SatError::MissingTerminator);
    }
    if clauses.len() != declared {
        return Err(SatError::ClauseCountMismatch {
            declared,
            found: clauses.len(),
        });
    }
    Formula::new(num_vars, clauses)
}

/// Result of clause simplification: the reduced formula plus the map from
/// its variables back to the source formula's variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simplified {
    pub formula: Formula,
    /// `var_map[i]` is the source variable of reduced variable `i + 1`.
    pub var_map: Vec<usize>,
}

impl Simplified {
    /// Lifts an assignment of the reduced formula back to the source
    /// formula; dropped variables are set to false.
    pub fn lift(&self, a: &Assignment, source_vars: usize) -> Assignment {
        let mut values = vec![false; source_vars];
        for (i, &src) in self.var_map.iter().enumerate() {
            values[src - 1] = a.values()[i];
        }
        Assignment::new(values)
    }
}

/// Drops tautological and duplicate clauses (first occurrence kept), then
/// renumbers the surviving variables in increasing order.
pub fn simplify(f: &Formula) -> Simplified {
    let mut seen = HashSet::new();
    let kept: Vec<&Clause> = f
        .clauses()
        .iter()
        .filter(|c| !c.is_tautology())
        .filter(|c| seen.insert((*c).clone()))
        .collect();
    let used: BTreeSet<usize> = kept
        .iter()
        .flat_map(|c| c.literals().iter().map(|l| l.unsigned_abs() as usize))
        .collect();
    let var_map: Vec<usize> = used.into_iter().collect();
    let mut new_index = vec![0usize; f.num_vars() + 1];
    for (i, &v) in var_map.iter().enumerate() {
        new_index[v] = i + 1;
    }
    let clauses = kept
        .into_iter()
        .map(|c| {
            Clause::new(c.literals().iter().map(|&l| {
                let v = new_index[l.unsigned_abs() as usize] as Literal;
                if l > 0 {
                    v
                } else {
                    -v
                }
            }))
        })
        .collect();
    Simplified {
        formula: Formula {
            num_vars: var_map.len(),
            clauses,
        },
        var_map,
    }
}

/// Returns `(satisfied, per-clause satisfied-literal counts)`.
pub fn eval(f: &Formula, a: &Assignment) -> (bool, Vec<usize>) {
    assert_eq!(a.len(), f.num_vars(), "assignment must be total");
    let counts: Vec<usize> = f.clauses().iter().map(|c| c.sat_count(a)).collect();
    (counts.iter().all(|&c| c >= 1), counts)
}

/// Lexicographically smallest model (false < true, `x_1` most significant).
pub fn solve_brute(f: &Formula) -> Result<Option<Assignment>, SatError> {
    let n = f.num_vars();
    if n > 24 {
        return Err(SatError::TooManyVariables(n));
    }
    Ok((0..1u64 << n)
        .map(|mask| Assignment::from_mask(mask, n))
        .find(|a| eval(f, a).0))
}

/// Every model in lexicographic order.
pub fn all_models(f: &Formula) -> Result<Vec<Assignment>, SatError> {
    let n = f.num_vars();
    if n > 24 {
        return Err(SatError::TooManyVariables(n));
    }
    Ok((0..1u64 << n)
        .map(|mask| Assignment::from_mask(mask, n))
        .filter(|a| eval(f, a).0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn formula(n: usize, cs: &[&[Literal]]) -> Formula {
        Formula::from_lists(n, cs).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_dimacs("p cnf 2 1\n1 -2 0").unwrap(),
            formula(2, &[&[1, -2]])
        );
        assert_eq!(
            parse_dimacs("c note\np cnf 1 1\n1 0").unwrap(),
            formula(1, &[&[1]])
        );
        assert!(matches!(
            parse_dimacs("p cnf 1 1\n1 2 0"),
            Err(SatError::LiteralOutOfRange { literal: 2, .. })
        ));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_dimacs("p cnf 4 1\n1 2 3 4 0"),
            Err(SatError::ClauseTooLarge { line: 2 })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 3 1\n1 2 3"),
            Err(SatError::MissingTerminator)
        ));
        assert!(matches!(
            parse_dimacs("p dnf 3 1\n1 0"),
            Err(SatError::MalformedHeader { .. })
        ));
        assert!(matches!(
            parse_dimacs("1 2 0\n"),
            Err(SatError::MalformedHeader { .. })
        ));
        // repeated literal collapses; a clause may span lines
        assert_eq!(
            parse_dimacs("p cnf 3 1\n1 1\n2 0\n").unwrap(),
            formula(3, &[&[1, 2]])
        );
    }

    #[test]
    fn simplify_examples() {
        let s = simplify(&formula(2, &[&[1, -1, 2]]));
        assert_eq!(s.formula.num_clauses(), 0);
        assert_eq!(s.formula.num_vars(), 0);

        let s = simplify(&formula(3, &[&[1, 2, 3], &[3, 2, 1]]));
        assert_eq!(s.formula, formula(3, &[&[1, 2, 3]]));

        let s = simplify(&formula(2, &[&[1], &[2, -2, 1]]));
        assert_eq!(s.formula, formula(1, &[&[1]]));
    }

    #[test]
    fn simplify_renumbers() {
        let s = simplify(&formula(5, &[&[2, -5], &[-2, 4]]));
        assert_eq!(s.var_map, vec![2, 4, 5]);
        assert_eq!(s.formula, formula(3, &[&[1, -3], &[-1, 2]]));
        let model = solve_brute(&s.formula).unwrap().unwrap();
        let lifted = s.lift(&model, 5);
        assert!(eval(&formula(5, &[&[2, -5], &[-2, 4]]), &lifted).0);
    }

    #[test]
    fn brute_examples() {
        assert_eq!(
            solve_brute(&formula(1, &[&[1]])).unwrap(),
            Some(Assignment::new(vec![true]))
        );
        assert_eq!(solve_brute(&formula(1, &[&[1], &[-1]])).unwrap(), None);
        assert_eq!(
            solve_brute(&formula(3, &[&[1, 2, 3], &[-1, 2, 3]])).unwrap(),
            Some(Assignment::new(vec![false, false, true]))
        );
        assert_eq!(
            solve_brute(&Formula::new(25, vec![]).unwrap()),
            Err(SatError::TooManyVariables(25))
        );
    }

    #[test]
    fn eval_examples() {
        let all_true = Assignment::new(vec![true; 3]);
        assert_eq!(eval(&formula(3, &[&[1, 2, 3]]), &all_true), (true, vec![3]));
        assert_eq!(
            eval(&formula(1, &[&[-1]]), &Assignment::new(vec![true])),
            (false, vec![0])
        );
        assert_eq!(
            eval(
                &formula(3, &[&[1, -2, 3]]),
                &Assignment::new(vec![true, false, false])
            ),
            (true, vec![2])
        );
    }

    #[test]
    fn dimacs_round_trip() {
        let f = formula(4, &[&[1, -2, 3], &[-4], &[2, 4]]);
        assert_eq!(parse_dimacs(&f.to_dimacs()).unwrap(), f);
    }
}
