//! 2-stage stochastic ILPs: the MRD reduction, witnesses, verification,
//! the binary coefficient encoding and two small exact solvers.
//!
//! Variables are laid out first-stage first, then the `t` variables of each
//! block in block order. Rows of block `i` read `A_i x_0 + B_i x_i = b_i`.

use std::fmt::Write as _;
use std::ops::Range;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::mrd::{self, MrdInstance, MrdReduction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IlpError {
    #[error("the MRD side is the canonical no-instance; there is no ILP to build")]
    NoInstanceInput,
    #[error("coefficient {0} does not fit in 64 bits")]
    CoefficientOverflow(BigUint),
    #[error("witness does not match the instance: {0}")]
    WitnessMismatch(String),
    #[error("solution has {got} entries, instance expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("instance is not shaped like an MRD reduction: {0}")]
    NotReductionShaped(String),
    #[error("scan range {0} exceeds the cap of 10^7")]
    CapExceeded(BigInt),
    #[error("search space exceeds 10^7 ({0})")]
    SearchSpaceTooLarge(String),
    #[error("block {block} row {row} column {col}: coefficient {value} < -1 cannot be encoded")]
    NegativeCoefficient {
        block: usize,
        row: usize,
        col: usize,
        value: i64,
    },
    #[error("first-stage coefficient {0} is outside {{-1, 0, 1}}")]
    FirstStageNotUnit(i64),
    #[error("digit group {group} breaks the doubling chain")]
    ChainViolation { group: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid ILP: {0}")]
    InvalidInstance(String),
}

pub type Matrix = Vec<Vec<i64>>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TwoStageIlp {
    n: usize,
    r: usize,
    s: usize,
    t: usize,
    a_blocks: Vec<Matrix>,
    b_blocks: Vec<Matrix>,
    b: Vec<BigInt>,
    lower: Vec<BigInt>,
    upper: Vec<BigInt>,
    objective: Vec<BigInt>,
}

impl TwoStageIlp {
    /// Builds an instance, inferring `n, r, s, t` from the blocks.
    pub fn from_blocks(
        a_blocks: Vec<Matrix>,
        b_blocks: Vec<Matrix>,
        b: Vec<BigInt>,
        lower: Vec<BigInt>,
        upper: Vec<BigInt>,
        objective: Vec<BigInt>,
    ) -> Result<Self, IlpError> {
        let bad = |m: &str| Err(IlpError::InvalidInstance(m.to_string()));
        let n = a_blocks.len();
        if n == 0 || b_blocks.len() != n {
            return bad("need n ≥ 1 blocks and as many B blocks as A blocks");
        }
        let r = a_blocks[0].len();
        if r == 0 {
            return bad("blocks need at least one row");
        }
        let s = a_blocks[0][0].len();
        let t = b_blocks[0].first().map_or(0, Vec::len);
        if s == 0 || t == 0 {
            return bad("s and t must be positive");
        }
        for (a, bb) in a_blocks.iter().zip(&b_blocks) {
            if a.len() != r || bb.len() != r {
                return bad("blocks disagree on r");
            }
            if a.iter().any(|row| row.len() != s) || bb.iter().any(|row| row.len() != t) {
                return bad("ragged block rows");
            }
        }
        let width = s + n * t;
        if b.len() != n * r {
            return bad("b has the wrong length");
        }
        if lower.len() != width || upper.len() != width || objective.len() != width {
            return bad("L, U and w need s + n·t entries");
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return bad("L exceeds U somewhere");
        }
        Ok(Self {
            n,
            r,
            s,
            t,
            a_blocks,
            b_blocks,
            b,
            lower,
            upper,
            objective,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn a_blocks(&self) -> &[Matrix] {
        &self.a_blocks
    }
    pub fn b_blocks(&self) -> &[Matrix] {
        &self.b_blocks
    }
    pub fn rhs(&self) -> &[BigInt] {
        &self.b
    }
    pub fn lower(&self) -> &[BigInt] {
        &self.lower
    }
    pub fn upper(&self) -> &[BigInt] {
        &self.upper
    }
    pub fn objective(&self) -> &[BigInt] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.s + self.n * self.t
    }

    /// Column of block `i`'s `j`-th second-stage variable.
    pub fn column(&self, block: usize, j: usize) -> usize {
        self.s + block * self.t + j
    }

    /// Largest absolute entry over all `A_i` and `B_i`.
    pub fn delta(&self) -> u64 {
        self.a_blocks
            .iter()
            .chain(&self.b_blocks)
            .flatten()
            .flatten()
            .map(|v| v.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Text in the `.2ssilp` format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("2SSILP 1\n");
        let _ = writeln!(out, "{} {} {} {}", self.n, self.r, self.s, self.t);
        for (a, bb) in self.a_blocks.iter().zip(&self.b_blocks) {
            for (ra, rb) in a.iter().zip(bb) {
                let row: Vec<String> = ra.iter().chain(rb).map(i64::to_string).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        for (tag, v) in [
            ("b", &self.b),
            ("L", &self.lower),
            ("U", &self.upper),
            ("w", &self.objective),
        ] {
            out.push_str(tag);
            out.push(':');
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, IlpError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or(IlpError::Parse {
                line: 0,
                reason: format!("unexpected end of input, expected {what}"),
            })
        };
        let (ln, magic) = next("header")?;
        if magic.trim() != "2SSILP 1" {
            return Err(IlpError::Parse {
                line: ln,
                reason: "expected \"2SSILP 1\"".into(),
            });
        }
        let (ln, dims) = next("dimensions")?;
        let dims: Vec<usize> = parse_ints(ln, dims)?;
        let [n, r, s, t] = dims[..] else {
            return Err(IlpError::Parse {
                line: ln,
                reason: "expected \"n r s t\"".into(),
            });
        };
        let mut a_blocks = Vec::with_capacity(n);
        let mut b_blocks = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = Vec::with_capacity(r);
            let mut bb = Vec::with_capacity(r);
            for _ in 0..r {
                let (ln, line) = next("block row")?;
                let row: Vec<i64> = parse_ints(ln, line)?;
                if row.len() != s + t {
                    return Err(IlpError::Parse {
                        line: ln,
                        reason: format!("expected {} entries, found {}", s + t, row.len()),
                    });
                }
                a.push(row[..s].to_vec());
                bb.push(row[s..].to_vec());
            }
            a_blocks.push(a);
            b_blocks.push(bb);
        }
        let mut vectors = Vec::with_capacity(4);
        for tag in ["b", "L", "U", "w"] {
            let (ln, line) = next(tag)?;
            let rest = line
                .strip_prefix(tag)
                .and_then(|l| l.strip_prefix(':'))
                .ok_or_else(|| IlpError::Parse {
                    line: ln,
                    reason: format!("expected \"{tag}:\""),
                })?;
            vectors.push(parse_ints::<BigInt>(ln, rest)?);
        }
        if let Some((ln, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(IlpError::Parse {
                line: ln,
                reason: format!("trailing content {extra:?}"),
            });
        }
        let w = vectors.pop().unwrap_or_default();
        let u = vectors.pop().unwrap_or_default();
        let l = vectors.pop().unwrap_or_default();
        let b = vectors.pop().unwrap_or_default();
        let ilp = Self::from_blocks(a_blocks, b_blocks, b, l, u, w)?;
        if (ilp.n, ilp.r, ilp.s, ilp.t) != (n, r, s, t) {
            return Err(IlpError::Parse {
                line: 2,
                reason: "dimensions disagree with the data".into(),
            });
        }
        Ok(ilp)
    }
}

fn parse_ints<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>, IlpError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| IlpError::Parse {
                line,
                reason: format!("bad integer {tok:?}"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Solution(pub Vec<BigInt>);

impl Solution {
    pub fn from_i64(values: &[i64]) -> Self {
        Self(values.iter().map(|&v| BigInt::from(v)).collect())
    }
}

/// Exact check of every block row and every bound.
pub fn verify_solution(ilp: &TwoStageIlp, x: &Solution) -> Result<bool, IlpError> {
    if x.0.len() != ilp.num_vars() {
        return Err(IlpError::DimensionMismatch {
            expected: ilp.num_vars(),
            got: x.0.len(),
        });
    }
    let in_bounds =
        x.0.iter()
            .zip(ilp.lower.iter().zip(&ilp.upper))
            .all(|(v, (l, u))| l <= v && v <= u);
    if !in_bounds {
        return Ok(false);
    }
    let first = &x.0[..ilp.s];
    for i in 0..ilp.n {
        let second = &x.0[ilp.column(i, 0)..ilp.column(i, ilp.t)];
        for row in 0..ilp.r {
            let lhs: BigInt = ilp.a_blocks[i][row]
                .iter()
                .zip(first)
                .chain(ilp.b_blocks[i][row].iter().zip(second))
                .map(|(&c, v)| c * v)
                .sum();
            if lhs != ilp.b[i * ilp.r + row] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Block `i` is `[[-1 | q_i, roots…, 0 pads], [0 | 0, 1…, 0 pads]]` with
/// right-hand side `(0, 1)`; `z = x_0` meets `q_i` through `z = λ q_i + v`.
pub fn reduce_mrd_to_ilp(red: &MrdReduction) -> Result<TwoStageIlp, IlpError> {
    let inst = red.instance().ok_or(IlpError::NoInstanceInput)?;
    let rho = inst.max_roots();
    let n = inst.equations().len();
    let t = 1 + rho;
    let to_i64 = |v: &BigUint| {
        v.to_i64()
            .ok_or_else(|| IlpError::CoefficientOverflow(v.clone()))
    };
    let zeta = BigInt::from(inst.zeta().clone());

    let mut a_blocks = Vec::with_capacity(n);
    let mut b_blocks = Vec::with_capacity(n);
    let mut upper = vec![zeta.clone()];
    for eq in inst.equations() {
        let mut row1 = vec![to_i64(&eq.modulus)?];
        let mut row2 = vec![0];
        upper.push(zeta.clone());
        for k in 0..rho {
            match eq.roots.get(k) {
                Some(root) => {
                    row1.push(to_i64(root)?);
                    row2.push(1);
                    upper.push(BigInt::one());
                }
                None => {
                    row1.push(0);
                    row2.push(0);
                    upper.push(BigInt::zero());
                }
            }
        }
        a_blocks.push(vec![vec![-1], vec![0]]);
        b_blocks.push(vec![row1, row2]);
    }
    let width = 1 + n * t;
    let mut lower = vec![BigInt::zero(); width];
    // z = 0 is not an MRD solution
    lower[0] = BigInt::one();
    let b = (0..n)
        .flat_map(|_| [BigInt::zero(), BigInt::one()])
        .collect();
    TwoStageIlp::from_blocks(
        a_blocks,
        b_blocks,
        b,
        lower,
        upper,
        vec![BigInt::zero(); width],
    )
}

/// Maps an MRD witness `(z, v)` to the ILP solution with multipliers
/// `(z - v_i) / q_i` and the selector of `v_i` switched on.
pub fn ilp_from_witness(
    inst: &MrdInstance,
    z: &BigUint,
    choice: &[BigUint],
) -> Result<Solution, IlpError> {
    if !mrd::verify_mrd(inst, z) {
        return Err(IlpError::WitnessMismatch(format!(
            "z = {z} does not solve the instance"
        )));
    }
    let expected =
        mrd::mrd_witness_from_z(inst, z).map_err(|e| IlpError::WitnessMismatch(e.to_string()))?;
    if expected != choice {
        return Err(IlpError::WitnessMismatch(
            "choice vector is not z reduced by each modulus".into(),
        ));
    }
    let rho = inst.max_roots();
    let mut x = vec![BigInt::from(z.clone())];
    for (eq, v) in inst.equations().iter().zip(choice) {
        x.push(BigInt::from((z - v) / &eq.modulus));
        let pos = eq.roots.binary_search(v).map_err(|_| {
            IlpError::WitnessMismatch(format!("{v} is not a residue of {}", eq.modulus))
        })?;
        x.extend((0..rho).map(|k| BigInt::from(u8::from(k == pos))));
    }
    Ok(Solution(x))
}

pub const SCAN_LIMIT: u64 = 10_000_000;
pub const NODE_BUDGET: u64 = 10_000_000;

struct ReducedBlock {
    modulus: BigInt,
    /// `(residue, selector column)` pairs.
    roots: Vec<(BigInt, usize)>,
    lambda_col: usize,
}

fn reduction_shape(ilp: &TwoStageIlp) -> Result<Vec<ReducedBlock>, IlpError> {
    let fail = |m: String| Err(IlpError::NotReductionShaped(m));
    if ilp.s != 1 || ilp.r != 2 || ilp.t < 2 {
        return fail(format!("dims (r,s,t) = ({},{},{})", ilp.r, ilp.s, ilp.t));
    }
    let mut blocks = Vec::with_capacity(ilp.n);
    for i in 0..ilp.n {
        let a = &ilp.a_blocks[i];
        let bb = &ilp.b_blocks[i];
        if a[0] != [-1] || a[1] != [0] {
            return fail(format!("block {i}: A is not [[-1],[0]]"));
        }
        if ilp.b[2 * i] != BigInt::zero() || ilp.b[2 * i + 1] != BigInt::one() {
            return fail(format!("block {i}: right-hand side is not (0, 1)"));
        }
        if bb[0][0] < 2 || bb[1][0] != 0 {
            return fail(format!("block {i}: bad multiplier column"));
        }
        let lambda_col = ilp.column(i, 0);
        if !ilp.lower[lambda_col].is_zero() {
            return fail(format!("block {i}: multiplier lower bound is not 0"));
        }
        let mut roots = Vec::new();
        for j in 1..ilp.t {
            let col = ilp.column(i, j);
            match bb[1][j] {
                1 => {
                    if !ilp.lower[col].is_zero() || !ilp.upper[col].is_one() {
                        return fail(format!("block {i}: selector {j} is not binary"));
                    }
                    roots.push((BigInt::from(bb[0][j]), col));
                }
                0 => {
                    if !ilp.lower[col].is_zero() || !ilp.upper[col].is_zero() {
                        return fail(format!("block {i}: pad {j} is not fixed to 0"));
                    }
                }
                _ => return fail(format!("block {i}: selector row entry is not 0/1")),
            }
        }
        blocks.push(ReducedBlock {
            modulus: BigInt::from(bb[0][0]),
            roots,
            lambda_col,
        });
    }
    Ok(blocks)
}

/// Least feasible first-stage value of a reduction-shaped instance, found by
/// scanning `z` and solving each block as `z = λ q_i + v`.
pub fn solve_reduced(ilp: &TwoStageIlp) -> Result<Option<Solution>, IlpError> {
    let blocks = reduction_shape(ilp)?;
    let lo = ilp.lower[0].clone().max(BigInt::one());
    let hi = &ilp.upper[0];
    if hi < &lo {
        return Ok(None);
    }
    let span = hi - &lo + 1u8;
    if span > BigInt::from(SCAN_LIMIT) {
        return Err(IlpError::CapExceeded(span));
    }
    let mut z = lo;
    while &z <= hi {
        let mut x = vec![BigInt::zero(); ilp.num_vars()];
        x[0] = z.clone();
        let ok = blocks.iter().all(|blk| {
            let hit = blk.roots.iter().find_map(|(v, col)| {
                let (lambda, rem) = (&z - v).div_rem(&blk.modulus);
                let fits =
                    rem.is_zero() && !lambda.is_negative() && lambda <= ilp.upper[blk.lambda_col];
                fits.then_some((lambda, *col))
            });
            match hit {
                Some((lambda, col)) => {
                    x[blk.lambda_col] = lambda;
                    x[col] = BigInt::one();
                    true
                }
                None => false,
            }
        });
        if ok {
            let sol = Solution(x);
            assert!(
                verify_solution(ilp, &sol)?,
                "solve_reduced built a solution that does not verify"
            );
            return Ok(Some(sol));
        }
        z += 1u8;
    }
    Ok(None)
}

/// Lexicographically first feasible solution, or `None`.
///
/// First-stage vectors are enumerated in order; for each one the blocks are
/// independent and each is searched depth-first, narrowing every variable to
/// the range its rows still allow given the remaining variables' bounds.
pub fn solve_exhaustive(ilp: &TwoStageIlp) -> Result<Option<Solution>, IlpError> {
    let too_large = |what: String| IlpError::SearchSpaceTooLarge(what);
    let small = |v: &BigInt| v.to_i64().ok_or_else(|| too_large(format!("bound {v}")));
    let lower: Vec<i64> = ilp.lower.iter().map(small).collect::<Result<_, _>>()?;
    let upper: Vec<i64> = ilp.upper.iter().map(small).collect::<Result<_, _>>()?;
    let rhs: Vec<i128> = ilp
        .b
        .iter()
        .map(|v| small(v).map(i128::from))
        .collect::<Result<_, _>>()?;

    let s = ilp.s;
    let mut first_count: u128 = 1;
    for k in 0..s {
        first_count = first_count.saturating_mul((upper[k] - lower[k]) as u128 + 1);
    }
    if first_count > u128::from(NODE_BUDGET) {
        return Err(too_large(format!("{first_count} first-stage vectors")));
    }

    let searchers: Vec<BlockSearch> = (0..ilp.n)
        .map(|i| {
            let cols = ilp.column(i, 0)..ilp.column(i, ilp.t);
            BlockSearch::new(&ilp.b_blocks[i], &lower[cols.clone()], &upper[cols])
        })
        .collect();

    let mut nodes = 0u64;
    let mut first: Vec<i64> = lower[..s].to_vec();
    loop {
        let mut x: Vec<i64> = first.clone();
        let mut feasible = true;
        for (i, search) in searchers.iter().enumerate() {
            let residual: Vec<i128> = (0..ilp.r)
                .map(|row| {
                    let a: i128 = ilp.a_blocks[i][row]
                        .iter()
                        .zip(&first)
                        .map(|(&c, &v)| i128::from(c) * i128::from(v))
                        .sum();
                    rhs[i * ilp.r + row] - a
                })
                .collect();
            match search.run(residual, &mut nodes)? {
                Some(vals) => x.extend(vals),
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            let sol = Solution::from_i64(&x);
            debug_assert!(verify_solution(ilp, &sol).unwrap_or(false));
            return Ok(Some(sol));
        }
        // odometer over the first-stage box, first variable most significant
        let mut k = s;
        loop {
            if k == 0 {
                return Ok(None);
            }
            k -= 1;
            if first[k] < upper[k] {
                first[k] += 1;
                break;
            }
            first[k] = lower[k];
        }
    }
}

struct BlockSearch {
    /// `rows[row][j]`
    rows: Vec<Vec<i128>>,
    lower: Vec<i128>,
    upper: Vec<i128>,
    /// `rest[row][j]`: range of Σ_{k ≥ j} c_k x_k over the box.
    rest: Vec<Vec<(i128, i128)>>,
}

impl BlockSearch {
    fn new(matrix: &Matrix, lower: &[i64], upper: &[i64]) -> Self {
        let rows: Vec<Vec<i128>> = matrix
            .iter()
            .map(|r| r.iter().map(|&c| i128::from(c)).collect())
            .collect();
        let lower: Vec<i128> = lower.iter().map(|&v| i128::from(v)).collect();
        let upper: Vec<i128> = upper.iter().map(|&v| i128::from(v)).collect();
        let t = lower.len();
        let rest = rows
            .iter()
            .map(|row| {
                let mut acc = vec![(0i128, 0i128); t + 1];
                for j in (0..t).rev() {
                    let (a, b) = (row[j] * lower[j], row[j] * upper[j]);
                    acc[j] = (acc[j + 1].0 + a.min(b), acc[j + 1].1 + a.max(b));
                }
                acc
            })
            .collect();
        Self {
            rows,
            lower,
            upper,
            rest,
        }
    }

    fn run(&self, mut residual: Vec<i128>, nodes: &mut u64) -> Result<Option<Vec<i64>>, IlpError> {
        let mut x = vec![0i64; self.lower.len()];
        Ok(self.dfs(0, &mut residual, &mut x, nodes)?.then_some(x))
    }

    fn dfs(
        &self,
        j: usize,
        residual: &mut [i128],
        x: &mut [i64],
        nodes: &mut u64,
    ) -> Result<bool, IlpError> {
        if j == x.len() {
            return Ok(residual.iter().all(|r| *r == 0));
        }
        let (mut lo, mut hi) = (self.lower[j], self.upper[j]);
        for ((row, rest), res) in self.rows.iter().zip(&self.rest).zip(residual.iter()) {
            let c = row[j];
            let (rest_lo, rest_hi) = rest[j + 1];
            // c·x_j must land in [res - rest_hi, res - rest_lo]
            let (need_lo, need_hi) = (res - rest_hi, res - rest_lo);
            match c.signum() {
                0 => {
                    if need_lo > 0 || need_hi < 0 {
                        return Ok(false);
                    }
                }
                1 => {
                    lo = lo.max(ceil_div(need_lo, c));
                    hi = hi.min(Integer::div_floor(&need_hi, &c));
                }
                _ => {
                    lo = lo.max(ceil_div(need_hi, c));
                    hi = hi.min(Integer::div_floor(&need_lo, &c));
                }
            }
            if lo > hi {
                return Ok(false);
            }
        }
        for v in lo..=hi {
            *nodes += 1;
            if *nodes > NODE_BUDGET {
                return Err(IlpError::SearchSpaceTooLarge(format!(
                    "more than {NODE_BUDGET} search nodes"
                )));
            }
            for (row, res) in self.rows.iter().zip(residual.iter_mut()) {
                *res -= row[j] * v;
            }
            x[j] = v as i64;
            let found = self.dfs(j + 1, residual, x, nodes)?;
            for (row, res) in self.rows.iter().zip(residual.iter_mut()) {
                *res += row[j] * v;
            }
            if found {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -Integer::div_floor(&-a, &b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedIlp {
    pub ilp: TwoStageIlp,
    pub digits: usize,
    /// For each original second-stage variable (block-major), the columns of
    /// its digit variables in the encoded instance.
    pub group_map: Vec<Range<usize>>,
}

/// Bit `k` of `c` for `c ≥ 0`; `-1` encodes as `(-1, 0, …, 0)`.
pub fn enc_digits(c: i64, digits: usize) -> Vec<i64> {
    if c == -1 {
        let mut d = vec![0; digits];
        d[0] = -1;
        return d;
    }
    (0..digits).map(|k| (c >> k) & 1).collect()
}

/// Chain matrix E of size `(D-1) × D` with rows `2u_k - u_{k+1} = 0`.
pub fn chain_matrix(digits: usize) -> Matrix {
    (0..digits.saturating_sub(1))
        .map(|k| {
            let mut row = vec![0; digits];
            row[k] = 2;
            row[k + 1] = -1;
            row
        })
        .collect()
}

/// Replaces every second-stage variable `v` by digits `u_k = v·2^k` so that
/// no coefficient exceeds 2 in absolute value.
pub fn encode_binary(ilp: &TwoStageIlp) -> Result<EncodedIlp, IlpError> {
    if let Some(&bad) = ilp
        .a_blocks
        .iter()
        .flatten()
        .flatten()
        .find(|c| c.unsigned_abs() > 1)
    {
        return Err(IlpError::FirstStageNotUnit(bad));
    }
    for (block, bb) in ilp.b_blocks.iter().enumerate() {
        for (row, entries) in bb.iter().enumerate() {
            if let Some(col) = entries.iter().position(|&c| c < -1) {
                return Err(IlpError::NegativeCoefficient {
                    block,
                    row,
                    col,
                    value: entries[col],
                });
            }
        }
    }
    let max_coeff = ilp
        .b_blocks
        .iter()
        .flatten()
        .flatten()
        .copied()
        .max()
        .unwrap_or(0);
    let digits = if max_coeff > 1 {
        (64 - max_coeff.leading_zeros()) as usize
    } else {
        1
    };
    let (r, s, t) = (ilp.r, ilp.s, ilp.t);
    let chain = chain_matrix(digits);
    let r2 = r + t * (digits - 1);
    let t2 = t * digits;

    let mut a_blocks = Vec::with_capacity(ilp.n);
    let mut b_blocks = Vec::with_capacity(ilp.n);
    let mut rhs = Vec::with_capacity(ilp.n * r2);
    for i in 0..ilp.n {
        let mut a = ilp.a_blocks[i].clone();
        a.resize(r2, vec![0; s]);
        let mut bb: Matrix = ilp.b_blocks[i]
            .iter()
            .map(|row| row.iter().flat_map(|&c| enc_digits(c, digits)).collect())
            .collect();
        for j in 0..t {
            for crow in &chain {
                let mut row = vec![0; t2];
                row[j * digits..(j + 1) * digits].copy_from_slice(crow);
                bb.push(row);
            }
        }
        a_blocks.push(a);
        b_blocks.push(bb);
        rhs.extend_from_slice(&ilp.b[i * r..(i + 1) * r]);
        rhs.resize(rhs.len() + t * (digits - 1), BigInt::zero());
    }

    let mut lower = ilp.lower[..s].to_vec();
    let mut upper = ilp.upper[..s].to_vec();
    let mut objective = ilp.objective[..s].to_vec();
    let mut group_map = Vec::with_capacity(ilp.n * t);
    for col in s..ilp.num_vars() {
        let start = lower.len();
        for k in 0..digits {
            lower.push(&ilp.lower[col] << k);
            upper.push(&ilp.upper[col] << k);
            objective.push(if k == 0 {
                ilp.objective[col].clone()
            } else {
                BigInt::zero()
            });
        }
        group_map.push(start..start + digits);
    }
    let enc = TwoStageIlp::from_blocks(a_blocks, b_blocks, rhs, lower, upper, objective)?;
    debug_assert!(enc.delta() <= 2);
    Ok(EncodedIlp {
        ilp: enc,
        digits,
        group_map,
    })
}

/// Lifts a solution of the original instance to the encoded one.
pub fn encode_solution(enc: &EncodedIlp, x: &Solution) -> Result<Solution, IlpError> {
    let s = enc.ilp.s;
    let expected = s + enc.group_map.len();
    if x.0.len() != expected {
        return Err(IlpError::DimensionMismatch {
            expected,
            got: x.0.len(),
        });
    }
    let mut out = x.0[..s].to_vec();
    for v in &x.0[s..] {
        out.extend((0..enc.digits).map(|k| v << k));
    }
    Ok(Solution(out))
}

/// Reads each original variable off its first digit, checking the chain.
pub fn decode_solution(enc: &EncodedIlp, x: &Solution) -> Result<Solution, IlpError> {
    if x.0.len() != enc.ilp.num_vars() {
        return Err(IlpError::DimensionMismatch {
            expected: enc.ilp.num_vars(),
            got: x.0.len(),
        });
    }
    let mut out = x.0[..enc.ilp.s].to_vec();
    for (group, cols) in enc.group_map.iter().enumerate() {
        let u = &x.0[cols.clone()];
        if u.windows(2).any(|w| &w[0] * 2 != w[1]) {
            return Err(IlpError::ChainViolation { group });
        }
        out.push(u[0].clone());
    }
    Ok(Solution(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrd::{Equation, ResidueMode};

    fn ubig(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn mrd(eqs: &[(u64, &[u64])], zeta: u64, mode: ResidueMode) -> MrdInstance {
        let eqs = eqs
            .iter()
            .map(|&(q, roots)| Equation {
                modulus: ubig(q),
                roots: roots.iter().map(|&r| ubig(r)).collect(),
            })
            .collect();
        MrdInstance::new(eqs, ubig(zeta), mode).unwrap()
    }

    fn three_five() -> MrdInstance {
        mrd(&[(3, &[1, 2]), (5, &[2, 3])], 10, ResidueMode::Pair)
    }

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn reduction_example() {
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(three_five())).unwrap();
        assert_eq!((ilp.n(), ilp.r(), ilp.s(), ilp.t()), (2, 2, 1, 3));
        assert_eq!(ilp.b_blocks()[0], vec![vec![3, 1, 2], vec![0, 1, 1]]);
        assert_eq!(ilp.b_blocks()[1], vec![vec![5, 2, 3], vec![0, 1, 1]]);
        for a in ilp.a_blocks() {
            assert_eq!(*a, vec![vec![-1], vec![0]]);
        }
        assert_eq!(ilp.rhs(), ints(&[0, 1, 0, 1]).as_slice());
        assert_eq!(ilp.delta(), 5);
        assert_eq!(ilp.upper(), ints(&[10, 10, 1, 1, 10, 1, 1]).as_slice());
        assert_eq!(ilp.lower(), ints(&[1, 0, 0, 0, 0, 0, 0]).as_slice());
    }

    #[test]
    fn degenerate_and_padded() {
        let single = mrd(&[(5, &[0])], 10, ResidueMode::Pair);
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(single)).unwrap();
        assert_eq!(ilp.t(), 2);
        assert_eq!(ilp.b_blocks()[0], vec![vec![5, 0], vec![0, 1]]);

        let padded = mrd(&[(16, &[1, 7, 9, 15]), (3, &[1, 2])], 40, ResidueMode::Full);
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(padded)).unwrap();
        assert_eq!(ilp.t(), 5);
        assert_eq!(
            ilp.b_blocks()[1],
            vec![vec![3, 1, 2, 0, 0], vec![0, 1, 1, 0, 0]]
        );
        assert_eq!(&ilp.upper()[6..], ints(&[40, 1, 1, 0, 0]).as_slice());

        assert_eq!(
            reduce_mrd_to_ilp(&MrdReduction::NoInstance),
            Err(IlpError::NoInstanceInput)
        );
    }

    #[test]
    fn witness_and_verify() {
        let inst = three_five();
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(inst.clone())).unwrap();
        let x = ilp_from_witness(&inst, &ubig(2), &[ubig(2), ubig(2)]).unwrap();
        assert_eq!(x, Solution::from_i64(&[2, 0, 0, 1, 0, 1, 0]));
        assert!(verify_solution(&ilp, &x).unwrap());

        let mut bumped = x.clone();
        bumped.0[0] = BigInt::from(3);
        assert!(!verify_solution(&ilp, &bumped).unwrap());
        assert!(!verify_solution(&ilp, &Solution(vec![BigInt::zero(); 7])).unwrap());
        assert!(matches!(
            verify_solution(&ilp, &Solution(vec![])),
            Err(IlpError::DimensionMismatch {
                expected: 7,
                got: 0
            })
        ));

        let x8 = ilp_from_witness(&inst, &ubig(8), &[ubig(2), ubig(3)]).unwrap();
        assert_eq!(x8, Solution::from_i64(&[8, 2, 0, 1, 1, 0, 1]));
        assert!(verify_solution(&ilp, &x8).unwrap());

        assert!(ilp_from_witness(&inst, &ubig(4), &[ubig(1), ubig(4)]).is_err());
        assert!(ilp_from_witness(&inst, &ubig(8), &[ubig(2), ubig(2)]).is_err());
    }

    #[test]
    fn reduced_solver() {
        let inst = three_five();
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(inst)).unwrap();
        let sol = solve_reduced(&ilp).unwrap().unwrap();
        assert_eq!(sol.0[0], BigInt::from(2));
        let tight = mrd(&[(3, &[1, 2]), (5, &[2, 3])], 1, ResidueMode::Pair);
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(tight)).unwrap();
        assert_eq!(solve_reduced(&ilp).unwrap(), None);

        let plain = TwoStageIlp::from_blocks(
            vec![vec![vec![1]]],
            vec![vec![vec![1]]],
            ints(&[2]),
            ints(&[0, 0]),
            ints(&[3, 3]),
            ints(&[0, 0]),
        )
        .unwrap();
        assert!(matches!(
            solve_reduced(&plain),
            Err(IlpError::NotReductionShaped(_))
        ));
    }

    #[test]
    fn exhaustive_solver() {
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(three_five())).unwrap();
        let mut upper = ilp.upper().to_vec();
        upper[0] = BigInt::from(3);
        let clamped = TwoStageIlp::from_blocks(
            ilp.a_blocks().to_vec(),
            ilp.b_blocks().to_vec(),
            ilp.rhs().to_vec(),
            ilp.lower().to_vec(),
            upper,
            ilp.objective().to_vec(),
        )
        .unwrap();
        let sol = solve_exhaustive(&clamped).unwrap().unwrap();
        assert_eq!(sol, Solution::from_i64(&[2, 0, 0, 1, 0, 1, 0]));

        // 2y = 3 has no integer solution
        let unreachable = TwoStageIlp::from_blocks(
            vec![vec![vec![0]]],
            vec![vec![vec![2]]],
            ints(&[3]),
            ints(&[0, 0]),
            ints(&[5, 5]),
            ints(&[0, 0]),
        )
        .unwrap();
        assert_eq!(solve_exhaustive(&unreachable).unwrap(), None);
    }

    #[test]
    fn digits_and_chain() {
        assert_eq!(enc_digits(5, 3), vec![1, 0, 1]);
        assert_eq!(enc_digits(-1, 3), vec![-1, 0, 0]);
        let u = [2i64, 4, 8];
        assert_eq!(
            enc_digits(5, 3)
                .iter()
                .zip(u)
                .map(|(a, b)| a * b)
                .sum::<i64>(),
            10
        );
        assert_eq!(chain_matrix(3), vec![vec![2, -1, 0], vec![0, 2, -1]]);
        assert!(chain_matrix(1).is_empty());
    }

    #[test]
    fn encoding_example() {
        let inst = three_five();
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(inst.clone())).unwrap();
        let enc = encode_binary(&ilp).unwrap();
        assert_eq!(enc.digits, 3);
        assert_eq!((enc.ilp.r(), enc.ilp.t()), (8, 9));
        assert_eq!(enc.ilp.delta(), 2);
        assert_eq!(enc.group_map[0], 1..4);

        let x = ilp_from_witness(&inst, &ubig(8), &[ubig(2), ubig(3)]).unwrap();
        let lifted = encode_solution(&enc, &x).unwrap();
        assert!(verify_solution(&enc.ilp, &lifted).unwrap());
        assert_eq!(decode_solution(&enc, &lifted).unwrap(), x);

        let mut broken = lifted.clone();
        broken.0[2] += 1;
        assert_eq!(
            decode_solution(&enc, &broken),
            Err(IlpError::ChainViolation { group: 0 })
        );
    }

    #[test]
    fn encoding_rejections() {
        let neg = TwoStageIlp::from_blocks(
            vec![vec![vec![0]]],
            vec![vec![vec![-2]]],
            ints(&[0]),
            ints(&[0, 0]),
            ints(&[1, 1]),
            ints(&[0, 0]),
        )
        .unwrap();
        assert!(matches!(
            encode_binary(&neg),
            Err(IlpError::NegativeCoefficient { value: -2, .. })
        ));
        let wide = TwoStageIlp::from_blocks(
            vec![vec![vec![3]]],
            vec![vec![vec![1]]],
            ints(&[0]),
            ints(&[0, 0]),
            ints(&[1, 1]),
            ints(&[0, 0]),
        )
        .unwrap();
        assert_eq!(encode_binary(&wide), Err(IlpError::FirstStageNotUnit(3)));
    }

    #[test]
    fn text_round_trip() {
        let ilp = reduce_mrd_to_ilp(&MrdReduction::Instance(three_five())).unwrap();
        let text = ilp.to_text();
        assert!(text.starts_with("2SSILP 1\n2 2 1 3\n-1 3 1 2\n0 0 1 1\n"));
        assert!(text.ends_with("w: 0 0 0 0 0 0 0\n"));
        assert_eq!(TwoStageIlp::from_text(&text).unwrap(), ilp);
        let enc = encode_binary(&ilp).unwrap();
        assert_eq!(TwoStageIlp::from_text(&enc.ilp.to_text()).unwrap(), enc.ilp);
        assert!(TwoStageIlp::from_text("2SSILP 2\n").is_err());
        assert!(TwoStageIlp::from_text(&text.replace("b:", "c:")).is_err());
    }
}
