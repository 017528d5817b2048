//! 3-SAT to Quadratic Congruences.
//!
//! A simplified formula with `m'` clauses and `ℓ'` variables becomes an
//! instance `(α, β, γ)` asking for `0 < z ≤ γ` with `z² ≡ α (mod β)`, where
//! the factorization of `β` is known: the prime 2 occurs four times and
//! every odd prime once.
//!
//! The construction runs in stages:
//!
//! 1. Each clause `k` becomes `R_k = y_k - (#true literals) + 1` with a slack
//!    `y_k ∈ {0..3}`, plus `R_0 = α_0 + 1`. All `R_k` vanish iff the
//!    mixed-radix sum `Σ R_k · (p_0 ⋯ p_k)` vanishes.
//! 2. Slacks and truth values are rewritten over signs `α_j ∈ {-1, +1}`,
//!    giving `Σ C_j α_j ≡ τ (mod M1)` with `M1 = 2³ · p* · p_1 ⋯ p_{m'}`.
//! 3. Each `C_j` is lifted to `θ_j`, which is divisible by every grid prime
//!    outside row `j`. The sums `Σ θ_j α_j` are then exactly the solutions of
//!    `|x| ≤ H`, `(H + x)(H - x) ≡ 0 (mod K)`.
//! 4. The two congruences merge into one quadratic congruence modulo
//!    `β = 2⁴ · p* · p_1 ⋯ p_{m'} · K`.

use std::collections::HashSet;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::numtheory::{self, crt, mod_inverse_u, Factorization, NumError};
use crate::sat::{eval, simplify, Assignment, Formula};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QcError {
    #[error("formula has no clauses")]
    EmptyFormula,
    #[error("paper-mode coefficient {} is not an integer", index.map_or("tau".to_string(), |i| format!("c_{i}")))]
    PaperModeNonIntegral { index: Option<usize> },
    #[error("reduction needs at least 2 clauses, formula has {0}")]
    TooFewClauses(usize),
    #[error("formula is not simplified: {0}")]
    NotSimplified(String),
    #[error("assignment does not satisfy the formula")]
    AssignmentDoesNotSatisfy,
    #[error("sign scan limited to 20 signs, system has {0}")]
    TooManySigns(usize),
    #[error("brute-force range {range} exceeds the cap of 10^7")]
    CapExceeded { range: BigUint },
    #[error("audit failed: {}", .0.join(", "))]
    AuditViolation(Vec<String>),
    #[error("invalid QC instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Where the linear-form coefficients come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffMode {
    /// Symbolic expansion of the clause equations; always integral.
    Derived,
    /// The closed-form coefficient formulas, taken literally.
    Paper,
}

impl std::str::FromStr for CoeffMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "derived" => Ok(Self::Derived),
            "paper" => Ok(Self::Paper),
            other => Err(format!("unknown coefficient mode {other:?}")),
        }
    }
}

/// Quadratic Congruences instance with a known factorization of β.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QcInstance {
    alpha: BigUint,
    beta: BigUint,
    gamma: BigUint,
    factorization: Factorization,
}

impl QcInstance {
    pub fn new(
        alpha: BigUint,
        beta: BigUint,
        gamma: BigUint,
        factorization: Factorization,
    ) -> Result<Self, QcError> {
        if alpha >= beta {
            return Err(QcError::InvalidInstance("alpha must be below beta".into()));
        }
        if factorization.value() != beta {
            return Err(QcError::InvalidInstance(
                "factorization does not multiply to beta".into(),
            ));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            factorization,
        })
    }

    pub fn alpha(&self) -> &BigUint {
        &self.alpha
    }
    pub fn beta(&self) -> &BigUint {
        &self.beta
    }
    pub fn gamma(&self) -> &BigUint {
        &self.gamma
    }
    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }
}

/// Primes used by the construction for a given `(m', n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeLayout {
    /// `p_0 .. p_{2m'}`, the first `2m' + 1` primes.
    pub clause_primes: Vec<u64>,
    /// `(n+1) × (n+1)` grid, row `i` holds `p_{i,0} .. p_{i,n}`.
    pub grid_primes: Vec<Vec<u64>>,
    /// The prime of rank `n² + 2n + 2m' + 13`.
    pub literal_p_star: u64,
    /// The prime actually used: the literal one if it clears the grid,
    /// otherwise the least prime above the largest grid prime.
    pub p_star: u64,
}

impl PrimeLayout {
    pub fn new(m_prime: usize, n: usize) -> Self {
        let clause_primes = numtheory::nth_primes(2 * m_prime + 1);
        let side = n + 1;
        let cells = side * side;
        let exponent = cells as u32;
        let bound = BigUint::from(4u32 * side as u32 * 8)
            * numtheory::nth_primes(cells)
                .into_iter()
                .map(BigUint::from)
                .product::<BigUint>();
        let floor = *clause_primes.last().expect("at least p_0");
        let flat = numtheory::primes_above(cells, exponent, &bound, floor);
        let grid_primes: Vec<Vec<u64>> = flat.chunks(side).map(<[u64]>::to_vec).collect();
        let literal_p_star = numtheory::kth_prime(n * n + 2 * n + 2 * m_prime + 13);
        let max_grid = *flat.last().expect("grid is nonempty");
        let p_star = if literal_p_star > max_grid {
            literal_p_star
        } else {
            numtheory::next_prime_after(max_grid)
        };
        Self {
            clause_primes,
            grid_primes,
            literal_p_star,
            p_star,
        }
    }

    /// `p_1 ⋯ p_{m'}`.
    pub fn clause_product(&self, m_prime: usize) -> BigUint {
        self.clause_primes[1..=m_prime]
            .iter()
            .map(|&p| BigUint::from(p))
            .product()
    }

    /// `M1 = 2³ · p* · p_1 ⋯ p_{m'}`.
    pub fn m1(&self, m_prime: usize) -> BigUint {
        BigUint::from(8u32) * self.p_star * self.clause_product(m_prime)
    }

    pub fn max_grid_prime(&self) -> u64 {
        *self
            .grid_primes
            .last()
            .and_then(|r| r.last())
            .expect("grid")
    }
}

/// Linear form `Σ C_j α_j ≡ τ (mod M1)` equivalent to satisfiability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearForm {
    pub coeffs: Vec<BigInt>,
    pub tau: BigInt,
    pub m1: BigUint,
    pub clause_primes: Vec<u64>,
}

/// The closed-form coefficients, doubled so they stay integral:
/// `doubled[j] = 2 c_j` and `doubled_tau = 2 τ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperCoefficients {
    pub doubled: Vec<BigInt>,
    pub doubled_tau: BigInt,
}

fn prefix_product(primes: &[u64], from: usize, to: usize) -> BigInt {
    primes[from..=to].iter().map(|&p| BigInt::from(p)).product()
}

fn sign_index(m_prime: usize, var: usize) -> usize {
    2 * m_prime + var
}

/// Closed-form coefficients: `c_0 = 0`, `c_{2k-1} = -½ Π_{i=1..2k-1} p_i`,
/// `c_{2k} = -Π_{i=1..2k} p_i`, `c_{2m'+i} = ½ (f_i⁺ - f_i⁻)` and
/// `τ = τ_φ' + Σ c_j + Σ f_i⁻`.
pub fn paper_coefficients(f: &Formula) -> PaperCoefficients {
    let m = f.num_clauses();
    let l = f.num_vars();
    let n = 2 * m + l;
    let primes = numtheory::nth_primes(2 * m + 1);
    let mut doubled = vec![BigInt::zero(); n + 1];
    for j in 1..=2 * m {
        let prod = prefix_product(&primes, 1, j);
        doubled[j] = if j % 2 == 1 { -prod } else { -2 * prod };
    }
    let mut f_plus = vec![BigInt::zero(); l + 1];
    let mut f_minus = vec![BigInt::zero(); l + 1];
    for (k, clause) in f.clauses().iter().enumerate() {
        let weight = prefix_product(&primes, 1, k + 1);
        for &lit in clause.literals() {
            let v = lit.unsigned_abs() as usize;
            if lit > 0 {
                f_plus[v] += &weight;
            } else {
                f_minus[v] += &weight;
            }
        }
    }
    for v in 1..=l {
        doubled[sign_index(m, v)] = &f_plus[v] - &f_minus[v];
    }
    let tau_phi: BigInt = -(1..=m)
        .map(|i| prefix_product(&primes, 1, i))
        .sum::<BigInt>();
    let sum_minus: BigInt = f_minus.iter().sum();
    let doubled_tau = 2 * tau_phi + doubled.iter().sum::<BigInt>() + 2 * sum_minus;
    PaperCoefficients {
        doubled,
        doubled_tau,
    }
}

/// Expands `Σ_{k=0}^{m'} R_k · (p_0 ⋯ p_k)` over the sign variables.
///
/// With `h_k = (p_0 ⋯ p_k)/2`, clause `k` of size `s_k` contributes
/// `-h_k` to `C_{2k-1}`, `-2h_k` to `C_{2k}`, `±h_k` to the sign of each of
/// its variables and `(5 - s_k) h_k` to the constant; `R_0` contributes
/// `2α_0 + 2`. Returns `(coeffs, constant)` with
/// `Σ R_k (p_0 ⋯ p_k) = Σ C_j α_j + constant`.
fn derived_expansion(f: &Formula, primes: &[u64]) -> (Vec<BigInt>, BigInt) {
    let m = f.num_clauses();
    let n = 2 * m + f.num_vars();
    let mut coeffs = vec![BigInt::zero(); n + 1];
    coeffs[0] = BigInt::from(2);
    let mut constant = BigInt::from(2);
    for (idx, clause) in f.clauses().iter().enumerate() {
        let k = idx + 1;
        let half = prefix_product(primes, 0, k) / 2;
        coeffs[2 * k - 1] -= &half;
        coeffs[2 * k] -= 2 * &half;
        constant += (5 - clause.len() as i64) * &half;
        for &lit in clause.literals() {
            let j = sign_index(m, lit.unsigned_abs() as usize);
            if lit > 0 {
                coeffs[j] += &half;
            } else {
                coeffs[j] -= &half;
            }
        }
    }
    (coeffs, constant)
}

pub fn derive_linear_form(f: &Formula, mode: CoeffMode) -> Result<LinearForm, QcError> {
    let m = f.num_clauses();
    if m == 0 {
        return Err(QcError::EmptyFormula);
    }
    let n = 2 * m + f.num_vars();
    let layout = PrimeLayout::new(m, n);
    let m1 = layout.m1(m);
    let (coeffs, tau) = match mode {
        CoeffMode::Derived => {
            let (coeffs, constant) = derived_expansion(f, &layout.clause_primes);
            (coeffs, -constant)
        }
        CoeffMode::Paper => {
            let paper = paper_coefficients(f);
            let two = BigInt::from(2);
            let mut coeffs = Vec::with_capacity(paper.doubled.len());
            for (j, c) in paper.doubled.iter().enumerate() {
                if c.is_odd() {
                    return Err(QcError::PaperModeNonIntegral { index: Some(j) });
                }
                coeffs.push(c / &two);
            }
            if paper.doubled_tau.is_odd() {
                return Err(QcError::PaperModeNonIntegral { index: None });
            }
            (coeffs, paper.doubled_tau / two)
        }
    };
    Ok(LinearForm {
        coeffs,
        tau,
        m1,
        clause_primes: layout.clause_primes,
    })
}

/// Product of every grid prime outside row `j`.
fn off_row_product(grid: &[Vec<u64>], j: usize) -> BigUint {
    grid.iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .flat_map(|(_, row)| row.iter().map(|&p| BigUint::from(p)))
        .product()
}

/// Least positive θ with `θ ≡ C_j (mod M1)`, `θ ≡ 0` modulo every grid prime
/// outside row `j`, and `θ ≢ 0 (mod p_{j,1})`.
pub fn build_theta(
    coeff: &BigInt,
    m1: &BigUint,
    grid: &[Vec<u64>],
    j: usize,
) -> Result<BigUint, QcError> {
    let others = off_row_product(grid, j);
    let residue = numtheory::reduce_signed(coeff, m1);
    let (mut theta, period) = crt(&[(residue, m1.clone()), (BigUint::zero(), others)])?;
    if theta.is_zero() {
        theta = period.clone();
    }
    if (&theta % grid[j][1]).is_zero() {
        theta += &period;
    }
    Ok(theta)
}

/// Every intermediate value of the SAT → QC reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatLinearSystem {
    pub formula: Formula,
    pub mode: CoeffMode,
    pub m_prime: usize,
    pub ell_prime: usize,
    pub n: usize,
    pub clause_primes: Vec<u64>,
    pub grid_primes: Vec<Vec<u64>>,
    pub literal_p_star: u64,
    pub p_star: u64,
    pub m1: BigUint,
    pub coeffs: Vec<BigInt>,
    pub tau: BigInt,
    pub thetas: Vec<BigUint>,
    pub h: BigUint,
    pub k: BigUint,
}

impl SatLinearSystem {
    /// `2⁴ · p* · p_1 ⋯ p_{m'}`.
    pub fn sixteen_part(&self) -> BigUint {
        BigUint::from(2u32) * &self.m1
    }

    /// `Σ θ_j α_j` for a sign vector.
    pub fn sign_sum(&self, signs: &[i8]) -> BigInt {
        assert_eq!(signs.len(), self.thetas.len());
        let mut x = BigInt::zero();
        for (theta, &s) in self.thetas.iter().zip(signs) {
            let t = BigInt::from_biguint(Sign::Plus, theta.clone());
            if s > 0 {
                x += t;
            } else {
                x -= t;
            }
        }
        x
    }

    /// Largest `|Σ R_k (p_0 ⋯ p_k)|` over all slack and truth values.
    pub fn range_bound(&self) -> BigUint {
        let mut total = BigUint::from(4u32); // |R_0 · p_0| ≤ 2 · 2
        for (idx, clause) in self.formula.clauses().iter().enumerate() {
            let weight: BigUint = self.clause_primes[..=idx + 1]
                .iter()
                .map(|&p| BigUint::from(p))
                .product();
            // R_k ∈ [1 - s_k, 4]
            let reach = (clause.len() as u32 - 1).max(4);
            total += weight * reach;
        }
        total
    }
}

fn check_simplified(f: &Formula) -> Result<(), QcError> {
    let s = simplify(f);
    if s.formula != *f {
        return Err(QcError::NotSimplified(
            "duplicate or tautological clauses, or unused variables".into(),
        ));
    }
    Ok(())
}

/// Full SAT → QC transformation for a simplified formula with `m' ≥ 2`.
pub fn reduce_sat_to_qc(
    f: &Formula,
    mode: CoeffMode,
) -> Result<(QcInstance, SatLinearSystem), QcError> {
    check_simplified(f)?;
    let m = f.num_clauses();
    if m < 2 {
        return Err(QcError::TooFewClauses(m));
    }
    let l = f.num_vars();
    let n = 2 * m + l;
    let form = derive_linear_form(f, mode)?;
    let layout = PrimeLayout::new(m, n);
    debug_assert_eq!(layout.m1(m), form.m1);

    let thetas = (0..=n)
        .map(|j| build_theta(&form.coeffs[j], &form.m1, &layout.grid_primes, j))
        .collect::<Result<Vec<_>, _>>()?;
    let h: BigUint = thetas.iter().sum();
    let k: BigUint = layout
        .grid_primes
        .iter()
        .flatten()
        .map(|&p| BigUint::from(p))
        .product();

    let sixteen = BigUint::from(2u32) * &form.m1;
    let beta = &sixteen * &k;
    let tau_sq = form.tau.magnitude() * form.tau.magnitude();
    let inv = mod_inverse_u(&((&sixteen + &k) % &beta), &beta)?;
    let alpha = inv * ((&k * tau_sq + &sixteen * &h * &h) % &beta) % &beta;

    let mut factors: Vec<(u64, u32)> = vec![(2, 4), (layout.p_star, 1)];
    factors.extend(layout.clause_primes[1..=m].iter().map(|&p| (p, 1)));
    factors.extend(layout.grid_primes.iter().flatten().map(|&p| (p, 1)));
    let factorization = Factorization::from_unsorted(factors)?;

    let system = SatLinearSystem {
        formula: f.clone(),
        mode,
        m_prime: m,
        ell_prime: l,
        n,
        clause_primes: layout.clause_primes.clone(),
        grid_primes: layout.grid_primes.clone(),
        literal_p_star: layout.literal_p_star,
        p_star: layout.p_star,
        m1: form.m1,
        coeffs: form.coeffs,
        tau: form.tau,
        thetas,
        h: h.clone(),
        k,
    };
    let inst = QcInstance::new(alpha, beta, h, factorization)?;
    Ok((inst, system))
}

/// Sign vector for a model: `α_0 = -1`, slack signs from `y_k = s_k - 1`,
/// variable signs `1 - 2 r(x_i)`.
pub fn witness_signs(sys: &SatLinearSystem, a: &Assignment) -> Result<Vec<i8>, QcError> {
    let (ok, counts) = eval(&sys.formula, a);
    if !ok {
        return Err(QcError::AssignmentDoesNotSatisfy);
    }
    let m = sys.m_prime;
    let mut signs = vec![0i8; sys.n + 1];
    signs[0] = -1;
    for (idx, &count) in counts.iter().enumerate() {
        let k = idx + 1;
        let y = count - 1;
        // y = ((1 - α_{2k-1}) + 2(1 - α_{2k})) / 2
        signs[2 * k - 1] = if y & 1 == 1 { -1 } else { 1 };
        signs[2 * k] = if y & 2 == 2 { -1 } else { 1 };
    }
    for v in 1..=sys.ell_prime {
        signs[sign_index(m, v)] = if a.var(v) { -1 } else { 1 };
    }
    Ok(signs)
}

/// Maps a model of the formula to `z = |Σ θ_j α_j|`.
pub fn qc_witness(sys: &SatLinearSystem, a: &Assignment) -> Result<(BigUint, Vec<i8>), QcError> {
    let signs = witness_signs(sys, a)?;
    let x = sys.sign_sum(&signs);
    let z = x.magnitude().clone();
    debug_assert!(z <= sys.h);
    Ok((z, signs))
}

/// First sign vector (−1 before +1, `α_0` most significant) with
/// `Σ θ_j α_j ≡ τ (mod M1)`.
pub fn sign_vector_feasible(sys: &SatLinearSystem) -> Result<Option<Vec<i8>>, QcError> {
    let width = sys.n + 1;
    if width > 20 {
        return Err(QcError::TooManySigns(width));
    }
    let m1 = &sys.m1;
    let target = numtheory::reduce_signed(&sys.tau, m1);
    let plus: Vec<BigUint> = sys.thetas.iter().map(|t| t % m1).collect();
    let minus: Vec<BigUint> = plus.iter().map(|t| (m1 - t) % m1).collect();

    fn dfs(
        j: usize,
        acc: &BigUint,
        plus: &[BigUint],
        minus: &[BigUint],
        m1: &BigUint,
        target: &BigUint,
        signs: &mut Vec<i8>,
    ) -> bool {
        if j == plus.len() {
            return acc == target;
        }
        for (sign, step) in [(-1i8, &minus[j]), (1, &plus[j])] {
            signs.push(sign);
            let next = (acc + step) % m1;
            if dfs(j + 1, &next, plus, minus, m1, target, signs) {
                return true;
            }
            signs.pop();
        }
        false
    }

    let mut signs = Vec::with_capacity(width);
    if dfs(0, &BigUint::zero(), &plus, &minus, m1, &target, &mut signs) {
        Ok(Some(signs))
    } else {
        Ok(None)
    }
}

/// All `2^{n+1}` sums `Σ θ_j α_j`, in sign-vector lexicographic order.
pub fn all_sign_sums(sys: &SatLinearSystem) -> Result<Vec<BigInt>, QcError> {
    let width = sys.n + 1;
    if width > 20 {
        return Err(QcError::TooManySigns(width));
    }
    let mut sums = vec![BigInt::zero()];
    for theta in &sys.thetas {
        let t = BigInt::from_biguint(Sign::Plus, theta.clone());
        sums = sums.into_iter().flat_map(|s| [&s - &t, &s + &t]).collect();
    }
    Ok(sums)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniquenessReport {
    pub values: usize,
    pub pairwise_distinct: bool,
    pub in_range_violations: usize,
    pub congruence_violations: usize,
    pub samples: usize,
    /// Random `x` outside the sign-sum set that still solve the system.
    pub sample_violations: usize,
}

impl UniquenessReport {
    pub fn holds(&self) -> bool {
        self.pairwise_distinct
            && self.in_range_violations == 0
            && self.congruence_violations == 0
            && self.sample_violations == 0
    }
}

fn solves_grid_system(x: &BigInt, h: &BigInt, k: &BigInt) -> bool {
    ((h + x) * (h - x)).mod_floor(k).is_zero()
}

/// Checks that the sign sums are exactly the solutions of `|x| ≤ H`,
/// `(H + x)(H - x) ≡ 0 (mod K)`: every sum solves it, the sums are distinct,
/// and `samples` random `x ∈ [-H, H]` outside the set do not.
pub fn uniqueness_check<R: Rng + ?Sized>(
    sys: &SatLinearSystem,
    samples: usize,
    rng: &mut R,
) -> Result<UniquenessReport, QcError> {
    let sums = all_sign_sums(sys)?;
    let h = BigInt::from_biguint(Sign::Plus, sys.h.clone());
    let k = BigInt::from_biguint(Sign::Plus, sys.k.clone());
    let set: HashSet<&BigInt> = sums.iter().collect();
    let in_range_violations = sums.iter().filter(|x| x.abs() > h).count();
    let congruence_violations = sums
        .iter()
        .filter(|x| !solves_grid_system(x, &h, &k))
        .count();
    let upper = &h + 1;
    let lower = -&h;
    let mut sample_violations = 0;
    let mut drawn = 0;
    while drawn < samples {
        let x = rng.gen_bigint_range(&lower, &upper);
        if set.contains(&x) {
            continue;
        }
        drawn += 1;
        if solves_grid_system(&x, &h, &k) {
            sample_violations += 1;
        }
    }
    Ok(UniquenessReport {
        values: sums.len(),
        pairwise_distinct: set.len() == sums.len(),
        in_range_violations,
        congruence_violations,
        samples,
        sample_violations,
    })
}

/// `true` iff `0 < z ≤ γ` and `z² ≡ α (mod β)`.
pub fn verify_qc(inst: &QcInstance, z: &BigUint) -> bool {
    !z.is_zero() && z <= &inst.gamma && (z * z) % &inst.beta == &inst.alpha % &inst.beta
}

pub const BRUTE_LIMIT: u64 = 10_000_000;

/// Least `z ∈ [1, min(γ, cap)]` with `z² ≡ α (mod β)`.
pub fn solve_qc_brute(inst: &QcInstance, cap: &BigUint) -> Result<Option<BigUint>, QcError> {
    let range = inst.gamma.clone().min(cap.clone());
    let limit = match range.to_u64() {
        Some(v) if v <= BRUTE_LIMIT => v,
        _ => return Err(QcError::CapExceeded { range }),
    };
    if let (Some(beta), Some(alpha)) = (inst.beta.to_u64(), inst.alpha.to_u64()) {
        let beta = beta as u128;
        let alpha = alpha as u128 % beta;
        return Ok((1..=limit as u128)
            .find(|&z| z * z % beta == alpha)
            .map(|z| BigUint::from(z as u64)));
    }
    let alpha = &inst.alpha % &inst.beta;
    Ok((1..=limit)
        .map(BigUint::from)
        .find(|z| (z * z) % &inst.beta == alpha))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Structural and size facts about a reduced instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub m_prime: usize,
    pub ell_prime: usize,
    pub n: usize,
    pub distinct_primes: usize,
    pub expected_distinct_primes: usize,
    pub exponent_of_two: u32,
    pub max_prime: u64,
    pub literal_p_star: u64,
    pub p_star: u64,
    pub max_grid_prime: u64,
    pub alpha_bits: u64,
    pub beta_bits: u64,
    pub gamma_bits: u64,
    /// `(ℓ' + m')²`, the scale in the size claims.
    pub size_measure: usize,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Human-readable table of the size claims and exact checks.
    pub fn summary(&self) -> String {
        let scale = self.size_measure.max(1) as f64;
        let mut out = String::new();
        out.push_str(&format!(
            "formula: m' = {}, l' = {}, n = {}\n",
            self.m_prime, self.ell_prime, self.n
        ));
        out.push_str(&format!(
            "prime factors of beta: {} distinct (expected (n+1)^2 + m' + 2 = {}), 2^{}\n",
            self.distinct_primes, self.expected_distinct_primes, self.exponent_of_two
        ));
        out.push_str(&format!(
            "largest prime: {} ((l'+m')^2 = {})\n",
            self.max_prime, self.size_measure
        ));
        out.push_str(&format!(
            "p*: {} (rank formula gives {}), largest grid prime {}\n",
            self.p_star, self.literal_p_star, self.max_grid_prime
        ));
        for (name, bits) in [
            ("alpha", self.alpha_bits),
            ("beta", self.beta_bits),
            ("gamma", self.gamma_bits),
        ] {
            out.push_str(&format!(
                "{name}: {bits} bits, log4 / (l'+m')^2 = {:.3}\n",
                bits as f64 / 2.0 / scale
            ));
        }
        for c in &self.checks {
            out.push_str(&format!(
                "[{}] {}: {}\n",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        out
    }
}

fn theta_conditions_hold(sys: &SatLinearSystem) -> bool {
    sys.thetas.iter().enumerate().all(|(j, theta)| {
        let others = off_row_product(&sys.grid_primes, j);
        !theta.is_zero()
            && theta % &sys.m1 == numtheory::reduce_signed(&sys.coeffs[j], &sys.m1)
            && (theta % &others).is_zero()
            && !(theta % sys.grid_primes[j][1]).is_zero()
    })
}

/// Computes every audit check without failing.
pub fn audit_report(inst: &QcInstance, sys: &SatLinearSystem) -> AuditReport {
    let fact = inst.factorization();
    let n = sys.n;
    let expected = (n + 1) * (n + 1) + sys.m_prime + 2;
    let distinct = fact.factors().len();
    let two = fact.exponent_of(2);
    let odd_once = fact.factors().iter().all(|&(p, e)| p == 2 || e == 1);
    let sixteen = sys.sixteen_part();
    let max_grid = *sys.grid_primes.iter().flatten().max().expect("grid");
    let two_h = BigUint::from(2u32) * &sys.h;
    let range = sys.range_bound();

    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(AuditCheck {
            name: name.to_string(),
            passed,
            detail,
        })
    };
    check(
        "prime_count",
        distinct == expected,
        format!("{distinct} distinct primes, expected {expected}"),
    );
    check("two_exponent", two == 4, format!("2 occurs {two} times"));
    check(
        "odd_exponents",
        odd_once,
        "every odd prime occurs once".to_string(),
    );
    check(
        "factorization_value",
        fact.value() == *inst.beta(),
        "factors multiply to beta".to_string(),
    );
    check(
        "two_h_below_k",
        two_h < sys.k,
        format!("2H has {} bits, K has {} bits", two_h.bits(), sys.k.bits()),
    );
    check(
        "inverse_exists",
        (&sixteen + &sys.k).gcd(inst.beta()).is_one(),
        "gcd(2^4 p* prod p_i + K, beta) = 1".to_string(),
    );
    check(
        "moduli_coprime",
        sixteen.gcd(&sys.k).is_one(),
        "gcd(2^4 p* prod p_i, K) = 1".to_string(),
    );
    check(
        "p_star_above_grid",
        sys.p_star > max_grid,
        format!("p* = {} vs largest grid prime {max_grid}", sys.p_star),
    );
    check(
        "range_bound",
        range < sys.m1,
        format!(
            "max |sum R_k prod p_i| <= {range} < M1 ({} bits)",
            sys.m1.bits()
        ),
    );
    check(
        "theta_conditions",
        theta_conditions_hold(sys),
        "theta_j = C_j mod M1, 0 off its row, nonzero mod p_{j,1}".to_string(),
    );

    AuditReport {
        m_prime: sys.m_prime,
        ell_prime: sys.ell_prime,
        n,
        distinct_primes: distinct,
        expected_distinct_primes: expected,
        exponent_of_two: two,
        max_prime: fact.factors().last().map_or(0, |f| f.0),
        literal_p_star: sys.literal_p_star,
        p_star: sys.p_star,
        max_grid_prime: max_grid,
        alpha_bits: inst.alpha().bits(),
        beta_bits: inst.beta().bits(),
        gamma_bits: inst.gamma().bits(),
        size_measure: (sys.ell_prime + sys.m_prime).pow(2),
        checks,
    }
}

/// Audit that fails with the names of any violated checks.
pub fn audit(inst: &QcInstance, sys: &SatLinearSystem) -> Result<AuditReport, QcError> {
    let report = audit_report(inst, sys);
    let failed = report.failed();
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(QcError::AuditViolation(failed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sat::solve_brute;

    fn mini() -> Formula {
        Formula::from_lists(3, &[&[1, 2, 3], &[-1, 2, 3]]).unwrap()
    }

    fn ubig(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn mini_layout() {
        let (inst, sys) = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        assert_eq!(sys.n, 7);
        assert_eq!(sys.clause_primes, vec![2, 3, 5, 7, 11]);
        assert_eq!(sys.grid_primes.iter().flatten().count(), 64);
        assert_eq!(sys.literal_p_star, numtheory::kth_prime(80));
        assert_eq!(sys.literal_p_star, 409);
        // 409 lies inside the grid, so the least prime above it is used.
        assert!(sys.grid_primes.iter().flatten().any(|&p| p == 409));
        assert_eq!(*sys.grid_primes.iter().flatten().max().unwrap(), 461);
        assert_eq!(sys.p_star, 463);
        assert_eq!(inst.factorization().factors().len(), 68);
        assert_eq!(inst.factorization().exponent_of(2), 4);
    }

    #[test]
    fn derived_single_clause_coefficient() {
        let f = Formula::from_lists(3, &[&[1, 2, 3]]).unwrap();
        let form = derive_linear_form(&f, CoeffMode::Derived).unwrap();
        assert_eq!(form.coeffs[2], BigInt::from(-6));
        assert_eq!(form.coeffs[1], BigInt::from(-3));
        assert_eq!(form.coeffs[0], BigInt::from(2));
    }

    #[test]
    fn derived_matches_clause_sum_oracle() {
        // Σ R_k (p_0 ⋯ p_k) evaluated directly from slacks and truth values
        // must equal Σ C_j α_j − τ for the substituted signs.
        let f = Formula::from_lists(3, &[&[1, -2, 3], &[-1, 2], &[3]]).unwrap();
        let form = derive_linear_form(&f, CoeffMode::Derived).unwrap();
        let m = f.num_clauses();
        let weights: Vec<i64> = (0..=m)
            .map(|k| form.clause_primes[..=k].iter().map(|&p| p as i64).product())
            .collect();
        for mask in 0u32..(1 << (1 + 2 * m + 3)) {
            let signs: Vec<i64> = (0..=2 * m + 3)
                .map(|j| if mask >> j & 1 == 1 { 1 } else { -1 })
                .collect();
            let truth: Vec<bool> = (1..=3).map(|i| signs[2 * m + i] == -1).collect();
            let mut direct = (signs[0] + 1) * weights[0];
            for (idx, clause) in f.clauses().iter().enumerate() {
                let k = idx + 1;
                let y = ((1 - signs[2 * k - 1]) + 2 * (1 - signs[2 * k])) / 2;
                let sat = clause
                    .literals()
                    .iter()
                    .filter(|&&l| truth[l.unsigned_abs() as usize - 1] == (l > 0))
                    .count() as i64;
                direct += (y - sat + 1) * weights[k];
            }
            let linear: BigInt = form
                .coeffs
                .iter()
                .zip(&signs)
                .map(|(c, s)| c * s)
                .sum::<BigInt>()
                - &form.tau;
            assert_eq!(linear, BigInt::from(direct), "mask {mask}");
        }
    }

    #[test]
    fn derived_range_check() {
        for f in [
            mini(),
            Formula::from_lists(2, &[&[1], &[-1, 2], &[-2]]).unwrap(),
        ] {
            let form = derive_linear_form(&f, CoeffMode::Derived).unwrap();
            let total: BigInt =
                form.coeffs.iter().map(|c| c.abs()).sum::<BigInt>() + form.tau.abs();
            assert!(total < BigInt::from(form.m1.clone()));
        }
    }

    #[test]
    fn paper_mode() {
        let paper = paper_coefficients(&mini());
        assert!(paper.doubled[0].is_zero());
        assert_eq!(paper.doubled[1], BigInt::from(-3)); // c_1 = -3/2
        assert_eq!(paper.doubled[2], BigInt::from(-30)); // c_2 = -3·5
        assert_eq!(
            derive_linear_form(&mini(), CoeffMode::Paper),
            Err(QcError::PaperModeNonIntegral { index: Some(1) })
        );
        assert!(matches!(
            reduce_sat_to_qc(&mini(), CoeffMode::Paper),
            Err(QcError::PaperModeNonIntegral { .. })
        ));
    }

    #[test]
    fn empty_and_small_formulas() {
        let empty = Formula::new(0, vec![]).unwrap();
        assert_eq!(
            derive_linear_form(&empty, CoeffMode::Derived),
            Err(QcError::EmptyFormula)
        );
        let one = Formula::from_lists(1, &[&[1]]).unwrap();
        assert_eq!(
            reduce_sat_to_qc(&one, CoeffMode::Derived).unwrap_err(),
            QcError::TooFewClauses(1)
        );
        let dup = Formula::from_lists(1, &[&[1], &[1]]).unwrap();
        assert!(matches!(
            reduce_sat_to_qc(&dup, CoeffMode::Derived),
            Err(QcError::NotSimplified(_))
        ));
    }

    #[test]
    fn theta_toy_scale() {
        let grid = vec![vec![3, 5], vec![7, 11]];
        let theta = build_theta(&BigInt::from(1), &ubig(8), &grid, 0).unwrap();
        let scan = (1u64..)
            .map(|k| 77 * k)
            .find(|t| t % 8 == 1 && t % 5 != 0)
            .unwrap();
        assert_eq!(theta, ubig(scan));
        assert_eq!(scan, 1001);
    }

    #[test]
    fn theta_zero_residue_uses_period() {
        let grid = vec![vec![3, 5], vec![7, 11]];
        let theta = build_theta(&BigInt::from(16), &ubig(8), &grid, 0).unwrap();
        assert_eq!(theta, ubig(8 * 77));
        // j = 1: off-row product 15 and p_{1,1} = 11
        let theta = build_theta(&BigInt::from(-3), &ubig(8), &grid, 1).unwrap();
        let scan = (1u64..)
            .map(|k| 15 * k)
            .find(|t| t % 8 == 5 && t % 11 != 0)
            .unwrap();
        assert_eq!(theta, ubig(scan));
    }

    #[test]
    fn theta_bound() {
        let (_, sys) = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        for (j, theta) in sys.thetas.iter().enumerate() {
            let others = off_row_product(&sys.grid_primes, j);
            assert!(*theta <= BigUint::from(2u32) * &sys.m1 * others);
        }
        assert!(theta_conditions_hold(&sys));
    }

    #[test]
    fn witness_for_mini_formula() {
        let (inst, sys) = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        let model = solve_brute(&mini()).unwrap().unwrap();
        let (z, signs) = qc_witness(&sys, &model).unwrap();
        assert_eq!(signs[0], -1);
        assert!(verify_qc(&inst, &z));
        let bad = Assignment::new(vec![false, false, false]);
        assert_eq!(
            qc_witness(&sys, &bad).unwrap_err(),
            QcError::AssignmentDoesNotSatisfy
        );
    }

    #[test]
    fn slack_decoding() {
        // one satisfied literal → y = 0 → (+1, +1)
        let f = Formula::from_lists(2, &[&[1, 2], &[-1, -2]]).unwrap();
        let (_, sys) = reduce_sat_to_qc(&f, CoeffMode::Derived).unwrap();
        let a = Assignment::new(vec![true, false]);
        let signs = witness_signs(&sys, &a).unwrap();
        assert_eq!(&signs[1..5], &[1, 1, 1, 1]);
        assert_eq!(&signs[5..], &[-1, 1]);
    }

    #[test]
    fn all_positive_signs_give_h() {
        let (_, sys) = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        let x = sys.sign_sum(&vec![1; sys.n + 1]);
        assert_eq!(x, BigInt::from(sys.h.clone()));
    }

    #[test]
    fn sign_scan() {
        let (_, sys) = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        let signs = sign_vector_feasible(&sys).unwrap().unwrap();
        let x = sys.sign_sum(&signs);
        assert_eq!(
            numtheory::reduce_signed(&x, &sys.m1),
            numtheory::reduce_signed(&sys.tau, &sys.m1)
        );
        let unsat = Formula::from_lists(1, &[&[1], &[-1]]).unwrap();
        let (_, sys) = reduce_sat_to_qc(&unsat, CoeffMode::Derived).unwrap();
        assert_eq!(sign_vector_feasible(&sys).unwrap(), None);
    }

    #[test]
    fn verify_examples() {
        let inst = |a: u64, b: u64, g: u64, f: Vec<(u64, u32)>| {
            QcInstance::new(ubig(a), ubig(b), ubig(g), Factorization::new(f).unwrap()).unwrap()
        };
        assert!(verify_qc(&inst(4, 15, 2, vec![(3, 1), (5, 1)]), &ubig(2)));
        assert!(verify_qc(&inst(1, 8, 3, vec![(2, 3)]), &ubig(3)));
        assert!(!verify_qc(&inst(0, 8, 3, vec![(2, 3)]), &ubig(0)));
        assert!(!verify_qc(&inst(4, 15, 1, vec![(3, 1), (5, 1)]), &ubig(2)));
    }

    #[test]
    fn brute_examples() {
        let inst = |a: u64, b: u64, g: u64, f: Vec<(u64, u32)>| {
            QcInstance::new(ubig(a), ubig(b), ubig(g), Factorization::new(f).unwrap()).unwrap()
        };
        let cap = ubig(BRUTE_LIMIT);
        assert_eq!(
            solve_qc_brute(&inst(2, 7, 7, vec![(7, 1)]), &cap).unwrap(),
            Some(ubig(3))
        );
        assert_eq!(
            solve_qc_brute(&inst(3, 5, 5, vec![(5, 1)]), &cap).unwrap(),
            None
        );
        assert_eq!(
            solve_qc_brute(&inst(0, 4, 2, vec![(2, 2)]), &cap).unwrap(),
            Some(ubig(2))
        );
        assert!(solve_qc_brute(&inst(0, 4, 2, vec![(2, 2)]), &ubig(u64::MAX)).is_ok());
        let wide = QcInstance::new(
            ubig(1),
            ubig(1 << 40),
            ubig(1 << 40),
            Factorization::new(vec![(2, 40)]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            solve_qc_brute(&wide, &ubig(u64::MAX)),
            Err(QcError::CapExceeded { .. })
        ));
    }

    #[test]
    fn mini_audit() {
        let (inst, sys) = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        let report = audit(&inst, &sys).unwrap();
        assert_eq!(report.distinct_primes, 68);
        assert_eq!(report.expected_distinct_primes, (7 + 1) * (7 + 1) + 2 + 2);
        assert_eq!(report.exponent_of_two, 4);
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "two_h_below_k" && c.passed));
    }

    #[test]
    fn reduction_is_deterministic() {
        let a = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        let b = reduce_sat_to_qc(&mini(), CoeffMode::Derived).unwrap();
        assert_eq!(a, b);
    }
}
