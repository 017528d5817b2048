//! Quadratic Congruences to the Multiple-Residue problem.
//!
//! An MRD instance asks for a positive `z ≤ ζ` that, for each pairwise
//! coprime modulus `q_i`, hits one of the allowed residues in `roots_i`.
//! The reduction splits β into its prime powers and stores the square roots
//! of α modulo each of them.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numtheory::{self, CrtBasis, NumError};
use crate::qc::QcInstance;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MrdError {
    #[error("prime {prime} occurs with exponent {exponent}; only odd primes once and 2 up to 2^16 are supported")]
    UnsupportedExponent { prime: u64, exponent: u32 },
    #[error("choice space of {0} vectors exceeds 2^24")]
    SearchSpaceTooLarge(BigUint),
    #[error("scan range {0} exceeds the cap of 10^7")]
    CapExceeded(BigUint),
    #[error("z mod q_{index} = {residue} is not an allowed residue")]
    ResidueNotCovered { index: usize, residue: BigUint },
    #[error("z must be positive")]
    NonPositive,
    #[error("invalid MRD instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidueMode {
    /// One `{x, q - x}` pair per modulus.
    Pair,
    /// The complete root set per modulus.
    Full,
}

impl std::str::FromStr for ResidueMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pair" => Ok(Self::Pair),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown residue mode {other:?}")),
        }
    }
}

impl ResidueMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pair => "pair",
            Self::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equation {
    pub modulus: BigUint,
    /// Allowed residues, ascending and distinct.
    pub roots: Vec<BigUint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MrdInstance {
    equations: Vec<Equation>,
    zeta: BigUint,
    mode: ResidueMode,
}

impl MrdInstance {
    pub fn new(
        equations: Vec<Equation>,
        zeta: BigUint,
        mode: ResidueMode,
    ) -> Result<Self, MrdError> {
        if equations.is_empty() {
            return Err(MrdError::InvalidInstance("no equations".into()));
        }
        if zeta.is_zero() {
            return Err(MrdError::InvalidInstance("zeta must be positive".into()));
        }
        let mut equations = equations;
        for (i, eq) in equations.iter_mut().enumerate() {
            if eq.modulus < BigUint::from(2u8) {
                return Err(MrdError::InvalidInstance(format!("q_{i} is below 2")));
            }
            eq.roots.sort();
            eq.roots.dedup();
            if eq.roots.is_empty() {
                return Err(MrdError::InvalidInstance(format!("q_{i} has no residues")));
            }
            if eq.roots.last().is_some_and(|r| *r >= eq.modulus) {
                return Err(MrdError::InvalidInstance(format!(
                    "residue of q_{i} is not below the modulus"
                )));
            }
            if mode == ResidueMode::Pair && eq.roots.len() > 2 {
                return Err(MrdError::InvalidInstance(format!(
                    "pair mode allows two residues, q_{i} has {}",
                    eq.roots.len()
                )));
            }
        }
        for i in 0..equations.len() {
            for j in i + 1..equations.len() {
                if !equations[i].modulus.gcd(&equations[j].modulus).is_one() {
                    return Err(NumError::ModuliNotCoprime(
                        equations[i].modulus.clone(),
                        equations[j].modulus.clone(),
                    )
                    .into());
                }
            }
        }
        Ok(Self {
            equations,
            zeta,
            mode,
        })
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn zeta(&self) -> &BigUint {
        &self.zeta
    }

    pub fn mode(&self) -> ResidueMode {
        self.mode
    }

    pub fn modulus_product(&self) -> BigUint {
        self.equations.iter().map(|e| &e.modulus).product()
    }

    /// Largest residue-set size.
    pub fn max_roots(&self) -> usize {
        self.equations
            .iter()
            .map(|e| e.roots.len())
            .max()
            .unwrap_or(0)
    }

    fn choice_count(&self) -> BigUint {
        self.equations
            .iter()
            .map(|e| BigUint::from(e.roots.len()))
            .product()
    }
}

/// Outcome of the QC → MRD reduction. `NoInstance` stands for a canonical
/// unsatisfiable instance (some residue has no square root).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MrdReduction {
    Instance(MrdInstance),
    NoInstance,
}

impl MrdReduction {
    pub fn instance(&self) -> Option<&MrdInstance> {
        match self {
            Self::Instance(i) => Some(i),
            Self::NoInstance => None,
        }
    }

    pub fn solve(&self) -> Result<Option<MrdSolution>, MrdError> {
        self.instance().map_or(Ok(None), solve_mrd)
    }

    pub fn solve_scan(&self) -> Result<Option<BigUint>, MrdError> {
        self.instance().map_or(Ok(None), solve_mrd_scan)
    }
}

/// Splits β into prime powers and stores the square roots of α modulo each.
pub fn reduce_qc_to_mrd(inst: &QcInstance, mode: ResidueMode) -> Result<MrdReduction, MrdError> {
    let mut equations = Vec::new();
    for &(p, e) in inst.factorization().factors() {
        let roots = numtheory::sqrt_mod_prime_power(inst.alpha(), p, e).ok_or(
            MrdError::UnsupportedExponent {
                prime: p,
                exponent: e,
            },
        )?;
        let q = BigUint::from(p).pow(e);
        let Some(smallest) = roots.first().cloned() else {
            return Ok(MrdReduction::NoInstance);
        };
        let roots: Vec<BigUint> = match mode {
            ResidueMode::Full => roots.into_iter().collect(),
            ResidueMode::Pair => {
                let other = (&q - &smallest) % &q;
                let mut pair = vec![smallest, other];
                pair.sort();
                pair.dedup();
                pair
            }
        };
        equations.push(Equation { modulus: q, roots });
    }
    Ok(MrdReduction::Instance(MrdInstance::new(
        equations,
        inst.gamma().clone(),
        mode,
    )?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrdSolution {
    pub z: BigUint,
    /// The residue met for each equation.
    pub choice: Vec<BigUint>,
}

pub const CHOICE_LIMIT: u64 = 1 << 24;
pub const SCAN_LIMIT: u64 = 10_000_000;

/// Minimal positive solution by enumerating every choice vector and
/// combining it with the CRT; a combined value of 0 is lifted to `Π q_i`.
pub fn solve_mrd(inst: &MrdInstance) -> Result<Option<MrdSolution>, MrdError> {
    let count = inst.choice_count();
    if count > BigUint::from(CHOICE_LIMIT) {
        return Err(MrdError::SearchSpaceTooLarge(count));
    }
    let moduli: Vec<BigUint> = inst.equations.iter().map(|e| e.modulus.clone()).collect();
    let basis = CrtBasis::new(&moduli)?;
    let product = basis.product().clone();

    let mut best: Option<(BigUint, Vec<usize>)> = None;
    let mut idx = vec![0usize; inst.equations.len()];
    loop {
        let residues: Vec<&BigUint> = idx
            .iter()
            .zip(&inst.equations)
            .map(|(&k, e)| &e.roots[k])
            .collect();
        let mut z = basis.combine(&residues);
        if z.is_zero() {
            z = product.clone();
        }
        match &best {
            Some((b, _)) if *b <= z => {
                debug_assert!(*b != z, "distinct choices must give distinct values");
            }
            _ => best = Some((z, idx.clone())),
        }
        // odometer, last equation fastest
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                let best = best.filter(|(z, _)| *z <= inst.zeta);
                return Ok(best.map(|(z, idx)| MrdSolution {
                    z,
                    choice: idx
                        .iter()
                        .zip(&inst.equations)
                        .map(|(&k, e)| e.roots[k].clone())
                        .collect(),
                }));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < inst.equations[pos].roots.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Least `z ∈ [1, min(ζ, Π q_i)]` meeting every equation, by linear scan.
pub fn solve_mrd_scan(inst: &MrdInstance) -> Result<Option<BigUint>, MrdError> {
    let range = inst.zeta.clone().min(inst.modulus_product());
    let limit = match range.to_u64() {
        Some(v) if v <= SCAN_LIMIT => v,
        _ => return Err(MrdError::CapExceeded(range)),
    };
    let small: Option<Vec<(u64, Vec<u64>)>> = inst
        .equations
        .iter()
        .map(|e| {
            Some((
                e.modulus.to_u64()?,
                e.roots
                    .iter()
                    .map(|r| r.to_u64())
                    .collect::<Option<Vec<_>>>()?,
            ))
        })
        .collect();
    if let Some(mut eqs) = small {
        eqs.sort_by_key(|(q, _)| std::cmp::Reverse(*q));
        return Ok((1..=limit)
            .find(|z| eqs.iter().all(|(q, roots)| roots.contains(&(z % q))))
            .map(BigUint::from));
    }
    Ok((1..=limit).map(BigUint::from).find(|z| covers(inst, z)))
}

fn covers(inst: &MrdInstance, z: &BigUint) -> bool {
    inst.equations
        .iter()
        .all(|e| e.roots.binary_search(&(z % &e.modulus)).is_ok())
}

/// Reads off the residue `z` meets for each equation.
pub fn mrd_witness_from_z(inst: &MrdInstance, z: &BigUint) -> Result<Vec<BigUint>, MrdError> {
    if z.is_zero() {
        return Err(MrdError::NonPositive);
    }
    inst.equations
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let residue = z % &e.modulus;
            if e.roots.binary_search(&residue).is_ok() {
                Ok(residue)
            } else {
                Err(MrdError::ResidueNotCovered { index, residue })
            }
        })
        .collect()
}

/// `true` iff `1 ≤ z ≤ ζ` and `z mod q_i ∈ roots_i` for every `i`.
pub fn verify_mrd(inst: &MrdInstance, z: &BigUint) -> bool {
    !z.is_zero() && *z <= inst.zeta && covers(inst, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::Factorization;

    fn ubig(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn eq(q: u64, roots: &[u64]) -> Equation {
        Equation {
            modulus: ubig(q),
            roots: roots.iter().map(|&r| ubig(r)).collect(),
        }
    }

    fn three_five(zeta: u64) -> MrdInstance {
        MrdInstance::new(
            vec![eq(3, &[1, 2]), eq(5, &[2, 3])],
            ubig(zeta),
            ResidueMode::Pair,
        )
        .unwrap()
    }

    fn qc(a: u64, b: u64, g: u64, f: Vec<(u64, u32)>) -> QcInstance {
        QcInstance::new(ubig(a), ubig(b), ubig(g), Factorization::new(f).unwrap()).unwrap()
    }

    #[test]
    fn reduction_examples() {
        let r = reduce_qc_to_mrd(&qc(4, 15, 4, vec![(3, 1), (5, 1)]), ResidueMode::Pair).unwrap();
        assert_eq!(
            r,
            MrdReduction::Instance(
                MrdInstance::new(
                    vec![eq(3, &[1, 2]), eq(5, &[2, 3])],
                    ubig(4),
                    ResidueMode::Pair
                )
                .unwrap()
            )
        );
        let r = reduce_qc_to_mrd(&qc(2, 5, 5, vec![(5, 1)]), ResidueMode::Full).unwrap();
        assert_eq!(r, MrdReduction::NoInstance);
        let r = reduce_qc_to_mrd(&qc(0, 3, 3, vec![(3, 1)]), ResidueMode::Pair).unwrap();
        assert_eq!(r.instance().unwrap().equations()[0].roots, vec![ubig(0)]);
        let r = reduce_qc_to_mrd(&qc(0, 9, 3, vec![(3, 2)]), ResidueMode::Pair);
        assert_eq!(
            r,
            Err(MrdError::UnsupportedExponent {
                prime: 3,
                exponent: 2
            })
        );
    }

    #[test]
    fn two_power_modes() {
        let inst = qc(1, 48, 48, vec![(2, 4), (3, 1)]);
        let full = reduce_qc_to_mrd(&inst, ResidueMode::Full).unwrap();
        assert_eq!(
            full.instance().unwrap().equations()[0].roots,
            [1u64, 7, 9, 15].map(ubig).to_vec()
        );
        let pair = reduce_qc_to_mrd(&inst, ResidueMode::Pair).unwrap();
        assert_eq!(
            pair.instance().unwrap().equations()[0].roots,
            vec![ubig(1), ubig(15)]
        );
    }

    #[test]
    fn solve_examples() {
        let sol = solve_mrd(&three_five(10)).unwrap().unwrap();
        assert_eq!(sol.z, ubig(2));
        assert_eq!(sol.choice, vec![ubig(2), ubig(2)]);
        let single = MrdInstance::new(vec![eq(5, &[0])], ubig(10), ResidueMode::Pair).unwrap();
        assert_eq!(solve_mrd(&single).unwrap().unwrap().z, ubig(5));
        assert_eq!(solve_mrd(&three_five(1)).unwrap(), None);
    }

    #[test]
    fn scan_examples() {
        assert_eq!(solve_mrd_scan(&three_five(10)).unwrap(), Some(ubig(2)));
        assert_eq!(MrdReduction::NoInstance.solve_scan().unwrap(), None);
        assert_eq!(solve_mrd_scan(&three_five(1)).unwrap(), None);
    }

    #[test]
    fn choice_values() {
        // every choice vector of the (3,5) instance combines as listed
        let basis = CrtBasis::new(&[ubig(3), ubig(5)]).unwrap();
        let expect = [((1, 2), 7), ((1, 3), 13), ((2, 2), 2), ((2, 3), 8)];
        for ((a, b), z) in expect {
            assert_eq!(basis.combine(&[&ubig(a), &ubig(b)]), ubig(z));
        }
    }

    #[test]
    fn witness_examples() {
        let inst = three_five(10);
        assert_eq!(
            mrd_witness_from_z(&inst, &ubig(8)).unwrap(),
            vec![ubig(2), ubig(3)]
        );
        let single = MrdInstance::new(vec![eq(5, &[0])], ubig(10), ResidueMode::Pair).unwrap();
        assert_eq!(
            mrd_witness_from_z(&single, &ubig(5)).unwrap(),
            vec![ubig(0)]
        );
        assert_eq!(
            mrd_witness_from_z(&inst, &ubig(4)),
            Err(MrdError::ResidueNotCovered {
                index: 1,
                residue: ubig(4)
            })
        );
        assert_eq!(
            mrd_witness_from_z(&inst, &ubig(0)),
            Err(MrdError::NonPositive)
        );
    }

    #[test]
    fn verify_examples() {
        let inst = three_five(10);
        assert!(verify_mrd(&inst, &ubig(2)));
        assert!(verify_mrd(&inst, &ubig(7)));
        assert!(!verify_mrd(&inst, &ubig(0)));
        assert!(!verify_mrd(&inst, &ubig(13)));
        assert!(!verify_mrd(&inst, &ubig(4)));
    }

    #[test]
    fn instance_validation() {
        assert!(matches!(
            MrdInstance::new(vec![eq(4, &[1]), eq(6, &[1])], ubig(5), ResidueMode::Full),
            Err(MrdError::Num(NumError::ModuliNotCoprime(_, _)))
        ));
        assert!(MrdInstance::new(vec![eq(7, &[1, 2, 3])], ubig(5), ResidueMode::Pair).is_err());
        assert!(MrdInstance::new(vec![eq(7, &[7])], ubig(5), ResidueMode::Full).is_err());
        assert!(MrdInstance::new(vec![eq(7, &[])], ubig(5), ResidueMode::Full).is_err());
    }

    #[test]
    fn search_space_limit() {
        let eqs: Vec<Equation> = crate::numtheory::nth_primes(26)[1..]
            .iter()
            .map(|&p| eq(p, &[1, 2]))
            .collect();
        let inst = MrdInstance::new(eqs, ubig(10), ResidueMode::Pair).unwrap();
        assert!(matches!(
            solve_mrd(&inst),
            Err(MrdError::SearchSpaceTooLarge(_))
        ));
    }
}
