use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;

use qc2stage::formats::{self, Witness};
use qc2stage::ilp::{self, IlpError, TwoStageIlp};
use qc2stage::mrd::{self, MrdError, MrdReduction, ResidueMode};
use qc2stage::pipeline::{self, PipelineOptions};
use qc2stage::qc::{self, CoeffMode};
use qc2stage::sat;

#[derive(Parser)]
#[command(
    name = "qc2stage",
    version,
    about = "Reduce 3-SAT through Quadratic Congruences and \
Multiple-Residue to 2-stage stochastic ILPs, with witnesses and verifiers.\n\n\
Exit codes: 0 satisfiable/feasible, 1 unsatisfiable/infeasible/no instance, 2 usage or data error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simplify a DIMACS formula and reduce it to a QC instance
    SatQc {
        input: PathBuf,
        #[command(flatten)]
        coeff: CoeffArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Reduce a QC instance to an MRD instance
    QcMrd {
        input: PathBuf,
        #[command(flatten)]
        residue: ResidueArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Reduce an MRD instance to a 2-stage ILP (.2ssilp)
    MrdIlp {
        input: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Apply the binary coefficient encoding to a .2ssilp instance
    Encode {
        input: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Solve an instance with the brute-force oracle for its kind
    Solve {
        kind: Kind,
        input: PathBuf,
        /// Upper limit on the QC scan range
        #[arg(long, default_value_t = 10_000_000)]
        brute_cap: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Check a witness file against an instance
    Verify {
        kind: Kind,
        input: PathBuf,
        #[arg(long)]
        witness: PathBuf,
    },
    /// Run the whole chain on a DIMACS formula and propagate a model
    Pipeline {
        input: PathBuf,
        #[command(flatten)]
        coeff: CoeffArg,
        #[command(flatten)]
        residue: ResidueArg,
        /// Also build the binary-encoded ILP
        #[arg(long)]
        encode: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the output files
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Print the structural audit of a formula's QC instance
    Audit {
        input: PathBuf,
        #[command(flatten)]
        coeff: CoeffArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Write seeded random 3-CNF formulas
    GenCorpus {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        vars: usize,
        #[arg(long, default_value_t = 4)]
        clauses: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sat,
    Qc,
    Mrd,
    Ilp,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoeffChoice {
    Derived,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResidueChoice {
    Pair,
    Full,
}

#[derive(Args)]
struct CoeffArg {
    #[arg(long, value_enum, default_value = "derived")]
    coeff_mode: CoeffChoice,
}

impl CoeffArg {
    fn mode(&self) -> CoeffMode {
        match self.coeff_mode {
            CoeffChoice::Derived => CoeffMode::Derived,
            CoeffChoice::Paper => CoeffMode::Paper,
        }
    }
}

#[derive(Args)]
struct ResidueArg {
    #[arg(long, value_enum, default_value = "full")]
    residue_mode: ResidueChoice,
}

impl ResidueArg {
    fn mode(&self) -> ResidueMode {
        match self.residue_mode {
            ResidueChoice::Pair => ResidueMode::Pair,
            ResidueChoice::Full => ResidueMode::Full,
        }
    }
}

#[derive(Args)]
struct OutArg {
    /// Output file (stdout when omitted)
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

impl OutArg {
    fn emit(&self, text: &str) -> Result<(), String> {
        match &self.out {
            Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Outcome of a command that answers a yes/no question.
enum Answer {
    Yes,
    No,
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Answer::Yes) => ExitCode::SUCCESS,
        Ok(Answer::No) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<Answer, String> {
    match cmd {
        Command::SatQc { input, coeff, out } => {
            let f = sat::parse_dimacs(&read(&input)?).map_err(err)?;
            let simplified = sat::simplify(&f).formula;
            let (inst, _) = qc::reduce_sat_to_qc(&simplified, coeff.mode()).map_err(err)?;
            out.emit(&formats::qc_to_json(&inst))?;
            Ok(Answer::Yes)
        }
        Command::QcMrd {
            input,
            residue,
            out,
        } => {
            let inst = formats::qc_from_json(&read(&input)?).map_err(err)?;
            let red = mrd::reduce_qc_to_mrd(&inst, residue.mode()).map_err(err)?;
            out.emit(&formats::mrd_to_json(&red))?;
            Ok(match red {
                MrdReduction::Instance(_) => Answer::Yes,
                MrdReduction::NoInstance => {
                    eprintln!("alpha is a non-residue modulo some prime power: no instance");
                    Answer::No
                }
            })
        }
        Command::MrdIlp { input, out } => {
            let red = formats::mrd_from_json(&read(&input)?).map_err(err)?;
            match ilp::reduce_mrd_to_ilp(&red) {
                Ok(inst) => {
                    out.emit(&inst.to_text())?;
                    Ok(Answer::Yes)
                }
                Err(IlpError::NoInstanceInput) => {
                    eprintln!("input is the no-instance marker; nothing to build");
                    Ok(Answer::No)
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Command::Encode { input, out } => {
            let inst = TwoStageIlp::from_text(&read(&input)?).map_err(err)?;
            let enc = ilp::encode_binary(&inst).map_err(err)?;
            eprintln!(
                "D = {}, r' = {}, t' = {}, max |entry| = {}",
                enc.digits,
                enc.ilp.r(),
                enc.ilp.t(),
                enc.ilp.delta()
            );
            out.emit(&enc.ilp.to_text())?;
            Ok(Answer::Yes)
        }
        Command::Solve {
            kind,
            input,
            brute_cap,
            out,
        } => solve(kind, &read(&input)?, brute_cap, &out),
        Command::Verify {
            kind,
            input,
            witness,
        } => {
            let w = formats::witness_from_json(&read(&witness)?).map_err(err)?;
            let ok = verify(kind, &read(&input)?, &w)?;
            println!("{}", if ok { "valid" } else { "invalid" });
            Ok(if ok { Answer::Yes } else { Answer::No })
        }
        Command::Pipeline {
            input,
            coeff,
            residue,
            encode,
            seed,
            out,
        } => {
            let opts = PipelineOptions {
                coeff_mode: coeff.mode(),
                residue_mode: residue.mode(),
                encode,
                seed,
            };
            let res = pipeline::run_pipeline(&read(&input)?, &opts).map_err(err)?;
            println!(
                "formula: {} variables, {} clauses after simplification",
                res.formula.num_vars(),
                res.formula.num_clauses()
            );
            println!(
                "satisfiable: {}",
                if res.sat_answer.is_some() {
                    "yes"
                } else {
                    "no"
                }
            );
            println!(
                "qc: beta has {} bits, {} prime factors",
                res.qc.beta().bits(),
                res.qc.factorization().factors().len()
            );
            match (&res.mrd, &res.ilp) {
                (MrdReduction::Instance(m), Some(i)) => println!(
                    "mrd: {} equations; ilp: n = {}, r = {}, s = {}, t = {}, delta = {}",
                    m.equations().len(),
                    i.n(),
                    i.r(),
                    i.s(),
                    i.t(),
                    i.delta()
                ),
                _ => println!("mrd: no instance"),
            }
            for (layer, ok) in &res.layer_checks {
                println!("check {layer}: {}", if *ok { "pass" } else { "FAIL" });
            }
            if let Some(dir) = out {
                let written = pipeline::write_outputs(&res, &dir).map_err(err)?;
                println!("wrote {} files to {}", written.len(), dir.display());
            }
            Ok(if res.sat_answer.is_some() && res.all_checks_pass() {
                Answer::Yes
            } else {
                Answer::No
            })
        }
        Command::Audit { input, coeff, out } => {
            let f = sat::parse_dimacs(&read(&input)?).map_err(err)?;
            let simplified = sat::simplify(&f).formula;
            let (inst, sys) = qc::reduce_sat_to_qc(&simplified, coeff.mode()).map_err(err)?;
            let report = qc::audit_report(&inst, &sys);
            eprint!("{}", report.summary());
            if out.out.is_some() {
                out.emit(&formats::audit_to_json(&report, None, &Default::default()))?;
            }
            Ok(if report.passed() {
                Answer::Yes
            } else {
                Answer::No
            })
        }
        Command::GenCorpus {
            count,
            vars,
            clauses,
            seed,
            out,
        } => {
            let corpus = pipeline::generate_corpus(count, vars, clauses, seed).map_err(err)?;
            fs::create_dir_all(&out).map_err(err)?;
            for (i, f) in corpus.iter().enumerate() {
                let path = out.join(format!("formula_{i:03}.cnf"));
                fs::write(&path, f.to_dimacs()).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            println!("wrote {} formulas to {}", corpus.len(), out.display());
            Ok(Answer::Yes)
        }
    }
}

fn solve(kind: Kind, text: &str, brute_cap: u64, out: &OutArg) -> Result<Answer, String> {
    let mut w = Witness::default();
    let found = match kind {
        Kind::Sat => {
            let f = sat::parse_dimacs(text).map_err(err)?;
            w.assignment = sat::solve_brute(&f).map_err(err)?;
            w.assignment.is_some()
        }
        Kind::Qc => {
            let inst = formats::qc_from_json(text).map_err(err)?;
            w.z = qc::solve_qc_brute(&inst, &BigUint::from(brute_cap)).map_err(err)?;
            w.z.is_some()
        }
        Kind::Mrd => {
            let red = formats::mrd_from_json(text).map_err(err)?;
            match red.solve() {
                Ok(sol) => {
                    if let Some(sol) = sol {
                        w.z = Some(sol.z);
                        w.choice = Some(sol.choice);
                    }
                }
                Err(MrdError::SearchSpaceTooLarge(_)) => {
                    if let (Some(z), Some(inst)) = (red.solve_scan().map_err(err)?, red.instance())
                    {
                        w.choice = Some(mrd::mrd_witness_from_z(inst, &z).map_err(err)?);
                        w.z = Some(z);
                    }
                }
                Err(e) => return Err(e.to_string()),
            }
            w.z.is_some()
        }
        Kind::Ilp => {
            let inst = TwoStageIlp::from_text(text).map_err(err)?;
            w.solution = match ilp::solve_reduced(&inst) {
                Err(IlpError::NotReductionShaped(_)) => ilp::solve_exhaustive(&inst),
                other => other,
            }
            .map_err(err)?;
            w.solution.is_some()
        }
    };
    out.emit(&formats::witness_to_json(&w))?;
    if !found {
        eprintln!("no solution");
    }
    Ok(if found { Answer::Yes } else { Answer::No })
}

fn missing(field: &str) -> String {
    format!("witness has no {field}")
}

fn verify(kind: Kind, text: &str, w: &Witness) -> Result<bool, String> {
    match kind {
        Kind::Sat => {
            let f = sat::parse_dimacs(text).map_err(err)?;
            let a = w.assignment.as_ref().ok_or_else(|| missing("assignment"))?;
            if a.len() != f.num_vars() {
                return Err(format!(
                    "assignment has {} values, formula has {} variables",
                    a.len(),
                    f.num_vars()
                ));
            }
            Ok(sat::eval(&f, a).0)
        }
        Kind::Qc => {
            let inst = formats::qc_from_json(text).map_err(err)?;
            let z = w.z.as_ref().ok_or_else(|| missing("z"))?;
            Ok(qc::verify_qc(&inst, z))
        }
        Kind::Mrd => {
            let red = formats::mrd_from_json(text).map_err(err)?;
            let z = w.z.as_ref().ok_or_else(|| missing("z"))?;
            let Some(inst) = red.instance() else {
                return Ok(false);
            };
            let choice_ok = match &w.choice {
                Some(c) => mrd::mrd_witness_from_z(inst, z).is_ok_and(|exp| exp == *c),
                None => true,
            };
            Ok(choice_ok && mrd::verify_mrd(inst, z))
        }
        Kind::Ilp => {
            let inst = TwoStageIlp::from_text(text).map_err(err)?;
            let sol = [&w.solution, &w.encoded_solution]
                .into_iter()
                .flatten()
                .find(|s| s.0.len() == inst.num_vars())
                .ok_or_else(|| missing("solution of matching length"))?;
            ilp::verify_solution(&inst, sol).map_err(err)
        }
    }
}
