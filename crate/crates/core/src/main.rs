//! `dcs-lab`: command-line front end for the distributed compressive
//! sensing library. Exit code 0 on completion, 2 on spec or input
//! errors.

use clap::{Parser, Subcommand};
use dcs::bounds::{bound_table, MeasurementAllocation};
use dcs::ensemble::{self, JsmKind, StochasticModel, SupportSpec};
use dcs::experiments::{run_sweep, Algorithm, ExperimentSpec};
use dcs::recovery::{
    crossval::crossval_recover,
    jsm1::{jsm1_gamma_recover, jsm1_two_stage_recover, two_stage_measure, TwoStageSetup},
    jsm2::{dcs_somp, tp_recover},
    jsm3::{acie, tecc, InnerSolver, SupportMethod},
    measure_unit, separate_recover, Estimate, SeparateMethod,
};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dcs-lab", about = "Distributed compressive sensing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep described by a key = value spec file and
    /// print the resulting CSV.
    Sweep {
        /// Path to the sweep spec (plain text, `key = value` lines)
        #[arg(long)]
        spec: String,
    },
    /// Evaluate the measurement-bound conditions for every sensor
    /// subset of a serialized ensemble.
    Bounds {
        /// Path to a serialized ensemble
        #[arg(long)]
        ensemble: String,
        /// Per-sensor measurement counts, comma separated
        #[arg(long)]
        alloc: String,
    },
    /// Measure a serialized ensemble and run one recovery algorithm.
    Recover {
        #[arg(long)]
        model: String,
        /// crossval | gamma-l1 | two-stage | tp | dcs-somp | tecc |
        /// acie | separate-l1 | separate-omp | separate-l0
        #[arg(long)]
        algo: String,
        /// Path to a serialized ensemble
        #[arg(long)]
        ensemble: String,
        /// Per-sensor measurement counts, comma separated
        #[arg(long)]
        alloc: String,
        /// Seed for the measurement matrices
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sparsity passed to greedy/oracle solvers (default: read off
        /// the ensemble's supports)
        #[arg(long)]
        k: Option<usize>,
        /// Common-component weight for gamma-l1
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Column budget for crossval
        #[arg(long, default_value_t = 10)]
        bound: usize,
        /// Iterations for acie
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Shared measurement rows for two-stage
        #[arg(long, default_value_t = 0)]
        m_common: usize,
    },
    /// Draw a random ensemble and print its serialization.
    Generate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        j: usize,
        /// Exact common sparsity
        #[arg(long, default_value_t = 0)]
        kc: usize,
        /// Exact per-sensor innovation sparsity
        #[arg(long, default_value_t = 0)]
        ki: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Sweep { spec } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| format!("cannot read `{spec}`: {e}"))?;
            let spec = ExperimentSpec::from_text(&text).map_err(|e| e.to_string())?;
            let report = run_sweep(&spec).map_err(|e| e.to_string())?;
            print!("{}", report.to_csv());
            for err in &report.errors {
                eprintln!("trial error: {err}");
            }
            Ok(())
        }
        Command::Bounds { ensemble, alloc } => {
            let x = load_ensemble(&ensemble)?;
            let alloc = parse_alloc(&alloc, x.sensor_count())?;
            let (p, theta) = x.generating_representation();
            let rows = bound_table(&p, &theta, &alloc).map_err(|e| e.to_string())?;
            println!("gamma_mask,sum_m,k_cond,thm3,thm4,thm5");
            for row in rows {
                println!(
                    "{},{},{},{},{},{}",
                    row.gamma_mask, row.sum_m, row.k_cond, row.thm3, row.thm4,
                    row.thm5_violation
                );
            }
            Ok(())
        }
        Command::Recover {
            model,
            algo,
            ensemble,
            alloc,
            seed,
            k,
            gamma,
            bound,
            iters,
            m_common,
        } => {
            let model = JsmKind::parse(&model).map_err(|e| e.to_string())?;
            let algo = Algorithm::parse(&algo).map_err(|e| e.to_string())?;
            let x = load_ensemble(&ensemble)?;
            let j = x.sensor_count();
            let alloc = parse_alloc(&alloc, j)?;
            // default sparsity: the largest actual per-signal support
            let k = k.unwrap_or_else(|| {
                (0..j)
                    .map(|s| {
                        let mut idx = x.common_support();
                        idx.extend(x.innovation_support(s));
                        idx.sort_unstable();
                        idx.dedup();
                        idx.len()
                    })
                    .max()
                    .unwrap_or(0)
            });
            let estimate: Option<Estimate> = match algo {
                Algorithm::TwoStage => {
                    if j != 2 {
                        return Err("two-stage decoding needs exactly two sensors".into());
                    }
                    let shared = m_common.min(alloc.m(0)).min(alloc.m(1));
                    let setup = TwoStageSetup {
                        m_common: shared,
                        m_unique: [alloc.m(0) - shared, alloc.m(1) - shared],
                    };
                    let y = two_stage_measure(&x, setup, seed).map_err(|e| e.to_string())?;
                    Some(jsm1_two_stage_recover(&y, setup).map_err(|e| e.to_string())?)
                }
                _ => {
                    let y = measure_unit(&x, &alloc, seed).map_err(|e| e.to_string())?;
                    match algo {
                        Algorithm::Crossval => {
                            crossval_recover(&y, model, bound).map_err(|e| e.to_string())?
                        }
                        Algorithm::GammaL1 => {
                            let mut gammas = vec![1.0; j + 1];
                            gammas[0] = gamma;
                            Some(jsm1_gamma_recover(&y, &gammas).map_err(|e| e.to_string())?)
                        }
                        Algorithm::Tp => tp_recover(&y, k).map_err(|e| e.to_string())?.estimate,
                        Algorithm::DcsSomp => Some(dcs_somp(&y, 1e-6).map_err(|e| e.to_string())?),
                        Algorithm::Tecc => Some(
                            tecc(&y, &vec![k; j], InnerSolver::Omp).map_err(|e| e.to_string())?,
                        ),
                        Algorithm::Acie => {
                            let method = if model == JsmKind::Jsm3CommonSupport {
                                SupportMethod::Somp
                            } else {
                                SupportMethod::Omp
                            };
                            Some(acie(&y, k, iters, method).map_err(|e| e.to_string())?)
                        }
                        Algorithm::SeparateL1 => Some(
                            separate_recover(&y, SeparateMethod::L1).map_err(|e| e.to_string())?,
                        ),
                        Algorithm::SeparateOmp => Some(
                            separate_recover(&y, SeparateMethod::Omp { k })
                                .map_err(|e| e.to_string())?,
                        ),
                        Algorithm::SeparateL0 => Some(
                            separate_recover(&y, SeparateMethod::L0 { k_max: k })
                                .map_err(|e| e.to_string())?,
                        ),
                        Algorithm::TwoStage => unreachable!("handled above"),
                    }
                }
            };
            println!("model,algo,N,J,M,success,max_rel_err");
            let m_desc = (0..j)
                .map(|s| alloc.m(s).to_string())
                .collect::<Vec<_>>()
                .join("+");
            match estimate {
                Some(est) => {
                    let res = est.against(&x);
                    let max_err = res
                        .per_signal_rel_error
                        .iter()
                        .cloned()
                        .fold(0.0f64, f64::max);
                    println!(
                        "{},{},{},{},{},{},{:.3e}",
                        model.as_str(),
                        algo.as_str(),
                        x.signal_len(),
                        j,
                        m_desc,
                        res.success,
                        max_err
                    );
                }
                None => {
                    println!(
                        "{},{},{},{},{},false,NA",
                        model.as_str(),
                        algo.as_str(),
                        x.signal_len(),
                        j,
                        m_desc
                    );
                }
            }
            Ok(())
        }
        Command::Generate {
            model,
            n,
            j,
            kc,
            ki,
            seed,
        } => {
            let model = JsmKind::parse(&model).map_err(|e| e.to_string())?;
            let stoch = StochasticModel {
                support: SupportSpec::fixed_symmetric(kc, ki, j),
                coefficient_std: 1.0,
                seed,
            };
            let x = ensemble::generate(model, &stoch, n, j).map_err(|e| e.to_string())?;
            print!("{}", ensemble::to_text(&x));
            Ok(())
        }
    }
}

fn load_ensemble(path: &str) -> Result<ensemble::SignalEnsemble, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read `{path}`: {e}"))?;
    ensemble::from_text(&text).map_err(|e| e.to_string())
}

fn parse_alloc(text: &str, j: usize) -> Result<MeasurementAllocation, String> {
    let m: Vec<usize> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("invalid measurement count `{p}`"))
        })
        .collect::<Result<_, _>>()?;
    if m.len() != j {
        return Err(format!(
            "allocation lists {} sensors but the ensemble has {j}",
            m.len()
        ));
    }
    MeasurementAllocation::new(m).map_err(|e| e.to_string())
}
