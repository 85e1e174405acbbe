//! Command-line interface.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::data::{
    load_sparse_text, normalize_and_scale, synth, Dataset, LoadOptions, SyntheticSpec,
    SynthOutput,
};
use crate::fmmc;
use crate::graph::{gen_named, NamedTopology};
use crate::harness::{
    self, csvio, DataSource, ExperimentSpec, RmseOptions, SchemeKind, SpeedupOptions,
    TopologyKind, WeightsKind,
};
use crate::loss::Loss;
use crate::spectral;

#[derive(Parser)]
#[command(
    name = "dsgd",
    about = "Simulated-network laboratory for data-dependent distributed SGD",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Sparse text file ("<label> <idx>:<val> ...", 1-based indices).
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic spec, e.g. "gaussian:d=100,n=10000,seed=7".
    #[arg(long)]
    synth: Option<String>,
}

impl DataArgs {
    fn load_finite(&self) -> anyhow::Result<Dataset> {
        match (&self.data, &self.synth) {
            (Some(path), None) => {
                let raw = load_sparse_text(path, &LoadOptions::default())
                    .with_context(|| format!("loading {}", path.display()))?;
                Ok(normalize_and_scale(&raw))
            }
            (None, Some(spec)) => {
                let spec: SyntheticSpec = spec.parse()?;
                match synth(&spec)? {
                    SynthOutput::Finite(d) => Ok(d),
                    SynthOutput::Stream(_) => bail!("this command needs a finite dataset"),
                }
            }
            _ => bail!("exactly one of --data or --synth is required"),
        }
    }

}

#[derive(Subcommand)]
enum Command {
    /// Estimate the spectral norm of the sample covariance.
    Rho2 {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
    },
    /// Monte Carlo statistics of sigma1 over sampled Gram submatrices.
    GramStats {
        #[command(flatten)]
        data: DataArgs,
        /// Submatrix size K.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Sample with replacement instead of without.
        #[arg(long)]
        replacement: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the per-trial CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize the mixing of a doubly stochastic chain on a graph.
    Fmmc {
        #[arg(long, default_value_t = 60)]
        nodes: usize,
        #[arg(long, default_value = "geometric")]
        topology: String,
        /// Absolute basis size.
        #[arg(long, conflicts_with = "basis_fraction")]
        k_basis: Option<usize>,
        /// Basis size as a fraction of the decomposition size.
        #[arg(long, default_value_t = 0.1)]
        basis_fraction: f64,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        step_a0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one training scheme and write its convergence trace.
    Train {
        /// TOML experiment file; other flags are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "sequential")]
        scheme: String,
        #[arg(long, default_value_t = 1e-3)]
        mu: f64,
        #[arg(long, default_value = "hinge")]
        loss: String,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, default_value = "k-regular")]
        topology: String,
        #[arg(long, default_value = "max-degree")]
        weights: String,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long = "T", default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ball radius for the projected scheme.
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Mini-batch speedup curve at a target accuracy.
    Speedup {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        batches: Vec<usize>,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-3)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// One-shot averaging RMSE table across node counts.
    Oneshot {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "nodes", value_delimiter = ',', default_value = "1,4,16,64")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 1e-3)]
        mu: f64,
        #[arg(long, default_value = "squared-hinge")]
        loss: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Reproduce a named figure's CSV inputs.
    Figure {
        /// One of the known recipe names; `list` prints them.
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

pub fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Rho2 { data, tol, max_iters } => {
            let d = data.load_finite()?;
            let est = spectral::estimate_rho2(&d, tol, max_iters)?;
            println!(
                "rho2 {} iterations {} residual {}",
                est.rho2, est.iterations, est.residual
            );
        }
        Command::GramStats { data, k, trials, replacement, seed, out } => {
            let d = data.load_finite()?;
            let stats = spectral::sample_gram_stats(&d, k, trials, replacement, seed)?;
            println!(
                "k {} trials {} mean_sigma1 {} std_sigma1 {} max_sigma1 {}",
                stats.k, stats.trials, stats.mean_sigma1, stats.std_sigma1, stats.max_sigma1
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(format!("gram_k{k}_seed{seed}.csv"));
                std::fs::write(&path, csvio::gram_csv(&stats))?;
                println!("wrote {}", path.display());
            }
        }
        Command::Fmmc {
            nodes,
            topology,
            k_basis,
            basis_fraction,
            iters,
            step_a0,
            seed,
            out,
        } => {
            let kind: TopologyKind = topology.parse()?;
            let graph = match kind {
                TopologyKind::Geometric => {
                    gen_named(NamedTopology::RandomGeometric { radius: None, seed }, nodes)?
                }
                other => other.build(nodes, None, None, seed)?,
            };
            let res = match k_basis {
                Some(k) => fmmc::optimize_fmmc(&graph, k, iters, step_a0)?,
                None => fmmc::optimize_fmmc_fraction(&graph, basis_fraction, iters, step_a0)?,
            };
            println!(
                "nodes {} edges {} decomposition {} basis {} heuristic_slem {} best_slem {}",
                nodes,
                graph.num_edges(),
                res.decomposition_size,
                res.basis_size,
                res.heuristic_slem,
                res.slem_trace.last().expect("nonempty trace").1
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let trace = dir.join("fmmc_slem_trace.csv");
                std::fs::write(&trace, csvio::slem_trace_csv(&res.slem_trace))?;
                let matrix = dir.join("fmmc_best_matrix.csv");
                std::fs::write(&matrix, res.best_matrix.to_csv())?;
                let edges = dir.join("fmmc_graph.txt");
                std::fs::write(&edges, graph.to_edge_list())?;
                println!("wrote {} {} {}", trace.display(), matrix.display(), edges.display());
            }
        }
        Command::Train {
            config,
            data,
            scheme,
            mu,
            loss,
            nodes,
            topology,
            weights,
            nu,
            batch,
            iterations,
            seed,
            radius,
            out,
        } => {
            let spec = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    ExperimentSpec::from_toml(&text)?
                }
                None => {
                    let source = match (&data.data, &data.synth) {
                        (Some(p), None) => DataSource::Path { path: p.clone() },
                        (None, Some(s)) => DataSource::Synth { synth: s.clone() },
                        _ => bail!("exactly one of --data or --synth is required"),
                    };
                    let scheme: SchemeKind = scheme.parse()?;
                    let loss: Loss = loss.parse()?;
                    let topology: TopologyKind = topology.parse()?;
                    let weights: WeightsKind = weights.parse()?;
                    ExperimentSpec {
                        data: source,
                        scheme,
                        mu,
                        loss,
                        nodes,
                        topology: Some(topology),
                        k: None,
                        geo_radius: None,
                        weights: Some(weights),
                        iterations,
                        batch,
                        nu,
                        seed,
                        eval_size: 2000,
                        radius,
                        fmmc_basis_fraction: 0.1,
                        fmmc_iterations: 300,
                    }
                }
            };
            spec.validate()?;
            let traces = spec.run()?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("trace.csv");
            std::fs::write(&path, csvio::trace_csv(&traces))?;
            let last = traces[0].checkpoints.last().expect("nonempty trace");
            println!(
                "scheme {:?} nodes {} final_t {} objective {}",
                spec.scheme,
                traces.len(),
                last.t,
                last.objective
            );
            println!("wrote {}", path.display());
        }
        Command::Speedup { data, batches, epsilon, mu, seed, out } => {
            let d = data.load_finite()?;
            std::fs::create_dir_all(&out)?;
            let opts = SpeedupOptions {
                mu,
                epsilon,
                seed,
                cache_dir: Some(out.join("cache")),
                ..Default::default()
            };
            let points = harness::speedup_curve(&d, &batches, &opts)?;
            for p in &points {
                println!(
                    "b {} iterations {} speedup {} b_ratio {}",
                    p.b,
                    p.iterations.map(|v| v.to_string()).unwrap_or_else(|| "saturated".into()),
                    p.speedup.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                    p.b_ratio
                );
            }
            let path = out.join("speedup.csv");
            std::fs::write(&path, csvio::speedup_csv(&points))?;
            println!("wrote {}", path.display());
        }
        Command::Oneshot { data, nodes, reps, mu, loss, seed, out } => {
            let d = data.load_finite()?;
            std::fs::create_dir_all(&out)?;
            let opts = RmseOptions {
                mu,
                loss: loss.parse()?,
                seed,
                repetitions: reps,
                cache_dir: Some(out.join("cache")),
                ..Default::default()
            };
            let rows = harness::rmse_average_at_end(&d, &nodes, &opts)?;
            for r in &rows {
                println!(
                    "m {} one_shot {} local {} centralized {}",
                    r.m, r.one_shot, r.local, r.centralized
                );
            }
            let path = out.join("rmse.csv");
            std::fs::write(&path, csvio::rmse_csv(&rows))?;
            println!("wrote {}", path.display());
        }
        Command::Figure { name, out } => {
            if name == "list" {
                for n in harness::figures::NAMES {
                    println!("{n}");
                }
                return Ok(());
            }
            let files = harness::figures::run_figure(&name, &out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}
