//! Named experiment recipes producing the CSV inputs for the report plots.
//! Plotting itself is external; every recipe is deterministic at fixed
//! desk-scale defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{partition_uniform, synth_finite, Partition, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fmmc::optimize_fmmc_fraction;
use crate::graph::{gen_named, max_degree_weights, NamedTopology, StochasticMatrix};
use crate::harness::{
    iterations_to_epsilon, reference_optimum, rmse_average_at_end, speedup_curve,
    RmseOptions, SpeedupOptions,
};
use crate::loss::Loss;
use crate::sgd::{
    run_consensus, run_intermittent, run_minibatch_consensus, SampleSource, SchemeConfig,
};
use crate::Dataset;

pub const NAMES: &[&str] = &[
    "fig3-1", "fig3-2", "fig4-1", "fig4-2", "fig5-1", "fig6-1", "fig6-2", "fig7-1", "fig7-2",
    "fig7-3",
];

/// Sparse rows with a weak common direction: rho^2 ~ 0.016, text-like.
fn low_rho2(n: usize, seed: u64) -> Dataset {
    synth_finite(&format!("spiked:d=500,nnz=5,alpha=0.015,n={n},seed={seed}").parse().unwrap())
        .unwrap()
}

/// Dense low-dimensional rows: rho^2 ~ 0.21.
fn high_rho2(n: usize, seed: u64) -> Dataset {
    synth_finite(&format!("gaussian:d=5,n={n},seed={seed}").parse().unwrap()).unwrap()
}

fn write(out_dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Default expander-style weights: complete graph for tiny m (the only
/// 2-regular option below 6 nodes is a short, bipartite-prone ring),
/// k-regular with k = max(2, m/4) otherwise.
fn default_weights(m: usize, seed: u64) -> Result<StochasticMatrix> {
    if m == 1 {
        return Ok(StochasticMatrix::identity(1));
    }
    if m <= 5 {
        return Ok(max_degree_weights(&gen_named(NamedTopology::Complete, m)?));
    }
    let k = (m / 4).max(2);
    let k = if (m * k).is_multiple_of(2) { k } else { k + 1 };
    Ok(max_degree_weights(&crate::graph::gen_k_regular(m, k, seed)?))
}

fn consensus_setup(data: &Dataset, m: usize, seed: u64) -> Result<(Partition, StochasticMatrix)> {
    let partition = if m == 1 {
        Partition::trivial(data.len())
    } else {
        partition_uniform(data, m, seed)?
    };
    Ok((partition, default_weights(m, seed)?))
}

/// Iterations to 0.01 suboptimality as the node count grows, on low- and
/// high-spectral-norm synthetic data.
fn fig3_1(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = String::from("dataset,m,iterations\n");
    for (tag, data) in [("low", low_rho2(2000, 31)), ("high", high_rho2(2000, 31))] {
        let reference = reference_optimum(&data, 0.1, Loss::Hinge, 4000, None)?;
        for m in [1usize, 2, 4, 8, 16] {
            let (partition, p) = consensus_setup(&data, m, 7)?;
            let probe = |t: usize| {
                let cfg = SchemeConfig::new(0.1, t, 40 + m as u64);
                let source = SampleSource::Finite { data: &data, partition: &partition };
                let run = run_consensus(&source, &data, &p, &cfg).expect("consensus runs");
                run.node_traces[0].checkpoints.last().unwrap().objective
            };
            let iters = iterations_to_epsilon(probe, reference.j_star, 0.01, 1 << 15);
            let _ = writeln!(
                csv,
                "{tag},{m},{}",
                iters.map(|v| v.to_string()).unwrap_or_default()
            );
        }
    }
    Ok(vec![write(out_dir, "fig3-1_iterations_vs_m.csv", &csv)?])
}

/// Final objective at fixed per-node iterations in fresh-sample mode: the
/// network penalty vanishes with infinite data.
fn fig3_2(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec: SyntheticSpec = "gaussian:d=50,seed=5".parse()?;
    let stream = match crate::data::synth(&spec)? {
        crate::data::SynthOutput::Stream(s) => s,
        _ => unreachable!("spec is streaming"),
    };
    let eval = stream.prefix(1500)?;
    let mut csv = String::from("m,objective\n");
    for m in [1usize, 2, 4, 8, 16, 32, 64] {
        let p = default_weights(m, 3)?;
        let source = SampleSource::Fresh { stream: &stream, nodes: m };
        let cfg = SchemeConfig::new(0.3, 8000, 11);
        let run = run_consensus(&source, &eval, &p, &cfg)?;
        let j = run.node_traces[0].checkpoints.last().unwrap().objective;
        let _ = writeln!(csv, "{m},{j}");
    }
    Ok(vec![write(out_dir, "fig3-2_infinite_data.csv", &csv)?])
}

/// Objective after fixed iterations under intermittent communication for a
/// sweep of communication probabilities.
fn fig4_1(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = String::from("dataset,nu,objective\n");
    for (tag, data) in [("low", low_rho2(2048, 33)), ("high", high_rho2(2048, 33))] {
        let m = 16;
        let (partition, p) = consensus_setup(&data, m, 9)?;
        for nu in [1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 128.0] {
            let cfg = SchemeConfig::new(0.01, 8192, 21);
            let source = SampleSource::Finite { data: &data, partition: &partition };
            let run = run_intermittent(&source, &data, &p, nu, &cfg)?;
            let j = run.node_traces[0].checkpoints.last().unwrap().objective;
            let _ = writeln!(csv, "{tag},{nu},{j}");
        }
    }
    Ok(vec![write(out_dir, "fig4-1_intermittent.csv", &csv)?])
}

/// Standard, intermittent and mini-batch-round consensus at equal gradient
/// budgets on 64 nodes.
fn fig4_2(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let data = synth_finite(&"gaussian:d=100,n=4096,seed=35".parse()?)?;
    let m = 64;
    let (partition, p) = consensus_setup(&data, m, 13)?;
    let source = SampleSource::Finite { data: &data, partition: &partition };
    let mut csv = String::from("scheme,t,gradient_evals,objective\n");

    let total = 8192usize;
    let standard = run_consensus(&source, &data, &p, &SchemeConfig::new(0.01, total, 29))?;
    for c in &standard.node_traces[0].checkpoints {
        let _ = writeln!(csv, "standard,{},{},{}", c.t, c.t, c.objective);
    }
    let inter =
        run_intermittent(&source, &data, &p, 1.0 / 128.0, &SchemeConfig::new(0.01, total, 29))?;
    for c in &inter.node_traces[0].checkpoints {
        let _ = writeln!(csv, "intermittent,{},{},{}", c.t, c.t, c.objective);
    }
    let rounds = total / 128;
    let mb = run_minibatch_consensus(
        &source,
        &data,
        &p,
        1.0 / 128.0,
        &SchemeConfig::new(0.01, rounds, 29),
    )?;
    for c in &mb.node_traces[0].checkpoints {
        let _ = writeln!(csv, "minibatch,{},{},{}", c.t, c.t * 128, c.objective);
    }
    Ok(vec![write(out_dir, "fig4-2_scheme_comparison.csv", &csv)?])
}

/// Mini-batch speedup curves with the b-ratio reference line, on
/// near-orthogonal and duplicated data.
fn fig5_1(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = String::from("dataset,b,iterations,speedup,b_ratio\n");
    let batches = [1usize, 2, 4, 8, 16, 32];
    let ortho = synth_finite(&"orthoblock:d=256,support=256,n=256".parse()?)?;
    let dup = synth_finite(&"dup:d=32,base=2,n=512,seed=3".parse()?)?;
    for (tag, data, mu) in [("ortho", &ortho, 1.0), ("dup", &dup, 1.0)] {
        let opts = SpeedupOptions {
            mu,
            epsilon: 1e-3,
            seed: 17,
            reference_budget: 4000,
            ..Default::default()
        };
        for p in speedup_curve(data, &batches, &opts)? {
            let _ = writeln!(
                csv,
                "{tag},{},{},{},{}",
                p.b,
                p.iterations.map(|v| v.to_string()).unwrap_or_default(),
                p.speedup.map(|v| v.to_string()).unwrap_or_default(),
                p.b_ratio
            );
        }
    }
    Ok(vec![write(out_dir, "fig5-1_speedup.csv", &csv)?])
}

fn rmse_figure(out_dir: &Path, name: &str, data: &Dataset) -> Result<Vec<PathBuf>> {
    let opts = RmseOptions {
        mu: 0.01,
        step_t0: 100.0,
        seed: 3,
        repetitions: 20,
        ..Default::default()
    };
    let rows = rmse_average_at_end(data, &[1, 4, 16, 64], &opts)?;
    Ok(vec![write(out_dir, name, &super::csvio::rmse_csv(&rows))?])
}

/// One-shot averaging vs local vs centralized on low-spectral-norm data.
fn fig6_1(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let gauss = synth_finite(&"gaussian:d=50,n=6400,seed=41".parse()?)?;
    rmse_figure(out_dir, "fig6-1_rmse_low_rho2.csv", &gauss)
}

/// Same comparison on rank-deficient high-spectral-norm data.
fn fig6_2(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dup = synth_finite(&"dup:d=50,base=2,n=6400,seed=41".parse()?)?;
    rmse_figure(out_dir, "fig6-2_rmse_high_rho2.csv", &dup)
}

/// SLEM of the optimized chain as the truncated basis grows, on one fixed
/// geometric graph.
fn fig7_1(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let g = gen_named(NamedTopology::RandomGeometric { radius: None, seed: 2 }, 30)?;
    let mut csv = String::from("fraction,k,edges,best_slem,heuristic_slem\n");
    for fraction in [0.05, 0.1, 0.2, 0.4, 0.7, 1.0] {
        let res = optimize_fmmc_fraction(&g, fraction, 200, 0.1)?;
        let _ = writeln!(
            csv,
            "{fraction},{},{},{},{}",
            res.basis_size,
            g.num_edges(),
            res.slem_trace.last().unwrap().1,
            res.heuristic_slem
        );
    }
    Ok(vec![write(out_dir, "fig7-1_slem_vs_basis.csv", &csv)?])
}

/// SLEM across graphs of varying edge count at fixed basis fractions.
fn fig7_2(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut csv = String::from("radius,edges,fraction,k,best_slem,heuristic_slem\n");
    for radius in [0.35, 0.45, 0.55, 0.65] {
        let g = gen_named(
            NamedTopology::RandomGeometric { radius: Some(radius), seed: 6 },
            30,
        )?;
        for fraction in [0.1, 0.3] {
            let res = optimize_fmmc_fraction(&g, fraction, 200, 0.1)?;
            let _ = writeln!(
                csv,
                "{radius},{},{fraction},{},{},{}",
                g.num_edges(),
                res.basis_size,
                res.slem_trace.last().unwrap().1,
                res.heuristic_slem
            );
        }
    }
    Ok(vec![write(out_dir, "fig7-2_slem_vs_edges.csv", &csv)?])
}

/// Consensus objective traces with max-degree weights vs the optimized
/// chain on the same graph.
fn fig7_3(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let data = high_rho2(2000, 43);
    let m = 32;
    let partition = partition_uniform(&data, m, 19)?;
    let g = gen_named(NamedTopology::RandomGeometric { radius: None, seed: 8 }, m)?;
    let heuristic = max_degree_weights(&g);
    let optimized = optimize_fmmc_fraction(&g, 0.2, 200, 0.1)?.best_matrix;
    let mut csv = String::from("weights,t,objective\n");
    for (tag, p) in [("max-degree", &heuristic), ("fmmc", &optimized)] {
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let run = run_consensus(&source, &data, p, &SchemeConfig::new(0.01, 4096, 23))?;
        for c in &run.node_traces[0].checkpoints {
            let _ = writeln!(csv, "{tag},{},{}", c.t, c.objective);
        }
    }
    Ok(vec![write(out_dir, "fig7-3_weights_comparison.csv", &csv)?])
}

/// Runs one named recipe, returning the written files.
pub fn run_figure(name: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match name {
        "fig3-1" => fig3_1(out_dir),
        "fig3-2" => fig3_2(out_dir),
        "fig4-1" => fig4_1(out_dir),
        "fig4-2" => fig4_2(out_dir),
        "fig5-1" => fig5_1(out_dir),
        "fig6-1" => fig6_1(out_dir),
        "fig6-2" => fig6_2(out_dir),
        "fig7-1" => fig7_1(out_dir),
        "fig7-2" => fig7_2(out_dir),
        "fig7-3" => fig7_3(out_dir),
        other => Err(Error::InvalidArgument(format!(
            "unknown figure {other:?}; available: {}",
            NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_figure_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(run_figure("nope", tmp.path()).is_err());
    }

    #[test]
    fn a_cheap_recipe_writes_its_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let files = run_figure("fig7-1", tmp.path()).unwrap();
        assert_eq!(files.len(), 1);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("fraction,k,edges,best_slem,heuristic_slem\n"));
        assert!(text.lines().count() > 3);
    }
}
