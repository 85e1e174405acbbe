//! Training schemes: sequential SGD, consensus SGD with fixed, intermittent
//! or mini-batch-round communication, centralized mini-batch SGD (free and
//! norm-constrained), and one-shot averaging.
//!
//! Every scheme is a pure function of `(data, partition, config, seed)`.
//! Sample draws are keyed by `(seed, node, round, slot)`, the communication
//! coin by `(seed, round)`, so replays are bit-identical for any worker
//! count. Per-round node work runs through [`crate::par`].

use std::time::Instant;

use crate::data::{Dataset, Example, Partition, SampleStream};
use crate::error::{Error, Result};
use crate::graph::StochasticMatrix;
use crate::harness::objective;
use crate::loss::Loss;
use crate::par;
use crate::rng::{self, salt};

/// Stream salt reserved for fresh-sample training draws; evaluation
/// prefixes use salt 0.
pub const FRESH_TRAIN_SALT: u64 = 1;

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `η_t = 1/(μ t)`.
    InverseMuT,
    /// `η_t = c/(μ (t + t0))`.
    COverLambdaT { c: f64, t0: f64 },
    /// `η_t = B sqrt(b/K_b) / sqrt(t)` for the norm-constrained scheme.
    Constrained { radius: f64, kb: f64 },
}

impl StepRule {
    #[inline]
    fn eta(&self, mu: f64, batch: usize, t: usize) -> f64 {
        match *self {
            StepRule::InverseMuT => 1.0 / (mu * t as f64),
            StepRule::COverLambdaT { c, t0 } => c / (mu * (t as f64 + t0)),
            StepRule::Constrained { radius, kb } => {
                radius * (batch as f64 / kb).sqrt() / (t as f64).sqrt()
            }
        }
    }

    fn needs_positive_mu(&self) -> bool {
        matches!(self, StepRule::InverseMuT | StepRule::COverLambdaT { .. })
    }
}

/// Which iterate a scheme reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Mean of all iterates `w(1..t)`.
    Full,
    /// Mean of the last `ceil(t/2)` iterates.
    Tail,
    /// The current iterate.
    None,
}

/// One training run's parameters.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub mu: f64,
    pub iterations: usize,
    pub step: StepRule,
    pub batch: usize,
    pub nu: f64,
    pub seed: u64,
    pub averaging: Averaging,
    pub loss: Loss,
    /// Record a [`RoundSnapshot`] every this many rounds.
    pub snapshot_every: Option<usize>,
}

impl SchemeConfig {
    pub fn new(mu: f64, iterations: usize, seed: u64) -> Self {
        Self {
            mu,
            iterations,
            step: StepRule::InverseMuT,
            batch: 1,
            nu: 1.0,
            seed,
            averaging: Averaging::Full,
            loss: Loss::Hinge,
            snapshot_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("need at least one iteration".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidArgument(format!("nu must be in (0,1], got {}", self.nu)));
        }
        if self.step.needs_positive_mu() && self.mu <= 0.0 {
            return Err(Error::InvalidArgument("step rule requires mu > 0".into()));
        }
        Ok(())
    }
}

/// One convergence record.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub t: usize,
    pub objective: f64,
    pub network_error: Option<f64>,
    /// Wall clock since run start; informational only, never written to CSV.
    pub seconds: f64,
}

/// Per-run convergence record plus the reported final vector.
#[derive(Debug, Clone)]
pub struct Trace {
    pub checkpoints: Vec<Checkpoint>,
    pub output: Vec<f64>,
}

/// State of one consensus round, recorded when snapshots are enabled.
#[derive(Debug, Clone)]
pub struct RoundSnapshot {
    pub t: usize,
    pub eta: f64,
    /// Whether the weight matrix (rather than the identity) was applied.
    pub communicated: bool,
    /// Network average of the iterates entering the round.
    pub avg_before: Vec<f64>,
    /// Mean of the regularized node gradients at this round.
    pub mean_gradient: Vec<f64>,
    /// Network average after mixing and stepping.
    pub avg_after: Vec<f64>,
    /// Node iterates after the round.
    pub iterates_after: Vec<Vec<f64>>,
}

/// Output of the consensus-style schemes.
#[derive(Debug, Clone)]
pub struct ConsensusRun {
    pub node_traces: Vec<Trace>,
    pub snapshots: Vec<RoundSnapshot>,
}

/// Output of one-shot averaging.
#[derive(Debug, Clone)]
pub struct OneShotRun {
    pub average: Vec<f64>,
    pub node_outputs: Vec<Vec<f64>>,
}

/// Where samples come from.
pub enum SampleSource<'a> {
    /// Shards of a finite dataset; node `i` samples uniformly with
    /// replacement from `partition.block(i)`.
    Finite { data: &'a Dataset, partition: &'a Partition },
    /// Every draw is a fresh example from a deterministic stream (the
    /// infinite-data regime).
    Fresh { stream: &'a SampleStream, nodes: usize },
}

impl SampleSource<'_> {
    fn nodes(&self) -> usize {
        match self {
            SampleSource::Finite { partition, .. } => partition.nodes(),
            SampleSource::Fresh { nodes, .. } => *nodes,
        }
    }

    fn dim(&self) -> usize {
        match self {
            SampleSource::Finite { data, .. } => data.dim(),
            SampleSource::Fresh { stream, .. } => stream.dim(),
        }
    }
}

/// Geometric checkpoint times `1, 2, 4, ...` plus `T`.
pub fn checkpoint_times(t_max: usize) -> Vec<usize> {
    let mut times = Vec::new();
    let mut t = 1;
    while t < t_max {
        times.push(t);
        t *= 2;
    }
    times.push(t_max);
    times.dedup();
    times
}

/// Running iterate averages with just enough saved prefixes to answer
/// tail-window queries at the checkpoint times.
struct AvgTracker {
    mode: Averaging,
    sum: Vec<f64>,
    count: usize,
    needed: Vec<usize>,
    saved: Vec<(usize, Vec<f64>)>,
}

impl AvgTracker {
    fn new(dim: usize, mode: Averaging, checkpoint_times: &[usize]) -> Self {
        let mut needed: Vec<usize> = match mode {
            Averaging::Tail => {
                checkpoint_times.iter().map(|&t| t / 2).filter(|&h| h > 0).collect()
            }
            _ => Vec::new(),
        };
        needed.sort_unstable();
        needed.dedup();
        Self { mode, sum: vec![0.0; dim], count: 0, needed, saved: Vec::new() }
    }

    /// Feeds iterate `w(count+1)`.
    fn add(&mut self, w: &[f64]) {
        self.count += 1;
        for (s, wi) in self.sum.iter_mut().zip(w) {
            *s += wi;
        }
        if self.needed.binary_search(&self.count).is_ok() {
            self.saved.push((self.count, self.sum.clone()));
        }
    }

    /// Reported vector after iterate `t` has been added; `current` is the
    /// live iterate for [`Averaging::None`].
    fn output(&self, t: usize, current: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.count, t);
        match self.mode {
            Averaging::None => current.to_vec(),
            Averaging::Full => self.sum.iter().map(|s| s / t as f64).collect(),
            Averaging::Tail => {
                let half = t / 2;
                let window = (t - half) as f64;
                if half == 0 {
                    return self.sum.clone();
                }
                let base = &self
                    .saved
                    .iter()
                    .find(|(c, _)| *c == half)
                    .expect("tail prefix was saved")
                    .1;
                self.sum.iter().zip(base).map(|(s, b)| (s - b) / window).collect()
            }
        }
    }
}

/// Regularized mini-batch gradient
/// `g = μ w + (1/b) Σ_s ∂ℓ(wᵀx_s) x_s` with draws keyed by
/// `(seed, node, t, slot)`.
#[allow(clippy::too_many_arguments)]
fn batch_gradient(
    source: &SampleSource<'_>,
    loss: Loss,
    mu: f64,
    w: &[f64],
    node: usize,
    t: usize,
    batch: usize,
    seed: u64,
    g: &mut [f64],
) {
    for (gi, wi) in g.iter_mut().zip(w) {
        *gi = mu * wi;
    }
    let inv_b = 1.0 / batch as f64;
    match source {
        SampleSource::Finite { data, partition } => {
            let shard = partition.block(node);
            for s in 0..batch {
                let pos = rng::index(
                    &[seed, salt::SAMPLE, node as u64, t as u64, s as u64],
                    shard.len(),
                );
                let x = data.example(shard[pos] as usize);
                let coeff = loss.subgradient(x.dot(w)) * inv_b;
                x.add_scaled(coeff, g);
            }
        }
        SampleSource::Fresh { stream, nodes } => {
            for s in 0..batch {
                let idx = ((t as u64 - 1) * *nodes as u64 + node as u64) * batch as u64
                    + s as u64;
                let x = stream.example_salted(FRESH_TRAIN_SALT, idx);
                let coeff = loss.subgradient(example_dot(&x, w)) * inv_b;
                example_add_scaled(&x, coeff, g);
            }
        }
    }
}

fn example_dot(e: &Example, w: &[f64]) -> f64 {
    e.features.iter().map(|&(j, v)| v * w[j as usize]).sum()
}

fn example_add_scaled(e: &Example, coeff: f64, out: &mut [f64]) {
    for &(j, v) in &e.features {
        out[j as usize] += coeff * v;
    }
}

fn network_average(w: &[Vec<f64>]) -> Vec<f64> {
    let m = w.len();
    let d = w[0].len();
    let mut avg = vec![0.0; d];
    for wi in w {
        for (a, v) in avg.iter_mut().zip(wi) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= m as f64);
    avg
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

enum CommSchedule {
    Every,
    Bernoulli(f64),
}

/// Synchronous consensus engine shared by the fixed, intermittent and
/// mini-batch-round schemes. Each round: every node computes its batch
/// gradient at `w_i(t)`, mixes the iterates through the weight matrix (or
/// the identity on silent rounds), and steps.
fn consensus_engine(
    source: &SampleSource<'_>,
    eval: &Dataset,
    p: &StochasticMatrix,
    schedule: CommSchedule,
    batch: usize,
    cfg: &SchemeConfig,
) -> Result<ConsensusRun> {
    cfg.validate()?;
    let m = source.nodes();
    let d = source.dim();
    if p.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {}x{} but the run has {m} nodes",
            p.dim(),
            p.dim()
        )));
    }
    if eval.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "evaluation dataset dim {} != source dim {d}",
            eval.dim()
        )));
    }
    if let SampleSource::Finite { partition, .. } = source {
        if partition.block_len() == 0 {
            return Err(Error::InvalidArgument("empty shards".into()));
        }
    }

    let t_max = cfg.iterations;
    let cps = checkpoint_times(t_max);
    let rows = p.sparse_rows();
    let start = Instant::now();

    let mut w: Vec<Vec<f64>> = vec![vec![0.0; d]; m];
    let mut w_next: Vec<Vec<f64>> = vec![vec![0.0; d]; m];
    let mut grads: Vec<Vec<f64>> = vec![vec![0.0; d]; m];
    let mut trackers: Vec<AvgTracker> =
        (0..m).map(|_| AvgTracker::new(d, cfg.averaging, &cps)).collect();
    let mut node_checkpoints: Vec<Vec<Checkpoint>> = vec![Vec::new(); m];
    let mut snapshots = Vec::new();
    let mut cp_next = 0usize;

    for t in 1..=t_max {
        for (i, tracker) in trackers.iter_mut().enumerate() {
            tracker.add(&w[i]);
        }
        if cp_next < cps.len() && cps[cp_next] == t {
            cp_next += 1;
            let avg = network_average(&w);
            let seconds = start.elapsed().as_secs_f64();
            let outputs = par::map_collect(m, |i| trackers[i].output(t, &w[i]));
            for (i, out) in outputs.into_iter().enumerate() {
                node_checkpoints[i].push(Checkpoint {
                    t,
                    objective: objective(eval, &out, cfg.mu, cfg.loss),
                    network_error: Some(l2_dist(&avg, &w[i])),
                    seconds,
                });
            }
        }

        let eta = cfg.step.eta(cfg.mu, batch, t);
        {
            let w_ref = &w;
            par::for_each_mut(&mut grads, |i, g| {
                batch_gradient(source, cfg.loss, cfg.mu, &w_ref[i], i, t, batch, cfg.seed, g);
            });
        }
        let communicated = match schedule {
            CommSchedule::Every => true,
            CommSchedule::Bernoulli(nu) => {
                rng::unit(&[cfg.seed, salt::MIX_SCHEDULE, t as u64]) < nu
            }
        };
        let snapshotting = cfg.snapshot_every.is_some_and(|every| t % every == 0);
        let (avg_before, mean_gradient) = if snapshotting {
            (network_average(&w), network_average(&grads))
        } else {
            (Vec::new(), Vec::new())
        };

        {
            let (w_ref, g_ref, rows_ref) = (&w, &grads, &rows);
            par::for_each_mut(&mut w_next, |i, wn| {
                if communicated {
                    wn.iter_mut().for_each(|x| *x = 0.0);
                    for &(j, weight) in &rows_ref[i] {
                        for (x, wj) in wn.iter_mut().zip(&w_ref[j as usize]) {
                            *x += weight * wj;
                        }
                    }
                } else {
                    wn.copy_from_slice(&w_ref[i]);
                }
                for (x, g) in wn.iter_mut().zip(&g_ref[i]) {
                    *x -= eta * g;
                }
            });
        }
        std::mem::swap(&mut w, &mut w_next);

        if snapshotting {
            snapshots.push(RoundSnapshot {
                t,
                eta,
                communicated,
                avg_before,
                mean_gradient,
                avg_after: network_average(&w),
                iterates_after: w.clone(),
            });
        }
    }

    let node_traces = (0..m)
        .map(|i| Trace {
            checkpoints: std::mem::take(&mut node_checkpoints[i]),
            output: trackers[i].output(t_max, &w[i]),
        })
        .collect();
    Ok(ConsensusRun { node_traces, snapshots })
}

/// Consensus SGD with a fixed weight matrix applied every round.
pub fn run_consensus(
    source: &SampleSource<'_>,
    eval: &Dataset,
    p: &StochasticMatrix,
    cfg: &SchemeConfig,
) -> Result<ConsensusRun> {
    consensus_engine(source, eval, p, CommSchedule::Every, 1, cfg)
}

/// Consensus SGD that applies the weight matrix with probability `nu` each
/// round and the identity otherwise (i.i.d. coin keyed by the seed).
pub fn run_intermittent(
    source: &SampleSource<'_>,
    eval: &Dataset,
    p: &StochasticMatrix,
    nu: f64,
    cfg: &SchemeConfig,
) -> Result<ConsensusRun> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidArgument(format!("nu must be in (0,1], got {nu}")));
    }
    consensus_engine(source, eval, p, CommSchedule::Bernoulli(nu), 1, cfg)
}

/// Mini-batch-round consensus: communicates every round, but each node
/// averages `b = 1/nu` local subgradients per round, so the round counter
/// indexes communication rounds.
pub fn run_minibatch_consensus(
    source: &SampleSource<'_>,
    eval: &Dataset,
    p: &StochasticMatrix,
    nu: f64,
    cfg: &SchemeConfig,
) -> Result<ConsensusRun> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidArgument(format!("nu must be in (0,1], got {nu}")));
    }
    let b = 1.0 / nu;
    let batch = b.round();
    if (b - batch).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "1/nu must be an integer batch size, got 1/{nu} = {b}"
        )));
    }
    consensus_engine(source, eval, p, CommSchedule::Every, batch as usize, cfg)
}

/// Sequential SGD over an index set of a dataset: samples uniformly with
/// replacement, steps with the configured rule, reports the configured
/// average. Draw keys carry `node_key` so distinct logical nodes get
/// independent streams.
pub fn run_local(
    data: &Dataset,
    indices: &[u32],
    cfg: &SchemeConfig,
    node_key: u64,
) -> Result<Trace> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty index set".into()));
    }
    let d = data.dim();
    let t_max = cfg.iterations;
    let cps = checkpoint_times(t_max);
    let start = Instant::now();

    let mut w = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut tracker = AvgTracker::new(d, cfg.averaging, &cps);
    let mut checkpoints = Vec::with_capacity(cps.len());
    let mut cp_next = 0usize;
    let inv_b = 1.0 / cfg.batch as f64;

    for t in 1..=t_max {
        tracker.add(&w);
        if cp_next < cps.len() && cps[cp_next] == t {
            cp_next += 1;
            let out = tracker.output(t, &w);
            checkpoints.push(Checkpoint {
                t,
                objective: objective(data, &out, cfg.mu, cfg.loss),
                network_error: None,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let eta = cfg.step.eta(cfg.mu, cfg.batch, t);
        for (gi, wi) in g.iter_mut().zip(&w) {
            *gi = cfg.mu * wi;
        }
        for s in 0..cfg.batch {
            let pos = rng::index(
                &[cfg.seed, salt::SAMPLE, node_key, t as u64, s as u64],
                indices.len(),
            );
            let x = data.example(indices[pos] as usize);
            let coeff = cfg.loss.subgradient(x.dot(&w)) * inv_b;
            x.add_scaled(coeff, &mut g);
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= eta * gi;
        }
    }
    Ok(Trace { checkpoints, output: tracker.output(t_max, &w) })
}

/// Sequential SGD over the whole dataset (single node).
pub fn run_sequential(data: &Dataset, cfg: &SchemeConfig) -> Result<Trace> {
    let all: Vec<u32> = (0..data.len() as u32).collect();
    run_local(data, &all, cfg, 0)
}

/// Centralized mini-batch SGD: per round draws `b` examples with
/// replacement from the whole set, steps
/// `w ← w(1 − μη_t) − η_t ḡ` with `ḡ` the mean loss subgradient, and
/// reports the tail average (mean of the last `ceil(T/2)` iterates).
pub fn run_minibatch(data: &Dataset, cfg: &SchemeConfig) -> Result<Trace> {
    minibatch_impl(data, cfg, false)
}

/// [`run_minibatch`] with sampling replaced by the full example set every
/// round: the deterministic full-batch subgradient method.
pub fn run_full_batch(data: &Dataset, cfg: &SchemeConfig) -> Result<Trace> {
    minibatch_impl(data, cfg, true)
}

fn minibatch_impl(data: &Dataset, cfg: &SchemeConfig, full: bool) -> Result<Trace> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let d = data.dim();
    let n = data.len();
    let t_max = cfg.iterations;
    let cps = checkpoint_times(t_max);
    let start = Instant::now();
    let batch = if full { n } else { cfg.batch };
    let inv_b = 1.0 / batch as f64;

    let mut w = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut tracker = AvgTracker::new(d, Averaging::Tail, &cps);
    let mut checkpoints = Vec::with_capacity(cps.len());
    let mut cp_next = 0usize;

    for t in 1..=t_max {
        tracker.add(&w);
        if cp_next < cps.len() && cps[cp_next] == t {
            cp_next += 1;
            let out = tracker.output(t, &w);
            checkpoints.push(Checkpoint {
                t,
                objective: objective(data, &out, cfg.mu, cfg.loss),
                network_error: None,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let eta = cfg.step.eta(cfg.mu, batch, t);
        g.iter_mut().for_each(|x| *x = 0.0);
        if full {
            for i in 0..n {
                let x = data.example(i);
                let coeff = cfg.loss.subgradient(x.dot(&w)) * inv_b;
                x.add_scaled(coeff, &mut g);
            }
        } else {
            for s in 0..batch {
                let pos =
                    rng::index(&[cfg.seed, salt::SAMPLE, 0, t as u64, s as u64], n);
                let x = data.example(pos);
                let coeff = cfg.loss.subgradient(x.dot(&w)) * inv_b;
                x.add_scaled(coeff, &mut g);
            }
        }
        let keep = 1.0 - cfg.mu * eta;
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi = *wi * keep - eta * gi;
        }
    }
    Ok(Trace { checkpoints, output: tracker.output(t_max, &w) })
}

fn project_ball(w: &mut [f64], radius: f64) {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        w.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Projected mini-batch subgradient descent on the unregularized
/// constrained objective: `w ← Π_B(w − η_t ḡ)` with radial projection onto
/// `‖w‖ ≤ B` and the full iterate average reported. The step rule must be
/// [`StepRule::Constrained`]; checkpoint objectives are the unregularized
/// loss mean.
pub fn run_projected_minibatch(data: &Dataset, cfg: &SchemeConfig) -> Result<Trace> {
    let StepRule::Constrained { radius, .. } = cfg.step else {
        return Err(Error::InvalidArgument(
            "projected scheme needs the constrained step rule".into(),
        ));
    };
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let d = data.dim();
    let n = data.len();
    let t_max = cfg.iterations;
    let cps = checkpoint_times(t_max);
    let start = Instant::now();
    let inv_b = 1.0 / cfg.batch as f64;

    let mut w = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut tracker = AvgTracker::new(d, Averaging::Full, &cps);
    let mut checkpoints = Vec::with_capacity(cps.len());
    let mut cp_next = 0usize;

    for t in 1..=t_max {
        tracker.add(&w);
        if cp_next < cps.len() && cps[cp_next] == t {
            cp_next += 1;
            let out = tracker.output(t, &w);
            checkpoints.push(Checkpoint {
                t,
                objective: objective(data, &out, 0.0, cfg.loss),
                network_error: None,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let eta = cfg.step.eta(cfg.mu, cfg.batch, t);
        g.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..cfg.batch {
            let pos = rng::index(&[cfg.seed, salt::SAMPLE, 0, t as u64, s as u64], n);
            let x = data.example(pos);
            let coeff = cfg.loss.subgradient(x.dot(&w)) * inv_b;
            x.add_scaled(coeff, &mut g);
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= eta * gi;
        }
        project_ball(&mut w, radius);
        debug_assert!(
            w.iter().map(|x| x * x).sum::<f64>().sqrt() <= radius + 1e-12,
            "iterate escaped the ball"
        );
    }
    Ok(Trace { checkpoints, output: tracker.output(t_max, &w) })
}

/// One-shot averaging: every node independently runs sequential SGD on its
/// shard for exactly `floor(N/m)` iterations (one pass worth of updates)
/// and only the final outputs are averaged. Node `i` draws from the keyed
/// stream `(seed, node=i)`.
pub fn run_one_shot(
    data: &Dataset,
    partition: &Partition,
    cfg: &SchemeConfig,
) -> Result<OneShotRun> {
    cfg.validate()?;
    let m = partition.nodes();
    if partition.block_len() == 0 {
        return Err(Error::InvalidArgument("empty shards".into()));
    }
    let local_cfg = SchemeConfig { iterations: partition.block_len(), ..cfg.clone() };
    let outputs: Vec<Result<Vec<f64>>> = par::map_collect(m, |i| {
        run_local(data, partition.block(i), &local_cfg, i as u64).map(|tr| tr.output)
    });
    let mut node_outputs = Vec::with_capacity(m);
    for o in outputs {
        node_outputs.push(o?);
    }
    let average = network_average(&node_outputs);
    Ok(OneShotRun { average, node_outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        parse_sparse_text, partition_uniform, synth_finite, GeneratorKind, LoadOptions,
        SyntheticSpec,
    };
    use crate::graph::{gen_named, max_degree_weights, NamedTopology};
    use crate::loss::local_subgradient;

    fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
        synth_finite(&SyntheticSpec {
            dim: d,
            size: Some(n),
            kind: GeneratorKind::GaussianHyperplane,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn single_step_lands_on_x_over_mu() {
        let data = parse_sparse_text("+1 1:0.6 2:0.8\n", &LoadOptions::default()).unwrap();
        let mu = 0.25;
        let mut cfg = SchemeConfig::new(mu, 1, 0);
        cfg.averaging = Averaging::None;
        let tr = run_sequential(&data, &cfg).unwrap();
        // w(2) = -eta_1 * (dl * x + mu * 0) = (1/mu) * x.
        assert!((tr.output[0] - 0.6 / mu).abs() < 1e-15);
        assert!((tr.output[1] - 0.8 / mu).abs() < 1e-15);
    }

    #[test]
    fn zero_features_are_a_fixed_point() {
        let data = parse_sparse_text(
            "+1\n-1\n+1\n",
            &LoadOptions { dim_override: Some(3), ..Default::default() },
        )
        .unwrap();
        let mut cfg = SchemeConfig::new(0.5, 32, 3);
        cfg.averaging = Averaging::None;
        let tr = run_sequential(&data, &cfg).unwrap();
        assert!(tr.output.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn consensus_with_one_node_reduces_to_sequential_bitwise() {
        let data = gaussian(40, 8, 5);
        let cfg = SchemeConfig::new(0.1, 200, 9);
        let seq = run_sequential(&data, &cfg).unwrap();

        let partition = Partition::trivial(data.len());
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let p = StochasticMatrix::identity(1);
        let run = run_consensus(&source, &data, &p, &cfg).unwrap();

        assert_eq!(seq.output, run.node_traces[0].output);
        assert_eq!(seq.checkpoints.len(), run.node_traces[0].checkpoints.len());
        for (a, b) in seq.checkpoints.iter().zip(&run.node_traces[0].checkpoints) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }
        assert_eq!(run.node_traces[0].checkpoints[0].network_error, Some(0.0));
    }

    #[test]
    fn first_round_iterates_are_pure_gradient_terms() {
        let data = gaussian(30, 6, 2);
        let partition = partition_uniform(&data, 3, 1).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let p = StochasticMatrix::uniform(3);
        let mut cfg = SchemeConfig::new(0.2, 1, 4);
        cfg.snapshot_every = Some(1);
        let run = run_consensus(&source, &data, &p, &cfg).unwrap();
        let snap = &run.snapshots[0];
        assert!(snap.avg_before.iter().all(|&x| x == 0.0));
        // Mixing zeros is zero, so w(2) = -eta * g.
        for (i, iterate) in snap.iterates_after.iter().enumerate() {
            let mut g = vec![0.0; 6];
            batch_gradient(&source, cfg.loss, cfg.mu, &[0.0; 6], i, 1, 1, cfg.seed, &mut g);
            for (a, gi) in iterate.iter().zip(&g) {
                assert!((a + snap.eta * gi).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn doubly_stochastic_mixing_preserves_the_average_update() {
        // Eq-style residual: avg(t+1) - avg(t) + eta * mean_grad = 0.
        let data = gaussian(64, 10, 7);
        let partition = partition_uniform(&data, 4, 2).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let g = gen_named(NamedTopology::Cycle, 4).unwrap();
        let p = max_degree_weights(&g);
        let mut cfg = SchemeConfig::new(0.1, 64, 11);
        cfg.snapshot_every = Some(1);
        let run = run_consensus(&source, &data, &p, &cfg).unwrap();
        assert_eq!(run.snapshots.len(), 64);
        for snap in &run.snapshots {
            let mut worst = 0.0f64;
            for j in 0..10 {
                let r = snap.avg_after[j] - snap.avg_before[j] + snap.eta * snap.mean_gradient[j];
                worst = worst.max(r.abs());
            }
            assert!(worst <= 1e-10, "t={}: residual {worst}", snap.t);
        }
    }

    #[test]
    fn intermittent_with_full_communication_matches_consensus() {
        let data = gaussian(48, 6, 3);
        let partition = partition_uniform(&data, 4, 5).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let g = gen_named(NamedTopology::Complete, 4).unwrap();
        let p = max_degree_weights(&g);
        let cfg = SchemeConfig::new(0.2, 100, 13);
        let a = run_consensus(&source, &data, &p, &cfg).unwrap();
        let b = run_intermittent(&source, &data, &p, 1.0, &cfg).unwrap();
        for (ta, tb) in a.node_traces.iter().zip(&b.node_traces) {
            assert_eq!(ta.output, tb.output);
        }
    }

    #[test]
    fn silent_intermittent_nodes_run_independent_sequential_chains() {
        let data = gaussian(48, 6, 8);
        let partition = partition_uniform(&data, 3, 4).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let p = max_degree_weights(&gen_named(NamedTopology::Complete, 3).unwrap());
        let cfg = SchemeConfig::new(0.2, 80, 21);
        // nu so small the seeded coin never fires.
        let run = run_intermittent(&source, &data, &p, f64::MIN_POSITIVE, &cfg).unwrap();
        for node in 0..3 {
            let local = run_local(&data, partition.block(node), &cfg, node as u64).unwrap();
            assert_eq!(local.output, run.node_traces[node].output, "node {node}");
        }
    }

    #[test]
    fn communication_rounds_follow_the_bernoulli_rate() {
        let data = gaussian(16, 4, 1);
        let partition = partition_uniform(&data, 2, 0).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let p = StochasticMatrix::uniform(2);
        let (t, nu, runs) = (64usize, 0.25f64, 400usize);
        let mut total = 0usize;
        for seed in 0..runs as u64 {
            let mut cfg = SchemeConfig::new(0.5, t, seed);
            cfg.snapshot_every = Some(1);
            let run = run_intermittent(&source, &data, &p, nu, &cfg).unwrap();
            total += run.snapshots.iter().filter(|s| s.communicated).count();
        }
        let mean = total as f64 / runs as f64;
        let expect = nu * t as f64;
        let slack = 3.0 * (nu * (1.0 - nu) * t as f64).sqrt() / (runs as f64).sqrt();
        assert!((mean - expect).abs() <= slack, "mean {mean} vs {expect} ± {slack}");
    }

    #[test]
    fn minibatch_consensus_with_nu_one_matches_consensus() {
        let data = gaussian(60, 8, 6);
        let partition = partition_uniform(&data, 4, 1).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let p = max_degree_weights(&gen_named(NamedTopology::Cycle, 4).unwrap());
        let cfg = SchemeConfig::new(0.1, 120, 17);
        let a = run_consensus(&source, &data, &p, &cfg).unwrap();
        let b = run_minibatch_consensus(&source, &data, &p, 1.0, &cfg).unwrap();
        for (ta, tb) in a.node_traces.iter().zip(&b.node_traces) {
            assert_eq!(ta.output, tb.output);
        }
        assert!(run_minibatch_consensus(&source, &data, &p, 0.3, &cfg).is_err());
    }

    #[test]
    fn batch_gradient_is_the_mean_of_individual_subgradients() {
        let data = gaussian(30, 5, 9);
        let partition = partition_uniform(&data, 2, 3).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let w: Vec<f64> = (0..5).map(|i| (i as f64 - 2.0) * 0.3).collect();
        let (node, t, b, seed) = (1usize, 7usize, 8usize, 42u64);
        let mut g = vec![0.0; 5];
        batch_gradient(&source, Loss::Hinge, 0.3, &w, node, t, b, seed, &mut g);

        let shard = partition.block(node);
        let mut mean = vec![0.0; 5];
        for s in 0..b {
            let pos = rng::index(
                &[seed, salt::SAMPLE, node as u64, t as u64, s as u64],
                shard.len(),
            );
            let gi = local_subgradient(Loss::Hinge, 0.3, &w, data.example(shard[pos] as usize));
            for (m, v) in mean.iter_mut().zip(&gi) {
                *m += v / b as f64;
            }
        }
        for (a, b) in g.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn tail_average_is_the_mean_of_the_last_half() {
        let data = gaussian(40, 6, 12);
        for t_max in [9usize, 16, 33] {
            let mut cfg = SchemeConfig::new(0.2, t_max, 77);
            cfg.batch = 2;
            let tr = run_minibatch(&data, &cfg).unwrap();

            // Replay the exact update recurrence, recording all iterates.
            let mut w = vec![0.0; 6];
            let mut iterates = vec![w.clone()];
            for t in 1..=t_max {
                let eta = cfg.step.eta(cfg.mu, cfg.batch, t);
                let mut g = vec![0.0; 6];
                for s in 0..cfg.batch {
                    let pos = rng::index(
                        &[cfg.seed, salt::SAMPLE, 0, t as u64, s as u64],
                        data.len(),
                    );
                    let x = data.example(pos);
                    let coeff = cfg.loss.subgradient(x.dot(&w)) / cfg.batch as f64;
                    x.add_scaled(coeff, &mut g);
                }
                let keep = 1.0 - cfg.mu * eta;
                for (wi, gi) in w.iter_mut().zip(&g) {
                    *wi = *wi * keep - eta * gi;
                }
                iterates.push(w.clone());
            }
            // iterates[t] = w(t+1); tail window is t in (T/2, T].
            let half = t_max / 2;
            let window: Vec<&Vec<f64>> =
                (half + 1..=t_max).map(|t| &iterates[t - 1]).collect();
            let mut mean = vec![0.0; 6];
            for it in &window {
                for (m, v) in mean.iter_mut().zip(it.iter()) {
                    *m += v / window.len() as f64;
                }
            }
            for (a, b) in tr.output.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-12, "T={t_max}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn full_batch_matches_an_explicit_gradient_loop() {
        let data = gaussian(25, 4, 14);
        let cfg = SchemeConfig::new(0.3, 40, 0);
        let tr = run_full_batch(&data, &cfg).unwrap();

        let mut w = vec![0.0; 4];
        let mut sum_tail = [0.0; 4];
        let half = 40 / 2;
        for t in 1..=40usize {
            if t > half {
                for (s, wi) in sum_tail.iter_mut().zip(&w) {
                    *s += wi;
                }
            }
            let eta = 1.0 / (cfg.mu * t as f64);
            let mut g = vec![0.0; 4];
            for i in 0..data.len() {
                let x = data.example(i);
                let coeff = cfg.loss.subgradient(x.dot(&w)) / data.len() as f64;
                x.add_scaled(coeff, &mut g);
            }
            let keep = 1.0 - cfg.mu * eta;
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi = *wi * keep - eta * gi;
            }
        }
        for (a, b) in tr.output.iter().zip(sum_tail.iter().map(|s| s / half as f64)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_keeps_iterates_in_the_ball() {
        let mut w = vec![3.0, 4.0];
        project_ball(&mut w, 2.5);
        assert!((w[0] - 1.5).abs() < 1e-12 && (w[1] - 2.0).abs() < 1e-12);
        let mut inside = vec![0.3, 0.1];
        project_ball(&mut inside, 1.0);
        assert_eq!(inside, vec![0.3, 0.1]);
        let mut w = vec![2.0, 0.0];
        project_ball(&mut w, 1.0);
        assert_eq!(w, vec![1.0, 0.0]);

        let data = gaussian(50, 6, 15);
        let mut cfg = SchemeConfig::new(0.0, 60, 3);
        cfg.batch = 4;
        cfg.step = StepRule::Constrained { radius: 0.5, kb: 2.0 };
        let tr = run_projected_minibatch(&data, &cfg).unwrap();
        let norm = tr.output.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 0.5 + 1e-12);
    }

    #[test]
    fn projected_gap_decays_like_inverse_sqrt() {
        let data = gaussian(200, 8, 21);
        let radius = 0.7;
        let kb = crate::spectral::kb_closed_form(
            data.len(),
            crate::spectral::estimate_rho2(&data, 1e-9, 100_000).unwrap().rho2,
            1,
        )
        .unwrap();

        // Constrained optimum oracle: deterministic full-batch projected
        // subgradient, long horizon, best-value tracking.
        let f_b = |w: &[f64]| objective(&data, w, 0.0, Loss::Hinge);
        let mut w = vec![0.0; 8];
        let mut best = f_b(&w);
        for t in 1..=200_000usize {
            let mut g = vec![0.0; 8];
            for i in 0..data.len() {
                let x = data.example(i);
                let coeff = Loss::Hinge.subgradient(x.dot(&w)) / data.len() as f64;
                x.add_scaled(coeff, &mut g);
            }
            let eta = radius / (t as f64).sqrt();
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= eta * gi;
            }
            project_ball(&mut w, radius);
            best = best.min(f_b(&w));
        }

        let gap = |t: usize| {
            let mut cfg = SchemeConfig::new(0.0, t, 3);
            cfg.step = StepRule::Constrained { radius, kb };
            let tr = run_projected_minibatch(&data, &cfg).unwrap();
            f_b(&tr.output) - best
        };
        let mut ratios: Vec<f64> =
            (0..5).map(|s| {
                let cfg_gap = |t: usize| {
                    let mut cfg = SchemeConfig::new(0.0, t, 30 + s);
                    cfg.step = StepRule::Constrained { radius, kb };
                    let tr = run_projected_minibatch(&data, &cfg).unwrap();
                    f_b(&tr.output) - best
                };
                cfg_gap(16_000) / cfg_gap(4_000)
            }).collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = ratios[2];
        assert!(med <= 0.6, "median gap(4T)/gap(T) = {med}, gap(T)={}", gap(4_000));
    }

    #[test]
    fn one_shot_with_one_node_is_a_sequential_run() {
        let data = gaussian(36, 5, 16);
        let partition = Partition::trivial(data.len());
        let mut cfg = SchemeConfig::new(0.2, 999, 8); // iterations overridden by shard size
        cfg.step = StepRule::COverLambdaT { c: 1.0, t0: 1.0 };
        let one = run_one_shot(&data, &partition, &cfg).unwrap();
        let mut seq_cfg = cfg.clone();
        seq_cfg.iterations = data.len();
        let seq = run_sequential(&data, &seq_cfg).unwrap();
        assert_eq!(one.average, seq.output);
        assert_eq!(one.node_outputs.len(), 1);
    }

    #[test]
    fn identical_shards_and_keys_average_to_the_node_output() {
        let data = gaussian(30, 5, 18);
        let all: Vec<u32> = (0..30).collect();
        let mut cfg = SchemeConfig::new(0.2, 30, 4);
        cfg.step = StepRule::COverLambdaT { c: 1.0, t0: 1.0 };
        let a = run_local(&data, &all, &cfg, 7).unwrap();
        let b = run_local(&data, &all, &cfg, 7).unwrap();
        let avg: Vec<f64> =
            a.output.iter().zip(&b.output).map(|(x, y)| (x + y) / 2.0).collect();
        assert_eq!(avg, a.output);
    }

    #[test]
    fn replays_are_bit_identical() {
        let data = gaussian(80, 10, 19);
        let partition = partition_uniform(&data, 4, 6).unwrap();
        let source = SampleSource::Finite { data: &data, partition: &partition };
        let p = max_degree_weights(&gen_named(NamedTopology::Cycle, 4).unwrap());
        let cfg = SchemeConfig::new(0.1, 150, 23);
        let a = run_intermittent(&source, &data, &p, 0.5, &cfg).unwrap();
        let b = run_intermittent(&source, &data, &p, 0.5, &cfg).unwrap();
        for (ta, tb) in a.node_traces.iter().zip(&b.node_traces) {
            assert_eq!(ta.output, tb.output);
            for (ca, cb) in ta.checkpoints.iter().zip(&tb.checkpoints) {
                assert_eq!(ca.objective.to_bits(), cb.objective.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_times_are_geometric_plus_final() {
        assert_eq!(checkpoint_times(1), vec![1]);
        assert_eq!(checkpoint_times(2), vec![1, 2]);
        assert_eq!(checkpoint_times(100), vec![1, 2, 4, 8, 16, 32, 64, 100]);
        assert_eq!(checkpoint_times(64), vec![1, 2, 4, 8, 16, 32, 64]);
    }
}
