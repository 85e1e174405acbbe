//! Spectral quantities of the data: the covariance spectral norm, Monte
//! Carlo statistics of sampled principal Gram submatrices, and the
//! closed-form conditioning/tail bounds built from them.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{sparse_dot, Dataset};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, salt};

/// Result of [`estimate_rho2`].
#[derive(Debug, Clone, Copy)]
pub struct SpectralEstimate {
    /// Largest eigenvalue of the sample covariance `(1/N) Σ x xᵀ`.
    pub rho2: f64,
    pub iterations: usize,
    /// Relative Rayleigh residual `‖Σ̂v − λv‖ / λ` at termination.
    pub residual: f64,
}

/// Monte Carlo statistics of `σ₁` over sampled `k × k` principal Gram
/// submatrices.
#[derive(Debug, Clone)]
pub struct GramSampleStats {
    pub k: usize,
    pub trials: usize,
    pub replacement: bool,
    pub mean_sigma1: f64,
    pub std_sigma1: f64,
    pub max_sigma1: f64,
    /// σ₁ per trial, in trial order.
    pub per_trial: Vec<f64>,
}

/// Explicit `d × d` sample covariance (test/oracle use; `d` must be small).
pub fn covariance_matrix(dataset: &Dataset) -> DMatrix<f64> {
    let d = dataset.dim();
    let n = dataset.len();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let e = dataset.example(i);
        for (&a, &va) in e.indices.iter().zip(e.values) {
            for (&b, &vb) in e.indices.iter().zip(e.values) {
                cov[(a as usize, b as usize)] += va * vb;
            }
        }
    }
    cov.scale_mut(1.0 / n as f64);
    cov
}

/// `v ← (1/N) Σ_i x_i (x_iᵀ v)` without materializing the covariance.
fn covariance_apply(dataset: &Dataset, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..dataset.len() {
        let e = dataset.example(i);
        let s = e.dot(v);
        if s != 0.0 {
            e.add_scaled(s, out);
        }
    }
    let inv = 1.0 / dataset.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest eigenvalue of the sample covariance via power iteration applied
/// implicitly through the data (matrix-vector products only, never a `d × d`
/// matrix). Starts from the normalized all-ones vector; restarts once from a
/// seeded random vector if the first half of the budget stagnates.
pub fn estimate_rho2(
    dataset: &Dataset,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SpectralEstimate> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot estimate rho2 of an empty dataset".into()));
    }
    let d = dataset.dim();
    if d == 0 {
        return Ok(SpectralEstimate { rho2: 0.0, iterations: 0, residual: 0.0 });
    }

    let ones = vec![1.0 / (d as f64).sqrt(); d];
    let budget = max_iterations.max(2);
    let first = budget / 2;

    let mut total_iters = 0;
    for phase in 0..2 {
        let mut v = if phase == 0 {
            ones.clone()
        } else {
            let mut r = rng::stream(&[salt::RESTART, 0x9d2c]);
            let mut v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            v
        };
        let iters = if phase == 0 { first } else { budget - first };
        let mut u = vec![0.0; d];
        let mut last = SpectralEstimate { rho2: 0.0, iterations: 0, residual: f64::INFINITY };
        for it in 0..iters {
            total_iters += 1;
            covariance_apply(dataset, &v, &mut u);
            let lambda: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
            let nu = norm(&u);
            if nu == 0.0 {
                if lambda == 0.0 && it == 0 && phase == 1 {
                    // Covariance annihilates a random vector: treat as zero.
                    return Ok(SpectralEstimate { rho2: 0.0, iterations: total_iters, residual: 0.0 });
                }
                break; // degenerate start, try the restart phase
            }
            let res_norm: f64 = u
                .iter()
                .zip(&v)
                .map(|(ui, vi)| {
                    let r = ui - lambda * vi;
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            let rel = if lambda > 0.0 { res_norm / lambda } else { f64::INFINITY };
            last = SpectralEstimate { rho2: lambda, iterations: total_iters, residual: rel };
            if rel <= tolerance {
                return Ok(last);
            }
            v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi = ui / nu);
        }
        if phase == 1 {
            return Err(Error::NoConvergence {
                estimate: last.rho2,
                iterations: total_iters,
                residual: last.residual,
            });
        }
    }
    unreachable!("restart phase returns or errors");
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, by bisection on the Sturm sequence
/// count (number of eigenvalues below `x`).
fn tridiag_lambda_max(alpha: &[f64], beta: &[f64]) -> f64 {
    let j = alpha.len();
    debug_assert_eq!(beta.len() + 1, j);
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = alpha[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for k in 1..j {
            let b2 = beta[k - 1] * beta[k - 1];
            let denom = if d == 0.0 { f64::MIN_POSITIVE } else { d };
            d = alpha[k] - x - b2 / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    // Gershgorin bracket.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..j {
        let spread = if k > 0 { beta[k - 1].abs() } else { 0.0 }
            + if k < j - 1 { beta[k].abs() } else { 0.0 };
        lo = lo.min(alpha[k] - spread);
        hi = hi.max(alpha[k] + spread);
    }
    if lo == hi {
        return lo;
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) == j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One Lanczos sweep with full reorthogonalization from a given start;
/// `Some(theta)` once the top Ritz value settles (or the Krylov space
/// closes), `None` if the dimension cap is hit first.
fn lanczos_phase<M>(n: usize, matvec: &M, start: Vec<f64>, max_dim: usize) -> Option<f64>
where
    M: Fn(&[f64], &mut [f64]),
{
    const VALUE_TOL: f64 = 1e-13;
    let mut q = start;
    let mut basis: Vec<Vec<f64>> = vec![q.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut theta_prev = f64::NEG_INFINITY;
    let mut stagnant = 0;

    loop {
        matvec(&q, &mut w);
        let alpha: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
        alphas.push(alpha);
        // Orthogonalize against the whole basis, twice.
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = b.iter().zip(&w).map(|(a, c)| a * c).sum();
                if proj != 0.0 {
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= proj * bi;
                    }
                }
            }
        }
        let beta = norm(&w);
        let theta = tridiag_lambda_max(&alphas, &betas);
        let scale = theta.abs().max(1e-300);
        if beta <= 1e-14 * scale.max(1.0) {
            // The Krylov space closed: theta is exact for this start.
            return Some(theta.max(0.0));
        }
        if (theta - theta_prev).abs() <= VALUE_TOL * scale {
            stagnant += 1;
            if stagnant >= 3 {
                return Some(theta.max(0.0));
            }
        } else {
            stagnant = 0;
        }
        theta_prev = theta;
        if alphas.len() >= max_dim {
            return None;
        }
        betas.push(beta);
        q = w.iter().map(|x| x / beta).collect();
        basis.push(q.clone());
    }
}

/// Largest eigenvalue of a symmetric PSD operator given as `matvec`, via
/// Lanczos with full reorthogonalization. Runs two phases, the all-ones
/// start (which closes after one step on the all-ones Gram of duplicated
/// points, keeping that case exact) and a keyed random start (almost surely
/// not orthogonal to the top eigenspace), and keeps the larger Ritz value.
/// Calls `on_stall` when either phase fails to settle.
pub(crate) fn lanczos_lambda_max<M, S>(
    n: usize,
    matvec: M,
    restart_key: &[u64],
    on_stall: S,
) -> f64
where
    M: Fn(&[f64], &mut [f64]),
    S: FnOnce() -> f64,
{
    let max_dim = n.min(220);
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let random = {
        let mut r = rng::stream(restart_key);
        let mut v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        v
    };
    match (
        lanczos_phase(n, &matvec, ones, max_dim),
        lanczos_phase(n, &matvec, random, max_dim),
    ) {
        (Some(a), Some(b)) => a.max(b),
        _ => on_stall(),
    }
}

/// Largest eigenvalue of a dense symmetric PSD matrix (row-major, `n × n`),
/// falling back to a full symmetric eigensolve on the rare Lanczos stall.
pub(crate) fn lambda_max_dense_psd(a: &[f64], n: usize, restart_key: &[u64]) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    let matvec = |v: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &a[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (rj, vj) in row.iter().zip(v) {
                acc += rj * vj;
            }
            *o = acc;
        }
    };
    lanczos_lambda_max(n, matvec, restart_key, || {
        let m = DMatrix::from_row_slice(n, n, a);
        sym_eigenvalues_desc(&m)[0]
    })
}

/// All eigenvalues of a symmetric matrix, sorted descending. The input is
/// symmetrized exactly before the solve.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()).scale(0.5);
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
    vals
}

/// Checks symmetry within `tol` (absolute, on entries).
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > tol {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Samples `k` row indices and returns `σ₁` of their Gram matrix; one Monte
/// Carlo trial of [`sample_gram_stats`].
fn gram_trial(dataset: &Dataset, k: usize, replacement: bool, seed: u64, trial: u64) -> f64 {
    let n = dataset.len();
    let mut r = rng::stream(&[seed, salt::GRAM_TRIAL, trial]);
    let idx: Vec<usize> = if replacement {
        (0..k).map(|_| r.gen_range(0..n)).collect()
    } else {
        // Floyd's algorithm: k distinct indices in O(k) draws.
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        for j in (n - k)..n {
            let t = r.gen_range(0..=j);
            let v = if chosen.contains(&t) { j } else { t };
            let pos = chosen.partition_point(|&x| x < v);
            chosen.insert(pos, v);
        }
        chosen
    };

    let mut gram = vec![0.0f64; k * k];
    for a in 0..k {
        let ea = dataset.example(idx[a]);
        gram[a * k + a] = sparse_dot(ea, ea);
        for b in (a + 1)..k {
            let v = sparse_dot(ea, dataset.example(idx[b]));
            gram[a * k + b] = v;
            gram[b * k + a] = v;
        }
    }
    lambda_max_dense_psd(&gram, k, &[seed, salt::RESTART, trial])
}

/// Monte Carlo statistics of `σ₁` over `trials` sampled `k × k` principal
/// Gram submatrices. Trials run in parallel on per-trial keyed RNG streams
/// and are aggregated in trial order, so the result is independent of the
/// worker count.
pub fn sample_gram_stats(
    dataset: &Dataset,
    k: usize,
    trials: usize,
    replacement: bool,
    seed: u64,
) -> Result<GramSampleStats> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("submatrix size must be positive".into()));
    }
    if !replacement && k > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {k} distinct rows from {} without replacement",
            dataset.len()
        )));
    }
    if replacement && dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }

    let per_trial = par::map_collect(trials, |t| gram_trial(dataset, k, replacement, seed, t as u64));
    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        per_trial.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    let max = per_trial.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(GramSampleStats {
        k,
        trials,
        replacement,
        mean_sigma1: mean,
        std_sigma1: var.sqrt(),
        max_sigma1: max,
        per_trial,
    })
}

/// Closed-form mini-batch conditioning constant
/// `1 + (b-1)(N ρ² - 1)/(N - 1)`; always in `[1, b]` on the valid domain.
pub fn kb_closed_form(n: usize, rho2: f64, b: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if b < 1 || b > n {
        return Err(Error::InvalidArgument(format!("batch size {b} outside 1..={n}")));
    }
    // Estimated rho2 can land a hair outside [1/N, 1]; accept a small slack
    // and clamp.
    let lo = 1.0 / n as f64;
    if rho2 < lo - 1e-9 || rho2 > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "rho2 {rho2} outside [{lo}, 1]"
        )));
    }
    let rho2 = rho2.clamp(lo, 1.0);
    Ok(1.0 + (b as f64 - 1.0) * (n as f64 * rho2 - 1.0) / (n as f64 - 1.0))
}

/// Two-branch Bernstein tail bound on
/// `P(|σ₁(Q_K)/K − ρ²| ≥ r')`, clamped to `[0, 1]`:
/// `d·exp(−3K r'²/(16 ρ²))` for `r' ≤ 2ρ²`, else `d·exp(−3K r'/8)`.
pub fn bernstein_tail(k: usize, rho2: f64, d: usize, r_prime: f64) -> f64 {
    debug_assert!(k >= 1 && r_prime > 0.0);
    let kf = k as f64;
    let raw = if r_prime <= 2.0 * rho2 {
        d as f64 * (-3.0 * kf * r_prime * r_prime / (16.0 * rho2)).exp()
    } else {
        d as f64 * (-3.0 * kf * r_prime / 8.0).exp()
    };
    raw.clamp(0.0, 1.0)
}

/// High-probability bound for sampling without replacement:
/// `K ρ² + sqrt(8 C K ρ² log(d/δ))`, valid with probability `1 − δ`.
pub fn without_replacement_bound(
    n: usize,
    k: usize,
    rho2: f64,
    d: usize,
    delta: f64,
    c: f64,
) -> f64 {
    debug_assert!(k >= 1 && k <= n && delta > 0.0 && delta <= d as f64 && c > 0.0);
    let kf = k as f64;
    kf * rho2 + (8.0 * c * kf * rho2 * (d as f64 / delta).ln()).sqrt()
}

/// `trace / spectral norm` of a symmetric PSD matrix; lies in `[1, rank]`.
pub fn intrinsic_dimension(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m, 1e-10)?;
    let vals = sym_eigenvalues_desc(m);
    let top = vals[0];
    if top <= 0.0 {
        return Err(Error::InvalidArgument(
            "intrinsic dimension needs a nonzero PSD matrix".into(),
        ));
    }
    let bottom = *vals.last().expect("non-empty spectrum");
    if bottom < -1e-10 * top {
        return Err(Error::InvalidArgument(format!(
            "matrix is not PSD (lambda_min = {bottom})"
        )));
    }
    Ok(m.trace() / top)
}
