//! Fastest-mixing Markov chain optimization: Birkhoff-von Neumann
//! decomposition, basis truncation and projected subgradient descent on the
//! second largest eigenvalue modulus.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{max_degree_weights, validate_doubly_stochastic, Graph, StochasticMatrix};
use crate::spectral::{check_symmetric, sym_eigenvalues_desc};

/// Convex combination of permutation matrices representing a doubly
/// stochastic matrix. Each term is `(theta, perm)` with `perm[i]` the column
/// matched to row `i`.
#[derive(Debug, Clone)]
pub struct BnDecomposition {
    pub terms: Vec<(f64, Vec<u32>)>,
    m: usize,
}

impl BnDecomposition {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn theta_sum(&self) -> f64 {
        self.terms.iter().map(|(t, _)| t).sum()
    }

    /// `Σ theta_l · Perm(perm_l)`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.m, self.m);
        for (theta, perm) in &self.terms {
            for (i, &j) in perm.iter().enumerate() {
                a[(i, j as usize)] += theta;
            }
        }
        a
    }
}

/// Maximum bipartite matching (Hopcroft-Karp). `adj[u]` lists the right
/// vertices reachable from left vertex `u`; returns `match_left[u]`.
fn hopcroft_karp(adj: &[Vec<u32>], right: usize) -> Vec<Option<u32>> {
    const NIL: u32 = u32::MAX;
    let left = adj.len();
    let mut match_l = vec![NIL; left];
    let mut match_r = vec![NIL; right];
    let mut dist = vec![0u32; left];

    loop {
        // BFS layering from free left vertices.
        let mut queue = std::collections::VecDeque::new();
        for u in 0..left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u as u32);
            } else {
                dist[u] = NIL;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u as usize] {
                let w = match_r[v as usize];
                if w == NIL {
                    found = true;
                } else if dist[w as usize] == NIL {
                    dist[w as usize] = dist[u as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        fn dfs(
            u: u32,
            adj: &[Vec<u32>],
            match_l: &mut [u32],
            match_r: &mut [u32],
            dist: &mut [u32],
        ) -> bool {
            for i in 0..adj[u as usize].len() {
                let v = adj[u as usize][i];
                let w = match_r[v as usize];
                if w == u32::MAX
                    || (dist[w as usize] == dist[u as usize] + 1
                        && dfs(w, adj, match_l, match_r, dist))
                {
                    match_l[u as usize] = v;
                    match_r[v as usize] = u;
                    return true;
                }
            }
            dist[u as usize] = u32::MAX;
            false
        }
        for u in 0..left as u32 {
            if match_l[u as usize] == NIL {
                dfs(u, adj, &mut match_l, &mut match_r, &mut dist);
            }
        }
    }
    match_l.into_iter().map(|v| (v != NIL).then_some(v)).collect()
}

/// Birkhoff-von Neumann decomposition: repeatedly finds a perfect matching
/// on the support of strictly positive entries (> `tol`), peels off the
/// minimal matched entry as one permutation term, and stops once the
/// residual's largest entry is at most `tol`. The loop is guarded at
/// `m² + m − 2` terms.
pub fn bn_decompose(a: &StochasticMatrix, tol: f64) -> Result<BnDecomposition> {
    let m = a.dim();
    if let Some(v) = validate_doubly_stochastic(a, None, tol.max(1e-9)) {
        return Err(Error::NotDoublyStochastic(v.to_string()));
    }
    let mut rest = a.as_matrix().clone();
    let mut terms: Vec<(f64, Vec<u32>)> = Vec::new();
    let guard = m * m + m - 2;
    for _ in 0..guard.max(1) {
        let max_entry = rest.iter().fold(0.0f64, |acc, &v| acc.max(v));
        if max_entry <= tol {
            return Ok(BnDecomposition { terms, m });
        }
        let adj: Vec<Vec<u32>> = (0..m)
            .map(|i| (0..m as u32).filter(|&j| rest[(i, j as usize)] > tol).collect())
            .collect();
        let matching = hopcroft_karp(&adj, m);
        let perm: Option<Vec<u32>> = matching.into_iter().collect();
        let perm = perm.ok_or_else(|| {
            Error::NotDoublyStochastic(
                "no perfect matching on a nonzero residual support".into(),
            )
        })?;
        let theta = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| rest[(i, j as usize)])
            .fold(f64::INFINITY, f64::min);
        for (i, &j) in perm.iter().enumerate() {
            let v = rest[(i, j as usize)] - theta;
            rest[(i, j as usize)] = v.max(0.0);
        }
        terms.push((theta, perm));
    }
    let residual = rest.iter().fold(0.0f64, |acc, &v| acc.max(v));
    if residual <= tol {
        Ok(BnDecomposition { terms, m })
    } else {
        Err(Error::Infeasible(format!(
            "decomposition guard of {guard} terms exceeded (residual {residual})"
        )))
    }
}

/// Truncated, symmetrized permutation basis with initial simplex weights.
#[derive(Debug, Clone)]
pub struct BasisSubset {
    /// `(P_i + P_iᵀ)/2` for each kept permutation.
    pub matrices: Vec<DMatrix<f64>>,
    /// Kept thetas renormalized to sum 1.
    pub theta0: Vec<f64>,
    /// Positions of the kept terms in the source decomposition.
    pub kept: Vec<usize>,
}

fn perm_matrix(perm: &[u32]) -> DMatrix<f64> {
    let m = perm.len();
    let mut p = DMatrix::zeros(m, m);
    for (i, &j) in perm.iter().enumerate() {
        p[(i, j as usize)] = 1.0;
    }
    p
}

/// Keeps the `k` terms whose lone contribution is closest to the heuristic
/// matrix in Frobenius norm (`r_i = ‖P^m − θ_i P_i‖_F`, smallest first, ties
/// broken by original order), symmetrizes them and renormalizes their
/// weights onto the simplex.
pub fn select_basis(
    heuristic: &StochasticMatrix,
    decomposition: &BnDecomposition,
    k: usize,
) -> Result<BasisSubset> {
    let total = decomposition.len();
    if k == 0 || k > total {
        return Err(Error::InvalidArgument(format!(
            "basis size {k} outside 1..={total}"
        )));
    }
    let pm = heuristic.as_matrix();
    let mut scored: Vec<(f64, usize)> = decomposition
        .terms
        .iter()
        .enumerate()
        .map(|(i, (theta, perm))| {
            let diff = pm - perm_matrix(perm).scale(*theta);
            (diff.norm(), i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = scored[..k].iter().map(|&(_, i)| i).collect();
    kept.sort_unstable();

    let weight: f64 = kept.iter().map(|&i| decomposition.terms[i].0).sum();
    let theta0: Vec<f64> = kept.iter().map(|&i| decomposition.terms[i].0 / weight).collect();
    let matrices = kept
        .iter()
        .map(|&i| {
            let p = perm_matrix(&decomposition.terms[i].1);
            (&p + p.transpose()).scale(0.5)
        })
        .collect();
    Ok(BasisSubset { matrices, theta0, kept })
}

/// Second largest eigenvalue modulus `max(λ₂, −λ_min)` of a symmetric
/// stochastic matrix. Zero for the 1x1 matrix.
pub fn slem(p: &StochasticMatrix) -> Result<f64> {
    check_symmetric(p.as_matrix(), 1e-9)?;
    if p.dim() == 1 {
        return Ok(0.0);
    }
    let vals = sym_eigenvalues_desc(p.as_matrix());
    Ok(vals[1].max(-vals[vals.len() - 1]))
}

fn combine(theta: &[f64], basis: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = basis[0].nrows();
    let mut p = DMatrix::zeros(m, m);
    for (t, b) in theta.iter().zip(basis) {
        p += b.scale(*t);
    }
    p
}

/// Eigenvalues (descending) and eigenvectors of a symmetric matrix.
fn sym_eigen_pairs(m: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let sym = (m + m.transpose()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Subgradient of `μ(θ) = max(λ₂(P(θ)), −λ_min(P(θ)))` over the symmetrized
/// basis: `±(vᵀB_i v)_i` with `v` the unit eigenvector of the eigenvalue
/// attaining the modulus and the sign negative when `−λ_min` attains it.
pub fn slem_subgradient(theta: &[f64], basis: &BasisSubset) -> Vec<f64> {
    let p = combine(theta, &basis.matrices);
    let (vals, vecs) = sym_eigen_pairs(&p);
    let n = vals.len();
    debug_assert!(n >= 2, "slem subgradient needs m >= 2");
    let (lam2, lam_min) = (vals[1], vals[n - 1]);
    let (v, sign) = if lam2 >= -lam_min {
        (&vecs[1], 1.0)
    } else {
        (&vecs[n - 1], -1.0)
    };
    basis
        .matrices
        .iter()
        .map(|b| {
            let mut quad = 0.0;
            for i in 0..n {
                let mut row = 0.0;
                for j in 0..n {
                    row += b[(i, j)] * v[j];
                }
                quad += v[i] * row;
            }
            sign * quad
        })
        .collect()
}

/// Euclidean projection onto the probability simplex
/// (sort-and-threshold).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    debug_assert!(!y.is_empty());
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    y.iter().map(|&yi| (yi - tau).max(0.0)).collect()
}

/// Output of [`optimize_fmmc`].
#[derive(Debug, Clone)]
pub struct FmmcResult {
    pub theta_star: Vec<f64>,
    pub best_matrix: StochasticMatrix,
    /// `(current_slem, best_slem)` per iteration; entry 0 is the starting
    /// point. The best column is nonincreasing.
    pub slem_trace: Vec<(f64, f64)>,
    pub heuristic_slem: f64,
    pub basis_size: usize,
    pub decomposition_size: usize,
}

/// Projected subgradient descent on the SLEM over a truncated permutation
/// basis of the max-degree heuristic matrix. Steps are `a0/sqrt(t)`; the
/// best iterate is tracked and returned. `k` is clamped to the
/// decomposition size.
pub fn optimize_fmmc(
    graph: &Graph,
    k: usize,
    iterations: usize,
    a0: f64,
) -> Result<FmmcResult> {
    optimize_fmmc_with(graph, |_| k, iterations, a0)
}

/// [`optimize_fmmc`] with the basis size given as a fraction of the
/// decomposition size.
pub fn optimize_fmmc_fraction(
    graph: &Graph,
    fraction: f64,
    iterations: usize,
    a0: f64,
) -> Result<FmmcResult> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "basis fraction must be in [0,1], got {fraction}"
        )));
    }
    optimize_fmmc_with(graph, |m| (m as f64 * fraction).ceil() as usize, iterations, a0)
}

fn optimize_fmmc_with(
    graph: &Graph,
    choose_k: impl FnOnce(usize) -> usize,
    iterations: usize,
    a0: f64,
) -> Result<FmmcResult> {
    let heuristic = max_degree_weights(graph);
    let heuristic_slem = slem(&heuristic)?;
    let decomposition = bn_decompose(&heuristic, 1e-12)?;
    let m_terms = decomposition.len();
    let k = choose_k(m_terms).clamp(1, m_terms);
    let basis = select_basis(&heuristic, &decomposition, k)?;

    let mut theta = basis.theta0.clone();
    let mut best_theta = theta.clone();
    let mut best = f64::INFINITY;
    let mut trace = Vec::with_capacity(iterations + 1);

    for t in 0..=iterations {
        let current = slem(&StochasticMatrix::from_dense(combine(&theta, &basis.matrices)))?;
        if current < best {
            best = current;
            best_theta = theta.clone();
        }
        trace.push((current, best));
        if t == iterations {
            break;
        }
        let g = slem_subgradient(&theta, &basis);
        let step = a0 / ((t + 1) as f64).sqrt();
        let moved: Vec<f64> =
            theta.iter().zip(&g).map(|(&th, &gi)| th - step * gi).collect();
        theta = project_simplex(&moved);
    }

    let best_matrix = StochasticMatrix::from_dense(combine(&best_theta, &basis.matrices));
    Ok(FmmcResult {
        theta_star: best_theta,
        best_matrix,
        slem_trace: trace,
        heuristic_slem,
        basis_size: k,
        decomposition_size: m_terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_named, NamedTopology};
    use rand::Rng;

    fn random_ds(m: usize, nperms: usize, seed: u64) -> StochasticMatrix {
        let mut r = crate::rng::stream(&[seed, 0xd5]);
        let mut acc = DMatrix::zeros(m, m);
        let mut weights: Vec<f64> = (0..nperms).map(|_| r.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        for w in &weights {
            let mut perm: Vec<u32> = (0..m as u32).collect();
            for i in (1..m).rev() {
                let j = r.gen_range(0..=i);
                perm.swap(i, j);
            }
            for (i, &j) in perm.iter().enumerate() {
                acc[(i, j as usize)] += w;
            }
        }
        StochasticMatrix::from_dense(acc)
    }

    #[test]
    fn permutation_matrix_is_a_single_term() {
        let mut p = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 2), (1, 0), (2, 3), (3, 1)] {
            p[(i, j)] = 1.0;
        }
        let d = bn_decompose(&StochasticMatrix::from_dense(p), 1e-12).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.terms[0].0, 1.0);
        assert_eq!(d.terms[0].1, vec![2, 0, 3, 1]);
    }

    #[test]
    fn two_by_two_uniform_splits_into_identity_and_swap() {
        let d = bn_decompose(&StochasticMatrix::uniform(2), 1e-12).unwrap();
        assert_eq!(d.len(), 2);
        let mut perms: Vec<Vec<u32>> = d.terms.iter().map(|(_, p)| p.clone()).collect();
        perms.sort();
        assert_eq!(perms, vec![vec![0, 1], vec![1, 0]]);
        for (theta, _) in &d.terms {
            assert!((theta - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn random_doubly_stochastic_matrices_reconstruct() {
        for seed in 0..10 {
            let a = random_ds(5, 6, seed);
            let d = bn_decompose(&a, 1e-12).unwrap();
            assert!(d.len() <= 5 * 5 + 5 - 2);
            assert!((d.theta_sum() - 1.0).abs() < 1e-10);
            let err = (d.reconstruct() - a.as_matrix()).abs().max();
            assert!(err < 1e-10, "seed {seed}: reconstruction error {err}");
            assert!(d.terms.iter().all(|&(t, _)| t > 1e-12));
        }
    }

    #[test]
    fn non_doubly_stochastic_input_is_rejected() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 0)] = 0.8;
        assert!(matches!(
            bn_decompose(&StochasticMatrix::from_dense(m), 1e-12),
            Err(Error::NotDoublyStochastic(_))
        ));
    }

    #[test]
    fn select_basis_keeps_smallest_residuals() {
        let a = random_ds(5, 6, 42);
        let d = bn_decompose(&a, 1e-12).unwrap();
        assert!(d.len() >= 3);

        // k = M keeps everything with the original weights.
        let full = select_basis(&a, &d, d.len()).unwrap();
        for (t0, (t, _)) in full.theta0.iter().zip(&d.terms) {
            assert!((t0 - t).abs() < 1e-12);
        }

        // Brute-force the two smallest Frobenius residuals.
        let pm = a.as_matrix();
        let mut rs: Vec<(f64, usize)> = d
            .terms
            .iter()
            .enumerate()
            .map(|(i, (theta, perm))| {
                let mut p = DMatrix::zeros(5, 5);
                for (r, &c) in perm.iter().enumerate() {
                    p[(r, c as usize)] = *theta;
                }
                ((pm - p).norm(), i)
            })
            .collect();
        rs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        let mut expect: Vec<usize> = rs[..2].iter().map(|&(_, i)| i).collect();
        expect.sort_unstable();
        let two = select_basis(&a, &d, 2).unwrap();
        assert_eq!(two.kept, expect);
        assert!((two.theta0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_term_basis_is_that_term() {
        let mut p = DMatrix::zeros(3, 3);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            p[(i, j)] = 1.0;
        }
        let sm = StochasticMatrix::from_dense(p);
        let d = bn_decompose(&sm, 1e-12).unwrap();
        let b = select_basis(&sm, &d, 1).unwrap();
        assert_eq!(b.theta0, vec![1.0]);
        assert_eq!(b.kept, vec![0]);
    }

    #[test]
    fn slem_pins() {
        assert!(slem(&StochasticMatrix::uniform(6)).unwrap().abs() < 1e-12);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((slem(&StochasticMatrix::from_dense(swap)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slem_matches_projected_spectral_norm() {
        // For symmetric DS P: slem(P) = spectral norm of P - J/m, computed
        // here with power iteration on (P - J/m)^2 as an independent route.
        for seed in 0..5 {
            let p = random_ds(6, 8, seed);
            let sym = StochasticMatrix::from_dense(
                (p.as_matrix() + p.as_matrix().transpose()).scale(0.5),
            );
            let m = 6;
            let r = sym.as_matrix() - DMatrix::from_element(m, m, 1.0 / m as f64);
            let r2 = &r * &r;
            let flat: Vec<f64> =
                (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| r2[(i, j)]).collect();
            let oracle = crate::spectral::lambda_max_dense_psd(&flat, m, &[seed]).sqrt();
            let got = slem(&sym).unwrap();
            assert!((got - oracle).abs() < 1e-8, "seed {seed}: {got} vs {oracle}");
        }
    }

    #[test]
    fn subgradient_of_single_basis_is_rayleigh_quotient() {
        let g = gen_named(NamedTopology::Cycle, 6).unwrap();
        let p = max_degree_weights(&g);
        let d = bn_decompose(&p, 1e-12).unwrap();
        let b = select_basis(&p, &d, 1).unwrap();
        let vals = sym_eigenvalues_desc(&b.matrices[0]);
        let mu = vals[1].max(-vals[vals.len() - 1]);
        let grad = slem_subgradient(&[1.0], &b);
        assert!((grad[0].abs() - mu.abs()).abs() < 1e-9, "{} vs {}", grad[0], mu);
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        let g = gen_named(NamedTopology::RandomGeometric { radius: None, seed: 4 }, 12).unwrap();
        let p = max_degree_weights(&g);
        let d = bn_decompose(&p, 1e-12).unwrap();
        let k = d.len().min(4);
        let b = select_basis(&p, &d, k).unwrap();
        let theta = b.theta0.clone();

        let mu_at = |th: &[f64]| {
            let m = combine(th, &b.matrices);
            let vals = sym_eigenvalues_desc(&m);
            vals[1].max(-vals[vals.len() - 1])
        };
        let g = slem_subgradient(&theta, &b);
        let eps = 1e-6;
        for i in 0..k {
            let mut up = theta.clone();
            up[i] += eps;
            let mut dn = theta.clone();
            dn[i] -= eps;
            let fd = (mu_at(&up) - mu_at(&dn)) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-4, "component {i}: fd {fd} vs g {}", g[i]);
        }
    }

    #[test]
    fn simplex_projection_pins_and_oracle() {
        // Already on the simplex: unchanged.
        let y = [0.2, 0.5, 0.3];
        let p = project_simplex(&y);
        for (a, b) in y.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
        // Vertex snap.
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);

        // Brute-force oracle: enumerate support sets, solve the equality-
        // constrained projection on each, keep the feasible KKT point.
        let oracle = |y: &[f64]| -> Vec<f64> {
            let n = y.len();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for mask in 1u32..(1 << n) {
                let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                let s: f64 = support.iter().map(|&i| y[i]).sum();
                let tau = (s - 1.0) / support.len() as f64;
                let mut x = vec![0.0; n];
                let mut ok = true;
                for &i in &support {
                    x[i] = y[i] - tau;
                    if x[i] < -1e-12 {
                        ok = false;
                    }
                }
                // KKT: clamped coordinates must satisfy y_i - tau <= 0.
                for (i, &yi) in y.iter().enumerate() {
                    if mask & (1 << i) == 0 && yi - tau > 1e-12 {
                        ok = false;
                    }
                }
                if ok {
                    let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                        best = Some((dist, x));
                    }
                }
            }
            best.expect("projection exists").1
        };

        let mut r = crate::rng::stream(&[77]);
        for _ in 0..200 {
            let y: Vec<f64> = (0..5).map(|_| r.gen_range(-2.0..2.0)).collect();
            let got = project_simplex(&y);
            let want = oracle(&y);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?} for {y:?}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(got.iter().all(|&v| v >= 0.0));
            // Idempotence.
            let again = project_simplex(&got);
            for (a, b) in got.iter().zip(&again) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optimizer_with_full_basis_starts_at_the_heuristic() {
        let g = gen_named(NamedTopology::RandomGeometric { radius: None, seed: 2 }, 14).unwrap();
        let heuristic = max_degree_weights(&g);
        let hslem = slem(&heuristic).unwrap();
        let d = bn_decompose(&heuristic, 1e-12).unwrap();
        let res = optimize_fmmc(&g, d.len(), 60, 0.1).unwrap();
        // With k = M the symmetrized truncation reproduces the heuristic, so
        // the best-so-far can never exceed it.
        assert!((res.slem_trace[0].0 - hslem).abs() < 1e-9);
        assert!(res.slem_trace.last().unwrap().1 <= hslem + 1e-12);
        // Monotone best column.
        for w in res.slem_trace.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-15);
        }
        // Valid, conformant output.
        assert_eq!(validate_doubly_stochastic(&res.best_matrix, Some(&g), 1e-10), None);
    }

    #[test]
    fn larger_basis_is_never_worse_on_paired_runs() {
        let g = gen_named(NamedTopology::RandomGeometric { radius: None, seed: 9 }, 10).unwrap();
        let heuristic = max_degree_weights(&g);
        let d = bn_decompose(&heuristic, 1e-12).unwrap();
        let m_terms = d.len();
        let full = optimize_fmmc(&g, m_terms, 150, 0.1).unwrap();
        let half = optimize_fmmc(&g, (m_terms / 2).max(1), 150, 0.1).unwrap();
        assert!(
            full.slem_trace.last().unwrap().1 <= half.slem_trace.last().unwrap().1 + 1e-9,
            "full {} vs half {}",
            full.slem_trace.last().unwrap().1,
            half.slem_trace.last().unwrap().1
        );
    }
}
