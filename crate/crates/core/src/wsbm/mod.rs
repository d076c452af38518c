//! Weighted stochastic block model over the co-purchase graph, fitted by
//! mean-field variational Bayes EM.
//!
//! Every unordered vertex pair ("dyad") carries a degree-corrected Poisson
//! existence likelihood; dyads with positive weight additionally carry an
//! exponential-family weight likelihood. The two are blended by a tuning
//! parameter α: log P(A | Z, θ) = α·Σ_dyads T_ε·η_ε + (1−α)·Σ_edges T_ω·η_ω.
//! Inference factorizes q(Z, θ) = q_θ(θ)·Π_i q_Z(Z_i) and alternates closed
//! conjugate updates of q_θ (M-step) with sequential per-vertex updates of
//! q_Z (E-step), driving the evidence lower bound L(q) monotonically upward.

pub mod family;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copurchase::CoPurchaseGraph;
use crate::error::{Error, Result};
pub use family::{Gamma, NormalGamma, Priors, WeightFamily};

/// Everything a fit needs besides the graph and K.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    /// Blend between existence (α) and weight (1−α) likelihoods.
    pub alpha_mix: f64,
    pub weight_family: WeightFamily,
    pub priors: Priors,
    /// Rescale prior rates to the graph's global statistics before fitting
    /// (see [`effective_priors`]). On by default: degree products set the
    /// existence exposure's scale, and a unit prior rate sits orders of
    /// magnitude off it, which makes sparsely-populated bundles look like
    /// prior-mean rates and drives every label into one community.
    pub scale_priors: bool,
    /// Stop once an EM cycle improves the ELBO by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Seeded restarts per K; the best ELBO wins.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha_mix: 0.5,
            weight_family: WeightFamily::Poisson,
            priors: Priors::default(),
            scale_priors: true,
            tol: 1e-6,
            max_iter: 200,
            restarts: 5,
        }
    }
}

/// The priors a fit actually uses: the configured hyperparameters, with
/// rates rescaled to the graph's global moments when `scale_priors` is set.
///
/// Scaling keeps each prior's pseudo-observation count (shape) while moving
/// its mean onto the data scale — existence mean ΣA/Σd_id_j, weight mean
/// equal to the average positive weight, normal location/precision matched
/// to the weight sample moments. Without this the Gamma(1, 1) defaults put
/// unit-mean rates against exposures of order d², so any bundle that loses
/// its dyads snaps back to a rate thousands of times too large and the
/// E-step walls every vertex out of under-populated communities.
pub fn effective_priors(graph: &CoPurchaseGraph, config: &FitConfig) -> Priors {
    if !config.scale_priors {
        return config.priors;
    }
    let n = graph.n();
    let degrees = graph.degrees();
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut edges = 0.0;
    for i in 0..n {
        for &(j, w) in graph.neighbors(i) {
            if j > i {
                sum_w += w;
                sum_w2 += w * w;
                edges += 1.0;
            }
        }
    }
    let total_d: f64 = degrees.iter().sum();
    let sum_d2: f64 = degrees.iter().map(|d| d * d).sum();
    let exposure = (total_d * total_d - sum_d2) / 2.0;

    let mut priors = config.priors;
    if sum_w > 0.0 && exposure > 0.0 {
        let theta_hat = sum_w / exposure;
        priors.existence = Gamma::new(priors.existence.a, priors.existence.a / theta_hat);
    }
    if edges > 0.0 && sum_w > 0.0 {
        let lambda_hat = sum_w / edges;
        priors.poisson_weight = Gamma::new(
            priors.poisson_weight.a,
            priors.poisson_weight.a / lambda_hat,
        );
        let mean = lambda_hat;
        let var = (sum_w2 / edges - mean * mean).max(1e-12);
        priors.normal_weight = NormalGamma::new(
            mean,
            priors.normal_weight.kappa,
            priors.normal_weight.a,
            priors.normal_weight.a * var,
        );
    }
    priors
}

/// Point parameters for every unordered community bundle, used by the
/// hard-label likelihood. Matrices are K×K and symmetric.
#[derive(Debug, Clone)]
pub struct BundleParams {
    /// Existence rates θ_kl (> 0).
    pub existence_rate: DMatrix<f64>,
    pub weight: WeightParams,
}

/// Weight-family point parameters per bundle.
#[derive(Debug, Clone)]
pub enum WeightParams {
    /// Poisson rates λ_kl (> 0).
    Poisson(DMatrix<f64>),
    /// Normal means and precisions (τ > 0).
    Normal { mu: DMatrix<f64>, tau: DMatrix<f64> },
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::validation(format!(
                    "{what} must be symmetric (bundles are unordered)"
                )));
            }
        }
    }
    Ok(())
}

/// Combined log likelihood of hard labels under point bundle parameters:
/// the existence sum runs over every unordered dyad (non-edges included),
/// the weight sum only over dyads with positive weight. Base measures are
/// dropped, matching the rest of the module.
pub fn log_likelihood(
    graph: &CoPurchaseGraph,
    labels: &[usize],
    params: &BundleParams,
    alpha_mix: f64,
) -> Result<f64> {
    let n = graph.n();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} vertices",
            labels.len()
        )));
    }
    check_symmetric(&params.existence_rate, "existence rate matrix")?;
    let k = params.existence_rate.nrows();
    if let Some(&bad) = labels.iter().find(|&&z| z >= k) {
        return Err(Error::validation(format!("label {bad} outside [0, {k})")));
    }
    if !(0.0..=1.0).contains(&alpha_mix) {
        return Err(Error::validation(format!(
            "alpha_mix {alpha_mix} outside [0, 1]"
        )));
    }
    if params.existence_rate.iter().any(|&t| t <= 0.0) {
        return Err(Error::validation("existence rates must be positive"));
    }
    match &params.weight {
        WeightParams::Poisson(lambda) => {
            check_symmetric(lambda, "weight rate matrix")?;
            if lambda.nrows() != k {
                return Err(Error::Dimension("family matrices disagree on K".into()));
            }
            if lambda.iter().any(|&l| l <= 0.0) {
                return Err(Error::validation("Poisson weight rates must be positive"));
            }
        }
        WeightParams::Normal { mu, tau } => {
            check_symmetric(mu, "weight mean matrix")?;
            check_symmetric(tau, "weight precision matrix")?;
            if mu.nrows() != k || tau.nrows() != k {
                return Err(Error::Dimension("family matrices disagree on K".into()));
            }
            if tau.iter().any(|&t| t <= 0.0) {
                return Err(Error::validation("weight precisions must be positive"));
            }
        }
    }

    let degrees = graph.degrees();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let theta = params.existence_rate[(labels[i], labels[j])];
            let a_ij = graph.weight(i, j);
            total += alpha_mix
                * family::dot2(
                    family::t_existence(a_ij, degrees[i], degrees[j]),
                    family::eta_existence(theta),
                );
            if a_ij > 0.0 {
                total += (1.0 - alpha_mix)
                    * match &params.weight {
                        WeightParams::Poisson(lambda) => family::dot2(
                            family::t_poisson_weight(a_ij),
                            family::eta_poisson_weight(lambda[(labels[i], labels[j])]),
                        ),
                        WeightParams::Normal { mu, tau } => family::dot3(
                            family::t_normal_weight(a_ij),
                            family::eta_normal_weight(
                                mu[(labels[i], labels[j])],
                                tau[(labels[i], labels[j])],
                            ),
                        ),
                    };
            }
        }
    }
    Ok(total)
}

/// Fitted mean-field posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WsbmModel {
    pub k: usize,
    pub alpha_mix: f64,
    pub weight_family: WeightFamily,
    /// n×K row-stochastic label posteriors, rows in graph vertex order.
    pub qz: DMatrix<f64>,
    /// Existence-rate posteriors per unordered bundle (k ≤ l, triangular).
    pub existence: Vec<Gamma>,
    /// Poisson weight posteriors (present iff `weight_family` is Poisson).
    pub weight_poisson: Option<Vec<Gamma>>,
    /// Normal weight posteriors (present iff `weight_family` is Normal).
    pub weight_normal: Option<Vec<NormalGamma>>,
    /// Final evidence lower bound.
    pub elbo: f64,
    /// ELBO after each EM cycle (non-decreasing).
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    /// User ids in vertex order — the graph's user index.
    pub user_ids: Vec<u32>,
}

/// Flat index of unordered bundle (a, b), a ≤ b < K.
pub fn bundle_index(k: usize, a: usize, b: usize) -> usize {
    debug_assert!(a <= b && b < k);
    a * k - a * (a + 1) / 2 + b
}

pub fn bundle_count(k: usize) -> usize {
    k * (k + 1) / 2
}

impl WsbmModel {
    pub fn n(&self) -> usize {
        self.qz.nrows()
    }

    /// Posterior-mean existence rates as a symmetric K×K matrix — the θ a
    /// point summary of the model reports.
    pub fn theta(&self) -> DMatrix<f64> {
        let k = self.k;
        DMatrix::from_fn(k, k, |a, b| {
            self.existence[bundle_index(k, a.min(b), a.max(b))].mean()
        })
    }

    /// Hard community labels: argmax over each qZ row, ties toward the
    /// smaller index.
    pub fn communities(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.k {
                    if self.qz[(i, k)] > self.qz[(i, best)] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    /// Members per community under the hard assignment.
    pub fn community_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for label in self.communities() {
            sizes[label] += 1;
        }
        sizes
    }

    /// All other members of the user's community — the collaborative
    /// neighbor set.
    pub fn nearest_neighbors(&self, user: u32) -> Result<Vec<u32>> {
        let vertex = self
            .user_ids
            .binary_search(&user)
            .map_err(|_| Error::UnknownUser(user))?;
        let labels = self.communities();
        let own = labels[vertex];
        Ok((0..self.n())
            .filter(|&v| v != vertex && labels[v] == own)
            .map(|v| self.user_ids[v])
            .collect())
    }

    /// Self-describing JSON persistence; floating-point fields survive the
    /// round trip bit-identically (shortest-representation encoding).
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("malformed model document: {e}")))
    }
}

/// Soft (expected) sufficient-statistic totals per unordered bundle.
struct BundleStats {
    /// Σ A_ij — doubles as the existence count and the weight-sum statistic.
    x: Vec<f64>,
    /// Σ d_i·d_j over all dyads — the existence exposure.
    y: Vec<f64>,
    /// Σ 1 over positive dyads.
    wn: Vec<f64>,
    /// Σ A_ij² over positive dyads (normal family only; cheap regardless).
    wxx: Vec<f64>,
}

/// Computes expected bundle statistics under row-stochastic `qz`
/// (row-major, n×K). The exposure total uses the identity
/// Σ_{i≠j} d_i d_j μ_ia μ_jb = t_a t_b − Σ_i d_i² μ_ia μ_ib, avoiding any
/// explicit non-edge iteration.
fn bundle_stats(graph: &CoPurchaseGraph, qz: &[f64], k: usize) -> BundleStats {
    let n = graph.n();
    let nb = bundle_count(k);
    let degrees = graph.degrees();

    // Per-vertex neighbor aggregates: Σ_j A_ij μ_jl, Σ_j 1 μ_jl, Σ_j A² μ_jl.
    let mut amk = vec![0.0; n * k];
    let mut bmk = vec![0.0; n * k];
    let mut smk = vec![0.0; n * k];
    for i in 0..n {
        for &(j, w) in graph.neighbors(i) {
            let row = &qz[j * k..(j + 1) * k];
            for l in 0..k {
                amk[i * k + l] += w * row[l];
                bmk[i * k + l] += row[l];
                smk[i * k + l] += w * w * row[l];
            }
        }
    }

    // Full K×K contractions Σ_i μ_ia · agg[i, b].
    let mut xfull = vec![0.0; k * k];
    let mut nfull = vec![0.0; k * k];
    let mut sfull = vec![0.0; k * k];
    let mut t = vec![0.0; k];
    let mut u = vec![0.0; k * k];
    for i in 0..n {
        let row = &qz[i * k..(i + 1) * k];
        let d = degrees[i];
        for a in 0..k {
            let mu_a = row[a];
            if mu_a == 0.0 {
                continue;
            }
            for b in 0..k {
                xfull[a * k + b] += mu_a * amk[i * k + b];
                nfull[a * k + b] += mu_a * bmk[i * k + b];
                sfull[a * k + b] += mu_a * smk[i * k + b];
                u[a * k + b] += d * d * mu_a * row[b];
            }
        }
        for (l, &mu) in row.iter().enumerate() {
            t[l] += d * mu;
        }
    }

    let mut stats = BundleStats {
        x: vec![0.0; nb],
        y: vec![0.0; nb],
        wn: vec![0.0; nb],
        wxx: vec![0.0; nb],
    };
    for a in 0..k {
        for b in a..k {
            let idx = bundle_index(k, a, b);
            if a == b {
                stats.x[idx] = xfull[a * k + a] / 2.0;
                stats.wn[idx] = nfull[a * k + a] / 2.0;
                stats.wxx[idx] = sfull[a * k + a] / 2.0;
                stats.y[idx] = (t[a] * t[a] - u[a * k + a]) / 2.0;
            } else {
                stats.x[idx] = xfull[a * k + b];
                stats.wn[idx] = nfull[a * k + b];
                stats.wxx[idx] = sfull[a * k + b];
                stats.y[idx] = t[a] * t[b] - u[a * k + b];
            }
        }
    }
    stats
}

/// Conjugate bundle posteriors plus their expected natural parameters,
/// expanded to dense symmetric K×K tables for the E-step inner loop.
struct Posteriors {
    existence: Vec<Gamma>,
    weight_poisson: Option<Vec<Gamma>>,
    weight_normal: Option<Vec<NormalGamma>>,
    /// E[ln θ] and E[θ] per (a, b), full K×K.
    elog: Vec<f64>,
    etheta: Vec<f64>,
    /// Weight-family expected η components, full K×K (η₃ zero for Poisson).
    weta1: Vec<f64>,
    weta2: Vec<f64>,
    weta3: Vec<f64>,
}

fn m_step(stats: &BundleStats, config: &FitConfig, k: usize) -> Posteriors {
    let nb = bundle_count(k);
    let alpha = config.alpha_mix;
    let beta = 1.0 - alpha;

    let existence: Vec<Gamma> = (0..nb)
        .map(|idx| {
            config
                .priors
                .existence
                .posterior(alpha * stats.x[idx], alpha * stats.y[idx])
        })
        .collect();

    let (weight_poisson, weight_normal) = match config.weight_family {
        WeightFamily::Poisson => (
            Some(
                (0..nb)
                    .map(|idx| {
                        config
                            .priors
                            .poisson_weight
                            .posterior(beta * stats.x[idx], beta * stats.wn[idx])
                    })
                    .collect::<Vec<_>>(),
            ),
            None,
        ),
        WeightFamily::Normal => (
            None,
            Some(
                (0..nb)
                    .map(|idx| {
                        config.priors.normal_weight.posterior(
                            beta * stats.wn[idx],
                            beta * stats.x[idx],
                            beta * stats.wxx[idx],
                        )
                    })
                    .collect::<Vec<_>>(),
            ),
        ),
    };

    let mut post = Posteriors {
        existence,
        weight_poisson,
        weight_normal,
        elog: vec![0.0; k * k],
        etheta: vec![0.0; k * k],
        weta1: vec![0.0; k * k],
        weta2: vec![0.0; k * k],
        weta3: vec![0.0; k * k],
    };
    for a in 0..k {
        for b in 0..k {
            let idx = bundle_index(k, a.min(b), a.max(b));
            post.elog[a * k + b] = post.existence[idx].mean_log();
            post.etheta[a * k + b] = post.existence[idx].mean();
            match (&post.weight_poisson, &post.weight_normal) {
                (Some(wp), None) => {
                    post.weta1[a * k + b] = wp[idx].mean_log();
                    post.weta2[a * k + b] = wp[idx].mean();
                }
                (None, Some(wn)) => {
                    let eta = wn[idx].mean_eta();
                    post.weta1[a * k + b] = eta[0];
                    post.weta2[a * k + b] = eta[1];
                    post.weta3[a * k + b] = eta[2];
                }
                _ => unreachable!("exactly one weight family is active"),
            }
        }
    }
    post
}

/// ELBO = E_q[log P(A|Z,θ)] + E_q[log p(Z) − log q(Z)] − Σ KL(q_θ ‖ p_θ).
fn compute_elbo(
    stats: &BundleStats,
    post: &Posteriors,
    config: &FitConfig,
    qz: &[f64],
    n: usize,
    k: usize,
) -> f64 {
    let alpha = config.alpha_mix;
    let beta = 1.0 - alpha;
    let nb = bundle_count(k);

    let mut elik = 0.0;
    let mut kl = 0.0;
    for idx in 0..nb {
        let g = &post.existence[idx];
        elik += alpha * (stats.x[idx] * g.mean_log() - stats.y[idx] * g.mean());
        kl += g.kl(&config.priors.existence);
        match (&post.weight_poisson, &post.weight_normal) {
            (Some(wp), None) => {
                elik += beta * (stats.x[idx] * wp[idx].mean_log() - stats.wn[idx] * wp[idx].mean());
                kl += wp[idx].kl(&config.priors.poisson_weight);
            }
            (None, Some(wn)) => {
                let eta = wn[idx].mean_eta();
                elik += beta
                    * (stats.x[idx] * eta[0] + stats.wxx[idx] * eta[1] + stats.wn[idx] * eta[2]);
                kl += wn[idx].kl(&config.priors.normal_weight);
            }
            _ => unreachable!(),
        }
    }

    let ln_k = (k as f64).ln();
    let mut label_term = 0.0;
    for i in 0..n {
        for l in 0..k {
            let mu = qz[i * k + l];
            if mu > 0.0 {
                label_term += mu * (-ln_k - mu.ln());
            }
        }
    }

    elik + label_term - kl
}

/// One sequential ascending-index sweep of per-vertex coordinate updates.
/// `g_weighted[l]` maintains Σ_j d_j·μ_jl incrementally so the exposure term
/// needs no pass over non-edges.
fn e_sweep(
    graph: &CoPurchaseGraph,
    qz: &mut [f64],
    g_weighted: &mut [f64],
    post: &Posteriors,
    config: &FitConfig,
    k: usize,
) {
    let n = graph.n();
    let alpha = config.alpha_mix;
    let beta = 1.0 - alpha;
    let degrees = graph.degrees();
    let is_normal = post.weight_normal.is_some();

    let mut s_a = vec![0.0; k];
    let mut s_w = vec![0.0; k];
    let mut s_a2 = vec![0.0; k];
    let mut logits = vec![0.0; k];

    for i in 0..n {
        for l in 0..k {
            s_a[l] = 0.0;
            s_w[l] = 0.0;
            s_a2[l] = 0.0;
        }
        for &(j, w) in graph.neighbors(i) {
            let row = &qz[j * k..(j + 1) * k];
            for l in 0..k {
                s_a[l] += w * row[l];
                s_w[l] += row[l];
                if is_normal {
                    s_a2[l] += w * w * row[l];
                }
            }
        }
        let d_i = degrees[i];
        let own = &qz[i * k..(i + 1) * k];

        for (kk, logit) in logits.iter_mut().enumerate() {
            let mut acc = 0.0;
            for l in 0..k {
                let cell = kk * k + l;
                // Σ_{j≠i} d_j μ_jl, excluding the vertex being updated.
                let gd = g_weighted[l] - d_i * own[l];
                acc += alpha * (post.elog[cell] * s_a[l] - post.etheta[cell] * d_i * gd);
                acc += if is_normal {
                    beta * (post.weta1[cell] * s_a[l]
                        + post.weta2[cell] * s_a2[l]
                        + post.weta3[cell] * s_w[l])
                } else {
                    beta * (post.weta1[cell] * s_a[l] - post.weta2[cell] * s_w[l])
                };
            }
            *logit = acc;
        }

        // Softmax with the usual max shift; the uniform label prior is a
        // constant and drops out.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for l in 0..k {
            logits[l] = (logits[l] - max).exp();
            sum += logits[l];
        }
        for l in 0..k {
            let new = logits[l] / sum;
            g_weighted[l] += d_i * (new - qz[i * k + l]);
            qz[i * k + l] = new;
        }
    }
}

/// Fits the model for a single K from one seeded initialization.
///
/// Each cycle runs the conjugate M-step, evaluates the ELBO, then performs a
/// sequential E-sweep; the loop stops when a cycle improves the ELBO by less
/// than `tol` or after `max_iter` cycles.
pub fn vb_fit(
    graph: &CoPurchaseGraph,
    k: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<WsbmModel> {
    let n = graph.n();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!(
            "community count {k} outside [1, n={n}]"
        )));
    }
    if !(0.0..=1.0).contains(&config.alpha_mix) {
        return Err(Error::validation(format!(
            "alpha_mix {} outside [0, 1]",
            config.alpha_mix
        )));
    }
    if config.tol <= 0.0 {
        return Err(Error::validation("tolerance must be positive"));
    }

    // Resolve the priors once so the M-step, the ELBO's KL terms, and the
    // returned posteriors all see the same hyperparameters.
    let config = &FitConfig {
        priors: effective_priors(graph, config),
        scale_priors: false,
        ..*config
    };

    // Random simplex rows: normalized Exp(1) draws, i.e. uniform Dirichlet.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qz = vec![0.0; n * k];
    for i in 0..n {
        let mut sum = 0.0;
        for l in 0..k {
            let e: f64 = rand_distr::Distribution::sample(&rand_distr::Exp1, &mut rng);
            qz[i * k + l] = e;
            sum += e;
        }
        if sum <= 0.0 {
            // An all-zero row has measure zero, but guard anyway.
            for l in 0..k {
                qz[i * k + l] = 1.0 / k as f64;
            }
        } else {
            for l in 0..k {
                qz[i * k + l] /= sum;
            }
        }
    }
    if k == 1 {
        qz.iter_mut().for_each(|v| *v = 1.0);
    }

    let degrees = graph.degrees();
    let mut g_weighted = vec![0.0; k];
    for i in 0..n {
        for l in 0..k {
            g_weighted[l] += degrees[i] * qz[i * k + l];
        }
    }

    let mut elbo_trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut last_post: Option<Posteriors> = None;

    for cycle in 0..config.max_iter {
        let stats = bundle_stats(graph, &qz, k);
        let post = m_step(&stats, config, k);
        let elbo = compute_elbo(&stats, &post, config, &qz, n, k);
        if !elbo.is_finite() {
            return Err(Error::Numerical(format!(
                "ELBO became non-finite at cycle {cycle}"
            )));
        }
        debug_assert!(
            elbo >= prev - (1e-8 + 1e-12 * elbo.abs()),
            "ELBO decreased at cycle {cycle}: {prev} → {elbo}"
        );
        elbo_trace.push(elbo);
        let improvement = elbo - prev;
        prev = elbo;
        last_post = Some(post);
        if cycle > 0 && improvement < config.tol {
            converged = true;
            break;
        }
        e_sweep(
            graph,
            &mut qz,
            &mut g_weighted,
            last_post.as_ref().expect("just set"),
            config,
            k,
        );
    }

    let post = last_post.expect("max_iter >= 1 guarantees one cycle");
    Ok(WsbmModel {
        k,
        alpha_mix: config.alpha_mix,
        weight_family: config.weight_family,
        qz: DMatrix::from_row_slice(n, k, &qz),
        existence: post.existence,
        weight_poisson: post.weight_poisson,
        weight_normal: post.weight_normal,
        elbo: prev,
        elbo_trace,
        converged,
        user_ids: graph.user_ids().to_vec(),
    })
}

/// Deterministic per-(K, restart) seed derivation.
fn derive_seed(base: u64, k: usize, restart: usize) -> u64 {
    base ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (restart as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Best-of-restarts fit for one K (restart count from the config), restarts
/// running in parallel. Ties keep the earliest restart.
pub fn fit_best(
    graph: &CoPurchaseGraph,
    k: usize,
    config: &FitConfig,
    base_seed: u64,
) -> Result<WsbmModel> {
    let restarts = config.restarts.max(1);
    let results: Vec<Result<WsbmModel>> = (0..restarts)
        .into_par_iter()
        .map(|r| vb_fit(graph, k, config, derive_seed(base_seed, k, r)))
        .collect();
    let mut best: Option<WsbmModel> = None;
    let mut first_err = None;
    for res in results {
        match res {
            Ok(model) => {
                if best.as_ref().map_or(true, |b| model.elbo > b.elbo) {
                    best = Some(model);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_err.expect("restarts >= 1 yields a result"))
}

/// One candidate of the model-selection scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    /// Best ELBO over restarts — the evidence approximation.
    pub approx_log_evidence: f64,
    pub community_sizes: Vec<usize>,
    pub model: WsbmModel,
}

/// Outcome of scanning a K range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSelection {
    pub candidates: Vec<KCandidate>,
    /// (K, cause) for candidates whose every restart failed.
    pub failures: Vec<(usize, String)>,
    pub chosen_k: usize,
    /// Softmax of approximate log evidence under a uniform model prior,
    /// aligned with `candidates`.
    pub posterior: Vec<f64>,
}

impl ModelSelection {
    pub fn chosen(&self) -> &WsbmModel {
        self.candidates
            .iter()
            .find(|c| c.k == self.chosen_k)
            .expect("chosen_k comes from candidates")
            .model_ref()
    }
}

impl KCandidate {
    fn model_ref(&self) -> &WsbmModel {
        &self.model
    }
}

/// Scans K over `[k_min, k_max]`, fitting each with seeded restarts and
/// ranking by approximate evidence. The posterior is a softmax over best
/// ELBOs (uniform prior over candidates); ties choose the smaller K.
pub fn select_k(
    graph: &CoPurchaseGraph,
    k_min: usize,
    k_max: usize,
    config: &FitConfig,
    base_seed: u64,
) -> Result<ModelSelection> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::validation(format!(
            "empty community range [{k_min}, {k_max}]"
        )));
    }
    if k_max > graph.n() {
        return Err(Error::Dimension(format!(
            "k_max {k_max} exceeds vertex count {}",
            graph.n()
        )));
    }

    let ks: Vec<usize> = (k_min..=k_max).collect();
    let fits: Vec<(usize, Result<WsbmModel>)> = ks
        .par_iter()
        .map(|&k| (k, fit_best(graph, k, config, base_seed)))
        .collect();

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (k, res) in fits {
        match res {
            Ok(model) => candidates.push(KCandidate {
                k,
                approx_log_evidence: model.elbo,
                community_sizes: model.community_sizes(),
                model,
            }),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    if candidates.is_empty() {
        let causes: Vec<String> = failures
            .iter()
            .map(|(k, c)| format!("K={k}: {c}"))
            .collect();
        return Err(Error::SelectionFailed(causes.join("; ")));
    }

    let max_ev = candidates
        .iter()
        .map(|c| c.approx_log_evidence)
        .fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = candidates
        .iter()
        .map(|c| (c.approx_log_evidence - max_ev).exp())
        .collect();
    let total: f64 = unnorm.iter().sum();
    let posterior: Vec<f64> = unnorm.iter().map(|u| u / total).collect();

    let mut chosen = 0;
    for i in 1..candidates.len() {
        if posterior[i] > posterior[chosen] {
            chosen = i;
        }
    }
    Ok(ModelSelection {
        chosen_k: candidates[chosen].k,
        candidates,
        failures,
        posterior,
    })
}
