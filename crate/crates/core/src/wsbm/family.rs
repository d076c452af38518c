//! Exponential-family building blocks for the weighted blockmodel.
//!
//! Every dyad contributes `T(observation)·η(bundle parameter)` to the log
//! likelihood. Base measures (the parts independent of θ) are dropped
//! throughout — they cancel in parameter updates and shift every candidate
//! model's evidence by the same constant, so model comparison is unaffected.
//!
//! Families:
//! - existence (degree-corrected Poisson on every dyad): T_ε = (A_ij, −d_i·d_j),
//!   η_ε = (ln θ, θ) — contribution A_ij·ln θ − d_i·d_j·θ;
//! - poisson weight (positive dyads only): T_ω = (x, −1), η_ω = (ln λ, λ);
//! - normal weight: T_ω = (x, x², 1), η_ω = (μτ, −τ/2, (−μ²τ + ln τ)/2).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

/// Distribution placed on positive dyad weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightFamily {
    /// Gamma-conjugate Poisson — the default; co-purchase weights are counts.
    Poisson,
    /// NormalGamma-conjugate Gaussian with unknown mean and precision.
    Normal,
}

impl WeightFamily {
    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::Poisson => "poisson_weight",
            WeightFamily::Normal => "normal_weight",
        }
    }
}

/// Existence-family sufficient statistic of one dyad: (A_ij, −d_i·d_j).
pub fn t_existence(a_ij: f64, d_i: f64, d_j: f64) -> [f64; 2] {
    [a_ij, -(d_i * d_j)]
}

/// Existence-family natural parameter: (ln θ, θ).
pub fn eta_existence(theta: f64) -> [f64; 2] {
    [theta.ln(), theta]
}

/// Poisson-weight sufficient statistic: (x, −1).
pub fn t_poisson_weight(x: f64) -> [f64; 2] {
    [x, -1.0]
}

/// Poisson-weight natural parameter: (ln λ, λ).
pub fn eta_poisson_weight(lambda: f64) -> [f64; 2] {
    [lambda.ln(), lambda]
}

/// Normal-weight sufficient statistic: (x, x², 1).
pub fn t_normal_weight(x: f64) -> [f64; 3] {
    [x, x * x, 1.0]
}

/// Normal-weight natural parameter: (μτ, −τ/2, (−μ²τ + ln τ)/2).
pub fn eta_normal_weight(mu: f64, tau: f64) -> [f64; 3] {
    [mu * tau, -tau / 2.0, (-mu * mu * tau + tau.ln()) / 2.0]
}

pub fn dot2(t: [f64; 2], eta: [f64; 2]) -> f64 {
    t[0] * eta[0] + t[1] * eta[1]
}

pub fn dot3(t: [f64; 3], eta: [f64; 3]) -> f64 {
    t[0] * eta[0] + t[1] * eta[1] + t[2] * eta[2]
}

/// Gamma(shape a, rate b) — conjugate to both Poisson families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gamma {
    pub a: f64,
    pub b: f64,
}

impl Gamma {
    pub fn new(a: f64, b: f64) -> Self {
        assert!(a > 0.0 && b > 0.0, "Gamma parameters must be positive");
        Gamma { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / self.b
    }

    /// E[ln θ] = ψ(a) − ln b.
    pub fn mean_log(&self) -> f64 {
        digamma(self.a) - self.b.ln()
    }

    /// KL(self ‖ prior) for Gamma distributions in shape/rate form.
    pub fn kl(&self, prior: &Gamma) -> f64 {
        let (a, b) = (self.a, self.b);
        let (a0, b0) = (prior.a, prior.b);
        (a - a0) * digamma(a) - ln_gamma(a) + ln_gamma(a0)
            + a0 * (b.ln() - b0.ln())
            + a * (b0 - b) / b
    }

    /// Conjugate update after absorbing weighted statistics: the first
    /// natural-statistic total `x` raises the shape, the second (`y`, already
    /// sign-flipped to be a positive exposure) raises the rate.
    pub fn posterior(&self, x: f64, y: f64) -> Gamma {
        Gamma {
            a: self.a + x,
            b: self.b + y,
        }
    }

    /// Log marginal likelihood of absorbing (x, y) — the normalizer ratio
    /// ∫ θ^(x) e^(−yθ) Ga(θ; a, b) dθ with the base measure dropped.
    pub fn log_marginal(&self, x: f64, y: f64) -> f64 {
        let post = self.posterior(x, y);
        self.a * self.b.ln() - ln_gamma(self.a) + ln_gamma(post.a) - post.a * post.b.ln()
    }
}

/// NormalGamma(μ₀, κ₀, a₀, b₀) over (mean μ, precision τ) — conjugate to the
/// normal weight family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGamma {
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

impl NormalGamma {
    pub fn new(mu: f64, kappa: f64, a: f64, b: f64) -> Self {
        assert!(
            kappa > 0.0 && a > 0.0 && b > 0.0,
            "NormalGamma scale parameters must be positive"
        );
        NormalGamma { mu, kappa, a, b }
    }

    /// E[μτ] = μ·a/b.
    pub fn mean_mu_tau(&self) -> f64 {
        self.mu * self.a / self.b
    }

    /// E[μ²τ] = μ²·a/b + 1/κ.
    pub fn mean_mu2_tau(&self) -> f64 {
        self.mu * self.mu * self.a / self.b + 1.0 / self.kappa
    }

    /// E[τ] = a/b.
    pub fn mean_tau(&self) -> f64 {
        self.a / self.b
    }

    /// E[ln τ] = ψ(a) − ln b.
    pub fn mean_log_tau(&self) -> f64 {
        digamma(self.a) - self.b.ln()
    }

    /// Expected natural parameter E[η_ω] componentwise.
    pub fn mean_eta(&self) -> [f64; 3] {
        [
            self.mean_mu_tau(),
            -self.mean_tau() / 2.0,
            (-self.mean_mu2_tau() + self.mean_log_tau()) / 2.0,
        ]
    }

    /// Conjugate update from (possibly fractionally weighted) observation
    /// totals: count n, sum sx, sum of squares sxx.
    pub fn posterior(&self, n: f64, sx: f64, sxx: f64) -> NormalGamma {
        let kappa_n = self.kappa + n;
        let mu_n = (self.kappa * self.mu + sx) / kappa_n;
        let a_n = self.a + n / 2.0;
        let b_n = self.b + 0.5 * (sxx + self.kappa * self.mu * self.mu - kappa_n * mu_n * mu_n);
        NormalGamma {
            mu: mu_n,
            kappa: kappa_n,
            a: a_n,
            b: b_n,
        }
    }

    /// KL(self ‖ prior): the Gamma part plus the conditional-normal part.
    pub fn kl(&self, prior: &NormalGamma) -> f64 {
        let gamma_part = Gamma {
            a: self.a,
            b: self.b,
        }
        .kl(&Gamma {
            a: prior.a,
            b: prior.b,
        });
        let dmu = self.mu - prior.mu;
        gamma_part
            + 0.5
                * ((self.kappa / prior.kappa).ln() + prior.kappa / self.kappa - 1.0
                    + prior.kappa * (self.a / self.b) * dmu * dmu)
    }

    /// Log marginal likelihood of absorbing (n, sx, sxx), base dropped.
    pub fn log_marginal(&self, n: f64, sx: f64, sxx: f64) -> f64 {
        let post = self.posterior(n, sx, sxx);
        0.5 * (self.kappa.ln() - post.kappa.ln()) + self.a * self.b.ln()
            - post.a * post.b.ln()
            + ln_gamma(post.a)
            - ln_gamma(self.a)
    }
}

/// Conjugate prior set for every bundle. Weak defaults keep the M-step
/// closed-form without drowning the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub existence: Gamma,
    pub poisson_weight: Gamma,
    pub normal_weight: NormalGamma,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            existence: Gamma::new(1.0, 1.0),
            poisson_weight: Gamma::new(1.0, 1.0),
            normal_weight: NormalGamma::new(0.0, 1.0, 1.0, 1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{Continuous, Discrete, Normal, Poisson};

    /// T·η plus the dropped base measure must reproduce the actual log
    /// density of each family (the defining identity of the parametrization).
    #[test]
    fn existence_identity_matches_poisson_pmf() {
        for &(a, di, dj, theta) in &[
            (0u64, 1.0, 2.0, 0.7),
            (3, 2.0, 2.0, 1.3),
            (5, 1.0, 4.0, 0.2),
            (1, 3.0, 5.0, 2.0),
        ] {
            let mean = di * dj * theta;
            let direct = Poisson::new(mean).unwrap().ln_pmf(a);
            let base = a as f64 * (di * dj).ln() - ln_gamma(a as f64 + 1.0);
            let via_family = dot2(t_existence(a as f64, di, dj), eta_existence(theta)) + base;
            assert_relative_eq!(via_family, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn poisson_weight_identity_matches_pmf() {
        for &(x, lambda) in &[(1u64, 0.4), (2, 1.0), (7, 3.5), (0, 2.2)] {
            let direct = Poisson::new(lambda).unwrap().ln_pmf(x);
            let base = -ln_gamma(x as f64 + 1.0);
            let via_family =
                dot2(t_poisson_weight(x as f64), eta_poisson_weight(lambda)) + base;
            assert_relative_eq!(via_family, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn normal_weight_identity_matches_pdf() {
        let cases: [(f64, f64, f64); 3] = [(0.3, 0.0, 1.0), (2.5, 1.0, 0.5), (-1.2, -0.4, 3.0)];
        for &(x, mu, tau) in &cases {
            let direct = Normal::new(mu, (1.0 / tau).sqrt()).unwrap().ln_pdf(x);
            let base = -0.5 * (2.0 * std::f64::consts::PI).ln();
            let via_family = dot3(t_normal_weight(x), eta_normal_weight(mu, tau)) + base;
            assert_relative_eq!(via_family, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn gamma_kl_is_zero_at_equality_and_positive_otherwise() {
        let p = Gamma::new(1.5, 2.0);
        assert_relative_eq!(p.kl(&p), 0.0, epsilon = 1e-12);
        for q in [Gamma::new(2.5, 2.0), Gamma::new(1.5, 0.7), Gamma::new(4.0, 9.0)] {
            assert!(q.kl(&p) > 0.0, "KL({q:?} ‖ {p:?}) not positive");
        }
    }

    /// Monte-Carlo check of the Gamma KL closed form.
    #[test]
    fn gamma_kl_matches_sampled_estimate() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let q = Gamma::new(3.0, 2.0);
        let p = Gamma::new(1.0, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let sampler = rand_distr::Gamma::new(q.a, 1.0 / q.b).unwrap();
        let log_density = |g: &Gamma, x: f64| {
            g.a * g.b.ln() - ln_gamma(g.a) + (g.a - 1.0) * x.ln() - g.b * x
        };
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            acc += log_density(&q, x) - log_density(&p, x);
        }
        let estimate = acc / n as f64;
        assert_relative_eq!(q.kl(&p), estimate, epsilon = 0.01);
    }

    #[test]
    fn normal_gamma_kl_is_zero_at_equality_and_positive_otherwise() {
        let p = NormalGamma::new(0.0, 1.0, 1.0, 1.0);
        assert_relative_eq!(p.kl(&p), 0.0, epsilon = 1e-12);
        for q in [
            NormalGamma::new(0.5, 1.0, 1.0, 1.0),
            NormalGamma::new(0.0, 3.0, 1.0, 1.0),
            NormalGamma::new(-1.0, 2.0, 4.0, 2.5),
        ] {
            assert!(q.kl(&p) > 0.0, "KL({q:?} ‖ {p:?}) not positive");
        }
    }

    /// Absorbing statistics through `posterior` then evaluating the marginal
    /// must equal absorbing them in two stages (chain rule of evidence).
    #[test]
    fn gamma_marginal_chains_over_batches() {
        let prior = Gamma::new(1.0, 1.0);
        let whole = prior.log_marginal(5.0, 7.0);
        let stage1 = prior.log_marginal(2.0, 3.0);
        let mid = prior.posterior(2.0, 3.0);
        let stage2 = mid.log_marginal(3.0, 4.0);
        assert_relative_eq!(whole, stage1 + stage2, epsilon = 1e-12);
    }

    #[test]
    fn normal_gamma_marginal_chains_over_batches() {
        let prior = NormalGamma::new(0.0, 1.0, 1.0, 1.0);
        let whole = prior.log_marginal(4.0, 6.0, 11.0);
        let stage1 = prior.log_marginal(1.0, 2.0, 4.5);
        let mid = prior.posterior(1.0, 2.0, 4.5);
        let stage2 = mid.log_marginal(3.0, 4.0, 6.5);
        assert_relative_eq!(whole, stage1 + stage2, epsilon = 1e-12);
    }

    /// The normal-weight posterior must agree with a direct grid check: the
    /// posterior density ∝ prior × likelihood at several (μ, τ) points.
    #[test]
    fn normal_gamma_posterior_matches_bayes_rule_pointwise() {
        let prior = NormalGamma::new(0.3, 2.0, 1.5, 1.2);
        let xs = [0.7, -0.2, 1.4];
        let (n, sx, sxx) = (
            xs.len() as f64,
            xs.iter().sum::<f64>(),
            xs.iter().map(|x| x * x).sum::<f64>(),
        );
        let post = prior.posterior(n, sx, sxx);
        let log_ng = |g: &NormalGamma, mu: f64, tau: f64| {
            // Unnormalized: N(μ | g.mu, (g.kappa·τ)⁻¹)·Ga(τ | g.a, g.b).
            0.5 * tau.ln() - 0.5 * g.kappa * tau * (mu - g.mu) * (mu - g.mu)
                + (g.a - 1.0) * tau.ln()
                - g.b * tau
        };
        let log_lik = |mu: f64, tau: f64| {
            dot3([sx, sxx, n], eta_normal_weight(mu, tau))
        };
        // Ratios of unnormalized densities across points must match.
        let pts = [(0.1, 0.8), (0.9, 1.7), (-0.5, 0.3)];
        let (m0, t0) = pts[0];
        for &(mu, tau) in &pts[1..] {
            let lhs = log_ng(&post, mu, tau) - log_ng(&post, m0, t0);
            let rhs = log_ng(&prior, mu, tau) + log_lik(mu, tau)
                - log_ng(&prior, m0, t0)
                - log_lik(m0, t0);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_update_returns_the_prior() {
        let g = Gamma::new(1.0, 1.0);
        assert_eq!(g.posterior(0.0, 0.0), g);
        let ng = NormalGamma::new(0.0, 1.0, 1.0, 1.0);
        assert_eq!(ng.posterior(0.0, 0.0, 0.0), ng);
        assert_relative_eq!(g.log_marginal(0.0, 0.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ng.log_marginal(0.0, 0.0, 0.0), 0.0, epsilon = 1e-12);
    }
}
