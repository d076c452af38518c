//! Flat pipeline configuration: one TOML document of scalar keys, every one
//! of them overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use blockrec::comments::CommentBlend;
use blockrec::error::{Error, Result};
use blockrec::eval::ExperimentConfig;
use blockrec::predict::BlendWeights;
use blockrec::wsbm::{FitConfig, Priors, WeightFamily};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // Dataset paths.
    pub ratings: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub items: Option<PathBuf>,
    /// Optional `item_id<TAB>text` file appended to the item documents.
    pub descriptions: Option<PathBuf>,
    /// Optional comment corpus; requires `labeled_comments` and applies the
    /// rating correction before any graph or similarity construction.
    pub comments: Option<PathBuf>,
    pub labeled_comments: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,

    // Content model.
    pub sigma: f64,
    pub lsa_dim: usize,

    // Block model.
    pub k_min: usize,
    pub k_max: usize,
    /// Community count used by the evaluation sweep's per-split fits (found
    /// once via `fit`'s model selection).
    pub communities: usize,
    pub alpha_mix: f64,
    pub weight_family: String,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,

    // Prediction blend.
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,

    // Comment correction blend.
    pub eta1: f64,
    pub eta2: f64,

    // Neighbor policy.
    pub baseline_neighbors: usize,
    pub fallback_size: usize,
    /// New users tolerated before `recommend` starts warning that the
    /// communities are stale.
    pub retrain_threshold: u64,

    // Evaluation grid.
    pub train_proportions: Vec<f64>,
    pub list_p_star: f64,
    pub list_lengths: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            ratings: None,
            users: None,
            items: None,
            descriptions: None,
            comments: None,
            labeled_comments: None,
            stopwords: None,
            sigma: 0.0,
            lsa_dim: 100,
            k_min: 2,
            k_max: 8,
            communities: 4,
            alpha_mix: 0.5,
            weight_family: "poisson".into(),
            tol: 1e-6,
            max_iter: 200,
            restarts: 5,
            seed: 17,
            alpha: 0.2,
            beta: 0.8,
            gamma1: 0.4,
            gamma2: 0.6,
            eta1: 0.5,
            eta2: 0.5,
            baseline_neighbors: 30,
            fallback_size: 20,
            retrain_threshold: 50,
            train_proportions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            list_p_star: 0.8,
            list_lengths: (1..=20).map(|i| i * 5).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }

    pub fn weights(&self) -> Result<BlendWeights> {
        BlendWeights::new(self.alpha, self.beta, self.gamma1, self.gamma2)
    }

    pub fn comment_blend(&self) -> Result<CommentBlend> {
        CommentBlend::new(self.eta1, self.eta2)
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let weight_family = match self.weight_family.to_ascii_lowercase().as_str() {
            "poisson" => WeightFamily::Poisson,
            "normal" => WeightFamily::Normal,
            other => {
                return Err(Error::validation(format!(
                    "weight_family must be poisson or normal, got {other:?}"
                )));
            }
        };
        if self.restarts == 0 {
            return Err(Error::validation("restarts must be at least 1"));
        }
        Ok(FitConfig {
            alpha_mix: self.alpha_mix,
            weight_family,
            priors: Priors::default(),
            scale_priors: true,
            tol: self.tol,
            max_iter: self.max_iter,
            restarts: self.restarts,
        })
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            weights: self.weights()?,
            fit: self.fit_config()?,
            k: self.communities,
            seed: self.seed,
            baseline_neighbors: self.baseline_neighbors,
            fallback_size: self.fallback_size,
            train_proportions: self.train_proportions.clone(),
            list_p_star: self.list_p_star,
            list_lengths: self.list_lengths.clone(),
        })
    }

    pub fn k_range(&self) -> Result<(usize, usize)> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::validation(format!(
                "empty community range {}..{}",
                self.k_min, self.k_max
            )));
        }
        Ok((self.k_min, self.k_max))
    }

    /// The three dataset paths every pipeline command needs.
    pub fn dataset_paths(&self) -> Result<(&Path, &Path, &Path)> {
        match (&self.ratings, &self.users, &self.items) {
            (Some(r), Some(u), Some(i)) => Ok((r, u, i)),
            _ => Err(Error::validation(
                "ratings, users, and items paths are required (set them in the \
                 config file, or pass --data DIR or the individual flags)",
            )),
        }
    }
}

/// Command-line overrides shared by `fit` and `evaluate`. Every flag beats
/// the config-file value; `--data DIR` expands to the three standard
/// ml-100k file names before the individual path flags apply.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigOverrides {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory holding u.data, u.user, u.item.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    #[arg(long)]
    pub comments: Option<PathBuf>,
    #[arg(long)]
    pub labeled_comments: Option<PathBuf>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Word-weight floor below which vocabulary is dropped.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Latent dimension M (clamped to the matrix rank bound).
    #[arg(long)]
    pub lsa_dim: Option<usize>,
    /// Community-count search range for model selection, e.g. 2..8.
    #[arg(long)]
    pub k_range: Option<String>,
    /// Community count for the evaluation sweep's fits.
    #[arg(long)]
    pub communities: Option<usize>,
    #[arg(long)]
    pub alpha_mix: Option<f64>,
    /// Edge-weight family: poisson or normal.
    #[arg(long)]
    pub weight_family: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Basic-information similarity weight α.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Rating similarity weight β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Content prediction weight γ₁.
    #[arg(long)]
    pub gamma1: Option<f64>,
    /// Collaborative prediction weight γ₂.
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long)]
    pub eta1: Option<f64>,
    #[arg(long)]
    pub eta2: Option<f64>,
    #[arg(long)]
    pub baseline_neighbors: Option<usize>,
    #[arg(long)]
    pub fallback_size: Option<usize>,
    #[arg(long)]
    pub retrain_threshold: Option<u64>,
}

pub fn resolve(overrides: &ConfigOverrides) -> Result<PipelineConfig> {
    let mut cfg = match &overrides.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &overrides.data {
        cfg.ratings = Some(dir.join("u.data"));
        cfg.users = Some(dir.join("u.user"));
        cfg.items = Some(dir.join("u.item"));
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &overrides.$field {
                cfg.$field = Some(v.clone());
            }
        };
        ($field:ident, copy) => {
            if let Some(v) = overrides.$field {
                cfg.$field = v;
            }
        };
    }
    take!(ratings);
    take!(users);
    take!(items);
    take!(descriptions);
    take!(comments);
    take!(labeled_comments);
    take!(stopwords);
    take!(sigma, copy);
    take!(lsa_dim, copy);
    take!(communities, copy);
    take!(alpha_mix, copy);
    take!(restarts, copy);
    take!(seed, copy);
    take!(alpha, copy);
    take!(beta, copy);
    take!(gamma1, copy);
    take!(gamma2, copy);
    take!(eta1, copy);
    take!(eta2, copy);
    take!(baseline_neighbors, copy);
    take!(fallback_size, copy);
    take!(retrain_threshold, copy);
    if let Some(family) = &overrides.weight_family {
        cfg.weight_family = family.clone();
    }
    if let Some(range) = &overrides.k_range {
        let (lo, hi) = parse_k_range(range)?;
        cfg.k_min = lo;
        cfg.k_max = hi;
    }
    Ok(cfg)
}

fn parse_k_range(range: &str) -> Result<(usize, usize)> {
    let bad = || Error::validation(format!("k range must look like 2..8, got {range:?}"));
    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(Error::validation(format!("empty community range {lo}..{hi}")));
    }
    Ok((lo, hi))
}
