//! Experiment harness: error metrics, ranked-list classification metrics,
//! and the train-proportion sweep comparing community neighbors against the
//! conventional top-N-similarity baseline.
//!
//! The sweep splits the ratings at each training proportion p*, fits the
//! block model on the training side, predicts every test rating with both
//! neighbor sources, and records MAE/RMSE per proportion plus
//! precision/recall/F over top-L* recommendation lists at one designated
//! proportion. Everything is seeded, so a report is reproducible
//! byte-for-byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copurchase::build_graph;
use crate::corpus::ItemSimilarityMatrix;
use crate::error::{Error, Result};
use crate::ingest::{split_ratings, RatingsTable, SplitRatio, UserProfile};
use crate::predict::{
    sim_integrated, BlendWeights, NeighborMode, PredictContext, RatingIndex,
};
use crate::wsbm::{fit_best, FitConfig};

/// Mean absolute error between predictions and actual ratings.
pub fn mae(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    check_paired(preds, actuals)?;
    let sum: f64 = preds
        .iter()
        .zip(actuals.iter())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Root mean squared error between predictions and actual ratings.
pub fn rmse(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    check_paired(preds, actuals)?;
    let sum: f64 = preds
        .iter()
        .zip(actuals.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok((sum / preds.len() as f64).sqrt())
}

fn check_paired(preds: &[f64], actuals: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::validation("error metrics need at least one pair"));
    }
    if preds.len() != actuals.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} actuals",
            preds.len(),
            actuals.len()
        )));
    }
    Ok(())
}

/// An item counts as liked when its actual rating reaches the middle grade.
pub fn is_liked(rating: f64) -> bool {
    rating >= 3.0
}

/// One user's recommendation outcome: the top-L* list and the test items
/// with known preference labels.
#[derive(Debug, Clone, Default)]
pub struct UserOutcome {
    pub recommended: HashSet<u32>,
    pub liked: HashSet<u32>,
    pub disliked: HashSet<u32>,
}

/// Per-user confusion counts over labeled items. Recommended items outside
/// the labeled sets count toward nothing — only labeled items fall into one
/// of the four cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    /// Liked items missing from the list (`fn` is reserved).
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(outcome: &UserOutcome) -> ConfusionCounts {
    let tp = outcome.liked.intersection(&outcome.recommended).count();
    let fp = outcome.disliked.intersection(&outcome.recommended).count();
    ConfusionCounts {
        tp,
        fp,
        fn_: outcome.liked.len() - tp,
        tn: outcome.disliked.len() - fp,
    }
}

/// Macro-averaged precision, recall, and F-measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Averages per-user precision and recall over the users where the ratio is
/// defined (non-zero denominator); F is the harmonic mean of the averages.
pub fn classification_metrics(per_user: &[UserOutcome]) -> Result<ClassificationMetrics> {
    let mut p_sum = 0.0;
    let mut p_users = 0usize;
    let mut r_sum = 0.0;
    let mut r_users = 0usize;
    for outcome in per_user {
        let c = confusion(outcome);
        if c.tp + c.fp > 0 {
            p_sum += c.tp as f64 / (c.tp + c.fp) as f64;
            p_users += 1;
        }
        if c.tp + c.fn_ > 0 {
            r_sum += c.tp as f64 / (c.tp + c.fn_) as f64;
            r_users += 1;
        }
    }
    if p_users == 0 {
        return Err(Error::UndefinedMetric(
            "precision: no user recommended any labeled item".into(),
        ));
    }
    if r_users == 0 {
        return Err(Error::UndefinedMetric(
            "recall: no user has any liked test item".into(),
        ));
    }
    let precision = p_sum / p_users as f64;
    let recall = r_sum / r_users as f64;
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        precision,
        recall,
        f_measure,
    })
}

/// The conventional neighbor set: the `n_neighbors` users most
/// integrated-similar to `a` among users with training ratings, ties broken
/// by user id. This is the comparison method's only difference from ours —
/// downstream prediction is identical.
pub fn traditional_baseline_neighbors(
    a: u32,
    n_neighbors: usize,
    weights: &BlendWeights,
    profiles: &HashMap<u32, UserProfile>,
    index: &RatingIndex,
) -> Result<Vec<u32>> {
    let mut scored: Vec<(f64, u32)> = Vec::with_capacity(index.users().len());
    for &b in index.users() {
        if b == a {
            continue;
        }
        let sim = sim_integrated(a, b, weights, false, profiles, index)?;
        scored.push((sim, b));
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    Ok(scored.into_iter().take(n_neighbors).map(|(_, b)| b).collect())
}

/// Which way a metric improves, and therefore how its improvement
/// percentage is signed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Section {
    /// Lower is better (MAE, RMSE): improvement = (baseline−ours)/baseline.
    Error,
    /// Higher is better (P/R/F): improvement = (ours−baseline)/baseline.
    Accuracy,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section::Error => "error",
            Section::Accuracy => "accuracy",
        })
    }
}

/// One report cell: a metric at one sweep coordinate for both methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub section: Section,
    /// p* for error rows, L* for accuracy rows.
    pub x: f64,
    pub metric: String,
    pub ours: f64,
    pub traditional: f64,
}

impl ReportRow {
    pub fn improvement_pct(&self) -> f64 {
        if self.ours == self.traditional {
            return 0.0;
        }
        match self.section {
            Section::Error => (self.traditional - self.ours) / self.traditional * 100.0,
            Section::Accuracy => (self.ours - self.traditional) / self.traditional * 100.0,
        }
    }
}

/// The sweep's output: metric rows plus notes about cells that failed or
/// pairs no route could score.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn find(&self, section: Section, x: f64, metric: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.section == section && (r.x - x).abs() < 1e-9 && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("section,p_star_or_lstar,metric,ours,traditional,improvement_pct\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.section,
                row.x,
                row.metric,
                row.ours,
                row.traditional,
                row.improvement_pct()
            )
            .expect("string writes cannot fail");
        }
        out
    }
}

/// Everything the sweep needs about the data, borrowed so callers keep
/// ownership. The item similarities come from the content model, which does
/// not depend on ratings and is therefore computed once outside the sweep.
#[derive(Clone, Copy)]
pub struct Dataset<'a> {
    pub ratings: &'a RatingsTable,
    pub profiles: &'a HashMap<u32, UserProfile>,
    pub item_sims: &'a ItemSimilarityMatrix,
}

/// Sweep configuration. Defaults follow the experimental setup: blend
/// weights (0.2, 0.8, 0.4, 0.6), training proportions 0.1–0.9,
/// recommendation lists of length 5–100 at p*=0.8, and a 30-neighbor
/// baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub weights: BlendWeights,
    pub fit: FitConfig,
    /// Community count for the block-model fit.
    pub k: usize,
    pub seed: u64,
    pub baseline_neighbors: usize,
    /// Neighbor-set size for users outside the graph.
    pub fallback_size: usize,
    pub train_proportions: Vec<f64>,
    /// The proportion whose split also feeds the ranked-list metrics.
    pub list_p_star: f64,
    pub list_lengths: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            weights: BlendWeights::default(),
            // More restarts than the fit default: the sweep refits from
            // scratch at every train proportion, and a single bad local
            // optimum there poisons that point for the community method.
            fit: FitConfig { restarts: 10, ..FitConfig::default() },
            k: 4,
            seed: 17,
            baseline_neighbors: 30,
            fallback_size: 20,
            train_proportions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            list_p_star: 0.8,
            list_lengths: (1..=20).map(|i| i * 5).collect(),
        }
    }
}

/// One user's scored test items under both methods, ready for list metrics.
struct UserListEval {
    /// Item ids best-first under our method.
    ours_ranked: Vec<u32>,
    /// Item ids best-first under the baseline.
    trad_ranked: Vec<u32>,
    liked: HashSet<u32>,
    disliked: HashSet<u32>,
}

struct SplitEval {
    ours: Vec<f64>,
    trad: Vec<f64>,
    actuals: Vec<f64>,
    per_user: Vec<UserListEval>,
    skipped_pairs: usize,
}

/// Runs the full sweep. Per-cell failures become notes; the report is still
/// emitted with every cell that succeeded.
pub fn run_experiment(data: &Dataset, config: &ExperimentConfig) -> Result<EvalReport> {
    config.weights.validate()?;
    let mut report = EvalReport::default();
    for &p_star in &config.train_proportions {
        let cell = SplitRatio::new(p_star)
            .and_then(|ratio| split_ratings(data.ratings, ratio, config.seed))
            .and_then(|(train, test)| evaluate_split(&train, &test, data, config));
        let eval = match cell {
            Ok(eval) => eval,
            Err(e) => {
                report.notes.push(format!("p_star={p_star}: {e}"));
                continue;
            }
        };
        if eval.skipped_pairs > 0 {
            report.notes.push(format!(
                "p_star={p_star}: {} test pairs had no prediction route",
                eval.skipped_pairs
            ));
        }
        match (
            mae(&eval.ours, &eval.actuals),
            rmse(&eval.ours, &eval.actuals),
            mae(&eval.trad, &eval.actuals),
            rmse(&eval.trad, &eval.actuals),
        ) {
            (Ok(ours_mae), Ok(ours_rmse), Ok(trad_mae), Ok(trad_rmse)) => {
                report.rows.push(ReportRow {
                    section: Section::Error,
                    x: p_star,
                    metric: "mae".into(),
                    ours: ours_mae,
                    traditional: trad_mae,
                });
                report.rows.push(ReportRow {
                    section: Section::Error,
                    x: p_star,
                    metric: "rmse".into(),
                    ours: ours_rmse,
                    traditional: trad_rmse,
                });
            }
            (Err(e), ..) | (_, Err(e), ..) | (_, _, Err(e), _) | (.., Err(e)) => {
                report.notes.push(format!("p_star={p_star}: {e}"));
            }
        }
        if (p_star - config.list_p_star).abs() < 1e-9 {
            push_list_rows(&mut report, &eval, config);
        }
    }
    Ok(report)
}

fn push_list_rows(report: &mut EvalReport, eval: &SplitEval, config: &ExperimentConfig) {
    for &l_star in &config.list_lengths {
        let ours: Vec<UserOutcome> = eval
            .per_user
            .iter()
            .map(|u| outcome_at(&u.ours_ranked, &u.liked, &u.disliked, l_star))
            .collect();
        let trad: Vec<UserOutcome> = eval
            .per_user
            .iter()
            .map(|u| outcome_at(&u.trad_ranked, &u.liked, &u.disliked, l_star))
            .collect();
        match (classification_metrics(&ours), classification_metrics(&trad)) {
            (Ok(ours_m), Ok(trad_m)) => {
                for (metric, o, t) in [
                    ("precision", ours_m.precision, trad_m.precision),
                    ("recall", ours_m.recall, trad_m.recall),
                    ("f_measure", ours_m.f_measure, trad_m.f_measure),
                ] {
                    report.rows.push(ReportRow {
                        section: Section::Accuracy,
                        x: l_star as f64,
                        metric: metric.into(),
                        ours: o,
                        traditional: t,
                    });
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                report.notes.push(format!("l_star={l_star}: {e}"));
            }
        }
    }
}

fn outcome_at(
    ranked: &[u32],
    liked: &HashSet<u32>,
    disliked: &HashSet<u32>,
    l_star: usize,
) -> UserOutcome {
    UserOutcome {
        recommended: ranked.iter().take(l_star).copied().collect(),
        liked: liked.clone(),
        disliked: disliked.clone(),
    }
}

/// Fits on the training side and scores every test rating with both
/// neighbor sources. Pairs with no prediction route under either method are
/// skipped for both, keeping the error metrics paired.
fn evaluate_split(
    train: &RatingsTable,
    test: &RatingsTable,
    data: &Dataset,
    config: &ExperimentConfig,
) -> Result<SplitEval> {
    let index = RatingIndex::new(train);
    let graph = build_graph(train)?;
    let model = fit_best(&graph, config.k, &config.fit, config.seed)?;
    let ours_ctx = PredictContext {
        profiles: data.profiles,
        index: &index,
        item_sims: data.item_sims,
        weights: config.weights,
        neighbors: NeighborMode::Community(&model),
        fallback_size: config.fallback_size,
    };
    let trad_ctx = PredictContext {
        neighbors: NeighborMode::TopSim(config.baseline_neighbors),
        ..ours_ctx
    };

    let mut by_user: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for rec in test.records() {
        by_user
            .entry(rec.user_id)
            .or_default()
            .push((rec.item_id, rec.rating));
    }

    let mut eval = SplitEval {
        ours: Vec::new(),
        trad: Vec::new(),
        actuals: Vec::new(),
        per_user: Vec::new(),
        skipped_pairs: 0,
    };
    for (&user, items) in &mut by_user {
        items.sort_by_key(|&(item, _)| item);
        let (ours_pred, trad_pred) =
            match (ours_ctx.user_predictor(user), trad_ctx.user_predictor(user)) {
                (Ok(o), Ok(t)) => (o, t),
                _ => {
                    eval.skipped_pairs += items.len();
                    continue;
                }
            };
        let mut scored: Vec<(u32, f64, f64, f64)> = Vec::with_capacity(items.len());
        for &(item, actual) in items.iter() {
            match (
                ours_ctx.predict_with(&ours_pred, item),
                trad_ctx.predict_with(&trad_pred, item),
            ) {
                (Ok(o), Ok(t)) => scored.push((item, actual, o.p_final, t.p_final)),
                _ => eval.skipped_pairs += 1,
            }
        }
        if scored.is_empty() {
            continue;
        }
        for &(_, actual, o, t) in &scored {
            eval.ours.push(o);
            eval.trad.push(t);
            eval.actuals.push(actual);
        }
        let rank = |key: fn(&(u32, f64, f64, f64)) -> f64| {
            let mut order = scored.clone();
            order.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.0.cmp(&b.0)));
            order.into_iter().map(|(item, ..)| item).collect::<Vec<u32>>()
        };
        eval.per_user.push(UserListEval {
            ours_ranked: rank(|r| r.2),
            trad_ranked: rank(|r| r.3),
            liked: scored
                .iter()
                .filter(|r| is_liked(r.1))
                .map(|r| r.0)
                .collect(),
            disliked: scored
                .iter()
                .filter(|r| !is_liked(r.1))
                .map(|r| r.0)
                .collect(),
        });
    }
    Ok(eval)
}

/// Writes one SVG line chart per metric present in the report (MAE/RMSE
/// against p*, P/R/F against L*), each with both methods' curves. Returns
/// the paths written.
pub fn write_plots(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let charts: [(&str, Section, &str); 5] = [
        ("mae", Section::Error, "training proportion p*"),
        ("rmse", Section::Error, "training proportion p*"),
        ("precision", Section::Accuracy, "list length L*"),
        ("recall", Section::Accuracy, "list length L*"),
        ("f_measure", Section::Accuracy, "list length L*"),
    ];
    let mut written = Vec::new();
    for (metric, section, x_label) in charts {
        let rows: Vec<&ReportRow> = report
            .rows
            .iter()
            .filter(|r| r.section == section && r.metric == metric)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let ours: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.ours)).collect();
        let trad: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.traditional)).collect();
        let svg = svg_line_chart(
            metric,
            x_label,
            &[("ours", &ours), ("traditional", &trad)],
        );
        let path = dir.join(format!("{metric}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Minimal self-contained SVG line chart: two polylines over shared axes
/// with min/mid/max ticks. No drawing dependencies.
fn svg_line_chart(title: &str, x_label: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 610.0;
    const T: f64 = 40.0;
    const B: f64 = 350.0;
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_max <= x_min {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_max <= y_min {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let sx = |x: f64| L + (x - x_min) / (x_max - x_min) * (R - L);
    let sy = |y: f64| B - (y - y_min) / (y_max - y_min) * (B - T);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n\
         <line x1=\"{L}\" y1=\"{B}\" x2=\"{R}\" y2=\"{B}\" stroke=\"black\"/>\n\
         <line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{B}\" stroke=\"black\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        (L + R) / 2.0,
        (L + R) / 2.0,
        B + 38.0,
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = write!(
            svg,
            "<line x1=\"{0:.1}\" y1=\"{B}\" x2=\"{0:.1}\" y2=\"{1:.1}\" stroke=\"black\"/>\n\
             <text x=\"{0:.1}\" y=\"{2:.1}\" text-anchor=\"middle\">{fx:.3}</text>\n\
             <line x1=\"{3:.1}\" y1=\"{4:.1}\" x2=\"{L}\" y2=\"{4:.1}\" stroke=\"black\"/>\n\
             <text x=\"{5:.1}\" y=\"{6:.1}\" text-anchor=\"end\">{fy:.3}</text>\n",
            sx(fx),
            B + 5.0,
            B + 20.0,
            L - 5.0,
            sy(fy),
            L - 8.0,
            sy(fy) + 4.0,
        );
    }
    let colors = ["#1f6fb4", "#c23b22"];
    for (pos, (name, pts)) in series.iter().enumerate() {
        let color = colors[pos % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <rect x=\"{1:.1}\" y=\"{2:.1}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n\
             <text x=\"{3:.1}\" y=\"{4:.1}\">{name}</text>\n",
            path.join(" "),
            R - 130.0,
            T + 14.0 * pos as f64 + 4.0,
            R - 110.0,
            T + 14.0 * pos as f64 + 10.0,
        );
    }
    svg.push_str("</svg>\n");
    svg
}
