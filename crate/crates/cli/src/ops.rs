//! The four commands, each a thin pipeline over the library modules.

use std::collections::{HashMap, HashSet};
use std::io::Write as _;
use std::path::Path;

use blockrec::comments::{
    appended_rating_of, build_classifier, final_rating, improve_ratings, parse_comment_records,
    parse_labeled_comments, CommentBlend,
};
use blockrec::copurchase::build_graph;
use blockrec::corpus::{
    build_term_doc_matrix, item_similarity, load_stopwords, truncated_svd, ItemSimilarityMatrix,
};
use blockrec::error::{Error, Result};
use blockrec::eval::{run_experiment, write_plots, Dataset, Section};
use blockrec::ingest::{
    parse_descriptions, parse_items, parse_ratings, parse_users, quantize_user, RatingsTable,
    SplitRatio, UserProfile,
};
use blockrec::predict::{NeighborMode, PredictContext, RatingIndex, Route};
use blockrec::wsbm::select_k;

use crate::bundle::{self, Manifest, ModelBundle};
use crate::config::PipelineConfig;

/// Parsed dataset plus the content model — the shared front half of `fit`
/// and `evaluate`.
struct Prepared {
    table: RatingsTable,
    profiles: HashMap<u32, UserProfile>,
    item_ids: Vec<u32>,
    item_sims: ItemSimilarityMatrix,
    lsa: blockrec::corpus::LsaModel,
    vocabulary: usize,
}

fn load_stopword_set(config: &PipelineConfig) -> Result<HashSet<String>> {
    match &config.stopwords {
        Some(path) => load_stopwords(path),
        None => Ok(HashSet::new()),
    }
}

fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    let (ratings_path, users_path, items_path) = config.dataset_paths()?;
    let mut table = parse_ratings(ratings_path)?;
    let profiles = parse_users(users_path)?;
    let items = parse_items(items_path)?;
    let stopwords = load_stopword_set(config)?;

    // Comment correction happens before any graph or similarity work so the
    // whole pipeline sees the corrected ratings.
    if let Some(comments_path) = &config.comments {
        let labeled_path = config.labeled_comments.as_ref().ok_or_else(|| {
            Error::validation("comment correction needs labeled_comments for the classifier")
        })?;
        let labeled = parse_labeled_comments(labeled_path)?;
        let classifier = build_classifier(&labeled, &stopwords)?;
        let records = parse_comment_records(comments_path)?;
        let blend = config.comment_blend()?;
        table = improve_ratings(&table, &records, &classifier, &blend);
    }

    let descriptions = match &config.descriptions {
        Some(path) => parse_descriptions(path)?,
        None => HashMap::new(),
    };
    let documents: Vec<String> = items
        .iter()
        .map(|item| {
            let mut text = item.document_text();
            if let Some(extra) = descriptions.get(&item.item_id) {
                text.push(' ');
                text.push_str(extra);
            }
            text
        })
        .collect();
    let item_ids: Vec<u32> = items.iter().map(|i| i.item_id).collect();

    let tdm = build_term_doc_matrix(&documents, &stopwords, config.sigma)?;
    let rank_bound = tdm.word_count().min(tdm.doc_count());
    let m = config.lsa_dim.clamp(1, rank_bound);
    let lsa = truncated_svd(&tdm, m)?;
    let item_sims = item_similarity(&lsa, &item_ids)?;
    Ok(Prepared {
        table,
        profiles,
        item_ids,
        item_sims,
        lsa,
        vocabulary: tdm.word_count(),
    })
}

pub fn cmd_fit(config: &PipelineConfig, out: &Path) -> Result<()> {
    let (k_min, k_max) = config.k_range()?;
    let fit_config = config.fit_config()?;
    config.weights()?; // fail early: a bundle that cannot recommend is useless

    let prepared = prepare(config)?;
    let graph = build_graph(&prepared.table)?;
    let selection = select_k(&graph, k_min, k_max, &fit_config, config.seed)?;
    let model = selection.chosen().clone();

    let mut sizes = vec![0usize; model.k];
    for label in model.communities() {
        sizes[label] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));

    let manifest = Manifest {
        chosen_k: selection.chosen_k,
        k_range: [k_min, k_max],
        community_sizes: sizes.clone(),
        users: prepared.profiles.len(),
        items: prepared.item_ids.len(),
        ratings: prepared.table.len(),
        vocabulary: prepared.vocabulary,
        lsa_rank: prepared.lsa.latent_dim(),
        seed: config.seed,
        config_sha256: bundle::config_fingerprint(config),
    };
    let bundle = ModelBundle {
        manifest,
        config: config.clone(),
        lsa: prepared.lsa,
        item_sims: prepared.item_sims,
        model,
        train: prepared.table,
        profiles: prepared.profiles,
    };
    bundle::save(out, &bundle)?;
    println!(
        "chose K={} (community sizes {}); model written to {}",
        bundle.manifest.chosen_k,
        bundle
            .manifest
            .community_sizes
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("/"),
        out.display()
    );
    for (k, cause) in &selection.failures {
        eprintln!("warning: K={k} failed every restart: {cause}");
    }
    Ok(())
}

/// Either an existing user id or the attributes of an unseen one.
pub enum UserSpec {
    Existing(u32),
    New { age: u32, gender: String, occupation: String },
}

pub fn parse_new_user(spec: &str) -> Result<UserSpec> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::validation(format!(
            "new-user spec must be age,gender,occupation — got {spec:?}"
        )));
    }
    let age: u32 = parts[0]
        .parse()
        .map_err(|_| Error::validation(format!("bad age {:?}", parts[0])))?;
    Ok(UserSpec::New {
        age,
        gender: parts[1].to_string(),
        occupation: parts[2].to_string(),
    })
}

pub fn cmd_recommend(model_dir: &Path, spec: UserSpec, n: usize) -> Result<()> {
    let bundle = bundle::load(model_dir)?;
    let weights = bundle.config.weights()?;
    let index = RatingIndex::new(&bundle.train);
    let mut profiles = bundle.profiles;

    let user_id = match spec {
        UserSpec::Existing(id) => id,
        UserSpec::New { age, gender, occupation } => {
            let id = profiles.keys().max().copied().unwrap_or(0) + 1;
            profiles.insert(id, quantize_user(id, age, &gender, &occupation)?);
            let count = bundle::bump_new_user_count(model_dir)?;
            if count >= bundle.config.retrain_threshold {
                eprintln!(
                    "warning: {count} new users since the last fit (threshold {}); \
                     re-run `blockrec fit` to refresh the communities",
                    bundle.config.retrain_threshold
                );
            }
            id
        }
    };

    let ctx = PredictContext {
        profiles: &profiles,
        index: &index,
        item_sims: &bundle.item_sims,
        weights,
        neighbors: NeighborMode::Community(&bundle.model),
        fallback_size: bundle.config.fallback_size,
    };
    let recs = ctx.recommend_top_n(user_id, n)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "rank,item_id,score,route").map_err(|e| Error::io("stdout", e))?;
    for (pos, rec) in recs.iter().enumerate() {
        let route = match rec.route {
            Route::OldUser => "old_user",
            Route::NewUser => "new_user",
            Route::NewItem => "new_item",
        };
        writeln!(out, "{},{},{:.4},{}", pos + 1, rec.item_id, rec.p_final, route)
            .map_err(|e| Error::io("stdout", e))?;
    }
    Ok(())
}

pub fn cmd_evaluate(
    config: &PipelineConfig,
    report_path: &Path,
    plots: Option<&Path>,
    p_star: Option<f64>,
) -> Result<()> {
    let mut experiment = config.experiment_config()?;
    if let Some(p) = p_star {
        SplitRatio::new(p)?; // reject nonsense before the sweep swallows it
        experiment.train_proportions = vec![p];
    }
    let prepared = prepare(config)?;
    let data = Dataset {
        ratings: &prepared.table,
        profiles: &prepared.profiles,
        item_sims: &prepared.item_sims,
    };
    let report = run_experiment(&data, &experiment)?;
    std::fs::write(report_path, report.to_csv()).map_err(|e| Error::io(report_path, e))?;
    println!(
        "report: {} rows written to {}",
        report.rows.len(),
        report_path.display()
    );
    if let Some(dir) = plots {
        let written = write_plots(&report, dir)?;
        println!("plots: {} charts in {}", written.len(), dir.display());
    }
    for p in &experiment.train_proportions {
        if let Some(row) = report.find(Section::Error, *p, "mae") {
            println!(
                "p*={p}: mae {:.4} vs {:.4} ({:+.2}%)",
                row.ours,
                row.traditional,
                row.improvement_pct()
            );
        }
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

pub fn cmd_improve(
    ratings: &Path,
    labeled: &Path,
    comments: &Path,
    blend: &CommentBlend,
    stopwords: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let table = parse_ratings(ratings)?;
    let stopword_set = match stopwords {
        Some(path) => load_stopwords(path)?,
        None => HashSet::new(),
    };
    let classifier = build_classifier(&parse_labeled_comments(labeled)?, &stopword_set)?;
    let records = parse_comment_records(comments)?;
    let appended: HashMap<(u32, u32), f64> = records
        .iter()
        .map(|r| ((r.user_id, r.item_id), appended_rating_of(r, &classifier, blend)))
        .collect();

    let mut csv = String::from("user_id,item_id,initial_rating,appended_rating,final_rating\n");
    for rec in table.records() {
        let ar = appended
            .get(&(rec.user_id, rec.item_id))
            .copied()
            .unwrap_or(blend.default_appended);
        let fr = final_rating(rec.rating, ar, blend);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.user_id, rec.item_id, rec.rating, ar, fr
        ));
    }
    match out {
        Some(path) => std::fs::write(path, csv).map_err(|e| Error::io(path, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}
