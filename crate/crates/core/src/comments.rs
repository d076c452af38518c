//! Rating correction from appended review comments.
//!
//! Users sometimes leave a star rating that their later, longer comment
//! contradicts. This stage classifies each additional comment into one of
//! the five score classes by cosine similarity against per-class tf-idf
//! centroids built from a labeled comment corpus, then blends the class
//! back into the original rating: `FR = η₁·r + η₂·ar`. Ratings without an
//! additional comment keep a neutral appended score of 3.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

/// Per-class tf-idf centroids over the pooled keyword set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommentClassifier {
    /// Keyword sets K₁..K₅, one per score class.
    keyword_sets: [HashSet<String>; 5],
    /// K* = ∪ K_l, in stable sorted order; centroid coordinates follow it.
    vocabulary: Vec<String>,
    vocab_index: HashMap<String, usize>,
    /// idf over the five class documents, aligned with `vocabulary`.
    idf: Vec<f64>,
    /// V₁..V₅ — tf-idf weight vectors of the class documents.
    centroids: [Vec<f64>; 5],
}

/// Blend weights η₁ (initial rating) and η₂ (appended rating), plus the
/// neutral appended score used when no comment exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommentBlend {
    pub eta1: f64,
    pub eta2: f64,
    pub default_appended: f64,
}

impl CommentBlend {
    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        let blend = CommentBlend {
            eta1,
            eta2,
            default_appended: 3.0,
        };
        blend.validate()?;
        Ok(blend)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta1.is_finite() || !self.eta2.is_finite() || self.eta1 < 0.0 || self.eta2 < 0.0 {
            return Err(Error::validation(
                "comment blend weights must be finite and non-negative",
            ));
        }
        if self.eta1 + self.eta2 <= 0.0 {
            return Err(Error::validation("eta1 + eta2 must be > 0"));
        }
        Ok(())
    }
}

impl Default for CommentBlend {
    fn default() -> Self {
        CommentBlend {
            eta1: 0.5,
            eta2: 0.5,
            default_appended: 3.0,
        }
    }
}

/// One labeled training comment: the text and its 1–5 score class.
#[derive(Debug, Clone)]
pub struct LabeledComment {
    pub score: u8,
    pub text: String,
}

/// One rating-correction input row: an existing rating plus the optional
/// additional comment attached to it.
#[derive(Debug, Clone)]
pub struct CommentRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub initial_rating: f64,
    pub comment: String,
}

/// Builds the per-class centroids from labeled comments.
///
/// Each score class's comments are pooled into one document; keywords are
/// the non-stopword tokens; tf is the raw count inside the class document
/// and idf is ln(5/df) over the five class documents.
pub fn build_classifier(
    labeled: &[LabeledComment],
    stopwords: &HashSet<String>,
) -> Result<CommentClassifier> {
    let mut class_counts: [BTreeMap<String, f64>; 5] = Default::default();
    let mut seen = [false; 5];
    for comment in labeled {
        if !(1..=5).contains(&comment.score) {
            return Err(Error::validation(format!(
                "labeled comment score {} outside 1..=5",
                comment.score
            )));
        }
        let class = (comment.score - 1) as usize;
        seen[class] = true;
        for token in tokenize(&comment.text) {
            if stopwords.contains(&token) {
                continue;
            }
            *class_counts[class].entry(token).or_insert(0.0) += 1.0;
        }
    }
    let missing: Vec<u8> = (0..5u8).filter(|&c| !seen[c as usize]).map(|c| c + 1).collect();
    if !missing.is_empty() {
        return Err(Error::MissingScoreClasses(missing));
    }

    let keyword_sets: [HashSet<String>; 5] =
        std::array::from_fn(|c| class_counts[c].keys().cloned().collect());
    let vocabulary: Vec<String> = {
        let mut all: Vec<String> = keyword_sets
            .iter()
            .flat_map(|set| set.iter().cloned())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        all.sort();
        all
    };
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let vocab_index: HashMap<String, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(pos, w)| (w.clone(), pos))
        .collect();

    let idf: Vec<f64> = vocabulary
        .iter()
        .map(|w| {
            let df = class_counts.iter().filter(|c| c.contains_key(w)).count();
            (5.0 / df as f64).ln()
        })
        .collect();

    let centroids: [Vec<f64>; 5] = std::array::from_fn(|c| {
        vocabulary
            .iter()
            .enumerate()
            .map(|(pos, w)| class_counts[c].get(w).copied().unwrap_or(0.0) * idf[pos])
            .collect()
    });
    // A centroid with no positive weight cannot be compared by cosine; this
    // happens exactly when every keyword of the class appears in all five
    // classes (idf 0 throughout).
    if let Some(degenerate) = centroids.iter().position(|v| v.iter().all(|&w| w <= 0.0)) {
        return Err(Error::Degenerate(format!(
            "score class {} has an all-zero tf-idf centroid (its keywords appear in every class)",
            degenerate + 1
        )));
    }

    Ok(CommentClassifier {
        keyword_sets,
        vocabulary,
        vocab_index,
        idf,
        centroids,
    })
}

impl CommentClassifier {
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn keyword_set(&self, score: u8) -> &HashSet<String> {
        &self.keyword_sets[(score - 1) as usize]
    }

    pub fn centroid(&self, score: u8) -> &[f64] {
        &self.centroids[(score - 1) as usize]
    }

    /// Classifies an additional comment into its appended rating: the score
    /// class whose centroid is most cosine-similar to the comment's tf-idf
    /// vector. Ties prefer the class nearest 3, then the smaller class; a
    /// comment with no pooled keyword (or an empty one) stays neutral at 3.
    pub fn appended_rating(&self, comment: &str) -> u8 {
        let mut av = vec![0.0; self.vocabulary.len()];
        let mut hit = false;
        for token in tokenize(comment) {
            if let Some(&pos) = self.vocab_index.get(&token) {
                av[pos] += 1.0;
                hit = true;
            }
        }
        if !hit {
            return 3;
        }
        for (pos, weight) in av.iter_mut().enumerate() {
            *weight *= self.idf[pos];
        }
        let av_norm = av.iter().map(|w| w * w).sum::<f64>().sqrt();
        if av_norm == 0.0 {
            // Every matched keyword was idf-0 (present in all classes):
            // no discriminating signal.
            return 3;
        }
        let mut best: Option<(f64, u8)> = None;
        for class in 0..5u8 {
            let centroid = &self.centroids[class as usize];
            let dot: f64 = av.iter().zip(centroid.iter()).map(|(a, c)| a * c).sum();
            let c_norm = centroid.iter().map(|w| w * w).sum::<f64>().sqrt();
            let cos = dot / (av_norm * c_norm);
            let score = class + 1;
            let better = match best {
                None => true,
                Some((best_cos, best_score)) => {
                    cos > best_cos + 1e-12
                        || ((cos - best_cos).abs() <= 1e-12
                            && tie_key(score) < tie_key(best_score))
                }
            };
            if better {
                best = Some((cos, score));
            }
        }
        best.expect("five classes always produce a candidate").1
    }
}

/// Tie order: distance from the neutral grade first, then the smaller score.
fn tie_key(score: u8) -> (u8, u8) {
    (score.abs_diff(3), score)
}

/// The corrected rating `FR = η₁·r + η₂·ar`.
pub fn final_rating(r: f64, ar: f64, blend: &CommentBlend) -> f64 {
    blend.eta1 * r + blend.eta2 * ar
}

/// The appended rating a record's comment yields: the classified score, or
/// the neutral default for a blank comment.
pub fn appended_rating_of(
    record: &CommentRecord,
    classifier: &CommentClassifier,
    blend: &CommentBlend,
) -> f64 {
    if record.comment.trim().is_empty() {
        blend.default_appended
    } else {
        f64::from(classifier.appended_rating(&record.comment))
    }
}

/// Applies the classifier to one record: classify the comment when present,
/// otherwise use the neutral default, then blend.
pub fn improve_rating(
    record: &CommentRecord,
    classifier: &CommentClassifier,
    blend: &CommentBlend,
) -> f64 {
    final_rating(
        record.initial_rating,
        appended_rating_of(record, classifier, blend),
        blend,
    )
}

/// Applies the comment correction to a whole ratings table.
///
/// Commented (user, item) pairs blend with the classified appended rating;
/// every other rating blends with the neutral default, so a single η pair
/// governs the whole table. Pairs in the comment file but absent from the
/// table are ignored — a comment cannot invent a rating.
pub fn improve_ratings(
    table: &crate::ingest::RatingsTable,
    records: &[CommentRecord],
    classifier: &CommentClassifier,
    blend: &CommentBlend,
) -> crate::ingest::RatingsTable {
    let appended: HashMap<(u32, u32), f64> = records
        .iter()
        .map(|rec| {
            let ar = appended_rating_of(rec, classifier, blend);
            ((rec.user_id, rec.item_id), ar)
        })
        .collect();
    let corrected = table
        .records()
        .iter()
        .map(|rec| {
            let ar = appended
                .get(&(rec.user_id, rec.item_id))
                .copied()
                .unwrap_or(blend.default_appended);
            crate::ingest::RatingRecord {
                rating: final_rating(rec.rating, ar, blend),
                ..*rec
            }
        })
        .collect();
    crate::ingest::RatingsTable::from_records(corrected)
}

/// Parses the labeled training corpus: CSV with a `score,comment_text`
/// header row.
pub fn parse_labeled_comments(path: &Path) -> Result<Vec<LabeledComment>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(&display, row + 2, e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::parse(
                &display,
                row + 2,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let score: u8 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, row + 2, format!("bad score {:?}", &record[0])))?;
        if !(1..=5).contains(&score) {
            return Err(Error::parse(
                &display,
                row + 2,
                format!("score {score} outside 1..=5"),
            ));
        }
        out.push(LabeledComment {
            score,
            text: record[1].to_string(),
        });
    }
    Ok(out)
}

/// Parses the rating-correction input: CSV with a
/// `user_id,item_id,initial_rating,comment_text` header row.
pub fn parse_comment_records(path: &Path) -> Result<Vec<CommentRecord>> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(&display, row + 2, e.to_string()))?;
        if record.len() != 4 {
            return Err(Error::parse(
                &display,
                row + 2,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let user_id: u32 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, row + 2, format!("bad user id {:?}", &record[0])))?;
        let item_id: u32 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, row + 2, format!("bad item id {:?}", &record[1])))?;
        let initial_rating: f64 = record[2].trim().parse().map_err(|_| {
            Error::parse(&display, row + 2, format!("bad rating {:?}", &record[2]))
        })?;
        if !(1.0..=5.0).contains(&initial_rating) {
            return Err(Error::parse(
                &display,
                row + 2,
                format!("rating {initial_rating} outside [1, 5]"),
            ));
        }
        out.push(CommentRecord {
            user_id,
            item_id,
            initial_rating,
            comment: record[3].to_string(),
        });
    }
    Ok(out)
}
