//! Content branch: item feature documents → tf-idf term-document matrix →
//! truncated SVD latent space → item-item cosine similarity → rating
//! prediction from the target user's own history.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RatingsTable;

/// Lowercases and splits on non-alphanumeric characters; empty fragments are
/// dropped. Numbers (e.g. release years in titles) are kept as tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Loads a stopword list, one word per line (blank lines ignored).
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// tf-idf weighted term-document matrix: r feature words × s item documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermDocMatrix {
    /// r×s weight matrix; row order matches `vocabulary`.
    pub weights: DMatrix<f64>,
    /// Retained feature words in row order (sorted for determinism).
    pub vocabulary: Vec<String>,
    /// Feature threshold the matrix was built with.
    pub sigma: f64,
}

impl TermDocMatrix {
    pub fn word_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn doc_count(&self) -> usize {
        self.weights.ncols()
    }
}

/// Builds the tf-idf matrix over the documents.
///
/// Weight(w, d) = tf(w, d) · ln(s / df(w)) with tf the raw in-document count.
/// Words whose maximum weight across documents falls below `sigma` are
/// dropped. Column order follows the input document order; rows are the
/// surviving vocabulary in sorted order.
pub fn build_term_doc_matrix(
    documents: &[String],
    stopwords: &HashSet<String>,
    sigma: f64,
) -> Result<TermDocMatrix> {
    if documents.is_empty() {
        return Err(Error::validation("need at least one document"));
    }
    let s = documents.len();
    // Per-document term counts; BTreeMap keeps the vocabulary order stable.
    let mut counts: Vec<BTreeMap<String, f64>> = Vec::with_capacity(s);
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in documents {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for token in tokenize(doc) {
            if stopwords.contains(&token) {
                continue;
            }
            *tf.entry(token).or_insert(0.0) += 1.0;
        }
        for word in tf.keys() {
            *df.entry(word.clone()).or_insert(0) += 1;
        }
        counts.push(tf);
    }
    if df.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    // Weigh every candidate word, keeping those whose best weight clears σ.
    let mut vocabulary = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (word, &doc_freq) in &df {
        let idf = (s as f64 / doc_freq as f64).ln();
        let row: Vec<f64> = counts
            .iter()
            .map(|tf| tf.get(word).copied().unwrap_or(0.0) * idf)
            .collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max >= sigma {
            vocabulary.push(word.clone());
            rows.push(row);
        }
    }
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let r = vocabulary.len();
    let weights = DMatrix::from_fn(r, s, |i, j| rows[i][j]);
    Ok(TermDocMatrix {
        weights,
        vocabulary,
        sigma,
    })
}

/// Rank-M truncated factorization X_M = U_M · diag(S_M) · V_Mᵀ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsaModel {
    /// r×M, orthonormal columns.
    pub u: DMatrix<f64>,
    /// The M singular values, non-increasing, all positive.
    pub s: DVector<f64>,
    /// s×M, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl LsaModel {
    pub fn latent_dim(&self) -> usize {
        self.s.len()
    }

    /// The rank-M approximation U·diag(S)·Vᵀ.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }

    /// M×s matrix whose column j is diag(S)·v_j — item j's latent
    /// coordinates. Cosines between these columns equal cosines between the
    /// corresponding columns of X_M (U's orthonormal columns preserve
    /// angles), which keeps similarity O(s²·M) instead of O(s²·r).
    pub fn latent_items(&self) -> DMatrix<f64> {
        let m = self.latent_dim();
        let s_items = self.v.nrows();
        DMatrix::from_fn(m, s_items, |k, j| self.s[k] * self.v[(j, k)])
    }
}

/// Deterministic sign convention: flip each column so its largest-magnitude
/// entry is positive (eigen solvers return either sign).
fn fix_column_signs(mat: &mut DMatrix<f64>) -> Vec<f64> {
    let mut signs = Vec::with_capacity(mat.ncols());
    for c in 0..mat.ncols() {
        let mut best = 0usize;
        for r in 0..mat.nrows() {
            if mat[(r, c)].abs() > mat[(best, c)].abs() {
                best = r;
            }
        }
        let sign = if mat[(best, c)] < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            for r in 0..mat.nrows() {
                mat[(r, c)] = -mat[(r, c)];
            }
        }
        signs.push(sign);
    }
    signs
}

/// Top-M singular triplets of the term-document matrix.
///
/// Works through the smaller Gram matrix (XᵀX or XXᵀ) and a symmetric eigen
/// decomposition, so the cost is driven by min(r, s) — the item count for a
/// tall vocabulary. Singular values indistinguishable from zero are dropped,
/// so the returned rank can be lower than the requested M when X itself has
/// lower rank.
pub fn truncated_svd(x: &TermDocMatrix, m: usize) -> Result<LsaModel> {
    let (r, s) = (x.weights.nrows(), x.weights.ncols());
    if m == 0 || m > r.min(s) {
        return Err(Error::Dimension(format!(
            "latent dimension {m} outside [1, min(r={r}, s={s})]"
        )));
    }
    let frob2: f64 = x.weights.iter().map(|w| w * w).sum();
    if frob2 == 0.0 {
        return Err(Error::Degenerate(
            "term-document matrix is all zeros".into(),
        ));
    }

    let tall = r >= s; // eigen-decompose the smaller side
    let gram = if tall {
        x.weights.transpose() * &x.weights
    } else {
        &x.weights * x.weights.transpose()
    };
    let gram_side = gram.nrows();
    let eig = gram.symmetric_eigen();

    // Order eigenpairs by descending eigenvalue.
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let max_ev = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = max_ev * 1e-12;
    let mut kept = Vec::new();
    for &idx in order.iter().take(m) {
        let ev = eig.eigenvalues[idx];
        if ev > cutoff && ev > 0.0 {
            kept.push((ev.sqrt(), idx));
        }
    }
    if kept.is_empty() {
        return Err(Error::Numerical(
            "no positive singular values survived truncation".into(),
        ));
    }

    let k = kept.len();
    let mut small = DMatrix::zeros(gram_side, k); // eigenvectors of the Gram side
    for (c, &(_, idx)) in kept.iter().enumerate() {
        small.set_column(c, &eig.eigenvectors.column(idx));
    }
    fix_column_signs(&mut small);
    let sigma = DVector::from_iterator(k, kept.iter().map(|&(sv, _)| sv));

    // Recover the other factor by X·V·Σ⁻¹ (or Xᵀ·U·Σ⁻¹).
    let (u, v) = if tall {
        let mut u = &x.weights * &small;
        for c in 0..k {
            let inv = 1.0 / sigma[c];
            for rr in 0..u.nrows() {
                u[(rr, c)] *= inv;
            }
        }
        (u, small)
    } else {
        let mut v = x.weights.transpose() * &small;
        for c in 0..k {
            let inv = 1.0 / sigma[c];
            for rr in 0..v.nrows() {
                v[(rr, c)] *= inv;
            }
        }
        (small, v)
    };

    Ok(LsaModel { u, s: sigma, v })
}

/// Symmetric item-item cosine matrix keyed by item id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemSimilarityMatrix {
    /// Item ids in column order of the term-document matrix.
    pub item_ids: Vec<u32>,
    index: HashMap<u32, usize>,
    /// s×s cosine matrix over latent item columns.
    sims: DMatrix<f64>,
}

impl ItemSimilarityMatrix {
    /// Wraps an already-computed similarity matrix; `sims[(i, j)]` must be
    /// the similarity between `item_ids[i]` and `item_ids[j]`.
    pub fn from_parts(item_ids: Vec<u32>, sims: DMatrix<f64>) -> Result<Self> {
        if sims.nrows() != item_ids.len() || sims.ncols() != item_ids.len() {
            return Err(Error::Dimension(format!(
                "{}×{} similarity matrix for {} items",
                sims.nrows(),
                sims.ncols(),
                item_ids.len()
            )));
        }
        let index: HashMap<u32, usize> = item_ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| (id, pos))
            .collect();
        if index.len() != item_ids.len() {
            return Err(Error::validation("duplicate item id in similarity matrix"));
        }
        Ok(ItemSimilarityMatrix {
            item_ids,
            index,
            sims,
        })
    }

    /// Cosine similarity by item id; `None` when either id is unknown.
    pub fn get(&self, j: u32, k: u32) -> Option<f64> {
        let (&cj, &ck) = (self.index.get(&j)?, self.index.get(&k)?);
        Some(self.sims[(cj, ck)])
    }

    pub fn contains(&self, item: u32) -> bool {
        self.index.contains_key(&item)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sims
    }
}

/// Cosine similarity between every pair of items in the latent space.
///
/// Pairs involving an all-zero latent column get similarity 0 (a featureless
/// item should attract no weight in the content prediction); nonzero items
/// keep a unit diagonal.
pub fn item_similarity(model: &LsaModel, item_ids: &[u32]) -> Result<ItemSimilarityMatrix> {
    let latent = model.latent_items();
    let s = latent.ncols();
    if item_ids.len() != s {
        return Err(Error::Dimension(format!(
            "{} item ids for {} documents",
            item_ids.len(),
            s
        )));
    }
    let norms: Vec<f64> = (0..s).map(|j| latent.column(j).norm()).collect();
    let mut sims = DMatrix::zeros(s, s);
    for j in 0..s {
        if norms[j] == 0.0 {
            continue;
        }
        sims[(j, j)] = 1.0;
        for k in (j + 1)..s {
            if norms[k] == 0.0 {
                continue;
            }
            let cos = latent.column(j).dot(&latent.column(k)) / (norms[j] * norms[k]);
            sims[(j, k)] = cos;
            sims[(k, j)] = cos;
        }
    }
    let index = item_ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| (id, pos))
        .collect();
    Ok(ItemSimilarityMatrix {
        item_ids: item_ids.to_vec(),
        index,
        sims,
    })
}

/// Content-based rating prediction from the user's own training history:
/// the similarity-weighted average of the user's ratings over reference
/// items with positive similarity to the target. A zero denominator (no
/// positively-similar reference) falls back to the user's mean rating.
pub fn content_predict(
    user: u32,
    item: u32,
    sims: &ItemSimilarityMatrix,
    train: &RatingsTable,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for rec in train.records() {
        if rec.user_id != user {
            continue;
        }
        sum += rec.rating;
        count += 1;
        if rec.item_id == item {
            continue;
        }
        if let Some(sim) = sims.get(item, rec.item_id) {
            if sim > 0.0 {
                num += sim * rec.rating;
                den += sim;
            }
        }
    }
    if count == 0 {
        return Err(Error::ColdStartUser(user));
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Ok(sum / count as f64)
    }
}
