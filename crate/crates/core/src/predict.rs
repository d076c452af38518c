//! User similarities, collaborative prediction over community neighbors,
//! and the hybrid blend that joins both prediction branches.
//!
//! The engine rates an item for a user from two directions: a content-based
//! estimate from the user's own history weighted by latent item similarity,
//! and a collaborative estimate from neighbor deviations (the neighbor set
//! being the user's block-model community, or a top-similarity set for the
//! conventional baseline). `hybrid_predict` routes around missing pieces:
//! users without history go through attribute similarity only, items nobody
//! has rated fall back to the content branch alone.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::ItemSimilarityMatrix;
use crate::error::{Error, Result};
use crate::ingest::{RatingsTable, UserProfile};
use crate::wsbm::WsbmModel;

/// Blend weights for the two similarity components (α, β) and the two
/// prediction branches (γ₁ content, γ₂ collaborative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendWeights {
    pub alpha_basic: f64,
    pub beta_rating: f64,
    pub gamma_content: f64,
    pub gamma_cf: f64,
}

impl BlendWeights {
    pub fn new(
        alpha_basic: f64,
        beta_rating: f64,
        gamma_content: f64,
        gamma_cf: f64,
    ) -> Result<Self> {
        let w = BlendWeights {
            alpha_basic,
            beta_rating,
            gamma_content,
            gamma_cf,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_basic,
            self.beta_rating,
            self.gamma_content,
            self.gamma_cf,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation(
                "blend weights must be finite and non-negative",
            ));
        }
        if self.alpha_basic + self.beta_rating <= 0.0 {
            return Err(Error::validation("alpha_basic + beta_rating must be > 0"));
        }
        if self.gamma_content + self.gamma_cf <= 0.0 {
            return Err(Error::validation("gamma_content + gamma_cf must be > 0"));
        }
        Ok(())
    }
}

impl Default for BlendWeights {
    fn default() -> Self {
        BlendWeights {
            alpha_basic: 0.2,
            beta_rating: 0.8,
            gamma_content: 0.4,
            gamma_cf: 0.6,
        }
    }
}

/// Which path produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    OldUser,
    NewUser,
    NewItem,
}

/// One scored (user, item) pair with its components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub user_id: u32,
    pub item_id: u32,
    pub p_content: Option<f64>,
    pub pp_cf: Option<f64>,
    pub p_final: f64,
    pub route: Route,
}

/// How the rating-vector cosine treats coordinates outside the co-rated set:
/// the full sparse vectors over the item universe (default), or only the
/// co-rated coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RatingSimMode {
    #[default]
    FullVectors,
    CoRatedOnly,
}

/// Indexed view of a ratings table: per-user sorted rating vectors with
/// cached means and norms, plus per-item rater lists. Every hot-path
/// operation in this module works off this index rather than rescanning
/// the table.
#[derive(Debug, Clone)]
pub struct RatingIndex {
    users: Vec<u32>,
    user_pos: HashMap<u32, usize>,
    /// Per user: (item_id, rating), ascending by item.
    ratings: Vec<Vec<(u32, f64)>>,
    means: Vec<f64>,
    norms: Vec<f64>,
    /// Per item: positions of the users who rated it, ascending.
    raters: HashMap<u32, Vec<usize>>,
    items: Vec<u32>,
    global_mean: f64,
}

impl RatingIndex {
    pub fn new(train: &RatingsTable) -> Self {
        let users = train.user_ids();
        let user_pos: HashMap<u32, usize> =
            users.iter().enumerate().map(|(p, &u)| (u, p)).collect();
        let mut ratings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); users.len()];
        let mut raters: HashMap<u32, Vec<usize>> = HashMap::new();
        let mut total = 0.0;
        for rec in train.records() {
            let pos = user_pos[&rec.user_id];
            ratings[pos].push((rec.item_id, rec.rating));
            total += rec.rating;
        }
        for row in ratings.iter_mut() {
            row.sort_unstable_by_key(|&(item, _)| item);
        }
        for (pos, row) in ratings.iter().enumerate() {
            for &(item, _) in row {
                raters.entry(item).or_default().push(pos);
            }
        }
        for list in raters.values_mut() {
            list.sort_unstable();
        }
        let means: Vec<f64> = ratings
            .iter()
            .map(|row| {
                if row.is_empty() {
                    0.0
                } else {
                    row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64
                }
            })
            .collect();
        let norms: Vec<f64> = ratings
            .iter()
            .map(|row| row.iter().map(|&(_, r)| r * r).sum::<f64>().sqrt())
            .collect();
        let global_mean = if train.is_empty() {
            0.0
        } else {
            total / train.len() as f64
        };
        RatingIndex {
            users,
            user_pos,
            ratings,
            means,
            norms,
            raters,
            items: train.item_ids(),
            global_mean,
        }
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn position(&self, user: u32) -> Option<usize> {
        self.user_pos.get(&user).copied()
    }

    pub fn user_at(&self, pos: usize) -> u32 {
        self.users[pos]
    }

    /// The user's (item, rating) pairs, ascending by item; empty slice for
    /// unknown users.
    pub fn ratings_of(&self, user: u32) -> &[(u32, f64)] {
        self.position(user)
            .map(|p| self.ratings[p].as_slice())
            .unwrap_or(&[])
    }

    pub fn mean_of(&self, user: u32) -> Option<f64> {
        let pos = self.position(user)?;
        if self.ratings[pos].is_empty() {
            None
        } else {
            Some(self.means[pos])
        }
    }

    pub fn rating(&self, user: u32, item: u32) -> Option<f64> {
        let row = self.ratings_of(user);
        row.binary_search_by_key(&item, |&(i, _)| i)
            .ok()
            .map(|at| row[at].1)
    }

    /// Positions of the users who rated `item` (ascending); empty for items
    /// rated by nobody.
    pub fn raters_of(&self, item: u32) -> &[usize] {
        self.raters.get(&item).map(Vec::as_slice).unwrap_or(&[])
    }

    fn row(&self, pos: usize) -> &[(u32, f64)] {
        &self.ratings[pos]
    }
}

fn cosine3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    dot / (na * nb)
}

/// Basic-information similarity: cosine of the two quantized attribute
/// vectors. Always in (0, 1] — every attribute code is at least 1.
pub fn sim_basic(a: &UserProfile, b: &UserProfile) -> f64 {
    cosine3(a.attribute_vector(), b.attribute_vector())
}

/// Rating-vector similarity: cosine of the two users' sparse rating vectors
/// over the item universe (unrated items are zero coordinates, so only
/// co-rated items contribute to the dot product). Users sharing no rated
/// item get similarity 0.
pub fn sim_rating(a: u32, b: u32, index: &RatingIndex) -> Result<f64> {
    sim_rating_with_mode(a, b, index, RatingSimMode::FullVectors)
}

/// `sim_rating` with an explicit treatment of non-co-rated coordinates.
pub fn sim_rating_with_mode(
    a: u32,
    b: u32,
    index: &RatingIndex,
    mode: RatingSimMode,
) -> Result<f64> {
    let (pa, pb) = match (index.position(a), index.position(b)) {
        (Some(pa), Some(pb)) => (pa, pb),
        (None, _) => return Err(Error::ColdStartUser(a)),
        (_, None) => return Err(Error::ColdStartUser(b)),
    };
    if index.row(pa).is_empty() {
        return Err(Error::ColdStartUser(a));
    }
    if index.row(pb).is_empty() {
        return Err(Error::ColdStartUser(b));
    }
    let (dot, na, nb) = sparse_cosine_parts(index.row(pa), index.row(pb), mode, index, pa, pb);
    if dot == 0.0 || na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

fn sparse_cosine_parts(
    ra: &[(u32, f64)],
    rb: &[(u32, f64)],
    mode: RatingSimMode,
    index: &RatingIndex,
    pa: usize,
    pb: usize,
) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut co_a = 0.0;
    let mut co_b = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < ra.len() && j < rb.len() {
        match ra[i].0.cmp(&rb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += ra[i].1 * rb[j].1;
                co_a += ra[i].1 * ra[i].1;
                co_b += rb[j].1 * rb[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    match mode {
        RatingSimMode::FullVectors => (dot, index.norms[pa], index.norms[pb]),
        RatingSimMode::CoRatedOnly => (dot, co_a.sqrt(), co_b.sqrt()),
    }
}

/// The integrated-similarity formula given both component values: a new
/// user's similarity is the attribute cosine alone, an old user's blends
/// both components.
pub fn integrate_sims(sim1: f64, sim2: f64, weights: &BlendWeights, a_is_new: bool) -> f64 {
    if a_is_new {
        sim1
    } else {
        weights.alpha_basic * sim1 + weights.beta_rating * sim2
    }
}

/// Integrated user similarity from the data: attribute cosine for new
/// users, the α/β blend of attribute and rating cosines for old ones.
pub fn sim_integrated(
    a: u32,
    b: u32,
    weights: &BlendWeights,
    a_is_new: bool,
    profiles: &HashMap<u32, UserProfile>,
    index: &RatingIndex,
) -> Result<f64> {
    let pa = profiles
        .get(&a)
        .ok_or_else(|| Error::validation(format!("no profile for user {a}")))?;
    let pb = profiles
        .get(&b)
        .ok_or_else(|| Error::validation(format!("no profile for user {b}")))?;
    let sim1 = sim_basic(pa, pb);
    if a_is_new {
        return Ok(sim1);
    }
    let sim2 = sim_rating(a, b, index)?;
    Ok(integrate_sims(sim1, sim2, weights, false))
}

/// The deviation-accumulation rule at the heart of collaborative
/// prediction: the user's mean plus the similarity-weighted average
/// neighbor deviation. Zero similarity mass (or no terms) returns the mean
/// unchanged.
pub fn cf_accumulate(a_mean: f64, terms: &[(f64, f64)]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(sim, deviation) in terms {
        num += sim * deviation;
        den += sim.abs();
    }
    if den > 0.0 {
        a_mean + num / den
    } else {
        a_mean
    }
}

/// Collaborative prediction from neighbor deviations: the user's mean plus
/// the similarity-weighted average deviation of the neighbors who rated the
/// item. An empty reference set or an all-zero similarity mass falls back
/// to the user's mean (global training mean for users without history).
pub fn cf_predict(
    a: u32,
    item: u32,
    neighbors: &[u32],
    weights: &BlendWeights,
    profiles: &HashMap<u32, UserProfile>,
    index: &RatingIndex,
) -> Result<f64> {
    let a_is_new = index.mean_of(a).is_none();
    let a_mean = index.mean_of(a).unwrap_or_else(|| index.global_mean());
    let mut terms = Vec::new();
    for &b in neighbors {
        if b == a {
            continue;
        }
        let (rating, b_mean) = match (index.rating(b, item), index.mean_of(b)) {
            (Some(r), Some(m)) => (r, m),
            _ => continue,
        };
        let sim = sim_integrated(a, b, weights, a_is_new, profiles, index)?;
        terms.push((sim, rating - b_mean));
    }
    Ok(cf_accumulate(a_mean, &terms))
}

/// Where a user's collaborative neighbors come from: the user's block-model
/// community, or the top-n most integrated-similar users (the conventional
/// baseline the experiments compare against).
#[derive(Debug, Clone, Copy)]
pub enum NeighborMode<'a> {
    Community(&'a WsbmModel),
    TopSim(usize),
}

/// Everything `hybrid_predict` needs besides the (user, item) pair.
#[derive(Clone, Copy)]
pub struct PredictContext<'a> {
    pub profiles: &'a HashMap<u32, UserProfile>,
    pub index: &'a RatingIndex,
    pub item_sims: &'a ItemSimilarityMatrix,
    pub weights: BlendWeights,
    pub neighbors: NeighborMode<'a>,
    /// Neighbor-set size for users outside the graph (new users and
    /// singleton communities).
    pub fallback_size: usize,
}

/// Per-user prediction state: the resolved neighbor set with its
/// similarities, reusable across that user's items.
pub struct UserPredictor {
    user_id: u32,
    is_new: bool,
    mean: f64,
    /// Neighbor user position → integrated similarity.
    neighbor_sims: HashMap<usize, f64>,
}

fn clamp_rating(p: f64) -> f64 {
    p.clamp(1.0, 5.0)
}

impl<'a> PredictContext<'a> {
    /// Builds the reusable per-user state: routing flag, mean, and the
    /// neighbor similarity map.
    pub fn user_predictor(&self, a: u32) -> Result<UserPredictor> {
        let is_new = self.index.mean_of(a).is_none();
        if !self.profiles.contains_key(&a) {
            return Err(Error::UnknownUser(a));
        }
        let mean = self
            .index
            .mean_of(a)
            .unwrap_or_else(|| self.index.global_mean());
        let neighbor_ids: Vec<u32> = if is_new {
            self.fallback_by_basic_sim(a)
        } else {
            match self.neighbors {
                NeighborMode::Community(model) => match model.nearest_neighbors(a) {
                    Ok(peers) if !peers.is_empty() => peers,
                    // Singleton community or a user the graph never saw:
                    // same fallback as new users, but ranked by the full
                    // integrated similarity since history exists.
                    Ok(_) | Err(Error::UnknownUser(_)) => self.fallback_by_integrated_sim(a)?,
                    Err(e) => return Err(e),
                },
                NeighborMode::TopSim(n) => self.top_n_by_integrated_sim(a, n)?,
            }
        };
        let mut neighbor_sims = HashMap::with_capacity(neighbor_ids.len());
        for b in neighbor_ids {
            if b == a {
                continue;
            }
            let Some(pos) = self.index.position(b) else {
                continue; // neighbor without training ratings cannot contribute
            };
            let sim = sim_integrated(a, b, &self.weights, is_new, self.profiles, self.index)?;
            neighbor_sims.insert(pos, sim);
        }
        Ok(UserPredictor {
            user_id: a,
            is_new,
            mean,
            neighbor_sims,
        })
    }

    /// New-user fallback: the `fallback_size` most attribute-similar users
    /// among those with training ratings.
    fn fallback_by_basic_sim(&self, a: u32) -> Vec<u32> {
        let pa = &self.profiles[&a];
        let mut scored: Vec<(f64, u32)> = self
            .index
            .users()
            .iter()
            .filter(|&&b| b != a)
            .filter_map(|&b| self.profiles.get(&b).map(|pb| (sim_basic(pa, pb), b)))
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored
            .into_iter()
            .take(self.fallback_size)
            .map(|(_, b)| b)
            .collect()
    }

    fn fallback_by_integrated_sim(&self, a: u32) -> Result<Vec<u32>> {
        self.top_n_by_integrated_sim(a, self.fallback_size)
    }

    fn top_n_by_integrated_sim(&self, a: u32, n: usize) -> Result<Vec<u32>> {
        let mut scored: Vec<(f64, u32)> = Vec::with_capacity(self.index.users().len());
        for &b in self.index.users() {
            if b == a {
                continue;
            }
            let sim = sim_integrated(a, b, &self.weights, false, self.profiles, self.index)?;
            scored.push((sim, b));
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        Ok(scored.into_iter().take(n).map(|(_, b)| b).collect())
    }

    /// Scores one (user, item) pair, routing by which data exists. See the
    /// module docs for the three routes.
    pub fn hybrid_predict(&self, a: u32, item: u32) -> Result<Prediction> {
        let predictor = self.user_predictor(a)?;
        self.predict_with(&predictor, item)
    }

    /// `hybrid_predict` with a prebuilt per-user state — the form every
    /// loop over one user's items should use.
    pub fn predict_with(&self, predictor: &UserPredictor, item: u32) -> Result<Prediction> {
        let a = predictor.user_id;
        let item_has_raters = !self.index.raters_of(item).is_empty();

        if predictor.is_new {
            if !item_has_raters {
                return Err(Error::Unpredictable { user: a, item });
            }
            let pp = self.cf_component(predictor, item);
            return Ok(Prediction {
                user_id: a,
                item_id: item,
                p_content: None,
                pp_cf: Some(pp),
                p_final: clamp_rating(pp),
                route: Route::NewUser,
            });
        }

        let p_content = self.content_component(a, item);
        if !item_has_raters {
            let Some(p) = p_content else {
                return Err(Error::Unpredictable { user: a, item });
            };
            return Ok(Prediction {
                user_id: a,
                item_id: item,
                p_content: Some(p),
                pp_cf: None,
                p_final: clamp_rating(p),
                route: Route::NewItem,
            });
        }

        let pp = self.cf_component(predictor, item);
        // An item outside the content model (no usable description) leaves
        // only the collaborative branch; the route is still the old-user
        // path since history drove the prediction.
        let p_final = match p_content {
            Some(p) => self.weights.gamma_content * p + self.weights.gamma_cf * pp,
            None => pp,
        };
        Ok(Prediction {
            user_id: a,
            item_id: item,
            p_content,
            pp_cf: Some(pp),
            p_final: clamp_rating(p_final),
            route: Route::OldUser,
        })
    }

    /// Content-based estimate over the index (same semantics as
    /// `corpus::content_predict`): similarity-weighted average of the
    /// user's own ratings, mean fallback on zero similarity mass, `None`
    /// when the item is outside the similarity matrix.
    fn content_component(&self, a: u32, item: u32) -> Option<f64> {
        if !self.item_sims.contains(item) {
            return None;
        }
        let row = self.index.ratings_of(a);
        if row.is_empty() {
            return None;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &(ref_item, rating) in row {
            if ref_item == item {
                continue;
            }
            if let Some(sim) = self.item_sims.get(item, ref_item) {
                if sim > 0.0 {
                    num += sim * rating;
                    den += sim;
                }
            }
        }
        if den > 0.0 {
            Some(num / den)
        } else {
            self.index.mean_of(a)
        }
    }

    /// Collaborative estimate from the predictor's cached neighbor
    /// similarities; iterates only the item's raters.
    fn cf_component(&self, predictor: &UserPredictor, item: u32) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &pos in self.index.raters_of(item) {
            let Some(&sim) = predictor.neighbor_sims.get(&pos) else {
                continue;
            };
            let row = self.index.row(pos);
            let rating = row
                .binary_search_by_key(&item, |&(i, _)| i)
                .map(|at| row[at].1)
                .expect("rater index lists only users who rated the item");
            num += sim * (rating - self.index.means[pos]);
            den += sim.abs();
        }
        if den > 0.0 {
            predictor.mean + num / den
        } else {
            predictor.mean
        }
    }

    /// Top-n recommendation over the catalog items the user has not rated
    /// in training: descending score, ties toward the smaller item id.
    pub fn recommend_top_n(&self, a: u32, n: usize) -> Result<Vec<Prediction>> {
        if n == 0 {
            return Err(Error::validation("recommendation length must be >= 1"));
        }
        let predictor = self.user_predictor(a)?;
        let rated: BTreeSet<u32> = self
            .index
            .ratings_of(a)
            .iter()
            .map(|&(item, _)| item)
            .collect();
        let catalog: BTreeSet<u32> = self
            .index
            .items()
            .iter()
            .copied()
            .chain(self.item_sims.item_ids.iter().copied())
            .collect();
        let mut scored: Vec<Prediction> = Vec::new();
        for item in catalog {
            if rated.contains(&item) {
                continue;
            }
            match self.predict_with(&predictor, item) {
                Ok(p) => scored.push(p),
                // Items predictable by neither branch are simply not
                // recommendable for this user.
                Err(Error::Unpredictable { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        scored.sort_by(|x, y| {
            y.p_final
                .total_cmp(&x.p_final)
                .then(x.item_id.cmp(&y.item_id))
        });
        scored.truncate(n);
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::content_predict;
    use crate::ingest::RatingRecord;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn profile(age_bucket: u8, gender_code: u8, occupation_code: u8) -> UserProfile {
        UserProfile {
            user_id: 0,
            age_bucket,
            gender_code,
            occupation_code,
        }
    }

    fn table(rows: &[(u32, u32, f64)]) -> RatingsTable {
        RatingsTable::from_records(
            rows.iter()
                .map(|&(user_id, item_id, rating)| RatingRecord {
                    user_id,
                    item_id,
                    rating,
                    timestamp: 0,
                })
                .collect(),
        )
    }

    /// Identity similarity matrix over the given items with chosen
    /// off-diagonal entries.
    fn sims_with(items: &[u32], entries: &[(u32, u32, f64)]) -> ItemSimilarityMatrix {
        let n = items.len();
        let mut m = DMatrix::from_element(n, n, 0.0);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        let pos = |id: u32| items.iter().position(|&x| x == id).unwrap();
        for &(a, b, s) in entries {
            m[(pos(a), pos(b))] = s;
            m[(pos(b), pos(a))] = s;
        }
        ItemSimilarityMatrix::from_parts(items.to_vec(), m).unwrap()
    }

    #[test]
    fn identical_profiles_have_unit_similarity() {
        let p = profile(3, 1, 7);
        assert_relative_eq!(sim_basic(&p, &p), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn profile_similarity_matches_hand_cosine() {
        let a = profile(1, 1, 1);
        let b = profile(7, 2, 21);
        let expected = 30.0 / (3.0_f64.sqrt() * 494.0_f64.sqrt());
        assert_relative_eq!(sim_basic(&a, &b), expected, epsilon = 1e-12);
    }

    #[test]
    fn cosine_ignores_uniform_scaling() {
        // (2,2,2) is (1,1,1) scaled by 2; cosine to any vector is equal.
        let unit = profile(1, 1, 1);
        let scaled = profile(2, 2, 2);
        let other = profile(7, 2, 21);
        assert_relative_eq!(
            sim_basic(&unit, &other),
            sim_basic(&scaled, &other),
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_rating_vectors_have_unit_similarity() {
        let idx = RatingIndex::new(&table(&[(1, 10, 4.0), (1, 11, 2.0), (2, 10, 4.0), (2, 11, 2.0)]));
        assert_relative_eq!(sim_rating(1, 2, &idx).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_rated_items_give_zero() {
        let idx = RatingIndex::new(&table(&[(1, 10, 4.0), (2, 11, 5.0)]));
        assert_eq!(sim_rating(1, 2, &idx).unwrap(), 0.0);
    }

    #[test]
    fn rating_similarity_matches_hand_value() {
        // a={x:4}, b={x:2, y:2} → 8 / (4·√8) = 1/√2.
        let idx = RatingIndex::new(&table(&[(1, 10, 4.0), (2, 10, 2.0), (2, 11, 2.0)]));
        assert_relative_eq!(
            sim_rating(1, 2, &idx).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn corated_mode_ignores_unshared_coordinates() {
        let idx = RatingIndex::new(&table(&[(1, 10, 4.0), (2, 10, 2.0), (2, 11, 2.0)]));
        assert_relative_eq!(
            sim_rating_with_mode(1, 2, &idx, RatingSimMode::CoRatedOnly).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn userless_similarity_is_a_cold_start_error() {
        let idx = RatingIndex::new(&table(&[(1, 10, 4.0)]));
        assert!(matches!(
            sim_rating(1, 99, &idx),
            Err(Error::ColdStartUser(99))
        ));
    }

    #[test]
    fn integrated_similarity_branches() {
        let w = BlendWeights::default();
        // New user: sim₁ passes through.
        assert_relative_eq!(integrate_sims(0.8, 0.99, &w, true), 0.8, epsilon = 1e-12);
        // Old user with the experiment weights.
        assert_relative_eq!(
            integrate_sims(0.5, 0.75, &w, false),
            0.7,
            epsilon = 1e-12
        );
        // Degenerate α=1, β=0 reduces to sim₁.
        let w2 = BlendWeights::new(1.0, 0.0, 0.4, 0.6).unwrap();
        assert_relative_eq!(integrate_sims(0.33, 0.9, &w2, false), 0.33, epsilon = 1e-12);
    }

    #[test]
    fn cf_single_neighbor_substitution() {
        // One neighbor, sim 1 (identical profile & ratings scaled), rated
        // the item 1 above their mean → prediction = own mean + 1.
        let idx = RatingIndex::new(&table(&[
            (1, 10, 3.0),
            (2, 10, 3.0),
            (2, 11, 5.0),
            (2, 12, 3.0),
        ]));
        let profiles: HashMap<u32, UserProfile> =
            [(1, profile(1, 1, 1)), (2, profile(1, 1, 1))].into();
        let w = BlendWeights::new(1.0, 0.0, 0.4, 0.6).unwrap(); // sim ≡ sim₁ = 1
        // Neighbor mean (3+5+3)/3 = 11/3; rating 5 → deviation 4/3.
        let pp = cf_predict(1, 11, &[2], &w, &profiles, &idx).unwrap();
        assert_relative_eq!(pp, 3.0 + 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cf_empty_reference_set_falls_back_to_mean() {
        let idx = RatingIndex::new(&table(&[(1, 10, 3.0), (1, 11, 3.4)]));
        let profiles: HashMap<u32, UserProfile> = [(1, profile(1, 1, 1))].into();
        let pp = cf_predict(1, 99, &[], &BlendWeights::default(), &profiles, &idx).unwrap();
        assert_relative_eq!(pp, 3.2, epsilon = 1e-12);
    }

    #[test]
    fn cf_two_neighbor_hand_computation() {
        // Sims {0.5, 0.25} and deviations {+2, −1}:
        // num = 0.5·2 − 0.25·1 = 0.75, den = 0.75 → mean + 1.
        let pp = cf_accumulate(3.2, &[(0.5, 2.0), (0.25, -1.0)]);
        assert_relative_eq!(pp, 4.2, epsilon = 1e-12);
    }

    #[test]
    fn cf_zero_deviations_return_the_user_mean() {
        // Neighbor mean is 3 and the target item is rated exactly 3, so the
        // deviation vanishes and the prediction is the user's own mean.
        let idx = RatingIndex::new(&table(&[
            (1, 10, 4.0),
            (2, 11, 2.0),
            (2, 12, 4.0),
            (2, 13, 3.0),
        ]));
        let profiles: HashMap<u32, UserProfile> =
            [(1, profile(1, 1, 1)), (2, profile(2, 2, 2))].into();
        let pp = cf_predict(1, 13, &[2], &BlendWeights::default(), &profiles, &idx).unwrap();
        assert_relative_eq!(pp, 4.0, epsilon = 1e-12);
    }

    /// Fixture for the hybrid routes: user 1 is old, user 3 is new; item 10
    /// is rated by user 2 only; items 20–22 are rated by nobody.
    struct HybridFixture {
        profiles: HashMap<u32, UserProfile>,
        index: RatingIndex,
        sims: ItemSimilarityMatrix,
    }

    fn hybrid_fixture() -> HybridFixture {
        // User 1 rates item 11→2; user 2 rates 10→5, 11→1 (mean 3).
        let index = RatingIndex::new(&table(&[(1, 11, 2.0), (2, 10, 5.0), (2, 11, 1.0)]));
        let profiles: HashMap<u32, UserProfile> = [
            (1, profile(1, 1, 1)),
            (2, profile(1, 1, 1)),
            (3, profile(1, 1, 1)),
        ]
        .into();
        let sims = sims_with(&[10, 11], &[(10, 11, 0.5)]);
        HybridFixture {
            profiles,
            index,
            sims,
        }
    }

    #[test]
    fn hybrid_blend_matches_substitution() {
        let f = hybrid_fixture();
        let ctx = PredictContext {
            profiles: &f.profiles,
            index: &f.index,
            item_sims: &f.sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        // Content: user 1's sole reference (11→2) with sim 0.5 → p = 2.
        // CF: neighbor 2's deviation on item 10 is 5−3 = +2 → pp = 2+2 = 4.
        let pred = ctx.hybrid_predict(1, 10).unwrap();
        assert_eq!(pred.route, Route::OldUser);
        assert_relative_eq!(pred.p_content.unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(pred.pp_cf.unwrap(), 4.0, epsilon = 1e-12);
        // γ₁·p + γ₂·pp = 0.4·2 + 0.6·4 = 3.2.
        assert_relative_eq!(pred.p_final, 3.2, epsilon = 1e-12);
    }

    #[test]
    fn blend_fixed_point_passes_through() {
        // p = pp = 5 → final 5 for any convex γ.
        let w = BlendWeights::new(0.4, 0.6, 0.4, 0.6).unwrap();
        let blended = w.gamma_content * 5.0 + w.gamma_cf * 5.0;
        assert_relative_eq!(clamp_rating(blended), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn new_item_routes_through_content_only() {
        // Items 20–22 rated by nobody; user 1's references: 11→4.1, 12→3.4.
        let index = RatingIndex::new(&table(&[(1, 11, 4.0), (1, 12, 3.4)]));
        let profiles: HashMap<u32, UserProfile> = [(1, profile(1, 1, 1))].into();
        let sims = sims_with(&[11, 12, 20], &[(20, 11, 0.5), (20, 12, 0.5)]);
        let ctx = PredictContext {
            profiles: &profiles,
            index: &index,
            item_sims: &sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(5),
            fallback_size: 20,
        };
        let pred = ctx.hybrid_predict(1, 20).unwrap();
        assert_eq!(pred.route, Route::NewItem);
        assert!(pred.pp_cf.is_none());
        // (0.5·4.0 + 0.5·3.4) / 1.0 = 3.7.
        assert_relative_eq!(pred.p_final, 3.7, epsilon = 1e-12);
    }

    #[test]
    fn new_user_routes_through_attribute_similarity() {
        let f = hybrid_fixture();
        let ctx = PredictContext {
            profiles: &f.profiles,
            index: &f.index,
            item_sims: &f.sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        // User 3 has no ratings; item 10 is rated by user 2 (dev +2), so
        // pp = global mean + 2 clamped into the scale.
        let pred = ctx.hybrid_predict(3, 10).unwrap();
        assert_eq!(pred.route, Route::NewUser);
        assert!(pred.p_content.is_none());
        let global = f.index.global_mean();
        assert_relative_eq!(pred.pp_cf.unwrap(), global + 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            pred.p_final,
            clamp_rating(global + 2.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn doubly_cold_pair_is_unpredictable() {
        let f = hybrid_fixture();
        let ctx = PredictContext {
            profiles: &f.profiles,
            index: &f.index,
            item_sims: &f.sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        // User 3 is new and item 99 is rated by nobody and unknown to the
        // content model.
        assert!(matches!(
            ctx.hybrid_predict(3, 99),
            Err(Error::Unpredictable { user: 3, item: 99 })
        ));
    }

    #[test]
    fn predictions_clamp_to_the_rating_scale() {
        // Neighbor deviation +4 on top of mean 4 → raw 8, clamped to 5.
        let index = RatingIndex::new(&table(&[
            (1, 10, 4.0),
            (2, 11, 1.0),
            (2, 12, 1.0),
            (2, 13, 5.0),
        ]));
        let profiles: HashMap<u32, UserProfile> =
            [(1, profile(1, 1, 1)), (2, profile(1, 1, 1))].into();
        let sims = sims_with(&[10], &[]);
        let ctx = PredictContext {
            profiles: &profiles,
            index: &index,
            item_sims: &sims,
            weights: BlendWeights::new(1.0, 0.0, 0.0, 1.0).unwrap(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        // Neighbor mean = 7/3, rating on 13 is 5 → dev = 8/3; pp = 4 + 8/3 > 5.
        let pred = ctx.hybrid_predict(1, 13).unwrap();
        assert_relative_eq!(pred.p_final, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn recommendation_breaks_ties_by_item_id() {
        // Content-only scores: item 20 → 4.1, 21 → 3.9, 22 → 4.1.
        let index = RatingIndex::new(&table(&[(1, 11, 4.1), (1, 12, 3.9)]));
        let profiles: HashMap<u32, UserProfile> = [(1, profile(1, 1, 1))].into();
        let sims = sims_with(
            &[11, 12, 20, 21, 22],
            &[(20, 11, 0.7), (21, 12, 0.9), (22, 11, 0.3)],
        );
        let ctx = PredictContext {
            profiles: &profiles,
            index: &index,
            item_sims: &sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(5),
            fallback_size: 20,
        };
        let recs = ctx.recommend_top_n(1, 2).unwrap();
        let ids: Vec<u32> = recs.iter().map(|p| p.item_id).collect();
        assert_eq!(ids, vec![20, 22]);
        assert_relative_eq!(recs[0].p_final, 4.1, epsilon = 1e-12);
    }

    #[test]
    fn oversized_n_returns_every_unrated_item() {
        let f = hybrid_fixture();
        let ctx = PredictContext {
            profiles: &f.profiles,
            index: &f.index,
            item_sims: &f.sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        // User 1 rated item 11; catalog is {10, 11} → only item 10 remains.
        let recs = ctx.recommend_top_n(1, 100).unwrap();
        let ids: Vec<u32> = recs.iter().map(|p| p.item_id).collect();
        assert_eq!(ids, vec![10]);
    }

    #[test]
    fn fully_rated_user_gets_an_empty_list() {
        let index = RatingIndex::new(&table(&[(1, 10, 3.0), (1, 11, 4.0)]));
        let profiles: HashMap<u32, UserProfile> = [(1, profile(1, 1, 1))].into();
        let sims = sims_with(&[10, 11], &[]);
        let ctx = PredictContext {
            profiles: &profiles,
            index: &index,
            item_sims: &sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(5),
            fallback_size: 20,
        };
        assert!(ctx.recommend_top_n(1, 3).unwrap().is_empty());
    }

    #[test]
    fn zero_length_recommendation_is_rejected() {
        let f = hybrid_fixture();
        let ctx = PredictContext {
            profiles: &f.profiles,
            index: &f.index,
            item_sims: &f.sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        assert!(ctx.recommend_top_n(1, 0).is_err());
    }

    #[test]
    fn new_user_lists_depend_only_on_attributes() {
        let f = hybrid_fixture();
        let mut profiles = f.profiles.clone();
        profiles.insert(4, profile(1, 1, 1)); // same attributes as user 3
        let ctx = PredictContext {
            profiles: &profiles,
            index: &f.index,
            item_sims: &f.sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        let a: Vec<(u32, f64)> = ctx
            .recommend_top_n(3, 5)
            .unwrap()
            .iter()
            .map(|p| (p.item_id, p.p_final))
            .collect();
        let b: Vec<(u32, f64)> = ctx
            .recommend_top_n(4, 5)
            .unwrap()
            .iter()
            .map(|p| (p.item_id, p.p_final))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn indexed_content_component_matches_reference_implementation() {
        let rows = [
            (1, 10, 4.0),
            (1, 11, 2.0),
            (1, 12, 5.0),
            (2, 10, 3.0),
            (2, 12, 1.0),
        ];
        let t = table(&rows);
        let index = RatingIndex::new(&t);
        let profiles: HashMap<u32, UserProfile> =
            [(1, profile(1, 1, 1)), (2, profile(2, 1, 3))].into();
        let sims = sims_with(&[10, 11, 12], &[(10, 11, 0.4), (10, 12, 0.2), (11, 12, 0.6)]);
        let ctx = PredictContext {
            profiles: &profiles,
            index: &index,
            item_sims: &sims,
            weights: BlendWeights::default(),
            neighbors: NeighborMode::TopSim(1),
            fallback_size: 20,
        };
        for user in [1, 2] {
            for item in [10, 11, 12] {
                let fast = ctx.content_component(user, item).unwrap();
                let slow = content_predict(user, item, &sims, &t).unwrap();
                assert_relative_eq!(fast, slow, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn invalid_blend_weights_are_rejected() {
        assert!(BlendWeights::new(0.0, 0.0, 0.4, 0.6).is_err());
        assert!(BlendWeights::new(0.2, 0.8, 0.0, 0.0).is_err());
        assert!(BlendWeights::new(-0.1, 0.8, 0.4, 0.6).is_err());
        assert!(BlendWeights::new(f64::NAN, 0.8, 0.4, 0.6).is_err());
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric(
            ratings in proptest::collection::vec((1u32..=3, 10u32..=16, 1u32..=5), 2..20)
        ) {
            let rows: Vec<(u32, u32, f64)> = ratings
                .iter()
                .map(|&(u, i, r)| (u, i, r as f64))
                .collect();
            let idx = RatingIndex::new(&table(&rows));
            let users = idx.users().to_vec();
            for &a in &users {
                for &b in &users {
                    let ab = sim_rating(a, b, &idx).unwrap();
                    let ba = sim_rating(b, a, &idx).unwrap();
                    prop_assert!((ab - ba).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn blend_is_monotone_in_content(
            p1 in 1.0f64..5.0,
            bump in 0.0f64..2.0,
            pp in 1.0f64..5.0,
        ) {
            let w = BlendWeights::default();
            let low = clamp_rating(w.gamma_content * p1 + w.gamma_cf * pp);
            let high = clamp_rating(w.gamma_content * (p1 + bump) + w.gamma_cf * pp);
            prop_assert!(high >= low - 1e-12);
        }

        #[test]
        fn profile_similarity_is_symmetric_and_bounded(
            a in (1u8..=7, 1u8..=2, 1u8..=21),
            b in (1u8..=7, 1u8..=2, 1u8..=21),
        ) {
            let pa = profile(a.0, a.1, a.2);
            let pb = profile(b.0, b.1, b.2);
            let ab = sim_basic(&pa, &pb);
            let ba = sim_basic(&pb, &pa);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab > 0.0 && ab <= 1.0 + 1e-12);
        }
    }
}
