//! MovieLens-format file parsing, user attribute quantization, and
//! train/test splitting.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (user, item, rating, timestamp) record.
///
/// Raw parsed ratings are integers in 1..=5; the field is `f64` because the
/// comment-correction stage rewrites ratings onto a fractional scale before
/// the rest of the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: u64,
}

/// Ordered collection of rating records, deduplicated by (user, item) with
/// the latest timestamp winning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingsTable {
    records: Vec<RatingRecord>,
}

impl RatingsTable {
    /// Builds a table from records, resolving duplicate (user, item) pairs by
    /// keeping the record with the latest timestamp (input order breaks ties,
    /// later record wins). Record order is otherwise preserved.
    pub fn from_records(records: Vec<RatingRecord>) -> Self {
        let mut keep: HashMap<(u32, u32), usize> = HashMap::new();
        for (pos, rec) in records.iter().enumerate() {
            let key = (rec.user_id, rec.item_id);
            match keep.get(&key) {
                Some(&prev) if records[prev].timestamp > rec.timestamp => {}
                _ => {
                    keep.insert(key, pos);
                }
            }
        }
        let records = records
            .iter()
            .enumerate()
            .filter(|(pos, rec)| keep[&(rec.user_id, rec.item_id)] == *pos)
            .map(|(_, rec)| *rec)
            .collect();
        RatingsTable { records }
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct user ids, ascending.
    pub fn user_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.user_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Distinct item ids, ascending.
    pub fn item_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.item_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Serializes back to the tab-separated u.data format.
    pub fn to_udata_string(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.user_id, r.item_id, r.rating, r.timestamp
            ));
        }
        out
    }
}

/// Quantized user attributes; `attribute_vector` is what the demographic
/// cosine similarity consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: u32,
    pub age_bucket: u8,
    pub gender_code: u8,
    pub occupation_code: u8,
}

impl UserProfile {
    pub fn attribute_vector(&self) -> [f64; 3] {
        [
            f64::from(self.age_bucket),
            f64::from(self.gender_code),
            f64::from(self.occupation_code),
        ]
    }
}

/// Fraction of ratings placed in the training set; must lie strictly
/// inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio(f64);

impl SplitRatio {
    pub fn new(p_star: f64) -> Result<Self> {
        if p_star > 0.0 && p_star < 1.0 {
            Ok(SplitRatio(p_star))
        } else {
            Err(Error::validation(format!(
                "split ratio must be in (0, 1), got {p_star}"
            )))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// The 21 MovieLens occupations. "administrator" and "doctor" anchor the
/// endpoints (codes 1 and 21); the rest are alphabetical in between.
pub const OCCUPATIONS: [&str; 21] = [
    "administrator",
    "artist",
    "educator",
    "engineer",
    "entertainment",
    "executive",
    "healthcare",
    "homemaker",
    "lawyer",
    "librarian",
    "marketing",
    "none",
    "other",
    "programmer",
    "retired",
    "salesman",
    "scientist",
    "student",
    "technician",
    "writer",
    "doctor",
];

/// Catalog item: title plus genre labels, the raw material for the item
/// feature documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: u32,
    pub title: String,
    pub genres: Vec<String>,
}

impl ItemRecord {
    /// Feature document text: title followed by genre labels.
    pub fn document_text(&self) -> String {
        let mut text = self.title.clone();
        for g in &self.genres {
            text.push(' ');
            text.push_str(g);
        }
        text
    }
}

/// Genre flag labels of the ml-100k u.item format, in column order.
pub const GENRES: [&str; 19] = [
    "unknown",
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a tab-separated `user\titem\trating\ttimestamp` file.
///
/// Duplicate (user, item) pairs keep the latest timestamp. Ratings must be
/// integers in 1..=5.
pub fn parse_ratings(path: &Path) -> Result<RatingsTable> {
    let content = read_to_string(path)?;
    let display = path.display().to_string();
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &display,
                lineno,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let user_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid user id"))?;
        let item_id: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid item id"))?;
        let rating: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid rating"))?;
        let timestamp: u64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid timestamp"))?;
        if user_id == 0 || item_id == 0 {
            return Err(Error::parse(&display, lineno, "ids must be >= 1"));
        }
        if !(1..=5).contains(&rating) {
            return Err(Error::validation(format!(
                "{display}:{lineno}: rating {rating} outside [1, 5]"
            )));
        }
        records.push(RatingRecord {
            user_id,
            item_id,
            rating: rating as f64,
            timestamp,
        });
    }
    Ok(RatingsTable::from_records(records))
}

/// Maps raw (age, gender, occupation) attributes to their quantized codes.
///
/// Age buckets: <18, 18-25, 26-35, 36-45, 46-50, 51-56, >56 → 1..=7.
/// Gender: male→1, female→2. Occupation: [`OCCUPATIONS`] position + 1.
pub fn quantize_user(user_id: u32, age: u32, gender: &str, occupation: &str) -> Result<UserProfile> {
    let age_bucket = match age {
        0..=17 => 1,
        18..=25 => 2,
        26..=35 => 3,
        36..=45 => 4,
        46..=50 => 5,
        51..=56 => 6,
        _ => 7,
    };
    let gender_code = match gender.trim().to_ascii_lowercase().as_str() {
        "m" | "male" => 1,
        "f" | "female" => 2,
        other => {
            return Err(Error::validation(format!("unknown gender {other:?}")));
        }
    };
    let occ = occupation.trim().to_ascii_lowercase();
    let occupation_code = OCCUPATIONS
        .iter()
        .position(|o| *o == occ)
        .map(|p| (p + 1) as u8)
        .ok_or_else(|| Error::validation(format!("unknown occupation {occupation:?}")))?;
    Ok(UserProfile {
        user_id,
        age_bucket,
        gender_code,
        occupation_code,
    })
}

/// Parses a pipe-separated `user|age|gender|occupation|zip` file (zip code
/// ignored) into quantized profiles keyed by user id.
pub fn parse_users(path: &Path) -> Result<HashMap<u32, UserProfile>> {
    let content = read_to_string(path)?;
    let display = path.display().to_string();
    let mut profiles = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 4 {
            return Err(Error::parse(
                &display,
                lineno,
                format!("expected at least 4 pipe-separated fields, got {}", fields.len()),
            ));
        }
        let user_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid user id"))?;
        let age: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid age"))?;
        let profile = quantize_user(user_id, age, fields[2], fields[3])
            .map_err(|e| Error::parse(&display, lineno, e.to_string()))?;
        profiles.insert(user_id, profile);
    }
    Ok(profiles)
}

/// Parses a pipe-separated u.item file, consuming field 2 (title) and the 19
/// trailing genre flags. Items are returned in file order.
pub fn parse_items(path: &Path) -> Result<Vec<ItemRecord>> {
    let content = read_to_string(path)?;
    let display = path.display().to_string();
    let mut items = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 5 + GENRES.len() {
            return Err(Error::parse(
                &display,
                lineno,
                format!(
                    "expected {} pipe-separated fields, got {}",
                    5 + GENRES.len(),
                    fields.len()
                ),
            ));
        }
        let item_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid item id"))?;
        let flags = &fields[fields.len() - GENRES.len()..];
        let mut genres = Vec::new();
        for (g, flag) in GENRES.iter().zip(flags) {
            match flag.trim() {
                "1" => genres.push((*g).to_string()),
                "0" => {}
                other => {
                    return Err(Error::parse(
                        &display,
                        lineno,
                        format!("genre flag must be 0 or 1, got {other:?}"),
                    ));
                }
            }
        }
        items.push(ItemRecord {
            item_id,
            title: fields[1].trim().to_string(),
            genres,
        });
    }
    Ok(items)
}

/// Parses an optional `item_id<TAB>free text` description file; texts are
/// appended to the matching item documents.
pub fn parse_descriptions(path: &Path) -> Result<HashMap<u32, String>> {
    let content = read_to_string(path)?;
    let display = path.display().to_string();
    let mut out: HashMap<u32, String> = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id_str, text) = line.split_once('\t').ok_or_else(|| {
            Error::parse(&display, lineno, "expected `item_id<TAB>text`")
        })?;
        let item_id: u32 = id_str
            .trim()
            .parse()
            .map_err(|_| Error::parse(&display, lineno, "invalid item id"))?;
        let entry = out.entry(item_id).or_default();
        if !entry.is_empty() {
            entry.push(' ');
        }
        entry.push_str(text.trim());
    }
    Ok(out)
}

/// Splits the table into (train, test) by uniform random selection of
/// records. |train| = round(p_star · |table|); the two sides partition the
/// table and each preserves input record order. Deterministic given `seed`.
pub fn split_ratings(
    table: &RatingsTable,
    ratio: SplitRatio,
    seed: u64,
) -> Result<(RatingsTable, RatingsTable)> {
    if table.is_empty() {
        return Err(Error::validation("cannot split an empty ratings table"));
    }
    let n = table.len();
    let n_train = (ratio.value() * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &i in order.iter().take(n_train) {
        in_train[i] = true;
    }
    let records = table.records();
    let train: Vec<RatingRecord> = (0..n).filter(|&i| in_train[i]).map(|i| records[i]).collect();
    let test: Vec<RatingRecord> = (0..n).filter(|&i| !in_train[i]).map(|i| records[i]).collect();
    Ok((
        RatingsTable { records: train },
        RatingsTable { records: test },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_ratings_and_preserves_count() {
        let f = write_temp("1\t10\t5\t100\n2\t10\t3\t50\n1\t11\t4\t70\n");
        let table = parse_ratings(f.path()).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.user_ids(), vec![1, 2]);
        assert_eq!(table.item_ids(), vec![10, 11]);
        assert_eq!(table.records()[0].rating, 5.0);
    }

    #[test]
    fn empty_file_gives_empty_table() {
        let f = write_temp("");
        let table = parse_ratings(f.path()).unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn out_of_range_rating_is_validation_error() {
        let f = write_temp("1\t1\t9\t0\n");
        match parse_ratings(f.path()) {
            Err(Error::Validation(msg)) => assert!(msg.contains('9')),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_temp("1\t1\t5\t0\nnot a rating line\n");
        match parse_ratings(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_pairs_keep_latest_timestamp() {
        let f = write_temp("1\t10\t2\t100\n1\t10\t5\t200\n1\t10\t3\t150\n");
        let table = parse_ratings(f.path()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.records()[0].rating, 5.0);
        assert_eq!(table.records()[0].timestamp, 200);
    }

    #[test]
    fn quantize_matches_anchored_examples() {
        let p = quantize_user(1, 17, "male", "administrator").unwrap();
        assert_eq!(
            (p.age_bucket, p.gender_code, p.occupation_code),
            (1, 1, 1)
        );
        let p = quantize_user(2, 60, "female", "doctor").unwrap();
        assert_eq!(
            (p.age_bucket, p.gender_code, p.occupation_code),
            (7, 2, 21)
        );
    }

    #[test]
    fn age_boundaries_follow_bucket_ranges() {
        assert_eq!(quantize_user(1, 18, "male", "administrator").unwrap().age_bucket, 2);
        assert_eq!(quantize_user(1, 25, "m", "writer").unwrap().age_bucket, 2);
        assert_eq!(quantize_user(1, 26, "m", "writer").unwrap().age_bucket, 3);
        assert_eq!(quantize_user(1, 46, "f", "none").unwrap().age_bucket, 5);
        assert_eq!(quantize_user(1, 51, "f", "none").unwrap().age_bucket, 6);
        assert_eq!(quantize_user(1, 56, "f", "none").unwrap().age_bucket, 6);
        assert_eq!(quantize_user(1, 57, "f", "none").unwrap().age_bucket, 7);
    }

    #[test]
    fn unknown_occupation_is_rejected() {
        assert!(matches!(
            quantize_user(1, 30, "male", "astronaut"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn quantization_is_total_over_all_occupations() {
        for (i, occ) in OCCUPATIONS.iter().enumerate() {
            let p = quantize_user(1, 30, "F", occ).unwrap();
            assert_eq!(p.occupation_code as usize, i + 1);
        }
    }

    #[test]
    fn parses_users_file() {
        let f = write_temp("1|24|M|technician|85711\n2|53|F|other|94043\n");
        let profiles = parse_users(f.path()).unwrap();
        assert_eq!(profiles.len(), 2);
        assert_eq!(profiles[&1].attribute_vector(), [2.0, 1.0, 19.0]);
        assert_eq!(profiles[&2].attribute_vector(), [6.0, 2.0, 13.0]);
    }

    #[test]
    fn parses_items_with_genre_flags() {
        let mut flags = vec!["0"; 19];
        flags[1] = "1";
        flags[5] = "1";
        let line = format!(
            "7|Iron Will (1994)|01-Jan-1994||http://x|{}\n",
            flags.join("|")
        );
        let f = write_temp(&line);
        let items = parse_items(f.path()).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].item_id, 7);
        assert_eq!(items[0].genres, vec!["Action", "Comedy"]);
        assert_eq!(items[0].document_text(), "Iron Will (1994) Action Comedy");
    }

    #[test]
    fn split_sizes_match_rounded_ratio() {
        let records: Vec<RatingRecord> = (0..100)
            .map(|i| RatingRecord {
                user_id: i + 1,
                item_id: 1,
                rating: 3.0,
                timestamp: u64::from(i),
            })
            .collect();
        let table = RatingsTable::from_records(records);
        let (train, test) = split_ratings(&table, SplitRatio::new(0.8).unwrap(), 1).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
    }

    #[test]
    fn split_is_deterministic() {
        let records: Vec<RatingRecord> = (0..50)
            .map(|i| RatingRecord {
                user_id: i + 1,
                item_id: 1,
                rating: 3.0,
                timestamp: 0,
            })
            .collect();
        let table = RatingsTable::from_records(records);
        let ratio = SplitRatio::new(0.7).unwrap();
        let (tr1, te1) = split_ratings(&table, ratio, 9).unwrap();
        let (tr2, te2) = split_ratings(&table, ratio, 9).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
    }

    #[test]
    fn split_ratio_rejects_unit_bounds() {
        assert!(SplitRatio::new(1.0).is_err());
        assert!(SplitRatio::new(0.0).is_err());
        assert!(SplitRatio::new(0.5).is_ok());
    }

    #[test]
    fn parse_then_serialize_round_trips_triples() {
        let src = "3\t7\t4\t9\n1\t2\t5\t8\n";
        let f = write_temp(src);
        let table = parse_ratings(f.path()).unwrap();
        assert_eq!(table.to_udata_string(), src);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions_records(
                n in 2usize..120,
                p in 0.05f64..0.95,
                seed in 0u64..500,
            ) {
                let records: Vec<RatingRecord> = (0..n)
                    .map(|i| RatingRecord {
                        user_id: i as u32 + 1,
                        item_id: (i % 7) as u32 + 1,
                        rating: (i % 5 + 1) as f64,
                        timestamp: i as u64,
                    })
                    .collect();
                let table = RatingsTable::from_records(records.clone());
                let (train, test) =
                    split_ratings(&table, SplitRatio::new(p).unwrap(), seed).unwrap();
                prop_assert_eq!(train.len() + test.len(), n);
                prop_assert_eq!(train.len(), (p * n as f64).round() as usize);
                let mut merged: Vec<RatingRecord> =
                    train.records().iter().chain(test.records()).copied().collect();
                merged.sort_by_key(|r| (r.user_id, r.item_id));
                let mut original = records;
                original.sort_by_key(|r| (r.user_id, r.item_id));
                prop_assert_eq!(merged, original);
            }
        }
    }
}
