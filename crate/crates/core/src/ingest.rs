//! Review ingestion: JSON-lines parsing, per-user/per-item grouping,
//! dataset statistics and train/validation/test splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One parsed review. Serializes back to the same four source keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    #[serde(rename = "reviewerID")]
    pub user_id: String,
    #[serde(rename = "asin")]
    pub item_id: String,
    #[serde(rename = "overall")]
    pub rating: f64,
    #[serde(rename = "reviewText")]
    pub text: String,
}

impl ReviewRecord {
    pub fn new(
        user_id: impl Into<String>,
        item_id: impl Into<String>,
        rating: f64,
        text: impl Into<String>,
    ) -> Self {
        ReviewRecord {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
            text: text.into(),
        }
    }
}

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

fn rating_in_range(r: f64) -> bool {
    r.is_finite() && (MIN_RATING..=MAX_RATING).contains(&r)
}

#[derive(Deserialize)]
struct RawReview {
    #[serde(rename = "reviewerID")]
    user_id: Option<String>,
    asin: Option<String>,
    #[serde(rename = "reviewText")]
    text: Option<String>,
    overall: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SkipReason {
    MalformedJson(String),
    MissingField(&'static str),
    /// A required key is present but has the wrong JSON type.
    BadFieldType(String),
    EmptyId(&'static str),
    RatingOutOfRange(f64),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::MalformedJson(e) => write!(f, "malformed json ({e})"),
            SkipReason::MissingField(k) => write!(f, "missing key `{k}`"),
            SkipReason::BadFieldType(e) => write!(f, "bad field type ({e})"),
            SkipReason::EmptyId(k) => write!(f, "empty `{k}`"),
            SkipReason::RatingOutOfRange(r) => write!(f, "rating {r} outside [1,5]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skip {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub reason: SkipReason,
}

#[derive(Clone, Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<ReviewRecord>,
    pub skips: Vec<Skip>,
}

impl ParseOutcome {
    /// Human-readable skip report for the diagnostics stream.
    pub fn skip_report(&self) -> String {
        let mut out = format!(
            "parsed {} records, skipped {} lines\n",
            self.records.len(),
            self.skips.len()
        );
        for skip in &self.skips {
            out.push_str(&format!("  line {}: {}\n", skip.line, skip.reason));
        }
        out
    }
}

fn parse_line(line: &str) -> std::result::Result<ReviewRecord, SkipReason> {
    let raw: RawReview = serde_json::from_str(line).map_err(|e| {
        if e.is_data() {
            SkipReason::BadFieldType(e.to_string())
        } else {
            SkipReason::MalformedJson(e.to_string())
        }
    })?;
    let user_id = raw.user_id.ok_or(SkipReason::MissingField("reviewerID"))?;
    let item_id = raw.asin.ok_or(SkipReason::MissingField("asin"))?;
    let text = raw.text.ok_or(SkipReason::MissingField("reviewText"))?;
    let rating = raw.overall.ok_or(SkipReason::MissingField("overall"))?;
    if user_id.is_empty() {
        return Err(SkipReason::EmptyId("reviewerID"));
    }
    if item_id.is_empty() {
        return Err(SkipReason::EmptyId("asin"));
    }
    if !rating_in_range(rating) {
        return Err(SkipReason::RatingOutOfRange(rating));
    }
    Ok(ReviewRecord {
        user_id,
        item_id,
        rating,
        text,
    })
}

/// Parse newline-delimited JSON reviews. Lines are parsed in parallel and
/// reassembled in input order. Blank lines are ignored.
///
/// In strict mode a syntactically malformed line is fatal; every other
/// defect (missing key, bad rating) is a counted skip in both modes.
pub fn parse_reviews<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParseOutcome> {
    let lines = reader.lines().collect::<std::io::Result<Vec<String>>>()?;
    let parsed: Vec<(usize, std::result::Result<ReviewRecord, SkipReason>)> = lines
        .par_iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, parse_line(l)))
        .collect();

    let mut outcome = ParseOutcome::default();
    for (line, res) in parsed {
        match res {
            Ok(rec) => outcome.records.push(rec),
            Err(SkipReason::MalformedJson(msg)) if mode == ParseMode::Strict => {
                return Err(Error::Parse { line, message: msg });
            }
            Err(reason) => outcome.skips.push(Skip { line, reason }),
        }
    }
    Ok(outcome)
}

/// Serialize records as JSON lines (the four source keys only).
pub fn write_reviews<W: std::io::Write>(mut w: W, records: &[ReviewRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reviews keyed by user and by item. Lists keep input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReviewGroups {
    /// user_id → [(item_id, text)]
    pub by_user: BTreeMap<String, Vec<(String, String)>>,
    /// item_id → [(user_id, text)]
    pub by_item: BTreeMap<String, Vec<(String, String)>>,
}

impl ReviewGroups {
    pub fn user_texts(&self, user_id: &str) -> Option<impl Iterator<Item = &str>> {
        self.by_user
            .get(user_id)
            .map(|v| v.iter().map(|(_, t)| t.as_str()))
    }

    pub fn item_texts(&self, item_id: &str) -> Option<impl Iterator<Item = &str>> {
        self.by_item
            .get(item_id)
            .map(|v| v.iter().map(|(_, t)| t.as_str()))
    }
}

pub fn group_reviews(records: &[ReviewRecord]) -> ReviewGroups {
    let mut groups = ReviewGroups::default();
    for rec in records {
        groups
            .by_user
            .entry(rec.user_id.clone())
            .or_default()
            .push((rec.item_id.clone(), rec.text.clone()));
        groups
            .by_item
            .entry(rec.item_id.clone())
            .or_default()
            .push((rec.user_id.clone(), rec.text.clone()));
    }
    groups
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    ByReview,
    ByUserHoldout,
}

impl std::str::FromStr for SplitMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "by_review" | "by-review" => Ok(SplitMode::ByReview),
            "by_user_holdout" | "by-user-holdout" => Ok(SplitMode::ByUserHoldout),
            other => Err(format!("unknown split mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<ReviewRecord>,
    pub validation: Vec<ReviewRecord>,
    pub test: Vec<ReviewRecord>,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_reviews: usize,
    pub n_users: usize,
    pub n_items: usize,
    /// Training share, validation included (the complement of the test share).
    pub train_fraction: f64,
    pub test_fraction: f64,
}

pub fn dataset_stats(records: &[ReviewRecord], split: Option<&Split>) -> DatasetStats {
    let users: BTreeSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
    let items: BTreeSet<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
    let (train_fraction, test_fraction) = match split {
        Some(s) if !s.is_empty() => {
            let n = s.len() as f64;
            let test = s.test.len() as f64 / n;
            (1.0 - test, test)
        }
        _ => (1.0, 0.0),
    };
    DatasetStats {
        n_reviews: records.len(),
        n_users: users.len(),
        n_items: items.len(),
        train_fraction,
        test_fraction,
    }
}

fn check_fractions(train: f64, validation: f64) -> Result<()> {
    let mut problems = Vec::new();
    if !(train > 0.0 && train < 1.0) {
        problems.push(format!("train fraction {train} outside (0,1)"));
    }
    if !(0.0..1.0).contains(&validation) {
        problems.push(format!("validation fraction {validation} outside [0,1)"));
    }
    if train + validation > 1.0 + 1e-12 {
        problems.push(format!(
            "train + validation = {} exceeds 1",
            train + validation
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(problems.join("; ")))
    }
}

/// Shuffle `idx` and cut it into (train, validation, rest) by rounded
/// fractions of its length. Each part is returned in ascending index order.
fn partition(
    mut idx: Vec<usize>,
    train: f64,
    validation: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    idx.shuffle(rng);
    let n = idx.len();
    let n_train = ((train * n as f64).round() as usize).min(n);
    let n_val = ((validation * n as f64).round() as usize).min(n - n_train);
    let mut rest = idx.split_off(n_train + n_val);
    let mut val = idx.split_off(n_train);
    let mut tr = idx;
    tr.sort_unstable();
    val.sort_unstable();
    rest.sort_unstable();
    (tr, val, rest)
}

/// Split records into train/validation/test. `train_fraction` and
/// `validation_fraction` are shares of the whole dataset; test receives the
/// remainder. Deterministic in (records, fractions, seed, mode); each part
/// keeps dataset order.
pub fn split_dataset(
    records: &[ReviewRecord],
    train_fraction: f64,
    validation_fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<Split> {
    check_fractions(train_fraction, validation_fraction)?;
    if records.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |ix: &[usize]| ix.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();

    match mode {
        SplitMode::ByReview => {
            let (tr, val, te) = partition(
                (0..records.len()).collect(),
                train_fraction,
                validation_fraction,
                &mut rng,
            );
            Ok(Split {
                train: pick(&tr),
                validation: pick(&val),
                test: pick(&te),
                mode,
                seed,
            })
        }
        SplitMode::ByUserHoldout => {
            let mut users: Vec<&str> = records
                .iter()
                .map(|r| r.user_id.as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if users.len() < 3 {
                return Err(Error::InfeasibleSplit(format!(
                    "user hold-out needs at least 3 users, found {}",
                    users.len()
                )));
            }
            users.shuffle(&mut rng);

            let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
            for r in records {
                *per_user.entry(r.user_id.as_str()).or_default() += 1;
            }
            let test_fraction = (1.0 - train_fraction - validation_fraction).max(0.0);
            let target = (test_fraction * records.len() as f64).round() as usize;
            let mut test_users = BTreeSet::new();
            let mut n_test = 0;
            // Leave at least one user outside the test set.
            for u in users.iter().take(users.len() - 1) {
                if n_test >= target {
                    break;
                }
                test_users.insert(*u);
                n_test += per_user[u];
            }

            let (held, kept): (Vec<usize>, Vec<usize>) =
                (0..records.len()).partition(|&i| test_users.contains(records[i].user_id.as_str()));
            let share = train_fraction + validation_fraction;
            let (tr, val, leftover) = partition(
                kept,
                train_fraction / share,
                validation_fraction / share,
                &mut rng,
            );
            // Rounding leftovers stay on the training side.
            let mut tr = tr;
            tr.extend(leftover);
            tr.sort_unstable();
            Ok(Split {
                train: pick(&tr),
                validation: pick(&val),
                test: pick(&held),
                mode,
                seed,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> ParseOutcome {
        parse_reviews(Cursor::new(s), ParseMode::Lenient).unwrap()
    }

    fn recs(pairs: &[(&str, &str)]) -> Vec<ReviewRecord> {
        pairs
            .iter()
            .enumerate()
            .map(|(k, (u, i))| ReviewRecord::new(*u, *i, 1.0 + (k % 5) as f64, format!("t{k}")))
            .collect()
    }

    #[test]
    fn projects_the_four_fields() {
        let out = parse(
            r#"{"reviewerID":"u1","asin":"m1","reviewText":"Great","overall":5.0,"helpful":[0,0]}"#,
        );
        assert_eq!(
            out.records,
            vec![ReviewRecord::new("u1", "m1", 5.0, "Great")]
        );
        assert!(out.skips.is_empty());
    }

    #[test]
    fn empty_stream() {
        let out = parse("");
        assert!(out.records.is_empty());
        assert!(out.skips.is_empty());
    }

    #[test]
    fn lenient_skips_are_counted_with_line_numbers() {
        let input = [
            r#"{"reviewerID":"u1","asin":"m1","reviewText":"a","overall":4}"#,
            r#"{not json"#,
            r#"{"reviewerID":"u2","asin":"m1","overall":4}"#,
            r#"{"reviewerID":"u3","asin":"m1","reviewText":"c","overall":7}"#,
            r#"{"reviewerID":"","asin":"m1","reviewText":"c","overall":3}"#,
            r#"{"reviewerID":"u4","asin":"m2","reviewText":"d","overall":"5"}"#,
            r#"{"reviewerID":"u5","asin":"m2","reviewText":"e","overall":1}"#,
        ]
        .join("\n");
        let out = parse(&input);
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[1].user_id, "u5");
        let lines: Vec<usize> = out.skips.iter().map(|s| s.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 6]);
        assert!(matches!(out.skips[0].reason, SkipReason::MalformedJson(_)));
        assert_eq!(out.skips[1].reason, SkipReason::MissingField("reviewText"));
        assert_eq!(out.skips[2].reason, SkipReason::RatingOutOfRange(7.0));
        assert_eq!(out.skips[3].reason, SkipReason::EmptyId("reviewerID"));
        assert!(matches!(out.skips[4].reason, SkipReason::BadFieldType(_)));
        assert!(out.skip_report().contains("line 4: rating 7 outside [1,5]"));
    }

    #[test]
    fn strict_mode_fails_on_malformed_line() {
        let input =
            "{\"reviewerID\":\"u1\",\"asin\":\"m1\",\"reviewText\":\"a\",\"overall\":4}\n{oops\n";
        let err = parse_reviews(Cursor::new(input), ParseMode::Strict).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        // a bad rating is still only a skip in strict mode
        let input = "{\"reviewerID\":\"u1\",\"asin\":\"m1\",\"reviewText\":\"a\",\"overall\":0}\n";
        let out = parse_reviews(Cursor::new(input), ParseMode::Strict).unwrap();
        assert_eq!(out.skips.len(), 1);
    }

    #[test]
    fn grouping_counts() {
        let g = group_reviews(&recs(&[("u1", "m1"), ("u1", "m2"), ("u2", "m1")]));
        assert_eq!(g.by_user["u1"].len(), 2);
        assert_eq!(g.by_user["u2"].len(), 1);
        assert_eq!(g.by_item["m1"].len(), 2);
        assert_eq!(g.by_item["m2"].len(), 1);
        // order preserved
        assert_eq!(g.by_user["u1"][0].0, "m1");
        assert_eq!(g.by_item["m1"][1].0, "u2");

        let empty = group_reviews(&[]);
        assert!(empty.by_user.is_empty() && empty.by_item.is_empty());
    }

    #[test]
    fn stats_counts() {
        let mut pairs = Vec::new();
        for k in 0..10 {
            pairs.push((if k < 5 { "u1" } else { "u2" }, ["a", "b", "c"][k % 3]));
        }
        let s = dataset_stats(&recs(&pairs), None);
        assert_eq!((s.n_reviews, s.n_users, s.n_items), (10, 2, 3));
        let s = dataset_stats(&recs(&[("u", "i")]), None);
        assert_eq!((s.n_reviews, s.n_users, s.n_items), (1, 1, 1));
    }

    #[test]
    fn stats_fractions_follow_split() {
        let r = recs(&(0..10).map(|_| ("u", "i")).collect::<Vec<_>>());
        let split = split_dataset(&r, 0.9, 0.0, 3, SplitMode::ByReview).unwrap();
        let s = dataset_stats(&r, Some(&split));
        assert!((s.train_fraction - 0.9).abs() < 1e-12);
        assert!((s.test_fraction - 0.1).abs() < 1e-12);
    }

    #[test]
    fn by_review_rounding() {
        let r = recs(&(0..10).map(|_| ("u", "i")).collect::<Vec<_>>());
        let s = split_dataset(&r, 0.9, 0.0, 11, SplitMode::ByReview).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (9, 0, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let r = recs(
            &(0..40)
                .map(|k| (["a", "b", "c", "d"][k % 4], "i"))
                .collect::<Vec<_>>(),
        );
        for mode in [SplitMode::ByReview, SplitMode::ByUserHoldout] {
            let a = split_dataset(&r, 0.7, 0.1, 5, mode).unwrap();
            let b = split_dataset(&r, 0.7, 0.1, 5, mode).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn holdout_takes_one_whole_user() {
        let mut pairs = Vec::new();
        for u in ["u1", "u2", "u3", "u4"] {
            for i in ["m1", "m2", "m3", "m4", "m5"] {
                pairs.push((u, i));
            }
        }
        let r = recs(&pairs);
        for seed in 0..20 {
            let s = split_dataset(&r, 0.75, 0.0, seed, SplitMode::ByUserHoldout).unwrap();
            assert_eq!(s.test.len(), 5, "seed {seed}");
            let users: BTreeSet<_> = s.test.iter().map(|r| r.user_id.as_str()).collect();
            assert_eq!(users.len(), 1);
            let u = *users.iter().next().unwrap();
            assert!(s.train.iter().chain(&s.validation).all(|r| r.user_id != u));
        }
    }

    #[test]
    fn split_errors() {
        let r = recs(&[("u1", "i"), ("u2", "i"), ("u2", "j")]);
        for (tr, va) in [
            (0.0, 0.1),
            (1.0, 0.0),
            (0.5, -0.1),
            (0.8, 0.3),
            (f64::NAN, 0.0),
        ] {
            assert!(matches!(
                split_dataset(&r, tr, va, 0, SplitMode::ByReview),
                Err(Error::InvalidConfig(_))
            ));
        }
        assert!(matches!(
            split_dataset(&r, 0.8, 0.1, 0, SplitMode::ByUserHoldout),
            Err(Error::InfeasibleSplit(_))
        ));
        assert!(matches!(
            split_dataset(&[], 0.8, 0.1, 0, SplitMode::ByReview),
            Err(Error::InvalidInput(_))
        ));
    }
}
