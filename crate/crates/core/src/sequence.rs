//! Packing-order model learned from demonstrations.
//!
//! A first-order Markov chain over object categories, with a start row, is
//! estimated from demonstrated category sequences by additive smoothing.
//! Plans over a concrete object set are found by beam search on the summed
//! log-probability of the category sequence.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, PackError, Result};

/// Additive smoothing applied when none is configured.
pub const DEFAULT_SMOOTHING: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixFile", into = "MatrixFile")]
pub struct TransitionMatrix {
    categories: Vec<String>,
    index: HashMap<String, usize>,
    start: Vec<f64>,
    /// Row-major `K × K`; row = previous category.
    probs: Vec<f64>,
}

/// On-disk layout: category names, start row, row-major probabilities.
#[derive(Serialize, Deserialize)]
struct MatrixFile {
    categories: Vec<String>,
    start: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<MatrixFile> for TransitionMatrix {
    type Error = PackError;

    fn try_from(f: MatrixFile) -> Result<Self> {
        let k = f.categories.len();
        if f.start.len() != k || f.probs.len() != k * k {
            return Err(PackError::Config(format!(
                "transition matrix over {k} categories needs {k} start and {} transition entries",
                k * k
            )));
        }
        let index = index_of(&f.categories)?;
        Ok(Self {
            categories: f.categories,
            index,
            start: f.start,
            probs: f.probs,
        })
    }
}

impl From<TransitionMatrix> for MatrixFile {
    fn from(m: TransitionMatrix) -> Self {
        Self {
            categories: m.categories,
            start: m.start,
            probs: m.probs,
        }
    }
}

fn index_of(categories: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(categories.len());
    for (k, c) in categories.iter().enumerate() {
        if index.insert(c.clone(), k).is_some() {
            return Err(PackError::Config(format!("duplicate category {c:?}")));
        }
    }
    Ok(index)
}

impl TransitionMatrix {
    /// Estimates transition probabilities `(count + smoothing) / row total`.
    ///
    /// Categories are the sorted union of `categories` and everything seen in
    /// `demos`. A row with no counts and zero smoothing is uniform.
    pub fn build<S: AsRef<str>>(
        categories: &[S],
        demos: &[Vec<String>],
        smoothing: f64,
    ) -> Result<Self> {
        if demos.is_empty() {
            return Err(PackError::EmptyData("no demonstrations"));
        }
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(PackError::Config(format!(
                "smoothing must be non-negative, got {smoothing}"
            )));
        }
        let names: BTreeSet<String> = categories
            .iter()
            .map(|c| c.as_ref().to_owned())
            .chain(demos.iter().flatten().cloned())
            .collect();
        let categories: Vec<String> = names.into_iter().collect();
        let index = index_of(&categories)?;
        let k = categories.len();
        let mut start = vec![0.0; k];
        let mut counts = vec![0.0; k * k];
        for demo in demos {
            let mut prev: Option<usize> = None;
            for c in demo {
                let cur = index[c];
                match prev {
                    None => start[cur] += 1.0,
                    Some(p) => counts[p * k + cur] += 1.0,
                }
                prev = Some(cur);
            }
        }
        normalize_row(&mut start, smoothing);
        for row in counts.chunks_mut(k.max(1)) {
            normalize_row(row, smoothing);
        }
        Ok(Self {
            categories,
            index,
            start,
            probs: counts,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// `P(to | from)`, with `from = None` meaning the start of a sequence.
    /// Any pair involving an unseen category falls back to `1 / K`.
    pub fn prob(&self, from: Option<&str>, to: &str) -> f64 {
        let k = self.categories.len();
        let Some(&t) = self.index.get(to) else {
            return 1.0 / k.max(1) as f64;
        };
        match from {
            None => self.start[t],
            Some(f) => match self.index.get(f) {
                Some(&f) => self.probs[f * k + t],
                None => 1.0 / k as f64,
            },
        }
    }

    pub fn log_prob(&self, from: Option<&str>, to: &str) -> f64 {
        self.prob(from, to).ln()
    }

    /// Summed log-probability of a category sequence.
    pub fn score<S: AsRef<str>>(&self, sequence: &[S]) -> f64 {
        let mut prev: Option<&str> = None;
        let mut total = 0.0;
        for c in sequence {
            total += self.log_prob(prev, c.as_ref());
            prev = Some(c.as_ref());
        }
        total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn normalize_row(row: &mut [f64], smoothing: f64) {
    let total: f64 = row.iter().sum::<f64>() + smoothing * row.len() as f64;
    if total > 0.0 {
        row.iter_mut().for_each(|p| *p = (*p + smoothing) / total);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|p| *p = u);
    }
}

/// Reads demonstrations, one per line: a JSON array of category names or an
/// object with a `categories` array. Blank lines are skipped.
pub fn load_demos(path: &Path) -> Result<Vec<Vec<String>>> {
    let file = std::fs::File::open(path).at_path(path)?;
    let mut demos = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.at_path(path)?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Demo {
            Plain(Vec<String>),
            Tagged { categories: Vec<String> },
        }
        let demo: Demo = serde_json::from_str(&line).map_err(|e| PackError::Input {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        demos.push(match demo {
            Demo::Plain(c) | Demo::Tagged { categories: c } => c,
        });
    }
    Ok(demos)
}

/// An object to order: its identifier and category.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanItem {
    pub category: String,
    pub id: String,
}

impl PlanItem {
    pub fn new(id: impl Into<String>, category: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    /// Object identifiers in packing order.
    pub order: Vec<String>,
    pub categories: Vec<String>,
    pub score: f64,
}

impl SequencePlan {
    fn from_items(items: &[PlanItem], picks: &[usize], score: f64) -> Self {
        Self {
            order: picks.iter().map(|&k| items[k].id.clone()).collect(),
            categories: picks.iter().map(|&k| items[k].category.clone()).collect(),
            score,
        }
    }
}

#[derive(Clone)]
struct Beam {
    picks: Vec<usize>,
    used: Vec<bool>,
    score: f64,
}

/// Higher score first; equal scores by lexicographic (category, id) sequence.
fn rank(items: &[PlanItem], a: &Beam, b: &Beam) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| {
        let ka = a.picks.iter().map(|&k| &items[k]);
        let kb = b.picks.iter().map(|&k| &items[k]);
        ka.cmp(kb)
    })
}

/// Beam search with `width` beams, each expanded by its `branching` most
/// probable next categories. Objects sharing a category are interchangeable;
/// the lowest identifier is taken first.
pub fn beam_plan(
    matrix: &TransitionMatrix,
    items: &[PlanItem],
    width: usize,
    branching: usize,
) -> Result<SequencePlan> {
    if items.is_empty() {
        return Err(PackError::EmptyData("no objects to order"));
    }
    if width == 0 || branching == 0 {
        return Err(PackError::Config(
            "beam width and branching must be positive".into(),
        ));
    }
    let mut items = items.to_vec();
    items.sort();
    let n = items.len();
    let mut beams = vec![Beam {
        picks: Vec::new(),
        used: vec![false; n],
        score: 0.0,
    }];
    for _ in 0..n {
        let mut children = Vec::new();
        for beam in &beams {
            let prev = beam.picks.last().map(|&k| items[k].category.as_str());
            // First unused item of each category, in (category, id) order.
            let mut options: Vec<(usize, f64)> = Vec::new();
            for (k, item) in items.iter().enumerate() {
                if beam.used[k]
                    || options
                        .last()
                        .is_some_and(|&(o, _)| items[o].category == item.category)
                {
                    continue;
                }
                options.push((k, matrix.log_prob(prev, &item.category)));
            }
            options.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(k, lp) in options.iter().take(branching) {
                let mut child = beam.clone();
                child.picks.push(k);
                child.used[k] = true;
                child.score += lp;
                children.push(child);
            }
        }
        children.sort_by(|a, b| rank(&items, a, b));
        children.truncate(width);
        beams = children;
    }
    let best = &beams[0];
    Ok(SequencePlan::from_items(&items, &best.picks, best.score))
}

/// Width-1 beam: always the single most probable next category.
pub fn greedy_plan(matrix: &TransitionMatrix, items: &[PlanItem]) -> Result<SequencePlan> {
    beam_plan(matrix, items, 1, 1)
}

/// Width-3 beam with three branches per beam. The greedy plan is also
/// evaluated and returned when it scores higher, so the result never scores
/// below greedy.
pub fn beam3_plan(matrix: &TransitionMatrix, items: &[PlanItem]) -> Result<SequencePlan> {
    let beam = beam_plan(matrix, items, 3, 3)?;
    let greedy = greedy_plan(matrix, items)?;
    Ok(if greedy.score > beam.score {
        greedy
    } else {
        beam
    })
}

/// Samples each next category from the renormalized top-3 transition
/// probabilities.
pub fn sample_plan<R: Rng>(
    matrix: &TransitionMatrix,
    items: &[PlanItem],
    rng: &mut R,
) -> Result<SequencePlan> {
    if items.is_empty() {
        return Err(PackError::EmptyData("no objects to order"));
    }
    let mut items = items.to_vec();
    items.sort();
    let mut used = vec![false; items.len()];
    let mut picks = Vec::with_capacity(items.len());
    let mut score = 0.0;
    for _ in 0..items.len() {
        let prev = picks.last().map(|&k: &usize| items[k].category.as_str());
        let mut options: Vec<(usize, f64)> = Vec::new();
        for (k, item) in items.iter().enumerate() {
            if used[k]
                || options
                    .last()
                    .is_some_and(|&(o, _)| items[o].category == item.category)
            {
                continue;
            }
            options.push((k, matrix.prob(prev, &item.category)));
        }
        options.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        options.truncate(3);
        let total: f64 = options.iter().map(|o| o.1).sum();
        let mut pick = options[0].0;
        if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            for &(k, p) in &options {
                pick = k;
                if r < p {
                    break;
                }
                r -= p;
            }
        }
        score += matrix.log_prob(prev, &items[pick].category);
        used[pick] = true;
        picks.push(pick);
    }
    Ok(SequencePlan::from_items(&items, &picks, score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seqs(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|s| s.iter().map(|c| c.to_string()).collect())
            .collect()
    }

    #[test]
    fn two_demo_estimate() {
        // Counts from [A, B] and [A, C] with smoothing 1 over {A, B, C}:
        // start (2+1, 0+1, 0+1) / 5, row A (0+1, 1+1, 1+1) / 5.
        let m =
            TransitionMatrix::build::<&str>(&[], &seqs(&[&["A", "B"], &["A", "C"]]), 1.0).unwrap();
        assert_relative_eq!(m.prob(None, "A"), 0.6);
        assert_relative_eq!(m.prob(Some("A"), "B"), 0.4);
        assert_relative_eq!(m.prob(Some("A"), "A"), 0.2);
        assert_relative_eq!(m.prob(Some("B"), "C"), 1.0 / 3.0);
    }

    #[test]
    fn no_transitions_is_uniform() {
        let m = TransitionMatrix::build(&["A", "B", "C"], &seqs(&[&[]]), 1.0).unwrap();
        for from in ["A", "B", "C"] {
            for to in ["A", "B", "C"] {
                assert_relative_eq!(m.prob(Some(from), to), 1.0 / 3.0);
            }
        }
    }

    #[test]
    fn unseen_category_backs_off() {
        let m = TransitionMatrix::build::<&str>(&[], &seqs(&[&["A", "B"]]), 0.5).unwrap();
        assert_relative_eq!(m.prob(Some("Z"), "A"), 0.5);
        assert_relative_eq!(m.prob(Some("A"), "Z"), 0.5);
    }

    #[test]
    fn empty_demos_rejected() {
        assert!(matches!(
            TransitionMatrix::build::<&str>(&[], &[], 1.0),
            Err(PackError::EmptyData(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let m =
            TransitionMatrix::build::<&str>(&[], &seqs(&[&["x", "y", "x"], &["y"]]), 0.5).unwrap();
        let back = TransitionMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(
            TransitionMatrix::from_json(r#"{"categories":["a"],"start":[1.0],"probs":[]}"#)
                .is_err()
        );
    }

    #[test]
    fn load_demo_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, "[\"a\",\"b\"]\n\n{\"categories\":[\"b\"]}\n").unwrap();
        assert_eq!(load_demos(&path).unwrap(), seqs(&[&["a", "b"], &["b"]]));
        std::fs::write(&path, "[\"a\"]\nnot json\n").unwrap();
        assert!(matches!(
            load_demos(&path),
            Err(PackError::Input { line: 2, .. })
        ));
    }

    fn exhaustive_best(m: &TransitionMatrix, items: &[PlanItem]) -> f64 {
        (0..items.len())
            .permutations(items.len())
            .map(|p| {
                m.score(
                    &p.iter()
                        .map(|&k| items[k].category.as_str())
                        .collect::<Vec<_>>(),
                )
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn beam_follows_strong_chain() {
        let chain: &[&str] = &["box", "can", "ball"];
        let demos = seqs(&[chain; 5]);
        let m = TransitionMatrix::build::<&str>(&[], &demos, 0.1).unwrap();
        let items = [
            PlanItem::new("b1", "ball"),
            PlanItem::new("c1", "can"),
            PlanItem::new("x1", "box"),
        ];
        let plan = beam3_plan(&m, &items).unwrap();
        assert_eq!(plan.order, ["x1", "c1", "b1"]);
        assert_relative_eq!(plan.score, exhaustive_best(&m, &items), epsilon = 1e-12);
    }

    #[test]
    fn duplicates_take_lowest_id_first() {
        let m = TransitionMatrix::build::<&str>(&[], &seqs(&[&["a", "a", "b"]]), 0.5).unwrap();
        let items = [
            PlanItem::new("a2", "a"),
            PlanItem::new("b1", "b"),
            PlanItem::new("a1", "a"),
        ];
        assert_eq!(beam3_plan(&m, &items).unwrap().order, ["a1", "a2", "b1"]);
    }

    #[test]
    fn sampling_is_seeded() {
        let m =
            TransitionMatrix::build::<&str>(&[], &seqs(&[&["a", "b", "c"], &["c", "b", "a"]]), 0.5)
                .unwrap();
        let items: Vec<_> = ["a", "b", "c", "a"]
            .iter()
            .enumerate()
            .map(|(k, c)| PlanItem::new(format!("o{k}"), *c))
            .collect();
        let a = sample_plan(&m, &items, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_plan(&m, &items, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.order.iter().sorted().collect::<Vec<_>>(),
            ["o0", "o1", "o2", "o3"]
        );
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<PlanItem>)> {
        let cat = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from);
        (
            prop::collection::vec(prop::collection::vec(cat.clone(), 1..6), 1..6),
            prop::collection::vec(cat, 1..7),
        )
            .prop_map(|(demos, cats)| {
                let items = cats
                    .into_iter()
                    .enumerate()
                    .map(|(k, c)| PlanItem::new(format!("o{k}"), c))
                    .collect();
                (demos, items)
            })
    }

    proptest! {
        #[test]
        fn rows_are_distributions((demos, _) in instance(), smoothing in 0.0f64..2.0) {
            let m = TransitionMatrix::build::<&str>(&[], &demos, smoothing).unwrap();
            let cats = m.categories().to_vec();
            for from in std::iter::once(None).chain(cats.iter().map(|c| Some(c.as_str()))) {
                let row: Vec<f64> = cats.iter().map(|c| m.prob(from, c)).collect();
                prop_assert!(row.iter().all(|p| *p >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn plans_are_permutations_and_bounded((demos, items) in instance()) {
            let m = TransitionMatrix::build::<&str>(&[], &demos, 0.5).unwrap();
            let beam = beam3_plan(&m, &items).unwrap();
            let greedy = greedy_plan(&m, &items).unwrap();
            let mut ids: Vec<_> = items.iter().map(|i| i.id.clone()).collect();
            ids.sort();
            let mut got = beam.order.clone();
            got.sort();
            prop_assert_eq!(got, ids);
            prop_assert!(beam.score.is_finite());
            prop_assert!(beam.score >= greedy.score);
            prop_assert!(beam.score <= exhaustive_best(&m, &items) + 1e-9);
            prop_assert!((m.score(&beam.categories) - beam.score).abs() < 1e-9);
        }
    }
}
