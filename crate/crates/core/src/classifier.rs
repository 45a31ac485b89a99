//! k-nearest-neighbour classification of 2-D fingerprint features.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

impl LabeledFeature {
    pub fn new(x: f64, y: f64, label: impl Into<String>) -> Self {
        LabeledFeature {
            x,
            y,
            label: label.into(),
        }
    }

    fn dist2(&self, q: (f64, f64)) -> f64 {
        (self.x - q.0).powi(2) + (self.y - q.1).powi(2)
    }
}

/// Majority label among the `k` nearest training points (Euclidean).
/// Equidistant neighbours and vote ties go to the earlier training entry.
pub fn knn_classify<'a>(train: &'a [LabeledFeature], query: (f64, f64), k: usize) -> Result<&'a str> {
    if train.is_empty() {
        return Err(Error::Config("k-NN needs a non-empty training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!(
            "k = {k} must lie in 1..={}",
            train.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, f)| (f.dist2(query), i))
        .collect();
    // stable on index, so ties keep insertion order
    order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut nearest = order[..k].to_vec();
    nearest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut votes: Vec<(&str, usize, usize)> = Vec::new();
    for (_, i) in nearest {
        let label = train[i].label.as_str();
        match votes.iter_mut().find(|v| v.0 == label) {
            Some(v) => v.1 += 1,
            None => votes.push((label, 1, i)),
        }
    }
    let best = votes
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .expect("k >= 1");
    Ok(best.0)
}

/// Seeded per-class split into `n_train` training and the rest test samples;
/// returns the fraction of test samples classified correctly.
pub fn evaluate_split(
    samples: &[LabeledFeature],
    n_train: usize,
    k: usize,
    split_seed: u64,
) -> Result<f64> {
    let mut classes: BTreeMap<&str, Vec<&LabeledFeature>> = BTreeMap::new();
    for s in samples {
        classes.entry(s.label.as_str()).or_default().push(s);
    }
    if classes.len() < 2 {
        return Err(Error::Config("evaluation needs at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, members) in &classes {
        if members.len() <= n_train {
            return Err(Error::Config(format!(
                "class {label} has {} samples, need more than {n_train} to split",
                members.len()
            )));
        }
        let mut idx: Vec<usize> = (0..members.len()).collect();
        idx.shuffle(&mut rng);
        train.extend(idx[..n_train].iter().map(|&i| members[i].clone()));
        test.extend(idx[n_train..].iter().map(|&i| members[i]));
    }
    let mut correct = 0usize;
    for t in &test {
        if knn_classify(&train, (t.x, t.y), k)? == t.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Between-class mean distance over pooled within-class standard deviation,
/// for exactly two classes.
pub fn separability_ratio(samples: &[LabeledFeature]) -> Result<f64> {
    let mut classes: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in samples {
        classes.entry(s.label.as_str()).or_default().push((s.x, s.y));
    }
    if classes.len() != 2 {
        return Err(Error::Config(format!(
            "separability needs two classes, found {}",
            classes.len()
        )));
    }
    let stats: Vec<((f64, f64), f64, usize)> = classes
        .values()
        .map(|pts| {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let ss = pts.iter().map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2)).sum::<f64>();
            ((mx, my), ss, pts.len())
        })
        .collect();
    let (a, b) = (&stats[0], &stats[1]);
    let between = ((a.0 .0 - b.0 .0).powi(2) + (a.0 .1 - b.0 .1).powi(2)).sqrt();
    let dof = (a.2 + b.2).saturating_sub(2).max(1) as f64;
    let pooled = ((a.1 + b.1) / dof).sqrt();
    Ok(between / pooled)
}
