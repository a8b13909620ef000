use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification metrics; `confusion[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub kappa: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predictions: &[usize], n_classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::shape(&[labels.len()], &[predictions.len()]));
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&l, &p) in labels.iter().zip(predictions) {
            if l >= n_classes || p >= n_classes {
                return Err(Error::InvalidArgument(format!(
                    "class {} out of range for {n_classes} classes",
                    l.max(p)
                )));
            }
            confusion[l][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        Self {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            kappa: kappa(&confusion),
            confusion,
        }
    }
}

/// Cohen's kappa `(p_o − p_e) / (1 − p_e)`. Degenerate cases (`p_e = 1`, empty)
/// return 1 when the agreement is perfect and 0 otherwise.
pub fn kappa(confusion: &[Vec<u64>]) -> f64 {
    let n = confusion.len();
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let p_o = (0..n).map(|i| confusion[i][i]).sum::<u64>() as f64 / t;
    let p_e: f64 = (0..n)
        .map(|i| {
            let row: u64 = confusion[i].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (t * t);
    if (1.0 - p_e).abs() < 1e-15 {
        return if p_o == 1.0 { 1.0 } else { 0.0 };
    }
    (p_o - p_e) / (1.0 - p_e)
}

/// One cross-validation fold over subjects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_subjects: Vec<u32>,
    pub validation_subjects: Vec<u32>,
    pub train_trials: Vec<usize>,
    pub validation_trials: Vec<usize>,
}

/// Subject-disjoint k-fold split. `subject_of_trial[i]` is the subject of
/// trial `i`. Subjects are shuffled with `seed` and dealt round-robin, so
/// fold sizes differ by at most one subject.
pub fn kfold_split(subject_of_trial: &[u32], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let mut subjects: Vec<u32> = subject_of_trial.to_vec();
    subjects.sort_unstable();
    subjects.dedup();
    if k < 2 || k > subjects.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} folds needs 2 <= k <= {} subjects",
            subjects.len()
        )));
    }
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups = vec![Vec::new(); k];
    for (i, s) in subjects.into_iter().enumerate() {
        groups[i % k].push(s);
    }
    for g in groups.iter_mut() {
        g.sort_unstable();
    }
    Ok((0..k)
        .map(|f| {
            let val = &groups[f];
            let mut train: Vec<u32> = groups
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, s)| s.clone())
                .collect();
            train.sort_unstable();
            let (mut tt, mut vt) = (Vec::new(), Vec::new());
            for (i, s) in subject_of_trial.iter().enumerate() {
                if val.binary_search(s).is_ok() {
                    vt.push(i);
                } else {
                    tt.push(i);
                }
            }
            Fold {
                train_subjects: train,
                validation_subjects: val.clone(),
                train_trials: tt,
                validation_trials: vt,
            }
        })
        .collect())
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: 0.0, std: 0.0, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        mean,
        std: var.sqrt(),
        n,
    }
}

/// Run `f` for seeds `0..repeats` and summarize the returned scores, as the
/// paper averages over repeated trainings.
pub fn repeat<F: FnMut(u64) -> Result<f64>>(repeats: usize, mut f: F) -> Result<Summary> {
    let scores = (0..repeats as u64).map(&mut f).collect::<Result<Vec<_>>>()?;
    Ok(summarize(&scores))
}
