//! Channel ranking from trained spatial filters, electrode presets and the
//! reduce-and-retrain workflow.

mod presets;

use serde::{Deserialize, Serialize};

pub use presets::{normalize, preset, preset_from_file, preset_names, ElectrodePreset};

use crate::error::{Error, Result};
use crate::io::{Checkpoint, TrialDataset};
use crate::model::{ModelConfig, Network};
use crate::numerics::{Scalar, Tensor};
use crate::train::{evaluate, train, Metrics, TrainHyper};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedChannel {
    pub index: usize,
    pub name: String,
    pub norm: f64,
}

/// Channels by descending spatial-filter norm; ties by ascending index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRanking {
    pub channels: Vec<RankedChannel>,
}

impl ChannelRanking {
    pub fn order(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.index).collect()
    }

    fn from_norms(norms: Vec<f64>, names: Option<&[String]>) -> Result<Self> {
        if let Some(n) = names {
            if n.len() != norms.len() {
                return Err(Error::shape(&[norms.len()], &[n.len()]));
            }
        }
        let mut channels: Vec<RankedChannel> = norms
            .into_iter()
            .enumerate()
            .map(|(index, norm)| RankedChannel {
                index,
                name: names.map_or_else(|| format!("CH{}", index + 1), |n| n[index].clone()),
                norm,
            })
            .collect();
        channels.sort_by(|a, b| b.norm.total_cmp(&a.norm).then(a.index.cmp(&b.index)));
        Ok(Self { channels })
    }
}

fn column_norms<T: Scalar>(w: &Tensor<T>) -> Result<Vec<f64>> {
    let [n_k, n_ch] = *w.shape() else {
        return Err(Error::InvalidArgument(format!(
            "spatial weights must be [N_k, N_ch], got {:?}",
            w.shape()
        )));
    };
    if w.is_empty() {
        return Err(Error::Empty("spatial weights"));
    }
    Ok((0..n_ch)
        .map(|i| {
            (0..n_k)
                .map(|k| w.data()[k * n_ch + i].to_f64_lossless().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Rank channels by the ℓ2 norm of their spatial-filter column,
/// `norm(i) = sqrt(Σ_k W_S[k][i]²)`.
pub fn rank_channels<T: Scalar>(w: &Tensor<T>, names: Option<&[String]>) -> Result<ChannelRanking> {
    ChannelRanking::from_norms(column_norms(w)?, names)
}

/// Rank by norms averaged over several trained spatial filters.
pub fn rank_channels_averaged<T: Scalar>(ws: &[&Tensor<T>], names: Option<&[String]>) -> Result<ChannelRanking> {
    let first = ws.first().ok_or(Error::Empty("checkpoint list"))?;
    let mut sum = vec![0.0; column_norms(first)?.len()];
    for w in ws {
        if w.shape() != first.shape() {
            return Err(Error::shape(first.shape(), w.shape()));
        }
        for (s, n) in sum.iter_mut().zip(column_norms(w)?) {
            *s += n;
        }
    }
    let k = ws.len() as f64;
    ChannelRanking::from_norms(sum.into_iter().map(|s| s / k).collect(), names)
}

/// The first `n_bar` channel indices of the ranking.
pub fn select_top(ranking: &ChannelRanking, n_bar: usize) -> Result<Vec<usize>> {
    let n = ranking.channels.len();
    if n_bar == 0 || n_bar > n {
        return Err(Error::InvalidArgument(format!("n_bar = {n_bar} must lie in [1, {n}]")));
    }
    Ok(ranking.channels[..n_bar].iter().map(|c| c.index).collect())
}

/// Result of training on all channels, ranking and retraining on the top
/// `n_bar`.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub ranking: ChannelRanking,
    pub selected: Vec<usize>,
    pub reduced_config: ModelConfig,
    pub full: Checkpoint,
    pub reduced: Checkpoint,
    pub full_metrics: Metrics,
    pub reduced_metrics: Metrics,
}

impl Reduction {
    /// `reduced − full` test accuracy.
    pub fn accuracy_delta(&self) -> f64 {
        self.reduced_metrics.accuracy - self.full_metrics.accuracy
    }
}

/// Train a full-montage model, rank its channels, slice the data to the
/// top `n_bar` channels and train a fresh reduced model with the same
/// hyperparameters. `init_seed` seeds both initializations.
pub fn reduce_and_retrain(
    train_set: &TrialDataset,
    test_set: &TrialDataset,
    config: ModelConfig,
    n_bar: usize,
    hyper: &TrainHyper,
    init_seed: u64,
) -> Result<Reduction> {
    if n_bar == 0 || n_bar > config.n_ch {
        return Err(Error::InvalidArgument(format!(
            "n_bar = {n_bar} must lie in [1, {}]",
            config.n_ch
        )));
    }
    let full = train(Network::build(config, init_seed)?, train_set, hyper)?.checkpoint;
    let mut full_net = full.network.clone();
    let full_metrics = evaluate(&mut full_net, test_set)?;
    let ranking = rank_channels(&full.network.spatial.weight.value, Some(train_set.channel_names()))?;
    let selected = select_top(&ranking, n_bar)?;
    let reduced_config = config.with_channels(n_bar);
    let reduced_train = train_set.select_channels(&selected)?;
    let reduced_test = test_set.select_channels(&selected)?;
    let reduced = train(Network::build(reduced_config, init_seed)?, &reduced_train, hyper)?.checkpoint;
    let mut reduced_net = reduced.network.clone();
    let reduced_metrics = evaluate(&mut reduced_net, &reduced_test)?;
    Ok(Reduction {
        ranking,
        selected,
        reduced_config,
        full,
        reduced,
        full_metrics,
        reduced_metrics,
    })
}
