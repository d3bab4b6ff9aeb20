//! Dataset preparation: load or generate, subsample, split, corrupt labels.

use smoothgnn_core::noise::inject_dataset;
use smoothgnn_core::rng::CounterRng;
use smoothgnn_core::GraphDataset;

use crate::config::{DatasetSource, RunConfig};
use crate::error::{HarnessError, Result};
use crate::synthetic::gen_synthetic;
use crate::tu::load_tu_dataset;

const SPLIT_STREAM: u64 = 0x5b11;
const SUBSAMPLE_STREAM: u64 = 0x5ab5;

fn by_class(labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Per class, a seeded shuffle of its members; the first `round(fraction · n_c)`
/// go to the first list. Both lists are returned sorted.
fn stratified_partition(labels: &[usize], classes: usize, fraction: f64, rng: &mut CounterRng, keep_one: bool) -> (Vec<usize>, Vec<usize>) {
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for mut members in by_class(labels, classes) {
        rng.shuffle(&mut members);
        let mut k = (fraction * members.len() as f64).round() as usize;
        if keep_one && !members.is_empty() {
            k = k.max(1);
        }
        let k = k.min(members.len());
        first.extend_from_slice(&members[..k]);
        second.extend_from_slice(&members[k..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Stratified (by true label), seeded train/test split.
pub fn stratified_split(labels: &[usize], classes: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = CounterRng::new(seed).fork(SPLIT_STREAM);
    stratified_partition(labels, classes, train_fraction, &mut rng, true)
}

/// Keeps a stratified, seeded `fraction` of the graphs (at least one per class present).
pub fn stratified_subsample(dataset: GraphDataset, fraction: f64, seed: u64) -> Result<GraphDataset> {
    if fraction >= 1.0 {
        return Ok(dataset);
    }
    let mut rng = CounterRng::new(seed).fork(SUBSAMPLE_STREAM);
    let (keep, _) = stratified_partition(&dataset.true_labels, dataset.num_classes, fraction, &mut rng, true);
    let classes = dataset.num_classes;
    let mut graphs: Vec<Option<_>> = dataset.graphs.into_iter().map(Some).collect();
    let kept = keep.iter().map(|&i| graphs[i].take().expect("indices are unique")).collect();
    Ok(GraphDataset::new(kept, classes)?)
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: GraphDataset,
    pub realized_noise_rate: f64,
}

/// Builds the dataset a run trains on: source, subsample, split, then label
/// noise on the training split only.
pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    let dataset = match &config.dataset {
        DatasetSource::Synthetic => gen_synthetic(&config.synthetic)?,
        DatasetSource::Directory(dir) => load_tu_dataset(dir)?,
    };
    let mut dataset = stratified_subsample(dataset, config.subsample_fraction, config.seed)?;
    let (train, test) = stratified_split(&dataset.true_labels, dataset.num_classes, config.train_fraction, config.seed);
    if train.is_empty() {
        return Err(HarnessError::Data("training split is empty".into()));
    }
    dataset.set_split(train, test)?;
    config
        .noise
        .validate(dataset.num_classes)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let realized_noise_rate = inject_dataset(&mut dataset, &config.noise)?;
    dataset.validate()?;
    Ok(PreparedData {
        dataset,
        realized_noise_rate,
    })
}
