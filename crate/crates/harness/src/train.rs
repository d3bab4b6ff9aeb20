//! The training loop and its on-disk outputs.
//!
//! A run directory holds `config.resolved`, `noise.csv`, `metrics.csv`
//! (appended and flushed every epoch), `model.ckpt` and, for GCOD runs,
//! `u.csv` (final `u`) and `u_history.csv` (periodic snapshots).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2, Axis};
use smoothgnn_core::dirichlet::energy_spatial;
use smoothgnn_core::losses::{cross_entropy, gcod_step, refresh_class_stats, GcodState};
use smoothgnn_core::nn::{adam_step, checkpoint, AdamState, GraphBatch, GraphOperators, Model, ModelConfig, Tape};
use smoothgnn_core::projection::Projector;
use smoothgnn_core::rng::CounterRng;
use smoothgnn_core::{CoreError, Graph, GraphDataset};

use crate::config::{LossKind, RunConfig};
use crate::data::prepare;
use crate::error::{HarnessError, Result};
use crate::metrics::{MetricsWriter, RunRecord};

const SHUFFLE_STREAM: u64 = 0xba7c;
const EVAL_CHUNK: usize = 64;

pub fn model_config(config: &RunConfig, input_dim: usize, num_classes: usize) -> ModelConfig {
    let mut m = ModelConfig::new(config.model, input_dim, num_classes);
    m.hidden = config.hidden;
    m.layers = config.layers;
    m.readout = config.readout_mode();
    m.propagation = config.propagation;
    m.epsilon = config.epsilon;
    m.train_epsilon = config.train_epsilon;
    m
}

/// Propagation operators for every graph, computed once per run.
pub struct OperatorCache {
    ops: Vec<GraphOperators>,
}

impl OperatorCache {
    pub fn new(graphs: &[Graph]) -> Self {
        Self {
            ops: graphs.iter().map(GraphOperators::new).collect(),
        }
    }

    pub fn batch(&self, graphs: &[Graph], indices: &[usize]) -> Result<GraphBatch> {
        let g: Vec<&Graph> = indices.iter().map(|&i| &graphs[i]).collect();
        let o: Vec<&GraphOperators> = indices.iter().map(|&i| &self.ops[i]).collect();
        Ok(GraphBatch::with_operators(&g, &o)?)
    }
}

/// Fixed inference batches covering a whole dataset in order.
pub struct EvalContext {
    batches: Vec<(Arc<GraphBatch>, Range<usize>)>,
}

impl EvalContext {
    pub fn new(dataset: &GraphDataset, cache: &OperatorCache) -> Result<Self> {
        let n = dataset.len();
        let mut batches = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            batches.push((Arc::new(cache.batch(&dataset.graphs, &idx)?), start..end));
            start = end;
        }
        Ok(Self { batches })
    }
}

/// Inference-mode outputs for every graph of a dataset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub logits: Array2<f64>,
    pub pooled: Array2<f64>,
    /// Dirichlet energy of each graph's representation after the chosen layer.
    pub energies: Vec<f64>,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<usize> {
        self.logits
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (k, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn dataset_energy(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }
}

/// Forward pass over the dataset without recording gradients; `layer` is the
/// 0-based GNN layer whose output feeds the energy.
pub fn evaluate(model: &Model, dataset: &GraphDataset, ctx: &EvalContext, layer: usize) -> Result<Evaluation> {
    let n = dataset.len();
    let mut logits = Array2::zeros((n, model.config.num_classes));
    let mut pooled = Array2::zeros((n, model.config.hidden));
    let mut energies = Vec::with_capacity(n);
    for (batch, range) in &ctx.batches {
        let mut tape = Tape::inference();
        let params = model.bind(&mut tape);
        let (out, per_layer) = model.forward_layers(&mut tape, &params, batch)?;
        logits.slice_mut(s![range.clone(), ..]).assign(tape.value(out.logits));
        pooled.slice_mut(s![range.clone(), ..]).assign(tape.value(out.pooled));
        let reps = tape.value(per_layer[layer]);
        for (k, g) in range.clone().enumerate() {
            let (off, size) = (batch.segments.offsets[k], batch.segments.sizes[k]);
            energies.push(energy_spatial(reps.slice(s![off..off + size, ..]), &dataset.graphs[g])?);
        }
    }
    Ok(Evaluation {
        logits,
        pooled,
        energies,
    })
}

/// Mean Dirichlet energy of every GNN layer's output over the whole dataset.
pub fn layer_energies(model: &Model, dataset: &GraphDataset, ctx: &EvalContext) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; model.layers.len()];
    for (batch, range) in &ctx.batches {
        let mut tape = Tape::inference();
        let params = model.bind(&mut tape);
        let (_, per_layer) = model.forward_layers(&mut tape, &params, batch)?;
        for (total, &var) in totals.iter_mut().zip(&per_layer) {
            let reps = tape.value(var);
            for (k, g) in range.clone().enumerate() {
                let (off, size) = (batch.segments.offsets[k], batch.segments.sizes[k]);
                *total += energy_spatial(reps.slice(s![off..off + size, ..]), &dataset.graphs[g])?;
            }
        }
    }
    Ok(totals.into_iter().map(|t| t / dataset.len() as f64).collect())
}

fn accuracy(indices: &[usize], preds: &[usize], labels: &[usize]) -> Option<f64> {
    if indices.is_empty() {
        return None;
    }
    let hits = indices.iter().filter(|&&i| preds[i] == labels[i]).count();
    Some(hits as f64 / indices.len() as f64)
}

#[derive(Debug)]
pub struct RunResult {
    pub out_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub model: Model,
    pub dataset: GraphDataset,
    pub gcod: Option<GcodState>,
    pub realized_noise_rate: f64,
}

impl RunResult {
    pub fn last(&self) -> Option<&RunRecord> {
        self.records.last()
    }
}

fn numerical(epoch: usize, step: usize) -> impl Fn(CoreError) -> HarnessError {
    move |e| match e {
        CoreError::NonFinite(_) => HarnessError::Numerical {
            epoch,
            step,
            source: e,
        },
        other => HarnessError::Core(other),
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(HarnessError::io("writing", path))
}

fn write_noise_csv(path: &Path, dataset: &GraphDataset) -> Result<()> {
    let mut out = String::from("graph_id,true_label,assigned_label,is_noisy\n");
    for i in 0..dataset.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            dataset.graphs[i].graph_id,
            dataset.true_labels[i],
            dataset.assigned_labels[i],
            u8::from(dataset.noise_mask[i])
        ));
    }
    write_file(path, &out)
}

fn write_u_csv(path: &Path, dataset: &GraphDataset, state: &GcodState) -> Result<()> {
    let mut out = String::from("graph_id,u_value,is_noisy\n");
    for (pos, &i) in dataset.train.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            dataset.graphs[i].graph_id,
            state.u[pos],
            u8::from(dataset.noise_mask[i])
        ));
    }
    write_file(path, &out)
}

struct UHistory {
    path: PathBuf,
    file: BufWriter<File>,
}

impl UHistory {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(HarnessError::io("creating", &path))?;
        let mut file = BufWriter::new(file);
        writeln!(file, "epoch,graph_id,u_value,is_noisy").map_err(HarnessError::io("writing", &path))?;
        Ok(Self { path, file })
    }

    fn append(&mut self, epoch: usize, dataset: &GraphDataset, state: &GcodState) -> Result<()> {
        for (pos, &i) in dataset.train.iter().enumerate() {
            writeln!(
                self.file,
                "{epoch},{},{},{}",
                dataset.graphs[i].graph_id,
                state.u[pos],
                u8::from(dataset.noise_mask[i])
            )
            .map_err(HarnessError::io("writing", &self.path))?;
        }
        self.file.flush().map_err(HarnessError::io("writing", &self.path))
    }
}

/// Trains one model as described by `config`, writing all outputs to `out_dir`.
pub fn train(config: &RunConfig, out_dir: &Path) -> Result<RunResult> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(HarnessError::io("creating", out_dir))?;
    write_file(&out_dir.join("config.resolved"), &config.to_text())?;

    let prepared = prepare(config)?;
    let dataset = prepared.dataset;
    write_noise_csv(&out_dir.join("noise.csv"), &dataset)?;
    log::info!(
        "{} graphs ({} train, {} test), {} classes, realized noise rate {:.4}",
        dataset.len(),
        dataset.train.len(),
        dataset.test.len(),
        dataset.num_classes,
        prepared.realized_noise_rate
    );

    let mut model = Model::new(model_config(config, dataset.feature_dim(), dataset.num_classes), config.seed)?;
    let mut adam = AdamState::new(model.parameters()).with_lr(config.lr, config.weight_decay);
    let mut projector = Projector::new(config.projection.clone());
    let cache = OperatorCache::new(&dataset.graphs);
    let eval_ctx = EvalContext::new(&dataset, &cache)?;
    let energy_layer = config.energy_layer_index();

    let mut position = vec![usize::MAX; dataset.len()];
    for (p, &i) in dataset.train.iter().enumerate() {
        position[i] = p;
    }
    let (clean, noisy): (Vec<usize>, Vec<usize>) = dataset.train.iter().partition(|&&i| !dataset.noise_mask[i]);
    if clean.len() + noisy.len() != dataset.train.len() {
        return Err(HarnessError::Data("clean and noisy subsets do not cover the training split".into()));
    }
    let train_assigned: Vec<usize> = dataset.train.iter().map(|&i| dataset.assigned_labels[i]).collect();

    let mut gcod = match config.loss {
        LossKind::Gcod => {
            let mut state = GcodState::new(config.gcod.clone(), dataset.train.len(), dataset.num_classes, config.hidden);
            let eval = evaluate(&model, &dataset, &eval_ctx, energy_layer).map_err(|e| match e {
                HarnessError::Core(c) => numerical(0, 0)(c),
                other => other,
            })?;
            let pooled = eval.pooled.select(Axis(0), &dataset.train);
            refresh_class_stats(&mut state, pooled.view(), &train_assigned)?;
            Some(state)
        }
        LossKind::CrossEntropy => None,
    };
    let mut u_history = match (&gcod, config.u_dump_every) {
        (Some(_), every) if every > 0 => Some(UHistory::create(out_dir.join("u_history.csv"))?),
        _ => None,
    };

    let mut metrics = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    let mut records = Vec::with_capacity(config.epochs);
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        let mut order = dataset.train.clone();
        CounterRng::new(config.seed)
            .fork(SHUFFLE_STREAM)
            .fork(epoch as u64)
            .shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let on_err = numerical(epoch, step);
            let batch = cache.batch(&dataset.graphs, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.assigned_labels[i]).collect();
            let loss = match gcod.as_mut() {
                Some(state) => {
                    let positions: Vec<usize> = chunk.iter().map(|&i| position[i]).collect();
                    gcod_step(&mut model, &mut adam, state, &batch, &labels, &positions)
                        .map_err(&on_err)?
                        .model_loss
                }
                None => {
                    let mut tape = Tape::new();
                    let params = model.bind(&mut tape);
                    let out = model.forward(&mut tape, &params, &batch).map_err(&on_err)?;
                    let loss = cross_entropy(&mut tape, out.logits, &labels).map_err(&on_err)?;
                    let grads = tape.backward(loss)?;
                    model.zero_grad();
                    model.accumulate_grads(&grads, &params);
                    adam_step(&mut adam, &mut model.parameters_mut()).map_err(&on_err)?;
                    tape.scalar(loss)
                }
            };
            if !loss.is_finite() {
                return Err(on_err(CoreError::NonFinite(format!("training loss {loss}"))));
            }
            projector.after_step(&mut model).map_err(&on_err)?;
            loss_sum += loss * chunk.len() as f64;
        }

        let checksum = model.checksum();
        let eval = evaluate(&model, &dataset, &eval_ctx, energy_layer).map_err(|e| match e {
            HarnessError::Core(c) => numerical(epoch, usize::MAX)(c),
            other => other,
        })?;
        if model.checksum() != checksum {
            return Err(HarnessError::Data("evaluation modified the model parameters".into()));
        }
        if dataset.test.iter().any(|&i| dataset.assigned_labels[i] != dataset.true_labels[i]) {
            return Err(HarnessError::Data("a test label was corrupted".into()));
        }
        let preds = eval.predictions();
        let train_acc = accuracy(&dataset.train, &preds, &dataset.assigned_labels).unwrap_or(0.0);
        let dirichlet_energy = eval.dataset_energy();
        if !dirichlet_energy.is_finite() {
            return Err(numerical(epoch, usize::MAX)(CoreError::NonFinite("dirichlet energy".into())));
        }
        let record = RunRecord {
            epoch,
            train_loss: loss_sum / dataset.train.len() as f64,
            train_acc,
            test_acc: accuracy(&dataset.test, &preds, &dataset.true_labels),
            clean_train_acc: accuracy(&clean, &preds, &dataset.assigned_labels),
            noisy_acc_vs_assigned: accuracy(&noisy, &preds, &dataset.assigned_labels),
            noisy_acc_vs_true: accuracy(&noisy, &preds, &dataset.true_labels),
            dirichlet_energy,
            wallclock_ms: if config.log_wallclock {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
            clean_count: clean.len(),
            noisy_count: noisy.len(),
            projected_min_eigenvalue: if projector.policy.is_active() {
                Some(projector.min_eigenvalue(&model)?)
            } else {
                None
            },
        };
        metrics.append(&record)?;

        if let Some(state) = gcod.as_mut() {
            state.train_acc = train_acc;
            let pooled = eval.pooled.select(Axis(0), &dataset.train);
            refresh_class_stats(state, pooled.view(), &train_assigned)?;
            if let Some(h) = u_history.as_mut() {
                if epoch % config.u_dump_every == 0 || epoch == config.epochs {
                    h.append(epoch, &dataset, state)?;
                }
            }
        }
        if epoch % 25 == 0 || epoch == config.epochs {
            log::info!(
                "epoch {epoch}: loss {:.4} train {:.3} test {} energy {:.4}",
                record.train_loss,
                record.train_acc,
                record.test_acc.map_or("-".into(), |a| format!("{a:.3}")),
                record.dirichlet_energy
            );
        }
        records.push(record);
    }

    checkpoint::save(&model, &out_dir.join("model.ckpt"))?;
    if let Some(state) = &gcod {
        write_u_csv(&out_dir.join("u.csv"), &dataset, state)?;
    }
    Ok(RunResult {
        out_dir: out_dir.to_path_buf(),
        records,
        model,
        dataset,
        gcod,
        realized_noise_rate: prepared.realized_noise_rate,
    })
}
