//! Built-in numerical self-checks and gradient checks, plus energy inspection
//! of saved checkpoints.

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use smoothgnn_core::dirichlet::{dataset_energy, energy_spatial, energy_spectral, theorem1_residual};
use smoothgnn_core::losses::{cross_entropy, gcod_terms, GcodConfig, GcodState};
use smoothgnn_core::nn::{
    checkpoint, gradcheck_model, GraphBatch, LayerKind, Model, ModelConfig, PoolMode, Propagation, Tape,
};
use smoothgnn_core::noise::{inject, NoiseKind, NoiseSpec};
use smoothgnn_core::projection::project_positive;
use smoothgnn_core::rng::CounterRng;
use smoothgnn_core::spectral::{decomposition_errors, laplacian_spectrum, sym_eig};
use smoothgnn_core::Graph;

use crate::config::RunConfig;
use crate::data::prepare;
use crate::error::{HarnessError, Result};
use crate::train::{layer_energies, EvalContext, OperatorCache};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub threshold: f64,
}

impl CheckOutcome {
    fn below(name: impl Into<String>, worst: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: worst < threshold,
            worst,
            threshold,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<36} worst {:.3e} (threshold {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.threshold
        )
    }
}

/// Random graph with `nodes` nodes, `dim` features and edge probability `p`.
pub fn random_graph(rng: &mut CounterRng, nodes: usize, dim: usize, p: f64) -> Graph {
    let features = Array2::from_shape_fn((nodes, dim), |_| rng.normal());
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(features, edges, 0, 0).expect("valid random graph")
}

fn random_symmetric(rng: &mut CounterRng, n: usize) -> Array2<f64> {
    let a = Array2::from_shape_fn((n, n), |_| rng.normal());
    (&a + &a.t()) * 0.5
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn batch_identity_check(rng: &mut CounterRng) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let count = 2 + rng.below(5);
        let dim = 1 + rng.below(4);
        let graphs: Vec<Graph> = (0..count)
            .map(|_| {
                let n = 2 + rng.below(7);
                random_graph(rng, n, dim, 0.5)
            })
            .collect();
        let reps: Vec<_> = graphs.iter().map(|g| (g.node_features.view(), g)).collect();
        worst = worst.max(theorem1_residual(&reps)?);
    }
    Ok(CheckOutcome::below("batched energy identity", worst, 1e-10))
}

fn spectral_agreement_check(rng: &mut CounterRng) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 2 + rng.below(15);
        let dim = 1 + rng.below(4);
        let g = random_graph(rng, n, dim, 0.4);
        let spatial = energy_spatial(g.node_features.view(), &g)?;
        let spectral = energy_spectral(g.node_features.view(), &laplacian_spectrum(&g))?;
        worst = worst.max((spatial - spectral).abs() / spatial.abs().max(1e-12));
    }
    Ok(CheckOutcome::below("spatial/spectral energy (relative)", worst, 1e-8))
}

fn eigensolver_checks(rng: &mut CounterRng) -> Result<Vec<CheckOutcome>> {
    let (mut rec, mut orth) = (0.0f64, 0.0f64);
    for n in [1, 2, 3, 5, 8, 16, 32, 64] {
        let m = random_symmetric(rng, n);
        let e = sym_eig(&m)?;
        let (r, o) = decomposition_errors(&m, &e);
        rec = rec.max(r);
        orth = orth.max(o);
    }
    let mut range_violation = 0.0f64;
    for _ in 0..30 {
        let n = 1 + rng.below(20);
        let g = random_graph(rng, n, 1, 0.3);
        let spec = laplacian_spectrum(&g);
        for &l in spec.eigenvalues.iter() {
            range_violation = range_violation.max(-l).max(l - 2.0);
        }
        range_violation = range_violation.max(spec.eigenvalues[0].abs());
    }
    Ok(vec![
        CheckOutcome::below("eigensolver reconstruction", rec, 1e-10),
        CheckOutcome::below("eigensolver orthonormality", orth, 1e-10),
        CheckOutcome::below("laplacian spectrum in [0, 2], min 0", range_violation, 1e-10),
    ])
}

fn projection_checks(rng: &mut CounterRng) -> Result<Vec<CheckOutcome>> {
    let (mut neg, mut idem) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = 1 + rng.below(12);
        let w = Array2::from_shape_fn((n, n), |_| rng.normal());
        let p = project_positive(&w)?;
        neg = neg.max(-sym_eig(&p)?.eigenvalues[0]);
        idem = idem.max(max_abs(&(&project_positive(&p)? - &p)));
    }
    Ok(vec![
        CheckOutcome::below("projection: -lambda_min", neg, 1e-10),
        CheckOutcome::below("projection idempotence", idem, 1e-10),
    ])
}

fn noise_check() -> Result<CheckOutcome> {
    let labels: Vec<usize> = (0..10_000).map(|i| i % 4).collect();
    let (_, mask) = inject(&labels, 4, &NoiseSpec::new(NoiseKind::Symmetric, 0.2, 7))?;
    let rate = mask.iter().filter(|&&m| m).count() as f64 / labels.len() as f64;
    Ok(CheckOutcome::below("noise rate |realized - 0.2|", (rate - 0.2).abs(), 0.02))
}

fn ce_anchor_check(rng: &mut CounterRng) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (b, c) = (1 + rng.below(8), 2 + rng.below(6));
        let state = GcodState::new(GcodConfig::ce_only(), b, c, 3);
        let z = Array2::from_shape_fn((b, c), |_| 4.0 * rng.normal());
        let emb = Array2::from_shape_fn((b, 3), |_| rng.normal());
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
        let mut t = Tape::new();
        let v = t.leaf(z);
        let g = gcod_terms(&mut t, v, emb.view(), &labels, &state.u, &state)?;
        let ce = cross_entropy(&mut t, v, &labels)?;
        worst = worst.max((t.scalar(g.l_model) - t.scalar(ce)).abs());
    }
    Ok(CheckOutcome::below("gcod reduces to cross-entropy", worst, 1e-12))
}

/// Runs the numerical property checks; all must pass on a healthy build.
pub fn selftest(seed: u64) -> Result<Vec<CheckOutcome>> {
    let root = CounterRng::new(seed);
    let mut out = vec![
        batch_identity_check(&mut root.fork(1))?,
        spectral_agreement_check(&mut root.fork(2))?,
    ];
    out.extend(eigensolver_checks(&mut root.fork(3))?);
    out.extend(projection_checks(&mut root.fork(4))?);
    out.push(noise_check()?);
    out.push(ce_anchor_check(&mut root.fork(5))?);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GradLoss {
    CrossEntropy,
    Gcod,
}

/// Finite-difference checks of every trainable parameter for GIN/GCN, sum and
/// mean readout, cross-entropy and GCOD, plus GCN with Laplacian propagation,
/// on `instances` random problems each.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut cases = Vec::new();
    for kind in [LayerKind::Gin, LayerKind::Gcn] {
        for readout in [PoolMode::Sum, PoolMode::Mean] {
            for loss in [GradLoss::CrossEntropy, GradLoss::Gcod] {
                cases.push((kind, readout, Propagation::NormAdjacency, loss));
            }
        }
    }
    cases.push((LayerKind::Gcn, PoolMode::Mean, Propagation::Laplacian, GradLoss::CrossEntropy));
    let mut out = Vec::new();
    for (case, &(kind, readout, propagation, loss)) in cases.iter().enumerate() {
        let mut rng = CounterRng::new(seed).fork(case as u64);
        let mut worst = 0.0f64;
        for inst in 0..instances {
            worst = worst.max(gradcheck_instance(&mut rng, kind, readout, propagation, loss, seed + inst as u64)?);
        }
        let mut name = format!("{kind:?}/{readout:?}/{loss:?}").to_lowercase();
        if propagation == Propagation::Laplacian {
            name.push_str("/laplacian");
        }
        out.push(CheckOutcome::below(name, worst, GRADCHECK_TOL));
    }
    Ok(out)
}

fn gradcheck_instance(
    rng: &mut CounterRng,
    kind: LayerKind,
    readout: PoolMode,
    propagation: Propagation,
    loss: GradLoss,
    model_seed: u64,
) -> Result<f64> {
    let (dim, classes) = (3, 3);
    let graphs: Vec<Graph> = (0..3)
        .map(|i| {
            let n = 2 + rng.below(4);
            let g = random_graph(rng, n, dim, 0.5);
            Graph::new(g.node_features.clone(), g.edges().to_vec(), rng.below(classes), i)
        })
        .collect::<std::result::Result<_, _>>()?;
    let refs: Vec<&Graph> = graphs.iter().collect();
    let batch = GraphBatch::new(&refs)?;
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    let mut cfg = ModelConfig::new(kind, dim, classes);
    cfg.hidden = 4;
    cfg.layers = 2;
    cfg.readout = readout;
    cfg.propagation = propagation;
    cfg.epsilon = 0.1;
    cfg.train_epsilon = kind == LayerKind::Gin;
    let model = Model::new(cfg, model_seed)?;

    let mut state = GcodState::new(GcodConfig::default(), labels.len(), classes, 4);
    state.u = (0..labels.len()).map(|_| rng.uniform()).collect();
    state.train_acc = rng.uniform();
    state.class_stats = Array2::from_shape_fn((classes, 4), |_| rng.normal());
    state.class_present = vec![true; classes];
    // soft-target weights are constants of the model objective, so the
    // embeddings they come from stay at the unperturbed parameters
    let frozen = {
        let mut t = Tape::inference();
        let p = model.bind(&mut t);
        let out = model.forward(&mut t, &p, &batch)?;
        t.value(out.pooled).clone()
    };
    let report = gradcheck_model(
        &model,
        |m, tape, params| {
            let out = m.forward(tape, params, &batch)?;
            match loss {
                GradLoss::CrossEntropy => cross_entropy(tape, out.logits, &labels),
                GradLoss::Gcod => Ok(gcod_terms(tape, out.logits, frozen.view(), &labels, &state.u, &state)?.l_model),
            }
        },
        GRADCHECK_STEP,
        GRADCHECK_TOL,
    )?;
    Ok(report.max_rel_error)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyInspection {
    pub graphs: usize,
    /// Dataset-average energy of the input features.
    pub input_energy: f64,
    /// Dataset-average energy after each GNN layer.
    pub layer_energies: Vec<f64>,
}

/// Loads a checkpoint and reports the dataset-average Dirichlet energy of the
/// input features and of every layer's output on the dataset described by
/// `config` (noise is irrelevant here; all graphs are used).
pub fn inspect_energy(checkpoint_path: &Path, config: &RunConfig) -> Result<EnergyInspection> {
    let model = checkpoint::load(checkpoint_path).map_err(|e| {
        HarnessError::Data(format!("cannot load checkpoint {}: {e}", checkpoint_path.display()))
    })?;
    let dataset = prepare(config)?.dataset;
    if dataset.feature_dim() != model.config.input_dim || dataset.num_classes != model.config.num_classes {
        return Err(HarnessError::Data(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            model.config.input_dim,
            model.config.num_classes,
            dataset.feature_dim(),
            dataset.num_classes
        )));
    }
    let reps: Vec<_> = dataset.graphs.iter().map(|g| (g.node_features.view(), g)).collect();
    let input_energy = dataset_energy(&reps)?.dataset_energy;
    let cache = OperatorCache::new(&dataset.graphs);
    let ctx = EvalContext::new(&dataset, &cache)?;
    Ok(EnergyInspection {
        graphs: dataset.len(),
        input_energy,
        layer_energies: layer_energies(&model, &dataset, &ctx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in selftest(0).unwrap() {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn gradcheck_suite_passes_on_a_few_instances() {
        let checks = gradcheck_suite(2, 3).unwrap();
        assert_eq!(checks.len(), 9);
        for c in checks {
            assert!(c.passed, "{c}");
        }
    }
}
