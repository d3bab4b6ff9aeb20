mod common;

use common::{random_graph, random_matrix, random_symmetric};
use ndarray::{array, Array2};
use proptest::prelude::*;
use smoothgnn_core::dirichlet::energy_spatial;
use smoothgnn_core::graph::normalized_adjacency_with_self_loops;
use smoothgnn_core::losses::{cross_entropy, gcod_step, refresh_class_stats, GcodConfig, GcodState};
use smoothgnn_core::nn::{adam_step, AdamState, GraphBatch, LayerKind, Model, ModelConfig, Tape};
use smoothgnn_core::noise::{inject, inject_dataset, NoiseKind, NoiseSpec};
use smoothgnn_core::projection::{apply_policy, project_positive, ProjectionPolicy, Projector};
use smoothgnn_core::rng::CounterRng;
use smoothgnn_core::spectral::sym_eig;
use smoothgnn_core::{Graph, GraphDataset};

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------- projection ----------

/// Smallest `||s - Q||_F` over PSD `Q = R(θ) diag(p1, p2) R(θ)ᵀ`. For a fixed
/// rotation the best `p_i` is `max(0, (RᵀSR)_ii)`, so only θ is searched: a
/// dense grid over `[0, π)` followed by repeated zooming around the best angle.
fn brute_force_psd_distance(s: &Array2<f64>) -> f64 {
    let dist = |theta: f64| {
        let (c, sn) = (theta.cos(), theta.sin());
        let r = array![[c, -sn], [sn, c]];
        let t = r.t().dot(s).dot(&r);
        let d0 = t[[0, 0]] - t[[0, 0]].max(0.0);
        let d1 = t[[1, 1]] - t[[1, 1]].max(0.0);
        (d0 * d0 + d1 * d1 + 2.0 * t[[0, 1]] * t[[0, 1]]).sqrt()
    };
    let steps = 20_000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..steps {
        let theta = std::f64::consts::PI * i as f64 / steps as f64;
        let d = dist(theta);
        if d < best.0 {
            best = (d, theta);
        }
    }
    let mut width = std::f64::consts::PI / steps as f64;
    for _ in 0..40 {
        for i in -10..=10 {
            let theta = best.1 + width * i as f64 / 10.0;
            let d = dist(theta);
            if d < best.0 {
                best = (d, theta);
            }
        }
        width /= 4.0;
    }
    best.0
}

#[test]
fn projection_matches_brute_force_nearest_psd() {
    let mut rng = CounterRng::new(31);
    for _ in 0..12 {
        let w = random_matrix(&mut rng, 2, 2) * 2.0;
        let s = (&w + &w.t()) * 0.5;
        let p = project_positive(&w).unwrap();
        let projected = frob(&(&s - &p));
        let oracle = brute_force_psd_distance(&s);
        assert!(projected <= oracle + 1e-9, "{projected} > {oracle}");
        assert!((projected - oracle).abs() < 1e-6, "{projected} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_symmetric_psd_and_idempotent(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = CounterRng::new(seed);
        let w = random_matrix(&mut rng, n, n);
        let p = project_positive(&w).unwrap();
        prop_assert_eq!(&p, &p.t().to_owned());
        prop_assert!(sym_eig(&p).unwrap().eigenvalues[0] >= -1e-10);
        let again = project_positive(&p).unwrap();
        prop_assert!(frob(&(&again - &p)) < 1e-10 * frob(&p).max(1.0));
        // no random PSD matrix is closer to the symmetric part
        let s = (&w + &w.t()) * 0.5;
        let best = frob(&(&s - &p));
        for _ in 0..5 {
            let l = random_matrix(&mut rng, n, n);
            let q = l.dot(&l.t()) * rng.uniform();
            prop_assert!(frob(&(&s - &q)) >= best - 1e-12);
        }
    }

    #[test]
    fn projection_does_not_raise_propagated_energy(seed in any::<u64>(), n in 2usize..9, m in 2usize..6) {
        let mut rng = CounterRng::new(seed);
        let g = random_graph(&mut rng, n, m, 0.5);
        let w = random_symmetric(&mut rng, m);
        let prop = normalized_adjacency_with_self_loops(&g);
        let ph = prop.dot(&g.node_features);
        let before = energy_spatial(ph.dot(&w).view(), &g).unwrap();
        let after = energy_spatial(ph.dot(&project_positive(&w).unwrap()).view(), &g).unwrap();
        prop_assert!(after <= before + 1e-10 * before.max(1.0), "{after} > {before}");
    }

    #[test]
    fn psd_input_is_fixed_point(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = CounterRng::new(seed);
        let l = random_matrix(&mut rng, n, n);
        let q = l.dot(&l.t());
        let p = project_positive(&q).unwrap();
        prop_assert!(frob(&(&p - &q)) < 1e-10 * frob(&q).max(1.0));
    }
}

// ---------- label noise ----------

fn balanced(n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|i| i % c).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_is_seeded_and_well_formed(seed in any::<u64>(), c in 2usize..7, rate in 0.0f64..1.0, pair in any::<bool>()) {
        let kind = if pair { NoiseKind::Pairflip } else { NoiseKind::Symmetric };
        let labels = balanced(200, c);
        let spec = NoiseSpec::new(kind, rate, seed);
        let (a, m) = inject(&labels, c, &spec).unwrap();
        let (b, m2) = inject(&labels, c, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&m, &m2);
        for ((&t, &x), &flag) in labels.iter().zip(&a).zip(&m) {
            prop_assert!(x < c);
            prop_assert_eq!(flag, t != x);
            if flag && pair {
                prop_assert_eq!(x, (t + 1) % c);
            }
        }
    }

    #[test]
    fn different_seeds_differ(seed in any::<u64>(), rate in 0.1f64..0.9) {
        let labels = balanced(100, 4);
        let (a, _) = inject(&labels, 4, &NoiseSpec::new(NoiseKind::Symmetric, rate, seed)).unwrap();
        let (b, _) = inject(&labels, 4, &NoiseSpec::new(NoiseKind::Symmetric, rate, seed.wrapping_add(1))).unwrap();
        prop_assert_ne!(a, b);
    }
}

#[test]
fn realized_rate_close_to_nominal() {
    let labels = balanced(20_000, 3);
    for kind in [NoiseKind::Symmetric, NoiseKind::Pairflip] {
        for rate in [0.1, 0.3, 0.5] {
            let (_, m) = inject(&labels, 3, &NoiseSpec::new(kind, rate, 9)).unwrap();
            let realized = m.iter().filter(|&&x| x).count() as f64 / m.len() as f64;
            // 5 standard deviations of a binomial proportion
            let sd = (rate * (1.0 - rate) / m.len() as f64).sqrt();
            assert!((realized - rate).abs() < 5.0 * sd, "{kind:?} {rate}: {realized}");
        }
    }
}

#[test]
fn dataset_injection_only_touches_train_split() {
    let graphs: Vec<Graph> = (0..120)
        .map(|i| Graph::new(Array2::ones((1, 1)), Vec::<(usize, usize)>::new(), i % 3, i).unwrap())
        .collect();
    let mut ds = GraphDataset::new(graphs, 3).unwrap();
    ds.set_split((0..90).collect(), (90..120).collect()).unwrap();
    let realized = inject_dataset(&mut ds, &NoiseSpec::new(NoiseKind::Symmetric, 0.8, 4)).unwrap();
    assert!(realized > 0.5);
    for &i in &ds.test {
        assert_eq!(ds.assigned_labels[i], ds.true_labels[i]);
        assert!(!ds.noise_mask[i]);
    }
    ds.validate().unwrap();
}

// ---------- training steps ----------

fn toy_setup(seed: u64) -> (Model, GraphBatch, Vec<usize>) {
    let mut rng = CounterRng::new(seed);
    let graphs: Vec<Graph> = (0..6)
        .map(|i| {
            let n = 3 + rng.below(4);
            let mut g = random_graph(&mut rng, n, 3, 0.5);
            g.label = i % 2;
            g
        })
        .collect();
    let refs: Vec<&Graph> = graphs.iter().collect();
    let batch = GraphBatch::new(&refs).unwrap();
    let labels = graphs.iter().map(|g| g.label).collect();
    let mut cfg = ModelConfig::new(LayerKind::Gin, 3, 2);
    cfg.hidden = 6;
    cfg.layers = 2;
    (Model::new(cfg, seed).unwrap(), batch, labels)
}

fn gcod_run(cfg: GcodConfig, steps: usize) -> (Model, GcodState) {
    let (mut model, batch, labels) = toy_setup(5);
    let mut adam = AdamState::new(model.parameters());
    let mut state = GcodState::new(cfg, 10, 2, 6);
    state.train_acc = 0.6;
    state.u = vec![0.3; 10];
    let positions = [1, 3, 5, 7, 8, 9];
    let (_, emb) = {
        let mut t = Tape::inference();
        let p = model.bind(&mut t);
        let out = model.forward(&mut t, &p, &batch).unwrap();
        ((), t.value(out.pooled).clone())
    };
    refresh_class_stats(&mut state, emb.view(), &labels).unwrap();
    for _ in 0..steps {
        gcod_step(&mut model, &mut adam, &mut state, &batch, &labels, &positions).unwrap();
    }
    (model, state)
}

#[test]
fn model_update_ignores_u_only_terms() {
    let base = GcodConfig::default();
    let mut other = base.clone();
    other.l2_weight = 7.5;
    let (a, _) = gcod_run(base, 1);
    let (b, _) = gcod_run(other, 1);
    assert_eq!(a, b);
}

#[test]
fn u_update_ignores_model_only_terms() {
    let base = GcodConfig::default();
    let mut other = base.clone();
    other.l1_weight = 0.01;
    other.soft_targets = false;
    let (_, a) = gcod_run(base, 1);
    let (_, b) = gcod_run(other, 1);
    assert_eq!(a.u, b.u);
}

#[test]
fn zero_u_gradient_leaves_u_and_untouched_entries_fixed() {
    let mut cfg = GcodConfig::default();
    cfg.l2_weight = 0.0;
    cfg.l3_weight = 0.0;
    let (_, state) = gcod_run(cfg, 3);
    assert_eq!(state.u, vec![0.3; 10]);
    let (_, state) = gcod_run(GcodConfig::default(), 3);
    for untouched in [0, 2, 4, 6] {
        assert_eq!(state.u[untouched], 0.3);
    }
}

#[test]
fn u_stays_in_unit_interval() {
    for lr in [1.0, 50.0, 1e4] {
        let mut cfg = GcodConfig::default();
        cfg.u_lr = lr;
        let (_, state) = gcod_run(cfg, 25);
        assert!(state.u.iter().all(|&u| (0.0..=1.0).contains(&u)), "{:?}", state.u);
    }
}

#[test]
fn gcod_steps_are_deterministic() {
    let (a, sa) = gcod_run(GcodConfig::default(), 5);
    let (b, sb) = gcod_run(GcodConfig::default(), 5);
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn class_stats_match_mean_oracle() {
    let mut rng = CounterRng::new(41);
    let emb = random_matrix(&mut rng, 30, 4);
    let labels: Vec<usize> = (0..30).map(|_| rng.below(4)).collect();
    let mut state = GcodState::new(GcodConfig::default(), 30, 5, 4);
    refresh_class_stats(&mut state, emb.view(), &labels).unwrap();
    for k in 0..5 {
        let members: Vec<usize> = (0..30).filter(|&i| labels[i] == k).collect();
        assert_eq!(state.class_present[k], !members.is_empty());
        for d in 0..4 {
            let mean = if members.is_empty() {
                0.0
            } else {
                members.iter().map(|&i| emb[[i, d]]).sum::<f64>() / members.len() as f64
            };
            assert!((state.class_stats[[k, d]] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn projected_training_is_bitwise_reproducible() {
    let run = || {
        let (mut model, batch, labels) = toy_setup(8);
        let mut adam = AdamState::new(model.parameters());
        let mut projector = Projector::new(ProjectionPolicy::w2_only());
        for _ in 0..10 {
            let mut t = Tape::new();
            let p = model.bind(&mut t);
            let out = model.forward(&mut t, &p, &batch).unwrap();
            let loss = cross_entropy(&mut t, out.logits, &labels).unwrap();
            let grads = t.backward(loss).unwrap();
            model.zero_grad();
            model.accumulate_grads(&grads, &p);
            adam_step(&mut adam, &mut model.parameters_mut()).unwrap();
            projector.after_step(&mut model).unwrap();
        }
        let min = projector.min_eigenvalue(&model).unwrap();
        (model, min)
    };
    let (a, ea) = run();
    let (b, eb) = run();
    assert_eq!(a.checksum(), b.checksum());
    assert_eq!(a, b);
    assert!(ea >= -1e-10 && eb >= -1e-10);
}

#[test]
fn w2_projection_keeps_every_layer_psd_after_training_steps() {
    let (mut model, batch, labels) = toy_setup(9);
    let mut adam = AdamState::new(model.parameters());
    let mut projector = Projector::new(ProjectionPolicy::w2_only());
    for _ in 0..20 {
        let mut t = Tape::new();
        let p = model.bind(&mut t);
        let out = model.forward(&mut t, &p, &batch).unwrap();
        let loss = cross_entropy(&mut t, out.logits, &labels).unwrap();
        let grads = t.backward(loss).unwrap();
        model.zero_grad();
        model.accumulate_grads(&grads, &p);
        adam_step(&mut adam, &mut model.parameters_mut()).unwrap();
        projector.after_step(&mut model).unwrap();
        assert!(projector.min_eigenvalue(&model).unwrap() >= -1e-10);
    }
    let mut cold = model.clone();
    apply_policy(&mut cold, &ProjectionPolicy::w2_only()).unwrap();
    for (a, b) in cold.layers.iter().zip(&model.layers) {
        assert!(frob(&(&a.w2.values - &b.w2.values)) < 1e-10);
    }
}
