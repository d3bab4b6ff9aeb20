//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and everything after `#` are ignored. Unknown or repeated keys
//! are errors. Keys absent from a file take the defaults listed by
//! [`RunConfig::default`]; `noise.seed` and `synthetic.seed` default to `seed`.
//! Layer indices (`energy_layer`, `projection.layers`) are 1-based.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use smoothgnn_core::losses::GcodConfig;
use smoothgnn_core::nn::{LayerKind, PoolMode, Propagation};
use smoothgnn_core::noise::{NoiseKind, NoiseSpec};
use smoothgnn_core::projection::{LayerSelection, ProjectionPolicy, ProjectionTarget};

use crate::error::{HarnessError, Result};
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic,
    Directory(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Gcod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub synthetic: SyntheticSpec,
    pub model: LayerKind,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub gcod: GcodConfig,
    pub projection: ProjectionPolicy,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub train_fraction: f64,
    pub subsample_fraction: f64,
    /// 1-based GNN layer whose output is used for energy logging; `None` = last.
    pub energy_layer: Option<usize>,
    pub propagation: Propagation,
    /// `None` = sum for GIN, mean for GCN.
    pub readout: Option<PoolMode>,
    pub epsilon: f64,
    pub train_epsilon: bool,
    /// Record elapsed time in `wallclock_ms`; off keeps metrics byte-reproducible.
    pub log_wallclock: bool,
    /// Append the GCOD `u` vector to `u_history.csv` every this many epochs (0 = never).
    pub u_dump_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic,
            synthetic: SyntheticSpec::default(),
            model: LayerKind::Gin,
            layers: 5,
            hidden: 300,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 500,
            loss: LossKind::CrossEntropy,
            gcod: GcodConfig::default(),
            projection: ProjectionPolicy::none(),
            noise: NoiseSpec::clean(),
            seed: 0,
            train_fraction: 0.8,
            subsample_fraction: 1.0,
            energy_layer: None,
            propagation: Propagation::NormAdjacency,
            readout: None,
            epsilon: 0.0,
            train_epsilon: false,
            log_wallclock: false,
            u_dump_every: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "synthetic.num_graphs",
    "synthetic.classes",
    "synthetic.min_nodes",
    "synthetic.max_nodes",
    "synthetic.edge_prob",
    "synthetic.motifs",
    "synthetic.max_degree",
    "synthetic.seed",
    "model",
    "layers",
    "hidden",
    "lr",
    "weight_decay",
    "batch_size",
    "epochs",
    "loss",
    "gcod.l1_weight",
    "gcod.l2_weight",
    "gcod.l3_weight",
    "gcod.u_lr",
    "gcod.soft_targets",
    "projection",
    "projection.layers",
    "projection.frequency",
    "noise.kind",
    "noise.rate",
    "noise.seed",
    "seed",
    "train_fraction",
    "subsample_fraction",
    "energy_layer",
    "propagation",
    "readout",
    "epsilon",
    "train_epsilon",
    "log_wallclock",
    "u_dump_every",
];

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| config_err(format!("{key} = {v:?}: {e}"))),
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|&(_, t)| t)
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    config_err(format!("{key} = {v:?}: expected one of {names:?}"))
                }),
        }
    }
}

const MODELS: &[(&str, LayerKind)] = &[("gin", LayerKind::Gin), ("gcn", LayerKind::Gcn)];
const LOSSES: &[(&str, LossKind)] = &[("ce", LossKind::CrossEntropy), ("gcod", LossKind::Gcod)];
const TARGETS: &[(&str, ProjectionTarget)] = &[
    ("none", ProjectionTarget::None),
    ("w2", ProjectionTarget::W2Only),
    ("w1_w2", ProjectionTarget::W1AndW2),
];
const NOISE_KINDS: &[(&str, NoiseKind)] = &[("symmetric", NoiseKind::Symmetric), ("pairflip", NoiseKind::Pairflip)];
const PROPAGATIONS: &[(&str, Propagation)] = &[
    ("norm_adjacency", Propagation::NormAdjacency),
    ("laplacian", Propagation::Laplacian),
];
const READOUTS: &[(&str, Option<PoolMode>)] = &[
    ("auto", None),
    ("sum", Some(PoolMode::Sum)),
    ("mean", Some(PoolMode::Mean)),
];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], value: &T) -> &'static str {
    options.iter().find(|(_, t)| t == value).map(|(n, _)| *n).expect("every variant is listed")
}

fn parse_layer_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<usize>()
                .ok()
                .filter(|&l| l >= 1)
                .ok_or_else(|| config_err(format!("{key}: {t:?} is not a layer number (1-based)")))
        })
        .collect()
}

/// Splits `key = value` lines into a map, rejecting unknown and repeated keys.
fn parse_lines(text: &str, map: &mut BTreeMap<String, String>, allow_override: bool) -> Result<()> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(config_err(format!("line {}: unknown key {key:?}", n + 1)));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() && !allow_override {
            return Err(config_err(format!("line {}: key {key:?} given twice", n + 1)));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `key=value` overrides (later wins).
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut map = BTreeMap::new();
        parse_lines(text, &mut map, false)?;
        for o in overrides {
            parse_lines(o, &mut map, true)?;
        }
        Self::from_map(map)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, overrides)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let d = Self::default();
        let mut e = Entries(map);
        let seed: u64 = e.parse("seed", d.seed)?;
        let dataset = match e.take("dataset") {
            None => d.dataset.clone(),
            Some(v) if v == "synthetic" => DatasetSource::Synthetic,
            Some(v) if v.is_empty() => return Err(config_err("dataset must not be empty")),
            Some(v) => DatasetSource::Directory(PathBuf::from(v)),
        };
        let ds = &d.synthetic;
        let synthetic = SyntheticSpec {
            num_graphs: e.parse("synthetic.num_graphs", ds.num_graphs)?,
            classes: e.parse("synthetic.classes", ds.classes)?,
            min_nodes: e.parse("synthetic.min_nodes", ds.min_nodes)?,
            max_nodes: e.parse("synthetic.max_nodes", ds.max_nodes)?,
            edge_prob: e.parse("synthetic.edge_prob", ds.edge_prob)?,
            motifs: e.parse("synthetic.motifs", ds.motifs)?,
            max_degree: e.parse("synthetic.max_degree", ds.max_degree)?,
            seed: e.parse("synthetic.seed", seed)?,
        };
        let dg = &d.gcod;
        let gcod = GcodConfig {
            l1_weight: e.parse("gcod.l1_weight", dg.l1_weight)?,
            l2_weight: e.parse("gcod.l2_weight", dg.l2_weight)?,
            l3_weight: e.parse("gcod.l3_weight", dg.l3_weight)?,
            u_lr: e.parse("gcod.u_lr", dg.u_lr)?,
            soft_targets: e.parse("gcod.soft_targets", dg.soft_targets)?,
        };
        let projection = ProjectionPolicy {
            target: e.choice("projection", d.projection.target, TARGETS)?,
            layers: match e.take("projection.layers") {
                None => LayerSelection::All,
                Some(v) if v == "all" => LayerSelection::All,
                Some(v) => LayerSelection::Indices(
                    parse_layer_list("projection.layers", &v)?.into_iter().map(|l| l - 1).collect(),
                ),
            },
            frequency: e.parse("projection.frequency", d.projection.frequency)?,
        };
        let noise = NoiseSpec {
            kind: e.choice("noise.kind", d.noise.kind, NOISE_KINDS)?,
            rate: e.parse("noise.rate", d.noise.rate)?,
            seed: e.parse("noise.seed", seed)?,
        };
        let energy_layer = match e.take("energy_layer") {
            None => None,
            Some(v) if v == "last" => None,
            Some(v) => Some(parse_layer_list("energy_layer", &v)?[0]),
        };
        let cfg = Self {
            dataset,
            synthetic,
            model: e.choice("model", d.model, MODELS)?,
            layers: e.parse("layers", d.layers)?,
            hidden: e.parse("hidden", d.hidden)?,
            lr: e.parse("lr", d.lr)?,
            weight_decay: e.parse("weight_decay", d.weight_decay)?,
            batch_size: e.parse("batch_size", d.batch_size)?,
            epochs: e.parse("epochs", d.epochs)?,
            loss: e.choice("loss", d.loss, LOSSES)?,
            gcod,
            projection,
            noise,
            seed,
            train_fraction: e.parse("train_fraction", d.train_fraction)?,
            subsample_fraction: e.parse("subsample_fraction", d.subsample_fraction)?,
            energy_layer,
            propagation: e.choice("propagation", d.propagation, PROPAGATIONS)?,
            readout: e.choice("readout", d.readout, READOUTS)?,
            epsilon: e.parse("epsilon", d.epsilon)?,
            train_epsilon: e.parse("train_epsilon", d.train_epsilon)?,
            log_wallclock: e.parse("log_wallclock", d.log_wallclock)?,
            u_dump_every: e.parse("u_dump_every", d.u_dump_every)?,
        };
        debug_assert!(e.0.is_empty(), "unconsumed keys {:?}", e.0.keys());
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its resolved value, in canonical order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let s = &self.synthetic;
        let g = &self.gcod;
        let layers = match &self.projection.layers {
            LayerSelection::All => "all".to_string(),
            LayerSelection::Indices(v) => v.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join(","),
        };
        let pairs = vec![
            (
                "dataset",
                match &self.dataset {
                    DatasetSource::Synthetic => "synthetic".to_string(),
                    DatasetSource::Directory(p) => p.display().to_string(),
                },
            ),
            ("synthetic.num_graphs", s.num_graphs.to_string()),
            ("synthetic.classes", s.classes.to_string()),
            ("synthetic.min_nodes", s.min_nodes.to_string()),
            ("synthetic.max_nodes", s.max_nodes.to_string()),
            ("synthetic.edge_prob", s.edge_prob.to_string()),
            ("synthetic.motifs", s.motifs.to_string()),
            ("synthetic.max_degree", s.max_degree.to_string()),
            ("synthetic.seed", s.seed.to_string()),
            ("model", name_of(MODELS, &self.model).to_string()),
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("loss", name_of(LOSSES, &self.loss).to_string()),
            ("gcod.l1_weight", g.l1_weight.to_string()),
            ("gcod.l2_weight", g.l2_weight.to_string()),
            ("gcod.l3_weight", g.l3_weight.to_string()),
            ("gcod.u_lr", g.u_lr.to_string()),
            ("gcod.soft_targets", g.soft_targets.to_string()),
            ("projection", name_of(TARGETS, &self.projection.target).to_string()),
            ("projection.layers", layers),
            ("projection.frequency", self.projection.frequency.to_string()),
            ("noise.kind", name_of(NOISE_KINDS, &self.noise.kind).to_string()),
            ("noise.rate", self.noise.rate.to_string()),
            ("noise.seed", self.noise.seed.to_string()),
            ("seed", self.seed.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("subsample_fraction", self.subsample_fraction.to_string()),
            (
                "energy_layer",
                self.energy_layer.map_or_else(|| "last".to_string(), |l| l.to_string()),
            ),
            ("propagation", name_of(PROPAGATIONS, &self.propagation).to_string()),
            ("readout", name_of(READOUTS, &self.readout).to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("train_epsilon", self.train_epsilon.to_string()),
            ("log_wallclock", self.log_wallclock.to_string()),
            ("u_dump_every", self.u_dump_every.to_string()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        pairs
    }

    /// File form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# smoothgnn run configuration\n");
        for (k, v) in self.to_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(config_err(msg)) };
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if self.dataset == DatasetSource::Synthetic {
            self.synthetic.validate()?;
        }
        check((1..=64).contains(&self.layers), format!("layers {} outside 1..=64", self.layers))?;
        check((1..=4096).contains(&self.hidden), format!("hidden {} outside 1..=4096", self.hidden))?;
        check(finite_pos(self.lr), format!("lr {} must be positive", self.lr))?;
        check(
            self.weight_decay.is_finite() && self.weight_decay >= 0.0,
            format!("weight_decay {} must be non-negative", self.weight_decay),
        )?;
        check(self.batch_size >= 1, "batch_size must be at least 1".into())?;
        check(self.epochs <= 100_000, format!("epochs {} above 100000", self.epochs))?;
        check(
            self.train_fraction > 0.0 && self.train_fraction <= 1.0,
            format!("train_fraction {} outside (0, 1]", self.train_fraction),
        )?;
        check(
            self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0,
            format!("subsample_fraction {} outside (0, 1]", self.subsample_fraction),
        )?;
        check(
            (0.0..=1.0).contains(&self.noise.rate),
            format!("noise.rate {} outside [0, 1]", self.noise.rate),
        )?;
        check(self.projection.frequency >= 1, "projection.frequency must be at least 1".into())?;
        if let LayerSelection::Indices(v) = &self.projection.layers {
            check(
                v.iter().all(|&l| l < self.layers),
                format!("projection.layers references a layer above {}", self.layers),
            )?;
        }
        if let Some(l) = self.energy_layer {
            check((1..=self.layers).contains(&l), format!("energy_layer {l} outside 1..={}", self.layers))?;
        }
        check(self.epsilon.is_finite(), "epsilon must be finite".into())?;
        let g = &self.gcod;
        for (name, w) in [("gcod.l1_weight", g.l1_weight), ("gcod.l2_weight", g.l2_weight), ("gcod.l3_weight", g.l3_weight)] {
            check(w.is_finite() && w >= 0.0, format!("{name} {w} must be non-negative"))?;
        }
        check(finite_pos(g.u_lr), format!("gcod.u_lr {} must be positive", g.u_lr))?;
        Ok(())
    }

    pub fn readout_mode(&self) -> PoolMode {
        self.readout.unwrap_or(match self.model {
            LayerKind::Gin => PoolMode::Sum,
            LayerKind::Gcn => PoolMode::Mean,
        })
    }

    /// 0-based index of the layer used for energy logging.
    pub fn energy_layer_index(&self) -> usize {
        self.energy_layer.map_or(self.layers - 1, |l| l - 1)
    }
}
