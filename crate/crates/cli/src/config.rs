//! Experiment configuration: a `key = value` text file plus overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use oodann::graph::BuildParams;
use oodann::quant::GdParams;
use oodann::Metric;

pub const THREADS_ENV: &str = "OODANN_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Vamana,
    Robust,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantizer {
    None,
    Pq,
    Opq,
    Apq,
    Aopq,
}

impl Quantizer {
    pub fn needs_sample(self) -> bool {
        matches!(self, Quantizer::Apq | Quantizer::Aopq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayoutKind {
    Identity,
    Random,
    Gorder,
}

macro_rules! keyword_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = anyhow::Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)+
                    other => bail!(
                        "unknown {} {other:?}; expected one of: {}",
                        stringify!($ty),
                        [$($name),+].join(", ")
                    ),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(GraphKind { "vamana" => Vamana, "robust" => Robust });
keyword_enum!(Quantizer { "none" => None, "pq" => Pq, "opq" => Opq, "apq" => Apq, "aopq" => Aopq });
keyword_enum!(LayoutKind { "identity" => Identity, "random" => Random, "gorder" => Gorder });

const KEYS: &[&str] = &[
    "base",
    "queries",
    "query_sample",
    "id_eval",
    "ood_eval",
    "metric",
    "out_dir",
    "graph",
    "max_degree",
    "build_list",
    "alpha1",
    "alpha2",
    "quantizer",
    "chunks",
    "pivots",
    "opq_rounds",
    "relevance_top",
    "relevance_near",
    "relevance_cap",
    "learning_rate",
    "gd_iters",
    "gd_rounds",
    "gd_tol",
    "layout",
    "sector_size",
    "node_size",
    "sweep",
    "k",
    "gt_k",
    "beam_width",
    "diag_k",
    "ridge",
    "threads",
    "seed",
];

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub base: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub query_sample: Option<PathBuf>,
    pub id_eval: Option<PathBuf>,
    pub ood_eval: Option<PathBuf>,
    pub metric: Metric,
    pub out_dir: PathBuf,
    pub graph: GraphKind,
    pub build: BuildParams,
    pub quantizer: Quantizer,
    /// `M`; `None` picks `dim / 4`.
    pub chunks: Option<usize>,
    pub pivots: usize,
    pub opq_rounds: usize,
    pub relevance_top: usize,
    pub relevance_near: usize,
    pub relevance_cap: usize,
    pub gd: GdParams,
    pub layout: LayoutKind,
    pub sector_size: usize,
    /// Bytes per node; `None` derives it from the dimension and `R`.
    pub node_size: Option<usize>,
    pub sweep: Vec<usize>,
    pub k: usize,
    pub gt_k: Option<usize>,
    pub beam_width: usize,
    pub diag_k: usize,
    pub ridge: Option<f64>,
    /// Worker threads; 0 means all available cores.
    pub threads: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base: None,
            queries: None,
            query_sample: None,
            id_eval: None,
            ood_eval: None,
            metric: Metric::SquaredL2,
            out_dir: PathBuf::from("out"),
            graph: GraphKind::Robust,
            build: BuildParams::default(),
            quantizer: Quantizer::None,
            chunks: None,
            pivots: 256,
            opq_rounds: 5,
            relevance_top: 1000,
            relevance_near: 10,
            relevance_cap: 100,
            gd: GdParams::default(),
            layout: LayoutKind::Identity,
            sector_size: oodann::layout::DEFAULT_SECTOR_SIZE,
            node_size: None,
            sweep: vec![10, 20, 40, 80, 160],
            k: 10,
            gt_k: None,
            beam_width: 4,
            diag_k: 10,
            ridge: None,
            threads: 0,
            seed: 0,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{origin}:{}: expected key = value, got {raw:?}", no + 1))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ExperimentConfig {
    /// Config file (optional), then `OODANN_THREADS`, then `--set` pairs.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_pairs(&text, &path.display().to_string())? {
                cfg.set(&k, &v)?;
            }
        }
        if let Ok(v) = std::env::var(THREADS_ENV) {
            cfg.threads = parse(THREADS_ENV, &v)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override {o:?} must look like key=value"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "base" => self.base = optional_path(value),
            "queries" => self.queries = optional_path(value),
            "query_sample" => self.query_sample = optional_path(value),
            "id_eval" => self.id_eval = optional_path(value),
            "ood_eval" => self.ood_eval = optional_path(value),
            "metric" => self.metric = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "graph" => self.graph = parse(key, value)?,
            "max_degree" => self.build.max_degree = parse(key, value)?,
            "build_list" => self.build.search_list = parse(key, value)?,
            "alpha1" => self.build.alpha1 = parse(key, value)?,
            "alpha2" => self.build.alpha2 = parse(key, value)?,
            "quantizer" => self.quantizer = parse(key, value)?,
            "chunks" => self.chunks = Some(parse(key, value)?),
            "pivots" => self.pivots = parse(key, value)?,
            "opq_rounds" => self.opq_rounds = parse(key, value)?,
            "relevance_top" => self.relevance_top = parse(key, value)?,
            "relevance_near" => self.relevance_near = parse(key, value)?,
            "relevance_cap" => self.relevance_cap = parse(key, value)?,
            "learning_rate" => self.gd.learning_rate = parse(key, value)?,
            "gd_iters" => self.gd.max_iters_per_update = parse(key, value)?,
            "gd_rounds" => self.gd.outer_rounds = parse(key, value)?,
            "gd_tol" => self.gd.convergence_tol = parse(key, value)?,
            "layout" => self.layout = parse(key, value)?,
            "sector_size" => self.sector_size = parse(key, value)?,
            "node_size" => self.node_size = Some(parse(key, value)?),
            "sweep" => {
                self.sweep = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "k" => self.k = parse(key, value)?,
            "gt_k" => self.gt_k = Some(parse(key, value)?),
            "beam_width" => self.beam_width = parse(key, value)?,
            "diag_k" => self.diag_k = parse(key, value)?,
            "ridge" => self.ridge = Some(parse(key, value)?),
            "threads" => self.threads = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.build.seed = self.seed;
                self.gd.seed = self.seed;
            }
            other => bail!("unknown config key {other:?}; known keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn gt_k(&self) -> usize {
        self.gt_k.unwrap_or(self.k)
    }

    /// Checks the parts of the config the search sweep depends on.
    pub fn validate_sweep(&self) -> Result<()> {
        if self.sweep.is_empty() {
            bail!("sweep must list at least one L value");
        }
        if let Some(&l) = self.sweep.iter().find(|&&l| l < self.k) {
            bail!("sweep value L = {l} is below k = {}", self.k);
        }
        Ok(())
    }

    pub fn validate_build(&self) -> Result<()> {
        self.build.validate()?;
        if self.quantizer == Quantizer::None && self.layout != LayoutKind::Identity {
            bail!(
                "layout {} needs a quantizer: disk search reads compressed codes",
                self.layout
            );
        }
        if (self.graph == GraphKind::Robust || self.quantizer.needs_sample()) && self.query_sample.is_none() {
            bail!(
                "graph {} with quantizer {} needs query_sample",
                self.graph,
                self.quantizer
            );
        }
        Ok(())
    }

    /// Settings that determine the build artifacts, for the manifest.
    pub fn build_settings(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("metric", self.metric.to_string());
        m.insert("graph", self.graph.to_string());
        m.insert("max_degree", self.build.max_degree.to_string());
        m.insert("build_list", self.build.search_list.to_string());
        m.insert("alpha1", self.build.alpha1.to_string());
        m.insert("alpha2", self.build.alpha2.to_string());
        m.insert("quantizer", self.quantizer.to_string());
        m.insert("pivots", self.pivots.to_string());
        m.insert("layout", self.layout.to_string());
        m.insert("sector_size", self.sector_size.to_string());
        m.insert("seed", self.seed.to_string());
        m
    }
}
