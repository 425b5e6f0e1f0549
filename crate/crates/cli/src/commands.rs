use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use oodann::data::{
    ground_truth, load_dataset, read_ground_truth, read_ids, recall_at_k, save_dataset, write_ground_truth,
    write_ids, DatasetFormat, GroundTruth,
};
use oodann::diagnostics::ood_report;
use oodann::graph::{build_robust_vamana, read_graph, write_graph, GraphIndex, Searcher};
use oodann::layout::{
    beam_search_disk, node_size, parallel_gorder, read_layout, write_layout, BeamSearchParams, SectorLayout,
};
use oodann::par::*;
use oodann::quant::{
    build_relevant_queries, encode, encode_with_relevance, read_codebook, read_codes, train_aopq, train_apq,
    train_opq, train_pq, write_codebook, write_codes, Codebook, PqParams, QuantizedDataset,
};
use oodann::synth::{generate, SynthConfig};
use oodann::VectorDataset;

use crate::config::{ExperimentConfig, LayoutKind, Quantizer};
use crate::manifest::{self, Manifest};
use crate::report::{self, CurvePoint, DiagnosticRow, Report};

pub const GRAPH_FILE: &str = "graph.bin";
pub const CODEBOOK_FILE: &str = "codebook.bin";
pub const CODES_FILE: &str = "codes.bin";
pub const LAYOUT_FILE: &str = "layout.bin";
pub const GT_IDS_FILE: &str = "gt_ids.ibin";
pub const GT_DISTS_FILE: &str = "gt_dists.fbin";
pub const CURVE_FILE: &str = "curve.csv";
pub const DIAGNOSTICS_FILE: &str = "ood_report.csv";
pub const RESULTS_DIR: &str = "results";

fn load(path: &Path, cfg: &ExperimentConfig) -> Result<VectorDataset> {
    let format = DatasetFormat::from_path(path).unwrap_or(DatasetFormat::Fbin);
    let ds = load_dataset(path, format).with_context(|| format!("loading {}", path.display()))?;
    Ok(ds.with_metric(cfg.metric))
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| anyhow!("config key {key} is required for this command"))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

pub fn results_file(dir: &Path, l: usize) -> PathBuf {
    dir.join(RESULTS_DIR).join(format!("L{l}.ids"))
}

pub fn cmd_convert(input: &Path, output: &Path, format: Option<DatasetFormat>) -> Result<()> {
    let format = format
        .or_else(|| DatasetFormat::from_path(input))
        .ok_or_else(|| anyhow!("cannot infer the format of {}; pass --format", input.display()))?;
    let ds = load_dataset(input, format).with_context(|| format!("loading {}", input.display()))?;
    save_dataset(output, &ds).with_context(|| format!("writing {}", output.display()))?;
    eprintln!(
        "wrote {} rows of dimension {} to {}",
        ds.count(),
        ds.dim(),
        output.display()
    );
    Ok(())
}

/// Writes a synthetic workload and a config file that points at it.
pub fn cmd_synth(dir: &Path, synth: &SynthConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let w = generate(synth)?;
    let files = [
        ("base.fbin", &w.base),
        ("id_queries.fbin", &w.id_queries),
        ("ood_queries.fbin", &w.ood_queries),
        ("query_sample.fbin", &w.ood_sample),
    ];
    for (name, ds) in files {
        let p = dir.join(name);
        save_dataset(&p, ds).with_context(|| format!("writing {}", p.display()))?;
    }
    let p = |name: &str| dir.join(name).display().to_string();
    let config = format!(
        "# Synthetic workload, seed {seed}\n\
         base = {base}\n\
         queries = {ood}\n\
         query_sample = {sample}\n\
         id_eval = {id}\n\
         ood_eval = {ood}\n\
         metric = {metric}\n\
         out_dir = {out}\n\
         seed = {seed}\n",
        seed = synth.seed,
        base = p("base.fbin"),
        ood = p("ood_queries.fbin"),
        sample = p("query_sample.fbin"),
        id = p("id_queries.fbin"),
        metric = synth.metric,
        out = p("out"),
    );
    let path = dir.join("experiment.conf");
    std::fs::write(&path, config).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn cmd_groundtruth(cfg: &ExperimentConfig) -> Result<GroundTruth> {
    let base = load(required(&cfg.base, "base")?, cfg)?;
    let queries = load(required(&cfg.queries, "queries")?, cfg)?;
    let gt = ground_truth(&base, &queries, cfg.gt_k())?;
    let dir = out_dir(cfg)?;
    write_ground_truth(dir.join(GT_IDS_FILE), dir.join(GT_DISTS_FILE), &gt)?;
    Ok(gt)
}

fn timed<T>(manifest: &mut Manifest, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().with_context(|| format!("stage {stage} failed"))?;
    manifest.insert(
        format!("time.{stage}_s"),
        format!("{:.3}", start.elapsed().as_secs_f64()),
    );
    Ok(out)
}

fn train_codebook(
    cfg: &ExperimentConfig,
    base: &VectorDataset,
    sample: Option<&VectorDataset>,
) -> Result<(Codebook, QuantizedDataset)> {
    let m = match cfg.chunks {
        Some(m) => m,
        None if base.dim().is_multiple_of(4) => base.dim() / 4,
        None => bail!(
            "dimension {} is not divisible by 4; set chunks explicitly",
            base.dim()
        ),
    };
    let k = cfg.pivots.min(base.count());
    let params = PqParams::new(m, k).with_seed(cfg.seed);
    match cfg.quantizer {
        Quantizer::None => unreachable!("no quantizer requested"),
        Quantizer::Pq => {
            let cb = train_pq(base, &params)?.codebook;
            let codes = encode(base, &cb)?;
            Ok((cb, codes))
        }
        Quantizer::Opq => {
            let cb = train_opq(base, &params, cfg.opq_rounds)?.codebook;
            let codes = encode(base, &cb)?;
            Ok((cb, codes))
        }
        Quantizer::Apq | Quantizer::Aopq => {
            let sample = sample.expect("validated: query_sample present");
            let rqm = build_relevant_queries(
                base,
                sample,
                cfg.relevance_top,
                cfg.relevance_near,
                cfg.relevance_cap,
            )?;
            let cb = if cfg.quantizer == Quantizer::Apq {
                train_apq(base, &rqm, sample, m, k, &cfg.gd)?.codebook
            } else {
                train_aopq(base, sample, &rqm, m, k, &cfg.gd, cfg.opq_rounds)?.codebook
            };
            let codes = encode_with_relevance(base, &cb, &rqm, sample)?;
            Ok((cb, codes))
        }
    }
}

pub fn cmd_build(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate_build()?;
    let mut manifest = Manifest::default();
    for (k, v) in cfg.build_settings() {
        manifest.insert(k, v);
    }
    let (base, sample) = timed(&mut manifest, "load", || {
        let base = load(required(&cfg.base, "base")?, cfg)?;
        let sample = cfg.query_sample.as_deref().map(|p| load(p, cfg)).transpose()?;
        Ok((base, sample))
    })?;
    manifest.insert("base_count", base.count());
    manifest.insert("dim", base.dim());
    manifest.insert("query_sample_count", sample.as_ref().map_or(0, |s| s.count()));
    let dir = out_dir(cfg)?.to_path_buf();

    let robust_sample = match cfg.graph {
        crate::config::GraphKind::Robust => sample.as_ref(),
        crate::config::GraphKind::Vamana => None,
    };
    let graph = timed(&mut manifest, "graph", || {
        Ok(build_robust_vamana(&base, robust_sample, &cfg.build)?)
    })?;
    write_graph(dir.join(GRAPH_FILE), &graph)?;
    manifest.hash_artifact(&dir, GRAPH_FILE)?;
    let hist = graph.degree_histogram();
    let peak = hist.iter().rposition(|&c| c > 0).unwrap_or(0);
    manifest.insert("degree.max", peak);
    manifest.insert(
        "degree.mean",
        format!("{:.3}", graph.edge_count() as f64 / graph.node_count() as f64),
    );
    manifest.insert(
        "degree.histogram",
        hist.iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, c)| format!("{d}:{c}"))
            .collect::<Vec<_>>()
            .join(" "),
    );

    if cfg.quantizer != Quantizer::None {
        let (cb, codes) = timed(&mut manifest, "quantizer", || {
            train_codebook(cfg, &base, sample.as_ref())
        })?;
        write_codebook(dir.join(CODEBOOK_FILE), &cb)?;
        write_codes(dir.join(CODES_FILE), &codes)?;
        manifest.insert("chunks", cb.m());
        manifest.insert("pivots_used", cb.k());
        manifest.hash_artifact(&dir, CODEBOOK_FILE)?;
        manifest.hash_artifact(&dir, CODES_FILE)?;

        let nsize = cfg
            .node_size
            .unwrap_or_else(|| node_size(base.dim(), cfg.build.max_degree));
        let layout = timed(&mut manifest, "layout", || {
            Ok(match cfg.layout {
                LayoutKind::Identity => SectorLayout::identity(graph.node_count(), cfg.sector_size, nsize)?,
                LayoutKind::Random => {
                    SectorLayout::random(graph.node_count(), cfg.sector_size, nsize, cfg.seed)?
                }
                LayoutKind::Gorder => parallel_gorder(&graph, cfg.sector_size, nsize, cfg.seed)?,
            })
        })?;
        write_layout(dir.join(LAYOUT_FILE), &layout)?;
        manifest.insert("node_size", nsize);
        manifest.insert("sector_width", layout.width());
        manifest.hash_artifact(&dir, LAYOUT_FILE)?;
    }
    manifest.write(&dir.join(manifest::FILE_NAME))?;
    Ok(manifest)
}

struct DiskIndex {
    cb: Codebook,
    codes: QuantizedDataset,
    layout: SectorLayout,
}

/// One pass over the query set.
struct Pass {
    /// Row-major ids, each row padded to `k` with `u32::MAX`.
    ids: Vec<u32>,
    seconds: Vec<f64>,
    sector_reads: Vec<usize>,
    wall: f64,
}

fn run_queries(
    graph: &GraphIndex,
    base: &VectorDataset,
    disk: Option<&DiskIndex>,
    queries: &VectorDataset,
    k: usize,
    l: usize,
    beam_width: usize,
) -> Result<Pass> {
    let wall = Instant::now();
    let per_query: Vec<Result<(Vec<u32>, f64, usize)>> = match disk {
        None => {
            Searcher::new(graph, base)?;
            (0..queries.count())
                .into_par_iter()
                .map_init(
                    || Searcher::new(graph, base).expect("validated above"),
                    |s, q| {
                        let t = Instant::now();
                        let (ids, _) = s.search(queries.row(q), k, l)?;
                        Ok((ids, t.elapsed().as_secs_f64(), 0))
                    },
                )
                .collect()
        }
        Some(d) => {
            let params = BeamSearchParams {
                k,
                search_list: l,
                beam_width,
            };
            (0..queries.count())
                .into_par_iter()
                .map(|q| {
                    let t = Instant::now();
                    let (ids, io) =
                        beam_search_disk(graph, &d.layout, base, &d.codes, &d.cb, queries.row(q), &params)?;
                    Ok((ids, t.elapsed().as_secs_f64(), io.sector_reads))
                })
                .collect()
        }
    };
    let wall = wall.elapsed().as_secs_f64();
    let mut ids = Vec::with_capacity(queries.count() * k);
    let mut secs = Vec::with_capacity(queries.count());
    let mut reads = Vec::with_capacity(queries.count());
    for r in per_query {
        let (mut row, s, io) = r?;
        row.resize(k, u32::MAX);
        ids.extend(row);
        secs.push(s);
        reads.push(io);
    }
    Ok(Pass {
        ids,
        seconds: secs,
        sector_reads: reads,
        wall,
    })
}

fn mean_recall(ids: &[u32], gt: &GroundTruth, k: usize) -> Result<f64> {
    let n = gt.query_count();
    let mut total = 0.0;
    for q in 0..n {
        total += recall_at_k(&ids[q * k..(q + 1) * k], gt.row_ids(q), k)?;
    }
    Ok(total / n as f64)
}

fn require_artifact(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    ensure!(
        p.exists(),
        "missing {}; run `oodann {producer}` with the same config first",
        p.display()
    );
    Ok(p)
}

pub fn cmd_search(cfg: &ExperimentConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate_sweep()?;
    let dir = cfg.out_dir.as_path();
    let manifest = Manifest::read(&require_artifact(dir, manifest::FILE_NAME, "build")?)?;
    let graph = read_graph(require_artifact(dir, GRAPH_FILE, "build")?)?;
    let gt = read_ground_truth(
        require_artifact(dir, GT_IDS_FILE, "groundtruth")?,
        require_artifact(dir, GT_DISTS_FILE, "groundtruth")?,
    )?;
    let base = load(required(&cfg.base, "base")?, cfg)?;
    let queries = load(required(&cfg.queries, "queries")?, cfg)?;
    ensure!(
        graph.metric() == cfg.metric,
        "graph was built with metric {} but the config says {}",
        graph.metric(),
        cfg.metric
    );
    ensure!(
        gt.query_count() == queries.count() && gt.k() >= cfg.k,
        "ground truth covers {} queries with k = {}, need {} queries with k >= {}; rerun groundtruth",
        gt.query_count(),
        gt.k(),
        queries.count(),
        cfg.k
    );
    let gt = if gt.k() == cfg.k {
        gt
    } else {
        let ids = (0..gt.query_count())
            .flat_map(|q| gt.row_ids(q)[..cfg.k].to_vec())
            .collect();
        let dists = (0..gt.query_count())
            .flat_map(|q| gt.row_dists(q)[..cfg.k].to_vec())
            .collect();
        GroundTruth::from_parts(cfg.k, ids, dists)?
    };
    let disk = match manifest.get("quantizer") {
        Some("none") | None => None,
        Some(_) => Some(DiskIndex {
            cb: read_codebook(require_artifact(dir, CODEBOOK_FILE, "build")?)?,
            codes: read_codes(require_artifact(dir, CODES_FILE, "build")?)?,
            layout: read_layout(require_artifact(dir, LAYOUT_FILE, "build")?)?,
        }),
    };
    std::fs::create_dir_all(dir.join(RESULTS_DIR))?;

    let mut points = Vec::with_capacity(cfg.sweep.len());
    for &l in &cfg.sweep {
        // Untimed warmup pass.
        run_queries(&graph, &base, disk.as_ref(), &queries, cfg.k, l, cfg.beam_width)?;
        let Pass {
            ids,
            seconds,
            sector_reads,
            wall,
        } = run_queries(&graph, &base, disk.as_ref(), &queries, cfg.k, l, cfg.beam_width)
            .with_context(|| format!("search at L = {l}"))?;
        write_ids(results_file(dir, l), cfg.k, &ids)?;
        let n = queries.count() as f64;
        points.push(CurvePoint {
            l,
            recall: mean_recall(&ids, &gt, cfg.k)?,
            mean_latency_ms: seconds.iter().sum::<f64>() / n * 1e3,
            mean_sector_reads: sector_reads.iter().sum::<usize>() as f64 / n,
            qps: n / wall.max(f64::MIN_POSITIVE),
        });
    }
    for (a, b) in report::recall_drops(&points) {
        eprintln!("warning: recall decreases from L = {a} to L = {b}");
    }
    report::write_csv(&dir.join(CURVE_FILE), &points)?;
    Ok(points)
}

pub fn cmd_diagnose(cfg: &ExperimentConfig) -> Result<Vec<DiagnosticRow>> {
    let base = load(required(&cfg.base, "base")?, cfg)?;
    let id = load(required(&cfg.id_eval, "id_eval")?, cfg)?;
    let ood = load(required(&cfg.ood_eval, "ood_eval")?, cfg)?;
    let report = ood_report(&base, &id, &ood, cfg.diag_k, cfg.ridge)?;
    let rows: Vec<DiagnosticRow> = report
        .rows
        .into_iter()
        .map(|r| DiagnosticRow {
            diagnostic: r.diagnostic,
            percentile: r.percentile,
            id_value: r.id_value,
            ood_value: r.ood_value,
            ratio: r.ratio,
        })
        .collect();
    report::write_csv(&out_dir(cfg)?.join(DIAGNOSTICS_FILE), &rows)?;
    Ok(rows)
}

/// Recomputes each curve point's recall from the persisted result ids and
/// ground truth next to the CSV. Returns the number of points checked.
pub fn verify_curve(csv_path: &Path, points: &[CurvePoint]) -> Result<usize> {
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    let gt = read_ground_truth(dir.join(GT_IDS_FILE), dir.join(GT_DISTS_FILE))?;
    for p in points {
        let (k, ids) = read_ids(results_file(dir, p.l))?;
        ensure!(
            k <= gt.k(),
            "results at L = {} have k = {k} above ground truth k = {}",
            p.l,
            gt.k()
        );
        let mut recall = 0.0;
        for q in 0..gt.query_count() {
            recall += recall_at_k(&ids[q * k..(q + 1) * k], &gt.row_ids(q)[..k], k)?;
        }
        recall /= gt.query_count() as f64;
        ensure!(
            (recall - p.recall).abs() <= 1e-9,
            "recall at L = {} is {} in the CSV but {recall} from the stored ids",
            p.l,
            p.recall
        );
    }
    Ok(points.len())
}

pub fn cmd_report(path: &Path) -> Result<String> {
    match report::read_report(path)? {
        Report::Curve(points) => {
            let mut out = report::format_curve(&points);
            for (a, b) in report::recall_drops(&points) {
                out.push_str(&format!("recall decreases from L = {a} to L = {b}\n"));
            }
            let dir = path.parent().unwrap_or(Path::new("."));
            if dir.join(GT_IDS_FILE).exists() && dir.join(RESULTS_DIR).exists() {
                let n = verify_curve(path, &points)?;
                out.push_str(&format!("recall verified against stored ids for {n} points\n"));
            }
            Ok(out)
        }
        Report::Diagnostics(rows) => Ok(report::format_diagnostics(&rows)),
    }
}
