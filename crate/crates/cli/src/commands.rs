use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use relcluster_core::analysis::{cluster_reports, confusion, diagonalize, name_clusters, ClusterReport};
use relcluster_core::clustering::{
    cluster_auto, default_grid, estimate_k_elbow, kmeans, kmeans_with, optics_with, ClusterAssignment, ElbowCurve,
    KMeansParams, Method, OpticsParams,
};
use relcluster_core::corpus::{load_fewrel, load_unlabeled, Dataset};
use relcluster_core::encoder::{
    encode_lenient, save_cache, FileBackend, InferenceBackend, InferenceConfig, MlmBackend, StubBackend,
};
use relcluster_core::evalmetrics::{evaluate, EvaluationReport};
use relcluster_core::prompt::{render_all, PromptTemplate, RenderedPrompt};
use serde::Serialize;

use crate::config::{BackendKind, DatasetFormat, Mode, RunConfig, StubKind};
use crate::error::CliError;
use crate::stages::{self, Stamped};

/// A validated configuration plus per-invocation file locations.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub force: bool,
    pub cache: Option<PathBuf>,
    pub assignment: Option<PathBuf>,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        Ok(Self {
            config,
            force: false,
            cache: None,
            assignment: None,
        })
    }

    fn out(&self) -> Result<&Path, CliError> {
        let out = self.config.out.as_path();
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::io(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(out)
    }

    fn cache_path(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.config.out.join(stages::EMBEDDINGS))
    }

    fn assignment_path(&self) -> PathBuf {
        self.assignment.clone().unwrap_or_else(|| self.config.out.join(stages::ASSIGNMENT))
    }

    fn dataset_digest(&self) -> Result<String, CliError> {
        stages::file_digest(self.config.dataset_path()?)
    }

    fn embedding_hash(&self) -> Result<String, CliError> {
        Ok(stages::embedding_hash(&self.config, &self.dataset_digest()?))
    }

    fn clustering_hash(&self) -> Result<String, CliError> {
        Ok(stages::clustering_hash(&self.config, &self.embedding_hash()?))
    }
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    let path = config.dataset_path()?;
    if !path.exists() {
        return Err(CliError::io(format!("dataset {} does not exist", path.display())));
    }
    Ok(match config.dataset.format {
        DatasetFormat::Fewrel => load_fewrel(path)?,
        DatasetFormat::Unlabeled => load_unlabeled(path)?,
    })
}

pub fn build_backend(config: &RunConfig, dataset: &Dataset) -> Result<Box<dyn MlmBackend>, CliError> {
    let b = &config.backend;
    Ok(match b.kind {
        BackendKind::Stub => {
            let stub = match b.stub {
                StubKind::Hash => StubBackend::hashed(b.hidden_dim),
                StubKind::Gold => {
                    if !dataset.is_labeled() {
                        return Err(CliError::validation(
                            "the gold-direction stub needs a labeled dataset",
                        ));
                    }
                    let labels: HashMap<String, String> = dataset
                        .instances
                        .iter()
                        .filter_map(|i| Some((i.instance_id.clone(), i.gold_relation.clone()?)))
                        .collect();
                    StubBackend::gold_direction(b.hidden_dim, labels, b.noise)
                }
            };
            Box::new(stub.with_max_length(b.max_length))
        }
        BackendKind::File => {
            let path = b.cache.as_ref().expect("validated");
            Box::new(FileBackend::open(path)?)
        }
        BackendKind::Inference => Box::new(InferenceBackend::spawn(InferenceConfig {
            program: b.program.clone(),
            args: vec![b.script.to_string_lossy().into_owned()],
            model: b.model.clone(),
            max_length: b.max_length,
            batch_size: b.batch_size,
            device: b.device.clone(),
        })?),
    })
}

fn prompts_for(config: &RunConfig, dataset: &Dataset) -> Result<Vec<RenderedPrompt>, CliError> {
    Ok(render_all(&PromptTemplate::new(config.template()?), dataset)?)
}

/// Renders, encodes and writes the embedding cache.
pub fn cmd_encode(ctx: &Context) -> Result<PathBuf, CliError> {
    let config = &ctx.config;
    log::info!("seed {}", config.seed);
    let dataset = load_dataset(config)?;
    let prompts = prompts_for(config, &dataset)?;
    let backend = build_backend(config, &dataset)?;
    let (matrix, failures) = encode_lenient(backend.as_ref(), &prompts)?;
    if matrix.is_empty() && !prompts.is_empty() {
        return Err(CliError::backend(format!(
            "no prompt could be encoded ({} failures, first: {})",
            failures.len(),
            failures.first().map_or("-", |f| f.reason.as_str())
        )));
    }
    let mut matrix = if config.backend.normalize {
        matrix.normalize_rows()
    } else {
        matrix
    };
    matrix.config_hash = Some(ctx.embedding_hash()?);

    let out = ctx.out()?;
    let path = ctx.cache_path();
    save_cache(&matrix, &path)?;
    let failures_path = out.join(stages::ENCODE_FAILURES);
    if failures.is_empty() {
        let _ = std::fs::remove_file(&failures_path);
    } else {
        let lines: String = failures
            .iter()
            .map(|f| serde_json::json!({"instance_id": f.instance_id, "reason": f.reason}).to_string() + "\n")
            .collect();
        stages::write_text(&failures_path, &lines)?;
        for f in &failures {
            log::warn!("skipped {}: {}", f.instance_id, f.reason);
        }
    }
    println!(
        "encode: {} instances, {} prompts, {} encoded, {} failed -> {}",
        dataset.len(),
        prompts.len(),
        matrix.rows(),
        failures.len(),
        path.display()
    );
    Ok(path)
}

fn run_clustering(ctx: &Context, emb: &relcluster_core::EmbeddingMatrix) -> Result<(ClusterAssignment, Option<ElbowCurve>), CliError> {
    let c = &ctx.config.clustering;
    let seed = ctx.config.seed;
    Ok(match c.mode {
        Mode::KnownK => (kmeans(emb, c.k.expect("validated"), seed)?, None),
        Mode::Optics => (optics_with(emb, &OpticsParams::new(c.min_samples))?, None),
        Mode::Elbow => {
            let (curve, assignment) = match &c.grid {
                None => cluster_auto(emb, seed)?,
                Some(grid) => {
                    let curve = estimate_k_elbow(emb, grid, seed)?;
                    let mut a = kmeans_with(emb, &KMeansParams::new(curve.k_hat, seed))?;
                    a.method = Method::KmeansElbow;
                    a.params.extend(curve.to_params());
                    (curve, a)
                }
            };
            (assignment, Some(curve))
        }
    })
}

/// Clusters the cached embeddings and writes the assignment.
pub fn cmd_cluster(ctx: &Context) -> Result<ClusterAssignment, CliError> {
    log::info!("seed {}", ctx.config.seed);
    let embedding_hash = ctx.embedding_hash()?;
    let cache = ctx.cache_path();
    let emb = stages::load_embeddings(&cache, &embedding_hash, ctx.force)?;
    let (assignment, curve) = run_clustering(ctx, &emb)?;
    let out = ctx.out()?;
    let hash = stages::clustering_hash(&ctx.config, &embedding_hash);
    stages::write_assignment(out, &assignment, &hash, &embedding_hash)?;
    if let Some(curve) = &curve {
        stages::write_text(&out.join(stages::ELBOW_CSV), &curve.to_csv())?;
        println!("estimate-k: k_hat = {} ({:?})", curve.k_hat, curve.selection);
    }
    println!(
        "cluster: {} instances into {} clusters ({:?}) -> {}",
        assignment.len(),
        assignment.k,
        assignment.method,
        out.join(stages::ASSIGNMENT).display()
    );
    Ok(assignment)
}

/// Runs only the elbow sweep and writes the curve.
pub fn cmd_estimate_k(ctx: &Context) -> Result<ElbowCurve, CliError> {
    log::info!("seed {}", ctx.config.seed);
    let embedding_hash = ctx.embedding_hash()?;
    let emb = stages::load_embeddings(&ctx.cache_path(), &embedding_hash, ctx.force)?;
    let grid = ctx.config.clustering.grid.clone().unwrap_or_else(|| default_grid(emb.rows()));
    let curve = estimate_k_elbow(&emb, &grid, ctx.config.seed)?;
    let out = ctx.out()?;
    stages::write_text(&out.join(stages::ELBOW_CSV), &curve.to_csv())?;
    println!("estimate-k: k_hat = {} ({:?}) -> {}", curve.k_hat, curve.selection, out.join(stages::ELBOW_CSV).display());
    Ok(curve)
}

fn pct(v: f64) -> String {
    format!("{:6.2}", 100.0 * v)
}

pub fn render_table(r: &EvaluationReport) -> String {
    let mut s = String::new();
    writeln!(s, "n = {}, gold relations = {}, clusters = {}", r.n, r.k_gold, r.k_pred).unwrap();
    writeln!(s, "            precision  recall      f1").unwrap();
    writeln!(s, "B³           {}  {}  {}", pct(r.b3_precision), pct(r.b3_recall), pct(r.b3_f1)).unwrap();
    writeln!(s, "            homog.     compl.      f1").unwrap();
    writeln!(s, "V-measure    {}  {}  {}", pct(r.v_homogeneity), pct(r.v_completeness), pct(r.v_f1)).unwrap();
    writeln!(s, "ARI                              {}", pct(r.ari)).unwrap();
    s
}

/// Scores the assignment against gold labels.
pub fn cmd_evaluate(ctx: &Context) -> Result<EvaluationReport, CliError> {
    let dataset = load_dataset(&ctx.config)?;
    if !dataset.is_labeled() {
        return Err(CliError::validation("evaluation needs a labeled dataset (format fewrel)"));
    }
    let hash = ctx.clustering_hash()?;
    let assignment = stages::load_assignment(&ctx.assignment_path(), &hash, ctx.force)?;
    let report = evaluate(&dataset, &assignment)?;
    let out = ctx.out()?;
    stages::write_json(&out.join(stages::REPORT), &Stamped::new(&hash, &report))?;
    print!("{}", render_table(&report));
    Ok(report)
}

#[derive(Serialize)]
struct Clusters<'a> {
    clusters: &'a [ClusterReport],
}

/// Writes the confusion matrix, cluster compositions and, when the backend
/// has an MLM head, cluster names.
pub fn cmd_report(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let config = &ctx.config;
    let dataset = load_dataset(config)?;
    let hash = ctx.clustering_hash()?;
    let assignment = stages::load_assignment(&ctx.assignment_path(), &hash, ctx.force)?;
    let out = ctx.out()?;
    let mut written = Vec::new();

    if dataset.is_labeled() {
        let m = diagonalize(&confusion(&dataset, &assignment)?);
        for (name, text) in [(stages::CONFUSION_CSV, m.to_csv()), (stages::CONFUSION_PGM, m.to_pgm())] {
            stages::write_text(&out.join(name), &text)?;
            written.push(out.join(name));
        }
        let reports = cluster_reports(&dataset, &assignment)?;
        stages::write_json(&out.join(stages::CLUSTERS), &Stamped::new(&hash, Clusters { clusters: &reports }))?;
        written.push(out.join(stages::CLUSTERS));
        println!(
            "report: {}×{} confusion matrix, diagonal mass {} of {}",
            m.counts.len(),
            m.col_labels.len(),
            m.diagonal_mass(),
            m.total()
        );
    } else {
        log::warn!("dataset is unlabeled; skipping confusion matrix and compositions");
    }

    let backend = build_backend(config, &dataset)?;
    let naming = out.join(stages::NAMING);
    if backend.has_mlm_head() {
        let by_id: BTreeMap<&str, &relcluster_core::RelationInstance> =
            dataset.instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();
        let template = PromptTemplate::new(config.template()?);
        let prompts = assignment
            .instance_ids
            .iter()
            .map(|id| {
                let inst = by_id
                    .get(id.as_str())
                    .ok_or_else(|| CliError::validation(format!("assignment instance {id} is not in the dataset")))?;
                Ok(template.render(inst)?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let names = name_clusters(backend.as_ref(), &prompts, &assignment, config.clustering.name_tokens)?;
        stages::write_json(&naming, &Stamped::new(&hash, Clusters { clusters: &names }))?;
        written.push(naming);
    } else {
        log::info!("backend {} has no MLM head; no cluster names", backend.name());
        let _ = std::fs::remove_file(&naming);
    }
    for path in &written {
        println!("report: wrote {}", path.display());
    }
    Ok(written)
}

/// encode → cluster → evaluate (when labeled) → report, reusing an
/// embedding cache built from the same configuration.
pub fn cmd_pipeline(ctx: &Context) -> Result<(), CliError> {
    let cache = ctx.cache_path();
    let expected = ctx.embedding_hash()?;
    let reusable = cache.exists()
        && relcluster_core::encoder::load_cache(&cache)
            .map(|m| m.config_hash.as_deref() == Some(expected.as_str()))
            .unwrap_or(false);
    if reusable {
        log::info!("reusing embedding cache {} (hash {expected}); skipping encode", cache.display());
        println!("encode: reusing {}", cache.display());
    } else {
        if cache.exists() {
            log::info!("embedding cache {} is stale; re-encoding", cache.display());
        }
        cmd_encode(ctx)?;
    }
    let mut staged = ctx.clone();
    staged.cache = Some(cache);
    cmd_cluster(&staged)?;
    let dataset = load_dataset(&ctx.config)?;
    if dataset.is_labeled() {
        cmd_evaluate(&staged)?;
    }
    cmd_report(&staged)?;
    Ok(())
}
