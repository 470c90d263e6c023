use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use sdr_cir::cot::DescriptionCache;
use sdr_cir::eval::{
    self, load_description_set, load_queries, require_descriptions, text_table, Cell, EvalCorpus, EvalOptions,
    GenerationStats, MetricReport, QueryTriplet,
};
use sdr_cir::{Dataset, EmbeddingStore, Mode, RankingConfig};
use serde_json::{json, Value};

use crate::args::{EvalArgs, GenerateOnTheFly, InputArgs, MetricArgs, RankArgs, SweepArgs, WeightArgs};
use crate::embedder::Embedder;
use crate::error::{self, CliResult, Failure};
use crate::generate;
use crate::grid::parse_grid;
use crate::manifest::{beside, RunManifest};

struct Weights {
    alpha: f64,
    beta: f64,
    mode: Mode,
}

/// Explicit flags win over the dataset preset. Without either, a weight the
/// mode actually uses is an error; an unused one is 0.
fn resolve_weights(input: &InputArgs, w: &WeightArgs) -> CliResult<Weights> {
    let mode = Mode::from(w.mode);
    let preset = input.dataset.map(|d| Dataset::from(d).default_weights());
    let pick = |flag: Option<f64>, from_preset: Option<f64>, used: bool, name: &str| match flag.or(from_preset) {
        Some(v) => Ok(v),
        None if used => Err(Failure::usage(format!(
            "--{name} is required without --dataset for mode {mode}"
        ))),
        None => Ok(0.0),
    };
    let alpha = pick(w.alpha, preset.map(|p| p.0), mode.uses_anchor(), "alpha")?;
    let beta = pick(w.beta, preset.map(|p| p.1), mode.uses_debias(), "beta")?;
    RankingConfig::new(alpha, beta, mode, vec![1]).map_err(|e| Failure::usage(e.to_string()))?;
    Ok(Weights { alpha, beta, mode })
}

fn exclude_reference(input: &InputArgs) -> bool {
    if input.keep_reference {
        return false;
    }
    input.exclude_reference || input.dataset.map(Dataset::from) == Some(Dataset::Cirr)
}

fn input_config(input: &InputArgs, w: &Weights) -> Value {
    json!({
        "queries": input.queries,
        "candidates": input.candidates,
        "references": input.references.as_ref().unwrap_or(&input.candidates),
        "description_embeddings": input.description_embeddings,
        "modification_embeddings": input.modification_embeddings,
        "descriptions_from": input.descriptions_from,
        "cache": input.cache,
        "model": input.model,
        "embedder": input.embedder,
        "embed_model": input.embed_model,
        "dataset": input.dataset.map(|d| Dataset::from(d).as_str()),
        "alpha": w.alpha,
        "beta": w.beta,
        "mode": w.mode.as_str(),
        "exclude_reference": exclude_reference(input),
        "threads": input.threads,
    })
}

struct Loaded {
    queries: Vec<QueryTriplet>,
    candidates: EmbeddingStore,
    references: Option<EmbeddingStore>,
    descriptions: EmbeddingStore,
    modifications: EmbeddingStore,
}

impl Loaded {
    fn corpus(&self) -> EvalCorpus<'_> {
        EvalCorpus {
            candidates: &self.candidates,
            references: self.references.as_ref().unwrap_or(&self.candidates),
            descriptions: &self.descriptions,
            modifications: &self.modifications,
        }
    }
}

fn embedder(input: &InputArgs, what: &str) -> CliResult<Embedder> {
    match (&input.embedder, &input.embed_model) {
        (Some(cmd), Some(tag)) => Embedder::new(cmd, tag),
        (Some(_), None) => Err(Failure::usage("--embedder needs --embed-model")),
        (None, _) => Err(Failure::usage(format!(
            "{what} embeddings need either a precomputed SDRE file or --embedder"
        ))),
    }
}

fn description_texts(
    input: &InputArgs,
    queries: &[QueryTriplet],
    cache: Option<&DescriptionCache>,
) -> CliResult<BTreeMap<String, String>> {
    let texts = if let Some(path) = &input.descriptions_from {
        load_description_set(path)?
    } else if let Some(cache) = cache {
        cache
            .latest_by_query(input.model.as_deref())
            .into_iter()
            .map(|(qid, e)| (qid, e.description))
            .collect()
    } else {
        return Err(Failure::usage(
            "no descriptions: pass --description-embeddings, --descriptions-from or --cache",
        ));
    };
    require_descriptions(queries, &texts)?;
    Ok(texts)
}

/// Loads everything a scoring run needs, generating descriptions first when
/// asked to. Returns the exit code instead when generation did not finish.
fn load(input: &InputArgs, gen: Option<&GenerateOnTheFly>) -> CliResult<Result<(Loaded, GenerationStats), i32>> {
    let queries = load_queries(&input.queries)?;
    let candidates = EmbeddingStore::ingest(&input.candidates)?;
    let references = input.references.as_ref().map(EmbeddingStore::ingest).transpose()?;

    let cache = input
        .cache
        .as_ref()
        .map(|p| DescriptionCache::open(p).map(Arc::new))
        .transpose()?;
    let mut stats = GenerationStats::default();
    if let Some(g) = gen.filter(|g| g.generate) {
        let (Some(images), Some(cache), Some(model)) = (&g.images, &cache, &input.model) else {
            return Err(Failure::usage("--generate needs --images, --cache and --model"));
        };
        let run = generate::run(&queries, images, cache.clone(), model, &g.client, input.threads)?;
        let code = generate::report(&run);
        if code != 0 {
            return Ok(Err(code));
        }
        stats = run.outcome.stats;
    }

    let descriptions = match &input.description_embeddings {
        Some(path) => EmbeddingStore::ingest(path)?,
        None => {
            let texts = description_texts(input, &queries, cache.as_deref())?;
            let wanted: Vec<(&str, &str)> = queries
                .iter()
                .map(|q| (q.query_id.as_str(), texts[&q.query_id].as_str()))
                .collect();
            embedder(input, "description")?.embed_texts("descriptions", wanted)?
        }
    };
    let modifications = match &input.modification_embeddings {
        Some(path) => EmbeddingStore::ingest(path)?,
        None => embedder(input, "modification text")?.embed_texts(
            "modifications",
            queries
                .iter()
                .map(|q| (q.query_id.as_str(), q.modification_text.as_str())),
        )?,
    };
    Ok(Ok((
        Loaded {
            queries,
            candidates,
            references,
            descriptions,
            modifications,
        },
        stats,
    )))
}

fn eval_options(input: &InputArgs, metrics: &MetricArgs, dataset_name: String) -> EvalOptions {
    EvalOptions {
        dataset_name,
        k_values: metrics.k_values.clone(),
        subset_k_values: metrics.subset_k_values.clone(),
        exclude_reference: exclude_reference(input),
        threads: input.threads,
        record_timing: !metrics.omit_timing,
    }
}

fn dataset_name(input: &InputArgs) -> String {
    match input.dataset {
        Some(d) => Dataset::from(d).as_str().to_string(),
        None => input
            .queries
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into()),
    }
}

fn metric_config(metrics: &MetricArgs) -> Value {
    json!({
        "k": metrics.k_values,
        "subset_k": metrics.subset_k_values,
        "omit_timing": metrics.omit_timing,
    })
}

/// Rejects a heatmap metric the reports will not carry.
fn check_heatmap(metric: &str, metrics: &MetricArgs) -> CliResult<()> {
    let known = metric.split_once('@').and_then(|(family, k)| {
        let k: usize = k.parse().ok()?;
        match family {
            "recall" | "map" => Some(metrics.k_values.contains(&k)),
            "recall_sub" => Some(metrics.subset_k_values.contains(&k)),
            _ => None,
        }
    });
    match known {
        Some(true) => Ok(()),
        _ => Err(Failure::usage(format!(
            "--heatmap {metric:?}: expected recall@K, map@K or recall_sub@K with K among the requested cutoffs"
        ))),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn failed_code(reports: &[MetricReport]) -> i32 {
    match reports.first() {
        Some(r) if !r.failed_queries.is_empty() => {
            for f in &r.failed_queries {
                eprintln!("query {} not scored: {}", f.query_id, f.error);
            }
            error::FAILED_QUERIES
        }
        _ => 0,
    }
}

pub fn rank(args: &RankArgs) -> CliResult<i32> {
    let w = resolve_weights(&args.input, &args.weights)?;
    let mut manifest = RunManifest::start("rank", input_config(&args.input, &w));
    manifest.config["top_k"] = json!(args.top_k);
    let (loaded, _) = match load(&args.input, None)? {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let lists = eval::rank_queries(
        &loaded.queries,
        &loaded.corpus(),
        Cell::new(w.mode, w.alpha, w.beta),
        args.top_k,
        exclude_reference(&args.input),
        args.input.threads,
    )?;
    let mut out = String::new();
    for l in &lists {
        out.push_str(&l.to_json_line());
        out.push('\n');
    }
    manifest.emit(&args.out, out.as_bytes())?;
    manifest.finish(&beside(&args.out), 0)?;
    println!("queries={} top_k={}", lists.len(), args.top_k);
    Ok(0)
}

pub fn eval(args: &EvalArgs) -> CliResult<i32> {
    if !args.sweep.is_empty() {
        return run_sweep(
            "eval",
            &args.input,
            &args.weights,
            &args.metrics,
            &args.sweep,
            args.heatmap.as_deref(),
            Some(&args.generation),
            &args.out,
        );
    }
    if args.heatmap.is_some() {
        return Err(Failure::usage("--heatmap needs --sweep"));
    }
    let w = resolve_weights(&args.input, &args.weights)?;
    let mut manifest = RunManifest::start("eval", input_config(&args.input, &w));
    manifest.config["metrics"] = metric_config(&args.metrics);
    manifest.config["ablate"] = json!(args.ablate);
    if args.generation.generate {
        manifest.config["client"] = generate::client_config(&args.generation.client);
    }
    create_dir(&args.out)?;

    let (loaded, stats) = match load(&args.input, Some(&args.generation))? {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let opts = eval_options(&args.input, &args.metrics, dataset_name(&args.input));
    let reports = if args.ablate {
        eval::ablate(&loaded.queries, &loaded.corpus(), w.alpha, w.beta, &opts, &stats)?
    } else {
        eval::evaluate(
            &loaded.queries,
            &loaded.corpus(),
            &[Cell::new(w.mode, w.alpha, w.beta)],
            &opts,
            &stats,
        )?
    };

    let mut json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    json.push('\n');
    let table = text_table(&reports);
    manifest.emit(&args.out.join("report.json"), json.as_bytes())?;
    manifest.emit(&args.out.join("report.txt"), table.as_bytes())?;
    print!("{table}");
    let code = failed_code(&reports);
    manifest.finish(&args.out.join("manifest.json"), code)?;
    Ok(code)
}

pub fn sweep(args: &SweepArgs) -> CliResult<i32> {
    run_sweep(
        "sweep",
        &args.input,
        &args.weights,
        &args.metrics,
        &args.sweep,
        args.heatmap.as_deref(),
        None,
        &args.out,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    subcommand: &'static str,
    input: &InputArgs,
    weights: &WeightArgs,
    metrics: &MetricArgs,
    specs: &[String],
    heatmap: Option<&str>,
    gen: Option<&GenerateOnTheFly>,
    out: &Path,
) -> CliResult<i32> {
    let grid = parse_grid(specs).map_err(|e| Failure::usage(format!("--sweep: {e}")))?;
    if let Some(m) = heatmap {
        check_heatmap(m, metrics)?;
    }
    // Only the swept axes are required; fixed ones come from flags or preset.
    let mut fixed = WeightArgs {
        alpha: weights.alpha,
        beta: weights.beta,
        mode: weights.mode,
    };
    if let Some(a) = &grid.alphas {
        fixed.alpha = Some(a[0]);
    }
    if let Some(b) = &grid.betas {
        fixed.beta = Some(b[0]);
    }
    let w = resolve_weights(input, &fixed)?;
    let alphas = grid.alphas.unwrap_or_else(|| vec![w.alpha]);
    let betas = grid.betas.unwrap_or_else(|| vec![w.beta]);
    for &a in &alphas {
        RankingConfig::new(a, 0.0, w.mode, vec![1]).map_err(|e| Failure::usage(format!("--sweep: {e}")))?;
    }
    for &b in &betas {
        RankingConfig::new(0.0, b, w.mode, vec![1]).map_err(|e| Failure::usage(format!("--sweep: {e}")))?;
    }

    let mut manifest = RunManifest::start(subcommand, input_config(input, &w));
    manifest.config["metrics"] = metric_config(metrics);
    manifest.config["alphas"] = json!(alphas);
    manifest.config["betas"] = json!(betas);
    manifest.config["heatmap"] = json!(heatmap);
    create_dir(out)?;

    let (loaded, stats) = match load(input, gen)? {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let opts = eval_options(input, metrics, dataset_name(input));
    let report = eval::sweep(
        &loaded.queries,
        &loaded.corpus(),
        &alphas,
        &betas,
        w.mode,
        &opts,
        &stats,
    )?;

    let table = report.text_table();
    manifest.emit(&out.join("sweep.json"), report.to_json().as_bytes())?;
    manifest.emit(&out.join("sweep.txt"), table.as_bytes())?;
    if let Some(m) = heatmap {
        let svg = report.heatmap_svg(m).expect("metric checked above");
        manifest.emit(&out.join("heatmap.svg"), svg.as_bytes())?;
    }
    print!("{table}");
    let code = failed_code(&report.cells);
    manifest.finish(&out.join("manifest.json"), code)?;
    Ok(code)
}
