use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Once};
use std::time::Duration;

use sdr_cir::cot::{CotClient, CotRequest, DescriptionCache, Endpoint, ImageDir, RetryPolicy};
use sdr_cir::eval::{describe_queries, load_queries, DescribeOutcome, QueryTriplet};
use serde_json::json;

use crate::args::{ClientArgs, GenerateArgs};
use crate::error::{self, CliResult};
use crate::manifest::{beside, RunManifest};

static CANCEL: AtomicBool = AtomicBool::new(false);
static HANDLER: Once = Once::new();

/// First interrupt stops new requests; finished answers are already in the
/// cache because it is written through. A second interrupt exits at once.
fn install_interrupt_handler() {
    HANDLER.call_once(|| {
        let installed = ctrlc::set_handler(|| {
            if CANCEL.swap(true, Ordering::SeqCst) {
                std::process::exit(error::INTERRUPTED);
            }
            eprintln!("interrupted: finishing in-flight requests (press again to abort)");
        });
        if let Err(e) = installed {
            log::warn!("cannot install interrupt handler: {e}");
        }
    });
}

pub fn endpoint(client: &ClientArgs) -> Endpoint {
    let env = Endpoint::from_env();
    match &client.base_url {
        Some(url) => Endpoint::new(url.clone(), env.api_key),
        None => env,
    }
}

pub fn client_config(client: &ClientArgs) -> serde_json::Value {
    json!({
        "endpoint": endpoint(client).base_url,
        "concurrency": client.concurrency,
        "max_tokens": client.max_tokens,
        "max_attempts": client.max_attempts,
        "retry_base_ms": client.retry_base_ms,
    })
}

pub struct Generation {
    pub outcome: DescribeOutcome,
    pub interrupted: bool,
}

/// Fetches a description for every query, from the cache when possible.
pub fn run(
    queries: &[QueryTriplet],
    images: &Path,
    cache: Arc<DescriptionCache>,
    model: &str,
    client: &ClientArgs,
    threads: Option<usize>,
) -> CliResult<Generation> {
    install_interrupt_handler();
    let cot = CotClient::new(endpoint(client), cache)
        .with_concurrency(client.concurrency)
        .with_retry(RetryPolicy {
            max_attempts: client.max_attempts,
            base_delay: Duration::from_millis(client.retry_base_ms),
            factor: 2.0,
        });
    let images = ImageDir::new(images);
    let outcome = describe_queries(queries, threads, Some(&CANCEL), |q| {
        let image = images.load(&q.reference_id)?;
        let req = CotRequest::new(image, q.modification_text.clone(), model).with_max_tokens(client.max_tokens);
        cot.generate(&q.query_id, &req)
    })?;
    Ok(Generation {
        outcome,
        interrupted: CANCEL.load(Ordering::SeqCst),
    })
}

/// Prints the accounting line and the failed ids; returns the exit code.
pub fn report(generation: &Generation) -> i32 {
    let o = &generation.outcome;
    println!(
        "calls={} hits={} failed={} http_attempts={}",
        o.stats.mllm_calls,
        o.cache_hits(),
        o.failures.len(),
        o.stats.http_attempts
    );
    for (id, why) in &o.failures {
        eprintln!("failed {id}: {why}");
    }
    if generation.interrupted {
        error::INTERRUPTED
    } else if o.failures.is_empty() {
        0
    } else {
        error::PARTIAL_GENERATION
    }
}

pub fn generate(args: &GenerateArgs) -> CliResult<i32> {
    let queries = load_queries(&args.queries)?;
    let cache = Arc::new(DescriptionCache::open(&args.cache)?);
    let mut manifest = RunManifest::start(
        "generate",
        json!({
            "queries": args.queries,
            "images": args.images,
            "cache": args.cache,
            "model": args.model,
            "client": client_config(&args.client),
            "threads": args.threads,
        }),
    );
    let generation = run(&queries, &args.images, cache, &args.model, &args.client, args.threads)?;
    let code = report(&generation);
    manifest.outputs.push(args.cache.display().to_string());
    let o = &generation.outcome;
    manifest.summary = json!({
        "mllm_calls": o.stats.mllm_calls,
        "cache_hits": o.cache_hits(),
        "http_attempts": o.stats.http_attempts,
        "failed_queries": o.failures.keys().collect::<Vec<_>>(),
        "interrupted": generation.interrupted,
    });
    manifest.finish(&beside(&args.cache), code)?;
    Ok(code)
}
