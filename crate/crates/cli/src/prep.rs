use clap::ValueEnum;
use sdr_cir::eval::queries::to_json_lines;
use sdr_cir::eval::{convert_native, NativeFormat};
use sdr_cir::EmbeddingStore;
use serde_json::json;

use crate::args::{ConvertArgs, DatasetArg, IngestArgs};
use crate::error::{CliResult, Failure};
use crate::manifest::{beside, RunManifest};

pub fn ingest(args: &IngestArgs) -> CliResult<i32> {
    let store = EmbeddingStore::ingest(&args.file)?;
    println!(
        "dim={} count={} norm_warnings={}",
        store.dim(),
        store.len(),
        store.norm_warnings()
    );
    if let Some(out) = &args.out {
        let mut manifest = RunManifest::start("ingest", json!({ "file": args.file, "out": out }));
        manifest.emit(out, &store.to_bytes())?;
        manifest.finish(&beside(out), 0)?;
    }
    Ok(0)
}

pub fn convert(args: &ConvertArgs) -> CliResult<i32> {
    if args.category.is_some() && args.format != DatasetArg::Fashioniq {
        return Err(Failure::usage("--category only applies to --format fashioniq"));
    }
    let format = match args.format {
        DatasetArg::Cirr => NativeFormat::Cirr,
        DatasetArg::Circo => NativeFormat::Circo,
        DatasetArg::Fashioniq => NativeFormat::FashionIq {
            category: args.category.clone(),
        },
    };
    let text = std::fs::read_to_string(&args.input).map_err(|e| Failure::io(&args.input, e))?;
    let queries = convert_native(&text, &format)?;

    let mut manifest = RunManifest::start(
        "convert",
        json!({
            "format": args.format.to_possible_value().map(|v| v.get_name().to_string()),
            "category": args.category,
            "in": args.input,
            "out": args.out,
        }),
    );
    manifest.emit(&args.out, to_json_lines(&queries).as_bytes())?;
    manifest.finish(&beside(&args.out), 0)?;
    println!("queries={}", queries.len());
    Ok(0)
}
