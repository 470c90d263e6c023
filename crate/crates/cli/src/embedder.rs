//! Text embedding through an external embedder process.

use std::io::Write;
use std::process::Command;

use sdr_cir::EmbeddingStore;
use serde::Serialize;

use crate::error::{CliResult, Failure, OTHER};

#[derive(Serialize)]
struct TextLine<'a> {
    id: &'a str,
    text: &'a str,
}

pub struct Embedder {
    program: String,
    args: Vec<String>,
    model: String,
}

impl Embedder {
    /// `command` is split shell-style, so `"python -m sdr_embedder"` works.
    pub fn new(command: &str, model: &str) -> CliResult<Self> {
        let mut words = shlex::split(command)
            .ok_or_else(|| Failure::usage(format!("cannot parse embedder command {command:?}")))?;
        if words.is_empty() {
            return Err(Failure::usage("embedder command is empty"));
        }
        let program = words.remove(0);
        Ok(Self {
            program,
            args: words,
            model: model.to_string(),
        })
    }

    /// Embeds `(id, text)` pairs and returns the store the embedder wrote.
    pub fn embed_texts<'a, I>(&self, what: &str, texts: I) -> CliResult<EmbeddingStore>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let dir = tempfile::tempdir().map_err(|e| Failure::new(crate::error::IO, format!("scratch directory: {e}")))?;
        let input = dir.path().join(format!("{what}.jsonl"));
        let output = dir.path().join(format!("{what}.sdre"));
        {
            let mut f = std::fs::File::create(&input).map_err(|e| Failure::io(&input, e))?;
            for (id, text) in texts {
                let line = serde_json::to_string(&TextLine { id, text }).expect("text lines serialize");
                writeln!(f, "{line}").map_err(|e| Failure::io(&input, e))?;
            }
        }
        log::info!("embedding {what} with {} ({})", self.program, self.model);
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg("embed-texts")
            .arg("--model")
            .arg(&self.model)
            .arg("--in")
            .arg(&input)
            .arg("--out")
            .arg(&output)
            .status()
            .map_err(|e| Failure::new(OTHER, format!("cannot run embedder {:?}: {e}", self.program)))?;
        if !status.success() {
            return Err(Failure::new(
                OTHER,
                format!("embedder exited with {status} while embedding {what}"),
            ));
        }
        Ok(EmbeddingStore::ingest(&output)?)
    }
}
