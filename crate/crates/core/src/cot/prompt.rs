use sha2::{Digest, Sha256};

use super::CotError;

/// Bumped whenever the template text changes, so cached descriptions made
/// with an older template stop matching.
pub const TEMPLATE_VERSION: &str = "selective-cot/1";

/// Keys of the staged JSON answer, in the order the stages run.
pub const STAGE_KEYS: [&str; 4] = [
    "modified_targets",
    "extracted_visual_content",
    "modification_intent",
    "applied_modification",
];

pub const DESCRIPTION_KEY: &str = "target_description";

const PREAMBLE: &str = "\
You are given a reference image and a modification text. Work out what the \
target image looks like after the modification is applied to the reference \
image. Go through the four stages below in order.";

const STAGES: [&str; 4] = [
    "1. Reference image understanding. First read the modification text and list the \
explicit modified targets (objects or attributes it names directly) and the implicit \
modified targets (objects or attributes it implies without naming). Then look at the \
reference image and extract only the visual content that relates to those targets. \
Skip background and details the modification does not touch. Example: extract \
a peacock, two people (legs visible), and a grassy area, rather than the background, \
when those are what the modification concerns.",
    "2. Modification text understanding. State the modification intent: what has to be \
added, removed or changed.",
    "3. Applying modification. Apply the modifications step by step to the extracted \
visual content.",
    "4. Target image description generation. Write one concise description of the \
target image that would work as an image search query.",
];

const ANSWER_FORMAT: &str = "\
Reply with one JSON object and nothing else, using exactly these keys:
{\"modified_targets\": \"...\", \"extracted_visual_content\": \"...\", \
\"modification_intent\": \"...\", \"applied_modification\": \"...\", \
\"target_description\": \"...\"}";

/// Renders the selective chain-of-thought instruction for one query.
pub fn build_prompt(modification_text: &str) -> Result<String, CotError> {
    let text = modification_text.trim();
    if text.is_empty() {
        return Err(CotError::EmptyModificationText);
    }
    let mut out = String::with_capacity(1800 + text.len());
    out.push_str(PREAMBLE);
    out.push_str("\n\n");
    for stage in STAGES {
        out.push_str(stage);
        out.push('\n');
    }
    out.push('\n');
    out.push_str(ANSWER_FORMAT);
    out.push_str("\n\nModification text: ");
    out.push_str(text);
    Ok(out)
}

/// Stable digest identifying a generation request.
///
/// Covers the template version, the image bytes, the modification text and
/// the model. Fields are length-prefixed so no two inputs collide by
/// concatenation.
pub fn prompt_hash(image: &[u8], modification_text: &str, model: &str) -> String {
    let image_digest = Sha256::digest(image);
    let mut h = Sha256::new();
    for part in [
        TEMPLATE_VERSION.as_bytes(),
        image_digest.as_slice(),
        modification_text.as_bytes(),
        model.as_bytes(),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}
