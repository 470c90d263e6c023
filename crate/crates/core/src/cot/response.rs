//! Extraction of the staged JSON answer from an assistant message.

use std::collections::BTreeMap;

use serde_json::Value;

use super::prompt::{DESCRIPTION_KEY, STAGE_KEYS};
use super::CotError;

/// The parsed answer: one entry per reasoning stage plus the final description.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedAnswer {
    pub stages: BTreeMap<String, String>,
    pub description: String,
}

/// Parses an assistant message into a [`StagedAnswer`].
///
/// Code fences are stripped, then the first balanced `{...}` that parses as a
/// JSON object is used. Prose without such an object is an error; the raw
/// text is never used as a description.
pub fn parse_staged_answer(text: &str) -> Result<StagedAnswer, CotError> {
    let body = strip_fences(text);
    let obj = first_json_object(body)
        .ok_or_else(|| CotError::MalformedResponse("no JSON object in assistant message".into()))?;

    let mut stages = BTreeMap::new();
    for key in STAGE_KEYS {
        let v = obj
            .get(key)
            .ok_or_else(|| CotError::MalformedResponse(format!("missing stage {key:?}")))?;
        stages.insert(key.to_string(), stage_text(v));
    }
    let description = match obj.get(DESCRIPTION_KEY) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(Value::String(_)) => return Err(CotError::MalformedResponse("empty target_description".into())),
        Some(_) => return Err(CotError::MalformedResponse("target_description is not a string".into())),
        None => return Err(CotError::MalformedResponse("missing target_description".into())),
    };
    Ok(StagedAnswer { stages, description })
}

// Models sometimes answer a stage with a list or an object; keep it as JSON text.
fn stage_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Returns the contents of the first fenced block, or `text` unchanged.
fn strip_fences(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    // Skip the info string ("json", "JSON", ...) up to the end of the line.
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

fn first_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        if let Some(close) = balanced_end(bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str(&text[open..=close]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

/// Index of the `}` closing the object opened at `open`, honoring strings.
fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Pulls the assistant text out of a chat-completions response body.
pub fn assistant_text(body: &str) -> Result<String, CotError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| CotError::MalformedResponse(format!("response body is not JSON: {e}")))?;
    let content = v
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .ok_or_else(|| CotError::MalformedResponse("no choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some hosts return content as a list of typed parts.
        Value::Array(parts) => {
            let text: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if text.is_empty() {
                Err(CotError::MalformedResponse("content has no text parts".into()))
            } else {
                Ok(text.join(""))
            }
        }
        _ => Err(CotError::MalformedResponse("content is not text".into())),
    }
}
