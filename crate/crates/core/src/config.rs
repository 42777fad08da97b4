//! Strict TOML scenario configuration.
//!
//! Unknown keys and duplicate keys are rejected; absent keys take their
//! defaults. Every error names the offending field.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::ScenarioConfig;

/// Reads and validates a scenario configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => {
            return Err(Error::MissingInput {
                path: path.to_path_buf(),
            })
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let field = offending_field(text, &e).unwrap_or_else(|| "<document>".to_string());
        Error::config(field, e.message().trim().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

fn offending_field(text: &str, err: &toml::de::Error) -> Option<String> {
    let msg = err.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return Some(msg[start + 1..start + 1 + len].to_string());
        }
    }
    let span = err.span()?;
    let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[span.start..]
        .find('\n')
        .map_or(text.len(), |i| span.start + i);
    let line = &text[line_start..line_end];
    let key = line.split('=').next()?.trim();
    (!key.is_empty()).then(|| key.to_string())
}
