//! Versioned JSON envelopes for index files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::{DeserializeOwned, IgnoredAny};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    body: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[allow(dead_code)]
    body: IgnoredAny,
}

#[derive(Deserialize)]
struct Envelope<T> {
    body: T,
}

pub(crate) fn save<T: Serialize>(path: &Path, format: &str, version: u32, body: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut out, &EnvelopeRef { format, version, body })?;
    out.flush()?;
    Ok(())
}

pub(crate) fn load<T: DeserializeOwned>(path: &Path, format: &str, version: u32) -> Result<T> {
    let err = |message: String| Error::Load {
        path: path.to_owned(),
        message,
    };
    let raw = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let header: Header = serde_json::from_str(&raw).map_err(|e| err(format!("corrupt file: {e}")))?;
    if header.format != format {
        return Err(err(format!("expected a {format} file, found {}", header.format)));
    }
    if header.version != version {
        return Err(err(format!(
            "{format} version {} is not supported (expected {version})",
            header.version
        )));
    }
    let env: Envelope<T> = serde_json::from_str(&raw).map_err(|e| err(format!("corrupt file: {e}")))?;
    Ok(env.body)
}
