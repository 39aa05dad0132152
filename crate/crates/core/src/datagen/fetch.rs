use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ureq::Agent;

use crate::error::{Error, Result};

const TIMEOUT: Duration = Duration::from_secs(60);

fn agent() -> Agent {
    Agent::config_builder().timeout_global(Some(TIMEOUT)).build().into()
}

fn remote_size(agent: &Agent, url: &str) -> Option<u64> {
    let resp = agent.head(url).call().ok()?;
    resp.headers()
        .get("content-length")?
        .to_str()
        .ok()?
        .trim()
        .parse()
        .ok()
}

fn partial_path(dest: &Path) -> PathBuf {
    let mut name: OsString = dest.file_name().map(OsString::from).unwrap_or_else(|| "download".into());
    name.push(".part");
    dest.with_file_name(name)
}

/// Download `url` to `destination`.
///
/// An existing non-empty destination is kept when the server does not
/// report a different size (or cannot be reached). The body is streamed to
/// a sibling `.part` file and renamed into place, so a failed download never
/// leaves a truncated file at `destination`.
pub fn fetch_dataset(url: &str, destination: impl AsRef<Path>) -> Result<PathBuf> {
    let dest = destination.as_ref().to_path_buf();
    let agent = agent();

    if let Ok(meta) = fs::metadata(&dest) {
        if meta.is_file() && meta.len() > 0 {
            match remote_size(&agent, url) {
                Some(size) if size != meta.len() => {}
                _ => return Ok(dest),
            }
        }
    }

    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let part = partial_path(&dest);
    let result = (|| -> Result<()> {
        let mut resp = agent.get(url).call().map_err(|e| Error::Network(e.to_string()))?;
        let mut file = fs::File::create(&part)?;
        io::copy(&mut resp.body_mut().as_reader(), &mut file)
            .map_err(|e| Error::Network(format!("reading response body: {e}")))?;
        file.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&part, &dest)?;
            Ok(dest)
        }
        Err(e) => {
            let _ = fs::remove_file(&part);
            Err(e)
        }
    }
}
