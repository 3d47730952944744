//! Download client for the public GKG 15-minute archives.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::Duration;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, TimeDelta};

use crate::error::{Error, Result};

/// Public location of the GKG 2.1 drops.
pub const DEFAULT_BASE_URL: &str = "http://data.gdeltproject.org/gdeltv2";

/// GKG archives are published every 15 minutes.
pub const SLOT_MINUTES: i64 = 15;

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub max_retries: u32,
    /// Delay before the first retry; doubled on each further attempt.
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
        }
    }
}

/// Outcome of a fetch over a date range. Slots the server reports as absent
/// (HTTP 404) are normal gaps in the GKG stream; `failed` lists slots that
/// could not be fetched after every retry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchReport {
    /// Local archives in chronological order (fresh and cached).
    pub paths: Vec<PathBuf>,
    pub downloaded: usize,
    pub cached: usize,
    pub not_published: Vec<String>,
    pub corrupt: Vec<String>,
    pub failed: Vec<String>,
}

impl FetchReport {
    /// Turn unfetched slots into an error naming the first of them.
    pub fn into_result(self) -> Result<Self> {
        match self.failed.first() {
            Some(first) => Err(Error::PartialDownload {
                missing: self.failed.len(),
                total: self.paths.len() + self.failed.len() + self.not_published.len() + self.corrupt.len(),
                first: first.clone(),
            }),
            None => Ok(self),
        }
    }
}

/// `YYYYMMDDHHMMSS` stamps of every 15-minute slot in the closed date range.
pub fn slot_stamps(from: NaiveDate, to: NaiveDate) -> Result<Vec<String>> {
    if to < from {
        return Err(Error::Config(format!("empty date range {from}..{to}")));
    }
    let start = NaiveDateTime::new(from, NaiveTime::MIN);
    let end = NaiveDateTime::new(to + TimeDelta::days(1), NaiveTime::MIN);
    let mut out = Vec::new();
    let mut t = start;
    while t < end {
        out.push(spreadcast_core::gkg::format_gkg_instant(&t));
        t += TimeDelta::minutes(SLOT_MINUTES);
    }
    Ok(out)
}

pub fn archive_name(stamp: &str) -> String {
    format!("{stamp}.gkg.csv.zip")
}

fn is_valid_zip(path: &Path) -> bool {
    fs::File::open(path)
        .ok()
        .and_then(|f| zip::ZipArchive::new(f).ok())
        .is_some_and(|a| !a.is_empty())
}

enum Attempt {
    Body(Vec<u8>),
    NotFound,
}

fn get_with_retry(agent: &ureq::Agent, url: &str, opts: &FetchOptions) -> Result<Attempt> {
    let mut delay = opts.initial_backoff;
    let mut last = String::new();
    for attempt in 0..=opts.max_retries {
        if attempt > 0 {
            log::debug!("retrying {url} in {delay:?} ({last})");
            sleep(delay);
            delay = (delay * 2).min(opts.max_backoff);
        }
        match agent.get(url).call() {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if status == 404 {
                    return Ok(Attempt::NotFound);
                }
                if status != 200 {
                    last = format!("status {status}");
                    continue;
                }
                let mut buf = Vec::new();
                match resp.body_mut().as_reader().read_to_end(&mut buf) {
                    Ok(_) => return Ok(Attempt::Body(buf)),
                    Err(e) => last = e.to_string(),
                }
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Http {
        url: url.to_string(),
        message: last,
    })
}

/// Download every GKG archive in `[from, to]` into `dest`, skipping archives
/// already present and valid. Downloads go to a temporary file that is
/// renamed into place, so an interrupted run never leaves a partial archive
/// behind; re-running is idempotent.
pub fn fetch_gkg_files(
    base_url: &str,
    from: NaiveDate,
    to: NaiveDate,
    dest: &Path,
    opts: &FetchOptions,
) -> Result<FetchReport> {
    fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(opts.timeout))
        .build()
        .into();
    let mut report = FetchReport::default();
    for stamp in slot_stamps(from, to)? {
        let name = archive_name(&stamp);
        let path = dest.join(&name);
        if path.exists() && is_valid_zip(&path) {
            report.cached += 1;
            report.paths.push(path);
            continue;
        }
        let url = format!("{}/{name}", base_url.trim_end_matches('/'));
        match get_with_retry(&agent, &url, opts) {
            Ok(Attempt::NotFound) => report.not_published.push(stamp),
            Ok(Attempt::Body(bytes)) => {
                let tmp = dest.join(format!(".{name}.part"));
                let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
                f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
                drop(f);
                if is_valid_zip(&tmp) {
                    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
                    report.downloaded += 1;
                    report.paths.push(path);
                } else {
                    log::warn!("skipping corrupt archive {url}");
                    let _ = fs::remove_file(&tmp);
                    report.corrupt.push(stamp);
                }
            }
            Err(e) => {
                log::warn!("{e}");
                report.failed.push(stamp);
            }
        }
    }
    Ok(report)
}
