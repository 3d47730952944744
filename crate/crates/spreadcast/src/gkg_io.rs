//! Reading GKG files (plain or zip-compressed) from disk.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use spreadcast_core::gkg::{parse_gkg_record, ParsedRecord};

use crate::error::{Error, Result};

/// Records of one GKG file plus the lines that failed to parse.
#[derive(Debug, Default)]
pub struct GkgFile {
    pub records: Vec<ParsedRecord>,
    /// `(1-based line number, error)` for every rejected line.
    pub errors: Vec<(usize, spreadcast_core::Error)>,
}

/// Parse tab-delimited GKG text, one record per non-empty line.
pub fn parse_gkg_text(text: &str) -> GkgFile {
    let mut out = GkgFile::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match parse_gkg_record(line) {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push((i + 1, e)),
        }
    }
    out
}

/// Read a `.csv` GKG file or a `.zip` archive holding one or more of them.
pub fn read_gkg_file(path: &Path) -> Result<GkgFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let is_zip = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("zip"));
    if !is_zip {
        return Ok(parse_gkg_text(&String::from_utf8_lossy(&bytes)));
    }
    let mut archive =
        zip::ZipArchive::new(std::io::Cursor::new(bytes)).map_err(|e| Error::format(path, e))?;
    let mut out = GkgFile::default();
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(|e| Error::format(path, e))?;
        if entry.is_dir() {
            continue;
        }
        let mut buf = Vec::new();
        entry.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
        let part = parse_gkg_text(&String::from_utf8_lossy(&buf));
        out.records.extend(part.records);
        out.errors.extend(part.errors);
    }
    Ok(out)
}

/// GKG files (`*.csv`, `*.zip`) in `dir`, sorted by name.
pub fn list_gkg_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'))
                && p.extension().is_some_and(|e| {
                    e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("zip")
                })
        })
        .collect();
    out.sort();
    Ok(out)
}
