use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::culane::{parse_culane, resample_to_grid};
use super::tusimple::{parse_tusimple_file, record_lanes, TuSimpleRecord};
use crate::error::{LaneError, Result};
use crate::geometry::Point2;
use crate::repr::{ImageSpec, LanePolyline};

pub const CULANE_SUFFIX: &str = ".lines.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    /// A CULane `.lines.txt` file.
    File(PathBuf),
    /// A TuSimple JSON record.
    Inline(TuSimpleRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    /// Image path relative to the dataset root; also the key matching predictions to ground truth.
    pub image: PathBuf,
    pub annotation: Annotation,
    pub category: Option<String>,
}

/// Images and their annotations, in a stable order with unique image paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetIndex {
    entries: Vec<DatasetEntry>,
}

fn collect_files(dir: &Path, keep: &dyn Fn(&Path) -> bool, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, keep, out)?;
        } else if keep(&path) {
            out.push(path);
        }
    }
    Ok(())
}

fn duplicate(image: &Path) -> LaneError {
    LaneError::Parse {
        line: 0,
        message: format!("duplicate image path {}", image.display()),
    }
}

impl DatasetIndex {
    pub fn new(entries: Vec<DatasetEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(e) = entries.iter().find(|e| !seen.insert(e.image.clone())) {
            return Err(duplicate(&e.image));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every `*.lines.txt` below `root`, keyed by the sibling `.jpg` path.
    pub fn from_culane_dir(root: &Path) -> Result<Self> {
        let mut files = Vec::new();
        collect_files(
            root,
            &|p| p.to_string_lossy().ends_with(CULANE_SUFFIX),
            &mut files,
        )?;
        files.sort();
        let entries = files
            .into_iter()
            .map(|f| {
                let rel = f
                    .strip_prefix(root)
                    .unwrap_or(&f)
                    .to_string_lossy()
                    .into_owned();
                let stem = rel.strip_suffix(CULANE_SUFFIX).unwrap_or(&rel);
                DatasetEntry {
                    image: PathBuf::from(format!("{stem}.jpg")),
                    annotation: Annotation::File(f),
                    category: None,
                }
            })
            .collect();
        Self::new(entries)
    }

    /// Every record of every `*.json` file below `root` (or of `root` itself
    /// when it is a file), keyed by `raw_file`.
    pub fn from_tusimple(root: &Path) -> Result<Self> {
        let mut files = Vec::new();
        if root.is_file() {
            files.push(root.to_path_buf());
        } else {
            collect_files(
                root,
                &|p| p.extension().is_some_and(|e| e == "json"),
                &mut files,
            )?;
            files.sort();
        }
        let mut entries = Vec::new();
        for f in files {
            let text = std::fs::read_to_string(&f)?;
            for rec in parse_tusimple_file(&text)? {
                entries.push(DatasetEntry {
                    image: PathBuf::from(&rec.raw_file),
                    annotation: Annotation::Inline(rec),
                    category: None,
                });
            }
        }
        Self::new(entries)
    }

    /// Looks up an entry by image path.
    pub fn get(&self, image: &Path) -> Option<&DatasetEntry> {
        self.entries.iter().find(|e| e.image == image)
    }

    /// Lanes of every entry on the spec's row grid, parsed in parallel across files.
    pub fn load_lanes(&self, spec: &ImageSpec) -> Result<Vec<Vec<LanePolyline>>> {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let chunk = self.entries.len().div_ceil(threads).max(1);
        let parts: Vec<Result<Vec<Vec<LanePolyline>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .entries
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(|e| entry_lanes(e, spec)).collect()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("parser thread panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(self.entries.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// Lanes of one entry resampled onto the spec's row grid.
pub fn entry_lanes(entry: &DatasetEntry, spec: &ImageSpec) -> Result<Vec<LanePolyline>> {
    match &entry.annotation {
        Annotation::File(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_culane(&text, spec).map_err(|e| match e {
                LaneError::Parse { line, message } => LaneError::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })
        }
        Annotation::Inline(rec) => {
            let rows = spec.rows();
            let parsed = record_lanes(rec);
            Ok(parsed
                .lanes
                .iter()
                .filter_map(|l| {
                    let pts: Vec<Point2> = l
                        .valid_range()
                        .map(|i| Point2::new(l.xs()[i], parsed.h_samples[i]))
                        .collect();
                    resample_to_grid(&pts, &rows)
                })
                .collect())
        }
    }
}
