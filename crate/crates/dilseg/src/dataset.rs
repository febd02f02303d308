//! Dataset directories: `NNNN_img.dls`, `NNNN_lbl.dls` and `manifest.txt`
//! (one `id seed split` line per sample, `#` comments allowed).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dilseg_core::phantom::{Sample, SplitKind};

use crate::container::{read_file, write_file, Container};
use crate::error::{IoError, IoResult};
use crate::pgm;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub splits: Vec<SplitKind>,
}

impl Dataset {
    pub fn split(&self, kind: SplitKind) -> Vec<Sample> {
        self.samples.iter().zip(&self.splits).filter(|(_, k)| **k == kind).map(|(s, _)| s.clone()).collect()
    }

    pub fn count(&self, kind: SplitKind) -> usize {
        self.splits.iter().filter(|k| **k == kind).count()
    }
}

pub fn image_path(dir: &Path, id: usize) -> PathBuf {
    dir.join(format!("{:04}_img.dls", id))
}

pub fn label_path(dir: &Path, id: usize) -> PathBuf {
    dir.join(format!("{:04}_lbl.dls", id))
}

/// Writes samples, their split assignment and optional PGM previews.
pub fn write_dataset(dir: &Path, samples: &[Sample], splits: &[SplitKind], pgm_preview: bool) -> IoResult<()> {
    if samples.len() != splits.len() {
        return Err(IoError::Format(format!("{} samples but {} split tags", samples.len(), splits.len())));
    }
    fs::create_dir_all(dir).map_err(|e| IoError::Path(dir.display().to_string(), e))?;
    let mut manifest = String::from("# id seed split\n");
    for (s, k) in samples.iter().zip(splits) {
        write_file(&image_path(dir, s.index), &Container::from_tensor(&s.image))?;
        write_file(&label_path(dir, s.index), &Container::from_labels(&s.labels))?;
        if pgm_preview {
            pgm::write_image(&dir.join(format!("{:04}_img.pgm", s.index)), &s.image)?;
            pgm::write_labels(&dir.join(format!("{:04}_lbl.pgm", s.index)), &s.labels)?;
        }
        writeln!(manifest, "{:04} {} {}", s.index, s.seed, k.name()).expect("string write");
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| IoError::Path(path.display().to_string(), e))
}

pub fn read_manifest(dir: &Path) -> IoResult<Vec<(usize, u64, SplitKind)>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| IoError::Path(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || IoError::Format(format!("{} line {}: expected `id seed split`, got {:?}", path.display(), i + 1, raw));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad());
        }
        let id = fields[0].parse().map_err(|_| bad())?;
        let seed = fields[1].parse().map_err(|_| bad())?;
        let split = SplitKind::from_name(fields[2]).ok_or_else(bad)?;
        out.push((id, seed, split));
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> IoResult<Dataset> {
    let entries = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(entries.len());
    let mut splits = Vec::with_capacity(entries.len());
    for (id, seed, split) in entries {
        let image = read_file(&image_path(dir, id))?.into_tensor()?;
        let labels = read_file(&label_path(dir, id))?.into_labels()?;
        let s = image.shape();
        if s.n() != 1 || s.c() != 1 || s.h() != labels.height() || s.w() != labels.width() {
            return Err(IoError::Format(format!(
                "sample {:04}: image {} does not match {}x{} labels",
                id,
                s,
                labels.height(),
                labels.width()
            )));
        }
        samples.push(Sample { index: id, seed, image, labels });
        splits.push(split);
    }
    Ok(Dataset { samples, splits })
}
