use crate::dataio::mask::load_mask;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// One sample in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub split: Split,
    pub source: String,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Allocate `n` items to the three splits by largest remainder.
fn split_counts(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let ratios = [ratios.0, ratios.1, ratios.2];
    let mut counts = [0usize; 3];
    let mut fractions = [(0.0f64, 0usize); 3];
    let mut assigned = 0;
    for i in 0..3 {
        let exact = n as f64 * ratios[i];
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        fractions[i] = (exact - exact.floor(), i);
    }
    // Ties go to the earlier split (train, then val, then test).
    fractions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, idx) in fractions.iter().take(n - assigned) {
        counts[idx] += 1;
    }
    counts
}

/// Scan a dataset root laid out as `<root>/images/*.{png,jpg}` with matching
/// `<root>/masks/<name>.png`, validate that every image and mask loads, and
/// assign splits with a seeded shuffle and largest-remainder rounding.
pub fn build_manifest(
    root: &Path,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Vec<ImageRecord>> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    if ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::invalid("split ratios must be nonnegative"));
    }
    let images_dir = root.join("images");
    let masks_dir = root.join("masks");
    if !images_dir.is_dir() {
        return Err(Error::invalid(format!(
            "missing images directory {}",
            images_dir.display()
        )));
    }
    if !masks_dir.is_dir() {
        return Err(Error::invalid(format!(
            "missing masks directory {}",
            masks_dir.display()
        )));
    }
    let source = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    let mut image_paths: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(&images_dir).map_err(|e| Error::io(&images_dir, e))? {
        let entry = entry.map_err(|e| Error::io(&images_dir, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            image_paths.push(path);
        }
    }
    if image_paths.is_empty() {
        return Err(Error::invalid(format!(
            "no images found under {}",
            images_dir.display()
        )));
    }
    image_paths.sort();

    let mut pairs: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(image_paths.len());
    for image_path in image_paths {
        let stem = image_path
            .file_stem()
            .ok_or_else(|| Error::invalid(format!("bad file name {}", image_path.display())))?;
        let mask_path = masks_dir.join(Path::new(stem)).with_extension("png");
        if !mask_path.is_file() {
            return Err(Error::invalid(format!(
                "missing mask for labeled image {}: expected {}",
                image_path.display(),
                mask_path.display()
            )));
        }
        // Validate both sides now so a bad pair fails at manifest time.
        let img = image::open(&image_path).map_err(|e| Error::image(&image_path, e))?;
        let mask = load_mask(&mask_path)?;
        if (img.height() as usize, img.width() as usize) != (mask.height(), mask.width()) {
            return Err(Error::shape(format!(
                "{} is {}x{} but its mask is {}x{}",
                image_path.display(),
                img.height(),
                img.width(),
                mask.height(),
                mask.width()
            )));
        }
        pairs.push((image_path, mask_path));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let counts = split_counts(pairs.len(), ratios);

    let mut records = Vec::with_capacity(pairs.len());
    for (i, (image, mask)) in pairs.into_iter().enumerate() {
        let split = if i < counts[0] {
            Split::Train
        } else if i < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
        records.push(ImageRecord {
            image,
            mask: Some(mask),
            split,
            source: source.clone(),
        });
    }
    Ok(records)
}

/// Write one JSON object per line with keys `image`, `mask`, `split`,
/// `source`.
pub fn write_manifest(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "manifest {} contains no records",
            path.display()
        )));
    }
    Ok(records)
}

#[cfg(test)]
pub(crate) fn split_counts_for_tests(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    split_counts(n, ratios)
}
