//! The labeled bridge-facade dataset: rendering, augmentation, the on-disk
//! layout and its manifest.
//!
//! Each subtype contributes 16 animation frames × 75 augmentations = 1200
//! images, 9600 in total. Images are written as 8-bit grayscale PNGs under
//! `<out_dir>/<subtype name>/<frame>_<rot>_<hs>_<vs>.png` and indexed by
//! `manifest.json`.

mod augment;
mod render;
mod subtype;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{augment, AugmentParams, HSCALE_RANGE, ROTATIONS_DEG, SCALE_STEPS, VSCALE_RANGE};
pub use render::{
    animate_frames, member_width, render_bridge, BridgeRenderSpec, CanvasSize, FRAMES,
    MARGIN_METERS, WINDOW_METERS,
};
pub use subtype::{label_dictionary, Subtype, NUM_SUBTYPES};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const RENDERER_VERSION: &str = "procedural-facade/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_PER_SUBTYPE: usize = FRAMES * 75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u8,
    pub subtype: Subtype,
    pub frame: usize,
    pub rotation_deg: f64,
    pub hscale: f64,
    pub vscale: f64,
}

impl ManifestEntry {
    pub fn augment_params(&self) -> AugmentParams {
        AugmentParams {
            rotation_deg: self.rotation_deg,
            hscale: self.hscale,
            vscale: self.vscale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub label_dictionary: BTreeMap<String, u8>,
    pub seed: u64,
    pub renderer_version: String,
    pub canvas: CanvasSize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn label_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path(path.as_ref());
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Accepts either a dataset directory or the manifest file itself.
fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// What to generate. The default is the complete full-resolution dataset.
#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub canvas: CanvasSize,
    pub subtypes: Vec<Subtype>,
    /// Keep only this many images per subtype, chosen by the seed.
    pub per_subtype: Option<usize>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            canvas: CanvasSize::FULL,
            subtypes: Subtype::ALL.to_vec(),
            per_subtype: None,
        }
    }
}

pub fn image_file_name(frame: usize, p: &AugmentParams) -> String {
    format!(
        "{frame:02}_{:.1}_{:.4}_{:.3}.png",
        p.rotation_deg, p.hscale, p.vscale
    )
}

/// Entries for one subtype in canonical order: frame, then augmentation grid.
fn subtype_entries(subtype: Subtype) -> Vec<ManifestEntry> {
    let grid = AugmentParams::grid();
    let mut out = Vec::with_capacity(IMAGES_PER_SUBTYPE);
    for frame in 0..FRAMES {
        for p in &grid {
            out.push(ManifestEntry {
                path: format!("{}/{}", subtype.name(), image_file_name(frame, p)),
                label: subtype.label(),
                subtype,
                frame,
                rotation_deg: p.rotation_deg,
                hscale: p.hscale,
                vscale: p.vscale,
            });
        }
    }
    out
}

/// Plans the manifest without touching the filesystem.
pub fn plan_dataset(options: &DatasetOptions, seed: u64) -> Result<DatasetManifest> {
    let mut rng = Rng::new(seed);
    let mut entries = Vec::new();
    for &subtype in &options.subtypes {
        let mut all = subtype_entries(subtype);
        if let Some(keep) = options.per_subtype {
            if keep > all.len() {
                return Err(Error::InvalidArgument(format!(
                    "{keep} images requested per subtype, only {} exist",
                    all.len()
                )));
            }
            let mut idx: Vec<usize> = (0..all.len()).collect();
            rng.shuffle(&mut idx);
            let mut chosen = idx[..keep].to_vec();
            chosen.sort_unstable();
            all = chosen.into_iter().map(|i| all[i].clone()).collect();
        }
        entries.extend(all);
    }
    Ok(DatasetManifest {
        label_dictionary: label_dictionary(),
        seed,
        renderer_version: RENDERER_VERSION.to_string(),
        canvas: options.canvas,
        entries,
    })
}

/// Renders the base frames needed by `manifest`, keyed by (subtype, frame).
fn base_frames(manifest: &DatasetManifest) -> Result<BTreeMap<(Subtype, usize), Image>> {
    let mut keys: Vec<(Subtype, usize)> = manifest
        .entries
        .iter()
        .map(|e| (e.subtype, e.frame))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_par_iter()
        .map(|(s, f)| {
            let img = render_bridge(&BridgeRenderSpec::new(s, f, manifest.canvas)?)?;
            Ok(((s, f), img))
        })
        .collect()
}

/// Renders every manifest entry in memory, in manifest order.
pub fn render_entries(manifest: &DatasetManifest) -> Result<Vec<Image>> {
    let frames = base_frames(manifest)?;
    Ok(manifest
        .entries
        .par_iter()
        .map(|e| augment(&frames[&(e.subtype, e.frame)], &e.augment_params()))
        .collect())
}

/// Writes the PNGs and `manifest.json` under `out_dir`.
pub fn build_dataset(
    out_dir: impl AsRef<Path>,
    seed: u64,
    options: &DatasetOptions,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let manifest = plan_dataset(options, seed)?;
    for subtype in &options.subtypes {
        let dir = out_dir.join(subtype.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let frames = base_frames(&manifest)?;
    manifest.entries.par_iter().try_for_each(|e| {
        let img = augment(&frames[&(e.subtype, e.frame)], &e.augment_params());
        img.save_png(out_dir.join(&e.path))
    })?;
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Images as `N×H×W×1` in `[0, 1]` plus labels, in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            images: self.images.gather_batch(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

pub fn load_dataset(manifest_or_dir: impl AsRef<Path>) -> Result<(DatasetManifest, Dataset)> {
    let path = manifest_path(manifest_or_dir.as_ref());
    let manifest = DatasetManifest::load(&path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let CanvasSize { width, height } = manifest.canvas;
    let images: Vec<Image> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let file = root.join(&e.path);
            let bad = |reason: String| Error::DatasetEntry {
                path: file.clone(),
                reason,
            };
            let bytes = fs::read(&file).map_err(|err| bad(err.to_string()))?;
            let img = Image::from_png_bytes(&bytes).map_err(|err| bad(err.to_string()))?;
            if (img.width(), img.height()) != (width, height) {
                return Err(bad(format!(
                    "image is {}x{}, manifest canvas is {width}x{height}",
                    img.width(),
                    img.height()
                )));
            }
            Ok(img)
        })
        .collect::<Result<_>>()?;
    let labels = manifest.entries.iter().map(|e| e.label).collect();
    let images = if images.is_empty() {
        Tensor::zeros(vec![0, height, width, 1])
    } else {
        Image::stack(&images)?
    };
    Ok((manifest, Dataset { images, labels }))
}
