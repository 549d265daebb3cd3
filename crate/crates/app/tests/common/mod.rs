#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bridge_vae::dataset::{animate_frames, CanvasSize, Subtype};
use bridge_vae::latent::{centroids, embed_images, CentroidFile};
use bridge_vae::model::{ArchitectureProfile, ModelCheckpoint, TrainingMetadata, Vae};
use bridge_vae::Image;

pub const SUBTYPES: [Subtype; 2] = [Subtype::ArchTopBear, Subtype::CableHarpShaped];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bridgevae")
}

/// An untrained desk-size checkpoint with usable statistics, plus a
/// centroid table over a few renders of two subtypes.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub checkpoint: PathBuf,
    pub centroids: PathBuf,
    pub id: String,
}

pub fn fixture() -> Fixture {
    fixture_with_seed(5)
}

pub fn fixture_with_seed(seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let vae = Vae::<f32>::new(ArchitectureProfile::desk(), seed).unwrap();
    let ckpt = ModelCheckpoint::from_model(&vae, TrainingMetadata::default());
    let checkpoint = dir.path().join("desk.ckpt");
    ckpt.save(&checkpoint).unwrap();
    let id = ckpt.id();
    let vae = ckpt.to_model().unwrap();

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for s in SUBTYPES {
        for img in animate_frames(s, CanvasSize::DESK)
            .unwrap()
            .into_iter()
            .step_by(4)
        {
            images.push(img);
            labels.push(s.label());
        }
    }
    let table = embed_images(&vae, &Image::stack(&images).unwrap(), &labels, &id).unwrap();
    let c = centroids(&table, &table.labels()).unwrap();
    let centroids = dir.path().join("centroids.json");
    CentroidFile::new(&id, &c)
        .unwrap()
        .save(&centroids)
        .unwrap();
    Fixture {
        dir,
        checkpoint,
        centroids,
        id,
    }
}

pub fn png_size(bytes: &[u8]) -> (u32, u32) {
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
    (w, h)
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
