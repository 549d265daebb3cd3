//! Latent exploration: sampling grids, morph tracks, centroids and statistics.

use std::collections::{BTreeMap, BTreeSet};

use bridge_vae::dataset::{animate_frames, CanvasSize, Subtype};
use bridge_vae::latent::{
    boundary_grid, centroids, decode_points, embed_images, histogram, morph, scatter_dims,
    subtype_pairs, EmbeddingRow, EmbeddingTable, BOUNDARY_MAGNITUDES, DEFAULT_MORPH_STEPS,
};
use bridge_vae::model::{ArchitectureProfile, Vae};
use bridge_vae::{Image, Rng};
use bridge_vae_oracles as oracle;
use proptest::prelude::*;

fn model() -> Vae<f32> {
    let mut vae = Vae::new(ArchitectureProfile::desk(), 21).unwrap();
    vae.mark_statistics();
    vae
}

fn bits(img: &Image) -> Vec<u32> {
    img.pixels().iter().map(|v| v.to_bits()).collect()
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

#[test]
fn four_boundary_passes_of_256_corners() {
    let mut all = BTreeSet::new();
    for m in BOUNDARY_MAGNITUDES {
        let grid = boundary_grid(m, 8).unwrap();
        assert_eq!(grid.len(), 256);
        assert!(grid.iter().flatten().all(|&v| v == m || v == -m));
        let distinct: BTreeSet<Vec<u64>> = grid.iter().map(|p| key(p)).collect();
        assert_eq!(distinct.len(), 256, "magnitude {m}");
        all.extend(distinct);
    }
    assert_eq!(BOUNDARY_MAGNITUDES, [100.0, 5.0, 4.0, 3.0]);
    assert_eq!(all.len(), 1024);
}

#[test]
fn all_unordered_subtype_pairs() {
    let pairs = subtype_pairs();
    assert_eq!(pairs.len(), 28);
    let set: BTreeSet<(u8, u8)> = pairs
        .iter()
        .map(|&(a, b)| (a.label().min(b.label()), a.label().max(b.label())))
        .collect();
    assert_eq!(set.len(), 28);
    assert!(pairs.iter().all(|(a, b)| a != b));
}

fn render_set() -> (bridge_vae::Tensor<f32>, Vec<u8>) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for s in [
        Subtype::ArchBottomBear,
        Subtype::BeamThreeSpan,
        Subtype::CableFanShaped,
    ] {
        for img in animate_frames(s, CanvasSize::DESK)
            .unwrap()
            .into_iter()
            .step_by(3)
        {
            images.push(img);
            labels.push(s.label());
        }
    }
    (Image::stack(&images).unwrap(), labels)
}

#[test]
fn morph_endpoints_decode_exactly_like_the_centroids() {
    let vae = model();
    let (images, labels) = render_set();
    let table = embed_images(&vae, &images, &labels, "test").unwrap();
    let c = centroids(&table, &labels).unwrap();
    let a = &c[&Subtype::ArchBottomBear.label()];
    let b = &c[&Subtype::CableFanShaped.label()];
    let track = morph(&vae, a, b, DEFAULT_MORPH_STEPS).unwrap();
    assert_eq!(track.frames.len(), 11);
    let direct = decode_points(&vae, &[a.clone(), b.clone()]).unwrap();
    assert_eq!(bits(&track.frames[0]), bits(&direct[0]));
    assert_eq!(bits(&track.frames[10]), bits(&direct[1]));
    assert_eq!(
        track.points[5]
            .iter()
            .zip(a)
            .zip(b)
            .filter(|((m, x), y)| (**m - (*x + *y) / 2.0).abs() > 1e-12)
            .count(),
        0
    );
}

#[test]
fn decoding_does_not_depend_on_batching() {
    let vae = model();
    let mut rng = Rng::new(8);
    let points: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..8).map(|_| 3.0 * rng.normal()).collect())
        .collect();
    let together = decode_points(&vae, &points).unwrap();
    for (p, img) in points.iter().zip(&together).step_by(7) {
        let alone = decode_points(&vae, std::slice::from_ref(p)).unwrap();
        assert_eq!(bits(img), bits(&alone[0]));
    }
}

#[test]
fn embedding_is_deterministic_and_batch_independent() {
    let vae = model();
    let (images, labels) = render_set();
    let all = embed_images(&vae, &images, &labels, "x").unwrap();
    assert_eq!(all, embed_images(&vae, &images, &labels, "x").unwrap());
    let one = embed_images(&vae, &images.slice_batch(4, 5).unwrap(), &labels[4..5], "x").unwrap();
    assert_eq!(one.rows[0].z_mean, all.rows[4].z_mean);
}

fn table(rows: &[(u8, Vec<f64>)]) -> EmbeddingTable {
    EmbeddingTable {
        checkpoint_id: "t".into(),
        latent_dim: rows[0].1.len(),
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, (l, z))| EmbeddingRow {
                sample_id: i,
                label: *l,
                z_mean: z.clone(),
            })
            .collect(),
    }
}

fn labelled_rows() -> impl Strategy<Value = Vec<(u8, Vec<f64>)>> {
    (1usize..6).prop_flat_map(|d| {
        prop::collection::vec((0u8..4, prop::collection::vec(-10.0f64..10.0, d)), 1..40)
    })
}

proptest! {
    #[test]
    fn centroids_match_the_brute_force_mean(rows in labelled_rows(), seed in any::<u64>()) {
        let labels: Vec<u8> = rows.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
        let got = centroids(&table(&rows), &labels).unwrap();
        let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
        let row_labels: Vec<u8> = rows.iter().map(|r| r.0).collect();
        let expected = oracle::label_means(&vectors, &row_labels);
        prop_assert_eq!(got.keys().collect::<Vec<_>>(), expected.keys().collect::<Vec<_>>());
        for (l, c) in &got {
            prop_assert!(oracle::max_relative_error(c, &expected[l]) < 1e-12);
        }

        let mut shuffled = rows.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let again = centroids(&table(&shuffled), &labels).unwrap();
        for (l, c) in &got {
            prop_assert!(oracle::max_relative_error(c, &again[l]) < 1e-12);
        }
    }

    #[test]
    fn histogram_conserves_samples(values in prop::collection::vec(-1e3f64..1e3, 1..300), bins in 1usize..80) {
        let h = histogram(&values, bins).unwrap();
        prop_assert_eq!(h.counts.len(), bins);
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert_eq!(h.total(), values.len());
    }

    #[test]
    fn scatter_keeps_every_row(rows in labelled_rows()) {
        let t = table(&rows);
        prop_assume!(t.latent_dim >= 2);
        let pts = scatter_dims(&t, 0, t.latent_dim - 1).unwrap();
        prop_assert_eq!(pts.len(), rows.len());
        for (p, r) in pts.iter().zip(&rows) {
            prop_assert_eq!(p.x, r.1[0]);
            prop_assert_eq!(p.y, r.1[t.latent_dim - 1]);
        }
    }
}

/// Standard-normal samples land in each bin within five binomial standard
/// deviations of the reference curve.
#[test]
fn histogram_reference_tracks_normal_samples() {
    let mut rng = Rng::new(17);
    let n = 20_000;
    let values: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let h = histogram(&values, 50).unwrap();
    for i in 0..50 {
        let center = 0.5 * (h.edges[i] + h.edges[i + 1]);
        let width = h.edges[i + 1] - h.edges[i];
        let expected = oracle::normal_pdf(center, 0.0, 1.0) * n as f64 * width;
        assert!((h.reference[i] - expected).abs() < 1e-9 * (1.0 + expected));
        let p = expected / n as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
        let diff = (h.counts[i] as f64 - expected).abs();
        assert!(
            diff < 5.0 * sigma + 1.0,
            "bin {i}: {} vs {expected:.1}",
            h.counts[i]
        );
    }
}

#[test]
fn centroid_of_missing_label_is_an_error() {
    let t = table(&[(1, vec![0.0, 1.0])]);
    assert!(centroids(&t, &[1, 2]).is_err());
    let ok: BTreeMap<u8, Vec<f64>> = centroids(&t, &[1]).unwrap();
    assert_eq!(ok[&1], vec![0.0, 1.0]);
}
