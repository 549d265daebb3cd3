//! Seeded reproducibility and batch-norm output statistics.

use bridge_vae::dataset::{animate_frames, CanvasSize, Subtype};
use bridge_vae::model::{train, ArchitectureProfile, TrainConfig, Vae};
use bridge_vae::tensor::layers::{dropout, BatchNorm, BatchNormConfig, Ctx, Layer, Mode};
use bridge_vae::{Image, Rng, Tensor};
use proptest::prelude::*;

fn channel_moments(y: &Tensor<f64>, c: usize) -> Vec<(f64, f64)> {
    (0..c)
        .map(|ch| {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(c).copied().collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            (
                mean,
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// With epsilon in the denominator the output variance is `v/(v+ε)`,
    /// within 1e-4 of one once the input variance exceeds 10.
    #[test]
    fn batch_norm_standardizes_each_channel(
        seed in any::<u64>(),
        n in 4usize..8,
        hw in 16usize..20,
        c in 1usize..4,
        scale in 4.0f64..50.0,
        shift in -20.0f64..20.0,
    ) {
        prop_assume!(n * hw * hw >= 1024);
        let mut rng = Rng::new(seed);
        let x = Tensor::from_fn(vec![n, hw, hw, c], |_| rng.normal() * scale + shift);
        let mut bn = BatchNorm::<f64>::new("bn", c, BatchNormConfig::default());
        let y = bn.forward(&x, &mut Ctx::new(Mode::Train, &mut rng)).unwrap();
        let input = channel_moments(&x, c);
        for (ch, (mean, var)) in channel_moments(&y, c).into_iter().enumerate() {
            prop_assert!(mean.abs() < 1e-5, "mean {mean}");
            let v = input[ch].1;
            prop_assert!((var - v / (v + 1e-3)).abs() < 1e-9, "var {var}");
            prop_assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn dropout_masks_repeat_under_a_seed(seed in any::<u64>(), len in 1usize..500) {
        let x = Tensor::<f32>::full(vec![1, len], 1.0);
        let a = dropout(&x, 0.25, Mode::Train, &mut Rng::new(seed)).unwrap();
        let b = dropout(&x, 0.25, Mode::Train, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Unit-variance input with the default epsilon: the shortfall is ε/(1+ε).
#[test]
fn batch_norm_unit_variance_shortfall() {
    let mut rng = Rng::new(3);
    let x = Tensor::from_fn(vec![8, 16, 16, 1], |_| rng.normal());
    let mut bn = BatchNorm::<f64>::new("bn", 1, BatchNormConfig::default());
    let y = bn
        .forward(&x, &mut Ctx::new(Mode::Train, &mut rng))
        .unwrap();
    let v = channel_moments(&x, 1)[0].1;
    let var = channel_moments(&y, 1)[0].1;
    assert!((var - v / (v + 1e-3)).abs() < 1e-12);
    assert!((1.0 - var) > 5e-4);
}

fn small_set() -> Tensor<f32> {
    let mut imgs = animate_frames(Subtype::ArchTopBear, CanvasSize::DESK).unwrap();
    imgs.truncate(3);
    imgs.extend(
        animate_frames(Subtype::SuspensionVerticalSling, CanvasSize::DESK)
            .unwrap()
            .into_iter()
            .take(3),
    );
    Image::stack(&imgs).unwrap()
}

fn run(threads: usize) -> (Vec<u64>, Vec<u32>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let mut vae = Vae::new(ArchitectureProfile::desk(), 4).unwrap();
        let config = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let history = train(&mut vae, &small_set(), &config).unwrap();
        let losses = history
            .steps
            .iter()
            .map(|s| s.total_loss.to_bits())
            .collect();
        let params = vae
            .params()
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
            .collect();
        (losses, params)
    })
}

#[test]
fn training_repeats_bit_for_bit() {
    let first = run(1);
    assert_eq!(first.0.len(), 4);
    assert_eq!(first, run(1));
}

#[test]
fn thread_count_does_not_change_training() {
    assert_eq!(run(1), run(3));
}

#[test]
fn different_seeds_diverge() {
    let mut a = Vae::<f32>::new(ArchitectureProfile::desk(), 1).unwrap();
    let b = Vae::<f32>::new(ArchitectureProfile::desk(), 2).unwrap();
    assert_ne!(a.params()[0].value, b.params()[0].value);
    let x = small_set();
    let config = |seed| TrainConfig {
        epochs: 1,
        batch_size: 6,
        seed,
        ..TrainConfig::default()
    };
    let h1 = train(&mut a, &x, &config(1)).unwrap();
    let mut c = Vae::<f32>::new(ArchitectureProfile::desk(), 1).unwrap();
    let h2 = train(&mut c, &x, &config(2)).unwrap();
    assert_ne!(h1.steps[0].total_loss, h2.steps[0].total_loss);
}

/// Per-channel moments of each batch-norm input and output over the whole
/// set, run through the trunk one layer at a time in inference mode.
fn trunk_norm_moments(vae: &Vae<f32>, x: &Tensor<f32>) -> Vec<Vec<((f64, f64), (f64, f64))>> {
    let mut h = x.clone();
    let mut out = Vec::new();
    for layer in vae.encoder_trunk().layers() {
        let y = layer.infer(&h).unwrap();
        if layer.name().starts_with("batch_normalization") {
            let c = *y.shape().last().unwrap();
            let input = channel_moments(&h.cast::<f64>(), c);
            out.push(
                input
                    .into_iter()
                    .zip(channel_moments(&y.cast::<f64>(), c))
                    .collect(),
            );
        }
        h = y;
    }
    out
}

#[test]
fn recalibrated_statistics_normalize_the_calibration_set() {
    let x = small_set();
    let mut vae = Vae::<f32>::new(ArchitectureProfile::desk(), 12).unwrap();
    vae.recalibrate_statistics(&x, 4).unwrap();
    let moments = trunk_norm_moments(&vae, &x);
    assert!(!moments.is_empty());
    for (k, layer) in moments.iter().enumerate() {
        for &((_, v), (mean, var)) in layer {
            let expected = v / (v + 1e-3);
            assert!(mean.abs() < 1e-3, "layer {k}: mean {mean}");
            assert!(
                (var - expected).abs() < 1e-3 * (1.0 + expected),
                "layer {k}: var {var} vs {expected}"
            );
        }
    }

    let mut other = Vae::<f32>::new(ArchitectureProfile::desk(), 12).unwrap();
    other.recalibrate_statistics(&x, 5).unwrap();
    for (a, b) in vae.params().iter().zip(other.params()) {
        assert!(
            a.value
                .data()
                .iter()
                .zip(b.value.data())
                .all(|(p, q)| (p - q).abs() <= 1e-4 * (1.0 + p.abs())),
            "{}",
            a.name
        );
    }
}

#[test]
fn training_recalibrates_unless_asked_not_to() {
    let x = small_set();
    let run = |recalibrate_statistics| {
        let mut vae = Vae::<f32>::new(ArchitectureProfile::desk(), 4).unwrap();
        let config = TrainConfig {
            epochs: 1,
            batch_size: 3,
            seed: 2,
            recalibrate_statistics,
            ..TrainConfig::default()
        };
        train(&mut vae, &x, &config).unwrap();
        vae
    };
    let (kept, recalibrated) = (run(false), run(true));
    let stats = |v: &Vae<f32>| -> Vec<f32> {
        v.params()
            .iter()
            .filter(|p| !p.trainable)
            .flat_map(|p| p.value.data().to_vec())
            .collect()
    };
    assert_ne!(stats(&kept), stats(&recalibrated));
    let trainable = |v: &Vae<f32>| -> Vec<f32> {
        v.params()
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.value.data().to_vec())
            .collect()
    };
    assert_eq!(trainable(&kept), trainable(&recalibrated));
}
