//! Hand-computed loss and sampling examples, and the loss identities.

use bridge_vae::dataset::{animate_frames, CanvasSize, Subtype};
use bridge_vae::model::{
    kl_loss, kl_terms, reconstruction_loss, reparameterize, total_loss, BCE_EPSILON,
};
use bridge_vae::{Image, Tensor};
use proptest::prelude::*;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
}

#[test]
fn sampling_example() {
    let z = reparameterize(
        &t(&[1, 1], &[1.72]),
        &t(&[1, 1], &[-4.27]),
        &t(&[1, 1], &[3.0]),
    )
    .unwrap();
    let z = z.data()[0];
    // 1.72 + 3·e^(−2.135) = 2.07473…
    assert!((z - 2.0747).abs() < 1e-4, "{z}");
    // Printed to two decimals as 2.07.
    assert!((z - 2.07).abs() < 5e-3);
}

#[test]
fn reconstruction_example() {
    let y = t(&[1, 4], &[0.0, 0.1, 0.9, 1.0]);
    let y_hat = t(&[1, 4], &[0.0, 0.9, 0.99, 0.1]);
    let loss = reconstruction_loss(&y, &y_hat).unwrap();
    assert!((loss - 1.214).abs() < 1e-3, "{loss}");
}

#[test]
fn clamp_sets_the_per_pixel_extreme() {
    assert_eq!(BCE_EPSILON, 2e-7);
    let extreme = reconstruction_loss(&t(&[1, 1], &[1.0]), &t(&[1, 1], &[0.0])).unwrap();
    assert!((extreme - 15.4249).abs() < 1e-3, "{extreme}");
    let other_side = reconstruction_loss(&t(&[1, 1], &[0.0]), &t(&[1, 1], &[1.0])).unwrap();
    assert!((other_side - 15.4249).abs() < 1e-3, "{other_side}");
}

#[test]
fn kl_example() {
    let mean = t(&[1, 2], &[4.5, 3.3]);
    let log_var = t(&[1, 2], &[-3.3, -3.7]);
    let terms = kl_terms(&mean, &log_var).unwrap();
    assert!((terms[0] - 11.293).abs() < 1e-3, "{}", terms[0]);
    assert!((terms[1] - 6.807).abs() < 1e-3, "{}", terms[1]);
    let kl = kl_loss(&mean, &log_var).unwrap();
    assert!((kl - 9.050).abs() < 0.01, "{kl}");
    // The printed 9.1 follows both from the one-decimal terms,
    // (11.3 + 6.8) / 2 = 9.05 rounded half-up, and from the exact mean.
    assert_eq!(format!("{:.1}", (11.3 + 6.8) / 2.0), "9.1");
    assert_eq!(format!("{kl:.1}"), "9.1");
}

/// With the decoder output at 0 every pixel costs `y · (−ln 2e-7)`, so the
/// loss over a batch of renders is set by how much white they hold.
#[test]
fn initial_loss_follows_white_pixel_count() {
    let extreme = -BCE_EPSILON.ln();
    let pixels = 128.0 * 512.0;
    let mut images = Vec::new();
    for subtype in Subtype::ALL {
        for img in animate_frames(subtype, CanvasSize::FULL).unwrap() {
            let img = img.quantized();
            // Per image, the loss is the coverage-weighted white count.
            let y: Tensor<f64> = img.to_tensor();
            let loss = reconstruction_loss(&y, &Tensor::zeros(y.shape().to_vec())).unwrap();
            let coverage = img.intensity_sum() * extreme / pixels;
            assert!(
                (loss - coverage).abs() < 1e-5,
                "{subtype:?}: {loss} vs {coverage}"
            );
            images.push(img);
        }
    }
    let y: Tensor<f64> = Image::stack(&images).unwrap();
    let loss = reconstruction_loss(&y, &Tensor::zeros(y.shape().to_vec())).unwrap();
    let white = images.iter().map(|i| i.white_count() as f64).sum::<f64>() / images.len() as f64;
    let estimate = white * extreme / pixels;
    eprintln!("batch loss {loss:.4}, mean white pixels {white:.1}, estimate {estimate:.4}");
    assert!((loss - estimate).abs() <= 0.05 * estimate);
    assert!((0.35..=1.4).contains(&loss));
}

fn latent(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

proptest! {
    #[test]
    fn kl_of_standard_normal_is_zero(n in 1usize..5, d in 1usize..10) {
        let zero = Tensor::<f64>::zeros(vec![n, d]);
        prop_assert_eq!(kl_loss(&zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn kl_is_non_negative(
        (mean, log_var) in (1usize..16).prop_flat_map(|len| (latent(len), latent(len)))
    ) {
        let shape = [1, mean.len()];
        prop_assert!(kl_loss(&t(&shape, &mean), &t(&shape, &log_var)).unwrap() >= 0.0);
    }

    #[test]
    fn zero_noise_returns_the_mean(
        (mean, log_var) in (1usize..16).prop_flat_map(|len| (latent(len), latent(len)))
    ) {
        let shape = [1, mean.len()];
        let zero = Tensor::zeros(shape.to_vec());
        let z = reparameterize(&t(&shape, &mean), &t(&shape, &log_var), &zero).unwrap();
        prop_assert_eq!(z.data(), &mean[..]);
    }

    #[test]
    fn total_is_linear_in_the_coefficient(
        rec in 0.0f64..10.0,
        kl in 0.0f64..100.0,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let mixed = total_loss(rec, kl, a + b).total_loss;
        let split = total_loss(rec, kl, a).total_loss + total_loss(0.0, kl, b).total_loss;
        prop_assert!((mixed - split).abs() <= 1e-12 * (1.0 + mixed.abs()));
        prop_assert_eq!(total_loss(rec, kl, 0.0).total_loss, rec);
    }

    #[test]
    fn reconstruction_is_bounded_by_the_clamp(y in prop::collection::vec(0.0f64..=1.0, 1..64), seed in any::<u64>()) {
        let mut rng = bridge_vae::Rng::new(seed);
        let y_hat: Vec<f64> = y.iter().map(|_| rng.uniform()).collect();
        let shape = [1, y.len()];
        let loss = reconstruction_loss(&t(&shape, &y), &t(&shape, &y_hat)).unwrap();
        prop_assert!(loss >= 0.0 && loss <= -BCE_EPSILON.ln() + 1e-9);
    }
}
