//! Softmax-weighted layer fusion and alignment with the spectrogram.
//!
//! `cargo run --release --example layer_fusion`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sslse::data::speech_like;
use sslse::dsp::{stft, HOP, WINDOW_LEN, WORKING_RATE};
use sslse::encoder::{EncoderConfig, ToyEncoder, LATENT_STRIDE};
use sslse::fusion::{align_duplicate, concat_cross_domain, duplication_indices, softmax, weighted_sum, Composition};

fn main() -> sslse::Result<()> {
    let x = speech_like(20_480, WORKING_RATE, &mut ChaCha8Rng::seed_from_u64(4));
    let stack = ToyEncoder::new(EncoderConfig::default(), 0)?.forward(&x)?;
    let spec = stft(&x, WINDOW_LEN, HOP)?;

    let weights = softmax(&[0.5, -1.0, 0.0, 2.0, 1.0]);
    println!("weights {weights:.3?} (sum {:.6})", weights.iter().sum::<f64>());
    let fused = weighted_sum(&stack, &weights)?;
    let aligned = align_duplicate(&fused, spec.frames(), LATENT_STRIDE, HOP)?;
    println!(
        "latent {} frames -> {} frames, first indices {:?}",
        fused.rows(),
        aligned.rows(),
        &duplication_indices(fused.rows(), spec.frames())[..6]
    );
    let both = concat_cross_domain(&aligned, &spec.log1p_mag)?;
    println!("cross-domain feature {} x {}", both.rows(), both.cols());
    for comp in Composition::ALL {
        println!("{:>9}: feature width {}", comp.as_str(), comp.feature_dim(stack.dim(), spec.fft_bins()));
    }
    Ok(())
}
