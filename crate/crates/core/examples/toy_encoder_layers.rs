//! Run the toy self-supervised encoder and store its layer stack as `.ssle`.
//!
//! `cargo run --release --example toy_encoder_layers -- [out.ssle]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sslse::data::speech_like;
use sslse::dsp::WORKING_RATE;
use sslse::encoder::{read_embedding_file, write_embedding_file, EncoderConfig, FreezePolicy, ToyEncoder};

fn main() -> sslse::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "toy.ssle".into());
    let x = speech_like(32_000, WORKING_RATE, &mut ChaCha8Rng::seed_from_u64(3));
    let enc = ToyEncoder::new(EncoderConfig::default(), 0)?;
    let stack = enc.forward(&x)?;
    println!("{} samples -> {} layers of {} x {}", x.len(), stack.num_layers(), stack.frames(), stack.dim());
    for (l, m) in stack.layers().iter().enumerate() {
        let rms = (m.as_slice().iter().map(|v| v * v).sum::<f64>() / m.as_slice().len() as f64).sqrt();
        println!("layer {l}: rms {rms:.4}");
    }

    write_embedding_file(&stack, out.as_ref())?;
    let back = read_embedding_file(out.as_ref())?;
    println!("wrote {out} ({} layers read back)", back.num_layers());

    for policy in FreezePolicy::ALL {
        let mut e = ToyEncoder::new(EncoderConfig::default(), 0)?;
        e.apply_policy(policy, 9)?;
        let trainable = e.params.iter().filter(|(_, p)| p.trainable).count();
        println!("{policy}: {trainable}/{} tensors trainable", e.params.len());
    }
    Ok(())
}
