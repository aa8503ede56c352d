use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bindings, Graph, ParamGroup, Tensor, Var};
use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::nn;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskConfig {
    pub input_dim: usize,
    /// Width of the input projection and of each BLSTM direction.
    pub hidden: usize,
    pub layers: usize,
    pub bins: usize,
}

impl MaskConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: 256,
            layers: 2,
            bins: crate::dsp::FFT_BINS,
        }
    }
}

/// `linear(input_dim -> hidden)`, `layers` BLSTMs, `linear(2 hidden -> bins)`, sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskModel {
    pub config: MaskConfig,
    pub params: ParamGroup,
}

impl MaskModel {
    pub fn new(config: MaskConfig, seed: u64) -> Result<Self> {
        ensure!(
            config.input_dim > 0 && config.hidden > 0 && config.layers > 0 && config.bins > 0,
            InvalidInput,
            "mask model sizes must be positive: {config:?}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamGroup::new();
        let h = config.hidden;
        nn::add_linear(&mut params, "mask.in", config.input_dim, h, &mut rng)?;
        for i in 0..config.layers {
            let input = if i == 0 { h } else { 2 * h };
            nn::add_blstm(&mut params, &format!("mask.blstm{i}"), input, h, &mut rng)?;
        }
        nn::add_linear(&mut params, "mask.out", 2 * h, config.bins, &mut rng)?;
        Ok(Self { config, params })
    }

    /// Rebuild the configuration from tensor shapes.
    pub fn from_params(params: ParamGroup) -> Result<Self> {
        let w_in = params.value("mask.in.weight")?.shape().to_vec();
        let w_out = params.value("mask.out.weight")?.shape().to_vec();
        let mut layers = 0;
        while params.get(&format!("mask.blstm{layers}.fwd.w_hh")).is_some() {
            layers += 1;
        }
        ensure!(w_in.len() == 2 && w_out.len() == 2 && layers > 0, Format, "malformed mask model tensors");
        Ok(Self {
            config: MaskConfig {
                input_dim: w_in[0],
                hidden: w_in[1],
                layers,
                bins: w_out[1],
            },
            params,
        })
    }

    /// Mask for `batch` equal-length sequences stacked sequence-major in `x`.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bindings, x: Var, batch: usize) -> Result<Var> {
        let width = g.shape(x).1;
        ensure!(
            width == self.config.input_dim,
            Shape,
            "feature width {width}, model expects {}",
            self.config.input_dim
        );
        let mut h = nn::linear(g, p, "mask.in", x)?;
        for i in 0..self.config.layers {
            h = nn::blstm_batched(g, p, &format!("mask.blstm{i}"), h, batch)?;
        }
        let logits = nn::linear(g, p, "mask.out", h)?;
        g.sigmoid(logits)
    }

    pub fn forward(&self, feature: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let mut frozen = self.params.clone();
        frozen.set_all_trainable(false);
        let b = frozen.bind(&mut g)?;
        let x = g.constant(Tensor::from(feature))?;
        let m = self.forward_graph(&mut g, &b, x, 1)?;
        g.value(m).to_matrix()
    }
}

/// `mean |mask * noisy_log1p - clean_log1p|`.
pub fn sa_loss(mask: &Matrix, noisy_log1p: &Matrix, clean_log1p: &Matrix) -> Result<f64> {
    ensure!(
        mask.shape() == noisy_log1p.shape() && mask.shape() == clean_log1p.shape(),
        Shape,
        "mask {:?}, noisy {:?}, clean {:?}",
        mask.shape(),
        noisy_log1p.shape(),
        clean_log1p.shape()
    );
    let n = mask.as_slice().len();
    let total: f64 = mask
        .as_slice()
        .iter()
        .zip(noisy_log1p.as_slice())
        .zip(clean_log1p.as_slice())
        .map(|((m, x), c)| (m * x - c).abs())
        .sum();
    Ok(total / n as f64)
}

/// In-graph [`sa_loss`].
pub fn sa_loss_graph(g: &mut Graph, mask: Var, noisy_log1p: Var, clean_log1p: Var) -> Result<Var> {
    let est = g.mul(mask, noisy_log1p)?;
    let diff = g.sub(est, clean_log1p)?;
    let abs = g.abs(diff)?;
    g.mean(abs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MaskConfig {
        MaskConfig {
            input_dim: 5,
            hidden: 3,
            layers: 2,
            bins: 4,
        }
    }

    #[test]
    fn mask_shape_and_range() {
        let m = MaskModel::new(small(), 0).unwrap();
        let x = Matrix::from_fn(7, 5, |t, d| ((t * 5 + d) as f64).sin() * 4.0);
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), (7, 4));
        assert!(y.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(matches!(m.forward(&Matrix::zeros(7, 4)), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn zero_model_gives_half() {
        let mut m = MaskModel::new(small(), 0).unwrap();
        for (_, p) in m.params.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
        let y = m.forward(&Matrix::filled(3, 5, 2.0)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn config_from_params() {
        let m = MaskModel::new(small(), 1).unwrap();
        assert_eq!(MaskModel::from_params(m.params.clone()).unwrap().config, small());
    }

    #[test]
    fn batched_forward_matches_single() {
        let m = MaskModel::new(small(), 2).unwrap();
        let a = Matrix::from_fn(4, 5, |t, d| (t as f64 - d as f64) * 0.3);
        let b = Matrix::from_fn(4, 5, |t, d| ((t * d) as f64).cos());
        let mut both = a.as_slice().to_vec();
        both.extend_from_slice(b.as_slice());
        let mut g = Graph::new();
        let binds = m.params.bind(&mut g).unwrap();
        let x = g.constant(Tensor::new(vec![8, 5], both).unwrap()).unwrap();
        let y = m.forward_graph(&mut g, &binds, x, 2).unwrap();
        let y = g.value(y).to_matrix().unwrap();
        let ya = m.forward(&a).unwrap();
        let yb = m.forward(&b).unwrap();
        for (u, v) in y.slice_rows(0, 4).as_slice().iter().zip(ya.as_slice()) {
            assert!((u - v).abs() < 1e-14);
        }
        for (u, v) in y.slice_rows(4, 4).as_slice().iter().zip(yb.as_slice()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn sa_loss_hand_values() {
        let one = Matrix::filled(2, 2, 1.0);
        let x = Matrix::from_fn(2, 2, |t, f| (t + f) as f64);
        assert_eq!(sa_loss(&one, &x, &x).unwrap(), 0.0);
        let m = Matrix::filled(1, 1, 0.5);
        let loss = sa_loss(&m, &Matrix::filled(1, 1, 2.0), &Matrix::filled(1, 1, 1.5)).unwrap();
        assert_eq!(loss, 0.5);
        assert!(sa_loss(&m, &one, &one).is_err());
    }
}
