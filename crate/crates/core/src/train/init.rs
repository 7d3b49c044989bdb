use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SparcError};
use crate::model::{ModelParams, StreamParams};

/// Tied initialization: Gaussian decoder columns scaled to unit norm, the
/// encoder set to the decoder's transpose, all biases zero.
pub fn init_params<R: Rng + ?Sized>(
    streams: &[(String, usize)],
    latent_dim: usize,
    rng: &mut R,
) -> Result<ModelParams> {
    if latent_dim == 0 {
        return Err(SparcError::Config("latent dim must be at least 1".into()));
    }
    let streams = streams
        .iter()
        .map(|(name, dim)| {
            let mut p = StreamParams::zeros(name, *dim, latent_dim);
            p.w_dec = Array2::from_shape_simple_fn((*dim, latent_dim), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            p.normalize_decoder();
            p.w_enc = p.w_dec.t().to_owned();
            p
        })
        .collect();
    ModelParams::new(latent_dim, streams)
}
