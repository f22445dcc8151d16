use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// He/Kaiming normal draw: `N(0, 2/fan_in)`, i.e. gain √2 in fan-in mode.
pub fn kaiming_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(arg_err("kaiming_normal", "fan_in must be positive"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| arg_err("kaiming_normal", e.to_string()))?;
    let count = shape.iter().product();
    let data = (0..count).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// [`kaiming_normal`] from a fresh ChaCha8 stream seeded with `seed`.
pub fn kaiming_normal_seeded(shape: &[usize], fan_in: usize, seed: u64) -> Result<Tensor> {
    kaiming_normal(shape, fan_in, &mut ChaCha8Rng::seed_from_u64(seed))
}
