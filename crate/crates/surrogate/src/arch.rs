//! Layer hyperparameters and the named parameter store.

use picrnn_autodiff::{kaiming_normal, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gate order inside the recurrent cell: forget, input, candidate, output.
pub const GATES: [&str; 4] = ["f", "i", "c", "o"];
/// Cell input order for each gate: hidden state, encoded state, encoded control.
pub const CELL_INPUTS: [&str; 3] = ["h", "x", "u"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub nx: usize,
    pub ny: usize,
    /// Filters of the stride-2 state encoder blocks.
    pub encoder: Vec<usize>,
    /// Latent channels of the recurrent cell.
    pub hidden: usize,
    /// Filters of the upsampling decoder blocks.
    pub decoder: Vec<usize>,
    pub control_kernel: usize,
    pub cell_kernel: usize,
}

impl Arch {
    /// The reference layer table at grid size `nx × ny`.
    pub fn new(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            encoder: vec![16, 32, 64],
            hidden: 64,
            decoder: vec![64, 32, 16],
            control_kernel: 5,
            cell_kernel: 3,
        }
    }

    /// Downscale factor between grid and latent; also the pixel-unshuffle factor.
    pub fn factor(&self) -> usize {
        1 << self.encoder.len()
    }

    pub fn latent(&self) -> (usize, usize) {
        (self.ny / self.factor(), self.nx / self.factor())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Arch(m));
        if self.encoder.is_empty() || self.encoder.len() != self.decoder.len() {
            return fail("encoder and decoder need the same nonzero number of blocks".into());
        }
        if self.encoder.iter().chain(&self.decoder).any(|&c| c == 0) || self.hidden == 0 {
            return fail("channel counts must be positive".into());
        }
        let f = self.factor();
        if self.nx < f || self.ny < f || self.nx % f != 0 || self.ny % f != 0 {
            return fail(format!("grid {}×{} is not divisible by {f}", self.nx, self.ny));
        }
        if self.control_kernel % 2 == 0 || self.cell_kernel % 2 == 0 {
            return fail("kernel sizes must be odd".into());
        }
        Ok(())
    }

    /// Total trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let wn = |o: usize, i: usize, k: usize| o * i * k * k + 2 * o;
        let mut total = 0;
        let mut c_in = 1;
        for &c in &self.encoder {
            total += wn(c, c_in, 4);
            c_in = c;
        }
        let f = self.factor();
        total += wn(self.hidden, f * f, self.control_kernel);
        let cell_in = [self.hidden, c_in, self.hidden];
        total += GATES.len() * (cell_in.iter().map(|&i| self.hidden * i * self.cell_kernel.pow(2)).sum::<usize>() + self.hidden);
        let mut c_in = self.hidden;
        for &c in &self.decoder {
            total += wn(c, c_in, 3);
            c_in = c;
        }
        total + c_in + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Weight-norm direction `v`.
    Direction,
    /// Weight-norm per-filter gain `g`.
    Gain,
    /// Plain convolution filter.
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub role: Role,
}

/// Named parameter tensors in a fixed registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    info: Vec<ParamInfo>,
    values: Vec<Tensor>,
}

impl ParamStore {
    fn push(&mut self, name: String, role: Role, value: Tensor) -> usize {
        self.info.push(ParamInfo { name, role });
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.info.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.values[i])
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self.position(name).ok_or_else(|| Error::Arch(format!("no parameter named {name}")))?;
        if value.shape() != self.values[i].shape() {
            return Err(Error::Arch(format!(
                "parameter {name} has shape {:?}, got {:?}",
                self.values[i].shape(),
                value.shape()
            )));
        }
        self.values[i] = value;
        Ok(())
    }

    /// Number of scalars across all tensors.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Weight-normalized convolution: indices of `v`, `g` and bias.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WnConv {
    pub v: usize,
    pub g: usize,
    pub bias: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub encoder: Vec<WnConv>,
    pub control: WnConv,
    /// `[gate][input]` filter indices.
    pub cell: [[usize; 3]; 4],
    pub cell_bias: [usize; 4],
    pub cell_pad: usize,
    pub decoder: Vec<WnConv>,
    pub head: (usize, usize),
}

struct Builder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    fn filter(&mut self, shape: [usize; 4]) -> Result<Tensor> {
        Ok(kaiming_normal(&shape, shape[1] * shape[2] * shape[3], &mut self.rng)?)
    }

    fn wn_conv(&mut self, name: &str, shape: [usize; 4], stride: usize, pad: usize) -> Result<WnConv> {
        let v = self.filter(shape)?;
        let per = v.len() / shape[0];
        let norms: Vec<f64> = v.data().chunks(per).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        Ok(WnConv {
            v: self.store.push(format!("{name}.v"), Role::Direction, v),
            g: self.store.push(format!("{name}.g"), Role::Gain, Tensor::from_vec(norms)),
            bias: self.store.push(format!("{name}.bias"), Role::Bias, Tensor::zeros(&[shape[0]])),
            stride,
            pad,
        })
    }
}

/// Kaiming-initialized parameters (fan-in, gain √2) drawn in registration
/// order from one seeded stream. Gains start at the filter norms, biases at
/// zero.
pub(crate) fn build(arch: &Arch, seed: u64) -> Result<(ParamStore, Layout)> {
    arch.validate()?;
    let mut b = Builder { store: ParamStore::default(), rng: ChaCha8Rng::seed_from_u64(seed) };

    let mut encoder = Vec::new();
    let mut c_in = 1;
    for (l, &c) in arch.encoder.iter().enumerate() {
        encoder.push(b.wn_conv(&format!("encoder.{l}"), [c, c_in, 4, 4], 2, 1)?);
        c_in = c;
    }
    let f = arch.factor();
    let k = arch.control_kernel;
    let control = b.wn_conv("control", [arch.hidden, f * f, k, k], 1, k / 2)?;

    let k = arch.cell_kernel;
    let ins = [arch.hidden, c_in, arch.hidden];
    let mut cell = [[0; 3]; 4];
    let mut cell_bias = [0; 4];
    for (g, gate) in GATES.iter().enumerate() {
        for (s, src) in CELL_INPUTS.iter().enumerate() {
            let w = b.filter([arch.hidden, ins[s], k, k])?;
            cell[g][s] = b.store.push(format!("cell.{gate}.{src}.weight"), Role::Weight, w);
        }
        cell_bias[g] = b.store.push(format!("cell.{gate}.bias"), Role::Bias, Tensor::zeros(&[arch.hidden]));
    }

    let mut decoder = Vec::new();
    let mut c_in = arch.hidden;
    for (l, &c) in arch.decoder.iter().enumerate() {
        decoder.push(b.wn_conv(&format!("decoder.{l}"), [c, c_in, 3, 3], 1, 1)?);
        c_in = c;
    }
    let w = b.filter([1, c_in, 1, 1])?;
    let head = (
        b.store.push("head.weight".into(), Role::Weight, w),
        b.store.push("head.bias".into(), Role::Bias, Tensor::zeros(&[1])),
    );

    let layout = Layout { encoder, control, cell, cell_bias, cell_pad: k / 2, decoder, head };
    Ok((b.store, layout))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameter_count() {
        // enc 288 + 8256 + 32896, control 102528, cell 442624,
        // dec 36992 + 18496 + 4640, head 17
        for n in [16, 64] {
            let arch = Arch::new(n, n);
            assert_eq!(arch.parameter_count(), 646_737);
            let (store, _) = build(&arch, 0).unwrap();
            assert_eq!(store.count(), 646_737);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Arch::new(12, 16).validate().is_err());
        assert!(Arch::new(4, 4).validate().is_err());
        assert!(Arch::new(24, 8).validate().is_ok());
    }

    #[test]
    fn gains_equal_filter_norms() {
        let (store, layout) = build(&Arch::new(16, 16), 3).unwrap();
        let l = layout.encoder[1];
        let v = &store.values()[l.v];
        let g = &store.values()[l.g];
        let first: f64 = v.data()[..16 * 16].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_eq!(g.data()[0], first);
        assert!(store.values()[l.bias].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn seeded_build_is_reproducible() {
        let a = build(&Arch::new(16, 16), 11).unwrap().0;
        let b = build(&Arch::new(16, 16), 11).unwrap().0;
        let c = build(&Arch::new(16, 16), 12).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
