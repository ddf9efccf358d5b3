//! Orthonormal 2-D DCT basis images for SimBA's frequency-domain search.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interprets a sample shape as `(channels, height, width)`.
pub(crate) fn image_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [d] => Ok((1, 1, d)),
        [h, w] => Ok((1, h, w)),
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::ShapeMismatch {
            expected: vec![0, 0, 0],
            actual: shape.to_vec(),
        }),
    }
}

/// Low-frequency DCT-III basis restricted to the first `freq_dims` frequencies
/// along each spatial axis, per channel.
#[derive(Debug, Clone)]
pub struct DctBasis {
    shape: Vec<usize>,
    channels: usize,
    height: usize,
    width: usize,
    freq_h: usize,
    freq_w: usize,
    /// `rows[u * height + y]` is the orthonormal cosine of frequency `u` at `y`.
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn cosine_table(n: usize, freqs: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(freqs * n);
    for k in 0..freqs {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            t.push(scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos());
        }
    }
    t
}

impl DctBasis {
    pub fn new(shape: &[usize], freq_dims: usize) -> Result<Self> {
        let (channels, height, width) = image_dims(shape)?;
        if freq_dims == 0 || freq_dims > height.max(width) {
            return Err(Error::InvalidConfig(format!(
                "freq_dims {freq_dims} must be in 1..={} for shape {shape:?}",
                height.max(width)
            )));
        }
        let freq_h = freq_dims.min(height);
        let freq_w = freq_dims.min(width);
        Ok(Self {
            shape: shape.to_vec(),
            channels,
            height,
            width,
            freq_h,
            freq_w,
            rows: cosine_table(height, freq_h),
            cols: cosine_table(width, freq_w),
        })
    }

    /// Number of basis directions (`channels * freq_h * freq_w`).
    pub fn len(&self) -> usize {
        self.channels * self.freq_h * self.freq_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the basis image for `index` into `out` (length of the full sample).
    pub fn fill(&self, index: usize, out: &mut [f64]) -> Result<()> {
        if index >= self.len() {
            return Err(Error::InvalidConfig(format!(
                "DCT direction {index} out of range (basis has {})",
                self.len()
            )));
        }
        let per_channel = self.freq_h * self.freq_w;
        let c = index / per_channel;
        let u = (index % per_channel) / self.freq_w;
        let v = index % self.freq_w;
        out.iter_mut().for_each(|x| *x = 0.0);
        let row = &self.rows[u * self.height..(u + 1) * self.height];
        let col = &self.cols[v * self.width..(v + 1) * self.width];
        let plane = &mut out[c * self.height * self.width..(c + 1) * self.height * self.width];
        for (y, ry) in row.iter().enumerate() {
            for (x, cx) in col.iter().enumerate() {
                plane[y * self.width + x] = ry * cx;
            }
        }
        Ok(())
    }

    pub fn image(&self, index: usize) -> Result<Tensor> {
        let mut buf = vec![0.0; self.channels * self.height * self.width];
        self.fill(index, &mut buf)?;
        Tensor::new(self.shape.clone(), buf.into_iter().map(|v| v as f32).collect())
    }
}

/// Inverse-DCT image of the one-hot frequency coefficient `index`.
pub fn dct_basis_step(index: usize, freq_dims: usize, shape: &[usize]) -> Result<Tensor> {
    DctBasis::new(shape, freq_dims)?.image(index)
}
