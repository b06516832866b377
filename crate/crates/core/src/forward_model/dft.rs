use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Unitary, centered 2-D DFT on `m x m` column-major buffers.
///
/// `forward` computes
/// `F[k, l] = (1/m) sum_{p,q} z[p, q] exp(-2 pi j ((k - h) p + (l - h) q) / m)`
/// with `h = floor(m / 2)`, i.e. an fftshifted output so the zero frequency
/// lands at index `(h, h)`. `inverse` is its exact adjoint (and inverse).
#[derive(Clone)]
pub struct CenteredDft {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CenteredDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CenteredDft").field("m", &self.m).finish()
    }
}

impl CenteredDft {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn forward(&self, data: &mut [C64]) {
        assert_eq!(data.len(), self.m * self.m);
        let m = self.m;
        let h = m / 2;
        transform_2d(data, m, self.fwd.as_ref());
        let scale = 1.0 / m as f64;
        let src = data.to_vec();
        for c in 0..m {
            for r in 0..m {
                data[(r + h) % m + ((c + h) % m) * m] = src[r + c * m] * scale;
            }
        }
    }

    pub fn inverse(&self, data: &mut [C64]) {
        assert_eq!(data.len(), self.m * self.m);
        let m = self.m;
        let h = m / 2;
        let scale = 1.0 / m as f64;
        let src = data.to_vec();
        for c in 0..m {
            for r in 0..m {
                data[r + c * m] = src[(r + h) % m + ((c + h) % m) * m] * scale;
            }
        }
        transform_2d(data, m, self.inv.as_ref());
    }
}

// Unnormalized 1-D transforms along columns then rows.
fn transform_2d(data: &mut [C64], m: usize, fft: &dyn Fft<f64>) {
    // Columns are contiguous; rustfft processes consecutive chunks.
    fft.process(data);
    let mut t = vec![C64::new(0.0, 0.0); m * m];
    for c in 0..m {
        for r in 0..m {
            t[c + r * m] = data[r + c * m];
        }
    }
    fft.process(&mut t);
    for c in 0..m {
        for r in 0..m {
            data[r + c * m] = t[c + r * m];
        }
    }
}
