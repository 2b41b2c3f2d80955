//! In-place 3-D FFT on x-fastest complex arrays.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft3 {
    pub dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims,
            forward: dims.map(|n| planner.plan_fft_forward(n)),
            inverse: dims.map(|n| planner.plan_fft_inverse(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.dims;
        assert_eq!(data.len(), nx * ny * nz);
        data.par_chunks_mut(nx).for_each(|row| plans[0].process(row));
        // y and z lines are strided: gather each into a buffer, transform, scatter back
        data.par_chunks_mut(nx * ny).for_each(|plane| {
            let mut buf = vec![Complex64::new(0.0, 0.0); ny];
            for i in 0..nx {
                for j in 0..ny {
                    buf[j] = plane[i + nx * j];
                }
                plans[1].process(&mut buf);
                for j in 0..ny {
                    plane[i + nx * j] = buf[j];
                }
            }
        });
        let stride = nx * ny;
        let mut buf = vec![Complex64::new(0.0, 0.0); nz];
        for col in 0..stride {
            for k in 0..nz {
                buf[k] = data[col + stride * k];
            }
            plans[2].process(&mut buf);
            for k in 0..nz {
                data[col + stride * k] = buf[k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_delta() {
        let f = Fft3::new([4, 6, 5]);
        let orig: Vec<Complex64> = (0..f.len()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut d = orig.clone();
        f.forward(&mut d);
        f.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
        let mut delta = vec![Complex64::new(0.0, 0.0); f.len()];
        delta[0] = Complex64::new(1.0, 0.0);
        f.forward(&mut delta);
        assert!(delta.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn matches_direct_dft() {
        let dims = [3, 2, 4];
        let f = Fft3::new(dims);
        let x: Vec<Complex64> = (0..f.len()).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut y = x.clone();
        f.forward(&mut y);
        let (kx, ky, kz) = (1, 1, 3);
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..4 {
            for j in 0..2 {
                for i in 0..3 {
                    let ph = -2.0 * std::f64::consts::PI
                        * (kx as f64 * i as f64 / 3.0 + ky as f64 * j as f64 / 2.0 + kz as f64 * k as f64 / 4.0);
                    s += x[i + 3 * (j + 2 * k)] * Complex64::from_polar(1.0, ph);
                }
            }
        }
        assert!((y[kx + 3 * (ky + 2 * kz)] - s).norm() < 1e-12);
    }
}
