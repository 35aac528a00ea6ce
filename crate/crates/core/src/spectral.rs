//! Discrete Fourier machinery for the torus grids.
//!
//! All derivatives are pseudospectral: forward transform, multiply by a real
//! even symbol, inverse transform. The Nyquist wavenumber is set to zero in
//! every symbol, which keeps odd and even derivative symbols consistent and
//! makes the discrete integral of `det` of a complex Hessian vanish exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::TorusGrid;

pub struct Spectral {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Angular wavenumber for each per-axis index.
    k1d: Vec<f64>,
    /// 2/3-rule mask per per-axis index (1 or 0).
    mask1d: Vec<f64>,
}

type CacheKey = (usize, usize, u64, bool);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Spectral>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Spectral>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Shared transform plan for a grid.
pub fn spectral(grid: &TorusGrid) -> Arc<Spectral> {
    spectral_with(grid, false)
}

pub fn spectral_with(grid: &TorusGrid, dealias: bool) -> Arc<Spectral> {
    let key = (grid.n(), grid.res(), grid.period().to_bits(), dealias);
    let mut map = cache().lock().expect("spectral cache poisoned");
    map.entry(key).or_insert_with(|| Arc::new(Spectral::new(*grid, dealias))).clone()
}

impl Spectral {
    fn new(grid: TorusGrid, dealias: bool) -> Self {
        let res = grid.res();
        let (fwd, inv) = {
            let mut p = planner().lock().expect("fft planner poisoned");
            (p.plan_fft_forward(res), p.plan_fft_inverse(res))
        };
        let scale = 2.0 * PI / grid.period();
        let half = res / 2;
        let mut k1d = Vec::with_capacity(res);
        let mut mask1d = Vec::with_capacity(res);
        for i in 0..res {
            let m: i64 = if i < half {
                i as i64
            } else if i == half {
                0
            } else {
                i as i64 - res as i64
            };
            k1d.push(scale * m as f64);
            let keep = !dealias || (3 * m.unsigned_abs() as usize) < res;
            mask1d.push(if keep { 1.0 } else { 0.0 });
        }
        Self { grid, fwd, inv, k1d, mask1d }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Angular wavevector of a flat spectral index.
    pub fn wavevector(&self, index: usize) -> [f64; 4] {
        let idx = self.grid.axis_indices(index);
        let mut k = [0.0; 4];
        for a in 0..self.grid.dims() {
            k[a] = self.k1d[idx[a]];
        }
        k
    }

    /// Dealiasing mask of a flat spectral index.
    pub fn mask(&self, index: usize) -> f64 {
        let idx = self.grid.axis_indices(index);
        (0..self.grid.dims()).map(|a| self.mask1d[idx[a]]).product()
    }

    /// All wavevectors, flat order.
    pub fn wavevectors(&self) -> Vec<[f64; 4]> {
        (0..self.grid.len()).map(|i| self.wavevector(i)).collect()
    }

    pub fn masks(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.mask(i)).collect()
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform (normalized) of a spectrum known to be Hermitian;
    /// returns the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, true);
        let norm = 1.0 / self.grid.len() as f64;
        spec.iter().map(|c| c.re * norm).collect()
    }

    /// Inverse of `a + i b` where `a`, `b` are Hermitian spectra; returns the
    /// two real fields.
    pub fn inverse_pair(&self, mut packed: Vec<Complex64>) -> (Vec<f64>, Vec<f64>) {
        self.transform(&mut packed, true);
        let norm = 1.0 / self.grid.len() as f64;
        let re = packed.iter().map(|c| c.re * norm).collect();
        let im = packed.iter().map(|c| c.im * norm).collect();
        (re, im)
    }

    /// Apply a real even symbol to a real field.
    pub fn apply_symbol(&self, values: &[f64], symbol: impl Fn(&[f64; 4]) -> f64) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (i, c) in spec.iter_mut().enumerate() {
            let k = self.wavevector(i);
            *c *= symbol(&k) * self.mask(i);
        }
        self.inverse_real(spec)
    }

    /// In-place multidimensional transform, unnormalized in both directions.
    pub fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inv } else { &self.fwd };
        let res = self.grid.res();
        let dims = self.grid.dims();
        let total = data.len();
        debug_assert_eq!(total, self.grid.len());
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // last axis: contiguous lines
        fft.process_with_scratch(data, &mut scratch);
        if dims == 1 {
            return;
        }
        let mut buf = vec![Complex64::default(); total];
        for axis in 0..dims - 1 {
            let stride = res.pow((dims - 1 - axis) as u32);
            let block = res * stride;
            // gather columns of each (res x stride) block into contiguous lines
            for (o, chunk) in data.chunks_exact(block).enumerate() {
                let out = &mut buf[o * block..(o + 1) * block];
                for k in 0..res {
                    let row = &chunk[k * stride..(k + 1) * stride];
                    for (i, &v) in row.iter().enumerate() {
                        out[i * res + k] = v;
                    }
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, chunk) in data.chunks_exact_mut(block).enumerate() {
                let src = &buf[o * block..(o + 1) * block];
                for k in 0..res {
                    let row = &mut chunk[k * stride..(k + 1) * stride];
                    for (i, v) in row.iter_mut().enumerate() {
                        *v = src[i * res + k];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = TorusGrid::unit(2, 8).unwrap();
        let s = spectral(&g);
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let back = s.inverse_real(s.forward(&vals));
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_on_its_wavevector() {
        let g = TorusGrid::unit(1, 16).unwrap();
        let s = spectral(&g);
        let f = crate::grid::PotentialField::from_fn(g, |x| (2.0 * PI * (3.0 * x[0])).cos());
        let spec = s.forward(f.values());
        let (imax, _) = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let k = s.wavevector(imax);
        assert!((k[0].abs() - 2.0 * PI * 3.0).abs() < 1e-12);
        assert_eq!(k[1], 0.0);
    }

    #[test]
    fn dealias_mask_drops_high_modes() {
        let g = TorusGrid::unit(1, 12usize.next_power_of_two()).unwrap();
        let s = spectral_with(&g, true);
        let kept = s.masks().iter().filter(|&&m| m > 0.0).count();
        assert!(kept < g.len());
        assert_eq!(s.mask(0), 1.0);
    }
}
