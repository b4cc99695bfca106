//! Periodic grids and the unitary discrete Fourier transform.
//!
//! Convention: `x_j = -L + j·dx`, `dx = 2L/n`, wavenumbers `ξ_k = πk/L` with
//! `k` in `(-n/2, n/2]`. Both directions carry the factor `n^{-d/2}`, so the
//! discrete Parseval identity reads `Σ|f_j|² = Σ|f̂_k|²`.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub half_len: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, half_len: f64) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::InvalidParameter(format!("grid dimension must be 1 or 2, got {d}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("points per axis must be a power of two >= 4, got {n}")));
        }
        if !(half_len > 0.0) || !half_len.is_finite() {
            return Err(Error::InvalidParameter("box half-length must be positive".into()));
        }
        Ok(GridSpec { d, n, half_len })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_len / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `dx^d`.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / (2.0 * self.half_len)
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.half_len + j as f64 * self.spacing()
    }

    /// Axis indices of flat index `i` (row-major, first axis slowest).
    pub fn axes(&self, i: usize) -> [usize; 2] {
        if self.d == 1 {
            [i, 0]
        } else {
            [i / self.n, i % self.n]
        }
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let a = self.axes(i);
        (0..self.d).map(|k| self.coord(a[k])).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.point(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Signed integer frequency of axis index `k`.
    pub fn freq_index(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k <= n / 2 {
            k
        } else {
            k - n
        }
    }

    pub fn wavenumber(&self, k: usize) -> f64 {
        PI * self.freq_index(k) as f64 / self.half_len
    }

    /// `|ξ|²` at flat spectral index `i`.
    pub fn xi2(&self, i: usize) -> f64 {
        let a = self.axes(i);
        (0..self.d).map(|k| self.wavenumber(a[k]).powi(2)).sum()
    }

    /// Is the point strictly inside the box by at least `margin`.
    pub fn inside(&self, x: &[f64], margin: f64) -> bool {
        let l = self.half_len;
        x.iter().all(|v| *v - margin > -l && *v + margin < l - self.spacing())
    }
}

/// FFT plans for a grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let mut p = FftPlanner::new();
        let fwd = p.plan_fft_forward(grid.n);
        let inv = p.plan_fft_inverse(grid.n);
        Spectral { grid, fwd, inv, scale: (grid.len() as f64).powf(-0.5) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn run(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n;
        plan.process(buf);
        if self.grid.d == 2 {
            let mut col = vec![Complex64::new(0.0, 0.0); n * n];
            for r in 0..n {
                for c in 0..n {
                    col[c * n + r] = buf[r * n + c];
                }
            }
            plan.process(&mut col);
            for r in 0..n {
                for c in 0..n {
                    buf[r * n + c] = col[c * n + r];
                }
            }
        }
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.run(&mut buf, &self.fwd);
        buf
    }

    pub fn forward_complex(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.fwd);
    }

    pub fn inverse_complex(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.inv);
    }

    /// Inverse transform to a real field; also returns the largest imaginary residue.
    pub fn inverse_real(&self, modes: &[Complex64]) -> (Vec<f64>, f64) {
        let mut buf = modes.to_vec();
        self.run(&mut buf, &self.inv);
        let imag = buf.iter().fold(0.0f64, |a, v| a.max(v.im.abs()));
        (buf.iter().map(|v| v.re).collect(), imag)
    }

    /// Multiply mode `i` by `m(|ξ_i|²)`.
    pub fn multiply<F: Fn(f64) -> f64>(&self, modes: &mut [Complex64], m: F) {
        for (i, v) in modes.iter_mut().enumerate() {
            *v *= m(self.grid.xi2(i));
        }
    }

    /// Discrete inner product `dx^d Σ a_j b_j` evaluated from spectral data.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        self.grid.cell() * a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
    }
}

/// `e^{tΔ/2}` applied spectrally.
pub fn apply_heat_semigroup(sp: &Spectral, field: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("semigroup time must be >= 0, got {t}")));
    }
    if field.len() != sp.grid().len() {
        return Err(Error::GridMismatch(format!("field of length {} on grid of {}", field.len(), sp.grid().len())));
    }
    if t == 0.0 {
        return Ok(field.to_vec());
    }
    let mut m = sp.forward(field);
    sp.multiply(&mut m, |x2| (-0.5 * x2 * t).exp());
    Ok(sp.inverse_real(&m).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_parseval() {
        for d in [1, 2] {
            let g = GridSpec::new(d, 16, 3.0).unwrap();
            let sp = Spectral::new(g);
            let f: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin() + 0.1 * i as f64).collect();
            let m = sp.forward(&f);
            let (back, imag) = sp.inverse_real(&m);
            assert!(imag < 1e-12);
            for (a, b) in f.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
            let e1: f64 = f.iter().map(|v| v * v).sum();
            let e2: f64 = m.iter().map(|v| v.norm_sqr()).sum();
            assert!((e1 - e2).abs() < 1e-10 * e1);
        }
    }

    #[test]
    fn cosine_decays_by_eigenvalue() {
        let g = GridSpec::new(1, 64, PI).unwrap();
        let sp = Spectral::new(g);
        let f: Vec<f64> = (0..64).map(|j| g.coord(j).cos()).collect();
        let out = apply_heat_semigroup(&sp, &f, 2.0).unwrap();
        for (a, b) in f.iter().zip(&out) {
            assert!((a * (-1.0f64).exp() - b).abs() < 1e-13);
        }
        let c = vec![3.5; 64];
        let out = apply_heat_semigroup(&sp, &c, 5.0).unwrap();
        assert!(out.iter().all(|v| (v - 3.5).abs() < 1e-13));
    }

    #[test]
    fn spike_matches_heat_kernel() {
        let g = GridSpec::new(1, 1024, 20.0).unwrap();
        let sp = Spectral::new(g);
        let mut f = vec![0.0; 1024];
        f[512] = 1.0 / g.spacing();
        let out = apply_heat_semigroup(&sp, &f, 1.0).unwrap();
        assert!((out[512] - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn two_d_eigenmode() {
        let g = GridSpec::new(2, 32, PI).unwrap();
        let sp = Spectral::new(g);
        let f: Vec<f64> = (0..g.len()).map(|i| { let p = g.point(i); p[0].cos() * (2.0 * p[1]).sin() }).collect();
        let out = apply_heat_semigroup(&sp, &f, 0.4).unwrap();
        let fac = (-0.5 * 5.0 * 0.4f64).exp();
        for (a, b) in f.iter().zip(&out) {
            assert!((a * fac - b).abs() < 1e-12);
        }
    }
}
