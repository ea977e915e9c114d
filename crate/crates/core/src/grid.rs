//! Periodic grids on the centered box `[-ell/2, ell/2)^d` and complex fields
//! living on them.
//!
//! Transforms follow the usual convention: forward unnormalized, inverse
//! scaled by `1/n^d`. Every norm is a physical-space quadrature with cell
//! weight `dx^d`; derivatives are spectral.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const CFLD_MAGIC: &[u8; 8] = b"CFLD0001";

struct GridInner {
    d: usize,
    n: usize,
    ell: f64,
    dx: f64,
    /// 1D wavenumbers in transform order: 0, 1, ..., n/2-1, -n/2, ..., -1 (times 2π/ell).
    k: Vec<f64>,
    /// |k|^2 for every multi-index, row-major.
    ksq: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid with `n` points per axis. Cheap to clone.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("d", &self.inner.d)
            .field("n", &self.inner.n)
            .field("ell", &self.inner.ell)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.d == other.inner.d
                && self.inner.n == other.inner.n
                && self.inner.ell.to_bits() == other.inner.ell.to_bits())
    }
}

impl Grid {
    pub fn new(d: usize, n: usize, ell: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} not in {{1,2,3}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(ell.is_finite() && ell > 0.0) {
            return Err(Error::InvalidGrid(format!("box length must be positive, got {ell}")));
        }
        let scale = 2.0 * PI / ell;
        let half = n as i64 / 2;
        let k: Vec<f64> = (0..n as i64)
            .map(|j| if j < half { j } else { j - n as i64 })
            .map(|j| j as f64 * scale)
            .collect();
        let total = n.pow(d as u32);
        let mut ksq = vec![0.0; total];
        for (idx, slot) in ksq.iter_mut().enumerate() {
            let mut rem = idx;
            let mut s = 0.0;
            for _ in 0..d {
                let kj = k[rem % n];
                s += kj * kj;
                rem /= n;
            }
            *slot = s;
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(GridInner { d, n, ell, dx: ell / n as f64, k, ksq, forward, inverse }),
        })
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn ell(&self) -> f64 {
        self.inner.ell
    }

    pub fn dx(&self) -> f64 {
        self.inner.dx
    }

    pub fn len(&self) -> usize {
        self.inner.ksq.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.inner.dx.powi(self.inner.d as i32)
    }

    /// Per-axis wavenumbers in ascending order, `{-n/2, ..., n/2-1} * 2π/ell`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let mut k = self.inner.k.clone();
        k.sort_by(f64::total_cmp);
        k
    }

    pub(crate) fn ksq(&self) -> &[f64] {
        &self.inner.ksq
    }

    /// Physical coordinates of the point with row-major index `idx`.
    /// Axis 0 is the slowest-varying one.
    pub fn coords(&self, idx: usize, out: &mut [f64]) {
        let (d, n) = (self.inner.d, self.inner.n);
        let mut rem = idx;
        for axis in (0..d).rev() {
            out[axis] = -0.5 * self.inner.ell + (rem % n) as f64 * self.inner.dx;
            rem /= n;
        }
    }

    fn stride(&self, axis: usize) -> usize {
        self.inner.n.pow((self.inner.d - 1 - axis) as u32)
    }

    /// Wavenumber along `axis` of the mode with row-major index `idx`.
    pub(crate) fn k_along(&self, idx: usize, axis: usize) -> f64 {
        self.inner.k[(idx / self.stride(axis)) % self.inner.n]
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.forward);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); n];
        for axis in 0..self.inner.d {
            let stride = self.stride(axis);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[start + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[start + j * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Complex field sampled on a [`Grid`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), values: vec![Complex64::default(); grid.len()] }
    }

    /// Samples `f` at every grid point; `f` receives the coordinate vector.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        let mut x = vec![0.0; grid.d()];
        let values = (0..grid.len())
            .map(|idx| {
                grid.coords(idx, &mut x);
                f(&x)
            })
            .collect();
        Self::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Discrete Fourier coefficients (unnormalized).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut data = self.values.clone();
        self.grid.forward(&mut data);
        data
    }

    /// Spectral partial derivative along `axis`.
    pub fn partial(&self, axis: usize) -> Field {
        let mut data = self.spectrum();
        for (idx, v) in data.iter_mut().enumerate() {
            *v *= Complex64::new(0.0, self.grid.k_along(idx, axis));
        }
        self.grid.inverse(&mut data);
        Field { grid: self.grid.clone(), values: data }
    }

    pub fn gradient(&self) -> Vec<Field> {
        (0..self.grid.d()).map(|axis| self.partial(axis)).collect()
    }

    /// Writes the field in the `CFLD1` binary layout.
    pub fn write_cfld<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + 16 * self.values.len());
        buf.extend_from_slice(CFLD_MAGIC);
        buf.extend_from_slice(&(self.grid.d() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.grid.n() as u32).to_le_bytes());
        buf.extend_from_slice(&self.grid.ell().to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cfld<R: Read>(mut r: R) -> Result<Field> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_cfld_bytes(&bytes)
    }

    pub fn from_cfld_bytes(bytes: &[u8]) -> Result<Field> {
        if bytes.len() < 24 {
            return Err(Error::Format(format!("CFLD1 header truncated ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != CFLD_MAGIC {
            return Err(Error::Format("bad CFLD1 magic".into()));
        }
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let ell = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let grid = Grid::new(d, n, ell)?;
        let body = &bytes[24..];
        if body.len() != 16 * grid.len() {
            return Err(Error::Format(format!(
                "CFLD1 payload has {} bytes, expected {}",
                body.len(),
                16 * grid.len()
            )));
        }
        let values = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Field::new(grid, values).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Free Schrödinger group `S_t = exp(itΔ)`: multiplies each mode by `exp(-it|k|^2)`.
pub fn free_propagator(u: &Field, t: f64) -> Result<Field> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("propagation time {t} is not finite")));
    }
    let mut out = u.clone();
    propagate_in_place(&mut out, t);
    Ok(out)
}

pub(crate) fn propagate_in_place(u: &mut Field, t: f64) {
    let grid = u.grid.clone();
    let data = &mut u.values;
    grid.forward(data);
    for (v, &k2) in data.iter_mut().zip(grid.ksq()) {
        *v *= Complex64::from_polar(1.0, -t * k2);
    }
    grid.inverse(data);
}

pub fn l2_norm(u: &Field) -> f64 {
    (u.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * u.grid.cell_volume()).sqrt()
}

/// L2 norm evaluated from the Fourier coefficients (Plancherel).
pub fn spectral_l2_norm(u: &Field) -> f64 {
    let spec = u.spectrum();
    let s: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    (s * u.grid.cell_volume() / u.grid.len() as f64).sqrt()
}

/// `‖∇u‖²` in L2.
pub fn gradient_norm_sqr(u: &Field) -> f64 {
    u.gradient().iter().map(|g| l2_norm(g).powi(2)).sum()
}

pub fn h1_norm(u: &Field) -> f64 {
    (l2_norm(u).powi(2) + gradient_norm_sqr(u)).sqrt()
}

pub fn lp_norm(u: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("lp exponent must be >= 1, got {p}")));
    }
    let s: f64 = u.values.iter().map(|v| v.norm().powf(p)).sum();
    Ok((s * u.grid.cell_volume()).powf(1.0 / p))
}

/// `Re ∫ u v̄ dx`.
pub fn inner_product_real(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    let s: f64 = u.values.iter().zip(&v.values).map(|(a, b)| (a * b.conj()).re).sum();
    Ok(s * u.grid.cell_volume())
}

/// Radial cutoff profile: 1 on `[0,1]`, 0 on `[2,∞)`, quintic smoothstep between.
pub fn cutoff_profile(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let q = s - 1.0;
        1.0 - q * q * q * (10.0 - 15.0 * q + 6.0 * q * q)
    }
}

/// `‖ζ_R u‖_{L²}` with `ζ_R(x) = cutoff_profile(|x|/R)`.
pub fn localized_l2(u: &Field, radius: f64) -> Result<f64> {
    let grid = &u.grid;
    if !(radius > 0.0 && 2.0 * radius <= 0.5 * grid.ell()) {
        return Err(Error::InvalidParameter(format!(
            "localization radius {radius} must satisfy 0 < 2R <= ell/2 = {}",
            0.5 * grid.ell()
        )));
    }
    let mut x = vec![0.0; grid.d()];
    let mut s = 0.0;
    for (idx, v) in u.values.iter().enumerate() {
        grid.coords(idx, &mut x);
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let z = cutoff_profile(r / radius);
        if z > 0.0 {
            s += z * z * v.norm_sqr();
        }
    }
    Ok((s * grid.cell_volume()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_examples() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        let k = g.wavenumbers();
        let expect: Vec<f64> = (-4..4).map(|j| j as f64).collect();
        for (a, b) in k.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let g2 = Grid::new(2, 16, 1.0).unwrap();
        assert_eq!(g2.len(), 256);
        assert_eq!(g2.dx(), 1.0 / 16.0);
        assert!(Grid::new(1, 7, 1.0).is_err());
        assert!(Grid::new(4, 8, 1.0).is_err());
        assert!(Grid::new(1, 4, 1.0).is_err());
        assert!(Grid::new(1, 8, -1.0).is_err());
    }

    #[test]
    fn wavenumbers_symmetric_up_to_nyquist() {
        let g = Grid::new(1, 16, 3.0).unwrap();
        let k = g.wavenumbers();
        // k[0] is the Nyquist mode; the rest pairs up.
        for j in 1..8 {
            assert_eq!(k[j], -k[16 - j]);
        }
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = Grid::new(1, 32, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0])).unwrap();
        let t = 0.41;
        let v = free_propagator(&u, t).unwrap();
        let phase = Complex64::from_polar(1.0, -t * 9.0);
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a * phase - b).norm() < 1e-13);
        }
        let w = free_propagator(&u, 0.0).unwrap();
        for (a, b) in u.values().iter().zip(w.values()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let u = Field::new(g.clone(), vec![c(0.6, -0.8) * 2.5; 16]).unwrap();
        assert!((l2_norm(&u) - 2.5).abs() < 1e-14);

        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, |x| Complex64::from_polar(1.0, x[0])).unwrap();
        let h1 = h1_norm(&u);
        assert!((h1 * h1 - 2.0 * l2_norm(&u).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_examples() {
        let g = Grid::new(2, 8, 1.3).unwrap();
        let u = Field::from_fn(&g, |x| c(x[0].sin(), x[1] * x[0])).unwrap();
        let iu = Field::new(g.clone(), u.values().iter().map(|v| v * c(0.0, 1.0)).collect()).unwrap();
        assert!(inner_product_real(&u, &iu).unwrap().abs() < 1e-15);
        assert!((inner_product_real(&u, &u).unwrap() - l2_norm(&u).powi(2)).abs() < 1e-14);
        let other = Field::zeros(&Grid::new(2, 16, 1.3).unwrap());
        assert!(matches!(inner_product_real(&u, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn multi_dimensional_partials() {
        let g = Grid::new(3, 8, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, |x| Complex64::from_polar(1.0, x[0] + 2.0 * x[1] - 3.0 * x[2])).unwrap();
        let grad = u.gradient();
        for (axis, kk) in [1.0, 2.0, -3.0].iter().enumerate() {
            for (a, b) in u.values().iter().zip(grad[axis].values()) {
                assert!((a * c(0.0, *kk) - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cutoff_and_localization() {
        assert_eq!(cutoff_profile(0.5), 1.0);
        assert_eq!(cutoff_profile(2.5), 0.0);
        assert!((cutoff_profile(1.5) - 0.5).abs() < 1e-15);
        let g = Grid::new(1, 64, 8.0).unwrap();
        let inner = Field::from_fn(&g, |x| if x[0].abs() <= 0.9 { c(1.0, 2.0) } else { c(0.0, 0.0) }).unwrap();
        assert!((localized_l2(&inner, 1.0).unwrap() - l2_norm(&inner)).abs() < 1e-14);
        let outer = Field::from_fn(&g, |x| if x[0].abs() >= 2.0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
        assert_eq!(localized_l2(&outer, 1.0).unwrap(), 0.0);
        assert!(localized_l2(&outer, 2.5).is_err());
    }

    #[test]
    fn cfld_roundtrip_and_truncation() {
        let g = Grid::new(2, 8, 1.5).unwrap();
        let u = Field::from_fn(&g, |x| c(x[0], -x[1])).unwrap();
        let mut buf = Vec::new();
        u.write_cfld(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 + 16 * 64);
        assert_eq!(&buf[..8], b"CFLD0001");
        let back = Field::from_cfld_bytes(&buf).unwrap();
        assert_eq!(back, u);
        assert!(Field::from_cfld_bytes(&buf[..buf.len() - 3]).is_err());
        assert!(Field::from_cfld_bytes(&buf[..10]).is_err());
    }
}
