//! Periodic flat 4-torus: grid geometry, per-site field containers, the
//! central-difference exterior calculus and the `L²` pairing.

mod io;
mod ops;

use std::ops::{Add, AddAssign, Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{AdOneForm, AdSelfDual, LieVec, TauMat};
use crate::error::{Error, Result};

pub use io::{FieldRecord, Vwf1, VWF1_MAGIC};
pub use ops::{
    constant_gauge_rotate, cov_d0, cov_d0_star, cov_d_plus, cov_dstar_sd, curvature_plus, dstar_bracket,
    flat_divergence_sd, partial,
};

/// Uniform periodic grid with `dims[i] ≥ 3` points per direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 4],
    pub h: f64,
}

impl Grid {
    pub fn new(dims: [usize; 4], h: f64) -> Result<Self> {
        if let Some(n) = dims.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGrid(format!("every dimension must be at least 3, got {n}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive and finite, got {h}")));
        }
        Ok(Grid { dims, h })
    }

    pub fn cubic(n: usize, h: f64) -> Result<Self> {
        Grid::new([n; 4], h)
    }

    pub fn sites(&self) -> usize {
        self.dims.iter().product()
    }

    /// Volume weight `h⁴` of one site.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(4)
    }

    fn stride(&self, k: usize) -> usize {
        self.dims[k + 1..].iter().product()
    }

    /// `((i₁·n₂ + i₂)·n₃ + i₃)·n₄ + i₄`.
    pub fn index(&self, coords: [usize; 4]) -> usize {
        ((coords[0] * self.dims[1] + coords[1]) * self.dims[2] + coords[2]) * self.dims[3] + coords[3]
    }

    pub fn coords(&self, site: usize) -> [usize; 4] {
        let mut rest = site;
        let mut out = [0; 4];
        for k in (0..4).rev() {
            out[k] = rest % self.dims[k];
            rest /= self.dims[k];
        }
        out
    }

    /// Periodic neighbor of `site` one step forward (`+e_k`) or backward.
    #[inline]
    pub fn neighbor(&self, site: usize, k: usize, forward: bool) -> usize {
        let stride = self.stride(k);
        let n = self.dims[k];
        let i = (site / stride) % n;
        match (forward, i) {
            (true, i) if i + 1 == n => site + stride - n * stride,
            (true, _) => site + stride,
            (false, 0) => site + (n - 1) * stride,
            (false, _) => site - stride,
        }
    }

    /// Cyclic translation of the whole grid by `offset`.
    pub fn translate(&self, site: usize, offset: [usize; 4]) -> usize {
        let c = self.coords(site);
        self.index(std::array::from_fn(|k| (c[k] + offset[k]) % self.dims[k]))
    }

    /// Physical coordinates `x = h · i` of a site.
    pub fn position(&self, site: usize) -> [f64; 4] {
        let c = self.coords(site);
        std::array::from_fn(|k| c[k] as f64 * self.h)
    }
}

/// A value stored at each lattice site.
pub trait SiteValue:
    Copy + Default + Send + Sync + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + AddAssign
{
    /// Number of real components.
    const LEN: usize;
    /// Row-major per-site shape, as recorded in VWF1 headers.
    const SHAPE: &'static [usize];

    fn write_to(&self, out: &mut [f64]);
    fn read_from(src: &[f64]) -> Self;
}

impl SiteValue for LieVec {
    const LEN: usize = 3;
    const SHAPE: &'static [usize] = &[3];

    fn write_to(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }

    fn read_from(src: &[f64]) -> Self {
        LieVec([src[0], src[1], src[2]])
    }
}

macro_rules! impl_matrix_site_value {
    ($ty:ty, $rows:expr, $shape:expr) => {
        impl SiteValue for $ty {
            const LEN: usize = $rows * 3;
            const SHAPE: &'static [usize] = &$shape;

            fn write_to(&self, out: &mut [f64]) {
                for (r, row) in self.0.iter().enumerate() {
                    out[3 * r..3 * r + 3].copy_from_slice(row);
                }
            }

            fn read_from(src: &[f64]) -> Self {
                let mut m = [[0.0; 3]; $rows];
                for (r, row) in m.iter_mut().enumerate() {
                    row.copy_from_slice(&src[3 * r..3 * r + 3]);
                }
                Self(m)
            }
        }
    };
}

impl_matrix_site_value!(AdOneForm, 4, [4, 3]);
impl_matrix_site_value!(AdSelfDual, 3, [3, 3]);
impl_matrix_site_value!(TauMat, 3, [3, 3]);

/// One value per site.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<V> {
    pub grid: Grid,
    pub data: Vec<V>,
}

impl<V: SiteValue> Field<V> {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, data: vec![V::default(); grid.sites()] }
    }

    pub fn constant(grid: Grid, v: V) -> Self {
        Field { grid, data: vec![v; grid.sites()] }
    }

    /// Builds a field site by site; sites are independent so this runs in
    /// parallel with a result that does not depend on the thread count.
    pub fn from_fn(grid: Grid, f: impl Fn(usize) -> V + Sync + Send) -> Self {
        let data = (0..grid.sites()).into_par_iter().map(f).collect();
        Field { grid, data }
    }

    pub fn map<W: SiteValue>(&self, f: impl Fn(&V) -> W + Sync + Send) -> Field<W> {
        Field { grid: self.grid, data: self.data.par_iter().map(f).collect() }
    }

    pub fn zip_map<U: SiteValue, W: SiteValue>(
        &self,
        other: &Field<U>,
        f: impl Fn(&V, &U) -> W + Sync + Send,
    ) -> Result<Field<W>> {
        same_grid(&self.grid, &other.grid)?;
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(x, y)| f(x, y)).collect();
        Ok(Field { grid: self.grid, data })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| *v * s)
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: f64, other: &Field<V>) -> Result<Self> {
        self.zip_map(other, |x, y| *x + *y * s)
    }

    pub fn add(&self, other: &Field<V>) -> Result<Self> {
        self.zip_map(other, |x, y| *x + *y)
    }

    pub fn sub(&self, other: &Field<V>) -> Result<Self> {
        self.zip_map(other, |x, y| *x - *y)
    }

    pub fn at(&self, site: usize) -> &V {
        &self.data[site]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == V::default())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len() * V::LEN];
        for (chunk, v) in out.chunks_exact_mut(V::LEN).zip(&self.data) {
            v.write_to(chunk);
        }
        out
    }

    pub fn from_flat(grid: Grid, flat: &[f64]) -> Result<Self> {
        let expected = grid.sites() * V::LEN;
        if flat.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: flat.len() });
        }
        Ok(Field { grid, data: flat.chunks_exact(V::LEN).map(V::read_from).collect() })
    }

    /// Cyclic translation: `out(x) = self(x − offset)`.
    pub fn translated(&self, offset: [usize; 4]) -> Self {
        let mut data = vec![V::default(); self.data.len()];
        for (site, v) in self.data.iter().enumerate() {
            data[self.grid.translate(site, offset)] = *v;
        }
        Field { grid: self.grid, data }
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Anything that lives on a grid and flattens to a coefficient vector.
pub trait LatticeVector {
    fn grid(&self) -> &Grid;
    fn to_flat(&self) -> Vec<f64>;
}

impl<V: SiteValue> LatticeVector for Field<V> {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn to_flat(&self) -> Vec<f64> {
        Field::to_flat(self)
    }
}

/// Sum in a fixed pairwise tree determined only by the length.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if x.len() <= LEAF {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// `h⁴ · Σ_sites Σ_components x·y`.
pub fn inner<T: LatticeVector>(x: &T, y: &T) -> Result<f64> {
    same_grid(x.grid(), y.grid())?;
    let (fx, fy) = (x.to_flat(), y.to_flat());
    if fx.len() != fy.len() {
        return Err(Error::ShapeMismatch { expected: fx.len(), got: fy.len() });
    }
    let products: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a * b).collect();
    Ok(x.grid().cell_volume() * pairwise_sum(&products))
}

/// [`inner`] accumulated with a compensated dot product (error-free products
/// and sums), as accurate as twice the working precision. Used where the
/// sum cancels heavily and the comparison must see the operands, not the
/// summation.
pub fn inner_compensated<T: LatticeVector>(x: &T, y: &T) -> Result<f64> {
    same_grid(x.grid(), y.grid())?;
    let (fx, fy) = (x.to_flat(), y.to_flat());
    if fx.len() != fy.len() {
        return Err(Error::ShapeMismatch { expected: fx.len(), got: fy.len() });
    }
    let (mut sum, mut err) = (0.0f64, 0.0f64);
    for (a, b) in fx.iter().zip(&fy) {
        let p = a * b;
        let p_err = a.mul_add(*b, -p);
        let t = sum + p;
        let z = t - sum;
        err += (sum - (t - z)) + (p - z) + p_err;
        sum = t;
    }
    Ok(x.grid().cell_volume() * (sum + err))
}

pub fn norm<T: LatticeVector>(x: &T) -> f64 {
    inner(x, x).expect("a vector is shape-compatible with itself").sqrt()
}

/// Value of the perturbed map: an ad-valued 1-form and an ad-valued
/// self-dual 2-form on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub one_form: Field<AdOneForm>,
    pub sd_form: Field<AdSelfDual>,
}

impl Residual {
    pub fn new(one_form: Field<AdOneForm>, sd_form: Field<AdSelfDual>) -> Result<Self> {
        same_grid(&one_form.grid, &sd_form.grid)?;
        Ok(Residual { one_form, sd_form })
    }

    pub fn zeros(grid: Grid) -> Self {
        Residual { one_form: Field::zeros(grid), sd_form: Field::zeros(grid) }
    }

    pub fn from_flat(grid: Grid, flat: &[f64]) -> Result<Self> {
        let n1 = grid.sites() * AdOneForm::LEN;
        let expected = n1 + grid.sites() * AdSelfDual::LEN;
        if flat.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: flat.len() });
        }
        Ok(Residual { one_form: Field::from_flat(grid, &flat[..n1])?, sd_form: Field::from_flat(grid, &flat[n1..])? })
    }

    pub fn rotate(&self, r: &[[f64; 3]; 3]) -> Self {
        Residual { one_form: self.one_form.map(|v| v.rotate(r)), sd_form: self.sd_form.map(|v| v.rotate(r)) }
    }
}

impl LatticeVector for Residual {
    fn grid(&self) -> &Grid {
        &self.one_form.grid
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = self.one_form.to_flat();
        out.extend(self.sd_form.to_flat());
        out
    }
}

/// Lattice fields `(A, B, C)` on the trivial `SU(2)` bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub a: Field<AdOneForm>,
    pub b: Field<AdSelfDual>,
    pub c: Field<LieVec>,
}

impl Configuration {
    pub fn new(a: Field<AdOneForm>, b: Field<AdSelfDual>, c: Field<LieVec>) -> Result<Self> {
        same_grid(&a.grid, &b.grid)?;
        same_grid(&a.grid, &c.grid)?;
        Ok(Configuration { a, b, c })
    }

    pub fn zeros(grid: Grid) -> Self {
        Configuration { a: Field::zeros(grid), b: Field::zeros(grid), c: Field::zeros(grid) }
    }

    pub fn grid(&self) -> Grid {
        self.a.grid
    }

    /// Number of real unknowns, `24 · sites`.
    pub fn flat_len(grid: &Grid) -> usize {
        grid.sites() * (AdOneForm::LEN + AdSelfDual::LEN + LieVec::LEN)
    }

    pub fn from_flat(grid: Grid, flat: &[f64]) -> Result<Self> {
        let expected = Configuration::flat_len(&grid);
        if flat.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: flat.len() });
        }
        let n = grid.sites();
        let (a, rest) = flat.split_at(n * AdOneForm::LEN);
        let (b, c) = rest.split_at(n * AdSelfDual::LEN);
        Ok(Configuration {
            a: Field::from_flat(grid, a)?,
            b: Field::from_flat(grid, b)?,
            c: Field::from_flat(grid, c)?,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Configuration { a: self.a.scale(s), b: self.b.scale(s), c: self.c.scale(s) }
    }

    /// `self + s · (da, db, dc)`.
    pub fn axpy(&self, s: f64, a: &Field<AdOneForm>, b: &Field<AdSelfDual>, c: &Field<LieVec>) -> Result<Self> {
        Ok(Configuration { a: self.a.axpy(s, a)?, b: self.b.axpy(s, b)?, c: self.c.axpy(s, c)? })
    }

    pub fn to_vwf1(&self) -> Vwf1 {
        let grid = self.grid();
        Vwf1 {
            grid,
            fields: vec![
                FieldRecord::from_field("A", &self.a),
                FieldRecord::from_field("B", &self.b),
                FieldRecord::from_field("C", &self.c),
            ],
        }
    }

    pub fn from_vwf1(file: &Vwf1) -> Result<Self> {
        Ok(Configuration {
            a: file.field::<AdOneForm>("A")?,
            b: file.field::<AdSelfDual>("B")?,
            c: file.field::<LieVec>("C")?,
        })
    }
}

impl LatticeVector for Configuration {
    fn grid(&self) -> &Grid {
        &self.a.grid
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = self.a.to_flat();
        out.extend(self.b.to_flat());
        out.extend(self.c.to_flat());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_inner_survives_cancellation() {
        let g = Grid::cubic(3, 1.0).unwrap();
        let mut x = Field::<LieVec>::zeros(g);
        let mut y = Field::<LieVec>::zeros(g);
        x.data[0] = LieVec::new(1e16, 1.0, -1e16);
        y.data[0] = LieVec::new(1.0, 1.0, 1.0);
        x.data[5] = LieVec::new(3.0, 0.0, 0.0);
        y.data[5] = LieVec::new(1.0 / 3.0, 0.0, 0.0);
        let exact = 1.0 + 3.0 * (1.0 / 3.0);
        assert_eq!(inner_compensated(&x, &y).unwrap(), exact);
        assert_ne!(inner(&x, &y).unwrap(), exact);
    }

    #[test]
    fn grid_rejects_small_dims() {
        assert!(Grid::new([3, 3, 2, 3], 1.0).is_err());
        assert!(Grid::new([3, 3, 3, 3], 0.0).is_err());
        assert!(Grid::new([3, 4, 5, 6], 0.5).is_ok());
    }

    #[test]
    fn index_roundtrip_and_neighbors() {
        let g = Grid::new([3, 4, 5, 6], 1.0).unwrap();
        for site in 0..g.sites() {
            assert_eq!(g.index(g.coords(site)), site);
            for k in 0..4 {
                let fwd = g.neighbor(site, k, true);
                assert_eq!(g.neighbor(fwd, k, false), site);
                let mut c = g.coords(site);
                c[k] = (c[k] + 1) % g.dims[k];
                assert_eq!(fwd, g.index(c));
            }
        }
    }

    #[test]
    fn inner_single_site_weight() {
        let g = Grid::cubic(3, 1.0).unwrap();
        let mut f = Field::<LieVec>::zeros(g);
        f.data[17] = LieVec::basis(1);
        assert_eq!(inner(&f, &f).unwrap(), 1.0);
        let g2 = Grid::cubic(3, 0.5).unwrap();
        let mut f2 = Field::<LieVec>::zeros(g2);
        f2.data[0] = LieVec::basis(0);
        assert_eq!(inner(&f2, &f2).unwrap(), 0.0625);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let f = Field::<LieVec>::zeros(Grid::cubic(3, 1.0).unwrap());
        let g = Field::<LieVec>::zeros(Grid::cubic(4, 1.0).unwrap());
        assert!(matches!(inner(&f, &g), Err(Error::GridMismatch)));
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&x), 499500.0);
    }

    #[test]
    fn configuration_flat_roundtrip() {
        let g = Grid::cubic(3, 1.0).unwrap();
        let flat: Vec<f64> = (0..Configuration::flat_len(&g)).map(|i| i as f64 * 0.5).collect();
        let cfg = Configuration::from_flat(g, &flat).unwrap();
        assert_eq!(cfg.to_flat(), flat);
        assert!(Configuration::from_flat(g, &flat[1..]).is_err());
    }
}
