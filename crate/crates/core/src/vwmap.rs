//! The perturbed Vafa-Witten map on the lattice, its linearization, the
//! linearized gauge action, and their exact transposes.
//!
//! With `Configuration = (A, B, C)` and a pointwise perturbation `τ`,
//!
//! ```text
//! F(τ, A, B, C) = ( d_A^*B + d_A C ,
//!                   F_A⁺ + ⅛[B·B] + ½[B, C] + τB )
//! ```
//!
//! Adjoints are exact transposes of the discrete operators under
//! [`crate::lattice::inner`]; the continuum formulas only serve as
//! pointwise cross-checks.

use rayon::prelude::*;

use crate::algebra::{
    g_bracket_one, lie_bracket, sd_bracket_g, sd_dot_sd, sd_pair_to_g, AdOneForm, AdSelfDual, LieVec, TauMat,
};
use crate::error::{Error, Result};
use crate::lattice::{
    cov_d0, cov_d0_star, cov_d_plus, cov_dstar_sd, curvature_plus, dstar_bracket, same_grid, Configuration, Field,
    Grid, LatticeVector, Residual, SiteValue,
};

pub use crate::lattice::Configuration as Config;

/// Tangent vector `(δτ, a, b, c)`; `dtau = None` is the fixed-τ restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    pub dtau: Option<Field<TauMat>>,
    pub a: Field<AdOneForm>,
    pub b: Field<AdSelfDual>,
    pub c: Field<LieVec>,
}

impl TangentVec {
    pub fn zeros(grid: Grid, with_dtau: bool) -> Self {
        TangentVec {
            dtau: with_dtau.then(|| Field::zeros(grid)),
            a: Field::zeros(grid),
            b: Field::zeros(grid),
            c: Field::zeros(grid),
        }
    }

    pub fn from_parts(cfg: Configuration, dtau: Option<Field<TauMat>>) -> Result<Self> {
        if let Some(d) = &dtau {
            same_grid(&d.grid, &cfg.a.grid)?;
        }
        Ok(TangentVec { dtau, a: cfg.a, b: cfg.b, c: cfg.c })
    }

    /// The `(a, b, c)` block as a configuration-shaped vector.
    pub fn abc(&self) -> Configuration {
        Configuration { a: self.a.clone(), b: self.b.clone(), c: self.c.clone() }
    }

    pub fn without_dtau(&self) -> Self {
        TangentVec { dtau: None, ..self.clone() }
    }

    fn check(&self) -> Result<()> {
        same_grid(&self.a.grid, &self.b.grid)?;
        same_grid(&self.a.grid, &self.c.grid)?;
        if let Some(d) = &self.dtau {
            same_grid(&self.a.grid, &d.grid)?;
        }
        Ok(())
    }
}

impl LatticeVector for TangentVec {
    fn grid(&self) -> &Grid {
        &self.a.grid
    }

    /// `[a | b | c | δτ?]`.
    fn to_flat(&self) -> Vec<f64> {
        let mut out = self.a.to_flat();
        out.extend(self.b.to_flat());
        out.extend(self.c.to_flat());
        if let Some(d) = &self.dtau {
            out.extend(d.to_flat());
        }
        out
    }
}

/// Element `(φ, ψ)` of the target space, as it appears in the cokernel pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentVec {
    pub phi: Field<AdOneForm>,
    pub psi: Field<AdSelfDual>,
}

impl From<Residual> for CotangentVec {
    fn from(r: Residual) -> Self {
        CotangentVec { phi: r.one_form, psi: r.sd_form }
    }
}

impl From<CotangentVec> for Residual {
    fn from(w: CotangentVec) -> Self {
        Residual { one_form: w.phi, sd_form: w.psi }
    }
}

/// `(τB)[a][α] = Σ_β τ[α][β] B[a][β]` per site.
pub fn tau_apply(tau: &Field<TauMat>, b: &Field<AdSelfDual>) -> Result<Field<AdSelfDual>> {
    tau.zip_map(b, |t, v| t.apply(v))
}

/// Transpose of `δτ ↦ δτ·B` at one site: `δτ[α][β] = Σ_a ψ[a][α] B[a][β]`.
pub fn tau_pairing(psi: &AdSelfDual, b: &AdSelfDual) -> TauMat {
    TauMat(std::array::from_fn(|alpha| {
        std::array::from_fn(|beta| (0..3).map(|a| psi.0[a][alpha] * b.0[a][beta]).sum())
    }))
}

fn check_cfg(tau: Option<&Field<TauMat>>, cfg: &Configuration) -> Result<()> {
    same_grid(&cfg.a.grid, &cfg.b.grid)?;
    same_grid(&cfg.a.grid, &cfg.c.grid)?;
    if let Some(t) = tau {
        same_grid(&cfg.a.grid, &t.grid)?;
    }
    Ok(())
}

/// The perturbed map.
pub fn eval_f(tau: &Field<TauMat>, cfg: &Configuration) -> Result<Residual> {
    check_cfg(Some(tau), cfg)?;
    let mut one_form = cov_dstar_sd(&cfg.a, &cfg.b)?;
    let d_c = cov_d0(&cfg.a, &cfg.c)?;
    one_form.data.par_iter_mut().zip(&d_c.data).for_each(|(x, y)| *x += *y);

    let mut sd_form = curvature_plus(&cfg.a);
    sd_form.data.par_iter_mut().enumerate().for_each(|(s, out)| {
        let (b, c, t) = (&cfg.b.data[s], cfg.c.data[s], &tau.data[s]);
        *out += sd_dot_sd(b, b) * 0.125 + sd_bracket_g(b, c) * 0.5 + t.apply(b);
    });
    Residual::new(one_form, sd_form)
}

/// Exact derivative of [`eval_f`] at `(τ, cfg)` in direction `v`.
///
/// The `A`-derivative of `d_A^*B` is the pointwise term `dstar_bracket(B, a)`,
/// which equals `½[B·a]` in these conventions.
pub fn apply_df(tau: &Field<TauMat>, cfg: &Configuration, v: &TangentVec) -> Result<Residual> {
    check_cfg(Some(tau), cfg)?;
    v.check()?;
    same_grid(&cfg.a.grid, &v.a.grid)?;

    let mut one_form = cov_dstar_sd(&cfg.a, &v.b)?;
    let d_c = cov_d0(&cfg.a, &v.c)?;
    one_form.data.par_iter_mut().enumerate().for_each(|(s, out)| {
        let (b, c, a) = (&cfg.b.data[s], cfg.c.data[s], &v.a.data[s]);
        *out += d_c.data[s] + dstar_bracket(b, a) - g_bracket_one(c, a);
    });

    let mut sd_form = cov_d_plus(&cfg.a, &v.a)?;
    sd_form.data.par_iter_mut().enumerate().for_each(|(s, out)| {
        let (b, c, t) = (&cfg.b.data[s], cfg.c.data[s], &tau.data[s]);
        let (vb, vc) = (&v.b.data[s], v.c.data[s]);
        *out += sd_dot_sd(b, vb) * 0.25 + sd_bracket_g(vb, c) * 0.5 + sd_bracket_g(b, vc) * 0.5 + t.apply(vb);
        if let Some(dtau) = &v.dtau {
            *out += dtau.data[s].apply(b);
        }
    });
    Residual::new(one_form, sd_form)
}

/// Linearized gauge action `ξ ↦ (0, d_A ξ, [B, ξ], [C, ξ])`.
pub fn apply_d0(cfg: &Configuration, xi: &Field<LieVec>) -> Result<TangentVec> {
    check_cfg(None, cfg)?;
    same_grid(&cfg.a.grid, &xi.grid)?;
    Ok(TangentVec {
        dtau: Some(Field::zeros(xi.grid)),
        a: cov_d0(&cfg.a, xi)?,
        b: cfg.b.zip_map(xi, |b, x| sd_bracket_g(b, *x))?,
        c: cfg.c.zip_map(xi, |c, x| lie_bracket(*c, *x))?,
    })
}

/// Exact transpose of [`apply_d0`]; the `δτ` block of `v` is ignored.
/// Pointwise this is `d_A^*a + [b·B] + [c, C]`.
pub fn apply_d0_star(cfg: &Configuration, v: &TangentVec) -> Result<Field<LieVec>> {
    check_cfg(None, cfg)?;
    v.check()?;
    same_grid(&cfg.a.grid, &v.a.grid)?;
    let mut out = cov_d0_star(&cfg.a, &v.a)?;
    out.data.par_iter_mut().enumerate().for_each(|(s, o)| {
        *o += sd_pair_to_g(&v.b.data[s], &cfg.b.data[s]) + lie_bracket(v.c.data[s], cfg.c.data[s]);
    });
    Ok(out)
}

/// Transpose of `a ↦ dstar_bracket(B, a)` at one site.
fn dstar_bracket_transpose(b: &AdSelfDual, phi: &AdOneForm) -> AdOneForm {
    let mut out = AdOneForm::ZERO;
    for (alpha, pairs) in crate::algebra::SD_PAIRS.iter().enumerate() {
        let b_alpha = b.col(alpha);
        for &(k, l) in pairs {
            out.set_comp(k, out.comp(k) + lie_bracket(phi.comp(l), b_alpha) * 0.5);
            out.set_comp(l, out.comp(l) - lie_bracket(phi.comp(k), b_alpha) * 0.5);
        }
    }
    out
}

/// Pointwise (derivative-free) part of [`apply_df_star`] at one site, with the
/// connection set to zero. Returned as `(a, b, c, δτ)` blocks.
pub fn df_star_algebraic(
    tau: &TauMat,
    b: &AdSelfDual,
    c: LieVec,
    phi: &AdOneForm,
    psi: &AdSelfDual,
) -> (AdOneForm, AdSelfDual, LieVec, TauMat) {
    let a_part = dstar_bracket_transpose(b, phi) + g_bracket_one(c, phi);
    let b_part = sd_dot_sd(b, psi) * 0.25 + sd_bracket_g(psi, c) * -0.5 + tau.transpose().apply(psi);
    let c_part = sd_pair_to_g(psi, b) * 0.5;
    (a_part, b_part, c_part, tau_pairing(psi, b))
}

/// Exact transpose of [`apply_df`] including the `δτ` block.
pub fn apply_df_star(tau: &Field<TauMat>, cfg: &Configuration, w: &CotangentVec) -> Result<TangentVec> {
    check_cfg(Some(tau), cfg)?;
    same_grid(&w.phi.grid, &w.psi.grid)?;
    same_grid(&cfg.a.grid, &w.phi.grid)?;

    let mut a = cov_dstar_sd(&cfg.a, &w.psi)?;
    a.data.par_iter_mut().enumerate().for_each(|(s, out)| {
        let phi = &w.phi.data[s];
        // −[C, a] pairs with φ as [C, φ_k].
        *out += dstar_bracket_transpose(&cfg.b.data[s], phi) + g_bracket_one(cfg.c.data[s], phi);
    });

    let mut b = cov_d_plus(&cfg.a, &w.phi)?;
    b.data.par_iter_mut().enumerate().for_each(|(s, out)| {
        let (bb, c, t, psi) = (&cfg.b.data[s], cfg.c.data[s], &tau.data[s], &w.psi.data[s]);
        *out += sd_dot_sd(bb, psi) * 0.25 + sd_bracket_g(psi, c) * -0.5 + t.transpose().apply(psi);
    });

    let mut c = cov_d0_star(&cfg.a, &w.phi)?;
    c.data.par_iter_mut().enumerate().for_each(|(s, out)| {
        *out += sd_pair_to_g(&w.psi.data[s], &cfg.b.data[s]) * 0.5;
    });

    let dtau = w.psi.zip_map(&cfg.b, tau_pairing)?;
    Ok(TangentVec { dtau: Some(dtau), a, b, c })
}

/// Per-site block widths of the square operator: `(a, b, c)` in and
/// `(one-form, self-dual, gauge)` out.
pub const BLOCKS: [usize; 3] = [AdOneForm::LEN, AdSelfDual::LEN, LieVec::LEN];
pub const COMPONENTS_PER_SITE: usize = AdOneForm::LEN + AdSelfDual::LEN + LieVec::LEN;

/// Default cap on materialized operator dimension.
pub const DEFAULT_MATERIALIZE_LIMIT: usize = 200_000;

/// `D(a, b, c) = (dF_{(τ,A,B,C)}(0, a, b, c), d^{0,*}(a, b, c))`, square of
/// dimension `24 · sites`. Flat layout `[a | b | c]` in, `[φ | ψ | ξ]` out,
/// each block site-major.
#[derive(Debug, Clone)]
pub struct DeformationOperator {
    tau: Field<TauMat>,
    cfg: Configuration,
}

impl DeformationOperator {
    pub fn new(tau: &Field<TauMat>, cfg: &Configuration) -> Result<Self> {
        check_cfg(Some(tau), cfg)?;
        Ok(DeformationOperator { tau: tau.clone(), cfg: cfg.clone() })
    }

    pub fn grid(&self) -> Grid {
        self.cfg.grid()
    }

    pub fn nrows(&self) -> usize {
        COMPONENTS_PER_SITE * self.grid().sites()
    }

    pub fn ncols(&self) -> usize {
        Configuration::flat_len(&self.grid())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = TangentVec::from_parts(Configuration::from_flat(self.grid(), x)?, None)?;
        let r = apply_df(&self.tau, &self.cfg, &v)?;
        let g = apply_d0_star(&self.cfg, &v)?;
        let mut out = r.to_flat();
        out.extend(g.to_flat());
        Ok(out)
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        let n_res = grid.sites() * (AdOneForm::LEN + AdSelfDual::LEN);
        if y.len() != self.nrows() {
            return Err(Error::ShapeMismatch { expected: self.nrows(), got: y.len() });
        }
        let w = CotangentVec::from(Residual::from_flat(grid, &y[..n_res])?);
        let xi = Field::<LieVec>::from_flat(grid, &y[n_res..])?;
        let from_df = apply_df_star(&self.tau, &self.cfg, &w)?;
        let from_d0 = apply_d0(&self.cfg, &xi)?;
        let sum = from_df.abc().axpy(1.0, &from_d0.a, &from_d0.b, &from_d0.c)?;
        Ok(sum.to_flat())
    }

    /// Sparse assembly by probing: sites whose stencil supports are disjoint
    /// share a probe vector, so the number of operator applications is
    /// `24 · colors` instead of `24 · sites`.
    pub fn materialize(&self, limit: usize) -> Result<SparseMatrix> {
        let grid = self.grid();
        let dim = self.ncols();
        if dim > limit {
            return Err(Error::TooLarge { dim, limit });
        }
        let n = grid.sites();
        let support = |s: usize| -> Vec<usize> {
            let mut out = vec![s];
            for k in 0..4 {
                out.push(grid.neighbor(s, k, true));
                out.push(grid.neighbor(s, k, false));
            }
            out
        };
        let colors = greedy_coloring(n, |s| {
            let mut conflicts = Vec::new();
            for t in support(s) {
                conflicts.extend(support(t));
            }
            conflicts
        });
        let ncolors = colors.iter().copied().max().map_or(0, |c| c + 1);

        let offsets = block_offsets(n);
        let index = |site: usize, comp: usize| -> usize {
            let (block, within) = split_component(comp);
            offsets[block] + site * BLOCKS[block] + within
        };

        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for color in 0..ncolors {
            let members: Vec<usize> = (0..n).filter(|&s| colors[s] == color).collect();
            for comp in 0..COMPONENTS_PER_SITE {
                let mut x = vec![0.0; dim];
                for &s in &members {
                    x[index(s, comp)] = 1.0;
                }
                let y = self.apply(&x)?;
                for &s in &members {
                    let col = index(s, comp);
                    for t in support(s) {
                        for out_comp in 0..COMPONENTS_PER_SITE {
                            let row = index(t, out_comp);
                            if y[row] != 0.0 {
                                triplets.push((row, col, y[row]));
                            }
                        }
                    }
                }
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        triplets.dedup_by(|p, q| p.0 == q.0 && p.1 == q.1);
        Ok(SparseMatrix::from_sorted_triplets(self.nrows(), dim, &triplets))
    }
}

fn block_offsets(sites: usize) -> [usize; 3] {
    [0, sites * BLOCKS[0], sites * (BLOCKS[0] + BLOCKS[1])]
}

fn split_component(comp: usize) -> (usize, usize) {
    if comp < BLOCKS[0] {
        (0, comp)
    } else if comp < BLOCKS[0] + BLOCKS[1] {
        (1, comp - BLOCKS[0])
    } else {
        (2, comp - BLOCKS[0] - BLOCKS[1])
    }
}

fn greedy_coloring(n: usize, conflicts: impl Fn(usize) -> Vec<usize>) -> Vec<usize> {
    let mut colors = vec![usize::MAX; n];
    for s in 0..n {
        let taken: Vec<usize> = conflicts(s).into_iter().filter(|&t| t != s).map(|t| colors[t]).collect();
        colors[s] = (0..).find(|c| !taken.contains(c)).unwrap();
    }
    colors
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    fn from_sorted_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut indptr = vec![0; nrows + 1];
        for &(r, _, _) in triplets {
            indptr[r + 1] += 1;
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        SparseMatrix {
            nrows,
            ncols,
            indptr,
            indices: triplets.iter().map(|t| t.1).collect(),
            values: triplets.iter().map(|t| t.2).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .into_par_iter()
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|i| self.values[i] * x[self.indices[i]]).sum())
            .collect()
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for i in self.indptr[r]..self.indptr[r + 1] {
                out[self.indices[i]] += self.values[i] * y[r];
            }
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for i in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[i])] = self.values[i];
            }
        }
        m
    }
}
