//! Residual minimization, smallest singular values of the deformation
//! operator, and rank stratification of `B`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{AdSelfDual, TauMat, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::lattice::{inner, norm, pairwise_sum, Configuration, Field, Residual};
use crate::vwmap::{
    apply_df, apply_df_star, eval_f, CotangentVec, DeformationOperator, SparseMatrix, TangentVec,
    DEFAULT_MATERIALIZE_LIMIT,
};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "step")]
pub enum StepRule {
    Fixed(f64),
    /// Barzilai-Borwein secant step `⟨s,s⟩/⟨s,y⟩`.
    AdaptiveTwoPoint,
    /// Global minimizer of the energy along the search line. `F` is
    /// quadratic, so the energy along a line is a quartic polynomial whose
    /// coefficients cost one linearization and one quadratic-term evaluation.
    ExactLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `−∇E`.
    SteepestDescent,
    /// Polak-Ribière+ conjugate directions, reset to `−∇E` whenever the
    /// update is not a descent direction.
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub residual_tol: f64,
    pub step_rule: StepRule,
    pub direction: Direction,
    /// First trial step for the adaptive rule.
    pub initial_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            grad_tol: 1e-14,
            residual_tol: 1e-8,
            step_rule: StepRule::ExactLine,
            direction: Direction::ConjugateGradient,
            initial_step: 0.1,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} must be positive and finite")));
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return bad("grad_tol");
        }
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return bad("residual_tol");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step");
        }
        if let StepRule::Fixed(s) = self.step_rule {
            if !(s > 0.0 && s.is_finite()) {
                return bad("fixed step");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualTol,
    GradTol,
    MaxIters,
    /// No step length in the backtracking range decreased the energy.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub config: Configuration,
    pub history: Vec<IterRecord>,
    pub termination: Termination,
    pub residual_norm: f64,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::ResidualTol
    }
}

/// `E = ½‖F(τ, cfg)‖²`.
pub fn energy(tau: &Field<TauMat>, cfg: &Configuration) -> Result<f64> {
    let r = eval_f(tau, cfg)?;
    Ok(0.5 * inner(&r, &r)?)
}

/// `∇E = (dF)ᵀ F` restricted to `(a, b, c)`, with the energy.
pub fn energy_gradient(tau: &Field<TauMat>, cfg: &Configuration) -> Result<(Configuration, f64)> {
    let (g, e, _) = gradient_and_residual(tau, cfg)?;
    Ok((g, e))
}

fn gradient_and_residual(tau: &Field<TauMat>, cfg: &Configuration) -> Result<(Configuration, f64, Residual)> {
    let r = eval_f(tau, cfg)?;
    let e = 0.5 * inner(&r, &r)?;
    let g = apply_df_star(tau, cfg, &CotangentVec::from(r.clone()))?;
    Ok((g.abc(), e, r))
}

/// Coefficients `e₀..e₄` of `t ↦ E(cfg + t·dir)`, from
/// `F(cfg + t·dir) = F₀ + t·dF(dir) + t²·Q(dir)`.
pub fn line_energy(tau: &Field<TauMat>, cfg: &Configuration, f0: &Residual, dir: &Configuration) -> Result<[f64; 5]> {
    let grid = cfg.grid();
    let v = TangentVec::from_parts(dir.clone(), None)?;
    let f1 = apply_df(tau, cfg, &v)?;
    // Q(dir): everything in F(0; dir) that the linearization at the origin misses.
    let zero_tau = Field::zeros(grid);
    let full = eval_f(&zero_tau, dir)?;
    let lin0 = apply_df(&zero_tau, &Configuration::zeros(grid), &v)?;
    let f2 = Residual::new(full.one_form.sub(&lin0.one_form)?, full.sd_form.sub(&lin0.sd_form)?)?;
    Ok([
        0.5 * inner(f0, f0)?,
        inner(f0, &f1)?,
        0.5 * inner(&f1, &f1)? + inner(f0, &f2)?,
        inner(&f1, &f2)?,
        0.5 * inner(&f2, &f2)?,
    ])
}

/// Global minimizer of `e₀ + e₁t + e₂t² + e₃t³ + e₄t⁴` over real `t`
/// (`0` if nothing beats the origin).
pub fn quartic_argmin(e: [f64; 5]) -> f64 {
    let value = |t: f64| e[0] + t * (e[1] + t * (e[2] + t * (e[3] + t * e[4])));
    let slope = |t: f64| e[1] + t * (2.0 * e[2] + t * (3.0 * e[3] + t * 4.0 * e[4]));
    let curve = |t: f64| 2.0 * e[2] + t * (6.0 * e[3] + t * 12.0 * e[4]);

    let mut candidates = Vec::new();
    if e[4] != 0.0 {
        let (a, b, c) = (3.0 * e[3] / (4.0 * e[4]), 2.0 * e[2] / (4.0 * e[4]), e[1] / (4.0 * e[4]));
        let companion = nalgebra::Matrix3::new(-a, -b, -c, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        candidates.extend(companion.complex_eigenvalues().iter().map(|z| z.re));
    } else if e[3] != 0.0 {
        let (a, b, c) = (3.0 * e[3], 2.0 * e[2], e[1]);
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            candidates.push((-b + disc.sqrt()) / (2.0 * a));
            candidates.push((-b - disc.sqrt()) / (2.0 * a));
        }
    } else if e[2] > 0.0 {
        candidates.push(-e[1] / (2.0 * e[2]));
    }

    let mut best = (0.0, value(0.0));
    for mut t in candidates {
        // Polish each stationary point with a few Newton steps.
        for _ in 0..3 {
            let c = curve(t);
            if c == 0.0 {
                break;
            }
            let next = t - slope(t) / c;
            if !next.is_finite() {
                break;
            }
            t = next;
        }
        if t.is_finite() && value(t) < best.1 {
            best = (t, value(t));
        }
    }
    best.0
}

const MAX_HALVINGS: usize = 60;

/// First-order descent on `E = ½‖F‖²` with the gradient taken through the
/// exact transpose of the linearization. Accepted steps never increase the
/// energy; a trial step that would is halved until it does not.
pub fn minimize_residual(tau: &Field<TauMat>, init: &Configuration, opts: &SolveOptions) -> Result<SolveOutcome> {
    minimize_residual_observed(tau, init, opts, |_| {})
}

/// [`minimize_residual`], calling `observe` on each history record as it is produced.
pub fn minimize_residual_observed(
    tau: &Field<TauMat>,
    init: &Configuration,
    opts: &SolveOptions,
    mut observe: impl FnMut(&IterRecord),
) -> Result<SolveOutcome> {
    opts.validate()?;
    let mut x = init.clone();
    let (mut grad, mut e, mut res) = gradient_and_residual(tau, &x)?;
    let mut gnorm = norm(&grad);
    if !e.is_finite() || !gnorm.is_finite() {
        return Err(Error::Diverged { iter: 0 });
    }
    let mut history = vec![IterRecord { iter: 0, energy: e, grad_norm: gnorm }];
    observe(&history[0]);
    let mut dir = grad.scale(-1.0);
    let mut step = match opts.step_rule {
        StepRule::Fixed(s) => s,
        _ => opts.initial_step,
    };

    let termination = loop {
        if (2.0 * e).sqrt() <= opts.residual_tol {
            break Termination::ResidualTol;
        }
        if gnorm <= opts.grad_tol {
            break Termination::GradTol;
        }
        let iter = history.len();
        if iter > opts.max_iters {
            break Termination::MaxIters;
        }

        let mut trial_step = match opts.step_rule {
            StepRule::Fixed(s) => s,
            StepRule::AdaptiveTwoPoint => step,
            StepRule::ExactLine => {
                let dn = norm(&dir);
                let unit = dir.scale(1.0 / dn);
                let t = quartic_argmin(line_energy(tau, &x, &res, &unit)?) / dn;
                if t > 0.0 && t.is_finite() {
                    t
                } else {
                    // Not a descent line numerically; fall back to steepest descent.
                    dir = grad.scale(-1.0);
                    let dn = norm(&dir);
                    let unit = dir.scale(1.0 / dn);
                    quartic_argmin(line_energy(tau, &x, &res, &unit)?).max(0.0) / dn
                }
            }
        };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = x.axpy(trial_step, &dir.a, &dir.b, &dir.c)?;
            let e_trial = energy(tau, &trial)?;
            if e_trial.is_finite() && e_trial <= e && trial_step > 0.0 {
                accepted = Some(trial);
                break;
            }
            trial_step *= 0.5;
        }
        let Some(next) = accepted else {
            break Termination::Stalled;
        };

        let (next_grad, next_e, next_res) = gradient_and_residual(tau, &next)?;
        let next_gnorm = norm(&next_grad);
        if !next_e.is_finite() || !next_gnorm.is_finite() {
            return Err(Error::Diverged { iter });
        }
        let y = next_grad.axpy(-1.0, &grad.a, &grad.b, &grad.c)?;
        if opts.step_rule == StepRule::AdaptiveTwoPoint {
            let s = dir.scale(trial_step);
            let (ss, sy) = (inner(&s, &s)?, inner(&s, &y)?);
            step = if sy > 0.0 && ss > 0.0 { ss / sy } else { 2.0 * trial_step };
        }
        dir = match opts.direction {
            Direction::SteepestDescent => next_grad.scale(-1.0),
            Direction::ConjugateGradient => {
                let beta = (inner(&next_grad, &y)? / (gnorm * gnorm)).max(0.0);
                let candidate = dir.scale(beta).axpy(-1.0, &next_grad.a, &next_grad.b, &next_grad.c)?;
                if inner(&candidate, &next_grad)? < 0.0 {
                    candidate
                } else {
                    next_grad.scale(-1.0)
                }
            }
        };
        x = next;
        grad = next_grad;
        e = next_e;
        res = next_res;
        gnorm = next_gnorm;
        history.push(IterRecord { iter, energy: e, grad_norm: gnorm });
        observe(&history[iter]);
    };

    Ok(SolveOutcome { residual_norm: (2.0 * e).sqrt(), config: x, history, termination })
}

/// Result of [`stratify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    /// Site counts for rank 0, 1, 2, 3.
    pub rank_histogram: [usize; 4],
    pub x3_fraction: f64,
    pub min_sigma3: f64,
    pub ranks: Vec<usize>,
}

/// Per-site rank of `B` against a single threshold `rel_tol · max σ₁`.
pub fn stratify(b: &Field<AdSelfDual>, rel_tol: f64) -> Result<Stratification> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let svals: Vec<[f64; 3]> = b.data.iter().map(AdSelfDual::singular_values).collect();
    let sigma1 = svals.iter().map(|s| s[0]).fold(0.0, f64::max);
    let threshold = rel_tol * sigma1;
    let ranks: Vec<usize> =
        svals.iter().map(|s| if sigma1 == 0.0 { 0 } else { s.iter().filter(|&&v| v > threshold).count() }).collect();
    let mut rank_histogram = [0usize; 4];
    for &r in &ranks {
        rank_histogram[r] += 1;
    }
    let min_sigma3 = svals.iter().map(|s| s[2]).fold(f64::INFINITY, f64::min);
    Ok(Stratification { rank_histogram, x3_fraction: rank_histogram[3] as f64 / ranks.len() as f64, min_sigma3, ranks })
}

/// Rank of the 9×9 map `δτ ↦ δτ·B` at one site.
pub fn param_rank(b: &AdSelfDual) -> usize {
    let m = DMatrix::from_fn(9, 9, |row, col| {
        let mut unit = TauMat::ZERO;
        unit.0[col / 3][col % 3] = 1.0;
        unit.apply(b).0[row / 3][row % 3]
    });
    let s = m.singular_values();
    let smax = s.max();
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > DEFAULT_RANK_TOL * smax).count()
}

/// [`param_rank`] at every site.
pub fn probe_param_surjectivity(cfg: &Configuration) -> Vec<usize> {
    cfg.b.data.par_iter().map(param_rank).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMethod {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    pub k: usize,
    pub method: SigmaMethod,
    pub seed: u64,
    /// Largest dimension handled by dense SVD under [`SigmaMethod::Auto`].
    pub dense_limit: usize,
    pub max_restarts: usize,
    /// Singular values below this count towards the near-kernel.
    pub kernel_tol: f64,
    pub rank_rel_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            k: 6,
            method: SigmaMethod::Auto,
            seed: 0,
            dense_limit: 4000,
            max_restarts: 500,
            kernel_tol: 1e-8,
            rank_rel_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub dim: usize,
    pub method: SigmaMethod,
    pub sigma_min: f64,
    /// Ascending.
    pub k_smallest: Vec<f64>,
    /// Number of `k_smallest` entries below `kernel_tol`.
    pub near_kernel_dim: usize,
    pub rank_histogram: [usize; 4],
    pub x3_fraction: f64,
    pub min_sigma3: f64,
    /// Site counts for each value 0..=9 of the `δτ ↦ δτ·B` rank.
    pub param_rank_histogram: [usize; 10],
}

pub fn probe_sigma_min(tau: &Field<TauMat>, cfg: &Configuration, k: usize) -> Result<ProbeReport> {
    probe_sigma_min_with(tau, cfg, &ProbeOptions { k, ..ProbeOptions::default() })
}

pub fn probe_sigma_min_with(tau: &Field<TauMat>, cfg: &Configuration, opts: &ProbeOptions) -> Result<ProbeReport> {
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let op = DeformationOperator::new(tau, cfg)?;
    let dim = op.ncols();
    let method = match opts.method {
        SigmaMethod::Auto if dim <= opts.dense_limit => SigmaMethod::Dense,
        SigmaMethod::Auto => SigmaMethod::Iterative,
        m => m,
    };
    let k = opts.k.min(dim);
    let k_smallest = match method {
        SigmaMethod::Dense => dense_smallest_singular_values(&op, k)?,
        _ => iterative_smallest_singular_values(&op, k, opts.seed, opts.max_restarts)?,
    };
    let strat = stratify(&cfg.b, opts.rank_rel_tol)?;
    let mut param_rank_histogram = [0usize; 10];
    for r in probe_param_surjectivity(cfg) {
        param_rank_histogram[r] += 1;
    }
    Ok(ProbeReport {
        dim,
        method,
        sigma_min: k_smallest[0],
        near_kernel_dim: k_smallest.iter().filter(|&&s| s < opts.kernel_tol).count(),
        k_smallest,
        rank_histogram: strat.rank_histogram,
        x3_fraction: strat.x3_fraction,
        min_sigma3: strat.min_sigma3,
        param_rank_histogram,
    })
}

/// All singular values from a dense SVD, the `k` smallest returned ascending.
pub fn dense_smallest_singular_values(op: &DeformationOperator, k: usize) -> Result<Vec<f64>> {
    let m = op.materialize(usize::MAX)?.to_dense();
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s.truncate(k);
    Ok(s)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    pairwise_sum(&x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>())
}

fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// `y ↦ (DᵀD + μ²)⁻¹ y`, from one sparse LU of the symmetric augmented
/// matrix `[[μ, D], [Dᵀ, −μ]]`, which is invertible for any `μ ≠ 0`.
struct ShiftInvert {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    mu: f64,
    n: usize,
}

impl ShiftInvert {
    fn new(d: &SparseMatrix, mu: f64) -> Result<Self> {
        let n = d.ncols;
        let mut triplets = Vec::with_capacity(2 * d.nnz() + 2 * n);
        for i in 0..n {
            triplets.push(Triplet::new(i, i, mu));
            triplets.push(Triplet::new(n + i, n + i, -mu));
        }
        for r in 0..d.nrows {
            for idx in d.indptr[r]..d.indptr[r + 1] {
                let (c, v) = (d.indices[idx], d.values[idx]);
                triplets.push(Triplet::new(r, n + c, v));
                triplets.push(Triplet::new(n + c, r, v));
            }
        }
        let k = SparseColMat::<usize, f64>::try_new_from_triplets(2 * n, 2 * n, &triplets)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = k.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(ShiftInvert { lu, mu, n })
    }

    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut rhs = faer::Mat::<f64>::zeros(2 * n, 1);
        for (i, v) in y.iter().enumerate() {
            rhs[(n + i, 0)] = *v;
        }
        self.lu.solve_in_place(rhs.as_mut());
        (0..n).map(|i| -rhs[(n + i, 0)] / self.mu).collect()
    }
}

/// Upper bound `sqrt(‖D‖₁ ‖D‖∞)` on the spectral norm.
fn norm_bound(d: &SparseMatrix) -> f64 {
    let mut col_sums = vec![0.0; d.ncols];
    let mut row_max: f64 = 0.0;
    for r in 0..d.nrows {
        let mut row = 0.0;
        for idx in d.indptr[r]..d.indptr[r + 1] {
            row += d.values[idx].abs();
            col_sums[d.indices[idx]] += d.values[idx].abs();
        }
        row_max = row_max.max(row);
    }
    (row_max * col_sums.iter().copied().fold(0.0, f64::max)).sqrt()
}

/// Relative shift `μ / ‖D‖`.
const SHIFT: f64 = 1e-4;
/// Ritz pairs are accepted when `‖DᵀD u − s² u‖ ≤ RESIDUAL_TOL · ‖D‖²`.
const RESIDUAL_TOL: f64 = 1e-11;

/// `k` smallest singular values of the square operator, ascending.
///
/// Thick-restart Lanczos with full reorthogonalization on the shift-inverted
/// normal operator `(DᵀD + μ²)⁻¹`, whose largest eigenvalues belong to the
/// smallest singular values. Every cycle extends the retained vectors with
/// the latest Krylov direction and one fresh seeded random vector, so
/// repeated singular values are resolved. Singular values are read off the
/// thin SVD of `D V` over the current basis `V`, which bounds them from above
/// and is accurate to roundoff in `‖D‖` even near zero. A result is returned
/// once the `k` values have converged and stayed unchanged for two cycles.
pub fn iterative_smallest_singular_values(
    op: &DeformationOperator,
    k: usize,
    seed: u64,
    max_restarts: usize,
) -> Result<Vec<f64>> {
    let d = op.materialize(DEFAULT_MATERIALIZE_LIMIT)?;
    let n = d.ncols;
    let k = k.min(n);
    let scale = norm_bound(&d);
    if scale == 0.0 {
        return Ok(vec![0.0; k]);
    }
    let inv = ShiftInvert::new(&d, SHIFT * scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();

    let m = (2 * k + 20).min(n);
    let keep = (k + 5).min(m.saturating_sub(2)).max(k.min(m));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut pending: Option<Vec<f64>> = None;
    let mut previous: Option<Vec<f64>> = None;
    let mut stable_cycles = 0;
    let mut last_residual = f64::INFINITY;

    for _ in 0..max_restarts {
        let mut inject_random = true;
        while basis.len() < m {
            let mut v = if inject_random || pending.is_none() {
                inject_random = false;
                random(&mut rng)
            } else {
                pending.take().unwrap()
            };
            if orthonormalize(&mut v, &basis) < 1e-8 {
                v = random(&mut rng);
                if orthonormalize(&mut v, &basis) < 1e-8 {
                    break;
                }
            }
            let w = inv.apply(&v);
            pending = Some(w.clone());
            basis.push(v);
            images.push(w);
        }
        let j = basis.len();

        // Ritz values of D over span(basis).
        let mut dv = DMatrix::<f64>::zeros(n, j);
        for (c, v) in basis.iter().enumerate() {
            dv.set_column(c, &nalgebra::DVector::from_vec(d.matvec(v)));
        }
        let svd = dv.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
        let mut idx: Vec<usize> = (0..j).collect();
        idx.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        let mut worst: f64 = 0.0;
        let mut sigmas = Vec::with_capacity(k);
        for &i in idx.iter().take(k) {
            let s = svd.singular_values[i];
            let coeffs: Vec<f64> = (0..j).map(|c| v_t[(i, c)]).collect();
            let mut u = vec![0.0; n];
            for (c, b) in basis.iter().enumerate() {
                u.iter_mut().zip(b).for_each(|(o, x)| *o += coeffs[c] * x);
            }
            let du = &dv * nalgebra::DVector::from_vec(coeffs);
            let dtdu = d.transpose_matvec(du.as_slice());
            let r: Vec<f64> = dtdu.iter().zip(&u).map(|(p, q)| p - s * s * q).collect();
            worst = worst.max(dot(&r, &r).sqrt());
            sigmas.push(s);
        }
        last_residual = worst / (scale * scale);
        let converged = last_residual <= RESIDUAL_TOL;
        let unchanged = previous
            .as_ref()
            .is_some_and(|p: &Vec<f64>| p.iter().zip(&sigmas).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
        stable_cycles = if converged && unchanged { stable_cycles + 1 } else { 0 };
        if stable_cycles >= 2 || (converged && j == n) {
            return Ok(sigmas);
        }
        previous = Some(sigmas);

        // Restart from the dominant Ritz vectors of the shift-inverted operator.
        let h = DMatrix::from_fn(j, j, |r, c| 0.5 * (dot(&basis[r], &images[c]) + dot(&basis[c], &images[r])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..j).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
        let combine = |vecs: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (i, v) in vecs.iter().enumerate() {
                let c = eig.eigenvectors[(i, col)];
                out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
            }
            out
        };
        let retained = keep.min(j);
        let new_basis: Vec<Vec<f64>> = order[..retained].iter().map(|&c| combine(&basis, c)).collect();
        images = order[..retained].iter().map(|&c| combine(&images, c)).collect();
        basis = new_basis;
    }
    Err(Error::NoConvergence { iterations: max_restarts, residual: last_residual })
}
