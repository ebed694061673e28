//! Verification suites behind `verify-lemma` and `check-ops`.

use nalgebra::DVector;
use serde_json::{json, Value};

use vwlab::algebra::{
    assemble_lbc, assemble_lbc_with, det_lbc_formula, det_lbc_formula_with, signed_svd3, AdSelfDual, LieVec, TauMat,
};
use vwlab::lattice::{
    constant_gauge_rotate, cov_d0, cov_d_plus, inner_compensated, Configuration, Field, Grid, LatticeVector, Residual,
};
use vwlab::oracle::{exact_det12, fd_directional, to_f64, Generator, Rational};
use vwlab::vwmap::{
    apply_d0, apply_d0_star, apply_df, apply_df_star, eval_f, CotangentVec, DeformationOperator, TangentVec,
};

use crate::config::Tolerances;

/// Deliberate defects used to confirm that a suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Compare the determinant against a perturbed closed form.
    PerturbedFormula,
    /// Compare the adjoint pairing against a slightly rescaled transpose.
    BrokenTranspose,
}

/// Outcome of one named check: failures are JSON records ready for JSONL.
#[derive(Debug, Default)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub failures: Vec<Value>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport { name, ..SuiteReport::default() }
    }

    fn record(&mut self, err: f64, tol: f64, detail: impl FnOnce() -> Value) {
        self.cases += 1;
        self.worst = self.worst.max(err);
        if !(err <= tol) {
            let mut v = detail();
            v["suite"] = json!(self.name);
            v["error"] = json!(err);
            v["tol"] = json!(tol);
            self.failures.push(v);
        }
    }

    fn require(&mut self, ok: bool, detail: impl FnOnce() -> Value) {
        self.record(if ok { 0.0 } else { 1.0 }, 0.0, detail);
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn diag<T: Clone + num_traits::Zero>(d: &[T; 3]) -> [[T; 3]; 3] {
    std::array::from_fn(|a| std::array::from_fn(|al| if a == al { d[a].clone() } else { T::zero() }))
}

/// Determinant identity for the 12×12 operator with diagonal `B`, either
/// exactly over the rationals or in floating point.
pub fn determinant_suite(samples: usize, seed: u64, exact: bool, fault: Option<Fault>) -> SuiteReport {
    let mut report = SuiteReport::new("determinant");
    let mut gen = Generator::new(seed);
    let perturbed = fault == Some(Fault::PerturbedFormula);
    for sample in 0..samples {
        let t = gen.rational_tuple();
        let b: [Rational; 3] = [t[0].clone(), t[1].clone(), t[2].clone()];
        let c: [Rational; 3] = [t[3].clone(), t[4].clone(), t[5].clone()];
        let show = |x: &[Rational; 3]| x.iter().map(|v| v.to_string()).collect::<Vec<_>>();
        if exact {
            let det = exact_det12(&assemble_lbc_with(&diag(&b), &c));
            let mut formula = det_lbc_formula_with(&b, &c);
            if perturbed {
                formula += Rational::from_integer(1.into());
            }
            report.require(det == formula, || {
                json!({"sample": sample, "b": show(&b), "c": show(&c), "det": det.to_string(), "formula": formula.to_string()})
            });
        } else {
            let (bf, cf) = (b.clone().map(|v| to_f64(&v)), c.clone().map(|v| to_f64(&v)));
            let det = assemble_lbc(&AdSelfDual::diagonal(bf), LieVec(cf)).to_dmatrix().determinant();
            let mut formula = det_lbc_formula(bf, cf);
            if perturbed {
                formula = formula * 1.01 + 1.0;
            }
            let err = (det - formula).abs() / formula.abs().max(det.abs()).max(f64::MIN_POSITIVE);
            report.record(err, 1e-9, || json!({"sample": sample, "b": bf, "c": cf, "det": det, "formula": formula}));
        }
    }
    report
}

/// Zero sets of the determinant: the operator has a kernel exactly when the
/// closed form vanishes. Cycles through the vanishing patterns
/// `Bᵢ = Cᵢ = 0`, `Bᵢ = Bⱼ = 0` and a generic invertible case.
pub fn kernel_suite(samples: usize, seed: u64) -> SuiteReport {
    const PATTERNS: [(&str, [bool; 3], [bool; 3]); 7] = [
        ("B1=C1=0", [true, false, false], [true, false, false]),
        ("B2=C2=0", [false, true, false], [false, true, false]),
        ("B3=C3=0", [false, false, true], [false, false, true]),
        ("B1=B2=0", [true, true, false], [false, false, false]),
        ("B1=B3=0", [true, false, true], [false, false, false]),
        ("B2=B3=0", [false, true, true], [false, false, false]),
        ("generic", [false, false, false], [false, false, false]),
    ];
    let mut report = SuiteReport::new("kernel");
    let mut gen = Generator::new(seed ^ 0x6b65_726e);
    for sample in 0..samples {
        let (pattern, zb, zc) = PATTERNS[sample % PATTERNS.len()];
        let b: [f64; 3] = std::array::from_fn(|i| {
            if zb[i] {
                0.0
            } else {
                let m = gen.uniform(0.1, 2.0);
                if gen.uniform(0.0, 1.0) < 0.5 {
                    -m
                } else {
                    m
                }
            }
        });
        let c: [f64; 3] = std::array::from_fn(|i| if zc[i] { 0.0 } else { gen.uniform(-2.0, 2.0) });
        let m = assemble_lbc(&AdSelfDual::diagonal(b), LieVec(c)).to_dmatrix();
        let formula = det_lbc_formula(b, c);
        let svd = m.clone().svd(false, true);
        let i = svd.singular_values.imin();
        let sigma = svd.singular_values[i];
        let detail =
            || json!({"sample": sample, "pattern": pattern, "b": b, "c": c, "sigma_min": sigma, "formula": formula});
        if pattern == "generic" {
            report.require(formula != 0.0 && sigma > 0.0, detail);
            let rhs = DVector::from_fn(12, |_, _| gen.uniform(-1.0, 1.0));
            let res = match m.clone().lu().solve(&rhs) {
                Some(x) => (&m * x - &rhs).norm() / rhs.norm(),
                None => f64::INFINITY,
            };
            report.record(res, 1e-10, detail);
        } else {
            report.require(formula == 0.0, detail);
            let v = svd.v_t.expect("requested").row(i).transpose();
            report.record((&m * &v).norm() / v.norm(), 1e-12, detail);
        }
    }
    report
}

/// `|det|` is unchanged when a general `B = U·diag(d)·Vᵀ` replaces its
/// diagonal form and `C` is rotated by `Uᵀ`.
pub fn basis_change_suite(samples: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("basis_change");
    let mut gen = Generator::new(seed ^ 0x6261_7369);
    for sample in 0..samples {
        let b = gen.ad_self_dual(2.0);
        let c = gen.lie_vec(2.0);
        let svd = signed_svd3(&b.0);
        let utc: [f64; 3] = std::array::from_fn(|s| (0..3).map(|a| svd.u[a][s] * c.0[a]).sum());
        let formula = det_lbc_formula(svd.d, utc);
        let det = assemble_lbc(&b, c).to_dmatrix().determinant();
        let err = (det.abs() - formula.abs()).abs() / formula.abs().max(f64::MIN_POSITIVE);
        report.record(err, 1e-8, || json!({"sample": sample, "b": b.0, "c": c.0, "det": det, "formula": formula}));
    }
    report
}

fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let diff = x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let scale = y.iter().fold(0.0f64, |m, q| m.max(q.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn pairing_error(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Operator invariants on one grid: dimensions, linearization against
/// central differences, both transpose identities, constant-gauge
/// equivariance and `d⁺∘d = 0`, `dF∘d⁰ = 0` at the flat configuration.
pub fn operator_suites(
    grid: Grid,
    tau: &Field<TauMat>,
    seed: u64,
    trials: usize,
    tol: &Tolerances,
    fault: Option<Fault>,
) -> vwlab::Result<Vec<SuiteReport>> {
    let mut gen = Generator::new(seed);
    let sites = grid.sites();

    let mut dims = SuiteReport::new("dimensions");
    let op = DeformationOperator::new(tau, &gen.configuration(grid, 1.0))?;
    let x = vec![1.0; op.ncols()];
    let (image, preimage) = (op.apply(&x)?.len(), op.apply_transpose(&x)?.len());
    dims.require(
        op.nrows() == 24 * sites && op.ncols() == 24 * sites && image == 24 * sites && preimage == 24 * sites,
        || json!({"rows": op.nrows(), "cols": op.ncols(), "expected": 24 * sites}),
    );

    let mut linear = SuiteReport::new("linearization");
    let mut adj0 = SuiteReport::new("adjoint_d0");
    let mut adj = SuiteReport::new("adjoint_df");
    let mut equi = SuiteReport::new("equivariance");
    let n_cfg = Configuration::flat_len(&grid);
    for trial in 0..trials {
        let cfg = gen.configuration(grid, 1.0);
        let v = TangentVec::from_parts(gen.configuration(grid, 1.0), Some(gen.field(grid, 1.0)))?;

        let mut point = cfg.to_flat();
        point.extend(tau.to_flat());
        let mut dir = v.abc().to_flat();
        dir.extend(v.dtau.as_ref().expect("constructed with δτ").to_flat());
        let map = |p: &[f64]| -> vwlab::Result<Vec<f64>> {
            let c = Configuration::from_flat(grid, &p[..n_cfg])?;
            let t = Field::<TauMat>::from_flat(grid, &p[n_cfg..])?;
            Ok(eval_f(&t, &c)?.to_flat())
        };
        let fd = fd_directional(map, &point, &dir, tol.fd_step)?;
        let exact = apply_df(tau, &cfg, &v)?.to_flat();
        linear.record(rel_diff(&fd, &exact), tol.linearization, || json!({"trial": trial}));

        let xi = gen.field::<LieVec>(grid, 1.0);
        let lhs = inner_compensated(&apply_d0(&cfg, &xi)?.without_dtau(), &v.without_dtau())?;
        let rhs = inner_compensated(&xi, &apply_d0_star(&cfg, &v)?)?;
        adj0.record(pairing_error(lhs, rhs), tol.adjoint, || json!({"trial": trial, "lhs": lhs, "rhs": rhs}));

        let w = CotangentVec { phi: gen.field(grid, 1.0), psi: gen.field(grid, 1.0) };
        let lhs = inner_compensated(&apply_df(tau, &cfg, &v)?, &Residual::from(w.clone()))?;
        let mut back = apply_df_star(tau, &cfg, &w)?;
        if fault == Some(Fault::BrokenTranspose) {
            back.c = back.c.scale(1.0 + 1e-6);
        }
        let rhs = inner_compensated(&v, &back)?;
        adj.record(pairing_error(lhs, rhs), tol.adjoint, || json!({"trial": trial, "lhs": lhs, "rhs": rhs}));

        let r = gen.rotation();
        let rotated = eval_f(tau, &constant_gauge_rotate(&r, &cfg)?)?.to_flat();
        let expected = eval_f(tau, &cfg)?.rotate(&r).to_flat();
        equi.record(rel_diff(&rotated, &expected), tol.equivariance, || json!({"trial": trial}));
    }

    // Dyadic data keeps every difference exact, so the identities hold bitwise.
    let mut flat = SuiteReport::new("flat_gauge");
    let zero = Configuration::zeros(grid);
    for trial in 0..trials {
        let xi = gen.dyadic_field::<LieVec>(grid);
        let dyadic_tau = gen.dyadic_field::<TauMat>(grid);
        let dd = cov_d_plus(&zero.a, &cov_d0(&zero.a, &xi)?)?;
        flat.require(dd.is_zero(), || json!({"trial": trial, "identity": "d+ d = 0", "max": dd.max_abs()}));
        let out = apply_df(&dyadic_tau, &zero, &apply_d0(&zero, &xi)?)?;
        flat.require(out.one_form.is_zero() && out.sd_form.is_zero(), || {
            json!({"trial": trial, "identity": "dF d0 = 0", "max": out.one_form.max_abs().max(out.sd_form.max_abs())})
        });
    }

    Ok(vec![dims, linear, adj0, adj, equi, flat])
}
