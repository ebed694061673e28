use crate::algebra::{lie_bracket, AdOneForm, AdSelfDual, LieVec, SD_PAIRS};
use crate::error::{Error, Result};

use super::{same_grid, Configuration, Field, SiteValue};

/// Central difference `(f(x+e_k) − f(x−e_k)) / 2h`, zero-based direction.
pub fn partial<V: SiteValue>(f: &Field<V>, k: usize) -> Field<V> {
    assert!(k < 4, "direction index out of range: {k}");
    let grid = f.grid;
    let two_h = 2.0 * grid.h;
    Field::from_fn(grid, |s| {
        let fwd = f.data[grid.neighbor(s, k, true)];
        let bwd = f.data[grid.neighbor(s, k, false)];
        (fwd - bwd) * (1.0 / two_h)
    })
}

#[inline]
fn central<V: SiteValue>(f: &Field<V>, site: usize, k: usize) -> V {
    let grid = &f.grid;
    let fwd = f.data[grid.neighbor(site, k, true)];
    let bwd = f.data[grid.neighbor(site, k, false)];
    (fwd - bwd) * (1.0 / (2.0 * grid.h))
}

/// `(d_A ξ)_k = ∂_k ξ + [A_k, ξ]`.
pub fn cov_d0(a: &Field<AdOneForm>, xi: &Field<LieVec>) -> Result<Field<AdOneForm>> {
    same_grid(&a.grid, &xi.grid)?;
    Ok(Field::from_fn(a.grid, |s| {
        let ak = &a.data[s];
        let x = xi.data[s];
        AdOneForm::from_comps(std::array::from_fn(|k| central(xi, s, k) + lie_bracket(ak.comp(k), x)))
    }))
}

/// Exact transpose of `ξ ↦ d_A ξ`: `−Σ_k ∂_k a_k + Σ_k [a_k, A_k]`.
pub fn cov_d0_star(a_conn: &Field<AdOneForm>, a: &Field<AdOneForm>) -> Result<Field<LieVec>> {
    same_grid(&a_conn.grid, &a.grid)?;
    Ok(Field::from_fn(a.grid, |s| {
        let mut out = LieVec::ZERO;
        for k in 0..4 {
            out -= central(a, s, k).comp(k);
            out += lie_bracket(a.data[s].comp(k), a_conn.data[s].comp(k));
        }
        out
    }))
}

/// `½(G₁₂+G₃₄, G₁₃+G₄₂, G₁₄+G₂₃)` from per-pair components.
#[inline]
fn self_dual_part(g: impl Fn(usize, usize) -> LieVec) -> AdSelfDual {
    AdSelfDual::from_cols(std::array::from_fn(|alpha| {
        let [(k1, l1), (k2, l2)] = SD_PAIRS[alpha];
        (g(k1, l1) + g(k2, l2)) * 0.5
    }))
}

/// `d_A⁺ a` with `G_{kl} = ∂_k a_l − ∂_l a_k + [A_k, a_l] − [A_l, a_k]`.
pub fn cov_d_plus(a_conn: &Field<AdOneForm>, a: &Field<AdOneForm>) -> Result<Field<AdSelfDual>> {
    same_grid(&a_conn.grid, &a.grid)?;
    Ok(Field::from_fn(a.grid, |s| {
        let da: [AdOneForm; 4] = std::array::from_fn(|k| central(a, s, k));
        let (conn, val) = (&a_conn.data[s], &a.data[s]);
        self_dual_part(|k, l| {
            da[k].comp(l) - da[l].comp(k) + lie_bracket(conn.comp(k), val.comp(l))
                - lie_bracket(conn.comp(l), val.comp(k))
        })
    }))
}

/// `F_A⁺` with `F_{kl} = ∂_k A_l − ∂_l A_k + [A_k, A_l]`.
pub fn curvature_plus(a_conn: &Field<AdOneForm>) -> Field<AdSelfDual> {
    Field::from_fn(a_conn.grid, |s| {
        let da: [AdOneForm; 4] = std::array::from_fn(|k| central(a_conn, s, k));
        let conn = &a_conn.data[s];
        self_dual_part(|k, l| da[k].comp(l) - da[l].comp(k) + lie_bracket(conn.comp(k), conn.comp(l)))
    })
}

/// Algebraic part of `d_A^*` on self-dual forms: the transpose of
/// `a ↦ ½ Σ (ω_α)_{kl} ([A_k, a_l] − [A_l, a_k])` applied to `B`.
pub fn dstar_bracket(b: &AdSelfDual, a_conn: &AdOneForm) -> AdOneForm {
    let mut out = AdOneForm::ZERO;
    for (alpha, pairs) in SD_PAIRS.iter().enumerate() {
        let b_alpha = b.col(alpha);
        for &(k, l) in pairs {
            let to_l = lie_bracket(b_alpha, a_conn.comp(k)) * 0.5;
            let to_k = lie_bracket(b_alpha, a_conn.comp(l)) * 0.5;
            out.set_comp(l, out.comp(l) + to_l);
            out.set_comp(k, out.comp(k) - to_k);
        }
    }
    out
}

/// Flat part of `d^*` on self-dual forms: `(d^*B)_l = −½ Σ_k ∂_k B_{kl}`.
pub fn flat_divergence_sd(b: &Field<AdSelfDual>) -> Field<AdOneForm> {
    Field::from_fn(b.grid, |s| {
        let db: [AdSelfDual; 4] = std::array::from_fn(|k| central(b, s, k));
        AdOneForm::from_comps(std::array::from_fn(|l| {
            let mut acc = LieVec::ZERO;
            for (k, dbk) in db.iter().enumerate() {
                acc -= dbk.two_form_component(k, l) * 0.5;
            }
            acc
        }))
    })
}

/// Exact transpose of `a ↦ d_A⁺ a` under the coefficient `L²` pairing.
pub fn cov_dstar_sd(a_conn: &Field<AdOneForm>, b: &Field<AdSelfDual>) -> Result<Field<AdOneForm>> {
    same_grid(&a_conn.grid, &b.grid)?;
    Ok(Field::from_fn(b.grid, |s| {
        let db: [AdSelfDual; 4] = std::array::from_fn(|k| central(b, s, k));
        let mut out = dstar_bracket(&b.data[s], &a_conn.data[s]);
        for (alpha, pairs) in SD_PAIRS.iter().enumerate() {
            for &(k, l) in pairs {
                // ½ B_α·(∂_k a_l − ∂_l a_k) transposes with ∂ᵀ = −∂.
                out.set_comp(l, out.comp(l) - db[k].col(alpha) * 0.5);
                out.set_comp(k, out.comp(k) + db[l].col(alpha) * 0.5);
            }
        }
        out
    }))
}

/// Rotates the Lie index of `A`, `B`, `C` by a constant `R ∈ SO(3)`.
pub fn constant_gauge_rotate(r: &[[f64; 3]; 3], cfg: &Configuration) -> Result<Configuration> {
    let mut defect: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let rtr: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            defect = defect.max((rtr - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    defect = defect.max((crate::algebra::det3(r) - 1.0).abs());
    if !(defect <= 1e-12) {
        return Err(Error::NotSpecialOrthogonal { defect });
    }
    Ok(Configuration { a: cfg.a.map(|v| v.rotate(r)), b: cfg.b.map(|v| v.rotate(r)), c: cfg.c.map(|v| v.rotate(r)) })
}
