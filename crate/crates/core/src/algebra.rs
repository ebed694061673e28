//! Pointwise algebra of `su(2) ⊗ Λ^{2,+}ℝ⁴`.
//!
//! Conventions used throughout the crate:
//!
//! * `su(2)` is coordinatized by an orthonormal basis `η₁, η₂, η₃` with
//!   `[η_i, η_j] = 2 ε_{ijk} η_k`, so the bracket is twice the cross product.
//! * The self-dual 2-forms are spanned by
//!   `ω₁ = e¹∧e² + e³∧e⁴`, `ω₂ = e¹∧e³ + e⁴∧e²`, `ω₃ = e¹∧e⁴ + e²∧e³`.
//! * An ad-valued self-dual form stores `B[a][α]`, the coefficient of
//!   `η_a ⊗ ω_α`; an ad-valued 1-form stores `φ[k][a]`, the coefficient of
//!   `η_a ⊗ e^k`.
//! * Inner products are Euclidean on the stored coefficients.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, Matrix3};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

/// Default relative threshold for numerical ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Index pairs `(k, l)` with `(ω_α)_{kl} = +1`, zero-based.
pub const SD_PAIRS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (3, 1)], [(0, 3), (1, 2)]];

/// Levi-Civita symbol on `{0, 1, 2}`.
#[inline]
pub const fn levi_civita(i: usize, j: usize, k: usize) -> i32 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
        _ => 0,
    }
}

/// Element of `su(2)` in the `η` basis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LieVec(pub [f64; 3]);

impl LieVec {
    pub const ZERO: LieVec = LieVec([0.0; 3]);

    pub fn new(c1: f64, c2: f64, c3: f64) -> Self {
        LieVec([c1, c2, c3])
    }

    /// The basis element `η_{i+1}`.
    pub fn basis(i: usize) -> Self {
        let mut c = [0.0; 3];
        c[i] = 1.0;
        LieVec(c)
    }

    pub fn dot(&self, other: &LieVec) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn bracket(&self, other: &LieVec) -> LieVec {
        lie_bracket(*self, *other)
    }

    /// Adjoint action of a rotation `R ∈ SO(3)` on the coefficients.
    pub fn rotate(&self, r: &[[f64; 3]; 3]) -> LieVec {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = r[i][0] * self.0[0] + r[i][1] * self.0[1] + r[i][2] * self.0[2];
        }
        LieVec(out)
    }
}

impl Add for LieVec {
    type Output = LieVec;
    fn add(self, rhs: LieVec) -> LieVec {
        LieVec([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl Sub for LieVec {
    type Output = LieVec;
    fn sub(self, rhs: LieVec) -> LieVec {
        LieVec([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1], self.0[2] - rhs.0[2]])
    }
}

impl Neg for LieVec {
    type Output = LieVec;
    fn neg(self) -> LieVec {
        LieVec([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for LieVec {
    type Output = LieVec;
    fn mul(self, s: f64) -> LieVec {
        LieVec([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl AddAssign for LieVec {
    fn add_assign(&mut self, rhs: LieVec) {
        for i in 0..3 {
            self.0[i] += rhs.0[i];
        }
    }
}

impl SubAssign for LieVec {
    fn sub_assign(&mut self, rhs: LieVec) {
        for i in 0..3 {
            self.0[i] -= rhs.0[i];
        }
    }
}

/// `[x, y] = 2 (x × y)` in coefficients.
#[inline]
pub fn lie_bracket(x: LieVec, y: LieVec) -> LieVec {
    let (a, b) = (x.0, y.0);
    LieVec([2.0 * (a[1] * b[2] - a[2] * b[1]), 2.0 * (a[2] * b[0] - a[0] * b[2]), 2.0 * (a[0] * b[1] - a[1] * b[0])])
}

/// The oriented orthonormal frame data for `Λ^{2,+}ℝ⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdBasis {
    /// `omega[α][k][l] = (ω_α)_{kl}`.
    pub omega: [[[f64; 4]; 4]; 3],
}

impl SdBasis {
    pub fn standard() -> Self {
        let mut omega = [[[0.0; 4]; 4]; 3];
        for (alpha, pairs) in SD_PAIRS.iter().enumerate() {
            for &(k, l) in pairs {
                omega[alpha][k][l] = 1.0;
                omega[alpha][l][k] = -1.0;
            }
        }
        SdBasis { omega }
    }

    /// `Σ_{k<l} (ω_α)_{kl} (ω_β)_{kl}`.
    pub fn pairing(&self, alpha: usize, beta: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..4 {
            for l in (k + 1)..4 {
                s += self.omega[alpha][k][l] * self.omega[beta][k][l];
            }
        }
        s
    }
}

impl Default for SdBasis {
    fn default() -> Self {
        SdBasis::standard()
    }
}

/// `(ω_α)_{kl}` as an integer in `{-1, 0, 1}`.
#[inline]
pub const fn omega(alpha: usize, k: usize, l: usize) -> i32 {
    let pairs = SD_PAIRS[alpha];
    let mut i = 0;
    while i < 2 {
        let (p, q) = pairs[i];
        if p == k && q == l {
            return 1;
        }
        if p == l && q == k {
            return -1;
        }
        i += 1;
    }
    0
}

/// Ad-valued self-dual 2-form at a point, `m[a][α]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdSelfDual(pub [[f64; 3]; 3]);

impl AdSelfDual {
    pub const ZERO: AdSelfDual = AdSelfDual([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        AdSelfDual([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// `Σ_α B_α η_α ⊗ ω_α` with the given diagonal coefficients.
    pub fn diagonal(d: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = d[i];
        }
        AdSelfDual(m)
    }

    /// `η_a ⊗ ω_α`.
    pub fn unit(a: usize, alpha: usize) -> Self {
        let mut m = [[0.0; 3]; 3];
        m[a][alpha] = 1.0;
        AdSelfDual(m)
    }

    /// Lie-algebra coefficient of `ω_α`.
    #[inline]
    pub fn col(&self, alpha: usize) -> LieVec {
        LieVec([self.0[0][alpha], self.0[1][alpha], self.0[2][alpha]])
    }

    #[inline]
    pub fn set_col(&mut self, alpha: usize, v: LieVec) {
        for a in 0..3 {
            self.0[a][alpha] = v.0[a];
        }
    }

    pub fn from_cols(cols: [LieVec; 3]) -> Self {
        let mut out = AdSelfDual::ZERO;
        for (alpha, c) in cols.iter().enumerate() {
            out.set_col(alpha, *c);
        }
        out
    }

    /// `B_{kl} = Σ_α B_α (ω_α)_{kl}`.
    pub fn two_form_component(&self, k: usize, l: usize) -> LieVec {
        let mut out = LieVec::ZERO;
        for alpha in 0..3 {
            match omega(alpha, k, l) {
                1 => out += self.col(alpha),
                -1 => out -= self.col(alpha),
                _ => {}
            }
        }
        out
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|a, alpha| self.0[a][alpha])
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let mut out = [[0.0; 3]; 3];
        for (a, row) in out.iter_mut().enumerate() {
            for (alpha, v) in row.iter_mut().enumerate() {
                *v = m[(a, alpha)];
            }
        }
        AdSelfDual(out)
    }

    pub fn rotate(&self, r: &[[f64; 3]; 3]) -> Self {
        let mut out = AdSelfDual::ZERO;
        for alpha in 0..3 {
            out.set_col(alpha, self.col(alpha).rotate(r));
        }
        out
    }

    pub fn singular_values(&self) -> [f64; 3] {
        let d = signed_svd3(&self.0).d;
        [d[0].abs(), d[1].abs(), d[2].abs()]
    }
}

impl Add for AdSelfDual {
    type Output = AdSelfDual;
    fn add(mut self, rhs: AdSelfDual) -> AdSelfDual {
        self += rhs;
        self
    }
}

impl Sub for AdSelfDual {
    type Output = AdSelfDual;
    fn sub(mut self, rhs: AdSelfDual) -> AdSelfDual {
        self -= rhs;
        self
    }
}

impl Neg for AdSelfDual {
    type Output = AdSelfDual;
    fn neg(self) -> AdSelfDual {
        self * -1.0
    }
}

impl Mul<f64> for AdSelfDual {
    type Output = AdSelfDual;
    fn mul(mut self, s: f64) -> AdSelfDual {
        for row in self.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        self
    }
}

impl AddAssign for AdSelfDual {
    fn add_assign(&mut self, rhs: AdSelfDual) {
        for a in 0..3 {
            for alpha in 0..3 {
                self.0[a][alpha] += rhs.0[a][alpha];
            }
        }
    }
}

impl SubAssign for AdSelfDual {
    fn sub_assign(&mut self, rhs: AdSelfDual) {
        for a in 0..3 {
            for alpha in 0..3 {
                self.0[a][alpha] -= rhs.0[a][alpha];
            }
        }
    }
}

/// Ad-valued 1-form at a point, `m[k][a]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdOneForm(pub [[f64; 3]; 4]);

impl AdOneForm {
    pub const ZERO: AdOneForm = AdOneForm([[0.0; 3]; 4]);

    /// `η_a ⊗ e^k`.
    pub fn unit(k: usize, a: usize) -> Self {
        let mut m = [[0.0; 3]; 4];
        m[k][a] = 1.0;
        AdOneForm(m)
    }

    /// Lie-algebra coefficient of `e^k`.
    #[inline]
    pub fn comp(&self, k: usize) -> LieVec {
        LieVec(self.0[k])
    }

    #[inline]
    pub fn set_comp(&mut self, k: usize, v: LieVec) {
        self.0[k] = v.0;
    }

    pub fn from_comps(comps: [LieVec; 4]) -> Self {
        AdOneForm([comps[0].0, comps[1].0, comps[2].0, comps[3].0])
    }

    /// Flattened as `(φ₁₁, φ₁₂, φ₁₃, φ₂₁, …, φ₄₃)`.
    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for k in 0..4 {
            for a in 0..3 {
                out[3 * k + a] = self.0[k][a];
            }
        }
        out
    }

    pub fn from_array(x: &[f64; 12]) -> Self {
        let mut m = [[0.0; 3]; 4];
        for k in 0..4 {
            for a in 0..3 {
                m[k][a] = x[3 * k + a];
            }
        }
        AdOneForm(m)
    }

    pub fn rotate(&self, r: &[[f64; 3]; 3]) -> Self {
        let mut out = AdOneForm::ZERO;
        for k in 0..4 {
            out.set_comp(k, self.comp(k).rotate(r));
        }
        out
    }
}

impl Add for AdOneForm {
    type Output = AdOneForm;
    fn add(mut self, rhs: AdOneForm) -> AdOneForm {
        self += rhs;
        self
    }
}

impl Sub for AdOneForm {
    type Output = AdOneForm;
    fn sub(mut self, rhs: AdOneForm) -> AdOneForm {
        self -= rhs;
        self
    }
}

impl Neg for AdOneForm {
    type Output = AdOneForm;
    fn neg(self) -> AdOneForm {
        self * -1.0
    }
}

impl Mul<f64> for AdOneForm {
    type Output = AdOneForm;
    fn mul(mut self, s: f64) -> AdOneForm {
        for row in self.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        self
    }
}

impl AddAssign for AdOneForm {
    fn add_assign(&mut self, rhs: AdOneForm) {
        for k in 0..4 {
            for a in 0..3 {
                self.0[k][a] += rhs.0[k][a];
            }
        }
    }
}

impl SubAssign for AdOneForm {
    fn sub_assign(&mut self, rhs: AdOneForm) {
        for k in 0..4 {
            for a in 0..3 {
                self.0[k][a] -= rhs.0[k][a];
            }
        }
    }
}

/// Endomorphism of `Λ^{2,+}` at a point, `m[α][β]`. Acts trivially on the
/// Lie-algebra index.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TauMat(pub [[f64; 3]; 3]);

impl TauMat {
    pub const ZERO: TauMat = TauMat([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        TauMat::scaled_identity(1.0)
    }

    pub fn scaled_identity(s: f64) -> Self {
        TauMat([[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]])
    }

    pub fn diagonal(d: [f64; 3]) -> Self {
        TauMat([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn unit(alpha: usize, beta: usize) -> Self {
        let mut m = [[0.0; 3]; 3];
        m[alpha][beta] = 1.0;
        TauMat(m)
    }

    pub fn transpose(&self) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (alpha, row) in m.iter_mut().enumerate() {
            for (beta, v) in row.iter_mut().enumerate() {
                *v = self.0[beta][alpha];
            }
        }
        TauMat(m)
    }

    /// `(τB)[a][α] = Σ_β τ[α][β] B[a][β]`.
    pub fn apply(&self, b: &AdSelfDual) -> AdSelfDual {
        let mut out = [[0.0; 3]; 3];
        for (a, row) in out.iter_mut().enumerate() {
            for (alpha, v) in row.iter_mut().enumerate() {
                *v = self.0[alpha][0] * b.0[a][0] + self.0[alpha][1] * b.0[a][1] + self.0[alpha][2] * b.0[a][2];
            }
        }
        AdSelfDual(out)
    }
}

impl Add for TauMat {
    type Output = TauMat;
    fn add(mut self, rhs: TauMat) -> TauMat {
        self += rhs;
        self
    }
}

impl Sub for TauMat {
    type Output = TauMat;
    fn sub(self, rhs: TauMat) -> TauMat {
        self + rhs * -1.0
    }
}

impl Neg for TauMat {
    type Output = TauMat;
    fn neg(self) -> TauMat {
        self * -1.0
    }
}

impl Mul<f64> for TauMat {
    type Output = TauMat;
    fn mul(mut self, s: f64) -> TauMat {
        for row in self.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        self
    }
}

impl AddAssign for TauMat {
    fn add_assign(&mut self, rhs: TauMat) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += rhs.0[i][j];
            }
        }
    }
}

impl SubAssign for TauMat {
    fn sub_assign(&mut self, rhs: TauMat) {
        *self += -rhs;
    }
}

/// `([B·φ])_l = Σ_k [B_{kl}, φ_k]`.
pub fn sd_dot_one(b: &AdSelfDual, phi: &AdOneForm) -> AdOneForm {
    let mut out = AdOneForm::ZERO;
    for (alpha, pairs) in SD_PAIRS.iter().enumerate() {
        let b_alpha = b.col(alpha);
        for &(k, l) in pairs {
            // (ω_α)_{kl} = 1 feeds slot l, (ω_α)_{lk} = -1 feeds slot k.
            let to_l = lie_bracket(b_alpha, phi.comp(k));
            let to_k = lie_bracket(b_alpha, phi.comp(l));
            out.0[l] = (LieVec(out.0[l]) + to_l).0;
            out.0[k] = (LieVec(out.0[k]) - to_k).0;
        }
    }
    out
}

/// `([B·b])_γ = 2 Σ_{α,β} ε_{αβγ} [B_α, b_β]`; symmetric in its arguments.
pub fn sd_dot_sd(big: &AdSelfDual, small: &AdSelfDual) -> AdSelfDual {
    let mut out = AdSelfDual::ZERO;
    for gamma in 0..3 {
        let (alpha, beta) = ((gamma + 1) % 3, (gamma + 2) % 3);
        let v = lie_bracket(big.col(alpha), small.col(beta)) - lie_bracket(big.col(beta), small.col(alpha));
        out.set_col(gamma, v * 2.0);
    }
    out
}

/// `[b·B] = Σ_α [b_α, B_α]`.
pub fn sd_pair_to_g(small: &AdSelfDual, big: &AdSelfDual) -> LieVec {
    let mut out = LieVec::ZERO;
    for alpha in 0..3 {
        out += lie_bracket(small.col(alpha), big.col(alpha));
    }
    out
}

/// `[B, C]` with components `[B_α, C]`.
pub fn sd_bracket_g(b: &AdSelfDual, c: LieVec) -> AdSelfDual {
    AdSelfDual::from_cols([lie_bracket(b.col(0), c), lie_bracket(b.col(1), c), lie_bracket(b.col(2), c)])
}

/// `[C, a]` with components `[C, a_k]`.
pub fn g_bracket_one(c: LieVec, a: &AdOneForm) -> AdOneForm {
    AdOneForm::from_comps([
        lie_bracket(c, a.comp(0)),
        lie_bracket(c, a.comp(1)),
        lie_bracket(c, a.comp(2)),
        lie_bracket(c, a.comp(3)),
    ])
}

/// `L_{B,C}(φ) = [B·φ] + [C, φ]`.
pub fn apply_lbc(b: &AdSelfDual, c: LieVec, phi: &AdOneForm) -> AdOneForm {
    sd_dot_one(b, phi) + g_bracket_one(c, phi)
}

/// 12×12 matrix in the fixed orderings: unknowns `(φ₁₁, φ₁₂, …, φ₄₃)`,
/// equations `(e¹η₁, e¹η₂, …, e⁴η₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat12<T = f64>(pub [[T; 12]; 12]);

impl<T: Clone> Mat12<T> {
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Mat12<U> {
        Mat12(std::array::from_fn(|i| std::array::from_fn(|j| f(&self.0[i][j]))))
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.0.iter().map(|r| r.to_vec()).collect()
    }
}

impl Mat12<f64> {
    pub fn apply(&self, x: &[f64; 12]) -> [f64; 12] {
        std::array::from_fn(|i| self.0[i].iter().zip(x).map(|(m, v)| m * v).sum())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(12, 12, |i, j| self.0[i][j])
    }

    pub fn scaled(&self, s: f64) -> Mat12<f64> {
        self.map(|v| v * s)
    }
}

/// Generic assembly in the displayed normalization: the common factor 2 of
/// the bracket is divided out, so every entry is `±B`-, `±C`-combinations
/// with unit coefficients. Works over any commutative ring, which is how the
/// exact rational oracle consumes it.
pub fn assemble_lbc_with<T>(b: &[[T; 3]; 3], c: &[T; 3]) -> Mat12<T>
where
    T: Clone + Zero + Add<Output = T> + Sub<Output = T>,
{
    let accumulate = |acc: T, sign: i32, v: &T| -> T {
        match sign {
            1 => acc + v.clone(),
            -1 => acc - v.clone(),
            _ => acc,
        }
    };
    Mat12(std::array::from_fn(|row| {
        let (l, eq) = (row / 3, row % 3);
        std::array::from_fn(|col| {
            let (k, a) = (col / 3, col % 3);
            let mut entry = T::zero();
            for lie in 0..3 {
                let eps = levi_civita(lie, a, eq);
                if eps == 0 {
                    continue;
                }
                for alpha in 0..3 {
                    entry = accumulate(entry, eps * omega(alpha, k, l), &b[lie][alpha]);
                }
                if k == l {
                    entry = accumulate(entry, eps, &c[lie]);
                }
            }
            entry
        })
    }))
}

/// Matrix of `L_{B,C}` divided by the common factor 2 (the layout whose
/// determinant is `det_lbc_formula`). See [`lbc_operator_matrix`] for the
/// operator itself.
pub fn assemble_lbc(b: &AdSelfDual, c: LieVec) -> Mat12<f64> {
    assemble_lbc_with(&b.0, &c.0)
}

/// Exact matrix of `φ ↦ [B·φ] + [C, φ]`; equals `2 · assemble_lbc`.
pub fn lbc_operator_matrix(b: &AdSelfDual, c: LieVec) -> Mat12<f64> {
    assemble_lbc(b, c).scaled(2.0)
}

/// `16 (B₁²B₂²B₃² + C₁²B₂²B₃² + B₁²C₂²B₃² + B₁²B₂²C₃²)²` over any ring.
pub fn det_lbc_formula_with<T>(b: &[T; 3], c: &[T; 3]) -> T
where
    T: Clone + One + Add<Output = T> + Mul<Output = T>,
{
    let sq = |x: &T| x.clone() * x.clone();
    let (b1, b2, b3) = (sq(&b[0]), sq(&b[1]), sq(&b[2]));
    let (c1, c2, c3) = (sq(&c[0]), sq(&c[1]), sq(&c[2]));
    let inner =
        b1.clone() * b2.clone() * b3.clone() + c1 * b2.clone() * b3.clone() + b1.clone() * c2 * b3 + b1 * b2 * c3;
    let two = T::one() + T::one();
    let four = two.clone() * two;
    let sixteen = four.clone() * four;
    sixteen * inner.clone() * inner
}

pub fn det_lbc_formula(b: [f64; 3], c: [f64; 3]) -> f64 {
    det_lbc_formula_with(&b, &c)
}

/// `M = U · diag(d) · Vᵀ` with `U, V ∈ SO(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedSvd {
    pub u: [[f64; 3]; 3],
    pub d: [f64; 3],
    pub v: [[f64; 3]; 3],
}

impl SignedSvd {
    pub fn reconstruct(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..3).map(|s| self.u[i][s] * self.d[s] * self.v[j][s]).sum();
            }
        }
        m
    }
}

/// Singular value decomposition with both factors special orthogonal;
/// `d₁ ≥ d₂ ≥ |d₃|`, any reflection absorbed into the sign of `d₃`.
pub fn signed_svd3(m: &[[f64; 3]; 3]) -> SignedSvd {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    let svd = mat.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let s = svd.singular_values;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut uu = [[0.0; 3]; 3];
    let mut vv = [[0.0; 3]; 3];
    let mut d = [0.0; 3];
    for (dst, &src) in order.iter().enumerate() {
        d[dst] = s[src];
        for i in 0..3 {
            uu[i][dst] = u[(i, src)];
            vv[i][dst] = vt[(src, i)];
        }
    }
    if det3(&uu) < 0.0 {
        for row in uu.iter_mut() {
            row[2] = -row[2];
        }
        d[2] = -d[2];
    }
    if det3(&vv) < 0.0 {
        for row in vv.iter_mut() {
            row[2] = -row[2];
        }
        d[2] = -d[2];
    }
    SignedSvd { u: uu, d, v: vv }
}

pub fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Number of singular values above `rel_tol · σ₁`.
pub fn sd_rank(b: &AdSelfDual, rel_tol: f64) -> usize {
    let s = b.singular_values();
    rank_from_singular_values(&s, rel_tol * s[0])
}

pub(crate) fn rank_from_singular_values(s: &[f64], abs_tol: f64) -> usize {
    if s.iter().all(|&v| v == 0.0) {
        return 0;
    }
    s.iter().filter(|&&v| v > abs_tol).count()
}

/// `dim {ξ : [B_α, ξ] = 0 for all α}`.
pub fn centralizer_dim(b: &AdSelfDual) -> usize {
    // Rows of ξ ↦ 2 B_α × ξ for α = 1..3.
    let stacked = DMatrix::from_fn(9, 3, |row, j| {
        let (alpha, i) = (row / 3, row % 3);
        let x = b.col(alpha).0;
        let mut acc = 0.0;
        for k in 0..3 {
            acc += 2.0 * levi_civita(i, k, j) as f64 * x[k];
        }
        acc
    });
    let s = stacked.singular_values();
    let smax = s.max();
    let rank = rank_from_singular_values(s.as_slice(), DEFAULT_RANK_TOL * smax);
    3 - rank
}
