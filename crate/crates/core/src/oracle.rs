//! Independent verifiers: exact rational determinants, a central-difference
//! harness and seeded instance generators.
//!
//! Nothing in here is used by the operators it checks.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{AdOneForm, AdSelfDual, LieVec, Mat12, TauMat};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Field, Grid, SiteValue};

pub type Rational = BigRational;

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact determinant of a 12×12 rational matrix.
pub fn exact_det12(m: &Mat12<Rational>) -> Rational {
    bareiss_det(&m.rows())
}

/// Fraction-free Bareiss elimination. Rows are first scaled to integers by
/// the lcm of their denominators; a vanishing pivot is replaced by a row
/// exchange, and a column with no nonzero pivot means the determinant is 0.
pub fn bareiss_det(rows: &[Vec<Rational>]) -> Rational {
    let n = rows.len();
    assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
    if n == 0 {
        return Rational::one();
    }
    let mut scale = BigInt::one();
    let mut a: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|row| {
            let lcm = row.iter().fold(BigInt::one(), |acc, x| num_integer::lcm(acc, x.denom().clone()));
            scale *= &lcm;
            row.iter().map(|x| x.numer() * (&lcm / x.denom())).collect()
        })
        .collect();

    let mut negate = false;
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(k, i);
                    negate = !negate;
                }
                None => return Rational::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    let det = Rational::new(a[n - 1][n - 1].clone(), scale);
    if negate {
        -det
    } else {
        det
    }
}

/// Full Laplace expansion, memoized over the set of used columns
/// (`O(2ⁿ n)` products). Independent of any elimination.
pub fn cofactor_det(rows: &[Vec<Rational>]) -> Rational {
    let n = rows.len();
    assert!(n <= 20, "cofactor expansion limited to n ≤ 20");
    let mut minors = vec![Rational::zero(); 1 << n];
    minors[0] = Rational::one();
    for mask in 0usize..(1 << n) {
        if minors[mask].is_zero() {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == n {
            continue;
        }
        for j in 0..n {
            if mask & (1 << j) != 0 || rows[row][j].is_zero() {
                continue;
            }
            let above = (mask >> (j + 1)).count_ones();
            let term = &minors[mask] * &rows[row][j];
            let slot = &mut minors[mask | (1 << j)];
            if above % 2 == 0 {
                *slot += term;
            } else {
                *slot -= term;
            }
        }
    }
    minors[(1 << n) - 1].clone()
}

/// Floating-point version of [`cofactor_det`].
pub fn cofactor_det_f64(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut minors = vec![0.0; 1 << n];
    minors[0] = 1.0;
    for mask in 0usize..(1 << n) {
        let row = mask.count_ones() as usize;
        if row == n || minors[mask] == 0.0 {
            continue;
        }
        for j in 0..n {
            if mask & (1 << j) != 0 {
                continue;
            }
            let sign = if (mask >> (j + 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            minors[mask | (1 << j)] += sign * rows[row][j] * minors[mask];
        }
    }
    minors[(1 << n) - 1]
}

pub fn to_f64(x: &Rational) -> f64 {
    let (n, d) = (x.numer(), x.denom());
    let nf: f64 = n.to_string().parse().unwrap_or(f64::NAN);
    let df: f64 = d.to_string().parse().unwrap_or(f64::NAN);
    nf / df
}

/// `(map(p + s·d) − map(p − s·d)) / 2s`.
pub fn fd_directional<F>(map: F, point: &[f64], direction: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if point.len() != direction.len() {
        return Err(Error::ShapeMismatch { expected: point.len(), got: direction.len() });
    }
    let shifted = |s: f64| point.iter().zip(direction).map(|(p, d)| p + s * d).collect::<Vec<_>>();
    let plus = map(&shifted(step))?;
    let minus = map(&shifted(-step))?;
    if plus.len() != minus.len() {
        return Err(Error::ShapeMismatch { expected: plus.len(), got: minus.len() });
    }
    let out: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * step)).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

/// Seeded source of random instances (ChaCha8, so streams are stable across
/// platforms).
#[derive(Debug, Clone)]
pub struct Generator {
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Generator { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    fn values<const N: usize>(&mut self, amp: f64) -> [f64; N] {
        std::array::from_fn(|_| self.uniform(-amp, amp))
    }

    pub fn lie_vec(&mut self, amp: f64) -> LieVec {
        LieVec(self.values(amp))
    }

    pub fn ad_self_dual(&mut self, amp: f64) -> AdSelfDual {
        AdSelfDual(std::array::from_fn(|_| self.values(amp)))
    }

    pub fn ad_one_form(&mut self, amp: f64) -> AdOneForm {
        AdOneForm(std::array::from_fn(|_| self.values(amp)))
    }

    pub fn tau_mat(&mut self, amp: f64) -> TauMat {
        TauMat(std::array::from_fn(|_| self.values(amp)))
    }

    /// Uniformly distributed rotation from a unit quaternion.
    pub fn rotation(&mut self) -> [[f64; 3]; 3] {
        let q = loop {
            let q: [f64; 4] = self.values(1.0);
            let n2: f64 = q.iter().map(|v| v * v).sum();
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                break q.map(|v| v / n);
            }
        };
        let [w, x, y, z] = q;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// `U · diag(d) · Vᵀ` with exactly `rank` nonzero `d`'s drawn from
    /// `[0.5, 2]` and random rotations `U`, `V`.
    pub fn ad_self_dual_of_rank(&mut self, rank: usize) -> AdSelfDual {
        assert!(rank <= 3, "rank must be at most 3");
        let u = self.rotation();
        let v = self.rotation();
        let d: [f64; 3] = std::array::from_fn(|i| if i < rank { self.uniform(0.5, 2.0) } else { 0.0 });
        AdSelfDual(std::array::from_fn(|a| {
            std::array::from_fn(|alpha| (0..3).map(|s| u[a][s] * d[s] * v[alpha][s]).sum())
        }))
    }

    pub fn field<V: SiteValue>(&mut self, grid: Grid, amp: f64) -> Field<V> {
        let data = (0..grid.sites())
            .map(|_| {
                let comps: Vec<f64> = (0..V::LEN).map(|_| self.uniform(-amp, amp)).collect();
                V::read_from(&comps)
            })
            .collect();
        Field { grid, data }
    }

    /// Values in `{k/8 : −16 ≤ k ≤ 16}`, for which central differences with
    /// dyadic spacing are exact in floating point.
    pub fn dyadic_field<V: SiteValue>(&mut self, grid: Grid) -> Field<V> {
        let data = (0..grid.sites())
            .map(|_| {
                let comps: Vec<f64> = (0..V::LEN).map(|_| self.rng.random_range(-16i32..=16) as f64 / 8.0).collect();
                V::read_from(&comps)
            })
            .collect();
        Field { grid, data }
    }

    pub fn configuration(&mut self, grid: Grid, amp: f64) -> Configuration {
        Configuration { a: self.field(grid, amp), b: self.field(grid, amp), c: self.field(grid, amp) }
    }

    /// Rational in `[lo, hi]` with denominator in `1..=max_den`.
    pub fn rational(&mut self, lo: i64, hi: i64, max_den: i64) -> Rational {
        let den = self.rng.random_range(1..=max_den);
        let num = self.rng.random_range(lo * den..=hi * den);
        rational(num, den)
    }

    /// `(B₁, B₂, B₃, C₁, C₂, C₃)` rationals in `[−10, 10]`, denominators ≤ 64.
    pub fn rational_tuple(&mut self) -> [Rational; 6] {
        std::array::from_fn(|_| self.rational(-10, 10, 64))
    }
}

/// Instance kinds understood by [`gen_random`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    LieVec,
    AdSelfDual,
    AdOneForm,
    TauMat,
    Configuration,
    RationalTuple,
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lie-vec" => InstanceKind::LieVec,
            "ad-self-dual" => InstanceKind::AdSelfDual,
            "ad-one-form" => InstanceKind::AdOneForm,
            "tau-mat" => InstanceKind::TauMat,
            "configuration" => InstanceKind::Configuration,
            "rational-tuple" => InstanceKind::RationalTuple,
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub amplitude: f64,
    /// Prescribed rank for `AdSelfDual`; `None` draws a generic matrix.
    pub rank: Option<usize>,
    pub grid: Option<Grid>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { amplitude: 1.0, rank: None, grid: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    LieVec(LieVec),
    AdSelfDual(AdSelfDual),
    AdOneForm(AdOneForm),
    TauMat(TauMat),
    Configuration(Configuration),
    RationalTuple([Rational; 6]),
}

pub fn gen_random(kind: InstanceKind, seed: u64, params: &GenParams) -> Result<Instance> {
    let mut g = Generator::new(seed);
    let amp = params.amplitude;
    Ok(match kind {
        InstanceKind::LieVec => Instance::LieVec(g.lie_vec(amp)),
        InstanceKind::AdSelfDual => Instance::AdSelfDual(match params.rank {
            Some(r) if r > 3 => return Err(Error::InvalidArgument(format!("rank {r} exceeds 3"))),
            Some(r) => g.ad_self_dual_of_rank(r),
            None => g.ad_self_dual(amp),
        }),
        InstanceKind::AdOneForm => Instance::AdOneForm(g.ad_one_form(amp)),
        InstanceKind::TauMat => Instance::TauMat(g.tau_mat(amp)),
        InstanceKind::Configuration => {
            let grid = params.grid.ok_or_else(|| Error::InvalidArgument("configuration needs a grid".into()))?;
            Instance::Configuration(g.configuration(grid, amp))
        }
        InstanceKind::RationalTuple => Instance::RationalTuple(g.rational_tuple()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{assemble_lbc_with, det_lbc_formula_with, sd_rank, DEFAULT_RANK_TOL};
    use num_traits::Signed;

    fn int_rows(rows: &[&[i64]]) -> Vec<Vec<Rational>> {
        rows.iter().map(|r| r.iter().map(|&v| rational(v, 1)).collect()).collect()
    }

    #[test]
    fn det_identity_and_repeated_row() {
        let id: Vec<Vec<Rational>> =
            (0..12).map(|i| (0..12).map(|j| if i == j { rational(1, 1) } else { rational(0, 1) }).collect()).collect();
        assert_eq!(bareiss_det(&id), rational(1, 1));
        let mut g = Generator::new(1);
        let mut rep: Vec<Vec<Rational>> = (0..12).map(|_| (0..12).map(|_| g.rational(-5, 5, 7)).collect()).collect();
        rep[7] = rep[3].clone();
        assert_eq!(bareiss_det(&rep), rational(0, 1));
        assert_eq!(cofactor_det(&rep), rational(0, 1));
    }

    #[test]
    fn det_small_known() {
        let m = int_rows(&[&[0, 2, 1], &[3, 0, 4], &[1, 1, 0]]);
        // 0·(0−4) − 2·(0−4) + 1·(3−0) = 11
        assert_eq!(bareiss_det(&m), rational(11, 1));
        assert_eq!(cofactor_det(&m), rational(11, 1));
    }

    #[test]
    fn exact_lbc_unit_diagonal() {
        let one = rational(1, 1);
        let zero = rational(0, 1);
        let b = [
            [one.clone(), zero.clone(), zero.clone()],
            [zero.clone(), one.clone(), zero.clone()],
            [zero.clone(), zero.clone(), one.clone()],
        ];
        let c = [zero.clone(), zero.clone(), zero.clone()];
        let m = assemble_lbc_with(&b, &c);
        assert_eq!(exact_det12(&m), rational(16, 1));
        assert_eq!(det_lbc_formula_with(&[one.clone(), one.clone(), one], &c), rational(16, 1));
    }

    #[test]
    fn bareiss_agrees_with_cofactor() {
        let mut g = Generator::new(77);
        for _ in 0..30 {
            let n = 1 + g.index(9);
            let m: Vec<Vec<Rational>> = (0..n).map(|_| (0..n).map(|_| g.rational(-10, 10, 64)).collect()).collect();
            assert_eq!(bareiss_det(&m), cofactor_det(&m));
        }
    }

    #[test]
    fn fd_examples() {
        let square = |x: &[f64]| Ok(vec![x[0] * x[0]]);
        for step in [1e-3, 0.5, 2.0] {
            let d = fd_directional(square, &[3.0], &[1.0], step).unwrap();
            assert!((d[0] - 6.0).abs() <= 1e-12);
        }
        let linear = |x: &[f64]| Ok(vec![2.0 * x[0] - x[1], x[1]]);
        assert_eq!(fd_directional(linear, &[1.0, 2.0], &[1.0, 0.0], 0.25).unwrap(), vec![2.0, 0.0]);
        assert!(fd_directional(square, &[1.0], &[1.0], 0.0).is_err());
        let blowup = |x: &[f64]| Ok(vec![if x[0] > 0.0 { f64::INFINITY } else { 0.0 }]);
        assert!(matches!(fd_directional(blowup, &[0.0], &[1.0], 0.1), Err(Error::NonFinite)));
    }

    #[test]
    fn generator_is_deterministic() {
        let p = GenParams { grid: Some(Grid::cubic(3, 1.0).unwrap()), ..Default::default() };
        let a = gen_random(InstanceKind::Configuration, 42, &p).unwrap();
        let b = gen_random(InstanceKind::Configuration, 42, &p).unwrap();
        assert_eq!(a, b);
        assert!(matches!("bogus".parse::<InstanceKind>(), Err(Error::UnknownKind(_))));
        assert!(gen_random(InstanceKind::Configuration, 1, &GenParams::default()).is_err());
    }

    #[test]
    fn prescribed_rank() {
        for r in 0..=3 {
            let p = GenParams { rank: Some(r), ..Default::default() };
            for seed in 0..20 {
                let Instance::AdSelfDual(b) = gen_random(InstanceKind::AdSelfDual, seed, &p).unwrap() else {
                    unreachable!()
                };
                assert_eq!(sd_rank(&b, DEFAULT_RANK_TOL), r);
            }
        }
    }

    #[test]
    fn rational_tuple_contract() {
        let mut g = Generator::new(5);
        for _ in 0..200 {
            for x in g.rational_tuple() {
                assert!(x.denom() <= &BigInt::from(64));
                assert!(x.abs() <= rational(10, 1));
            }
        }
    }
}
