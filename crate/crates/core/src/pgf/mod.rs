//! Multitype offspring laws, their projections and generating functions.
//!
//! Types are indexed from 0 internally; model files and the CLI use 1-based
//! type labels.

pub mod assumptions;
pub mod polynomial;
pub mod spectral;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::exact::Scalar;

pub use assumptions::{check_assumptions, AssumptionReport, Verdict};
pub use polynomial::{Polynomial, Term};
pub use spectral::{eigenvalues, is_irreducible, perron_vector, spectral_radius};

/// Tolerance on the total mass of a float-valued law.
pub const MASS_TOL: f64 = 1e-9;

/// An ordered list of child types.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderedWord(Vec<usize>);

impl OrderedWord {
    pub fn new(letters: Vec<usize>) -> Self {
        OrderedWord(letters)
    }

    pub fn empty() -> Self {
        OrderedWord(Vec::new())
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Counts of each type among the letters.
    pub fn projection(&self, num_types: usize) -> MultiIndex {
        let mut counts = vec![0u32; num_types];
        for &l in &self.0 {
            counts[l] += 1;
        }
        counts
    }
}

pub type MultiIndex = Vec<u32>;

/// A probability, exact when it came from a rational source.
#[derive(Clone, Debug, PartialEq)]
pub enum Prob {
    Exact(BigRational),
    Float(f64),
}

impl Prob {
    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
            Prob::Float(x) => *x,
        }
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            Prob::Exact(q) => Some(q),
            Prob::Float(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Prob::Exact(q) => q.is_zero(),
            Prob::Float(x) => *x == 0.0,
        }
    }

    fn is_negative(&self) -> bool {
        match self {
            Prob::Exact(q) => q.is_negative(),
            Prob::Float(x) => *x < 0.0 || x.is_nan(),
        }
    }

    pub fn add(&self, other: &Prob) -> Prob {
        match (self, other) {
            (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a + b),
            _ => Prob::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn div_int(&self, n: u64) -> Prob {
        match self {
            Prob::Exact(q) => Prob::Exact(q / BigRational::from_integer(BigInt::from(n))),
            Prob::Float(x) => Prob::Float(x / n as f64),
        }
    }

    /// Value in an exact field; `None` for float probabilities.
    pub fn in_field<F: Scalar>(&self) -> Option<F> {
        self.exact().map(F::from_rational)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Exact(q) => write!(f, "{q}"),
            Prob::Float(x) => write!(f, "{x}"),
        }
    }
}

fn total_mass<'a>(probs: impl Iterator<Item = &'a Prob>) -> Prob {
    probs.fold(Prob::Exact(BigRational::zero()), |acc, p| acc.add(p))
}

fn check_mass(type_index: usize, mass: &Prob) -> Result<()> {
    let ok = match mass {
        Prob::Exact(q) => q.is_one(),
        Prob::Float(x) => (x - 1.0).abs() <= MASS_TOL,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!(
            "law of type {} has total mass {mass}",
            type_index + 1
        )))
    }
}

/// Per-type law on ordered words (ζ).
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedLaw {
    num_types: usize,
    laws: Vec<Vec<(OrderedWord, Prob)>>,
}

impl OrderedLaw {
    /// Merges repeated words and drops zero-mass entries; entries are sorted.
    pub fn new(num_types: usize, laws: Vec<Vec<(OrderedWord, Prob)>>) -> Result<Self> {
        if laws.len() != num_types {
            return Err(Error::InvalidModel(format!(
                "expected {num_types} per-type laws, got {}",
                laws.len()
            )));
        }
        let mut merged = Vec::with_capacity(num_types);
        for (i, law) in laws.into_iter().enumerate() {
            let mut map: BTreeMap<OrderedWord, Prob> = BTreeMap::new();
            for (w, p) in law {
                if let Some(&bad) = w.letters().iter().find(|&&l| l >= num_types) {
                    return Err(Error::InvalidModel(format!(
                        "type {} word contains letter {} outside 1..={num_types}",
                        i + 1,
                        bad + 1
                    )));
                }
                if p.is_negative() {
                    return Err(Error::InvalidModel(format!("negative probability {p}")));
                }
                let entry = map.entry(w).or_insert(Prob::Exact(BigRational::zero()));
                *entry = entry.add(&p);
            }
            let law: Vec<_> = map.into_iter().filter(|(_, p)| !p.is_zero()).collect();
            check_mass(i, &total_mass(law.iter().map(|(_, p)| p)))?;
            merged.push(law);
        }
        Ok(OrderedLaw { num_types, laws: merged })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn law(&self, i: usize) -> &[(OrderedWord, Prob)] {
        &self.laws[i]
    }

    pub fn prob(&self, i: usize, w: &OrderedWord) -> Option<&Prob> {
        self.laws[i]
            .binary_search_by(|(x, _)| x.cmp(w))
            .ok()
            .map(|k| &self.laws[i][k].1)
    }

    pub fn is_exact(&self) -> bool {
        self.laws.iter().flatten().all(|(_, p)| p.exact().is_some())
    }
}

/// Finite per-type law on `N^K` (μ).
pub type FiniteProjection = Vec<Vec<(MultiIndex, Prob)>>;

/// Forgets the order of children: `μ(k) = Σ_{p(w)=k} ζ(w)`.
pub fn project(ordered: &OrderedLaw) -> FiniteProjection {
    let k = ordered.num_types;
    ordered
        .laws
        .iter()
        .map(|law| {
            let mut map: BTreeMap<MultiIndex, Prob> = BTreeMap::new();
            for (w, p) in law {
                let e = map
                    .entry(w.projection(k))
                    .or_insert(Prob::Exact(BigRational::zero()));
                *e = e.add(p);
            }
            map.into_iter().collect()
        })
        .collect()
}

/// Distinct orderings of the multiset with the given type counts, in
/// lexicographic order.
pub fn orderings(counts: &[u32]) -> Vec<OrderedWord> {
    fn rec(counts: &mut [u32], prefix: &mut Vec<usize>, left: u32, out: &mut Vec<OrderedWord>) {
        if left == 0 {
            out.push(OrderedWord(prefix.clone()));
            return;
        }
        for t in 0..counts.len() {
            if counts[t] > 0 {
                counts[t] -= 1;
                prefix.push(t);
                rec(counts, prefix, left - 1, out);
                prefix.pop();
                counts[t] += 1;
            }
        }
    }
    let mut counts = counts.to_vec();
    let total = counts.iter().sum();
    let mut out = Vec::new();
    rec(&mut counts, &mut Vec::new(), total, &mut out);
    out
}

/// Orders children uniformly at random among the distinct orderings of each
/// offspring multiset.
pub fn canonical_ordering(num_types: usize, projection: &FiniteProjection) -> OrderedLaw {
    let laws = projection
        .iter()
        .map(|law| {
            let mut out = Vec::new();
            for (counts, p) in law {
                let words = orderings(counts);
                let share = p.div_int(words.len() as u64);
                out.extend(words.into_iter().map(|w| (w, share.clone())));
            }
            out.sort_by(|a, b| a.0.cmp(&b.0));
            out
        })
        .collect();
    OrderedLaw { num_types, laws }
}

/// Generating-function family of the projection.
#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    /// Finite support; φ is a polynomial with these coefficients.
    Finite(FiniteProjection),
    /// φ⁽ⁱ⁾ = exp(f_i − f_i(1,…,1)) with f_i a polynomial with nonnegative
    /// coefficients.
    ExpPoly(Vec<Polynomial>),
}

/// A `K`-type offspring distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringModel {
    num_types: usize,
    ordered: Option<OrderedLaw>,
    projection: Projection,
}

impl OffspringModel {
    pub fn from_ordered(num_types: usize, laws: Vec<Vec<(OrderedWord, Prob)>>) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::InvalidModel("num_types must be at least 1".into()));
        }
        let ordered = OrderedLaw::new(num_types, laws)?;
        let projection = Projection::Finite(project(&ordered));
        Ok(OffspringModel {
            num_types,
            ordered: Some(ordered),
            projection,
        })
    }

    pub fn from_projection(num_types: usize, laws: FiniteProjection) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::InvalidModel("num_types must be at least 1".into()));
        }
        if laws.len() != num_types {
            return Err(Error::InvalidModel(format!(
                "expected {num_types} per-type laws, got {}",
                laws.len()
            )));
        }
        let mut merged = Vec::with_capacity(num_types);
        for (i, law) in laws.into_iter().enumerate() {
            let mut map: BTreeMap<MultiIndex, Prob> = BTreeMap::new();
            for (k, p) in law {
                if k.len() != num_types {
                    return Err(Error::InvalidModel(format!(
                        "multi-index {k:?} for type {} has wrong length",
                        i + 1
                    )));
                }
                if p.is_negative() {
                    return Err(Error::InvalidModel(format!("negative probability {p}")));
                }
                let e = map.entry(k).or_insert(Prob::Exact(BigRational::zero()));
                *e = e.add(&p);
            }
            let law: Vec<_> = map.into_iter().filter(|(_, p)| !p.is_zero()).collect();
            check_mass(i, &total_mass(law.iter().map(|(_, p)| p)))?;
            merged.push(law);
        }
        Ok(OffspringModel {
            num_types,
            ordered: None,
            projection: Projection::Finite(merged),
        })
    }

    pub fn exp_poly(num_types: usize, polys: Vec<Polynomial>) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::InvalidModel("num_types must be at least 1".into()));
        }
        if polys.len() != num_types {
            return Err(Error::InvalidModel(format!(
                "expected {num_types} polynomials, got {}",
                polys.len()
            )));
        }
        for (i, p) in polys.iter().enumerate() {
            for t in &p.terms {
                if t.exponents.len() != num_types {
                    return Err(Error::InvalidModel(format!(
                        "term {:?} of polynomial {} has wrong arity",
                        t.exponents,
                        i + 1
                    )));
                }
                if !(t.coeff >= 0.0) || !t.coeff.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "polynomial {} has coefficient {} (must be finite and nonnegative)",
                        i + 1,
                        t.coeff
                    )));
                }
            }
        }
        Ok(OffspringModel {
            num_types,
            ordered: None,
            projection: Projection::ExpPoly(polys),
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    /// The ordered law given at construction, if any.
    pub fn ordered_law(&self) -> Option<&OrderedLaw> {
        self.ordered.as_ref()
    }

    /// The ordered law, falling back to the canonical ordering of a finite
    /// projection.
    pub fn ordered_or_canonical(&self) -> Result<Cow<'_, OrderedLaw>> {
        match (&self.ordered, &self.projection) {
            (Some(o), _) => Ok(Cow::Borrowed(o)),
            (None, Projection::Finite(p)) => {
                Ok(Cow::Owned(canonical_ordering(self.num_types, p)))
            }
            (None, Projection::ExpPoly(_)) => Err(Error::Unsupported(
                "exp-of-polynomial laws have infinite support; no finite ordered law".into(),
            )),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.projection, Projection::Finite(_))
    }

    /// All probabilities are exact rationals.
    pub fn is_exact(&self) -> bool {
        match &self.projection {
            Projection::Finite(p) => {
                p.iter().flatten().all(|(_, q)| q.exact().is_some())
                    && self.ordered.as_ref().is_none_or(|o| o.is_exact())
            }
            Projection::ExpPoly(_) => false,
        }
    }

    fn check_type(&self, i: usize, x: &[f64]) -> Result<()> {
        if i >= self.num_types || x.len() != self.num_types {
            return Err(Error::InvalidModel(format!(
                "type {i} / point of length {} for a {}-type model",
                x.len(),
                self.num_types
            )));
        }
        Ok(())
    }

    fn finite_value(law: &[(MultiIndex, Prob)], x: &[f64]) -> f64 {
        law.iter()
            .map(|(k, p)| {
                p.to_f64()
                    * k.iter()
                        .zip(x)
                        .filter(|(&e, _)| e > 0)
                        .map(|(&e, &xi)| xi.powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    fn finite_gradient(law: &[(MultiIndex, Prob)], x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        for (k, p) in law {
            let p = p.to_f64();
            for j in 0..x.len() {
                if k[j] == 0 {
                    continue;
                }
                let mut v = p * k[j] as f64;
                for (l, (&e, &xl)) in k.iter().zip(x).enumerate() {
                    let pow = if l == j { e - 1 } else { e };
                    if pow > 0 {
                        v *= xl.powi(pow as i32);
                    }
                }
                grad[j] += v;
            }
        }
        grad
    }

    fn overflow(&self, i: usize, x: &[f64]) -> Error {
        Error::Overflow {
            type_index: i,
            point: x.to_vec(),
        }
    }

    /// φ⁽ⁱ⁾(x), evaluated in closed form.
    pub fn eval_pgf(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_type(i, x)?;
        let v = match &self.projection {
            Projection::Finite(p) => Self::finite_value(&p[i], x),
            Projection::ExpPoly(f) => (f[i].eval(x) - f[i].eval(&self.ones())).exp(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.overflow(i, x))
        }
    }

    /// ∇φ⁽ⁱ⁾(x), exact partial derivatives.
    pub fn eval_pgf_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_type(i, x)?;
        let g = match &self.projection {
            Projection::Finite(p) => Self::finite_gradient(&p[i], x),
            Projection::ExpPoly(f) => {
                let phi = self.eval_pgf(i, x)?;
                f[i].gradient(x).into_iter().map(|d| d * phi).collect()
            }
        };
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(self.overflow(i, x))
        }
    }

    /// log φ⁽ⁱ⁾(x) for `x` in the closed positive orthant. Stays finite far
    /// beyond the range where φ itself overflows for exp-polynomial laws.
    pub fn log_pgf(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_type(i, x)?;
        let v = match &self.projection {
            Projection::Finite(p) => Self::finite_value(&p[i], x).ln(),
            Projection::ExpPoly(f) => f[i].eval(x) - f[i].eval(&self.ones()),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.overflow(i, x))
        }
    }

    /// ∇ log φ⁽ⁱ⁾(x).
    pub fn log_pgf_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_type(i, x)?;
        let g: Vec<f64> = match &self.projection {
            Projection::Finite(p) => {
                let v = Self::finite_value(&p[i], x);
                Self::finite_gradient(&p[i], x)
                    .into_iter()
                    .map(|d| d / v)
                    .collect()
            }
            Projection::ExpPoly(f) => f[i].gradient(x),
        };
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(self.overflow(i, x))
        }
    }

    /// φ⁽ⁱ⁾(x) in an exact field; `None` unless the projection is finite with
    /// exact probabilities.
    pub fn eval_pgf_exact<F: Scalar>(&self, i: usize, x: &[F]) -> Option<F> {
        let Projection::Finite(p) = &self.projection else {
            return None;
        };
        let mut acc = F::zero();
        for (k, prob) in &p[i] {
            let mut term: F = prob.in_field()?;
            for (&e, xj) in k.iter().zip(x) {
                if e > 0 {
                    term = term * xj.powu(e);
                }
            }
            acc = acc + term;
        }
        Some(acc)
    }

    /// ζ⁽ⁱ⁾(∅) = φ⁽ⁱ⁾(0).
    pub fn empty_word_prob(&self, i: usize) -> f64 {
        match &self.projection {
            Projection::Finite(p) => p[i]
                .iter()
                .find(|(k, _)| k.iter().all(|&e| e == 0))
                .map_or(0.0, |(_, q)| q.to_f64()),
            Projection::ExpPoly(f) => {
                (f[i].eval(&vec![0.0; self.num_types]) - f[i].eval(&self.ones())).exp()
            }
        }
    }

    pub fn ones(&self) -> Vec<f64> {
        vec![1.0; self.num_types]
    }

    pub fn mean_matrix(&self) -> MeanMatrix {
        let ones = self.ones();
        let k = self.num_types;
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            let row = self
                .eval_pgf_gradient(i, &ones)
                .expect("generating functions are finite at the unit point");
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        MeanMatrix(m)
    }

    /// Some type has positive probability of a number of children other
    /// than one.
    pub fn is_nondegenerate(&self) -> bool {
        match &self.projection {
            Projection::Finite(p) => p
                .iter()
                .flatten()
                .any(|(k, q)| !q.is_zero() && k.iter().sum::<u32>() != 1),
            // ζ(∅) > 0 for every exp-polynomial law
            Projection::ExpPoly(_) => true,
        }
    }
}

/// Expected offspring counts `m_{i,j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanMatrix(pub DMatrix<f64>);

impl MeanMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.0)
    }

    pub fn is_irreducible(&self) -> bool {
        is_irreducible(&self.0)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::exact::rat;

    pub fn p(n: i64, d: i64) -> Prob {
        Prob::Exact(rat(n, d))
    }

    pub fn w(letters: &[usize]) -> OrderedWord {
        OrderedWord::new(letters.to_vec())
    }

    /// μ(0) = 2/3, μ(2) = 1/3.
    pub fn subcritical_binary() -> OffspringModel {
        OffspringModel::from_ordered(1, vec![vec![(w(&[]), p(2, 3)), (w(&[0, 0]), p(1, 3))]])
            .unwrap()
    }

    /// μ(0) = μ(2) = 1/2.
    pub fn critical_binary() -> OffspringModel {
        OffspringModel::from_ordered(1, vec![vec![(w(&[]), p(1, 2)), (w(&[0, 0]), p(1, 2))]])
            .unwrap()
    }

    pub fn poisson(lambda: f64) -> OffspringModel {
        OffspringModel::exp_poly(
            1,
            vec![Polynomial::new(vec![Term { exponents: vec![1], coeff: lambda }])],
        )
        .unwrap()
    }

    /// ζ of the two-type counterexample: ∅ or (1,2) with probability 1/2.
    pub fn remark_zeta() -> OffspringModel {
        let law = vec![(w(&[]), p(1, 2)), (w(&[0, 1]), p(1, 2))];
        OffspringModel::from_ordered(2, vec![law.clone(), law]).unwrap()
    }

    /// ζ̃ of the counterexample: ∅, (1,2), (1,1,1,1,2) with probability 1/3.
    pub fn remark_zeta_tilde() -> OffspringModel {
        let law = vec![
            (w(&[]), p(1, 3)),
            (w(&[0, 1]), p(1, 3)),
            (w(&[0, 0, 0, 0, 1]), p(1, 3)),
        ];
        OffspringModel::from_ordered(2, vec![law.clone(), law]).unwrap()
    }
}
