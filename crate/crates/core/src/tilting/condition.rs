//! Linear conditionings `Γ N(T) = g` and their exact row-space algebra.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest pivot value tried when searching `(Ker Γ)^⊥` for a positive
/// integer vector in rank ≥ 2.
pub const CONDITION_B_SEARCH_HEIGHT: u64 = 12;

/// Reduced row echelon form over Q. Returns the nonzero rows and their pivot
/// columns.
pub fn rref(rows: &[Vec<BigRational>]) -> (Vec<Vec<BigRational>>, Vec<usize>) {
    let mut a: Vec<Vec<BigRational>> = rows.to_vec();
    let ncols = a.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for v in a[r].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..a.len() {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in 0..ncols {
                    let delta = &f * &a[r][j];
                    a[i][j] = &a[i][j] - delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == a.len() {
            break;
        }
    }
    a.truncate(r);
    (a, pivots)
}

/// A conditioning matrix Γ (L×K, rational) plus, when condition (B) holds,
/// a weight vector γ ∈ (Ker Γ)^⊥ with positive integer entries and some
/// γ_i = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSpec {
    gamma_matrix: Vec<Vec<BigRational>>,
    reduced_gamma: Option<Vec<u64>>,
    rhs: Option<Vec<BigRational>>,
}

/// Outcome of the search for γ.
#[derive(Clone, Debug, PartialEq)]
pub enum ConditionB {
    Holds(Vec<u64>),
    /// Rank 1 and the row is not proportional to a positive integer vector
    /// with a unit entry (exact).
    Fails(String),
    /// Rank ≥ 2 and no vector with pivot entries up to the search height.
    NotFound(String),
}

impl ConditionSpec {
    pub fn new(gamma_matrix: Vec<Vec<BigRational>>) -> Result<Self> {
        let k = gamma_matrix.first().map_or(0, |r| r.len());
        if k == 0 || gamma_matrix.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidCondition("Γ must be a nonempty L×K matrix".into()));
        }
        let mut spec = ConditionSpec {
            gamma_matrix,
            reduced_gamma: None,
            rhs: None,
        };
        if let ConditionB::Holds(g) = spec.condition_b() {
            spec.reduced_gamma = Some(g);
        }
        Ok(spec)
    }

    /// The single-row conditioning `Σ γ_i N_i = g`.
    pub fn weighted(gamma: &[u64]) -> Result<Self> {
        Self::new(vec![gamma
            .iter()
            .map(|&g| BigRational::from_integer(BigInt::from(g)))
            .collect()])
    }

    pub fn from_integer_rows(rows: &[Vec<i64>]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect())
                .collect(),
        )
    }

    pub fn with_rhs(mut self, rhs: Vec<BigRational>) -> Result<Self> {
        if rhs.len() != self.gamma_matrix.len() {
            return Err(Error::InvalidCondition("g must have one entry per row of Γ".into()));
        }
        self.rhs = Some(rhs);
        Ok(self)
    }

    pub fn num_types(&self) -> usize {
        self.gamma_matrix[0].len()
    }

    pub fn gamma_matrix(&self) -> &[Vec<BigRational>] {
        &self.gamma_matrix
    }

    pub fn rhs(&self) -> Option<&[BigRational]> {
        self.rhs.as_deref()
    }

    pub fn reduced_gamma(&self) -> Option<&[u64]> {
        self.reduced_gamma.as_deref()
    }

    pub fn require_reduced(&self) -> Result<&[u64]> {
        self.reduced_gamma().ok_or_else(|| {
            Error::InvalidCondition(
                "condition (B) does not hold: no positive integer γ in (Ker Γ)^⊥ with a unit entry"
                    .into(),
            )
        })
    }

    /// First coordinate with γ_i = 1; β is read from this coordinate.
    pub fn anchor(&self) -> Option<usize> {
        self.reduced_gamma()?.iter().position(|&g| g == 1)
    }

    pub fn rank(&self) -> usize {
        rref(&self.gamma_matrix).0.len()
    }

    /// Basis of (Ker Γ)^⊥ = row space of Γ, in reduced echelon form.
    pub fn row_space_basis(&self) -> Vec<Vec<BigRational>> {
        rref(&self.gamma_matrix).0
    }

    /// Γ·n for an integer count vector.
    pub fn apply(&self, counts: &[usize]) -> Vec<BigRational> {
        self.gamma_matrix
            .iter()
            .map(|row| {
                row.iter()
                    .zip(counts)
                    .map(|(g, &c)| g * BigRational::from_integer(BigInt::from(c)))
                    .fold(BigRational::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Entries of Γ are all nonnegative, so partial counts bound Γ·N from
    /// below.
    pub fn is_nonnegative(&self) -> bool {
        self.gamma_matrix.iter().flatten().all(|v| !v.is_negative())
    }

    /// Exact search for γ ∈ (Ker Γ)^⊥ ∩ (N*)^K with some γ_i = 1.
    pub fn condition_b(&self) -> ConditionB {
        let (basis, pivots) = rref(&self.gamma_matrix);
        let k = self.num_types();
        if basis.is_empty() {
            return ConditionB::Fails("Γ = 0 has trivial row space".into());
        }
        if basis.len() == 1 {
            // the row space is a line: scale so that the smallest |entry| is 1
            let row = &basis[0];
            if row.iter().any(|v| v.is_zero()) {
                return ConditionB::Fails(format!("row space spanned by {row:?} has a zero entry"));
            }
            let sign = row[0].signum();
            let min = row.iter().map(|v| v.abs()).min().expect("nonempty");
            let scaled: Vec<BigRational> = row.iter().map(|v| v * &sign / &min).collect();
            if scaled.iter().any(|v| v.is_negative()) {
                return ConditionB::Fails("row space has mixed signs".into());
            }
            if scaled.iter().any(|v| !v.is_integer()) {
                return ConditionB::Fails(format!(
                    "γ = {} is not integral",
                    scaled.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
                ));
            }
            return ConditionB::Holds(
                scaled.iter().map(|v| v.to_integer().to_u64().expect("positive")).collect(),
            );
        }
        // rank ≥ 2: a vector in the row space is determined by its pivot
        // entries; enumerate positive integer pivot values
        let r = basis.len();
        let mut vals = vec![1u64; r];
        loop {
            let v: Vec<BigRational> = (0..k)
                .map(|c| {
                    basis
                        .iter()
                        .zip(&vals)
                        .map(|(row, &x)| &row[c] * BigRational::from_integer(BigInt::from(x)))
                        .fold(BigRational::zero(), |a, b| a + b)
                })
                .collect();
            if v.iter().all(|x| x.is_integer() && x.is_positive()) && v.iter().any(|x| x.is_one()) {
                return ConditionB::Holds(v.iter().map(|x| x.to_integer().to_u64().unwrap()).collect());
            }
            // odometer over 1..=HEIGHT
            let mut i = 0;
            loop {
                if i == r {
                    return ConditionB::NotFound(format!(
                        "no γ with pivot entries (columns {pivots:?}) up to {CONDITION_B_SEARCH_HEIGHT}"
                    ));
                }
                vals[i] += 1;
                if vals[i] <= CONDITION_B_SEARCH_HEIGHT {
                    break;
                }
                vals[i] = 1;
                i += 1;
            }
        }
    }

    /// Least-squares membership test of a real vector in the row space of Γ.
    /// Returns `(residual_norm, coefficients)` with coefficients over the rows
    /// of the echelon basis.
    pub fn row_space_residual(&self, c: &[f64]) -> (f64, Vec<f64>) {
        let basis = self.row_space_basis();
        let k = self.num_types();
        let b = nalgebra::DMatrix::from_fn(k, basis.len(), |i, j| basis[j][i].to_f64().unwrap());
        let rhs = nalgebra::DVector::from_column_slice(c);
        let coeffs = if basis.is_empty() {
            nalgebra::DVector::zeros(0)
        } else {
            b.clone()
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .expect("SVD with both factors computed")
        };
        let resid = (&b * &coeffs - rhs).norm();
        (resid, coeffs.iter().copied().collect())
    }
}
