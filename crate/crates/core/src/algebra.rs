//! Octonion arithmetic driven by a hard-coded Cayley table.
//!
//! The complex numbers and the quaternions are the leading 2- and 4-element
//! sub-algebras of the table, so every lower-dimensional algebra used by the
//! network layers is obtained by truncation (see [`subalgebra_table`]).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dimension of a Cayley-Dickson algebra supported by the layers: 1, 2, 4 or 8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlgebraDim(usize);

impl AlgebraDim {
    pub const REAL: Self = Self(1);
    pub const COMPLEX: Self = Self(2);
    pub const QUATERNION: Self = Self(4);
    pub const OCTONION: Self = Self(8);

    pub const ALL: [Self; 4] = [Self::REAL, Self::COMPLEX, Self::QUATERNION, Self::OCTONION];

    pub fn new(d: usize) -> Result<Self> {
        match d {
            1 | 2 | 4 | 8 => Ok(Self(d)),
            _ => Err(Error::Domain(format!(
                "algebra dimension must be one of 1, 2, 4, 8 (got {d})"
            ))),
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for AlgebraDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Signed basis products `e_i * e_j = sign[i][j] * e_{index[i][j]}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CayleyTable {
    dim: usize,
    sign: [[i8; 8]; 8],
    index: [[u8; 8]; 8],
}

// Unit octonion multiplication table, row i times column j.
const OCTONION_SIGN: [[i8; 8]; 8] = [
    [1, 1, 1, 1, 1, 1, 1, 1],
    [1, -1, 1, -1, 1, -1, -1, 1],
    [1, -1, -1, 1, 1, 1, -1, -1],
    [1, 1, -1, -1, 1, -1, 1, -1],
    [1, -1, -1, -1, -1, 1, 1, 1],
    [1, 1, -1, 1, -1, -1, -1, 1],
    [1, 1, 1, -1, -1, 1, -1, -1],
    [1, -1, 1, 1, -1, -1, 1, -1],
];

const OCTONION_INDEX: [[u8; 8]; 8] = [
    [0, 1, 2, 3, 4, 5, 6, 7],
    [1, 0, 3, 2, 5, 4, 7, 6],
    [2, 3, 0, 1, 6, 7, 4, 5],
    [3, 2, 1, 0, 7, 6, 5, 4],
    [4, 5, 6, 7, 0, 1, 2, 3],
    [5, 4, 7, 6, 1, 0, 3, 2],
    [6, 7, 4, 5, 2, 3, 0, 1],
    [7, 6, 5, 4, 3, 2, 1, 0],
];

impl CayleyTable {
    /// The full 8×8 unit octonion table.
    pub const fn octonion() -> Self {
        Self {
            dim: 8,
            sign: OCTONION_SIGN,
            index: OCTONION_INDEX,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn sign(&self, i: usize, j: usize) -> i8 {
        assert!(i < self.dim && j < self.dim, "basis index out of range");
        self.sign[i][j]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        assert!(i < self.dim && j < self.dim, "basis index out of range");
        self.index[i][j] as usize
    }

    /// `(sign, index)` of the product of basis units `e_i * e_j`.
    #[inline]
    pub fn product(&self, i: usize, j: usize) -> (i8, usize) {
        (self.sign(i, j), self.index(i, j))
    }
}

/// Leading `d × d` sub-table of the octonion table: real, complex, quaternion
/// or octonion multiplication.
pub fn subalgebra_table(d: usize) -> Result<CayleyTable> {
    let dim = AlgebraDim::new(d)?;
    let mut table = CayleyTable::octonion();
    table.dim = dim.get();
    for i in 0..8 {
        for j in 0..8 {
            if i >= table.dim || j >= table.dim {
                table.sign[i][j] = 0;
                table.index[i][j] = 0;
            }
        }
    }
    Ok(table)
}

/// An octonion `c[0] e0 + c[1] e1 + ... + c[7] e7`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Octonion<T> {
    pub c: [T; 8],
}

impl<T: fmt::Debug> fmt::Debug for Octonion<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Octonion").field(&self.c).finish()
    }
}

impl<T: Scalar> Octonion<T> {
    #[inline]
    pub fn new(c: [T; 8]) -> Self {
        Self { c }
    }

    pub fn zero() -> Self {
        Self::new([T::zero(); 8])
    }

    pub fn one() -> Self {
        Self::basis(0)
    }

    pub fn real(x: T) -> Self {
        let mut c = [T::zero(); 8];
        c[0] = x;
        Self::new(c)
    }

    /// The unit `e_i`. Panics when `i > 7`.
    pub fn basis(i: usize) -> Self {
        let mut c = [T::zero(); 8];
        c[i] = T::one();
        Self::new(c)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }

    pub fn multiply(&self, other: &Self) -> Self {
        multiply_with(&CayleyTable::octonion(), self, other)
    }

    /// Real part kept, imaginary parts negated.
    pub fn conjugate(&self) -> Self {
        let mut c = self.c;
        for x in &mut c[1..] {
            *x = -*x;
        }
        Self::new(c)
    }

    pub fn norm_sqr(&self) -> T {
        self.c.iter().map(|&x| x * x).sum()
    }

    pub fn norm(&self) -> T {
        // hypot-style scaling keeps the result finite for large components
        let scale = self.c.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        if scale == T::zero() {
            return T::zero();
        }
        let s: T = self.c.iter().map(|&x| (x / scale) * (x / scale)).sum();
        scale * s.sqrt()
    }

    /// `x / |x|`.
    pub fn unit(&self) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() {
            return Err(Error::Domain("cannot normalize the zero octonion".into()));
        }
        Ok(self.scale(T::one() / n))
    }

    /// Multiplicative inverse `conj(x) / |x|^2`.
    pub fn inverse(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == T::zero() {
            return Err(Error::Domain("the zero octonion has no inverse".into()));
        }
        Ok(self.conjugate().scale(T::one() / n2))
    }

    pub fn scale(&self, s: T) -> Self {
        let mut c = self.c;
        for x in &mut c {
            *x *= s;
        }
        Self::new(c)
    }

    /// True when every component at index `>= d` is zero.
    pub fn lies_in(&self, d: usize) -> bool {
        self.c[d.min(8)..].iter().all(|&x| x == T::zero())
    }
}

/// Componentwise sum.
pub fn add<T: Scalar>(a: &Octonion<T>, b: &Octonion<T>) -> Octonion<T> {
    let mut c = a.c;
    for (x, &y) in c.iter_mut().zip(b.c.iter()) {
        *x += y;
    }
    Octonion::new(c)
}

pub fn scale<T: Scalar>(x: &Octonion<T>, s: T) -> Octonion<T> {
    x.scale(s)
}

/// Bilinear product over an arbitrary table; components beyond the table
/// dimension are ignored.
pub fn multiply_with<T: Scalar>(table: &CayleyTable, a: &Octonion<T>, b: &Octonion<T>) -> Octonion<T> {
    let d = table.dim();
    let mut out = [T::zero(); 8];
    for i in 0..d {
        if a.c[i] == T::zero() {
            continue;
        }
        for j in 0..d {
            let (s, k) = table.product(i, j);
            let term = a.c[i] * b.c[j];
            if s > 0 {
                out[k] += term;
            } else {
                out[k] -= term;
            }
        }
    }
    Octonion::new(out)
}

impl<T: Scalar> Add for Octonion<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        add(&self, &rhs)
    }
}

impl<T: Scalar> Sub for Octonion<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        add(&self, &rhs.scale(-T::one()))
    }
}

impl<T: Scalar> Neg for Octonion<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Mul for Octonion<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.multiply(&rhs)
    }
}
