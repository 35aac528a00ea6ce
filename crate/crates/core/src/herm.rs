//! Closed-form linear algebra for 1x1 and 2x2 Hermitian matrices.

use num_complex::Complex64;

/// A Hermitian matrix of size 1 or 2. For size 2 the matrix is
/// `[[a, b], [conj(b), d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Herm {
    One(f64),
    Two { a: f64, d: f64, b: Complex64 },
}

impl Herm {
    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        match n {
            1 => Herm::One(s),
            _ => Herm::Two { a: s, d: s, b: Complex64::new(0.0, 0.0) },
        }
    }

    pub fn diag2(a: f64, d: f64) -> Self {
        Herm::Two { a, d, b: Complex64::new(0.0, 0.0) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Herm::One(_) => 1,
            Herm::Two { .. } => 2,
        }
    }

    /// Entry `(j, k)`.
    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        match *self {
            Herm::One(a) => Complex64::new(a, 0.0),
            Herm::Two { a, d, b } => match (j, k) {
                (0, 0) => Complex64::new(a, 0.0),
                (1, 1) => Complex64::new(d, 0.0),
                (0, 1) => b,
                _ => b.conj(),
            },
        }
    }

    pub fn det(&self) -> f64 {
        match *self {
            Herm::One(a) => a,
            Herm::Two { a, d, b } => a * d - b.norm_sqr(),
        }
    }

    pub fn trace(&self) -> f64 {
        match *self {
            Herm::One(a) => a,
            Herm::Two { a, d, .. } => a + d,
        }
    }

    /// Eigenvalues in increasing order (second is repeated for size 1).
    pub fn eigenvalues(&self) -> (f64, f64) {
        match *self {
            Herm::One(a) => (a, a),
            Herm::Two { a, d, b } => {
                let m = 0.5 * (a + d);
                let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
                // The eigenvalue of smaller magnitude comes from the
                // determinant, avoiding cancellation.
                let det = a * d - b.norm_sqr();
                if m >= 0.0 {
                    let hi = m + r;
                    (if hi > 0.0 { det / hi } else { 0.0 }, hi)
                } else {
                    let lo = m - r;
                    (lo, det / lo)
                }
            }
        }
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues().0
    }

    pub fn max_eig(&self) -> f64 {
        self.eigenvalues().1
    }

    pub fn is_positive_definite(&self) -> bool {
        match *self {
            Herm::One(a) => a > 0.0,
            Herm::Two { a, .. } => a > 0.0 && self.det() > 0.0,
        }
    }

    pub fn add(&self, other: &Herm) -> Herm {
        match (*self, *other) {
            (Herm::One(x), Herm::One(y)) => Herm::One(x + y),
            (Herm::Two { a, d, b }, Herm::Two { a: a2, d: d2, b: b2 }) => {
                Herm::Two { a: a + a2, d: d + d2, b: b + b2 }
            }
            _ => panic!("dimension mismatch in Herm::add"),
        }
    }

    pub fn scale(&self, s: f64) -> Herm {
        match *self {
            Herm::One(a) => Herm::One(a * s),
            Herm::Two { a, d, b } => Herm::Two { a: a * s, d: d * s, b: b * s },
        }
    }

    /// Inverse, or `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Herm> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(match *self {
            Herm::One(a) => Herm::One(1.0 / a),
            Herm::Two { a, d, b } => Herm::Two { a: d / det, d: a / det, b: -b / det },
        })
    }

    /// `tr(self^{-1} other) = sum_{jk} (self^{-1})_{kj} other_{jk}`.
    pub fn trace_inv_times(&self, other: &Herm) -> Option<f64> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(match (*self, *other) {
            (Herm::One(m), Herm::One(x)) => x / m,
            (Herm::Two { a, d, b }, Herm::Two { a: na, d: nd, b: nb }) => {
                (d * na + a * nd - 2.0 * (b * nb.conj()).re) / det
            }
            _ => panic!("dimension mismatch in Herm::trace_inv_times"),
        })
    }

    /// Mixed determinant `D(A, B)`, the coefficient with `det(A + B) =
    /// det A + 2 D(A, B) + det B` in size 2, and `(A + B)/2` in size 1.
    pub fn mixed_det(&self, other: &Herm) -> f64 {
        match (*self, *other) {
            (Herm::One(x), Herm::One(y)) => 0.5 * (x + y),
            (Herm::Two { a, d, b }, Herm::Two { a: a2, d: d2, b: b2 }) => {
                0.5 * (a * d2 + a2 * d) - (b * b2.conj()).re
            }
            _ => panic!("dimension mismatch in Herm::mixed_det"),
        }
    }
}
