//! Fixed-size 2×2 complex matrices.

use num_complex::Complex64;
use std::ops::Index;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mat2::new(one, zero, zero, one)
    }

    pub fn diag(a: Complex64, d: Complex64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Mat2::new(a, zero, zero, d)
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul_vec(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Solves `self · x = rhs` by Cramer's rule. Returns `None` for a singular matrix.
    pub fn solve(&self, rhs: [Complex64; 2]) -> Option<[Complex64; 2]> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b], [c, d]] = self.0;
        Some([(d * rhs[0] - b * rhs[1]) / det, (a * rhs[1] - c * rhs[0]) / det])
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.is_finite())
    }

    pub fn sub_scalar(&self, lambda: Complex64) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2::new(a - lambda, b, c, d - lambda)
    }
}

impl Index<(usize, usize)> for Mat2 {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.0[i][j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solve_matches_product() {
        let m = Mat2::new(c(1.0, 2.0), c(-0.5, 0.1), c(3.0, -1.0), c(0.2, 0.7));
        let x = [c(0.3, -0.4), c(1.5, 2.5)];
        let rhs = m.mul_vec(x);
        let y = m.solve(rhs).unwrap();
        assert!((y[0] - x[0]).norm() < 1e-12);
        assert!((y[1] - x[1]).norm() < 1e-12);
    }

    #[test]
    fn singular_solve_is_none() {
        let m = Mat2::new(c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0));
        assert!(m.solve([c(1.0, 0.0), c(0.0, 0.0)]).is_none());
    }
}
