//! Truncated multivariate polynomial arithmetic.
//!
//! Used to expand kernel sections around the origin. Coefficients follow the
//! `partial^a / a!` convention and are reported in graded-lexicographic order
//! (degree-major; within a degree the first exponent decreases last), matching
//! the CSV column layout of the Taylor tables.

use std::collections::HashMap;

pub type MultiIndex = Vec<u32>;

/// All multi-indices of dimension `dim` with |a| <= max_degree, graded-lex.
///
/// For d = 2, degree 2 this yields (2,0), (1,1), (0,2).
pub fn multi_indices(dim: usize, max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for deg in 0..=max_degree {
        push_fixed_degree(dim, deg, &mut Vec::new(), &mut out);
    }
    out
}

fn push_fixed_degree(dim: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if dim == 1 {
        prefix.push(deg);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for a in (0..=deg).rev() {
        prefix.push(a);
        push_fixed_degree(dim - 1, deg - a, prefix, out);
        prefix.pop();
    }
}

/// Polynomial truncated at a fixed total degree.
#[derive(Clone, Debug)]
pub struct TruncPoly {
    pub dim: usize,
    pub max_degree: u32,
    coeffs: HashMap<MultiIndex, f64>,
}

impl TruncPoly {
    pub fn zero(dim: usize, max_degree: u32) -> Self {
        TruncPoly { dim, max_degree, coeffs: HashMap::new() }
    }

    pub fn constant(dim: usize, max_degree: u32, c: f64) -> Self {
        let mut p = Self::zero(dim, max_degree);
        p.add_term(&vec![0; dim], c);
        p
    }

    /// c0 + sum_i lin[i] * x_i
    pub fn linear(dim: usize, max_degree: u32, c0: f64, lin: &[f64]) -> Self {
        assert_eq!(lin.len(), dim);
        let mut p = Self::constant(dim, max_degree, c0);
        for (i, &l) in lin.iter().enumerate() {
            let mut idx = vec![0; dim];
            idx[i] = 1;
            p.add_term(&idx, l);
        }
        p
    }

    pub fn add_term(&mut self, idx: &[u32], c: f64) {
        if c == 0.0 || idx.iter().sum::<u32>() > self.max_degree {
            return;
        }
        *self.coeffs.entry(idx.to_vec()).or_insert(0.0) += c;
    }

    pub fn coeff(&self, idx: &[u32]) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &TruncPoly) -> TruncPoly {
        let mut out = self.clone();
        for (idx, &c) in &other.coeffs {
            out.add_term(idx, c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> TruncPoly {
        let mut out = Self::zero(self.dim, self.max_degree);
        for (idx, &c) in &self.coeffs {
            out.add_term(idx, c * s);
        }
        out
    }

    pub fn mul(&self, other: &TruncPoly) -> TruncPoly {
        let mut out = Self::zero(self.dim, self.max_degree);
        for (ia, &ca) in &self.coeffs {
            for (ib, &cb) in &other.coeffs {
                let idx: MultiIndex = ia.iter().zip(ib).map(|(a, b)| a + b).collect();
                out.add_term(&idx, ca * cb);
            }
        }
        out
    }

    pub fn powi(&self, n: u32) -> TruncPoly {
        let mut out = Self::constant(self.dim, self.max_degree, 1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// exp(self), valid when the constant term is zero (the series then
    /// terminates exactly at the truncation degree).
    pub fn exp_no_const(&self) -> TruncPoly {
        debug_assert_eq!(self.coeff(&vec![0; self.dim]), 0.0);
        let mut out = Self::constant(self.dim, self.max_degree, 1.0);
        let mut term = Self::constant(self.dim, self.max_degree, 1.0);
        let mut fact = 1.0;
        for j in 1..=self.max_degree {
            term = term.mul(self);
            fact *= j as f64;
            out = out.add(&term.scale(1.0 / fact));
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (idx, &c) in &self.coeffs {
            let mut t = c;
            for (i, &a) in idx.iter().enumerate() {
                t *= x[i].powi(a as i32);
            }
            s += t;
        }
        s
    }

    /// Coefficients in graded-lex order, densified (zeros included).
    pub fn table(&self) -> Vec<(MultiIndex, f64)> {
        multi_indices(self.dim, self.max_degree)
            .into_iter()
            .map(|idx| {
                let c = self.coeff(&idx);
                (idx, c)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn graded_lex_order_matches_table_layout() {
        let idx = multi_indices(2, 2);
        assert_eq!(
            idx,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        assert_eq!(multi_indices(1, 4).len(), 5);
        assert_eq!(multi_indices(2, 4).len(), 15);
    }

    #[test]
    fn mul_truncates() {
        // (1 + x)^5 truncated at degree 3: 1 + 5x + 10x^2 + 10x^3
        let p = TruncPoly::linear(1, 3, 1.0, &[1.0]);
        let q = p.powi(5);
        assert_relative_eq!(q.coeff(&[0]), 1.0);
        assert_relative_eq!(q.coeff(&[1]), 5.0);
        assert_relative_eq!(q.coeff(&[2]), 10.0);
        assert_relative_eq!(q.coeff(&[3]), 10.0);
    }

    #[test]
    fn exp_of_quadratic() {
        // exp(-x^2) to degree 4: 1 - x^2 + x^4/2
        let mut w = TruncPoly::zero(1, 4);
        w.add_term(&[2], -1.0);
        let e = w.exp_no_const();
        assert_relative_eq!(e.coeff(&[0]), 1.0);
        assert_relative_eq!(e.coeff(&[2]), -1.0);
        assert_relative_eq!(e.coeff(&[4]), 0.5);
        assert_relative_eq!(e.coeff(&[1]), 0.0);
    }

    #[test]
    fn eval_matches_coeffs() {
        let mut p = TruncPoly::zero(2, 4);
        p.add_term(&[2, 0], -1.0);
        p.add_term(&[0, 2], -1.0);
        p.add_term(&[2, 2], -6.0);
        assert_relative_eq!(p.eval(&[0.1, 0.0]), -0.01);
        assert_relative_eq!(p.eval(&[0.1, 0.1]), -0.02 - 6.0 * 1e-4);
    }
}
