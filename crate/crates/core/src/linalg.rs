//! Small dense helpers: tridiagonal solves and vector norms.

/// Tridiagonal matrix stored by diagonals. `sub[i]` multiplies `x[i-1]` in
/// row `i` (so `sub[0]` is unused) and `sup[i]` multiplies `x[i+1]` (so
/// `sup[n-1]` is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Self {
        assert!(sub.len() == diag.len() && sup.len() == diag.len());
        Self { sub, diag, sup }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    /// Solves `(I·alpha + beta·self) x = rhs` with the Thomas algorithm.
    /// `scratch` must have length `dim`.
    pub fn solve_shifted(&self, alpha: f64, beta: f64, rhs: &[f64], x: &mut [f64], scratch: &mut [f64]) {
        let n = self.dim();
        let mut denom = alpha + beta * self.diag[0];
        x[0] = rhs[0] / denom;
        for i in 1..n {
            scratch[i] = beta * self.sup[i - 1] / denom;
            denom = alpha + beta * self.diag[i] - beta * self.sub[i] * scratch[i];
            x[i] = (rhs[i] - beta * self.sub[i] * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= scratch[i + 1] * x[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        self.solve_shifted(0.0, 1.0, rhs, &mut x, &mut scratch);
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_product() {
        let t = Tridiagonal::new(
            vec![0.0, -1.0, -0.5, -2.0],
            vec![4.0, 5.0, 3.0, 6.0],
            vec![1.0, 0.5, -1.0, 0.0],
        );
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut rhs = [0.0; 4];
        t.apply(&x_true, &mut rhs);
        let x = t.solve(&rhs);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_solve() {
        let t = Tridiagonal::new(vec![0.0, 1.0, 1.0], vec![-2.0, -2.0, -2.0], vec![1.0, 1.0, 0.0]);
        let rhs = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let mut s = [0.0; 3];
        t.solve_shifted(1.0, -0.3, &rhs, &mut x, &mut s);
        // check (I - 0.3 T) x = rhs
        let mut tx = [0.0; 3];
        t.apply(&x, &mut tx);
        for i in 0..3 {
            assert!((x[i] - 0.3 * tx[i] - rhs[i]).abs() < 1e-13);
        }
    }
}
