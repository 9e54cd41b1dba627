//! Periodic (cyclic) tridiagonal solvers.
//!
//! The scalar solver uses the Sherman–Morrison reduction to a plain
//! tridiagonal system and caches the factorisation, so one matrix can be
//! applied to many right-hand sides. The block variant handles coupled
//! multi-component systems by eliminating the first block unknown.

use nalgebra::{DMatrix, DVector};

use crate::error::{RatchetError, Result};

/// Factorised cyclic tridiagonal matrix.
///
/// Row `j` reads `lower[j]·x[j−1] + diag[j]·x[j] + upper[j]·x[j+1]` with
/// indices taken mod `n`; `lower[0]` and `upper[n−1]` are the corner entries.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal {
    lower: Vec<f64>,
    // Thomas factorisation of the modified matrix.
    inv_pivot: Vec<f64>,
    gam: Vec<f64>,
    z: Vec<f64>,
    corner_ratio: f64,
    denom: f64,
}

impl CyclicTridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n < 3 || lower.len() != n || upper.len() != n {
            return Err(RatchetError::InvalidParameter(format!("cyclic tridiagonal system needs n >= 3 matching bands, got {n}")));
        }
        let top_right = lower[0];
        let bottom_left = upper[n - 1];
        let gamma = -diag[0];
        if gamma == 0.0 {
            return Err(RatchetError::SingularSystem("zero leading diagonal".into()));
        }
        let mut modified = diag.clone();
        modified[0] -= gamma;
        modified[n - 1] -= bottom_left * top_right / gamma;

        let mut inv_pivot = vec![0.0; n];
        let mut gam = vec![0.0; n];
        let mut bet = modified[0];
        for j in 0..n {
            if j > 0 {
                gam[j] = upper[j - 1] / bet;
                bet = modified[j] - lower[j] * gam[j];
            }
            if bet == 0.0 || !bet.is_finite() {
                return Err(RatchetError::SingularSystem(format!("zero pivot at row {j}")));
            }
            inv_pivot[j] = 1.0 / bet;
        }

        let mut this = Self { lower, inv_pivot, gam, z: Vec::new(), corner_ratio: top_right / gamma, denom: 0.0 };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = bottom_left;
        this.thomas(&mut u);
        let denom = 1.0 + u[0] + this.corner_ratio * u[n - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(RatchetError::SingularSystem("Sherman–Morrison denominator vanished".into()));
        }
        this.z = u;
        this.denom = denom;
        Ok(this)
    }

    pub fn n(&self) -> usize {
        self.inv_pivot.len()
    }

    fn thomas(&self, r: &mut [f64]) {
        let n = r.len();
        r[0] *= self.inv_pivot[0];
        for j in 1..n {
            r[j] = (r[j] - self.lower[j] * r[j - 1]) * self.inv_pivot[j];
        }
        for j in (0..n - 1).rev() {
            r[j] -= self.gam[j + 1] * r[j + 1];
        }
    }

    /// Solves in place.
    pub fn solve_in_place(&self, r: &mut [f64]) {
        let n = self.n();
        assert_eq!(r.len(), n, "right-hand side length");
        self.thomas(r);
        let factor = (r[0] + self.corner_ratio * r[n - 1]) / self.denom;
        for (x, z) in r.iter_mut().zip(&self.z) {
            *x -= factor * z;
        }
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut x = r.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Multiplies a cyclic tridiagonal matrix given by its bands with `x`.
pub fn cyclic_matvec(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|j| lower[j] * x[(j + n - 1) % n] + diag[j] * x[j] + upper[j] * x[(j + 1) % n]).collect()
}

/// Block cyclic tridiagonal system with `k × k` blocks.
///
/// Block row `j` reads `lower[j]·X[j−1] + diag[j]·X[j] + upper[j]·X[j+1] = R[j]`
/// with indices mod `n`.
#[derive(Debug, Clone)]
pub struct BlockCyclicTridiagonal {
    pub lower: Vec<DMatrix<f64>>,
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

impl BlockCyclicTridiagonal {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.n();
        (0..n).map(|j| &self.lower[j] * &x[(j + n - 1) % n] + &self.diag[j] * &x[j] + &self.upper[j] * &x[(j + 1) % n]).collect()
    }

    /// Solves by expressing `X[1..n]` as an affine function of `X[0]` and
    /// closing with block row 0.
    pub fn solve(&self, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let n = self.n();
        if n < 3 || rhs.len() != n {
            return Err(RatchetError::InvalidParameter("block system needs n >= 3".into()));
        }
        let k = self.diag[0].nrows();
        let m = n - 1;
        // Right-hand sides for rows 1..n: column 0 carries R, columns 1..=k the X[0] coefficients.
        let mut rhs_local: Vec<DMatrix<f64>> = (1..n)
            .map(|j| {
                let mut b = DMatrix::zeros(k, k + 1);
                b.set_column(0, &rhs[j]);
                b
            })
            .collect();
        {
            let first = -&self.lower[1];
            let mut view = rhs_local[0].columns_mut(1, k);
            view += first;
        }
        {
            let last = -&self.upper[n - 1];
            let mut view = rhs_local[m - 1].columns_mut(1, k);
            view += last;
        }

        let singular = |j: usize| RatchetError::SingularSystem(format!("singular block pivot at row {j}"));
        let mut c_prime: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut r_prime: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let j = i + 1;
            let (pivot, r) = if i == 0 {
                (self.diag[j].clone(), rhs_local[0].clone())
            } else {
                (&self.diag[j] - &self.lower[j] * &c_prime[i - 1], &rhs_local[i] - &self.lower[j] * &r_prime[i - 1])
            };
            let lu = pivot.lu();
            let c = if i + 1 < m { lu.solve(&self.upper[j]).ok_or_else(|| singular(j))? } else { DMatrix::zeros(k, k) };
            let rp = lu.solve(&r).ok_or_else(|| singular(j))?;
            c_prime.push(c);
            r_prime.push(rp);
        }
        let mut sol = vec![DMatrix::zeros(k, k + 1); m];
        sol[m - 1] = r_prime[m - 1].clone();
        for i in (0..m - 1).rev() {
            sol[i] = &r_prime[i] - &c_prime[i] * &sol[i + 1];
        }
        rhs_local.clear();

        let y = |i: usize| sol[i].column(0).into_owned();
        let z = |i: usize| sol[i].columns(1, k).into_owned();
        let closing = &self.diag[0] + &self.lower[0] * z(m - 1) + &self.upper[0] * z(0);
        let closing_rhs = &rhs[0] - &self.lower[0] * y(m - 1) - &self.upper[0] * y(0);
        let x0 = closing.lu().solve(&closing_rhs).ok_or_else(|| singular(0))?;

        let mut out = Vec::with_capacity(n);
        out.push(x0.clone());
        for i in 0..m {
            out.push(y(i) + z(i) * &x0);
        }
        Ok(out)
    }
}
