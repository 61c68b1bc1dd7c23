//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `min c·x` subject to `A_ub x ≤ b_ub`, `A_eq x = b_eq`, `x ≥ 0`.
//! Meant for small, well-scaled programs; no presolve, no sparse storage.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 1_000_000;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub upper: Vec<(Vec<f64>, f64)>,
    pub equal: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { objective, ..Self::default() }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_upper(&mut self, row: Vec<f64>, bound: f64) {
        self.upper.push((row, bound));
    }

    pub fn add_equal(&mut self, row: Vec<f64>, bound: f64) {
        self.equal.push((row, bound));
    }

    /// Largest amount by which `x` breaks a constraint (0 if feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let ub = self.upper.iter().map(|(row, b)| dot(row) - b);
        let eq = self.equal.iter().map(|(row, b)| (dot(row) - b).abs());
        let neg = x.iter().map(|v| -v);
        ub.chain(eq).chain(neg).fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.vars();
        for (row, b) in self.upper.iter().chain(&self.equal) {
            if row.len() != n {
                return Err(Error::Lp(format!("constraint has {} coefficients, expected {n}", row.len())));
            }
            if !b.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Lp("non-finite constraint".into()));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Lp("non-finite objective".into()));
        }
        Tableau::build(self).solve(&self.objective)
    }
}

struct Tableau {
    /// `m` rows of `width + 1` entries; the last entry is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    vars: usize,
    /// Columns `>= first_artificial` are artificial.
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.vars();
        let n_ub = lp.upper.len();
        // Each inequality gets a slack; rows that need flipping (b < 0) or
        // equalities get an artificial.
        let needs_art: Vec<bool> =
            lp.upper.iter().map(|(_, b)| *b < 0.0).chain(lp.equal.iter().map(|_| true)).collect();
        let n_art = needs_art.iter().filter(|a| **a).count();
        let first_artificial = n + n_ub;
        let width = first_artificial + n_art;
        let mut rows = Vec::with_capacity(needs_art.len());
        let mut basis = Vec::with_capacity(needs_art.len());
        let mut next_art = first_artificial;
        for (i, (coef, b)) in lp.upper.iter().chain(&lp.equal).enumerate() {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width + 1];
            for (dst, a) in row.iter_mut().zip(coef) {
                *dst = sign * a;
            }
            if i < n_ub {
                row[n + i] = sign;
            }
            row[width] = sign * b;
            if needs_art[i] {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            } else {
                basis.push(n + i);
            }
            rows.push(row);
        }
        Self { rows, basis, width, vars: n, first_artificial }
    }

    fn objective_row(&self, cost: &[f64]) -> Vec<f64> {
        let mut obj = vec![0.0; self.width + 1];
        obj[..cost.len()].copy_from_slice(cost);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = obj[b];
            if cb != 0.0 {
                for (o, a) in obj.iter_mut().zip(row) {
                    *o -= cb * a;
                }
            }
        }
        obj
    }

    fn pivot(&mut self, obj: &mut [f64], r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            let f = row[c];
            if i != r && f != 0.0 {
                for (v, a) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * a;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, a) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * a;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimizes over columns `< limit`. Returns `false` if unbounded.
    fn optimize(&mut self, obj: &mut [f64], limit: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(c) = (0..limit).find(|&j| obj[j] < -COST_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_EPS {
                    let ratio = row[self.width] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_EPS
                                || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(obj, r, c),
                None => return Ok(false),
            }
        }
        Err(Error::Lp("pivot limit reached".into()))
    }

    fn solve(mut self, cost: &[f64]) -> Result<LpSolution> {
        if self.first_artificial < self.width {
            let phase1: Vec<f64> =
                (0..self.width).map(|j| if j >= self.first_artificial { 1.0 } else { 0.0 }).collect();
            let mut obj = self.objective_row(&phase1);
            self.optimize(&mut obj, self.width)?;
            if -obj[self.width] > FEAS_EPS {
                return Err(Error::Lp("infeasible".into()));
            }
            // Drive remaining artificials out of the basis; drop redundant rows.
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.first_artificial {
                    match (0..self.first_artificial).find(|&j| self.rows[r][j].abs() > 1e-9) {
                        Some(c) => {
                            self.pivot(&mut obj, r, c);
                            r += 1;
                        }
                        None => {
                            self.rows.remove(r);
                            self.basis.remove(r);
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }
        let mut obj = self.objective_row(cost);
        if !self.optimize(&mut obj, self.first_artificial)? {
            return Err(Error::Lp("unbounded".into()));
        }
        let mut x = vec![0.0; self.vars];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.vars {
                x[b] = row[self.width].max(0.0);
            }
        }
        let value = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng as _;

    #[test]
    fn textbook_example() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add_upper(vec![1.0, 0.0], 4.0);
        lp.add_upper(vec![0.0, 2.0], 12.0);
        lp.add_upper(vec![3.0, 2.0], 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.value + 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_constraint_and_negative_rhs() {
        // min x0 − x1 s.t. x0 + x1 = 1, x0 − x1 ≤ −0.5 → x = (0, 1)
        let mut lp = LinearProgram::new(vec![1.0, -1.0]);
        lp.add_equal(vec![1.0, 1.0], 1.0);
        lp.add_upper(vec![-1.0, 1.0], 2.0);
        lp.add_upper(vec![1.0, -1.0], -0.5);
        let sol = lp.solve().unwrap();
        assert!((sol.value + 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&sol.x) < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_upper(vec![1.0], -1.0);
        assert!(matches!(lp.solve(), Err(Error::Lp(_))));
        let lp = LinearProgram::new(vec![-1.0]);
        assert!(matches!(lp.solve(), Err(Error::Lp(_))));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0, 0.5]);
        lp.add_equal(vec![1.0, 1.0, 1.0], 1.0);
        lp.add_equal(vec![2.0, 2.0, 2.0], 2.0);
        lp.add_upper(vec![0.0, 0.0, 1.0], 0.25);
        let sol = lp.solve().unwrap();
        assert!((sol.value - (0.75 + 0.125)).abs() < 1e-12);
    }

    /// Best vertex of `{x ≥ 0, Σx = 1, A x ≤ b}` over 3 variables by
    /// intersecting every pair of active constraints with the simplex plane.
    fn vertex_enumeration(c: &[f64; 3], cons: &[([f64; 3], f64)]) -> Option<f64> {
        let mut planes: Vec<([f64; 3], f64)> = cons.to_vec();
        for i in 0..3 {
            let mut e = [0.0; 3];
            e[i] = -1.0;
            planes.push((e, 0.0));
        }
        let feasible = |x: &[f64; 3]| planes.iter().all(|(a, b)| a[0] * x[0] + a[1] * x[1] + a[2] * x[2] <= b + 1e-9);
        let mut best: Option<f64> = None;
        for i in 0..planes.len() {
            for j in i + 1..planes.len() {
                let m = [[1.0, 1.0, 1.0], planes[i].0, planes[j].0];
                let rhs = [1.0, planes[i].1, planes[j].1];
                let det = |m: &[[f64; 3]; 3]| {
                    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
                };
                let d = det(&m);
                if d.abs() < 1e-9 {
                    continue;
                }
                let mut x = [0.0; 3];
                for (col, xv) in x.iter_mut().enumerate() {
                    let mut mc = m;
                    for r in 0..3 {
                        mc[r][col] = rhs[r];
                    }
                    *xv = det(&mc) / d;
                }
                if feasible(&x) {
                    let v = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
        }
        best
    }

    #[test]
    fn random_programs_match_vertex_enumeration() {
        let mut rng = substream(11, "lp");
        for _ in 0..2000 {
            let c = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let cons: Vec<([f64; 3], f64)> = (0..rng.random_range(0..5))
                .map(|_| {
                    let a = [
                        rng.random_range(-1..=1) as f64,
                        rng.random_range(-1..=1) as f64,
                        rng.random_range(-1..=1) as f64,
                    ];
                    (a, rng.random_range(-0.3..0.6))
                })
                .collect();
            let mut lp = LinearProgram::new(c.to_vec());
            lp.add_equal(vec![1.0; 3], 1.0);
            for (a, b) in &cons {
                lp.add_upper(a.to_vec(), *b);
            }
            match (lp.solve(), vertex_enumeration(&c, &cons)) {
                (Ok(sol), Some(v)) => {
                    assert!((sol.value - v).abs() < 1e-9, "{} vs {v}", sol.value);
                    assert!(lp.max_violation(&sol.x) < 1e-9);
                }
                (Err(_), None) => {}
                (a, b) => panic!("solver {a:?} vs enumeration {b:?}"),
            }
        }
    }
}
