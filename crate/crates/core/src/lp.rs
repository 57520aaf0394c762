//! Small dense linear programs: two-phase tableau simplex with Bland's rule.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("constraint has {got} coefficients, expected {want}")]
    Dimension { got: usize, want: usize },
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

/// `minimize c.x` subject to linear rows and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const EPS: f64 = 1e-10;
const MAX_PIVOTS: usize = 10_000;

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Result<(), LpError> {
        if coeffs.len() != self.vars() {
            return Err(LpError::Dimension {
                got: coeffs.len(),
                want: self.vars(),
            });
        }
        self.rows.push(Row { coeffs, rel, rhs });
        Ok(())
    }

    /// Adds `x_var <= bound`.
    pub fn upper_bound(&mut self, var: usize, bound: f64) -> Result<(), LpError> {
        let mut c = vec![0.0; self.vars()];
        c[var] = 1.0;
        self.constrain(c, Relation::Le, bound)
    }

    pub fn minimize(&self) -> Result<LpSolution, LpError> {
        let n = self.vars();
        let m = self.rows.len();
        // normalized rows with nonnegative right-hand sides
        let rows: Vec<Row> = self
            .rows
            .iter()
            .map(|r| {
                let scale = r
                    .coeffs
                    .iter()
                    .fold(r.rhs.abs(), |a, c| a.max(c.abs()))
                    .max(1e-300);
                let flip = if r.rhs < 0.0 { -1.0 } else { 1.0 };
                let rel = match (r.rel, flip < 0.0) {
                    (Relation::Le, true) => Relation::Ge,
                    (Relation::Ge, true) => Relation::Le,
                    (rel, _) => rel,
                };
                Row {
                    coeffs: r.coeffs.iter().map(|c| c * flip / scale).collect(),
                    rel,
                    rhs: r.rhs * flip / scale,
                }
            })
            .collect();
        let slack_count = rows.iter().filter(|r| r.rel != Relation::Eq).count();
        let art_count = rows.iter().filter(|r| r.rel != Relation::Le).count();
        let art_start = n + slack_count;
        let cols = art_start + art_count;
        let rhs = cols;
        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0usize; m];
        let (mut s, mut a) = (n, art_start);
        for (i, r) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(&r.coeffs);
            t[i][rhs] = r.rhs;
            match r.rel {
                Relation::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Relation::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }

        if art_count > 0 {
            let mut cost = vec![0.0; cols];
            cost[art_start..].iter_mut().for_each(|c| *c = 1.0);
            let mut obj = reduced_costs(&t, &basis, &cost);
            run(&mut t, &mut obj, &mut basis, cols)?;
            if -obj[rhs] > 1e-8 {
                return Err(LpError::Infeasible);
            }
            // pivot remaining zero-level artificials out where possible
            let mut i = 0;
            while i < t.len() {
                if basis[i] >= art_start {
                    match (0..art_start).find(|&j| t[i][j].abs() > EPS) {
                        Some(j) => pivot(&mut t, &mut obj, &mut basis, i, j),
                        None => {
                            t.remove(i);
                            basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }

        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&self.objective);
        let mut obj = reduced_costs(&t, &basis, &cost);
        run(&mut t, &mut obj, &mut basis, art_start)?;
        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = t[i][rhs].max(0.0);
            }
        }
        let objective = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution { x, objective })
    }
}

/// Objective row `c_j - c_B B^-1 A_j`, last entry `-c_B x_B`.
fn reduced_costs(t: &[Vec<f64>], basis: &[usize], cost: &[f64]) -> Vec<f64> {
    let cols = cost.len();
    let mut obj: Vec<f64> = cost.iter().copied().chain(std::iter::once(0.0)).collect();
    for (row, &b) in t.iter().zip(basis) {
        let cb = cost[b];
        if cb != 0.0 {
            for j in 0..=cols {
                obj[j] -= cb * row[j];
            }
        }
    }
    obj
}

/// Simplex iterations with Bland's rule; only columns `< allowed` may enter.
fn run(
    t: &mut [Vec<f64>],
    obj: &mut [f64],
    basis: &mut [usize],
    allowed: usize,
) -> Result<(), LpError> {
    let rhs = obj.len() - 1;
    for _ in 0..MAX_PIVOTS {
        let Some(j) = (0..allowed).find(|&j| obj[j] < -EPS) else {
            return Ok(());
        };
        let mut best: Option<(f64, usize)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[j] > EPS {
                let ratio = row[rhs] / row[j];
                best = match best {
                    None => Some((ratio, i)),
                    Some((r, bi)) => {
                        let tie = (ratio - r).abs() <= 1e-12 * (1.0 + r.abs());
                        if (!tie && ratio < r) || (tie && basis[i] < basis[bi]) {
                            Some((ratio, i))
                        } else {
                            Some((r, bi))
                        }
                    }
                };
            }
        }
        let Some((_, i)) = best else {
            return Err(LpError::Unbounded);
        };
        pivot(t, obj, basis, i, j);
    }
    Err(LpError::PivotLimit(MAX_PIVOTS))
}

fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], i: usize, j: usize) {
    let p = t[i][j];
    t[i].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[i].clone();
    for (r, row) in t.iter_mut().enumerate() {
        if r != i && row[j] != 0.0 {
            let f = row[j];
            row.iter_mut()
                .zip(&pivot_row)
                .for_each(|(v, pv)| *v -= f * pv);
        }
    }
    let f = obj[j];
    if f != 0.0 {
        obj.iter_mut()
            .zip(&pivot_row)
            .for_each(|(v, pv)| *v -= f * pv);
    }
    basis[i] = j;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.constrain(vec![1.0, 0.0], Relation::Le, 4.0).unwrap();
        lp.constrain(vec![0.0, 2.0], Relation::Le, 12.0).unwrap();
        lp.constrain(vec![3.0, 2.0], Relation::Le, 18.0).unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.objective + 36.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y s.t. x + 2y >= 4, 3x + y >= 6  ->  (1.6, 1.2), 2.8
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.constrain(vec![1.0, 2.0], Relation::Ge, 4.0).unwrap();
        lp.constrain(vec![3.0, 1.0], Relation::Ge, 6.0).unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.objective - 2.8).abs() < 1e-9);
    }

    #[test]
    fn equality_and_negative_rhs() {
        // min 2x - y s.t. x - y = -1, x <= 3  ->  (0, 1), objective -1
        let mut lp = LinearProgram::new(vec![2.0, -1.0]);
        lp.constrain(vec![1.0, -1.0], Relation::Eq, -1.0).unwrap();
        lp.upper_bound(0, 3.0).unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.objective + 1.0).abs() < 1e-9);
        assert!((s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.constrain(vec![1.0], Relation::Ge, 5.0).unwrap();
        lp.upper_bound(0, 2.0).unwrap();
        assert_eq!(lp.minimize(), Err(LpError::Infeasible));
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.constrain(vec![1.0, -1.0], Relation::Le, 1.0).unwrap();
        assert_eq!(lp.minimize(), Err(LpError::Unbounded));
        assert!(matches!(
            lp.constrain(vec![1.0], Relation::Le, 0.0),
            Err(LpError::Dimension { .. })
        ));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example (Beale) solved with Bland's rule
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.constrain(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
            .unwrap();
        lp.constrain(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
            .unwrap();
        lp.constrain(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0)
            .unwrap();
        let s = lp.minimize().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-9);
    }
}
