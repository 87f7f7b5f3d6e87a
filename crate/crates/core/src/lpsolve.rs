//! Dense revised simplex for `max c·x  s.t.  A x (<=|=) b,  x >= 0`.
//!
//! Two-phase method with artificial variables, an explicit basis inverse
//! refreshed by Gauss-Jordan refactorization, Dantzig pricing and Bland's
//! rule once a run of degenerate pivots trips the stall counter. The
//! [`Simplex`] object also accepts new columns after a solve and resumes
//! from the previous optimal basis, which column generation relies on.

use thiserror::Error;

/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;
/// Reduced-cost and phase-one feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Tolerance promised on returned solutions.
pub const SOLUTION_TOL: f64 = 1e-7;

const STALL_LIMIT: usize = 50;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex iteration cap of {0} exceeded")]
    IterationLimit(usize),
    #[error("basis matrix became numerically singular")]
    SingularBasis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Maximization LP over non-negative variables.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram { objective, constraints: Vec::new() }
    }

    pub fn le(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.constraints.push(Constraint { coeffs, relation: Relation::Le, rhs });
        self
    }

    pub fn eq(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.constraints.push(Constraint { coeffs, relation: Relation::Eq, rhs });
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!("row {i} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!("row {i} has non-finite entries")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One multiplier per constraint row (`>= 0` on `<=` rows).
    pub dual: Vec<f64>,
    pub objective_value: f64,
}

/// Residuals of a solution against the program it claims to solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub complementary: f64,
}

impl LpSolution {
    pub fn residuals(&self, lp: &LinearProgram) -> Residuals {
        let n = lp.num_vars();
        let mut r = Residuals::default();
        for x in &self.primal {
            r.primal = r.primal.max(-x);
        }
        let mut reduced = lp.objective.clone();
        for (i, c) in lp.constraints.iter().enumerate() {
            let ax: f64 = c.coeffs.iter().zip(&self.primal).map(|(a, x)| a * x).sum();
            let viol = match c.relation {
                Relation::Le => ax - c.rhs,
                Relation::Eq => (ax - c.rhs).abs(),
            };
            r.primal = r.primal.max(viol);
            let y = self.dual[i];
            if c.relation == Relation::Le {
                r.dual = r.dual.max(-y);
                r.complementary = r.complementary.max((y * (c.rhs - ax)).abs());
            }
            for j in 0..n {
                reduced[j] -= y * c.coeffs[j];
            }
        }
        for j in 0..n {
            r.dual = r.dual.max(reduced[j]);
            r.complementary = r.complementary.max((reduced[j] * self.primal[j]).abs());
        }
        let dual_obj: f64 = lp.constraints.iter().zip(&self.dual).map(|(c, y)| c.rhs * y).sum();
        r.gap = (dual_obj - self.objective_value).abs();
        r
    }
}

/// Solves `lp` from scratch.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let sol = Simplex::from_dense(lp)?.solve()?;
    if sol.status == LpStatus::Optimal && cfg!(debug_assertions) {
        let r = sol.residuals(lp);
        debug_assert!(
            r.gap <= 1e-6 * (1.0 + sol.objective_value.abs()),
            "strong duality violated: gap {}",
            r.gap
        );
    }
    Ok(sol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Clone, Debug)]
struct Column {
    entries: Vec<(usize, f64)>,
    cost: f64,
    kind: ColKind,
}

enum Step {
    Optimal,
    Unbounded,
}

/// Revised simplex state that survives between solves.
#[derive(Clone, Debug)]
pub struct Simplex {
    m: usize,
    rhs: Vec<f64>,
    /// `-1` where the row was negated to make its right-hand side non-negative.
    sign: Vec<f64>,
    cols: Vec<Column>,
    structural: Vec<usize>,
    basis: Vec<usize>,
    /// Row of each basic column; `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    feasible: bool,
    since_refactor: usize,
    pub pivots: usize,
}

impl Simplex {
    /// Empty structural part: rows with relations and right-hand sides.
    pub fn new(relations: &[Relation], rhs: &[f64]) -> Result<Self, LpError> {
        if relations.len() != rhs.len() {
            return Err(LpError::Malformed("relation/rhs length mismatch".into()));
        }
        if rhs.iter().any(|b| !b.is_finite()) {
            return Err(LpError::Malformed("non-finite right-hand side".into()));
        }
        let m = rhs.len();
        let mut sign = vec![1.0; m];
        let mut b = rhs.to_vec();
        let mut cols = Vec::with_capacity(2 * m);
        let mut basis = vec![0; m];
        for i in 0..m {
            if b[i] < 0.0 {
                sign[i] = -1.0;
                b[i] = -b[i];
            }
            match (relations[i], sign[i] > 0.0) {
                (Relation::Le, true) => {
                    basis[i] = cols.len();
                    cols.push(Column { entries: vec![(i, 1.0)], cost: 0.0, kind: ColKind::Slack });
                }
                (Relation::Le, false) => {
                    // negated <= row reads >=: surplus plus artificial
                    cols.push(Column { entries: vec![(i, -1.0)], cost: 0.0, kind: ColKind::Slack });
                    basis[i] = cols.len();
                    cols.push(Column { entries: vec![(i, 1.0)], cost: 0.0, kind: ColKind::Artificial });
                }
                (Relation::Eq, _) => {
                    basis[i] = cols.len();
                    cols.push(Column { entries: vec![(i, 1.0)], cost: 0.0, kind: ColKind::Artificial });
                }
            }
        }
        let mut pos = vec![usize::MAX; cols.len()];
        for (i, &c) in basis.iter().enumerate() {
            pos[c] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let feasible = cols.iter().all(|c| c.kind != ColKind::Artificial);
        Ok(Simplex {
            m,
            rhs: b.clone(),
            sign,
            cols,
            structural: Vec::new(),
            basis,
            pos,
            binv,
            xb: b,
            feasible,
            since_refactor: 0,
            pivots: 0,
        })
    }

    pub fn from_dense(lp: &LinearProgram) -> Result<Self, LpError> {
        lp.validate()?;
        let relations: Vec<Relation> = lp.constraints.iter().map(|c| c.relation).collect();
        let rhs: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
        let mut s = Simplex::new(&relations, &rhs)?;
        for (j, &cost) in lp.objective.iter().enumerate() {
            let entries: Vec<(usize, f64)> = lp
                .constraints
                .iter()
                .enumerate()
                .filter(|(_, c)| c.coeffs[j] != 0.0)
                .map(|(i, c)| (i, c.coeffs[j]))
                .collect();
            s.add_column(cost, &entries)?;
        }
        Ok(s)
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_structural(&self) -> usize {
        self.structural.len()
    }

    /// Appends a nonbasic structural column and returns its variable index.
    pub fn add_column(&mut self, cost: f64, entries: &[(usize, f64)]) -> Result<usize, LpError> {
        if !cost.is_finite() || entries.iter().any(|&(r, v)| r >= self.m || !v.is_finite()) {
            return Err(LpError::Malformed("bad column".into()));
        }
        let entries = entries.iter().filter(|(_, v)| *v != 0.0).map(|&(r, v)| (r, v * self.sign[r])).collect();
        self.cols.push(Column { entries, cost, kind: ColKind::Structural });
        self.pos.push(usize::MAX);
        self.structural.push(self.cols.len() - 1);
        Ok(self.structural.len() - 1)
    }

    /// Runs (or resumes) the simplex method.
    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let cap = 200 * (self.m + self.cols.len()) + 10_000;
        let mut budget = cap;
        if !self.feasible {
            let art_cost = |c: &Column| if c.kind == ColKind::Artificial { -1.0 } else { 0.0 };
            self.iterate(&art_cost, false, &mut budget, cap)?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(c, _)| self.cols[**c].kind == ColKind::Artificial)
                .map(|(_, x)| *x)
                .sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > FEAS_TOL * scale {
                return Ok(self.solution(LpStatus::Infeasible));
            }
            self.drive_out_artificials()?;
            self.feasible = true;
        }
        let cost = |c: &Column| if c.kind == ColKind::Structural { c.cost } else { 0.0 };
        match self.iterate(&cost, true, &mut budget, cap)? {
            Step::Optimal => Ok(self.solution(LpStatus::Optimal)),
            Step::Unbounded => Ok(self.solution(LpStatus::Unbounded)),
        }
    }

    fn duals_for(&self, cost: &dyn Fn(&Column) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &c) in self.basis.iter().enumerate() {
            let cb = cost(&self.cols[c]);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for k in 0..m {
                    y[k] += cb * row[k];
                }
            }
        }
        y
    }

    fn ftran(&self, col: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(r, v) in &self.cols[col].entries {
            for i in 0..m {
                alpha[i] += self.binv[i * m + r] * v;
            }
        }
        alpha
    }

    fn iterate(
        &mut self,
        cost: &dyn Fn(&Column) -> f64,
        phase_two: bool,
        budget: &mut usize,
        cap: usize,
    ) -> Result<Step, LpError> {
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            if *budget == 0 {
                return Err(LpError::IterationLimit(cap));
            }
            *budget -= 1;
            let y = self.duals_for(cost);
            let mut entering: Option<(usize, f64)> = None;
            for (j, col) in self.cols.iter().enumerate() {
                if self.pos[j] != usize::MAX || (phase_two && col.kind == ColKind::Artificial) {
                    continue;
                }
                let d = cost(col) - col.entries.iter().map(|&(r, v)| y[r] * v).sum::<f64>();
                if d > FEAS_TOL {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d > best) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Step::Optimal);
            };
            let alpha = self.ftran(q);

            // Harris ratio test: relaxed bound first, then the largest pivot
            // among rows within it; basic artificials at zero block any change
            let ratio_of = |i: usize, slack: f64| -> Option<f64> {
                let a = alpha[i];
                let art = phase_two && self.cols[self.basis[i]].kind == ColKind::Artificial;
                if art && a.abs() > PIVOT_TOL {
                    Some(0.0)
                } else if a > PIVOT_TOL {
                    Some((self.xb[i].max(0.0) + slack) / a)
                } else {
                    None
                }
            };
            let mut bound = f64::INFINITY;
            for i in 0..self.m {
                if let Some(r) = ratio_of(i, FEAS_TOL) {
                    bound = bound.min(r);
                }
            }
            if bound == f64::INFINITY {
                return Ok(Step::Unbounded);
            }
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let Some(ratio) = ratio_of(i, 0.0) else { continue };
                if ratio > bound {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(l) if bland => Some(if self.basis[i] < self.basis[l] { i } else { l }),
                    Some(l) => Some(if alpha[i].abs() > alpha[l].abs() { i } else { l }),
                };
            }
            let r = leave.expect("a blocking row exists");
            let theta = ratio_of(r, 0.0).unwrap_or(0.0);
            if theta <= 1e-12 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
            self.pivot(r, q, &alpha)?;
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let ar = alpha[r];
        let theta = self.xb[r] / ar;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
                if self.xb[i] < 0.0 && self.xb[i] > -FEAS_TOL {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = theta;
        {
            let (head, tail) = self.binv.split_at_mut(r * m);
            let (prow, rest) = tail.split_at_mut(m);
            for v in prow.iter_mut() {
                *v /= ar;
            }
            for (i, row) in head.chunks_exact_mut(m).chain(rest.chunks_exact_mut(m)).enumerate() {
                let i = if i < r { i } else { i + 1 };
                let f = alpha[i];
                if f != 0.0 {
                    for (x, p) in row.iter_mut().zip(prow.iter()) {
                        *x -= f * p;
                    }
                }
            }
        }
        let out = self.basis[r];
        self.pos[out] = usize::MAX;
        self.basis[r] = q;
        self.pos[q] = r;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &c) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[c].entries {
                a[r * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
                .expect("nonempty");
            if a[piv * m + col].abs() < 1e-13 {
                return Err(LpError::SingularBasis);
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for i in 0..m {
                if i != col {
                    let f = a[i * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[i * m + k] -= f * a[col * m + k];
                            inv[i * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let mut v: f64 = row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
            if v < 0.0 && v > -FEAS_TOL {
                v = 0.0;
            }
            self.xb[i] = v;
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// Pivots zero-valued artificials out of the basis after phase one.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for r in 0..m {
            if self.cols[self.basis[r]].kind != ColKind::Artificial {
                continue;
            }
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for (j, col) in self.cols.iter().enumerate() {
                if self.pos[j] != usize::MAX || col.kind == ColKind::Artificial {
                    continue;
                }
                let v: f64 = col.entries.iter().map(|&(k, a)| row[k] * a).sum();
                if v.abs() > 1e-9 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                self.xb[r] = 0.0;
                self.pivot(r, q, &alpha)?;
            }
            // otherwise the row is redundant and the artificial stays at zero
        }
        Ok(())
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let mut primal = vec![0.0; self.structural.len()];
        for (j, &c) in self.structural.iter().enumerate() {
            if self.pos[c] != usize::MAX {
                primal[j] = self.xb[self.pos[c]].max(0.0);
            }
        }
        let cost = |c: &Column| if c.kind == ColKind::Structural { c.cost } else { 0.0 };
        let y = self.duals_for(&cost);
        let dual: Vec<f64> = y.iter().zip(&self.sign).map(|(y, s)| y * s).collect();
        let objective_value = self.structural.iter().zip(&primal).map(|(&c, x)| self.cols[c].cost * x).sum();
        LpSolution { status, primal, dual, objective_value }
    }
}
