//! Dense tableau with an explicit basis inverse.
//!
//! Every original variable is rewritten as an offset plus a signed combination
//! of nonnegative standard columns, finite upper bounds become `<=` rows, and
//! rows are sign-normalized so the right-hand side at the build parameter is
//! nonnegative. Slack and artificial columns are never dropped: the column
//! that formed the initial identity for row `i` holds column `i` of `B^-1`.

use super::{
    Bounds, LpError, LpProblem, LpSolution, LpStatus, Relation, FEASIBILITY_TOL, MAX_PIVOTS,
    OPTIMALITY_TOL, PIVOT_TOL, STALL_THRESHOLD,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Clone, Debug)]
pub(crate) struct Tableau {
    m: usize,
    ncols: usize,
    width: usize,
    t: Vec<f64>,
    /// Reduced-cost row; the last entry is minus the current objective.
    rc: Vec<f64>,
    pub(crate) basis: Vec<usize>,
    in_basis: Vec<bool>,
    kind: Vec<ColKind>,
    init_col: Vec<usize>,
    cost: Vec<f64>,
    b_std: Vec<f64>,
    d_std: Vec<f64>,
    row_sign: Vec<f64>,
    n_orig_rows: usize,
    /// Standard structural column -> (original variable, sign).
    std_map: Vec<(usize, f64)>,
    offsets: Vec<f64>,
    obj_offset: f64,
    pub(crate) pivots: usize,
}

impl Tableau {
    /// Builds the phase-one tableau with the parameter fixed at `z`.
    pub(crate) fn build(problem: &LpProblem, z: f64) -> Tableau {
        let n = problem.num_vars();
        let mut std_map = Vec::with_capacity(n + 4);
        let mut offsets = vec![0.0; n];
        let mut ub_rows: Vec<(usize, f64)> = Vec::new();
        for (j, b) in problem.bounds.iter().enumerate() {
            let Bounds { lower, upper } = *b;
            if lower.is_finite() {
                offsets[j] = lower;
                std_map.push((j, 1.0));
                if upper.is_finite() {
                    ub_rows.push((std_map.len() - 1, upper - lower));
                }
            } else if upper.is_finite() {
                offsets[j] = upper;
                std_map.push((j, -1.0));
            } else {
                std_map.push((j, 1.0));
                std_map.push((j, -1.0));
            }
        }
        let n_std = std_map.len();
        let n_orig_rows = problem.num_rows();
        let m = n_orig_rows + ub_rows.len();

        // rows in standard structural coordinates
        let mut rows: Vec<(Vec<f64>, Relation, f64, f64)> = Vec::with_capacity(m);
        for row in &problem.constraints {
            let mut coeffs = vec![0.0; n_std];
            let mut shift = 0.0;
            for (k, &(j, s)) in std_map.iter().enumerate() {
                coeffs[k] = s * row.coeffs[j];
            }
            for (j, a) in row.coeffs.iter().enumerate() {
                shift += a * offsets[j];
            }
            rows.push((coeffs, row.relation, row.rhs - shift, row.rhs_direction));
        }
        for &(k, width) in &ub_rows {
            let mut coeffs = vec![0.0; n_std];
            coeffs[k] = 1.0;
            rows.push((coeffs, Relation::Le, width, 0.0));
        }

        let mut row_sign = vec![1.0; m];
        let mut n_slack = 0;
        let mut n_art = 0;
        for (i, (_, rel, b, d)) in rows.iter().enumerate() {
            let rhs = b + z * d;
            let flip = rhs < 0.0 || (rhs == 0.0 && *rel == Relation::Ge);
            if flip {
                row_sign[i] = -1.0;
            }
            let rel = effective(*rel, flip);
            match rel {
                Relation::Le => n_slack += 1,
                Relation::Ge => {
                    n_slack += 1;
                    n_art += 1
                }
                Relation::Eq => n_art += 1,
            }
        }

        let ncols = n_std + n_slack + n_art;
        let width = ncols + 1;
        let mut t = vec![0.0; m * width];
        let mut kind = vec![ColKind::Structural; n_std];
        kind.extend(std::iter::repeat_n(ColKind::Slack, n_slack));
        kind.extend(std::iter::repeat_n(ColKind::Artificial, n_art));
        let mut init_col = vec![0; m];
        let mut b_std = vec![0.0; m];
        let mut d_std = vec![0.0; m];
        let mut next_slack = n_std;
        let mut next_art = n_std + n_slack;
        for (i, (coeffs, rel, b, d)) in rows.iter().enumerate() {
            let s = row_sign[i];
            let base = i * width;
            for (k, a) in coeffs.iter().enumerate() {
                t[base + k] = s * a;
            }
            b_std[i] = s * b;
            d_std[i] = s * d;
            t[base + ncols] = s * (b + z * d);
            match effective(*rel, s < 0.0) {
                Relation::Le => {
                    t[base + next_slack] = 1.0;
                    init_col[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    t[base + next_slack] = -1.0;
                    next_slack += 1;
                    t[base + next_art] = 1.0;
                    init_col[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    t[base + next_art] = 1.0;
                    init_col[i] = next_art;
                    next_art += 1;
                }
            }
        }

        let mut cost = vec![0.0; ncols];
        let mut obj_offset = problem.objective_constant;
        for (k, &(j, s)) in std_map.iter().enumerate() {
            cost[k] = s * problem.objective[j];
        }
        for (j, c) in problem.objective.iter().enumerate() {
            obj_offset += c * offsets[j];
        }

        let mut in_basis = vec![false; ncols];
        for &c in &init_col {
            in_basis[c] = true;
        }
        Tableau {
            m,
            ncols,
            width,
            t,
            rc: vec![0.0; width],
            basis: init_col.clone(),
            in_basis,
            kind,
            init_col,
            cost,
            b_std,
            d_std,
            row_sign,
            n_orig_rows,
            std_map,
            offsets,
            obj_offset,
            pivots: 0,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    #[inline]
    pub(crate) fn rhs(&self, r: usize) -> f64 {
        self.t[r * self.width + self.ncols]
    }

    fn compute_rc(&mut self, costs: &[f64]) {
        let w = self.width;
        self.rc.iter_mut().for_each(|v| *v = 0.0);
        self.rc[..self.ncols].copy_from_slice(costs);
        for r in 0..self.m {
            let cb = costs[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[r * w..(r + 1) * w];
            for (rc, a) in self.rc.iter_mut().zip(row) {
                *rc -= cb * a;
            }
        }
    }

    pub(crate) fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.t[r * w + q];
        let inv = 1.0 / p;
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.t[r * w + q] = 1.0;
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for (v, a) in row.iter_mut().zip(&pivot_row) {
                *v -= f * a;
            }
            row[q] = 0.0;
        }
        let f = self.rc[q];
        if f != 0.0 {
            for (v, a) in self.rc.iter_mut().zip(&pivot_row) {
                *v -= f * a;
            }
            self.rc[q] = 0.0;
        }
        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.pivots += 1;
    }

    fn allowed(&self, j: usize, phase_one: bool) -> bool {
        phase_one || self.kind[j] != ColKind::Artificial
    }

    /// Primal simplex on the current reduced-cost row.
    fn primal_loop(&mut self, phase_one: bool) -> Result<LpStatus, LpError> {
        let mut bland = false;
        let mut stall = 0usize;
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(LpError::PivotLimit(MAX_PIVOTS));
            }
            let mut q = usize::MAX;
            let mut best = -OPTIMALITY_TOL;
            for j in 0..self.ncols {
                if self.in_basis[j] || !self.allowed(j, phase_one) {
                    continue;
                }
                let d = self.rc[j];
                if d < best {
                    q = j;
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            if q == usize::MAX {
                return Ok(LpStatus::Optimal);
            }

            let (r, best_ratio) = if bland { self.ratio_row(q, true) } else { self.harris_row(q) };
            if r == usize::MAX {
                return Ok(LpStatus::Unbounded);
            }
            if best_ratio <= FEASIBILITY_TOL {
                stall += 1;
                if stall >= STALL_THRESHOLD {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            self.pivot(r, q);
            self.clean_rhs();
        }
    }

    /// Minimum-ratio row; ties go to the largest pivot, or to the smallest
    /// basic index under Bland's rule.
    fn ratio_row(&self, q: usize, bland: bool) -> (usize, f64) {
        let mut r = usize::MAX;
        let mut best_ratio = f64::INFINITY;
        let mut best_piv = 0.0;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
            let better = if r == usize::MAX || ratio < best_ratio && !tie {
                true
            } else if tie {
                if bland {
                    self.basis[i] < self.basis[r]
                } else {
                    a > best_piv
                }
            } else {
                false
            };
            if better {
                r = i;
                best_ratio = ratio;
                best_piv = a;
            }
        }
        (r, best_ratio)
    }

    /// Two-pass ratio test: the largest pivot among rows whose ratio is
    /// within the feasibility tolerance of the minimum.
    fn harris_row(&self, q: usize) -> (usize, f64) {
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a > PIVOT_TOL {
                bound = bound.min((self.rhs(i).max(0.0) + FEASIBILITY_TOL) / a);
            }
        }
        let mut r = usize::MAX;
        let mut best_piv = 0.0;
        let mut best_ratio = f64::INFINITY;
        for i in 0..self.m {
            let a = self.at(i, q);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            if ratio <= bound && a > best_piv {
                r = i;
                best_piv = a;
                best_ratio = ratio;
            }
        }
        (r, best_ratio)
    }

    fn clean_rhs(&mut self) {
        for r in 0..self.m {
            let idx = r * self.width + self.ncols;
            if self.t[idx] < 0.0 && self.t[idx] > -FEASIBILITY_TOL {
                self.t[idx] = 0.0;
            }
        }
    }

    fn b_scale(&self) -> f64 {
        (0..self.m).fold(1.0f64, |acc, r| acc.max(self.rhs(r).abs()))
    }

    /// Two-phase primal simplex from the slack/artificial basis.
    pub(crate) fn optimize(&mut self) -> Result<LpStatus, LpError> {
        let has_art = self.kind.contains(&ColKind::Artificial);
        if has_art {
            let scale = self.b_scale();
            let phase_one: Vec<f64> = self
                .kind
                .iter()
                .map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 })
                .collect();
            self.compute_rc(&phase_one);
            // phase one is bounded below by zero
            self.primal_loop(true)?;
            let infeas = -self.rc[self.ncols];
            if infeas > FEASIBILITY_TOL * scale * (self.m as f64).max(1.0) {
                return Ok(LpStatus::Infeasible);
            }
            self.drive_out_artificials();
        }
        let cost = self.cost.clone();
        self.compute_rc(&cost);
        self.primal_loop(false)
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let idx = r * self.width + self.ncols;
            if self.t[idx].abs() <= FEASIBILITY_TOL {
                self.t[idx] = 0.0;
            }
            let mut q = usize::MAX;
            let mut best = 1e-9;
            for j in 0..self.ncols {
                if self.kind[j] == ColKind::Artificial || self.in_basis[j] {
                    continue;
                }
                let a = self.at(r, j).abs();
                if a > best {
                    best = a;
                    q = j;
                }
            }
            // a row without a usable entry is redundant; its artificial stays basic at zero
            if q != usize::MAX {
                self.pivot(r, q);
                self.clean_rhs();
            }
        }
    }

    /// Row duals in standard coordinates, `c_B B^-1`.
    fn std_duals(&self) -> Vec<f64> {
        (0..self.m).map(|i| -self.rc[self.init_col[i]]).collect()
    }

    /// Duals of the original rows.
    pub(crate) fn duals(&self) -> Vec<f64> {
        let y = self.std_duals();
        (0..self.n_orig_rows).map(|i| self.row_sign[i] * y[i]).collect()
    }

    /// `B^-1 v` using the identity columns.
    pub(crate) fn binv_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            let c = self.init_col[i];
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.at(r, c) * vi;
            }
        }
        out
    }

    pub(crate) fn b_at(&self, z: f64) -> Vec<f64> {
        self.b_std
            .iter()
            .zip(&self.d_std)
            .map(|(b, d)| b + z * d)
            .collect()
    }

    /// Basic values `B^-1 b(z)` and their parameter direction `B^-1 d`.
    pub(crate) fn beta_delta(&self, z: f64) -> (Vec<f64>, Vec<f64>) {
        (self.binv_times(&self.b_at(z)), self.binv_times(&self.d_std))
    }

    /// Parameter direction of the basic values, `B^-1 d`.
    pub(crate) fn delta(&self) -> Vec<f64> {
        self.binv_times(&self.d_std)
    }

    /// Resets the right-hand side column to `B^-1 b(z)`, with entries within
    /// the feasibility tolerance of zero set to zero.
    pub(crate) fn set_parameter(&mut self, z: f64) {
        let mut beta = self.binv_times(&self.b_at(z));
        for v in &mut beta {
            if v.abs() <= FEASIBILITY_TOL {
                *v = 0.0;
            }
        }
        self.set_rhs(&beta);
    }

    /// Objective slope `c_B B^-1 d` of the current basis.
    pub(crate) fn slope(&self, delta: &[f64]) -> f64 {
        delta
            .iter()
            .zip(&self.basis)
            .map(|(d, b)| self.cost[*b] * d)
            .sum()
    }

    /// Objective of the basic solution with basic values `beta`.
    pub(crate) fn objective_of(&self, beta: &[f64]) -> f64 {
        self.obj_offset
            + beta
                .iter()
                .zip(&self.basis)
                .map(|(v, b)| self.cost[*b] * v)
                .sum::<f64>()
    }

    /// Original-variable values of the basic solution with basic values `beta`.
    pub(crate) fn primal_of(&self, beta: &[f64]) -> Vec<f64> {
        let mut x = self.offsets.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.std_map.len() {
                let (j, s) = self.std_map[b];
                x[j] += s * beta[r];
            }
        }
        x
    }

    /// Overwrites the basic values, e.g. after snapping round-off to zero.
    pub(crate) fn set_rhs(&mut self, beta: &[f64]) {
        let mut obj = 0.0;
        for (r, v) in beta.iter().enumerate() {
            self.t[r * self.width + self.ncols] = *v;
            obj += self.cost[self.basis[r]] * v;
        }
        self.rc[self.ncols] = -obj;
    }

    pub(crate) fn rhs_column(&self) -> Vec<f64> {
        (0..self.m).map(|r| self.rhs(r)).collect()
    }

    /// Dual simplex pivot on row `r` with a two-pass ratio test. Returns
    /// false when no column can enter.
    /// Dual-simplex pivot on row `r`. The entering column comes from a Harris
    /// two-pass ratio test, or under `bland` from the exact minimum ratio with
    /// ties to the lowest index.
    pub(crate) fn dual_pivot(&mut self, r: usize, bland: bool) -> bool {
        let mut bound = f64::INFINITY;
        for j in 0..self.ncols {
            if self.kind[j] == ColKind::Artificial || self.in_basis[j] {
                continue;
            }
            let a = self.at(r, j);
            if a < -PIVOT_TOL {
                let slack = if bland { 0.0 } else { OPTIMALITY_TOL };
                bound = bound.min((self.rc[j].max(0.0) + slack) / -a);
            }
        }
        let mut q = usize::MAX;
        let mut best_piv = 0.0;
        for j in 0..self.ncols {
            if self.kind[j] == ColKind::Artificial || self.in_basis[j] {
                continue;
            }
            let a = self.at(r, j);
            if a >= -PIVOT_TOL {
                continue;
            }
            let ratio = self.rc[j].max(0.0) / -a;
            if bland {
                if ratio <= bound * (1.0 + 1e-12) + 1e-15 {
                    q = j;
                    break;
                }
            } else if ratio <= bound && -a > best_piv {
                q = j;
                best_piv = -a;
            }
        }
        if q == usize::MAX {
            return false;
        }
        self.pivot(r, q);
        true
    }

    pub(crate) fn basic_index(&self, r: usize) -> usize {
        self.basis[r]
    }

    pub(crate) fn solution(&self, problem: &LpProblem, status: LpStatus) -> LpSolution {
        if status != LpStatus::Optimal {
            return LpSolution {
                status,
                x: Vec::new(),
                duals: Vec::new(),
                reduced_costs: Vec::new(),
                objective: f64::NAN,
                pivots: self.pivots,
            };
        }
        let beta: Vec<f64> = (0..self.m).map(|r| self.rhs(r)).collect();
        let x = self.primal_of(&beta);
        let duals = self.duals();
        let reduced_costs = (0..problem.num_vars())
            .map(|j| {
                problem.objective[j]
                    - problem
                        .constraints
                        .iter()
                        .zip(&duals)
                        .map(|(row, y)| y * row.coeffs[j])
                        .sum::<f64>()
            })
            .collect();
        let objective = problem.objective_constant
            + problem
                .objective
                .iter()
                .zip(&x)
                .map(|(c, v)| c * v)
                .sum::<f64>();
        LpSolution {
            status,
            x,
            duals,
            reduced_costs,
            objective,
            pivots: self.pivots,
        }
    }
}

fn effective(rel: Relation, flip: bool) -> Relation {
    match (rel, flip) {
        (r, false) => r,
        (Relation::Le, true) => Relation::Ge,
        (Relation::Ge, true) => Relation::Le,
        (Relation::Eq, true) => Relation::Eq,
    }
}
