//! Sparse SPD solves under pin and tie constraints.
//!
//! Pins fix an unknown to a value; ties force two unknowns to be equal.
//! Constraints are eliminated (ties by union-find, pinned classes moved to the
//! right-hand side), the reduced system is factorized once (LDLT with reverse
//! Cuthill-McKee ordering), and solutions are validated against a relative
//! residual bound with iterative refinement as a fallback. A
//! [`ConstrainedSystem`] can be re-solved for many right-hand sides and pin
//! values without re-factorizing, as long as the *set* of pinned and tied
//! unknowns stays fixed.

use sprs::{CsMat, CsMatView, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::error::{Error, Result};

/// Relative residual accepted without complaint; solutions worse than this
/// after refinement are reported as solver failures.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub struct LinearConstraintSet {
    pins: Vec<(usize, f64)>,
    ties: Vec<(usize, usize)>,
}

impl LinearConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pin(&mut self, unknown: usize, value: f64) {
        self.pins.push((unknown, value));
    }

    pub fn tie(&mut self, a: usize, b: usize) {
        self.ties.push((a, b));
    }

    pub fn pins(&self) -> &[(usize, f64)] {
        &self.pins
    }

    pub fn ties(&self) -> &[(usize, usize)] {
        &self.ties
    }

    pub fn has_pins(&self) -> bool {
        !self.pins.is_empty()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index wins so representatives are deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Reduced, factorized system for one matrix and one constraint *pattern*.
pub struct ConstrainedSystem {
    n: usize,
    /// Tie-class representative of each unknown.
    root: Vec<usize>,
    /// Column of each free class root in the reduced system (usize::MAX when
    /// the class is pinned).
    col: Vec<usize>,
    n_free: usize,
    /// Pin slots in the order they were declared: (unknown, root).
    pin_slots: Vec<(usize, usize)>,
    /// Rhs coupling with pinned classes: rhs_red[row] -= coeff * value(root).
    coupling: Vec<(usize, usize, f64)>,
    reduced: CsMat<f64>,
    factor: Option<LdlNumeric<f64, usize>>,
}

impl ConstrainedSystem {
    /// `matrix` must be square, symmetric, and positive definite once the
    /// constrained unknowns are eliminated. Pin values passed here are only a
    /// template; `solve` takes the actual values.
    pub fn new(matrix: CsMatView<f64>, constraints: &LinearConstraintSet) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(Error::Solver("matrix is not square".into()));
        }
        for &(i, _) in &constraints.pins {
            if i >= n {
                return Err(Error::Constraint(format!("pin on unknown {i} out of range")));
            }
        }
        for &(a, b) in &constraints.ties {
            if a >= n || b >= n {
                return Err(Error::Constraint(format!(
                    "tie ({a}, {b}) out of range"
                )));
            }
        }

        let mut uf = UnionFind::new(n);
        for &(a, b) in &constraints.ties {
            uf.union(a, b);
        }
        let root: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();

        let mut pinned_root = vec![false; n];
        let mut pin_slots = Vec::with_capacity(constraints.pins.len());
        for &(i, _) in &constraints.pins {
            let r = root[i];
            pinned_root[r] = true;
            pin_slots.push((i, r));
        }

        let mut col = vec![usize::MAX; n];
        let mut n_free = 0;
        for i in 0..n {
            if root[i] == i && !pinned_root[i] {
                col[i] = n_free;
                n_free += 1;
            }
        }

        let mut tri = TriMat::new((n_free, n_free));
        let mut coupling = Vec::new();
        for (i, row) in matrix.outer_iterator().enumerate() {
            let ri = root[i];
            if pinned_root[ri] {
                continue;
            }
            let rowc = col[ri];
            for (j, &v) in row.iter() {
                let rj = root[j];
                if pinned_root[rj] {
                    coupling.push((rowc, rj, v));
                } else {
                    tri.add_triplet(rowc, col[rj], v);
                }
            }
        }
        let reduced = tri.to_csr();

        // The LDLT backend asserts on 1x1 systems; those are solved directly.
        let factor = if n_free > 1 {
            let ldl = Ldl::new()
                .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
                .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee);
            Some(
                ldl.numeric(reduced.view())
                    .map_err(|e| Error::Solver(format!("LDLT factorization failed: {e}")))?,
            )
        } else {
            None
        };

        Ok(ConstrainedSystem {
            n,
            root,
            col,
            n_free,
            pin_slots,
            coupling,
            reduced,
            factor,
        })
    }

    /// Solve with the given pin values (parallel to the pins declared at
    /// construction, in declaration order) and right-hand side.
    pub fn solve_with_pins(&self, pin_values: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        if pin_values.len() != self.pin_slots.len() {
            return Err(Error::Constraint(format!(
                "expected {} pin values, got {}",
                self.pin_slots.len(),
                pin_values.len()
            )));
        }
        if rhs.len() != self.n {
            return Err(Error::Solver(format!(
                "rhs length {} does not match system size {}",
                rhs.len(),
                self.n
            )));
        }

        // Pin value per pinned class; contradictions are an error.
        let mut value_of_root: Vec<f64> = vec![f64::NAN; self.n];
        for (&(unknown, r), &v) in self.pin_slots.iter().zip(pin_values) {
            let cur = value_of_root[r];
            if cur.is_nan() {
                value_of_root[r] = v;
            } else if cur != v {
                return Err(Error::Constraint(format!(
                    "unknown {unknown} pinned to {v} but its tie class is already pinned to {cur}"
                )));
            }
        }

        let mut out = vec![0.0; self.n];
        if self.n_free == 0 {
            for i in 0..self.n {
                out[i] = value_of_root[self.root[i]];
            }
            return Ok(out);
        }

        let mut b = vec![0.0; self.n_free];
        for i in 0..self.n {
            let r = self.root[i];
            if self.col[r] != usize::MAX {
                b[self.col[r]] += rhs[i];
            }
        }
        for &(row, pr, coeff) in &self.coupling {
            b[row] -= coeff * value_of_root[pr];
        }

        let apply = |rhs: &[f64]| -> Vec<f64> {
            match &self.factor {
                Some(f) => f.solve(rhs),
                None => {
                    let a = self.reduced.get(0, 0).copied().unwrap_or(0.0);
                    vec![rhs[0] / a]
                }
            }
        };
        let mut x = apply(&b);

        // Residual check with iterative refinement; stop early once the
        // refinement stalls (residual no longer shrinking).
        let mut rel = self.relative_residual(&x, &b);
        for _ in 0..8 {
            if rel <= RESIDUAL_TOLERANCE {
                break;
            }
            let r = self.residual(&x, &b);
            let dx = apply(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            let next = self.relative_residual(&x, &b);
            if next >= rel {
                // The correction no longer helps; keep the previous iterate.
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi -= di;
                }
                break;
            }
            let stalled = next >= 0.5 * rel;
            rel = next;
            if stalled {
                break;
            }
        }
        if !rel.is_finite() || rel > RESIDUAL_TOLERANCE {
            return Err(Error::Solver(format!(
                "solution rejected: relative residual {rel:.3e} (system is singular or \
                 severely ill-conditioned)"
            )));
        }

        for i in 0..self.n {
            let r = self.root[i];
            out[i] = if self.col[r] == usize::MAX {
                value_of_root[r]
            } else {
                x[self.col[r]]
            };
        }
        Ok(out)
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = b.to_vec();
        for (i, row) in self.reduced.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                r[i] -= v * x[j];
            }
        }
        r
    }

    fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = self.residual(&x.to_vec(), b);
        let rn = norm2(&r);
        let mut kx = b.to_vec();
        for (v, (ri, bi)) in kx.iter_mut().zip(r.iter().zip(b)) {
            *v = bi - ri; // K x = b - r
        }
        let scale = norm2(b).max(norm2(&kx)).max(f64::MIN_POSITIVE);
        rn / scale
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One-shot constrained solve.
pub fn solve_constrained(
    matrix: CsMatView<f64>,
    rhs: &[f64],
    constraints: &LinearConstraintSet,
) -> Result<Vec<f64>> {
    let sys = ConstrainedSystem::new(matrix, constraints)?;
    let pin_values: Vec<f64> = constraints.pins.iter().map(|&(_, v)| v).collect();
    sys.solve_with_pins(&pin_values, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Stiffness of a 1-D path graph with unit weights.
    fn path_stiffness(n: usize) -> CsMat<f64> {
        let mut tri = TriMat::new((n, n));
        for i in 0..n - 1 {
            tri.add_triplet(i, i, 1.0);
            tri.add_triplet(i + 1, i + 1, 1.0);
            tri.add_triplet(i, i + 1, -1.0);
            tri.add_triplet(i + 1, i, -1.0);
        }
        tri.to_csr()
    }

    #[test]
    fn pinned_ends_give_linear_ramp() {
        let n = 11;
        let k = path_stiffness(n);
        let mut c = LinearConstraintSet::new();
        c.pin(0, 0.0);
        c.pin(n - 1, 1.0);
        let x = solve_constrained(k.view(), &vec![0.0; n], &c).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            assert!((xi - i as f64 / (n - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_merge_unknowns() {
        // Tie the two middle vertices of a path: the profile must be flat
        // across the tied pair and piecewise linear on either side.
        let n = 8;
        let k = path_stiffness(n);
        let mut c = LinearConstraintSet::new();
        c.pin(0, 0.0);
        c.pin(n - 1, 3.0);
        c.tie(3, 4);
        let x = solve_constrained(k.view(), &vec![0.0; n], &c).unwrap();
        assert_eq!(x[3], x[4]);
        // 6 effective unit-weight segments, one of them (3-4) collapsed:
        // slope is 3/6 per remaining segment.
        for i in 0..3 {
            assert!((x[i] - 0.5 * i as f64).abs() < 1e-12);
        }
        for i in 4..n {
            assert!((x[i] - 0.5 * (i - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn contradictory_pins_are_rejected() {
        let k = path_stiffness(4);
        let mut c = LinearConstraintSet::new();
        c.pin(0, 0.0);
        c.pin(3, 1.0);
        c.tie(0, 3);
        assert!(matches!(
            solve_constrained(k.view(), &vec![0.0; 4], &c),
            Err(Error::Constraint(_))
        ));
        // Same value through a tie is fine.
        let mut c = LinearConstraintSet::new();
        c.pin(0, 2.0);
        c.pin(3, 2.0);
        c.tie(0, 3);
        c.pin(1, 0.0);
        let x = solve_constrained(k.view(), &vec![0.0; 4], &c).unwrap();
        assert_eq!(x[0], 2.0);
        assert_eq!(x[3], 2.0);
    }

    #[test]
    fn unconstrained_singular_system_is_reported() {
        // A path Laplacian with no pins has a constant null space; an rhs
        // with nonzero mean is unsolvable, so either the factorization or the
        // residual check must fail.
        let k = path_stiffness(5);
        let c = LinearConstraintSet::new();
        let r = solve_constrained(k.view(), &[1.0, 0.0, 0.0, 0.0, 0.0], &c);
        assert!(r.is_err());
    }

    #[test]
    fn fully_pinned_system() {
        let k = path_stiffness(3);
        let mut c = LinearConstraintSet::new();
        for i in 0..3 {
            c.pin(i, i as f64);
        }
        let x = solve_constrained(k.view(), &vec![0.0; 3], &c).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn reusing_the_factorization_with_new_pin_values() {
        let n = 6;
        let k = path_stiffness(n);
        let mut c = LinearConstraintSet::new();
        c.pin(0, 0.0);
        c.pin(n - 1, 1.0);
        let sys = ConstrainedSystem::new(k.view(), &c).unwrap();
        let x1 = sys.solve_with_pins(&[0.0, 1.0], &vec![0.0; n]).unwrap();
        let x2 = sys.solve_with_pins(&[0.0, 10.0], &vec![0.0; n]).unwrap();
        for i in 0..n {
            assert!((10.0 * x1[i] - x2[i]).abs() < 1e-10);
        }
    }
}
