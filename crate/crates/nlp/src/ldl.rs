//! Sparse LDL^T factorization of symmetric (possibly indefinite) matrices.
//!
//! The factorization uses a fill-reducing AMD ordering, an elimination tree
//! computed once per sparsity pattern, and an up-looking numeric phase with
//! 1x1 pivots only. No numerical pivoting is performed, so the matrix must be
//! strongly factorizable in the chosen ordering; quasi-definite KKT matrices
//! are. The signs of the pivots give the inertia of the matrix.

use crate::NlpError;

const UNKNOWN: usize = usize::MAX;

/// Counts of positive, negative and zero pivots of a factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Symbolic analysis plus storage for the numeric factor of one sparsity pattern.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    // upper triangle of P A P^T in CSC form
    a_colptr: Vec<usize>,
    a_rowval: Vec<usize>,
    a_nzval: Vec<f64>,
    // position in a_nzval of every entry handed to `analyse`
    entry_map: Vec<usize>,
    etree: Vec<usize>,
    l_colptr: Vec<usize>,
    l_rowval: Vec<usize>,
    l_nzval: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // workspaces
    y_vals: Vec<f64>,
    y_used: Vec<bool>,
    y_idx: Vec<usize>,
    elim: Vec<usize>,
    next_space: Vec<usize>,
    work: Vec<f64>,
    factored: bool,
}

impl LdlFactor {
    /// Analyses the symmetric pattern given by `entries` (either triangle;
    /// duplicates are summed). Missing diagonal entries are added as zeros.
    pub fn analyse(n: usize, entries: &[(usize, usize)]) -> Result<Self, NlpError> {
        for &(i, j) in entries {
            if i >= n || j >= n {
                return Err(NlpError::Dimension(format!(
                    "matrix entry ({i}, {j}) outside a {n}x{n} pattern"
                )));
            }
        }
        // symmetric pattern for the ordering; AMD ignores the diagonal but
        // needs a nonempty pattern
        let mut cols: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in entries {
            if i != j {
                cols[i].push(j);
                cols[j].push(i);
            }
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        let mut ap = Vec::with_capacity(n + 1);
        let mut ai = Vec::new();
        ap.push(0usize);
        for c in &cols {
            ai.extend_from_slice(c);
            ap.push(ai.len());
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let control = amd::Control::default();
            let (p, _pinv, _info) = amd::order(n, &ap, &ai, &control)
                .map_err(|s| NlpError::Factorization(format!("AMD ordering failed: {s:?}")))?;
            p
        };
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // upper triangle pattern of the permuted matrix, with diagonal
        let mut upper: Vec<(usize, usize)> = Vec::with_capacity(entries.len() + n);
        for &(i, j) in entries {
            let (a, b) = (pinv[i], pinv[j]);
            upper.push((a.min(b), a.max(b)));
        }
        for k in 0..n {
            upper.push((k, k));
        }
        let mut order: Vec<usize> = (0..upper.len()).collect();
        order.sort_unstable_by_key(|&k| (upper[k].1, upper[k].0));
        let mut a_colptr = vec![0usize; n + 1];
        let mut a_rowval: Vec<usize> = Vec::new();
        let mut slot = vec![0usize; upper.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c) = upper[k];
            if last != Some((r, c)) {
                a_rowval.push(r);
                a_colptr[c + 1] += 1;
                last = Some((r, c));
            }
            slot[k] = a_rowval.len() - 1;
        }
        for c in 0..n {
            a_colptr[c + 1] += a_colptr[c];
        }
        let entry_map = slot[..entries.len()].to_vec();
        let nnz = a_rowval.len();

        // elimination tree and column counts of L
        let mut etree = vec![UNKNOWN; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![UNKNOWN; n];
        for j in 0..n {
            flag[j] = j;
            for &r in &a_rowval[a_colptr[j]..a_colptr[j + 1]] {
                let mut i = r;
                while flag[i] != j {
                    if etree[i] == UNKNOWN {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for k in 0..n {
            l_colptr[k + 1] = l_colptr[k] + lnz[k];
        }
        let lnnz = l_colptr[n];

        Ok(Self {
            n,
            perm,
            a_colptr,
            a_rowval,
            a_nzval: vec![0.0; nnz],
            entry_map,
            etree,
            l_colptr,
            l_rowval: vec![0; lnnz],
            l_nzval: vec![0.0; lnnz],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            y_vals: vec![0.0; n],
            y_used: vec![false; n],
            y_idx: vec![0; n],
            elim: vec![0; n],
            next_space: vec![0; n],
            work: vec![0.0; n],
            factored: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.l_nzval.len()
    }

    /// Numeric factorization. `values` is aligned with the entries passed to
    /// [`LdlFactor::analyse`]. A pivot with magnitude at most `zero_tol` times
    /// the largest diagonal magnitude stops the factorization and is reported
    /// in [`Inertia::zero`].
    pub fn factor(&mut self, values: &[f64], zero_tol: f64) -> Result<Inertia, NlpError> {
        if values.len() != self.entry_map.len() {
            return Err(NlpError::Dimension(format!(
                "expected {} matrix values, got {}",
                self.entry_map.len(),
                values.len()
            )));
        }
        self.a_nzval.iter_mut().for_each(|v| *v = 0.0);
        for (k, &v) in values.iter().enumerate() {
            self.a_nzval[self.entry_map[k]] += v;
        }
        self.factored = false;
        let n = self.n;
        let mut inertia = Inertia::default();
        if n == 0 {
            self.factored = true;
            return Ok(inertia);
        }
        let mut scale = 0.0f64;
        for c in 0..n {
            let last = self.a_colptr[c + 1] - 1;
            if self.a_rowval[last] == c {
                scale = scale.max(self.a_nzval[last].abs());
            }
        }
        let thresh = zero_tol * scale.max(f64::MIN_POSITIVE);

        let ap = &self.a_colptr;
        let ai = &self.a_rowval;
        let ax = &self.a_nzval;
        let lp = &self.l_colptr;
        let li = &mut self.l_rowval;
        let lx = &mut self.l_nzval;
        let d = &mut self.d;
        let dinv = &mut self.dinv;
        let etree = &self.etree;
        let y_vals = &mut self.y_vals;
        let y_used = &mut self.y_used;
        let y_idx = &mut self.y_idx;
        let elim = &mut self.elim;
        let next_space = &mut self.next_space;

        y_vals.iter_mut().for_each(|v| *v = 0.0);
        y_used.iter_mut().for_each(|v| *v = false);
        next_space.copy_from_slice(&lp[..n]);

        for k in 0..n {
            d[k] = 0.0;
            let mut nnz_y = 0usize;
            for idx in ap[k]..ap[k + 1] {
                let b = ai[idx];
                if b == k {
                    d[k] = ax[idx];
                    continue;
                }
                y_vals[b] = ax[idx];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut len = 1usize;
                    let mut next = etree[b];
                    while next != UNKNOWN && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[len] = next;
                        len += 1;
                        next = etree[next];
                    }
                    while len > 0 {
                        len -= 1;
                        y_idx[nnz_y] = elim[len];
                        nnz_y += 1;
                    }
                }
            }
            for t in (0..nnz_y).rev() {
                let c = y_idx[t];
                let pos = next_space[c];
                let yc = y_vals[c];
                for j in lp[c]..pos {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                let l = yc * dinv[c];
                lx[pos] = l;
                li[pos] = k;
                d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if !d[k].is_finite() {
                return Err(NlpError::Factorization("non-finite pivot".into()));
            }
            if d[k].abs() <= thresh {
                inertia.zero += 1;
                return Ok(inertia);
            }
            if d[k] > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            dinv[k] = 1.0 / d[k];
        }
        self.factored = true;
        Ok(inertia)
    }

    /// Solves `A x = b` in place using the last successful factorization.
    pub fn solve_in_place(&mut self, b: &mut [f64]) {
        assert!(self.factored, "solve called without a successful factorization");
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let x = &mut self.work;
        for k in 0..n {
            x[k] = b[self.perm[k]];
        }
        let (lp, li, lx) = (&self.l_colptr, &self.l_rowval, &self.l_nzval);
        for c in 0..n {
            let xc = x[c];
            if xc != 0.0 {
                for j in lp[c]..lp[c + 1] {
                    x[li[j]] -= lx[j] * xc;
                }
            }
        }
        for c in 0..n {
            x[c] *= self.dinv[c];
        }
        for c in (0..n).rev() {
            let mut s = 0.0;
            for j in lp[c]..lp[c + 1] {
                s += lx[j] * x[li[j]];
            }
            x[c] -= s;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }
}

/// Symmetric sparse matrix-vector product `y = A x` where `entries`/`values`
/// hold one triangle (diagonal once, each off-diagonal pair once).
pub fn sym_matvec(entries: &[(usize, usize)], values: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (&(i, j), &v) in entries.iter().zip(values) {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_from(n: usize, entries: &[(usize, usize)], values: &[f64]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for (&(i, j), &v) in entries.iter().zip(values) {
            a[i][j] += v;
            if i != j {
                a[j][i] += v;
            }
        }
        a
    }

    #[test]
    fn solves_quasidefinite_kkt() {
        // [[4, 1, 1], [1, 3, 0], [1, 0, -1]]
        let entries = vec![(0, 0), (1, 0), (1, 1), (2, 0), (2, 2)];
        let values = vec![4.0, 1.0, 3.0, 1.0, -1.0];
        let mut f = LdlFactor::analyse(3, &entries).unwrap();
        let inertia = f.factor(&values, 1e-14).unwrap();
        assert_eq!(inertia, Inertia { positive: 2, negative: 1, zero: 0 });
        let a = dense_from(3, &entries, &values);
        let x_true = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * x_true[j]).sum()).collect();
        f.solve_in_place(&mut b);
        for i in 0..3 {
            assert_relative_eq!(b[i], x_true[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicates_are_summed_and_zero_pivot_reported() {
        let entries = vec![(0, 0), (0, 0), (1, 1)];
        let mut f = LdlFactor::analyse(2, &entries).unwrap();
        let inertia = f.factor(&[1.0, 1.0, -3.0], 1e-14).unwrap();
        assert_eq!(inertia.positive, 1);
        assert_eq!(inertia.negative, 1);
        let mut b = vec![4.0, 3.0];
        f.solve_in_place(&mut b);
        assert_relative_eq!(b[0], 2.0);
        assert_relative_eq!(b[1], -1.0);

        let inertia = f.factor(&[0.5, -0.5, 2.0], 1e-14).unwrap();
        assert_eq!(inertia.zero, 1);
    }

    #[test]
    fn rejects_out_of_range_entries() {
        assert!(LdlFactor::analyse(2, &[(2, 0)]).is_err());
    }

    #[test]
    fn random_sparse_spd_solve() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let n = 60;
        let mut entries = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..i {
                if rng.gen::<f64>() < 0.08 {
                    entries.push((i, j));
                    values.push(rng.gen_range(-1.0..1.0));
                }
            }
        }
        for i in 0..n {
            entries.push((i, i));
            values.push(n as f64 * 0.2 + rng.gen::<f64>());
        }
        let mut f = LdlFactor::analyse(n, &entries).unwrap();
        let inertia = f.factor(&values, 1e-14).unwrap();
        assert_eq!(inertia.positive, n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        sym_matvec(&entries, &values, &x_true, &mut b);
        f.solve_in_place(&mut b);
        for i in 0..n {
            assert_relative_eq!(b[i], x_true[i], epsilon = 1e-10);
        }
    }
}
