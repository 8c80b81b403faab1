//! Minimal dense linear algebra for the voxelwise linear model.
//!
//! The only nontrivial piece is [`LstSq`]: a Householder QR factorization
//! with column pivoting, extended to a complete orthogonal decomposition
//! when the matrix is rank deficient. That gives the minimum-norm
//! least-squares solution and the pseudo-inverse of the normal matrix
//! without ever forming an explicit inverse of the design.

/// Dense column-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from equally long column vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Mat {
        assert!(!columns.is_empty(), "need at least one column");
        let rows = columns[0].len();
        assert!(
            columns.iter().all(|c| c.len() == rows),
            "columns differ in length"
        );
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            data.extend_from_slice(c);
        }
        Mat {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    /// Contiguous storage of column `c`.
    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.col(c)) {
                *o += a * xc;
            }
        }
        out
    }

    /// `self^T * x`
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        (0..self.cols)
            .map(|c| self.col(c).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Rank-revealing least-squares factorization of an n x p matrix.
#[derive(Debug, Clone)]
pub struct LstSq {
    rows: usize,
    cols: usize,
    /// R in the upper triangle, Householder vectors below (v0 implicit 1).
    qr: Mat,
    tau: Vec<f64>,
    /// Column permutation: factored column j is original column `piv[j]`.
    piv: Vec<usize>,
    rank: usize,
    /// B = Z[:, :rank] T^{-1}; the permuted solution is B (Q^T y)[:rank].
    solve_map: Mat,
}

impl LstSq {
    /// Factor `a`. Diagonal entries of R below `rel_tol * |R[0,0]|` mark
    /// the numerical rank (default `rel_tol` = max(n, p) * machine eps).
    pub fn new(a: &Mat, rel_tol: Option<f64>) -> LstSq {
        let (n, p) = (a.rows(), a.cols());
        assert!(n > 0 && p > 0);
        let kmax = n.min(p);
        let mut qr = a.clone();
        let mut tau = vec![0.0; kmax];
        let mut piv: Vec<usize> = (0..p).collect();

        for k in 0..kmax {
            // pivot on the column with the largest remaining norm
            let mut best = k;
            let mut best_norm2 = -1.0;
            for j in k..p {
                let norm2: f64 = (k..n).map(|i| qr.get(i, j).powi(2)).sum();
                if norm2 > best_norm2 {
                    best_norm2 = norm2;
                    best = j;
                }
            }
            if best != k {
                piv.swap(k, best);
                for i in 0..n {
                    let a = qr.get(i, k);
                    let b = qr.get(i, best);
                    qr.set(i, k, b);
                    qr.set(i, best, a);
                }
            }

            let norm = best_norm2.max(0.0).sqrt();
            if norm == 0.0 {
                tau[k] = 0.0;
                continue;
            }
            let x0 = qr.get(k, k);
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let v0 = x0 - alpha; // no cancellation: signs opposite
            tau[k] = (alpha - x0) / alpha;
            qr.set(k, k, alpha);
            for i in k + 1..n {
                let v = qr.get(i, k) / v0;
                qr.set(i, k, v);
            }
            for j in k + 1..p {
                let mut dot = qr.get(k, j);
                for i in k + 1..n {
                    dot += qr.get(i, k) * qr.get(i, j);
                }
                let w = tau[k] * dot;
                let d = qr.get(k, j);
                qr.set(k, j, d - w);
                for i in k + 1..n {
                    let d = qr.get(i, j) - w * qr.get(i, k);
                    qr.set(i, j, d);
                }
            }
        }

        let r00 = qr.get(0, 0).abs();
        let tol = r00 * rel_tol.unwrap_or(n.max(p) as f64 * f64::EPSILON);
        let mut rank = 0;
        while rank < kmax && qr.get(rank, rank).abs() > tol {
            rank += 1;
        }

        let solve_map = Self::build_solve_map(&qr, rank, p);
        LstSq {
            rows: n,
            cols: p,
            qr,
            tau,
            piv,
            rank,
            solve_map,
        }
    }

    // Annihilate R12 with right-side reflectors: [T 0] = R Z with T upper
    // triangular r x r, then B = Z[:, :r] T^{-1}.
    fn build_solve_map(qr: &Mat, rank: usize, p: usize) -> Mat {
        let r = rank;
        if r == 0 {
            return Mat::zeros(p, 0);
        }
        // upper trapezoid, rows 0..r
        let mut rt = Mat::zeros(r, p);
        for i in 0..r {
            for j in i..p {
                rt.set(i, j, qr.get(i, j));
            }
        }
        let mut z = Mat::identity(p);
        if r < p {
            for i in (0..r).rev() {
                // reflector over columns {i} + {r..p} sending row i to (g, 0..0)
                let cols: Vec<usize> = std::iter::once(i).chain(r..p).collect();
                let w: Vec<f64> = cols.iter().map(|&c| rt.get(i, c)).collect();
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                let alpha = if w[0] >= 0.0 { -norm } else { norm };
                let v0 = w[0] - alpha;
                let tau = (alpha - w[0]) / alpha;
                let mut v = vec![1.0];
                v.extend(w[1..].iter().map(|&x| x / v0));

                let apply_row = |row: &mut dyn FnMut(usize) -> f64,
                                 write: &mut dyn FnMut(usize, f64)| {
                    let dot: f64 = cols.iter().zip(&v).map(|(&c, &vc)| row(c) * vc).sum();
                    let scale = tau * dot;
                    for (&c, &vc) in cols.iter().zip(&v) {
                        let val = row(c) - scale * vc;
                        write(c, val);
                    }
                };
                for m in 0..r {
                    let snapshot: Vec<f64> = (0..p).map(|c| rt.get(m, c)).collect();
                    apply_row(&mut |c| snapshot[c], &mut |c, val| rt.set(m, c, val));
                }
                for m in 0..p {
                    let snapshot: Vec<f64> = (0..p).map(|c| z.get(m, c)).collect();
                    apply_row(&mut |c| snapshot[c], &mut |c, val| z.set(m, c, val));
                }
            }
        }

        // invert the triangular T by back substitution, column by column
        let mut t_inv = Mat::zeros(r, r);
        for j in 0..r {
            let mut x = vec![0.0; r];
            x[j] = 1.0;
            for i in (0..=j).rev() {
                let mut s = x[i];
                for k in i + 1..r {
                    s -= rt.get(i, k) * x[k];
                }
                x[i] = s / rt.get(i, i);
            }
            for i in 0..r {
                t_inv.set(i, j, x[i]);
            }
        }

        let mut b = Mat::zeros(p, r);
        for j in 0..r {
            for i in 0..p {
                let mut s = 0.0;
                for k in 0..r {
                    s += z.get(i, k) * t_inv.get(k, j);
                }
                b.set(i, j, s);
            }
        }
        b
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Overwrite `y` with Q^T y.
    pub fn apply_qt(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        for k in 0..self.tau.len() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let mut dot = y[k];
            for i in k + 1..self.rows {
                dot += self.qr.get(i, k) * y[i];
            }
            let w = self.tau[k] * dot;
            y[k] -= w;
            for i in k + 1..self.rows {
                y[i] -= w * self.qr.get(i, k);
            }
        }
    }

    /// Minimum-norm least-squares solution for a single right-hand side.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qt_y = y.to_vec();
        self.apply_qt(&mut qt_y);
        let gamma = self.solve_map_apply(&qt_y[..self.rank]);
        let mut beta = vec![0.0; self.cols];
        for (j, &pj) in self.piv.iter().enumerate() {
            beta[pj] = gamma[j];
        }
        beta
    }

    fn solve_map_apply(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (j, &cj) in c.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.solve_map.col(j)) {
                *o += b * cj;
            }
        }
        out
    }

    /// Pseudo-inverse of the normal matrix, (A^T A)^+, a p x p matrix.
    pub fn normal_matrix_pinv(&self) -> Mat {
        let p = self.cols;
        let mut m = Mat::zeros(p, p);
        // (A^T A)^+ = P B B^T P^T
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for k in 0..self.rank {
                    s += self.solve_map.get(i, k) * self.solve_map.get(j, k);
                }
                m.set(self.piv[i], self.piv[j], s);
            }
        }
        m
    }
}
