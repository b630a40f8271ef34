//! Dense GF(2) linear algebra: matrices as rows of [`BitVec`], Gaussian
//! elimination, kernels and span membership. Sizes here are tiny (tens of
//! rows), so clarity wins over blocked elimination tricks.

use crate::bits::BitVec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVec>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            rows,
            cols,
            data: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn from_rows(rows: Vec<BitVec>) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        BitMatrix { rows: rows.len(), cols, data: rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.data[i]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut BitVec {
        &mut self.data[i]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r].set(c, v);
    }

    /// `A · x` with `x` of length `cols`; component `r` is `parity(row_r & x)`.
    pub fn mul_vec(&self, x: &BitVec) -> BitVec {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        BitVec::from_fn(self.rows, |r| self.data[r].and_parity(x))
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in self.data[r].iter_ones() {
                t.set(c, r, true);
            }
        }
        t
    }

    pub fn rank(&self) -> usize {
        let mut space = RowSpace::new(self.cols);
        for r in &self.data {
            space.insert(r.clone());
        }
        space.rank()
    }

    /// Basis of the right kernel `{x : A·x = 0}`.
    ///
    /// Works on the transpose with an identity tag: a zero row in the reduced
    /// transpose means the tag records a vanishing column combination.
    pub fn kernel_basis(&self) -> Vec<BitVec> {
        let t = self.transpose();
        let mut pivots: Vec<(usize, BitVec, BitVec)> = Vec::new(); // (pivot, row, tag)
        let mut basis = Vec::new();
        for i in 0..t.rows {
            let mut row = t.data[i].clone();
            let mut tag = BitVec::from_fn(self.cols, |k| k == i);
            for (p, prow, ptag) in &pivots {
                if row.get(*p) {
                    row.xor_assign(prow);
                    tag.xor_assign(ptag);
                }
            }
            let pivot = row.iter_ones().next();
            match pivot {
                Some(p) => pivots.push((p, row, tag)),
                None => basis.push(tag),
            }
        }
        basis
    }

    /// Basis of the left kernel `{y : yᵀ·A = 0}`.
    pub fn left_kernel_basis(&self) -> Vec<BitVec> {
        self.transpose().kernel_basis()
    }

    /// Is `v` (length `rows`) in the span of this matrix's columns?
    pub fn colspace_contains(&self, v: &BitVec) -> bool {
        assert_eq!(v.len(), self.rows, "colspace_contains dimension mismatch");
        let t = self.transpose();
        let mut space = RowSpace::new(self.rows);
        for r in t.data {
            space.insert(r);
        }
        space.contains(v)
    }
}

/// A row space kept in reduced row-echelon form, for incremental rank,
/// membership and canonical-residual queries.
#[derive(Clone, Debug)]
pub struct RowSpace {
    cols: usize,
    rows: Vec<(usize, BitVec)>, // (pivot column, row); sorted by pivot
}

impl RowSpace {
    pub fn new(cols: usize) -> Self {
        RowSpace { cols, rows: Vec::new() }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Residual of `v` after reduction against the current basis.
    pub fn reduce(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.cols);
        let mut v = v.clone();
        for (p, row) in &self.rows {
            if v.get(*p) {
                v.xor_assign(row);
            }
        }
        v
    }

    pub fn contains(&self, v: &BitVec) -> bool {
        self.reduce(v).count_ones() == 0
    }

    /// Insert `v`; returns true if it enlarged the space.
    pub fn insert(&mut self, v: BitVec) -> bool {
        let v = self.reduce(&v);
        let pivot = match v.iter_ones().next() {
            Some(p) => p,
            None => return false,
        };
        // keep reduced form: clear the new pivot column in existing rows
        for (_, row) in self.rows.iter_mut() {
            if row.get(pivot) {
                row.xor_assign(&v);
            }
        }
        let at = self.rows.partition_point(|(p, _)| *p < pivot);
        self.rows.insert(at, (pivot, v));
        true
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Canonical basis rows (RREF, ascending pivots).
    pub fn basis(&self) -> impl Iterator<Item = &BitVec> {
        self.rows.iter().map(|(_, r)| r)
    }
}
