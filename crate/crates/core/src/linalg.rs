//! Banded LU without pivoting.

/// Square matrix with `bw` sub- and super-diagonals, stored row by row.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.bw >= r && c <= r + self.bw);
        r * (2 * self.bw + 1) + (c + self.bw - r)
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.at(r, c);
        self.data[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.at(r, c)]
    }

    /// Replaces row `r` by the identity row.
    pub fn set_identity_row(&mut self, r: usize) {
        let lo = r.saturating_sub(self.bw);
        let hi = (r + self.bw).min(self.n - 1);
        for c in lo..=hi {
            let i = self.at(r, c);
            self.data[i] = if c == r { 1.0 } else { 0.0 };
        }
    }

    /// Drops the off-diagonal entries of row `r`.
    pub fn diagonal_row(&mut self, r: usize) {
        let lo = r.saturating_sub(self.bw);
        let hi = (r + self.bw).min(self.n - 1);
        for c in (lo..=hi).filter(|&c| c != r) {
            let i = self.at(r, c);
            self.data[i] = 0.0;
        }
    }

    /// Solves `A x = b` in place, destroying `A`. Returns `false` on a
    /// zero or non-finite pivot.
    pub fn solve_in_place(&mut self, b: &mut [f64]) -> bool {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let piv = self.data[k * w + bw];
            if piv == 0.0 || !piv.is_finite() {
                return false;
            }
            let end = (k + bw + 1).min(n);
            for i in k + 1..end {
                let ik = i * w + (k + bw - i);
                let f = self.data[ik] / piv;
                if f == 0.0 {
                    continue;
                }
                self.data[ik] = 0.0;
                let (head, tail) = self.data.split_at_mut(i * w);
                let row_k = &head[k * w..k * w + w];
                let row_i = &mut tail[..w];
                // Column c maps to offset c + bw − row.
                for c in k + 1..end {
                    row_i[c + bw - i] -= f * row_k[c + bw - k];
                }
                b[i] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let end = (k + bw + 1).min(n);
            let mut s = b[k];
            for c in k + 1..end {
                s -= self.data[k * w + (c + bw - k)] * b[c];
            }
            b[k] = s / self.data[k * w + bw];
        }
        b.iter().all(|v| v.is_finite())
    }
}
