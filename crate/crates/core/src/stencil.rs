//! Padded 7-point Laplacian data shared by the time stepper, the elliptic
//! solver and the multigrid hierarchy.
//!
//! Arrays carry one ghost layer on every side. Ghosts hold 0, which realizes
//! a homogeneous Dirichlet condition on the box face. Solid cells are
//! inactive and hold 0; a Neumann obstacle drops the arm into a solid
//! neighbour from the diagonal, a Dirichlet obstacle keeps it.

use crate::grid::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObstacleBc {
    Neumann,
    Dirichlet,
}

#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub n: [usize; 3],
    pub sy: usize,
    pub sz: usize,
    pub len: usize,
    pub h: f64,
    /// 1 on fluid cells, 0 on solids and ghosts.
    pub active: Vec<f64>,
    /// Number of arms kept in the diagonal.
    pub arms: Vec<f64>,
}

impl Stencil {
    pub fn new(mask: &Mask, include_d: bool, bc: ObstacleBc) -> Self {
        let g = &mask.grid;
        let act: Vec<bool> = (0..g.len()).map(|i| !mask.is_solid(i, include_d)).collect();
        Self::from_active(g.dims, g.h, &act, bc)
    }

    /// `act` is unpadded, x fastest.
    pub fn from_active(n: [usize; 3], h: f64, act: &[bool], bc: ObstacleBc) -> Self {
        let sy = n[0] + 2;
        let sz = sy * (n[1] + 2);
        let len = sz * (n[2] + 2);
        let mut active = vec![0.0; len];
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    if act[i + n[0] * (j + n[1] * k)] {
                        active[(i + 1) + sy * (j + 1) + sz * (k + 1)] = 1.0;
                    }
                }
            }
        }
        let mut arms = vec![0.0; len];
        for k in 1..=n[2] {
            for j in 1..=n[1] {
                for i in 1..=n[0] {
                    let p = i + sy * j + sz * k;
                    if active[p] == 0.0 {
                        continue;
                    }
                    arms[p] = match bc {
                        ObstacleBc::Dirichlet => 6.0,
                        ObstacleBc::Neumann => {
                            let mut a = 0.0;
                            for (q, inside) in [
                                (p - 1, i > 1),
                                (p + 1, i < n[0]),
                                (p - sy, j > 1),
                                (p + sy, j < n[1]),
                                (p - sz, k > 1),
                                (p + sz, k < n[2]),
                            ] {
                                // Box ghosts keep their arm (Dirichlet face).
                                if !inside || active[q] != 0.0 {
                                    a += 1.0;
                                }
                            }
                            a
                        }
                    };
                }
            }
        }
        Self { n, sy, sz, len, h, active, arms }
    }

    #[inline]
    pub fn pidx(&self, i: usize, j: usize, k: usize) -> usize {
        (i + 1) + self.sy * (j + 1) + self.sz * (k + 1)
    }

    pub fn pad(&self, src: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        let n = self.n;
        for k in 0..n[2] {
            for j in 0..n[1] {
                let s = n[0] * (j + n[1] * k);
                let d = self.pidx(0, j, k);
                out[d..d + n[0]].copy_from_slice(&src[s..s + n[0]]);
            }
        }
        out
    }

    pub fn unpad(&self, src: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n[0] * n[1] * n[2]];
        for k in 0..n[2] {
            for j in 0..n[1] {
                let d = n[0] * (j + n[1] * k);
                let s = self.pidx(0, j, k);
                out[d..d + n[0]].copy_from_slice(&src[s..s + n[0]]);
            }
        }
        out
    }

    /// Calls `f(base)` with the padded index of the first cell of every row.
    #[inline]
    pub fn for_rows(&self, mut f: impl FnMut(usize)) {
        for k in 1..=self.n[2] {
            for j in 1..=self.n[1] {
                f(1 + self.sy * j + self.sz * k);
            }
        }
    }

    /// y = diag·x − off·(sum of the six neighbours), row by row.
    pub fn apply_split(&self, diag: &[f64], off: &[f64], x: &[f64], y: &mut [f64]) {
        let (nx, sy, sz) = (self.n[0], self.sy, self.sz);
        self.for_rows(|b| {
            let xc = &x[b..b + nx];
            let xw = &x[b - 1..b - 1 + nx];
            let xe = &x[b + 1..b + 1 + nx];
            let xs = &x[b - sy..b - sy + nx];
            let xn = &x[b + sy..b + sy + nx];
            let xd = &x[b - sz..b - sz + nx];
            let xu = &x[b + sz..b + sz + nx];
            let dg = &diag[b..b + nx];
            let of = &off[b..b + nx];
            let yr = &mut y[b..b + nx];
            for i in 0..nx {
                let nb = xw[i] + xe[i] + xs[i] + xn[i] + xd[i] + xu[i];
                yr[i] = dg[i] * xc[i] - of[i] * nb;
            }
        });
    }

    /// One Gauss–Seidel half sweep over cells with (i+j+k) of the given parity.
    pub fn gs_color(&self, diag_inv: &[f64], off: &[f64], b: &[f64], x: &mut [f64], color: usize) {
        let (nx, sy, sz) = (self.n[0], self.sy, self.sz);
        for k in 1..=self.n[2] {
            for j in 1..=self.n[1] {
                let base = 1 + sy * j + sz * k;
                let start = (color + j + k) % 2;
                let mut i = start;
                while i < nx {
                    let p = base + i;
                    let nb = x[p - 1] + x[p + 1] + x[p - sy] + x[p + sy] + x[p - sz] + x[p + sz];
                    x[p] = (b[p] + off[p] * nb) * diag_inv[p];
                    i += 2;
                }
            }
        }
    }
}

/// Fixed-order dot product.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four interleaved partial sums: deterministic and vectorizable.
    let mut s = [0.0f64; 4];
    let n4 = a.len() / 4 * 4;
    for (ca, cb) in a[..n4].chunks_exact(4).zip(b[..n4].chunks_exact(4)) {
        for l in 0..4 {
            s[l] += ca[l] * cb[l];
        }
    }
    let mut t = (s[0] + s[1]) + (s[2] + s[3]);
    for i in n4..a.len() {
        t += a[i] * b[i];
    }
    t
}
