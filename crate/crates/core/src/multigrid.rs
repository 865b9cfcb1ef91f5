//! Cell-centered geometric multigrid V-cycle used as a symmetric
//! preconditioner for conjugate gradients.
//!
//! Coarse cells are active when any child is; coarse operators are
//! rediscretized with doubled spacing and child-averaged reaction.
//! Prolongation is piecewise constant and restriction its scaled
//! transpose. Smoothing is red-black Gauss–Seidel, mirrored between the
//! descending and ascending legs so the cycle is symmetric.

use crate::stencil::{ObstacleBc, Stencil};

const COARSEST_SWEEPS: usize = 40;

struct Level {
    st: Stencil,
    diag: Vec<f64>,
    diag_inv: Vec<f64>,
    off: Vec<f64>,
    x: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
}

impl Level {
    fn new(n: [usize; 3], h: f64, act: &[bool], reaction: &[f64], bc: ObstacleBc) -> Self {
        let st = Stencil::from_active(n, h, act, bc);
        let rp = st.pad(reaction);
        let ih2 = 1.0 / (h * h);
        let diag: Vec<f64> = (0..st.len).map(|p| st.active[p] * (rp[p] + st.arms[p] * ih2)).collect();
        let diag_inv = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
        let off = st.active.iter().map(|a| a * ih2).collect();
        let len = st.len;
        Self { st, diag, diag_inv, off, x: vec![0.0; len], b: vec![0.0; len], r: vec![0.0; len] }
    }

    fn smooth(&mut self, order: [usize; 2]) {
        for c in order {
            self.st.gs_color(&self.diag_inv, &self.off, &self.b, &mut self.x, c);
        }
    }

    fn residual(&mut self) {
        self.st.apply_split(&self.diag, &self.off, &self.x, &mut self.r);
        for p in 0..self.st.len {
            self.r[p] = self.b[p] - self.r[p];
        }
    }
}

pub(crate) struct Multigrid {
    levels: Vec<Level>,
    pre: usize,
}

impl Multigrid {
    /// `act` and `reaction` are unpadded fine-grid arrays.
    pub fn new(n: [usize; 3], h: f64, act: &[bool], reaction: &[f64], bc: ObstacleBc) -> Self {
        let mut levels = vec![Level::new(n, h, act, reaction, bc)];
        let (mut n, mut h) = (n, h);
        let mut act = act.to_vec();
        let mut reaction = reaction.to_vec();
        while n.iter().all(|&d| d >= 8) {
            let nc = [n[0].div_ceil(2), n[1].div_ceil(2), n[2].div_ceil(2)];
            let mut cact = vec![false; nc[0] * nc[1] * nc[2]];
            let mut csum = vec![0.0; cact.len()];
            let mut ccount = vec![0u32; cact.len()];
            for k in 0..n[2] {
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        let f = i + n[0] * (j + n[1] * k);
                        if act[f] {
                            let c = i / 2 + nc[0] * (j / 2 + nc[1] * (k / 2));
                            cact[c] = true;
                            csum[c] += reaction[f];
                            ccount[c] += 1;
                        }
                    }
                }
            }
            let creact = csum.iter().zip(&ccount).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect::<Vec<_>>();
            n = nc;
            h *= 2.0;
            act = cact;
            reaction = creact;
            levels.push(Level::new(n, h, &act, &reaction, bc));
        }
        Self { levels, pre: 1 }
    }

    /// z ≈ A⁻¹ r on padded fine-grid vectors.
    pub fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        self.levels[0].b.copy_from_slice(r);
        self.cycle(0);
        z.copy_from_slice(&self.levels[0].x);
    }

    fn cycle(&mut self, l: usize) {
        let last = l + 1 == self.levels.len();
        let pre = self.pre;
        {
            let lv = &mut self.levels[l];
            lv.x.iter_mut().for_each(|v| *v = 0.0);
            if last {
                for _ in 0..COARSEST_SWEEPS {
                    lv.smooth([0, 1]);
                }
                for _ in 0..COARSEST_SWEEPS {
                    lv.smooth([1, 0]);
                }
                return;
            }
            for _ in 0..pre {
                lv.smooth([0, 1]);
            }
            lv.residual();
        }
        let (fine, coarse) = self.levels.split_at_mut(l + 1);
        let f = &fine[l];
        let c = &mut coarse[0];
        restrict(&f.st, &f.r, &c.st, &mut c.b);
        self.cycle(l + 1);
        let (fine, coarse) = self.levels.split_at_mut(l + 1);
        let f = &mut fine[l];
        prolong_add(&coarse[0].st, &coarse[0].x, &f.st, &mut f.x);
        for _ in 0..pre {
            f.smooth([1, 0]);
        }
    }
}

fn restrict(fs: &Stencil, r: &[f64], cs: &Stencil, b: &mut [f64]) {
    b.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..fs.n[2] {
        for j in 0..fs.n[1] {
            let fb = fs.pidx(0, j, k);
            let cb = cs.pidx(0, j / 2, k / 2);
            for i in 0..fs.n[0] {
                b[cb + i / 2] += 0.125 * r[fb + i];
            }
        }
    }
    for p in 0..cs.len {
        b[p] *= cs.active[p];
    }
}

fn prolong_add(cs: &Stencil, xc: &[f64], fs: &Stencil, x: &mut [f64]) {
    for k in 0..fs.n[2] {
        for j in 0..fs.n[1] {
            let fb = fs.pidx(0, j, k);
            let cb = cs.pidx(0, j / 2, k / 2);
            for i in 0..fs.n[0] {
                x[fb + i] += fs.active[fb + i] * xc[cb + i / 2];
            }
        }
    }
}
