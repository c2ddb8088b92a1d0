use nalgebra::{DMatrix, DVector};

use crate::C64;

/// Time-independent generator: complex diagonal (which may carry damping) plus
/// Hermitian off-diagonal pairs stored once, `H[r][c] = v`, `H[c][r] = v*`.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub diag: Vec<C64>,
    pub off: Vec<(usize, usize, C64)>,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        for ((yi, d), xi) in y.iter_mut().zip(&self.diag).zip(x) {
            *yi = d * xi;
        }
        for &(r, c, v) in &self.off {
            y[r] += v * x[c];
            y[c] += v.conj() * x[r];
        }
    }

    pub fn expectation(&self, x: &[C64]) -> C64 {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum()
    }

    /// Row-sum bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let mut rows: Vec<f64> = self.diag.iter().map(|d| d.norm()).collect();
        for &(r, c, v) in &self.off {
            rows[r] += v.norm();
            rows[c] += v.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for (i, d) in self.diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        for &(r, c, v) in &self.off {
            m[(r, c)] += v;
            m[(c, r)] += v.conj();
        }
        m
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PropagationStats {
    pub dense_exponentials: u64,
    pub taylor_steps: u64,
    pub matvecs: u64,
}

/// Largest `h ‖H‖` per Taylor step.
const STEP_NORM: f64 = 0.5;
const MAX_ORDER: usize = 40;

/// `ψ ← exp(−i H t) ψ`.
pub fn propagate(
    h: &SparseHamiltonian,
    psi: &mut [C64],
    t: f64,
    dense_limit: usize,
    stats: &mut PropagationStats,
) {
    if t == 0.0 {
        return;
    }
    if h.dim() <= dense_limit {
        let u = (h.to_dense() * C64::new(0.0, -t)).exp();
        let v = &u * DVector::from_column_slice(psi);
        psi.copy_from_slice(v.as_slice());
        stats.dense_exponentials += 1;
        return;
    }
    let bound = h.norm_bound();
    let steps = ((bound * t / STEP_NORM).ceil() as u64).max(1);
    let dt = t / steps as f64;
    let n = psi.len();
    let mut term = vec![C64::new(0.0, 0.0); n];
    let mut next = vec![C64::new(0.0, 0.0); n];
    for _ in 0..steps {
        term.copy_from_slice(psi);
        let scale = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for k in 1..=MAX_ORDER {
            h.apply(&term, &mut next);
            stats.matvecs += 1;
            let f = C64::new(0.0, -dt / k as f64);
            let mut size = 0.0;
            for (tk, nk) in term.iter_mut().zip(&next) {
                *tk = f * nk;
                size += tk.norm_sqr();
            }
            for (p, tk) in psi.iter_mut().zip(&term) {
                *p += tk;
            }
            if size.sqrt() <= 1e-17 * scale {
                break;
            }
        }
        stats.taylor_steps += 1;
    }
}
