//! Spin-wave mode vectors, overlaps, register layouts and gradient arithmetic.
//!
//! A mode with wavenumber `k` has coefficient vector
//! `c_q = (g_q / ḡ) e^{i k z_q} / √N` and lowering operator
//! `b(k) = Σ_q conj(c_q) σ⁻_q`. In the polarized limit
//! `[b(k_i), b†(k_j)] = M(k_j − k_i)` with
//! `M(Δk) = Σ_q |g_q|² e^{iΔk z_q} / (N ḡ²)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::physics::{EnsembleGeometry, PhysicalConstants};
use crate::C64;

/// Wavenumber of winding number `w` on a sample of length `length`.
pub fn winding_to_k(w: f64, length: f64) -> f64 {
    2.0 * PI * w / length
}

pub fn k_to_winding(k: f64, length: f64) -> f64 {
    k * length / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    pub k: f64,
    pub coefficients: Vec<C64>,
}

impl ModeVector {
    pub fn new(geom: &EnsembleGeometry, k: f64) -> Self {
        let scale = 1.0 / (geom.g_bar() * (geom.n_spins() as f64).sqrt());
        let coefficients = geom
            .positions()
            .iter()
            .zip(geom.couplings())
            .map(|(&z, &g)| g * scale * C64::from_polar(1.0, k * z))
            .collect();
        Self { k, coefficients }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `Σ conj(self_q) other_q`.
    pub fn inner(&self, other: &ModeVector) -> C64 {
        self.coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Exact discrete overlap `M(Δk)`. `M(0) = 1` by construction of `ḡ`.
pub fn mode_overlap(geom: &EnsembleGeometry, delta_k: f64) -> C64 {
    if delta_k == 0.0 {
        return C64::new(1.0, 0.0);
    }
    geom.positions()
        .iter()
        .zip(geom.overlap_weights())
        .map(|(&z, w)| C64::from_polar(w, delta_k * z))
        .sum()
}

/// `M(Δk)` with the phase `e^{iΔk L/2}` of a sample centred at `L/2` removed.
///
/// For a profile symmetric about the sample centre this is real and equals
/// [`continuum_overlap`] in the large-N limit.
pub fn centered_overlap(geom: &EnsembleGeometry, delta_k: f64) -> C64 {
    mode_overlap(geom, delta_k) * C64::from_polar(1.0, -delta_k * geom.length() / 2.0)
}

/// Centred overlaps at many winding-number differences, in parallel.
pub fn centered_overlap_table(geom: &EnsembleGeometry, delta_w: &[f64]) -> Vec<C64> {
    delta_w
        .par_iter()
        .map(|&dw| centered_overlap(geom, winding_to_k(dw, geom.length())))
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Large-N overlap for a `sin²(2πz/L)` intensity profile:
/// `sinc(πΔw) / (1 − (Δw/2)²)`.
///
/// Evaluated as `sinc(πΔw) − [sinc(π(Δw−2)) + sinc(π(Δw+2))]/2`, which is the
/// same function without the removable singularities at `Δw = ±2`.
pub fn continuum_overlap(delta_w: f64) -> f64 {
    sinc(PI * delta_w) - 0.5 * (sinc(PI * (delta_w - 2.0)) + sinc(PI * (delta_w + 2.0)))
}

/// `G[i][j] = M(k_j − k_i)`.
pub fn gram_matrix(geom: &EnsembleGeometry, wavenumbers: &[f64]) -> DMatrix<C64> {
    let n = wavenumbers.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let upper: Vec<C64> = pairs
        .par_iter()
        .map(|&(i, j)| mode_overlap(geom, wavenumbers[j] - wavenumbers[i]))
        .collect();
    let mut g = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for i in 0..n {
        g[(i, i)] = C64::new(1.0, 0.0);
    }
    for (&(i, j), &m) in pairs.iter().zip(&upper) {
        g[(i, j)] = m;
        g[(j, i)] = m.conj();
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `w = 0, 3, 6, 9, …`
    Stride3,
    /// `w = 0, 3, 4, 7, 8, 11, 12, …`
    Dense,
}

pub fn register_windings(count: usize, scheme: Scheme) -> Vec<i64> {
    match scheme {
        Scheme::Stride3 => (0..count as i64).map(|n| 3 * n).collect(),
        Scheme::Dense => (0..count as i64)
            .map(|n| if n == 0 { 0 } else { 4 * ((n + 1) / 2) - (n % 2) })
            .collect(),
    }
}

/// A set of register modes and their pairwise overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterLayout {
    windings: Vec<i64>,
    gram: DMatrix<C64>,
    crosstalk_budget: f64,
}

impl RegisterLayout {
    pub fn new(windings: Vec<i64>, gram: DMatrix<C64>, crosstalk_budget: f64) -> Result<Self> {
        let n = windings.len();
        if n == 0 {
            return Err(invalid("windings", "register needs at least one mode"));
        }
        if gram.nrows() != n || gram.ncols() != n {
            return Err(invalid("gram", "shape does not match mode count"));
        }
        for i in 0..n {
            if (gram[(i, i)] - C64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(invalid("gram", "diagonal must be 1"));
            }
            for j in 0..i {
                if (gram[(i, j)] - gram[(j, i)].conj()).norm() > 1e-12 {
                    return Err(invalid("gram", "matrix is not Hermitian"));
                }
            }
            for j in (i + 1)..n {
                if windings[i] == windings[j] {
                    return Err(invalid("windings", format!("winding {} repeated", windings[i])));
                }
            }
        }
        let layout = Self {
            windings,
            gram,
            crosstalk_budget,
        };
        let found = layout.max_offdiagonal();
        if found > crosstalk_budget {
            return Err(Error::CrosstalkBudget {
                found,
                budget: crosstalk_budget,
            });
        }
        Ok(layout)
    }

    /// Layout with the Gram matrix of the actual discrete ensemble.
    ///
    /// Winding numbers whose magnitude, or pairwise difference, reaches `N/2`
    /// alias onto other modes of a gridded ensemble and are rejected.
    pub fn discrete(
        geom: &EnsembleGeometry,
        windings: Vec<i64>,
        crosstalk_budget: f64,
    ) -> Result<Self> {
        let half = geom.n_spins() as f64 / 2.0;
        for (i, &w) in windings.iter().enumerate() {
            if w.unsigned_abs() as f64 >= half {
                return Err(Error::Aliasing {
                    winding: w,
                    n_spins: geom.n_spins(),
                });
            }
            for &v in &windings[..i] {
                if (w - v).unsigned_abs() as f64 >= half {
                    return Err(Error::Aliasing {
                        winding: w - v,
                        n_spins: geom.n_spins(),
                    });
                }
            }
        }
        let ks: Vec<f64> = windings
            .iter()
            .map(|&w| winding_to_k(w as f64, geom.length()))
            .collect();
        let gram = gram_matrix(geom, &ks);
        Self::new(windings, gram, crosstalk_budget)
    }

    pub fn windings(&self) -> &[i64] {
        &self.windings
    }
    pub fn gram(&self) -> &DMatrix<C64> {
        &self.gram
    }
    pub fn crosstalk_budget(&self) -> f64 {
        self.crosstalk_budget
    }
    pub fn len(&self) -> usize {
        self.windings.len()
    }
    pub fn is_empty(&self) -> bool {
        self.windings.is_empty()
    }

    pub fn wavenumbers(&self, length: f64) -> Vec<f64> {
        self.windings
            .iter()
            .map(|&w| winding_to_k(w as f64, length))
            .collect()
    }

    pub fn max_offdiagonal(&self) -> f64 {
        let n = self.len();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.gram[(i, j)].norm());
                }
            }
        }
        m
    }

    pub fn index_of(&self, winding: i64) -> Option<usize> {
        self.windings.iter().position(|&w| w == winding)
    }
}

/// Register modes with the continuum Gram matrix.
pub fn select_register_modes(count: usize, scheme: Scheme) -> Result<RegisterLayout> {
    if count == 0 {
        return Err(invalid("count", "register needs at least one mode"));
    }
    let windings = register_windings(count, scheme);
    let n = windings.len();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        C64::new(continuum_overlap((windings[j] - windings[i]) as f64), 0.0)
    });
    RegisterLayout::new(windings, gram, 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientPulse {
    /// Field difference across the sample (T).
    pub field_difference: f64,
    /// `field_difference / L` (T/m).
    pub gradient: f64,
    pub duration: f64,
}

/// Field difference for a `(k)`-pulse of duration `tau`: `ΔB = −k L ħ / (m0 τ)`.
///
/// Under this sign a `(k)`-pulse adds `+k` to every stored wavenumber.
pub fn gradient_pulse_params(
    constants: &PhysicalConstants,
    length: f64,
    target_k: f64,
    tau: f64,
) -> Result<GradientPulse> {
    if !(tau > 0.0) {
        return Err(invalid("tau", "gradient pulse needs a positive duration"));
    }
    if !(length > 0.0) {
        return Err(invalid("length", "must be positive"));
    }
    let field_difference = -target_k * length * constants.hbar() / (constants.m0() * tau);
    Ok(GradientPulse {
        field_difference,
        gradient: field_difference / length,
        duration: tau,
    })
}

/// Detuning of a spin at `z` during a gradient pulse with field difference
/// `field_difference` across the sample: `m0 (ΔB/L) z / ħ`.
pub fn gradient_detuning(
    constants: &PhysicalConstants,
    field_difference: f64,
    length: f64,
    z: f64,
) -> f64 {
    constants.m0() * field_difference / length * z / constants.hbar()
}
