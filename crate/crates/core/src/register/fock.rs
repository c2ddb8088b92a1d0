use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{Amplitudes, Config};
use crate::C64;

/// Applies the passive linear map `b_k† → Σ_j U_jk b_j†` to the oscillators in
/// slots `first..first + U.ncols()`. Components that would exceed `trunc`
/// levels are dropped; the returned float is their total probability.
pub fn passive_transform(
    amps: &Amplitudes,
    first: usize,
    u: &DMatrix<C64>,
    trunc: u8,
) -> (Amplitudes, f64) {
    let n = u.ncols();
    let mut out = Amplitudes::new();
    for (config, amp) in amps {
        let occ = &config[first..first + n];
        // Polynomial in creation operators; the coefficient of a monomial
        // is turned into an amplitude at the end.
        let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
        let norm: f64 = occ.iter().map(|&m| factorial(m)).product();
        poly.insert(vec![0; n], amp / norm.sqrt());
        for (k, &count) in occ.iter().enumerate() {
            for _ in 0..count {
                let mut next = BTreeMap::new();
                for (mono, c) in &poly {
                    for j in 0..n {
                        let ujk = u[(j, k)];
                        if ujk == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut m = mono.clone();
                        m[j] += 1;
                        *next.entry(m).or_insert(C64::new(0.0, 0.0)) += c * ujk;
                    }
                }
                poly = next;
            }
        }
        for (mono, c) in poly {
            let scale: f64 = mono.iter().map(|&m| factorial(m)).product();
            let mut t: Config = config.clone();
            t[first..first + n].copy_from_slice(&mono);
            *out.entry(t).or_insert(C64::new(0.0, 0.0)) += c * scale.sqrt();
        }
    }
    let mut lost = 0.0;
    out.retain(|c, a| {
        let keep = c[first..first + n].iter().all(|&m| m < trunc);
        if !keep {
            lost += a.norm_sqr();
        }
        keep && a.norm_sqr() > 0.0
    });
    (out, lost)
}

fn factorial(m: u8) -> f64 {
    (1..=m as u32).map(f64::from).product()
}
