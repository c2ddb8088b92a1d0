use std::collections::HashMap;

use crate::error::{invalid, Result};

/// Occupation of one basis state: cavity photons, CPB level and the sorted
/// list of flipped spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    pub photons: u8,
    pub cpb: bool,
    pub spins: Vec<u32>,
}

impl BasisState {
    pub fn vacuum() -> Self {
        Self {
            photons: 0,
            cpb: false,
            spins: Vec::new(),
        }
    }

    pub fn photons(n: u8) -> Self {
        Self {
            photons: n,
            ..Self::vacuum()
        }
    }

    pub fn cpb_excited() -> Self {
        Self {
            cpb: true,
            ..Self::vacuum()
        }
    }

    pub fn spin(q: u32) -> Self {
        Self {
            spins: vec![q],
            ..Self::vacuum()
        }
    }

    pub fn excitations(&self) -> usize {
        self.photons as usize + self.cpb as usize + self.spins.len()
    }
}

/// All states with at most `max_excitations` quanta, ordered by total
/// excitation number, then photons (descending), then CPB (excited first), then spin
/// sets in lexicographic order. Index 0 is the vacuum.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n_spins: usize,
    max_excitations: u8,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl SectorBasis {
    pub fn new(n_spins: usize, max_excitations: u8) -> Result<Self> {
        if !(1..=2).contains(&max_excitations) {
            return Err(invalid(
                "max_excitations",
                format!("supported sectors are 1 and 2, got {max_excitations}"),
            ));
        }
        if n_spins == 0 {
            return Err(crate::Error::EmptyEnsemble);
        }
        let n = n_spins as u32;
        let mut states = Vec::new();
        for total in 0..=max_excitations {
            for photons in (0..=total).rev() {
                for cpb in [true, false] {
                    let used = photons + cpb as u8;
                    if used > total {
                        continue;
                    }
                    match total - used {
                        0 => states.push(BasisState {
                            photons,
                            cpb,
                            spins: vec![],
                        }),
                        1 => states.extend((0..n).map(|q| BasisState {
                            photons,
                            cpb,
                            spins: vec![q],
                        })),
                        _ => {
                            for a in 0..n {
                                for b in (a + 1)..n {
                                    states.push(BasisState {
                                        photons,
                                        cpb,
                                        spins: vec![a, b],
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self {
            n_spins,
            max_excitations,
            states,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }
    pub fn max_excitations(&self) -> u8 {
        self.max_excitations
    }
    pub fn states(&self) -> &[BasisState] {
        &self.states
    }
    pub fn state(&self, i: usize) -> &BasisState {
        &self.states[i]
    }
    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }
}
