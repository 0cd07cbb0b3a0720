//! Shapley kernel weights and coalition sampling.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Coalition;
use crate::error::ModelError;

/// Shapley kernel weight `(m-1) / (C(m,s) * s * (m-s))` for a coalition of
/// size `s`. The empty and full coalitions are enforced as constraints and
/// have no finite weight.
pub fn kernel_weight(m: usize, s: usize) -> Result<f64, ModelError> {
    if s == 0 || s >= m {
        return Err(ModelError::BoundaryCoalition { m, size: s });
    }
    Ok((m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64))
}

/// Total kernel mass of the size-`s` layer: `C(m,s) * kernel_weight(m,s)`.
fn layer_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (s as f64 * (m - s) as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of proper coalitions, `2^m - 2`, saturating for large `m`.
pub(crate) fn proper_coalitions(m: usize) -> usize {
    if m >= usize::BITS as usize - 1 {
        usize::MAX
    } else {
        (1usize << m).saturating_sub(2)
    }
}

/// Coalitions chosen for the regression, with their regression weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample {
    pub coalitions: Vec<Coalition>,
    pub weights: Vec<f64>,
    /// How many leading entries come from fully enumerated size layers.
    pub enumerated: usize,
    /// True when every proper coalition is present exactly once.
    pub complete: bool,
}

impl CoalitionSample {
    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }
}

/// Picks `budget` distinct proper coalitions of `m` features.
///
/// When the budget covers all `2^m - 2` proper coalitions they are all
/// returned. Otherwise complementary size layers `(1, m-1)`, `(2, m-2)`, ...
/// are enumerated while both fit, and the rest of the budget is drawn from
/// the remaining layers with probability proportional to their kernel mass,
/// uniformly and without replacement inside a layer. Enumerated coalitions
/// carry their kernel weight; drawn coalitions share the remaining kernel
/// mass equally, since the draw itself already follows the kernel.
pub fn sample_coalitions(m: usize, budget: usize, seed: u64) -> Result<CoalitionSample, ModelError> {
    if budget < 2 {
        return Err(ModelError::BadBudget(budget));
    }
    let total = proper_coalitions(m);
    if budget >= total {
        let coalitions: Vec<Coalition> =
            (1..=total as u64).map(|bits| Coalition::from_bits(m, bits)).collect();
        let weights = coalitions
            .iter()
            .map(|z| kernel_weight(m, z.size()).expect("proper coalition"))
            .collect();
        return Ok(CoalitionSample {
            enumerated: coalitions.len(),
            coalitions,
            weights,
            complete: true,
        });
    }

    let mut coalitions = Vec::with_capacity(budget);
    let mut weights = Vec::with_capacity(budget);
    let mut remaining = budget;
    let mut next_layer = 1;
    while next_layer <= m / 2 {
        let s = next_layer;
        let pair = if s == m - s { 1.0 } else { 2.0 };
        let needed = binomial(m, s) * pair;
        if needed > remaining as f64 {
            break;
        }
        for size in if s == m - s { vec![s] } else { vec![s, m - s] } {
            let w = kernel_weight(m, size)?;
            for members in Combinations::new(m, size) {
                coalitions.push(Coalition::from_members(m, &members));
                weights.push(w);
            }
        }
        remaining -= needed as usize;
        next_layer += 1;
    }
    let enumerated = coalitions.len();

    if remaining > 0 {
        let mut open: Vec<usize> = (next_layer..=m - next_layer).collect();
        let mut layer_mass: Vec<f64> = open.iter().map(|&s| layer_weight(m, s)).collect();
        let mass_total: f64 = layer_mass.iter().sum();
        let mut drawn_per_layer = vec![0f64; m];
        let mut seen: HashSet<Vec<bool>> = HashSet::with_capacity(remaining);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let share = mass_total / remaining as f64;

        while remaining > 0 && !open.is_empty() {
            let mass: f64 = layer_mass.iter().sum();
            let mut target = rng.random::<f64>() * mass;
            let mut pick = open.len() - 1;
            for (i, w) in layer_mass.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            let s = open[pick];
            let mut members = index::sample(&mut rng, m, s).into_vec();
            members.sort_unstable();
            let z = Coalition::from_members(m, &members);
            if seen.insert(z.mask().to_vec()) {
                coalitions.push(z);
                weights.push(share);
                remaining -= 1;
                drawn_per_layer[s] += 1.0;
                if drawn_per_layer[s] >= binomial(m, s) {
                    open.remove(pick);
                    layer_mass.remove(pick);
                }
            }
        }
    }

    Ok(CoalitionSample {
        coalitions,
        weights,
        enumerated,
        complete: false,
    })
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut c = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if c[i] < self.n - k + i {
                c[i] += 1;
                for j in (i + 1)..k {
                    c[j] = c[j - 1] + 1;
                }
                self.current = Some(c);
                break;
            }
        }
        Some(out)
    }
}
