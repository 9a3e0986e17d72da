//! Exact evaluation over joint types. Every density used by the bounds is a
//! function of the joint type of `(x, y)`, so tails reduce to finite sums
//! over type tables.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::channel::{Dmc, InputDist, MixedChannel};
use crate::error::{Error, Result};
use crate::search::{compositions, grid_size};
use crate::types::{lse, TypeClass, TYPE_CAP};

/// `ln k!` for `k <= n`.
pub(crate) struct LnFact(Vec<f64>);

impl LnFact {
    pub fn new(n: usize) -> Self {
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        for k in 1..=n {
            v.push(v[k - 1] + (k as f64).ln());
        }
        Self(v)
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

fn cap_check(count: u128) -> Result<()> {
    if count > TYPE_CAP {
        return Err(Error::CapExceeded {
            needed: count,
            cap: TYPE_CAP,
            hint: "use a smaller n, an i.i.d. product output, or the Monte-Carlo path".into(),
        });
    }
    Ok(())
}

/// All joint types of length-`n` pairs over `X × Y`, flattened row-major.
pub(crate) fn joint_types(nx: usize, ny: usize, n: usize) -> Result<Vec<usize>> {
    cap_check(grid_size(nx * ny, n))?;
    Ok(compositions(n, nx * ny).concat())
}

/// `ln Σ_j v_j Π_y q_j(y)^{s_y}`: a mixture of products at one sequence of
/// output type `s`.
pub(crate) fn ln_product_mixture(mix: &[(f64, Vec<f64>)], s: &[usize]) -> f64 {
    lse(mix.iter().map(|(v, q)| {
        let mut acc = v.ln();
        for (&c, &qy) in s.iter().zip(q) {
            if c > 0 {
                acc += c as f64 * qy.ln();
            }
        }
        acc
    }))
}

/// How input letters are drawn.
#[derive(Debug, Clone)]
pub(crate) enum Rows {
    /// Fixed composition: the tail given any sequence of the type.
    Fixed(TypeClass),
    /// I.i.d. letters.
    Iid(InputDist),
}

/// Joint types reachable under an input law, with their output-type index.
pub(crate) struct TypeTable {
    pub nx: usize,
    pub ny: usize,
    pub n: usize,
    pub rows: Rows,
    cells: Vec<usize>,
    col_index: Vec<usize>,
    pub col_sums: Vec<Vec<usize>>,
    fact: LnFact,
}

impl TypeTable {
    pub fn for_composition(comp: &TypeClass, ny: usize) -> Result<Self> {
        let count = comp
            .counts
            .iter()
            .map(|&c| grid_size(ny, c))
            .fold(1u128, |a, b| a.saturating_mul(b));
        cap_check(count)?;
        let per_row: Vec<Vec<Vec<usize>>> = comp.counts.iter().map(|&c| compositions(c, ny)).collect();
        let nx = comp.counts.len();
        let mut cells = Vec::with_capacity(count as usize * nx * ny);
        let mut idx = vec![0usize; nx];
        'outer: loop {
            for x in 0..nx {
                cells.extend_from_slice(&per_row[x][idx[x]]);
            }
            for x in (0..nx).rev() {
                idx[x] += 1;
                if idx[x] < per_row[x].len() {
                    continue 'outer;
                }
                idx[x] = 0;
            }
            break;
        }
        Ok(Self::build(nx, ny, comp.n, Rows::Fixed(comp.clone()), cells))
    }

    pub fn for_iid(p: &InputDist, ny: usize, n: usize) -> Result<Self> {
        let nx = p.len();
        let cells = joint_types(nx, ny, n)?;
        Ok(Self::build(nx, ny, n, Rows::Iid(p.clone()), cells))
    }

    fn build(nx: usize, ny: usize, n: usize, rows: Rows, cells: Vec<usize>) -> Self {
        let mut lookup: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut col_sums = Vec::new();
        let col_index = cells
            .chunks(nx * ny)
            .map(|k| {
                let s: Vec<usize> = (0..ny).map(|y| (0..nx).map(|x| k[x * ny + y]).sum()).collect();
                *lookup.entry(s.clone()).or_insert_with(|| {
                    col_sums.push(s);
                    col_sums.len() - 1
                })
            })
            .collect();
        Self {
            nx,
            ny,
            n,
            rows,
            cells,
            col_index,
            col_sums,
            fact: LnFact::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.col_index.len()
    }

    pub fn cell(&self, i: usize) -> &[usize] {
        let m = self.nx * self.ny;
        &self.cells[i * m..(i + 1) * m]
    }

    pub fn column_index(&self, i: usize) -> usize {
        self.col_index[i]
    }

    pub fn column_sums(&self, i: usize) -> &[usize] {
        &self.col_sums[self.col_index[i]]
    }

    /// `ln W^n(y|x)` for one pair of this joint type.
    pub fn ln_likelihood(&self, w: &Dmc, i: usize) -> f64 {
        let k = self.cell(i);
        let mut acc = 0.0;
        for x in 0..self.nx {
            for y in 0..self.ny {
                let c = k[x * self.ny + y];
                if c > 0 {
                    acc += c as f64 * w.prob(x, y).ln();
                }
            }
        }
        acc
    }

    /// `ln Σ_θ w_θ W_θ^n(y|x)`.
    pub fn ln_mixture_likelihood(&self, mixed: &MixedChannel, i: usize) -> f64 {
        lse(mixed.atoms().iter().map(|a| a.weight.ln() + self.ln_likelihood(&a.channel, i)))
    }

    /// Probability of each joint type when `Y` is drawn through `w`.
    pub fn probabilities(&self, w: &Dmc) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let k = self.cell(i);
                let ln = match &self.rows {
                    Rows::Fixed(t) => {
                        let mut acc = 0.0;
                        for x in 0..self.nx {
                            acc += self.fact.get(t.counts[x]);
                            for y in 0..self.ny {
                                acc -= self.fact.get(k[x * self.ny + y]);
                            }
                        }
                        acc + self.ln_likelihood(w, i)
                    }
                    Rows::Iid(p) => {
                        let mut acc = self.fact.get(self.n);
                        for x in 0..self.nx {
                            for y in 0..self.ny {
                                let c = k[x * self.ny + y];
                                acc -= self.fact.get(c);
                                if c > 0 {
                                    acc += c as f64 * (p.probs()[x] * w.prob(x, y)).ln();
                                }
                            }
                        }
                        acc
                    }
                };
                ln.exp()
            })
            .collect()
    }

    /// Probability of each joint type under the mixture channel.
    pub fn mixture_probabilities(&self, mixed: &MixedChannel) -> Vec<f64> {
        let mut total = vec![0.0; self.len()];
        for a in mixed.atoms() {
            for (t, p) in total.iter_mut().zip(self.probabilities(&a.channel)) {
                *t += a.weight * p;
            }
        }
        total
    }

    /// `ln P_{Y^n}(y)` per output type when `X` is uniform on the type class
    /// and `Y` passes through the mixture. Needs a fixed composition.
    pub fn type_class_output(&self, mixed: &MixedChannel) -> Result<Vec<f64>> {
        let Rows::Fixed(t) = &self.rows else {
            return Err(Error::InvalidParameter("type-class output needs a fixed composition".into()));
        };
        let ln_size = t.ln_size();
        let mut per_col: Vec<Vec<f64>> = vec![Vec::new(); self.col_sums.len()];
        for i in 0..self.len() {
            let k = self.cell(i);
            let s = self.column_sums(i);
            let mut mult = 0.0;
            for y in 0..self.ny {
                mult += self.fact.get(s[y]);
                for x in 0..self.nx {
                    mult -= self.fact.get(k[x * self.ny + y]);
                }
            }
            per_col[self.col_index[i]].push(mult + self.ln_mixture_likelihood(mixed, i));
        }
        Ok(per_col.into_iter().map(|v| lse(v.into_iter()) - ln_size).collect())
    }

    /// `Pr{density <= threshold}` given per-type probabilities and densities.
    pub fn tail(probs: &[f64], density: &[f64], threshold: f64) -> f64 {
        let cut = threshold + super::tie(threshold);
        probs
            .iter()
            .zip(density)
            .filter(|&(_, &d)| d <= cut)
            .map(|(p, _)| p)
            .sum::<f64>()
            .min(1.0)
    }
}
