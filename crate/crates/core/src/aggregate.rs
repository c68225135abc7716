//! Min-max and max-min aggregates of `|tau|` over adjustment subsets and
//! candidate targets, plus an incrementally maintained max-min table.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::moments::{MomentCache, MomentSource};
use crate::sem::fmt_set;
use crate::subsets::{with_element, Combinations, SubsetFamily};

fn check_sets(v: usize, v1: &[usize], v2: &[usize]) -> Result<()> {
    if v2.is_empty() {
        return Err(Error::input("target set V2 is empty"));
    }
    if v1.contains(&v) || v2.contains(&v) {
        return Err(Error::input(format!("node {} must not belong to V1 or V2", v + 1)));
    }
    if let Some(x) = v1.iter().find(|x| v2.contains(x)) {
        return Err(Error::input(format!("node {} lies in both V1 and V2", x + 1)));
    }
    Ok(())
}

/// `min over C in V1(J)` of `max over u in V2` of `|tau_{v.C -> u}|`, with
/// the lexicographically first minimizing `C`.
pub fn t1_minmax_arg<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    v: usize,
    v1: &[usize],
    v2: &[usize],
    j: usize,
    k: u32,
) -> Result<(f64, Vec<usize>)> {
    check_sets(v, v1, v2)?;
    let mut best = (f64::INFINITY, Vec::new());
    for c in SubsetFamily::new(v1, j).iter() {
        let vals = cache.tau_hat_many(v, &c, v2, k)?;
        let m = vals.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
        if m < best.0 {
            best = (m, c);
        }
    }
    Ok(best)
}

/// The min-max aggregate `T1`.
pub fn t1_minmax<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    v: usize,
    v1: &[usize],
    v2: &[usize],
    j: usize,
    k: u32,
) -> Result<f64> {
    Ok(t1_minmax_arg(cache, v, v1, v2, j, k)?.0)
}

/// Per-target minima `min over C in V1(J) of |tau_{v.C -> u}|` for every
/// `u` in `V2`, each with its lexicographically first minimizer.
pub fn t2_minima<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    v: usize,
    v1: &[usize],
    v2: &[usize],
    j: usize,
    k: u32,
) -> Result<Vec<(f64, Vec<usize>)>> {
    check_sets(v, v1, v2)?;
    let mut mins = vec![(f64::INFINITY, Vec::new()); v2.len()];
    for c in SubsetFamily::new(v1, j).iter() {
        let vals = cache.tau_hat_many(v, &c, v2, k)?;
        for (slot, t) in mins.iter_mut().zip(vals) {
            if t.abs() < slot.0 {
                *slot = (t.abs(), c.clone());
            }
        }
    }
    Ok(mins)
}

/// The max-min aggregate `T2`.
pub fn t2_maxmin<S: MomentSource + ?Sized>(
    cache: &MomentCache<S>,
    v: usize,
    v1: &[usize],
    v2: &[usize],
    j: usize,
    k: u32,
) -> Result<f64> {
    Ok(t2_minima(cache, v, v1, v2, j, k)?
        .into_iter()
        .fold(0.0f64, |acc, (m, _)| acc.max(m)))
}

/// Max-min table for one node `v`.
///
/// Holds `|tau_{v.C -> u}|` for every `C` in the current family `V1(J)` and
/// every live target `u`. Adding a candidate only evaluates the subsets that
/// contain it; dropping one only discards stored subsets, unless the family
/// collapses to the whole (smaller) candidate set.
#[derive(Debug, Clone)]
pub struct MaxMinState {
    v: usize,
    j: usize,
    k: u32,
    cands: Vec<usize>,
    targets: Vec<usize>,
    live: Vec<bool>,
    table: BTreeMap<Vec<usize>, Vec<f64>>,
    evaluations: usize,
}

impl MaxMinState {
    /// Full enumeration against candidate set `cands` and targets `targets`.
    pub fn build<S: MomentSource + ?Sized>(
        cache: &MomentCache<S>,
        v: usize,
        cands: &[usize],
        targets: &[usize],
        j: usize,
        k: u32,
    ) -> Result<Self> {
        let mut cands = cands.to_vec();
        cands.sort_unstable();
        cands.dedup();
        if !targets.is_empty() {
            check_sets(v, &cands, targets)?;
        }
        let mut st = MaxMinState {
            v,
            j,
            k,
            cands,
            targets: targets.to_vec(),
            live: vec![true; targets.len()],
            table: BTreeMap::new(),
            evaluations: 0,
        };
        st.refill(cache)?;
        Ok(st)
    }

    fn refill<S: MomentSource + ?Sized>(&mut self, cache: &MomentCache<S>) -> Result<()> {
        self.table.clear();
        let fam = SubsetFamily::new(&self.cands, self.j);
        for c in fam.iter() {
            self.insert(cache, c)?;
        }
        Ok(())
    }

    fn insert<S: MomentSource + ?Sized>(&mut self, cache: &MomentCache<S>, c: Vec<usize>) -> Result<()> {
        let live: Vec<usize> = self.live_targets();
        let vals = cache.tau_hat_many(self.v, &c, &live, self.k)?;
        self.evaluations += 1;
        let mut row = vec![f64::NAN; self.targets.len()];
        let mut it = vals.into_iter();
        for (slot, &alive) in row.iter_mut().zip(&self.live) {
            if alive {
                *slot = it.next().expect("one value per live target").abs();
            }
        }
        self.table.insert(c, row);
        Ok(())
    }

    pub fn node(&self) -> usize {
        self.v
    }

    pub fn candidates(&self) -> &[usize] {
        &self.cands
    }

    pub fn live_targets(&self) -> Vec<usize> {
        self.targets
            .iter()
            .zip(&self.live)
            .filter(|(_, &l)| l)
            .map(|(&u, _)| u)
            .collect()
    }

    /// Number of subsets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Stop tracking target `u`.
    pub fn retire(&mut self, u: usize) -> Result<()> {
        match self.targets.iter().position(|&x| x == u) {
            Some(i) if self.live[i] => {
                self.live[i] = false;
                Ok(())
            }
            _ => Err(Error::State(format!(
                "node {} is not a live target of node {}",
                u + 1,
                self.v + 1
            ))),
        }
    }

    /// Account for `newly_ordered` joining the candidate set, which must then
    /// equal `new_cands`.
    pub fn t2_update<S: MomentSource + ?Sized>(
        &mut self,
        cache: &MomentCache<S>,
        newly_ordered: usize,
        new_cands: &[usize],
    ) -> Result<()> {
        if self.cands.contains(&newly_ordered) {
            return Err(Error::State(format!(
                "node {} is already a candidate parent of node {}",
                newly_ordered + 1,
                self.v + 1
            )));
        }
        if newly_ordered == self.v || self.live_targets().contains(&newly_ordered) {
            return Err(Error::State(format!(
                "node {} is still a live target of node {}",
                newly_ordered + 1,
                self.v + 1
            )));
        }
        let expected = with_element(&self.cands, newly_ordered);
        let mut given = new_cands.to_vec();
        given.sort_unstable();
        if given != expected {
            return Err(Error::State(format!(
                "stale state for node {}: expected candidates {}, got {}",
                self.v + 1,
                fmt_set(&expected),
                fmt_set(&given)
            )));
        }
        let old = std::mem::replace(&mut self.cands, expected);
        if old.len() < self.j {
            // family was {old}; it is now {old + r}
            self.table.clear();
            let all = self.cands.clone();
            self.insert(cache, all)?;
        } else if self.j > 0 {
            for c in Combinations::new(&old, self.j - 1) {
                let c = with_element(&c, newly_ordered);
                self.insert(cache, c)?;
            }
        }
        Ok(())
    }

    /// Drop candidate `q`.
    pub fn remove_candidate<S: MomentSource + ?Sized>(&mut self, cache: &MomentCache<S>, q: usize) -> Result<()> {
        let Some(pos) = self.cands.iter().position(|&x| x == q) else {
            return Err(Error::State(format!(
                "node {} is not a candidate parent of node {}",
                q + 1,
                self.v + 1
            )));
        };
        self.cands.remove(pos);
        if self.cands.len() < self.j {
            self.table.clear();
            let all = self.cands.clone();
            self.insert(cache, all)?;
        } else {
            self.table.retain(|c, _| !c.contains(&q));
        }
        Ok(())
    }

    /// Move to candidate set `new_cands` after `newly_ordered` has left the
    /// targets: incremental when it was added, subtractive for dropped nodes.
    pub fn advance<S: MomentSource + ?Sized>(
        &mut self,
        cache: &MomentCache<S>,
        newly_ordered: usize,
        new_cands: &[usize],
    ) -> Result<()> {
        let removed: Vec<usize> = self.cands.iter().copied().filter(|c| !new_cands.contains(c)).collect();
        for q in removed {
            self.remove_candidate(cache, q)?;
        }
        if new_cands.contains(&newly_ordered) && !self.cands.contains(&newly_ordered) {
            self.t2_update(cache, newly_ordered, new_cands)?;
        }
        let mut given = new_cands.to_vec();
        given.sort_unstable();
        if given != self.cands {
            return Err(Error::State(format!(
                "candidate set {} of node {} cannot be reached from {}",
                fmt_set(&given),
                self.v + 1,
                fmt_set(&self.cands)
            )));
        }
        Ok(())
    }

    /// Per live target: minimum over the family and the first minimizer.
    pub fn minima(&self) -> Vec<(usize, f64, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, &u) in self.targets.iter().enumerate() {
            if !self.live[i] {
                continue;
            }
            let mut best = (f64::INFINITY, Vec::new());
            for (c, row) in &self.table {
                if row[i] < best.0 {
                    best = (row[i], c.clone());
                }
            }
            out.push((u, best.0, best.1));
        }
        out
    }

    /// Current `T2` value; zero when no targets remain.
    pub fn value(&self) -> f64 {
        self.minima().into_iter().fold(0.0f64, |acc, (_, m, _)| acc.max(m))
    }
}
