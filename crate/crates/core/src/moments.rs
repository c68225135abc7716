//! Moment sources and the plug-in direction statistic.
//!
//! A [`MomentSource`] answers moment queries about the observed variables. Two
//! implementations exist: [`SampleMoments`] averages over a centered data set,
//! and [`PopulationMoments`] returns exact values implied by a model. The
//! statistic in [`MomentCache::tau_hat`] is assembled the same way from either,
//! so feeding population moments reproduces the population parameter.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sem::{check_tau_args, fmt_set, PopulationOracle};

/// Sum with Neumaier's compensation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Running Neumaier accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Moment queries about observed variables `0..p`.
pub trait MomentSource: Sync {
    fn num_vars(&self) -> usize;

    /// `E(Y_i Y_j)`.
    fn second_moment(&self, i: usize, j: usize) -> f64;

    /// `E(prod Y_h^a)` over `(h, a)` factors. Factors may repeat a variable.
    fn raw_moment(&self, factors: &[(usize, u32)]) -> f64;

    /// `E(R^s Y_u^r)` with `R = Y_v - sum_c beta_c Y_c`.
    fn residual_cross_moment(&self, v: usize, cond: &[usize], beta: &[f64], u: usize, s: u32, r: u32) -> f64;

    /// `tau` for one residual against many targets:
    /// `m(K-1,1) m(2,0) - m(K,0) m(1,1)` for every `u` in `targets`.
    fn tau_many(&self, v: usize, cond: &[usize], beta: &[f64], targets: &[usize], k: u32) -> Vec<f64> {
        if targets.is_empty() {
            return Vec::new();
        }
        let m20 = self.residual_cross_moment(v, cond, beta, targets[0], 2, 0);
        let mk0 = self.residual_cross_moment(v, cond, beta, targets[0], k, 0);
        targets
            .iter()
            .map(|&u| {
                let a = self.residual_cross_moment(v, cond, beta, u, k - 1, 1);
                let b = self.residual_cross_moment(v, cond, beta, u, 1, 1);
                a * m20 - mk0 * b
            })
            .collect()
    }
}

/// Sample moments of a data set, mean-centered at construction.
#[derive(Debug, Clone)]
pub struct SampleMoments {
    data: Dataset,
    second: DMatrix<f64>,
}

impl SampleMoments {
    /// Center `data` and precompute its second-moment matrix.
    pub fn new(data: Dataset) -> Self {
        Self::from_centered(data.centered())
    }

    /// Use `data` as is; callers guarantee it is already centered when that matters.
    pub fn from_centered(data: Dataset) -> Self {
        let p = data.p();
        let n = data.n() as f64;
        let mut second = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let s = neumaier_sum(data.column(i).iter().zip(data.column(j)).map(|(a, b)| a * b)) / n;
                second[(i, j)] = s;
                second[(j, i)] = s;
            }
        }
        SampleMoments { data, second }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn second_moments(&self) -> &DMatrix<f64> {
        &self.second
    }

    fn residual(&self, v: usize, cond: &[usize], beta: &[f64]) -> Vec<f64> {
        let mut res = self.data.column(v).to_vec();
        for (&c, &b) in cond.iter().zip(beta) {
            for (r, y) in res.iter_mut().zip(self.data.column(c)) {
                *r -= b * y;
            }
        }
        res
    }
}

impl MomentSource for SampleMoments {
    fn num_vars(&self) -> usize {
        self.data.p()
    }

    fn second_moment(&self, i: usize, j: usize) -> f64 {
        self.second[(i, j)]
    }

    fn raw_moment(&self, factors: &[(usize, u32)]) -> f64 {
        let n = self.data.n();
        let mut acc = Acc::default();
        for i in 0..n {
            let mut prod = 1.0;
            for &(h, a) in factors {
                prod *= self.data.column(h)[i].powi(a as i32);
            }
            acc.add(prod);
        }
        acc.value() / n as f64
    }

    fn residual_cross_moment(&self, v: usize, cond: &[usize], beta: &[f64], u: usize, s: u32, r: u32) -> f64 {
        let res = self.residual(v, cond, beta);
        let y = self.data.column(u);
        let mut acc = Acc::default();
        for (a, b) in res.iter().zip(y) {
            acc.add(a.powi(s as i32) * b.powi(r as i32));
        }
        acc.value() / res.len() as f64
    }

    fn tau_many(&self, v: usize, cond: &[usize], beta: &[f64], targets: &[usize], k: u32) -> Vec<f64> {
        let n = self.data.n() as f64;
        let res = self.residual(v, cond, beta);
        let mut m20 = Acc::default();
        let mut mk0 = Acc::default();
        let mut top: Vec<f64> = Vec::with_capacity(res.len());
        for &x in &res {
            let xk1 = x.powi(k as i32 - 1);
            m20.add(x * x);
            mk0.add(xk1 * x);
            top.push(xk1);
        }
        let (m20, mk0) = (m20.value() / n, mk0.value() / n);
        targets
            .iter()
            .map(|&u| {
                let y = self.data.column(u);
                let mut a = Acc::default();
                let mut b = Acc::default();
                for ((t, x), yu) in top.iter().zip(&res).zip(y) {
                    a.add(t * yu);
                    b.add(x * yu);
                }
                (a.value() / n) * m20 - mk0 * (b.value() / n)
            })
            .collect()
    }
}

/// Exact moments of a model, computed from the error laws. Raw moments are
/// memoized by the multiset of variables involved.
#[derive(Debug)]
pub struct PopulationMoments {
    oracle: PopulationOracle,
    memo: Mutex<HashMap<Vec<usize>, f64>>,
}

impl PopulationMoments {
    pub fn new(oracle: PopulationOracle) -> Self {
        PopulationMoments { oracle, memo: Mutex::new(HashMap::new()) }
    }

    pub fn oracle(&self) -> &PopulationOracle {
        &self.oracle
    }

    fn multiset_moment(&self, mut idx: Vec<usize>) -> f64 {
        idx.sort_unstable();
        if let Some(&m) = self.memo.lock().expect("memo lock").get(&idx) {
            return m;
        }
        let pi = self.oracle.total_effects();
        let rows: Vec<Vec<f64>> = idx.iter().map(|&h| pi.row(h).iter().copied().collect()).collect();
        let m = self
            .oracle
            .linear_form_moment(&rows)
            .expect("population moments require error moments of sufficient order");
        self.memo.lock().expect("memo lock").insert(idx, m);
        m
    }
}

impl MomentSource for PopulationMoments {
    fn num_vars(&self) -> usize {
        self.oracle.num_nodes()
    }

    fn second_moment(&self, i: usize, j: usize) -> f64 {
        self.oracle.covariance()[(i, j)]
    }

    fn raw_moment(&self, factors: &[(usize, u32)]) -> f64 {
        let idx = factors
            .iter()
            .flat_map(|&(h, a)| std::iter::repeat_n(h, a as usize))
            .collect();
        self.multiset_moment(idx)
    }

    /// Multinomial expansion of `(Y_v - sum beta_c Y_c)^s Y_u^r` over raw moments.
    fn residual_cross_moment(&self, v: usize, cond: &[usize], beta: &[f64], u: usize, s: u32, r: u32) -> f64 {
        let mut vars = vec![v];
        vars.extend_from_slice(cond);
        let mut coefs = vec![1.0];
        coefs.extend(beta.iter().map(|b| -b));
        let mut total = 0.0;
        let mut parts = vec![0u32; vars.len()];
        compositions(s, &mut parts, 0, &mut |parts| {
            let mut weight = multinomial(s, parts);
            let mut idx = vec![u; r as usize];
            for ((&x, &c), &e) in vars.iter().zip(&coefs).zip(parts.iter()) {
                weight *= c.powi(e as i32);
                idx.extend(std::iter::repeat_n(x, e as usize));
            }
            if weight != 0.0 {
                total += weight * self.multiset_moment(idx);
            }
        });
        total
    }
}

fn compositions(total: u32, parts: &mut [u32], pos: usize, f: &mut impl FnMut(&[u32])) {
    if pos + 1 == parts.len() {
        parts[pos] = total;
        f(parts);
        return;
    }
    for x in 0..=total {
        parts[pos] = x;
        compositions(total - x, parts, pos + 1, f);
    }
}

fn multinomial(n: u32, parts: &[u32]) -> f64 {
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    fact(n) / parts.iter().map(|&k| fact(k)).product::<f64>()
}

type TauKey = (usize, usize, Vec<usize>, u32);

/// Memoizing front end over a [`MomentSource`].
///
/// Regression coefficients are always memoized by `(v, C)`. Statistic values
/// are memoized by `(v, u, C, K)` only when enabled; the search algorithm keeps
/// that table off so the min-max statistic really is recomputed every step.
pub struct MomentCache<'a, S: MomentSource + ?Sized> {
    source: &'a S,
    order: u32,
    betas: RwLock<HashMap<(usize, Vec<usize>), Arc<Vec<f64>>>>,
    taus: Option<RwLock<HashMap<TauKey, f64>>>,
}

impl<'a, S: MomentSource + ?Sized> MomentCache<'a, S> {
    /// Cache for statistics of order `order` (`K`); sample moments may go up to `2K`.
    pub fn new(source: &'a S, order: u32) -> Self {
        MomentCache { source, order, betas: RwLock::new(HashMap::new()), taus: None }
    }

    pub fn with_tau_memo(mut self, enabled: bool) -> Self {
        self.taus = enabled.then(|| RwLock::new(HashMap::new()));
        self
    }

    pub fn source(&self) -> &S {
        self.source
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn num_vars(&self) -> usize {
        self.source.num_vars()
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_vars() {
            Err(Error::input(format!("unknown node label {}", v + 1)))
        } else {
            Ok(())
        }
    }

    /// `(1/n) sum_i prod_{h in H} Y_hi^{a_h}`; the empty product gives 1.
    pub fn sample_moment(&self, factors: &[(usize, u32)]) -> Result<f64> {
        let deg: u32 = factors.iter().map(|f| f.1).sum();
        if deg > 2 * self.order {
            return Err(Error::input(format!(
                "moment degree {deg} exceeds twice the statistic order {}",
                self.order
            )));
        }
        for &(h, _) in factors {
            self.check_node(h)?;
        }
        if deg == 0 {
            return Ok(1.0);
        }
        Ok(self.source.raw_moment(factors))
    }

    /// Least-squares coefficients of `v` on `cond` from second moments.
    pub fn fit_regression(&self, v: usize, cond: &[usize]) -> Result<Arc<Vec<f64>>> {
        self.check_node(v)?;
        for &c in cond {
            self.check_node(c)?;
        }
        if cond.contains(&v) {
            return Err(Error::input(format!("node {} cannot be regressed on itself", v + 1)));
        }
        let key = (v, cond.to_vec());
        if let Some(b) = self.betas.read().expect("beta lock").get(&key) {
            return Ok(b.clone());
        }
        let gram = DMatrix::from_fn(cond.len(), cond.len(), |i, j| {
            self.source.second_moment(cond[i], cond[j])
        });
        let rhs = DVector::from_iterator(cond.len(), cond.iter().map(|&c| self.source.second_moment(c, v)));
        let beta = linalg::solve_gram(gram, rhs).ok_or_else(|| {
            Error::numerical(format!(
                "second-moment matrix of {} is singular or ill-conditioned (regressing {})",
                fmt_set(cond),
                v + 1
            ))
        })?;
        let beta = Arc::new(beta.iter().copied().collect::<Vec<_>>());
        self.betas.write().expect("beta lock").insert(key, beta.clone());
        Ok(beta)
    }

    /// `(1/n) sum_i Yhat_{vi.C}^s Y_ui^r`.
    pub fn residual_cross_moment(&self, v: usize, cond: &[usize], u: usize, s: u32, r: u32) -> Result<f64> {
        if s + r > self.order {
            return Err(Error::input(format!(
                "s + r = {} exceeds the statistic order {}",
                s + r,
                self.order
            )));
        }
        self.check_node(u)?;
        if u == v || cond.contains(&u) {
            return Err(Error::input("target node must lie outside C and differ from v"));
        }
        let beta = self.fit_regression(v, cond)?;
        if s == 0 && r == 0 {
            return Ok(1.0);
        }
        Ok(self.source.residual_cross_moment(v, cond, &beta, u, s, r))
    }

    /// Plug-in `tau^(K)_{v.C -> u}`.
    pub fn tau_hat(&self, v: usize, u: usize, cond: &[usize], k: u32) -> Result<f64> {
        Ok(self.tau_hat_many(v, cond, &[u], k)?[0])
    }

    /// Plug-in statistics of one residual `Y_v.C` against each target.
    pub fn tau_hat_many(&self, v: usize, cond: &[usize], targets: &[usize], k: u32) -> Result<Vec<f64>> {
        self.check_node(v)?;
        for &u in targets {
            self.check_node(u)?;
            check_tau_args(v, u, cond, k as usize)?;
        }
        if let Some(memo) = &self.taus {
            let map = memo.read().expect("tau lock");
            let hits: Option<Vec<f64>> = targets
                .iter()
                .map(|&u| map.get(&(v, u, cond.to_vec(), k)).copied())
                .collect();
            if let Some(h) = hits {
                return Ok(h);
            }
        }
        let beta = self.fit_regression(v, cond)?;
        let vals = self.source.tau_many(v, cond, &beta, targets, k);
        if let Some(memo) = &self.taus {
            let mut map = memo.write().expect("tau lock");
            for (&u, &t) in targets.iter().zip(&vals) {
                map.insert((v, u, cond.to_vec(), k), t);
            }
        }
        Ok(vals)
    }
}
