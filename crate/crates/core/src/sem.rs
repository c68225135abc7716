//! Recursive linear structural equation models: error laws, simulation, and
//! exact population quantities.
//!
//! Every observed variable is a linear form in the independent errors,
//! `Y = Pi * eps` with `Pi = (I - B)^-1`. Population moments of any linear form
//! are therefore sums over products of single-error moments, which is what the
//! oracle evaluates here.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{GraphJson, WeightedDag};
use crate::linalg;
use crate::rng;
use crate::subsets;

/// Residual total effects at or below this magnitude count as vanishing.
pub const FAITHFULNESS_TOL: f64 = 1e-9;

/// Moment order stored for the shipped samplers.
pub const SAMPLER_MOMENT_ORDER: usize = 12;

/// Rows simulated per independent random stream.
const SIM_BLOCK: usize = 4096;

/// `(k-1)!!` for even `k`; the `k`-th moment of a standard Gaussian. Zero for odd `k`.
pub fn gaussian_moment(variance: f64, k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut df = 1.0;
    let mut j = k as i64 - 1;
    while j > 1 {
        df *= j as f64;
        j -= 2;
    }
    df * variance.powi(k as i32 / 2)
}

/// Moments `m[0..=order]` (with `m[0] = 1`) that agree with a centered
/// Gaussian of variance `variance` below order `order`, and whose top moment is
/// shifted by `offset`.
pub fn gaussian_offset_moments(variance: f64, offset: f64, order: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..=order).map(|k| gaussian_moment(variance, k)).collect();
    m[order] += offset;
    m
}

/// How errors of one node are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Uniform on `(-a, a)` with `a = sqrt(3 * var)`.
    Uniform,
    Gaussian,
    /// Moment sequence only; not realizable by the simulator.
    Custom,
}

/// Error law of a single node: variance, sampler, and the moment sequence
/// `moments[k] = E(eps^k)` for `k = 0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorLaw {
    variance: f64,
    sampler: Sampler,
    moments: Vec<f64>,
}

impl ErrorLaw {
    /// Validate a moment sequence given from order 1 upward.
    pub fn new(sampler: Sampler, moments_from_one: &[f64]) -> Result<Self> {
        if moments_from_one.len() < 2 {
            return Err(Error::input("an error law needs moments up to at least order 2"));
        }
        if moments_from_one[0].abs() > 1e-12 {
            return Err(Error::input(format!(
                "errors must be centered, first moment is {}",
                moments_from_one[0]
            )));
        }
        let variance = moments_from_one[1];
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::input(format!("error variance must be positive, got {variance}")));
        }
        let mut moments = Vec::with_capacity(moments_from_one.len() + 1);
        moments.push(1.0);
        moments.extend_from_slice(moments_from_one);
        moments[1] = 0.0;
        let law = ErrorLaw { variance, sampler, moments };
        if sampler == Sampler::Uniform {
            let expect = ErrorLaw::uniform(variance);
            for k in 1..law.moments.len().min(expect.moments.len()) {
                let (a, b) = (law.moments[k], expect.moments[k]);
                if (a - b).abs() > 1e-9 * b.abs().max(1.0) {
                    return Err(Error::input(format!(
                        "moment {k} = {a} is inconsistent with a uniform law of variance {variance} (expected {b})"
                    )));
                }
            }
        }
        if sampler == Sampler::Gaussian {
            for k in 1..law.moments.len() {
                let b = gaussian_moment(variance, k);
                if (law.moments[k] - b).abs() > 1e-9 * b.abs().max(1.0) {
                    return Err(Error::input(format!(
                        "moment {k} is inconsistent with a Gaussian law of variance {variance}"
                    )));
                }
            }
        }
        Ok(law)
    }

    /// Uniform on `(-a, a)` with variance `a^2 / 3`.
    pub fn uniform(variance: f64) -> Self {
        let a = (3.0 * variance).sqrt();
        let moments = (0..=SAMPLER_MOMENT_ORDER)
            .map(|k| if k % 2 == 1 { 0.0 } else { a.powi(k as i32) / (k as f64 + 1.0) })
            .collect();
        ErrorLaw { variance, sampler: Sampler::Uniform, moments }
    }

    pub fn gaussian(variance: f64) -> Self {
        let moments = (0..=SAMPLER_MOMENT_ORDER).map(|k| gaussian_moment(variance, k)).collect();
        ErrorLaw { variance, sampler: Sampler::Gaussian, moments }
    }

    /// Gaussian moments below `order`, top moment shifted by `offset`.
    pub fn gaussian_offset(variance: f64, offset: f64, order: usize) -> Self {
        ErrorLaw {
            variance,
            sampler: Sampler::Custom,
            moments: gaussian_offset_moments(variance, offset, order),
        }
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    /// Highest available moment order.
    pub fn order(&self) -> usize {
        self.moments.len() - 1
    }

    /// `E(eps^k)`.
    pub fn moment(&self, k: usize) -> Option<f64> {
        self.moments.get(k).copied()
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// Excess of the `k`-th moment over the Gaussian moment of equal variance.
    pub fn offset(&self, k: usize) -> Option<f64> {
        self.moment(k).map(|m| m - gaussian_moment(self.variance, k))
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.sampler {
            Sampler::Uniform => {
                let a = (3.0 * self.variance).sqrt();
                rng.gen_range(-a..a)
            }
            Sampler::Gaussian => self.variance.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Sampler::Custom => unreachable!("checked before sampling"),
        }
    }
}

/// Serialized error law: `{"var": ..., "sampler": ..., "moments": [m1, m2, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorJson {
    pub var: f64,
    pub sampler: Sampler,
    #[serde(default)]
    pub moments: Vec<f64>,
}

/// Serialized model: `{"graph": ..., "errors": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemJson {
    pub graph: GraphJson,
    pub errors: Vec<ErrorJson>,
}

/// Coefficients plus one error law per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Sem {
    wdag: WeightedDag,
    errors: Vec<ErrorLaw>,
}

impl Sem {
    pub fn new(wdag: WeightedDag, errors: Vec<ErrorLaw>) -> Result<Self> {
        if errors.len() != wdag.num_nodes() {
            return Err(Error::input(format!(
                "{} error laws for {} nodes",
                errors.len(),
                wdag.num_nodes()
            )));
        }
        Ok(Sem { wdag, errors })
    }

    /// Errors `sigma_v * unif(-sqrt3, sqrt3)` with `sigma_v ~ unif(.8, 1)`.
    pub fn with_uniform_errors(wdag: WeightedDag, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let errors = (0..wdag.num_nodes())
            .map(|_| {
                let sd: f64 = rng.gen_range(0.8..1.0);
                ErrorLaw::uniform(sd * sd)
            })
            .collect();
        Sem { wdag, errors }
    }

    /// Gaussian-offset errors at order `order` with variances on `(.5, 1.5)`
    /// and offsets of random sign with magnitude on `(.5, 2)`.
    pub fn with_offset_errors(wdag: WeightedDag, order: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let errors = (0..wdag.num_nodes())
            .map(|_| {
                let var: f64 = rng.gen_range(0.5..1.5);
                let mag: f64 = rng.gen_range(0.5..2.0);
                let eta = if rng.gen::<bool>() { mag } else { -mag };
                ErrorLaw::gaussian_offset(var, eta, order)
            })
            .collect();
        Sem { wdag, errors }
    }

    /// Same coefficients with every error replaced by a Gaussian of equal variance.
    pub fn gaussianized(&self) -> Self {
        let errors = self.errors.iter().map(|e| ErrorLaw::gaussian(e.variance)).collect();
        Sem { wdag: self.wdag.clone(), errors }
    }

    pub fn wdag(&self) -> &WeightedDag {
        &self.wdag
    }

    pub fn errors(&self) -> &[ErrorLaw] {
        &self.errors
    }

    pub fn num_nodes(&self) -> usize {
        self.wdag.num_nodes()
    }

    /// True when every error law has Gaussian moments up to `order`.
    pub fn all_gaussian_up_to(&self, order: usize) -> bool {
        self.errors.iter().all(|e| {
            (1..=order.min(e.order())).all(|k| {
                let g = gaussian_moment(e.variance, k);
                (e.moments[k] - g).abs() <= 1e-12 * g.abs().max(1.0)
            })
        })
    }

    pub fn to_json(&self) -> SemJson {
        SemJson {
            graph: self.wdag.to_json(),
            errors: self
                .errors
                .iter()
                .map(|e| ErrorJson {
                    var: e.variance,
                    sampler: e.sampler,
                    moments: e.moments[1..].to_vec(),
                })
                .collect(),
        }
    }

    /// Parse a model. For `uniform` and `gaussian` laws the moment list may be
    /// omitted and is then derived from `var`.
    pub fn from_json(j: &SemJson) -> Result<Self> {
        let wdag = WeightedDag::from_json(&j.graph)?;
        let errors = j
            .errors
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let law = match (e.sampler, e.moments.is_empty()) {
                    (Sampler::Uniform, true) => Ok(ErrorLaw::uniform(e.var)),
                    (Sampler::Gaussian, true) => Ok(ErrorLaw::gaussian(e.var)),
                    (Sampler::Custom, true) => {
                        Err(Error::input("custom error laws need an explicit moment list"))
                    }
                    (s, false) => ErrorLaw::new(s, &e.moments),
                };
                let law = law.map_err(|err| Error::input(format!("error law {}: {err}", i + 1)))?;
                if (law.variance - e.var).abs() > 1e-12 * e.var.abs().max(1.0) {
                    return Err(Error::input(format!(
                        "error law {}: var {} disagrees with second moment {}",
                        i + 1,
                        e.var,
                        law.variance
                    )));
                }
                Ok(law)
            })
            .collect::<Result<Vec<_>>>()?;
        Sem::new(wdag, errors)
    }

    /// Draw `n` observations. Rows are generated in blocks of fixed size, each
    /// from its own stream derived from `seed`, so the result does not depend
    /// on the thread count.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::input("simulate needs n >= 1"));
        }
        if let Some(v) = self.errors.iter().position(|e| e.sampler == Sampler::Custom) {
            return Err(Error::input(format!(
                "node {} has a custom moment law, which cannot be sampled",
                v + 1
            )));
        }
        let p = self.num_nodes();
        let order = self.wdag.dag().topological_sort()?;
        let b = self.wdag.weights();
        let parents: Vec<Vec<(usize, f64)>> = (0..p)
            .map(|v| {
                self.wdag
                    .dag()
                    .parents(v)
                    .expect("node in range")
                    .iter()
                    .map(|&u| (u, b[(v, u)]))
                    .collect()
            })
            .collect();
        let blocks: Vec<Vec<f64>> = (0..n.div_ceil(SIM_BLOCK))
            .into_par_iter()
            .map(|blk| {
                let rows = SIM_BLOCK.min(n - blk * SIM_BLOCK);
                let mut rng = rng::seeded(rng::derive_seed(seed, blk as u64));
                let mut out = vec![0.0; rows * p];
                for i in 0..rows {
                    let row = &mut out[i * p..(i + 1) * p];
                    for (v, e) in self.errors.iter().enumerate() {
                        row[v] = e.draw(&mut rng);
                    }
                    for &v in order.as_slice() {
                        let mut y = row[v];
                        for &(u, w) in &parents[v] {
                            y += w * row[u];
                        }
                        row[v] = y;
                    }
                }
                out
            })
            .collect();
        let flat: Vec<f64> = blocks.concat();
        Dataset::from_matrix(DMatrix::from_row_slice(n, p, &flat))
    }
}

/// `(I - B)^-1`. Acyclic supports are inverted by substitution along a
/// topological order, which keeps structural zeros exact; any other `B` falls
/// back to an LU inverse.
pub fn total_effects(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = b.nrows();
    if b.ncols() != p {
        return Err(Error::input("coefficient matrix must be square"));
    }
    let edges: Vec<(usize, usize)> = (0..p)
        .flat_map(|v| (0..p).filter(move |&u| b[(v, u)] != 0.0).map(move |u| (u, v)))
        .collect();
    match crate::graph::Dag::new(p, &edges) {
        Ok(dag) => {
            let order = dag.topological_sort()?;
            let mut pi = DMatrix::zeros(p, p);
            for &v in order.as_slice() {
                pi[(v, v)] = 1.0;
                for &u in dag.parents(v)? {
                    let w = b[(v, u)];
                    for k in 0..p {
                        pi[(v, k)] += w * pi[(u, k)];
                    }
                }
            }
            Ok(pi)
        }
        Err(_) => {
            let m = DMatrix::identity(p, p) - b;
            m.try_inverse()
                .ok_or_else(|| Error::structure("I - B is singular; the coefficient matrix is cyclic"))
        }
    }
}

/// `beta_vC = Sigma_CC^-1 Sigma_Cv`; the empty set gives the empty vector.
pub fn population_regression(sigma: &DMatrix<f64>, v: usize, cond: &[usize]) -> Result<DVector<f64>> {
    if cond.contains(&v) {
        return Err(Error::input(format!("node {} cannot be regressed on itself", v + 1)));
    }
    let gram = linalg::principal(sigma, cond);
    let rhs = DVector::from_iterator(cond.len(), cond.iter().map(|&c| sigma[(c, v)]));
    linalg::solve_gram(gram, rhs).ok_or_else(|| {
        Error::numerical(format!("covariance submatrix for {} is singular", fmt_set(cond)))
    })
}

pub(crate) fn fmt_set(s: &[usize]) -> String {
    let inner: Vec<String> = s.iter().map(|x| (x + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// One violation of parental faithfulness: the edge `u -> v` has vanishing
/// residual total effect after regressing `v` on `cond`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaithfulnessViolation {
    pub u: usize,
    pub v: usize,
    pub cond: Vec<usize>,
}

/// Result of a parental-faithfulness audit. `violations` is empty iff the
/// model is faithful; they are listed by edge `(u, v)` and then by set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaithfulnessReport {
    pub violations: Vec<FaithfulnessViolation>,
}

impl FaithfulnessReport {
    pub fn is_faithful(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn witness(&self) -> Option<&FaithfulnessViolation> {
        self.violations.first()
    }
}

/// Closed-form aggregates for a confounding-free `(v, u, C)`: the residual
/// splits as `Y_v.C = Z1 + pi * Z2` with `Y_u = Z2` and `Z1` independent of `Z2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoConfoundingAggregates {
    pub pi: f64,
    /// Variance of the residual part independent of `Y_u`.
    pub var_residual: f64,
    /// Top-order offset of that part.
    pub offset_residual: f64,
    /// Variance of `Y_u`.
    pub var_parent: f64,
    /// Top-order offset of `Y_u`.
    pub offset_parent: f64,
}

/// `pi * (pi^(K-2) * eta_u * var_v - eta_v * var_u)`, where the `v` quantities
/// belong to the residual component independent of `Y_u` and the `u` quantities
/// to `Y_u`. Valid when error moments below order `K` are Gaussian.
pub fn population_tau_no_confounding(
    pi: f64,
    var_v: f64,
    var_u: f64,
    eta_v: f64,
    eta_u: f64,
    k: usize,
) -> f64 {
    pi * (pi.powi(k as i32 - 2) * eta_u * var_v - eta_v * var_u)
}

/// Exact population quantities of a [`Sem`].
#[derive(Debug, Clone)]
pub struct PopulationOracle {
    sem: Sem,
    pi: DMatrix<f64>,
    sigma: DMatrix<f64>,
    min_eigenvalue: f64,
    descendants: Vec<BTreeSet<usize>>,
}

impl PopulationOracle {
    pub fn new(sem: Sem) -> Result<Self> {
        let pi = total_effects(sem.wdag.weights())?;
        let sigma = covariance_from_effects(&pi, &sem.errors);
        let min_eigenvalue = linalg::min_eigenvalue(&sigma);
        if !(min_eigenvalue > 0.0) {
            return Err(Error::numerical(format!(
                "population covariance is not positive definite (min eigenvalue {min_eigenvalue})"
            )));
        }
        let dag = sem.wdag.dag();
        let descendants = (0..sem.num_nodes())
            .map(|v| dag.descendants(v).expect("node in range"))
            .collect();
        Ok(PopulationOracle { sem, pi, sigma, min_eigenvalue, descendants })
    }

    pub fn sem(&self) -> &Sem {
        &self.sem
    }

    /// Total effects `Pi`.
    pub fn total_effects(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// Covariance `Sigma = Pi diag(var) Pi^T`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn num_nodes(&self) -> usize {
        self.sem.num_nodes()
    }

    pub fn descendants(&self, v: usize) -> &BTreeSet<usize> {
        &self.descendants[v]
    }

    /// Largest absolute moment among all products of at most `order` observed
    /// variables. Reported only; no bound is enforced.
    pub fn max_abs_moment(&self, order: usize) -> Result<f64> {
        let p = self.num_nodes();
        let mut best: f64 = 0.0;
        for d in 1..=order {
            for idx in subsets::multisets(p, d) {
                let coefs: Vec<Vec<f64>> =
                    idx.iter().map(|&h| self.pi.row(h).iter().copied().collect()).collect();
                best = best.max(self.linear_form_moment(&coefs)?.abs());
            }
        }
        Ok(best)
    }

    pub fn regression(&self, v: usize, cond: &[usize]) -> Result<DVector<f64>> {
        population_regression(&self.sigma, v, cond)
    }

    /// Coefficients of the population residual `Y_v.C` on the errors.
    pub fn residual_coefficients(&self, v: usize, cond: &[usize]) -> Result<Vec<f64>> {
        let beta = self.regression(v, cond)?;
        let p = self.num_nodes();
        Ok((0..p)
            .map(|k| {
                self.pi[(v, k)]
                    - cond.iter().zip(beta.iter()).map(|(&c, b)| b * self.pi[(c, k)]).sum::<f64>()
            })
            .collect())
    }

    /// `pi_vu.C = pi_vu - sum_c beta_vc.C * pi_cu`.
    pub fn residual_total_effect(&self, v: usize, u: usize, cond: &[usize]) -> Result<f64> {
        if u == v || cond.contains(&u) {
            return Err(Error::input("residual total effect needs u != v and u outside C"));
        }
        let beta = self.regression(v, cond)?;
        Ok(self.pi[(v, u)]
            - cond.iter().zip(beta.iter()).map(|(&c, b)| b * self.pi[(c, u)]).sum::<f64>())
    }

    /// Check every edge `u -> v` against every `C` of size at most `max_size`
    /// drawn from the non-descendants of `v` other than `u`.
    pub fn parental_faithfulness(&self, max_size: usize) -> Result<FaithfulnessReport> {
        let mut violations = Vec::new();
        for (u, v) in self.sem.wdag.dag().edges() {
            let ground: Vec<usize> = (0..self.num_nodes())
                .filter(|&c| c != u && c != v && !self.descendants[v].contains(&c))
                .collect();
            for cond in subsets::up_to(&ground, max_size) {
                if self.residual_total_effect(v, u, &cond)?.abs() <= FAITHFULNESS_TOL {
                    violations.push(FaithfulnessViolation { u, v, cond });
                }
            }
        }
        Ok(FaithfulnessReport { violations })
    }

    pub fn is_parentally_faithful(&self, max_size: usize) -> Result<bool> {
        Ok(self.parental_faithfulness(max_size)?.is_faithful())
    }

    /// `E(prod_j L_j)` for linear forms `L_j = sum_k coefs[j][k] eps_k`.
    pub fn linear_form_moment(&self, coefs: &[Vec<f64>]) -> Result<f64> {
        // Group equal forms into (form, exponent) pairs.
        let mut forms: Vec<(&Vec<f64>, usize)> = Vec::new();
        for c in coefs {
            match forms.iter_mut().find(|(f, _)| *f == c) {
                Some(entry) => entry.1 += 1,
                None => forms.push((c, 1)),
            }
        }
        let exps: Vec<usize> = forms.iter().map(|(_, e)| *e).collect();
        let rows: Vec<&[f64]> = forms.iter().map(|(f, _)| f.as_slice()).collect();
        let table = JointMoments::fold(&rows, &exps, &self.sem.errors)?;
        Ok(table.get(&exps))
    }

    /// Bivariate moments `E(Y_v.C^s Y_u^r)` for `s + r <= order`, indexed `[s][r]`.
    pub fn residual_joint_moments(
        &self,
        v: usize,
        u: usize,
        cond: &[usize],
        order: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let a = self.residual_coefficients(v, cond)?;
        let b: Vec<f64> = self.pi.row(u).iter().copied().collect();
        bivariate_moments(&a, &b, &self.sem.errors, order)
    }

    /// Exact `tau^(K)_{v.C -> u}` from the error-moment expansion.
    pub fn population_tau(&self, v: usize, u: usize, cond: &[usize], k: usize) -> Result<f64> {
        check_tau_args(v, u, cond, k)?;
        let m = self.residual_joint_moments(v, u, cond, k)?;
        Ok(m[k - 1][1] * m[2][0] - m[k][0] * m[1][1])
    }

    /// Aggregates for the closed form when `Y_v.C` and `Y_u` are unconfounded,
    /// `None` otherwise. Offsets are taken at order `k`.
    pub fn no_confounding_aggregates(
        &self,
        v: usize,
        u: usize,
        cond: &[usize],
        k: usize,
    ) -> Result<Option<NoConfoundingAggregates>> {
        check_tau_args(v, u, cond, k)?;
        let a = self.residual_coefficients(v, cond)?;
        let pi = a[u];
        let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut agg = NoConfoundingAggregates {
            pi,
            var_residual: 0.0,
            offset_residual: 0.0,
            var_parent: 0.0,
            offset_parent: 0.0,
        };
        for (j, law) in self.sem.errors.iter().enumerate() {
            let bj = self.pi[(u, j)];
            let eta = law
                .offset(k)
                .ok_or_else(|| Error::input(format!("node {} lacks moment {k}", j + 1)))?;
            if bj != 0.0 {
                if (a[j] - pi * bj).abs() > 1e-10 * scale {
                    return Ok(None);
                }
                agg.var_parent += bj * bj * law.variance;
                agg.offset_parent += bj.powi(k as i32) * eta;
            } else {
                agg.var_residual += a[j] * a[j] * law.variance;
                agg.offset_residual += a[j].powi(k as i32) * eta;
            }
        }
        Ok(Some(agg))
    }

    /// Closed-form tau, `None` when the configuration is confounded.
    pub fn population_tau_closed_form(
        &self,
        v: usize,
        u: usize,
        cond: &[usize],
        k: usize,
    ) -> Result<Option<f64>> {
        Ok(self.no_confounding_aggregates(v, u, cond, k)?.map(|g| {
            population_tau_no_confounding(
                g.pi,
                g.var_residual,
                g.var_parent,
                g.offset_residual,
                g.offset_parent,
                k,
            )
        }))
    }
}

pub(crate) fn check_tau_args(v: usize, u: usize, cond: &[usize], k: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::input(format!("moment order must exceed 2, got {k}")));
    }
    if u == v {
        return Err(Error::input("tau needs two distinct nodes"));
    }
    if cond.contains(&u) || cond.contains(&v) {
        return Err(Error::input("conditioning set must exclude u and v"));
    }
    Ok(())
}

/// `Sigma = Pi diag(var) Pi^T`, the population covariance of a model.
pub fn population_covariance(sem: &Sem) -> Result<(DMatrix<f64>, f64)> {
    let pi = total_effects(sem.wdag.weights())?;
    let sigma = covariance_from_effects(&pi, &sem.errors);
    let lmin = linalg::min_eigenvalue(&sigma);
    if !(lmin > 0.0) {
        return Err(Error::numerical("population covariance is not positive definite"));
    }
    Ok((sigma, lmin))
}

fn covariance_from_effects(pi: &DMatrix<f64>, errors: &[ErrorLaw]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        errors.len(),
        errors.iter().map(|e| e.variance),
    ));
    let s = pi * d * pi.transpose();
    // exact symmetry
    (&s + s.transpose()) * 0.5
}

/// `E(A^s B^r)` for `s + r <= order` where `A = sum a_k eps_k`,
/// `B = sum b_k eps_k`, by folding the independent terms one at a time.
pub fn bivariate_moments(
    a: &[f64],
    b: &[f64],
    errors: &[ErrorLaw],
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut acc = vec![vec![0.0; order + 1]; order + 1];
    acc[0][0] = 1.0;
    let binom = binomials(order);
    for (k, law) in errors.iter().enumerate() {
        let (ak, bk) = (a[k], b[k]);
        if ak == 0.0 && bk == 0.0 {
            continue;
        }
        if law.order() < order {
            return Err(Error::input(format!(
                "node {} has moments only up to order {}, need {order}",
                k + 1,
                law.order()
            )));
        }
        let single: Vec<Vec<f64>> = (0..=order)
            .map(|i| {
                (0..=order - i)
                    .map(|j| ak.powi(i as i32) * bk.powi(j as i32) * law.moments[i + j])
                    .collect()
            })
            .collect();
        let mut next = vec![vec![0.0; order + 1]; order + 1];
        for s in 0..=order {
            for r in 0..=order - s {
                let mut tot = 0.0;
                for i in 0..=s {
                    for j in 0..=r {
                        tot += binom[s][i] * binom[r][j] * single[i][j] * acc[s - i][r - j];
                    }
                }
                next[s][r] = tot;
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1.0;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j <= i - 1 { c[i - 1][j] } else { 0.0 };
        }
    }
    c
}

/// Joint moments of several linear forms over all exponent vectors bounded
/// componentwise by a target, built by folding one error at a time.
struct JointMoments {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl JointMoments {
    fn index(dims: &[usize], e: &[usize]) -> usize {
        let mut idx = 0;
        for (d, x) in dims.iter().zip(e) {
            idx = idx * (d + 1) + x;
        }
        idx
    }

    fn unindex(dims: &[usize], mut idx: usize) -> Vec<usize> {
        let mut e = vec![0; dims.len()];
        for j in (0..dims.len()).rev() {
            e[j] = idx % (dims[j] + 1);
            idx /= dims[j] + 1;
        }
        e
    }

    fn fold(rows: &[&[f64]], target: &[usize], errors: &[ErrorLaw]) -> Result<Self> {
        let dims = target.to_vec();
        let size: usize = dims.iter().map(|d| d + 1).product();
        let total: usize = dims.iter().sum();
        let binom = binomials(*dims.iter().max().unwrap_or(&0));
        let mut acc = vec![0.0; size];
        acc[0] = 1.0;
        let exps: Vec<Vec<usize>> = (0..size).map(|i| Self::unindex(&dims, i)).collect();
        for (k, law) in errors.iter().enumerate() {
            let c: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            if c.iter().all(|&x| x == 0.0) {
                continue;
            }
            if law.order() < total {
                return Err(Error::input(format!(
                    "node {} has moments only up to order {}, need {total}",
                    k + 1,
                    law.order()
                )));
            }
            let single: Vec<f64> = exps
                .iter()
                .map(|f| {
                    let deg: usize = f.iter().sum();
                    c.iter().zip(f).map(|(x, &e)| x.powi(e as i32)).product::<f64>()
                        * law.moments[deg]
                })
                .collect();
            let mut next = vec![0.0; size];
            for (i, e) in exps.iter().enumerate() {
                let mut tot = 0.0;
                // iterate over f <= e componentwise
                let mut f = vec![0usize; e.len()];
                loop {
                    let coef: f64 = e.iter().zip(&f).map(|(&ei, &fi)| binom[ei][fi]).product();
                    let rest: Vec<usize> = e.iter().zip(&f).map(|(a, b)| a - b).collect();
                    tot += coef * single[Self::index(&dims, &f)] * acc[Self::index(&dims, &rest)];
                    let mut j = 0;
                    while j < f.len() {
                        if f[j] < e[j] {
                            f[j] += 1;
                            break;
                        }
                        f[j] = 0;
                        j += 1;
                    }
                    if j == f.len() {
                        break;
                    }
                }
                next[i] = tot;
            }
            acc = next;
        }
        Ok(JointMoments { dims, values: acc })
    }

    fn get(&self, e: &[usize]) -> f64 {
        self.values[Self::index(&self.dims, e)]
    }
}
