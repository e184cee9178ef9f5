//! Spectra and expansion of the Cayley graph `Cay(D, T)`.
//!
//! Vertices are coefficient vectors of `D` (as `u64`, so `dim <= 64`). The
//! eigenvalue of the character `chi_alpha` is `1 - 2 s_T(alpha)`.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::wht_in_place;
use crate::gf2::{BitWord, GF2Matrix};
use crate::mc::{self, Estimate};
use crate::rm::{CodePair, CosetRep, CosetTable};
use crate::tester::{ratio, CanonicalTester, CurveMode, EvalMode};

/// Largest coefficient-space dimension for dense eigenvalue tables.
pub const MAX_DENSE_DIM: usize = 24;

#[derive(Clone, Debug)]
pub struct CayleyGraph {
    pair: Arc<CodePair>,
    tester: CanonicalTester,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenvalueRecord {
    #[serde(serialize_with = "crate::report::ser_hex")]
    pub alpha: BitWord,
    /// Certified coset leader, absent when it is heavier than the search cap.
    pub coset: Option<CosetRep>,
    pub lambda: f64,
    /// Exact value as a reduced fraction when the tester allows it.
    pub lambda_exact: Option<String>,
    pub lambda_walk: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DictatorProfile {
    pub eps: f64,
    pub threshold: f64,
    pub count_above: usize,
    pub records: Vec<EigenvalueRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SetSpec {
    Vertices { vertices: Vec<u64> },
    Random { size: u64, seed: u64 },
    DictatorCut { coordinate: usize },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExpansionOptions {
    /// Largest `|S| * |support|` summed exactly.
    pub budget: u128,
    pub samples: u64,
    pub seed: u64,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            budget: 50_000_000,
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SetExpansionRecord {
    pub set_spec: SetSpec,
    pub size: u64,
    pub mu: f64,
    pub phi: f64,
    pub stderr: f64,
    pub exact: bool,
}

/// Eigenvalue statistics of all characters whose leader has weight exactly `k`.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub k: usize,
    pub count: usize,
    pub min_lambda: f64,
    pub max_lambda: f64,
    /// Soundness `s(k)`: min rejection over classified words at distance `>= k`.
    pub s_k: f64,
    pub one_minus_2s: f64,
    pub min_lambda_walk: Option<f64>,
    pub max_lambda_walk: Option<f64>,
}

impl CayleyGraph {
    pub fn new(tester: CanonicalTester) -> Result<Self> {
        let pair = tester.pair().clone();
        pair.require_small_dim()?;
        Ok(CayleyGraph { pair, tester })
    }

    pub fn pair(&self) -> &Arc<CodePair> {
        &self.pair
    }

    pub fn tester(&self) -> &CanonicalTester {
        &self.tester
    }

    /// Rows map coefficient vectors to codewords of `D`.
    pub fn basis(&self) -> &GF2Matrix {
        self.pair.dual.generators()
    }

    pub fn char_eigenvalue(&self, alpha: &BitWord, mode: EvalMode) -> Result<EigenvalueRecord> {
        let s = self.tester.rejection_probability(alpha, mode)?;
        let lambda_exact = match mode {
            EvalMode::Exact => self
                .tester
                .exact_rejection_ratio(alpha)
                .ok()
                .map(|s| (ratio(1, 1) - s * ratio(2, 1)).to_string()),
            EvalMode::Sampled { .. } => None,
        };
        let w_max = self.pair.distance() / 2;
        let coset = match self.pair.tested.coset_leader(alpha, w_max) {
            Ok(rep) => Some(rep),
            Err(Error::NotFound { .. }) | Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(EigenvalueRecord {
            alpha: alpha.clone(),
            coset,
            lambda: 1.0 - 2.0 * s.value,
            lambda_exact,
            lambda_walk: None,
        })
    }

    /// Eigenvalues of every character, indexed by coefficient-space index `beta`.
    pub fn eigenvalue_table(&self) -> Result<Vec<f64>> {
        eigenvalue_table(&self.tester)
    }

    pub fn dictator_profile(&self, walk_time: Option<f64>) -> Result<DictatorProfile> {
        let len = self.pair.block_len();
        let eps = self.tester.query_complexity() as f64 / len as f64;
        let threshold = 1.0 - 4.0 * eps;
        let mut records = Vec::with_capacity(len);
        for i in 0..len {
            let e = BitWord::unit(len, i);
            let mut rec = self.char_eigenvalue(&e, EvalMode::Exact)?;
            rec.lambda_walk = walk_time.map(|t| (-t * (1.0 - rec.lambda)).exp());
            records.push(rec);
        }
        let count_above = records.iter().filter(|r| r.lambda >= threshold).count();
        Ok(DictatorProfile {
            eps,
            threshold,
            count_above,
            records,
        })
    }

    /// Per-degree eigenvalue ranges from an exact classification up to `k_max`.
    pub fn eigenvalue_profile(
        &self,
        k_max: usize,
        budget: u128,
        walk_time: Option<f64>,
    ) -> Result<Vec<ProfileRow>> {
        let table = CosetTable::build(&self.pair.tested, k_max, budget)?;
        let curve = self
            .tester
            .soundness_curve(k_max, CurveMode::Exact { budget })?;
        let mut rows: Vec<ProfileRow> = (0..=k_max)
            .map(|k| ProfileRow {
                k,
                count: 0,
                min_lambda: f64::INFINITY,
                max_lambda: f64::NEG_INFINITY,
                s_k: curve[k].s_lower,
                one_minus_2s: 1.0 - 2.0 * curve[k].s_lower,
                min_lambda_walk: None,
                max_lambda_walk: None,
            })
            .collect();
        for class in &table.classes {
            let lambda = 1.0 - 2.0 * self.tester.exact_rejection(&class.leader)?;
            let row = &mut rows[class.degree];
            row.count += 1;
            row.min_lambda = row.min_lambda.min(lambda);
            row.max_lambda = row.max_lambda.max(lambda);
        }
        if let Some(t) = walk_time {
            for row in rows.iter_mut().filter(|r| r.count > 0) {
                row.min_lambda_walk = Some((-t * (1.0 - row.min_lambda)).exp());
                row.max_lambda_walk = Some((-t * (1.0 - row.max_lambda)).exp());
            }
        }
        Ok(rows)
    }

    /// Codeword coordinate `i` of vertex `x`, as a linear functional on coefficients.
    fn cut_functional(&self, coordinate: usize) -> u64 {
        let mut f = 0u64;
        for (j, row) in self.basis().rows().iter().enumerate() {
            if row.get(coordinate) {
                f |= 1 << j;
            }
        }
        f
    }

    pub fn expansion(&self, set: &SetSpec, opts: ExpansionOptions) -> Result<SetExpansionRecord> {
        let dim = self.pair.dim();
        let order: u128 = 1u128 << dim;
        if let SetSpec::DictatorCut { coordinate } = set {
            let len = self.pair.block_len();
            if *coordinate >= len {
                return Err(Error::Precondition(format!("coordinate {coordinate} >= {len}")));
            }
            let functional = self.cut_functional(*coordinate);
            if functional == 0 {
                return Err(Error::Precondition("cut is empty".into()));
            }
            // The step q leaves S exactly when it flips bit i of the codeword.
            let e = BitWord::unit(len, *coordinate);
            let (phi, stderr, exact) = match self.tester.exact_rejection(&e) {
                Ok(p) => (p, 0.0, true),
                Err(Error::ExactUnavailable) => {
                    let est = self.tester.rejection_probability(
                        &e,
                        EvalMode::Sampled {
                            samples: opts.samples,
                            seed: opts.seed,
                        },
                    )?;
                    (est.value, est.stderr, false)
                }
                Err(e) => return Err(e),
            };
            return Ok(SetExpansionRecord {
                set_spec: set.clone(),
                size: (order / 2) as u64,
                mu: 0.5,
                phi,
                stderr,
                exact,
            });
        }
        let members = self.materialize_set(set)?;
        let size = members.len() as u128;
        if size == 0 || size >= order {
            return Err(Error::Precondition(format!(
                "set must be nonempty and proper, has {size} of {order} vertices"
            )));
        }
        let mu = size as f64 / order as f64;
        let lookup: HashSet<u64> = members.iter().copied().collect();
        if let Some(support) = self.tester.support() {
            if size * support.len() as u128 <= opts.budget {
                let mut leaving = 0u128;
                for &u in &members {
                    for e in &support.entries {
                        if !lookup.contains(&(u ^ e.word.coeffs.as_u64())) {
                            leaving += e.mass;
                        }
                    }
                }
                return Ok(SetExpansionRecord {
                    set_spec: set.clone(),
                    size: size as u64,
                    mu,
                    phi: leaving as f64 / (size * support.total) as f64,
                    stderr: 0.0,
                    exact: true,
                });
            }
        }
        let est = mc::frequency(opts.samples, opts.seed, |rng| {
            let u = members[rng.gen_range(0..members.len())];
            let q = self.tester.sample(rng).coeffs.as_u64();
            !lookup.contains(&(u ^ q))
        });
        Ok(SetExpansionRecord {
            set_spec: set.clone(),
            size: size as u64,
            mu,
            phi: est.value,
            stderr: est.stderr,
            exact: false,
        })
    }

    /// Sorted, deduplicated members of an explicit or random set.
    pub fn materialize_set(&self, set: &SetSpec) -> Result<Vec<u64>> {
        let dim = self.pair.dim();
        let order: u128 = 1u128 << dim;
        let mut out: Vec<u64> = match set {
            SetSpec::Vertices { vertices } => {
                if let Some(&bad) = vertices.iter().find(|&&v| v as u128 >= order) {
                    return Err(Error::Precondition(format!("vertex {bad:#x} outside 2^{dim}")));
                }
                vertices.clone()
            }
            SetSpec::Random { size, seed } => {
                if *size as u128 >= order || *size == 0 {
                    return Err(Error::Precondition(format!(
                        "random set size {size} must be in 1..2^{dim}"
                    )));
                }
                let mut rng = mc::stream_rng(*seed, 0);
                let mut chosen = HashSet::with_capacity(*size as usize);
                let mut list = Vec::with_capacity(*size as usize);
                while list.len() < *size as usize {
                    let v: u64 = if dim == 64 { rng.gen() } else { rng.gen_range(0..1u64 << dim) };
                    if chosen.insert(v) {
                        list.push(v);
                    }
                }
                list
            }
            SetSpec::DictatorCut { coordinate } => {
                if dim > 24 {
                    return Err(Error::BudgetExceeded {
                        what: "dictator cut materialization",
                        needed: order,
                        budget: 1 << 24,
                    });
                }
                let f = self.cut_functional(*coordinate);
                (0..1u64 << dim).filter(|x| (x & f).count_ones() & 1 == 1).collect()
            }
        };
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Dense eigenvalue table `lambda[beta]` over all characters of `D`.
pub fn eigenvalue_table(tester: &CanonicalTester) -> Result<Vec<f64>> {
    let dim = tester.pair().dim();
    if dim > MAX_DENSE_DIM {
        return Err(Error::BudgetExceeded {
            what: "dense eigenvalue table",
            needed: 1u128 << dim,
            budget: 1u128 << MAX_DENSE_DIM,
        });
    }
    if let Some(s) = tester.support() {
        let mut mass = vec![0.0f64; 1 << dim];
        for e in &s.entries {
            mass[e.word.coeffs.as_u64() as usize] += e.mass as f64 / s.total as f64;
        }
        wht_in_place(&mut mass);
        return Ok(mass);
    }
    let (base, f) = tester.composition()?;
    Ok(eigenvalue_table(base)?.into_iter().map(f).collect())
}

/// Hypercontractivity check parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HyperOptions {
    pub ell: usize,
    pub trials: usize,
    pub sparsity: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperTrial {
    pub e2: f64,
    pub e4_dual: f64,
    pub e4_cube: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperReport {
    pub n: usize,
    pub d: usize,
    pub ell: usize,
    pub sparsity: usize,
    pub max_abs_diff: f64,
    pub max_ratio: f64,
    pub bound: f64,
    pub identical: bool,
    pub within_bound: bool,
    pub trials: Vec<HyperTrial>,
}

/// A random sparse function `Σ a_j chi_{alpha_j}` with `1 <= wt(alpha_j) <= ell`.
pub fn random_sparse_characters<R: Rng + ?Sized>(
    len: usize,
    ell: usize,
    sparsity: usize,
    rng: &mut R,
) -> Vec<(BitWord, f64)> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(sparsity);
    while out.len() < sparsity {
        let w = rng.gen_range(1..=ell);
        let sup = rand::seq::index::sample(rng, len, w).into_vec();
        let alpha = BitWord::from_support(len, &sup);
        if seen.insert(alpha.clone()) {
            out.push((alpha, rng.gen_range(-1.0..1.0)));
        }
    }
    out
}

/// Fourth moment of `Σ a_j chi_j` from pairwise-known sums `s_i`: the
/// quadruple `(i,j,k,l)` contributes when `s_i ^ s_j ^ s_k ^ s_l == 0`.
pub fn fourth_moment(terms: &[(BitWord, f64)]) -> f64 {
    let m = terms.len();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let ij = &terms[i].0 ^ &terms[j].0;
            for k in 0..m {
                let ijk = &ij ^ &terms[k].0;
                for l in 0..m {
                    if ijk == terms[l].0 {
                        total += terms[i].1 * terms[j].1 * terms[k].1 * terms[l].1;
                    }
                }
            }
        }
    }
    total
}

pub fn hypercontractivity_check(pair: &CodePair, opts: HyperOptions) -> Result<HyperReport> {
    let big_d = pair.distance();
    if 4 * opts.ell + 1 >= big_d {
        return Err(Error::Precondition(format!(
            "need 4*ell < D-1, got ell={} with D={big_d}",
            opts.ell
        )));
    }
    if opts.ell == 0 || opts.sparsity == 0 {
        return Err(Error::Precondition("ell and sparsity must be positive".into()));
    }
    let len = pair.block_len();
    let mut rng = mc::stream_rng(opts.seed, 0);
    let mut trials = Vec::with_capacity(opts.trials);
    for _ in 0..opts.trials {
        let terms = random_sparse_characters(len, opts.ell, opts.sparsity, &mut rng);
        // Over D the characters multiply through their syndromes.
        let dual_terms: Vec<(BitWord, f64)> = terms
            .iter()
            .map(|(a, c)| Ok((pair.tested.syndrome(a)?, *c)))
            .collect::<Result<_>>()?;
        let e2 = terms.iter().map(|(_, c)| c * c).sum();
        trials.push(HyperTrial {
            e2,
            e4_dual: fourth_moment(&dual_terms),
            e4_cube: fourth_moment(&terms),
        });
    }
    let bound = 9f64.powi(opts.ell as i32);
    let max_abs_diff = trials
        .iter()
        .map(|t| (t.e4_dual - t.e4_cube).abs())
        .fold(0.0, f64::max);
    let max_ratio = trials
        .iter()
        .map(|t| t.e4_dual / (t.e2 * t.e2))
        .fold(0.0, f64::max);
    Ok(HyperReport {
        n: pair.n,
        d: pair.d,
        ell: opts.ell,
        sparsity: opts.sparsity,
        identical: trials.iter().all(|t| t.e4_dual == t.e4_cube),
        within_bound: max_ratio <= bound,
        max_abs_diff,
        max_ratio,
        bound,
        trials,
    })
}

/// Small-set expansion lower bound `2 s(k) - 3^k sqrt(mu)`.
pub fn sse_lower_bound(s_k: f64, k: usize, mu: f64) -> f64 {
    2.0 * s_k - 3f64.powi(k as i32) * mu.sqrt()
}

/// Eigenvalue estimate of `chi_alpha` by sampling the tester directly.
pub fn sampled_eigenvalue(tester: &CanonicalTester, alpha: &BitWord, samples: u64, seed: u64) -> Result<Estimate> {
    let s = tester.rejection_probability(alpha, EvalMode::Sampled { samples, seed })?;
    Ok(Estimate {
        value: 1.0 - 2.0 * s.value,
        stderr: 2.0 * s.stderr,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tester::rm_tester;

    fn graph(n: usize, d: usize) -> CayleyGraph {
        CayleyGraph::new(rm_tester(n, d).unwrap()).unwrap()
    }

    #[test]
    fn char_eigenvalue_examples() {
        let g = graph(5, 2);
        let zero = g.char_eigenvalue(&BitWord::zeros(32), EvalMode::Exact).unwrap();
        assert_eq!(zero.lambda, 1.0);
        assert_eq!(zero.coset.unwrap().degree, 0);
        let e = g.char_eigenvalue(&BitWord::unit(32, 4), EvalMode::Exact).unwrap();
        assert_eq!(e.lambda, 0.5);
        assert_eq!(e.lambda_exact.as_deref(), Some("1/2"));
        assert_eq!(e.coset.unwrap().degree, 1);
    }

    #[test]
    fn spectrum_bound_by_curve() {
        let g = graph(5, 2);
        let curve = g.tester().soundness_curve(4, CurveMode::exact()).unwrap();
        let table = CosetTable::build(&g.pair().tested, 4, u128::MAX).unwrap();
        for class in &table.classes {
            let lambda = 1.0 - 2.0 * g.tester().exact_rejection(&class.leader).unwrap();
            assert!((-1.0..=1.0).contains(&lambda));
            for k in 0..=class.degree {
                assert!(lambda <= 1.0 - 2.0 * curve[k].s_lower + 1e-15);
            }
        }
    }

    #[test]
    fn table_matches_characters() {
        let g = graph(5, 2);
        let table = g.eigenvalue_table().unwrap();
        assert_eq!(table[0], 1.0);
        let mut rng = mc::stream_rng(4, 0);
        for _ in 0..50 {
            let beta = BitWord::from_u64(16, rng.gen_range(0..1u64 << 16));
            let alpha = g.pair().lift(&beta).unwrap();
            let direct = 1.0 - 2.0 * g.tester().exact_rejection(&alpha).unwrap();
            assert!((table[beta.as_u64() as usize] - direct).abs() < 1e-12);
        }
        let xor = CayleyGraph::new(CanonicalTester::xor(g.tester(), 6).unwrap()).unwrap();
        let xt = xor.eigenvalue_table().unwrap();
        for b in [1usize, 77, 4095] {
            assert!((xt[b] - table[b].powi(6)).abs() < 1e-12);
        }
    }

    #[test]
    fn dictator_profiles() {
        for (n, d) in [(5, 2), (6, 2)] {
            let g = graph(n, d);
            let p = g.dictator_profile(Some(2.0)).unwrap();
            assert_eq!(p.records.len(), 1 << n);
            assert!(p.records.iter().all(|r| r.lambda == 0.5));
            assert!(p.count_above >= (1 << n) / 2);
            for r in &p.records {
                assert!((r.lambda_walk.unwrap() - (-2.0 * 0.5f64).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dictator_cut_expansion() {
        let g = graph(5, 2);
        let spec = SetSpec::DictatorCut { coordinate: 3 };
        let closed = g.expansion(&spec, ExpansionOptions::default()).unwrap();
        assert_eq!((closed.phi, closed.mu, closed.exact), (0.25, 0.5, true));
        // The same set summed exactly over its members.
        let members = g.materialize_set(&spec).unwrap();
        assert_eq!(members.len(), 1 << 15);
        let explicit = SetSpec::Vertices { vertices: members };
        let summed = g.expansion(&explicit, ExpansionOptions::default()).unwrap();
        assert!(summed.exact);
        assert!((summed.phi - 0.25).abs() < 1e-12);
    }

    #[test]
    fn expansion_guards() {
        let g = graph(5, 2);
        let empty = SetSpec::Vertices { vertices: vec![] };
        assert!(g.expansion(&empty, ExpansionOptions::default()).is_err());
        let full = SetSpec::Random { size: 1 << 16, seed: 0 };
        assert!(g.expansion(&full, ExpansionOptions::default()).is_err());
        let all = SetSpec::Vertices { vertices: (0..1 << 16).collect() };
        assert!(g.expansion(&all, ExpansionOptions::default()).is_err());
    }

    #[test]
    fn sampled_expansion_matches_exact() {
        let g = graph(5, 2);
        let spec = SetSpec::Random { size: 300, seed: 8 };
        let exact = g.expansion(&spec, ExpansionOptions::default()).unwrap();
        let opts = ExpansionOptions { budget: 0, samples: 60_000, seed: 1 };
        let est = g.expansion(&spec, opts).unwrap();
        assert!(!est.exact);
        assert!((est.phi - exact.phi).abs() <= 4.0 * est.stderr + 1e-9);
    }

    #[test]
    fn small_sets_expand_per_hypercontractive_bound() {
        let base = rm_tester(5, 2).unwrap();
        let g = CayleyGraph::new(CanonicalTester::xor(&base, 6).unwrap()).unwrap();
        let curve = g.tester().soundness_curve(4, CurveMode::exact()).unwrap();
        for (i, size) in [4u64, 16, 64].into_iter().enumerate() {
            let spec = SetSpec::Random { size, seed: i as u64 };
            let rec = g
                .expansion(&spec, ExpansionOptions { budget: 0, samples: 20_000, seed: 3 })
                .unwrap();
            for k in 1..=3 {
                let bound = sse_lower_bound(curve[k].s_lower, k, rec.mu);
                assert!(rec.phi + 3.0 * rec.stderr >= bound, "size {size} k {k}");
            }
        }
    }

    #[test]
    fn hyper_examples() {
        let pair = CodePair::new(6, 3).unwrap();
        let single = vec![(BitWord::unit(64, 3), 1.0)];
        assert_eq!(fourth_moment(&single), 1.0);
        let two = vec![(BitWord::unit(64, 3), 1.0), (BitWord::unit(64, 9), 1.0)];
        // Quadruples with an even count of each character: 2 + 3 * 2 = 8.
        assert_eq!(fourth_moment(&two), 8.0);
        let rep = hypercontractivity_check(
            &pair,
            HyperOptions { ell: 3, trials: 5, sparsity: 6, seed: 1 },
        )
        .unwrap();
        assert!(rep.identical && rep.within_bound);
        assert!(hypercontractivity_check(
            &pair,
            HyperOptions { ell: 4, trials: 1, sparsity: 2, seed: 1 }
        )
        .is_err());
    }

    #[test]
    fn quadruple_identity_matches_vertex_enumeration() {
        // At (5,2) with ell = 1, sum f^4 over all 2^16 vertices directly.
        let pair = CodePair::new(5, 2).unwrap();
        let mut rng = mc::stream_rng(17, 0);
        for _ in 0..3 {
            let terms = random_sparse_characters(32, 1, 5, &mut rng);
            let betas: Vec<u64> = terms.iter().map(|(a, _)| pair.char_index(a).unwrap().as_u64()).collect();
            let mut e4 = 0.0;
            for x in 0..1u64 << 16 {
                let f: f64 = terms
                    .iter()
                    .zip(&betas)
                    .map(|((_, c), b)| if (x & b).count_ones() % 2 == 0 { *c } else { -c })
                    .sum();
                e4 += f.powi(4);
            }
            e4 /= 65536.0;
            let dual: Vec<(BitWord, f64)> =
                terms.iter().map(|(a, c)| (pair.char_index(a).unwrap(), *c)).collect();
            assert!((fourth_moment(&dual) - e4).abs() < 1e-9);
        }
    }
}
