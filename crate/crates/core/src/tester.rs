//! Canonical testers: distributions over the dual code `D = C^⊥`.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::gf2::{linear_mask_eval, BitWord};
use crate::mc::{self, Estimate};
use crate::rm::{CodePair, CosetTable, DEFAULT_ENUM_BUDGET};

/// Default budget for materializing XOR supports (pair products per step).
pub const DEFAULT_XOR_BUDGET: u128 = 4_000_000;

/// Default budget for exact soundness-curve classification.
pub const DEFAULT_CURVE_BUDGET: u128 = 50_000_000;

/// A tester word with its coefficient vector in `D`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TestWord {
    pub word: BitWord,
    pub coeffs: BitWord,
}

impl TestWord {
    fn zero(pair: &CodePair) -> Self {
        TestWord {
            word: BitWord::zeros(pair.block_len()),
            coeffs: BitWord::zeros(pair.dim()),
        }
    }

    fn xor_assign(&mut self, other: &TestWord) {
        self.word.xor_assign(&other.word);
        self.coeffs.xor_assign(&other.coeffs);
    }
}

#[derive(Clone, Debug)]
pub struct SupportEntry {
    pub word: TestWord,
    pub mass: u128,
}

/// Explicit support with integer masses; probabilities are `mass / total`.
#[derive(Clone, Debug)]
pub struct Support {
    pub entries: Vec<SupportEntry>,
    pub total: u128,
    uniform: bool,
}

impl Support {
    fn new(mut entries: Vec<SupportEntry>) -> Self {
        entries.sort_by(|a, b| a.word.coeffs.cmp(&b.word.coeffs));
        let total = entries.iter().map(|e| e.mass).sum();
        let uniform = entries.windows(2).all(|w| w[0].mass == w[1].mass);
        Support {
            entries,
            total,
            uniform,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total mass of entries whose word pairs to 1 with `alpha`.
    pub fn rejecting_mass(&self, alpha: &BitWord) -> u128 {
        self.entries
            .iter()
            .filter(|e| e.word.word.dot(alpha))
            .map(|e| e.mass)
            .sum()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Rm,
    Explicit,
    Zero,
    Xor { base: Box<CanonicalTester>, reps: u32 },
    Walk { base: Box<CanonicalTester>, time: f64 },
}

/// Serializable description of how a tester was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TesterDescriptor {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub walk_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub base: Option<Box<TesterDescriptor>>,
}

/// A samplable distribution over `D`, optionally with explicit support.
#[derive(Clone, Debug)]
pub struct CanonicalTester {
    pair: Arc<CodePair>,
    kind: Kind,
    support: Option<Arc<Support>>,
    sampler: Option<WeightedIndex<u128>>,
    query_complexity: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum EvalMode {
    Exact,
    Sampled { samples: u64, seed: u64 },
}

impl CanonicalTester {
    /// Uniform distribution over the minimum-weight codewords of `D = RM(n,d)`.
    pub fn rm(pair: Arc<CodePair>) -> Result<Self> {
        Self::rm_with_budget(pair, DEFAULT_ENUM_BUDGET)
    }

    /// Like [`CanonicalTester::rm`], but falls back to a sampling-only tester
    /// (uniform random affine flats) if the support exceeds `budget`.
    pub fn rm_with_budget(pair: Arc<CodePair>, budget: u128) -> Result<Self> {
        let (n, d) = (pair.n, pair.d);
        if d < 1 || d + 2 > n {
            return Err(Error::Precondition(format!(
                "RM tester needs 1 <= d <= n-2, got n={n}, d={d}"
            )));
        }
        let support = match pair.dual.min_weight_words_with_budget(budget) {
            Ok(words) => {
                let entries = words
                    .into_iter()
                    .map(|w| {
                        let coeffs = pair.dual.coefficients(&w)?;
                        Ok(SupportEntry {
                            word: TestWord { word: w, coeffs },
                            mass: 1,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(Arc::new(Support::new(entries)))
            }
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(CanonicalTester {
            query_complexity: 1 << (n - d),
            pair,
            kind: Kind::Rm,
            support,
            sampler: None,
        })
    }

    /// A tester with explicit integer masses. Every word must lie in `D`.
    pub fn from_support(pair: Arc<CodePair>, words: Vec<(BitWord, u128)>) -> Result<Self> {
        if words.is_empty() || words.iter().all(|(_, m)| *m == 0) {
            return Err(Error::Precondition("empty tester support".into()));
        }
        let mut merged: HashMap<BitWord, u128> = HashMap::new();
        for (w, m) in words {
            if m > 0 {
                *merged.entry(w).or_default() += m;
            }
        }
        let entries = merged
            .into_iter()
            .map(|(w, mass)| {
                let coeffs = pair.dual.coefficients(&w)?;
                Ok(SupportEntry {
                    word: TestWord { word: w, coeffs },
                    mass,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_support(pair, Kind::Explicit, Support::new(entries)))
    }

    /// Point mass on the zero word.
    pub fn zero(pair: Arc<CodePair>) -> Self {
        let entry = SupportEntry {
            word: TestWord::zero(&pair),
            mass: 1,
        };
        Self::with_support(pair, Kind::Zero, Support::new(vec![entry]))
    }

    fn with_support(pair: Arc<CodePair>, kind: Kind, support: Support) -> Self {
        let query_complexity = support
            .entries
            .iter()
            .map(|e| e.word.word.weight())
            .max()
            .unwrap_or(0);
        let sampler = if support.uniform {
            None
        } else {
            Some(WeightedIndex::new(support.entries.iter().map(|e| e.mass)).expect("positive masses"))
        };
        CanonicalTester {
            pair,
            kind,
            support: Some(Arc::new(support)),
            sampler,
            query_complexity,
        }
    }

    /// XOR of `reps` independent draws from `base`.
    pub fn xor(base: &CanonicalTester, reps: u32) -> Result<Self> {
        Self::xor_with_budget(base, reps, DEFAULT_XOR_BUDGET)
    }

    pub fn xor_with_budget(base: &CanonicalTester, reps: u32, budget: u128) -> Result<Self> {
        if reps < 1 {
            return Err(Error::Precondition("XOR needs r >= 1".into()));
        }
        let kind = Kind::Xor {
            base: Box::new(base.clone()),
            reps,
        };
        let query_complexity = (base.query_complexity * reps as usize).min(base.pair.block_len());
        if let Some(bs) = &base.support {
            if let Some(support) = convolve_power(bs, reps, budget) {
                let mut t = Self::with_support(base.pair.clone(), kind, support);
                t.query_complexity = t.query_complexity.min(query_complexity);
                return Ok(t);
            }
        }
        Ok(CanonicalTester {
            pair: base.pair.clone(),
            kind,
            support: None,
            sampler: None,
            query_complexity,
        })
    }

    /// Continuous-time walk: XOR of `Poisson(time)` independent draws from `base`.
    pub fn walk(base: &CanonicalTester, time: f64) -> Result<Self> {
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::Precondition(format!("walk time must be >= 0, got {time}")));
        }
        let kind = Kind::Walk {
            base: Box::new(base.clone()),
            time,
        };
        if time == 0.0 {
            let entry = SupportEntry {
                word: TestWord::zero(&base.pair),
                mass: 1,
            };
            return Ok(Self::with_support(base.pair.clone(), kind, Support::new(vec![entry])));
        }
        Ok(CanonicalTester {
            pair: base.pair.clone(),
            kind,
            support: None,
            sampler: None,
            query_complexity: base.pair.block_len(),
        })
    }

    pub fn pair(&self) -> &Arc<CodePair> {
        &self.pair
    }

    pub fn support(&self) -> Option<&Support> {
        self.support.as_deref()
    }

    pub fn query_complexity(&self) -> usize {
        self.query_complexity
    }

    pub fn describe(&self) -> TesterDescriptor {
        let plain = |kind: &str| TesterDescriptor {
            kind: kind.into(),
            r: None,
            walk_time: None,
            base: None,
        };
        match &self.kind {
            Kind::Rm => plain("rm"),
            Kind::Explicit => plain("explicit"),
            Kind::Zero => plain("zero"),
            Kind::Xor { base, reps } => TesterDescriptor {
                kind: "xor".into(),
                r: Some(*reps),
                walk_time: None,
                base: Some(Box::new(base.describe())),
            },
            Kind::Walk { base, time } => TesterDescriptor {
                kind: "walk".into(),
                r: None,
                walk_time: Some(*time),
                base: Some(Box::new(base.describe())),
            },
        }
    }

    /// For XOR and walk testers: the base tester and the map taking a base
    /// eigenvalue to the composed one.
    pub fn composition(&self) -> Result<(&CanonicalTester, Box<dyn Fn(f64) -> f64 + Send + Sync>)> {
        match &self.kind {
            Kind::Xor { base, reps } => {
                let r = *reps as i32;
                Ok((base, Box::new(move |l: f64| l.powi(r))))
            }
            Kind::Walk { base, time } => {
                let t = *time;
                Ok((base, Box::new(move |l: f64| (-t * (1.0 - l)).exp())))
            }
            _ => Err(Error::ExactUnavailable),
        }
    }

    /// One draw from the tester.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TestWord {
        if let Some(s) = &self.support {
            let i = match &self.sampler {
                Some(w) => w.sample(rng),
                None => rng.gen_range(0..s.entries.len()),
            };
            return s.entries[i].word.clone();
        }
        match &self.kind {
            Kind::Rm => self.sample_flat(rng),
            Kind::Xor { base, reps } => {
                let mut acc = base.sample(rng);
                for _ in 1..*reps {
                    acc.xor_assign(&base.sample(rng));
                }
                acc
            }
            Kind::Walk { base, time } => {
                let steps = Poisson::new(*time).expect("positive rate").sample(rng) as u64;
                let mut acc = TestWord::zero(&self.pair);
                for _ in 0..steps {
                    acc.xor_assign(&base.sample(rng));
                }
                acc
            }
            Kind::Explicit | Kind::Zero => unreachable!("explicit testers carry support"),
        }
    }

    /// A uniformly random codimension-`d` affine flat of GF(2)^n.
    fn sample_flat<R: Rng + ?Sized>(&self, rng: &mut R) -> TestWord {
        let (n, d) = (self.pair.n, self.pair.d);
        loop {
            let forms: Vec<usize> = (0..d).map(|_| rng.gen_range(0..1usize << n)).collect();
            if span_rank(&forms) < d {
                continue;
            }
            let mut w = BitWord::ones(1 << n);
            for &a in &forms {
                w.and_assign(&linear_mask_eval(n, a, rng.gen()));
            }
            let coeffs = self.pair.dual.coefficients(&w).expect("flat indicator lies in D");
            return TestWord { word: w, coeffs };
        }
    }

    /// Exact rejection probability as a rational, when the support is explicit
    /// or the tester is an XOR power of such a tester.
    pub fn exact_rejection_ratio(&self, alpha: &BitWord) -> Result<BigRational> {
        self.check_alpha(alpha)?;
        if let Some(s) = &self.support {
            return Ok(BigRational::new(
                BigInt::from(s.rejecting_mass(alpha)),
                BigInt::from(s.total),
            ));
        }
        match &self.kind {
            Kind::Xor { base, reps } => {
                let s = base.exact_rejection_ratio(alpha)?;
                let one = BigRational::one();
                let two = BigRational::from_integer(BigInt::from(2));
                let bias = (&one - &two * s).pow(*reps as i32);
                Ok((one - bias) / two)
            }
            _ => Err(Error::ExactUnavailable),
        }
    }

    /// Exact rejection probability; walks use the Poisson-mixture formula.
    pub fn exact_rejection(&self, alpha: &BitWord) -> Result<f64> {
        self.check_alpha(alpha)?;
        if let Some(s) = &self.support {
            return Ok(s.rejecting_mass(alpha) as f64 / s.total as f64);
        }
        match &self.kind {
            Kind::Xor { base, reps } => {
                let s = base.exact_rejection(alpha)?;
                Ok((1.0 - (1.0 - 2.0 * s).powi(*reps as i32)) / 2.0)
            }
            Kind::Walk { base, time } => {
                let s = base.exact_rejection(alpha)?;
                Ok((1.0 - (-2.0 * time * s).exp()) / 2.0)
            }
            _ => Err(Error::ExactUnavailable),
        }
    }

    pub fn rejection_probability(&self, alpha: &BitWord, mode: EvalMode) -> Result<Estimate> {
        match mode {
            EvalMode::Exact => self.exact_rejection(alpha).map(Estimate::exact),
            EvalMode::Sampled { samples, seed } => {
                self.check_alpha(alpha)?;
                Ok(mc::frequency(samples, seed, |rng| self.sample(rng).word.dot(alpha)))
            }
        }
    }

    fn check_alpha(&self, alpha: &BitWord) -> Result<()> {
        if alpha.len() != self.pair.block_len() {
            return Err(Error::LengthMismatch {
                expected: self.pair.block_len(),
                got: alpha.len(),
            });
        }
        Ok(())
    }

    /// Query probability `E[wt(q)]/N`, exact whenever per-coordinate rejection is.
    pub fn query_probability(&self) -> Result<f64> {
        if matches!(self.kind, Kind::Rm) && self.support.is_none() {
            // The affine group acts transitively on points and preserves the tester.
            return Ok(1.0 / (1u64 << self.pair.d) as f64);
        }
        let len = self.pair.block_len();
        let mut acc = 0.0;
        for i in 0..len {
            acc += self.exact_rejection(&BitWord::unit(len, i))?;
        }
        Ok(acc / len as f64)
    }

    pub fn smoothness_report(&self, sampling: Option<(u64, u64)>) -> Result<SmoothnessReport> {
        match (&self.support, sampling) {
            (Some(s), _) => Ok(exact_smoothness(s, self.pair.block_len())),
            (None, Some((samples, seed))) => Ok(self.sampled_smoothness(samples, seed)),
            (None, None) => Err(Error::ExactUnavailable),
        }
    }

    fn sampled_smoothness(&self, samples: u64, seed: u64) -> SmoothnessReport {
        let len = self.pair.block_len();
        let parts = mc::run_chunks(samples, seed, |rng, count| {
            let mut singles = vec![0u64; len];
            let mut pairs = vec![0u64; len * len];
            for _ in 0..count {
                let s = self.sample(rng).word.support();
                for (a, &i) in s.iter().enumerate() {
                    singles[i] += 1;
                    for &j in &s[a + 1..] {
                        pairs[i * len + j] += 1;
                    }
                }
            }
            (singles, pairs)
        });
        let mut singles = vec![0u64; len];
        let mut pairs = vec![0u64; len * len];
        for (s, p) in parts {
            singles.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            pairs.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        let n = samples as f64;
        let singles_f: Vec<f64> = singles.iter().map(|&c| c as f64 / n).collect();
        let tau = singles_f.iter().sum::<f64>() / len as f64;
        let mut pair_table = vec![vec![0.0; len]; len];
        let mut max_dev: f64 = 0.0;
        for i in 0..len {
            for j in i + 1..len {
                let p = pairs[i * len + j] as f64 / n;
                pair_table[i][j] = p;
                pair_table[j][i] = p;
                max_dev = max_dev.max((p - tau * tau).abs());
            }
        }
        let single_dev = singles_f.iter().map(|p| (p - tau).abs()).fold(0.0, f64::max);
        // Verdicts in sampled mode use a 4-sigma band around the estimate.
        let band = 4.0 * (tau.max(1.0 / n) / n).sqrt();
        SmoothnessReport {
            exact: false,
            samples,
            tau,
            singles: singles_f,
            pairs: pair_table,
            smooth: single_dev <= band,
            two_smooth: max_dev <= band,
            max_single_deviation: single_dev,
            max_pair_deviation: max_dev,
            distinct_pair_values: Vec::new(),
        }
    }

    /// Soundness curve for `k = 0..=k_max`.
    pub fn soundness_curve(&self, k_max: usize, mode: CurveMode) -> Result<Vec<SoundnessPoint>> {
        match mode {
            CurveMode::Exact { budget } => self.exact_curve(k_max, budget),
            CurveMode::Sampled {
                trials,
                samples,
                seed,
            } => self.sampled_curve(k_max, trials, samples, seed),
        }
    }

    fn exact_curve(&self, k_max: usize, budget: u128) -> Result<Vec<SoundnessPoint>> {
        let table = CosetTable::build(&self.pair.tested, k_max, budget)?;
        let mut per_degree: Vec<Option<(f64, BitWord)>> = vec![None; k_max + 1];
        for class in &table.classes {
            let s = self.exact_rejection(&class.leader)?;
            let slot = &mut per_degree[class.degree];
            if slot.as_ref().is_none_or(|(best, _)| s < *best) {
                *slot = Some((s, class.leader.clone()));
            }
        }
        Ok(curve_from_minima(per_degree, CurveKind::Exact))
    }

    fn sampled_curve(
        &self,
        k_max: usize,
        trials: usize,
        samples: u64,
        seed: u64,
    ) -> Result<Vec<SoundnessPoint>> {
        let tested = &self.pair.tested;
        let len = self.pair.block_len();
        let half = self.pair.distance() / 2;
        let mut per_degree: Vec<Option<(f64, BitWord)>> = vec![None; k_max + 1];
        per_degree[0] = Some((0.0, BitWord::zeros(len)));
        let mut rng = mc::stream_rng(seed, u64::MAX);
        for (k, slot) in per_degree.iter_mut().enumerate().skip(1) {
            if k > len {
                break;
            }
            let mut found = 0;
            let mut attempts = 0;
            while found < trials && attempts < 20 * trials {
                attempts += 1;
                let support = rand::seq::index::sample(&mut rng, len, k).into_vec();
                let planted = BitWord::from_support(len, &support);
                // Above half the distance the planted word may sit closer to C.
                if k >= half {
                    match tested.coset_leader(&planted, k) {
                        Ok(rep) if rep.degree == k => {}
                        _ => continue,
                    }
                }
                let shift = BitWord::from_bits((0..tested.dim()).map(|_| rng.gen::<bool>()));
                let alpha = &planted ^ &tested.encode(&shift)?;
                let est = self.rejection_probability(
                    &alpha,
                    EvalMode::Sampled {
                        samples,
                        seed: mc::subseed(seed, (k * 1_000_003 + found) as u64),
                    },
                )?;
                if slot.as_ref().is_none_or(|(best, _)| est.value < *best) {
                    *slot = Some((est.value, alpha));
                }
                found += 1;
            }
        }
        Ok(curve_from_minima(per_degree, CurveKind::Sampled))
    }
}

fn span_rank(vectors: &[usize]) -> usize {
    let mut basis: Vec<usize> = Vec::new();
    for &v in vectors {
        let mut x = v;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x != 0 {
            basis.push(x);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// `reps`-fold XOR convolution of a support, or `None` past the budget.
fn convolve_power(base: &Support, reps: u32, budget: u128) -> Option<Support> {
    let mut current: HashMap<BitWord, (TestWord, u128)> = HashMap::new();
    for e in &base.entries {
        current.insert(e.word.coeffs.clone(), (e.word.clone(), e.mass));
    }
    for _ in 1..reps {
        if check_budget("xor support", (current.len() * base.len()) as u128, budget).is_err() {
            return None;
        }
        let mut next: HashMap<BitWord, (TestWord, u128)> = HashMap::new();
        for (w, m) in current.values() {
            for e in &base.entries {
                let mut x = w.clone();
                x.xor_assign(&e.word);
                let mass = m.checked_mul(e.mass)?;
                let slot = next.entry(x.coeffs.clone()).or_insert((x, 0));
                slot.1 = slot.1.checked_add(mass)?;
            }
        }
        current = next;
    }
    Some(Support::new(
        current
            .into_values()
            .map(|(word, mass)| SupportEntry { word, mass })
            .collect(),
    ))
}

/// Per-coordinate and per-pair marginals of a tester.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub exact: bool,
    pub samples: u64,
    pub tau: f64,
    pub singles: Vec<f64>,
    pub pairs: Vec<Vec<f64>>,
    pub smooth: bool,
    pub two_smooth: bool,
    pub max_single_deviation: f64,
    pub max_pair_deviation: f64,
    /// Distinct exact pair probabilities as reduced fractions (exact mode only).
    pub distinct_pair_values: Vec<String>,
}

fn exact_smoothness(s: &Support, len: usize) -> SmoothnessReport {
    let mut singles = vec![0u128; len];
    let mut pairs = vec![0u128; len * len];
    let mut weight_mass = 0u128;
    for e in &s.entries {
        let sup = e.word.word.support();
        weight_mass += e.mass * sup.len() as u128;
        for (a, &i) in sup.iter().enumerate() {
            singles[i] += e.mass;
            for &j in &sup[a + 1..] {
                pairs[i * len + j] += e.mass;
            }
        }
    }
    let total = BigUint::from(s.total);
    let wm = BigUint::from(weight_mass);
    let n = BigUint::from(len);
    let smooth = singles.iter().all(|&c| BigUint::from(c) * &n == wm);
    // A pair is tau^2 iff pair * N^2 * total == (weight mass)^2.
    let wm2 = &wm * &wm;
    let mut two_smooth = true;
    let mut distinct = std::collections::BTreeSet::new();
    let ratio = |c: u128| BigRational::new(BigInt::from(c), BigInt::from(s.total));
    for i in 0..len {
        for j in i + 1..len {
            let c = pairs[i * len + j];
            if BigUint::from(c) * &n * &n * &total != wm2 {
                two_smooth = false;
            }
            distinct.insert(ratio(c));
        }
    }
    let tau = weight_mass as f64 / (s.total as f64 * len as f64);
    let singles_f: Vec<f64> = singles.iter().map(|&c| c as f64 / s.total as f64).collect();
    let mut table = vec![vec![0.0; len]; len];
    let mut max_dev: f64 = 0.0;
    for i in 0..len {
        for j in i + 1..len {
            let p = pairs[i * len + j] as f64 / s.total as f64;
            table[i][j] = p;
            table[j][i] = p;
            max_dev = max_dev.max((p - tau * tau).abs());
        }
    }
    SmoothnessReport {
        exact: true,
        samples: 0,
        tau,
        max_single_deviation: singles_f.iter().map(|p| (p - tau).abs()).fold(0.0, f64::max),
        singles: singles_f,
        pairs: table,
        smooth,
        two_smooth,
        max_pair_deviation: max_dev,
        distinct_pair_values: distinct.iter().map(|r| r.to_string()).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CurveMode {
    Exact { budget: u128 },
    Sampled { trials: usize, samples: u64, seed: u64 },
}

impl CurveMode {
    pub fn exact() -> Self {
        CurveMode::Exact {
            budget: DEFAULT_CURVE_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Exact,
    Sampled,
}

/// One point of a soundness curve.
///
/// `s_lower` is the minimum over examined words at distance `>= k`. In
/// sampled mode it is a Monte Carlo minimum and so estimates the true
/// minimum from above.
#[derive(Clone, Debug, Serialize)]
pub struct SoundnessPoint {
    pub k: usize,
    pub s_lower: f64,
    /// Minimum over words at distance exactly `k`.
    pub s_at_k: Option<f64>,
    #[serde(rename = "witness_hex", serialize_with = "crate::report::ser_hex_opt")]
    pub witness: Option<BitWord>,
    pub mode: CurveKind,
}

fn curve_from_minima(per_degree: Vec<Option<(f64, BitWord)>>, mode: CurveKind) -> Vec<SoundnessPoint> {
    let mut out = Vec::with_capacity(per_degree.len());
    let mut best: Option<(f64, BitWord)> = None;
    for (k, slot) in per_degree.iter().enumerate().rev() {
        if let Some((s, w)) = slot {
            if best.as_ref().is_none_or(|(b, _)| s < b) {
                best = Some((*s, w.clone()));
            }
        }
        out.push(SoundnessPoint {
            k,
            s_lower: best.as_ref().map_or(f64::NAN, |(s, _)| *s),
            s_at_k: slot.as_ref().map(|(s, _)| *s),
            witness: best.as_ref().map(|(_, w)| w.clone()),
            mode,
        });
    }
    out.reverse();
    out
}

/// Convenience: `rm_tester(n, d)` with its own code pair.
pub fn rm_tester(n: usize, d: usize) -> Result<CanonicalTester> {
    CanonicalTester::rm(Arc::new(CodePair::new(n, d)?))
}

/// Decimal value of a big rational.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn is_zero_ratio(r: &BigRational) -> bool {
    r.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::binomial;

    fn pair(n: usize, d: usize) -> Arc<CodePair> {
        Arc::new(CodePair::new(n, d).unwrap())
    }

    #[test]
    fn rm_tester_examples() {
        let t = rm_tester(5, 2).unwrap();
        let s = t.support().unwrap();
        assert_eq!(s.len(), 620);
        assert!(s.entries.iter().all(|e| e.word.word.weight() == 8));
        assert_eq!(t.query_complexity(), 8);
        assert_eq!(rm_tester(3, 1).unwrap().support().unwrap().len(), 14);
        assert!(rm_tester(3, 2).is_err());
        assert!(rm_tester(4, 0).is_err());
    }

    #[test]
    fn dictator_rejection_is_a_quarter() {
        let t = rm_tester(5, 2).unwrap();
        for i in 0..32 {
            let r = t.exact_rejection_ratio(&BitWord::unit(32, i)).unwrap();
            assert_eq!(r, ratio(1, 4));
        }
        assert_eq!(t.query_probability().unwrap(), 0.25);
    }

    #[test]
    fn codewords_of_c_are_accepted() {
        let t = rm_tester(5, 2).unwrap();
        assert_eq!(t.exact_rejection(&BitWord::zeros(32)).unwrap(), 0.0);
        for g in t.pair().tested.generators().rows() {
            assert_eq!(t.exact_rejection(g).unwrap(), 0.0);
        }
    }

    #[test]
    fn samples_lie_in_the_dual_code() {
        let p = pair(5, 2);
        let base = CanonicalTester::rm(p.clone()).unwrap();
        let flats = CanonicalTester::rm_with_budget(p.clone(), 0).unwrap();
        assert!(flats.support().is_none());
        let testers = vec![
            base.clone(),
            flats,
            CanonicalTester::xor(&base, 3).unwrap(),
            CanonicalTester::walk(&base, 1.5).unwrap(),
            CanonicalTester::zero(p.clone()),
        ];
        let mut rng = mc::stream_rng(11, 0);
        for t in &testers {
            for _ in 0..2000 {
                let q = t.sample(&mut rng);
                assert!(p.dual.contains(&q.word).unwrap());
                assert_eq!(p.dual.encode(&q.coeffs).unwrap(), q.word);
                for g in p.tested.generators().rows() {
                    assert!(!q.word.dot(g));
                }
            }
        }
    }

    #[test]
    fn flat_sampler_is_uniform_over_min_weight_words() {
        let p = pair(4, 1);
        let exact = CanonicalTester::rm(p.clone()).unwrap();
        let flats = CanonicalTester::rm_with_budget(p, 0).unwrap();
        let words: Vec<&BitWord> = exact.support().unwrap().entries.iter().map(|e| &e.word.word).collect();
        let mut counts: HashMap<BitWord, u64> = HashMap::new();
        let mut rng = mc::stream_rng(5, 0);
        let draws = 60_000u64;
        for _ in 0..draws {
            *counts.entry(flats.sample(&mut rng).word).or_default() += 1;
        }
        assert_eq!(counts.len(), words.len());
        let expect = draws as f64 / words.len() as f64;
        let sigma = expect.sqrt();
        for w in words {
            assert!((counts[w] as f64 - expect).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn xor_examples() {
        let base = rm_tester(5, 2).unwrap();
        let once = CanonicalTester::xor(&base, 1).unwrap();
        assert_eq!(once.support().unwrap().len(), 620);
        let twice = CanonicalTester::xor(&base, 2).unwrap();
        let e1 = BitWord::unit(32, 1);
        assert_eq!(twice.exact_rejection_ratio(&e1).unwrap(), ratio(3, 8));
        assert_eq!(twice.support().unwrap().total, 620 * 620);
        let six = CanonicalTester::xor(&base, 6).unwrap();
        assert!(six.support().is_none());
        let s = six.exact_rejection(&e1).unwrap();
        assert!((s - (1.0 - 0.5f64.powi(6)) / 2.0).abs() < 1e-15);
        assert!(CanonicalTester::xor(&base, 0).is_err());
    }

    #[test]
    fn xor_identity_matches_monte_carlo() {
        let base = rm_tester(5, 2).unwrap();
        let t = CanonicalTester::xor(&base, 3).unwrap();
        let mut rng = mc::stream_rng(21, 0);
        for i in 0..20u64 {
            let k = 1 + (i as usize % 5);
            let sup = rand::seq::index::sample(&mut rng, 32, k).into_vec();
            let alpha = BitWord::from_support(32, &sup);
            let exact = t.exact_rejection(&alpha).unwrap();
            let est = t
                .rejection_probability(&alpha, EvalMode::Sampled { samples: 20_000, seed: i })
                .unwrap();
            assert!(est.within(exact, 3.5, 1e-3), "alpha {alpha}: {est:?} vs {exact}");
        }
    }

    #[test]
    fn walk_examples() {
        let base = rm_tester(5, 2).unwrap();
        let still = CanonicalTester::walk(&base, 0.0).unwrap();
        let mut rng = mc::stream_rng(1, 0);
        for _ in 0..100 {
            assert!(still.sample(&mut rng).word.is_zero());
        }
        assert!(CanonicalTester::walk(&base, -1.0).is_err());

        // walk_time = eps * 2^{d+1} with eps = 0.25 at d = 2.
        let time = 0.25 * 8.0;
        let t = CanonicalTester::walk(&base, time).unwrap();
        let e0 = BitWord::unit(32, 0);
        let mu = 1.0 - 2.0 * 0.25;
        let lambda_walk = (-time * (1.0 - mu)).exp();
        assert!((lambda_walk - (-time * 2.0 * 0.25f64).exp()).abs() < 1e-15);
        let s = t.exact_rejection(&e0).unwrap();
        assert!((1.0 - 2.0 * s - lambda_walk).abs() < 1e-15);
        let est = t
            .rejection_probability(&e0, EvalMode::Sampled { samples: 100_000, seed: 9 })
            .unwrap();
        assert!(est.within(s, 3.0, 0.0), "{est:?} vs {s}");
        assert!(t.exact_rejection_ratio(&e0).is_err());
    }

    #[test]
    fn exact_mode_without_support_is_an_error() {
        let flats = CanonicalTester::rm_with_budget(pair(5, 2), 0).unwrap();
        assert_eq!(
            flats.exact_rejection(&BitWord::unit(32, 0)).unwrap_err(),
            Error::ExactUnavailable
        );
        assert!(flats.smoothness_report(None).is_err());
    }

    #[test]
    fn smoothness_of_rm_tester() {
        let t = rm_tester(5, 2).unwrap();
        let rep = t.smoothness_report(None).unwrap();
        assert!(rep.exact && rep.smooth);
        assert!(rep.singles.iter().all(|&p| p == 0.25));
        assert!(!rep.two_smooth);
        assert_eq!(rep.distinct_pair_values, vec!["7/124".to_string()]);

        let z = CanonicalTester::zero(pair(5, 2)).smoothness_report(None).unwrap();
        assert!(z.singles.iter().all(|&p| p == 0.0));
        assert!(z.pairs.iter().flatten().all(|&p| p == 0.0));
        assert!(z.smooth && z.two_smooth);
    }

    #[test]
    fn sampled_smoothness_agrees_with_exact() {
        let t = rm_tester(4, 1).unwrap();
        let flats = CanonicalTester::rm_with_budget(t.pair().clone(), 0).unwrap();
        let exact = t.smoothness_report(None).unwrap();
        let est = flats.smoothness_report(Some((40_000, 3))).unwrap();
        assert!(est.smooth);
        for (a, b) in exact.singles.iter().zip(&est.singles) {
            assert!((a - b).abs() < 0.015);
        }
    }

    #[test]
    fn exact_curve_at_5_2() {
        let t = rm_tester(5, 2).unwrap();
        let curve = t.soundness_curve(4, CurveMode::exact()).unwrap();
        assert_eq!(curve[0].s_lower, 0.0);
        assert_eq!(curve[1].s_at_k, Some(0.25));
        assert!(curve[1].s_lower >= 0.125);
        assert!(curve[2].s_lower >= 0.25);
        for p in &curve {
            let w = p.witness.as_ref().unwrap();
            let rep = t.pair().tested.coset_leader(w, 4).unwrap();
            assert!(rep.degree >= p.k);
            assert!((t.exact_rejection(w).unwrap() - p.s_lower).abs() < 1e-15);
        }
        for w in curve.windows(2) {
            assert!(w[0].s_lower <= w[1].s_lower);
        }
    }

    #[test]
    fn sampled_curve_respects_planted_distance() {
        let t = rm_tester(5, 2).unwrap();
        let exact = t.soundness_curve(3, CurveMode::exact()).unwrap();
        let sampled = t
            .soundness_curve(3, CurveMode::Sampled { trials: 8, samples: 4000, seed: 2 })
            .unwrap();
        for (e, s) in exact.iter().zip(&sampled) {
            assert_eq!(s.mode, CurveKind::Sampled);
            // A sampled minimum cannot fall far below the exact minimum.
            assert!(s.s_lower >= e.s_lower - 0.03, "k={}: {} vs {}", e.k, s.s_lower, e.s_lower);
        }
    }

    #[test]
    fn union_bound_on_classified_words() {
        // s(alpha) <= Δ(alpha, C) * tau for every classified coset.
        let t = rm_tester(5, 2).unwrap();
        let tau = ratio(1, 4);
        let table = CosetTable::build(&t.pair().tested, 4, u128::MAX).unwrap();
        assert_eq!(table.words_classified, (0..=4).map(|w| binomial(32, w)).sum::<u128>());
        for class in &table.classes {
            let s = t.exact_rejection_ratio(&class.leader).unwrap();
            assert!(s <= &tau * BigRational::from_integer(BigInt::from(class.degree)));
        }
    }

    #[test]
    fn explicit_support_merges_and_validates() {
        let p = pair(3, 1);
        let w = p.dual.generators().row(1).clone();
        let t = CanonicalTester::from_support(p.clone(), vec![(w.clone(), 1), (w.clone(), 2)]).unwrap();
        assert_eq!(t.support().unwrap().len(), 1);
        assert_eq!(t.support().unwrap().total, 3);
        let bad = BitWord::unit(8, 0);
        assert!(CanonicalTester::from_support(p, vec![(bad, 1)]).is_err());
    }

    #[test]
    fn descriptors_nest() {
        let base = rm_tester(5, 2).unwrap();
        let t = CanonicalTester::walk(&CanonicalTester::xor(&base, 2).unwrap(), 0.5).unwrap();
        let d = t.describe();
        assert_eq!(d.kind, "walk");
        assert_eq!(d.base.as_ref().unwrap().r, Some(2));
        assert_eq!(d.base.unwrap().base.unwrap().kind, "rm");
    }
}
