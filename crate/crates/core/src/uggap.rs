//! Max-2Lin instances built from a code and its canonical tester, with the
//! implicit vector solution, labeling evaluation and the soundness bound.
//!
//! Vertices are coefficient vectors of `D = RM(n,d)` packed into `u64`;
//! labels and shifts are Hadamard coefficient masks in `[0, 2^n)`.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::gf2::BitWord;
use crate::mc::{self, Estimate};
use crate::rm::{CodePair, HadamardCode};
use crate::tester::{ratio_to_f64, CanonicalTester, CurveKind, SoundnessPoint, TesterDescriptor};

/// One constraint `ℓ(u) + ℓ(v) = shift` over `GF(2)^t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub u: u64,
    pub v: u64,
    pub shift: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedConstraint {
    pub constraint: Constraint,
    pub weight: BigRational,
}

/// A Max-2Lin instance with an explicit constraint list.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterializedInstance {
    pub group_bits: usize,
    pub num_vars: u64,
    pub constraints: Vec<WeightedConstraint>,
}

fn low_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// The verifier's constraint distribution: draw `c ∈ D`, `h, h' ∈ H`, `q` from
/// the tester, and emit `(c+q+h, c+h', h+h')`.
#[derive(Clone, Debug)]
pub struct GammaInstance {
    pair: Arc<CodePair>,
    tester: CanonicalTester,
    hadamard: HadamardCode,
    /// Coefficient index in `D` of the monomial `x_i`.
    linear_index: Vec<usize>,
}

impl GammaInstance {
    pub fn new(tester: CanonicalTester) -> Result<Self> {
        let pair = tester.pair().clone();
        pair.require_small_dim()?;
        let n = pair.n;
        let hadamard = HadamardCode::new(n)?;
        let linear_index = (0..n)
            .map(|i| {
                pair.dual.monomial_index(1 << i).ok_or_else(|| {
                    Error::Precondition(format!("{} lacks linear monomials", pair.dual.name()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GammaInstance {
            pair,
            tester,
            hadamard,
            linear_index,
        })
    }

    pub fn pair(&self) -> &Arc<CodePair> {
        &self.pair
    }

    pub fn tester(&self) -> &CanonicalTester {
        &self.tester
    }

    pub fn hadamard(&self) -> &HadamardCode {
        &self.hadamard
    }

    pub fn group_bits(&self) -> usize {
        self.pair.n
    }

    /// Alphabet size `R = |H| = 2^n`.
    pub fn alphabet_size(&self) -> u64 {
        1 << self.pair.n
    }

    pub fn num_vars_log2(&self) -> usize {
        self.pair.dim()
    }

    pub fn vertex_mask(&self) -> u64 {
        low_mask(self.pair.dim())
    }

    /// Coefficient vector of the Hadamard word `a` inside `D`.
    pub fn hadamard_coeffs(&self, a: u64) -> u64 {
        self.linear_index
            .iter()
            .enumerate()
            .filter(|(i, _)| a >> i & 1 == 1)
            .fold(0, |acc, (_, &j)| acc | 1 << j)
    }

    /// Splits `c` into its representative modulo `H` (linear part cleared) and
    /// the Hadamard mask that was removed.
    pub fn split_hadamard(&self, c: u64) -> (u64, u64) {
        let mut rep = c;
        let mut a = 0;
        for (i, &j) in self.linear_index.iter().enumerate() {
            if c >> j & 1 == 1 {
                rep &= !(1 << j);
                a |= 1 << i;
            }
        }
        (rep, a)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Constraint {
        let c = rng.gen::<u64>() & self.vertex_mask();
        let a = rng.gen_range(0..self.alphabet_size());
        let b = rng.gen_range(0..self.alphabet_size());
        let q = self.tester.sample(rng).coeffs.as_u64();
        Constraint {
            u: c ^ q ^ self.hadamard_coeffs(a),
            v: c ^ self.hadamard_coeffs(b),
            shift: a ^ b,
        }
    }

    /// Enumerates every verifier outcome when
    /// `|D| · |H|^2 · |support|` is at most `budget`.
    pub fn materialize(&self, budget: u128) -> Result<MaterializedInstance> {
        let support = self.tester.support().ok_or(Error::ExactUnavailable)?;
        let dim = self.pair.dim();
        let r = self.alphabet_size() as u128;
        let needed = (1u128 << dim)
            .saturating_mul(r * r)
            .saturating_mul(support.len() as u128);
        check_budget("instance materialization", needed, budget)?;
        let mut counts: HashMap<Constraint, u128> = HashMap::new();
        for c in 0..1u64 << dim {
            for a in 0..r as u64 {
                let ha = self.hadamard_coeffs(a);
                for b in 0..r as u64 {
                    let v = c ^ self.hadamard_coeffs(b);
                    for e in &support.entries {
                        let key = Constraint {
                            u: c ^ ha ^ e.word.coeffs.as_u64(),
                            v,
                            shift: a ^ b,
                        };
                        *counts.entry(key).or_default() += e.mass;
                    }
                }
            }
        }
        let total = BigInt::from(support.total) * BigInt::from(r * r) * (BigInt::from(1u8) << dim);
        let mut constraints: Vec<WeightedConstraint> = counts
            .into_iter()
            .map(|(constraint, m)| WeightedConstraint {
                constraint,
                weight: BigRational::new(BigInt::from(m), total.clone()),
            })
            .collect();
        constraints.sort_by_key(|x| x.constraint);
        Ok(MaterializedInstance {
            group_bits: self.group_bits(),
            num_vars: 1 << dim,
            constraints,
        })
    }

    pub fn descriptor(&self, seed: u64) -> SamplerDescriptor {
        SamplerDescriptor {
            n: self.pair.n,
            d: self.pair.d,
            tester: self.tester.describe(),
            seed,
        }
    }

    /// Labeling with `ℓ(c + h_a) = ℓ(c) + a` built from values on
    /// representatives modulo `H`.
    pub fn folded(&self, base: Labeling) -> Labeling {
        Labeling::Folded {
            linear_index: self.linear_index.clone(),
            base: Box::new(base),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerDescriptor {
    pub n: usize,
    pub d: usize,
    pub tester: TesterDescriptor,
    pub seed: u64,
}

impl MaterializedInstance {
    pub fn total_weight(&self) -> BigRational {
        self.constraints
            .iter()
            .fold(BigRational::zero(), |acc, c| acc + &c.weight)
    }

    /// Text form: a `max2lin` header, then `u v shift_hex weight` per line
    /// with weights as reduced fractions.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        writeln!(out, "max2lin t={} vars={}", self.group_bits, self.num_vars).map_err(io)?;
        let width = self.group_bits.div_ceil(4).max(1);
        for wc in &self.constraints {
            let c = wc.constraint;
            writeln!(out, "{} {} {:0width$x} {}", c.u, c.v, c.shift, wc.weight).map_err(io)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty instance".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("max2lin") {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let mut group_bits = None;
        let mut num_vars = None;
        for f in fields {
            match f.split_once('=') {
                Some(("t", v)) => group_bits = v.parse().ok(),
                Some(("vars", v)) => num_vars = v.parse().ok(),
                _ => return Err(Error::Parse(format!("bad header field {f:?}"))),
            }
        }
        let (group_bits, num_vars): (usize, u64) = group_bits
            .zip(num_vars)
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
        let mut constraints = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("bad constraint line {line:?}"));
            if parts.len() != 4 {
                return Err(bad());
            }
            let u: u64 = parts[0].parse().map_err(|_| bad())?;
            let v: u64 = parts[1].parse().map_err(|_| bad())?;
            let shift = u64::from_str_radix(parts[2], 16).map_err(|_| bad())?;
            let weight = BigRational::from_str(parts[3]).map_err(|_| bad())?;
            if u >= num_vars || v >= num_vars || shift & !low_mask(group_bits) != 0 {
                return Err(bad());
            }
            constraints.push(WeightedConstraint {
                constraint: Constraint { u, v, shift },
                weight,
            });
        }
        Ok(MaterializedInstance {
            group_bits,
            num_vars,
            constraints,
        })
    }
}

/// Assignment of labels in `GF(2)^t` to vertices.
#[derive(Clone, Debug, PartialEq)]
pub enum Labeling {
    Constant(u64),
    Table(Vec<u64>),
    /// A seeded hash of the vertex, reduced to `bits` bits.
    Hash { seed: u64, bits: usize },
    Folded {
        linear_index: Vec<usize>,
        base: Box<Labeling>,
    },
    /// `ℓ(c) + offset`.
    Shifted { base: Box<Labeling>, offset: u64 },
}

impl Labeling {
    pub fn label(&self, c: u64) -> u64 {
        match self {
            Labeling::Constant(h) => *h,
            Labeling::Table(t) => t[c as usize],
            Labeling::Hash { seed, bits } => mc::subseed(*seed, c) & low_mask(*bits),
            Labeling::Folded { linear_index, base } => {
                let mut rep = c;
                let mut a = 0;
                for (i, &j) in linear_index.iter().enumerate() {
                    if c >> j & 1 == 1 {
                        rep &= !(1 << j);
                        a |= 1 << i;
                    }
                }
                base.label(rep) ^ a
            }
            Labeling::Shifted { base, offset } => base.label(c) ^ offset,
        }
    }

    pub fn satisfies(&self, c: &Constraint) -> bool {
        self.label(c.u) ^ self.label(c.v) == c.shift
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelingValue {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
}

impl LabelingValue {
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + 1e-12
    }
}

pub fn evaluate_exact(inst: &MaterializedInstance, labeling: &Labeling) -> (BigRational, LabelingValue) {
    let value = inst
        .constraints
        .par_iter()
        .filter(|wc| labeling.satisfies(&wc.constraint))
        .map(|wc| wc.weight.clone())
        .reduce(BigRational::zero, |a, b| a + b);
    let report = LabelingValue {
        value: ratio_to_f64(&value),
        stderr: 0.0,
        samples: 0,
        exact: Some(value.to_string()),
    };
    (value, report)
}

pub fn evaluate_sampled(inst: &GammaInstance, labeling: &Labeling, samples: u64, seed: u64) -> LabelingValue {
    let e = mc::frequency(samples, seed, |rng| labeling.satisfies(&inst.sample(rng)));
    LabelingValue {
        value: e.value,
        stderr: e.stderr,
        samples,
        exact: None,
    }
}

#[derive(Clone, Debug)]
pub struct SymmetricSearch {
    pub best: Labeling,
    pub value: BigRational,
    pub best_folded: BigRational,
    pub best_invariant: BigRational,
    pub searched: u128,
}

/// Exhaustive search over labelings determined by their values on
/// representatives modulo `H`: the folded ones `ℓ(c + h_a) = ℓ(c) + a` and
/// the `H`-invariant ones `ℓ(c + h_a) = ℓ(c)`.
pub fn best_symmetric_labeling(
    gamma: &GammaInstance,
    inst: &MaterializedInstance,
    budget: u128,
) -> Result<SymmetricSearch> {
    let reps = 1u32 << (gamma.pair.dim() - gamma.pair.n);
    let r = gamma.alphabet_size() as u128;
    let count = r.checked_pow(reps).unwrap_or(u128::MAX);
    check_budget(
        "symmetric labeling search",
        count
            .saturating_mul(2)
            .saturating_mul(inst.constraints.len() as u128),
        budget,
    )?;
    let linear_bits = gamma.hadamard_coeffs(gamma.alphabet_size() - 1);
    let rep_list: Vec<u64> = (0..1u64 << gamma.pair.dim())
        .filter(|c| c & linear_bits == 0)
        .collect();
    let invariant_index = linear_bits;
    let mut folded: Option<(Labeling, BigRational)> = None;
    let mut invariant: Option<(Labeling, BigRational)> = None;
    for code in 0..count {
        let mut table = vec![0u64; 1 << gamma.pair.dim()];
        let mut x = code;
        for &rep in &rep_list {
            table[rep as usize] = (x % r) as u64;
            x /= r;
        }
        let f = gamma.folded(Labeling::Table(table.clone()));
        let (fv, _) = evaluate_exact(inst, &f);
        if folded.as_ref().is_none_or(|(_, b)| fv > *b) {
            folded = Some((f, fv));
        }
        for c in 0..table.len() {
            table[c] = table[c & !(invariant_index as usize)];
        }
        let g = Labeling::Table(table);
        let (gv, _) = evaluate_exact(inst, &g);
        if invariant.as_ref().is_none_or(|(_, b)| gv > *b) {
            invariant = Some((g, gv));
        }
    }
    let (f, fv) = folded.ok_or_else(|| Error::Precondition("empty labeling family".into()))?;
    let (g, gv) = invariant.expect("same loop as the folded family");
    let (best, value) = if fv >= gv { (f, fv.clone()) } else { (g, gv.clone()) };
    Ok(SymmetricSearch {
        best,
        value,
        best_folded: fv,
        best_invariant: gv,
        searched: 2 * count,
    })
}

/// The implicit vector solution `b_{c,h} = (-1)^{c+h} ⊗ (-1)^{c+h}`.
#[derive(Clone, Debug)]
pub struct ImplicitSdp {
    gamma: GammaInstance,
}

impl ImplicitSdp {
    pub fn new(gamma: GammaInstance) -> Self {
        ImplicitSdp { gamma }
    }

    pub fn gamma(&self) -> &GammaInstance {
        &self.gamma
    }

    fn word(&self, c: u64, h: u64) -> BitWord {
        let dim = self.gamma.pair.dim();
        let coeffs = BitWord::from_u64(dim, c ^ self.gamma.hadamard_coeffs(h));
        self.gamma.pair.dual.encode(&coeffs).expect("coefficient length matches")
    }

    /// `<b_{c,h}, b_{c',h'}> = (1 - 2Δ(c+h, c'+h')/N)^2`, exactly.
    pub fn inner(&self, c: u64, h: u64, c2: u64, h2: u64) -> Ratio<u64> {
        let n = self.gamma.pair.block_len() as u64;
        let dist = self.word(c, h).distance(&self.word(c2, h2)) as i64;
        let s = (n as i64 - 2 * dist).unsigned_abs();
        Ratio::new(s * s, n * n)
    }

    /// Probes orthonormality, nonnegativity, the per-vertex norm sum, and the
    /// objective term identity on random triples.
    pub fn feasibility_check(&self, trials: u64, seed: u64) -> FeasibilityReport {
        let g = &self.gamma;
        let r = g.alphabet_size();
        let n = g.pair.block_len() as u64;
        let parts = mc::run_chunks(trials, seed, |rng, count| {
            let mut f = [0u64; 5];
            for _ in 0..count {
                let c = rng.gen::<u64>() & g.vertex_mask();
                let h = rng.gen_range(0..r);
                let mut h2 = rng.gen_range(0..r - 1);
                if h2 >= h {
                    h2 += 1;
                }
                if self.inner(c, h, c, h) != Ratio::from_integer(1) {
                    f[0] += 1;
                }
                if self.inner(c, h, c, h2) != Ratio::from_integer(0) {
                    f[0] += 1;
                }
                let c3 = rng.gen::<u64>() & g.vertex_mask();
                let h3 = rng.gen_range(0..r);
                let x = self.inner(c, h, c3, h3);
                if x < Ratio::from_integer(0) || x > Ratio::from_integer(1) {
                    f[1] += 1;
                }
                let sum: Ratio<u64> = (0..r).map(|l| self.inner(c, l, c, l)).sum();
                if sum != Ratio::from_integer(r) {
                    f[2] += 1;
                }
                let q = g.tester.sample(rng);
                let (a, b, l) = (rng.gen_range(0..r), rng.gen_range(0..r), rng.gen_range(0..r));
                let qc = q.coeffs.as_u64();
                let lhs = self.inner(c ^ g.hadamard_coeffs(b), l ^ b, c ^ qc ^ g.hadamard_coeffs(a), l ^ a);
                let s = n - 2 * q.word.weight() as u64;
                let rhs = Ratio::new(s * s, n * n);
                if lhs != rhs {
                    f[3] += 1;
                }
                f[4] += 1;
            }
            f
        });
        let mut f = [0u64; 5];
        for p in parts {
            for i in 0..5 {
                f[i] += p[i];
            }
        }
        FeasibilityReport {
            trials: f[4],
            orthonormality_failures: f[0],
            nonnegativity_failures: f[1],
            norm_sum_failures: f[2],
            objective_failures: f[3],
            passed: f[..4].iter().all(|&x| x == 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub trials: u64,
    pub orthonormality_failures: u64,
    pub nonnegativity_failures: u64,
    pub norm_sum_failures: u64,
    pub objective_failures: u64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SdpValue {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    pub stderr: f64,
    /// `(1 - 2t/N)^2` with `t` the query complexity.
    pub lower_bound: f64,
    pub query_complexity: usize,
    pub constant_weight: bool,
    pub lower_bound_holds: bool,
}

/// `E_q[(1 - 2 wt(q)/N)^2]`, exactly from the support when available.
///
/// The reported lower bound is only a bound when `t <= N/2`.
pub fn sdp_value(tester: &CanonicalTester, sampling: Option<(u64, u64)>) -> Result<SdpValue> {
    let n = tester.pair().block_len() as i64;
    let t = tester.query_complexity();
    let lb = (1.0 - 2.0 * t as f64 / n as f64).powi(2);
    let (value, exact, stderr, constant_weight) = match (tester.support(), sampling) {
        (Some(s), _) => {
            let mut acc = BigInt::zero();
            for e in &s.entries {
                let x = n - 2 * e.word.word.weight() as i64;
                acc += BigInt::from(x * x) * BigInt::from(e.mass);
            }
            let v = BigRational::new(acc, BigInt::from(s.total) * BigInt::from(n * n));
            let w0 = s.entries.first().map(|e| e.word.word.weight());
            let constant = s.entries.iter().all(|e| Some(e.word.word.weight()) == w0);
            (ratio_to_f64(&v), Some(v.to_string()), 0.0, constant)
        }
        (None, Some((samples, seed))) => {
            let e: Estimate = mc::mean(samples, seed, |rng| {
                let w = tester.sample(rng).word.weight() as f64;
                (1.0 - 2.0 * w / n as f64).powi(2)
            });
            (e.value, None, e.stderr, false)
        }
        (None, None) => return Err(Error::ExactUnavailable),
    };
    Ok(SdpValue {
        value,
        exact,
        stderr,
        lower_bound: lb,
        query_complexity: t,
        constant_weight,
        lower_bound_holds: value + 3.0 * stderr >= lb - 1e-12,
    })
}

/// A point of a soundness curve as consumed by [`soundness_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveSample {
    pub k: usize,
    pub s: f64,
    pub exact: bool,
}

impl From<&SoundnessPoint> for CurveSample {
    fn from(p: &SoundnessPoint) -> Self {
        CurveSample {
            k: p.k,
            s: p.s_lower,
            exact: p.mode == CurveKind::Exact,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundTerm {
    pub k: usize,
    pub s: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SoundnessBound {
    pub bound: f64,
    pub argmin_k: usize,
    pub k_max: usize,
    pub terms: Vec<BoundTerm>,
    /// Set when any curve point was sampled rather than exact.
    pub indicative: bool,
}

/// `min_{k ∈ [0, D/5]} (1 - 2 s(k) + 3^k / sqrt(R))` with `R = 2^{log2_r}`.
/// Points with undefined `s` (no words that far from the code) are skipped.
pub fn soundness_bound(curve: &[CurveSample], log2_r: f64, distance: usize) -> Result<SoundnessBound> {
    let k_max = distance / 5;
    let mut terms = Vec::with_capacity(k_max + 1);
    let mut indicative = false;
    for k in 0..=k_max {
        let p = curve
            .iter()
            .find(|p| p.k == k)
            .ok_or_else(|| Error::Precondition(format!("curve is missing k = {k}")))?;
        indicative |= !p.exact;
        if p.s.is_nan() {
            continue;
        }
        let value = 1.0 - 2.0 * p.s + (k as f64 * 3f64.log2() - log2_r / 2.0).exp2();
        terms.push(BoundTerm { k, s: p.s, value });
    }
    let best = terms
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Precondition("curve has no defined points".into()))?;
    Ok(SoundnessBound {
        bound: best.value,
        argmin_k: best.k,
        k_max,
        indicative,
        terms,
    })
}

/// The closed-form curve `s(k) = 1/2 - (1 - k/2^{d+1})^r / 2` for `k` up to `k_max`.
pub fn xor_curve(d: usize, r: f64, k_max: usize) -> Vec<CurveSample> {
    (0..=k_max)
        .map(|k| CurveSample {
            k,
            s: xor_s(d, r, k as f64),
            exact: true,
        })
        .collect()
}

fn xor_s(d: usize, r: f64, k: f64) -> f64 {
    0.5 - (1.0 - k / (1u64 << (d + 1)) as f64).powf(r) / 2.0
}

#[derive(Clone, Debug, Serialize)]
pub struct ParameterCheck {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub r: f64,
    pub k_star: f64,
    pub s_at_k_star: f64,
    pub s_target: f64,
    pub bound: f64,
    pub bound_target: f64,
    pub sdp_lower: f64,
    pub holds: bool,
}

/// Plugs the XOR curve with `r = ceil(100 ln(1/δ))` and `d = log2 n` into the
/// bound: `s(2^d/10) >= 1/2 - δ/2` and the minimum is at most `δ` plus the
/// `3^k / sqrt(R)` term at the first integer `k >= 2^d/10`.
pub fn parameter_check(n: usize, delta: f64) -> Result<ParameterCheck> {
    if !(n.is_power_of_two() && n >= 2 && delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!(
            "need n a power of two and delta in (0,1), got n={n}, delta={delta}"
        )));
    }
    let d = n.trailing_zeros() as usize;
    let r = (100.0 * (1.0 / delta).ln()).ceil();
    let distance = 1usize << (d + 1);
    let k_star = (1u64 << d) as f64 / 10.0;
    let s_at_k_star = xor_s(d, r, k_star);
    let s_target = 0.5 - delta / 2.0;
    let curve = xor_curve(d, r, distance / 5);
    let b = soundness_bound(&curve, n as f64, distance)?;
    let k_ceil = k_star.ceil();
    let bound_target = delta + (k_ceil * 3f64.log2() - n as f64 / 2.0).exp2();
    let q = 1.0 - 2.0 * r / (1u64 << d) as f64;
    Ok(ParameterCheck {
        n,
        d,
        delta,
        r,
        k_star,
        s_at_k_star,
        s_target,
        bound: b.bound,
        bound_target,
        sdp_lower: if q > 0.0 { q * q } else { 0.0 },
        holds: s_at_k_star >= s_target && b.bound <= bound_target,
    })
}

/// Parses labeling specs `constant:<hex>`, `hash:<seed>` and `folded-hash:<seed>`.
pub fn parse_labeling(spec: &str, gamma: &GammaInstance) -> Result<Labeling> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("bad labeling {spec:?}")))?;
    let bits = gamma.group_bits();
    match kind {
        "constant" => {
            let h = u64::from_str_radix(arg, 16).map_err(|_| Error::Parse(format!("bad label {arg:?}")))?;
            if h >= gamma.alphabet_size() {
                return Err(Error::Precondition(format!("label {h:x} outside the alphabet")));
            }
            Ok(Labeling::Constant(h))
        }
        "hash" => Ok(Labeling::Hash {
            seed: arg.parse().map_err(|_| Error::Parse(format!("bad seed {arg:?}")))?,
            bits,
        }),
        "folded-hash" => Ok(gamma.folded(Labeling::Hash {
            seed: arg.parse().map_err(|_| Error::Parse(format!("bad seed {arg:?}")))?,
            bits,
        })),
        _ => Err(Error::Parse(format!("unknown labeling kind {kind:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tester::rm_tester;

    fn gamma(n: usize, d: usize) -> GammaInstance {
        GammaInstance::new(rm_tester(n, d).unwrap()).unwrap()
    }

    #[test]
    fn small_instance_dimensions() {
        let g = gamma(3, 1);
        assert_eq!(g.num_vars_log2(), 4);
        assert_eq!(g.alphabet_size(), 8);
        let inst = g.materialize(1 << 20).unwrap();
        assert_eq!(inst.num_vars, 16);
        assert_eq!(inst.total_weight(), BigRational::from_integer(1.into()));
        assert!(inst.constraints.iter().all(|c| c.constraint.shift < 8));
        assert!(matches!(g.materialize(100), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn hadamard_coefficients_encode_linear_forms() {
        let g = gamma(5, 2);
        for a in 0..32u64 {
            let coeffs = BitWord::from_u64(g.pair.dim(), g.hadamard_coeffs(a));
            let w = g.pair.dual.encode(&coeffs).unwrap();
            assert_eq!(w, g.hadamard.word(a as usize));
            let (rep, back) = g.split_hadamard(g.hadamard_coeffs(a) | 1);
            assert_eq!((rep, back), (1, a));
        }
    }

    #[test]
    fn constant_and_shifted_labelings() {
        let g = gamma(3, 1);
        let inst = g.materialize(1 << 20).unwrap();
        let eighth = BigRational::new(1.into(), 8.into());
        for h in 0..8 {
            assert_eq!(evaluate_exact(&inst, &Labeling::Constant(h)).0, eighth);
        }
        let table: Vec<u64> = (0..16).map(|c| (c * 5 + 3) % 8).collect();
        let base = Labeling::Table(table);
        let v0 = evaluate_exact(&inst, &base).0;
        for off in 0..8 {
            let shifted = Labeling::Shifted {
                base: Box::new(base.clone()),
                offset: off,
            };
            assert_eq!(evaluate_exact(&inst, &shifted).0, v0);
        }
    }

    #[test]
    fn instance_file_round_trip() {
        let inst = gamma(3, 1).materialize(1 << 20).unwrap();
        let mut buf = Vec::new();
        inst.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("max2lin t=3 vars=16\n"));
        assert_eq!(MaterializedInstance::read(&buf[..]).unwrap(), inst);
        assert!(MaterializedInstance::read(&b"max2lin t=3\n"[..]).is_err());
        assert!(MaterializedInstance::read(&b"max2lin t=3 vars=16\n99 0 1 1/2\n"[..]).is_err());
    }

    #[test]
    fn symmetric_search_reaches_constants() {
        let g = gamma(3, 1);
        let inst = g.materialize(1 << 20).unwrap();
        let found = best_symmetric_labeling(&g, &inst, 1 << 30).unwrap();
        let eighth = BigRational::new(1.into(), 8.into());
        assert!(found.value >= eighth);
        assert_eq!(found.best_invariant, eighth);
        assert_eq!(found.searched, 128);
        // Folded labelings reduce the verifier to ℓ(c+q) = ℓ(c); recount that
        // directly from the tester support for the best folded table.
        let s = g.tester.support().unwrap();
        let mut best = 0u128;
        for b0 in 0..8u64 {
            for b1 in 0..8u64 {
                let lab = |c: u64| {
                    let (rep, a) = g.split_hadamard(c);
                    (if rep == 0 { b0 } else { b1 }) ^ a
                };
                let hits: u128 = (0..16u64)
                    .flat_map(|c| s.entries.iter().map(move |e| (c, e)))
                    .filter(|(c, e)| lab(c ^ e.word.coeffs.as_u64()) == lab(*c))
                    .map(|(_, e)| e.mass)
                    .sum();
                best = best.max(hits);
            }
        }
        assert_eq!(
            found.best_folded,
            BigRational::new(BigInt::from(best), BigInt::from(16 * s.total))
        );
        assert_eq!(found.best_folded, BigRational::new(1.into(), 14.into()));
    }

    #[test]
    fn folded_labelings_fold() {
        let g = gamma(5, 2);
        let lab = g.folded(Labeling::Hash { seed: 3, bits: 5 });
        let mut rng = mc::stream_rng(2, 0);
        for _ in 0..1000 {
            let c = rng.gen::<u64>() & g.vertex_mask();
            let a = rng.gen_range(0..32);
            assert_eq!(lab.label(c ^ g.hadamard_coeffs(a)), lab.label(c) ^ a);
        }
    }

    #[test]
    fn sampled_labelings() {
        let g = gamma(5, 2);
        let v = evaluate_sampled(&g, &Labeling::Constant(7), 40_000, 1);
        assert!(v.within(1.0 / 32.0, 4.0));
        let v = evaluate_sampled(&g, &Labeling::Hash { seed: 9, bits: 5 }, 40_000, 2);
        assert!(v.within(1.0 / 32.0, 4.0));
    }

    #[test]
    fn marginals_are_uniform() {
        let g = gamma(3, 1);
        let mut rng = mc::stream_rng(5, 0);
        let mut cu = vec![0u64; 16];
        let mut cv = vec![0u64; 16];
        for _ in 0..10_000 {
            let c = g.sample(&mut rng);
            cu[c.u as usize] += 1;
            cv[c.v as usize] += 1;
        }
        assert!(mc::chi_square_uniform(&cu).1 > 0.001);
        assert!(mc::chi_square_uniform(&cv).1 > 0.001);
    }

    #[test]
    fn sdp_values() {
        let v = sdp_value(&rm_tester(5, 2).unwrap(), None).unwrap();
        assert_eq!(v.exact.as_deref(), Some("1/4"));
        assert!(v.constant_weight && v.lower_bound_holds);
        assert_eq!(v.lower_bound, 0.25);
        let base = rm_tester(5, 2).unwrap();
        let zero = CanonicalTester::walk(&base, 0.0).unwrap();
        assert_eq!(sdp_value(&zero, None).unwrap().value, 1.0);
        let xor = CanonicalTester::xor(&base, 2).unwrap();
        let v = sdp_value(&xor, None).unwrap();
        assert!(!v.constant_weight && v.value > v.lower_bound);
    }

    #[test]
    fn feasibility_probes_pass() {
        let sdp = ImplicitSdp::new(gamma(5, 2));
        let rep = sdp.feasibility_check(2000, 3);
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.trials, 2000);
        assert_eq!(sdp.inner(5, 3, 5, 3), Ratio::from_integer(1));
        assert_eq!(sdp.inner(5, 3, 5, 6), Ratio::from_integer(0));
    }

    #[test]
    fn soundness_bound_examples() {
        let zero: Vec<CurveSample> = (0..3).map(|k| CurveSample { k, s: 0.0, exact: true }).collect();
        let b = soundness_bound(&zero, 5.0, 8).unwrap();
        assert!(b.bound >= 1.0);
        assert_eq!(b.argmin_k, 0);
        assert!(soundness_bound(&zero[..1], 5.0, 8).is_err());
        let sampled = vec![
            CurveSample { k: 0, s: 0.0, exact: true },
            CurveSample { k: 1, s: 0.4, exact: false },
        ];
        let b = soundness_bound(&sampled, 10.0, 8).unwrap();
        assert!(b.indicative);
        assert_eq!(b.argmin_k, 1);
        assert!((b.bound - (0.2 + 3.0 / 32.0)).abs() < 1e-12);
    }

    #[test]
    fn parameter_check_at_tenth() {
        let c = parameter_check(1024, 0.1).unwrap();
        assert_eq!((c.d, c.r), (10, 231.0));
        assert!(c.holds, "{c:?}");
        assert!(parameter_check(1000, 0.1).is_err());
    }

    #[test]
    fn labeling_specs() {
        let g = gamma(3, 1);
        assert_eq!(parse_labeling("constant:5", &g).unwrap(), Labeling::Constant(5));
        assert!(parse_labeling("constant:9", &g).is_err());
        assert!(parse_labeling("hash:x", &g).is_err());
        assert!(matches!(parse_labeling("folded-hash:1", &g).unwrap(), Labeling::Folded { .. }));
        assert!(parse_labeling("nope:1", &g).is_err());
    }
}
