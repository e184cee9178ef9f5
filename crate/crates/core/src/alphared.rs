//! Alphabet reduction over `Q = GF(2)^t`: the code `D^t`, the step and walk
//! distributions on it, Q-ary weights and influences, the folded 2-query
//! dictatorship test, and the composed instance over an outer Max-2Lin
//! instance.
//!
//! Elements of `D^t` are stored as `t` coefficient vectors of `D` packed in
//! `u64`; the symbol at point `x` has bit `i` equal to block `i` at `x`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::gf2::BitWord;
use crate::mc::{self, Estimate};
use crate::rm::{binomial, CodePair};
use crate::tester::{ratio_to_f64, CanonicalTester, TesterDescriptor};

/// Largest supported `t`.
pub const MAX_BLOCKS: usize = 16;

/// An element of `D^t` as per-block coefficient vectors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QWord {
    pub coeffs: Vec<u64>,
}

impl QWord {
    pub fn zero(t: usize) -> Self {
        QWord { coeffs: vec![0; t] }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn xor_assign(&mut self, other: &QWord) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a ^= b;
        }
    }
}

/// Linear action of a coordinate translation on `D`'s coefficient space,
/// stored as the images of the basis vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Translation {
    pub alpha: usize,
    pub images: Vec<u64>,
}

impl Translation {
    pub fn apply(&self, c: u64) -> u64 {
        self.images
            .iter()
            .enumerate()
            .filter(|(j, _)| c >> j & 1 == 1)
            .fold(0, |acc, (_, &img)| acc ^ img)
    }

    pub fn rank(&self) -> usize {
        let mut basis: Vec<u64> = Vec::new();
        for &v in &self.images {
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
}

/// `D^t` together with a tester for `D`'s dual pair.
#[derive(Debug)]
pub struct Gadget {
    pair: Arc<CodePair>,
    tester: CanonicalTester,
    t: usize,
    /// Per point, the mask of generators that are 1 there.
    columns: Vec<u64>,
    const_index: usize,
    translations: Mutex<HashMap<usize, Arc<Translation>>>,
}

impl Gadget {
    pub fn new(tester: CanonicalTester, t: usize) -> Result<Self> {
        let pair = tester.pair().clone();
        pair.require_small_dim()?;
        if t == 0 || t > MAX_BLOCKS {
            return Err(Error::Precondition(format!("t must lie in 1..={MAX_BLOCKS}, got {t}")));
        }
        let columns = (0..pair.block_len())
            .map(|x| pair.tested.column(x).as_u64())
            .collect();
        let const_index = pair.dual.monomial_index(0).expect("RM codes contain constants");
        Ok(Gadget {
            pair,
            tester,
            t,
            columns,
            const_index,
            translations: Mutex::new(HashMap::new()),
        })
    }

    pub fn pair(&self) -> &Arc<CodePair> {
        &self.pair
    }

    pub fn tester(&self) -> &CanonicalTester {
        &self.tester
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Alphabet size `Q = 2^t`.
    pub fn q(&self) -> u64 {
        1 << self.t
    }

    fn coeff_mask(&self) -> u64 {
        let dim = self.pair.dim();
        if dim == 64 {
            u64::MAX
        } else {
            (1 << dim) - 1
        }
    }

    pub fn symbol(&self, c: &QWord, x: usize) -> u64 {
        let col = self.columns[x];
        c.coeffs
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (((b & col).count_ones() as u64) & 1) << i)
    }

    /// Blocks as length-`N` codewords.
    pub fn blocks(&self, c: &QWord) -> Vec<BitWord> {
        c.coeffs
            .iter()
            .map(|&b| {
                self.pair
                    .dual
                    .encode(&BitWord::from_u64(self.pair.dim(), b))
                    .expect("dimension matches")
            })
            .collect()
    }

    pub fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> QWord {
        QWord {
            coeffs: (0..self.t).map(|_| rng.gen::<u64>() & self.coeff_mask()).collect(),
        }
    }

    /// One step: a tester word `c` copied into the blocks selected by a
    /// uniform `w ∈ GF(2)^t`.
    pub fn sample_tt<R: Rng + ?Sized>(&self, rng: &mut R) -> QWord {
        let c = self.tester.sample(rng).coeffs.as_u64();
        let w: u64 = rng.gen_range(0..self.q());
        QWord {
            coeffs: (0..self.t).map(|i| if w >> i & 1 == 1 { c } else { 0 }).collect(),
        }
    }

    /// The walk with rate `ε·2^d`: a Poisson number of independent steps.
    pub fn sample_tt_eps<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> QWord {
        let mut z = QWord::zero(self.t);
        let rate = eps * (1u64 << self.pair.d) as f64;
        if rate > 0.0 {
            let steps = Poisson::new(rate).expect("positive rate").sample(rng) as u64;
            for _ in 0..steps {
                z.xor_assign(&self.sample_tt(rng));
            }
        }
        z
    }

    /// Adds the constant word `r_i · 1` to block `i`.
    pub fn add_constant(&self, c: &QWord, r: u64) -> QWord {
        QWord {
            coeffs: c
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &b)| b ^ ((r >> i & 1) << self.const_index))
                .collect(),
        }
    }

    /// Representative modulo constant shifts (constant coefficients cleared)
    /// and the shift that was removed.
    pub fn canonical(&self, c: &QWord) -> (QWord, u64) {
        let mut r = 0;
        let coeffs = c
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                r |= (b >> self.const_index & 1) << i;
                b & !(1 << self.const_index)
            })
            .collect();
        (QWord { coeffs }, r)
    }

    /// Character index of `beta` (blocks of length `N`), one syndrome per block.
    pub fn char_index(&self, beta: &[BitWord]) -> Result<Vec<u64>> {
        if beta.len() != self.t {
            return Err(Error::LengthMismatch {
                expected: self.t,
                got: beta.len(),
            });
        }
        beta.iter()
            .map(|b| Ok(self.pair.char_index(b)?.as_u64()))
            .collect()
    }

    /// Exact eigenvalue of `chi_beta` under one step: the probability that a
    /// tester word is orthogonal to every block of `beta`.
    pub fn step_eigenvalue(&self, beta: &[BitWord]) -> Result<BigRational> {
        let idx = self.char_index(beta)?;
        let support = self.tester.support().ok_or(Error::ExactUnavailable)?;
        let orth: u128 = support
            .entries
            .iter()
            .filter(|e| {
                let c = e.word.coeffs.as_u64();
                idx.iter().all(|&b| (b & c).count_ones() % 2 == 0)
            })
            .map(|e| e.mass)
            .sum();
        Ok(BigRational::new(BigInt::from(orth), BigInt::from(support.total)))
    }

    /// `exp(-ε 2^d (1 - λ))` with `λ` the exact step eigenvalue.
    pub fn walk_eigenvalue(&self, beta: &[BitWord], eps: f64) -> Result<f64> {
        let lambda = ratio_to_f64(&self.step_eigenvalue(beta)?);
        Ok((-eps * (1u64 << self.pair.d) as f64 * (1.0 - lambda)).exp())
    }

    /// Minimum Q-weight representative of `beta + C^t`, searching supports of
    /// size up to `w_max` in increasing order.
    pub fn q_weight(&self, beta: &[BitWord], w_max: usize, budget: u128) -> Result<QLeader> {
        let targets = self.char_index(beta)?;
        let n = self.pair.block_len();
        let limit = w_max.min(n);
        let needed: u128 = (0..=limit).map(|k| binomial(n, k)).sum();
        check_budget("q_weight search", needed, budget)?;
        let cols = self.columns_bitwords();
        for k in 0..=limit {
            let mut found = None;
            let _ = crate::rm::for_each_combination(&cols, k, |s, _| {
                match self.solve_on(s, &targets) {
                    Some(sel) => {
                        found = Some((s.to_vec(), sel));
                        std::ops::ControlFlow::Break(())
                    }
                    None => std::ops::ControlFlow::Continue(()),
                }
            });
            if let Some((support, sel)) = found {
                let blocks = sel
                    .iter()
                    .map(|&m| {
                        let pts: Vec<usize> = (0..support.len())
                            .filter(|j| m >> j & 1 == 1)
                            .map(|j| support[j])
                            .collect();
                        BitWord::from_support(n, &pts)
                    })
                    .collect();
                return Ok(QLeader {
                    weight: k,
                    support,
                    blocks,
                });
            }
        }
        Err(Error::NotFound { w_max })
    }

    fn columns_bitwords(&self) -> Vec<BitWord> {
        (0..self.pair.block_len())
            .map(|x| self.pair.tested.column(x).clone())
            .collect()
    }

    /// Per target, a subset of `points` whose columns sum to it. Every point
    /// must be used by some block, otherwise a smaller support works too.
    fn solve_on(&self, points: &[usize], targets: &[u64]) -> Option<Vec<u64>> {
        let k = points.len();
        let mut sums: HashMap<u64, u64> = HashMap::with_capacity(1 << k);
        for m in 0..1u64 << k {
            let s = (0..k)
                .filter(|j| m >> j & 1 == 1)
                .fold(0, |acc, j| acc ^ self.columns[points[j]]);
            sums.entry(s).or_insert(m);
        }
        let mut sel = Vec::with_capacity(targets.len());
        let mut used = 0u64;
        for t in targets {
            let m = *sums.get(t)?;
            used |= m;
            sel.push(m);
        }
        (used.count_ones() as usize == k).then_some(sel)
    }

    /// Translation `(T_α c)(x) = c(x + α)` on coefficient vectors, cached.
    pub fn translation(&self, alpha: usize) -> Result<Arc<Translation>> {
        if alpha >= self.pair.block_len() {
            return Err(Error::Precondition(format!("shift {alpha} outside GF(2)^{}", self.pair.n)));
        }
        if let Some(t) = self.translations.lock().expect("cache lock").get(&alpha) {
            return Ok(t.clone());
        }
        let dual = &self.pair.dual;
        let n = self.pair.block_len();
        let images = (0..self.pair.dim())
            .map(|j| {
                let w = dual.encode(&BitWord::from_u64(self.pair.dim(), 1 << j))?;
                let moved = BitWord::from_bits((0..n).map(|x| w.get(x ^ alpha)));
                Ok(dual.coefficients(&moved)?.as_u64())
            })
            .collect::<Result<Vec<_>>>()?;
        let t = Arc::new(Translation { alpha, images });
        self.translations
            .lock()
            .expect("cache lock")
            .insert(alpha, t.clone());
        Ok(t)
    }

    pub fn translate(&self, tr: &Translation, c: &QWord) -> QWord {
        QWord {
            coeffs: c.coeffs.iter().map(|&b| tr.apply(b)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QLeader {
    pub weight: usize,
    pub support: Vec<usize>,
    pub blocks: Vec<BitWord>,
}

/// A function `D^t -> Q` with `f(c + r) = f(c) + r` for constant shifts `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FoldedFunction {
    /// `c ↦ c_x`.
    Dictator { point: usize },
    /// `base` on every representative, extended by folding.
    ConstantPlusFold { base: u64 },
    /// A seeded hash of the representative, extended by folding.
    RandomHash { seed: u64 },
}

impl FoldedFunction {
    pub fn eval(&self, g: &Gadget, c: &QWord) -> u64 {
        match self {
            FoldedFunction::Dictator { point } => g.symbol(c, *point),
            FoldedFunction::ConstantPlusFold { base } => g.canonical(c).1 ^ base,
            FoldedFunction::RandomHash { seed } => {
                let (rep, r) = g.canonical(c);
                let h = rep
                    .coeffs
                    .iter()
                    .fold(*seed, |acc, &b| mc::subseed(acc, b));
                (h & (g.q() - 1)) ^ r
            }
        }
    }

    /// Parses `dictator:<point>`, `constant:<hex>` or `random:<seed>`.
    pub fn parse(spec: &str, g: &Gadget) -> Result<Self> {
        let (kind, arg) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("bad function {spec:?}")))?;
        let bad = || Error::Parse(format!("bad argument in {spec:?}"));
        let f = match kind {
            "dictator" => FoldedFunction::Dictator {
                point: arg.parse().map_err(|_| bad())?,
            },
            "constant" => FoldedFunction::ConstantPlusFold {
                base: u64::from_str_radix(arg, 16).map_err(|_| bad())?,
            },
            "random" => FoldedFunction::RandomHash {
                seed: arg.parse().map_err(|_| bad())?,
            },
            _ => return Err(Error::Parse(format!("unknown function kind {kind:?}"))),
        };
        match f {
            FoldedFunction::Dictator { point } if point >= g.pair.block_len() => {
                Err(Error::Precondition(format!("point {point} outside the domain")))
            }
            FoldedFunction::ConstantPlusFold { base } if base >= g.q() => {
                Err(Error::Precondition(format!("symbol {base:x} outside Q")))
            }
            f => Ok(f),
        }
    }
}

/// Acceptance of `DICT`: `c` uniform, `c' = c + z` with `z` from the walk,
/// `r ∈ Q` uniform; accept iff `f(c + r) - r = f(c')`.
pub fn dict_test(g: &Gadget, f: &FoldedFunction, eps: f64, samples: u64, seed: u64) -> Result<Estimate> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Precondition(format!("eps must be >= 0, got {eps}")));
    }
    Ok(mc::frequency(samples, seed, |rng| {
        let c = g.uniform(rng);
        let mut c2 = c.clone();
        c2.xor_assign(&g.sample_tt_eps(eps, rng));
        let r = rng.gen_range(0..g.q());
        f.eval(g, &g.add_constant(&c, r)) ^ r == f.eval(g, &c2)
    }))
}

/// `Pr[z_x = 0]` for the walk: steps touching `x` arrive at rate `ε` and each
/// adds a uniform symbol, so this is `e^{-ε} + (1 - e^{-ε})/Q`.
pub fn dictator_acceptance(eps: f64, t: usize) -> f64 {
    let stay = (-eps).exp();
    stay + (1.0 - stay) / (1u64 << t) as f64
}

/// Monte Carlo `Pr[z_x ≠ 0]` at a fixed point.
pub fn flip_rate(g: &Gadget, point: usize, eps: f64, samples: u64, seed: u64) -> Estimate {
    mc::frequency(samples, seed, |rng| g.symbol(&g.sample_tt_eps(eps, rng), point) != 0)
}

/// A sparse function on `D^t`: `Σ coeff · chi_beta` with `beta` given by any
/// representative blocks.
#[derive(Clone, Debug, Default)]
pub struct SparseQFunction {
    pub terms: Vec<(Vec<BitWord>, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct QInfluenceTable {
    pub ell: usize,
    pub values: Vec<f64>,
    pub total: f64,
    pub variance: f64,
}

/// Low-degree Q-ary influences: for every character class with leader
/// weight at most `ell`, its squared coefficient is charged to each point of
/// the leader's support.
pub fn q_influences(g: &Gadget, f: &SparseQFunction, ell: usize, budget: u128) -> Result<QInfluenceTable> {
    let uniq = g.pair.distance() / 2;
    if ell >= uniq {
        return Err(Error::Precondition(format!(
            "ell = {ell} must be below half the distance ({uniq})"
        )));
    }
    let mut classes: BTreeMap<Vec<u64>, (Vec<BitWord>, f64)> = BTreeMap::new();
    for (beta, c) in &f.terms {
        let key = g.char_index(beta)?;
        classes.entry(key).or_insert_with(|| (beta.clone(), 0.0)).1 += c;
    }
    let mut values = vec![0.0; g.pair.block_len()];
    let mut variance = 0.0;
    for (key, (beta, c)) in &classes {
        if key.iter().all(|&b| b == 0) {
            continue;
        }
        variance += c * c;
        match g.q_weight(beta, ell, budget) {
            Ok(leader) => {
                for &i in &leader.support {
                    values[i] += c * c;
                }
            }
            Err(Error::NotFound { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(QInfluenceTable {
        ell,
        total: values.iter().sum(),
        values,
        variance,
    })
}

/// Random sparse functions whose characters have Q-weight at most `max_weight`.
pub fn random_sparse_q_function<R: Rng + ?Sized>(
    g: &Gadget,
    terms: usize,
    max_weight: usize,
    rng: &mut R,
) -> SparseQFunction {
    let n = g.pair.block_len();
    let out = (0..terms)
        .map(|_| {
            let k = rng.gen_range(1..=max_weight);
            let pts: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
            let mut blocks = vec![BitWord::zeros(n); g.t];
            for &x in &pts {
                let sym = rng.gen_range(1..g.q());
                for (i, b) in blocks.iter_mut().enumerate() {
                    if sym >> i & 1 == 1 {
                        b.set(x, true);
                    }
                }
            }
            (blocks, rng.gen_range(-1.0..1.0))
        })
        .collect();
    SparseQFunction { terms: out }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterEdge {
    pub u: usize,
    pub v: usize,
    /// The constraint `v - u = alpha` over `GF(2)^n`.
    pub alpha: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterInstance {
    pub vertices: usize,
    pub edges: Vec<OuterEdge>,
}

impl OuterInstance {
    pub fn single_loop() -> Self {
        OuterInstance {
            vertices: 1,
            edges: vec![OuterEdge { u: 0, v: 0, alpha: 0 }],
        }
    }

    /// Consistent shifts `alpha_uv = L(v) + L(u)` for a labeling `L`.
    pub fn satisfiable(labels: &[usize], edges: &[(usize, usize)]) -> Self {
        OuterInstance {
            vertices: labels.len(),
            edges: edges
                .iter()
                .map(|&(u, v)| OuterEdge {
                    u,
                    v,
                    alpha: labels[u] ^ labels[v],
                })
                .collect(),
        }
    }

    /// Neighbour lists `(v, alpha_uv)`; loops appear once.
    pub fn adjacency(&self) -> Result<Vec<Vec<(usize, usize)>>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for e in &self.edges {
            if e.u >= self.vertices || e.v >= self.vertices {
                return Err(Error::Precondition(format!("edge {e:?} leaves the vertex set")));
            }
            adj[e.u].push((e.v, e.alpha));
            if e.u != e.v {
                adj[e.v].push((e.u, e.alpha));
            }
        }
        if let Some(u) = adj.iter().position(Vec::is_empty) {
            return Err(Error::Precondition(format!("vertex {u} has no neighbours")));
        }
        Ok(adj)
    }
}

/// One composed constraint: `ℓ(a) + ℓ(b) = shift` with vertices in
/// `V(outer) × D^t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PsiConstraint {
    pub a: (usize, QWord),
    pub b: (usize, QWord),
    pub shift: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiDescriptor {
    pub n: usize,
    pub d: usize,
    pub t: usize,
    pub eps: f64,
    pub tester: TesterDescriptor,
    pub seed: u64,
    pub outer: OuterInstance,
}

/// The composed verifier over an outer instance.
pub struct PsiInstance<'g> {
    gadget: &'g Gadget,
    outer: OuterInstance,
    adjacency: Vec<Vec<(usize, Arc<Translation>)>>,
    eps: f64,
}

impl<'g> PsiInstance<'g> {
    pub fn new(gadget: &'g Gadget, outer: OuterInstance, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Precondition(format!("eps must be >= 0, got {eps}")));
        }
        let adjacency = outer
            .adjacency()?
            .into_iter()
            .map(|nbrs| {
                nbrs.into_iter()
                    .map(|(v, a)| Ok((v, gadget.translation(a)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PsiInstance {
            gadget,
            outer,
            adjacency,
            eps,
        })
    }

    pub fn outer(&self) -> &OuterInstance {
        &self.outer
    }

    pub fn descriptor(&self, seed: u64) -> PsiDescriptor {
        let p = &self.gadget.pair;
        PsiDescriptor {
            n: p.n,
            d: p.d,
            t: self.gadget.t,
            eps: self.eps,
            tester: self.gadget.tester.describe(),
            seed,
            outer: self.outer.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PsiConstraint {
        let g = self.gadget;
        let u = rng.gen_range(0..self.adjacency.len());
        let nbrs = &self.adjacency[u];
        let (v1, t1) = &nbrs[rng.gen_range(0..nbrs.len())];
        let (v2, t2) = &nbrs[rng.gen_range(0..nbrs.len())];
        let c1 = g.uniform(rng);
        let mut c2 = c1.clone();
        c2.xor_assign(&g.sample_tt_eps(self.eps, rng));
        let r = rng.gen_range(0..g.q());
        PsiConstraint {
            a: (*v1, g.add_constant(&g.translate(t1, &c1), r)),
            b: (*v2, g.translate(t2, &c2)),
            shift: r,
        }
    }

    /// Fraction of constraints satisfied by per-vertex folded labelings.
    pub fn evaluate(&self, labels: &[FoldedFunction], samples: u64, seed: u64) -> Result<Estimate> {
        if labels.len() != self.adjacency.len() {
            return Err(Error::LengthMismatch {
                expected: self.adjacency.len(),
                got: labels.len(),
            });
        }
        let g = self.gadget;
        Ok(mc::frequency(samples, seed, |rng| {
            let c = self.sample(rng);
            labels[c.a.0].eval(g, &c.a.1) ^ labels[c.b.0].eval(g, &c.b.1) == c.shift
        }))
    }
}
