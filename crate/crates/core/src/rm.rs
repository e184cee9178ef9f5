//! Reed-Muller codes, syndromes, coset leaders and minimum-weight codewords.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::gf2::{linear_mask_eval, mobius_transform, BitWord, GF2Matrix, PairingSolver};

/// Largest variable count accepted by [`RmCode::new`] (block length 4096).
pub const MAX_VARS: usize = 12;

/// Default cap on the number of support combinations a leader search may visit.
pub const DEFAULT_SEARCH_BUDGET: u128 = 200_000_000;

/// Default cap on the number of min-weight codewords enumerated.
pub const DEFAULT_ENUM_BUDGET: u128 = 20_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of `k`-dimensional subspaces of GF(2)^n.
pub fn gaussian_binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut num = 1u128;
    let mut den = 1u128;
    for i in 0..k {
        num *= (1u128 << (n - i)) - 1;
        den *= (1u128 << (i + 1)) - 1;
    }
    num / den
}

fn monomials_up_to(n: usize, r: Option<usize>) -> Vec<usize> {
    let Some(r) = r else { return Vec::new() };
    let mut m: Vec<usize> = (0..1usize << n)
        .filter(|s| s.count_ones() as usize <= r)
        .collect();
    m.sort_by_key(|&s| (s.count_ones(), s));
    m
}

/// Evaluation vector of the monomial `x_S`: bit `x` is set iff `S ⊆ x`.
pub fn monomial_eval(n: usize, mask: usize) -> BitWord {
    let len = 1usize << n;
    let mut w = BitWord::zeros(len);
    for x in 0..len {
        if x & mask == mask {
            w.set(x, true);
        }
    }
    w
}

/// RM(n, r). Generators are the monomials of degree `<= r`, ordered by degree
/// then by variable mask. `r = None` is the zero code.
#[derive(Clone, Debug)]
pub struct RmCode {
    n: usize,
    r: Option<usize>,
    monomials: Vec<usize>,
    generators: GF2Matrix,
    parity: GF2Matrix,
    /// `columns[x]` is the syndrome of the unit word `e_x`.
    columns: Vec<BitWord>,
    /// Position of each monomial mask in `monomials`, `u32::MAX` if absent.
    index: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDescriptor {
    pub n: usize,
    pub r: i64,
    pub dim: usize,
    pub block_len: usize,
}

impl RmCode {
    pub fn new(n: usize, r: usize) -> Result<Self> {
        if r > n {
            return Err(Error::Precondition(format!("RM({n},{r}) needs r <= n")));
        }
        Self::build(n, Some(r))
    }

    fn build(n: usize, r: Option<usize>) -> Result<Self> {
        if n > MAX_VARS {
            return Err(Error::Precondition(format!(
                "n = {n} exceeds the supported maximum {MAX_VARS}"
            )));
        }
        let len = 1usize << n;
        let monomials = monomials_up_to(n, r);
        let dual_r = match r {
            None => Some(n),
            Some(r) if r == n => None,
            Some(r) => Some(n - r - 1),
        };
        let dual_monomials = monomials_up_to(n, dual_r);
        let generators = GF2Matrix::from_rows(
            len,
            monomials.iter().map(|&s| monomial_eval(n, s)).collect(),
        )?;
        let parity = GF2Matrix::from_rows(
            len,
            dual_monomials.iter().map(|&s| monomial_eval(n, s)).collect(),
        )?;
        let columns = parity.transpose().rows().to_vec();
        let mut index = vec![u32::MAX; len];
        for (j, &s) in monomials.iter().enumerate() {
            index[s] = j as u32;
        }
        Ok(RmCode {
            n,
            r,
            monomials,
            generators,
            parity,
            columns,
            index,
        })
    }

    pub fn zero_code(n: usize) -> Result<Self> {
        Self::build(n, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Degree bound, `None` for the zero code.
    pub fn r(&self) -> Option<usize> {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.monomials.len()
    }

    pub fn block_len(&self) -> usize {
        1 << self.n
    }

    /// Minimum distance `2^{n-r}` (0 for the zero code).
    pub fn min_distance(&self) -> usize {
        self.r.map_or(0, |r| 1 << (self.n - r))
    }

    pub fn generators(&self) -> &GF2Matrix {
        &self.generators
    }

    /// Generator matrix of the dual code (the parity-check matrix).
    pub fn parity_check(&self) -> &GF2Matrix {
        &self.parity
    }

    pub fn monomials(&self) -> &[usize] {
        &self.monomials
    }

    /// Generator index of the monomial `x_S`, if it belongs to the basis.
    pub fn monomial_index(&self, mask: usize) -> Option<usize> {
        self.index
            .get(mask)
            .filter(|&&j| j != u32::MAX)
            .map(|&j| j as usize)
    }

    pub fn dual(&self) -> RmCode {
        let dual_r = match self.r {
            None => Some(self.n),
            Some(r) if r == self.n => None,
            Some(r) => Some(self.n - r - 1),
        };
        Self::build(self.n, dual_r).expect("dual of a valid code is valid")
    }

    pub fn name(&self) -> String {
        match self.r {
            Some(r) => format!("RM({},{})", self.n, r),
            None => format!("RM({},-1)", self.n),
        }
    }

    pub fn descriptor(&self) -> CodeDescriptor {
        CodeDescriptor {
            n: self.n,
            r: self.r.map_or(-1, |r| r as i64),
            dim: self.dim(),
            block_len: self.block_len(),
        }
    }

    pub fn generator_hex_rows(&self) -> Vec<String> {
        self.generators.rows().iter().map(BitWord::to_hex).collect()
    }

    fn check_len(&self, w: &BitWord) -> Result<()> {
        if w.len() != self.block_len() {
            return Err(Error::LengthMismatch {
                expected: self.block_len(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Inner products of `alpha` with the generators of the dual code.
    pub fn syndrome(&self, alpha: &BitWord) -> Result<BitWord> {
        self.check_len(alpha)?;
        Ok(self.syndrome_unchecked(alpha))
    }

    pub(crate) fn syndrome_unchecked(&self, alpha: &BitWord) -> BitWord {
        let mut s = BitWord::zeros(self.parity.nrows());
        if alpha.weight() * 8 < alpha.len() {
            for x in alpha.support() {
                s.xor_assign(&self.columns[x]);
            }
        } else {
            for (j, row) in self.parity.rows().iter().enumerate() {
                if row.dot(alpha) {
                    s.set(j, true);
                }
            }
        }
        s
    }

    /// Syndrome of the unit word at point `x`.
    pub fn column(&self, x: usize) -> &BitWord {
        &self.columns[x]
    }

    pub fn contains(&self, w: &BitWord) -> Result<bool> {
        Ok(self.syndrome(w)?.is_zero())
    }

    pub fn encode(&self, coeffs: &BitWord) -> Result<BitWord> {
        self.generators.combine(coeffs)
    }

    /// Coefficients of a codeword in the generator basis.
    pub fn coefficients(&self, w: &BitWord) -> Result<BitWord> {
        self.check_len(w)?;
        let mut anf = w.clone();
        mobius_transform(&mut anf, self.n);
        let mut coeffs = BitWord::zeros(self.dim());
        for s in anf.support() {
            match self.monomial_index(s) {
                Some(j) => coeffs.set(j, true),
                None => {
                    return Err(Error::Precondition(format!(
                        "word is not a codeword of {}",
                        self.name()
                    )))
                }
            }
        }
        Ok(coeffs)
    }

    /// Minimum-weight representative of `alpha + C`, searching weights up to `w_max`.
    pub fn coset_leader(&self, alpha: &BitWord, w_max: usize) -> Result<CosetRep> {
        self.coset_leader_with_budget(alpha, w_max, DEFAULT_SEARCH_BUDGET)
    }

    pub fn coset_leader_with_budget(
        &self,
        alpha: &BitWord,
        w_max: usize,
        budget: u128,
    ) -> Result<CosetRep> {
        let target = self.syndrome(alpha)?;
        let len = self.block_len();
        if target.is_zero() {
            return Ok(CosetRep {
                alpha: alpha.clone(),
                leader: BitWord::zeros(len),
                degree: 0,
            });
        }
        // alpha itself is a representative, so no heavier search is needed.
        let top = w_max.min(alpha.weight());
        let cost: u128 = (1..=top).map(|w| binomial(len, w)).sum();
        check_budget("coset leader search", cost, budget)?;
        for w in 1..=top {
            let mut found = None;
            let _ = for_each_combination(&self.columns, w, |support, syn| {
                if *syn == target {
                    found = Some(support.to_vec());
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
            if let Some(support) = found {
                return Ok(CosetRep {
                    alpha: alpha.clone(),
                    leader: BitWord::from_support(len, &support),
                    degree: w,
                });
            }
        }
        Err(Error::NotFound { w_max })
    }

    /// All codewords of weight `2^{n-d}` for this code `RM(n,d)`.
    pub fn min_weight_words(&self) -> Result<Vec<BitWord>> {
        self.min_weight_words_with_budget(DEFAULT_ENUM_BUDGET)
    }

    pub fn min_weight_words_with_budget(&self, budget: u128) -> Result<Vec<BitWord>> {
        let n = self.n;
        let d = match self.r {
            Some(d) if d >= 1 && d < n => d,
            _ => {
                return Err(Error::Precondition(format!(
                    "min-weight enumeration needs 1 <= d < n, got {}",
                    self.name()
                )))
            }
        };
        let count = gaussian_binomial(n, d) << d;
        check_budget("min-weight enumeration", count, budget)?;
        let mut seen = HashSet::with_capacity(count as usize);
        let mut out = Vec::with_capacity(count as usize);
        for_each_subspace_basis(n, d, |rows| {
            let forms: Vec<BitWord> = rows.iter().map(|&a| linear_mask_eval(n, a, false)).collect();
            for b in 0..1usize << d {
                let mut w = BitWord::ones(1 << n);
                for (i, f) in forms.iter().enumerate() {
                    if b >> i & 1 == 1 {
                        let mut g = f.clone();
                        g.not_assign();
                        w.and_assign(&g);
                    } else {
                        w.and_assign(f);
                    }
                }
                if seen.insert(w.clone()) {
                    out.push(w);
                }
            }
        });
        out.sort();
        Ok(out)
    }

    pub fn hadamard_subcode(&self) -> Result<HadamardCode> {
        match self.r {
            Some(r) if r >= 1 => HadamardCode::new(self.n),
            _ => Err(Error::Precondition(format!(
                "{} does not contain the Hadamard code",
                self.name()
            ))),
        }
    }
}

/// Visits every `k`-subset of `0..cols.len()` in lexicographic order together
/// with the XOR of the selected columns.
pub fn for_each_combination<F>(cols: &[BitWord], k: usize, mut f: F) -> ControlFlow<()>
where
    F: FnMut(&[usize], &BitWord) -> ControlFlow<()>,
{
    let Some(first) = cols.first() else {
        return if k == 0 {
            f(&[], &BitWord::zeros(0))
        } else {
            ControlFlow::Continue(())
        };
    };
    let width = first.len();
    let mut idx = Vec::with_capacity(k);
    let mut acc = vec![BitWord::zeros(width); k + 1];
    fn rec<F>(
        cols: &[BitWord],
        k: usize,
        start: usize,
        idx: &mut Vec<usize>,
        acc: &mut [BitWord],
        f: &mut F,
    ) -> ControlFlow<()>
    where
        F: FnMut(&[usize], &BitWord) -> ControlFlow<()>,
    {
        let depth = idx.len();
        if depth == k {
            return f(idx, &acc[depth]);
        }
        let remaining = k - depth;
        for i in start..=cols.len() - remaining {
            let (lo, hi) = acc.split_at_mut(depth + 1);
            hi[0].clone_from(&lo[depth]);
            hi[0].xor_assign(&cols[i]);
            idx.push(i);
            rec(cols, k, i + 1, idx, acc, f)?;
            idx.pop();
        }
        ControlFlow::Continue(())
    }
    if k > cols.len() {
        return ControlFlow::Continue(());
    }
    rec(cols, k, 0, &mut idx, &mut acc, &mut f)
}

/// Calls `f` with one basis (as variable masks) of every `d`-dimensional
/// subspace of GF(2)^n, using the reduced row-echelon parametrization.
fn for_each_subspace_basis<F: FnMut(&[usize])>(n: usize, d: usize, mut f: F) {
    let mut pivots = Vec::with_capacity(d);
    fn choose<F: FnMut(&[usize])>(n: usize, d: usize, start: usize, pivots: &mut Vec<usize>, f: &mut F) {
        if pivots.len() == d {
            let pivot_mask: usize = pivots.iter().map(|&p| 1usize << p).sum();
            // Free slots: row i may use any non-pivot column above its pivot.
            let slots: Vec<(usize, usize)> = pivots
                .iter()
                .enumerate()
                .flat_map(|(i, &p)| {
                    ((p + 1)..n)
                        .filter(move |&c| pivot_mask >> c & 1 == 0)
                        .map(move |c| (i, c))
                })
                .collect();
            let mut rows = vec![0usize; d];
            for assign in 0..1usize << slots.len() {
                for (i, &p) in pivots.iter().enumerate() {
                    rows[i] = 1 << p;
                }
                for (s, &(i, c)) in slots.iter().enumerate() {
                    if assign >> s & 1 == 1 {
                        rows[i] |= 1 << c;
                    }
                }
                f(&rows);
            }
            return;
        }
        for p in start..n {
            pivots.push(p);
            choose(n, d, p + 1, pivots, f);
            pivots.pop();
        }
    }
    choose(n, d, 0, &mut pivots, &mut f);
}

/// A coset `alpha + C` with its certified minimum-weight representative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CosetRep {
    #[serde(serialize_with = "crate::report::ser_hex")]
    pub alpha: BitWord,
    #[serde(serialize_with = "crate::report::ser_hex")]
    pub leader: BitWord,
    pub degree: usize,
}

/// One coset class found by weight-ordered enumeration.
#[derive(Clone, Debug)]
pub struct CosetClass {
    pub leader: BitWord,
    pub syndrome: BitWord,
    pub degree: usize,
}

/// Every coset whose leader has weight `<= k_max`, leaders certified by
/// enumerating words in (weight, lexicographic support) order.
#[derive(Clone, Debug)]
pub struct CosetTable {
    pub k_max: usize,
    pub classes: Vec<CosetClass>,
    by_syndrome: HashMap<BitWord, usize>,
    /// Total number of words of weight `<= k_max` that were classified.
    pub words_classified: u128,
}

impl CosetTable {
    pub fn build(code: &RmCode, k_max: usize, budget: u128) -> Result<Self> {
        let len = code.block_len();
        let cost: u128 = (0..=k_max).map(|w| binomial(len, w)).sum();
        check_budget("coset classification", cost, budget)?;
        let mut classes = Vec::new();
        let mut by_syndrome = HashMap::new();
        for w in 0..=k_max.min(len) {
            let _ = for_each_combination(code.columns_slice(), w, |support, syn| {
                if !by_syndrome.contains_key(syn) {
                    by_syndrome.insert(syn.clone(), classes.len());
                    classes.push(CosetClass {
                        leader: BitWord::from_support(len, support),
                        syndrome: syn.clone(),
                        degree: w,
                    });
                }
                ControlFlow::Continue(())
            });
        }
        Ok(CosetTable {
            k_max,
            classes,
            by_syndrome,
            words_classified: cost,
        })
    }

    pub fn lookup(&self, syndrome: &BitWord) -> Option<&CosetClass> {
        self.by_syndrome.get(syndrome).map(|&i| &self.classes[i])
    }
}

impl RmCode {
    pub(crate) fn columns_slice(&self) -> &[BitWord] {
        &self.columns
    }
}

/// The Hadamard code: evaluation vectors of the linear forms `<a, x>`.
#[derive(Clone, Debug)]
pub struct HadamardCode {
    n: usize,
    generators: GF2Matrix,
}

impl HadamardCode {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_VARS {
            return Err(Error::Precondition(format!("n = {n} too large")));
        }
        let rows = (0..n).map(|i| linear_mask_eval(n, 1 << i, false)).collect();
        Ok(HadamardCode {
            n,
            generators: GF2Matrix::from_rows(1 << n, rows)?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        1 << self.n
    }

    pub fn generators(&self) -> &GF2Matrix {
        &self.generators
    }

    /// Codeword for the linear form with coefficient mask `a`.
    pub fn word(&self, a: usize) -> BitWord {
        linear_mask_eval(self.n, a, false)
    }

    /// Coefficient vector of the linear form `a` inside `code`'s monomial basis.
    pub fn coefficients_in(&self, code: &RmCode, a: usize) -> Result<BitWord> {
        let mut c = BitWord::zeros(code.dim());
        for i in 0..self.n {
            if a >> i & 1 == 1 {
                let j = code.monomial_index(1 << i).ok_or_else(|| {
                    Error::Precondition(format!("{} has no linear monomials", code.name()))
                })?;
                c.set(j, true);
            }
        }
        Ok(c)
    }
}

/// A polynomial over GF(2) as a set of monomial masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolynomialF2 {
    pub n: usize,
    pub monomials: BTreeSet<usize>,
}

impl PolynomialF2 {
    pub fn evaluate(&self) -> BitWord {
        let mut anf = BitWord::zeros(1 << self.n);
        for &s in &self.monomials {
            anf.set(s, true);
        }
        mobius_transform(&mut anf, self.n);
        anf
    }

    pub fn from_evaluation(w: &BitWord, n: usize) -> Result<Self> {
        if w.len() != 1 << n {
            return Err(Error::LengthMismatch {
                expected: 1 << n,
                got: w.len(),
            });
        }
        let mut anf = w.clone();
        mobius_transform(&mut anf, n);
        Ok(PolynomialF2 {
            n,
            monomials: anf.support().into_iter().collect(),
        })
    }

    pub fn degree(&self) -> Option<usize> {
        self.monomials.iter().map(|s| s.count_ones() as usize).max()
    }
}

/// The tested code `C = RM(n, n-d-1)` together with the vertex code
/// `D = C^⊥ = RM(n, d)`.
///
/// A coefficient vector `x` of `D` is a vertex; the character of `alpha`
/// evaluates to `(-1)^{<x, beta>}` with `beta = tested.syndrome(alpha)`.
#[derive(Clone, Debug)]
pub struct CodePair {
    pub n: usize,
    pub d: usize,
    pub tested: RmCode,
    pub dual: RmCode,
    lift: PairingSolver,
}

impl CodePair {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if d + 1 > n {
            return Err(Error::Precondition(format!(
                "code pair needs d <= n-1, got n={n}, d={d}"
            )));
        }
        let tested = RmCode::new(n, n - d - 1)?;
        let dual = RmCode::new(n, d)?;
        let lift = PairingSolver::new(dual.generators())?;
        Ok(CodePair {
            n,
            d,
            tested,
            dual,
            lift,
        })
    }

    pub fn block_len(&self) -> usize {
        1 << self.n
    }

    /// Dimension of the vertex code `D`.
    pub fn dim(&self) -> usize {
        self.dual.dim()
    }

    /// Minimum distance of `C`, `2^{d+1}`.
    pub fn distance(&self) -> usize {
        self.tested.min_distance()
    }

    /// Character index of `alpha` in `D`'s coefficient space.
    pub fn char_index(&self, alpha: &BitWord) -> Result<BitWord> {
        self.tested.syndrome(alpha)
    }

    /// A word whose character index is `beta`.
    pub fn lift(&self, beta: &BitWord) -> Result<BitWord> {
        self.lift.solve(beta)
    }

    /// Coefficient-space indices need `dim <= 64` for the `u64` fast paths.
    pub fn require_small_dim(&self) -> Result<()> {
        if self.dim() > 64 {
            return Err(Error::Precondition(format!(
                "{} has dimension {} > 64",
                self.dual.name(),
                self.dim()
            )));
        }
        Ok(())
    }
}
