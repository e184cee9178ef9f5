//! Bit-packed vectors and matrices over GF(2).
//!
//! Points of GF(2)^n are enumerated little-endian: point `x` is the integer
//! whose bit `i` is variable `i`. Every evaluation vector in the crate uses
//! this order.

use std::fmt;
use std::ops::{BitAnd, BitXor, BitXorAssign};
use std::str::FromStr;

use smallvec::SmallVec;

use crate::error::{Error, Result};

type Blocks = SmallVec<[u64; 2]>;

/// A packed vector over GF(2). Bits at positions `>= len` are always zero.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWord {
    len: usize,
    blocks: Blocks,
}

fn block_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitWord {
    pub fn zeros(len: usize) -> Self {
        BitWord {
            len,
            blocks: SmallVec::from_elem(0, block_count(len)),
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut w = BitWord {
            len,
            blocks: SmallVec::from_elem(u64::MAX, block_count(len)),
        };
        w.clear_tail();
        w
    }

    pub fn unit(len: usize, i: usize) -> Self {
        let mut w = Self::zeros(len);
        w.set(i, true);
        w
    }

    /// Builds a word of length `len <= 64` from the low bits of `value`.
    pub fn from_u64(len: usize, value: u64) -> Self {
        assert!(len <= 64, "from_u64 needs len <= 64");
        let mut w = Self::zeros(len);
        if len > 0 {
            w.blocks[0] = value;
            w.clear_tail();
        }
        w
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let bits: Vec<bool> = bits.into_iter().collect();
        let mut w = Self::zeros(bits.len());
        for (i, b) in bits.into_iter().enumerate() {
            if b {
                w.set(i, true);
            }
        }
        w
    }

    pub fn from_support(len: usize, support: &[usize]) -> Self {
        let mut w = Self::zeros(len);
        for &i in support {
            w.set(i, true);
        }
        w
    }

    /// The low 64 bits as an integer. Only meaningful for `len <= 64`.
    pub fn as_u64(&self) -> u64 {
        debug_assert!(self.len <= 64);
        self.blocks.first().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.blocks[i >> 6] >> (i & 63) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u64 << (i & 63);
        if value {
            self.blocks[i >> 6] |= mask;
        } else {
            self.blocks[i >> 6] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.blocks[i >> 6] ^= 1u64 << (i & 63);
    }

    pub fn weight(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|&b| b == 0)
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitWord) -> bool {
        debug_assert_eq!(self.len, other.len);
        let mut acc = 0u64;
        for (a, b) in self.blocks.iter().zip(other.blocks.iter()) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }

    pub fn distance(&self, other: &BitWord) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.blocks
            .iter()
            .zip(other.blocks.iter())
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn xor_assign(&mut self, other: &BitWord) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.blocks.iter_mut().zip(other.blocks.iter()) {
            *a ^= b;
        }
    }

    pub fn and_assign(&mut self, other: &BitWord) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.blocks.iter_mut().zip(other.blocks.iter()) {
            *a &= b;
        }
    }

    pub fn not_assign(&mut self) {
        for b in self.blocks.iter_mut() {
            *b = !*b;
        }
        self.clear_tail();
    }

    /// Positions of the set bits in increasing order.
    pub fn support(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.weight());
        for (k, &block) in self.blocks.iter().enumerate() {
            let mut b = block;
            while b != 0 {
                out.push(k * 64 + b.trailing_zeros() as usize);
                b &= b - 1;
            }
        }
        out
    }

    /// Big-endian hex of the word read as an integer, `ceil(len/4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4).max(1);
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let mut nib = 0u8;
            for j in 0..4 {
                let i = 4 * d + j;
                if i < self.len && self.get(i) {
                    nib |= 1 << j;
                }
            }
            s.push(char::from_digit(nib as u32, 16).unwrap());
        }
        s
    }

    pub fn from_hex(len: usize, hex: &str) -> Result<Self> {
        let hex = hex.trim().trim_start_matches("0x");
        let mut w = Self::zeros(len);
        for (d, c) in hex.chars().rev().enumerate() {
            let nib = c
                .to_digit(16)
                .ok_or_else(|| Error::Parse(format!("bad hex digit {c:?}")))?;
            for j in 0..4 {
                if nib >> j & 1 == 1 {
                    let i = 4 * d + j;
                    if i >= len {
                        return Err(Error::Parse(format!(
                            "hex value {hex} does not fit in {len} bits"
                        )));
                    }
                    w.set(i, true);
                }
            }
        }
        Ok(w)
    }

    fn clear_tail(&mut self) {
        let r = self.len & 63;
        if r != 0 {
            if let Some(last) = self.blocks.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({self})")
    }
}

/// Parses a bit string such as `"0101"`; character `i` is bit `i`.
impl FromStr for BitWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("bad bit {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitWord::from_bits)
    }
}

impl BitXor for &BitWord {
    type Output = BitWord;

    fn bitxor(self, rhs: &BitWord) -> BitWord {
        let mut out = self.clone();
        out.xor_assign(rhs);
        out
    }
}

impl BitXorAssign<&BitWord> for BitWord {
    fn bitxor_assign(&mut self, rhs: &BitWord) {
        self.xor_assign(rhs);
    }
}

impl BitAnd for &BitWord {
    type Output = BitWord;

    fn bitand(self, rhs: &BitWord) -> BitWord {
        let mut out = self.clone();
        out.and_assign(rhs);
        out
    }
}

pub fn weight(v: &BitWord) -> usize {
    v.weight()
}

/// A matrix over GF(2) stored as packed rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GF2Matrix {
    ncols: usize,
    rows: Vec<BitWord>,
}

impl GF2Matrix {
    pub fn new(ncols: usize) -> Self {
        GF2Matrix {
            ncols,
            rows: Vec::new(),
        }
    }

    pub fn from_rows(ncols: usize, rows: Vec<BitWord>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
            return Err(Error::LengthMismatch {
                expected: ncols,
                got: bad.len(),
            });
        }
        Ok(GF2Matrix { ncols, rows })
    }

    pub fn identity(n: usize) -> Self {
        GF2Matrix {
            ncols: n,
            rows: (0..n).map(|i| BitWord::unit(n, i)).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &BitWord {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitWord] {
        &self.rows
    }

    pub fn push_row(&mut self, row: BitWord) -> Result<()> {
        if row.len() != self.ncols {
            return Err(Error::LengthMismatch {
                expected: self.ncols,
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn rank(&self) -> usize {
        reduce(&self.rows, self.ncols).pivots.len()
    }

    /// `M v`: the inner products of every row with `v`.
    pub fn mul_vec(&self, v: &BitWord) -> Result<BitWord> {
        if v.len() != self.ncols {
            return Err(Error::LengthMismatch {
                expected: self.ncols,
                got: v.len(),
            });
        }
        Ok(BitWord::from_bits(self.rows.iter().map(|r| r.dot(v))))
    }

    /// `Σ coeffs_i row_i`.
    pub fn combine(&self, coeffs: &BitWord) -> Result<BitWord> {
        if coeffs.len() != self.nrows() {
            return Err(Error::LengthMismatch {
                expected: self.nrows(),
                got: coeffs.len(),
            });
        }
        let mut out = BitWord::zeros(self.ncols);
        for i in coeffs.support() {
            out.xor_assign(&self.rows[i]);
        }
        Ok(out)
    }

    pub fn transpose(&self) -> GF2Matrix {
        let mut cols = vec![BitWord::zeros(self.nrows()); self.ncols];
        for (r, row) in self.rows.iter().enumerate() {
            for c in row.support() {
                cols[c].set(r, true);
            }
        }
        GF2Matrix {
            ncols: self.nrows(),
            rows: cols,
        }
    }

    /// Product `self * other` (rows of the result are combinations of `other`'s rows).
    pub fn mul(&self, other: &GF2Matrix) -> Result<GF2Matrix> {
        let rows = self
            .rows
            .iter()
            .map(|r| other.combine(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(GF2Matrix {
            ncols: other.ncols,
            rows,
        })
    }
}

pub fn rank(m: &GF2Matrix) -> usize {
    m.rank()
}

struct Reduced {
    /// Reduced rows, one per pivot.
    rows: Vec<BitWord>,
    /// For each reduced row, which original rows were summed to produce it.
    combos: Vec<BitWord>,
    pivots: Vec<usize>,
}

/// Gauss-Jordan elimination to reduced row-echelon form, tracking row combinations.
fn reduce(rows: &[BitWord], ncols: usize) -> Reduced {
    let m = rows.len();
    let mut work: Vec<(BitWord, BitWord)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.clone(), BitWord::unit(m, i)))
        .collect();
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..ncols {
        if next == work.len() {
            break;
        }
        let Some(p) = (next..work.len()).find(|&i| work[i].0.get(col)) else {
            continue;
        };
        work.swap(next, p);
        let (pr, pc) = work[next].clone();
        for (i, (r, c)) in work.iter_mut().enumerate() {
            if i != next && r.get(col) {
                r.xor_assign(&pr);
                c.xor_assign(&pc);
            }
        }
        pivots.push(col);
        next += 1;
    }
    work.truncate(next);
    let (rows, combos) = work.into_iter().unzip();
    Reduced {
        rows,
        combos,
        pivots,
    }
}

/// Solves `M x = b` for a full-row-rank `M` through a precomputed
/// pseudo-inverse. Solutions are supported on the pivot columns.
#[derive(Clone, Debug)]
pub struct PairingSolver {
    ncols: usize,
    pivots: Vec<usize>,
    /// Row `k` holds the combination of original rows reduced onto pivot `k`.
    combos: Vec<BitWord>,
}

impl PairingSolver {
    pub fn new(m: &GF2Matrix) -> Result<Self> {
        let red = reduce(m.rows(), m.ncols());
        if red.pivots.len() != m.nrows() {
            return Err(Error::Precondition(format!(
                "matrix has rank {} < {} rows",
                red.pivots.len(),
                m.nrows()
            )));
        }
        Ok(PairingSolver {
            ncols: m.ncols(),
            pivots: red.pivots,
            combos: red.combos,
        })
    }

    pub fn solve(&self, b: &BitWord) -> Result<BitWord> {
        if b.len() != self.combos.len() {
            return Err(Error::LengthMismatch {
                expected: self.combos.len(),
                got: b.len(),
            });
        }
        let mut x = BitWord::zeros(self.ncols);
        for (k, combo) in self.combos.iter().enumerate() {
            if combo.dot(b) {
                x.set(self.pivots[k], true);
            }
        }
        Ok(x)
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }
}

/// Reduced row-echelon basis of the row space.
pub fn row_echelon(m: &GF2Matrix) -> (GF2Matrix, Vec<usize>) {
    let red = reduce(m.rows(), m.ncols());
    (
        GF2Matrix {
            ncols: m.ncols(),
            rows: red.rows,
        },
        red.pivots,
    )
}

/// The affine form `x ↦ <linear, x> + constant` on GF(2)^n.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineForm {
    pub linear: BitWord,
    pub constant: bool,
}

impl AffineForm {
    pub fn new(linear: BitWord, constant: bool) -> Self {
        AffineForm { linear, constant }
    }

    pub fn at(&self, x: usize) -> bool {
        let mut acc = self.constant;
        for i in self.linear.support() {
            acc ^= x >> i & 1 == 1;
        }
        acc
    }
}

/// Evaluation vector of `f` over all `2^n` points.
pub fn evaluate_affine(f: &AffineForm, n: usize) -> Result<BitWord> {
    if f.linear.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: f.linear.len(),
        });
    }
    let mut mask = 0usize;
    for i in f.linear.support() {
        mask |= 1 << i;
    }
    Ok(linear_mask_eval(n, mask, f.constant))
}

/// Evaluation vector of `x ↦ parity(mask & x) + constant`.
pub fn linear_mask_eval(n: usize, mask: usize, constant: bool) -> BitWord {
    let len = 1usize << n;
    let mut w = BitWord::zeros(len);
    for x in 0..len {
        if ((x & mask).count_ones() & 1 == 1) ^ constant {
            w.set(x, true);
        }
    }
    w
}

const LOW_HALF: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

/// In-place binary Möbius transform on a word of length `2^n`.
///
/// It maps an evaluation vector to its algebraic normal form (bit `S` set iff
/// the monomial `x_S` appears) and, being an involution, back again.
pub fn mobius_transform(w: &mut BitWord, n: usize) {
    assert_eq!(w.len(), 1 << n);
    for i in 0..n.min(6) {
        let shift = 1u32 << i;
        for b in w.blocks.iter_mut() {
            *b ^= (*b & LOW_HALF[i]) << shift;
        }
    }
    for i in 6..n {
        let stride = 1usize << (i - 6);
        for k in 0..w.blocks.len() {
            if k & stride != 0 {
                let lo = w.blocks[k ^ stride];
                w.blocks[k] ^= lo;
            }
        }
    }
    w.clear_tail();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(s: &str) -> BitWord {
        s.parse().unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(GF2Matrix::identity(3).rank(), 3);
        let zero = GF2Matrix::from_rows(5, vec![BitWord::zeros(5); 4]).unwrap();
        assert_eq!(zero.rank(), 0);
        let m = GF2Matrix::from_rows(3, vec![word("110"), word("011"), word("101")]).unwrap();
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(word("00000").weight(), 0);
        assert_eq!(word("10110").weight(), 3);
        let f = AffineForm::new(word("01100"), false);
        assert_eq!(evaluate_affine(&f, 5).unwrap().weight(), 16);
    }

    #[test]
    fn affine_examples() {
        let c = AffineForm::new(BitWord::zeros(3), true);
        assert_eq!(evaluate_affine(&c, 3).unwrap().to_string(), "11111111");
        let e1 = AffineForm::new(word("10"), false);
        assert_eq!(evaluate_affine(&e1, 2).unwrap().to_string(), "0101");
        assert!(evaluate_affine(&e1, 3).is_err());
    }

    #[test]
    fn nonzero_linear_forms_are_balanced() {
        for mask in 1..32usize {
            let f = AffineForm::new(BitWord::from_u64(5, mask as u64), mask % 2 == 0);
            let w = evaluate_affine(&f, 5).unwrap();
            let brute = (0..32).filter(|&x| f.at(x)).count();
            assert_eq!(w.weight(), 16);
            assert_eq!(brute, 16);
        }
    }

    #[test]
    fn hex_round_trip_and_tail() {
        let w = BitWord::from_support(70, &[0, 5, 64, 69]);
        assert_eq!(BitWord::from_hex(70, &w.to_hex()).unwrap(), w);
        assert_eq!(BitWord::from_u64(8, 0x1a).to_hex(), "1a");
        assert!(BitWord::from_hex(4, "1f").is_err());
        let ones = BitWord::ones(70);
        assert_eq!(ones.weight(), 70);
        let mut z = BitWord::zeros(70);
        z.not_assign();
        assert_eq!(z, ones);
    }

    #[test]
    fn solver_inverts_pairing() {
        let m = GF2Matrix::from_rows(4, vec![word("1100"), word("0110"), word("1111")]).unwrap();
        let s = PairingSolver::new(&m).unwrap();
        for b in 0..8u64 {
            let b = BitWord::from_u64(3, b);
            let x = s.solve(&b).unwrap();
            assert_eq!(m.mul_vec(&x).unwrap(), b);
        }
        let deficient = GF2Matrix::from_rows(2, vec![word("11"), word("11")]).unwrap();
        assert!(PairingSolver::new(&deficient).is_err());
    }

    #[test]
    fn mobius_matches_naive_anf() {
        for n in 0..8usize {
            let len = 1 << n;
            let mut f = BitWord::zeros(len);
            for x in 0..len {
                if ((x * 2654435761usize) >> 7) & 1 == 1 {
                    f.set(x, true);
                }
            }
            let mut anf = f.clone();
            mobius_transform(&mut anf, n);
            // Evaluate the ANF back pointwise: f(x) = XOR over S ⊆ x of a_S.
            for x in 0..len {
                let v = (0..len).filter(|&s| s & !x == 0 && anf.get(s)).count() & 1 == 1;
                assert_eq!(v, f.get(x));
            }
            mobius_transform(&mut anf, n);
            assert_eq!(anf, f);
        }
    }

    fn arb_word(len: usize) -> impl Strategy<Value = BitWord> {
        proptest::collection::vec(any::<bool>(), len).prop_map(BitWord::from_bits)
    }

    proptest! {
        #[test]
        fn rank_is_bounded(rows in proptest::collection::vec(arb_word(9), 0..12)) {
            let m = GF2Matrix::from_rows(9, rows).unwrap();
            prop_assert!(m.rank() <= m.nrows().min(m.ncols()));
            prop_assert_eq!(m.rank(), m.transpose().rank());
        }

        #[test]
        fn distance_is_a_metric(a in arb_word(77), b in arb_word(77), c in arb_word(77)) {
            prop_assert_eq!((&a ^ &b).weight(), a.distance(&b));
            prop_assert!(a.distance(&c) <= a.distance(&b) + b.distance(&c));
        }

        #[test]
        fn affine_sum_is_pointwise(lin in arb_word(5), c1: bool, c2: bool) {
            let f = AffineForm::new(lin.clone(), c1);
            let g = AffineForm::new(lin.clone(), c2);
            let sum = AffineForm::new(BitWord::zeros(5), c1 ^ c2);
            let lhs = &evaluate_affine(&f, 5).unwrap() ^ &evaluate_affine(&g, 5).unwrap();
            prop_assert_eq!(lhs, evaluate_affine(&sum, 5).unwrap());
        }

        #[test]
        fn affine_forms_add(l1 in arb_word(6), l2 in arb_word(6), c1: bool, c2: bool) {
            let f = evaluate_affine(&AffineForm::new(l1.clone(), c1), 6).unwrap();
            let g = evaluate_affine(&AffineForm::new(l2.clone(), c2), 6).unwrap();
            let h = evaluate_affine(&AffineForm::new(&l1 ^ &l2, c1 ^ c2), 6).unwrap();
            prop_assert_eq!(&f ^ &g, h);
        }
    }
}
