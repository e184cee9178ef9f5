//! Real functions on `D`, their Walsh-Hadamard coefficients, influences and
//! noise stability.
//!
//! A dense function is an array over coefficient vectors `x ∈ GF(2)^dim`.
//! Coefficient `beta` pairs with `x` as `(-1)^{<beta, x>}`, and `beta` is the
//! syndrome of any word in the corresponding coset of `C`.

use std::borrow::Cow;
use std::io::{Read, Write};
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitWord;
use crate::rm::{for_each_combination, CodePair, CosetRep};
use crate::spectrum::{eigenvalue_table, CayleyGraph, MAX_DENSE_DIM};

/// Unnormalized fast Walsh-Hadamard transform: `a[beta] <- Σ_x a[x] (-1)^{<beta,x>}`.
pub fn wht_in_place(a: &mut [f64]) {
    let n = a.len();
    assert!(n.is_power_of_two(), "WHT length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in a.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

#[derive(Clone, Debug)]
pub enum Repr {
    Dense(Vec<f64>),
    /// Terms in pairwise distinct cosets.
    Sparse(Vec<(CosetRep, f64)>),
}

#[derive(Clone, Debug)]
pub struct CodeFunction {
    pair: Arc<CodePair>,
    repr: Repr,
}

#[derive(Clone, Debug, Serialize)]
pub struct InfluenceTable {
    pub ell: usize,
    pub values: Vec<f64>,
    pub total: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub n: usize,
    pub d: usize,
    pub dim: usize,
}

fn dense_budget(dim: usize) -> Result<()> {
    if dim > MAX_DENSE_DIM {
        return Err(Error::BudgetExceeded {
            what: "dense function",
            needed: 1u128 << dim,
            budget: 1u128 << MAX_DENSE_DIM,
        });
    }
    Ok(())
}

impl CodeFunction {
    pub fn dense(pair: Arc<CodePair>, values: Vec<f64>) -> Result<Self> {
        dense_budget(pair.dim())?;
        if values.len() != 1 << pair.dim() {
            return Err(Error::LengthMismatch {
                expected: 1 << pair.dim(),
                got: values.len(),
            });
        }
        Ok(CodeFunction {
            pair,
            repr: Repr::Dense(values),
        })
    }

    pub fn from_fn<F: Fn(u64) -> f64>(pair: Arc<CodePair>, f: F) -> Result<Self> {
        dense_budget(pair.dim())?;
        let values = (0..1u64 << pair.dim()).map(f).collect();
        Self::dense(pair, values)
    }

    /// `Σ c_j chi_{alpha_j}` with leaders resolved up to half the distance.
    pub fn sparse(pair: Arc<CodePair>, terms: Vec<(BitWord, f64)>) -> Result<Self> {
        let w_max = pair.distance() / 2;
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(terms.len());
        for (alpha, c) in terms {
            let syn = pair.char_index(&alpha)?;
            if !seen.insert(syn) {
                return Err(Error::Precondition("sparse terms share a coset".into()));
            }
            out.push((pair.tested.coset_leader(&alpha, w_max)?, c));
        }
        Ok(CodeFunction {
            pair,
            repr: Repr::Sparse(out),
        })
    }

    pub fn pair(&self) -> &Arc<CodePair> {
        &self.pair
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    /// Dense values, expanding a sparse representation if needed.
    pub fn values(&self) -> Result<Cow<'_, [f64]>> {
        match &self.repr {
            Repr::Dense(v) => Ok(Cow::Borrowed(v)),
            Repr::Sparse(terms) => {
                let dim = self.pair.dim();
                dense_budget(dim)?;
                let mut coeffs = vec![0.0; 1 << dim];
                for (rep, c) in terms {
                    coeffs[self.pair.char_index(&rep.leader)?.as_u64() as usize] += c;
                }
                wht_in_place(&mut coeffs);
                Ok(Cow::Owned(coeffs))
            }
        }
    }

    pub fn to_dense(&self) -> Result<CodeFunction> {
        Ok(CodeFunction {
            pair: self.pair.clone(),
            repr: Repr::Dense(self.values()?.into_owned()),
        })
    }

    /// Normalized coefficients `f̂(beta) = E_x[f(x) (-1)^{<beta,x>}]`.
    pub fn wht(&self) -> Result<Vec<f64>> {
        let mut a = self.values()?.into_owned();
        wht_in_place(&mut a);
        let scale = 1.0 / a.len() as f64;
        a.iter_mut().for_each(|v| *v *= scale);
        Ok(a)
    }

    pub fn mean(&self) -> Result<f64> {
        match &self.repr {
            Repr::Dense(v) => Ok(v.iter().sum::<f64>() / v.len() as f64),
            Repr::Sparse(t) => Ok(t.iter().filter(|(r, _)| r.degree == 0).map(|(_, c)| c).sum()),
        }
    }

    pub fn second_moment(&self) -> Result<f64> {
        match &self.repr {
            Repr::Dense(v) => Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64),
            Repr::Sparse(t) => Ok(t.iter().map(|(_, c)| c * c).sum()),
        }
    }

    pub fn variance(&self) -> Result<f64> {
        let m = self.mean()?;
        Ok(self.second_moment()? - m * m)
    }

    /// Lifts `beta` to a word and resolves its coset leader.
    pub fn coefficient_by_coset(&self, coeffs: &[f64], beta: u64) -> Result<(CosetRep, f64)> {
        let dim = self.pair.dim();
        if coeffs.len() != 1 << dim || (dim < 64 && beta >> dim != 0) {
            return Err(Error::Precondition(format!("index {beta:#x} outside 2^{dim}")));
        }
        let alpha = self.pair.lift(&BitWord::from_u64(dim, beta))?;
        let rep = self.pair.tested.coset_leader(&alpha, self.pair.distance() / 2)?;
        Ok((rep, coeffs[beta as usize]))
    }

    /// `Inf_i^{<=ell}`: squared coefficients of characters of degree `1..=ell`
    /// whose leader contains `i`.
    pub fn influences(&self, ell: usize) -> Result<InfluenceTable> {
        let half = self.pair.distance() / 2;
        if ell >= half {
            return Err(Error::Precondition(format!(
                "influences need ell < D/2 = {half}, got {ell}"
            )));
        }
        let len = self.pair.block_len();
        let mut values = vec![0.0; len];
        match &self.repr {
            Repr::Dense(_) => {
                let coeffs = self.wht()?;
                for w in 1..=ell {
                    let _ = for_each_combination(
                        self.pair.tested.columns_slice(),
                        w,
                        |support, syn| {
                            let c = coeffs[syn.as_u64() as usize];
                            for &i in support {
                                values[i] += c * c;
                            }
                            ControlFlow::Continue(())
                        },
                    );
                }
            }
            Repr::Sparse(terms) => {
                for (rep, c) in terms.iter().filter(|(r, _)| (1..=ell).contains(&r.degree)) {
                    for i in rep.leader.support() {
                        values[i] += c * c;
                    }
                }
            }
        }
        Ok(InfluenceTable {
            ell,
            total: values.iter().sum(),
            values,
            variance: self.variance()?,
        })
    }

    /// `<f, G f> = Σ_beta lambda_beta f̂(beta)^2`.
    pub fn noise_stability(&self, graph: &CayleyGraph) -> Result<f64> {
        match &self.repr {
            Repr::Dense(_) => {
                let table = eigenvalue_table(graph.tester())?;
                let coeffs = self.wht()?;
                Ok(coeffs.iter().zip(&table).map(|(c, l)| l * c * c).sum())
            }
            Repr::Sparse(terms) => {
                let mut acc = 0.0;
                for (rep, c) in terms {
                    let lambda = 1.0 - 2.0 * graph.tester().exact_rejection(&rep.leader)?;
                    acc += lambda * c * c;
                }
                Ok(acc)
            }
        }
    }

    /// Writes a one-line JSON header followed by little-endian `f64` values.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let header = DumpHeader {
            n: self.pair.n,
            d: self.pair.d,
            dim: self.pair.dim(),
        };
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        let json = serde_json::to_string(&header).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out, "{json}").map_err(io)?;
        for v in self.values()?.iter() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<CodeFunction> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("missing dump header".into()))?;
        let header: DumpHeader =
            serde_json::from_slice(&bytes[..split]).map_err(|e| Error::Parse(e.to_string()))?;
        let pair = Arc::new(CodePair::new(header.n, header.d)?);
        if pair.dim() != header.dim {
            return Err(Error::Parse(format!(
                "header dim {} disagrees with RM({},{})",
                header.dim, header.n, header.d
            )));
        }
        let body = &bytes[split + 1..];
        if body.len() != 8 << header.dim {
            return Err(Error::Parse(format!("dump body has {} bytes", body.len())));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        CodeFunction::dense(pair, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc;
    use crate::tester::rm_tester;
    use rand::Rng;

    fn pair52() -> Arc<CodePair> {
        Arc::new(CodePair::new(5, 2).unwrap())
    }

    fn parity(x: u64) -> f64 {
        if x.count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn wht_examples() {
        let p = pair52();
        let one = CodeFunction::from_fn(p.clone(), |_| 1.0).unwrap().wht().unwrap();
        assert_eq!(one[0], 1.0);
        assert!(one[1..].iter().all(|&c| c == 0.0));
        let chi = CodeFunction::from_fn(p, |x| parity(x & 0b100)).unwrap().wht().unwrap();
        for (b, &c) in chi.iter().enumerate() {
            assert_eq!(c, if b == 0b100 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn involution_and_parseval() {
        let p = pair52();
        let mut rng = mc::stream_rng(2, 0);
        let values: Vec<f64> = (0..1 << 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = CodeFunction::dense(p.clone(), values.clone()).unwrap();
        let coeffs = f.wht().unwrap();
        let back = CodeFunction::dense(p, coeffs.clone()).unwrap().wht().unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert!((a / 65536.0 - b).abs() < 1e-12);
        }
        let parseval: f64 = coeffs.iter().map(|c| c * c).sum();
        assert!((parseval - f.second_moment().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn coefficient_by_coset_examples() {
        let p = pair52();
        let f = CodeFunction::from_fn(p.clone(), |x| parity(x & 0b10)).unwrap();
        let coeffs = f.wht().unwrap();
        let (rep, v) = f.coefficient_by_coset(&coeffs, 0).unwrap();
        assert_eq!((rep.degree, v), (0, 0.0));
        // beta = e_1 selects the generator x_0; find its leader by search.
        let (rep, v) = f.coefficient_by_coset(&coeffs, 0b10).unwrap();
        assert_eq!(v, 1.0);
        let oracle = p.tested.coset_leader(&rep.alpha, 4).unwrap();
        assert_eq!(rep.degree, oracle.degree);
        assert_eq!(p.char_index(&rep.leader).unwrap().as_u64(), 0b10);
    }

    #[test]
    fn dictator_influence() {
        let p = pair52();
        let i = 6;
        let cut = p.char_index(&BitWord::unit(32, i)).unwrap().as_u64();
        let f = CodeFunction::from_fn(p, |x| parity(x & cut)).unwrap();
        let inf = f.influences(1).unwrap();
        for (j, &v) in inf.values.iter().enumerate() {
            assert!((v - if j == i { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        assert!(f.influences(4).is_err());
    }

    #[test]
    fn influence_sum_and_monotonicity() {
        let p = pair52();
        let mut rng = mc::stream_rng(8, 0);
        let values: Vec<f64> = (0..1 << 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = CodeFunction::dense(p, values).unwrap();
        let mut prev = vec![0.0; 32];
        for ell in 1..=3 {
            let inf = f.influences(ell).unwrap();
            assert!(inf.total <= ell as f64 * inf.variance + 1e-12);
            for (a, b) in prev.iter().zip(&inf.values) {
                assert!(*b >= *a - 1e-15);
            }
            prev = inf.values;
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let p = pair52();
        let terms = vec![
            (BitWord::zeros(32), 0.5),
            (BitWord::unit(32, 3), 0.25),
            (BitWord::from_support(32, &[1, 9]), -0.5),
            (BitWord::from_support(32, &[2, 4, 30]), 0.125),
        ];
        let sparse = CodeFunction::sparse(p.clone(), terms).unwrap();
        let dense = sparse.to_dense().unwrap();
        let a = sparse.influences(3).unwrap();
        let b = dense.influences(3).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let g = CayleyGraph::new(rm_tester(5, 2).unwrap()).unwrap();
        let s1 = sparse.noise_stability(&g).unwrap();
        let s2 = dense.noise_stability(&g).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
        assert!((sparse.variance().unwrap() - dense.variance().unwrap()).abs() < 1e-12);
        let dup = vec![(BitWord::unit(32, 1), 1.0), (BitWord::unit(32, 1), 2.0)];
        assert!(CodeFunction::sparse(p, dup).is_err());
    }

    #[test]
    fn stability_examples() {
        let p = pair52();
        let g = CayleyGraph::new(rm_tester(5, 2).unwrap()).unwrap();
        let one = CodeFunction::from_fn(p.clone(), |_| 1.0).unwrap();
        assert!((one.noise_stability(&g).unwrap() - 1.0).abs() < 1e-12);
        let cut = p.char_index(&BitWord::unit(32, 0)).unwrap().as_u64();
        let ind = CodeFunction::from_fn(p.clone(), |x| ((x & cut).count_ones() % 2) as f64).unwrap();
        let stab = ind.noise_stability(&g).unwrap();
        assert!((stab - 0.375).abs() < 1e-12);
        // 1 - <f,Gf>/E[f^2] is the expansion of the support set.
        let phi = 1.0 - stab / ind.second_moment().unwrap();
        let rec = g
            .expansion(
                &crate::spectrum::SetSpec::DictatorCut { coordinate: 0 },
                Default::default(),
            )
            .unwrap();
        assert!((phi - rec.phi).abs() < 1e-9);
        // Mean-zero f: <f,Gf> <= max lambda * E[f^2].
        let mut rng = mc::stream_rng(3, 0);
        let mut v: Vec<f64> = (0..1 << 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
        let f = CodeFunction::dense(p, v).unwrap();
        let table = g.eigenvalue_table().unwrap();
        let max = table[1..].iter().cloned().fold(f64::MIN, f64::max);
        assert!(f.noise_stability(&g).unwrap() <= max * f.second_moment().unwrap() + 1e-12);
    }

    #[test]
    fn dump_round_trip() {
        let p = Arc::new(CodePair::new(4, 1).unwrap());
        let f = CodeFunction::from_fn(p, |x| x as f64 * 0.5).unwrap();
        let mut buf = Vec::new();
        f.write_dump(&mut buf).unwrap();
        assert!(buf.starts_with(b"{\"n\":4,\"d\":1,\"dim\":5}\n"));
        let g = CodeFunction::read_dump(&buf[..]).unwrap();
        assert_eq!(g.values().unwrap(), f.values().unwrap());
        assert!(CodeFunction::read_dump(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn dense_budget_is_enforced() {
        let p = Arc::new(CodePair::new(6, 3).unwrap());
        assert!(matches!(
            CodeFunction::from_fn(p, |_| 0.0),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
