//! Gaussian stability curve, the ζ functional, multilinear polynomials over
//! ±1 variables, an MZ-style sampler for RM codewords, and Monte Carlo
//! harnesses comparing code distributions with the uniform cube.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fourier::CodeFunction;
use crate::gf2::BitWord;
use crate::mc::{self, Estimate, McRng};
use crate::rm::RmCode;
use crate::spectrum::CayleyGraph;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation refined by one
/// Halley step against `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const LOW: f64 = 0.02425;
    let x = if p < LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `Γ_ρ(μ) = Pr[X <= t, Y <= t]` for standard Gaussians with correlation `ρ`
/// and `t = Φ^{-1}(μ)`.
pub fn gamma_rho(rho: f64, mu: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) || !(0.0..=1.0).contains(&mu) {
        return Err(Error::Precondition(format!(
            "gamma_rho needs rho in [-1,1] and mu in [0,1], got rho={rho}, mu={mu}"
        )));
    }
    if mu == 0.0 || mu == 1.0 {
        return Ok(mu);
    }
    let t = normal_quantile(mu);
    let t2 = t * t;
    let integrand = |theta: f64| {
        let den = 1.0 + theta.sin();
        if den <= 0.0 {
            if t2 == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (-t2 / den).exp()
        }
    };
    let upper = rho.asin();
    let integral = if upper >= 0.0 {
        adaptive_simpson(&integrand, 0.0, upper, 1e-13)
    } else {
        -adaptive_simpson(&integrand, upper, 0.0, 1e-13)
    };
    Ok(mu * mu + integral / (2.0 * PI))
}

/// Squared distance of `x` to `[0, 1]`.
pub fn zeta(x: f64) -> f64 {
    let d = (-x).max(x - 1.0).max(0.0);
    d * d
}

/// A multilinear polynomial `Σ_I a_I Π_{i∈I} x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilinearPoly {
    n_vars: usize,
    terms: Vec<(Vec<usize>, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub vars: Vec<usize>,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySpec {
    pub terms: Vec<PolyTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    /// Smallest `ε` with `Σ_{I∋i} a_I^2 <= ε^2 ‖P‖^2` for every `i`.
    pub eps_reg: f64,
    pub argmax: usize,
}

impl MultilinearPoly {
    pub fn new(n_vars: usize, terms: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(terms.len());
        for (mut vars, c) in terms {
            vars.sort_unstable();
            if vars.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Precondition(format!("repeated variable in {vars:?}")));
            }
            if let Some(&v) = vars.iter().find(|&&v| v >= n_vars) {
                return Err(Error::Precondition(format!("variable {v} >= {n_vars}")));
            }
            if !seen.insert(vars.clone()) {
                return Err(Error::Precondition(format!("duplicate term {vars:?}")));
            }
            out.push((vars, c));
        }
        Ok(MultilinearPoly { n_vars, terms: out })
    }

    pub fn from_spec(n_vars: usize, spec: &PolySpec) -> Result<Self> {
        Self::new(
            n_vars,
            spec.terms.iter().map(|t| (t.vars.clone(), t.coeff)).collect(),
        )
    }

    pub fn to_spec(&self) -> PolySpec {
        PolySpec {
            terms: self
                .terms
                .iter()
                .map(|(v, c)| PolyTerm {
                    vars: v.clone(),
                    coeff: *c,
                })
                .collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[(Vec<usize>, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(v, _)| v.len()).max().unwrap_or(0)
    }

    pub fn norm2(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        MultilinearPoly {
            n_vars: self.n_vars,
            terms: self.terms.iter().map(|(v, c)| (v.clone(), c * s)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(v, c)| c * v.iter().map(|&i| x[i]).product::<f64>())
            .sum()
    }

    /// Value at the ±1 point `x_i = (-1)^{w_i}`.
    pub fn eval_word(&self, w: &BitWord) -> f64 {
        self.terms
            .iter()
            .map(|(v, c)| {
                let odd = v.iter().filter(|&&i| w.get(i)).count() & 1 == 1;
                if odd {
                    -c
                } else {
                    *c
                }
            })
            .sum()
    }

    pub fn regularity(&self) -> Result<RegularityReport> {
        let norm = self.norm2();
        if norm <= 0.0 {
            return Err(Error::Precondition("zero polynomial".into()));
        }
        let mut mass = vec![0.0; self.n_vars];
        for (v, c) in &self.terms {
            for &i in v {
                mass[i] += c * c;
            }
        }
        let (argmax, max) = mass
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        Ok(RegularityReport {
            eps_reg: (max / norm).sqrt(),
            argmax,
        })
    }
}

/// `P = Σ_i a_i x_i + Σ_{pairs} b x_i x_j`, with every variable in
/// `matchings` pair terms (a union of random perfect matchings), random signs
/// and degree-2 terms scaled by `pair_scale`, normalized to `‖P‖ = 1`.
pub fn random_regular_poly<R: Rng + ?Sized>(
    n_vars: usize,
    matchings: usize,
    pair_scale: f64,
    rng: &mut R,
) -> Result<MultilinearPoly> {
    if !n_vars.is_multiple_of(2) {
        return Err(Error::Precondition("matchings need an even variable count".into()));
    }
    let sign = |rng: &mut R| if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let mut terms: Vec<(Vec<usize>, f64)> = (0..n_vars).map(|i| (vec![i], sign(rng))).collect();
    let mut used = HashSet::new();
    let mut added = 0;
    let mut attempts = 0;
    while added < matchings {
        attempts += 1;
        if attempts > 1000 * matchings.max(1) {
            return Err(Error::Precondition("could not draw disjoint matchings".into()));
        }
        let perm = rand::seq::index::sample(rng, n_vars, n_vars).into_vec();
        let pairs: Vec<(usize, usize)> = perm
            .chunks(2)
            .map(|p| (p[0].min(p[1]), p[0].max(p[1])))
            .collect();
        if pairs.iter().any(|p| used.contains(p)) {
            continue;
        }
        for &(i, j) in &pairs {
            used.insert((i, j));
            terms.push((vec![i, j], pair_scale * sign(rng)));
        }
        added += 1;
    }
    let p = MultilinearPoly::new(n_vars, terms)?;
    let norm = p.norm2().sqrt();
    Ok(p.scaled(1.0 / norm))
}

#[derive(Clone)]
pub enum Psi {
    Zeta,
    Sign,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Psi {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Psi::Zeta => zeta(x),
            Psi::Sign => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Psi::Custom(f) => f(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Psi::Zeta => "zeta",
            Psi::Sign => "sign",
            Psi::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PointDist {
    Cube,
    Rm { n: usize, d: usize },
    Gaussian,
}

/// A sampler for one of the point distributions, with any code prebuilt.
enum PointSampler {
    Cube,
    Rm(RmCode),
    Gaussian,
}

impl PointSampler {
    fn new(dist: PointDist, n_vars: usize) -> Result<Self> {
        Ok(match dist {
            PointDist::Cube => PointSampler::Cube,
            PointDist::Gaussian => PointSampler::Gaussian,
            PointDist::Rm { n, d } => {
                if 1usize << n != n_vars {
                    return Err(Error::Precondition(format!(
                        "polynomial has {n_vars} variables, RM({n},{d}) has length {}",
                        1usize << n
                    )));
                }
                PointSampler::Rm(RmCode::new(n, d)?)
            }
        })
    }

    fn eval<R: Rng + ?Sized>(&self, p: &MultilinearPoly, rng: &mut R) -> f64 {
        let n = p.n_vars();
        match self {
            PointSampler::Cube => {
                let w = BitWord::from_bits((0..n).map(|_| rng.gen::<bool>()));
                p.eval_word(&w)
            }
            PointSampler::Rm(code) => {
                let coeffs = BitWord::from_bits((0..code.dim()).map(|_| rng.gen::<bool>()));
                p.eval_word(&code.encode(&coeffs).expect("dimensions agree"))
            }
            PointSampler::Gaussian => {
                let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                p.eval(&x)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapReport {
    pub mean_a: Estimate,
    pub mean_b: Estimate,
    pub gap: f64,
    pub stderr: f64,
}

pub fn expectation(
    p: &MultilinearPoly,
    psi: &Psi,
    dist: PointDist,
    samples: u64,
    seed: u64,
) -> Result<Estimate> {
    let sampler = PointSampler::new(dist, p.n_vars())?;
    Ok(mc::mean(samples, seed, |rng: &mut McRng| psi.apply(sampler.eval(p, rng))))
}

/// `|E_a[psi(P)] - E_b[psi(P)]|` with independent sample streams per side.
pub fn invariance_gap(
    p: &MultilinearPoly,
    psi: &Psi,
    dist_a: PointDist,
    dist_b: PointDist,
    samples: u64,
    seed: u64,
) -> Result<GapReport> {
    let mean_a = expectation(p, psi, dist_a, samples, mc::subseed(seed, 1))?;
    let mean_b = expectation(p, psi, dist_b, samples, mc::subseed(seed, 2))?;
    Ok(GapReport {
        gap: (mean_a.value - mean_b.value).abs(),
        stderr: mean_a.stderr.hypot(mean_b.stderr),
        mean_a,
        mean_b,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransferReport {
    pub e_cube: Estimate,
    pub e_rm: Estimate,
    /// `max(0, E_cube - E_rm)`.
    pub excess: f64,
    pub stderr: f64,
    pub allowed_slack: f64,
    /// `E_cube <= E_rm + allowed_slack` within three standard errors.
    pub holds: bool,
}

/// Compares `E[ζ∘P]` on the uniform cube against a uniform RM codeword.
pub fn bounded_distance_transfer(
    p: &MultilinearPoly,
    n: usize,
    d: usize,
    allowed_slack: f64,
    samples: u64,
    seed: u64,
) -> Result<TransferReport> {
    let gap = invariance_gap(p, &Psi::Zeta, PointDist::Cube, PointDist::Rm { n, d }, samples, seed)?;
    let excess = (gap.mean_a.value - gap.mean_b.value).max(0.0);
    Ok(TransferReport {
        e_cube: gap.mean_a,
        e_rm: gap.mean_b,
        excess,
        stderr: gap.stderr,
        allowed_slack,
        holds: excess <= allowed_slack + 3.0 * gap.stderr,
    })
}

/// Uniform sampler over RM(n,d) built from bucket polynomials on the last
/// `n - c` variables, a complementary monomial part, and a random invertible
/// affine change of variables.
#[derive(Clone, Debug)]
pub struct MzSampler {
    n: usize,
    d: usize,
    c: usize,
    bucket_code: RmCode,
    /// Monomials `x_T x_U` (`T` in the first `c` variables) with `|U| > d - c`.
    complement: Vec<usize>,
}

/// `min(d - 1, round(2 log2(1/eps)))`, floored at 0.
pub fn default_block_bits(d: usize, eps: f64) -> usize {
    let c = (2.0 * (1.0 / eps).log2()).round().max(0.0) as usize;
    c.min(d.saturating_sub(1))
}

impl MzSampler {
    pub fn new(n: usize, d: usize, c: usize) -> Result<Self> {
        if d > n || c > d {
            return Err(Error::Precondition(format!(
                "MZ sampler needs c <= d <= n, got n={n}, d={d}, c={c}"
            )));
        }
        let bucket_code = RmCode::new(n - c, d - c)?;
        let low = (1usize << c) - 1;
        let complement = (0..1usize << n)
            .filter(|&m| {
                let u = (m & !low).count_ones() as usize;
                m.count_ones() as usize <= d && u > d - c
            })
            .collect();
        Ok(MzSampler {
            n,
            d,
            c,
            bucket_code,
            complement,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BitWord {
        let (n, c) = (self.n, self.c);
        let len = 1usize << n;
        let inner = 1usize << (n - c);
        let mut w = BitWord::zeros(len);
        for a in 0..1usize << c {
            let coeffs = BitWord::from_bits((0..self.bucket_code.dim()).map(|_| rng.gen::<bool>()));
            let p_a = self.bucket_code.encode(&coeffs).expect("bucket dimension");
            for y in 0..inner {
                if p_a.get(y) {
                    w.set(a | (y << c), true);
                }
            }
        }
        let mut anf = BitWord::zeros(len);
        for &m in &self.complement {
            if rng.gen::<bool>() {
                anf.set(m, true);
            }
        }
        crate::gf2::mobius_transform(&mut anf, n);
        w.xor_assign(&anf);
        let (cols, shift) = random_affine(n, rng);
        let mut z = BitWord::zeros(len);
        for x in 0..len {
            let mut image = shift;
            for (i, col) in cols.iter().enumerate() {
                if x >> i & 1 == 1 {
                    image ^= col;
                }
            }
            if w.get(image) {
                z.set(x, true);
            }
        }
        z
    }

    pub fn degree(&self) -> usize {
        self.d
    }
}

/// Columns of a uniformly random invertible matrix, plus a random shift.
fn random_affine<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, usize) {
    loop {
        let cols: Vec<usize> = (0..n).map(|_| rng.gen_range(0..1usize << n)).collect();
        let mut basis: Vec<usize> = Vec::new();
        for &v in &cols {
            let mut x = v;
            for &b in &basis {
                x = x.min(x ^ b);
            }
            if x != 0 {
                basis.push(x);
                basis.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
        if basis.len() == n {
            return (cols, rng.gen_range(0..1usize << n));
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MisReport {
    pub mu: f64,
    pub rho: f64,
    pub max_influence: f64,
    pub stability: f64,
    pub gamma: f64,
    /// `<f, Gf> - Γ_ρ(μ)`.
    pub slack: f64,
    /// Whether every low-degree influence is at most `tau`.
    pub hypothesis_holds: bool,
    /// `c · log log(1/τ) / ((1-ρ) log(1/τ))`.
    pub error_term: f64,
    pub compliant: bool,
}

/// Compares `<f, G f>` for a `[0,1]`-valued `f` with `Γ_ρ(μ)`.
///
/// `graph` should be a walk whose character eigenvalues play the role of
/// `ρ^{deg}`; `rho` is passed explicitly since the normalization is a choice.
pub fn mis_harness(
    f: &CodeFunction,
    graph: &CayleyGraph,
    rho: f64,
    tau: f64,
    ell: usize,
    c: f64,
) -> Result<MisReport> {
    let values = f.values()?;
    if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Precondition("f must take values in [0,1]".into()));
    }
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::Precondition(format!("tau must lie in (0,1), got {tau}")));
    }
    let mu = f.mean()?;
    let infl = f.influences(ell)?;
    let max_influence = infl.values.iter().cloned().fold(0.0, f64::max);
    let stability = f.noise_stability(graph)?;
    let gamma = gamma_rho(rho, mu)?;
    let slack = stability - gamma;
    let l = (1.0 / tau).ln();
    let error_term = c * l.ln().max(0.0) / ((1.0 - rho) * l);
    let hypothesis_holds = max_influence <= tau;
    Ok(MisReport {
        mu,
        rho,
        max_influence,
        stability,
        gamma,
        slack,
        hypothesis_holds,
        error_term,
        compliant: !hypothesis_holds || slack <= error_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::CodePair;
    use crate::spectrum::CayleyGraph;
    use crate::tester::{rm_tester, CanonicalTester};
    use std::collections::HashMap;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.02425, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-9] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-15 + 1e-12 * p, "p={p}");
        }
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    #[test]
    fn gamma_examples() {
        for i in 0..=20 {
            let mu = i as f64 / 20.0;
            assert!((gamma_rho(0.0, mu).unwrap() - mu * mu).abs() < 1e-12);
            assert!((gamma_rho(1.0, mu).unwrap() - mu).abs() < 1e-9);
            assert!((gamma_rho(-1.0, mu).unwrap() - (2.0 * mu - 1.0).max(0.0)).abs() < 1e-9);
        }
        for &rho in &[0.3f64, 0.7] {
            let closed = 0.25 + rho.asin() / (2.0 * PI);
            assert!((gamma_rho(rho, 0.5).unwrap() - closed).abs() < 1e-12);
        }
        assert!(gamma_rho(1.5, 0.5).is_err());
        assert!(gamma_rho(0.5, -0.1).is_err());
    }

    #[test]
    fn gamma_matches_reference_value() {
        // Bivariate normal CDF at t = Φ^{-1}(1/4), ρ = e^{-0.1}, computed independently.
        let g = gamma_rho((-0.1f64).exp(), 0.25).unwrap();
        assert!((g - 0.194452).abs() < 1e-6, "{g}");
    }

    #[test]
    fn gamma_is_monotone_on_grid() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let rhos: Vec<f64> = (0..=20).map(|i| -1.0 + i as f64 / 10.0).collect();
        let table: Vec<Vec<f64>> = rhos
            .iter()
            .map(|&r| grid.iter().map(|&m| gamma_rho(r, m).unwrap()).collect())
            .collect();
        for (ri, row) in table.iter().enumerate() {
            for mi in 1..row.len() {
                assert!(row[mi] >= row[mi - 1] - 1e-7);
            }
            if ri > 0 {
                for mi in 0..row.len() {
                    assert!(row[mi] >= table[ri - 1][mi] - 1e-7);
                }
            }
            if rhos[ri] >= 0.0 {
                for (mi, &m) in grid.iter().enumerate() {
                    assert!(row[mi] >= m * m - 1e-7);
                }
            }
        }
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(0.5), 0.0);
        assert!((zeta(-0.3) - 0.09).abs() < 1e-15);
        assert!((zeta(1.2) - 0.04).abs() < 1e-15);
        for i in -300..=300 {
            let x = i as f64 / 100.0;
            let z = zeta(x);
            assert!(z >= 0.0);
            assert_eq!(z == 0.0, (0.0..=1.0).contains(&x));
            assert!((zeta(x + 1e-9) - z).abs() < 1e-8);
        }
    }

    #[test]
    fn regularity_examples() {
        let p = MultilinearPoly::new(4, vec![(vec![1], 1.0)]).unwrap();
        assert_eq!(p.regularity().unwrap().eps_reg, 1.0);
        let n = 128;
        let s = 1.0 / (n as f64).sqrt();
        let p = MultilinearPoly::new(n, (0..n).map(|i| (vec![i], s)).collect()).unwrap();
        assert!((p.regularity().unwrap().eps_reg - s).abs() < 1e-12);
        let p = MultilinearPoly::new(4, vec![(vec![0, 1], 1.0), (vec![2, 3], 1.0)]).unwrap();
        assert!((p.regularity().unwrap().eps_reg - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(MultilinearPoly::new(4, vec![]).unwrap().regularity().is_err());
        assert!(MultilinearPoly::new(4, vec![(vec![0, 0], 1.0)]).is_err());
        assert!(MultilinearPoly::new(4, vec![(vec![0, 1], 1.0), (vec![1, 0], 1.0)]).is_err());
    }

    #[test]
    fn random_regular_polys_are_regular() {
        let mut rng = mc::stream_rng(4, 0);
        let p = random_regular_poly(128, 4, 0.3162, &mut rng).unwrap();
        assert_eq!(p.degree(), 2);
        assert!((p.norm2() - 1.0).abs() < 1e-12);
        assert!(p.regularity().unwrap().eps_reg <= 0.1);
    }

    #[test]
    fn mz_sampler_exact_frequencies() {
        let s = MzSampler::new(3, 1, 1).unwrap();
        let code = RmCode::new(3, 1).unwrap();
        let mut rng = mc::stream_rng(10, 0);
        let mut counts: HashMap<BitWord, u64> = HashMap::new();
        let draws = 100_000u64;
        for _ in 0..draws {
            let w = s.sample(&mut rng);
            assert!(code.contains(&w).unwrap());
            *counts.entry(w).or_default() += 1;
        }
        assert_eq!(counts.len(), 16);
        let p = 1.0 / 16.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - draws as f64 * p).abs() < 3.5 * sigma);
        }
        assert!(MzSampler::new(3, 1, 2).is_err());
        assert_eq!(default_block_bits(3, 0.25), 2);
        assert_eq!(default_block_bits(1, 0.25), 0);
    }

    #[test]
    fn mz_sampler_outputs_codewords() {
        for (n, d, c) in [(4, 2, 2), (5, 2, 1), (5, 3, 2), (6, 3, 0)] {
            let s = MzSampler::new(n, d, c).unwrap();
            let code = RmCode::new(n, d).unwrap();
            let mut rng = mc::stream_rng(1, 0);
            for _ in 0..200 {
                assert!(code.contains(&s.sample(&mut rng)).unwrap());
            }
        }
    }

    #[test]
    fn gap_examples() {
        let p = MultilinearPoly::new(128, vec![(vec![1], 1.0)]).unwrap();
        let rep = invariance_gap(&p, &Psi::Zeta, PointDist::Cube, PointDist::Rm { n: 7, d: 3 }, 20_000, 1)
            .unwrap();
        assert!(rep.gap <= 3.0 * rep.stderr + 1e-12);
        assert!((rep.mean_a.value - 0.5).abs() < 0.02);
        let same = invariance_gap(&p, &Psi::Sign, PointDist::Gaussian, PointDist::Gaussian, 20_000, 2)
            .unwrap();
        assert!(same.gap <= 3.0 * same.stderr);
        let bad = invariance_gap(&p, &Psi::Zeta, PointDist::Cube, PointDist::Rm { n: 6, d: 3 }, 10, 1);
        assert!(bad.is_err());
    }

    #[test]
    fn transfer_examples() {
        let n = 128;
        let s = 1.0 / (n as f64).sqrt();
        let p = MultilinearPoly::new(n, (0..n).map(|i| (vec![i], s)).collect()).unwrap();
        let rep = bounded_distance_transfer(&p, 7, 3, 0.05, 20_000, 5).unwrap();
        assert!(rep.holds);
        let big = bounded_distance_transfer(&p.scaled(10.0), 7, 3, 0.0, 20_000, 6).unwrap();
        assert!(big.e_cube.value > 10.0);
        assert!(big.holds);
        let inside = MultilinearPoly::new(n, vec![(vec![], 0.5)]).unwrap();
        let flat = bounded_distance_transfer(&inside, 7, 3, 0.0, 1000, 7).unwrap();
        assert_eq!((flat.e_cube.value, flat.e_rm.value), (0.0, 0.0));
    }

    #[test]
    fn mis_examples() {
        let pair = Arc::new(CodePair::new(5, 2).unwrap());
        let eps = 0.1;
        let base = rm_tester(5, 2).unwrap();
        let walk = CanonicalTester::walk(&base, eps * 8.0).unwrap();
        let g = CayleyGraph::new(walk).unwrap();
        let rho = (-eps).exp();

        let half = CodeFunction::from_fn(pair.clone(), |_| 0.5).unwrap();
        let r = mis_harness(&half, &g, rho, 0.05, 3, 1.0).unwrap();
        assert!((r.stability - 0.25).abs() < 1e-12);
        assert!(r.slack <= 0.0 && r.compliant);

        let cut = pair.char_index(&BitWord::unit(32, 0)).unwrap().as_u64();
        let dict = CodeFunction::from_fn(pair.clone(), |x| ((x & cut).count_ones() % 2) as f64).unwrap();
        let r = mis_harness(&dict, &g, rho, 0.05, 3, 1.0).unwrap();
        assert!(!r.hypothesis_holds && r.compliant);

        let bad = CodeFunction::from_fn(pair, |_| 2.0).unwrap();
        assert!(mis_harness(&bad, &g, rho, 0.05, 3, 1.0).is_err());
    }
}
