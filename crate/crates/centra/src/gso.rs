//! Graph shift operators and their spectral theory: the classical operator
//! zoo, the seven-parameter centrality GSO
//! `Phi(A, V) = m1 V^e1 + m2 V^e2 (A + a I) V^e3 + m3 I`,
//! spectra of two-sided centrality normalizations via a symmetric similarity
//! transform, analytic spectrum moments of the self-loop-augmented Markov
//! averaging operator, Dirichlet energy, and Cheeger-type expansion
//! diagnostics.

use crate::centrality::CentralityVector;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::sym_eig;
use ndarray::{Array2, ArrayView2};
use serde::Serialize;

/// The seven scalars of the parameterized centrality GSO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CgsoParams {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub a: f64,
}

impl CgsoParams {
    pub fn new(m1: f64, m2: f64, m3: f64, e1: f64, e2: f64, e3: f64, a: f64) -> Self {
        Self {
            m1,
            m2,
            m3,
            e1,
            e2,
            e3,
            a,
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [self.m1, self.m2, self.m3, self.e1, self.e2, self.e3, self.a]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }

    /// Initialization recovering the adjacency matrix.
    pub fn adjacency() -> Self {
        Self::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// Initialization recovering `V^{-1/2} (A + I) V^{-1/2}`.
    pub fn normalized_adjacency() -> Self {
        Self::new(0.0, 1.0, 0.0, 0.0, -0.5, -0.5, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsoKind {
    /// Adjacency matrix A.
    Adjacency,
    /// Unnormalized Laplacian D - A.
    Laplacian,
    /// Signless Laplacian D + A.
    SignlessLaplacian,
    /// Random-walk normalized Laplacian I - D^{-1} A.
    RandomWalkLaplacian,
    /// Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}.
    SymLaplacian,
    /// Normalized adjacency (D + I)^{-1/2} (A + I) (D + I)^{-1/2}.
    NormalizedAdjacency,
    /// Mean aggregation D^{-1} A.
    MeanAggregation,
}

/// Dense classical graph shift operator. Degree-normalized kinds error on
/// zero-degree nodes; the normalized adjacency with its self-loop never does.
pub fn classical_gso(g: &Graph, kind: GsoKind) -> Result<Array2<f64>> {
    let n = g.n();
    let a = g.adjacency();
    let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64).collect();
    let needs_inverse = matches!(
        kind,
        GsoKind::RandomWalkLaplacian | GsoKind::SymLaplacian | GsoKind::MeanAggregation
    );
    if needs_inverse && deg.iter().any(|&d| d == 0.0) {
        return Err(Error::invalid(
            "zero-degree node: degree-normalized operator undefined",
        ));
    }
    let eye = Array2::<f64>::eye(n);
    let m = match kind {
        GsoKind::Adjacency => a,
        GsoKind::Laplacian => {
            let mut m = -a;
            for i in 0..n {
                m[[i, i]] += deg[i];
            }
            m
        }
        GsoKind::SignlessLaplacian => {
            let mut m = a;
            for i in 0..n {
                m[[i, i]] += deg[i];
            }
            m
        }
        GsoKind::RandomWalkLaplacian => {
            let mut m = eye;
            for i in 0..n {
                for j in 0..n {
                    m[[i, j]] -= a[[i, j]] / deg[i];
                }
            }
            m
        }
        GsoKind::SymLaplacian => {
            let mut m = eye;
            for i in 0..n {
                for j in 0..n {
                    m[[i, j]] -= a[[i, j]] / (deg[i] * deg[j]).sqrt();
                }
            }
            m
        }
        GsoKind::NormalizedAdjacency => {
            let mut m = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let aij = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
                    m[[i, j]] = aij / ((deg[i] + 1.0) * (deg[j] + 1.0)).sqrt();
                }
            }
            m
        }
        GsoKind::MeanAggregation => {
            let mut m = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    m[[i, j]] = a[[i, j]] / deg[i];
                }
            }
            m
        }
    };
    Ok(m)
}

/// Entrywise power of a positive diagonal, v_i^e = exp(e ln v_i).
pub fn diag_pow(v: &CentralityVector, e: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(v.len());
    for &x in &v.values {
        if x <= 0.0 {
            return Err(Error::invalid("centrality must be strictly positive"));
        }
        let p = (e * x.ln()).exp();
        if !p.is_finite() {
            return Err(Error::Numerical(format!("non-finite power {x}^{e}")));
        }
        out.push(p);
    }
    Ok(out)
}

/// The parameterized centrality GSO, dense:
/// `m1 V^e1 + m2 V^e2 (A + a I) V^e3 + m3 I`.
pub fn cgso(g: &Graph, v: &CentralityVector, p: &CgsoParams) -> Result<Array2<f64>> {
    let n = g.n();
    if v.len() != n {
        return Err(Error::shape(format!("{n} centralities"), format!("{}", v.len())));
    }
    let v1 = diag_pow(v, p.e1)?;
    let v2 = diag_pow(v, p.e2)?;
    let v3 = diag_pow(v, p.e3)?;
    let a = g.adjacency();
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a_a = a[[i, j]] + if i == j { p.a } else { 0.0 };
            m[[i, j]] = p.m2 * v2[i] * a_a * v3[j];
        }
        m[[i, i]] += p.m1 * v1[i] + p.m3;
    }
    Ok(m)
}

/// Eigendecomposition of an operator with real spectrum.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns (unit L2 norm, not mutually
    /// orthogonal unless the operator is symmetric).
    pub eigenvectors: Array2<f64>,
}

/// Spectrum of the two-sided operator `V^{e2} A V^{e3}`.
///
/// The operator is similar to the symmetric `V^{(e2+e3)/2} A V^{(e2+e3)/2}`
/// via `S = V^s Phi V^{-s}` with `s = (e3 - e2)/2`, so its eigenvalues are
/// real; eigenvectors are mapped back through `V^{-s}`.
pub fn spectrum_of_two_sided(
    g: &Graph,
    v: &CentralityVector,
    e2: f64,
    e3: f64,
) -> Result<Spectrum> {
    let n = g.n();
    if v.len() != n {
        return Err(Error::shape(format!("{n} centralities"), format!("{}", v.len())));
    }
    let half = diag_pow(v, (e2 + e3) / 2.0)?;
    let s = (e3 - e2) / 2.0;
    let v_neg_s = diag_pow(v, -s)?;
    let a = g.adjacency();
    let mut sym = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sym[[i, j]] = half[i] * a[[i, j]] * half[j];
        }
    }
    let eig = sym_eig(sym.view())?;
    let mut vecs = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let mut norm = 0.0;
        for i in 0..n {
            let x = v_neg_s[i] * eig.eigenvectors[[i, k]];
            vecs[[i, k]] = x;
            norm += x * x;
        }
        let norm = norm.sqrt();
        if norm > 0.0 {
            for i in 0..n {
                vecs[[i, k]] /= norm;
            }
        }
    }
    Ok(Spectrum {
        eigenvalues: eig.eigenvalues,
        eigenvectors: vecs,
    })
}

/// Mean and standard deviation of the spectrum of the self-loop-augmented
/// Markov averaging operator `V^{-1} (A + I)`.
#[derive(Debug, Clone)]
pub struct MarkovSpectrumStats {
    /// Closed forms: mu = (1/n) sum_i 1/v_i and
    /// sigma^2 = (1/n) [ sum_i 1/v_i^2 + sum_i sum_{j in N(i)} 1/(v_i v_j) ] - mu^2.
    pub analytic_mean: f64,
    pub analytic_std: f64,
    /// Moments of the eigensolver spectrum, for cross-checking.
    pub empirical_mean: f64,
    pub empirical_std: f64,
}

pub fn markov_spectrum_stats(g: &Graph, v: &CentralityVector) -> Result<MarkovSpectrumStats> {
    let n = g.n();
    if v.len() != n {
        return Err(Error::shape(format!("{n} centralities"), format!("{}", v.len())));
    }
    if n == 0 {
        return Err(Error::invalid("empty graph"));
    }
    let vals = &v.values;
    let nf = n as f64;
    let mu: f64 = vals.iter().map(|&x| 1.0 / x).sum::<f64>() / nf;
    // trace of (V^{-1}(A+I))^2: diagonal of the squared operator
    let mut trace_sq = 0.0;
    for i in 0..n {
        trace_sq += 1.0 / (vals[i] * vals[i]);
        for &j in g.neighbors(i) {
            trace_sq += 1.0 / (vals[i] * vals[j]);
        }
    }
    let var = (trace_sq / nf - mu * mu).max(0.0);
    let sigma = var.sqrt();

    // Eigensolver route: V^{-1}(A+I) is similar to V^{-1/2}(A+I)V^{-1/2}.
    let vh = diag_pow(v, -0.5)?;
    let a = g.adjacency();
    let mut sym = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let aij = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
            sym[[i, j]] = vh[i] * aij * vh[j];
        }
    }
    let eig = sym_eig(sym.view())?;
    let emu = eig.eigenvalues.iter().sum::<f64>() / nf;
    let evar = eig.eigenvalues.iter().map(|&l| (l - emu) * (l - emu)).sum::<f64>() / nf;
    Ok(MarkovSpectrumStats {
        analytic_mean: mu,
        analytic_std: sigma,
        empirical_mean: emu,
        empirical_std: evar.sqrt(),
    })
}

/// Dirichlet energy of node states H (degree-normalized form):
/// (1/2) sum_{ij} a_ij || h_i / sqrt(1 + deg i) - h_j / sqrt(1 + deg j) ||^2.
pub fn dirichlet_energy(g: &Graph, h: ArrayView2<f64>) -> Result<f64> {
    let n = g.n();
    if h.nrows() != n {
        return Err(Error::shape(format!("{n} state rows"), format!("{}", h.nrows())));
    }
    let scale: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / (1.0 + d as f64).sqrt())
        .collect();
    let mut energy = 0.0;
    for &(u, w) in g.edges() {
        let mut dist = 0.0;
        for k in 0..h.ncols() {
            let d = h[[u, k]] * scale[u] - h[[w, k]] * scale[w];
            dist += d * d;
        }
        // each unordered edge contributes both ordered terms of the half-sum
        energy += dist;
    }
    Ok(energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheegerMode {
    /// min over nonempty W, |W| <= n/2, of |E(W, V\W)| / |W|.
    Classical,
    /// min over U with |U|_v <= |V|_v / 2 of |boundary vertices of U| / |U|_v.
    Centrality,
}

/// Cheeger constants by exhaustive subset enumeration (n <= 20).
pub fn cheeger(g: &Graph, mode: CheegerMode, v: Option<&CentralityVector>) -> Result<f64> {
    let n = g.n();
    if n > 20 {
        return Err(Error::Scale {
            op: "cheeger",
            max: 20,
            n,
        });
    }
    if n == 0 {
        return Err(Error::invalid("cheeger of empty graph"));
    }
    // adjacency bitmasks
    let adj: Vec<u32> = (0..n)
        .map(|i| g.neighbors(i).iter().fold(0u32, |m, &j| m | (1 << j)))
        .collect();
    let full: u32 = if n == 32 { u32::MAX } else { (1 << n) - 1 };
    let mut best = f64::INFINITY;
    match mode {
        CheegerMode::Classical => {
            let half = n as f64 / 2.0;
            for w in 1u32..full {
                let size = w.count_ones() as f64;
                if size > half {
                    continue;
                }
                let mut cut = 0u32;
                let mut bits = w;
                while bits != 0 {
                    let i = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    cut += (adj[i] & !w).count_ones();
                }
                best = best.min(cut as f64 / size);
            }
        }
        CheegerMode::Centrality => {
            let v = v.ok_or_else(|| Error::invalid("centrality mode needs a centrality vector"))?;
            if v.len() != n {
                return Err(Error::shape(format!("{n} centralities"), format!("{}", v.len())));
            }
            let total: f64 = v.values.iter().sum();
            for u in 1u32..full {
                let mut weight = 0.0;
                let mut bits = u;
                while bits != 0 {
                    let i = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    weight += v.values[i];
                }
                if weight > total / 2.0 {
                    continue;
                }
                // boundary vertices: outside U, adjacent to U
                let mut boundary = 0u32;
                let mut bits = u;
                while bits != 0 {
                    let i = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    boundary |= adj[i] & !u;
                }
                best = best.min(boundary.count_ones() as f64 / weight);
            }
        }
    }
    Ok(best)
}

/// Two sides of one inequality plus whether it holds (with a small slack for
/// floating-point evaluation).
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn le(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            holds: lhs <= rhs + 1e-9,
        }
    }
}

/// Expansion diagnostics: the discrete Cheeger and Buser inequalities on the
/// random-walk Laplacian, and the centrality Cheeger bound on the normalized
/// spectral gap of `I - V^{-1} A`.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    /// Smallest non-zero eigenvalue of L_rw.
    pub lambda1_rw: f64,
    /// Equidistribution radius: max |eigenvalue| of D^{-1} A excluding +-1.
    pub equidistribution_radius: f64,
    pub cheeger_classical: f64,
    pub cheeger_centrality: f64,
    /// Smallest non-zero eigenvalue of I - V^{-1} A.
    pub lambda1_centrality: f64,
    /// The constant min_i v(i)/deg(i), recorded for diagnostics; the
    /// eigenvalue-magnitude bound actually asserted is the Gershgorin form
    /// max_i deg(i)/v(i) (see the module tests).
    pub gamma_min_ratio: f64,
    /// 1 - rho_r(H) <= lambda1(L_rw).
    pub cheeger_lower: BoundCheck,
    /// lambda1(L_rw) <= (2 Delta / delta^2) h_C.
    pub cheeger_upper: BoundCheck,
    /// h_C <= Delta sqrt(2 lambda1(L_rw)).
    pub buser: BoundCheck,
    /// lambda1(I - V^{-1}A) <= 2 N (v_+^2 / v_-) h_v.
    pub centrality_bound: BoundCheck,
    pub all_hold: bool,
}

/// Smallest eigenvalue above `tol` in absolute value.
fn smallest_nonzero(eigs: &[f64], tol: f64) -> Option<f64> {
    eigs.iter()
        .copied()
        .filter(|l| l.abs() > tol)
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

pub fn expansion_bound_report(g: &Graph, v: &CentralityVector) -> Result<ExpansionReport> {
    let n = g.n();
    if n > 20 {
        return Err(Error::Scale {
            op: "expansion_bound_report",
            max: 20,
            n,
        });
    }
    let (ncomp, _) = g.components();
    if ncomp != 1 || n == 0 {
        return Err(Error::invalid("expansion report needs a connected, non-empty graph"));
    }
    let degrees = g.degrees();
    if degrees.iter().any(|&d| d == 0) {
        return Err(Error::invalid("expansion report needs no isolated nodes"));
    }
    let delta_max = *degrees.iter().max().unwrap() as f64;
    let delta_min = *degrees.iter().min().unwrap() as f64;

    // L_rw = I - D^{-1} A is similar to I - D^{-1/2} A D^{-1/2} (symmetric).
    let deg_cv = CentralityVector::from_values(
        crate::centrality::CentralityKind::Degree,
        degrees.iter().map(|&d| d as f64).collect(),
    )?;
    let h_spec = spectrum_of_two_sided(g, &deg_cv, -1.0, 0.0)?; // D^{-1} A
    let lrw_eigs: Vec<f64> = h_spec.eigenvalues.iter().map(|l| 1.0 - l).collect();
    let lambda1_rw = smallest_nonzero(&lrw_eigs, 1e-8)
        .ok_or_else(|| Error::Numerical("no non-zero eigenvalue of L_rw".into()))?;
    let rho_r = h_spec
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .filter(|la| (la - 1.0).abs() > 1e-8)
        .fold(0.0f64, f64::max);

    let h_c = cheeger(g, CheegerMode::Classical, None)?;
    let h_v = cheeger(g, CheegerMode::Centrality, Some(v))?;

    let m_spec = spectrum_of_two_sided(g, v, -1.0, 0.0)?; // V^{-1} A
    let ml_eigs: Vec<f64> = m_spec.eigenvalues.iter().map(|l| 1.0 - l).collect();
    let lambda1_centrality = smallest_nonzero(&ml_eigs, 1e-8)
        .ok_or_else(|| Error::Numerical("no non-zero eigenvalue of I - V^-1 A".into()))?;

    let v_plus = v.values.iter().copied().fold(f64::MIN, f64::max);
    let v_minus = v.values.iter().copied().fold(f64::MAX, f64::min);
    let gamma_min_ratio = (0..n)
        .map(|i| v.values[i] / degrees[i] as f64)
        .fold(f64::MAX, f64::min);

    let cheeger_lower = BoundCheck::le(1.0 - rho_r, lambda1_rw);
    let cheeger_upper = BoundCheck::le(lambda1_rw, 2.0 * delta_max / (delta_min * delta_min) * h_c);
    let buser = BoundCheck::le(h_c, delta_max * (2.0 * lambda1_rw).sqrt());
    let centrality_bound = BoundCheck::le(
        lambda1_centrality,
        2.0 * n as f64 * v_plus * v_plus / v_minus * h_v,
    );
    let all_hold =
        cheeger_lower.holds && cheeger_upper.holds && buser.holds && centrality_bound.holds;
    Ok(ExpansionReport {
        lambda1_rw,
        equidistribution_radius: rho_r,
        cheeger_classical: h_c,
        cheeger_centrality: h_v,
        lambda1_centrality,
        gamma_min_ratio,
        cheeger_lower,
        cheeger_upper,
        buser,
        centrality_bound,
        all_hold,
    })
}

/// Multiplicity of the zero eigenvalue of the unnormalized Laplacian,
/// at the given threshold.
pub fn laplacian_zero_multiplicity(g: &Graph, tol: f64) -> Result<usize> {
    let l = classical_gso(g, GsoKind::Laplacian)?;
    let eig = sym_eig(l.view())?;
    Ok(eig.eigenvalues.iter().filter(|x| x.abs() <= tol).count())
}

/// Number of distinct eigenvalues of the unnormalized Laplacian at the given
/// separation tolerance.
pub fn laplacian_distinct_eigenvalues(g: &Graph, tol: f64) -> Result<usize> {
    let l = classical_gso(g, GsoKind::Laplacian)?;
    let mut eigs = sym_eig(l.view())?.eigenvalues;
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 0usize;
    let mut last = f64::NEG_INFINITY;
    for e in eigs {
        if e - last > tol {
            distinct += 1;
        }
        last = e;
    }
    Ok(distinct)
}

/// Largest |eigenvalue| of V^{-1} A via the symmetric similarity.
pub fn markov_spectral_radius(g: &Graph, v: &CentralityVector) -> Result<f64> {
    let s = spectrum_of_two_sided(g, v, -1.0, 0.0)?;
    Ok(s.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::centrality::{centrality_matrix, CentralityKind};
    use crate::graph::{complete_graph, cycle_graph, path_graph, random_graph, Graph};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn deg_vector(g: &Graph) -> CentralityVector {
        centrality_matrix(g, CentralityKind::Degree, Some(1e-6)).unwrap()
    }

    #[test]
    fn laplacian_single_edge() {
        let g = path_graph(2);
        let l = classical_gso(&g, GsoKind::Laplacian).unwrap();
        assert_eq!(l, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn normalized_adjacency_single_node() {
        let g = Graph::new(1, [], None, None).unwrap();
        let m = classical_gso(&g, GsoKind::NormalizedAdjacency).unwrap();
        assert_eq!(m, array![[1.0]]);
    }

    #[test]
    fn sym_laplacian_triangle_spectrum() {
        let g = complete_graph(3);
        let l = classical_gso(&g, GsoKind::SymLaplacian).unwrap();
        let eig = sym_eig(l.view()).unwrap();
        assert_abs_diff_eq!(eig.eigenvalues[0], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(eig.eigenvalues[1], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(eig.eigenvalues[2], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn degree_normalized_kinds_reject_isolated_nodes() {
        let g = Graph::new(2, [], None, None).unwrap();
        assert!(classical_gso(&g, GsoKind::MeanAggregation).is_err());
        assert!(classical_gso(&g, GsoKind::NormalizedAdjacency).is_ok());
    }

    /// The seven classical initializations of the parameterized CGSO, checked
    /// as exact matrix equalities against their defining formulas with V built
    /// from the degree.
    #[test]
    fn cgso_recovers_all_classical_initializations() {
        for seed in [3u64, 17] {
            let g = random_graph(7, 0.6, seed);
            if g.degrees().iter().any(|&d| d == 0) {
                continue;
            }
            let v = deg_vector(&g);
            let a = g.adjacency();
            let n = g.n();
            let d: Vec<f64> = v.values.clone();
            let build = |f: &dyn Fn(usize, usize) -> f64| {
                Array2::from_shape_fn((n, n), |(i, j)| f(i, j))
            };
            let eye = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
            let cases: Vec<(CgsoParams, Array2<f64>)> = vec![
                (
                    CgsoParams::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                    a.clone(),
                ),
                (
                    CgsoParams::new(1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0),
                    build(&|i, j| eye(i, j) * d[i] - a[[i, j]]),
                ),
                (
                    CgsoParams::new(1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0),
                    build(&|i, j| eye(i, j) * d[i] + a[[i, j]]),
                ),
                (
                    CgsoParams::new(0.0, -1.0, 1.0, 0.0, -1.0, 0.0, 0.0),
                    build(&|i, j| eye(i, j) - a[[i, j]] / d[i]),
                ),
                (
                    CgsoParams::new(0.0, -1.0, 1.0, 0.0, -0.5, -0.5, 0.0),
                    build(&|i, j| eye(i, j) - a[[i, j]] / (d[i] * d[j]).sqrt()),
                ),
                (
                    CgsoParams::new(0.0, 1.0, 0.0, 0.0, -0.5, -0.5, 1.0),
                    build(&|i, j| (a[[i, j]] + eye(i, j)) / (d[i] * d[j]).sqrt()),
                ),
                (
                    CgsoParams::new(0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0),
                    build(&|i, j| a[[i, j]] / d[i]),
                ),
            ];
            for (params, want) in cases {
                let got = cgso(&g, &v, &params).unwrap();
                let diff = (&got - &want).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
                assert!(diff < 1e-12, "params {params:?} differ by {diff}");
            }
        }
    }

    #[test]
    fn two_sided_spectrum_plain_adjacency() {
        let g = path_graph(2);
        let v = deg_vector(&g);
        let s = spectrum_of_two_sided(&g, &v, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.eigenvalues[1], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn two_sided_random_walk_unit_radius_on_k3() {
        let g = complete_graph(3);
        let v = deg_vector(&g);
        let s = spectrum_of_two_sided(&g, &v, -1.0, 0.0).unwrap();
        let radius = s.eigenvalues.iter().map(|l| l.abs()).fold(0.0f64, f64::max);
        assert_abs_diff_eq!(radius, 1.0, epsilon = 1e-10);
        // dense check on the 3x3: D^{-1}A of K3 has eigenvalues {1, -1/2, -1/2}
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.eigenvalues[1], -0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(s.eigenvalues[2], -0.5, epsilon = 1e-10);
    }

    /// Trace-moment oracle: the power sums tr(Phi^k), computed by plain matrix
    /// products, equal sum_i lambda_i^k for k = 1..n; together with real-ness
    /// and per-pair residuals this pins the eigenvalue multiset.
    #[test]
    fn two_sided_spectrum_matches_trace_moments() {
        let mut rng = crate::rng::SplitMix64::new(5);
        for trial in 0..12 {
            let n = 3 + trial % 8;
            let g = random_graph(n, 0.5, 100 + trial as u64);
            let vals: Vec<f64> = (0..n).map(|_| 0.5 + rng.next_f64() * 3.0).collect();
            let v = CentralityVector::from_values(CentralityKind::Degree, vals).unwrap();
            let (e2, e3) = (rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0);
            let s = spectrum_of_two_sided(&g, &v, e2, e3).unwrap();

            // explicit dense operator
            let v2 = diag_pow(&v, e2).unwrap();
            let v3 = diag_pow(&v, e3).unwrap();
            let a = g.adjacency();
            let phi = Array2::from_shape_fn((n, n), |(i, j)| v2[i] * a[[i, j]] * v3[j]);
            let scale = linalg::norm_spectral(phi.view()).max(1.0);

            let mut power = Array2::<f64>::eye(n);
            for k in 1..=n {
                power = power.dot(&phi);
                let trace: f64 = (0..n).map(|i| power[[i, i]]).sum();
                let moment: f64 = s.eigenvalues.iter().map(|l| l.powi(k as i32)).sum();
                assert!(
                    (trace - moment).abs() <= 1e-8 * n as f64 * scale.powi(k as i32),
                    "moment {k} mismatch: {trace} vs {moment}"
                );
            }
            // residuals of the mapped-back eigenpairs
            for k in 0..n {
                let u = s.eigenvectors.column(k);
                let pu = phi.dot(&u);
                let r: f64 = (0..n)
                    .map(|i| (pu[i] - s.eigenvalues[k] * u[i]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(r <= 1e-8 * scale, "residual {r} too large");
            }
        }
    }

    #[test]
    fn markov_stats_k3_closed_form() {
        let g = complete_graph(3);
        let v = CentralityVector::from_values(CentralityKind::Degree, vec![2.0, 2.0, 2.0]).unwrap();
        let stats = markov_spectrum_stats(&g, &v).unwrap();
        assert_abs_diff_eq!(stats.analytic_mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.analytic_std, (0.5f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(stats.empirical_mean, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(stats.empirical_std, (0.5f64).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn markov_stats_single_node() {
        let g = Graph::new(1, [], None, None).unwrap();
        let v = CentralityVector::from_values(CentralityKind::Degree, vec![1.0]).unwrap();
        let stats = markov_spectrum_stats(&g, &v).unwrap();
        assert_abs_diff_eq!(stats.analytic_mean, 1.0);
        assert_abs_diff_eq!(stats.analytic_std, 0.0);
    }

    #[test]
    fn markov_mean_is_trace_over_n() {
        for seed in 0..6u64 {
            let g = random_graph(9, 0.4, seed);
            let v = deg_vector(&g);
            let stats = markov_spectrum_stats(&g, &v).unwrap();
            let trace: f64 = v.values.iter().map(|&x| 1.0 / x).sum();
            assert_abs_diff_eq!(stats.analytic_mean, trace / 9.0, epsilon = 1e-14);
        }
    }

    /// Random graph resampled until no node is isolated, so all four
    /// centralities stay at sane magnitudes.
    fn random_graph_no_isolated(n: usize, p: f64, seed: u64) -> Graph {
        let mut s = seed;
        loop {
            let g = random_graph(n, p, s);
            if g.degrees().iter().all(|&d| d > 0) {
                return g;
            }
            s = s.wrapping_add(0x9E37_79B9);
        }
    }

    #[test]
    fn markov_analytic_matches_eigensolver_all_centralities() {
        let kinds = [
            CentralityKind::Degree,
            CentralityKind::KCore,
            CentralityKind::pagerank_default(),
            CentralityKind::walk_default(),
        ];
        for seed in 0..10u64 {
            let g = random_graph_no_isolated(3 + (seed as usize % 20), 0.5, seed);
            for kind in kinds {
                let v = centrality_matrix(&g, kind, Some(1e-6)).unwrap();
                let stats = markov_spectrum_stats(&g, &v).unwrap();
                assert_abs_diff_eq!(stats.analytic_mean, stats.empirical_mean, epsilon = 1e-8);
                assert_abs_diff_eq!(stats.analytic_std, stats.empirical_std, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn markov_spectral_radius_gershgorin() {
        for seed in 0..10u64 {
            let g = random_graph(8, 0.5, seed);
            let v = deg_vector(&g);
            let radius = markov_spectral_radius(&g, &v).unwrap();
            let bound = (0..g.n())
                .map(|i| g.degree(i) as f64 / v.values[i])
                .fold(0.0f64, f64::max);
            assert!(radius <= bound + 1e-10, "radius {radius} exceeds {bound}");
        }
    }

    #[test]
    fn dirichlet_constant_signal_on_regular_graph() {
        let g = cycle_graph(6);
        let h = Array2::from_elem((6, 2), 3.25);
        assert_abs_diff_eq!(dirichlet_energy(&g, h.view()).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_single_edge_plugin() {
        let g = path_graph(2);
        let h = array![[1.0], [-1.0]];
        assert_abs_diff_eq!(dirichlet_energy(&g, h.view()).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn dirichlet_empty_graph() {
        let g = Graph::new(3, [], None, None).unwrap();
        let h = Array2::from_elem((3, 1), 1.0);
        assert_abs_diff_eq!(dirichlet_energy(&g, h.view()).unwrap(), 0.0);
    }

    #[test]
    fn cheeger_k4_classical() {
        let g = complete_graph(4);
        assert_abs_diff_eq!(cheeger(&g, CheegerMode::Classical, None).unwrap(), 2.0);
    }

    #[test]
    fn cheeger_k4_centrality() {
        let g = complete_graph(4);
        let v = deg_vector(&g);
        assert_abs_diff_eq!(
            cheeger(&g, CheegerMode::Centrality, Some(&v)).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cheeger_disconnected_is_zero() {
        let g = Graph::new(4, [(0, 1), (2, 3)], None, None).unwrap();
        assert_abs_diff_eq!(cheeger(&g, CheegerMode::Classical, None).unwrap(), 0.0);
    }

    /// Independent enumeration over Vec<bool> subsets (different code path
    /// from the bitmask implementation).
    fn cheeger_naive(g: &Graph) -> f64 {
        let n = g.n();
        let mut best = f64::INFINITY;
        for mask in 1usize..(1 << n) {
            let members: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let size = members.iter().filter(|&&b| b).count();
            if size == 0 || size as f64 > n as f64 / 2.0 {
                continue;
            }
            let cut = g
                .edges()
                .iter()
                .filter(|&&(u, v)| members[u] != members[v])
                .count();
            best = best.min(cut as f64 / size as f64);
        }
        best
    }

    #[test]
    fn cheeger_matches_naive_enumeration() {
        for seed in 0..8u64 {
            let g = random_graph(7, 0.5, seed);
            assert_abs_diff_eq!(
                cheeger(&g, CheegerMode::Classical, None).unwrap(),
                cheeger_naive(&g),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn expansion_report_k4() {
        let g = complete_graph(4);
        let v = deg_vector(&g);
        let rep = expansion_bound_report(&g, &v).unwrap();
        assert_abs_diff_eq!(rep.lambda1_rw, 4.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.cheeger_classical, 2.0);
        assert!(rep.buser.holds);
        assert_abs_diff_eq!(rep.buser.rhs, 3.0 * (8.0f64 / 3.0).sqrt(), epsilon = 1e-10);
        assert!(rep.all_hold);
    }

    #[test]
    fn expansion_report_c6_cheeger_chain() {
        let g = cycle_graph(6);
        let v = deg_vector(&g);
        let rep = expansion_bound_report(&g, &v).unwrap();
        // circulant: lambda1(L_rw) = 1 - cos(2 pi / 6) = 0.5
        assert_abs_diff_eq!(rep.lambda1_rw, 0.5, epsilon = 1e-10);
        assert!(rep.cheeger_lower.holds);
        assert!(rep.cheeger_upper.holds);
        assert!(rep.all_hold);
    }

    #[test]
    fn expansion_report_centrality_bound_k4() {
        let g = complete_graph(4);
        let v = deg_vector(&g);
        let rep = expansion_bound_report(&g, &v).unwrap();
        // lambda1(I - V^{-1}A) with v = deg: same as L_rw -> 4/3;
        // rhs = 2*4*(9/3)*(1/3) = 8
        assert!(rep.centrality_bound.holds);
        assert_abs_diff_eq!(rep.centrality_bound.rhs, 8.0, epsilon = 1e-9);
    }

    #[test]
    fn laplacian_zero_multiplicity_counts_components() {
        for seed in 0..10u64 {
            let g = random_graph(8, 0.25, seed);
            let (ncomp, _) = g.components();
            assert_eq!(laplacian_zero_multiplicity(&g, 1e-8).unwrap(), ncomp);
        }
    }

    #[test]
    fn laplacian_distinct_eigenvalues_exceed_diameter() {
        for g in [path_graph(5), cycle_graph(7), complete_graph(6)] {
            let diam = g.diameter().unwrap();
            let distinct = laplacian_distinct_eigenvalues(&g, 1e-8).unwrap();
            assert!(distinct >= diam + 1, "distinct {distinct} vs diam {diam}");
        }
    }
}
