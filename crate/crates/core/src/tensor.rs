//! Dense complex linear algebra on labeled multi-site Hilbert spaces.
//!
//! Basis-state integers follow a single convention: site 0 is the most
//! significant tensor factor. For qubits this means the state |b0 b1 ... b(n-1)>
//! sits at index `b0 * 2^(n-1) + ... + b(n-1)`.
//!
//! Entropies are reported in bits.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues in `[-EIGEN_CLIP, 0)` are treated as zero.
pub const EIGEN_CLIP: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Ordered list of local dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteSpace {
    dims: Vec<usize>,
}

impl SiteSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidDimension(format!("site {pos} has dimension 0")));
        }
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Self {
        Self { dims: vec![2; n] }
    }

    pub fn uniform(n: usize, d: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, site: usize) -> usize {
        self.dims[site]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Checks that `sites` are distinct and within range.
    pub fn check_sites(&self, sites: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n_sites()];
        for &s in sites {
            if s >= self.n_sites() {
                return Err(Error::SiteOutOfRange { index: s, n_sites: self.n_sites() });
            }
            if seen[s] {
                return Err(Error::DuplicateSite(s));
            }
            seen[s] = true;
        }
        Ok(())
    }

    /// The space made of `sites`, in the order given.
    pub fn restrict(&self, sites: &[usize]) -> Result<SiteSpace> {
        self.check_sites(sites)?;
        Ok(SiteSpace { dims: sites.iter().map(|&s| self.dims[s]).collect() })
    }

    pub fn concat(&self, other: &SiteSpace) -> SiteSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        SiteSpace { dims }
    }

    /// Sites not in `sites`, ascending.
    pub fn complement(&self, sites: &[usize]) -> Vec<usize> {
        (0..self.n_sites()).filter(|s| !sites.contains(s)).collect()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.n_sites()];
        for s in (0..self.n_sites().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.dims[s + 1];
        }
        strides
    }

    /// Full-space offsets of every basis state of the sub-register `sites`
    /// (first listed site most significant). Adding the offsets of two
    /// complementary registers yields a full basis index.
    pub fn offsets(&self, sites: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut offs = vec![0usize];
        for &s in sites {
            let d = self.dims[s];
            let mut next = Vec::with_capacity(offs.len() * d);
            for &o in &offs {
                for k in 0..d {
                    next.push(o + k * strides[s]);
                }
            }
            offs = next;
        }
        offs
    }

    /// Digits of a basis index, one per site.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_sites()];
        for s in (0..self.n_sites()).rev() {
            out[s] = index % self.dims[s];
            index /= self.dims[s];
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&d, &dim)| acc * dim + d)
    }
}

/// A square complex matrix acting on a [`SiteSpace`].
///
/// Hermiticity, positivity and normalization are predicates, not construction
/// requirements.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    space: SiteSpace,
    matrix: CMatrix,
}

impl DenseOperator {
    pub fn new(space: SiteSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: SiteSpace) -> Self {
        let d = space.total_dim();
        Self { space, matrix: CMatrix::identity(d, d) }
    }

    pub fn zeros(space: SiteSpace) -> Self {
        let d = space.total_dim();
        Self { space, matrix: CMatrix::zeros(d, d) }
    }

    pub fn maximally_mixed(space: SiteSpace) -> Self {
        let d = space.total_dim();
        Self { space, matrix: CMatrix::identity(d, d).unscale(d as f64) }
    }

    pub fn from_diagonal(space: SiteSpace, diag: &[f64]) -> Result<Self> {
        let d = space.total_dim();
        if diag.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: diag.len() });
        }
        let mut m = CMatrix::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = c64(x, 0.0);
        }
        Ok(Self { space, matrix: m })
    }

    /// |v><v| for an arbitrary (not necessarily normalized) vector.
    pub fn projector(space: SiteSpace, v: &CVector) -> Result<Self> {
        let m = v * v.adjoint();
        Self::new(space, m)
    }

    pub fn space(&self) -> &SiteSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        for j in 0..n {
            for i in 0..=j {
                if (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol.max(1e-12)) && self.min_eigenvalue() >= -tol
    }

    pub fn is_density(&self, tol: f64) -> bool {
        (self.trace().re - 1.0).abs() <= tol && self.trace().im.abs() <= tol && self.is_psd(tol)
    }

    pub fn kron(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { space: self.space.concat(&other.space), matrix: kron(&self.matrix, &other.matrix) }
    }

    pub fn scaled(&self, s: f64) -> DenseOperator {
        DenseOperator { space: self.space.clone(), matrix: self.matrix.scale(s) }
    }

    /// Re tr(op · self).
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        trace_of_product(op, &self.matrix).re
    }

    /// Reduced operator on `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DenseOperator> {
        self.space.check_sites(keep)?;
        let rest = self.space.complement(keep);
        let ko = self.space.offsets(keep);
        let to = self.space.offsets(&rest);
        let dk = ko.len();
        let mut out = CMatrix::zeros(dk, dk);
        for b in 0..dk {
            for a in 0..dk {
                let mut acc = ZERO;
                for &t in &to {
                    acc += self.matrix[(ko[a] + t, ko[b] + t)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(DenseOperator { space: self.space.restrict(keep)?, matrix: out })
    }

    /// tr_sites((E ⊗ 1) ρ) with `effect` acting on `sites` (in that order).
    /// The result lives on the remaining sites in ascending order.
    pub fn contract(&self, sites: &[usize], effect: &CMatrix) -> Result<DenseOperator> {
        self.space.check_sites(sites)?;
        let rest = self.space.complement(sites);
        let so = self.space.offsets(sites);
        let ko = self.space.offsets(&rest);
        let ds = so.len();
        if effect.nrows() != ds || effect.ncols() != ds {
            return Err(Error::DimensionMismatch { expected: ds, actual: effect.nrows() });
        }
        let dk = ko.len();
        let mut out = CMatrix::zeros(dk, dk);
        for s in 0..ds {
            for sp in 0..ds {
                let e = effect[(s, sp)];
                if e == ZERO {
                    continue;
                }
                let (row0, col0) = (so[sp], so[s]);
                for b in 0..dk {
                    let col = col0 + ko[b];
                    for a in 0..dk {
                        out[(a, b)] += e * self.matrix[(row0 + ko[a], col)];
                    }
                }
            }
        }
        Ok(DenseOperator { space: self.space.restrict(&rest)?, matrix: out })
    }

    /// (K ⊗ 1) ρ (K ⊗ 1)† with `k` acting on `sites`.
    pub fn conjugate_local(&self, k: &CMatrix, sites: &[usize]) -> Result<DenseOperator> {
        self.space.check_sites(sites)?;
        let rest = self.space.complement(sites);
        let so = self.space.offsets(sites);
        let ko = self.space.offsets(&rest);
        let ds = so.len();
        if k.nrows() != ds || k.ncols() != ds {
            return Err(Error::DimensionMismatch { expected: ds, actual: k.nrows() });
        }
        let d = self.dim();
        let mut left = CMatrix::zeros(d, d);
        let mut buf = vec![ZERO; ds];
        for c in 0..d {
            for &t in &ko {
                for (b, slot) in buf.iter_mut().enumerate() {
                    *slot = self.matrix[(so[b] + t, c)];
                }
                for a in 0..ds {
                    let mut acc = ZERO;
                    for b in 0..ds {
                        acc += k[(a, b)] * buf[b];
                    }
                    left[(so[a] + t, c)] = acc;
                }
            }
        }
        let mut out = CMatrix::zeros(d, d);
        for &t in &ko {
            for a in 0..ds {
                for b in 0..ds {
                    let kc = k[(a, b)].conj();
                    if kc == ZERO {
                        continue;
                    }
                    let (dst, src) = (so[a] + t, so[b] + t);
                    for r in 0..d {
                        out[(r, dst)] += left[(r, src)] * kc;
                    }
                }
            }
        }
        Ok(DenseOperator { space: self.space.clone(), matrix: out })
    }

    /// Σ_k (K_k ⊗ 1) ρ (K_k ⊗ 1)†.
    pub fn apply_local_kraus(&self, kraus: &[CMatrix], sites: &[usize]) -> Result<DenseOperator> {
        let mut acc = CMatrix::zeros(self.dim(), self.dim());
        for k in kraus {
            acc += self.conjugate_local(k, sites)?.matrix;
        }
        Ok(DenseOperator { space: self.space.clone(), matrix: acc })
    }

    /// Reorders sites: result site `i` is input site `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<DenseOperator> {
        if order.len() != self.space.n_sites() {
            return Err(Error::DimensionMismatch { expected: self.space.n_sites(), actual: order.len() });
        }
        self.partial_trace(order)
    }
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: SiteSpace,
    amps: CVector,
}

impl StateVector {
    /// Requires unit norm within 1e-10.
    pub fn new(space: SiteSpace, amps: CVector) -> Result<Self> {
        if amps.len() != space.total_dim() {
            return Err(Error::DimensionMismatch { expected: space.total_dim(), actual: amps.len() });
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { space, amps })
    }

    pub fn normalized(space: SiteSpace, amps: CVector) -> Result<Self> {
        if amps.len() != space.total_dim() {
            return Err(Error::DimensionMismatch { expected: space.total_dim(), actual: amps.len() });
        }
        let norm = amps.norm();
        if norm <= 1e-300 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { space, amps: amps.unscale(norm) })
    }

    pub fn basis(space: SiteSpace, index: usize) -> Result<Self> {
        let d = space.total_dim();
        if index >= d {
            return Err(Error::DimensionMismatch { expected: d, actual: index });
        }
        let mut amps = CVector::zeros(d);
        amps[index] = ONE;
        Ok(Self { space, amps })
    }

    pub fn space(&self) -> &SiteSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn to_density(&self) -> DenseOperator {
        DenseOperator { space: self.space.clone(), matrix: &self.amps * self.amps.adjoint() }
    }

    pub fn reduced(&self, keep: &[usize]) -> Result<DenseOperator> {
        self.space.check_sites(keep)?;
        let rest = self.space.complement(keep);
        let ko = self.space.offsets(keep);
        let to = self.space.offsets(&rest);
        let dk = ko.len();
        let mut out = CMatrix::zeros(dk, dk);
        for &t in &to {
            for b in 0..dk {
                let vb = self.amps[ko[b] + t].conj();
                if vb == ZERO {
                    continue;
                }
                for a in 0..dk {
                    out[(a, b)] += self.amps[ko[a] + t] * vb;
                }
            }
        }
        Ok(DenseOperator { space: self.space.restrict(keep)?, matrix: out })
    }

    /// (op ⊗ 1)|ψ>, unnormalized.
    pub fn apply_local(&self, op: &CMatrix, sites: &[usize]) -> Result<CVector> {
        apply_local_vec(&self.space, &self.amps, op, sites)
    }
}

/// (op ⊗ 1) v for an arbitrary vector on `space`.
pub fn apply_local_vec(space: &SiteSpace, v: &CVector, op: &CMatrix, sites: &[usize]) -> Result<CVector> {
    space.check_sites(sites)?;
    if v.len() != space.total_dim() {
        return Err(Error::DimensionMismatch { expected: space.total_dim(), actual: v.len() });
    }
    let so = space.offsets(sites);
    let ko = space.offsets(&space.complement(sites));
    let ds = so.len();
    if op.nrows() != ds || op.ncols() != ds {
        return Err(Error::DimensionMismatch { expected: ds, actual: op.nrows() });
    }
    let mut out = CVector::zeros(v.len());
    for &t in &ko {
        for a in 0..ds {
            let mut acc = ZERO;
            for b in 0..ds {
                acc += op[(a, b)] * v[so[b] + t];
            }
            out[so[a] + t] = acc;
        }
    }
    Ok(out)
}

/// Anything from which reduced density operators can be extracted.
pub trait QuantumState {
    fn space(&self) -> &SiteSpace;
    fn reduced(&self, keep: &[usize]) -> Result<DenseOperator>;
}

impl QuantumState for DenseOperator {
    fn space(&self) -> &SiteSpace {
        &self.space
    }
    fn reduced(&self, keep: &[usize]) -> Result<DenseOperator> {
        self.partial_trace(keep)
    }
}

impl QuantumState for StateVector {
    fn space(&self) -> &SiteSpace {
        &self.space
    }
    fn reduced(&self, keep: &[usize]) -> Result<DenseOperator> {
        StateVector::reduced(self, keep)
    }
}

/// A pure or mixed state. Pure states avoid materializing the density matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(StateVector),
    Mixed(DenseOperator),
}

impl State {
    pub fn to_density(&self) -> DenseOperator {
        match self {
            State::Pure(v) => v.to_density(),
            State::Mixed(rho) => rho.clone(),
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        match self {
            State::Pure(v) => (v.amplitudes().norm() - 1.0).abs() <= tol,
            State::Mixed(rho) => rho.is_density(tol),
        }
    }
}

impl QuantumState for State {
    fn space(&self) -> &SiteSpace {
        match self {
            State::Pure(v) => v.space(),
            State::Mixed(rho) => rho.space(),
        }
    }
    fn reduced(&self, keep: &[usize]) -> Result<DenseOperator> {
        match self {
            State::Pure(v) => v.reduced(keep),
            State::Mixed(rho) => rho.partial_trace(keep),
        }
    }
}

impl From<StateVector> for State {
    fn from(v: StateVector) -> Self {
        State::Pure(v)
    }
}

impl From<DenseOperator> for State {
    fn from(rho: DenseOperator) -> Self {
        State::Mixed(rho)
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// tr(a b) without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    if m.nrows() == 2 {
        let (a, d) = (m[(0, 0)].re, m[(1, 1)].re);
        let off = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + off.norm_sqr()).sqrt();
        return vec![mean - rad, mean + rad];
    }
    let mut vals: Vec<f64> = robust_eigen(m).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// The QL iteration occasionally returns NaN on large, sparse, highly
/// degenerate matrices. Conjugating by a fixed random unitary destroys the
/// structure without changing the spectrum.
fn robust_eigen(m: &CMatrix) -> SymmetricEigen<C64, nalgebra::Dyn> {
    let h = hermitian_part(m);
    let eig = SymmetricEigen::new(h.clone());
    let finite = |e: &SymmetricEigen<C64, nalgebra::Dyn>| {
        e.eigenvalues.iter().all(|v| v.is_finite()) && e.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    };
    if finite(&eig) {
        return eig;
    }
    for salt in 0..4u64 {
        let u = crate::random::random_unitary(h.nrows(), &mut crate::random::seeded(0x5eed_e16e + salt));
        let mut e = SymmetricEigen::new(hermitian_part(&(u.adjoint() * &h * &u)));
        if finite(&e) {
            e.eigenvectors = &u * e.eigenvectors;
            return e;
        }
    }
    eig
}

/// Eigen-decomposition of the Hermitian part of `m`: ascending eigenvalues and
/// the matching eigenvectors as columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = robust_eigen(m);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Largest absolute eigenvalue of the Hermitian part.
pub fn hermitian_operator_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().sum()
}

/// −Σ λ log₂ λ over the given eigenvalues, clipping tiny negatives to zero.
/// Does not require the values to sum to one.
pub fn entropy_of_eigenvalues(vals: &[f64]) -> f64 {
    vals.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.log2()).sum()
}

/// −Σ λ log₂ λ of a PSD (not necessarily normalized) matrix.
pub fn entropy_unnormalized(m: &CMatrix) -> f64 {
    entropy_of_eigenvalues(&hermitian_eigenvalues(m))
}

pub fn embed_on_subset(op: &DenseOperator, subset: &[usize], target: &SiteSpace) -> Result<DenseOperator> {
    target.check_sites(subset)?;
    let expected: usize = subset.iter().map(|&s| target.dim(s)).product();
    if op.dim() != expected {
        return Err(Error::DimensionMismatch { expected, actual: op.dim() });
    }
    if op.space().n_sites() == subset.len() {
        for (k, &s) in subset.iter().enumerate() {
            if op.space().dim(k) != target.dim(s) {
                return Err(Error::DimensionMismatch { expected: target.dim(s), actual: op.space().dim(k) });
            }
        }
    }
    let so = target.offsets(subset);
    let ko = target.offsets(&target.complement(subset));
    let d = target.total_dim();
    let mut out = CMatrix::zeros(d, d);
    for &t in &ko {
        for b in 0..so.len() {
            for a in 0..so.len() {
                out[(so[a] + t, so[b] + t)] = op.matrix()[(a, b)];
            }
        }
    }
    Ok(DenseOperator { space: target.clone(), matrix: out })
}

pub fn partial_trace(rho: &DenseOperator, keep: &[usize]) -> Result<DenseOperator> {
    rho.partial_trace(keep)
}

/// Von Neumann entropy in bits. Requires a PSD, trace-one input.
pub fn von_neumann_entropy(rho: &DenseOperator) -> Result<f64> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
        return Err(Error::NotNormalized(tr.norm()));
    }
    let vals = rho.eigenvalues();
    if let Some(&min) = vals.first() {
        if min < -EIGEN_CLIP {
            return Err(Error::NotPsd(min));
        }
    }
    Ok(entropy_of_eigenvalues(&vals).max(0.0))
}

fn check_disjoint(groups: &[&[usize]]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for g in groups {
        for &s in g.iter() {
            if !seen.insert(s) {
                return Err(Error::Overlap(s));
            }
        }
    }
    Ok(())
}

/// I(a:b|c) = S(ac) + S(bc) − S(abc) − S(c), in bits.
pub fn conditional_mutual_information(rho: &DenseOperator, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    check_disjoint(&[a, b, c])?;
    let cat = |parts: &[&[usize]]| parts.iter().flat_map(|p| p.iter().copied()).collect::<Vec<_>>();
    let s_ac = von_neumann_entropy(&rho.partial_trace(&cat(&[a, c]))?)?;
    let s_bc = von_neumann_entropy(&rho.partial_trace(&cat(&[b, c]))?)?;
    let s_abc = von_neumann_entropy(&rho.partial_trace(&cat(&[a, b, c]))?)?;
    let s_c = von_neumann_entropy(&rho.partial_trace(c)?)?;
    Ok(s_ac + s_bc - s_abc - s_c)
}

pub fn mutual_information(rho: &DenseOperator, a: &[usize], b: &[usize]) -> Result<f64> {
    conditional_mutual_information(rho, a, b, &[])
}

/// ½‖a − b‖₁.
pub fn trace_distance(a: &DenseOperator, b: &DenseOperator) -> Result<f64> {
    if a.space() != b.space() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(0.5 * trace_norm(&(a.matrix() - b.matrix())))
}

pub mod pauli {
    use super::{c64, CMatrix};

    pub fn identity() -> CMatrix {
        CMatrix::identity(2, 2)
    }
    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
    }
    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
    }
    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
    }
}
