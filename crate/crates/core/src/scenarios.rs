//! Built-in scenarios: the N×N qubit grid with its row and column records,
//! depolarizing noise, classical-copy and embedding channels, and a tilted
//! repetition code with imperfect records.
//!
//! Grid site (i, j) (0-based row i, column j) is site `i * n + j`.

use serde::{Deserialize, Serialize};

use crate::compat::StateSet;
use crate::covering::Partition;
use crate::dynamics::{choi_from_images, Channel, ChoiState};
use crate::error::{Error, Result};
use crate::measurement::{complement_projector, Povm};
use crate::tensor::{pauli, CMatrix, CVector, DenseOperator, SiteSpace, State, StateVector, C64};

/// Largest grid side for pure states and for density matrices.
pub const MAX_PURE_GRID: usize = 4;
pub const MAX_MIXED_GRID: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScenario {
    pub n: usize,
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub noise_p: f64,
}

impl GridScenario {
    pub fn new(n: usize, alpha: C64, beta: C64, noise_p: f64) -> Result<Self> {
        let s = Self { n, alpha: (alpha.re, alpha.im), beta: (beta.re, beta.im), noise_p };
        s.validate()?;
        Ok(s)
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha.0, self.alpha.1)
    }

    pub fn beta(&self) -> C64 {
        C64::new(self.beta.0, self.beta.1)
    }

    pub fn n_sites(&self) -> usize {
        self.n * self.n
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidDimension("grid side must be at least 1".into()));
        }
        let norm = self.alpha().norm_sqr() + self.beta().norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(norm.sqrt()));
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::Config(format!("noise probability {} outside [0, 1]", self.noise_p)));
        }
        let limit = if self.noise_p == 0.0 { MAX_PURE_GRID } else { MAX_MIXED_GRID };
        if self.n > limit {
            return Err(Error::Envelope(format!("grid side {} exceeds {limit} for this state kind", self.n)));
        }
        Ok(())
    }
}

fn row_ghz(n: usize, sign: f64) -> CVector {
    let d = 1usize << n;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVector::zeros(d);
    v[0] = C64::new(h, 0.0);
    v[d - 1] += C64::new(sign * h, 0.0);
    v
}

/// |0̄⟩ and |1̄⟩ as products of per-row (|0…0⟩ ± |1…1⟩)/√2.
pub fn grid_logical_states(n: usize) -> Result<(StateVector, StateVector)> {
    if n == 0 || n > MAX_PURE_GRID {
        return Err(Error::Envelope(format!("grid side {n} outside 1..={MAX_PURE_GRID}")));
    }
    let build = |sign: f64| {
        let row = row_ghz(n, sign);
        let mut v = CVector::from_element(1, C64::new(1.0, 0.0));
        for _ in 0..n {
            v = v.kronecker(&row);
        }
        StateVector::new(SiteSpace::qubits(n * n), v)
    };
    Ok((build(1.0)?, build(-1.0)?))
}

/// The same vectors written as sums over column strings b: every column
/// holds |b⟩ (top row most significant), with sign (−1)^{h(b)} for |1̄⟩.
pub fn grid_logical_states_sum_form(n: usize) -> Result<(StateVector, StateVector)> {
    if n == 0 || n > MAX_PURE_GRID {
        return Err(Error::Envelope(format!("grid side {n} outside 1..={MAX_PURE_GRID}")));
    }
    let space = SiteSpace::qubits(n * n);
    let amp = 1.0 / ((1u64 << n) as f64).sqrt();
    let mut zero = CVector::zeros(space.total_dim());
    let mut one = CVector::zeros(space.total_dim());
    for b in 0..(1usize << n) {
        let bit = |i: usize| (b >> (n - 1 - i)) & 1;
        let mut digits = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                digits[i * n + j] = bit(i);
            }
        }
        let idx = space.index_of(&digits);
        let sign = if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        zero[idx] += C64::new(amp, 0.0);
        one[idx] += C64::new(sign * amp, 0.0);
    }
    Ok((StateVector::new(space.clone(), zero)?, StateVector::new(space, one)?))
}

/// Per-qubit depolarizing noise ρ → (1−p)ρ + p·tr_i(ρ) ⊗ 1/2 on every site.
/// Works for any operator, not only states.
pub fn depolarize(rho: &DenseOperator, p: f64) -> Result<DenseOperator> {
    if p == 0.0 {
        return Ok(rho.clone());
    }
    let kraus = depolarizing_kraus(p);
    let mut out = rho.clone();
    for s in 0..rho.space().n_sites() {
        if rho.space().dim(s) != 2 {
            return Err(Error::InvalidDimension(format!("site {s} is not a qubit")));
        }
        out = out.apply_local_kraus(&kraus, &[s])?;
    }
    Ok(out)
}

pub fn depolarizing_kraus(p: f64) -> Vec<CMatrix> {
    let a = (1.0 - 0.75 * p).sqrt();
    let b = (p / 4.0).sqrt();
    vec![pauli::identity().scale(a), pauli::x().scale(b), pauli::y().scale(b), pauli::z().scale(b)]
}

/// α|0̄⟩ + β|1̄⟩, then depolarizing noise when `noise_p > 0`.
pub fn build_grid_state(s: &GridScenario) -> Result<State> {
    s.validate()?;
    let (zero, one) = grid_logical_states(s.n)?;
    let v = zero.amplitudes() * s.alpha() + one.amplitudes() * s.beta();
    let psi = StateVector::normalized(zero.space().clone(), v)?;
    if s.noise_p == 0.0 {
        Ok(State::Pure(psi))
    } else {
        Ok(State::Mixed(depolarize(&psi.to_density(), s.noise_p)?))
    }
}

fn row_sites(i: usize, n: usize) -> Vec<usize> {
    (0..n).map(|j| i * n + j).collect()
}

fn column_sites(j: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| i * n + j).collect()
}

/// Projectors onto (|0…0⟩ ± |1…1⟩)/√2 on a block of qubits and the
/// remainder, labeled `+`, `-`, `perp`.
pub fn ghz_povm(block: &[usize]) -> Result<Povm> {
    let k = block.len();
    if k == 0 {
        return Err(Error::InvalidPartition("empty block".into()));
    }
    let space = SiteSpace::qubits(k);
    let plus = DenseOperator::projector(space.clone(), &row_ghz(k, 1.0))?;
    let minus = DenseOperator::projector(space.clone(), &row_ghz(k, -1.0))?;
    let perp = complement_projector(space.total_dim(), &[plus.matrix(), minus.matrix()]);
    Povm::new(
        block.to_vec(),
        vec![("+".into(), plus), ("-".into(), minus), ("perp".into(), DenseOperator::new(space, perp)?)],
    )
}

/// Even/odd Hamming-weight projectors on a block of qubits.
pub fn parity_povm(block: &[usize]) -> Result<Povm> {
    if block.is_empty() {
        return Err(Error::InvalidPartition("empty block".into()));
    }
    let space = SiteSpace::qubits(block.len());
    let d = space.total_dim();
    let even: Vec<f64> = (0..d).map(|b| if (b as u32).count_ones() % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let odd: Vec<f64> = even.iter().map(|e| 1.0 - e).collect();
    Povm::new(
        block.to_vec(),
        vec![
            ("even".into(), DenseOperator::from_diagonal(space.clone(), &even)?),
            ("odd".into(), DenseOperator::from_diagonal(space, &odd)?),
        ],
    )
}

/// Row-basis measurement on row i.
pub fn row_povm(i: usize, n: usize) -> Result<Povm> {
    if i >= n {
        return Err(Error::SiteOutOfRange { index: i, n_sites: n });
    }
    ghz_povm(&row_sites(i, n))
}

/// Column-parity measurement on column j.
pub fn column_parity_povm(j: usize, n: usize) -> Result<Povm> {
    if j >= n {
        return Err(Error::SiteOutOfRange { index: j, n_sites: n });
    }
    parity_povm(&column_sites(j, n))
}

/// (rows, columns).
pub fn grid_partitions(n: usize) -> (Partition, Partition) {
    let rows = Partition::new(n * n, (0..n).map(|i| row_sites(i, n)).collect());
    let cols = Partition::new(n * n, (0..n).map(|j| column_sites(j, n)).collect());
    (rows, cols)
}

/// The grid map as an isometry from one qubit: |0⟩ ↦ |0̄⟩, |1⟩ ↦ |1̄⟩.
pub fn grid_channel(n: usize) -> Result<Channel> {
    let (zero, one) = grid_logical_states(n)?;
    let d = zero.space().total_dim();
    let mut v = CMatrix::zeros(d, 2);
    v.set_column(0, zero.amplitudes());
    v.set_column(1, one.amplitudes());
    Channel::isometry(SiteSpace::qubits(1), zero.space().clone(), v)
}

/// Images of the operator basis |i⟩⟨k| under a linear map, so the image of
/// any input is a linear combination.
#[derive(Clone, Debug)]
pub struct LinearImages {
    d_in: usize,
    images: Vec<DenseOperator>,
}

impl LinearImages {
    pub fn new<F: Fn(&DenseOperator) -> Result<DenseOperator>>(input: &SiteSpace, map: F) -> Result<Self> {
        let d = input.total_dim();
        let mut images = Vec::with_capacity(d * d);
        for i in 0..d {
            for k in 0..d {
                let mut e = CMatrix::zeros(d, d);
                e[(i, k)] = C64::new(1.0, 0.0);
                images.push(map(&DenseOperator::new(input.clone(), e)?)?);
            }
        }
        Ok(Self { d_in: d, images })
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn output_space(&self) -> &SiteSpace {
        self.images[0].space()
    }

    pub fn choi(&self) -> Result<ChoiState> {
        choi_from_images(self.output_space(), &self.images)
    }

    pub fn apply(&self, sigma: &DenseOperator) -> Result<DenseOperator> {
        if sigma.dim() != self.d_in {
            return Err(Error::DimensionMismatch { expected: self.d_in, actual: sigma.dim() });
        }
        let space = self.images[0].space().clone();
        let mut out = CMatrix::zeros(space.total_dim(), space.total_dim());
        for i in 0..self.d_in {
            for k in 0..self.d_in {
                let s = sigma.matrix()[(i, k)];
                if s != C64::new(0.0, 0.0) {
                    out += self.images[i * self.d_in + k].matrix() * s;
                }
            }
        }
        DenseOperator::new(space, out)
    }
}

/// σ ↦ depolarize_p(V σ V†) for the grid isometry V.
pub fn noisy_grid_images(n: usize, p: f64) -> Result<LinearImages> {
    let ch = grid_channel(n)?;
    if p > 0.0 && n > MAX_MIXED_GRID {
        return Err(Error::Envelope(format!("grid side {n} exceeds {MAX_MIXED_GRID} for noisy states")));
    }
    let v = ch.kraus()[0].clone();
    let out = ch.output_space().clone();
    LinearImages::new(ch.input_space(), |e| {
        let m = &v * e.matrix() * v.adjoint();
        depolarize(&DenseOperator::new(out.clone(), m)?, p)
    })
}

/// 𝓓 = {map(σ)} for the given inputs σ.
pub fn attainable_states(images: &LinearImages, sigmas: &[DenseOperator], tag: &str) -> Result<StateSet> {
    let states = sigmas.iter().map(|s| images.apply(s).map(State::Mixed)).collect::<Result<Vec<_>>>()?;
    StateSet::new(tag, states)
}

/// K_x = |x on every copy site, 0 on fillers⟩⟨x|. All sites have dimension d.
pub fn classical_copy_channel(d: usize, copy_sites: &[usize], filler_sites: &[usize]) -> Result<Channel> {
    let n = copy_sites.len() + filler_sites.len();
    let mut all: Vec<usize> = copy_sites.iter().chain(filler_sites).copied().collect();
    all.sort_unstable();
    if all != (0..n).collect::<Vec<_>>() {
        return Err(Error::DimensionMismatch { expected: n, actual: all.len() });
    }
    if copy_sites.is_empty() || d == 0 {
        return Err(Error::InvalidDimension("need at least one copy site and d ≥ 1".into()));
    }
    let out = SiteSpace::uniform(n, d)?;
    let kraus = (0..d)
        .map(|x| {
            let mut digits = vec![0; n];
            for &s in copy_sites {
                digits[s] = x;
            }
            let mut k = CMatrix::zeros(out.total_dim(), d);
            k[(out.index_of(&digits), x)] = C64::new(1.0, 0.0);
            k
        })
        .collect();
    Channel::new(SiteSpace::new(vec![d])?, out, kraus)
}

/// |i⟩ ↦ |i⟩ on `site`, |0⟩ on every other site.
pub fn embedding_channel(d: usize, n_sites: usize, site: usize) -> Result<Channel> {
    if site >= n_sites {
        return Err(Error::SiteOutOfRange { index: site, n_sites });
    }
    let out = SiteSpace::uniform(n_sites, d)?;
    let mut v = CMatrix::zeros(out.total_dim(), d);
    for i in 0..d {
        let mut digits = vec![0; n_sites];
        digits[site] = i;
        v[(out.index_of(&digits), i)] = C64::new(1.0, 0.0);
    }
    Channel::isometry(SiteSpace::new(vec![d])?, out, v)
}

/// Repetition code with non-orthogonal copies: |x⟩ ↦ ⊗_k |φ^k_x⟩ with
/// |φ^k_0⟩ = cos t_k|0⟩ + sin t_k|1⟩, |φ^k_1⟩ = sin t_k|0⟩ + cos t_k|1⟩ and
/// t_k = tilt + k·tilt_step.
#[derive(Clone, Debug, PartialEq)]
pub struct TiltedRepetition {
    pub n_sites: usize,
    pub tilt: f64,
    pub tilt_step: f64,
}

impl TiltedRepetition {
    pub fn logical_states(&self) -> Result<(StateVector, StateVector)> {
        if self.n_sites == 0 || self.n_sites > 14 {
            return Err(Error::Envelope(format!("{} sites outside 1..=14", self.n_sites)));
        }
        let build = |flip: bool| {
            let mut v = CVector::from_element(1, C64::new(1.0, 0.0));
            for k in 0..self.n_sites {
                let t = self.tilt + k as f64 * self.tilt_step;
                let (a, b) = if flip { (t.sin(), t.cos()) } else { (t.cos(), t.sin()) };
                v = v.kronecker(&CVector::from_vec(vec![C64::new(a, 0.0), C64::new(b, 0.0)]));
            }
            v
        };
        let space = SiteSpace::qubits(self.n_sites);
        Ok((StateVector::new(space.clone(), build(false))?, StateVector::new(space, build(true))?))
    }

    /// Image of a pure input a|0⟩ + b|1⟩, renormalized since the copies are
    /// not orthogonal.
    pub fn encode(&self, input: &StateVector) -> Result<StateVector> {
        if input.space().total_dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, actual: input.space().total_dim() });
        }
        let (zero, one) = self.logical_states()?;
        let a = input.amplitudes();
        StateVector::normalized(zero.space().clone(), zero.amplitudes() * a[0] + one.amplitudes() * a[1])
    }
}

/// Computational readout of a block of qubits followed by a majority vote,
/// labeled `0` and `1`. Ties split evenly, so even blocks give a POVM that
/// is not projective.
pub fn block_majority_povm(block: &[usize]) -> Result<Povm> {
    let k = block.len();
    let space = SiteSpace::qubits(k);
    let zero: Vec<f64> = (0..space.total_dim())
        .map(|b: usize| {
            let ones = b.count_ones() as usize;
            match (2 * ones).cmp(&k) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Greater => 0.0,
            }
        })
        .collect();
    let one: Vec<f64> = zero.iter().map(|w| 1.0 - w).collect();
    Povm::new(
        block.to_vec(),
        vec![
            ("0".into(), DenseOperator::from_diagonal(space.clone(), &zero)?),
            ("1".into(), DenseOperator::from_diagonal(space, &one)?),
        ],
    )
}

/// POVMs for every block of a partition.
pub fn family<F: Fn(&[usize]) -> Result<Povm>>(partition: &Partition, make: F) -> Result<Vec<Povm>> {
    partition.blocks().iter().map(|b| make(b)).collect()
}
