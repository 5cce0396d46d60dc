//! Channels, Choi states, measure-and-prepare decompositions and quantum
//! Markov-blanket search.
//!
//! The Choi state of Λ: 𝓡 → 𝓢 lives on the space `[d_R, system dims…]`,
//! with the reference copy 𝓡′ as site 0.

use rand::seq::index::sample;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{outcome_probabilities, Povm};
use crate::random::{mix_seed, random_isometry, random_unitary, seeded};
use crate::tensor::{
    entropy_of_eigenvalues, entropy_unnormalized, hermitian_eigen, hermitian_operator_norm, kron, mutual_information,
    trace_norm, CMatrix, DenseOperator, SiteSpace, C64, ZERO,
};

/// Largest Choi dimension handled densely.
pub const MAX_CHOI_DIM: usize = 1 << 11;
pub const DEGENERATE_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    input: SiteSpace,
    output: SiteSpace,
    kraus: Vec<CMatrix>,
}

impl Channel {
    /// Requires Σ K†K = 1 within 1e-9.
    pub fn new(input: SiteSpace, output: SiteSpace, kraus: Vec<CMatrix>) -> Result<Self> {
        let (di, d_o) = (input.total_dim(), output.total_dim());
        if kraus.is_empty() {
            return Err(Error::InvalidChannel("no Kraus operators".into()));
        }
        let mut acc = CMatrix::zeros(di, di);
        for (k, op) in kraus.iter().enumerate() {
            if op.nrows() != d_o || op.ncols() != di {
                return Err(Error::InvalidChannel(format!(
                    "Kraus operator {k} is {}x{}, expected {d_o}x{di}",
                    op.nrows(),
                    op.ncols()
                )));
            }
            acc += op.adjoint() * op;
        }
        let err = (acc - CMatrix::identity(di, di)).norm();
        if err > 1e-9 {
            return Err(Error::InvalidChannel(format!("not trace preserving (deviation {err:e})")));
        }
        Ok(Self { input, output, kraus })
    }

    pub fn identity(space: SiteSpace) -> Self {
        let d = space.total_dim();
        Self { input: space.clone(), output: space, kraus: vec![CMatrix::identity(d, d)] }
    }

    /// Single Kraus operator V with V†V = 1.
    pub fn isometry(input: SiteSpace, output: SiteSpace, v: CMatrix) -> Result<Self> {
        Self::new(input, output, vec![v])
    }

    pub fn input_space(&self) -> &SiteSpace {
        &self.input
    }

    pub fn output_space(&self) -> &SiteSpace {
        &self.output
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn input_dim(&self) -> usize {
        self.input.total_dim()
    }

    pub fn apply(&self, sigma: &DenseOperator) -> Result<DenseOperator> {
        if sigma.space() != &self.input {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: sigma.dim() });
        }
        let mut out = CMatrix::zeros(self.output.total_dim(), self.output.total_dim());
        for k in &self.kraus {
            out += k * sigma.matrix() * k.adjoint();
        }
        DenseOperator::new(self.output.clone(), out)
    }
}

/// Haar-random isometry into output ⊗ ancilla with the ancilla traced out.
pub fn random_channel(d_in: usize, site_dims: &[usize], rank: usize, seed: u64) -> Result<Channel> {
    let output = SiteSpace::new(site_dims.to_vec())?;
    let d_out = output.total_dim();
    if rank == 0 || d_in == 0 || d_in > d_out {
        return Err(Error::InvalidDimension(format!("d_in = {d_in}, output dim = {d_out}, rank = {rank}")));
    }
    let v = random_isometry(d_out * rank, d_in, &mut seeded(seed));
    let kraus = (0..rank).map(|k| v.rows(k * d_out, d_out).into_owned()).collect();
    Channel::new(SiteSpace::new(vec![d_in])?, output, kraus)
}

/// Normalized Choi state (1 ⊗ Λ)(|ψ⟩⟨ψ|), |ψ⟩ = Σ|ii⟩/√d_R.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiState {
    reference_dim: usize,
    system: SiteSpace,
    rho: DenseOperator,
}

impl ChoiState {
    pub fn reference_dim(&self) -> usize {
        self.reference_dim
    }

    pub fn system_space(&self) -> &SiteSpace {
        &self.system
    }

    pub fn rho(&self) -> &DenseOperator {
        &self.rho
    }

    pub fn n_system_sites(&self) -> usize {
        self.system.n_sites()
    }

    /// Reduced state on 𝓡′ followed by the given system sites.
    pub fn reduced_with_reference(&self, system_sites: &[usize]) -> Result<DenseOperator> {
        let mut keep = vec![0];
        keep.extend(system_sites.iter().map(|s| s + 1));
        self.rho.partial_trace(&keep)
    }
}

pub fn choi_state(ch: &Channel) -> Result<ChoiState> {
    if ch.input.n_sites() != 1 {
        return Err(Error::InvalidChannel("the input must be a single register".into()));
    }
    let d = ch.input_dim();
    let d_out = ch.output.total_dim();
    if d * d_out > MAX_CHOI_DIM {
        return Err(Error::Envelope(format!("Choi dimension {} exceeds {MAX_CHOI_DIM}", d * d_out)));
    }
    let mut m = CMatrix::zeros(d * d_out, d * d_out);
    for k in &ch.kraus {
        // Column (i, a) of the vectorized Kraus operator.
        let mut v = crate::tensor::CVector::zeros(d * d_out);
        for i in 0..d {
            for a in 0..d_out {
                v[i * d_out + a] = k[(a, i)];
            }
        }
        m.gerc(C64::new(1.0 / d as f64, 0.0), &v, &v, C64::new(1.0, 0.0));
    }
    let space = SiteSpace::new(vec![d])?.concat(&ch.output);
    Ok(ChoiState { reference_dim: d, system: ch.output.clone(), rho: DenseOperator::new(space, m)? })
}

/// Choi state from the images `blocks[i·d + k]` = Λ(|i⟩⟨k|), for maps whose
/// Kraus form is too large to enumerate.
pub fn choi_from_images(output: &SiteSpace, blocks: &[DenseOperator]) -> Result<ChoiState> {
    let d = (blocks.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != blocks.len() {
        return Err(Error::InvalidChannel(format!("{} images do not form a d×d operator basis", blocks.len())));
    }
    let n = output.total_dim();
    if d * n > MAX_CHOI_DIM {
        return Err(Error::Envelope(format!("Choi dimension {} exceeds {MAX_CHOI_DIM}", d * n)));
    }
    let mut m = CMatrix::zeros(d * n, d * n);
    for i in 0..d {
        for k in 0..d {
            let b = &blocks[i * d + k];
            if b.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: b.dim() });
            }
            let tr = b.trace();
            let want = if i == k { C64::new(1.0, 0.0) } else { ZERO };
            if (tr - want).norm() > 1e-9 {
                return Err(Error::InvalidChannel(format!("image of |{i}⟩⟨{k}| has trace {tr}")));
            }
            m.view_mut((i * n, k * n), (n, n)).copy_from(&b.matrix().scale(1.0 / d as f64));
        }
    }
    let rho = DenseOperator::new(SiteSpace::new(vec![d])?.concat(output), m)?;
    if !rho.is_psd(1e-9) {
        return Err(Error::InvalidChannel("the map is not completely positive".into()));
    }
    Ok(ChoiState { reference_dim: d, system: output.clone(), rho })
}

/// Λ(σ)_ab = d_R Σ_{ik} σ_ik ρ_{(i,a),(k,b)}.
pub fn apply_via_choi(choi: &ChoiState, sigma: &DenseOperator) -> Result<DenseOperator> {
    let d = choi.reference_dim;
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: sigma.dim() });
    }
    let n = choi.system.total_dim();
    let rho = choi.rho.matrix();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..d {
        for k in 0..d {
            let s = sigma.matrix()[(i, k)] * d as f64;
            if s == ZERO {
                continue;
            }
            out += rho.view((i * n, k * n), (n, n)) * s;
        }
    }
    DenseOperator::new(choi.system.clone(), out)
}

/// A measurement on a subset of sites that can condition a state: for each
/// outcome θ it yields tr_sites((E^θ ⊗ 1) ρ) on the remaining sites.
pub trait SubsystemMeasurement {
    fn sites(&self) -> &[usize];
    fn n_outcomes(&self) -> usize;
    fn outcome_label(&self, theta: usize) -> String;
    /// `positions[i]` is where `sites()[i]` sits inside `rho`.
    fn condition(&self, rho: &DenseOperator, positions: &[usize]) -> Result<Vec<DenseOperator>>;
}

impl SubsystemMeasurement for Povm {
    fn sites(&self) -> &[usize] {
        self.support()
    }

    fn n_outcomes(&self) -> usize {
        Povm::n_outcomes(self)
    }

    fn outcome_label(&self, theta: usize) -> String {
        self.labels()[theta].clone()
    }

    fn condition(&self, rho: &DenseOperator, positions: &[usize]) -> Result<Vec<DenseOperator>> {
        self.effects().iter().map(|e| rho.contract(positions, e.matrix())).collect()
    }
}

/// Rank-one projective measurement stored by its basis, either as one
/// unitary per site or as a single unitary on all its sites. Outcome θ is
/// the basis index with the first site most significant.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisMeasurement {
    Product { sites: Vec<usize>, unitaries: Vec<CMatrix> },
    Full { sites: Vec<usize>, dims: Vec<usize>, unitary: CMatrix },
}

impl BasisMeasurement {
    pub fn computational(sites: &[usize], dims: &[usize]) -> Self {
        Self::Product { sites: sites.to_vec(), unitaries: dims.iter().map(|&d| CMatrix::identity(d, d)).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Self::Product { unitaries, .. } => unitaries.iter().map(|u| u.nrows()).collect(),
            Self::Full { dims, .. } => dims.clone(),
        }
    }

    /// Dense effects; only sensible for small supports.
    pub fn to_povm(&self) -> Result<Povm> {
        let dims = self.dims();
        let space = SiteSpace::new(dims.clone())?;
        let basis = match self {
            Self::Product { unitaries, .. } => unitaries.iter().fold(CMatrix::identity(1, 1), |acc, u| kron(&acc, u)),
            Self::Full { unitary, .. } => unitary.clone(),
        };
        let labels = (0..space.total_dim()).map(|t| self.outcome_label(t)).collect();
        Povm::from_basis(self.sites().to_vec(), space, &basis, labels)
    }
}

fn rank_one(u: &CMatrix, t: usize) -> CMatrix {
    let col = u.column(t);
    &col * col.adjoint()
}

/// Removes `pos` from a list of positions, shifting later ones down.
fn shift_after(positions: &mut [usize], removed: usize) {
    for p in positions.iter_mut() {
        if *p > removed {
            *p -= 1;
        }
    }
}

impl SubsystemMeasurement for BasisMeasurement {
    fn sites(&self) -> &[usize] {
        match self {
            Self::Product { sites, .. } | Self::Full { sites, .. } => sites,
        }
    }

    fn n_outcomes(&self) -> usize {
        self.dims().iter().product()
    }

    fn outcome_label(&self, theta: usize) -> String {
        let dims = self.dims();
        SiteSpace::new(dims).map(|s| s.digits(theta)).unwrap_or_default().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("")
    }

    fn condition(&self, rho: &DenseOperator, positions: &[usize]) -> Result<Vec<DenseOperator>> {
        if positions.len() != self.sites().len() {
            return Err(Error::DimensionMismatch { expected: self.sites().len(), actual: positions.len() });
        }
        match self {
            Self::Product { unitaries, .. } => {
                let mut blocks = vec![rho.clone()];
                let mut pos = positions.to_vec();
                for (i, u) in unitaries.iter().enumerate() {
                    let p = pos[i];
                    let effects: Vec<CMatrix> = (0..u.ncols()).map(|t| rank_one(u, t)).collect();
                    let mut next = Vec::with_capacity(blocks.len() * effects.len());
                    for b in &blocks {
                        for e in &effects {
                            next.push(b.contract(&[p], e)?);
                        }
                    }
                    blocks = next;
                    shift_after(&mut pos, p);
                }
                Ok(blocks)
            }
            Self::Full { unitary, .. } => {
                let rotated = rho.conjugate_local(&unitary.adjoint(), positions)?;
                let d = unitary.nrows();
                (0..d)
                    .map(|t| {
                        let mut e = CMatrix::zeros(d, d);
                        e[(t, t)] = C64::new(1.0, 0.0);
                        rotated.contract(positions, &e)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreparedOutcome {
    pub label: String,
    pub probability: f64,
    /// Outcomes with probability ≤ 1e-12 carry maximally mixed conditionals.
    pub degenerate: bool,
    #[serde(skip)]
    pub rho_reference: DenseOperator,
    /// Conditional state on the system sites outside q, ascending.
    #[serde(skip)]
    pub rho_rest: DenseOperator,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurePrepare {
    pub q: Vec<usize>,
    pub rest: Vec<usize>,
    pub outcomes: Vec<PreparedOutcome>,
}

impl MeasurePrepare {
    /// ρ^θ_f for system sites `f` (all outside q).
    pub fn conditional_on(&self, theta: usize, f: &[usize]) -> Result<DenseOperator> {
        let pos = positions_in(&self.rest, f)?;
        self.outcomes[theta].rho_rest.partial_trace(&pos)
    }
}

fn positions_in(list: &[usize], sites: &[usize]) -> Result<Vec<usize>> {
    sites
        .iter()
        .map(|s| list.iter().position(|x| x == s).ok_or(Error::Overlap(*s)))
        .collect()
}

fn maximally_mixed_like(op: &DenseOperator) -> DenseOperator {
    DenseOperator::maximally_mixed(op.space().clone())
}

/// p_θ = tr(T^θ_q ρ) with normalized conditionals on 𝓡′ and on the rest.
pub fn measure_prepare_decomposition<M: SubsystemMeasurement + ?Sized>(choi: &ChoiState, t_q: &M) -> Result<MeasurePrepare> {
    let q = t_q.sites().to_vec();
    choi.system.check_sites(&q)?;
    let positions: Vec<usize> = q.iter().map(|s| s + 1).collect();
    let blocks = t_q.condition(&choi.rho, &positions)?;
    let rest = choi.system.complement(&q);
    let rest_pos: Vec<usize> = (1..=rest.len()).collect();
    let mut outcomes = Vec::with_capacity(blocks.len());
    for (t, b) in blocks.iter().enumerate() {
        let p = b.trace().re;
        let r = b.partial_trace(&[0])?;
        let s = b.partial_trace(&rest_pos)?;
        let degenerate = p <= DEGENERATE_PROBABILITY;
        let (rho_reference, rho_rest) =
            if degenerate { (maximally_mixed_like(&r), maximally_mixed_like(&s)) } else { (r.scaled(1.0 / p), s.scaled(1.0 / p)) };
        outcomes.push(PreparedOutcome { label: t_q.outcome_label(t), probability: p.max(0.0), degenerate, rho_reference, rho_rest });
    }
    Ok(MeasurePrepare { q, rest, outcomes })
}

/// I(A : F | Q) for classical Q, F given unnormalized blocks N_{θα} on A:
/// S(AQ) + S(FQ) − S(AFQ) − S(Q), in bits.
pub fn classical_conditional_mi(blocks: &[Vec<CMatrix>]) -> f64 {
    let mut s_afq = 0.0;
    let mut s_aq = 0.0;
    let mut p_fq = Vec::new();
    let mut p_q = Vec::new();
    for row in blocks {
        let mut sum = CMatrix::zeros(row[0].nrows(), row[0].ncols());
        let mut pq = 0.0;
        for n in row {
            s_afq += entropy_unnormalized(n);
            let p = n.trace().re;
            p_fq.push(p);
            pq += p;
            sum += n;
        }
        s_aq += entropy_unnormalized(&sum);
        p_q.push(pq);
    }
    s_aq + entropy_of_eigenvalues(&p_fq) - s_afq - entropy_of_eigenvalues(&p_q)
}

/// Which T_q candidates the blanket search tries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlanketConfig {
    pub w_q: usize,
    pub w_f: usize,
    /// Sampled fragments f per q; all are used when there are fewer.
    pub f_samples: usize,
    /// Random product bases per fragment in addition to the computational one.
    pub xi_f_samples: usize,
    pub computational: bool,
    /// Eigenbasis of ρ_q, tried when dim(q) ≤ `eigenbasis_max_dim`.
    pub eigenbasis: bool,
    pub eigenbasis_max_dim: usize,
    pub random_bases: usize,
    pub candidate_cap: u128,
    pub seed: u64,
}

impl Default for BlanketConfig {
    fn default() -> Self {
        Self {
            w_q: 1,
            w_f: 1,
            f_samples: 8,
            xi_f_samples: 2,
            computational: true,
            eigenbasis: true,
            eigenbasis_max_dim: 32,
            random_bases: 2,
            candidate_cap: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum TqKind {
    Computational,
    Eigenbasis,
    RandomProduct(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateScore {
    pub q: Vec<usize>,
    pub kind: TqKind,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlanketResult {
    pub q: Vec<usize>,
    pub t_q_kind: TqKind,
    #[serde(skip)]
    pub t_q: BasisMeasurement,
    pub score: f64,
    pub d_r: usize,
    pub w_q: usize,
    pub w_f: usize,
    /// δ with the chosen |q| in the denominator.
    pub delta_bound: f64,
    /// δ with the configured w_q.
    pub delta_bound_wq: f64,
    pub candidates: Vec<CandidateScore>,
    #[serde(skip)]
    pub decomposition: MeasurePrepare,
}

/// d_R √(2 ln(d_R) w_f / w_q); infinite for w_q = 0.
pub fn analytic_delta(d_r: usize, w_f: usize, w_q: usize) -> f64 {
    if w_q == 0 {
        return f64::INFINITY;
    }
    let d = d_r as f64;
    d * (2.0 * d.ln() * w_f as f64 / w_q as f64).sqrt()
}

fn mask_of(sites: &[usize]) -> u64 {
    sites.iter().fold(0u64, |m, &s| m | (1u64 << (s % 64)))
}

fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for size in 1..=k.min(n) {
        let mut c: Vec<usize> = (0..size).collect();
        loop {
            out.push(c.clone());
            let mut i = size;
            while i > 0 && c[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            c[i - 1] += 1;
            for j in i..size {
                c[j] = c[j - 1] + 1;
            }
        }
    }
    out
}

fn subsets_of_size(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    subsets_up_to(items.len(), k)
        .into_iter()
        .filter(|c| c.len() == k)
        .map(|c| c.into_iter().map(|i| items[i]).collect())
        .collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

fn random_product_basis(sites: &[usize], dims: &[usize], seed: u64) -> BasisMeasurement {
    let mut rng = seeded(seed);
    BasisMeasurement::Product { sites: sites.to_vec(), unitaries: dims.iter().map(|&d| random_unitary(d, &mut rng)).collect() }
}

fn tq_candidates(choi: &ChoiState, q: &[usize], cfg: &BlanketConfig) -> Result<Vec<(TqKind, BasisMeasurement)>> {
    let dims: Vec<usize> = q.iter().map(|&s| choi.system.dim(s)).collect();
    let mut out = Vec::new();
    if cfg.computational || q.is_empty() {
        out.push((TqKind::Computational, BasisMeasurement::computational(q, &dims)));
    }
    if q.is_empty() {
        return Ok(out);
    }
    let dim_q: usize = dims.iter().product();
    if cfg.eigenbasis && dim_q <= cfg.eigenbasis_max_dim {
        let pos: Vec<usize> = q.iter().map(|s| s + 1).collect();
        let rho_q = choi.rho.partial_trace(&pos)?;
        let (_, vecs) = hermitian_eigen(rho_q.matrix());
        out.push((TqKind::Eigenbasis, BasisMeasurement::Full { sites: q.to_vec(), dims: dims.clone(), unitary: vecs }));
    }
    for k in 0..cfg.random_bases {
        let seed = mix_seed(mix_seed(cfg.seed, mask_of(q)), 0x7100 + k as u64);
        out.push((TqKind::RandomProduct(k), random_product_basis(q, &dims, seed)));
    }
    Ok(out)
}

fn sampled_fragments(rest: &[usize], cfg: &BlanketConfig, q: &[usize]) -> Vec<Vec<usize>> {
    let total = binomial(rest.len(), cfg.w_f);
    if total <= cfg.f_samples as u128 {
        return subsets_of_size(rest, cfg.w_f);
    }
    let mut rng = seeded(mix_seed(mix_seed(cfg.seed, mask_of(q)), 0xF5));
    let mut picked: Vec<Vec<usize>> = Vec::new();
    while picked.len() < cfg.f_samples {
        let mut f: Vec<usize> = sample(&mut rng, rest.len(), cfg.w_f).into_iter().map(|i| rest[i]).collect();
        f.sort_unstable();
        if !picked.contains(&f) {
            picked.push(f);
        }
    }
    picked.sort();
    picked
}

fn xi_candidates(choi: &ChoiState, f: &[usize], cfg: &BlanketConfig, q: &[usize]) -> Vec<BasisMeasurement> {
    let dims: Vec<usize> = f.iter().map(|&s| choi.system.dim(s)).collect();
    let mut out = vec![BasisMeasurement::computational(f, &dims)];
    for k in 0..cfg.xi_f_samples {
        let seed = mix_seed(mix_seed(mix_seed(cfg.seed, mask_of(q)), mask_of(f)), 0xE1 + k as u64);
        out.push(random_product_basis(f, &dims, seed));
    }
    out
}

/// CMI(𝓡′ : Ξ_f | T_q) on the reduced state ordered as [𝓡′, f…, q…].
fn score_on_reduced<T: SubsystemMeasurement + ?Sized, X: SubsystemMeasurement + ?Sized>(
    rho: &DenseOperator,
    n_f: usize,
    t_q: &T,
    xi: &X,
) -> Result<f64> {
    let q_pos: Vec<usize> = (1 + n_f..1 + n_f + t_q.sites().len()).collect();
    let f_pos: Vec<usize> = (1..1 + n_f).collect();
    let mut blocks = Vec::new();
    for n in t_q.condition(rho, &q_pos)? {
        let row = xi.condition(&n, &f_pos)?.into_iter().map(DenseOperator::into_matrix).collect();
        blocks.push(row);
    }
    Ok(classical_conditional_mi(&blocks))
}

/// Enumerates q with |q| ≤ w_q and picks the (q, T_q) whose sampled
/// worst-case conditional mutual information is smallest. Ties within 1e-9
/// prefer larger q, then lexicographic order.
pub fn find_markov_blanket(choi: &ChoiState, cfg: &BlanketConfig) -> Result<BlanketResult> {
    let n = choi.n_system_sites();
    if cfg.w_f == 0 || cfg.w_q + cfg.w_f > n {
        return Err(Error::Precondition(format!("w_q + w_f = {} exceeds {n} sites (w_f ≥ 1)", cfg.w_q + cfg.w_f)));
    }
    let count: u128 = (0..=cfg.w_q).map(|k| binomial(n, k)).sum();
    if count > cfg.candidate_cap {
        return Err(Error::LimitExceeded { needed: count, cap: cfg.candidate_cap });
    }
    let mut best: Option<(f64, Vec<usize>, TqKind, BasisMeasurement)> = None;
    let mut candidates = Vec::new();
    for q in subsets_up_to(n, cfg.w_q) {
        let rest = choi.system.complement(&q);
        let fragments = sampled_fragments(&rest, cfg, &q);
        let tqs = tq_candidates(choi, &q, cfg)?;
        let mut worst = vec![0.0f64; tqs.len()];
        for f in &fragments {
            let mut sites = f.clone();
            sites.extend_from_slice(&q);
            let rho = choi.reduced_with_reference(&sites)?;
            let xis = xi_candidates(choi, f, cfg, &q);
            for (k, (_, t)) in tqs.iter().enumerate() {
                for xi in &xis {
                    worst[k] = worst[k].max(score_on_reduced(&rho, f.len(), t, xi)?);
                }
            }
        }
        let (k, &score) = worst
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one candidate");
        candidates.push(CandidateScore { q: q.clone(), kind: tqs[k].0.clone(), score });
        let better = match &best {
            None => true,
            Some((s, bq, _, _)) => {
                if score < s - 1e-9 {
                    true
                } else if score <= s + 1e-9 {
                    q.len() > bq.len() || (q.len() == bq.len() && q < *bq)
                } else {
                    false
                }
            }
        };
        if better {
            let (kind, t) = tqs.into_iter().nth(k).unwrap();
            best = Some((score, q, kind, t));
        }
    }
    let (score, q, kind, t_q) = best.expect("the empty set is always a candidate");
    let decomposition = measure_prepare_decomposition(choi, &t_q)?;
    Ok(BlanketResult {
        delta_bound: analytic_delta(choi.reference_dim, cfg.w_f, q.len()),
        delta_bound_wq: analytic_delta(choi.reference_dim, cfg.w_f, cfg.w_q),
        q,
        t_q_kind: kind,
        t_q,
        score,
        d_r: choi.reference_dim,
        w_q: cfg.w_q,
        w_f: cfg.w_f,
        candidates,
        decomposition,
    })
}

/// One test of the deviation bound: input σ on 𝓡 and a POVM on fragment f.
#[derive(Clone, Debug)]
pub struct BoundTrial {
    pub sigma: DenseOperator,
    pub povm: Povm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: usize,
    pub f: Vec<usize>,
    /// max over α of |tr(F^α ϱ) − Σ_θ p(α|θ) tr(T^θ ϱ)|.
    pub deviation: f64,
    pub deviation_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FragmentRecord {
    pub f: Vec<usize>,
    pub trials: usize,
    /// Largest deviation over every input state.
    pub worst_case: f64,
    pub choi_bound: f64,
    pub cmi: f64,
    pub pinsker_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub q: Vec<usize>,
    pub delta: f64,
    pub delta_wq: f64,
    pub bound: f64,
    pub max_deviation: f64,
    pub max_worst_case: f64,
    pub holds: bool,
    pub trials: Vec<TrialRecord>,
    pub fragments: Vec<FragmentRecord>,
}

struct FragmentModel {
    /// p(α | θ) = tr(F^α ρ^θ_f).
    response: Vec<Vec<f64>>,
    record: FragmentRecord,
}

fn fragment_model(choi: &ChoiState, blanket: &BlanketResult, povm: &Povm) -> Result<FragmentModel> {
    let f = povm.support().to_vec();
    let dec = &blanket.decomposition;
    let d = choi.reference_dim as f64;
    let response = (0..dec.outcomes.len())
        .map(|t| {
            let rho_f = dec.conditional_on(t, &f)?;
            Ok(povm.effects().iter().map(|e| trace_product_re(e.matrix(), rho_f.matrix())).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    // A_α = tr_f(F^α ρ_{𝓡′f}) on 𝓡′; the σ-linear deviation is d·tr(σᵀ Δ_α).
    let rho_rf = choi.reduced_with_reference(&f)?;
    let f_pos: Vec<usize> = (1..=f.len()).collect();
    let mut worst_case: f64 = 0.0;
    let mut choi_bound = 0.0;
    for (a, e) in povm.effects().iter().enumerate() {
        let mut delta_a = rho_rf.contract(&f_pos, e.matrix())?.into_matrix();
        for (t, o) in dec.outcomes.iter().enumerate() {
            if o.degenerate {
                continue;
            }
            delta_a -= o.rho_reference.matrix().scale(o.probability * response[t][a]);
        }
        // ℓ(σ) = d Σ_ik σ_ik Δ_ik = tr(σ · dΔᵀ).
        let h = delta_a.transpose().scale(d);
        worst_case = worst_case.max(hermitian_operator_norm(&h));
        choi_bound += d * trace_norm(&delta_a);
    }

    let mut sites = f.clone();
    sites.extend_from_slice(&blanket.q);
    let rho = choi.reduced_with_reference(&sites)?;
    let cmi = score_on_reduced(&rho, f.len(), &blanket.t_q, povm)?;
    let pinsker_bound = d * (2.0 * std::f64::consts::LN_2 * cmi.max(0.0)).sqrt();
    Ok(FragmentModel { response, record: FragmentRecord { f, trials: 0, worst_case, choi_bound, cmi, pinsker_bound } })
}

fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    crate::tensor::trace_of_product(a, b).re
}

/// Checks |tr(F^α ϱ) − Σ_θ p(α|F,θ) tr(T^θ ϱ)| ≤ min(1, δ) on every trial,
/// with ϱ = Λ(σ) reconstructed from the Choi state.
pub fn verify_theorem_bound(choi: &ChoiState, blanket: &BlanketResult, trials: &[BoundTrial]) -> Result<BoundReport> {
    let mut models: Vec<(Vec<usize>, Vec<String>, Vec<CMatrix>, FragmentModel)> = Vec::new();
    let mut records = Vec::with_capacity(trials.len());
    let q_local: Vec<usize> = (0..blanket.q.len()).collect();
    for (index, trial) in trials.iter().enumerate() {
        let mut f = trial.povm.support().to_vec();
        f.sort_unstable();
        if let Some(&s) = f.iter().find(|s| blanket.q.contains(s)) {
            return Err(Error::Overlap(s));
        }
        if f.len() != blanket.w_f {
            return Err(Error::Precondition(format!("fragment {f:?} does not have size w_f = {}", blanket.w_f)));
        }
        let key_effects: Vec<CMatrix> = trial.povm.effects().iter().map(|e| e.matrix().clone()).collect();
        let pos = models.iter().position(|(s, l, e, _)| s == trial.povm.support() && l == trial.povm.labels() && *e == key_effects);
        let m = match pos {
            Some(p) => p,
            None => {
                let model = fragment_model(choi, blanket, &trial.povm)?;
                models.push((trial.povm.support().to_vec(), trial.povm.labels().to_vec(), key_effects, model));
                models.len() - 1
            }
        };
        let model = &mut models[m].3;
        model.record.trials += 1;

        let out = apply_via_choi(choi, &trial.sigma)?;
        let actual = outcome_probabilities(&trial.povm, &out)?;
        let rho_q = out.partial_trace(&blanket.q)?;
        let p_theta: Vec<f64> = blanket.t_q.condition(&rho_q, &q_local)?.iter().map(|b| b.trace().re).collect();
        let mut deviation: f64 = 0.0;
        let mut deviation_sum = 0.0;
        for (a, p) in actual.iter().enumerate() {
            let predicted: f64 = p_theta.iter().zip(&model.response).map(|(pt, r)| pt * r[a]).sum();
            let dev = (p - predicted).abs();
            deviation = deviation.max(dev);
            deviation_sum += dev;
        }
        records.push(TrialRecord { index, f, deviation, deviation_sum });
    }
    let delta = blanket.delta_bound;
    let bound = delta.min(1.0);
    let max_deviation = records.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let fragments: Vec<FragmentRecord> = models.into_iter().map(|m| m.3.record).collect();
    let max_worst_case = fragments.iter().map(|r| r.worst_case).fold(0.0, f64::max);
    Ok(BoundReport {
        q: blanket.q.clone(),
        delta,
        delta_wq: blanket.delta_bound_wq,
        bound,
        max_deviation,
        max_worst_case,
        holds: max_deviation <= bound + 1e-9,
        trials: records,
        fragments,
    })
}

/// (‖ρ_ab − ρ_a ⊗ ρ_b‖₁² / (2 ln 2), I(a:b) in bits).
pub fn pinsker_check(rho: &DenseOperator, a: &[usize], b: &[usize]) -> Result<(f64, f64)> {
    let mut ab = a.to_vec();
    ab.extend_from_slice(b);
    rho.space().check_sites(&ab)?;
    let rho_ab = rho.partial_trace(&ab)?;
    let rho_a = rho.partial_trace(a)?;
    let rho_b = rho.partial_trace(b)?;
    let diff = rho_ab.matrix() - kron(rho_a.matrix(), rho_b.matrix());
    let lhs = trace_norm(&diff).powi(2) / (2.0 * std::f64::consts::LN_2);
    let rhs = mutual_information(rho, a, b)?;
    Ok((lhs, rhs))
}
