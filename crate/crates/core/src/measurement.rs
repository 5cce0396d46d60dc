//! POVMs, outcome statistics and δ-approximate record audits.
//!
//! A block f′ records a POVM on block f with error δ when, for every outcome
//! α, the probability that f′ also reports α given that f reported α is at
//! least 1 − δ. Outcomes whose probability on f is at most
//! [`VACUOUS_PROBABILITY`] are vacuously recorded.

use serde::Serialize;

use crate::covering::Partition;
use crate::error::{Error, Result};
use crate::tensor::{CMatrix, CVector, DenseOperator, QuantumState, SiteSpace, StateVector};

pub const VACUOUS_PROBABILITY: f64 = 1e-12;
pub const POVM_TOL: f64 = 1e-9;

/// A finite-outcome POVM on an ordered list of sites.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    support: Vec<usize>,
    labels: Vec<String>,
    effects: Vec<DenseOperator>,
}

impl Povm {
    /// Structural checks only (shapes, distinct support, unique labels).
    /// Positivity and completeness are reported by [`validate_povm`].
    pub fn new(support: Vec<usize>, effects: Vec<(String, DenseOperator)>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::InvalidPovm("no effects".into()));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateSite(w[0]));
        }
        let space = effects[0].1.space().clone();
        if space.n_sites() != support.len() {
            return Err(Error::InvalidPovm(format!(
                "effects act on {} sites but the support lists {}",
                space.n_sites(),
                support.len()
            )));
        }
        let mut labels = Vec::with_capacity(effects.len());
        let mut ops = Vec::with_capacity(effects.len());
        for (label, op) in effects {
            if op.space() != &space {
                return Err(Error::InvalidPovm(format!("effect '{label}' acts on a different space")));
            }
            if labels.contains(&label) {
                return Err(Error::InvalidPovm(format!("duplicate label '{label}'")));
            }
            labels.push(label);
            ops.push(op);
        }
        Ok(Self { support, labels, effects: ops })
    }

    /// Computational-basis measurement of one site of dimension `d`.
    pub fn computational(site: usize, d: usize) -> Self {
        let space = SiteSpace::new(vec![d]).expect("d > 0");
        let effects = (0..d)
            .map(|k| {
                let mut diag = vec![0.0; d];
                diag[k] = 1.0;
                (k.to_string(), DenseOperator::from_diagonal(space.clone(), &diag).unwrap())
            })
            .collect();
        Self::new(vec![site], effects).unwrap()
    }

    /// Rank-one projective measurement onto the columns of `basis`.
    pub fn from_basis(support: Vec<usize>, local: SiteSpace, basis: &CMatrix, labels: Vec<String>) -> Result<Self> {
        if basis.ncols() != labels.len() {
            return Err(Error::InvalidPovm("one label per basis vector required".into()));
        }
        let effects = labels
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let v: CVector = basis.column(k).into_owned();
                DenseOperator::projector(local.clone(), &v).map(|op| (l, op))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(support, effects)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn effects(&self) -> &[DenseOperator] {
        &self.effects
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn local_space(&self) -> &SiteSpace {
        self.effects[0].space()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseOperator)> {
        self.labels.iter().map(String::as_str).zip(self.effects.iter())
    }

    /// Same effects placed on another set of sites.
    pub fn moved_to(&self, support: Vec<usize>) -> Result<Self> {
        Self::new(support, self.labels.iter().cloned().zip(self.effects.iter().cloned()).collect())
    }

    /// Merges outcomes: each group becomes one outcome whose effect is the sum.
    pub fn coarse_grained(&self, groups: &[(&str, &[&str])]) -> Result<Self> {
        let mut effects = Vec::with_capacity(groups.len());
        for (name, members) in groups {
            let mut acc = DenseOperator::zeros(self.local_space().clone()).into_matrix();
            for m in members.iter() {
                let idx = self.label_index(m).ok_or_else(|| Error::LabelMismatch(format!("unknown outcome '{m}'")))?;
                acc += self.effects[idx].matrix();
            }
            effects.push((name.to_string(), DenseOperator::new(self.local_space().clone(), acc)?));
        }
        Self::new(self.support.clone(), effects)
    }

    /// Tensor product of POVMs on pairwise-disjoint supports. Outcome labels
    /// are the member labels joined with `|`, first POVM most significant.
    pub fn product(povms: &[&Povm]) -> Result<Self> {
        check_disjoint_supports(povms)?;
        let mut support = Vec::new();
        let mut effects: Vec<(String, DenseOperator)> = vec![(String::new(), DenseOperator::identity(SiteSpace::new(vec![])?))];
        for p in povms {
            support.extend_from_slice(&p.support);
            let mut next = Vec::with_capacity(effects.len() * p.n_outcomes());
            for (l0, e0) in &effects {
                for (l1, e1) in p.iter() {
                    let label = if l0.is_empty() { l1.to_string() } else { format!("{l0}|{l1}") };
                    next.push((label, e0.kron(e1)));
                }
            }
            effects = next;
        }
        Self::new(support, effects)
    }
}

pub(crate) fn check_disjoint_supports(povms: &[&Povm]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for p in povms {
        for &s in p.support() {
            if !seen.insert(s) {
                return Err(Error::Overlap(s));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PovmValidation {
    /// (label, smallest eigenvalue) for every effect below −1e-9.
    pub psd_violations: Vec<(String, f64)>,
    /// Frobenius norm of Σ effects − 1.
    pub completeness_residual: f64,
    pub complete: bool,
    pub projective: bool,
    pub valid: bool,
}

pub fn validate_povm(p: &Povm) -> PovmValidation {
    let d = p.local_space().total_dim();
    let mut sum = CMatrix::zeros(d, d);
    let mut psd_violations = Vec::new();
    for (label, e) in p.iter() {
        sum += e.matrix();
        let min = if e.is_hermitian(POVM_TOL) { e.min_eigenvalue() } else { f64::NEG_INFINITY };
        if min < -POVM_TOL {
            psd_violations.push((label.to_string(), min));
        }
    }
    let completeness_residual = (sum - CMatrix::identity(d, d)).norm();
    let complete = completeness_residual <= POVM_TOL;
    let mut projective = true;
    'outer: for (i, a) in p.effects.iter().enumerate() {
        if (a.matrix() * a.matrix() - a.matrix()).norm() > POVM_TOL {
            projective = false;
            break;
        }
        for b in p.effects.iter().skip(i + 1) {
            if (a.matrix() * b.matrix()).norm() > POVM_TOL {
                projective = false;
                break 'outer;
            }
        }
    }
    let valid = complete && psd_violations.is_empty();
    PovmValidation { psd_violations, completeness_residual, complete, projective: projective && valid, valid }
}

fn reduced_on_support<S: QuantumState + ?Sized>(p: &Povm, state: &S) -> Result<DenseOperator> {
    let rho = state.reduced(p.support())?;
    if rho.space() != p.local_space() {
        return Err(Error::DimensionMismatch { expected: p.local_space().total_dim(), actual: rho.dim() });
    }
    Ok(rho)
}

/// tr(E_α ρ) for every outcome, in label order.
pub fn outcome_probabilities<S: QuantumState + ?Sized>(p: &Povm, state: &S) -> Result<Vec<f64>> {
    let rho = reduced_on_support(p, state)?;
    Ok(p.effects.iter().map(|e| rho.expectation(e.matrix())).collect())
}

/// Joint outcome distribution of POVMs on disjoint supports, row-major over
/// label tuples with the first POVM most significant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointDistribution {
    pub labels: Vec<Vec<String>>,
    pub shape: Vec<usize>,
    pub probs: Vec<f64>,
}

impl JointDistribution {
    pub fn get(&self, outcome: &[usize]) -> f64 {
        let idx = outcome.iter().zip(&self.shape).fold(0, |acc, (&o, &n)| acc * n + o);
        self.probs[idx]
    }

    /// Distribution of the `k`-th POVM alone.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let inner: usize = self.shape[k + 1..].iter().product();
        let n = self.shape[k];
        let mut out = vec![0.0; n];
        for (i, p) in self.probs.iter().enumerate() {
            out[(i / inner) % n] += p;
        }
        out
    }
}

pub fn joint_outcome_probabilities<S: QuantumState + ?Sized>(ps: &[&Povm], state: &S) -> Result<JointDistribution> {
    check_disjoint_supports(ps)?;
    let all: Vec<usize> = ps.iter().flat_map(|p| p.support().iter().copied()).collect();
    let rho = state.reduced(&all)?;
    // Contract POVMs one at a time; after each step the leading sites are gone.
    let mut frontier = vec![rho];
    let mut offset = 0;
    for p in ps {
        let local: Vec<usize> = (0..p.support().len()).collect();
        let want = p.local_space();
        let got: Vec<usize> = (offset..offset + p.support().len()).map(|s| state.space().dim(all[s])).collect();
        if got != want.dims() {
            return Err(Error::DimensionMismatch { expected: want.total_dim(), actual: got.iter().product() });
        }
        let mut next = Vec::with_capacity(frontier.len() * p.n_outcomes());
        for r in &frontier {
            for e in p.effects() {
                next.push(r.contract(&local, e.matrix())?);
            }
        }
        frontier = next;
        offset += p.support().len();
    }
    Ok(JointDistribution {
        labels: ps.iter().map(|p| p.labels().to_vec()).collect(),
        shape: ps.iter().map(|p| p.n_outcomes()).collect(),
        probs: frontier.iter().map(|r| r.trace().re).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeRecord {
    pub label: String,
    /// tr(F_f^α ρ).
    pub probability: f64,
    /// tr(F_f^α ⊗ F_f′^α ρ) / tr(F_f^α ρ); `None` when the outcome is vacuous.
    pub agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordDelta {
    pub delta: f64,
    pub outcomes: Vec<OutcomeRecord>,
}

/// Index of each `a` label inside `b`, requiring identical label sets.
pub(crate) fn align_labels(a: &Povm, b: &Povm) -> Result<Vec<usize>> {
    if a.n_outcomes() != b.n_outcomes() {
        return Err(Error::LabelMismatch(format!("{:?} vs {:?}", a.labels(), b.labels())));
    }
    a.labels()
        .iter()
        .map(|l| b.label_index(l).ok_or_else(|| Error::LabelMismatch(format!("outcome '{l}' missing from {:?}", b.labels()))))
        .collect()
}

/// Smallest δ for which `f_prime` δ-approximately records `f` on `state`.
pub fn record_delta<S: QuantumState + ?Sized>(f: &Povm, f_prime: &Povm, state: &S) -> Result<RecordDelta> {
    let align = align_labels(f, f_prime)?;
    check_disjoint_supports(&[f, f_prime])?;
    let single = outcome_probabilities(f, state)?;
    let joint = joint_outcome_probabilities(&[f, f_prime], state)?;
    let mut delta: f64 = 0.0;
    let mut outcomes = Vec::with_capacity(f.n_outcomes());
    for (a, label) in f.labels().iter().enumerate() {
        let p = single[a];
        let agreement = if p <= VACUOUS_PROBABILITY {
            None
        } else {
            let q = joint.get(&[a, align[a]]) / p;
            delta = delta.max(1.0 - q);
            Some(q)
        };
        outcomes.push(OutcomeRecord { label: label.clone(), probability: p, agreement });
    }
    Ok(RecordDelta { delta: delta.clamp(0.0, 1.0), outcomes })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairRecord {
    /// Block whose outcome is being recorded.
    pub f: usize,
    /// Block holding the record.
    pub f_prime: usize,
    pub delta: f64,
    pub outcomes: Vec<OutcomeRecord>,
}

/// Record errors for every ordered pair of distinct blocks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordAudit {
    pub partition: Partition,
    pub pairs: Vec<PairRecord>,
    pub overall_delta: f64,
}

impl RecordAudit {
    pub fn pair_delta(&self, f: usize, f_prime: usize) -> Option<f64> {
        self.pairs.iter().find(|p| p.f == f && p.f_prime == f_prime).map(|p| p.delta)
    }
}

fn check_family(partition: &Partition, povms: &[Povm]) -> Result<()> {
    if povms.len() != partition.blocks().len() {
        return Err(Error::InvalidPartition(format!(
            "{} POVMs for {} blocks",
            povms.len(),
            partition.blocks().len()
        )));
    }
    for (k, (block, p)) in partition.blocks().iter().zip(povms).enumerate() {
        let mut s = p.support().to_vec();
        s.sort_unstable();
        if &s != block {
            return Err(Error::InvalidPartition(format!("POVM {k} is supported on {:?}, block is {:?}", p.support(), block)));
        }
        if k > 0 {
            align_labels(&povms[0], p)?;
        }
    }
    Ok(())
}

/// `povms[k]` must be supported on block `k` of `partition`.
pub fn redundancy_audit<S: QuantumState + ?Sized>(partition: &Partition, povms: &[Povm], state: &S) -> Result<RecordAudit> {
    redundancy_audit_over(partition, povms, std::slice::from_ref(&state))
}

/// Audit over a set of states: each pair reports its worst δ, each outcome
/// its smallest agreement.
pub fn redundancy_audit_over<S: QuantumState + ?Sized>(
    partition: &Partition,
    povms: &[Povm],
    states: &[&S],
) -> Result<RecordAudit> {
    check_family(partition, povms)?;
    let n = povms.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
    for f in 0..n {
        for fp in 0..n {
            if f == fp {
                continue;
            }
            let mut acc: Option<RecordDelta> = None;
            for state in states {
                let rd = record_delta(&povms[f], &povms[fp], *state)?;
                acc = Some(match acc {
                    None => rd,
                    Some(mut prev) => {
                        prev.delta = prev.delta.max(rd.delta);
                        for (o, new) in prev.outcomes.iter_mut().zip(rd.outcomes) {
                            o.probability = o.probability.max(new.probability);
                            o.agreement = match (o.agreement, new.agreement) {
                                (Some(a), Some(b)) => Some(a.min(b)),
                                (a, b) => a.or(b),
                            };
                        }
                        prev
                    }
                });
            }
            let rd = acc.unwrap_or(RecordDelta { delta: 0.0, outcomes: Vec::new() });
            pairs.push(PairRecord { f, f_prime: fp, delta: rd.delta, outcomes: rd.outcomes });
        }
    }
    let overall_delta = pairs.iter().fold(0.0, |m: f64, p| m.max(p.delta));
    Ok(RecordAudit { partition: partition.clone(), pairs, overall_delta })
}

/// For projective `f`, `f_prime` with a zero-error record on `psi`, returns
/// max over α of ‖(F_f^α ⊗ F_f′^α)ψ − F_f^α ψ‖ and ‖F_f^α ψ − F_f′^α ψ‖.
pub fn verify_perfect_imprint_lemma(f: &Povm, f_prime: &Povm, psi: &StateVector) -> Result<f64> {
    for (name, p) in [("f", f), ("f'", f_prime)] {
        if !validate_povm(p).projective {
            return Err(Error::Precondition(format!("POVM on {name} is not projective")));
        }
    }
    let rd = record_delta(f, f_prime, psi)?;
    if rd.delta > POVM_TOL {
        return Err(Error::Precondition(format!("record error {:e} exceeds {:e}", rd.delta, POVM_TOL)));
    }
    let align = align_labels(f, f_prime)?;
    let space = psi.space();
    let mut residual: f64 = 0.0;
    for (a, e) in f.effects().iter().enumerate() {
        let ep = &f_prime.effects()[align[a]];
        let f_psi = psi.apply_local(e.matrix(), f.support())?;
        let fp_psi = psi.apply_local(ep.matrix(), f_prime.support())?;
        let both = crate::tensor::apply_local_vec(space, &fp_psi, e.matrix(), f.support())?;
        residual = residual.max((&both - &f_psi).norm()).max((&f_psi - &fp_psi).norm());
    }
    Ok(residual)
}

/// Projector-valued helper used by scenario builders: `1 − Σ projectors`.
pub(crate) fn complement_projector(d: usize, projectors: &[&CMatrix]) -> CMatrix {
    let mut m = CMatrix::identity(d, d);
    for p in projectors {
        m -= *p;
    }
    m
}
