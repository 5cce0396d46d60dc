//! Joint measurability: witness verification over a state set, constructive
//! parents for disjoint substitute blocks, and a numerical feasibility search.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::covering::disjoint;
use crate::error::{Error, Result};
use crate::measurement::{align_labels, check_disjoint_supports, outcome_probabilities, record_delta, validate_povm, Povm, POVM_TOL};
use crate::tensor::{
    apply_local_vec, hermitian_eigen, hermitian_operator_norm, CMatrix, DenseOperator, QuantumState, SiteSpace, State,
    StateVector, C64,
};

/// The set 𝓓 of states over which approximate joint measurability is judged.
#[derive(Clone, Debug)]
pub struct StateSet {
    tag: String,
    space: SiteSpace,
    states: Vec<State>,
}

impl StateSet {
    pub fn new(tag: impl Into<String>, states: Vec<State>) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::Precondition("state set is empty".into()))?;
        let space = first.space().clone();
        for s in &states {
            if s.space() != &space {
                return Err(Error::DimensionMismatch { expected: space.total_dim(), actual: s.space().total_dim() });
            }
            if !s.is_valid(1e-8) {
                return Err(Error::NotPsd(s.to_density().min_eigenvalue()));
            }
        }
        Ok(Self { tag: tag.into(), space, states })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn space(&self) -> &SiteSpace {
        &self.space
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Normalized basis-indicator states |i⟩⟨i| and (|i⟩ + |k⟩), (|i⟩ + i|k⟩)
    /// superpositions for i < k; together they span all Hermitian operators.
    pub fn spanning(space: &SiteSpace) -> Self {
        let d = space.total_dim();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut states = Vec::with_capacity(d * d);
        for i in 0..d {
            states.push(State::Pure(StateVector::basis(space.clone(), i).unwrap()));
        }
        for i in 0..d {
            for k in i + 1..d {
                for phase in [C64::new(h, 0.0), C64::new(0.0, h)] {
                    let mut v = crate::tensor::CVector::zeros(d);
                    v[i] = C64::new(h, 0.0);
                    v[k] = phase;
                    states.push(State::Pure(StateVector::new(space.clone(), v).unwrap()));
                }
            }
        }
        Self { tag: "spanning".into(), space: space.clone(), states }
    }
}

/// Parent POVM plus classical post-processing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JmWitness {
    #[serde(skip)]
    pub parent: Povm,
    pub parent_labels: Vec<String>,
    /// `conditionals[k][θ][ω]` = p(ω | member k, θ), ω in member label order.
    pub conditionals: Vec<Vec<Vec<f64>>>,
    /// Set once the witness has been checked against a state set.
    pub residual: Option<f64>,
}

impl JmWitness {
    pub fn new(parent: Povm, conditionals: Vec<Vec<Vec<f64>>>) -> Self {
        Self { parent_labels: parent.labels().to_vec(), parent, conditionals, residual: None }
    }
}

fn check_conditionals(members: &[&Povm], w: &JmWitness) -> Result<()> {
    if w.conditionals.len() != members.len() {
        return Err(Error::InvalidPovm(format!(
            "conditionals given for {} members, expected {}",
            w.conditionals.len(),
            members.len()
        )));
    }
    for (k, (m, table)) in members.iter().zip(&w.conditionals).enumerate() {
        if table.len() != w.parent.n_outcomes() {
            return Err(Error::InvalidPovm(format!("member {k}: missing conditional rows")));
        }
        for (t, row) in table.iter().enumerate() {
            if row.len() != m.n_outcomes() {
                return Err(Error::InvalidPovm(format!("member {k}, parent outcome {t}: missing entries")));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < -POVM_TOL) || (sum - 1.0).abs() > POVM_TOL {
                return Err(Error::Precondition(format!("member {k}, parent outcome {t}: not a distribution")));
            }
        }
    }
    Ok(())
}

/// max over members O, outcomes ω, states ρ of |tr(O^ω ρ) − Σ_θ p(ω|O,θ) tr(T^θ ρ)|.
pub fn verify_jm_witness(members: &[&Povm], w: &JmWitness, d_set: &StateSet) -> Result<f64> {
    check_conditionals(members, w)?;
    let mut worst: f64 = 0.0;
    for rho in d_set.states() {
        let parent = outcome_probabilities(&w.parent, rho)?;
        for (m, table) in members.iter().zip(&w.conditionals) {
            let probs = outcome_probabilities(m, rho)?;
            for (o, p) in probs.iter().enumerate() {
                let simulated: f64 = parent.iter().zip(table).map(|(pt, row)| pt * row[o]).sum();
                worst = worst.max((p - simulated).abs());
            }
        }
    }
    Ok(worst)
}

/// Product parent over disjoint substitutes with marginalizing conditionals.
/// `subs[k]` stands in for `members[k]` and must carry the same label set.
pub fn marginalizing_witness(members: &[&Povm], subs: &[&Povm]) -> Result<JmWitness> {
    if members.len() != subs.len() || members.is_empty() {
        return Err(Error::InvalidPovm("one substitute per member required".into()));
    }
    check_disjoint_supports(subs)?;
    let aligns = subs.iter().zip(members).map(|(s, m)| align_labels(s, m)).collect::<Result<Vec<_>>>()?;
    let parent = Povm::product(subs)?;
    let sizes: Vec<usize> = subs.iter().map(|s| s.n_outcomes()).collect();
    let n_theta = parent.n_outcomes();
    let mut conditionals = Vec::with_capacity(members.len());
    for (k, m) in members.iter().enumerate() {
        let inner: usize = sizes[k + 1..].iter().product();
        let table = (0..n_theta)
            .map(|t| {
                let mut row = vec![0.0; m.n_outcomes()];
                row[aligns[k][(t / inner) % sizes[k]]] = 1.0;
                row
            })
            .collect();
        conditionals.push(table);
    }
    Ok(JmWitness::new(parent, conditionals))
}

/// Parent F_{f′} ⊗ G_{g′} for the pair (F_f, G_g), requiring
/// f′∩g′ = f∩g′ = g∩f′ = ∅.
pub fn constructive_parent(f_povm: &Povm, g_povm: &Povm, f_sub: &Povm, g_sub: &Povm) -> Result<JmWitness> {
    let set = |p: &Povm| {
        let mut s = p.support().to_vec();
        s.sort_unstable();
        s
    };
    let (f, g, fp, gp) = (set(f_povm), set(g_povm), set(f_sub), set(g_sub));
    for (name, a, b) in [("f'∩g'", &fp, &gp), ("f∩g'", &f, &gp), ("g∩f'", &g, &fp)] {
        if !disjoint(a, b) {
            return Err(Error::DisjointnessViolated(format!("{name} is not empty")));
        }
    }
    marginalizing_witness(&[f_povm, g_povm], &[f_sub, g_sub])
}

/// Full product parent over pairwise-disjoint primed POVMs; conditionals are
/// expressed in the labels of `subs`.
pub fn constructive_tuple_parent(subs: &[&Povm]) -> Result<JmWitness> {
    marginalizing_witness(subs, subs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JmSearchOptions {
    /// Stop once the affine violation of the PSD iterate is below this.
    pub tol: f64,
    pub max_iters: usize,
    pub plateau_window: usize,
    pub plateau_rel: f64,
    /// Reported residual at or below this counts as feasible.
    pub accept: f64,
}

impl Default for JmSearchOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 10_000, plateau_window: 100, plateau_rel: 1e-10, accept: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JmStatus {
    Feasible,
    Plateau,
    MaxIterations,
}

#[derive(Clone, Debug, Serialize)]
pub struct JmSearchReport {
    pub status: JmStatus,
    pub iterations: usize,
    /// Worst marginal mismatch of the returned parent over all states.
    pub residual: f64,
    /// Affine violation of the PSD iterate after each iteration.
    pub trace: Vec<f64>,
    pub witness: JmWitness,
}

impl JmSearchReport {
    pub fn is_feasible(&self) -> bool {
        self.status == JmStatus::Feasible
    }
}

struct AffineSet {
    /// Constraint membership: rows × parent outcomes.
    rows: Vec<Vec<usize>>,
    targets: Vec<CMatrix>,
    /// Aᵀ(AAᵀ)⁺, parent outcomes × rows.
    correction: DMatrix<f64>,
}

impl AffineSet {
    fn new(members: &[&Povm], sizes: &[usize]) -> Self {
        let n_theta: usize = sizes.iter().product();
        let d = members[0].local_space().total_dim();
        let mut rows = vec![(0..n_theta).collect::<Vec<_>>()];
        let mut targets = vec![CMatrix::identity(d, d)];
        for (k, m) in members.iter().enumerate() {
            let inner: usize = sizes[k + 1..].iter().product();
            for (o, e) in m.effects().iter().enumerate() {
                rows.push((0..n_theta).filter(|t| (t / inner) % sizes[k] == o).collect());
                targets.push(e.matrix().clone());
            }
        }
        let mut a = DMatrix::<f64>::zeros(rows.len(), n_theta);
        for (r, members) in rows.iter().enumerate() {
            for &t in members {
                a[(r, t)] = 1.0;
            }
        }
        let gram = &a * a.transpose();
        let pinv = gram.pseudo_inverse(1e-12).expect("non-negative epsilon");
        Self { rows, targets, correction: a.transpose() * pinv }
    }

    fn violations(&self, t: &[CMatrix]) -> Vec<CMatrix> {
        self.rows
            .iter()
            .zip(&self.targets)
            .map(|(row, b)| {
                let mut r = -b.clone();
                for &i in row {
                    r += &t[i];
                }
                r
            })
            .collect()
    }

    fn project(&self, t: &mut [CMatrix]) {
        let viol = self.violations(t);
        for (i, ti) in t.iter_mut().enumerate() {
            for (r, v) in viol.iter().enumerate() {
                let c = self.correction[(i, r)];
                if c != 0.0 {
                    *ti -= v.scale(c);
                }
            }
        }
    }

    fn max_violation(&self, t: &[CMatrix]) -> f64 {
        self.violations(t).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn psd_clip(m: &CMatrix) -> CMatrix {
    let h = (m + m.adjoint()).scale(0.5);
    let (vals, vecs) = hermitian_eigen(&h);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col *= C64::new(v.max(0.0), 0.0);
    }
    &scaled * vecs.adjoint()
}

/// S^{-1/2} T S^{-1/2} on the support of S = Σ T, plus an even share of the
/// kernel projector, so the result is an exact POVM.
fn normalize_family(t: &[CMatrix]) -> Vec<CMatrix> {
    let d = t[0].nrows();
    let mut s = CMatrix::zeros(d, d);
    for ti in t {
        s += ti;
    }
    let (vals, vecs) = hermitian_eigen(&((&s + s.adjoint()).scale(0.5)));
    let mut inv_sqrt = vecs.clone();
    let mut kernel = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let (a, b) = if v > 1e-12 { (1.0 / v.sqrt(), 0.0) } else { (0.0, 1.0) };
        inv_sqrt.column_mut(j).scale_mut(a);
        kernel.column_mut(j).scale_mut(b);
    }
    let inv_sqrt = &inv_sqrt * vecs.adjoint();
    let kernel = &kernel * vecs.adjoint();
    let share = kernel.unscale(t.len() as f64);
    t.iter()
        .map(|ti| {
            let m = &inv_sqrt * ti * &inv_sqrt + &share;
            (&m + m.adjoint()).scale(0.5)
        })
        .collect()
}

/// Worst marginal mismatch of a parent family over all states: the operator
/// norm of each constraint violation.
fn worst_case_residual(affine: &AffineSet, t: &[CMatrix]) -> f64 {
    affine.violations(t).iter().skip(1).map(hermitian_operator_norm).fold(0.0, f64::max)
}

/// Searches for a parent POVM over the product of member label sets with
/// deterministic marginal conditionals, by Dykstra alternating projections
/// between the PSD cone and the affine marginal constraints.
pub fn jm_feasibility_search(members: &[&Povm], opts: JmSearchOptions) -> Result<JmSearchReport> {
    let first = *members.first().ok_or_else(|| Error::InvalidPovm("no members".into()))?;
    for m in members {
        if m.support() != first.support() || m.local_space() != first.local_space() {
            return Err(Error::InvalidPovm("members must act on the same sites".into()));
        }
    }
    let sizes: Vec<usize> = members.iter().map(|m| m.n_outcomes()).collect();
    let n_theta: usize = sizes.iter().product();
    let d = first.local_space().total_dim();
    let affine = AffineSet::new(members, &sizes);

    let mut x: Vec<CMatrix> = vec![CMatrix::identity(d, d).unscale(n_theta as f64); n_theta];
    let mut p: Vec<CMatrix> = vec![CMatrix::zeros(d, d); n_theta];
    let mut q: Vec<CMatrix> = vec![CMatrix::zeros(d, d); n_theta];
    let mut trace = Vec::new();
    let mut status = JmStatus::MaxIterations;
    for it in 0..opts.max_iters {
        let mut y: Vec<CMatrix> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        affine.project(&mut y);
        for i in 0..n_theta {
            p[i] = &x[i] + &p[i] - &y[i];
        }
        for i in 0..n_theta {
            let z = &y[i] + &q[i];
            x[i] = psd_clip(&z);
            q[i] = z - &x[i];
        }
        let v = affine.max_violation(&x);
        trace.push(v);
        if v <= opts.tol {
            status = JmStatus::Feasible;
            break;
        }
        if it >= opts.plateau_window {
            let before = trace[it - opts.plateau_window];
            if before > 0.0 && (before - v) / before < opts.plateau_rel {
                status = JmStatus::Plateau;
                break;
            }
        }
    }
    let parent_effects = normalize_family(&x);
    let residual = worst_case_residual(&affine, &parent_effects);
    let status = if residual <= opts.accept {
        JmStatus::Feasible
    } else if status == JmStatus::Feasible {
        JmStatus::Plateau
    } else {
        status
    };

    let labels = member_product_labels(members);
    let parent = Povm::new(
        first.support().to_vec(),
        labels
            .into_iter()
            .zip(parent_effects)
            .map(|(l, m)| DenseOperator::new(first.local_space().clone(), m).map(|op| (l, op)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let mut conditionals = Vec::with_capacity(members.len());
    for (k, m) in members.iter().enumerate() {
        let inner: usize = sizes[k + 1..].iter().product();
        conditionals.push(
            (0..n_theta)
                .map(|t| {
                    let mut row = vec![0.0; m.n_outcomes()];
                    row[(t / inner) % sizes[k]] = 1.0;
                    row
                })
                .collect(),
        );
    }
    let mut witness = JmWitness::new(parent, conditionals);
    witness.residual = Some(residual);
    Ok(JmSearchReport { status, iterations: trace.len(), residual, trace, witness })
}

fn member_product_labels(members: &[&Povm]) -> Vec<String> {
    let mut labels = vec![String::new()];
    for m in members {
        labels = labels
            .iter()
            .flat_map(|l| m.labels().iter().map(move |x| if l.is_empty() { x.clone() } else { format!("{l}|{x}") }))
            .collect();
    }
    labels
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub preconditions_hold: bool,
    pub violations: Vec<String>,
    /// Max over (α, μ) of the five successive equalities
    /// F_f G_g ψ = F_f G_g′ ψ = F_f′ G_g′ ψ = G_g′ F_f′ ψ = G_g F_f′ ψ = G_g F_f ψ.
    pub step_residuals: [f64; 5],
    /// Max over (α, μ) of ‖[F_f^α, G_g^μ] ψ‖.
    pub commutator: f64,
}

impl ChainReport {
    pub fn max_residual(&self) -> f64 {
        self.step_residuals.iter().copied().fold(self.commutator, f64::max)
    }
}

/// Evaluates the commutation chain for projective families on a pure state.
/// Failed preconditions are listed in the report; the residuals are always
/// measured.
pub fn commutation_chain_check(
    f_povm: &Povm,
    g_povm: &Povm,
    f_sub: &Povm,
    g_sub: &Povm,
    psi: &StateVector,
) -> Result<ChainReport> {
    let fa = align_labels(f_povm, f_sub)?;
    let ga = align_labels(g_povm, g_sub)?;
    let mut violations = Vec::new();
    for (name, p) in [("F_f", f_povm), ("G_g", g_povm), ("F_f'", f_sub), ("G_g'", g_sub)] {
        if !validate_povm(p).projective {
            violations.push(format!("{name} is not projective"));
        }
    }
    for (name, a, b) in [("f records in f'", f_povm, f_sub), ("g records in g'", g_povm, g_sub)] {
        match record_delta(a, b, psi) {
            Ok(r) if r.delta <= POVM_TOL => {}
            Ok(r) => violations.push(format!("{name}: record error {:.3e}", r.delta)),
            Err(e) => violations.push(format!("{name}: {e}")),
        }
    }
    let sorted = |p: &Povm| {
        let mut s = p.support().to_vec();
        s.sort_unstable();
        s
    };
    let (f, g, fp, gp) = (sorted(f_povm), sorted(g_povm), sorted(f_sub), sorted(g_sub));
    for (name, a, b) in [("f∩g'", &f, &gp), ("f'∩g'", &fp, &gp), ("g∩f'", &g, &fp)] {
        if !disjoint(a, b) {
            violations.push(format!("{name} is not empty"));
        }
    }

    let space = psi.space();
    let apply = |p: &Povm, k: usize, v: &crate::tensor::CVector| apply_local_vec(space, v, p.effects()[k].matrix(), p.support());
    let amps = psi.amplitudes();
    let mut steps = [0.0f64; 5];
    let mut commutator: f64 = 0.0;
    for a in 0..f_povm.n_outcomes() {
        let fpa = fa[a];
        for m in 0..g_povm.n_outcomes() {
            let gpm = ga[m];
            let chain = [
                apply(f_povm, a, &apply(g_povm, m, amps)?)?,
                apply(f_povm, a, &apply(g_sub, gpm, amps)?)?,
                apply(f_sub, fpa, &apply(g_sub, gpm, amps)?)?,
                apply(g_sub, gpm, &apply(f_sub, fpa, amps)?)?,
                apply(g_povm, m, &apply(f_sub, fpa, amps)?)?,
                apply(g_povm, m, &apply(f_povm, a, amps)?)?,
            ];
            for (k, s) in steps.iter_mut().enumerate() {
                *s = s.max((&chain[k] - &chain[k + 1]).norm());
            }
            commutator = commutator.max((&chain[0] - &chain[5]).norm());
        }
    }
    Ok(ChainReport { preconditions_hold: violations.is_empty(), violations, step_residuals: steps, commutator })
}
