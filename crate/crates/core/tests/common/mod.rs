//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls into the library's own algorithms beyond
//! plain data types and seeded sampling.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};
use qdarwin::measurement::Povm;
use qdarwin::random::{random_unitary, seeded};
use qdarwin::tensor::{CMatrix, DenseOperator, SiteSpace};
use rand::Rng;

pub type C = Complex<f64>;
pub type M = DMatrix<C>;

/// Every partition of `n` sites into at most `max_blocks` non-empty blocks.
/// With `partial`, sites may also be left out of every block.
pub fn enumerate_partitions(n: usize, max_blocks: usize, partial: bool) -> Vec<Vec<Vec<usize>>> {
    fn go(
        site: usize,
        n: usize,
        max_blocks: usize,
        partial: bool,
        blocks: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if site == n {
            out.push(blocks.clone());
            return;
        }
        if partial {
            go(site + 1, n, max_blocks, partial, blocks, out);
        }
        for b in 0..blocks.len() {
            blocks[b].push(site);
            go(site + 1, n, max_blocks, partial, blocks, out);
            blocks[b].pop();
        }
        if blocks.len() < max_blocks {
            blocks.push(vec![site]);
            go(site + 1, n, max_blocks, partial, blocks, out);
            blocks.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, max_blocks, partial, &mut Vec::new(), &mut out);
    out
}

pub fn masks(blocks: &[Vec<usize>]) -> Vec<u64> {
    blocks.iter().map(|b| b.iter().fold(0u64, |m, &s| m | (1 << s))).collect()
}

/// ∀f,f′∈F ∃g∈G: f∩g = f′∩g = ∅, and with F and G swapped.
pub fn pair_oracle(f: &[u64], g: &[u64]) -> bool {
    let one_way = |a: &[u64], b: &[u64]| a.iter().all(|&x| a.iter().all(|&y| b.iter().any(|&z| x & z == 0 && y & z == 0)));
    one_way(f, g) && one_way(g, f)
}

fn tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        out = out.into_iter().flat_map(|t| (0..s).map(move |i| [t.clone(), vec![i]].concat())).collect();
    }
    out
}

/// ∀ unprimed tuple ∃ primed tuple with every primed block avoiding the
/// unprimed blocks of the other partitions and, if `maximal`, their primed
/// blocks as well.
pub fn tuple_oracle(parts: &[Vec<u64>], maximal: bool) -> bool {
    let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    let all = tuples(&sizes);
    all.iter().all(|t| {
        all.iter().any(|c| {
            (0..parts.len()).all(|p| {
                (0..parts.len()).filter(|&q| q != p).all(|q| {
                    parts[p][c[p]] & parts[q][t[q]] == 0 && (!maximal || parts[p][c[p]] & parts[q][c[q]] == 0)
                })
            })
        })
    })
}

/// ∀f∈F, g∈G ∃f′, g′ with f∩g′ = f′∩g′ = g∩f′ = ∅.
pub fn substitute_oracle(f: &[u64], g: &[u64]) -> bool {
    f.iter().all(|&a| {
        g.iter().all(|&b| f.iter().any(|&fp| g.iter().any(|&gp| a & gp == 0 && fp & gp == 0 && b & fp == 0)))
    })
}

/// Full-space operator for `op` acting on `sites` (site 0 most significant),
/// built entry by entry.
pub fn embed_brute(op: &M, sites: &[usize], dims: &[usize]) -> M {
    let total: usize = dims.iter().product();
    let digits = |mut i: usize| {
        let mut d = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            d[k] = i % dims[k];
            i /= dims[k];
        }
        d
    };
    let local = |d: &[usize]| sites.iter().fold(0, |acc, &s| acc * dims[s] + d[s]);
    M::from_fn(total, total, |i, j| {
        let (di, dj) = (digits(i), digits(j));
        let rest_equal = (0..dims.len()).filter(|s| !sites.contains(s)).all(|s| di[s] == dj[s]);
        if rest_equal {
            op[(local(&di), local(&dj))]
        } else {
            C::new(0.0, 0.0)
        }
    })
}

pub fn trace(m: &M) -> C {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// max_α 1 − tr(F^α ⊗ F′^α ρ)/tr(F^α ρ) from brute-force embeddings, with
/// outcomes of probability ≤ 1e-12 skipped. Effects are paired by position.
pub fn record_delta_oracle(f: &[M], f_sites: &[usize], fp: &[M], fp_sites: &[usize], rho: &M, dims: &[usize]) -> f64 {
    let mut delta: f64 = 0.0;
    for (a, b) in f.iter().zip(fp) {
        let ea = embed_brute(a, f_sites, dims);
        let eb = embed_brute(b, fp_sites, dims);
        let p = trace(&(&ea * rho)).re;
        if p <= 1e-12 {
            continue;
        }
        let joint = trace(&(&ea * &eb * rho)).re;
        delta = delta.max(1.0 - joint / p);
    }
    delta
}

pub fn op_norm_hermitian(m: &M) -> f64 {
    let h = (m + m.adjoint()) * C::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

fn pauli() -> (M, M, M) {
    let c = |re: f64| C::new(re, 0.0);
    let i = M::identity(2, 2);
    let x = M::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
    let z = M::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
    (i, x, z)
}

/// Marginal residual of a 4-outcome parent (order ++, +−, −+, −−) for the
/// sharp X and Z measurements: max of ‖M₊₊ + M₊₋ − (1+X)/2‖ and
/// ‖M₊₊ + M₋₊ − (1+Z)/2‖ in operator norm.
pub fn xz_marginal_residual(parent: &[M; 4]) -> f64 {
    let (i, x, z) = pauli();
    let half = C::new(0.5, 0.0);
    let px = (&i + &x) * half;
    let pz = (&i + &z) * half;
    let rx = op_norm_hermitian(&(&parent[0] + &parent[1] - px));
    let rz = op_norm_hermitian(&(&parent[0] + &parent[2] - pz));
    rx.max(rz)
}

/// Sweep over parents M_ab = (1/2 + a·x·X + b·z·Z)/2, the family left after
/// averaging any parent over the sign flips X → −X, Z → −Z and complex
/// conjugation, none of which increase the residual. Returns the smallest
/// residual among PSD parents on a grid of the given step.
pub fn xz_bloch_sweep(step: f64) -> f64 {
    let (i, x, z) = pauli();
    let steps = (1.0 / step).round() as i64;
    let mut best = f64::INFINITY;
    for kx in -steps..=steps {
        for kz in -steps..=steps {
            let (bx, bz) = (kx as f64 * step * 0.5, kz as f64 * step * 0.5);
            if bx * bx + bz * bz > 0.25 + 1e-12 {
                continue;
            }
            let m = |a: f64, b: f64| (&i * C::new(0.5, 0.0) + &x * C::new(a * bx, 0.0) + &z * C::new(b * bz, 0.0)) * C::new(0.5, 0.0);
            let parent = [m(1.0, 1.0), m(1.0, -1.0), m(-1.0, 1.0), m(-1.0, -1.0)];
            best = best.min(xz_marginal_residual(&parent));
        }
    }
    best
}

fn inv_sqrt_psd(s: &M) -> M {
    let e = s.clone().symmetric_eigen();
    let d = M::from_diagonal(&e.eigenvalues.map(|v| C::new(1.0 / v.max(1e-300).sqrt(), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// Smallest residual among random 4-outcome qubit POVMs M_k = S^{-1/2}A_kS^{-1/2}.
pub fn xz_random_parents<R: Rng>(samples: usize, rng: &mut R) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let a: Vec<M> = (0..4)
            .map(|_| {
                let g = M::from_fn(2, 2, |_, _| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                &g * g.adjoint()
            })
            .collect();
        let s = a.iter().fold(M::zeros(2, 2), |acc, x| acc + x);
        let r = inv_sqrt_psd(&s);
        let parent = [&r * &a[0] * &r, &r * &a[1] * &r, &r * &a[2] * &r, &r * &a[3] * &r];
        best = best.min(xz_marginal_residual(&parent));
    }
    best
}

/// Classical joint table for diagonal POVMs on one register: p(θ) with θ a
/// tuple of member outcomes is Π_k D_k[ω_k](i) summed against the state
/// diagonal, so the parent effect for θ is that product on the diagonal.
pub fn classical_parent(members: &[Vec<Vec<f64>>]) -> Vec<(Vec<usize>, Vec<f64>)> {
    let d = members[0][0].len();
    let sizes: Vec<usize> = members.iter().map(|m| m.len()).collect();
    tuples(&sizes)
        .into_iter()
        .map(|t| {
            let diag = (0..d).map(|i| t.iter().zip(members).map(|(&w, m)| m[w][i]).product()).collect();
            (t, diag)
        })
        .collect()
}

/// Eigenbasis measurement of a qubit observable, `+` for the larger eigenvalue.
pub fn sharp(site: usize, obs: &CMatrix) -> Povm {
    let e = nalgebra::linalg::SymmetricEigen::new(obs.clone());
    // Columns sorted so the +1 eigenvector comes first.
    let mut idx: Vec<usize> = (0..2).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[b].partial_cmp(&e.eigenvalues[a]).unwrap());
    let basis = CMatrix::from_fn(2, 2, |r, c| e.eigenvectors[(r, idx[c])]);
    Povm::from_basis(vec![site], SiteSpace::qubits(1), &basis, vec!["+".into(), "-".into()]).unwrap()
}

/// Two-outcome projective POVMs diagonal in a shared random basis.
pub fn commuting_pair(seed: u64, d: usize, split_a: usize, split_b: usize) -> (Povm, Povm) {
    let u = random_unitary(d, &mut seeded(seed));
    let sp = SiteSpace::new(vec![d]).unwrap();
    let proj = |cols: Vec<usize>| {
        let mut m = CMatrix::zeros(d, d);
        for c in cols {
            let v = u.column(c);
            m += &v * v.adjoint();
        }
        DenseOperator::new(sp.clone(), m).unwrap()
    };
    let a = Povm::new(vec![0], vec![("a0".into(), proj((0..split_a).collect())), ("a1".into(), proj((split_a..d).collect()))])
        .unwrap();
    let evens: Vec<usize> = (0..d).filter(|i| i % split_b == 0).collect();
    let odds: Vec<usize> = (0..d).filter(|i| i % split_b != 0).collect();
    let b = Povm::new(vec![0], vec![("b0".into(), proj(evens)), ("b1".into(), proj(odds))]).unwrap();
    (a, b)
}
