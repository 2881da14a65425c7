//! Diagonal-frame reduction of a Hamiltonian with oscillatory parts.
//!
//! A real diagonal potential p folds H(t) = S + sum_k (O_k e^{i w_k t} + h.c.)
//! into the static H' = S + sum_k (O_k + O_k*) - diag(p) whenever p satisfies
//! p_r - p_c = 0 on static off-diagonal entries and p_r - p_c = -w_k on
//! entries of O_k. States map as psi(t) = e^{-i p t} chi(t).
//!
//! The potential is assigned per connected component by breadth-first
//! traversal, with each component's root pinned to its own static diagonal
//! value. That recentering keeps the folded diagonal spread at the scale of
//! a single detuning instead of the full diagonal range, which is what makes
//! Krylov stepping cheap. Inconsistent constraint cycles (for example a
//! diagonal oscillation) make the fold impossible; callers then fall back to
//! direct oscillatory integration.

use num_complex::Complex64;

use crate::error::Result;
use crate::hamiltonian::HamiltonianSpec;
use crate::hilbert::Operator;

#[derive(Debug, Clone)]
pub struct Fold {
    pub folded: Operator,
    pub potentials: Vec<f64>,
}

impl Fold {
    /// chi(t) = e^{+i p t} psi(t).
    pub fn enter(&self, t: f64, psi: &mut [Complex64]) {
        for (x, &p) in psi.iter_mut().zip(&self.potentials) {
            *x *= Complex64::from_polar(1.0, p * t);
        }
    }

    /// psi(t) = e^{-i p t} chi(t).
    pub fn leave(&self, t: f64, chi: &mut [Complex64]) {
        for (x, &p) in chi.iter_mut().zip(&self.potentials) {
            *x *= Complex64::from_polar(1.0, -p * t);
        }
    }
}

/// Attempts the fold. Ok(None) means no consistent potential exists.
pub fn fold(spec: &HamiltonianSpec) -> Result<Option<Fold>> {
    let dim = spec.space().total_dim();
    let static_part = &spec.static_part;
    let diag = static_part.diagonal();

    let mut scale = 1.0f64;
    for (_, _, v) in static_part.triplets() {
        scale = scale.max(v.norm());
    }
    for part in &spec.oscillatory_parts {
        scale = scale.max(part.omega.abs());
    }
    for d in &diag {
        scale = scale.max(d.norm());
    }
    let tol = 1e-9 * scale;

    // Undirected constraint graph; stored delta means p_neighbor = p_self + delta.
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
    let push_edge = |adj: &mut Vec<Vec<(u32, f64)>>, r: usize, c: usize, w: f64| {
        // Constraint p_r - p_c = w.
        adj[c].push((r as u32, w));
        adj[r].push((c as u32, -w));
    };
    for (r, c, v) in static_part.triplets() {
        if r != c && v.norm() > 0.0 {
            push_edge(&mut adj, r, c, 0.0);
        }
    }
    let mut diagonal_conflict = false;
    for part in &spec.oscillatory_parts {
        for (r, c, v) in part.op.triplets() {
            if v.norm() == 0.0 {
                continue;
            }
            if r == c {
                if part.omega.abs() > tol {
                    diagonal_conflict = true;
                }
                continue;
            }
            push_edge(&mut adj, r, c, -part.omega);
        }
    }
    if diagonal_conflict {
        return Ok(None);
    }

    let mut potentials = vec![f64::NAN; dim];
    let mut queue = std::collections::VecDeque::new();
    for root in 0..dim {
        if !potentials[root].is_nan() {
            continue;
        }
        potentials[root] = diag[root].re;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let pu = potentials[u];
            for &(v, delta) in &adj[u] {
                let v = v as usize;
                let candidate = pu + delta;
                if potentials[v].is_nan() {
                    potentials[v] = candidate;
                    queue.push_back(v);
                } else if (potentials[v] - candidate).abs() > tol {
                    return Ok(None);
                }
            }
        }
    }

    let mut terms: Vec<(Complex64, &Operator)> =
        vec![(Complex64::new(1.0, 0.0), static_part)];
    let adjoints: Vec<Operator> = spec
        .oscillatory_parts
        .iter()
        .map(|p| p.adjoint_op().clone())
        .collect();
    for (part, adj_op) in spec.oscillatory_parts.iter().zip(&adjoints) {
        terms.push((Complex64::new(1.0, 0.0), &part.op));
        terms.push((Complex64::new(1.0, 0.0), adj_op));
    }
    let mut folded = crate::hilbert::weighted_sum(&terms)?;
    let shift_triplets: Vec<(usize, usize, Complex64)> = potentials
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, i, Complex64::new(-p, 0.0)))
        .collect();
    let shift = Operator::from_triplets(spec.space(), shift_triplets);
    folded = folded.add(&shift)?;
    Ok(Some(Fold { folded, potentials }))
}
