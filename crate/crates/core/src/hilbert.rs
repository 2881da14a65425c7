//! Truncated-Fock-space layout and sparse operator algebra.
//!
//! A [`HilbertSpace`] is an ordered list of subsystems (two flux qutrits and
//! up to five cavity modes), indexed row-major with the first-listed
//! subsystem slowest-varying. [`Operator`] is a compressed-sparse-row complex
//! matrix tied to its space; everything downstream (Hamiltonians, collapse
//! operators, projectors) is built from the ladder and transition operators
//! defined here.
//!
//! State vectors serialize to a small text format: a header naming the
//! subsystem labels and dimensions, then one `re im` amplitude pair per line
//! in canonical index order.

use crate::error::{Result, SimError};
use ndarray::Array2;
use num_complex::Complex64;
use std::fmt;
use std::io::{BufRead, Write};

/// Entries with magnitude at or below this are dropped from sparse storage.
pub const DROP_TOL: f64 = 1e-14;

/// Subsystem labels for the device layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    QutritL,
    QutritR,
    Cav1,
    Cav2,
    Cav3,
    Cav4,
    CavCentral,
}

impl Label {
    pub fn is_qutrit(self) -> bool {
        matches!(self, Label::QutritL | Label::QutritR)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::QutritL => "qutrit-L",
            Label::QutritR => "qutrit-R",
            Label::Cav1 => "cav1",
            Label::Cav2 => "cav2",
            Label::Cav3 => "cav3",
            Label::Cav4 => "cav4",
            Label::CavCentral => "cav-central",
        }
    }

    pub fn parse(s: &str) -> Result<Label> {
        match s {
            "qutrit-L" => Ok(Label::QutritL),
            "qutrit-R" => Ok(Label::QutritR),
            "cav1" => Ok(Label::Cav1),
            "cav2" => Ok(Label::Cav2),
            "cav3" => Ok(Label::Cav3),
            "cav4" => Ok(Label::Cav4),
            "cav-central" => Ok(Label::CavCentral),
            other => Err(SimError::InvalidInput(format!("unknown label `{other}`"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Qutrit levels in ascending energy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    G,
    E,
    F,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::G => 0,
            Level::E => 1,
            Level::F => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::G => "g",
            Level::E => "e",
            Level::F => "f",
        }
    }
}

/// Ordered tensor-product space of qutrits and truncated cavity modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpace {
    subsystems: Vec<(Label, usize)>,
    strides: Vec<usize>,
    total_dim: usize,
}

/// Builds a space from `(label, dimension)` pairs.
///
/// The first-listed subsystem is slowest-varying in the composite index.
pub fn build_space(dims: &[(Label, usize)]) -> Result<HilbertSpace> {
    if dims.is_empty() {
        return Err(SimError::Space("empty subsystem list".into()));
    }
    for (i, (label, dim)) in dims.iter().enumerate() {
        if *dim < 2 {
            return Err(SimError::Space(format!(
                "subsystem {label} has dimension {dim} < 2"
            )));
        }
        if label.is_qutrit() && *dim != 3 {
            return Err(SimError::Space(format!(
                "qutrit {label} must have dimension 3, got {dim}"
            )));
        }
        if dims[..i].iter().any(|(l, _)| l == label) {
            return Err(SimError::Space(format!("duplicate label {label}")));
        }
    }
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1].1;
    }
    let total_dim = dims.iter().map(|(_, d)| d).product();
    Ok(HilbertSpace {
        subsystems: dims.to_vec(),
        strides,
        total_dim,
    })
}

impl HilbertSpace {
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn subsystems(&self) -> &[(Label, usize)] {
        &self.subsystems
    }

    pub fn has(&self, label: Label) -> bool {
        self.subsystems.iter().any(|(l, _)| *l == label)
    }

    pub fn position(&self, label: Label) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|(l, _)| *l == label)
            .ok_or_else(|| SimError::Space(format!("subsystem {label} not in space")))
    }

    pub fn dim_of(&self, label: Label) -> Result<usize> {
        Ok(self.subsystems[self.position(label)?].1)
    }

    /// Composite index of a per-subsystem occupation list (canonical order).
    pub fn index_of(&self, occ: &[usize]) -> usize {
        debug_assert_eq!(occ.len(), self.subsystems.len());
        occ.iter()
            .zip(&self.strides)
            .map(|(&n, &s)| n * s)
            .sum()
    }

    /// Per-subsystem occupations of a composite index (canonical order).
    pub fn occupations_of(&self, index: usize) -> Vec<usize> {
        let mut rem = index;
        self.strides
            .iter()
            .zip(&self.subsystems)
            .map(|(&s, &(_, d))| {
                let n = rem / s;
                rem %= s;
                debug_assert!(n < d);
                n
            })
            .collect()
    }

    /// Occupation of one subsystem within a composite index.
    pub fn occupation_at(&self, index: usize, pos: usize) -> usize {
        (index / self.strides[pos]) % self.subsystems[pos].1
    }

    pub(crate) fn check_same(&self, other: &HilbertSpace) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(SimError::Space("operands live on different spaces".into()))
        }
    }
}

/// Sparse complex matrix (CSR) tied to a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct Operator {
    space: HilbertSpace,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<Complex64>,
}

impl Operator {
    pub fn zero(space: &HilbertSpace) -> Operator {
        Operator {
            space: space.clone(),
            indptr: vec![0; space.total_dim() + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(space: &HilbertSpace) -> Operator {
        let n = space.total_dim();
        Operator {
            space: space.clone(),
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Builds an operator from (row, col, value) triplets; duplicate entries
    /// are summed and magnitudes at or below the drop tolerance discarded.
    pub fn from_triplets(
        space: &HilbertSpace,
        mut triplets: Vec<(usize, usize, Complex64)>,
    ) -> Operator {
        let n = space.total_dim();
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut i = 0;
        while i < triplets.len() {
            let (r, c, mut z) = triplets[i];
            i += 1;
            while i < triplets.len() && triplets[i].0 == r && triplets[i].1 == c {
                z += triplets[i].2;
                i += 1;
            }
            debug_assert!(r < n && c < n);
            if z.norm() > DROP_TOL {
                indices.push(c);
                data.push(z);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Operator {
            space: space.clone(),
            indptr,
            indices,
            data,
        }
    }

    /// Embeds a local operator (triplets on one subsystem) into the full space.
    pub fn embed_local(
        space: &HilbertSpace,
        label: Label,
        local: &[(usize, usize, Complex64)],
    ) -> Result<Operator> {
        let pos = space.position(label)?;
        let d = space.subsystems()[pos].1;
        let inner = space.strides[pos];
        let outer_count = space.total_dim() / (d * inner);
        let mut triplets = Vec::with_capacity(local.len() * outer_count * inner);
        for &(rl, cl, z) in local {
            debug_assert!(rl < d && cl < d);
            for o in 0..outer_count {
                let base = o * d * inner;
                for i in 0..inner {
                    triplets.push((base + rl * inner + i, base + cl * inner + i, z));
                }
            }
        }
        Ok(Operator::from_triplets(space, triplets))
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        match self.indices[lo..hi].binary_search(&c) {
            Ok(k) => self.data[lo + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Iterates stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.data[k]))
        })
    }

    /// y = A x
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    /// y += coeff * A x
    pub fn apply_add(&self, coeff: Complex64, x: &[Complex64], y: &mut [Complex64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yr += coeff * acc;
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.space.check_same(&other.space)?;
        self.add_scaled(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.space.check_same(&other.space)?;
        self.add_scaled(Complex64::new(-1.0, 0.0), other)
    }

    /// self + coeff * other, merged row-wise.
    pub fn add_scaled(&self, coeff: Complex64, other: &Operator) -> Result<Operator> {
        self.space.check_same(&other.space)?;
        let n = self.dim();
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut data = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..n {
            let (mut i, ei) = (self.indptr[r], self.indptr[r + 1]);
            let (mut j, ej) = (other.indptr[r], other.indptr[r + 1]);
            while i < ei || j < ej {
                let (c, z) = if j >= ej || (i < ei && self.indices[i] < other.indices[j]) {
                    let v = (self.indices[i], self.data[i]);
                    i += 1;
                    v
                } else if i >= ei || other.indices[j] < self.indices[i] {
                    let v = (other.indices[j], coeff * other.data[j]);
                    j += 1;
                    v
                } else {
                    let v = (self.indices[i], self.data[i] + coeff * other.data[j]);
                    i += 1;
                    j += 1;
                    v
                };
                if z.norm() > DROP_TOL {
                    indices.push(c);
                    data.push(z);
                }
            }
            indptr[r + 1] = indices.len();
        }
        Ok(Operator {
            space: self.space.clone(),
            indptr,
            indices,
            data,
        })
    }

    pub fn scale(&self, coeff: Complex64) -> Operator {
        if coeff.norm() <= DROP_TOL {
            return Operator::zero(&self.space);
        }
        Operator {
            space: self.space.clone(),
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|z| coeff * z).collect(),
        }
    }

    /// Sparse matrix product self * other.
    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        self.space.check_same(&other.space)?;
        let n = self.dim();
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let a = self.data[k];
                let mid = self.indices[k];
                for m in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[m];
                    if acc[c] == Complex64::new(0.0, 0.0) && !touched.contains(&c) {
                        touched.push(c);
                    }
                    acc[c] += a * other.data[m];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                let z = acc[c];
                if z.norm() > DROP_TOL {
                    indices.push(c);
                    data.push(z);
                }
                acc[c] = Complex64::new(0.0, 0.0);
            }
            touched.clear();
            indptr[r + 1] = indices.len();
        }
        Ok(Operator {
            space: self.space.clone(),
            indptr,
            indices,
            data,
        })
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Operator {
        let triplets = self
            .triplets()
            .map(|(r, c, z)| (c, r, z.conj()))
            .collect();
        Operator::from_triplets(&self.space, triplets)
    }

    /// [self, other] = self*other - other*self
    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .map(|k| self.data[k].norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.adjoint().sub(self).map(|d| d.norm_inf()).unwrap_or(f64::INFINITY)
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(r, c, _)| r == c)
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|r| self.get(r, r)).collect()
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut m = Array2::zeros((self.dim(), self.dim()));
        for (r, c, z) in self.triplets() {
            m[(r, c)] = z;
        }
        m
    }
}

/// Annihilation operator of a cavity mode: a|n> = sqrt(n)|n-1>.
pub fn mode_annihilation(space: &HilbertSpace, label: Label) -> Result<Operator> {
    if label.is_qutrit() {
        return Err(SimError::InvalidInput(format!(
            "{label} is a qutrit, not a cavity mode"
        )));
    }
    let d = space.dim_of(label)?;
    let local: Vec<_> = (1..d)
        .map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0)))
        .collect();
    Operator::embed_local(space, label, &local)
}

/// Number operator of a cavity mode.
pub fn mode_number(space: &HilbertSpace, label: Label) -> Result<Operator> {
    if label.is_qutrit() {
        return Err(SimError::InvalidInput(format!(
            "{label} is a qutrit, not a cavity mode"
        )));
    }
    let d = space.dim_of(label)?;
    let local: Vec<_> = (1..d)
        .map(|n| (n, n, Complex64::new(n as f64, 0.0)))
        .collect();
    Operator::embed_local(space, label, &local)
}

/// Embedded |to><from| on a qutrit.
pub fn qutrit_transition(
    space: &HilbertSpace,
    label: Label,
    from: Level,
    to: Level,
) -> Result<Operator> {
    if !label.is_qutrit() {
        return Err(SimError::InvalidInput(format!("{label} is not a qutrit")));
    }
    if from == to {
        return Err(SimError::InvalidInput(
            "transition levels must be distinct".into(),
        ));
    }
    let local = [(to.index(), from.index(), Complex64::new(1.0, 0.0))];
    Operator::embed_local(space, label, &local)
}

/// Embedded |level><level| projector on a qutrit.
pub fn qutrit_projector(space: &HilbertSpace, label: Label, level: Level) -> Result<Operator> {
    if !label.is_qutrit() {
        return Err(SimError::InvalidInput(format!("{label} is not a qutrit")));
    }
    let local = [(level.index(), level.index(), Complex64::new(1.0, 0.0))];
    Operator::embed_local(space, label, &local)
}

/// Weighted sum of operators on one space.
pub fn weighted_sum(terms: &[(Complex64, &Operator)]) -> Result<Operator> {
    let first = terms
        .first()
        .ok_or_else(|| SimError::InvalidInput("empty operator sum".into()))?;
    let mut out = first.1.scale(first.0);
    for &(w, op) in &terms[1..] {
        out = out.add_scaled(w, op)?;
    }
    Ok(out)
}

/// Pure state on a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct StateVector {
    space: HilbertSpace,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(space: &HilbertSpace) -> StateVector {
        StateVector {
            space: space.clone(),
            amps: vec![Complex64::new(0.0, 0.0); space.total_dim()],
        }
    }

    /// Basis ket from per-subsystem occupations in canonical order.
    pub fn basis(space: &HilbertSpace, occ: &[usize]) -> Result<StateVector> {
        if occ.len() != space.subsystems().len() {
            return Err(SimError::InvalidInput(format!(
                "expected {} occupations, got {}",
                space.subsystems().len(),
                occ.len()
            )));
        }
        for (&n, (label, d)) in occ.iter().zip(space.subsystems()) {
            if n >= *d {
                return Err(SimError::InvalidInput(format!(
                    "occupation {n} out of range for {label} (dim {d})"
                )));
            }
        }
        let mut sv = StateVector::zero(space);
        sv.amps[space.index_of(occ)] = Complex64::new(1.0, 0.0);
        Ok(sv)
    }

    pub fn from_amplitudes(space: &HilbertSpace, amps: Vec<Complex64>) -> Result<StateVector> {
        if amps.len() != space.total_dim() {
            return Err(SimError::InvalidInput(format!(
                "amplitude length {} does not match dimension {}",
                amps.len(),
                space.total_dim()
            )));
        }
        Ok(StateVector {
            space: space.clone(),
            amps,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(SimError::Numerics("cannot normalize zero state".into()));
        }
        let inv = 1.0 / n;
        for z in &mut self.amps {
            *z *= inv;
        }
        Ok(())
    }

    /// <self|other>
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.space.check_same(&other.space)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |<self|other>|, the phase-insensitive overlap.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }

    pub fn scale(&mut self, z: Complex64) {
        for a in &mut self.amps {
            *a *= z;
        }
    }

    pub fn add_scaled(&mut self, z: Complex64, other: &StateVector) -> Result<()> {
        self.space.check_same(&other.space)?;
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += z * b;
        }
        Ok(())
    }

    /// Writes the documented text layout: header then `re im` per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "noonsim-state v1")?;
        let subsys: Vec<String> = self
            .space
            .subsystems()
            .iter()
            .map(|(l, d)| format!("{l}:{d}"))
            .collect();
        writeln!(w, "subsystems: {}", subsys.join(" "))?;
        writeln!(w, "amplitudes: {}", self.amps.len())?;
        for z in &self.amps {
            writeln!(w, "{:.17e} {:.17e}", z.re, z.im)?;
        }
        Ok(())
    }

    /// Parses the text layout written by [`StateVector::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<StateVector> {
        let mut lines = r.lines();
        let magic = lines
            .next()
            .ok_or_else(|| SimError::Config("empty state file".into()))??;
        if magic.trim() != "noonsim-state v1" {
            return Err(SimError::Config(format!("bad state header `{magic}`")));
        }
        let subsys_line = lines
            .next()
            .ok_or_else(|| SimError::Config("missing subsystems line".into()))??;
        let subsys_str = subsys_line
            .strip_prefix("subsystems:")
            .ok_or_else(|| SimError::Config("missing subsystems prefix".into()))?;
        let mut dims = Vec::new();
        for part in subsys_str.split_whitespace() {
            let (l, d) = part
                .split_once(':')
                .ok_or_else(|| SimError::Config(format!("bad subsystem entry `{part}`")))?;
            let dim: usize = d
                .parse()
                .map_err(|_| SimError::Config(format!("bad dimension `{d}`")))?;
            dims.push((Label::parse(l)?, dim));
        }
        let space = build_space(&dims)?;
        let count_line = lines
            .next()
            .ok_or_else(|| SimError::Config("missing amplitudes line".into()))??;
        let count: usize = count_line
            .strip_prefix("amplitudes:")
            .ok_or_else(|| SimError::Config("missing amplitudes prefix".into()))?
            .trim()
            .parse()
            .map_err(|_| SimError::Config("bad amplitude count".into()))?;
        if count != space.total_dim() {
            return Err(SimError::Config(format!(
                "amplitude count {count} does not match dimension {}",
                space.total_dim()
            )));
        }
        let mut amps = Vec::with_capacity(count);
        for line in lines.take(count) {
            let line = line?;
            let mut it = line.split_whitespace();
            let re: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SimError::Config("bad amplitude line".into()))?;
            let im: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SimError::Config("bad amplitude line".into()))?;
            amps.push(Complex64::new(re, im));
        }
        if amps.len() != count {
            return Err(SimError::Config("truncated amplitude list".into()));
        }
        StateVector::from_amplitudes(&space, amps)
    }
}

/// Dense density matrix on a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    space: HilbertSpace,
    mat: Array2<Complex64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &StateVector) -> DensityMatrix {
        let n = psi.amps.len();
        let mut mat = Array2::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                mat[(r, c)] = psi.amps[r] * psi.amps[c].conj();
            }
        }
        DensityMatrix {
            space: psi.space.clone(),
            mat,
        }
    }

    pub fn from_matrix(space: &HilbertSpace, mat: Array2<Complex64>) -> Result<DensityMatrix> {
        if mat.nrows() != space.total_dim() || mat.ncols() != space.total_dim() {
            return Err(SimError::InvalidInput(
                "density matrix shape does not match space".into(),
            ));
        }
        Ok(DensityMatrix {
            space: space.clone(),
            mat,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.mat
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)]).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for r in 0..self.mat.nrows() {
            for c in 0..self.mat.ncols() {
                dev = dev.max((self.mat[(r, c)] - self.mat[(c, r)].conj()).norm());
            }
        }
        dev
    }

    /// <psi| rho |psi>
    pub fn expectation_state(&self, psi: &StateVector) -> Result<Complex64> {
        self.space.check_same(&psi.space)?;
        let n = psi.amps.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..n {
                row += self.mat[(r, c)] * psi.amps[c];
            }
            acc += psi.amps[r].conj() * row;
        }
        Ok(acc)
    }
}
