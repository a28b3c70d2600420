// smith normal form over BigInt, chain complexes, homological fiber models

use crate::error::{data, Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<BigInt>>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> IntMatrix {
        IntMatrix { rows, cols, data: vec![vec![BigInt::zero(); cols]; rows] }
    }

    pub fn identity(n: usize) -> IntMatrix {
        let mut m = IntMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i][i] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: &[Vec<i64>]) -> IntMatrix {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        IntMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect(),
        }
    }

    /// Matrix with the given vectors as columns, `len` rows.
    pub fn from_columns(cols: &[Vec<i64>], len: usize) -> IntMatrix {
        let mut m = IntMatrix::zeros(len, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                m.data[i][j] = BigInt::from(x);
            }
        }
        m
    }

    pub fn to_i64(&self) -> Vec<Vec<i64>> {
        self.data.iter().map(|r| r.iter().map(|x| x.to_i64().expect("entry fits i64")).collect()).collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.data[i][k].is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i][j] += &self.data[i][k] * &other.data[k][j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut out = IntMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j][i] = self.data[i][j].clone();
            }
        }
        out
    }

    /// Determinant by fraction-free elimination (Bareiss).
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut a = self.data.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                    Some(i) => {
                        a.swap(i, k);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                    a[i][j] = v / &prev;
                }
            }
            prev = a[k][k].clone();
        }
        sign * a[n - 1][n - 1].clone()
    }
}

#[derive(Debug, Clone)]
pub struct Snf {
    pub d: IntMatrix,
    pub u: IntMatrix,
    pub v: IntMatrix,
    pub v_inv: IntMatrix,
    /// nonzero diagonal entries, positive, each dividing the next
    pub invariants: Vec<BigInt>,
}

fn swap_rows(m: &mut IntMatrix, a: usize, b: usize) {
    m.data.swap(a, b);
}

fn swap_cols(m: &mut IntMatrix, a: usize, b: usize) {
    for r in m.data.iter_mut() {
        r.swap(a, b);
    }
}

// row_a += f * row_b
fn add_row(m: &mut IntMatrix, a: usize, b: usize, f: &BigInt) {
    for j in 0..m.cols {
        let t = &m.data[b][j] * f;
        m.data[a][j] += t;
    }
}

fn add_col(m: &mut IntMatrix, a: usize, b: usize, f: &BigInt) {
    for i in 0..m.rows {
        let t = &m.data[i][b] * f;
        m.data[i][a] += t;
    }
}

fn neg_row(m: &mut IntMatrix, a: usize) {
    for x in m.data[a].iter_mut() {
        *x = -x.clone();
    }
}

/// U·m·V = D with U, V unimodular and D diagonal with a divisibility chain.
pub fn smith_normal_form(m: &IntMatrix) -> Snf {
    let (rows, cols) = (m.rows, m.cols);
    let mut d = m.clone();
    let mut u = IntMatrix::identity(rows);
    let mut v = IntMatrix::identity(cols);
    let mut vi = IntMatrix::identity(cols);
    let mut t = 0;
    while t < rows.min(cols) {
        // smallest nonzero entry in the trailing block
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !d.data[i][j].is_zero()
                    && best.is_none_or(|(bi, bj)| d.data[i][j].abs() < d.data[bi][bj].abs())
                {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        swap_rows(&mut d, t, pi);
        swap_rows(&mut u, t, pi);
        swap_cols(&mut d, t, pj);
        swap_cols(&mut v, t, pj);
        swap_rows(&mut vi, t, pj);
        loop {
            let mut dirty = false;
            for i in t + 1..rows {
                if d.data[i][t].is_zero() {
                    continue;
                }
                let q = -d.data[i][t].div_floor(&d.data[t][t]);
                add_row(&mut d, i, t, &q);
                add_row(&mut u, i, t, &q);
                if !d.data[i][t].is_zero() {
                    swap_rows(&mut d, t, i);
                    swap_rows(&mut u, t, i);
                    dirty = true;
                }
            }
            for j in t + 1..cols {
                if d.data[t][j].is_zero() {
                    continue;
                }
                let q = -d.data[t][j].div_floor(&d.data[t][t]);
                add_col(&mut d, j, t, &q);
                add_col(&mut v, j, t, &q);
                add_row(&mut vi, t, j, &-q.clone());
                if !d.data[t][j].is_zero() {
                    swap_cols(&mut d, t, j);
                    swap_cols(&mut v, t, j);
                    swap_rows(&mut vi, t, j);
                    dirty = true;
                }
            }
            if dirty {
                continue;
            }
            // divisibility: fold an offending row into row t and redo
            let p = d.data[t][t].clone();
            let bad = (t + 1..rows)
                .flat_map(|i| (t + 1..cols).map(move |j| (i, j)))
                .find(|&(i, j)| !(&d.data[i][j] % &p).is_zero());
            match bad {
                Some((i, _)) => {
                    let one = BigInt::one();
                    add_row(&mut d, t, i, &one);
                    add_row(&mut u, t, i, &one);
                }
                None => break,
            }
        }
        if d.data[t][t].is_negative() {
            neg_row(&mut d, t);
            neg_row(&mut u, t);
        }
        t += 1;
    }
    let invariants = (0..rows.min(cols)).map(|i| d.data[i][i].clone()).filter(|x| !x.is_zero()).collect();
    Snf { d, u, v, v_inv: vi, invariants }
}

/// Basis of ker m, as columns of V beyond the rank.
pub fn kernel_basis(m: &IntMatrix) -> Vec<Vec<i64>> {
    let s = smith_normal_form(m);
    let r = s.invariants.len();
    (r..m.cols).map(|j| (0..m.cols).map(|i| s.v.data[i][j].to_i64().expect("fits i64")).collect()).collect()
}

pub fn rank(m: &IntMatrix) -> usize {
    smith_normal_form(m).invariants.len()
}

/// Finitely generated abelian group Z^rank ⊕ ⊕ Z/t.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub rank: usize,
    pub torsion: Vec<u64>,
}

impl Group {
    pub fn free(rank: usize) -> Group {
        Group { rank, torsion: vec![] }
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0 && self.torsion.is_empty()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        match self.rank {
            0 => {}
            1 => parts.push("Z".to_string()),
            r => parts.push(format!("Z^{r}")),
        }
        parts.extend(self.torsion.iter().map(|t| format!("Z/{t}")));
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomologyReport {
    pub degrees: Vec<Group>,
}

impl fmt::Display for HomologyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.degrees.iter().map(|g| g.to_string()).collect();
        write!(f, "({})", s.join(", "))
    }
}

impl HomologyReport {
    pub fn euler_characteristic(&self) -> i64 {
        self.degrees.iter().enumerate().map(|(i, g)| if i % 2 == 0 { g.rank as i64 } else { -(g.rank as i64) }).sum()
    }

    /// Drops trailing zero groups.
    pub fn trimmed(mut self) -> HomologyReport {
        while self.degrees.len() > 1 && self.degrees.last().is_some_and(|g| g.is_zero()) {
            self.degrees.pop();
        }
        self
    }
}

fn torsion_of(inv: &[BigInt]) -> Result<Vec<u64>> {
    inv.iter()
        .filter(|x| !x.is_one())
        .map(|x| x.to_u64().ok_or_else(|| Error::Data(format!("torsion order {x} too large"))))
        .collect()
}

/// Homology of C_0 ← C_1 ← … with `boundaries[k]` the matrix of ∂_{k+1}: C_{k+1} → C_k.
pub fn chain_homology(dims: &[usize], boundaries: &[IntMatrix]) -> Result<HomologyReport> {
    if boundaries.len() + 1 != dims.len() {
        return data("need one boundary matrix per consecutive pair of chain groups");
    }
    for (k, b) in boundaries.iter().enumerate() {
        if b.rows != dims[k] || b.cols != dims[k + 1] {
            return data(format!("boundary {} has shape {}x{}", k + 1, b.rows, b.cols));
        }
        if k > 0 && !boundaries[k - 1].mul(b).data.iter().flatten().all(|x| x.is_zero()) {
            return data(format!("boundary composition d{}d{} is nonzero", k, k + 1));
        }
    }
    let snfs: Vec<Snf> = boundaries.iter().map(smith_normal_form).collect();
    let mut degrees = Vec::new();
    for k in 0..dims.len() {
        let out_rank = if k == 0 { 0 } else { snfs[k - 1].invariants.len() };
        let (in_rank, torsion) = match snfs.get(k) {
            Some(s) => (s.invariants.len(), torsion_of(&s.invariants)?),
            None => (0, vec![]),
        };
        degrees.push(Group { rank: dims[k] - out_rank - in_rank, torsion });
    }
    Ok(HomologyReport { degrees })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    /// strip ends glued with opposite orientations along L0: the RP² pattern
    Reversing,
    /// the torus pattern
    Preserving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseData2D {
    /// attachment points of each index-1 handle on L0 = S¹, cyclic positions in [0, 1)
    pub attachments: Vec<(f64, f64)>,
    pub framings: Vec<Framing>,
}

impl MorseData2D {
    pub fn two_values() -> MorseData2D {
        MorseData2D { attachments: vec![], framings: vec![] }
    }

    pub fn k(&self) -> usize {
        self.attachments.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.attachments.len() != self.framings.len() {
            return data("one framing per handle required");
        }
        let mut pts: Vec<f64> = self.attachments.iter().flat_map(|&(a, b)| [a, b]).collect();
        if pts.iter().any(|p| !(0.0..1.0).contains(p)) {
            return data("attachment positions must lie in [0, 1)");
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in pts.windows(2) {
            if w[1] - w[0] < 1e-9 {
                return data("attachment points must be pairwise distinct");
            }
        }
        Ok(())
    }

    pub fn critical_points(&self) -> usize {
        if self.k() == 0 {
            2
        } else {
            self.k() + 2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HandleDataHighDim {
    /// Heegaard data: α_i, β_j classes in H₁(T) = Z^{2h} in a symplectic basis
    /// (a_1, b_1, …, a_h, b_h), and the signed matrix A_ij = α_i·β_j.
    Heegaard { genus: usize, alpha: Vec<Vec<i64>>, beta: Vec<Vec<i64>>, intersections: Vec<Vec<i64>> },
    /// k 2-handles with a symmetric linking/framing matrix.
    Kirby { linking: Vec<Vec<i64>> },
}

/// Standard symplectic pairing on Z^{2h} in the basis (a_1, b_1, …).
pub fn surface_pairing(x: &[i64], y: &[i64]) -> i64 {
    (0..x.len() / 2).map(|i| x[2 * i] * y[2 * i + 1] - x[2 * i + 1] * y[2 * i]).sum()
}

fn is_primitive(v: &[i64]) -> bool {
    v.iter().fold(0i64, |g, &x| g.gcd(&x)) == 1
}

impl HandleDataHighDim {
    pub fn dim(&self) -> usize {
        match self {
            HandleDataHighDim::Heegaard { .. } => 3,
            HandleDataHighDim::Kirby { .. } => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HandleDataHighDim::Heegaard { genus, alpha, beta, intersections } => {
                let h = *genus;
                if h == 0 || alpha.len() != h || beta.len() != h {
                    return data("Heegaard data needs genus h >= 1 and h curves of each kind");
                }
                if intersections.len() != h || intersections.iter().any(|r| r.len() != h) {
                    return data("alpha.beta matrix must be h x h");
                }
                for c in alpha.iter().chain(beta) {
                    if c.len() != 2 * h || !is_primitive(c) {
                        return data("curve classes must be primitive vectors in Z^{2h}");
                    }
                }
                for i in 0..h {
                    for j in 0..h {
                        if surface_pairing(&alpha[i], &beta[j]) != intersections[i][j] {
                            return data(format!("alpha_{i}.beta_{j} disagrees with the curve classes"));
                        }
                        if surface_pairing(&alpha[i], &alpha[j]) != 0 || surface_pairing(&beta[i], &beta[j]) != 0 {
                            return data("alpha (resp. beta) curves must be disjoint");
                        }
                    }
                }
                Ok(())
            }
            HandleDataHighDim::Kirby { linking } => {
                let k = linking.len();
                if linking.iter().any(|r| r.len() != k) {
                    return data("linking matrix must be square");
                }
                for i in 0..k {
                    for j in 0..k {
                        if linking[i][j] != linking[j][i] {
                            return data("linking matrix must be symmetric");
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MorseInput {
    Surface(MorseData2D),
    High(HandleDataHighDim),
}

/// Cellular homology of N from its handle decomposition.
pub fn morse_homology_of_n(input: &MorseInput) -> Result<HomologyReport> {
    match input {
        MorseInput::Surface(d) => {
            d.validate()?;
            let k = d.k();
            // the attaching circle of the 2-cell runs over a reversing band twice in the same
            // direction and over a preserving band once each way
            let row: Vec<i64> = d.framings.iter().map(|f| if *f == Framing::Reversing { 2 } else { 0 }).collect();
            let d1 = IntMatrix::zeros(1, k);
            let d2 = IntMatrix::from_columns(&[row], k);
            chain_homology(&[1, k, 1], &[d1, d2])
        }
        MorseInput::High(h) => {
            h.validate()?;
            match h {
                HandleDataHighDim::Heegaard { genus, intersections, .. } => {
                    let g = *genus;
                    let a = IntMatrix::from_i64(intersections);
                    chain_homology(&[1, g, g, 1], &[IntMatrix::zeros(1, g), a, IntMatrix::zeros(g, 1)])
                }
                HandleDataHighDim::Kirby { linking } => {
                    let k = linking.len();
                    let l = IntMatrix::from_i64(linking);
                    // closing with a single 4-handle needs ∂(2-handlebody) = S³, i.e. coker L = 0
                    if k > 0 && l.det().abs() != BigInt::one() {
                        return data(format!("linking matrix {linking:?} is not unimodular"));
                    }
                    chain_homology(
                        &[1, 0, k, 0, 1],
                        &[
                            IntMatrix::zeros(1, 0),
                            IntMatrix::zeros(0, k),
                            IntMatrix::zeros(k, 0),
                            IntMatrix::zeros(0, 1),
                        ],
                    )
                }
            }
        }
    }
}

pub fn pairing(x: &[i64], y: &[i64], form: &[Vec<i64>]) -> i64 {
    let mut acc = 0;
    for i in 0..x.len() {
        for j in 0..y.len() {
            acc += x[i] * form[i][j] * y[j];
        }
    }
    acc
}

/// x + sign·⟨x, L⟩·L with ⟨x, L⟩ = xᵀ·form·L.
pub fn picard_lefschetz_twist(x: &[i64], l: &[i64], form: &[Vec<i64>], sign: i64) -> Vec<i64> {
    let p = pairing(x, l, form);
    x.iter().zip(l).map(|(a, b)| a + sign * p * b).collect()
}

/// Matrix (columns = images of basis vectors) of the twist along L.
pub fn twist_matrix(l: &[i64], form: &[Vec<i64>], sign: i64) -> Vec<Vec<i64>> {
    let n = l.len();
    let cols: Vec<Vec<i64>> = (0..n)
        .map(|j| {
            let mut e = vec![0; n];
            e[j] = 1;
            picard_lefschetz_twist(&e, l, form, sign)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn mat_mul_i64(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    IntMatrix::from_i64(a).mul(&IntMatrix::from_i64(b)).to_i64()
}

pub fn is_unimodular(m: &[Vec<i64>]) -> bool {
    m.is_empty() || IntMatrix::from_i64(m).det().abs() == BigInt::one()
}

/// Mᵀ·form·M = form.
pub fn preserves_form(m: &[Vec<i64>], form: &[Vec<i64>]) -> bool {
    if m.is_empty() {
        return true;
    }
    let mm = IntMatrix::from_i64(m);
    let f = IntMatrix::from_i64(form);
    mm.transpose().mul(&f).mul(&mm) == f
}

/// Homology of the fiber with its vanishing classes expressed in a basis of the free part of
/// H_mid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberHomology {
    pub degrees: Vec<Group>,
    pub mid: usize,
}

/// E ≃ M ∪ one (mid+1)-cell per vanishing class. H_mid(E) = coker Φ ⊕ tors,
/// H_{mid+1}(E) = H_{mid+1}(M) ⊕ ker Φ, other degrees unchanged.
pub fn total_space_homology(fiber: &FiberHomology, classes: &[Vec<i64>]) -> Result<HomologyReport> {
    let mid = fiber.mid;
    let r = fiber.degrees[mid].rank;
    if classes.iter().any(|c| c.len() != r) {
        return data("vanishing classes must be vectors in the free part of H_mid(M)");
    }
    let phi = IntMatrix::from_columns(classes, r);
    let snf = smith_normal_form(&phi);
    let rk = snf.invariants.len();
    let mut degrees = fiber.degrees.clone();
    while degrees.len() < mid + 2 {
        degrees.push(Group::free(0));
    }
    let mut tors = torsion_of(&snf.invariants)?;
    tors.extend(fiber.degrees[mid].torsion.iter().copied());
    tors.sort_unstable();
    degrees[mid] = Group { rank: r - rk, torsion: normalize_torsion(&tors) };
    degrees[mid + 1].rank += classes.len() - rk;
    Ok(HomologyReport { degrees }.trimmed())
}

// direct sum of cyclic groups to invariant-factor form
fn normalize_torsion(orders: &[u64]) -> Vec<u64> {
    if orders.is_empty() {
        return vec![];
    }
    let n = orders.len();
    let mut m = IntMatrix::zeros(n, n);
    for (i, &o) in orders.iter().enumerate() {
        m.data[i][i] = BigInt::from(o);
    }
    smith_normal_form(&m).invariants.iter().filter(|x| !x.is_one()).map(|x| x.to_u64().unwrap()).collect()
}

/// Middle-dimensional lattice of a fiber in dim N ∈ {3, 4}, with named classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomologicalFiber {
    pub dim_n: usize,
    pub homology: FiberHomology,
    /// basis names of the free part of H_mid(M)
    pub basis: Vec<String>,
    /// named classes in the basis, including the surgered ones
    pub classes: Vec<(String, Vec<i64>)>,
    /// pairing on H_mid in the basis; `None` where the input does not determine it
    pub pairing: Vec<Vec<Option<i64>>>,
    /// ordered vanishing classes by critical value
    pub vanishing: Vec<String>,
    /// framing data carried alongside (dim 4)
    pub linking: Option<Vec<Vec<i64>>>,
    pub surgery_identities: Vec<String>,
}

impl HomologicalFiber {
    pub fn class(&self, name: &str) -> Option<&Vec<i64>> {
        self.classes.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn vanishing_classes(&self) -> Vec<Vec<i64>> {
        self.vanishing.iter().map(|n| self.class(n).expect("named class").clone()).collect()
    }

    /// Pairing of two classes; `None` if an undetermined entry is involved.
    pub fn pair(&self, x: &[i64], y: &[i64]) -> Option<i64> {
        let mut acc = 0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                if x[i] * y[j] != 0 {
                    acc += x[i] * y[j] * self.pairing[i][j]?;
                }
            }
        }
        Some(acc)
    }
}

fn unit(n: usize, i: usize) -> Vec<i64> {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

fn add(a: &[i64], b: &[i64], eps: i64) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x + eps * y).collect()
}

/// `eps` is the surgery sign ε for every handle, +1 under the default chirality.
pub fn build_homological_fiber_model(data_in: &HandleDataHighDim, eps: i64) -> Result<HomologicalFiber> {
    data_in.validate()?;
    match data_in {
        HandleDataHighDim::Heegaard { genus, alpha, beta, intersections } => {
            let h = *genus;
            // M ≃ T ∪ (two disks on each α_i) ∪ (two disks on each β_j): the spheres meet T
            // cleanly along the curves
            let mut d2_cols: Vec<Vec<i64>> = vec![vec![0; 2 * h]];
            for c in alpha.iter().chain(beta) {
                d2_cols.push(c.clone());
                d2_cols.push(c.clone());
            }
            let d2 = IntMatrix::from_columns(&d2_cols, 2 * h);
            let hm = chain_homology(&[1, 2 * h, 1 + 4 * h], &[IntMatrix::zeros(1, 2 * h), d2])?;
            // H_2(M) = span(T, L1, L2) ⊕ lifts of the relations among the curve classes
            let curves: Vec<Vec<i64>> = alpha.iter().chain(beta).cloned().collect();
            let rel = kernel_basis(&IntMatrix::from_columns(&curves, 2 * h));
            let mut basis = vec!["T".to_string()];
            basis.extend((1..=h).map(|i| format!("L1[{i}]")));
            basis.extend((1..=h).map(|j| format!("L2[{j}]")));
            basis.extend((1..=rel.len()).map(|m| format!("X[{m}]")));
            let n = basis.len();
            debug_assert_eq!(n, hm.degrees[2].rank);
            let mut classes: Vec<(String, Vec<i64>)> =
                basis.iter().enumerate().map(|(i, b)| (b.clone(), unit(n, i))).collect();
            let mut l0 = unit(n, 0);
            let mut l3 = unit(n, 0);
            for i in 0..h {
                l0 = add(&l0, &unit(n, 1 + i), eps);
                l3 = add(&l3, &unit(n, 1 + h + i), eps);
            }
            classes.push(("L0".into(), l0));
            classes.push(("L3".into(), l3));
            let mut pairing = vec![vec![Some(0); n]; n];
            for x in 1 + 2 * h..n {
                for y in 0..n {
                    pairing[x][y] = None;
                    pairing[y][x] = None;
                }
            }
            pairing[0][0] = Some(2 * h as i64 - 2);
            for i in 0..h {
                pairing[1 + i][1 + i] = Some(-2);
                pairing[1 + h + i][1 + h + i] = Some(-2);
                for j in 0..h {
                    pairing[1 + i][1 + h + j] = Some(intersections[i][j]);
                    pairing[1 + h + j][1 + i] = Some(intersections[i][j]);
                }
            }
            let mut vanishing = vec!["L0".to_string()];
            vanishing.extend((1..=h).map(|i| format!("L1[{i}]")));
            vanishing.extend((1..=h).map(|j| format!("L2[{j}]")));
            vanishing.push("L3".into());
            let sgn = if eps > 0 { "+" } else { "-" };
            Ok(HomologicalFiber {
                dim_n: 3,
                homology: FiberHomology { degrees: hm.degrees, mid: 2 },
                basis,
                classes,
                pairing,
                vanishing,
                linking: None,
                surgery_identities: vec![
                    format!("[L0] = [T] {sgn} sum_i [L1[i]]"),
                    format!("[L3] = [T] {sgn} sum_j [L2[j]]"),
                ],
            })
        }
        HandleDataHighDim::Kirby { linking } => {
            let k = linking.len();
            // M ≃ L0 ∪ spheres L2[j] meeting L0 along the circles K_j
            let mut degrees = vec![Group::free(1), Group::free(0), Group::free(k), Group::free(k + 1)];
            if k == 0 {
                degrees.truncate(4);
            }
            let mut basis = vec!["L0".to_string()];
            basis.extend((1..=k).map(|j| format!("L2[{j}]")));
            let n = basis.len();
            let mut classes: Vec<(String, Vec<i64>)> =
                basis.iter().enumerate().map(|(i, b)| (b.clone(), unit(n, i))).collect();
            let mut l4 = unit(n, 0);
            for j in 0..k {
                l4 = add(&l4, &unit(n, 1 + j), eps);
            }
            classes.push(("L4".into(), l4));
            // odd-dimensional spheres: antisymmetric pairing, self-pairing 0; distinct L2 spheres
            // are disjoint; L0 meets each L2[j] cleanly along a circle, left undetermined
            let mut pairing = vec![vec![Some(0); n]; n];
            for j in 0..k {
                pairing[0][1 + j] = None;
                pairing[1 + j][0] = None;
            }
            let mut vanishing = vec!["L0".to_string()];
            vanishing.extend((1..=k).map(|j| format!("L2[{j}]")));
            vanishing.push("L4".into());
            if k == 0 {
                vanishing = vec!["L0".into(), "L4".into()];
            }
            let sgn = if eps > 0 { "+" } else { "-" };
            Ok(HomologicalFiber {
                dim_n: 4,
                homology: FiberHomology { degrees, mid: 3 },
                basis,
                classes,
                pairing,
                vanishing,
                linking: Some(linking.clone()),
                surgery_identities: vec![format!("[L4] = [L0] {sgn} sum_j [L2[j]]")],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_snf(m: &IntMatrix) -> Snf {
        let s = smith_normal_form(m);
        assert_eq!(s.u.mul(m).mul(&s.v), s.d);
        assert_eq!(s.v.mul(&s.v_inv), IntMatrix::identity(m.cols));
        assert_eq!(s.u.det().abs(), BigInt::one());
        assert_eq!(s.v.det().abs(), BigInt::one());
        for w in s.invariants.windows(2) {
            assert!((&w[1] % &w[0]).is_zero());
        }
        s
    }

    #[test]
    fn snf_examples() {
        let s = check_snf(&IntMatrix::from_i64(&[vec![2]]));
        assert_eq!(s.invariants, vec![BigInt::from(2)]);
        let s = check_snf(&IntMatrix::identity(3));
        assert_eq!(s.d, IntMatrix::identity(3));
        let s = check_snf(&IntMatrix::from_i64(&[vec![2, 0], vec![0, 3]]));
        assert_eq!(s.invariants, vec![BigInt::from(1), BigInt::from(6)]);
        check_snf(&IntMatrix::from_i64(&[vec![0, 4, 6], vec![2, 0, 8]]));
        check_snf(&IntMatrix::zeros(2, 3));
    }

    #[test]
    fn snf_preserves_determinant() {
        let m = IntMatrix::from_i64(&[vec![3, 1, 4], vec![1, 5, 9], vec![2, 6, 5]]);
        let s = check_snf(&m);
        let prod: BigInt = s.invariants.iter().product();
        assert_eq!(prod, m.det().abs());
    }

    #[test]
    fn morse_examples() {
        let rp2 = MorseData2D { attachments: vec![(0.1, 0.6)], framings: vec![Framing::Reversing] };
        assert_eq!(morse_homology_of_n(&MorseInput::Surface(rp2)).unwrap().to_string(), "(Z, Z/2, 0)");
        let s3 = HandleDataHighDim::Heegaard {
            genus: 1,
            alpha: vec![vec![1, 0]],
            beta: vec![vec![0, 1]],
            intersections: vec![vec![1]],
        };
        assert_eq!(morse_homology_of_n(&MorseInput::High(s3)).unwrap().to_string(), "(Z, 0, 0, Z)");
        let cp2 = HandleDataHighDim::Kirby { linking: vec![vec![1]] };
        assert_eq!(morse_homology_of_n(&MorseInput::High(cp2)).unwrap().to_string(), "(Z, 0, Z, 0, Z)");
        let bad = HandleDataHighDim::Kirby { linking: vec![vec![2]] };
        assert!(matches!(morse_homology_of_n(&MorseInput::High(bad)), Err(Error::Data(_))));
    }

    #[test]
    fn lens_space_heegaard() {
        let l52 = HandleDataHighDim::Heegaard {
            genus: 1,
            alpha: vec![vec![1, 0]],
            beta: vec![vec![2, 5]],
            intersections: vec![vec![5]],
        };
        let n = morse_homology_of_n(&MorseInput::High(l52.clone())).unwrap();
        assert_eq!(n.to_string(), "(Z, Z/5, 0, Z)");
        let f = build_homological_fiber_model(&l52, 1).unwrap();
        let e = total_space_homology(&f.homology, &f.vanishing_classes()).unwrap();
        assert_eq!(e, n);
    }

    #[test]
    fn s1_x_s2_heegaard_has_extra_relation_class() {
        let d = HandleDataHighDim::Heegaard {
            genus: 1,
            alpha: vec![vec![1, 0]],
            beta: vec![vec![1, 0]],
            intersections: vec![vec![0]],
        };
        let n = morse_homology_of_n(&MorseInput::High(d.clone())).unwrap();
        assert_eq!(n.to_string(), "(Z, Z, Z, Z)");
        let f = build_homological_fiber_model(&d, 1).unwrap();
        assert_eq!(f.basis.len(), 4);
        let e = total_space_homology(&f.homology, &f.vanishing_classes()).unwrap();
        assert_eq!(e, n);
    }

    #[test]
    fn heegaard_validation() {
        let bad = HandleDataHighDim::Heegaard {
            genus: 1,
            alpha: vec![vec![1, 0]],
            beta: vec![vec![0, 1]],
            intersections: vec![vec![2]],
        };
        assert!(bad.validate().is_err());
        let ragged = HandleDataHighDim::Heegaard {
            genus: 1,
            alpha: vec![vec![1, 0]],
            beta: vec![vec![0, 1]],
            intersections: vec![vec![1, 0]],
        };
        assert!(ragged.validate().is_err());
    }

    #[test]
    fn twist_examples() {
        let form = vec![vec![0, 1], vec![-1, 0]];
        let (a, b) = (vec![1, 0], vec![0, 1]);
        assert_eq!(picard_lefschetz_twist(&a, &a, &form, 1), a);
        assert_eq!(picard_lefschetz_twist(&b, &a, &form, -1), vec![1, 1]);
        assert_eq!(picard_lefschetz_twist(&b, &a, &form, 1), vec![-1, 1]);
        let t = twist_matrix(&a, &form, -1);
        assert!(is_unimodular(&t) && preserves_form(&t, &form));
    }

    #[test]
    fn surgered_sphere_self_pairing_matches_euler_characteristic() {
        for h in 1..=3usize {
            let mut alpha = vec![];
            let mut beta = vec![];
            for i in 0..h {
                let mut a = vec![0; 2 * h];
                a[2 * i] = 1;
                let mut b = vec![0; 2 * h];
                b[2 * i + 1] = 1;
                alpha.push(a);
                beta.push(b);
            }
            let inter: Vec<Vec<i64>> = (0..h).map(|i| (0..h).map(|j| (i == j) as i64).collect()).collect();
            let d = HandleDataHighDim::Heegaard { genus: h, alpha, beta, intersections: inter };
            let f = build_homological_fiber_model(&d, 1).unwrap();
            // surgery of T (genus h) with h spheres along circles has χ = 2 - 2h + 2h = 2
            for name in ["L0", "L3"] {
                let c = f.class(name).unwrap();
                assert_eq!(f.pair(c, c), Some(-2));
            }
            let e = total_space_homology(&f.homology, &f.vanishing_classes()).unwrap();
            assert_eq!(e, morse_homology_of_n(&MorseInput::High(d)).unwrap());
        }
    }

    #[test]
    fn kirby_pipelines() {
        for (l, expect) in [
            (vec![vec![1]], "(Z, 0, Z, 0, Z)"),
            (vec![vec![0, 1], vec![1, 0]], "(Z, 0, Z^2, 0, Z)"),
            (vec![], "(Z, 0, 0, 0, Z)"),
        ] {
            let d = HandleDataHighDim::Kirby { linking: l };
            let f = build_homological_fiber_model(&d, 1).unwrap();
            let e = total_space_homology(&f.homology, &f.vanishing_classes()).unwrap();
            assert_eq!(e.to_string(), expect);
            assert_eq!(e, morse_homology_of_n(&MorseInput::High(d)).unwrap());
        }
    }
}
