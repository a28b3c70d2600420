// Dim-2 regular fiber as a complex of glued polygons, with vanishing curves as chord walks.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{data, Error, Result};
use crate::homology::{chain_homology, smith_normal_form, Framing, HomologyReport, IntMatrix, MorseData2D};
use crate::report::Check;

const POS_TOL: f64 = 1e-12;
const GP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct Polygon {
    pub label: String,
    pub sides: usize,
}

/// Side `a` glued to side `b`. Untwisted gluings reverse the side parameter (pos ↦ 1 − pos),
/// which is the orientation-compatible identification of two ccw polygons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Gluing {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub twisted: bool,
}

#[derive(Debug, Clone)]
pub struct CombSurface {
    pub polygons: Vec<Polygon>,
    pub gluings: Vec<Gluing>,
    partner: Vec<Vec<Option<(usize, usize, bool)>>>,
}

impl CombSurface {
    pub fn new(polygons: Vec<Polygon>, gluings: Vec<Gluing>) -> Result<CombSurface> {
        let mut partner: Vec<Vec<Option<(usize, usize, bool)>>> =
            polygons.iter().map(|p| vec![None; p.sides]).collect();
        for g in &gluings {
            for &(p, s) in [g.a, g.b].iter() {
                if p >= polygons.len() || s >= polygons[p].sides {
                    return data(format!("gluing refers to missing side ({p}, {s})"));
                }
            }
            if g.a == g.b {
                return data("a side cannot be glued to itself");
            }
            for &((p, s), (q, t)) in [(g.a, g.b), (g.b, g.a)].iter() {
                if partner[p][s].is_some() {
                    return data(format!("side {s} of {} glued twice", polygons[p].label));
                }
                partner[p][s] = Some((q, t, g.twisted));
            }
        }
        let surface = CombSurface { polygons, gluings, partner };
        if !surface.is_connected() {
            return data("glued complex is not connected");
        }
        Ok(surface)
    }

    pub fn partner(&self, p: usize, s: usize) -> Option<(usize, usize, bool)> {
        self.partner[p][s]
    }

    fn is_connected(&self) -> bool {
        if self.polygons.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.polygons.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(p) = queue.pop_front() {
            for (q, _, _) in self.partner[p].iter().flatten() {
                if !seen[*q] {
                    seen[*q] = true;
                    queue.push_back(*q);
                }
            }
        }
        seen.iter().all(|&x| x)
    }

    /// Per-polygon orientation signs making every gluing compatible, if they exist.
    pub fn orientation(&self) -> Option<Vec<i64>> {
        let mut sign = vec![0i64; self.polygons.len()];
        sign[0] = 1;
        let mut queue = VecDeque::from([0]);
        while let Some(p) = queue.pop_front() {
            for (q, _, tw) in self.partner[p].iter().flatten() {
                let want = if *tw { -sign[p] } else { sign[p] };
                if sign[*q] == 0 {
                    sign[*q] = want;
                    queue.push_back(*q);
                } else if sign[*q] != want {
                    return None;
                }
            }
        }
        Some(sign)
    }

    pub fn is_orientable(&self) -> bool {
        self.orientation().is_some()
    }

    fn corner_id(&self, p: usize, c: usize) -> usize {
        self.polygons[..p].iter().map(|q| q.sides).sum::<usize>() + c % self.polygons[p].sides
    }

    /// Vertex class of every polygon corner, and the number of classes.
    fn vertex_classes(&self) -> (Vec<usize>, usize) {
        let total: usize = self.polygons.iter().map(|p| p.sides).sum();
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut y = x;
            while parent[y] != r {
                let n = parent[y];
                parent[y] = r;
                y = n;
            }
            r
        }
        for g in &self.gluings {
            let ((p, i), (q, j)) = (g.a, g.b);
            let pairs = if g.twisted {
                [(self.corner_id(p, i), self.corner_id(q, j)), (self.corner_id(p, i + 1), self.corner_id(q, j + 1))]
            } else {
                [(self.corner_id(p, i), self.corner_id(q, j + 1)), (self.corner_id(p, i + 1), self.corner_id(q, j))]
            };
            for (x, y) in pairs {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                parent[rx] = ry;
            }
        }
        let mut label = BTreeMap::new();
        let mut class = vec![0; total];
        for (c, slot) in class.iter_mut().enumerate() {
            let r = find(&mut parent, c);
            let n = label.len();
            *slot = *label.entry(r).or_insert(n);
        }
        (class, label.len())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_classes().1
    }

    pub fn edge_count(&self) -> usize {
        self.polygons.iter().map(|p| p.sides).sum::<usize>() - self.gluings.len()
    }

    fn free_sides(&self) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for (p, poly) in self.polygons.iter().enumerate() {
            for s in 0..poly.sides {
                if self.partner[p][s].is_none() {
                    out.push((p, s));
                }
            }
        }
        out
    }

    /// Cellular chain complex: ∂₁ (vertices × edges) and ∂₂ (edges × polygons).
    pub fn cellular(&self) -> Cellular {
        let (vclass, nv) = self.vertex_classes();
        let mut edge_of: Vec<Vec<(usize, i64)>> = self.polygons.iter().map(|p| vec![(0, 0); p.sides]).collect();
        let mut ends = vec![];
        for g in &self.gluings {
            let e = ends.len();
            let (p, i) = g.a;
            ends.push((vclass[self.corner_id(p, i)], vclass[self.corner_id(p, i + 1)]));
            edge_of[p][i] = (e, 1);
            edge_of[g.b.0][g.b.1] = (e, if g.twisted { 1 } else { -1 });
        }
        for (p, s) in self.free_sides() {
            let e = ends.len();
            ends.push((vclass[self.corner_id(p, s)], vclass[self.corner_id(p, s + 1)]));
            edge_of[p][s] = (e, 1);
        }
        let ne = ends.len();
        let nf = self.polygons.len();
        let mut d1 = IntMatrix::zeros(nv, ne);
        for (e, &(t, h)) in ends.iter().enumerate() {
            d1.data[t][e] -= 1;
            d1.data[h][e] += 1;
        }
        let mut d2 = IntMatrix::zeros(ne, nf);
        for (p, sides) in edge_of.iter().enumerate() {
            for &(e, sg) in sides {
                d2.data[e][p] += sg;
            }
        }
        Cellular { nv, ne, nf, edge_of, d1, d2 }
    }
}

pub fn euler_characteristic(s: &CombSurface) -> i64 {
    s.vertex_count() as i64 - s.edge_count() as i64 + s.polygons.len() as i64
}

pub fn boundary_components(s: &CombSurface) -> usize {
    let (vclass, nv) = s.vertex_classes();
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut touched = vec![false; nv];
    for (p, side) in s.free_sides() {
        let (a, b) = (vclass[s.corner_id(p, side)], vclass[s.corner_id(p, side + 1)]);
        touched[a] = true;
        touched[b] = true;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut roots: Vec<usize> = (0..nv).filter(|&v| touched[v]).map(|v| find(&mut parent, v)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Genus of an orientable surface from χ = 2 − 2g − b.
pub fn genus(s: &CombSurface) -> Option<i64> {
    let twice = 2 - euler_characteristic(s) - boundary_components(s) as i64;
    (twice >= 0 && twice % 2 == 0 && s.is_orientable()).then_some(twice / 2)
}

#[derive(Debug, Clone)]
pub struct Cellular {
    pub nv: usize,
    pub ne: usize,
    pub nf: usize,
    /// edge id and orientation sign of every polygon side
    pub edge_of: Vec<Vec<(usize, i64)>>,
    pub d1: IntMatrix,
    pub d2: IntMatrix,
}

/// A straight chord inside one polygon, from (side, pos) to (side, pos).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chord {
    pub poly: usize,
    pub from: (usize, f64),
    pub to: (usize, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub name: String,
    pub chords: Vec<Chord>,
}

impl Curve {
    /// Checks that consecutive chords meet across gluings and the walk closes up.
    pub fn validate(&self, s: &CombSurface) -> Result<()> {
        if self.chords.is_empty() {
            return data(format!("curve {} is empty", self.name));
        }
        for (i, c) in self.chords.iter().enumerate() {
            let next = &self.chords[(i + 1) % self.chords.len()];
            let Some((q, t, tw)) = s.partner(c.poly, c.to.0) else {
                return data(format!("curve {} runs into the boundary", self.name));
            };
            let pos = if tw { c.to.1 } else { 1.0 - c.to.1 };
            if q != next.poly || t != next.from.0 || (pos - next.from.1).abs() > POS_TOL {
                return data(format!("curve {} is not a closed walk at chord {i}", self.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Geometric,
    Algebraic,
}

fn ccw_between(x: f64, from: f64, to: f64, n: f64) -> bool {
    let d = (x - from).rem_euclid(n);
    d > 0.0 && d < (to - from).rem_euclid(n)
}

fn boundary_coord(side: usize, pos: f64) -> f64 {
    side as f64 + pos
}

fn crossings(s: &CombSurface, a: &Curve, b: &Curve, same: bool) -> Result<(i64, i64)> {
    let orient = s.orientation().unwrap_or_else(|| vec![1; s.polygons.len()]);
    let (mut geo, mut alg) = (0, 0);
    for (i, ca) in a.chords.iter().enumerate() {
        for (j, cb) in b.chords.iter().enumerate() {
            if ca.poly != cb.poly || (same && j <= i) {
                continue;
            }
            let n = s.polygons[ca.poly].sides as f64;
            let (a0, a1) = (boundary_coord(ca.from.0, ca.from.1), boundary_coord(ca.to.0, ca.to.1));
            let (b0, b1) = (boundary_coord(cb.from.0, cb.from.1), boundary_coord(cb.to.0, cb.to.1));
            for &x in &[a0, a1] {
                for &y in &[b0, b1] {
                    let d = (x - y).rem_euclid(n);
                    if d < GP_TOL || n - d < GP_TOL {
                        return data(format!(
                            "curves {} and {} share a boundary point in {}",
                            a.name, b.name, s.polygons[ca.poly].label
                        ));
                    }
                }
            }
            let in0 = ccw_between(b0, a0, a1, n);
            let in1 = ccw_between(b1, a0, a1, n);
            if in0 != in1 {
                geo += 1;
                alg += if in0 { orient[ca.poly] } else { -orient[ca.poly] };
            }
        }
    }
    Ok((geo, alg))
}

/// Transverse crossings of two curves. Algebraic signs: +1 when (a′, b′) is an oriented frame.
/// A curve against itself is measured against a parallel pushoff, which is disjoint.
pub fn intersect_curves(s: &CombSurface, a: &Curve, b: &Curve, mode: Mode) -> Result<i64> {
    if a == b {
        return Ok(0);
    }
    let (g, al) = crossings(s, a, b, false)?;
    Ok(match mode {
        Mode::Geometric => g,
        Mode::Algebraic => al,
    })
}

pub fn self_crossings(s: &CombSurface, c: &Curve) -> Result<i64> {
    Ok(crossings(s, c, c, true)?.0)
}

/// Pushes a closed chord walk into the 1-skeleton: each crossing point slides along its
/// edge to the corner that both adjacent polygons agree on.
pub fn curve_chain(s: &CombSurface, cell: &Cellular, c: &Curve) -> Result<Vec<i64>> {
    c.validate(s)?;
    let mut chain = vec![0i64; cell.ne];
    for ch in &c.chords {
        let n = s.polygons[ch.poly].sides;
        let (_, _, tw) = s.partner(ch.poly, ch.to.0).expect("validated");
        let start = (ch.from.0 + 1) % n;
        let stop = if tw { (ch.to.0 + 1) % n } else { ch.to.0 };
        let mut k = start;
        while k != stop {
            let (e, sg) = cell.edge_of[ch.poly][k];
            chain[e] += sg;
            k = (k + 1) % n;
        }
    }
    Ok(chain)
}

/// H₁ of the cellular complex with coordinates for cycles.
#[derive(Debug, Clone)]
pub struct H1Basis {
    pub cellular: Cellular,
    v1_inv: IntMatrix,
    r1: usize,
    ua: IntMatrix,
    ra: usize,
    pub rank: usize,
    pub torsion: Vec<u64>,
}

impl H1Basis {
    pub fn new(s: &CombSurface) -> Result<H1Basis> {
        let cellular = s.cellular();
        let snf1 = smith_normal_form(&cellular.d1);
        let r1 = snf1.invariants.len();
        let z = cellular.ne - r1;
        // boundaries of 2-cells in cycle coordinates
        let w = snf1.v_inv.mul(&cellular.d2);
        let mut a = IntMatrix::zeros(z, cellular.nf);
        for i in 0..cellular.ne {
            for j in 0..cellular.nf {
                if i < r1 {
                    if !w.data[i][j].is_zero() {
                        return Err(Error::Data("∂₁∂₂ ≠ 0 in the cell complex".into()));
                    }
                } else {
                    a.data[i - r1][j] = w.data[i][j].clone();
                }
            }
        }
        let snfa = smith_normal_form(&a);
        let ra = snfa.invariants.len();
        let torsion = snfa.invariants.iter().filter(|d| !d.is_one()).map(|d| d.to_u64().unwrap_or(0)).collect();
        Ok(H1Basis { cellular, v1_inv: snf1.v_inv, r1, ua: snfa.u, ra, rank: z - ra, torsion })
    }

    /// Free coordinates of a 1-cycle.
    pub fn class_of_chain(&self, chain: &[i64]) -> Result<Vec<i64>> {
        let c = IntMatrix::from_columns(&[chain.to_vec()], chain.len());
        if !self.cellular.d1.mul(&c).data.iter().all(|r| r[0].is_zero()) {
            return data("chain is not a cycle");
        }
        let w = self.v1_inv.mul(&c);
        let z = self.cellular.ne - self.r1;
        let mut y = IntMatrix::zeros(z, 1);
        for i in 0..z {
            y.data[i][0] = w.data[self.r1 + i][0].clone();
        }
        let x = self.ua.mul(&y);
        (self.ra..z).map(|i| x.data[i][0].to_i64().ok_or_else(|| Error::Data("class overflows i64".into()))).collect()
    }

    pub fn class_of(&self, s: &CombSurface, c: &Curve) -> Result<Vec<i64>> {
        self.class_of_chain(&curve_chain(s, &self.cellular, c)?)
    }
}

pub fn curve_homology_class(s: &CombSurface, c: &Curve) -> Result<Vec<i64>> {
    H1Basis::new(s)?.class_of(s, c)
}

/// One simple closed curve per non-tree edge of the dual graph; their classes span H₁.
pub fn dual_cycle_curves(s: &CombSurface) -> Vec<Curve> {
    let np = s.polygons.len();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; np]; // (gluing index, parent polygon)
    let mut depth = vec![usize::MAX; np];
    let mut tree = vec![false; s.gluings.len()];
    depth[0] = 0;
    let mut queue = VecDeque::from([0]);
    let mut by_poly: Vec<Vec<usize>> = vec![vec![]; np];
    for (gi, g) in s.gluings.iter().enumerate() {
        by_poly[g.a.0].push(gi);
        by_poly[g.b.0].push(gi);
    }
    while let Some(p) = queue.pop_front() {
        for &gi in &by_poly[p] {
            let g = s.gluings[gi];
            let q = if g.a.0 == p { g.b.0 } else { g.a.0 };
            if depth[q] == usize::MAX {
                depth[q] = depth[p] + 1;
                parent[q] = Some((gi, p));
                tree[gi] = true;
                queue.push_back(q);
            }
        }
    }
    let cotree: Vec<usize> = (0..s.gluings.len()).filter(|&g| !tree[g]).collect();
    let total = cotree.len();
    let slot = |m: usize| 0.5 * (m as f64 + 1.0) / (total as f64 + 1.0) + 0.25;
    let mut out = vec![];
    for (m, &gi) in cotree.iter().enumerate() {
        let g = s.gluings[gi];
        // polygon sequence: a.0 → (tree) → … → b.0, then across g back to a.0
        let (mut x, mut y) = (g.a.0, g.b.0);
        let (mut up, mut down) = (vec![], vec![]); // gluings from x side / y side toward the meet
        while x != y {
            if depth[x] >= depth[y] {
                let (pg, px) = parent[x].expect("non-root");
                up.push(pg);
                x = px;
            } else {
                let (pg, py) = parent[y].expect("non-root");
                down.push(pg);
                y = py;
            }
        }
        // crossing list: start in b.0 having entered through g, walk down to the meet, up to a.0, exit through g
        let mut crossings = vec![];
        crossings.extend(down.iter().copied());
        crossings.extend(up.iter().rev().copied());
        crossings.push(gi);
        let mut chords = vec![];
        let mut cur = g.b.0;
        let mut entry = (g.b.1, side_pos(&g, g.b, slot(m)));
        for &c in &crossings {
            let gc = s.gluings[c];
            let (exit, next) = if gc.a.0 == cur && (gc.b.0 != cur || c == gi) { (gc.a, gc.b) } else { (gc.b, gc.a) };
            let exit_pos = side_pos(&gc, exit, slot(m));
            chords.push(Chord { poly: cur, from: entry, to: (exit.1, exit_pos) });
            cur = next.0;
            entry = (next.1, side_pos(&gc, next, slot(m)));
        }
        out.push(Curve { name: format!("aux{m}"), chords });
    }
    out
}

// point at canonical parameter `t` of gluing g, expressed on `side`
fn side_pos(g: &Gluing, side: (usize, usize), t: f64) -> f64 {
    if side == g.a || g.twisted {
        t
    } else {
        1.0 - t
    }
}

/// Intersection form on the H₁ basis, reconstructed from the algebraic intersections of
/// spanning curves: Cᵀ·Ω·C = I on a full-rank subset, then checked on all pairs.
#[derive(Debug, Clone, Serialize)]
pub struct IntersectionForm {
    pub omega: Vec<Vec<i64>>,
    pub consistency: Check,
}

pub fn intersection_form(s: &CombSurface, basis: &H1Basis) -> Result<IntersectionForm> {
    let curves = dual_cycle_curves(s);
    let r = basis.rank;
    let classes: Vec<Vec<i64>> = curves.iter().map(|c| basis.class_of(s, c)).collect::<Result<_>>()?;
    let mut inter = vec![vec![0i64; curves.len()]; curves.len()];
    for i in 0..curves.len() {
        for j in 0..curves.len() {
            if i != j {
                inter[i][j] = intersect_curves(s, &curves[i], &curves[j], Mode::Algebraic)?;
            }
        }
    }
    if r == 0 {
        return Ok(IntersectionForm { omega: vec![], consistency: Check::below("form_consistency", "", 0.0, 0.5) });
    }
    let mut chosen: Vec<usize> = vec![];
    for l in 0..curves.len() {
        let mut cols: Vec<Vec<i64>> = chosen.iter().map(|&c| classes[c].clone()).collect();
        cols.push(classes[l].clone());
        if crate::homology::rank(&IntMatrix::from_columns(&cols, r)) == cols.len() {
            chosen.push(l);
        }
        if chosen.len() == r {
            break;
        }
    }
    if chosen.len() < r {
        return data("dual cycles do not span H₁");
    }
    let cs: Vec<Vec<i64>> = chosen.iter().map(|&c| classes[c].clone()).collect();
    let a = IntMatrix::from_columns(&cs, r);
    let det = a.det();
    let adj = adjugate(&a);
    let mut is = IntMatrix::zeros(r, r);
    for (i, &ci) in chosen.iter().enumerate() {
        for (j, &cj) in chosen.iter().enumerate() {
            is.data[i][j] = inter[ci][cj].into();
        }
    }
    // Ω = A^{-T} I A^{-1} = adjᵀ I adj / det²
    let y = adj.transpose().mul(&is).mul(&adj);
    let d2 = &det * &det;
    let mut omega = vec![vec![0i64; r]; r];
    for i in 0..r {
        for j in 0..r {
            if !(&y.data[i][j] % &d2).is_zero() {
                return data("intersection form is not integral");
            }
            omega[i][j] = (&y.data[i][j] / &d2).to_i64().ok_or_else(|| Error::Data("form overflows".into()))?;
        }
    }
    let mut worst = 0i64;
    for i in 0..curves.len() {
        for j in 0..curves.len() {
            let p = crate::homology::pairing(&classes[i], &classes[j], &omega);
            worst = worst.max((p - inter[i][j]).abs());
        }
    }
    for i in 0..r {
        for j in 0..r {
            worst = worst.max((omega[i][j] + omega[j][i]).abs());
        }
    }
    let consistency = Check::below("form_consistency", "algebraic intersections of spanning curves", worst as f64, 0.5)
        .with_detail(format!("{} spanning curves, rank {r}", curves.len()));
    Ok(IntersectionForm { omega, consistency })
}

fn adjugate(a: &IntMatrix) -> IntMatrix {
    let n = a.rows;
    let mut adj = IntMatrix::zeros(n, n);
    if n == 1 {
        adj.data[0][0] = One::one();
        return adj;
    }
    for i in 0..n {
        for j in 0..n {
            let mut minor = IntMatrix::zeros(n - 1, n - 1);
            for (ri, r) in (0..n).filter(|&r| r != i).enumerate() {
                for (cj, c) in (0..n).filter(|&c| c != j).enumerate() {
                    minor.data[ri][cj] = a.data[r][c].clone();
                }
            }
            let d = minor.det();
            adj.data[j][i] = if (i + j) % 2 == 0 { d } else { -d };
        }
    }
    adj
}

/// Homology of M with one 2-cell glued along each curve: the chain-level model of E.
pub fn thimble_chain_homology(s: &CombSurface, curves: &[&Curve]) -> Result<HomologyReport> {
    let cell = s.cellular();
    let mut d2 = IntMatrix::zeros(cell.ne, cell.nf + curves.len());
    for i in 0..cell.ne {
        for j in 0..cell.nf {
            d2.data[i][j] = cell.d2.data[i][j].clone();
        }
    }
    for (k, c) in curves.iter().enumerate() {
        for (e, v) in curve_chain(s, &cell, c)?.into_iter().enumerate() {
            d2.data[e][cell.nf + k] = v.into();
        }
    }
    chain_homology(&[cell.nv, cell.ne, cell.nf + curves.len()], &[cell.d1, d2])
}

// ---------------------------------------------------------------------------------------------
// the fiber M = D(T*S¹) ∪ strips

/// Global chirality of the twisted arcs. `Lower` follows transport along the lower half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Chirality {
    #[default]
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellKind {
    Gap,
    /// collar slice next to an attachment point; `right` = on the +θ side
    Collar { point: usize, right: bool },
    /// the slice through the attachment point itself, crossed by L1
    Inner { point: usize },
    Lane { handle: usize, strip: usize, lane: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Zin,
    Zout,
    Plus,
    Minus,
}

/// A cell of the annular neighborhood of L1[j]: inner slices and middle lanes.
#[derive(Debug, Clone, Copy)]
struct RingCell {
    poly: usize,
    zin: usize,
    chir: Chirality,
    /// fiber position of the K₊ sphere (middle lanes)
    k_plus: bool,
}

impl RingCell {
    fn side(&self, role: Role) -> usize {
        let right = match self.chir {
            Chirality::Lower => Role::Minus,
            Chirality::Upper => Role::Plus,
        };
        let off = match role {
            Role::Zin => 0,
            Role::Zout => 2,
            r if r == right => 1,
            _ => 3,
        };
        (self.zin + off) % 4
    }

    fn role(&self, side: usize) -> Role {
        [Role::Zin, Role::Zout, Role::Plus, Role::Minus].into_iter().find(|&r| self.side(r) == side).expect("quad side")
    }

    // transverse coordinate t (positive on the Plus side) on Zin/Zout, along-coordinate z on Plus/Minus
    fn pos(&self, role: Role, coord: f64) -> (usize, f64) {
        let side = self.side(role);
        let off = (side + 4 - self.zin) % 4;
        let flip = if self.chir == Chirality::Lower { -1.0 } else { 1.0 };
        let p = match off {
            0 => (flip * coord + 1.0) / 2.0,
            1 => (coord + 1.0) / 2.0,
            2 => (1.0 - flip * coord) / 2.0,
            _ => (1.0 - coord) / 2.0,
        };
        (side, p)
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceFiber {
    pub data: MorseData2D,
    pub chirality: Chirality,
    pub surface: CombSurface,
    pub curves: Vec<Curve>,
    pub kinds: Vec<CellKind>,
    rings: Vec<Vec<RingCell>>,
    /// annulus quads in +θ order
    annulus: Vec<usize>,
    /// for each attachment point: (position, handle, end)
    points: Vec<(f64, usize, usize)>,
    pub twisted: bool,
}

impl SurfaceFiber {
    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// Vanishing curves in the order L0, L1[1..k], L2.
    pub fn vanishing_curves(&self) -> Vec<&Curve> {
        self.curves.iter().collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.curves.iter().map(|c| c.name.clone()).collect()
    }
}

// core heights of L0 and its pushoff L2 in the annulus, and transverse offset of twisted arcs
const T_L0: f64 = 0.0;
const T_L2: f64 = -0.4;
const T_ARC: f64 = 0.5;
// M₂: along-coordinates where L0' and L2' cross the reglued lane sides
const Z_L0: f64 = 0.3;
const Z_L2: f64 = 0.0;

// L0' crosses a reglued lane side above L2' in annulus height, as L0 lies above L2 along the core
fn lane_z_l0(f: &SurfaceFiber, c: &RingCell, role: Role) -> f64 {
    let (side, p) = c.pos(role, Z_L0);
    match f.surface.partner(c.poly, side) {
        Some((_, t, tw)) if t % 2 == 1 => {
            let q = if tw { p } else { 1.0 - p };
            if radial_t(t, q) > 0.0 {
                Z_L0
            } else {
                -Z_L0
            }
        }
        _ => Z_L0,
    }
}

fn quad(label: String) -> Polygon {
    Polygon { label, sides: 4 }
}

pub fn build_surface_fiber(data: &MorseData2D) -> Result<SurfaceFiber> {
    build_surface_fiber_with(data, Chirality::default())
}

pub fn build_surface_fiber_with(data: &MorseData2D, chirality: Chirality) -> Result<SurfaceFiber> {
    let fiber = build_complex(data, chirality)?;
    let mut fiber = fiber;
    let l2 = route_l2(&fiber)?;
    let mut curves = vec![route_l0(&fiber)?];
    for j in 0..data.k() {
        curves.push(route_l1(&fiber, j)?);
    }
    curves.push(l2);
    fiber.curves = curves;
    Ok(fiber)
}

fn build_complex(data: &MorseData2D, chirality: Chirality) -> Result<SurfaceFiber> {
    data.validate()?;
    let k = data.k();
    let mut points: Vec<(f64, usize, usize)> = vec![];
    for (j, &(a, b)) in data.attachments.iter().enumerate() {
        points.push((a, j, 0));
        points.push((b, j, 1));
    }
    points.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut polygons = vec![];
    let mut kinds = vec![];
    let mut annulus = vec![];
    let mut slice = vec![[0usize; 3]; points.len()]; // Lc, In, Rc per sorted point
    let push = |polygons: &mut Vec<Polygon>, kinds: &mut Vec<CellKind>, label: String, kind: CellKind| {
        polygons.push(quad(label));
        kinds.push(kind);
        polygons.len() - 1
    };
    if k == 0 {
        for i in 0..4 {
            annulus.push(push(&mut polygons, &mut kinds, format!("gap{i}"), CellKind::Gap));
        }
    } else {
        for (i, &(_, j, e)) in points.iter().enumerate() {
            let tag = format!("{}{}", ["a", "b"][e], j + 1);
            annulus.push(push(&mut polygons, &mut kinds, format!("gap{i}"), CellKind::Gap));
            let lc = push(&mut polygons, &mut kinds, format!("Lc_{tag}"), CellKind::Collar { point: i, right: false });
            let inn = push(&mut polygons, &mut kinds, format!("In_{tag}"), CellKind::Inner { point: i });
            let rc = push(&mut polygons, &mut kinds, format!("Rc_{tag}"), CellKind::Collar { point: i, right: true });
            annulus.extend([lc, inn, rc]);
            slice[i] = [lc, inn, rc];
        }
    }
    let mut gluings = vec![];
    let na = annulus.len();
    for i in 0..na {
        gluings.push(Gluing { a: (annulus[i], 1), b: (annulus[(i + 1) % na], 3), twisted: false });
    }
    let sorted_index = |j: usize, e: usize| points.iter().position(|&(_, pj, pe)| pj == j && pe == e).expect("point");
    let mut rings = vec![];
    for j in 0..k {
        let (ia, ib) = (sorted_index(j, 0), sorted_index(j, 1));
        // strip ends: (sorted point, top?) for E1 and E2
        let strips = match data.framings[j] {
            Framing::Reversing => [((ia, true), (ib, true)), ((ia, false), (ib, false))],
            Framing::Preserving => [((ia, true), (ib, false)), ((ib, true), (ia, false))],
        };
        let mut mids = [0usize; 2];
        for (si, &((p1, top1), (p2, top2))) in strips.iter().enumerate() {
            let name = ["A", "B"][si];
            let lanes: Vec<usize> = (0..3)
                .map(|m| {
                    push(
                        &mut polygons,
                        &mut kinds,
                        format!("{name}{}_{m}", j + 1),
                        CellKind::Lane { handle: j, strip: si, lane: m },
                    )
                })
                .collect();
            for m in 0..2 {
                gluings.push(Gluing { a: (lanes[m], 2), b: (lanes[m + 1], 0), twisted: false });
            }
            for m in 0..3 {
                let s1 = if top1 { 2 - m } else { m };
                let s2 = if top2 { m } else { 2 - m };
                gluings.push(Gluing { a: (lanes[m], 3), b: (slice[p1][s1], if top1 { 2 } else { 0 }), twisted: false });
                gluings.push(Gluing { a: (lanes[m], 1), b: (slice[p2][s2], if top2 { 2 } else { 0 }), twisted: false });
            }
            mids[si] = lanes[1];
        }
        let (in_a, in_b) = (slice[ia][1], slice[ib][1]);
        let ring = match data.framings[j] {
            Framing::Reversing => vec![(in_a, 0, false), (mids[0], 3, true), (in_b, 2, false), (mids[1], 1, true)],
            Framing::Preserving => vec![(in_a, 0, false), (mids[0], 3, true), (in_b, 0, false), (mids[1], 3, true)],
        };
        rings.push(ring.into_iter().map(|(poly, zin, k_plus)| RingCell { poly, zin, chir: chirality, k_plus }).collect());
    }
    let surface = CombSurface::new(polygons, gluings)?;
    Ok(SurfaceFiber {
        data: data.clone(),
        chirality,
        surface,
        curves: vec![],
        kinds,
        rings,
        annulus,
        points,
        twisted: false,
    })
}

// annulus quads: radial sides 1 (right, t = −1 + 2p) and 3 (left, t = 1 − 2p)
fn radial_pos(side: usize, t: f64) -> f64 {
    if side == 1 {
        (1.0 + t) / 2.0
    } else {
        (1.0 - t) / 2.0
    }
}

fn radial_t(side: usize, pos: f64) -> f64 {
    if side == 1 {
        2.0 * pos - 1.0
    } else {
        1.0 - 2.0 * pos
    }
}

fn ring_cell(f: &SurfaceFiber, poly: usize) -> Option<RingCell> {
    f.rings.iter().flatten().find(|c| c.poly == poly).copied()
}

type Route<'a> = dyn Fn(usize, usize, f64) -> Result<(usize, f64)> + 'a;

fn walk(s: &CombSurface, name: &str, start: (usize, usize, f64), route: &Route) -> Result<Curve> {
    let (mut poly, mut side, mut pos) = start;
    let mut chords = vec![];
    let limit = 8 * s.polygons.len() + 8;
    loop {
        let (out, out_pos) = route(poly, side, pos)?;
        chords.push(Chord { poly, from: (side, pos), to: (out, out_pos) });
        let Some((q, t, tw)) = s.partner(poly, out) else {
            return data(format!("{name} runs into the boundary at {}", s.polygons[poly].label));
        };
        poly = q;
        side = t;
        pos = if tw { out_pos } else { 1.0 - out_pos };
        if poly == start.0 && side == start.1 && (pos - start.2).abs() < POS_TOL {
            break;
        }
        if chords.len() > limit {
            return data(format!("{name} does not close up"));
        }
    }
    Ok(Curve { name: name.to_string(), chords })
}

fn pass_through(side: usize, pos: f64) -> Result<(usize, f64)> {
    match side {
        1 => Ok((3, radial_pos(3, radial_t(1, pos)))),
        3 => Ok((1, radial_pos(1, radial_t(3, pos)))),
        _ => data("core curve entered an annulus quad through its boundary side"),
    }
}

fn route_l0(f: &SurfaceFiber) -> Result<Curve> {
    let route = |_p: usize, side: usize, pos: f64| pass_through(side, pos);
    walk(&f.surface, "L0", (f.annulus[0], 3, radial_pos(3, T_L0)), &route)
}

fn route_l1(f: &SurfaceFiber, j: usize) -> Result<Curve> {
    let route = |p: usize, side: usize, _pos: f64| {
        let c = ring_cell(f, p).ok_or_else(|| Error::Data("L1 left its ring".into()))?;
        Ok(match c.role(side) {
            Role::Zin => c.pos(Role::Zout, 0.0),
            Role::Zout => c.pos(Role::Zin, 0.0),
            _ => return data("L1 entered a ring cell sideways"),
        })
    };
    let c0 = f.rings[j][0];
    let (side, pos) = c0.pos(Role::Zin, 0.0);
    walk(&f.surface, &format!("L1[{}]", j + 1), (c0.poly, side, pos), &route)
}

// L2 in M: core pushoff, twisted through the ring around each K₊ cell
fn l2_route(f: &SurfaceFiber) -> impl Fn(usize, usize, f64) -> Result<(usize, f64)> + '_ {
    move |p: usize, side: usize, pos: f64| match ring_cell(f, p) {
        None => pass_through(side, pos),
        Some(c) if !c.k_plus => Ok(match c.role(side) {
            Role::Minus => c.pos(Role::Zout, -T_ARC),
            Role::Plus => c.pos(Role::Zin, T_ARC),
            Role::Zout => {
                let s = c.side(Role::Minus);
                (s, radial_pos(s, T_L2))
            }
            Role::Zin => {
                let s = c.side(Role::Plus);
                (s, radial_pos(s, T_L2))
            }
        }),
        Some(c) => Ok(match c.role(side) {
            Role::Zin => c.pos(Role::Zout, T_ARC),
            Role::Zout => c.pos(Role::Zin, -T_ARC),
            _ => return data("L2 entered a K+ cell sideways"),
        }),
    }
}

fn route_l2(f: &SurfaceFiber) -> Result<Curve> {
    let route = l2_route(f);
    let curve = walk(&f.surface, "L2", (f.annulus[0], 3, radial_pos(3, T_L2)), &route)?;
    let visited = f.rings.iter().flatten().filter(|c| c.k_plus).all(|c| curve.chords.iter().any(|ch| ch.poly == c.poly));
    if !visited {
        return data(format!(
            "surgered curve L2 has {} components; the level set above the index-1 handles must be connected",
            surgered_components(f)?
        ));
    }
    Ok(curve)
}

/// Number of circles in the surgered curve L0 # (∪ L1[j]).
pub fn surgered_component_count(data: &MorseData2D, chirality: Chirality) -> Result<usize> {
    surgered_components(&build_complex(data, chirality)?)
}

fn surgered_components(f: &SurfaceFiber) -> Result<usize> {
    let route = l2_route(f);
    let first = walk(&f.surface, "L2", (f.annulus[0], 3, radial_pos(3, T_L2)), &route)?;
    let mut covered: Vec<usize> = first.chords.iter().map(|ch| ch.poly).collect();
    let mut count = 1;
    // every component of L2 runs through at least one K+ cell
    for c in f.rings.iter().flatten().filter(|c| c.k_plus) {
        if covered.contains(&c.poly) {
            continue;
        }
        let (s, p) = c.pos(Role::Zin, -T_ARC);
        let comp = walk(&f.surface, "L2", (c.poly, s, p), &route)?;
        covered.extend(comp.chords.iter().map(|ch| ch.poly));
        count += 1;
    }
    Ok(count)
}

// ---------------------------------------------------------------------------------------------
// the twisted fiber M₂ = T_{π/2}(M)

#[derive(Debug, Clone, Serialize)]
pub struct TwistCorrespondence {
    /// (name in M₂, name in M)
    pub name_map: Vec<(String, String)>,
    pub geometric_m: Vec<Vec<i64>>,
    pub geometric_m2: Vec<Vec<i64>>,
    pub check: Check,
    #[serde(skip)]
    pub twisted: SurfaceFiber,
}

/// Reglues the ring around each L1[j] by a quarter turn: the Plus side of ring cell i is
/// attached where cell i+1's Plus side was, the Minus side where cell i−1's was.
pub fn twisted_fiber(f: &SurfaceFiber) -> Result<SurfaceFiber> {
    let s = &f.surface;
    let mut moved: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for ring in &f.rings {
        let n = ring.len();
        let outer = |c: &RingCell, r: Role| {
            let (q, t, _) = s.partner(c.poly, c.side(r)).expect("ring sides are glued");
            (q, t)
        };
        for (i, c) in ring.iter().enumerate() {
            moved.insert((c.poly, c.side(Role::Plus)), outer(&ring[(i + 1) % n], Role::Plus));
            moved.insert((c.poly, c.side(Role::Minus)), outer(&ring[(i + n - 1) % n], Role::Minus));
        }
    }
    let mut gluings: Vec<Gluing> = s
        .gluings
        .iter()
        .filter(|g| !moved.contains_key(&g.a) && !moved.contains_key(&g.b))
        .copied()
        .collect();
    for (&a, &b) in &moved {
        gluings.push(Gluing { a, b, twisted: false });
    }
    let surface = CombSurface::new(s.polygons.clone(), gluings)?;
    let mut m2 = SurfaceFiber { surface, curves: vec![], twisted: true, ..f.clone() };
    let mut curves = vec![route_l0_twisted(&m2)?];
    for j in 0..f.data.k() {
        let mut c = route_l1(&m2, j)?;
        c.name = format!("L1[{}]'", j + 1);
        curves.push(c);
    }
    curves.push(route_l2_twisted(&m2)?);
    m2.curves = curves;
    Ok(m2)
}

fn collar_far_side(kind: CellKind) -> Option<usize> {
    match kind {
        CellKind::Collar { right: false, .. } => Some(3),
        CellKind::Collar { right: true, .. } => Some(1),
        _ => None,
    }
}

// collar exit toward the reglued ring: the crossing point is fixed by the lane coordinate z
fn collar_route(
    f: &SurfaceFiber,
    p: usize,
    side: usize,
    far: usize,
    lane_z: &dyn Fn(&RingCell, Role) -> f64,
    core: f64,
) -> Result<(usize, f64)> {
    let near = 4 - far;
    if side != far {
        return Ok((far, radial_pos(far, core)));
    }
    let (q, t, tw) = f.surface.partner(p, near).expect("collars are glued on both radial sides");
    let pos = match ring_cell(f, q) {
        Some(c) => c.pos(c.role(t), lane_z(&c, c.role(t))).1,
        None => return data("collar is not attached to the ring"),
    };
    Ok((near, if tw { pos } else { 1.0 - pos }))
}

fn route_l2_twisted(f: &SurfaceFiber) -> Result<Curve> {
    let route = |p: usize, side: usize, pos: f64| {
        if let Some(far) = collar_far_side(f.kinds[p]) {
            return collar_route(f, p, side, far, &|_, _| Z_L2, T_L2);
        }
        match ring_cell(f, p) {
            None => pass_through(side, pos),
            Some(c) if c.k_plus => Ok(match c.role(side) {
                Role::Minus => c.pos(Role::Plus, Z_L2),
                Role::Plus => c.pos(Role::Minus, Z_L2),
                _ => return data("L2' entered a K+ cell along L1"),
            }),
            Some(_) => data("L2' entered a K- cell"),
        }
    };
    walk(&f.surface, "L2'", (f.annulus[0], 3, radial_pos(3, T_L2)), &route)
}

fn route_l0_twisted(f: &SurfaceFiber) -> Result<Curve> {
    let route = |p: usize, side: usize, pos: f64| {
        if let Some(far) = collar_far_side(f.kinds[p]) {
            return collar_route(f, p, side, far, &|c, r| lane_z_l0(f, c, r), T_L0);
        }
        match ring_cell(f, p) {
            None => pass_through(side, pos),
            Some(c) if c.k_plus => Ok(match c.role(side) {
                Role::Plus => c.pos(Role::Zout, T_ARC),
                Role::Zout => c.pos(Role::Plus, lane_z_l0(f, &c, Role::Plus)),
                Role::Zin => c.pos(Role::Minus, lane_z_l0(f, &c, Role::Minus)),
                Role::Minus => c.pos(Role::Zin, -T_ARC),
            }),
            Some(c) => Ok(match c.role(side) {
                Role::Zin => c.pos(Role::Zout, -T_ARC),
                Role::Zout => c.pos(Role::Zin, T_ARC),
                _ => return data("L0' entered a K- cell sideways"),
            }),
        }
    };
    walk(&f.surface, "L0'", (f.annulus[0], 3, radial_pos(3, T_L0)), &route)
}

pub fn geometric_matrix(s: &CombSurface, curves: &[&Curve]) -> Result<Vec<Vec<i64>>> {
    let n = curves.len();
    let mut m = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[i][j] = intersect_curves(s, curves[i], curves[j], Mode::Geometric)?;
            }
        }
    }
    Ok(m)
}

pub fn half_twist_correspondence(f: &SurfaceFiber) -> Result<TwistCorrespondence> {
    let m2 = twisted_fiber(f)?;
    let name_map: Vec<(String, String)> = m2.names().into_iter().zip(f.names()).collect();
    let geometric_m = geometric_matrix(&f.surface, &f.vanishing_curves())?;
    let geometric_m2 = geometric_matrix(&m2.surface, &m2.vanishing_curves())?;
    let same_topology = euler_characteristic(&m2.surface) == euler_characteristic(&f.surface)
        && boundary_components(&m2.surface) == boundary_components(&f.surface)
        && m2.surface.is_orientable();
    let pass = same_topology && geometric_m == geometric_m2;
    let check = Check::flag(
        "half_twist_intersections",
        "tau(L0') = L0, tau(L2') = L2",
        pass,
        format!("M: {geometric_m:?}, M2: {geometric_m2:?}"),
    );
    Ok(TwistCorrespondence { name_map, geometric_m, geometric_m2, check, twisted: m2 })
}

// ---------------------------------------------------------------------------------------------
// handle decomposition of N

#[derive(Debug, Clone, Serialize)]
pub struct Piece {
    pub name: String,
    pub euler: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Overlap {
    pub pieces: Vec<String>,
    pub euler: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MilnorDecomposition {
    pub pieces: Vec<Piece>,
    pub overlaps: Vec<Overlap>,
    pub euler: i64,
    pub expected: i64,
    pub check: Check,
}

/// N_0 (disk), N_1^loc per handle (disk), N_1^triv (2k product disks), N_top (disk),
/// with their arc and corner overlaps.
pub fn milnor_decomposition(data: &MorseData2D) -> Result<MilnorDecomposition> {
    data.validate()?;
    let k = data.k() as i64;
    let mut pieces = vec![Piece { name: "N_0".into(), euler: 1 }];
    let mut overlaps = vec![];
    let ov = |names: &[&str], euler: i64| Overlap { pieces: names.iter().map(|s| s.to_string()).collect(), euler };
    if k == 0 {
        pieces.push(Piece { name: "N_top".into(), euler: 1 });
        overlaps.push(ov(&["N_0", "N_top"], 0));
    } else {
        for j in 1..=k {
            pieces.push(Piece { name: format!("N_1^loc[{j}]"), euler: 1 });
        }
        // level circle minus 2k arcs, times an interval
        pieces.push(Piece { name: "N_1^triv".into(), euler: 2 * k });
        pieces.push(Piece { name: "N_top".into(), euler: 1 });
        overlaps.push(ov(&["N_0", "N_1^triv"], 2 * k));
        overlaps.push(ov(&["N_top", "N_1^triv"], 2 * k));
        for j in 1..=k {
            let loc = format!("N_1^loc[{j}]");
            overlaps.push(ov(&["N_0", &loc], 2));
            overlaps.push(ov(&["N_top", &loc], 2));
            overlaps.push(ov(&[&loc, "N_1^triv"], 4));
            overlaps.push(ov(&["N_0", &loc, "N_1^triv"], 4));
            overlaps.push(ov(&["N_top", &loc, "N_1^triv"], 4));
        }
    }
    let mut euler: i64 = pieces.iter().map(|p| p.euler).sum();
    for o in &overlaps {
        let sign = if o.pieces.len() % 2 == 0 { -1 } else { 1 };
        euler += sign * o.euler;
    }
    // even-index minus odd-index critical points
    let expected = 2 - k;
    let check = Check::below("milnor_inclusion_exclusion", "N_0, N^loc, N^triv, N_top", (euler - expected).abs() as f64, 0.5);
    Ok(MilnorDecomposition { pieces, overlaps, euler, expected, check })
}

// ---------------------------------------------------------------------------------------------
// SVG

const R_IN: f64 = 120.0;
const R_OUT: f64 = 180.0;
const CX: f64 = 300.0;
const CY: f64 = 300.0;

fn curve_color(name: &str) -> &'static str {
    if name.starts_with("L0") {
        "#1f4fd1"
    } else if name.starts_with("L1") {
        "#1b8f3a"
    } else {
        "#d12a1f"
    }
}

fn polar(theta: f64, r: f64) -> (f64, f64) {
    let a = 2.0 * std::f64::consts::PI * theta;
    (CX + r * a.cos(), CY - r * a.sin())
}

impl SurfaceFiber {
    // θ-extent of each annulus quad
    fn annulus_extent(&self) -> Vec<(f64, f64)> {
        let na = self.annulus.len();
        if self.points.is_empty() {
            return (0..na).map(|i| (i as f64 / na as f64, (i + 1) as f64 / na as f64)).collect();
        }
        let pos: Vec<f64> = self.points.iter().map(|p| p.0).collect();
        let mut min_gap: f64 = 1.0;
        for i in 0..pos.len() {
            let next = if i + 1 < pos.len() { pos[i + 1] } else { pos[0] + 1.0 };
            min_gap = min_gap.min(next - pos[i]);
        }
        let w = (min_gap / 8.0).min(0.02);
        let mut out = vec![];
        for (i, &p) in pos.iter().enumerate() {
            let prev = if i == 0 { pos[pos.len() - 1] - 1.0 } else { pos[i - 1] };
            out.push((prev + 3.0 * w, p - 3.0 * w));
            out.push((p - 3.0 * w, p - w));
            out.push((p - w, p + w));
            out.push((p + w, p + 3.0 * w));
        }
        out
    }

    fn corners(&self) -> Vec<Vec<(f64, f64)>> {
        let mut corners = vec![vec![]; self.surface.polygons.len()];
        let ext = self.annulus_extent();
        for (i, &p) in self.annulus.iter().enumerate() {
            let (l, r) = ext[i];
            corners[p] = vec![polar(l, R_IN), polar(r, R_IN), polar(r, R_OUT), polar(l, R_OUT)];
        }
        // lanes: corners copied from the glued annulus sides
        for (p, kind) in self.kinds.iter().enumerate() {
            if let CellKind::Lane { .. } = kind {
                let end = |side: usize| {
                    let (q, t, _) = self.surface.partner(p, side).expect("lane ends are glued");
                    let c = &corners[q];
                    // lane side runs opposite to the annulus side it is glued to
                    (c[(t + 1) % 4], c[t])
                };
                let (e1_start, e1_end) = end(3); // lane side 3 runs w3 → w0
                let (e2_start, e2_end) = end(1); // lane side 1 runs w1 → w2
                corners[p] = vec![e1_end, e2_start, e2_end, e1_start];
            }
        }
        corners
    }

    fn side_point(&self, corners: &[Vec<(f64, f64)>], p: usize, side: usize, pos: f64) -> (f64, f64) {
        let c = &corners[p];
        let (a, b) = (c[side], c[(side + 1) % c.len()]);
        (a.0 + pos * (b.0 - a.0), a.1 + pos * (b.1 - a.1))
    }
}

fn lane_bulge(corners: &[(f64, f64)]) -> (f64, f64) {
    let mx = corners.iter().map(|c| c.0).sum::<f64>() / 4.0;
    let my = corners.iter().map(|c| c.1).sum::<f64>() / 4.0;
    let (dx, dy) = (mx - CX, my - CY);
    let r = (dx * dx + dy * dy).sqrt().max(1.0);
    let target = if r > (R_IN + R_OUT) / 2.0 - 20.0 { R_OUT + 110.0 } else { 30.0 };
    (CX + dx / r * target, CY + dy / r * target)
}

/// Deterministic SVG of the fiber: annulus quads, strip lanes bowed off the annulus, curves.
pub fn render_svg(f: &SurfaceFiber) -> String {
    let corners = f.corners();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="600" viewBox="0 0 600 600">"#);
    let _ = writeln!(out, r##"<rect width="600" height="600" fill="#ffffff"/>"##);
    let bulges: Vec<Option<(f64, f64)>> = f
        .kinds
        .iter()
        .enumerate()
        .map(|(p, k)| matches!(k, CellKind::Lane { .. }).then(|| lane_bulge(&corners[p])))
        .collect();
    for (p, c) in corners.iter().enumerate() {
        let path = match bulges[p] {
            None => format!(
                "M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z",
                c[0].0, c[0].1, c[1].0, c[1].1, c[2].0, c[2].1, c[3].0, c[3].1
            ),
            Some(q) => format!(
                "M {:.2} {:.2} Q {:.2} {:.2} {:.2} {:.2} L {:.2} {:.2} Q {:.2} {:.2} {:.2} {:.2} Z",
                c[0].0, c[0].1, q.0, q.1, c[1].0, c[1].1, c[2].0, c[2].1, q.0, q.1, c[3].0, c[3].1
            ),
        };
        let _ = writeln!(
            out,
            r##"<path d="{path}" fill="#f2f2f2" stroke="#9a9a9a" stroke-width="0.6"><title>{}</title></path>"##,
            f.surface.polygons[p].label
        );
    }
    for c in &f.curves {
        let mut d = String::new();
        for ch in &c.chords {
            let a = f.side_point(&corners, ch.poly, ch.from.0, ch.from.1);
            let b = f.side_point(&corners, ch.poly, ch.to.0, ch.to.1);
            match bulges[ch.poly] {
                Some(q) if ch.from.0 % 2 == 1 && ch.to.0 % 2 == 1 => {
                    let _ = write!(d, "M {:.2} {:.2} Q {:.2} {:.2} {:.2} {:.2} ", a.0, a.1, q.0, q.1, b.0, b.1);
                }
                _ => {
                    let _ = write!(d, "M {:.2} {:.2} L {:.2} {:.2} ", a.0, a.1, b.0, b.1);
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="2"><title>{}</title></path>"#,
            d.trim_end(),
            curve_color(&c.name),
            c.name
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Summary of the structural checks on a built fiber.
pub fn fiber_checks(f: &SurfaceFiber) -> Result<Vec<Check>> {
    let s = &f.surface;
    let k = f.data.k() as i64;
    let chi = euler_characteristic(s);
    let mut checks = vec![
        Check::below("fiber_euler", "chi(M) = -2k", (chi + 2 * k).abs() as f64, 0.5).with_detail(format!("chi = {chi}")),
        Check::flag("fiber_orientable", "fibers are symplectic", s.is_orientable(), ""),
        Check::flag(
            "fiber_genus",
            "chi = 2 - 2g - b",
            genus(s).is_some(),
            format!("b = {}, g = {:?}", boundary_components(s), genus(s)),
        ),
        Check::below(
            "lefschetz_count",
            "chi(M) + #crit = chi(N)",
            (chi + f.data.critical_points() as i64 - (2 - k)).abs() as f64,
            0.5,
        ),
    ];
    let mut simple = true;
    for c in &f.curves {
        c.validate(s)?;
        simple &= self_crossings(s, c)? == 0;
    }
    checks.push(Check::flag("curves_simple", "vanishing curves are embedded", simple, ""));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    fn rp2() -> MorseData2D {
        MorseData2D { attachments: vec![(0.1, 0.6)], framings: vec![Framing::Reversing] }
    }

    fn torus() -> MorseData2D {
        MorseData2D { attachments: vec![(0.1, 0.6), (0.35, 0.85)], framings: vec![Framing::Preserving; 2] }
    }

    fn names(f: &SurfaceFiber) -> Vec<&str> {
        f.curves.iter().map(|c| c.name.as_str()).collect()
    }

    #[test]
    fn annulus_case() {
        let f = build_surface_fiber(&MorseData2D::two_values()).unwrap();
        assert_eq!(euler_characteristic(&f.surface), 0);
        assert_eq!(boundary_components(&f.surface), 2);
        assert!(f.surface.is_orientable());
        assert_eq!(names(&f), vec!["L0", "L2"]);
        let (l0, l2) = (f.curve("L0").unwrap(), f.curve("L2").unwrap());
        assert_eq!(intersect_curves(&f.surface, l0, l2, Mode::Algebraic).unwrap(), 0);
        assert_eq!(intersect_curves(&f.surface, l0, l2, Mode::Geometric).unwrap(), 0);
        let h = H1Basis::new(&f.surface).unwrap();
        assert_eq!(h.rank, 1);
        let c0 = h.class_of(&f.surface, l0).unwrap();
        assert_eq!(c0.iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![1]);
        assert_eq!(h.class_of(&f.surface, l2).unwrap(), c0);
    }

    #[test]
    fn euler_characteristic_per_handle() {
        for (d, chi) in [(rp2(), -2), (torus(), -4)] {
            let f = build_surface_fiber(&d).unwrap();
            assert_eq!(euler_characteristic(&f.surface), chi);
            assert!(f.surface.is_orientable());
            assert!(genus(&f.surface).is_some());
            for c in fiber_checks(&f).unwrap() {
                assert!(c.pass, "{c:?}");
            }
        }
    }

    #[test]
    fn disconnected_complex_rejected() {
        let r = CombSurface::new(vec![quad("a".into()), quad("b".into())], vec![]);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn annulus_from_one_quad() {
        let s = CombSurface::new(vec![quad("q".into())], vec![Gluing { a: (0, 1), b: (0, 3), twisted: false }]).unwrap();
        assert_eq!(euler_characteristic(&s), 0);
        assert_eq!(boundary_components(&s), 2);
        assert!(s.is_orientable());
        let m = CombSurface::new(vec![quad("q".into())], vec![Gluing { a: (0, 1), b: (0, 3), twisted: true }]).unwrap();
        assert!(!m.is_orientable());
        assert_eq!(boundary_components(&m), 1);
    }

    #[test]
    fn intersection_counts() {
        for d in [rp2(), torus()] {
            let f = build_surface_fiber(&d).unwrap();
            let s = &f.surface;
            let l0 = f.curve("L0").unwrap();
            let l2 = f.curve("L2").unwrap();
            for j in 1..=d.k() {
                let l1 = f.curve(&format!("L1[{j}]")).unwrap();
                assert_eq!(intersect_curves(s, l0, l1, Mode::Geometric).unwrap(), 2);
                assert_eq!(intersect_curves(s, l2, l1, Mode::Geometric).unwrap(), 2);
            }
            if d.k() == 2 {
                let (a, b) = (f.curve("L1[1]").unwrap(), f.curve("L1[2]").unwrap());
                assert_eq!(intersect_curves(s, a, b, Mode::Geometric).unwrap(), 0);
            }
            assert_eq!(intersect_curves(s, l0, l2, Mode::Geometric).unwrap(), 2 * d.k() as i64);
            let all = f.vanishing_curves();
            for a in &all {
                for b in &all {
                    let g1 = intersect_curves(s, a, b, Mode::Geometric).unwrap();
                    let g2 = intersect_curves(s, b, a, Mode::Geometric).unwrap();
                    let a1 = intersect_curves(s, a, b, Mode::Algebraic).unwrap();
                    let a2 = intersect_curves(s, b, a, Mode::Algebraic).unwrap();
                    assert_eq!(g1, g2);
                    if a.name != b.name {
                        assert_eq!(a1, -a2);
                    }
                }
            }
        }
    }

    #[test]
    fn surgery_component_counts() {
        let one = MorseData2D { attachments: vec![(0.1, 0.6)], framings: vec![Framing::Preserving] };
        assert_eq!(surgered_component_count(&one, Chirality::Lower).unwrap(), 2);
        assert!(matches!(build_surface_fiber(&one), Err(Error::Data(_))));
        assert_eq!(surgered_component_count(&rp2(), Chirality::Lower).unwrap(), 1);
        assert_eq!(surgered_component_count(&torus(), Chirality::Upper).unwrap(), 1);
        let nested = MorseData2D { attachments: vec![(0.1, 0.6), (0.2, 0.5)], framings: vec![Framing::Preserving; 2] };
        assert_eq!(surgered_component_count(&nested, Chirality::Lower).unwrap(), 3);
    }

    #[test]
    fn intersection_form_matches_direct_counts() {
        for d in [MorseData2D::two_values(), rp2(), torus()] {
            let f = build_surface_fiber(&d).unwrap();
            let s = &f.surface;
            let h = H1Basis::new(s).unwrap();
            assert_eq!(h.rank as i64, 1 - euler_characteristic(s));
            let form = intersection_form(s, &h).unwrap();
            assert!(form.consistency.pass, "{:?}", form.consistency);
            let curves = f.vanishing_curves();
            for a in &curves {
                for b in &curves {
                    if a.name == b.name {
                        continue;
                    }
                    let ca = h.class_of(s, a).unwrap();
                    let cb = h.class_of(s, b).unwrap();
                    assert_eq!(
                        crate::homology::pairing(&ca, &cb, &form.omega),
                        intersect_curves(s, a, b, Mode::Algebraic).unwrap(),
                        "{} {}",
                        a.name,
                        b.name
                    );
                }
            }
        }
    }

    #[test]
    fn thimbles_give_homology_of_n() {
        use crate::homology::{morse_homology_of_n, MorseInput};
        for d in [MorseData2D::two_values(), rp2(), torus()] {
            let f = build_surface_fiber(&d).unwrap();
            let e = thimble_chain_homology(&f.surface, &f.vanishing_curves()).unwrap().trimmed();
            let n = morse_homology_of_n(&MorseInput::Surface(d.clone())).unwrap().trimmed();
            assert_eq!(e, n, "{d:?}");
        }
    }

    #[test]
    fn surgered_class_identity() {
        let f = build_surface_fiber(&torus()).unwrap();
        let h = H1Basis::new(&f.surface).unwrap();
        let c = |n: &str| h.class_of(&f.surface, f.curve(n).unwrap()).unwrap();
        let (l0, l2, a, b) = (c("L0"), c("L2"), c("L1[1]"), c("L1[2]"));
        let found = [(1, 1), (1, -1), (-1, 1), (-1, -1)].iter().any(|&(e1, e2)| {
            (0..l0.len()).all(|i| l2[i] == l0[i] + e1 * a[i] + e2 * b[i])
                || (0..l0.len()).all(|i| -l2[i] == l0[i] + e1 * a[i] + e2 * b[i])
        });
        assert!(found, "L0 {l0:?} L1 {a:?} {b:?} L2 {l2:?}");
    }

    #[test]
    fn rp2_classes_span_index_two() {
        let f = build_surface_fiber(&rp2()).unwrap();
        let h = H1Basis::new(&f.surface).unwrap();
        let cols: Vec<Vec<i64>> =
            f.vanishing_curves().iter().map(|c| h.class_of(&f.surface, c).unwrap()).collect();
        let m = IntMatrix::from_columns(&cols, h.rank);
        assert_eq!(m.det().abs(), 2.into());
    }

    #[test]
    fn half_twist_preserves_intersections() {
        for d in [MorseData2D::two_values(), rp2(), torus()] {
            for chir in [Chirality::Lower, Chirality::Upper] {
                let f = build_surface_fiber_with(&d, chir).unwrap();
                let t = half_twist_correspondence(&f).unwrap();
                assert!(t.check.pass, "{d:?} {chir:?}: {}", t.check.detail);
                assert_eq!(t.name_map.last().unwrap(), &("L2'".to_string(), "L2".to_string()));
                for c in &t.twisted.curves {
                    assert_eq!(self_crossings(&t.twisted.surface, c).unwrap(), 0, "{}", c.name);
                }
            }
        }
    }

    #[test]
    fn milnor_pieces() {
        assert_eq!(milnor_decomposition(&rp2()).unwrap().euler, 1);
        assert_eq!(milnor_decomposition(&torus()).unwrap().euler, 0);
        let s2 = milnor_decomposition(&MorseData2D::two_values()).unwrap();
        assert_eq!(s2.euler, 2);
        assert_eq!(s2.pieces.len(), 2);
    }

    #[test]
    fn svg_is_deterministic() {
        let f = build_surface_fiber(&torus()).unwrap();
        let a = render_svg(&f);
        assert_eq!(a, render_svg(&build_surface_fiber(&torus()).unwrap()));
        assert!(a.contains("#d12a1f") && a.contains("#1b8f3a") && a.contains("#1f4fd1"));
    }
}
