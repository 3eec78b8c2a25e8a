//! Conforming multipatch domains with `C^0` gluing, and the overlapping
//! additive Schwarz preconditioner whose subdomains are pairs of patches
//! sharing an interface.

use crate::assembly::{assemble_load_on, assemble_stiffness_on, increment};
use crate::bspline::{KnotVector, SplineSpace1D};
use crate::envelope::EnvelopeCholesky;
use crate::error::{Error, Result};
use crate::fd::FdPreconditioner;
use crate::geometry::{AffineBox, CoefficientField, GeometryMap};
use crate::kronecker::KroneckerSum;
use crate::pcg::LinearOperator;
use crate::sparse::SparseMatrix;

/// A face (3D) or edge (2D) of the parametric cube: `zeta[dir] = 0` or `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Side {
    pub dir: usize,
    pub high: bool,
}

impl Side {
    pub const fn low(dir: usize) -> Self {
        Self { dir, high: false }
    }
    pub const fn high(dir: usize) -> Self {
        Self { dir, high: true }
    }
}

pub struct Patch {
    pub spaces: Vec<SplineSpace1D>,
    pub map: Box<dyn GeometryMap>,
}

impl Patch {
    pub fn new(spaces: Vec<SplineSpace1D>, map: Box<dyn GeometryMap>) -> Result<Self> {
        if spaces.len() != map.dim() || !(2..=3).contains(&spaces.len()) {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                found: spaces.len(),
            });
        }
        Ok(Self { spaces, map })
    }

    fn full_dims(&self) -> Vec<usize> {
        self.spaces.iter().map(SplineSpace1D::m).collect()
    }
}

impl std::fmt::Debug for Patch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Patch").field("spaces", &self.spaces).finish_non_exhaustive()
    }
}

/// Side `side_a` of patch `a` glued to side `side_b` of patch `b`. The
/// tangential directions of both sides are paired in increasing order;
/// `flip[t]` reverses the `t`-th pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub a: usize,
    pub side_a: Side,
    pub b: usize,
    pub side_b: Side,
    pub flip: Vec<bool>,
}

impl Interface {
    pub fn aligned(a: usize, side_a: Side, b: usize, side_b: Side, dim: usize) -> Self {
        Self {
            a,
            side_a,
            b,
            side_b,
            flip: vec![false; dim - 1],
        }
    }
}

fn tangential(dim: usize, normal: usize) -> Vec<usize> {
    (0..dim).filter(|&l| l != normal).collect()
}

fn flat(multi: &[usize], dims: &[usize]) -> usize {
    multi.iter().zip(dims).fold(0, |acc, (&i, &n)| acc * n + i)
}

fn reversed(k: &KnotVector) -> Result<KnotVector> {
    KnotVector::new(k.degree(), k.knots().iter().rev().map(|t| 1.0 - t).collect())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Debug)]
pub struct MultiPatchDomain {
    patches: Vec<Patch>,
    interfaces: Vec<Interface>,
    /// Per patch, full-space tensor index -> global dof (`None` on the
    /// Dirichlet boundary).
    local_to_global: Vec<Vec<Option<usize>>>,
    num_dofs: usize,
}

impl MultiPatchDomain {
    pub fn new(patches: Vec<Patch>, interfaces: Vec<Interface>) -> Result<Self> {
        let dim = patches
            .first()
            .ok_or_else(|| Error::InvalidArgument("a domain needs at least one patch".into()))?
            .spaces
            .len();
        if patches.iter().any(|p| p.spaces.len() != dim) {
            return Err(Error::InvalidArgument("patches of mixed dimension".into()));
        }
        for (i, itf) in interfaces.iter().enumerate() {
            check_interface(&patches, itf, dim).map_err(|e| match e {
                Error::Nonconforming(msg) => Error::Nonconforming(format!("interface {i}: {msg}")),
                e => e,
            })?;
        }
        let offsets: Vec<usize> = patches
            .iter()
            .scan(0, |acc, p| {
                let o = *acc;
                *acc += p.full_dims().iter().product::<usize>();
                Some(o)
            })
            .collect();
        let total = offsets.last().unwrap() + patches.last().unwrap().full_dims().iter().product::<usize>();
        let mut uf = UnionFind((0..total).collect());
        // sides that are glued; every other side carries the Dirichlet condition
        let mut glued: Vec<Vec<Side>> = vec![Vec::new(); patches.len()];
        for itf in &interfaces {
            glued[itf.a].push(itf.side_a);
            glued[itf.b].push(itf.side_b);
            let (pa, pb) = (&patches[itf.a], &patches[itf.b]);
            let (da, db) = (pa.full_dims(), pb.full_dims());
            let ta = tangential(dim, itf.side_a.dir);
            let tb = tangential(dim, itf.side_b.dir);
            let tdims: Vec<usize> = ta.iter().map(|&l| da[l]).collect();
            let mut t = vec![0usize; dim - 1];
            let mut ia = vec![0usize; dim];
            let mut ib = vec![0usize; dim];
            for _ in 0..tdims.iter().product::<usize>() {
                ia[itf.side_a.dir] = if itf.side_a.high { da[itf.side_a.dir] - 1 } else { 0 };
                ib[itf.side_b.dir] = if itf.side_b.high { db[itf.side_b.dir] - 1 } else { 0 };
                for (s, (&la, &lb)) in ta.iter().zip(&tb).enumerate() {
                    ia[la] = t[s];
                    ib[lb] = if itf.flip[s] { db[lb] - 1 - t[s] } else { t[s] };
                }
                uf.union(offsets[itf.a] + flat(&ia, &da), offsets[itf.b] + flat(&ib, &db));
                increment(&mut t, &tdims);
            }
        }
        let mut dirichlet = vec![false; total];
        for (pi, p) in patches.iter().enumerate() {
            let dims = p.full_dims();
            let mut multi = vec![0usize; dim];
            for k in 0..dims.iter().product::<usize>() {
                let on_boundary = (0..dim).any(|l| {
                    let side = match multi[l] {
                        0 => Some(Side::low(l)),
                        i if i == dims[l] - 1 => Some(Side::high(l)),
                        _ => None,
                    };
                    side.is_some_and(|s| !glued[pi].contains(&s))
                });
                if on_boundary {
                    let r = uf.find(offsets[pi] + k);
                    dirichlet[r] = true;
                }
                increment(&mut multi, &dims);
            }
        }
        let mut number = vec![usize::MAX; total];
        let mut next = 0;
        let mut local_to_global = Vec::with_capacity(patches.len());
        for (pi, p) in patches.iter().enumerate() {
            let len: usize = p.full_dims().iter().product();
            let mut map = Vec::with_capacity(len);
            for k in 0..len {
                let r = uf.find(offsets[pi] + k);
                if dirichlet[r] {
                    map.push(None);
                    continue;
                }
                if number[r] == usize::MAX {
                    number[r] = next;
                    next += 1;
                }
                map.push(Some(number[r]));
            }
            local_to_global.push(map);
        }
        Ok(Self {
            patches,
            interfaces,
            local_to_global,
            num_dofs: next,
        })
    }

    pub fn single(patch: Patch) -> Result<Self> {
        Self::new(vec![patch], Vec::new())
    }

    /// Three unit squares at `(0,0)`, `(1,0)`, `(0,1)`, each with `elements`
    /// uniform elements of degree `p` per direction.
    pub fn l_shape(p: usize, elements: usize) -> Result<Self> {
        let s = SplineSpace1D::uniform(p, elements)?;
        let patch = |x: f64, y: f64| -> Result<Patch> {
            Patch::new(vec![s.clone(), s.clone()], Box::new(AffineBox::new(vec![x, y], vec![1.0, 1.0])?))
        };
        Self::new(
            vec![patch(0.0, 0.0)?, patch(1.0, 0.0)?, patch(0.0, 1.0)?],
            vec![
                Interface::aligned(0, Side::high(0), 1, Side::low(0), 2),
                Interface::aligned(0, Side::high(1), 2, Side::low(1), 2),
            ],
        )
    }

    pub fn dim(&self) -> usize {
        self.patches[0].spaces.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    /// Full-space tensor index of patch `i` -> global dof.
    pub fn local_to_global(&self, i: usize) -> &[Option<usize>] {
        &self.local_to_global[i]
    }

    pub fn assemble_stiffness(&self, coeff: &dyn CoefficientField) -> Result<SparseMatrix> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.num_dofs];
        for (pi, p) in self.patches.iter().enumerate() {
            let ranges: Vec<_> = p.spaces.iter().map(|s| 0..s.m()).collect();
            let local = assemble_stiffness_on(&p.spaces, &ranges, p.map.as_ref(), coeff)?;
            let l2g = &self.local_to_global[pi];
            for (i, gi) in l2g.iter().enumerate() {
                let Some(gi) = *gi else { continue };
                let (cols, vals) = local.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    if let Some(gj) = l2g[c as usize] {
                        rows[gi].push((gj as u32, v));
                    }
                }
            }
        }
        Ok(SparseMatrix::from_rows(rows))
    }

    pub fn assemble_load(&self, f: &dyn Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let mut b = vec![0.0; self.num_dofs];
        for (pi, p) in self.patches.iter().enumerate() {
            let ranges: Vec<_> = p.spaces.iter().map(|s| 0..s.m()).collect();
            let local = assemble_load_on(&p.spaces, &ranges, p.map.as_ref(), f)?;
            for (v, g) in local.iter().zip(&self.local_to_global[pi]) {
                if let Some(g) = g {
                    b[*g] += v;
                }
            }
        }
        Ok(b)
    }

    /// Overlapping subdomains: one per interface, or the whole domain when
    /// there is a single patch.
    pub fn subdomains(&self) -> Result<Vec<Subdomain>> {
        if self.interfaces.is_empty() {
            if self.patches.len() != 1 {
                return Err(Error::InvalidArgument("disconnected patches".into()));
            }
            let p = &self.patches[0];
            let dims: Vec<usize> = p.spaces.iter().map(SplineSpace1D::n).collect();
            let full = p.full_dims();
            let mut idx = Vec::with_capacity(dims.iter().product());
            let mut multi = vec![0usize; dims.len()];
            for _ in 0..dims.iter().product::<usize>() {
                let m: Vec<usize> = multi.iter().map(|i| i + 1).collect();
                idx.push(self.local_to_global[0][flat(&m, &full)].expect("interior dof"));
                increment(&mut multi, &dims);
            }
            return Ok(vec![Subdomain {
                patches: vec![0],
                spaces: p.spaces.clone(),
                idx,
            }]);
        }
        (0..self.interfaces.len()).map(|i| self.merged_pair(i)).collect()
    }

    fn merged_pair(&self, i: usize) -> Result<Subdomain> {
        let itf = &self.interfaces[i];
        let dim = self.dim();
        let k = itf.side_a.dir;
        if itf.side_b.dir != k || itf.side_a.high == itf.side_b.high || itf.flip.iter().any(|&f| f) {
            return Err(Error::NotTensorGrid(i));
        }
        let (left, right) = if itf.side_a.high { (itf.a, itf.b) } else { (itf.b, itf.a) };
        let (pl, pr) = (&self.patches[left], &self.patches[right]);
        let mut spaces = pl.spaces.clone();
        spaces[k] = SplineSpace1D::new(KnotVector::join(pl.spaces[k].knots(), pr.spaces[k].knots())?)?;
        let ml = pl.spaces[k].m();
        let (fl, fr) = (pl.full_dims(), pr.full_dims());
        let dims: Vec<usize> = spaces.iter().map(SplineSpace1D::n).collect();
        let mut idx = Vec::with_capacity(dims.iter().product());
        let mut multi = vec![0usize; dim];
        let mut local = vec![0usize; dim];
        for _ in 0..dims.iter().product::<usize>() {
            for l in 0..dim {
                local[l] = multi[l] + 1;
            }
            let t = local[k];
            let g = if t < ml {
                self.local_to_global[left][flat(&local, &fl)]
            } else {
                local[k] = t + 1 - ml;
                self.local_to_global[right][flat(&local, &fr)]
            };
            idx.push(g.ok_or(Error::NotTensorGrid(i))?);
            increment(&mut multi, &dims);
        }
        Ok(Subdomain {
            patches: vec![left, right],
            spaces,
            idx,
        })
    }
}

fn check_interface(patches: &[Patch], itf: &Interface, dim: usize) -> Result<()> {
    if itf.a >= patches.len() || itf.b >= patches.len() || itf.a == itf.b {
        return Err(Error::InvalidArgument(format!("interface between patches {} and {}", itf.a, itf.b)));
    }
    if itf.side_a.dir >= dim || itf.side_b.dir >= dim || itf.flip.len() != dim - 1 {
        return Err(Error::InvalidArgument("interface side out of range".into()));
    }
    let (pa, pb) = (&patches[itf.a], &patches[itf.b]);
    let ta = tangential(dim, itf.side_a.dir);
    let tb = tangential(dim, itf.side_b.dir);
    for (s, (&la, &lb)) in ta.iter().zip(&tb).enumerate() {
        let ka = pa.spaces[la].knots();
        let kb = if itf.flip[s] {
            reversed(pb.spaces[lb].knots())?
        } else {
            pb.spaces[lb].knots().clone()
        };
        if *ka != kb {
            return Err(Error::Nonconforming(
                "knot vectors or degrees differ along the interface".into(),
            ));
        }
    }
    // the two maps must trace the same side
    let samples = [0.0, 0.37, 1.0];
    let mut za = vec![0.0; dim];
    let mut zb = vec![0.0; dim];
    let mut t = vec![0usize; dim - 1];
    let tdims = vec![samples.len(); dim - 1];
    for _ in 0..samples.len().pow(dim as u32 - 1) {
        za[itf.side_a.dir] = if itf.side_a.high { 1.0 } else { 0.0 };
        zb[itf.side_b.dir] = if itf.side_b.high { 1.0 } else { 0.0 };
        for (s, (&la, &lb)) in ta.iter().zip(&tb).enumerate() {
            let v = samples[t[s]];
            za[la] = v;
            zb[lb] = if itf.flip[s] { 1.0 - v } else { v };
        }
        let (xa, xb) = (pa.map.eval_vec(&za), pb.map.eval_vec(&zb));
        let scale = xa.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if xa.iter().zip(&xb).any(|(u, v)| (u - v).abs() > 1e-10 * scale) {
            return Err(Error::Nonconforming(format!(
                "patch maps disagree on the interface at {za:?}: {xa:?} vs {xb:?}"
            )));
        }
        increment(&mut t, &tdims);
    }
    Ok(())
}

/// `Theta_i`: a patch pair merged into one tensor-product space, with its
/// interior dofs listed in tensor order.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub patches: Vec<usize>,
    /// Merged spline spaces on the unit parametric cube.
    pub spaces: Vec<SplineSpace1D>,
    /// Global dof of each local (tensor-ordered) unknown.
    pub idx: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchwarzMode {
    /// Local solves with `A_i = R_i A R_i^T` factored exactly.
    Exact,
    /// Local solves with the FD preconditioner of the merged tensor space.
    #[default]
    Inexact,
    /// A fixed number of FD-preconditioned CG steps on `A_i`. Not a fixed
    /// linear operator in general.
    InexactPcg(usize),
}

#[derive(Debug)]
enum LocalSolver {
    Exact(EnvelopeCholesky),
    Fd(FdPreconditioner),
    FdPcg {
        a: SparseMatrix,
        fd: FdPreconditioner,
        steps: usize,
    },
}

/// `P^{-1} = sum_i R_i^T A~_i^{-1} R_i`.
#[derive(Debug)]
pub struct SchwarzPreconditioner {
    subdomains: Vec<Subdomain>,
    solvers: Vec<LocalSolver>,
    n: usize,
    mode: SchwarzMode,
}

impl SchwarzPreconditioner {
    pub fn new(domain: &MultiPatchDomain, a: &SparseMatrix, mode: SchwarzMode) -> Result<Self> {
        if a.order() != domain.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_dofs(),
                found: a.order(),
            });
        }
        let subdomains = domain.subdomains()?;
        let solvers = subdomains
            .iter()
            .map(|s| -> Result<LocalSolver> {
                Ok(match mode {
                    SchwarzMode::Exact => LocalSolver::Exact(EnvelopeCholesky::new(&a.principal_submatrix(&s.idx))?),
                    SchwarzMode::Inexact => LocalSolver::Fd(FdPreconditioner::new(&KroneckerSum::from_spaces(&s.spaces)?)?),
                    SchwarzMode::InexactPcg(steps) => LocalSolver::FdPcg {
                        a: a.principal_submatrix(&s.idx),
                        fd: FdPreconditioner::new(&KroneckerSum::from_spaces(&s.spaces)?)?,
                        steps: steps.max(1),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            subdomains,
            solvers,
            n: a.order(),
            mode,
        })
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn mode(&self) -> SchwarzMode {
        self.mode
    }
}

impl LinearOperator for SchwarzPreconditioner {
    fn order(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (sub, solver) in self.subdomains.iter().zip(&self.solvers) {
            let mut r: Vec<f64> = sub.idx.iter().map(|&g| x[g]).collect();
            let s = match solver {
                LocalSolver::Exact(f) => {
                    f.solve_in_place(&mut r);
                    r
                }
                LocalSolver::Fd(fd) => {
                    let mut s = vec![0.0; r.len()];
                    fd.apply_into(&r, &mut s);
                    s
                }
                LocalSolver::FdPcg { a, fd, steps } => {
                    // a breakdown can only come from round-off at tiny residuals
                    match crate::pcg::pcg(a, fd, &r, 0.0, *steps) {
                        Ok(res) => res.solution,
                        Err(_) => fd.apply(&r).expect("matching length"),
                    }
                }
            };
            for (&g, v) in sub.idx.iter().zip(&s) {
                y[g] += v;
            }
        }
    }

    fn name(&self) -> &str {
        "Schwarz preconditioner"
    }
}
