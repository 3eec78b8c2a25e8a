//! Alternating-direction-implicit solvers for `P s = r`.
//!
//! 2D: Peaceman-Rachford sweeps with elliptic-function (Zolotarev) shifts.
//! 3D: Douglas splitting, shifts from a cyclic geometric ladder or a greedy search,
//! truncated at the first prefix whose contraction bound `rho_J` meets the
//! tolerance. With a fixed plan and zero start either sweep is a fixed SPD
//! operator `P_J^{-1}`, usable as a CG preconditioner.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::{extreme_eigs, generalized_eig, POWER_ITERS};
use crate::error::{Error, Result};
use crate::kronecker::{apply_along, solve_along, KroneckerSum, Pencil};
use crate::linalg::{BandedCholesky, BandedSymMatrix};

/// Grid size used to check the realized 2D bound.
pub const BOUND_SAMPLES: usize = 10_000;

/// Per-direction grid size for `rho_J` when eigenvalues are not supplied.
pub const RHO_GRID: usize = 64;

/// Largest eigenvalue list enumerated in full when evaluating `rho_J`.
pub const RHO_MAX_EIGS: usize = 128;

const GREEDY_SEED: u64 = 0x00ad_15ee_d003;

/// `J = ceil(ln(4 b / a) ln(4 / eps) / pi^2)`.
pub fn adi_iteration_count(a: f64, b: f64, eps: f64) -> Result<usize> {
    if !(a > 0.0 && b >= a) {
        return Err(Error::InvalidArgument(format!("spectral interval [{a}, {b}]")));
    }
    check_eps(eps)?;
    let j = ((4.0 * b / a).ln() * (4.0 / eps).ln() / (PI * PI)).ceil();
    Ok((j as usize).max(1))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("ADI tolerance {eps} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b >= a && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("spectral interval [{a}, {b}]")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// elliptic functions

/// Arithmetic-geometric mean.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= 1e-16 * an {
            return an;
        }
        a = an;
        b = bn;
    }
    a
}

/// Complete elliptic integral `K(k)` given the complementary modulus `k'`.
pub fn elliptic_k(kp: f64) -> f64 {
    PI / (2.0 * agm(1.0, kp))
}

/// Jacobi `dn(u, k)` given `k'`, by descending Landen transformation.
pub fn jacobi_dn(u: f64, kp: f64) -> f64 {
    let k = ((1.0 - kp) * (1.0 + kp)).sqrt();
    let mut a = vec![1.0];
    let mut c = vec![k];
    let mut b = kp;
    for _ in 0..64 {
        let an = *a.last().unwrap();
        if c.last().unwrap().abs() <= 1e-16 * an {
            break;
        }
        let a1 = 0.5 * (an + b);
        let c1 = 0.5 * (an - b);
        b = (an * b).sqrt();
        a.push(a1);
        c.push(c1);
    }
    let n = a.len() - 1;
    if n == 0 {
        return 1.0;
    }
    let mut phi = 2f64.powi(n as i32) * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    // dn^2 = k'^2 + k^2 cn^2 stays accurate near u = K, where the usual
    // cos(phi0) / cos(phi1 - phi0) is 0/0
    let cn = phi.cos();
    (kp * kp + k * k * cn * cn).sqrt()
}

// ---------------------------------------------------------------------------
// 2D shifts

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPlan2D {
    pub j: usize,
    /// Shifts of the direction-1 solves.
    pub omega: Vec<f64>,
    /// Shifts of the direction-2 solves.
    pub gamma: Vec<f64>,
    pub ab: (f64, f64),
    pub cd: (f64, f64),
    /// Realized bound on `||T_J||`, sampled.
    pub bound: f64,
}

/// Möbius map sending `[a, b]` onto `[k', 1]` and `[-d, -c]` onto `[-1, -k']`.
struct Mobius {
    a: f64,
    b: f64,
    d: f64,
    c0: f64,
}

impl Mobius {
    fn new(a: f64, b: f64, d: f64, kp: f64) -> Self {
        Self {
            a,
            b,
            d,
            c0: (kp + 1.0) / (kp - 1.0),
        }
    }

    #[cfg(test)]
    fn forward(&self, z: f64) -> f64 {
        let (a, b, d) = (self.a, self.b, self.d);
        let r = (z - b) * (a + d) / ((z + d) * (a - b));
        let s = r / self.c0;
        (1.0 + s) / (1.0 - s)
    }

    fn inverse(&self, y: f64) -> f64 {
        let (a, b, d) = (self.a, self.b, self.d);
        let s = (y - 1.0) / (y + 1.0);
        let r = self.c0 * s;
        (b * (a + d) + r * d * (a - b)) / ((a + d) - r * (a - b))
    }
}

fn complementary_modulus(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let m = (a + d) * (b + c) / ((b + d) * (a + c));
    let t = 2.0 * m - 1.0;
    // t - sqrt(t^2 - 1) without cancellation
    1.0 / (t + (t * t - 1.0).max(0.0).sqrt())
}

fn zolotarev_shifts(a: f64, b: f64, c: f64, d: f64, j: usize) -> (Vec<f64>, Vec<f64>) {
    let kp = complementary_modulus(a, b, c, d);
    let big_k = elliptic_k(kp);
    let map = Mobius::new(a, b, d, kp);
    let mut omega = Vec::with_capacity(j);
    let mut gamma = Vec::with_capacity(j);
    for i in 1..=j {
        let y = jacobi_dn((2 * i - 1) as f64 * big_k / (2 * j) as f64, kp);
        gamma.push(map.inverse(y).clamp(a, b));
        omega.push((-map.inverse(-y)).clamp(c, d));
    }
    (omega, gamma)
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if a == b || n < 2 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `max_{[a,b] x [c,d]} prod_j |(x - g_j)/(x + w_j) (y - w_j)/(y + g_j)|`,
/// sampled on `samples` log-spaced points per interval. The maximum
/// separates into two univariate maxima.
pub fn bound_2d(omega: &[f64], gamma: &[f64], ab: (f64, f64), cd: (f64, f64), samples: usize) -> f64 {
    let side = |lo: f64, hi: f64, zeros: &[f64], poles: &[f64]| {
        log_grid(lo, hi, samples)
            .into_iter()
            .map(|x| {
                zeros
                    .iter()
                    .zip(poles)
                    .map(|(z, p)| ((x - z) / (x + p)).abs())
                    .product::<f64>()
            })
            .fold(0.0, f64::max)
    };
    side(ab.0, ab.1, gamma, omega) * side(cd.0, cd.1, omega, gamma)
}

/// Optimal shifts for `[a, b] x [c, d]` with the count of
/// [`adi_iteration_count`] (generalized through `k'`), incremented while the
/// sampled bound misses `eps`.
pub fn wachspress_shifts(a: f64, b: f64, c: f64, d: f64, eps: f64) -> Result<ShiftPlan2D> {
    check_interval(a, b)?;
    check_interval(c, d)?;
    check_eps(eps)?;
    if a == b || c == d {
        // one shift annihilates the point spectrum
        let (omega, gamma) = (vec![c], vec![a]);
        let bound = bound_2d(&omega, &gamma, (a, b), (c, d), BOUND_SAMPLES);
        return Ok(ShiftPlan2D {
            j: 1,
            omega,
            gamma,
            ab: (a, b),
            cd: (c, d),
            bound,
        });
    }
    let kp = complementary_modulus(a, b, c, d);
    let j0 = (((4.0 / kp).ln() * (4.0 / eps).ln() / (PI * PI)).ceil() as usize).max(1);
    let mut last = f64::INFINITY;
    for j in j0..j0 + 4 {
        let (omega, gamma) = zolotarev_shifts(a, b, c, d, j);
        let bound = bound_2d(&omega, &gamma, (a, b), (c, d), BOUND_SAMPLES);
        if bound <= eps {
            return Ok(ShiftPlan2D {
                j,
                omega,
                gamma,
                ab: (a, b),
                cd: (c, d),
                bound,
            });
        }
        last = bound;
    }
    Err(Error::InvalidArgument(format!(
        "shift construction for [{a}, {b}] x [{c}, {d}] reached bound {last:e} > {eps:e}"
    )))
}

// ---------------------------------------------------------------------------
// 3D shifts

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPlan3D {
    /// A-priori count.
    pub j0: usize,
    /// Shifts actually used, length `j`.
    pub omega: Vec<f64>,
    /// Effective count: first prefix with `rho_J <= eps`.
    pub j: usize,
    /// `rho` of every evaluated prefix, `rho_values[i]` for `i + 1` shifts.
    pub rho_values: Vec<f64>,
    pub ab: (f64, f64),
}

impl ShiftPlan3D {
    pub fn rho(&self) -> f64 {
        self.rho_values[self.j - 1]
    }
}

/// Douglas per-shift factor `1 - 2 w^2 (l1 + l2 + l3) / prod (w + li)`.
#[inline]
pub fn douglas_factor(w: f64, l: [f64; 3]) -> f64 {
    1.0 - 2.0 * w * w * (l[0] + l[1] + l[2]) / ((w + l[0]) * (w + l[1]) * (w + l[2]))
}

/// `rho_J` for every prefix `J = 1..=omega.len()`, maximized over the
/// Cartesian product of the three eigenvalue lists.
pub fn rho_prefixes(omega: &[f64], eigs: [&[f64]; 3]) -> Vec<f64> {
    let mut rho = vec![0.0f64; omega.len()];
    let same = eigs[0] == eigs[1] && eigs[1] == eigs[2];
    let mut visit = |l: [f64; 3]| {
        let mut p = 1.0;
        for (r, &w) in rho.iter_mut().zip(omega) {
            p *= douglas_factor(w, l);
            let a = p.abs();
            if a > *r {
                *r = a;
            }
        }
    };
    if same {
        // the factor is symmetric in its arguments
        let e = eigs[0];
        for i in 0..e.len() {
            for j in i..e.len() {
                for k in j..e.len() {
                    visit([e[i], e[j], e[k]]);
                }
            }
        }
    } else {
        for &x in eigs[0] {
            for &y in eigs[1] {
                for &z in eigs[2] {
                    visit([x, y, z]);
                }
            }
        }
    }
    rho
}

/// Thins a sorted eigenvalue list to at most [`RHO_MAX_EIGS`] entries,
/// keeping both ends.
fn thin(eigs: &[f64]) -> Vec<f64> {
    let n = eigs.len();
    if n <= RHO_MAX_EIGS {
        return eigs.to_vec();
    }
    (0..RHO_MAX_EIGS)
        .map(|i| eigs[i * (n - 1) / (RHO_MAX_EIGS - 1)])
        .collect()
}

fn rho_for(omega: &[f64], a: f64, b: f64, eigs: Option<&[Vec<f64>]>) -> Vec<f64> {
    match eigs {
        Some(e) if e.len() == 3 => {
            let t: Vec<Vec<f64>> = e.iter().map(|v| thin(v)).collect();
            rho_prefixes(omega, [&t[0], &t[1], &t[2]])
        }
        Some(e) if e.len() == 1 => {
            let t = thin(&e[0]);
            rho_prefixes(omega, [&t, &t, &t])
        }
        _ => {
            let g = log_grid(a, b, RHO_GRID);
            rho_prefixes(omega, [&g, &g, &g])
        }
    }
}

/// Minimizes `|douglas_factor(w, l)|` over `w > 0`: log grid on
/// `[min l / 10, 10 max l]`, then golden section around the best node.
pub fn best_shift(l: [f64; 3]) -> (f64, f64) {
    let lo = l.iter().cloned().fold(f64::INFINITY, f64::min) / 10.0;
    let hi = l.iter().cloned().fold(0.0, f64::max) * 10.0;
    let f = |t: f64| douglas_factor(t.exp(), l).abs();
    let (la, lb) = (lo.ln(), hi.ln());
    const NODES: usize = 200;
    let h = (lb - la) / NODES as f64;
    let mut best = (la, f(la));
    for i in 1..=NODES {
        let t = la + h * i as f64;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (mut x0, mut x1) = ((best.0 - h).max(la), (best.0 + h).min(lb));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = x1 - g * (x1 - x0);
    let mut d = x0 + g * (x1 - x0);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            x1 = d;
            d = c;
            fd = fc;
            c = x1 - g * (x1 - x0);
            fc = f(c);
        } else {
            x0 = c;
            c = d;
            fc = fd;
            d = x0 + g * (x1 - x0);
            fd = f(d);
        }
        if x1 - x0 < 1e-12 {
            break;
        }
    }
    let t = 0.5 * (x0 + x1);
    let v = f(t);
    if v < best.1 {
        (t.exp(), v)
    } else {
        (best.0.exp(), best.1)
    }
}

/// `J_0 = ceil(1.16 ln(b / a) ln(1 / eps))`.
pub fn douglas_count(a: f64, b: f64, eps: f64) -> usize {
    ((1.16 * (b / a).ln() * (1.0 / eps).ln()).ceil() as usize).max(1)
}

/// Shifts per cycle of the Douglas ladder: consecutive shifts differ by at
/// most a factor 4, so every `lambda` on the diagonal `l1 = l2 = l3` sees a
/// factor `<= 1/4` once per cycle.
pub fn douglas_cycle_len(a: f64, b: f64) -> usize {
    ((b / a).ln() / 4f64.ln()).ceil() as usize + 1
}

/// Cyclic geometric ladder from `2b` down to `2a` (`w = 2 lambda` minimizes
/// the factor at `l1 = l2 = l3 = lambda`), repeated up to the a-priori count
/// `J_0` and truncated at the first prefix with `rho_J <= eps`. `rho` runs
/// over the given eigenvalue lists (one shared list or one per direction)
/// or over a log grid of `[a, b]`.
pub fn douglas_shifts_3d(a: f64, b: f64, eps: f64, eigs: Option<&[Vec<f64>]>) -> Result<ShiftPlan3D> {
    check_interval(a, b)?;
    check_eps(eps)?;
    if a == b {
        let (w, v) = best_shift([a; 3]);
        let j = if v == 0.0 { 1 } else { ((eps.ln() / v.ln()).ceil() as usize).max(1) };
        return Ok(ShiftPlan3D {
            j0: j,
            omega: vec![w; j],
            j,
            rho_values: (1..=j).map(|i| v.powi(i as i32)).collect(),
            ab: (a, b),
        });
    }
    let j0 = douglas_count(a, b, eps);
    let l = douglas_cycle_len(a, b);
    let step = (b / a).powf(1.0 / (l - 1) as f64);
    let ladder: Vec<f64> = (0..j0).map(|j| 2.0 * b / step.powi((j % l) as i32)).collect();
    let rho = rho_for(&ladder, a, b, eigs);
    let j = match rho.iter().position(|&r| r <= eps) {
        Some(i) => i + 1,
        None => {
            return Err(Error::InvalidArgument(format!(
                "Douglas ladder of {j0} shifts reaches rho = {:e} > {eps:e}",
                rho[j0 - 1]
            )))
        }
    };
    Ok(ShiftPlan3D {
        j0,
        omega: ladder[..j].to_vec(),
        j,
        rho_values: rho,
        ab: (a, b),
    })
}

fn log_abs_product(omega: &[f64], l: [f64; 3]) -> f64 {
    omega.iter().map(|&w| douglas_factor(w, l).abs().ln()).sum()
}

/// Local maximization of `log |prod|` over `[ln a, ln b]^3` by compass search.
fn climb(omega: &[f64], mut x: [f64; 3], la: f64, lb: f64) -> ([f64; 3], f64) {
    let eval = |x: &[f64; 3]| log_abs_product(omega, [x[0].exp(), x[1].exp(), x[2].exp()]);
    let mut fx = eval(&x);
    let mut step = 0.25 * (lb - la);
    while step > 1e-7 * (lb - la).max(1e-300) {
        let mut moved = false;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[axis] = (y[axis] + sign * step).clamp(la, lb);
                let fy = eval(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Greedy shifts: each new shift minimizes the factor at the current
/// maximizer of the error product over `[a, b]^3`. The maximizer is sought
/// by multistart compass search from the 8 corners and 24 seeded random
/// points. Stops once the maximum is `<= eps` or after `j_max` shifts.
pub fn greedy_shifts_3d(a: f64, b: f64, j_max: usize, eps: f64) -> Result<ShiftPlan3D> {
    check_interval(a, b)?;
    check_eps(eps)?;
    if j_max == 0 {
        return Err(Error::InvalidArgument("greedy shift search needs j_max >= 1".into()));
    }
    let (la, lb) = (a.ln(), b.ln());
    let mut rng = ChaCha8Rng::seed_from_u64(GREEDY_SEED);
    let mut starts: Vec<[f64; 3]> = Vec::with_capacity(32);
    for mask in 0..8u32 {
        starts.push([0, 1, 2].map(|i| if mask >> i & 1 == 1 { lb } else { la }));
    }
    for _ in 0..24 {
        starts.push([0; 3].map(|_: i32| rng.gen_range(la..=lb)));
    }
    let mut omega = Vec::new();
    let mut rho = Vec::new();
    // with no shifts the product is 1 everywhere; start from the bracket centre
    let mut worst = [0.5 * (la + lb); 3];
    loop {
        let (w, _) = best_shift(worst.map(f64::exp));
        omega.push(w);
        let mut best = (worst, f64::NEG_INFINITY);
        for s in starts.iter().chain(std::iter::once(&worst)) {
            let (x, fx) = climb(&omega, *s, la, lb);
            if fx > best.1 {
                best = (x, fx);
            }
        }
        worst = best.0;
        rho.push(best.1.exp());
        if best.1.exp() <= eps || omega.len() >= j_max {
            break;
        }
    }
    let j = omega.len();
    Ok(ShiftPlan3D {
        j0: j_max,
        omega,
        j,
        rho_values: rho,
        ab: (a, b),
    })
}

// ---------------------------------------------------------------------------
// sweeps

/// Shift strategy used when a 3D preconditioner plans its own shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shifts3D {
    #[default]
    Douglas,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShiftPlan {
    Two(ShiftPlan2D),
    Three(ShiftPlan3D),
}

impl ShiftPlan {
    pub fn iterations(&self) -> usize {
        match self {
            ShiftPlan::Two(p) => p.j,
            ShiftPlan::Three(p) => p.j,
        }
    }
}

/// Fixed-plan ADI operator `P_J^{-1}` with all shifted factorizations cached.
#[derive(Debug, Clone)]
pub struct AdiPreconditioner {
    pencils: Vec<Pencil>,
    dims: Vec<usize>,
    plan: ShiftPlan,
    /// `plus[l][j]`: Cholesky factor of `K_l + s M_l` for the shift of
    /// direction `l` at step `j`.
    plus: Vec<Vec<BandedCholesky>>,
    /// `minus[l][j] = K_l - s M_l` where the sweep needs it.
    minus: Vec<Vec<BandedSymMatrix>>,
    mass: Vec<BandedCholesky>,
}

fn shifted(p: &Pencil, s: f64) -> BandedSymMatrix {
    p.k.add_scaled(s, &p.m)
}

impl AdiPreconditioner {
    /// Plans shifts from 10-step power brackets of each pencil.
    pub fn new(p: &KroneckerSum, eps: f64, strategy: Shifts3D) -> Result<Self> {
        let brackets = p
            .pencils()
            .iter()
            .map(|q| extreme_eigs(&q.k, &q.m, POWER_ITERS))
            .collect::<Result<Vec<_>>>()?;
        let plan = if p.dim() == 2 {
            let ((a, b), (c, d)) = (brackets[0], brackets[1]);
            ShiftPlan::Two(wachspress_shifts(a, b, c, d, eps)?)
        } else {
            let a = brackets.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
            let b = brackets.iter().map(|x| x.1).fold(0.0, f64::max);
            ShiftPlan::Three(match strategy {
                Shifts3D::Douglas => {
                    let eigs = if p.dims().iter().all(|&n| n <= RHO_MAX_EIGS) {
                        Some(
                            p.pencils()
                                .iter()
                                .map(|q| generalized_eig(&q.k, &q.m).map(|e| e.d))
                                .collect::<Result<Vec<_>>>()?,
                        )
                    } else {
                        None
                    };
                    douglas_shifts_3d(a, b, eps, eigs.as_deref())?
                }
                Shifts3D::Greedy => greedy_shifts_3d(a, b, douglas_count(a, b, eps), eps)?,
            })
        };
        Self::with_plan(p, plan)
    }

    pub fn with_plan(p: &KroneckerSum, plan: ShiftPlan) -> Result<Self> {
        let pencils = p.pencils().to_vec();
        let d = pencils.len();
        let mut plus = vec![Vec::new(); d];
        let mut minus = vec![Vec::new(); d];
        match (&plan, d) {
            (ShiftPlan::Two(sp), 2) => {
                check_shifts(&sp.omega)?;
                check_shifts(&sp.gamma)?;
                for (&w, &g) in sp.omega.iter().zip(&sp.gamma) {
                    plus[0].push(shifted(&pencils[0], w).cholesky()?);
                    plus[1].push(shifted(&pencils[1], g).cholesky()?);
                    minus[1].push(shifted(&pencils[1], -w));
                    minus[0].push(shifted(&pencils[0], -g));
                }
            }
            (ShiftPlan::Three(sp), 3) => {
                check_shifts(&sp.omega)?;
                for &w in &sp.omega {
                    for (l, q) in pencils.iter().enumerate() {
                        plus[l].push(shifted(q, w).cholesky()?);
                    }
                    minus[0].push(shifted(&pencils[0], -w));
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "shift plan does not match a {d}-term Kronecker sum"
                )))
            }
        }
        let mass = pencils.iter().map(|q| q.m.cholesky()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims: p.dims().to_vec(),
            pencils,
            plan,
            plus,
            minus,
            mass,
        })
    }

    pub fn plan(&self) -> &ShiftPlan {
        &self.plan
    }

    /// Inner iterations per application.
    pub fn iterations(&self) -> usize {
        self.plan.iterations()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: r.len(),
            });
        }
        let mut s = vec![0.0; r.len()];
        self.apply_into(r, &mut s);
        Ok(s)
    }

    /// `s = P_J^{-1} r`: the full sweep from a zero start.
    pub fn apply_into(&self, r: &[f64], s: &mut [f64]) {
        if self.dims.len() == 2 {
            self.sweep_2d(r, s);
        } else {
            let mut v = vec![0.0; r.len()];
            self.sweep_3d(r, s, &mut v);
        }
    }

    fn sweep_2d(&self, r: &[f64], s: &mut [f64]) {
        let dims = &self.dims;
        let n = r.len();
        let mut half = vec![0.0; n];
        let mut t = vec![0.0; n];
        s.fill(0.0);
        for j in 0..self.iterations() {
            // (K1 + w M1) (x) I  s~_{j-1/2} = r - I (x) (K2 - w M2) s~_{j-1}
            if j == 0 {
                half.copy_from_slice(r);
            } else {
                apply_along(&self.minus[1][j], dims, 1, s, &mut t);
                for ((h, a), b) in half.iter_mut().zip(r).zip(&t) {
                    *h = a - b;
                }
            }
            solve_along(&self.plus[0][j], dims, 0, &mut half);
            // I (x) (K2 + g M2)  s~_j = r - (K1 - g M1) (x) I  s~_{j-1/2}
            apply_along(&self.minus[0][j], dims, 0, &half, &mut t);
            for ((x, a), b) in s.iter_mut().zip(r).zip(&t) {
                *x = a - b;
            }
            solve_along(&self.plus[1][j], dims, 1, s);
        }
        solve_along(&self.mass[0], dims, 0, s);
    }

    /// Douglas sweep; leaves the final auxiliary `v = (I (x) I (x) M3^{-1} K3) s` in `v`.
    fn sweep_3d(&self, r: &[f64], s: &mut [f64], v: &mut [f64]) {
        let dims = &self.dims;
        let n = r.len();
        let p = &self.pencils;
        let omega = match &self.plan {
            ShiftPlan::Three(sp) => &sp.omega,
            ShiftPlan::Two(_) => unreachable!("3D sweep with a 2D plan"),
        };
        // r~ = 2 (I (x) M2 (x) M3)^{-1} r
        let mut rt: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        solve_along(&self.mass[1], dims, 1, &mut rt);
        solve_along(&self.mass[2], dims, 2, &mut rt);
        let mut u = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut t2 = vec![0.0; n];
        let mut star = vec![0.0; n];
        s.fill(0.0);
        v.fill(0.0);
        for (j, &w) in omega.iter().enumerate() {
            // u = (I (x) M2^{-1} K2 (x) I) s
            apply_along(&p[1].k, dims, 1, s, &mut u);
            solve_along(&self.mass[1], dims, 1, &mut u);
            // r* = r~ - ((K1 - w M1) (x) I (x) I) s - 2 (M1 (x) I (x) I)(u + v)
            apply_along(&self.minus[0][j], dims, 0, s, &mut t);
            for ((x, a), b) in t2.iter_mut().zip(&u).zip(v.iter()) {
                *x = 2.0 * (a + b);
            }
            apply_along(&p[0].m, dims, 0, &t2, &mut star);
            for ((x, a), b) in star.iter_mut().zip(&rt).zip(&t) {
                *x = a - b - *x;
            }
            solve_along(&self.plus[0][j], dims, 0, &mut star);
            // r** = (I (x) M2 (x) I)(u + w s*)
            for ((x, a), b) in t2.iter_mut().zip(&u).zip(&star) {
                *x = a + w * b;
            }
            apply_along(&p[1].m, dims, 1, &t2, &mut t);
            solve_along(&self.plus[1][j], dims, 1, &mut t);
            // b = v + w s**;  (I (x) I (x) (K3 + w M3)) s = (I (x) I (x) M3) b
            for (x, a) in v.iter_mut().zip(&t) {
                *x += w * a;
            }
            apply_along(&p[2].m, dims, 2, v, s);
            solve_along(&self.plus[2][j], dims, 2, s);
            // v_{j+1} = b - w s
            for (x, a) in v.iter_mut().zip(s.iter()) {
                *x -= w * a;
            }
        }
    }
}

fn check_shifts(w: &[f64]) -> Result<()> {
    if w.is_empty() || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("ADI shifts must be positive and finite".into()));
    }
    Ok(())
}

/// Runs the 2D sweep for a given plan.
pub fn adi_solve_2d(p: &KroneckerSum, r: &[f64], plan: &ShiftPlan2D) -> Result<Vec<f64>> {
    AdiPreconditioner::with_plan(p, ShiftPlan::Two(plan.clone()))?.apply(r)
}

/// Runs the 3D Douglas sweep for a given plan.
pub fn adi_solve_3d(p: &KroneckerSum, r: &[f64], plan: &ShiftPlan3D) -> Result<Vec<f64>> {
    AdiPreconditioner::with_plan(p, ShiftPlan::Three(plan.clone()))?.apply(r)
}
