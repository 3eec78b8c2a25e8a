//! Closed-form geometry maps `F: [0,1]^d -> R^d`, coefficient fields, and
//! the pulled-back diffusion tensor `Q`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Below this |det J| a point is treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

/// A parametrization of the physical domain.
///
/// The Jacobian is row-major with `J[i][j] = dF_i / dzeta_j`.
pub trait GeometryMap: Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, zeta: &[f64], x: &mut [f64]);
    fn jacobian(&self, zeta: &[f64], jac: &mut [f64]);

    fn eval_vec(&self, zeta: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.evaluate(zeta, &mut x);
        x
    }
}

/// Symmetric positive definite diffusion tensor `K(x)`, row-major.
pub trait CoefficientField: Send + Sync {
    fn evaluate(&self, x: &[f64], k: &mut [f64]);

    /// Lets the assembly skip the matrix product when `K = I`.
    fn is_identity(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCoefficient;

impl CoefficientField for IdentityCoefficient {
    fn evaluate(&self, x: &[f64], k: &mut [f64]) {
        let d = x.len();
        k.fill(0.0);
        for i in 0..d {
            k[i * d + i] = 1.0;
        }
    }

    fn is_identity(&self) -> bool {
        true
    }
}

/// Coefficient field backed by a closure.
pub struct FnCoefficient<F>(pub F);

impl<F> CoefficientField for FnCoefficient<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn evaluate(&self, x: &[f64], k: &mut [f64]) {
        (self.0)(x, k)
    }
}

/// Axis-aligned affine map `x_i = offset_i + scale_i * zeta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBox {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineBox {
    pub fn unit(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn new(offset: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if offset.len() != scale.len() || !(2..=3).contains(&offset.len()) {
            return Err(Error::InvalidArgument(
                "affine box needs matching offset/scale of length 2 or 3".into(),
            ));
        }
        if scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument("affine box scales must be positive".into()));
        }
        Ok(Self { offset, scale })
    }
}

impl GeometryMap for AffineBox {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn evaluate(&self, zeta: &[f64], x: &mut [f64]) {
        for i in 0..self.dim() {
            x[i] = self.offset[i] + self.scale[i] * zeta[i];
        }
    }

    fn jacobian(&self, _zeta: &[f64], jac: &mut [f64]) {
        let d = self.dim();
        jac.fill(0.0);
        for i in 0..d {
            jac[i * d + i] = self.scale[i];
        }
    }
}

/// `(1 + zeta1) (cos, sin)(pi/2 zeta2)`: radii 1 to 2.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarterAnnulus;

impl QuarterAnnulus {
    fn polar(zeta: &[f64]) -> (f64, f64, f64) {
        let r = 1.0 + zeta[0];
        let (s, c) = (FRAC_PI_2 * zeta[1]).sin_cos();
        (r, s, c)
    }
}

impl GeometryMap for QuarterAnnulus {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, zeta: &[f64], x: &mut [f64]) {
        let (r, s, c) = Self::polar(zeta);
        x[0] = r * c;
        x[1] = r * s;
    }

    fn jacobian(&self, zeta: &[f64], jac: &mut [f64]) {
        let (r, s, c) = Self::polar(zeta);
        jac[0] = c;
        jac[1] = -FRAC_PI_2 * r * s;
        jac[2] = s;
        jac[3] = FRAC_PI_2 * r * c;
    }
}

/// Exponential grading `g(t) = (e^{alpha t} - 1) / (e^alpha - 1)` in each direction.
#[derive(Debug, Clone, Copy)]
pub struct StretchedSquare {
    pub alpha: f64,
}

impl Default for StretchedSquare {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

impl StretchedSquare {
    fn g(&self, t: f64) -> f64 {
        (self.alpha * t).exp_m1() / self.alpha.exp_m1()
    }

    fn dg(&self, t: f64) -> f64 {
        self.alpha * (self.alpha * t).exp() / self.alpha.exp_m1()
    }
}

impl GeometryMap for StretchedSquare {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, zeta: &[f64], x: &mut [f64]) {
        x[0] = self.g(zeta[0]);
        x[1] = self.g(zeta[1]);
    }

    fn jacobian(&self, zeta: &[f64], jac: &mut [f64]) {
        jac[0] = self.dg(zeta[0]);
        jac[1] = 0.0;
        jac[2] = 0.0;
        jac[3] = self.dg(zeta[1]);
    }
}

/// `(zeta1 (1 - zeta2), zeta2)`: the edge `zeta2 = 1` collapses to the point (0, 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct CollapsedTriangle;

impl GeometryMap for CollapsedTriangle {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, zeta: &[f64], x: &mut [f64]) {
        x[0] = zeta[0] * (1.0 - zeta[1]);
        x[1] = zeta[1];
    }

    fn jacobian(&self, zeta: &[f64], jac: &mut [f64]) {
        jac[0] = 1.0 - zeta[1];
        jac[1] = -zeta[0];
        jac[2] = 0.0;
        jac[3] = 1.0;
    }
}

/// Quarter annulus extruded along `x3 = zeta3`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThickQuarterRing;

impl GeometryMap for ThickQuarterRing {
    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, zeta: &[f64], x: &mut [f64]) {
        QuarterAnnulus.evaluate(&zeta[..2], &mut x[..2]);
        x[2] = zeta[2];
    }

    fn jacobian(&self, zeta: &[f64], jac: &mut [f64]) {
        let mut j2 = [0.0; 4];
        QuarterAnnulus.jacobian(&zeta[..2], &mut j2);
        jac.copy_from_slice(&[j2[0], j2[1], 0.0, j2[2], j2[3], 0.0, 0.0, 0.0, 1.0]);
    }
}

/// Quarter annulus in the plane `x3 = 0` swept by a quarter turn about the
/// axis through (-1, -1, -1) with direction (0, 1, 0).
#[derive(Debug, Clone, Copy, Default)]
pub struct RevolvedQuarterRing;

impl RevolvedQuarterRing {
    const CENTER: [f64; 3] = [-1.0, -1.0, -1.0];
}

impl GeometryMap for RevolvedQuarterRing {
    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, zeta: &[f64], x: &mut [f64]) {
        let mut p = [0.0; 2];
        QuarterAnnulus.evaluate(&zeta[..2], &mut p);
        let c = Self::CENTER;
        let (dx, dz) = (p[0] - c[0], -c[2]);
        // rotation sense chosen so that det J > 0
        let (s, co) = (FRAC_PI_2 * zeta[2]).sin_cos();
        x[0] = c[0] + dx * co - dz * s;
        x[1] = p[1];
        x[2] = c[2] + dx * s + dz * co;
    }

    fn jacobian(&self, zeta: &[f64], jac: &mut [f64]) {
        let mut p = [0.0; 2];
        let mut j2 = [0.0; 4];
        QuarterAnnulus.evaluate(&zeta[..2], &mut p);
        QuarterAnnulus.jacobian(&zeta[..2], &mut j2);
        let c = Self::CENTER;
        let (dx, dz) = (p[0] - c[0], -c[2]);
        let (s, co) = (FRAC_PI_2 * zeta[2]).sin_cos();
        // row 0: d/dzeta of dx*co - dz*s
        jac[0] = j2[0] * co;
        jac[1] = j2[1] * co;
        jac[2] = FRAC_PI_2 * (-dx * s - dz * co);
        jac[3] = j2[2];
        jac[4] = j2[3];
        jac[5] = 0.0;
        jac[6] = j2[0] * s;
        jac[7] = j2[1] * s;
        jac[8] = FRAC_PI_2 * (dx * co - dz * s);
    }
}

/// The benchmark geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinDomain {
    UnitSquare,
    UnitCube,
    QuarterAnnulus,
    StretchedSquare,
    CollapsedTriangle,
    ThickQuarterRing,
    RevolvedQuarterRing,
}

impl BuiltinDomain {
    pub const ALL: [BuiltinDomain; 7] = [
        Self::UnitSquare,
        Self::UnitCube,
        Self::QuarterAnnulus,
        Self::StretchedSquare,
        Self::CollapsedTriangle,
        Self::ThickQuarterRing,
        Self::RevolvedQuarterRing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UnitSquare => "unit_square",
            Self::UnitCube => "unit_cube",
            Self::QuarterAnnulus => "quarter_annulus",
            Self::StretchedSquare => "stretched_square",
            Self::CollapsedTriangle => "collapsed_triangle",
            Self::ThickQuarterRing => "thick_quarter_ring",
            Self::RevolvedQuarterRing => "revolved_quarter_ring",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::UnitCube | Self::ThickQuarterRing | Self::RevolvedQuarterRing => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for BuiltinDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain '{s}'")))
    }
}

pub fn builtin(domain: BuiltinDomain) -> Box<dyn GeometryMap> {
    match domain {
        BuiltinDomain::UnitSquare => Box::new(AffineBox::unit(2)),
        BuiltinDomain::UnitCube => Box::new(AffineBox::unit(3)),
        BuiltinDomain::QuarterAnnulus => Box::new(QuarterAnnulus),
        BuiltinDomain::StretchedSquare => Box::new(StretchedSquare::default()),
        BuiltinDomain::CollapsedTriangle => Box::new(CollapsedTriangle),
        BuiltinDomain::ThickQuarterRing => Box::new(ThickQuarterRing),
        BuiltinDomain::RevolvedQuarterRing => Box::new(RevolvedQuarterRing),
    }
}

/// Determinant and inverse of a 2x2 or 3x3 row-major matrix.
pub(crate) fn det_inv(d: usize, a: &[f64], inv: &mut [f64]) -> f64 {
    if d == 2 {
        let det = a[0] * a[3] - a[1] * a[2];
        inv[0] = a[3] / det;
        inv[1] = -a[1] / det;
        inv[2] = -a[2] / det;
        inv[3] = a[0] / det;
        det
    } else {
        let c00 = a[4] * a[8] - a[5] * a[7];
        let c01 = a[5] * a[6] - a[3] * a[8];
        let c02 = a[3] * a[7] - a[4] * a[6];
        let det = a[0] * c00 + a[1] * c01 + a[2] * c02;
        inv[0] = c00 / det;
        inv[1] = (a[2] * a[7] - a[1] * a[8]) / det;
        inv[2] = (a[1] * a[5] - a[2] * a[4]) / det;
        inv[3] = c01 / det;
        inv[4] = (a[0] * a[8] - a[2] * a[6]) / det;
        inv[5] = (a[2] * a[3] - a[0] * a[5]) / det;
        inv[6] = c02 / det;
        inv[7] = (a[1] * a[6] - a[0] * a[7]) / det;
        inv[8] = (a[0] * a[4] - a[1] * a[3]) / det;
        det
    }
}

/// Writes `Q = det(J) J^{-1} K J^{-T}` into `q` and returns `det(J)`.
///
/// With `grad_x u = J^{-T} grad_zeta u` this is the tensor that turns
/// `int grad_x u . K grad_x v dx` into `int grad_zeta u . Q grad_zeta v dzeta`.
pub(crate) fn q_into(
    map: &dyn GeometryMap,
    coeff: &dyn CoefficientField,
    zeta: &[f64],
    q: &mut [f64],
) -> Result<f64> {
    let d = map.dim();
    let mut jac = [0.0; 9];
    let mut inv = [0.0; 9];
    map.jacobian(zeta, &mut jac[..d * d]);
    let det = det_inv(d, &jac[..d * d], &mut inv[..d * d]);
    if det.abs() < SINGULAR_DET || !det.is_finite() {
        return Err(Error::SingularJacobian {
            det,
            point: zeta.to_vec(),
        });
    }
    // t = J^{-1} K
    let mut t = [0.0; 9];
    if coeff.is_identity() {
        t[..d * d].copy_from_slice(&inv[..d * d]);
    } else {
        let mut x = [0.0; 3];
        let mut k = [0.0; 9];
        map.evaluate(zeta, &mut x[..d]);
        coeff.evaluate(&x[..d], &mut k[..d * d]);
        for i in 0..d {
            for j in 0..d {
                t[i * d + j] = (0..d).map(|l| inv[i * d + l] * k[l * d + j]).sum();
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v: f64 = (0..d).map(|l| t[i * d + l] * inv[j * d + l]).sum::<f64>() * det;
            q[i * d + j] = v;
            q[j * d + i] = v;
        }
    }
    Ok(det)
}

/// The pulled-back diffusion tensor at a parametric point, row-major `d x d`.
pub fn eval_q(
    map: &dyn GeometryMap,
    coeff: &dyn CoefficientField,
    zeta: &[f64],
) -> Result<Vec<f64>> {
    let d = map.dim();
    if zeta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: zeta.len(),
        });
    }
    let mut q = vec![0.0; d * d];
    q_into(map, coeff, zeta, &mut q)?;
    Ok(q)
}

/// Eigenvalues of a symmetric 2x2 or 3x3 matrix, ascending.
pub fn sym_eigenvalues(d: usize, a: &[f64]) -> Vec<f64> {
    if d == 2 {
        let m = 0.5 * (a[0] + a[3]);
        let r = (0.25 * (a[0] - a[3]).powi(2) + a[1] * a[1]).sqrt();
        return vec![m - r, m + r];
    }
    // trigonometric solution of the characteristic cubic
    let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
    let tr = (a[0] + a[4] + a[8]) / 3.0;
    if p1 == 0.0 {
        let mut e = vec![a[0], a[4], a[8]];
        e.sort_by(f64::total_cmp);
        return e;
    }
    let p2 = (a[0] - tr).powi(2) + (a[4] - tr).powi(2) + (a[8] - tr).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [0.0; 9];
    for i in 0..9 {
        b[i] = a[i] / p;
    }
    for i in 0..3 {
        b[4 * i] -= tr / p;
    }
    let detb = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
        + b[2] * (b[3] * b[7] - b[4] * b[6]);
    let phi = (0.5 * detb).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = tr + 2.0 * p * phi.cos();
    let e3 = tr + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * tr - e1 - e3;
    let mut e = vec![e1, e2, e3];
    e.sort_by(f64::total_cmp);
    e
}
