//! Energy landscape: `J(v) = ½‖Δv‖₂² − I(v)` with `I(v) = ∫ v_x v_y v_xy`,
//! the norms it is measured in and the Nehari splitting `‖v‖² ≷ 3I(v)`.

use serde::{Deserialize, Serialize};

use crate::grid::Field2D;
use crate::operators::{gradient, hessian_det, inner, laplacian, laplacian_energy};
use crate::parallel;

/// Default relative tolerance for [`nehari_classify`].
pub const NEHARI_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBundle {
    /// `‖v‖₂`
    pub l2: f64,
    /// `‖Δv‖₂`
    pub h2: f64,
    /// `∫|∇v|⁴`
    pub w14_4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NehariTag {
    Zero,
    NPlus,
    OnN,
    NMinus,
}

impl NehariTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            NehariTag::Zero => "Zero",
            NehariTag::NPlus => "NPlus",
            NehariTag::OnN => "OnN",
            NehariTag::NMinus => "NMinus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Zero" => NehariTag::Zero,
            "NPlus" => NehariTag::NPlus,
            "OnN" => NehariTag::OnN,
            "NMinus" => NehariTag::NMinus,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariClass {
    pub tag: NehariTag,
    /// `‖v‖² − 3I(v)`
    pub margin: f64,
}

/// `I(v) = ∫ v_x v_y v_xy`.
#[allow(non_snake_case)]
pub fn nonlinear_I(v: &Field2D) -> f64 {
    let (vx, vy) = gradient(v);
    let vxy = gradient(&vx).1;
    let n = v.n();
    let h = v.grid().h();
    let (a, b, c) = (vx.values(), vy.values(), vxy.values());
    h * h
        * parallel::ordered_sum(n, |i| {
            (i * n..(i + 1) * n).map(|k| a[k] * b[k] * c[k]).sum()
        })
}

/// `∫|Δv|²`, the square of the working norm.
pub fn h2_sq(v: &Field2D) -> f64 {
    laplacian_energy(v)
}

pub fn norms(v: &Field2D) -> NormBundle {
    let (vx, vy) = gradient(v);
    let g2 = vx.zip_with(&vy, |a, b| a * a + b * b);
    NormBundle {
        l2: inner(v, v).sqrt(),
        h2: h2_sq(v).sqrt(),
        w14_4: inner(&g2, &g2),
    }
}

#[allow(non_snake_case)]
pub fn energy_J(v: &Field2D) -> f64 {
    0.5 * h2_sq(v) - nonlinear_I(v)
}

/// `J(sv)` from the two homogeneous parts of `v`.
pub fn ray_energy(h2_sq: f64, i: f64, s: f64) -> f64 {
    0.5 * s * s * h2_sq - s * s * s * i
}

/// `∫ v det(D²v) − 3I(v)`.
pub fn identity8_residual(v: &Field2D) -> f64 {
    inner(v, &hessian_det(v)) - 3.0 * nonlinear_I(v)
}

/// `I(v) + ¼ ∫ Δv |∇v|²`.
pub fn identity16_residual(v: &Field2D) -> f64 {
    nonlinear_I(v) + 0.25 * gradient_coupling(v)
}

/// `∫ Δv |∇v|²`.
pub fn gradient_coupling(v: &Field2D) -> f64 {
    let (vx, vy) = gradient(v);
    let g2 = vx.zip_with(&vy, |a, b| a * a + b * b);
    inner(&laplacian(v), &g2)
}

/// `¼ ‖Δv‖₂ ‖∇v‖₄² − I(v)`.
pub fn holder17_gap(v: &Field2D) -> f64 {
    let nb = norms(v);
    0.25 * nb.h2 * nb.w14_4.sqrt() - nonlinear_I(v)
}

pub fn nehari_classify(v: &Field2D, tol: f64) -> NehariClass {
    if v.is_zero() {
        return NehariClass { tag: NehariTag::Zero, margin: 0.0 };
    }
    classify_parts(h2_sq(v), nonlinear_I(v), tol)
}

/// Classification from precomputed `‖v‖²` and `I(v)`.
pub fn classify_parts(h2_sq: f64, i: f64, tol: f64) -> NehariClass {
    let margin = h2_sq - 3.0 * i;
    let scale = h2_sq.max((3.0 * i).abs());
    let tag = if scale == 0.0 {
        NehariTag::Zero
    } else if margin > tol * scale {
        NehariTag::NPlus
    } else if margin < -tol * scale {
        NehariTag::NMinus
    } else {
        NehariTag::OnN
    };
    NehariClass { tag, margin }
}

/// Exact `L²_h` gradient of the discrete `I`: with `a = δ_x v`,
/// `b = δ_y v`, `c = δ_xy v`, it is `−δ_x(bc) − δ_y(ac) + δ_xy(ab)`, a
/// divergence-form discretization of `det(D²v)` satisfying
/// `⟨v, G(v)⟩ = 3I(v)` to roundoff.
pub fn variational_det(v: &Field2D) -> Field2D {
    let (a, b) = gradient(v);
    let c = gradient(&a).1;
    let bc = b.zip_with(&c, |x, y| x * y);
    let ac = a.zip_with(&c, |x, y| x * y);
    let ab = a.zip_with(&b, |x, y| x * y);
    let t1 = gradient(&bc).0;
    let t2 = gradient(&ac).1;
    let t3 = gradient(&gradient(&ab).0).1;
    let mut out = t3;
    out.axpy(-1.0, &t1);
    out.axpy(-1.0, &t2);
    out
}
