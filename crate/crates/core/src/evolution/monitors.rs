//! Checks evaluated on finished diagnostics.

use serde::{Deserialize, Serialize};

use super::diagnostics::Diagnostics;
use crate::variational::NehariTag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationResiduals {
    /// `max |ΔJ/Δt + ‖u_t‖²| / (1 + ‖u_t‖²)`
    pub r1: f64,
    /// `max |½Δ‖u‖₂²/Δt + ‖u‖² − 3I| / (1 + ‖u‖²)`, midpoint-averaged.
    pub r2: f64,
    /// Largest `‖u(t+δ) − u(t)‖₂² − δ (J(t) − J(t+δ))` over lags of 1–16 steps.
    pub r3: f64,
    pub max_energy_drop: f64,
}

pub fn dissipation_residuals(diag: &Diagnostics) -> DissipationResiduals {
    let rows = &diag.rows;
    let mut out = DissipationResiduals { r1: 0.0, r2: 0.0, r3: 0.0, max_energy_drop: 0.0 };
    for k in 1..rows.len() {
        let (a, b) = (&rows[k - 1], &rows[k]);
        let dt = b.t - a.t;
        if dt <= 0.0 {
            continue;
        }
        let ut2 = b.ut_l2 * b.ut_l2;
        let r1 = ((b.energy - a.energy) / dt + ut2).abs() / (1.0 + ut2);
        let flux = 0.5 * (b.l2 * b.l2 - a.l2 * a.l2) / dt;
        let mid = 0.5 * ((a.h2 * a.h2 - 3.0 * a.i) + (b.h2 * b.h2 - 3.0 * b.i));
        let scale = 0.5 * (a.h2 * a.h2 + b.h2 * b.h2);
        let r2 = (flux + mid).abs() / (1.0 + scale);
        out.r1 = out.r1.max(r1);
        out.r2 = out.r2.max(r2);
        out.max_energy_drop = out.max_energy_drop.max(rows[0].energy - b.energy);
        for (lag, d2) in b.lag_dist_sq.iter().enumerate() {
            let j = k - 1 - lag;
            let delta = b.t - rows[j].t;
            let gap = d2 - delta * (rows[j].energy - b.energy);
            out.r3 = out.r3.max(gap);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub checked: usize,
    pub violations: usize,
    pub max_violation: f64,
    /// Steps where `l2` strictly increased / decreased.
    pub increasing: usize,
    pub decreasing: usize,
}

impl MonotonicityReport {
    pub fn all_increasing(&self) -> bool {
        self.checked > 0 && self.increasing == self.checked
    }

    pub fn all_decreasing(&self) -> bool {
        self.checked > 0 && self.decreasing == self.checked
    }
}

/// `NMinus ⇒ l2` non-decreasing, `NPlus ⇒ l2` non-increasing over the step
/// leaving each row, up to `(h² + dt)·l2`.
pub fn monotonicity_monitor(diag: &Diagnostics) -> MonotonicityReport {
    let mut rep = MonotonicityReport::default();
    let h2 = if diag.h.is_finite() { diag.h * diag.h } else { 0.0 };
    for w in diag.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        rep.checked += 1;
        let d = b.l2 - a.l2;
        if d > 0.0 {
            rep.increasing += 1;
        } else if d < 0.0 {
            rep.decreasing += 1;
        }
        let tol = (h2 + b.dt) * a.l2;
        let v = match a.nehari.tag {
            NehariTag::NMinus => (-d - tol).max(0.0),
            NehariTag::NPlus => (d - tol).max(0.0),
            _ => 0.0,
        };
        if v > 0.0 {
            rep.violations += 1;
            rep.max_violation = rep.max_violation.max(v);
        }
    }
    rep
}

/// `(direct NPlus↔NMinus transitions, rows tagged OnN)`.
pub fn nehari_crossings(diag: &Diagnostics) -> (usize, usize) {
    let direct = diag
        .rows
        .windows(2)
        .filter(|w| {
            matches!(
                (w[0].nehari.tag, w[1].nehari.tag),
                (NehariTag::NPlus, NehariTag::NMinus) | (NehariTag::NMinus, NehariTag::NPlus)
            )
        })
        .count();
    let on = diag.rows.iter().filter(|r| r.nehari.tag == NehariTag::OnN).count();
    (direct, on)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct W14Report {
    pub checked: usize,
    pub violations: usize,
    /// Largest `h2 / (¾ ‖∇u‖₄²)` over `NMinus` rows.
    pub max_ratio: f64,
}

/// `h2 < ¾ w14_4^{1/2} (1 + tol)` on `NMinus` rows.
pub fn w14_coupling(diag: &Diagnostics, tol: f64) -> W14Report {
    let mut rep = W14Report::default();
    for r in diag.rows.iter().filter(|r| r.nehari.tag == NehariTag::NMinus) {
        rep.checked += 1;
        let ratio = r.h2 / (0.75 * r.w14_4.sqrt());
        rep.max_ratio = rep.max_ratio.max(ratio);
        if !(ratio < 1.0 + tol) {
            rep.violations += 1;
        }
    }
    rep
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
            e += 1;
        }
        let avg = 0.5 * (k + e) as f64;
        for &i in &idx[k..=e] {
            r[i] = avg;
        }
        k = e + 1;
    }
    r
}

/// Rank correlation of `l2` and `−cum_grad` over the trailing `tail`
/// fraction of rows.
pub fn co_divergence(diag: &Diagnostics, tail: f64) -> f64 {
    let n = diag.len();
    let start = n - ((n as f64 * tail).ceil() as usize).clamp(2.min(n), n);
    let rows = &diag.rows[start..];
    let l2: Vec<f64> = rows.iter().map(|r| r.l2).collect();
    let cg: Vec<f64> = rows.iter().map(|r| -r.cum_grad).collect();
    spearman(&l2, &cg)
}

/// `h2` does not double over the first accepted step.
pub fn short_time_growth(diag: &Diagnostics) -> bool {
    match (diag.rows.first(), diag.rows.get(1)) {
        (Some(a), Some(b)) => b.h2 <= 2.0 * a.h2,
        _ => true,
    }
}

/// `(sup h2² + Σ dt‖Δ²u‖₂² + Σ dt‖u_t‖₂²) / (h2(0)² + λ² Σ dt‖f‖₂²)`.
pub fn a_priori_ratio(diag: &Diagnostics, lambda: f64) -> f64 {
    let Some(first) = diag.rows.first() else { return 0.0 };
    let mut sup: f64 = 0.0;
    let (mut bil, mut ut, mut src) = (0.0, 0.0, 0.0);
    for r in &diag.rows {
        sup = sup.max(r.h2 * r.h2);
    }
    for r in diag.rows.iter().skip(1) {
        bil += r.dt * r.bilap_l2 * r.bilap_l2;
        ut += r.dt * r.ut_l2 * r.ut_l2;
        src += r.dt * r.source_l2 * r.source_l2;
    }
    let rhs = first.h2 * first.h2 + lambda * lambda * src;
    if rhs == 0.0 {
        return 0.0;
    }
    (sup + bil + ut) / rhs
}
