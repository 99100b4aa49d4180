//! Training objectives: pointwise cross-entropy, pairwise soft-hinge (BPR),
//! the interest-boundary hybrid (UIB), and the SML composite with its
//! UIB-boosted main term. Every operation returns both the loss value and
//! its gradient with respect to each input score, so scorers stay decoupled
//! from objectives.
//!
//! Sign conventions, once and for all:
//!
//! * scores are "higher = more relevant" for every model (the metric scorer
//!   negates its squared distance to comply);
//! * `lnsig(x) = -ln σ(x)` is small when `x` is large positive, so it is
//!   applied to a *correctness margin* (positive margin = correctly ordered);
//! * the penalty primitive [`Phi`] is applied to a *violation* `Δ`
//!   (positive `Δ` = wrong-way comparison): `φ(Δ) = lnsig(-Δ) = softplus(Δ)`.

use serde::{Deserialize, Serialize};

/// Numerically stable `ln(1 + e^x)`. No overflow for |x| well beyond 1e3.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function `σ(x) = 1 / (1 + e^(-x))`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)`, the soft hinge. Decays to 0 as `x → +∞`, grows linearly as
/// `x → -∞`.
pub fn lnsig(x: f64) -> f64 {
    softplus(-x)
}

/// Penalty primitive φ applied to a violation margin Δ. The boundary and
/// pairwise losses are parametric in φ; the instantiation used throughout
/// is the LnSigmoid form. (A hard hinge enters only via the SML composite,
/// which spells its hinges out explicitly.)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Phi {
    #[default]
    LnSigmoid,
}

impl Phi {
    /// φ(Δ).
    pub fn value(self, delta: f64) -> f64 {
        match self {
            Phi::LnSigmoid => softplus(delta),
        }
    }

    /// dφ/dΔ.
    pub fn grad(self, delta: f64) -> f64 {
        match self {
            Phi::LnSigmoid => sigmoid(delta),
        }
    }
}

/// Which objective a run optimizes, with its coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum LossSpec {
    /// Binary cross-entropy on raw scores (label 1 positives, 0 negatives).
    PointwiseCe,
    /// Soft-hinge on positive-negative score differences (BPR).
    PairwiseLnsig,
    /// Interest-boundary hybrid with LnSigmoid penalty.
    UibLnsig { alpha: f64 },
    /// Metric-learning composite: ranking hinge + pos/neg item spread hinge
    /// + margin-maximizing regularizer.
    Sml { lambda: f64, gamma: f64 },
    /// SML with its main hinge re-anchored on the interest boundary.
    SmlUib { alpha: f64, lambda: f64, gamma: f64 },
}

impl LossSpec {
    /// Whether this objective learns a per-user boundary.
    pub fn uses_boundary(self) -> bool {
        matches!(self, LossSpec::UibLnsig { .. } | LossSpec::SmlUib { .. })
    }

    /// Whether this objective learns per-user margins.
    pub fn uses_margins(self) -> bool {
        matches!(self, LossSpec::Sml { .. } | LossSpec::SmlUib { .. })
    }

    pub fn alpha(self) -> Option<f64> {
        match self {
            LossSpec::UibLnsig { alpha } | LossSpec::SmlUib { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn validate(self) -> Result<(), String> {
        if let Some(a) = self.alpha() {
            if !(a > 0.0) {
                return Err(format!("alpha must be > 0, got {a}"));
            }
        }
        if let LossSpec::Sml { lambda, gamma } | LossSpec::SmlUib { lambda, gamma, .. } = self {
            if lambda < 0.0 || gamma < 0.0 {
                return Err(format!("lambda and gamma must be >= 0, got {lambda}, {gamma}"));
            }
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            LossSpec::PointwiseCe => "pointwise-ce",
            LossSpec::PairwiseLnsig => "pairwise-lnsig",
            LossSpec::UibLnsig { .. } => "uib-lnsig",
            LossSpec::Sml { .. } => "sml",
            LossSpec::SmlUib { .. } => "sml-uib",
        }
    }
}

/// Loss value plus gradients. Unused slots stay at their zero defaults;
/// `total` always equals the coefficient-weighted sum of the active terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    /// Positive-side term (sum over positives), before any α weighting.
    pub l_pos: f64,
    /// Negative-side term (sum over negatives), before any α weighting.
    pub l_neg: f64,
    /// SML main hinge (or its UIB-boosted replacement, α included).
    pub l_a: f64,
    /// SML pos/neg item spread hinge.
    pub l_b: f64,
    /// SML margin regularizer `-(m_u + n_u)`.
    pub l_am: f64,
    /// Gradient w.r.t. each positive score, aligned with the input order.
    pub d_pos: Vec<f64>,
    /// Gradient w.r.t. each negative score, aligned with the input order.
    pub d_neg: Vec<f64>,
    /// Gradient w.r.t. the boundary b_u.
    pub d_boundary: f64,
    /// Gradient w.r.t. the item-item score s(n,p) (SML families).
    pub d_np: f64,
    /// Gradients w.r.t. the margins m_u / n_u (SML families).
    pub d_m: f64,
    pub d_n: f64,
}

/// Pairwise soft-hinge loss on one (positive, negative) score pair:
/// `lnsig(s_p - s_n)`. The gradient magnitude `σ(s_n - s_p)` vanishes once
/// the pair is well ordered — the root of late-training gradient starvation.
pub fn pairwise_bpr_loss(s_p: f64, s_n: f64) -> LossValue {
    let g = sigmoid(s_n - s_p);
    LossValue {
        total: lnsig(s_p - s_n),
        d_pos: vec![-g],
        d_neg: vec![g],
        ..LossValue::default()
    }
}

/// Interest-boundary hybrid loss for one user:
///
/// ```text
/// L = Σ_p φ(b_u - s_p)  +  α · Σ_n φ(s_n - b_u)
/// ```
///
/// pointwise in structure (each sample contributes independently) yet
/// pairwise in effect (every sample is compared against b_u). The boundary
/// receives gradient from both sides with opposite signs, which is what
/// pulls it between the two score populations.
pub fn uib_loss(b_u: f64, pos: &[f64], neg: &[f64], alpha: f64, phi: Phi) -> LossValue {
    debug_assert!(alpha > 0.0, "alpha must be positive");
    let mut l_pos = 0.0;
    let mut l_neg = 0.0;
    let mut d_boundary = 0.0;
    let mut d_pos = Vec::with_capacity(pos.len());
    let mut d_neg = Vec::with_capacity(neg.len());
    for &s_p in pos {
        let delta = b_u - s_p;
        l_pos += phi.value(delta);
        let g = phi.grad(delta);
        d_pos.push(-g);
        d_boundary += g;
    }
    for &s_n in neg {
        let delta = s_n - b_u;
        l_neg += phi.value(delta);
        let g = phi.grad(delta);
        d_neg.push(alpha * g);
        d_boundary -= alpha * g;
    }
    LossValue {
        total: l_pos + alpha * l_neg,
        l_pos,
        l_neg,
        d_pos,
        d_neg,
        d_boundary,
        ..LossValue::default()
    }
}

/// Binary cross-entropy computed stably from the raw (pre-sigmoid) score:
/// `softplus(s) - label·s`, with gradient `σ(s) - label`.
pub fn pointwise_ce_loss(raw_score: f64, label: u8) -> LossValue {
    debug_assert!(label <= 1, "label must be 0 or 1");
    let l = f64::from(label);
    let value = softplus(raw_score) - l * raw_score;
    let grad = sigmoid(raw_score) - l;
    let (l_pos, l_neg, d_pos, d_neg) = if label == 1 {
        (value, 0.0, vec![grad], vec![])
    } else {
        (0.0, value, vec![], vec![grad])
    };
    LossValue { total: value, l_pos, l_neg, d_pos, d_neg, ..LossValue::default() }
}

/// Hard hinge `|x|₊` with subgradient 0 at the kink.
fn hinge(x: f64) -> (f64, f64) {
    if x > 0.0 {
        (x, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// SML composite for one (positive, negative) pair:
///
/// ```text
/// L_A  = |s(u,n) - s(u,p) + m_u|₊      ranking hinge
/// L_B  = |s(n,p) - s(u,p) + n_u|₊      pos/neg item spread hinge
/// L_AM = -(m_u + n_u)                  margin-maximizing regularizer
/// total = L_A + λ·L_B + γ·L_AM
/// ```
///
/// `s_np` is the item-item metric score between the negative and positive
/// embeddings. Margins are learnable; the caller clamps them after updates.
pub fn sml_loss(
    s_up: f64,
    s_un: f64,
    s_np: f64,
    m_u: f64,
    n_u: f64,
    lambda: f64,
    gamma: f64,
) -> LossValue {
    let (l_a, a_act) = hinge(s_un - s_up + m_u);
    let (l_b, b_act) = hinge(s_np - s_up + n_u);
    let l_am = -(m_u + n_u);
    LossValue {
        total: l_a + lambda * l_b + gamma * l_am,
        l_a,
        l_b,
        l_am,
        d_pos: vec![-a_act - lambda * b_act],
        d_neg: vec![a_act],
        d_np: lambda * b_act,
        d_m: a_act - gamma,
        d_n: lambda * b_act - gamma,
        ..LossValue::default()
    }
}

/// SML with the ranking hinge re-anchored on the interest boundary:
///
/// ```text
/// L'_A = |s(u,n) - b_u + m_u|₊ + α·|b_u - s(u,p) + m_u|₊
/// ```
///
/// The same learned margin m_u backs both half-hinges; L_B and L_AM are
/// unchanged from [`sml_loss`].
#[allow(clippy::too_many_arguments)]
pub fn sml_uib_loss(
    s_up: f64,
    s_un: f64,
    b_u: f64,
    s_np: f64,
    m_u: f64,
    n_u: f64,
    alpha: f64,
    lambda: f64,
    gamma: f64,
) -> LossValue {
    debug_assert!(alpha > 0.0, "alpha must be positive");
    let (h_neg, neg_act) = hinge(s_un - b_u + m_u);
    let (h_pos, pos_act) = hinge(b_u - s_up + m_u);
    let (l_b, b_act) = hinge(s_np - s_up + n_u);
    let l_a = h_neg + alpha * h_pos;
    let l_am = -(m_u + n_u);
    LossValue {
        total: l_a + lambda * l_b + gamma * l_am,
        l_pos: h_pos,
        l_neg: h_neg,
        l_a,
        l_b,
        l_am,
        d_pos: vec![-alpha * pos_act - lambda * b_act],
        d_neg: vec![neg_act],
        d_boundary: -neg_act + alpha * pos_act,
        d_np: lambda * b_act,
        d_m: neg_act + alpha * pos_act - gamma,
        d_n: lambda * b_act - gamma,
        ..LossValue::default()
    }
}

/// Fractions of training comparisons that still carry useful gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    /// Share of (positive, negative) pairs that are misordered or tied:
    /// `|{(p,n): s_n - s_p ≥ 0}| / (|P|·|N|)`.
    pub pairwise_fraction: f64,
    /// Share of samples on the wrong side of (or exactly on) the boundary:
    /// `(|{p: s_p ≤ b_u}| + |{n: s_n ≥ b_u}|) / (|P| + |N|)`.
    /// Present only when a boundary was supplied.
    pub uib_fraction: Option<f64>,
}

/// Raw corrupted-comparison counts; the building block behind
/// [`effective_pair_stats`] and the per-epoch corrupted-rate tracker
/// (which pools counts across many instances before dividing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorruptedCounts {
    /// Misordered-or-tied (positive, negative) pairs.
    pub pair_bad: usize,
    /// All (positive, negative) pairs: `|P|·|N|`.
    pub pair_total: usize,
    /// Samples on the wrong side of (or exactly on) the boundary.
    pub side_bad: usize,
    /// All samples: `|P| + |N|`. Zero when no boundary was supplied.
    pub side_total: usize,
}

impl CorruptedCounts {
    pub fn merge(&mut self, other: CorruptedCounts) {
        self.pair_bad += other.pair_bad;
        self.pair_total += other.pair_total;
        self.side_bad += other.side_bad;
        self.side_total += other.side_total;
    }
}

/// Count corrupted comparisons under both the pairwise and the boundary
/// view of the same score lists. Ties count as corrupted in both: a tied
/// pair still emits a soft-hinge gradient, and for hard hinges it sits on
/// the active-set border, so counting it keeps the tracker conservative and
/// loss-family-agnostic.
pub fn corrupted_counts(pos: &[f64], neg: &[f64], b_u: Option<f64>) -> CorruptedCounts {
    // sort the negatives once; for each positive, the corrupted pairs are a
    // suffix of the sorted list
    let mut neg_sorted: Vec<f64> = neg.to_vec();
    neg_sorted.sort_unstable_by(f64::total_cmp);
    let mut pair_bad = 0usize;
    for &s_p in pos {
        let below = neg_sorted.partition_point(|&s_n| s_n < s_p);
        pair_bad += neg_sorted.len() - below;
    }
    let (side_bad, side_total) = match b_u {
        Some(b) => {
            let bad_pos = pos.iter().filter(|&&s| s <= b).count();
            let bad_neg = neg.iter().filter(|&&s| s >= b).count();
            (bad_pos + bad_neg, pos.len() + neg.len())
        }
        None => (0, 0),
    };
    CorruptedCounts { pair_bad, pair_total: pos.len() * neg.len(), side_bad, side_total }
}

/// Fractions of training comparisons that still carry useful gradient, for
/// one (positive-list, negative-list, boundary) instance.
pub fn effective_pair_stats(pos: &[f64], neg: &[f64], b_u: Option<f64>) -> PairStats {
    assert!(!pos.is_empty() && !neg.is_empty(), "score lists must be nonempty");
    let c = corrupted_counts(pos, neg, b_u);
    PairStats {
        pairwise_fraction: c.pair_bad as f64 / c.pair_total as f64,
        uib_fraction: b_u.map(|_| c.side_bad as f64 / c.side_total as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    /// Central finite difference of a scalar function.
    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!((got - want).abs() <= tol, "got {got}, want {want} (tol {tol})");
    }

    #[test]
    fn lnsig_matches_frozen_oracle_values() {
        assert_close(lnsig(0.0), LN2, 1e-15);
        // high-precision references for ln(1 + e^(-x))
        assert_close(lnsig(1.0), 0.313_261_687_518_222_84, 1e-15);
        assert_close(lnsig(3.0), 0.048_587_351_573_742_03, 1e-15);
        assert_close(lnsig(10.0), 4.539_889_921_686_465e-5, 1e-18);
        // the shorter rounded form, for cross-checking by eye
        assert_close(lnsig(1.0), 0.313262, 1e-6);
    }

    #[test]
    fn lnsig_is_stable_at_extremes() {
        assert_eq!(lnsig(1e3), 0.0);
        assert_close(lnsig(-1e3), 1e3, 1e-9);
        assert!(lnsig(750.0).is_finite());
        assert!(lnsig(-750.0).is_finite());
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_close(sigmoid(10.0) + sigmoid(-10.0), 1.0, 1e-15);
        assert!(sigmoid(-745.0) >= 0.0);
    }

    #[test]
    fn bpr_tied_pair_gives_ln2_and_half_gradients() {
        let lv = pairwise_bpr_loss(1.3, 1.3);
        assert_close(lv.total, LN2, 1e-15);
        assert_close(lv.d_pos[0], -0.5, 1e-15);
        assert_close(lv.d_neg[0], 0.5, 1e-15);
    }

    #[test]
    fn bpr_gradient_vanishes_at_wide_separation() {
        let lv = pairwise_bpr_loss(10.0, 0.0);
        assert_close(lv.total, 4.539_889_921_686_465e-5, 1e-18);
        assert!(lv.d_pos[0].abs() < 1e-4, "gradient should vanish, got {}", lv.d_pos[0]);
    }

    #[test]
    fn bpr_gradient_matches_finite_difference() {
        for (s_p, s_n) in [(0.3, -0.2), (2.0, 2.5), (-1.0, -1.0), (5.0, 1.0)] {
            let lv = pairwise_bpr_loss(s_p, s_n);
            let dp = fd(|x| pairwise_bpr_loss(x, s_n).total, s_p, 1e-6);
            let dn = fd(|x| pairwise_bpr_loss(s_p, x).total, s_n, 1e-6);
            assert_close(lv.d_pos[0], dp, 1e-6);
            assert_close(lv.d_neg[0], dn, 1e-6);
        }
    }

    #[test]
    fn uib_symmetric_instance_is_two_ln2_with_neutral_boundary() {
        let lv = uib_loss(0.7, &[0.7], &[0.7], 1.0, Phi::LnSigmoid);
        assert_close(lv.total, 2.0 * LN2, 1e-15);
        assert_eq!(lv.d_boundary, 0.0);
    }

    #[test]
    fn uib_well_separated_instance_matches_scalar_oracle() {
        let lv = uib_loss(0.0, &[3.0], &[-3.0], 1.0, Phi::LnSigmoid);
        assert_close(lv.total, 2.0 * lnsig(3.0), 1e-15);
        assert_close(lv.total, 0.09717, 1e-5);
    }

    #[test]
    fn uib_total_decomposes_exactly() {
        let lv = uib_loss(0.4, &[1.0, 0.2, -0.3], &[0.5, 0.1], 7.5, Phi::LnSigmoid);
        assert_eq!(lv.total, lv.l_pos + 7.5 * lv.l_neg);
    }

    #[test]
    fn uib_boundary_gradient_is_antisymmetric_at_equal_distance() {
        for delta in [0.1, 1.0, 3.7] {
            let lv = uib_loss(0.5, &[0.5 + delta], &[0.5 - delta], 1.0, Phi::LnSigmoid);
            assert_eq!(lv.d_boundary, 0.0, "delta {delta}");
        }
    }

    #[test]
    fn uib_gradients_match_finite_differences() {
        let pos = [1.2, -0.4, 0.9];
        let neg = [0.3, 0.8];
        let (b, alpha) = (0.25, 2.5);
        let lv = uib_loss(b, &pos, &neg, alpha, Phi::LnSigmoid);
        let db = fd(|x| uib_loss(x, &pos, &neg, alpha, Phi::LnSigmoid).total, b, 1e-6);
        assert_close(lv.d_boundary, db, 1e-6);
        for i in 0..pos.len() {
            let dp = fd(
                |x| {
                    let mut p = pos;
                    p[i] = x;
                    uib_loss(b, &p, &neg, alpha, Phi::LnSigmoid).total
                },
                pos[i],
                1e-6,
            );
            assert_close(lv.d_pos[i], dp, 1e-6);
        }
        for j in 0..neg.len() {
            let dn = fd(
                |x| {
                    let mut n = neg;
                    n[j] = x;
                    uib_loss(b, &pos, &n, alpha, Phi::LnSigmoid).total
                },
                neg[j],
                1e-6,
            );
            assert_close(lv.d_neg[j], dn, 1e-6);
        }
    }

    #[test]
    fn ce_matches_oracle_values() {
        assert_close(pointwise_ce_loss(0.0, 1).total, LN2, 1e-15);
        assert_close(pointwise_ce_loss(0.0, 0).total, LN2, 1e-15);
        assert_close(pointwise_ce_loss(2.0, 1).total, 0.126_928_011_042_972_6, 1e-15);
        assert_close(pointwise_ce_loss(2.0, 1).total, 0.126928, 1e-6);
    }

    #[test]
    fn ce_gradient_is_sigmoid_minus_label() {
        for s in [-3.0, 0.0, 0.7, 4.2] {
            for label in [0u8, 1] {
                let lv = pointwise_ce_loss(s, label);
                let g = if label == 1 { lv.d_pos[0] } else { lv.d_neg[0] };
                assert_close(g, sigmoid(s) - f64::from(label), 1e-15);
                let num = fd(|x| pointwise_ce_loss(x, label).total, s, 1e-6);
                assert_close(g, num, 1e-6);
            }
        }
    }

    #[test]
    fn sml_satisfied_hinges_leave_only_margin_regularizer() {
        // positive well above negative and spread hinge slack
        let lv = sml_loss(2.0, 0.0, -1.0, 0.5, 0.5, 0.3, 0.1);
        assert_eq!(lv.l_a, 0.0);
        assert_eq!(lv.l_b, 0.0);
        assert_close(lv.total, 0.1 * -(1.0), 1e-15);
    }

    #[test]
    fn sml_tied_scores_yield_the_margin() {
        let lv = sml_loss(1.0, 1.0, -5.0, 0.5, 0.5, 0.0, 0.0);
        assert_close(lv.l_a, 0.5, 1e-15);
    }

    #[test]
    fn sml_hinges_match_clamp_oracle() {
        let cases = [
            (0.3, 0.9, 0.1, 0.4, 0.2, 0.7, 0.05),
            (-1.0, -0.5, -2.0, 1.0, 0.0, 0.0, 1.0),
            (2.0, -3.0, 1.0, 0.2, 0.9, 1.5, 0.3),
        ];
        for (s_up, s_un, s_np, m, n, lambda, gamma) in cases {
            let lv = sml_loss(s_up, s_un, s_np, m, n, lambda, gamma);
            let l_a = f64::max(0.0, s_un - s_up + m);
            let l_b = f64::max(0.0, s_np - s_up + n);
            assert_close(lv.l_a, l_a, 1e-12);
            assert_close(lv.l_b, l_b, 1e-12);
            assert_close(lv.total, l_a + lambda * l_b + gamma * -(m + n), 1e-12);
        }
    }

    #[test]
    fn sml_gradients_match_finite_differences_away_from_kinks() {
        let (s_up, s_un, s_np, m, n, lambda, gamma) = (0.3, 0.9, 0.1, 0.4, 0.25, 0.7, 0.05);
        let lv = sml_loss(s_up, s_un, s_np, m, n, lambda, gamma);
        let h = 1e-6;
        assert_close(lv.d_pos[0], fd(|x| sml_loss(x, s_un, s_np, m, n, lambda, gamma).total, s_up, h), 1e-6);
        assert_close(lv.d_neg[0], fd(|x| sml_loss(s_up, x, s_np, m, n, lambda, gamma).total, s_un, h), 1e-6);
        assert_close(lv.d_np, fd(|x| sml_loss(s_up, s_un, x, m, n, lambda, gamma).total, s_np, h), 1e-6);
        assert_close(lv.d_m, fd(|x| sml_loss(s_up, s_un, s_np, x, n, lambda, gamma).total, m, h), 1e-6);
        assert_close(lv.d_n, fd(|x| sml_loss(s_up, s_un, s_np, m, x, lambda, gamma).total, n, h), 1e-6);
    }

    #[test]
    fn sml_uib_slack_hinges_vanish() {
        // boundary midway between scores, margins small: both half-hinges slack
        let lv = sml_uib_loss(2.0, -2.0, 0.0, -5.0, 0.5, 0.5, 1.0, 0.0, 0.0);
        assert_eq!(lv.l_a, 0.0);
    }

    #[test]
    fn sml_uib_both_hinges_at_margin() {
        // s_un = b_u and s_up = b_u put both half-hinges exactly at m_u
        let lv = sml_uib_loss(1.0, 1.0, 1.0, -5.0, 0.3, 0.0, 2.0, 0.0, 0.0);
        assert_close(lv.l_a, 0.3 + 2.0 * 0.3, 1e-15);
        assert_close(lv.total, 0.9, 1e-15);
    }

    #[test]
    fn sml_uib_gradients_match_finite_differences_away_from_kinks() {
        // first tuple: all hinges slack; second: all hinges active
        let cases =
            [(1.4, -0.2, 0.5, -0.7, 0.45, 0.25), (0.2, 0.8, 0.4, 0.3, 0.45, 0.25)];
        let (alpha, lambda, gamma) = (2.0, 0.6, 0.1);
        for (s_up, s_un, b, s_np, m, n) in cases {
            let lv = sml_uib_loss(s_up, s_un, b, s_np, m, n, alpha, lambda, gamma);
            let h = 1e-6;
            let f = |s_up: f64, s_un: f64, b: f64, s_np: f64, m: f64, n: f64| {
                sml_uib_loss(s_up, s_un, b, s_np, m, n, alpha, lambda, gamma).total
            };
            assert_close(lv.d_pos[0], fd(|x| f(x, s_un, b, s_np, m, n), s_up, h), 1e-6);
            assert_close(lv.d_neg[0], fd(|x| f(s_up, x, b, s_np, m, n), s_un, h), 1e-6);
            assert_close(lv.d_boundary, fd(|x| f(s_up, s_un, x, s_np, m, n), b, h), 1e-6);
            assert_close(lv.d_np, fd(|x| f(s_up, s_un, b, x, m, n), s_np, h), 1e-6);
            assert_close(lv.d_m, fd(|x| f(s_up, s_un, b, s_np, x, n), m, h), 1e-6);
            assert_close(lv.d_n, fd(|x| f(s_up, s_un, b, s_np, m, x), n, h), 1e-6);
        }
    }

    #[test]
    fn pair_stats_reproduce_the_motivating_scenario() {
        // three positives, three negatives, boundary between the clusters:
        // only one of the nine pairs is misordered, but two of the six
        // samples sit on the wrong side of the boundary
        let pos = [3.0, 1.5, 2.5];
        let neg = [0.5, 2.0, 1.0];
        let stats = effective_pair_stats(&pos, &neg, Some(1.8));
        assert_close(stats.pairwise_fraction, 1.0 / 9.0, 1e-15);
        assert_close(stats.uib_fraction.unwrap(), 1.0 / 3.0, 1e-15);
    }

    #[test]
    fn pair_stats_fully_separated_and_fully_tied() {
        let s = effective_pair_stats(&[2.0, 3.0], &[0.0, 1.0], Some(1.5));
        assert_eq!(s.pairwise_fraction, 0.0);
        assert_eq!(s.uib_fraction, Some(0.0));

        let t = effective_pair_stats(&[1.0], &[1.0], Some(1.0));
        assert_eq!(t.pairwise_fraction, 1.0);
        assert_eq!(t.uib_fraction, Some(1.0));
    }

    #[test]
    fn pair_stats_without_boundary_skips_uib_side() {
        let s = effective_pair_stats(&[1.0], &[0.0], None);
        assert_eq!(s.uib_fraction, None);
    }

    #[test]
    fn loss_spec_validation() {
        assert!(LossSpec::UibLnsig { alpha: 0.0 }.validate().is_err());
        assert!(LossSpec::UibLnsig { alpha: 8.0 }.validate().is_ok());
        assert!(LossSpec::Sml { lambda: -0.1, gamma: 0.0 }.validate().is_err());
        assert!(LossSpec::SmlUib { alpha: 1.0, lambda: 0.3, gamma: 64.0 }.validate().is_ok());
    }
}
