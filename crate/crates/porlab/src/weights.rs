//! Muckenhoupt-style diagnostics for distance-power weights.
//!
//! For a nonempty target set `E` and an exponent `alpha`, the weight under
//! study is `w(x) = dist(x, E)^{-alpha}`, evaluated off the target (the
//! target carries no mass in any regime this crate models, so its points are
//! excluded from every sum). The module computes weighted integrals and
//! essential infima over balls, estimates the A1 and Ap characteristics over
//! ball families, tracks how those estimates move under grid refinement, and
//! fits the codimension-type exponent that decides which `alpha` keep the
//! characteristic bounded.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::line_fit;
use crate::holes::max_free_hole;
use crate::space::{Ball, MetricMeasureSpace, TargetSet};

/// Dyadic depth of the shrinking-neighbourhood ladder in [`mu_exponent`].
pub const MU_LEVELS: u32 = 6;

/// Default sample count for [`mu_exponent`].
pub const DEFAULT_MU_SAMPLES: usize = 64;

/// Growth per halving at or below which a refinement trend counts as stable.
pub const STABLE_GROWTH: f64 = 1.2;

/// Growth per halving at or above which a refinement trend counts as
/// divergent (required at every recorded halving).
pub const DIVERGENT_GROWTH: f64 = 1.5;

/// `(dist, mass)` pairs for the ball's points off the target set.
///
/// Errors on an empty target (the weight is undefined) and on malformed
/// balls; an empty profile is returned as-is so callers can decide whether a
/// fully-saturated ball is an error or a row to skip.
fn off_target_profile(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
) -> Result<Vec<(f64, f64)>> {
    if e.is_empty() {
        return Err(Error::input(
            "target set is empty: distance weights are undefined",
        ));
    }
    let pts = space.ball_points(ball)?;
    let mut out = Vec::with_capacity(pts.len());
    for q in pts {
        if !e.contains(q) {
            // off-target distances are bounded below by the point gap, so
            // the powers below are finite for either sign of alpha
            out.push((e.dist_to(q), space.mass_of(q)));
        }
    }
    Ok(out)
}

fn require_off_target(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
) -> Result<Vec<(f64, f64)>> {
    let profile = off_target_profile(space, e, ball)?;
    if profile.is_empty() {
        return Err(Error::input(format!(
            "ball at point {} with radius {} holds no points off the target set",
            ball.center.0, ball.radius
        )));
    }
    Ok(profile)
}

/// `∫_B dist(·,E)^{-alpha} dμ`, summed over the ball's off-target points.
pub fn weight_integral(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
    alpha: f64,
) -> Result<f64> {
    let profile = require_off_target(space, e, ball)?;
    Ok(profile.iter().map(|&(d, m)| m * d.powf(-alpha)).sum())
}

/// Essential infimum of the weight over the ball: the minimum of
/// `dist^{-alpha}` over off-target points (attained at the farthest point
/// for `alpha > 0`, the nearest for `alpha < 0`).
pub fn weight_essinf(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
    alpha: f64,
) -> Result<f64> {
    let profile = require_off_target(space, e, ball)?;
    Ok(profile
        .iter()
        .map(|&(d, _)| d.powf(-alpha))
        .fold(f64::INFINITY, f64::min))
}

/// Mass-weighted average of the weight over the ball's off-target points.
pub fn weight_average(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
    alpha: f64,
) -> Result<f64> {
    let profile = require_off_target(space, e, ball)?;
    let total: f64 = profile.iter().map(|&(_, m)| m).sum();
    let sum: f64 = profile.iter().map(|&(d, m)| m * d.powf(-alpha)).sum();
    Ok(sum / total)
}

/// One ball's contribution to an A1/Ap characteristic. `None` when the ball
/// is degenerate (no off-target points).
fn characteristic_of(profile: &[(f64, f64)], alpha: f64, p: f64) -> Option<f64> {
    if profile.is_empty() {
        return None;
    }
    let total: f64 = profile.iter().map(|&(_, m)| m).sum();
    let avg: f64 = profile.iter().map(|&(d, m)| m * d.powf(-alpha)).sum::<f64>() / total;
    if p == 1.0 {
        let ess = profile
            .iter()
            .map(|&(d, _)| d.powf(-alpha))
            .fold(f64::INFINITY, f64::min);
        Some(avg / ess)
    } else {
        // w^{1/(1-p)} = dist^{alpha/(p-1)}
        let dual: f64 = profile
            .iter()
            .map(|&(d, m)| m * d.powf(alpha / (p - 1.0)))
            .sum::<f64>()
            / total;
        Some(avg * dual.powf(p - 1.0))
    }
}

/// Supremum of a Muckenhoupt characteristic over a finite ball family.
#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    pub alpha: f64,
    /// `1.0` for the A1 characteristic.
    pub p: f64,
    /// The supremum over the family; always at least one.
    pub constant: f64,
    /// Ball attaining the supremum.
    pub witness: Option<Ball>,
    pub balls_used: usize,
    /// Balls skipped because every point inside sat on the target.
    pub skipped: usize,
}

fn estimate_characteristic(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    alpha: f64,
    p: f64,
    balls: &[Ball],
) -> Result<WeightReport> {
    if e.is_empty() {
        return Err(Error::input(
            "target set is empty: distance weights are undefined",
        ));
    }
    if balls.is_empty() {
        return Err(Error::input("need at least one ball to estimate over"));
    }
    let mut best: Option<(f64, Ball)> = None;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for ball in balls {
        let profile = off_target_profile(space, e, ball)?;
        match characteristic_of(&profile, alpha, p) {
            None => skipped += 1,
            Some(c) => {
                // averaging against the pointwise minimum (p = 1) or the
                // dual power mean (p > 1) can never fall below one
                if c < 1.0 - 1e-9 {
                    return Err(Error::invariant(format!(
                        "characteristic {c} < 1 at ball ({}, {})",
                        ball.center.0, ball.radius
                    )));
                }
                used += 1;
                if best.as_ref().map(|(b, _)| c > *b).unwrap_or(true) {
                    best = Some((c, *ball));
                }
            }
        }
    }
    let Some((constant, witness)) = best else {
        return Err(Error::input(
            "every ball in the family was degenerate (no off-target points)",
        ));
    };
    Ok(WeightReport {
        alpha,
        p,
        constant,
        witness: Some(witness),
        balls_used: used,
        skipped,
    })
}

/// A1 characteristic estimate: `sup_B avg_B(w) / essinf_B(w)`.
pub fn a1_estimate(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    alpha: f64,
    balls: &[Ball],
) -> Result<WeightReport> {
    estimate_characteristic(space, e, alpha, 1.0, balls)
}

/// Ap characteristic estimate for `p > 1`:
/// `sup_B avg_B(w) · avg_B(w^{1/(1-p)})^{p-1}`.
pub fn ap_estimate(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    alpha: f64,
    p: f64,
    balls: &[Ball],
) -> Result<WeightReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::input(format!(
            "Ap estimates need finite p > 1 (got {p}); use the A1 routine at p = 1"
        )));
    }
    estimate_characteristic(space, e, alpha, p, balls)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrendVerdict {
    /// Every recorded halving grew the constant by at most [`STABLE_GROWTH`].
    Stable,
    /// Every recorded halving grew the constant by at least
    /// [`DIVERGENT_GROWTH`].
    Divergent,
    /// Neither pattern held uniformly.
    Mixed,
}

/// Constants recorded across a strictly refining resolution ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ResolutionTrend {
    /// `(resolution, constant)` rows, coarse to fine.
    pub points: Vec<(f64, f64)>,
    /// Consecutive constant ratios, one per refinement step.
    pub growth: Vec<f64>,
    pub verdict: TrendVerdict,
}

/// Classify how an estimated constant moves as the grid refines.
/// Expects at least two rows with strictly decreasing resolution.
pub fn classify_trend(points: &[(f64, f64)]) -> Result<ResolutionTrend> {
    if points.len() < 2 {
        return Err(Error::input(
            "a refinement trend needs at least two resolutions",
        ));
    }
    for &(h, c) in points {
        if !(h > 0.0 && h.is_finite() && c > 0.0 && c.is_finite()) {
            return Err(Error::input(format!(
                "trend rows need positive finite entries, got ({h}, {c})"
            )));
        }
    }
    if points.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::input(
            "trend rows must be ordered by strictly decreasing resolution",
        ));
    }
    let growth: Vec<f64> = points.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let verdict = if growth.iter().all(|&g| g <= STABLE_GROWTH) {
        TrendVerdict::Stable
    } else if growth.iter().all(|&g| g >= DIVERGENT_GROWTH) {
        TrendVerdict::Divergent
    } else {
        TrendVerdict::Mixed
    };
    Ok(ResolutionTrend {
        points: points.to_vec(),
        growth,
        verdict,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDoublingRow {
    pub ball: Ball,
    /// `w(B)`.
    pub base: f64,
    /// `w(2B)`.
    pub doubled: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDoublingProfile {
    pub alpha: f64,
    pub rows: Vec<WeightDoublingRow>,
    pub skipped: usize,
    /// The last ratio at least doubled the first: the weighted measure fails
    /// the doubling property along this ball sequence.
    pub non_doubling_trend: bool,
}

/// `w(2B)/w(B)` along a ball sequence, plus a non-doubling verdict.
pub fn weight_doubling_profile(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    alpha: f64,
    balls: &[Ball],
) -> Result<WeightDoublingProfile> {
    if e.is_empty() {
        return Err(Error::input(
            "target set is empty: distance weights are undefined",
        ));
    }
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for ball in balls {
        if ball.radius > space.diameter_hint() {
            return Err(Error::input(format!(
                "doubling a radius-{} ball exceeds the space diameter {}",
                ball.radius,
                space.diameter_hint()
            )));
        }
        let profile = off_target_profile(space, e, ball)?;
        if profile.is_empty() {
            skipped += 1;
            continue;
        }
        let base: f64 = profile.iter().map(|&(d, m)| m * d.powf(-alpha)).sum();
        let doubled = weight_integral(space, e, &ball.scaled(2.0), alpha)?;
        rows.push(WeightDoublingRow {
            ball: *ball,
            base,
            doubled,
            ratio: doubled / base,
        });
    }
    let non_doubling_trend = rows.len() >= 2
        && rows.last().unwrap().ratio >= 2.0 * rows.first().unwrap().ratio;
    Ok(WeightDoublingProfile {
        alpha,
        rows,
        skipped,
        non_doubling_trend,
    })
}

/// One sampled ball in a [`mu_exponent`] run.
#[derive(Debug, Clone, Serialize)]
pub struct MuSample {
    pub ball: Ball,
    /// Maximal free-hole radius of the ball.
    pub hole: f64,
    /// `(j, μ(E_r ∩ B)/μ(B))` at `r = hole · 2^{-j}`, rows with positive
    /// ratio only.
    pub levels: Vec<(u32, f64)>,
    /// Log-log slope of the ratio ladder; `None` with fewer than two rows.
    pub slope: Option<f64>,
}

/// Fitted scaling exponent of target-neighbourhood mass inside balls.
#[derive(Debug, Clone, Serialize)]
pub struct MuEstimate {
    /// Minimum per-sample slope, clipped at zero: the exponent certified by
    /// the worst sampled ball.
    pub value: f64,
    /// Median per-sample slope, as a stability diagnostic.
    pub median: f64,
    /// Half the 10th-to-90th percentile spread of the slopes.
    pub half_width: f64,
    /// Smallest constant making `ratio ≤ C · (r/hole)^{value}` hold on every
    /// recorded row.
    pub c_fit: f64,
    pub levels: u32,
    pub samples_requested: usize,
    /// Samples that produced a slope.
    pub samples_used: usize,
    /// A sampled ball had no free hole at all, which forces the exponent to
    /// zero without looking further.
    pub zero_hole_short_circuit: bool,
    pub samples: Vec<MuSample>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Estimate the largest exponent `m ≥ 0` with
/// `μ({dist < r} ∩ B) / μ(B) ≤ C (r/h)^m` across sampled balls centered on
/// the target, where `h` is the ball's maximal free-hole radius and
/// `r = h·2^{-j}` for `j = 1..=`[`MU_LEVELS`].
///
/// Ball centers are drawn uniformly from the target and radii log-uniformly
/// between `8·resolution` and twice the diameter, from a seeded generator.
/// The reported value is the minimum per-sample slope (the exponent is a
/// uniform bound, so its estimate belongs to the worst ball), clipped at
/// zero; the median and percentile spread are reported as diagnostics.
pub fn mu_exponent(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    samples: usize,
    seed: u64,
) -> Result<MuEstimate> {
    if e.is_empty() {
        return Err(Error::input(
            "target set is empty: no neighbourhood exponent to estimate",
        ));
    }
    if samples == 0 {
        return Err(Error::input("sample count must be positive"));
    }
    let lo = 8.0 * space.resolution();
    let hi = (2.0 * space.diameter_hint()).max(lo * (1.0 + 1e-9));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d75_5f65_7870);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = e.members()[rng.gen_range(0..e.len())];
        let u: f64 = rng.gen();
        let r = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
        draws.push(Ball::new(x, r));
    }

    let mut out = Vec::with_capacity(draws.len());
    for ball in draws {
        let hole = max_free_hole(space, e, &ball)?;
        if hole.h_value <= 0.0 {
            out.push(MuSample {
                ball,
                hole: 0.0,
                levels: Vec::new(),
                slope: None,
            });
            return Ok(MuEstimate {
                value: 0.0,
                median: 0.0,
                half_width: 0.0,
                c_fit: 0.0,
                levels: MU_LEVELS,
                samples_requested: samples,
                samples_used: 0,
                zero_hole_short_circuit: true,
                samples: out,
            });
        }
        let pts = space.ball_points(&ball)?;
        let total: f64 = pts.iter().map(|&p| space.mass_of(p)).sum();
        let mut dm: Vec<(f64, f64)> = pts
            .iter()
            .map(|&p| (e.dist_to(p), space.mass_of(p)))
            .collect();
        dm.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(dm.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &(_, m) in &dm {
            acc += m;
            prefix.push(acc);
        }
        let mut levels = Vec::new();
        let mut fit_pts = Vec::new();
        for j in 1..=MU_LEVELS {
            let r = hole.h_value / f64::powi(2.0, j as i32);
            // within a few sampling steps of the grid the neighbourhood is
            // dominated by the target atoms themselves (mass jumps of one
            // grid cell distort the ratio by up to 1/8 at r = 8h) and the
            // rows stop carrying geometric information; drop them
            if r < 8.0 * space.resolution() {
                continue;
            }
            let k = dm.partition_point(|&(d, _)| d < r);
            let ratio = prefix[k] / total;
            if ratio > 0.0 {
                levels.push((j, ratio));
                fit_pts.push((-(j as f64) * std::f64::consts::LN_2, ratio.ln()));
            }
        }
        let slope = if fit_pts.len() >= 2 {
            line_fit(&fit_pts).map(|f| f.slope)
        } else {
            None
        };
        out.push(MuSample {
            ball,
            hole: hole.h_value,
            levels,
            slope,
        });
    }

    let mut slopes: Vec<f64> = out.iter().filter_map(|s| s.slope).collect();
    if slopes.is_empty() {
        return Err(Error::input(
            "no sample produced two usable neighbourhood levels (a free hole of at \
             least 32x the resolution is needed); refine the grid or widen the \
             radius range",
        ));
    }
    slopes.sort_by(f64::total_cmp);
    let value = slopes[0].max(0.0);
    let median = if slopes.len() % 2 == 1 {
        slopes[slopes.len() / 2]
    } else {
        0.5 * (slopes[slopes.len() / 2 - 1] + slopes[slopes.len() / 2])
    };
    let half_width = 0.5 * (percentile(&slopes, 0.9) - percentile(&slopes, 0.1));
    let mut c_fit = 0.0f64;
    for s in &out {
        for &(j, ratio) in &s.levels {
            c_fit = c_fit.max(ratio * f64::powf(2.0, j as f64 * value));
        }
    }
    Ok(MuEstimate {
        value,
        median,
        half_width,
        c_fit,
        levels: MU_LEVELS,
        samples_requested: samples,
        samples_used: slopes.len(),
        zero_hole_short_circuit: false,
        samples: out,
    })
}

/// Open exponent range `((1-p)·m, m)` for `p > 1`; `[0, m)` for `p = 1`,
/// returned as `(0, m)` with the left endpoint closed by convention.
pub fn ap_range(mu: f64, p: f64) -> Result<(f64, f64)> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::input(format!(
            "exponent bound must be finite and nonnegative, got {mu}"
        )));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::input(format!("p must be finite and at least 1, got {p}")));
    }
    if p == 1.0 {
        Ok((0.0, mu))
    } else {
        Ok(((1.0 - p) * mu, mu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RangeVerdict {
    Inside,
    Boundary,
    Outside,
}

/// Place `alpha` relative to [`ap_range`], calling anything within
/// `half_width` of an open endpoint a boundary case. For `p = 1` the left
/// endpoint is closed: negative `alpha` is outside outright.
pub fn classify(alpha: f64, p: f64, mu: f64, half_width: f64) -> Result<RangeVerdict> {
    if !(half_width >= 0.0 && half_width.is_finite()) {
        return Err(Error::input(format!(
            "confidence half-width must be finite and nonnegative, got {half_width}"
        )));
    }
    let (lo, hi) = ap_range(mu, p)?;
    if p == 1.0 {
        if alpha < 0.0 {
            return Ok(RangeVerdict::Outside);
        }
        if (alpha - hi).abs() <= half_width {
            return Ok(RangeVerdict::Boundary);
        }
        return Ok(if alpha < hi {
            RangeVerdict::Inside
        } else {
            RangeVerdict::Outside
        });
    }
    if (alpha - lo).abs() <= half_width || (alpha - hi).abs() <= half_width {
        return Ok(RangeVerdict::Boundary);
    }
    Ok(if lo < alpha && alpha < hi {
        RangeVerdict::Inside
    } else {
        RangeVerdict::Outside
    })
}
