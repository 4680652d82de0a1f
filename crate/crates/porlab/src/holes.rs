//! Maximal free-hole functionals, on balls and on cube systems.
//!
//! The ball form: given a target set E and a ball B(x,R), find the largest
//! radius r on a geometric grid such that some ball B(y,r) with y inside B
//! avoids E entirely and stays inside B (set-level containment), capped at
//! 2R. The cube form: the least generation of an E-free descendant cube.
//! Doubling profiles track how these quantities respond to radius scaling;
//! on branching spaces they can grow without bound, and the profile reports
//! that trend instead of a constant.

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{Error, Result};
use crate::fit::{power_fit, LineFit};
use crate::space::{Ball, MetricMeasureSpace, PointId, TargetSet};

/// Geometric radius grid {h · 2^(j/4)}: quarter-octave resolution anchored
/// at the space's sampling scale. Values at whole octaves (j ≡ 0 mod 4) are
/// exact binary floats when `h` is one.
#[derive(Debug, Clone, Serialize)]
pub struct RadiusGrid {
    pub base: f64,
}

const QUARTER_STEPS: [f64; 4] = [
    1.0,
    1.189_207_115_002_721_1, // 2^(1/4)
    std::f64::consts::SQRT_2,
    1.681_792_830_507_429_1, // 2^(3/4)
];

impl RadiusGrid {
    pub fn new(base: f64) -> Result<Self> {
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::input(format!(
                "radius grid base must be positive, got {base}"
            )));
        }
        Ok(RadiusGrid { base })
    }

    /// The j-th grid radius, h · 2^(j/4).
    pub fn value(&self, j: u32) -> f64 {
        self.base * 2f64.powi((j / 4) as i32) * QUARTER_STEPS[(j % 4) as usize]
    }

    /// Largest grid index whose radius is ≤ r; None when r < h.
    pub fn snap_down(&self, r: f64) -> Option<u32> {
        if !(r >= self.base) {
            return None;
        }
        let mut j = (4.0 * (r / self.base).log2()).floor().max(0.0) as u32;
        while self.value(j + 1) <= r {
            j += 1;
        }
        while j > 0 && self.value(j) > r {
            j -= 1;
        }
        if self.value(j) > r {
            None
        } else {
            Some(j)
        }
    }

    /// All grid radii in (0, cap].
    pub fn radii_up_to(&self, cap: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut j = 0u32;
        while self.value(j) <= cap {
            out.push(self.value(j));
            j += 1;
        }
        out
    }
}

/// Result of a maximal free-hole search on one ball.
#[derive(Debug, Clone, Serialize)]
pub struct HoleReport {
    pub ball: Ball,
    /// Largest admissible grid radius; 0 when no free ball of even the
    /// smallest grid radius exists.
    pub h_value: f64,
    /// A ball realizing `h_value`, verified free of the target set and
    /// contained in the searched ball.
    pub witness: Option<Ball>,
    pub grid_base: f64,
    pub candidates: usize,
    pub exact_evaluations: usize,
}

/// Exact largest free radius around `y`: distance to the nearest forbidden
/// point (target set or ball complement), capped at 2R.
fn free_limit(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    complement: &[PointId],
    cap: f64,
    y: PointId,
) -> f64 {
    let mut f = e.dist_to(y).min(cap);
    if complement.len() >= 4096 {
        let m = complement
            .par_iter()
            .map(|c| space.distance(y, *c))
            .reduce(|| f64::INFINITY, f64::min);
        f = f.min(m);
    } else {
        for c in complement {
            let d = space.distance(y, *c);
            if d < f {
                f = d;
            }
        }
    }
    f
}

/// Maximal free hole of the ball with respect to the target set.
///
/// Exact over the radius grid: equals the brute-force maximum. The search
/// evaluates candidate centers lazily, ordered by an upper bound that the
/// 1-Lipschitz free-radius function tightens after every exact evaluation,
/// and stops as soon as no candidate can reach the next grid radius.
pub fn max_free_hole(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
) -> Result<HoleReport> {
    let candidates = space.ball_points(ball)?;
    let cap = 2.0 * ball.radius;
    let grid = RadiusGrid::new(space.resolution())?;
    let mut in_ball = vec![false; space.len()];
    for c in &candidates {
        in_ball[c.idx()] = true;
    }
    let complement: Vec<PointId> = space.points().filter(|p| !in_ball[p.idx()]).collect();

    let mut ub: Vec<f64> = candidates.iter().map(|y| e.dist_to(*y).min(cap)).collect();
    let mut evaluated = vec![false; candidates.len()];
    let mut best_val = 0.0f64;
    let mut best_y: Option<PointId> = None;
    let mut evals = 0usize;
    loop {
        let mut arg = 0usize;
        let mut top = f64::NEG_INFINITY;
        for (i, u) in ub.iter().enumerate() {
            if *u > top {
                top = *u;
                arg = i;
            }
        }
        // no candidate can change the snapped value: stop
        let top_j = grid.snap_down(top);
        let best_j = grid.snap_down(best_val);
        if top_j.is_none() || top_j <= best_j || evaluated[arg] {
            break;
        }
        let y = candidates[arg];
        let f = free_limit(space, e, &complement, cap, y);
        evaluated[arg] = true;
        ub[arg] = f;
        evals += 1;
        if f > best_val {
            best_val = f;
            best_y = Some(y);
        }
        for (j, cand) in candidates.iter().enumerate() {
            if !evaluated[j] {
                let bound = f + space.distance(y, *cand);
                if bound < ub[j] {
                    ub[j] = bound;
                }
            }
        }
    }

    let (h_value, witness) = match (grid.snap_down(best_val), best_y) {
        (Some(j), Some(y)) => {
            let r = grid.value(j);
            let w = Ball::new(y, r);
            // independent witness verification
            for p in space.points() {
                if space.distance(y, p) < r && (!in_ball[p.idx()] || e.contains(p)) {
                    return Err(Error::invariant(format!(
                        "hole witness B({}, {r}) leaks outside the ball or touches the target set at point {}",
                        y.0, p.0
                    )));
                }
            }
            (r, Some(w))
        }
        _ => (0.0, None),
    };
    Ok(HoleReport {
        ball: *ball,
        h_value,
        witness,
        grid_base: grid.base,
        candidates: candidates.len(),
        exact_evaluations: evals,
    })
}

/// Literal-definition oracle: try every candidate center and every grid
/// radius, largest first, checking containment point by point. Slow;
/// exists to pin the fast search in tests.
pub fn max_free_hole_brute(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
) -> Result<f64> {
    let candidates = space.ball_points(ball)?;
    let cap = 2.0 * ball.radius;
    let grid = RadiusGrid::new(space.resolution())?;
    let mut in_ball = vec![false; space.len()];
    for c in &candidates {
        in_ball[c.idx()] = true;
    }
    let radii = grid.radii_up_to(cap);
    for r in radii.iter().rev() {
        for y in &candidates {
            let ok = space.points().all(|p| {
                space.distance(*y, p) >= *r || (in_ball[p.idx()] && !e.contains(p))
            });
            if ok {
                return Ok(*r);
            }
        }
    }
    Ok(0.0)
}

/// Exact free-radius limit for every point of the ball, in candidate order
/// (ascending ids). Used by porosity packings.
pub fn free_radii_in_ball(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
) -> Result<Vec<(PointId, f64)>> {
    let candidates = space.ball_points(ball)?;
    let cap = 2.0 * ball.radius;
    let mut in_ball = vec![false; space.len()];
    for c in &candidates {
        in_ball[c.idx()] = true;
    }
    let complement: Vec<PointId> = space.points().filter(|p| !in_ball[p.idx()]).collect();
    Ok(candidates
        .par_iter()
        .map(|y| {
            let mut f = e.dist_to(*y).min(cap);
            for c in &complement {
                let d = space.distance(*y, *c);
                if d < f {
                    f = d;
                }
            }
            (*y, f)
        })
        .collect())
}

/// One center's row in a hole-doubling profile.
#[derive(Debug, Clone, Serialize)]
pub struct HoleDoublingRow {
    pub center: PointId,
    pub base_radius: f64,
    pub base_value: f64,
    /// (scale factor L, hole value at L·R, ratio to the base value).
    pub ratios: Vec<(f64, f64, f64)>,
    /// True when the base hole vanished and the row carries no ratios.
    pub skipped: bool,
}

/// How hole values respond to scaling the ball radius, across a family of
/// centers.
#[derive(Debug, Clone, Serialize)]
pub struct HoleDoublingProfile {
    pub rows: Vec<HoleDoublingRow>,
    /// Pooled log-log fit of ratio vs scale factor (slope = growth exponent).
    pub fit: Option<LineFit>,
    /// Coefficient of the fitted power law.
    pub fit_coefficient: Option<f64>,
    /// Largest ratio observed at scale factor 2.
    pub max_ratio_at_2: Option<f64>,
    /// False when the scale-2 ratios grow across the center family
    /// (last center ≥ twice the first): the hole functional shows no
    /// uniform doubling bound on this family.
    pub doubling: bool,
}

pub fn hole_doubling_profile(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    centers: &[PointId],
    base_radius: f64,
    scales: &[f64],
) -> Result<HoleDoublingProfile> {
    let balls: Vec<Ball> = centers.iter().map(|c| Ball::new(*c, base_radius)).collect();
    hole_doubling_sequence(space, e, &balls, scales)
}

/// Same profile over a sequence of balls with individual base radii, e.g.
/// B((n,0), n) along a branch family.
pub fn hole_doubling_sequence(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    balls: &[Ball],
    scales: &[f64],
) -> Result<HoleDoublingProfile> {
    if balls.is_empty() {
        return Err(Error::input("need at least one ball"));
    }
    if scales.is_empty() {
        return Err(Error::input("need at least one scale factor"));
    }
    for l in scales {
        if *l < 1.0 - 1e-9 {
            return Err(Error::input(format!("scale factors must be ≥ 1, got {l}")));
        }
        for b in balls {
            if *l * b.radius > space.diameter_hint() * (1.0 + 1e-9) {
                return Err(Error::input(format!(
                    "scale factor {l} pushes radius {} past the diameter {}",
                    b.radius,
                    space.diameter_hint()
                )));
            }
        }
    }
    let mut rows = Vec::with_capacity(balls.len());
    for b in balls {
        let base = max_free_hole(space, e, b)?;
        if base.h_value <= 0.0 {
            rows.push(HoleDoublingRow {
                center: b.center,
                base_radius: b.radius,
                base_value: 0.0,
                ratios: Vec::new(),
                skipped: true,
            });
            continue;
        }
        let mut ratios = Vec::with_capacity(scales.len());
        for l in scales {
            let scaled = max_free_hole(space, e, &Ball::new(b.center, b.radius * l))?;
            ratios.push((*l, scaled.h_value, scaled.h_value / base.h_value));
        }
        rows.push(HoleDoublingRow {
            center: b.center,
            base_radius: b.radius,
            base_value: base.h_value,
            ratios,
            skipped: false,
        });
    }
    let pooled: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.skipped)
        .flat_map(|r| r.ratios.iter().map(|(l, _, q)| (*l, *q)))
        .filter(|(_, q)| *q > 0.0)
        .collect();
    let fit = power_fit(&pooled);
    let fit_coefficient = fit.as_ref().map(|f| f.intercept.exp());
    let at2: Vec<f64> = rows
        .iter()
        .filter(|r| !r.skipped)
        .filter_map(|r| {
            r.ratios
                .iter()
                .find(|(l, _, _)| (*l - 2.0).abs() < 1e-9)
                .map(|(_, _, q)| *q)
        })
        .collect();
    let max_ratio_at_2 = at2.iter().copied().fold(None, |acc: Option<f64>, q| {
        Some(acc.map_or(q, |a| a.max(q)))
    });
    let doubling = match (at2.first(), at2.last()) {
        (Some(first), Some(last)) if at2.len() >= 2 => *last < 2.0 * *first,
        _ => true,
    };
    Ok(HoleDoublingProfile {
        rows,
        fit,
        fit_coefficient,
        max_ratio_at_2,
        doubling,
    })
}

/// Least generation of a target-free cube below a root cube.
#[derive(Debug, Clone, Serialize)]
pub struct CubeHoleReport {
    pub cube: CubeId,
    /// Least generation of a target-free descendant; None when exploration
    /// exhausted `explored_to` without finding one (not a proof none exists).
    pub g_value: Option<i32>,
    pub witness: Option<CubeId>,
    pub explored_to: i32,
}

pub fn cube_is_free(system: &DyadicSystem, e: &TargetSet, id: CubeId) -> Result<bool> {
    Ok(system.cube(id)?.members.iter().all(|m| !e.contains(*m)))
}

/// Breadth-first search for the shallowest target-free cube in the descent
/// of `q0`, exploring at most `depth` generations below it.
pub fn cube_max_free_generation(
    system: &DyadicSystem,
    e: &TargetSet,
    q0: CubeId,
    depth: u32,
) -> Result<CubeHoleReport> {
    let mut frontier = vec![q0];
    let mut level = q0.level;
    let limit = (q0.level + depth as i32).min(system.k_max());
    loop {
        for q in &frontier {
            if cube_is_free(system, e, *q)? {
                return Ok(CubeHoleReport {
                    cube: q0,
                    g_value: Some(level),
                    witness: Some(*q),
                    explored_to: level,
                });
            }
        }
        if level >= limit {
            return Ok(CubeHoleReport {
                cube: q0,
                g_value: None,
                witness: None,
                explored_to: level,
            });
        }
        let mut next = Vec::new();
        for q in &frontier {
            next.extend(system.children(*q)?);
        }
        if next.is_empty() {
            return Ok(CubeHoleReport {
                cube: q0,
                g_value: None,
                witness: None,
                explored_to: level,
            });
        }
        frontier = next;
        level += 1;
    }
}

/// Per-cube least free generations for one grid, bottom-up over the whole
/// built range. `None` marks cubes whose descent holds no free cube within
/// the system.
pub fn free_generation_table(
    system: &DyadicSystem,
    e: &TargetSet,
    grid: usize,
) -> Result<Vec<Vec<Option<i32>>>> {
    let mut table: Vec<Vec<Option<i32>>> = Vec::new();
    for k in system.k_min()..=system.k_max() {
        let ids = system.level_cubes(grid, k)?;
        let row: Vec<Option<i32>> = ids
            .iter()
            .map(|id| {
                if cube_is_free(system, e, *id).unwrap_or(false) {
                    Some(k)
                } else {
                    None
                }
            })
            .collect();
        table.push(row);
    }
    // propagate child minima upward where the cube itself is not free
    for l in (0..table.len() - 1).rev() {
        let k = system.k_min() + l as i32;
        let (head, tail) = table.split_at_mut(l + 1);
        let next = &tail[0];
        for (idx, slot) in head[l].iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let id = CubeId { grid, level: k, index: idx };
            let mut best: Option<i32> = None;
            for ch in system.children(id)? {
                let v = next[ch.index];
                best = match (best, v) {
                    (None, v) => v,
                    (b, None) => b,
                    (Some(b), Some(v)) => Some(b.min(v)),
                };
            }
            *slot = best;
        }
    }
    Ok(table)
}

/// Scale response of the cube hole functional: the smallest integer step m
/// such that every conclusive parent/child pair satisfies
/// g_free(child) ≤ m + g_free(parent), with the per-level trend and a
/// derived chain bound check.
#[derive(Debug, Clone, Serialize)]
pub struct CubeDoublingCheck {
    /// Smallest admissible step; None when no pair was conclusive.
    pub m: Option<i32>,
    pub pairs_checked: usize,
    /// Pairs whose child exhausted exploration without a free cube.
    pub inconclusive: usize,
    /// (parent generation, largest step seen at that generation).
    pub per_level_max_step: Vec<(i32, i32)>,
    /// The pair realizing the largest step: (child, parent, step).
    pub worst_pair: Option<(CubeId, CubeId, i32)>,
    /// Chain-rule validation with the found m over sampled ancestor pairs:
    /// g_free(P) ≤ m·(g(P) − g(P')) + g_free(P').
    pub chains_checked: usize,
    pub chain_violations: usize,
}

pub fn cube_doubling_check(
    system: &DyadicSystem,
    e: &TargetSet,
) -> Result<CubeDoublingCheck> {
    let mut m: Option<i32> = None;
    let mut pairs = 0usize;
    let mut inconclusive = 0usize;
    let mut per_level: Vec<(i32, i32)> = Vec::new();
    let mut worst: Option<(CubeId, CubeId, i32)> = None;
    let mut tables = Vec::with_capacity(system.grid_count());
    for g in 0..system.grid_count() {
        tables.push(free_generation_table(system, e, g)?);
    }
    for (g, table) in tables.iter().enumerate() {
        for l in 0..table.len().saturating_sub(1) {
            let parent_level = system.k_min() + l as i32;
            let mut level_max: Option<i32> = None;
            for (pi, pval) in table[l].iter().enumerate() {
                let parent = CubeId { grid: g, level: parent_level, index: pi };
                for ch in system.children(parent)? {
                    pairs += 1;
                    let cval = table[l + 1][ch.index];
                    match (pval, cval) {
                        (Some(p), Some(c)) => {
                            let step = c - p;
                            level_max = Some(level_max.map_or(step, |x| x.max(step)));
                            if m.map_or(true, |cur| step > cur) {
                                m = Some(step);
                                worst = Some((ch, parent, step));
                            }
                        }
                        _ => inconclusive += 1,
                    }
                }
            }
            if let Some(s) = level_max {
                match per_level.iter_mut().find(|(k, _)| *k == parent_level) {
                    Some(slot) => slot.1 = slot.1.max(s),
                    None => per_level.push((parent_level, s)),
                }
            }
        }
    }
    per_level.sort_by_key(|(k, _)| *k);
    // derived chain bound: follow every cube's chain to its root
    let mut chains = 0usize;
    let mut violations = 0usize;
    if let Some(step) = m {
        for (g, table) in tables.iter().enumerate() {
            for l in 1..table.len() {
                let level = system.k_min() + l as i32;
                for (i, v) in table[l].iter().enumerate() {
                    let Some(gv) = v else { continue };
                    let mut anc = CubeId { grid: g, level, index: i };
                    while let Some(up) = system.parent(anc)? {
                        anc = up;
                        let al = (anc.level - system.k_min()) as usize;
                        if let Some(av) = table[al][anc.index] {
                            chains += 1;
                            if *gv > step * (level - anc.level) + av {
                                violations += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(CubeDoublingCheck {
        m,
        pairs_checked: pairs,
        inconclusive,
        per_level_max_step: per_level,
        worst_pair: worst,
        chains_checked: chains,
        chain_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{
        cantor_set, cross_space, point_at, random_cloud, segment_with_integer_set,
    };
    use crate::dyadic::{build_dyadic_system, DyadicParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radius_grid_is_anchored_and_monotone() {
        let g = RadiusGrid::new(1.0 / 64.0).unwrap();
        assert_eq!(g.value(0), 1.0 / 64.0);
        assert_eq!(g.value(4), 2.0 / 64.0);
        assert_eq!(g.value(8), 4.0 / 64.0);
        assert_eq!(g.snap_down(2.0 / 64.0), Some(4));
        assert_eq!(g.snap_down(1.99 / 64.0), Some(3));
        assert_eq!(g.snap_down(0.5 / 64.0), None);
        assert_eq!(g.snap_down(0.5), Some(20)); // 1/2 = 2^5 / 64
        for j in 0..40 {
            assert!(g.value(j) < g.value(j + 1));
        }
    }

    #[test]
    fn empty_target_gives_the_full_radius_on_the_line() {
        let (s, _) = segment_with_integer_set(2, 1.0 / 32.0).unwrap();
        let e = TargetSet::empty(&s);
        let x = point_at(&s, &[0.0]).unwrap();
        let rep = max_free_hole(&s, &e, &Ball::new(x, 0.5)).unwrap();
        assert_eq!(rep.h_value, 0.5);
        assert_eq!(rep.witness.unwrap().center, x);
    }

    #[test]
    fn full_target_kills_every_hole() {
        let (s, _) = segment_with_integer_set(1, 1.0 / 8.0).unwrap();
        let all = TargetSet::new(&s, s.points()).unwrap();
        let rep = max_free_hole(&s, &all, &Ball::new(PointId(4), 0.5)).unwrap();
        assert_eq!(rep.h_value, 0.0);
        assert!(rep.witness.is_none());
    }

    #[test]
    fn integer_target_on_the_line_caps_holes_at_a_half() {
        let (s, e) = segment_with_integer_set(4, 1.0 / 64.0).unwrap();
        let x = point_at(&s, &[0.0]).unwrap();
        let rep = max_free_hole(&s, &e, &Ball::new(x, 2.0)).unwrap();
        assert_eq!(rep.h_value, 0.5);
        let w = rep.witness.unwrap();
        assert_eq!(e.dist_to(w.center), 0.5);
    }

    #[test]
    fn search_matches_the_brute_oracle_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let (seg, seg_e) = segment_with_integer_set(2, 1.0 / 16.0).unwrap();
        let (can, can_e) = cantor_set(2, 1.0 / 32.0).unwrap();
        let cloud = random_cloud(80, 2, 7).unwrap();
        let cloud_ids: Vec<PointId> = (0..12).map(|_| PointId(rng.gen_range(0..80))).collect();
        let cloud_e = TargetSet::new(&cloud, cloud_ids).unwrap();
        let cases: Vec<(&MetricMeasureSpace, &TargetSet)> =
            vec![(&seg, &seg_e), (&can, &can_e), (&cloud, &cloud_e)];
        for (space, e) in cases {
            for _ in 0..12 {
                let c = PointId(rng.gen_range(0..space.len() as u32));
                let r = space.resolution() * 2f64.powf(rng.gen_range(1.0..6.0));
                let ball = Ball::new(c, r.min(space.diameter_hint()));
                let fast = max_free_hole(space, e, &ball).unwrap();
                let brute = max_free_hole_brute(space, e, &ball).unwrap();
                assert_eq!(
                    fast.h_value, brute,
                    "mismatch on {} at center {} radius {}",
                    space.name(),
                    c.0,
                    ball.radius
                );
            }
        }
    }

    #[test]
    fn branch_points_agree_with_the_cross_reference_values() {
        let (s, e, o) = cross_space(12, 1.0 / 32.0).unwrap();
        let quarter_step = 2f64.powf(0.25);
        for n in 1..=4u32 {
            // radius n: the exact value 1/2 is a grid radius, so no slack
            let b1 = Ball::new(o.horizontal_id(n), n as f64);
            let r1 = max_free_hole(&s, &e, &b1).unwrap();
            assert_eq!(r1.h_value, o.exact_hole(&b1).unwrap());
            // radius 2n: the exact value n snaps down by at most one
            // quarter step (and not at all when n is a power of two)
            let b2 = Ball::new(o.horizontal_id(n), 2.0 * n as f64);
            let r2 = max_free_hole(&s, &e, &b2).unwrap();
            let exact = o.exact_hole(&b2).unwrap();
            assert!(
                r2.h_value <= exact + 1e-12 && r2.h_value > exact / quarter_step - 1e-12,
                "n = {n}: snapped {} vs exact {exact}",
                r2.h_value
            );
            if n.is_power_of_two() {
                assert_eq!(r2.h_value, exact);
            }
        }
    }

    #[test]
    fn holes_grow_with_the_ball_on_a_fixed_center() {
        let (s, e) = segment_with_integer_set(4, 1.0 / 32.0).unwrap();
        let x = point_at(&s, &[0.25]).unwrap();
        let mut last = 0.0;
        for j in 0..8 {
            let r = 0.125 * 2f64.powf(j as f64 / 2.0);
            let rep = max_free_hole(&s, &e, &Ball::new(x, r)).unwrap();
            assert!(
                rep.h_value >= last,
                "hole shrank when the ball grew: {} < {last}",
                rep.h_value
            );
            last = rep.h_value;
        }
    }

    #[test]
    fn free_radius_table_is_consistent_with_the_search() {
        let (s, e) = segment_with_integer_set(2, 1.0 / 16.0).unwrap();
        let ball = Ball::new(point_at(&s, &[0.0]).unwrap(), 1.5);
        let table = free_radii_in_ball(&s, &e, &ball).unwrap();
        let grid = RadiusGrid::new(s.resolution()).unwrap();
        let best = table
            .iter()
            .map(|(_, f)| *f)
            .fold(0.0f64, f64::max);
        let rep = max_free_hole(&s, &e, &ball).unwrap();
        let snapped = grid.snap_down(best).map(|j| grid.value(j)).unwrap_or(0.0);
        assert_eq!(rep.h_value, snapped);
    }

    #[test]
    fn doubling_profile_is_flat_for_integers_and_linear_for_nothing() {
        let (s, e) = segment_with_integer_set(8, 1.0 / 32.0).unwrap();
        let centers = vec![point_at(&s, &[0.5]).unwrap()];
        let scales = [1.0, 2.0, 4.0];
        let prof = hole_doubling_profile(&s, &e, &centers, 1.0, &scales).unwrap();
        let d = prof.fit.as_ref().unwrap().slope;
        assert!(d.abs() < 0.15, "integer target growth exponent {d}");
        assert!(prof.doubling);

        let empty = TargetSet::empty(&s);
        let prof = hole_doubling_profile(&s, &empty, &centers, 1.0, &scales).unwrap();
        let d = prof.fit.as_ref().unwrap().slope;
        assert!((d - 1.0).abs() < 0.2, "free-space growth exponent {d}");
    }

    #[test]
    fn doubling_profile_flags_growth_across_branch_centers() {
        let (s, e, o) = cross_space(12, 1.0 / 32.0).unwrap();
        let balls: Vec<Ball> = [1u32, 2, 4]
            .iter()
            .map(|n| Ball::new(o.horizontal_id(*n), *n as f64))
            .collect();
        let prof = hole_doubling_sequence(&s, &e, &balls, &[2.0]).unwrap();
        let l2: Vec<f64> = prof.rows.iter().map(|r| r.ratios[0].2).collect();
        assert!(!prof.doubling, "growing branch ratios must void the verdict");
        assert!(l2[2] >= 2.0 * l2[0], "scale-2 ratios {l2:?} do not grow");
        assert_eq!(l2[0], 2.0); // value 1 at radius 2, over the base 1/2
        assert_eq!(l2[2], 8.0); // value 4 at radius 8, over the base 1/2
        assert_eq!(prof.max_ratio_at_2, Some(8.0));
    }

    #[test]
    fn free_generation_finds_the_cube_itself_when_it_misses_the_target() {
        let (s, e) = segment_with_integer_set(2, 1.0 / 32.0).unwrap();
        let sys = build_dyadic_system(
            &s,
            &DyadicParams {
                theta: 0.5,
                grids: 1,
                seed: 3,
                ..DyadicParams::default()
            },
        )
        .unwrap();
        let k = sys.k_max() - 1;
        let mut tested = 0;
        for id in sys.level_cubes(0, k).unwrap() {
            if cube_is_free(&sys, &e, id).unwrap() {
                let rep = cube_max_free_generation(&sys, &e, id, 5).unwrap();
                assert_eq!(rep.g_value, Some(k));
                assert_eq!(rep.witness, Some(id));
                tested += 1;
            }
        }
        assert!(tested > 0);
    }

    #[test]
    fn free_generation_reports_exhaustion_under_a_full_target() {
        let (s, _) = segment_with_integer_set(1, 1.0 / 8.0).unwrap();
        let all = TargetSet::new(&s, s.points()).unwrap();
        let sys = build_dyadic_system(
            &s,
            &DyadicParams {
                theta: 0.5,
                grids: 1,
                seed: 1,
                ..DyadicParams::default()
            },
        )
        .unwrap();
        let root = CubeId { grid: 0, level: sys.k_min(), index: 0 };
        let rep = cube_max_free_generation(&sys, &all, root, 30).unwrap();
        assert_eq!(rep.g_value, None);
        assert_eq!(rep.explored_to, sys.k_max());
    }

    #[test]
    fn root_free_generation_lands_a_couple_of_levels_down() {
        // samples of [0,2] with the three integers as target
        let h = 1.0 / 16.0;
        let coords: Vec<f64> = (0..=32).map(|i| i as f64 * h).collect();
        let s = MetricMeasureSpace::new("seg02", 1, coords, vec![h; 33], h).unwrap();
        let e = TargetSet::new(
            &s,
            [
                point_at(&s, &[0.0]).unwrap(),
                point_at(&s, &[1.0]).unwrap(),
                point_at(&s, &[2.0]).unwrap(),
            ],
        )
        .unwrap();
        let sys = build_dyadic_system(
            &s,
            &DyadicParams {
                theta: 0.5,
                grids: 1,
                seed: 8,
                ..DyadicParams::default()
            },
        )
        .unwrap();
        let root = CubeId { grid: 0, level: sys.k_min(), index: 0 };
        let rep = cube_max_free_generation(&sys, &e, root, 12).unwrap();
        let g = rep.g_value.expect("free cube exists between integers");
        assert!(g >= sys.k_min() + 1 && g <= sys.k_min() + 3, "generation {g}");
    }

    #[test]
    fn empty_target_makes_every_step_exactly_one() {
        let (s, _) = segment_with_integer_set(2, 1.0 / 16.0).unwrap();
        let e = TargetSet::empty(&s);
        let sys = build_dyadic_system(
            &s,
            &DyadicParams {
                theta: 0.5,
                grids: 2,
                seed: 5,
                ..DyadicParams::default()
            },
        )
        .unwrap();
        let check = cube_doubling_check(&sys, &e).unwrap();
        assert_eq!(check.m, Some(1));
        assert_eq!(check.inconclusive, 0);
        assert_eq!(check.chain_violations, 0);
    }

    #[test]
    fn integer_target_admits_a_small_finite_step() {
        let (s, e) = segment_with_integer_set(4, 1.0 / 16.0).unwrap();
        let sys = build_dyadic_system(
            &s,
            &DyadicParams {
                theta: 0.5,
                grids: 1,
                seed: 11,
                ..DyadicParams::default()
            },
        )
        .unwrap();
        let check = cube_doubling_check(&sys, &e).unwrap();
        let m = check.m.expect("conclusive pairs exist");
        assert!(m >= 1 && m <= 4, "step {m}");
        assert_eq!(check.chain_violations, 0);
        assert!(check.pairs_checked > 0);
    }

    #[test]
    fn branch_target_pays_large_steps_at_coarse_scales() {
        let (s, e, _) = cross_space(16, 1.0 / 16.0).unwrap();
        let sys = build_dyadic_system(
            &s,
            &DyadicParams {
                theta: 0.5,
                grids: 1,
                seed: 2,
                ..DyadicParams::default()
            },
        )
        .unwrap();
        let check = cube_doubling_check(&sys, &e).unwrap();
        // a coarse cube straddling the branch point frees up immediately
        // through the off-axis arm, while its on-axis children stall until
        // cubes shrink below the target gap: the coarsest refinements pay
        // the largest steps, and fine ones settle to at most one
        let m = check.m.expect("conclusive pairs exist");
        assert!((3..=10).contains(&m), "step {m}");
        let trend = &check.per_level_max_step;
        assert!(trend.len() >= 3, "trend {trend:?}");
        let peak = trend
            .iter()
            .enumerate()
            .max_by_key(|(_, &(_, s))| s)
            .unwrap()
            .0;
        assert!(peak < trend.len() / 2, "peak not coarse: {trend:?}");
        assert!(trend.last().unwrap().1 <= 1, "trend {trend:?}");
        assert_eq!(check.chain_violations, 0);
    }
}
