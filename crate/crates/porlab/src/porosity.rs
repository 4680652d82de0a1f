//! Porosity certificates and their cube-system counterparts.
//!
//! A target set is weakly porous when every ball carries a disjoint family
//! of target-free balls, with radii comparable to the ball's maximal free
//! hole, covering a fixed fraction of measure. The greedy packing here
//! certifies a lower bound for that fraction. On cube systems the analogue
//! replaces balls by target-free descendant cubes within a generation
//! budget; iterating the construction covers the complement of the target,
//! and the geometric-decay sum over all covering cubes is checked against
//! its theoretical bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{CubeId, DyadicSystem};
use crate::error::{Error, Result};
use crate::holes::{
    cube_is_free, cube_max_free_generation, free_radii_in_ball, max_free_hole, RadiusGrid,
};
use crate::space::{Ball, MetricMeasureSpace, PointId, TargetSet};

/// A verified disjoint family of target-free balls inside one ball.
#[derive(Debug, Clone, Serialize)]
pub struct PorosityCertificate {
    pub ball: Ball,
    pub delta: f64,
    /// Maximal free hole of the ball; admissible radii live in
    /// [delta · h_value, 2R].
    pub h_value: f64,
    pub family: Vec<Ball>,
    /// Greedy packing result: a certified lower bound for the best
    /// achievable covered fraction.
    pub covered_fraction: f64,
    pub coverage_kind: &'static str,
}

struct Candidate {
    y: PointId,
    r: f64,
    measure: f64,
}

/// Greedy largest-measure-first packing of admissible target-free balls.
///
/// Admissible: radius on the grid within [delta·h_E, 2R], target-free, and
/// set-contained in the ball. Every accepted ball is re-verified
/// independently of the search state before the certificate is returned.
pub fn porosity_certificate(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    ball: &Ball,
    delta: f64,
) -> Result<PorosityCertificate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0,1), got {delta}")));
    }
    let hole = max_free_hole(space, e, ball)?;
    if hole.h_value <= 0.0 {
        return Err(Error::hypothesis(format!(
            "no free hole in B({}, {}): the target set leaves no room at this ball",
            ball.center.0, ball.radius
        )));
    }
    let floor = delta * hole.h_value;
    let cap = 2.0 * ball.radius;
    let grid = RadiusGrid::new(space.resolution())?;
    let members = space.ball_points(ball)?;
    let free = free_radii_in_ball(space, e, ball)?;
    let masses: Vec<f64> = members.iter().map(|m| space.mass_of(*m)).collect();
    let total: f64 = masses.iter().sum();

    let j_min = {
        let mut j = grid.snap_down(floor).unwrap_or(0);
        while grid.value(j) < floor - 1e-12 {
            j += 1;
        }
        j
    };
    let candidates: Vec<Candidate> = free
        .par_iter()
        .map(|(y, f)| {
            let mut out = Vec::new();
            let Some(j_max) = grid.snap_down(f.min(cap)) else {
                return out;
            };
            if j_max < j_min {
                return out;
            }
            let mut dm: Vec<(f64, f64)> = members
                .iter()
                .zip(&masses)
                .map(|(m, mass)| (space.distance(*y, *m), *mass))
                .collect();
            dm.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(dm.len() + 1);
            let mut acc = 0.0;
            prefix.push(0.0);
            for (_, mass) in &dm {
                acc += mass;
                prefix.push(acc);
            }
            for j in j_min..=j_max {
                let r = grid.value(j);
                let k = dm.partition_point(|(d, _)| *d < r);
                out.push(Candidate {
                    y: *y,
                    r,
                    measure: prefix[k],
                });
            }
            out
        })
        .flatten()
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        let a = &candidates[i];
        let b = &candidates[j];
        b.measure
            .total_cmp(&a.measure)
            .then(a.y.0.cmp(&b.y.0))
            .then(b.r.total_cmp(&a.r))
    });

    let mut taken = vec![false; space.len()];
    let mut family = Vec::new();
    let mut covered = 0.0;
    for idx in order {
        let cand = &candidates[idx];
        if taken[cand.y.idx()] {
            continue;
        }
        let mine: Vec<PointId> = members
            .iter()
            .filter(|m| space.distance(cand.y, **m) < cand.r)
            .copied()
            .collect();
        if mine.iter().any(|m| taken[m.idx()]) {
            continue;
        }
        for m in &mine {
            taken[m.idx()] = true;
            covered += space.mass_of(*m);
        }
        family.push(Ball::new(cand.y, cand.r));
        if covered >= total {
            break;
        }
    }

    // independent validity pass over the full space
    let mut member_mask = vec![false; space.len()];
    for m in &members {
        member_mask[m.idx()] = true;
    }
    let mut claimed = vec![false; space.len()];
    for b in &family {
        if b.radius < floor - 1e-12 || b.radius > cap + 1e-12 {
            return Err(Error::invariant(format!(
                "packed radius {} escapes the admissible range [{floor}, {cap}]",
                b.radius
            )));
        }
        for p in space.points() {
            if space.distance(b.center, p) < b.radius {
                if !member_mask[p.idx()] || e.contains(p) {
                    return Err(Error::invariant(format!(
                        "packed ball B({}, {}) leaks outside the ball or meets the target at {}",
                        b.center.0, b.radius, p.0
                    )));
                }
                if claimed[p.idx()] {
                    return Err(Error::invariant(format!(
                        "packed balls overlap at point {}",
                        p.0
                    )));
                }
                claimed[p.idx()] = true;
            }
        }
    }

    Ok(PorosityCertificate {
        ball: *ball,
        delta,
        h_value: hole.h_value,
        family,
        covered_fraction: covered / total,
        coverage_kind: "certified-lower-bound",
    })
}

/// One ball's outcome inside a porosity scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub ball: Ball,
    pub h_value: f64,
    pub covered_fraction: f64,
    pub family_size: usize,
    /// The ball had no free hole at all: porosity fails here outright.
    pub failed: bool,
}

/// Worst-case covered fraction over a ball family.
#[derive(Debug, Clone, Serialize)]
pub struct PorosityScan {
    pub delta: f64,
    pub rows: Vec<ScanRow>,
    pub worst_fraction: f64,
    pub worst_ball: Option<Ball>,
    pub failures: usize,
}

pub fn porosity_scan(
    space: &MetricMeasureSpace,
    e: &TargetSet,
    delta: f64,
    balls: &[Ball],
) -> Result<PorosityScan> {
    if balls.is_empty() {
        return Err(Error::input("porosity scan needs at least one ball"));
    }
    let mut rows = Vec::with_capacity(balls.len());
    for b in balls {
        match porosity_certificate(space, e, b, delta) {
            Ok(cert) => rows.push(ScanRow {
                ball: *b,
                h_value: cert.h_value,
                covered_fraction: cert.covered_fraction,
                family_size: cert.family.len(),
                failed: false,
            }),
            Err(Error::Hypothesis(_)) => rows.push(ScanRow {
                ball: *b,
                h_value: 0.0,
                covered_fraction: 0.0,
                family_size: 0,
                failed: true,
            }),
            Err(other) => return Err(other),
        }
    }
    let mut worst = f64::INFINITY;
    let mut worst_ball = None;
    for r in &rows {
        if r.covered_fraction < worst {
            worst = r.covered_fraction;
            worst_ball = Some(r.ball);
        }
    }
    let failures = rows.iter().filter(|r| r.failed).count();
    Ok(PorosityScan {
        delta,
        rows,
        worst_fraction: worst,
        worst_ball,
        failures,
    })
}

/// Post-checks carried by every cube family report.
#[derive(Debug, Clone, Serialize, Default)]
pub struct FamilyChecks {
    /// Free and mixed families partition the root cube point by point,
    /// with exact measure additivity.
    pub partition_exact: bool,
    /// The family is {root} alone exactly when the root misses the target.
    pub root_free_iff_single: bool,
    /// Every free-family cube misses the target and respects the
    /// generation budget.
    pub free_members_valid: bool,
    /// Every family cube descends from the root.
    pub members_contained: bool,
    /// Every mixed-family cube meets the target.
    pub mixed_meet_target: bool,
    /// Optional floor for the covered fraction, with its verdict.
    pub coverage_floor: Option<f64>,
    pub coverage_floor_met: Option<bool>,
}

/// Maximal target-free descendant cubes within a generation budget, plus
/// the bottom-level leftovers that still meet the target.
#[derive(Debug, Clone, Serialize)]
pub struct DyadicPorosityReport {
    pub root: CubeId,
    /// Generation budget M beyond the root's free generation.
    pub family_depth: u32,
    pub free_generation: Option<i32>,
    pub bottom_level: Option<i32>,
    pub free: Vec<CubeId>,
    pub mixed: Vec<CubeId>,
    pub covered_fraction: f64,
    /// Free-generation search exhausted its depth: no families built.
    pub inconclusive: bool,
    pub checks: FamilyChecks,
}

/// Builds the maximal free family below `root`: descend; keep each
/// target-free cube (maximality: its ancestors were not free) and stop
/// there; cubes still meeting the target at the bottom level form the
/// mixed family.
pub fn dyadic_families(
    system: &DyadicSystem,
    e: &TargetSet,
    root: CubeId,
    family_depth: u32,
    search_depth: u32,
    coverage_floor: Option<f64>,
) -> Result<DyadicPorosityReport> {
    if family_depth == 0 {
        return Err(Error::input("family depth must be at least 1"));
    }
    let g_rep = cube_max_free_generation(system, e, root, search_depth)?;
    let Some(g_free) = g_rep.g_value else {
        return Ok(DyadicPorosityReport {
            root,
            family_depth,
            free_generation: None,
            bottom_level: None,
            free: Vec::new(),
            mixed: Vec::new(),
            covered_fraction: 0.0,
            inconclusive: true,
            checks: FamilyChecks::default(),
        });
    };
    let bottom = g_free + family_depth as i32;
    if bottom > system.k_max() {
        return Err(Error::input(format!(
            "family bottom level {bottom} exceeds the built range (k_max = {}); rebuild deeper",
            system.k_max()
        )));
    }

    let mut free = Vec::new();
    let mut mixed = Vec::new();
    let mut frontier = vec![root];
    let mut level = root.level;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for q in frontier {
            if cube_is_free(system, e, q)? {
                free.push(q);
            } else if level == bottom {
                mixed.push(q);
            } else {
                next.extend(system.children(q)?);
            }
        }
        frontier = next;
        level += 1;
    }

    let root_cube = system.cube(root)?;
    let root_members = &root_cube.members;
    let mut mask = vec![false; space_len_of(system)];
    for m in root_members {
        mask[m.idx()] = true;
    }
    let mut seen = vec![false; mask.len()];
    let mut count = 0usize;
    let mut contained = true;
    let mut duplicates = false;
    let mut free_mass = 0.0;
    let mut mixed_mass = 0.0;
    for id in free.iter().chain(mixed.iter()) {
        let c = system.cube(*id)?;
        for m in &c.members {
            if !mask[m.idx()] {
                contained = false;
            }
            if seen[m.idx()] {
                duplicates = true;
            }
            seen[m.idx()] = true;
        }
        count += c.members.len();
    }
    for id in &free {
        free_mass += system.cube(*id)?.measure;
    }
    for id in &mixed {
        mixed_mass += system.cube(*id)?.measure;
    }
    let covered = free_mass / root_cube.measure;

    let root_free = cube_is_free(system, e, root)?;
    let mut checks = FamilyChecks {
        partition_exact: !duplicates
            && count == root_members.len()
            && free_mass + mixed_mass == root_cube.measure,
        root_free_iff_single: if root_free {
            free == vec![root] && mixed.is_empty()
        } else {
            free != vec![root] && !mixed.is_empty()
        },
        free_members_valid: true,
        members_contained: contained,
        mixed_meet_target: true,
        coverage_floor,
        coverage_floor_met: coverage_floor.map(|f| covered >= f - 1e-9),
    };
    for id in &free {
        if !cube_is_free(system, e, *id)? || id.level > bottom {
            checks.free_members_valid = false;
        }
    }
    for id in &mixed {
        if cube_is_free(system, e, *id)? || id.level != bottom {
            checks.mixed_meet_target = false;
        }
    }
    let hard_ok = checks.partition_exact
        && checks.root_free_iff_single
        && checks.free_members_valid
        && checks.members_contained
        && checks.mixed_meet_target
        && checks.coverage_floor_met.unwrap_or(true);
    if !hard_ok {
        return Err(Error::invariant(format!(
            "cube family post-checks failed at ({},{},{}): {checks:?}",
            root.grid, root.level, root.index
        )));
    }
    Ok(DyadicPorosityReport {
        root,
        family_depth,
        free_generation: Some(g_free),
        bottom_level: Some(bottom),
        free,
        mixed,
        covered_fraction: covered,
        inconclusive: false,
        checks,
    })
}

fn space_len_of(system: &DyadicSystem) -> usize {
    system.n_points()
}

/// One step of the iterated family construction.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionLevel {
    pub step: u32,
    pub free: Vec<CubeId>,
    pub mixed: Vec<CubeId>,
    pub free_mass: f64,
    /// Mass of non-target points not yet covered by any free cube.
    pub residual: f64,
}

/// Iterated cover of root ∖ target by free cubes: at each step the mixed
/// cubes of the previous step are decomposed again.
#[derive(Debug, Clone, Serialize)]
pub struct RecursiveDecomposition {
    pub root: CubeId,
    pub family_depth: u32,
    pub levels: Vec<DecompositionLevel>,
    /// Minimum covered fraction over all conclusive family reports; the
    /// honest constant for the key-sum bound.
    pub min_covered_fraction: Option<f64>,
    /// Some branch bottomed out before covering its non-target mass.
    pub partial_cover: bool,
    pub inconclusive_branches: usize,
}

fn nontarget_mass(system: &DyadicSystem, e: &TargetSet, id: CubeId) -> Result<f64> {
    let c = system.cube(id)?;
    Ok(c.members
        .iter()
        .filter(|m| !e.contains(**m))
        .map(|m| system.point_mass(*m))
        .sum())
}

pub fn recursive_decomposition(
    system: &DyadicSystem,
    e: &TargetSet,
    root: CubeId,
    family_depth: u32,
    max_steps: u32,
) -> Result<RecursiveDecomposition> {
    if max_steps == 0 {
        return Err(Error::input("need at least one decomposition step"));
    }
    let mut levels = Vec::new();
    let mut pending = vec![root];
    let mut stuck_mass = 0.0;
    let mut inconclusive = 0usize;
    let mut min_cover: Option<f64> = None;
    let mut prev_residual = f64::INFINITY;
    for step in 1..=max_steps {
        let mut free = Vec::new();
        let mut mixed = Vec::new();
        let mut free_mass = 0.0;
        for p in pending {
            let cube = system.cube(p)?;
            if cube.members.iter().all(|m| e.contains(*m)) {
                // saturated: nothing left to cover here
                continue;
            }
            let search = (system.k_max() - p.level).max(0) as u32;
            let rep = match dyadic_families(system, e, p, family_depth, search, None) {
                Ok(rep) => rep,
                Err(Error::Input(_)) => {
                    // bottom level out of range: branch cannot be refined
                    stuck_mass += nontarget_mass(system, e, p)?;
                    inconclusive += 1;
                    continue;
                }
                Err(other) => return Err(other),
            };
            if rep.inconclusive {
                stuck_mass += nontarget_mass(system, e, p)?;
                inconclusive += 1;
                continue;
            }
            min_cover = Some(match min_cover {
                None => rep.covered_fraction,
                Some(v) => v.min(rep.covered_fraction),
            });
            for id in &rep.free {
                free_mass += system.cube(*id)?.measure;
            }
            free.extend(rep.free);
            mixed.extend(rep.mixed);
        }
        let mut residual = stuck_mass;
        for id in &mixed {
            residual += nontarget_mass(system, e, *id)?;
        }
        if residual > prev_residual + 1e-12 {
            return Err(Error::invariant(format!(
                "residual grew from {prev_residual} to {residual} at step {step}"
            )));
        }
        prev_residual = residual;
        let done = mixed.is_empty();
        pending = mixed.clone();
        levels.push(DecompositionLevel {
            step,
            free,
            mixed,
            free_mass,
            residual,
        });
        if done {
            break;
        }
    }
    let final_residual = levels.last().map(|l| l.residual).unwrap_or(0.0);
    let root_mass = system.cube(root)?.measure;
    Ok(RecursiveDecomposition {
        root,
        family_depth,
        levels,
        min_covered_fraction: min_cover,
        partial_cover: final_residual > 1e-12 * root_mass,
        inconclusive_branches: inconclusive,
    })
}

/// Largest exponent beta > 0 (bisection to 1e-6) satisfying both
/// geometric-decay conditions behind the key sum:
///   theta^{-(m+M)·beta} · (1−c) < 1
///   theta^{-M·beta} / (1 − theta^{-(m+M)·beta}(1−c)) ≤ 2/c
pub fn beta_exponent(c: f64, m_step: u32, family_depth: u32, theta: f64) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::input(format!("covered fraction must lie in (0,1], got {c}")));
    }
    if m_step == 0 || family_depth == 0 {
        return Err(Error::input("generation steps must be at least 1"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::input(format!("theta must lie in (0,1), got {theta}")));
    }
    let feasible = |beta: f64| -> bool {
        let a = theta.powf(-((m_step + family_depth) as f64) * beta) * (1.0 - c);
        a < 1.0 && theta.powf(-(family_depth as f64) * beta) / (1.0 - a) <= 2.0 / c
    };
    // theta^{-M·beta} alone exceeds 2/c beyond this point
    let mut hi = (2.0 / c).ln() / (family_depth as f64 * (1.0 / theta).ln()) + 1e-3;
    let mut lo = 0.0;
    debug_assert!(!feasible(hi));
    for _ in 0..80 {
        if hi - lo < 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::invariant(
            "exponent bisection found no feasible value".to_string(),
        ));
    }
    Ok(lo)
}

/// Per-step term of the key sum.
#[derive(Debug, Clone, Serialize)]
pub struct KeySumLevel {
    pub step: u32,
    pub sum: f64,
    pub free_count: usize,
    pub mixed_count: usize,
}

/// The geometric sum over all free-family cubes against its closed-form
/// bound (2/c)·theta^{−g_free(root)·gamma}·mu(root).
#[derive(Debug, Clone, Serialize)]
pub struct KeySumReport {
    pub root: CubeId,
    pub gamma: f64,
    pub beta: f64,
    pub family_depth: u32,
    pub step_bound: u32,
    pub c: f64,
    pub free_generation: i32,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub steps: Vec<KeySumLevel>,
    /// Geometric factor the per-step sums must eventually obey.
    pub decay_bound: f64,
    pub decay_ok: bool,
    pub inconclusive_branches: usize,
}

/// Checks the truncated key sum. The generation-step hypothesis
/// g_free(child) ≤ m·(g(child) − g(parent)) + g_free(parent) is verified on
/// every recursion edge; a violation aborts with the witness pair.
pub fn key_sum_check(
    system: &DyadicSystem,
    e: &TargetSet,
    root: CubeId,
    family_depth: u32,
    step_bound: u32,
    c: f64,
    gamma: f64,
    max_steps: u32,
) -> Result<KeySumReport> {
    let theta = system.theta();
    let beta = beta_exponent(c, step_bound, family_depth, theta)?;
    if !(gamma > 0.0 && gamma <= beta + 1e-12) {
        return Err(Error::input(format!(
            "gamma must lie in (0, {beta}], got {gamma}"
        )));
    }
    let root_cube = system.cube(root)?;
    let g_root = cube_max_free_generation(
        system,
        e,
        root,
        (system.k_max() - root.level).max(0) as u32,
    )?;
    let Some(g0) = g_root.g_value else {
        return Err(Error::hypothesis(format!(
            "root cube ({},{},{}) has no free descendant in the built range",
            root.grid, root.level, root.index
        )));
    };

    let mut lhs = 0.0;
    let mut steps = Vec::new();
    let mut inconclusive = 0usize;
    // frontier entries carry the parent's (level, free generation)
    let mut frontier: Vec<(CubeId, Option<(i32, i32)>)> = vec![(root, None)];
    for step in 1..=max_steps {
        let mut next = Vec::new();
        let mut sum = 0.0;
        let mut free_count = 0usize;
        let mut mixed_count = 0usize;
        for (p, parent) in frontier {
            let cube = system.cube(p)?;
            if cube.members.iter().all(|m| e.contains(*m)) {
                continue;
            }
            let search = (system.k_max() - p.level).max(0) as u32;
            let rep = match dyadic_families(system, e, p, family_depth, search, None) {
                Ok(rep) => rep,
                Err(Error::Input(_)) => {
                    inconclusive += 1;
                    continue;
                }
                Err(other) => return Err(other),
            };
            if rep.inconclusive {
                inconclusive += 1;
                continue;
            }
            let g_here = rep.free_generation.unwrap();
            if let Some((pl, pg)) = parent {
                let allowed = step_bound as i32 * (p.level - pl) + pg;
                if g_here > allowed {
                    return Err(Error::hypothesis(format!(
                        "generation step hypothesis failed: cube ({},{},{}) has free generation {g_here} > {allowed} allowed from its ancestor at level {pl} with free generation {pg} and step {step_bound}",
                        p.grid, p.level, p.index
                    )));
                }
            }
            for id in &rep.free {
                let q = system.cube(*id)?;
                sum += theta.powf(-(id.level as f64) * gamma) * q.measure;
                free_count += 1;
            }
            for id in &rep.mixed {
                next.push((*id, Some((p.level, g_here))));
                mixed_count += 1;
            }
        }
        lhs += sum;
        steps.push(KeySumLevel {
            step,
            sum,
            free_count,
            mixed_count,
        });
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    let rhs = (2.0 / c) * theta.powf(-(g0 as f64) * gamma) * root_cube.measure;
    if !(lhs <= rhs * (1.0 + 1e-9)) {
        return Err(Error::invariant(format!(
            "key sum {lhs} exceeds its bound {rhs} at root ({},{},{})",
            root.grid, root.level, root.index
        )));
    }
    let decay_bound =
        theta.powf(-((step_bound + family_depth) as f64) * gamma) * (1.0 - c);
    let mut decay_ok = true;
    for w in steps.windows(2).skip(1) {
        if w[0].sum > 0.0 && w[1].sum / w[0].sum > decay_bound + 0.25 {
            decay_ok = false;
        }
    }
    Ok(KeySumReport {
        root,
        gamma,
        beta,
        family_depth,
        step_bound,
        c,
        free_generation: g0,
        lhs,
        rhs,
        slack: rhs / lhs,
        steps,
        decay_bound,
        decay_ok,
        inconclusive_branches: inconclusive,
    })
}

/// Structural coverage threshold: families covering at least this fraction
/// force the cube hole functional to respond tamely to rescaling.
#[derive(Debug, Clone, Serialize)]
pub struct AbsoluteThreshold {
    pub b_mu: f64,
    /// The exponent 1 + ⌊log2(2A/(a·theta))⌋ applied to 1/C_mu.
    pub exponent: i32,
}

pub fn absolute_threshold(c_mu: f64, a: f64, big_a: f64, theta: f64) -> Result<AbsoluteThreshold> {
    if !(c_mu >= 1.0 && c_mu.is_finite()) {
        return Err(Error::input(format!(
            "doubling constant must be at least 1, got {c_mu}"
        )));
    }
    if !(a > 0.0 && big_a >= a) {
        return Err(Error::input(format!(
            "need 0 < a ≤ A, got a = {a}, A = {big_a}"
        )));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::input(format!("theta must lie in (0,1), got {theta}")));
    }
    let exponent = 1 + (2.0 * big_a / (a * theta)).log2().floor() as i32;
    let b_mu = 1.0 - c_mu.powi(-exponent);
    Ok(AbsoluteThreshold { b_mu, exponent })
}

/// Coverage frontier over the family-depth sweep.
#[derive(Debug, Clone, Serialize)]
pub struct AbsoluteClassification {
    pub threshold: AbsoluteThreshold,
    /// (family depth M, minimum covered fraction over conclusive cubes,
    /// conclusive count, skipped count).
    pub per_depth: Vec<(u32, f64, usize, usize)>,
    pub absolute: bool,
    pub witness_depth: Option<u32>,
}

/// Sweeps family depths 1..=max_depth over every conclusive cube of the
/// system; classified absolute when some depth keeps every cube's covered
/// fraction at or above b_mu.
pub fn absolute_classification(
    system: &DyadicSystem,
    e: &TargetSet,
    c_mu: f64,
    max_depth: u32,
) -> Result<AbsoluteClassification> {
    let threshold = absolute_threshold(c_mu, system.a, system.big_a, system.theta())?;
    let mut per_depth = Vec::new();
    let mut absolute = false;
    let mut witness = None;
    for depth in 1..=max_depth {
        let mut min_cover = f64::INFINITY;
        let mut conclusive = 0usize;
        let mut skipped = 0usize;
        for grid in 0..system.grid_count() {
            for k in system.k_min()..=system.k_max() {
                for id in system.level_cubes(grid, k)? {
                    let cube = system.cube(id)?;
                    if cube.members.iter().all(|m| e.contains(*m)) {
                        skipped += 1;
                        continue;
                    }
                    let search = (system.k_max() - k).max(0) as u32;
                    match dyadic_families(system, e, id, depth, search, None) {
                        Ok(rep) if !rep.inconclusive => {
                            conclusive += 1;
                            min_cover = min_cover.min(rep.covered_fraction);
                        }
                        Ok(_) => skipped += 1,
                        Err(Error::Input(_)) => skipped += 1,
                        Err(other) => return Err(other),
                    }
                }
            }
        }
        let min_cover = if conclusive > 0 { min_cover } else { 0.0 };
        per_depth.push((depth, min_cover, conclusive, skipped));
        if conclusive > 0 && min_cover >= threshold.b_mu - 1e-9 && !absolute {
            absolute = true;
            witness = Some(depth);
        }
    }
    Ok(AbsoluteClassification {
        threshold,
        per_depth,
        absolute,
        witness_depth: witness,
    })
}
