//! Net hierarchies and adjacent systems of dyadic-style cubes.
//!
//! A system is built from T independently seeded greedy nets. Each grid
//! gives, per generation k, a partition of the point set into "cubes": a
//! point belongs to the cube of the net point found by following parent
//! links upward from its nearest finest-level net point. Nestedness and
//! exact partitioning are consequences of that single-anchor construction;
//! the ball-sandwich constants (a, A) are measured on the built system
//! rather than assumed.
//!
//! Generations use the scale ladder theta^k: smaller k means coarser. The
//! default ladder runs from a root level whose scale exceeds the diameter
//! down one level past the sampling resolution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{power_fit, LineFit};
use crate::space::{Ball, MetricMeasureSpace, PointId};

/// Build parameters for a cube system.
#[derive(Debug, Clone, Serialize)]
pub struct DyadicParams {
    /// Scale ratio between consecutive generations, in (0,1).
    pub theta: f64,
    /// Net separation coefficient: level-k net points are ≥ c0·theta^k apart.
    pub c0: f64,
    /// Net covering coefficient: every point is < cover·theta^k from the
    /// level-k net. Must be ≥ c0.
    pub cover: f64,
    /// Number of adjacent grids (independently seeded hierarchies).
    pub grids: usize,
    /// Coarsest generation; default: largest k with cover·theta^k > diameter.
    pub k_min: Option<i32>,
    /// Finest generation; default: one level below the resolution scale.
    pub k_max: Option<i32>,
    pub seed: u64,
}

impl Default for DyadicParams {
    fn default() -> Self {
        DyadicParams {
            theta: 0.25,
            c0: 1.0,
            cover: 1.0,
            grids: 4,
            k_min: None,
            k_max: None,
            seed: 0,
        }
    }
}

impl DyadicParams {
    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::input(format!(
                "scale ratio must lie in (0,1), got {}",
                self.theta
            )));
        }
        if !(self.c0 > 0.0 && self.c0 <= self.cover) {
            return Err(Error::input(format!(
                "net coefficients need 0 < c0 ≤ cover, got c0 = {}, cover = {}",
                self.c0, self.cover
            )));
        }
        if self.grids < 1 {
            return Err(Error::input("need at least one grid"));
        }
        if let (Some(lo), Some(hi)) = (self.k_min, self.k_max) {
            if lo > hi {
                return Err(Error::input(format!(
                    "generation range is empty: k_min = {lo} > k_max = {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// Address of one cube: grid, generation, index within the generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CubeId {
    pub grid: usize,
    pub level: i32,
    pub index: usize,
}

/// One cube's stored data.
#[derive(Debug, Clone)]
pub struct CubeData {
    /// The net point the cube is centered on.
    pub net_point: PointId,
    /// Member point ids, ascending.
    pub members: Vec<PointId>,
    /// Total mass of the members.
    pub measure: f64,
    /// Index of the containing cube one generation coarser.
    pub parent: Option<usize>,
    /// Indices of the cubes one generation finer that it splits into.
    pub children: Vec<usize>,
}

#[derive(Debug)]
struct Grid {
    /// Net point ids in insertion order; each level's net is a prefix.
    net_ids: Vec<u32>,
    /// Net size per level (prefix length into `net_ids`).
    level_len: Vec<usize>,
    /// Per level, per point: index of the containing cube.
    point_cube: Vec<Vec<u32>>,
    /// Per level: cube table (index-aligned with the level's net prefix).
    cubes: Vec<Vec<CubeData>>,
    /// Largest covering radius seen per level (diagnostic).
    covering: Vec<f64>,
}

/// A built system of adjacent cube grids over one space.
#[derive(Debug)]
pub struct DyadicSystem {
    params: DyadicParams,
    k_min: i32,
    k_max: i32,
    n_points: usize,
    total_mass: f64,
    resolution: f64,
    masses: Vec<f64>,
    grids: Vec<Grid>,
    /// Measured inner ball coefficient: B(z, a·theta^k) ∩ X ⊆ Q for every cube.
    pub a: f64,
    /// Measured outer ball coefficient: Q ⊆ B(z, A·theta^k) for every cube.
    pub big_a: f64,
    /// Fraction of sampled admissible balls not contained in any grid's cube
    /// at the mandated level.
    pub adjacency_miss_rate: f64,
    /// Whether every parent link also satisfies the stricter c0-scale bound.
    pub strict_parent_links: bool,
}

/// Result of a containing-cube lookup.
#[derive(Debug, Clone, Serialize)]
pub struct ContainingCube {
    pub cube: CubeId,
    /// True when no grid fully contained the ball at the mandated level;
    /// the returned cube is then the best mass-coverage candidate.
    pub adjacency_miss: bool,
    /// Mass fraction of the ball covered by the returned cube.
    pub coverage: f64,
}

/// Serializable build summary.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSummary {
    pub params: DyadicParams,
    pub k_min: i32,
    pub k_max: i32,
    pub n_points: usize,
    pub total_mass: f64,
    pub a: f64,
    pub big_a: f64,
    pub adjacency_miss_rate: f64,
    pub strict_parent_links: bool,
    /// Net size per grid per level.
    pub net_sizes: Vec<Vec<usize>>,
    /// Largest covering radius per grid per level.
    pub covering: Vec<Vec<f64>>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Largest k with cover·theta^k strictly above the diameter (single root).
fn default_k_min(theta: f64, cover: f64, diameter: f64) -> i32 {
    let mut k = (diameter.ln() / theta.ln()).floor() as i32;
    while cover * theta.powi(k) <= diameter {
        k -= 1;
    }
    while cover * theta.powi(k + 1) > diameter {
        k += 1;
    }
    k
}

/// Largest k with theta^k ≥ resolution, plus one sub-resolution level.
fn resolution_level(theta: f64, h: f64) -> i32 {
    let mut f = (h.ln() / theta.ln()).floor() as i32;
    while theta.powi(f) < h {
        f -= 1;
    }
    while theta.powi(f + 1) >= h {
        f += 1;
    }
    f + 1
}

impl DyadicSystem {
    pub fn theta(&self) -> f64 {
        self.params.theta
    }

    pub fn scale(&self, level: i32) -> f64 {
        self.params.theta.powi(level)
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    pub fn grid_count(&self) -> usize {
        self.grids.len()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Mass of one point, copied from the space at build time.
    pub fn point_mass(&self, p: PointId) -> f64 {
        self.masses[p.idx()]
    }

    pub fn params(&self) -> &DyadicParams {
        &self.params
    }

    fn lidx(&self, level: i32) -> Result<usize> {
        if level < self.k_min || level > self.k_max {
            return Err(Error::input(format!(
                "generation {level} outside built range {}..={}",
                self.k_min, self.k_max
            )));
        }
        Ok((level - self.k_min) as usize)
    }

    fn grid(&self, g: usize) -> Result<&Grid> {
        self.grids
            .get(g)
            .ok_or_else(|| Error::input(format!("grid {g} out of range (have {})", self.grids.len())))
    }

    pub fn cube(&self, id: CubeId) -> Result<&CubeData> {
        let l = self.lidx(id.level)?;
        self.grid(id.grid)?
            .cubes[l]
            .get(id.index)
            .ok_or_else(|| Error::input(format!("cube index {} out of range", id.index)))
    }

    /// Number of cubes in one generation of one grid.
    pub fn cube_count(&self, grid: usize, level: i32) -> Result<usize> {
        let l = self.lidx(level)?;
        Ok(self.grid(grid)?.cubes[l].len())
    }

    /// Ids of all cubes in one generation of one grid, index order.
    pub fn level_cubes(&self, grid: usize, level: i32) -> Result<Vec<CubeId>> {
        let n = self.cube_count(grid, level)?;
        Ok((0..n)
            .map(|index| CubeId { grid, level, index })
            .collect())
    }

    /// The cube of `p` in the given grid and generation.
    pub fn cube_of_point(&self, grid: usize, level: i32, p: PointId) -> Result<CubeId> {
        let l = self.lidx(level)?;
        let g = self.grid(grid)?;
        let idx = *g.point_cube[l]
            .get(p.idx())
            .ok_or_else(|| Error::input(format!("unknown point id {}", p.0)))?;
        Ok(CubeId {
            grid,
            level,
            index: idx as usize,
        })
    }

    pub fn parent(&self, id: CubeId) -> Result<Option<CubeId>> {
        let data = self.cube(id)?;
        Ok(data.parent.map(|index| CubeId {
            grid: id.grid,
            level: id.level - 1,
            index,
        }))
    }

    pub fn children(&self, id: CubeId) -> Result<Vec<CubeId>> {
        let data = self.cube(id)?;
        if id.level >= self.k_max {
            return Ok(Vec::new());
        }
        Ok(data
            .children
            .iter()
            .map(|&index| CubeId {
                grid: id.grid,
                level: id.level + 1,
                index,
            })
            .collect())
    }

    /// `id` and all its descendants down to `depth` generations below,
    /// breadth-first (generation ascending, index ascending).
    pub fn descendants(&self, id: CubeId, depth: u32) -> Result<Vec<CubeId>> {
        self.cube(id)?;
        let mut out = vec![id];
        let mut frontier = vec![id];
        for _ in 0..depth {
            let mut next = Vec::new();
            for q in &frontier {
                next.extend(self.children(*q)?);
            }
            if next.is_empty() {
                break;
            }
            out.extend(next.iter().copied());
            frontier = next;
        }
        Ok(out)
    }

    /// The unique inclusion chain from `p` up to its ancestor `p_top`,
    /// generations decreasing by one: `[p, parent(p), ..., p_top]`.
    pub fn chain(&self, p: CubeId, p_top: CubeId) -> Result<Vec<CubeId>> {
        if p.grid != p_top.grid {
            return Err(Error::input("chain endpoints must share a grid"));
        }
        if p.level < p_top.level {
            return Err(Error::input("chain start must be at least as deep as its end"));
        }
        let mut out = vec![p];
        let mut cur = p;
        while cur.level > p_top.level {
            cur = self
                .parent(cur)?
                .ok_or_else(|| Error::invariant("parent link missing above the root"))?;
            out.push(cur);
        }
        if cur != p_top {
            return Err(Error::input("cubes are not nested: no chain exists"));
        }
        Ok(out)
    }

    /// Whether the cube holds every point of the space.
    pub fn is_whole_space(&self, id: CubeId) -> Result<bool> {
        Ok(self.cube(id)?.members.len() == self.n_points)
    }

    /// Generation mandated for a ball of radius `r`: the k with
    /// theta^{k+2} < r ≤ theta^{k+1}.
    pub fn mandated_level(&self, r: f64) -> Result<i32> {
        let theta = self.params.theta;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::input(format!("radius must be positive, got {r}")));
        }
        let guess = (r.ln() / theta.ln()).floor() as i32 - 1;
        for k in (guess - 2)..=(guess + 2) {
            if theta.powi(k + 2) < r && r <= theta.powi(k + 1) {
                if k < self.k_min || k > self.k_max {
                    return Err(Error::input(format!(
                        "radius {r} maps to generation {k}, outside built range {}..={}",
                        self.k_min, self.k_max
                    )));
                }
                return Ok(k);
            }
        }
        Err(Error::input(format!(
            "radius {r} outside the admissible range ({}, {}]",
            theta.powi(self.k_min + 2),
            theta.powi(self.k_min + 1)
        )))
    }

    /// Find a cube containing the ball at the mandated generation, trying
    /// each grid in order; on total miss, return the best mass-coverage
    /// cube with the miss flagged.
    pub fn containing_cube(
        &self,
        space: &MetricMeasureSpace,
        ball: &Ball,
    ) -> Result<ContainingCube> {
        self.check_space(space)?;
        if ball.radius < self.resolution {
            return Err(Error::input(format!(
                "radius {} below the resolution {}",
                ball.radius, self.resolution
            )));
        }
        let k = self.mandated_level(ball.radius)?;
        let l = (k - self.k_min) as usize;
        let members: Vec<u32> = (0..self.n_points as u32)
            .filter(|q| space.distance(ball.center, PointId(*q)) < ball.radius)
            .collect();
        let ball_mass: f64 = members.iter().map(|q| space.mass_of(PointId(*q))).sum();
        let mut best: Option<(f64, CubeId)> = None;
        for (g, grid) in self.grids.iter().enumerate() {
            let home = grid.point_cube[l][ball.center.idx()];
            let mut covered = 0.0;
            let mut all = true;
            for q in &members {
                if grid.point_cube[l][*q as usize] == home {
                    covered += space.mass_of(PointId(*q));
                } else {
                    all = false;
                }
            }
            let id = CubeId {
                grid: g,
                level: k,
                index: home as usize,
            };
            if all {
                return Ok(ContainingCube {
                    cube: id,
                    adjacency_miss: false,
                    coverage: 1.0,
                });
            }
            let frac = if ball_mass > 0.0 { covered / ball_mass } else { 0.0 };
            if best.as_ref().map_or(true, |(f, _)| frac > *f) {
                best = Some((frac, id));
            }
        }
        let (coverage, cube) = best.expect("at least one grid");
        Ok(ContainingCube {
            cube,
            adjacency_miss: true,
            coverage,
        })
    }

    /// Descend from `q` toward the ball's center until the cube fits inside
    /// the ball (set-level); returns the shallowest such descendant. The
    /// scale bound radius ≤ (2A/theta)·theta^g is asserted on the result.
    pub fn fit_cube_in_ball(
        &self,
        space: &MetricMeasureSpace,
        ball: &Ball,
        q: CubeId,
    ) -> Result<CubeId> {
        self.check_space(space)?;
        let data = self.cube(q)?;
        let l = self.lidx(q.level)?;
        let grid = self.grid(q.grid)?;
        if grid.point_cube[l][ball.center.idx()] as usize != q.index {
            return Err(Error::input("ball center does not lie in the given cube"));
        }
        // the ball must be a proper subset of the cube
        let mut inside = 0usize;
        for p in space.points() {
            if space.distance(ball.center, p) < ball.radius {
                if grid.point_cube[l][p.idx()] as usize != q.index {
                    return Err(Error::input("ball is not contained in the given cube"));
                }
                inside += 1;
            }
        }
        if inside == data.members.len() {
            return Err(Error::input(
                "ball already exhausts the cube; a proper subset is required",
            ));
        }
        let fits = |id: CubeId| -> Result<bool> {
            let d = self.cube(id)?;
            Ok(d.members
                .iter()
                .all(|m| space.distance(ball.center, *m) < ball.radius))
        };
        let mut cur = q;
        loop {
            if cur.level >= self.k_max {
                return Err(Error::input(format!(
                    "no descendant of the cube fits in the ball down to generation {}",
                    self.k_max
                )));
            }
            cur = self.cube_of_point(cur.grid, cur.level + 1, ball.center)?;
            if fits(cur)? {
                break;
            }
        }
        let bound = (2.0 * self.big_a / self.params.theta) * self.scale(cur.level);
        if ball.radius > bound {
            return Err(Error::invariant(format!(
                "fitted cube at generation {} violates the scale bound: radius {} > {}",
                cur.level, ball.radius, bound
            )));
        }
        Ok(cur)
    }

    /// Mass fraction of the cube lying within lam·theta^g of its complement.
    /// Zero by convention when the cube is the whole space.
    pub fn boundary_ratio(
        &self,
        space: &MetricMeasureSpace,
        id: CubeId,
        lam: f64,
    ) -> Result<f64> {
        self.check_space(space)?;
        if !(lam > 0.0 && lam.is_finite()) {
            return Err(Error::input(format!("lambda must be positive, got {lam}")));
        }
        let data = self.cube(id)?;
        if data.members.len() == self.n_points {
            return Ok(0.0);
        }
        let l = self.lidx(id.level)?;
        let grid = self.grid(id.grid)?;
        let outside: Vec<u32> = (0..self.n_points as u32)
            .filter(|p| grid.point_cube[l][*p as usize] as usize != id.index)
            .collect();
        let threshold = lam * self.scale(id.level);
        let near: f64 = data
            .members
            .par_iter()
            .map(|m| {
                let mut d = f64::INFINITY;
                for o in &outside {
                    let t = space.distance(*m, PointId(*o));
                    if t < d {
                        d = t;
                    }
                }
                if d <= threshold {
                    space.mass_of(*m)
                } else {
                    0.0
                }
            })
            .sum();
        if data.measure <= 0.0 {
            return Ok(0.0);
        }
        Ok(near / data.measure)
    }

    fn check_space(&self, space: &MetricMeasureSpace) -> Result<()> {
        if space.len() != self.n_points {
            return Err(Error::input(
                "space does not match the one this system was built from",
            ));
        }
        Ok(())
    }

    pub fn summary(&self) -> SystemSummary {
        SystemSummary {
            params: self.params.clone(),
            k_min: self.k_min,
            k_max: self.k_max,
            n_points: self.n_points,
            total_mass: self.total_mass,
            a: self.a,
            big_a: self.big_a,
            adjacency_miss_rate: self.adjacency_miss_rate,
            strict_parent_links: self.strict_parent_links,
            net_sizes: self.grids.iter().map(|g| g.level_len.clone()).collect(),
            covering: self.grids.iter().map(|g| g.covering.clone()).collect(),
        }
    }
}

fn build_grid(
    space: &MetricMeasureSpace,
    levels: &[i32],
    theta: f64,
    cover: f64,
    seed: u64,
) -> Grid {
    let n = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut rng);
    let mut rank = vec![0u32; n];
    for (pos, id) in order.iter().enumerate() {
        rank[*id as usize] = pos as u32;
    }

    // farthest-point insertion; each level's net is a prefix of the next
    let mut dmin = vec![f64::INFINITY; n];
    let mut net_ids: Vec<u32> = Vec::new();
    let mut level_len = Vec::with_capacity(levels.len());
    let mut covering = Vec::with_capacity(levels.len());
    for k in levels {
        let threshold = cover * theta.powi(*k);
        loop {
            let mut best: Option<(f64, u32, u32)> = None; // (dmin, rank, id)
            for i in 0..n {
                let d = dmin[i];
                let r = rank[i];
                if best.map_or(true, |(bd, br, _)| d > bd || (d == bd && r < br)) {
                    best = Some((d, r, i as u32));
                }
            }
            let (d, _, i) = best.expect("nonempty space");
            if d < threshold {
                covering.push(if d.is_finite() { d } else { 0.0 });
                break;
            }
            net_ids.push(i);
            let p = PointId(i);
            for (j, slot) in dmin.iter_mut().enumerate() {
                let t = space.distance(p, PointId(j as u32));
                if t < *slot {
                    *slot = t;
                }
            }
        }
        level_len.push(net_ids.len());
    }

    // parent links: nearest coarser net point, ties to the smallest point id.
    // prefix alignment keeps indices stable, so prefix points are their own
    // parents.
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(levels.len());
    parents.push(Vec::new());
    for l in 1..levels.len() {
        let prev_len = level_len[l - 1];
        let cur_len = level_len[l];
        let mut par = Vec::with_capacity(cur_len);
        for i in 0..cur_len {
            if i < prev_len {
                par.push(i as u32);
                continue;
            }
            let z = PointId(net_ids[i]);
            let mut best = (f64::INFINITY, u32::MAX, 0u32);
            for (j, cand) in net_ids[..prev_len].iter().enumerate() {
                let d = space.distance(z, PointId(*cand));
                if d < best.0 || (d == best.0 && *cand < best.1) {
                    best = (d, *cand, j as u32);
                }
            }
            par.push(best.2);
        }
        parents.push(par);
    }

    // anchor every point at the finest net, ties to the smallest point id
    let finest = &net_ids[..*level_len.last().expect("at least one level")];
    let anchors: Vec<u32> = (0..n as u32)
        .into_par_iter()
        .map(|p| {
            let p = PointId(p);
            let mut best = (f64::INFINITY, u32::MAX, 0u32);
            for (j, cand) in finest.iter().enumerate() {
                let d = space.distance(p, PointId(*cand));
                if d < best.0 || (d == best.0 && *cand < best.1) {
                    best = (d, *cand, j as u32);
                }
            }
            best.2
        })
        .collect();

    // ancestry: cube index per level for every point, finest to coarsest
    let mut point_cube: Vec<Vec<u32>> = vec![Vec::new(); levels.len()];
    point_cube[levels.len() - 1] = anchors;
    for l in (0..levels.len() - 1).rev() {
        let finer = std::mem::take(&mut point_cube[l + 1]);
        point_cube[l] = finer.iter().map(|c| parents[l + 1][*c as usize]).collect();
        point_cube[l + 1] = finer;
    }

    // cube tables: members in id order, measures summed in that order
    let mut cubes: Vec<Vec<CubeData>> = Vec::with_capacity(levels.len());
    for (l, len) in level_len.iter().enumerate() {
        let mut level_cubes: Vec<CubeData> = (0..*len)
            .map(|i| CubeData {
                net_point: PointId(net_ids[i]),
                members: Vec::new(),
                measure: 0.0,
                parent: if l == 0 {
                    None
                } else {
                    Some(parents[l][i] as usize)
                },
                children: Vec::new(),
            })
            .collect();
        for p in 0..n {
            let c = point_cube[l][p] as usize;
            level_cubes[c].members.push(PointId(p as u32));
            level_cubes[c].measure += space.mass_of(PointId(p as u32));
        }
        cubes.push(level_cubes);
    }
    for l in 1..levels.len() {
        for i in 0..level_len[l] {
            let par = parents[l][i] as usize;
            // split borrows: parent table lives one level up
            let (coarse, fine) = cubes.split_at_mut(l);
            let _ = &fine;
            coarse[l - 1][par].children.push(i);
        }
    }

    Grid {
        net_ids,
        level_len,
        point_cube,
        cubes,
        covering,
    }
}

/// Build a full adjacent cube system over the space.
pub fn build_dyadic_system(
    space: &MetricMeasureSpace,
    params: &DyadicParams,
) -> Result<DyadicSystem> {
    params.validate()?;
    let theta = params.theta;
    let diameter = space.diameter_hint();
    let h = space.resolution();
    let res_level = resolution_level(theta, h);
    let k_min = params
        .k_min
        .unwrap_or_else(|| default_k_min(theta, params.cover, diameter));
    let k_max = params.k_max.unwrap_or(res_level);
    if k_max > res_level {
        return Err(Error::input(format!(
            "resolution {h} too coarse for generation {k_max}; deepest supported is {res_level}"
        )));
    }
    if k_min > k_max {
        return Err(Error::input(format!(
            "generation range is empty: k_min = {k_min} > k_max = {k_max}"
        )));
    }
    let levels: Vec<i32> = (k_min..=k_max).collect();

    let grids: Vec<Grid> = (0..params.grids)
        .into_par_iter()
        .map(|t| {
            build_grid(
                space,
                &levels,
                theta,
                params.cover,
                splitmix(params.seed ^ (t as u64).wrapping_mul(0x9e37_79b9)),
            )
        })
        .collect();

    // verify exact partitioning and parent-link scale bounds
    let mut strict_parent_links = true;
    for grid in &grids {
        for (l, level_cubes) in grid.cubes.iter().enumerate() {
            let count: usize = level_cubes.iter().map(|c| c.members.len()).sum();
            if count != space.len() {
                return Err(Error::invariant(format!(
                    "partition defect at generation {}: {count} members over {} points",
                    levels[l],
                    space.len()
                )));
            }
            let mass: f64 = level_cubes.iter().map(|c| c.measure).sum();
            let tol = space.total_mass() * 1e-12;
            if (mass - space.total_mass()).abs() > tol {
                return Err(Error::invariant(format!(
                    "measure defect at generation {}: cubes sum to {mass}, space has {}",
                    levels[l],
                    space.total_mass()
                )));
            }
        }
        for l in 1..levels.len() {
            let coarse_scale = theta.powi(levels[l - 1]);
            for i in 0..grid.level_len[l] {
                let z = PointId(grid.net_ids[i]);
                let par = grid.cubes[l][i].parent.expect("non-root cube has a parent");
                let pz = grid.cubes[l - 1][par].net_point;
                let d = space.distance(z, pz);
                if d >= params.cover * coarse_scale {
                    return Err(Error::invariant(format!(
                        "parent link at generation {} spans {d}, exceeding the covering scale",
                        levels[l]
                    )));
                }
                if d >= params.c0 * coarse_scale {
                    strict_parent_links = false;
                }
            }
        }
    }

    // measure the ball-sandwich coefficients on the built cubes
    let mut big_a = 0.0f64;
    let mut a = f64::INFINITY;
    for grid in &grids {
        for (l, level_cubes) in grid.cubes.iter().enumerate() {
            let scale = theta.powi(levels[l]);
            let results: Vec<(f64, f64)> = level_cubes
                .par_iter()
                .enumerate()
                .map(|(i, cube)| {
                    let z = cube.net_point;
                    let mut out_max = 0.0f64;
                    for m in &cube.members {
                        let d = space.distance(z, *m);
                        if d > out_max {
                            out_max = d;
                        }
                    }
                    let mut in_min = f64::INFINITY;
                    if cube.members.len() < space.len() {
                        for p in space.points() {
                            if grid.point_cube[l][p.idx()] as usize != i {
                                let d = space.distance(z, p);
                                if d < in_min {
                                    in_min = d;
                                }
                            }
                        }
                    }
                    (out_max / scale, in_min / scale)
                })
                .collect();
            for (omax, imin) in results {
                if omax > big_a {
                    big_a = omax;
                }
                if imin < a {
                    a = imin;
                }
            }
        }
    }
    // outer containment must be strict (open balls); inflate a hair
    let big_a = if big_a > 0.0 { big_a * (1.0 + 1e-9) } else { 1e-9 };
    let a = if a.is_finite() { a.min(big_a / 2.0) } else { big_a / 2.0 };
    if a <= 0.0 {
        return Err(Error::invariant(
            "inner ball coefficient collapsed to zero (coincident points across cubes)",
        ));
    }

    let mut system = DyadicSystem {
        params: params.clone(),
        k_min,
        k_max,
        n_points: space.len(),
        total_mass: space.total_mass(),
        resolution: h,
        masses: space.points().map(|p| space.mass_of(p)).collect(),
        grids,
        a,
        big_a,
        adjacency_miss_rate: 0.0,
        strict_parent_links,
    };

    // sample the containing-cube miss rate over admissible radii
    let lo = h;
    let hi = theta.powi(k_min + 1);
    if hi > lo {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(params.seed ^ 0xada0_ce17));
        let samples = 1000;
        let mut misses = 0usize;
        for _ in 0..samples {
            let c = PointId(rng.gen_range(0..space.len() as u32));
            let u: f64 = rng.gen();
            let r = (lo.ln() + u * (hi.ln() - lo.ln())).exp().min(hi).max(lo);
            match system.containing_cube(space, &Ball::new(c, r)) {
                Ok(res) => {
                    if res.adjacency_miss {
                        misses += 1;
                    }
                }
                Err(_) => misses += 1,
            }
        }
        system.adjacency_miss_rate = misses as f64 / samples as f64;
    }
    Ok(system)
}

/// Power-law fit of the boundary-mass envelope: for each lambda, the max
/// over qualifying cubes of the boundary mass fraction, fitted as C·lambda^eta.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryDecayFit {
    pub lambdas: Vec<f64>,
    /// Max boundary ratio over qualifying cubes, per lambda.
    pub envelope: Vec<f64>,
    pub eta: f64,
    pub r2: f64,
    /// Coefficient inflated so C·lambda^eta dominates every envelope point.
    pub c_bound: f64,
    pub cubes_used: usize,
    pub min_members: usize,
}

pub fn boundary_decay_fit(
    space: &MetricMeasureSpace,
    system: &DyadicSystem,
    lambdas: &[f64],
    min_members: usize,
) -> Result<BoundaryDecayFit> {
    if lambdas.is_empty() {
        return Err(Error::input("need at least one lambda"));
    }
    for l in lambdas {
        if !(*l > 0.0 && l.is_finite()) {
            return Err(Error::input(format!("lambda must be positive, got {l}")));
        }
    }
    let mut qualifying: Vec<CubeId> = Vec::new();
    for g in 0..system.grid_count() {
        for k in system.k_min()..=system.k_max() {
            for id in system.level_cubes(g, k)? {
                let data = system.cube(id)?;
                if data.members.len() >= min_members && data.members.len() < system.n_points() {
                    qualifying.push(id);
                }
            }
        }
    }
    if qualifying.is_empty() {
        return Err(Error::input(format!(
            "no cube has {min_members} members without being the whole space"
        )));
    }
    let per_cube: Vec<Vec<f64>> = qualifying
        .par_iter()
        .map(|id| {
            lambdas
                .iter()
                .map(|lam| system.boundary_ratio(space, *id, *lam).unwrap_or(0.0))
                .collect()
        })
        .collect();
    let envelope: Vec<f64> = (0..lambdas.len())
        .map(|j| {
            per_cube
                .iter()
                .map(|r| r[j])
                .fold(0.0f64, f64::max)
        })
        .collect();
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(&envelope)
        .filter(|(_, e)| **e > 0.0)
        .map(|(l, e)| (*l, *e))
        .collect();
    let fit: LineFit = power_fit(&pts)
        .ok_or_else(|| Error::input("boundary envelope is degenerate; cannot fit an exponent"))?;
    let eta = fit.slope;
    let mut c_bound = 0.0f64;
    for (l, e) in &pts {
        c_bound = c_bound.max(e / l.powf(eta));
    }
    c_bound *= 1.0 + 1e-9;
    Ok(BoundaryDecayFit {
        lambdas: lambdas.to_vec(),
        envelope,
        eta,
        r2: fit.r2,
        c_bound,
        cubes_used: qualifying.len(),
        min_members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{random_cloud, segment_with_integer_set};

    fn unit_segment(n: usize) -> MetricMeasureSpace {
        let h = 1.0 / (n - 1) as f64;
        let coords: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        MetricMeasureSpace::new("unit", 1, coords, vec![1.0 / n as f64; n], h).unwrap()
    }

    fn params(theta: f64, grids: usize, seed: u64) -> DyadicParams {
        DyadicParams {
            theta,
            grids,
            seed,
            ..DyadicParams::default()
        }
    }

    #[test]
    fn single_point_space_builds_one_net_point_per_level() {
        let s = MetricMeasureSpace::new("pt", 1, vec![0.0], vec![1.0], 1.0).unwrap();
        let sys = build_dyadic_system(&s, &params(0.5, 2, 1)).unwrap();
        for g in 0..2 {
            for k in sys.k_min()..=sys.k_max() {
                assert_eq!(sys.cube_count(g, k).unwrap(), 1);
            }
        }
    }

    #[test]
    fn root_level_is_a_single_whole_space_cube() {
        let s = unit_segment(129);
        let sys = build_dyadic_system(&s, &params(0.5, 3, 7)).unwrap();
        for g in 0..3 {
            assert_eq!(sys.cube_count(g, sys.k_min()).unwrap(), 1);
            let root = CubeId {
                grid: g,
                level: sys.k_min(),
                index: 0,
            };
            assert!(sys.is_whole_space(root).unwrap());
        }
    }

    #[test]
    fn levels_partition_points_and_mass_exactly() {
        let (s, _) = segment_with_integer_set(2, 1.0 / 32.0).unwrap();
        let sys = build_dyadic_system(&s, &params(0.5, 4, 3)).unwrap();
        for g in 0..4 {
            for k in sys.k_min()..=sys.k_max() {
                let ids = sys.level_cubes(g, k).unwrap();
                let mut count = 0usize;
                let mut mass = 0.0;
                for id in &ids {
                    let c = sys.cube(*id).unwrap();
                    count += c.members.len();
                    mass += c.measure;
                }
                assert_eq!(count, s.len());
                // dyadic masses: grouping cannot change the exact sum
                assert_eq!(mass, s.total_mass());
            }
        }
    }

    #[test]
    fn children_partition_their_parent() {
        let s = unit_segment(200);
        let sys = build_dyadic_system(&s, &params(0.25, 2, 5)).unwrap();
        for g in 0..2 {
            for k in sys.k_min()..sys.k_max() {
                for id in sys.level_cubes(g, k).unwrap() {
                    let parent = sys.cube(id).unwrap();
                    let mut child_members: Vec<PointId> = Vec::new();
                    for ch in sys.children(id).unwrap() {
                        let c = sys.cube(ch).unwrap();
                        assert_eq!(c.parent, Some(id.index));
                        child_members.extend_from_slice(&c.members);
                    }
                    child_members.sort();
                    assert_eq!(child_members, parent.members);
                }
            }
        }
    }

    #[test]
    fn nestedness_and_generation_monotonicity_hold_on_sampled_pairs() {
        let s = random_cloud(400, 2, 21).unwrap();
        let sys = build_dyadic_system(&s, &params(0.25, 2, 11)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let g = rng.gen_range(0..2);
            let k1 = rng.gen_range(sys.k_min()..=sys.k_max());
            let k2 = rng.gen_range(sys.k_min()..=sys.k_max());
            let (coarse, fine) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let ci = rng.gen_range(0..sys.cube_count(g, coarse).unwrap());
            let fi = rng.gen_range(0..sys.cube_count(g, fine).unwrap());
            let cq = CubeId { grid: g, level: coarse, index: ci };
            let fq = CubeId { grid: g, level: fine, index: fi };
            let cm = &sys.cube(cq).unwrap().members;
            let fm = &sys.cube(fq).unwrap().members;
            let inside = fm.iter().filter(|p| cm.binary_search(p).is_ok()).count();
            assert!(
                inside == 0 || inside == fm.len(),
                "same-grid cubes must nest or be disjoint"
            );
            if inside == fm.len() && fm.len() < cm.len() {
                assert!(fq.level > cq.level, "proper subset must be strictly finer");
            }
        }
    }

    #[test]
    fn every_point_is_covered_at_every_level() {
        let s = random_cloud(500, 2, 31).unwrap();
        let p = params(0.25, 1, 2);
        let sys = build_dyadic_system(&s, &p).unwrap();
        // covering: each point within cover*theta^k of its cube's net point
        // is implied by the sandwich constant; check the recorded covering radii
        let summary = sys.summary();
        for (g, per_level) in summary.covering.iter().enumerate() {
            for (l, cov) in per_level.iter().enumerate() {
                let k = sys.k_min() + l as i32;
                assert!(
                    *cov < p.cover * sys.scale(k),
                    "grid {g} level {k}: covering {cov} too large"
                );
            }
        }
    }

    #[test]
    fn sandwich_constants_are_ordered_and_valid() {
        let s = random_cloud(600, 2, 13).unwrap();
        let sys = build_dyadic_system(&s, &params(0.25, 3, 17)).unwrap();
        assert!(sys.a > 0.0 && sys.a < sys.big_a);
        for g in 0..3 {
            for k in sys.k_min()..=sys.k_max() {
                let scale = sys.scale(k);
                for id in sys.level_cubes(g, k).unwrap() {
                    let c = sys.cube(id).unwrap();
                    for m in &c.members {
                        assert!(s.distance(c.net_point, *m) < sys.big_a * scale);
                    }
                    // inner ball: no foreign point strictly inside a*scale
                    if c.members.len() < s.len() {
                        for p in s.points() {
                            if c.members.binary_search(&p).is_err() {
                                assert!(s.distance(c.net_point, p) >= sys.a * scale);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn containing_cube_hits_inner_balls_of_existing_cubes() {
        let s = random_cloud(700, 2, 41).unwrap();
        let sys = build_dyadic_system(&s, &params(0.25, 4, 7)).unwrap();
        let mut checked = 0;
        for k in (sys.k_min() + 1)..sys.k_max() {
            let r = 0.999 * sys.scale(k + 1);
            if r < s.resolution() || sys.scale(k + 1) > sys.a * sys.scale(k) {
                continue;
            }
            for id in sys.level_cubes(0, k).unwrap().into_iter().step_by(3) {
                let c = sys.cube(id).unwrap();
                let res = sys
                    .containing_cube(&s, &Ball::new(c.net_point, r))
                    .unwrap();
                assert!(!res.adjacency_miss, "inner ball of a cube must be contained");
                assert_eq!(res.coverage, 1.0);
                checked += 1;
            }
        }
        assert!(checked > 0, "test exercised no balls");
    }

    #[test]
    fn containing_cube_rejects_out_of_range_radii() {
        let s = random_cloud(100, 2, 3).unwrap();
        let sys = build_dyadic_system(&s, &params(0.25, 2, 3)).unwrap();
        let tiny = s.resolution() / 10.0;
        assert!(sys.containing_cube(&s, &Ball::new(PointId(0), tiny)).is_err());
        let huge = 10.0 * sys.scale(sys.k_min());
        assert!(sys.containing_cube(&s, &Ball::new(PointId(0), huge)).is_err());
    }

    #[test]
    fn fitted_cube_contains_center_fits_ball_and_is_shallowest() {
        let s = random_cloud(900, 2, 53).unwrap();
        let sys = build_dyadic_system(&s, &params(0.25, 2, 29)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut done = 0;
        while done < 50 {
            let p = PointId(rng.gen_range(0..s.len() as u32));
            let q = sys.cube_of_point(0, sys.k_min(), p).unwrap();
            // a ball around p strictly inside the root cube
            let r = sys.scale(sys.k_min() + 2) * (0.5 + rng.gen::<f64>());
            if r < s.resolution() {
                continue;
            }
            let ball = Ball::new(p, r);
            let inside = s.ball_points(&ball).unwrap().len();
            if inside == s.len() {
                continue;
            }
            let fit = match sys.fit_cube_in_ball(&s, &ball, q) {
                Ok(f) => f,
                Err(_) => continue, // resolution exhausted for this draw
            };
            let data = sys.cube(fit).unwrap();
            assert!(data
                .members
                .iter()
                .all(|m| s.distance(p, *m) < ball.radius));
            assert_eq!(
                sys.cube_of_point(0, fit.level, p).unwrap(),
                fit,
                "fitted cube must contain the ball center"
            );
            assert!(ball.radius <= (2.0 * sys.big_a / sys.theta()) * sys.scale(fit.level));
            // minimality: the parent along the chain must not fit
            if fit.level > q.level {
                let par = sys.parent(fit).unwrap().unwrap();
                let pd = sys.cube(par).unwrap();
                assert!(pd
                    .members
                    .iter()
                    .any(|m| s.distance(p, *m) >= ball.radius));
            }
            done += 1;
        }
    }

    #[test]
    fn chain_walks_generations_one_at_a_time() {
        let s = unit_segment(300);
        let sys = build_dyadic_system(&s, &params(0.5, 1, 9)).unwrap();
        let p = PointId(137);
        let deep = sys.cube_of_point(0, sys.k_max(), p).unwrap();
        let top = sys.cube_of_point(0, sys.k_min(), p).unwrap();
        let chain = sys.chain(deep, top).unwrap();
        assert_eq!(chain.first(), Some(&deep));
        assert_eq!(chain.last(), Some(&top));
        for w in chain.windows(2) {
            assert_eq!(w[0].level - 1, w[1].level);
        }
        assert_eq!(sys.chain(deep, deep).unwrap(), vec![deep]);
        // unrelated cubes have no chain
        let other_idx = (deep.index + 1) % sys.cube_count(0, deep.level).unwrap();
        if other_idx != deep.index {
            let stranger = CubeId { grid: 0, level: deep.level, index: other_idx };
            assert!(sys.chain(deep, stranger).is_err());
        }
    }

    #[test]
    fn descendants_include_self_and_respect_depth() {
        let s = unit_segment(200);
        let sys = build_dyadic_system(&s, &params(0.5, 1, 15)).unwrap();
        let root = CubeId { grid: 0, level: sys.k_min(), index: 0 };
        let d0 = sys.descendants(root, 0).unwrap();
        assert_eq!(d0, vec![root]);
        let d1 = sys.descendants(root, 1).unwrap();
        assert_eq!(d1.len(), 1 + sys.children(root).unwrap().len());
        let all = sys
            .descendants(root, (sys.k_max() - sys.k_min()) as u32)
            .unwrap();
        let total: usize = (sys.k_min()..=sys.k_max())
            .map(|k| sys.cube_count(0, k).unwrap())
            .sum();
        assert_eq!(all.len(), total, "root dominates every cube in its grid");
    }

    #[test]
    fn boundary_ratio_matches_the_line_geometry() {
        let s = unit_segment(1025);
        let sys = build_dyadic_system(&s, &params(0.25, 1, 3)).unwrap();
        // pick a mid-scale cube away from the extremes
        let k = sys.k_min() + 2;
        let ids = sys.level_cubes(0, k).unwrap();
        let id = ids[ids.len() / 2];
        let c = sys.cube(id).unwrap();
        let len = c.members.len() as f64 / 1025.0; // cube length on the unit line
        let lam = 0.125;
        let ratio = sys.boundary_ratio(&s, id, lam).unwrap();
        let expect = (2.0 * lam * sys.scale(k) / len).min(1.0);
        assert!(
            (ratio - expect).abs() < 0.5 * expect + 0.05,
            "ratio {ratio} vs line prediction {expect}"
        );
        // whole space convention
        let root = CubeId { grid: 0, level: sys.k_min(), index: 0 };
        assert_eq!(sys.boundary_ratio(&s, root, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn boundary_envelope_fits_a_positive_exponent_on_a_cloud() {
        let s = random_cloud(400, 2, 77).unwrap();
        let sys = build_dyadic_system(&s, &params(0.25, 2, 19)).unwrap();
        let lambdas: Vec<f64> = (1..=6).map(|j| 2f64.powi(-j)).collect();
        let fit = boundary_decay_fit(&s, &sys, &lambdas, 32).unwrap();
        assert!(fit.eta > 0.0, "boundary mass must decay, eta = {}", fit.eta);
        for (l, e) in fit.lambdas.iter().zip(&fit.envelope) {
            assert!(fit.c_bound * l.powf(fit.eta) >= *e);
        }
    }

    #[test]
    fn builds_are_deterministic_per_seed() {
        let s = random_cloud(300, 2, 8).unwrap();
        let a = build_dyadic_system(&s, &params(0.25, 3, 42)).unwrap();
        let b = build_dyadic_system(&s, &params(0.25, 3, 42)).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.big_a, b.big_a);
        assert_eq!(a.adjacency_miss_rate, b.adjacency_miss_rate);
        for g in 0..3 {
            for k in a.k_min()..=a.k_max() {
                let ca = a.level_cubes(g, k).unwrap();
                let cb = b.level_cubes(g, k).unwrap();
                assert_eq!(ca.len(), cb.len());
                for (x, y) in ca.iter().zip(&cb) {
                    assert_eq!(a.cube(*x).unwrap().members, b.cube(*y).unwrap().members);
                }
            }
        }
    }

    #[test]
    fn too_deep_a_request_names_the_offending_level() {
        let s = unit_segment(65);
        let mut p = params(0.5, 1, 1);
        p.k_max = Some(40);
        let err = build_dyadic_system(&s, &p).unwrap_err();
        assert!(err.to_string().contains("40"));
    }
}
