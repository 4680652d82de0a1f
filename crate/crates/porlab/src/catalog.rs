//! Built-in model spaces and input parsing.
//!
//! Four catalog families cover the behaviors the diagnostics are designed to
//! separate: a symmetric segment with the integer lattice as target set, the
//! coordinate cross in the plane with the nonnegative integers on one axis,
//! a sampled unit interval with middle-thirds endpoint sets, and seeded
//! uniform point clouds. A CSV reader accepts external point clouds.
//!
//! All catalog grids snap the requested resolution down to a power of two,
//! so every coordinate and every mass is an exact binary float and measure
//! sums are exact. The snapped value is recorded as the space's resolution.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::space::{Ball, MetricMeasureSpace, PointId, TargetSet};

/// Largest power of two that is ≤ `h`. Catalog builders use this so grid
/// coordinates `i * h` and per-point masses are exact binary floats.
pub fn snap_resolution(h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::input(format!(
            "resolution must be positive and finite, got {h}"
        )));
    }
    let k = h.log2().floor();
    let mut snapped = 2f64.powi(k as i32);
    // guard against log rounding at exact powers of two
    if snapped > h {
        snapped /= 2.0;
    }
    if snapped * 2.0 <= h {
        snapped *= 2.0;
    }
    Ok(snapped)
}

/// Uniform samples of `[-n, n]` at step `h` (snapped), mass `h` per point,
/// with the integer samples as target set.
pub fn segment_with_integer_set(n: u32, h: f64) -> Result<(MetricMeasureSpace, TargetSet)> {
    if n < 1 {
        return Err(Error::input("segment extent must be at least 1"));
    }
    if h > 0.125 {
        return Err(Error::input(format!(
            "segment resolution must be at most 1/8, got {h}"
        )));
    }
    let h = snap_resolution(h)?;
    let per = (1.0 / h) as i64; // points per unit length; exact for 2^-k
    let half = n as i64 * per;
    let count = (2 * half + 1) as usize;
    let mut coords = Vec::with_capacity(count);
    let mut members = Vec::new();
    for i in -half..=half {
        if i % per == 0 {
            members.push(PointId(coords.len() as u32));
        }
        coords.push(i as f64 * h);
    }
    let space = MetricMeasureSpace::new(
        format!("segment-N{n}-h{h}"),
        1,
        coords,
        vec![h; count],
        h,
    )?;
    let target = TargetSet::new(&space, members)?;
    Ok((space, target))
}

/// Exact reference values for designated balls on the cross space.
///
/// The closed forms hold for integer `n` with `1 ≤ n ≤ t_max/3`, where the
/// doubled ball still fits inside the sampled region.
#[derive(Debug, Clone)]
pub struct CrossOracle {
    t_max: u32,
    h: f64,
    per: u32,
}

impl CrossOracle {
    pub fn resolution(&self) -> f64 {
        self.h
    }

    /// Largest `n` the closed forms are valid for.
    pub fn domain_max(&self) -> u32 {
        self.t_max / 3
    }

    fn check_domain(&self, n: u32) -> Result<()> {
        if n >= 1 && n <= self.domain_max() {
            Ok(())
        } else {
            Err(Error::input(format!(
                "reference value out of domain: n = {n}, valid range 1..={}",
                self.domain_max()
            )))
        }
    }

    /// Id of the horizontal-axis point `(n, 0)`.
    pub fn horizontal_id(&self, n: u32) -> PointId {
        PointId(n * self.per)
    }

    /// Id of the vertical-axis point `(0, n)`; `n ≥ 1`.
    pub fn vertical_id(&self, n: u32) -> PointId {
        debug_assert!(n >= 1);
        PointId(self.t_max * self.per + n * self.per)
    }

    fn match_n_from_center(&self, center: PointId) -> Option<u32> {
        let per = self.per;
        let idx = center.0;
        if idx <= self.t_max * per && idx % per == 0 {
            Some(idx / per)
        } else {
            None
        }
    }

    /// Exact largest free-ball radius for the designated balls
    /// `B((n,0), n)` (value 1/2) and `B((n,0), 2n)` (value n).
    pub fn exact_hole(&self, ball: &Ball) -> Result<f64> {
        let n = self
            .match_n_from_center(ball.center)
            .ok_or_else(|| Error::input("reference holes are defined at horizontal integer centers"))?;
        self.check_domain(n)?;
        let rel = ball.radius / n as f64;
        if (rel - 1.0).abs() < 1e-9 {
            Ok(0.5)
        } else if (rel - 2.0).abs() < 1e-9 {
            Ok(n as f64)
        } else {
            Err(Error::input(format!(
                "reference holes are defined at radii n and 2n, got radius {} at n = {n}",
                ball.radius
            )))
        }
    }

    /// Exact value of the length integral of `dist(., E)^(-alpha)` over the
    /// ball `B((0,n), n)`, which meets the horizontal axis in `[0, 2n)`:
    /// `(2n)^(1-alpha) / (1-alpha)` for `alpha` in `(0,1)`.
    pub fn exact_weight_integral(&self, ball: &Ball, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::input(format!(
                "reference integral needs alpha in (0,1), got {alpha}"
            )));
        }
        let per = self.per;
        let base = self.t_max * per;
        let idx = ball.center.0;
        if idx <= base || (idx - base) % per != 0 {
            return Err(Error::input(
                "reference integrals are defined at vertical integer centers",
            ));
        }
        let n = (idx - base) / per;
        self.check_domain(n)?;
        if (ball.radius / n as f64 - 1.0).abs() >= 1e-9 {
            return Err(Error::input(format!(
                "reference integral is defined at radius n = {n}, got {}",
                ball.radius
            )));
        }
        Ok((2.0 * n as f64).powf(1.0 - alpha) / (1.0 - alpha))
    }
}

/// The coordinate cross `{(t,0)} ∪ {(0,s)}`, `0 ≤ t,s ≤ t_max`, sampled at
/// step `h` (snapped) under the sup metric, mass `h` per point. The target
/// set is the integer points of the horizontal axis, origin included.
pub fn cross_space(t_max: u32, h: f64) -> Result<(MetricMeasureSpace, TargetSet, CrossOracle)> {
    if t_max < 4 {
        return Err(Error::input("cross extent must be at least 4"));
    }
    if h > 1.0 / 16.0 {
        return Err(Error::input(format!(
            "cross resolution must be at most 1/16, got {h}"
        )));
    }
    let h = snap_resolution(h)?;
    let per = (1.0 / h) as u32;
    let axis = t_max * per;
    let count = (2 * axis + 1) as usize;
    let mut coords = Vec::with_capacity(2 * count);
    let mut members = Vec::new();
    for i in 0..=axis {
        if i % per == 0 {
            members.push(PointId(i));
        }
        coords.push(i as f64 * h);
        coords.push(0.0);
    }
    for j in 1..=axis {
        coords.push(0.0);
        coords.push(j as f64 * h);
    }
    let space = MetricMeasureSpace::new(
        format!("cross-T{t_max}-h{h}"),
        2,
        coords,
        vec![h; count],
        h,
    )?;
    let target = TargetSet::new(&space, members)?;
    let oracle = CrossOracle { t_max, h, per };
    Ok((space, target, oracle))
}

/// Endpoints of the retained middle-thirds intervals at depth `level`,
/// as exact integer numerators over `3^level`.
fn middle_thirds_endpoints(level: u32) -> Vec<(u64, u64)> {
    let mut intervals = vec![(0u64, 3u64.pow(level))];
    for _ in 0..level {
        let mut next = Vec::with_capacity(intervals.len() * 2);
        for (a, b) in intervals {
            let third = (b - a) / 3;
            next.push((a, a + third));
            next.push((b - third, b));
        }
        intervals = next;
    }
    intervals
}

/// Uniform samples of `[0,1]` at step `h` (snapped), plus the exact
/// endpoints of the depth-`level` middle-thirds construction as extra
/// sample points; the endpoint set is the target set.
///
/// Endpoint coordinates `k/3^level` are generally off the binary grid, so
/// they are inserted as additional points (mass `h` each, deduplicated
/// against coinciding grid points). Distances to the target set are then
/// exact, not grid-rounded.
pub fn cantor_set(level: u32, h: f64) -> Result<(MetricMeasureSpace, TargetSet)> {
    if level < 1 {
        return Err(Error::input("middle-thirds depth must be at least 1"));
    }
    if level > 30 {
        return Err(Error::input("middle-thirds depth too large"));
    }
    let cap = 3f64.powi(-(level as i32));
    if h > cap {
        return Err(Error::input(format!(
            "resolution {h} too coarse for depth {level}; need at most {cap}"
        )));
    }
    let h = snap_resolution(h)?;
    let per = (1.0 / h) as u64;
    let denom = 3u64.pow(level);
    let mut coords: Vec<f64> = (0..=per).map(|i| i as f64 * h).collect();
    let mut members = Vec::new();
    for (a, b) in middle_thirds_endpoints(level) {
        for e in [a, b] {
            // e/denom lies on the binary grid iff denom divides e*per
            if (e * per) % denom == 0 {
                members.push(PointId(((e * per) / denom) as u32));
            } else {
                members.push(PointId(coords.len() as u32));
                coords.push(e as f64 / denom as f64);
            }
        }
    }
    let n = coords.len();
    let space = MetricMeasureSpace::new(
        format!("cantor-L{level}-h{h}"),
        1,
        coords,
        vec![h; n],
        h,
    )?;
    members.sort();
    members.dedup();
    let target = TargetSet::new(&space, members)?;
    Ok((space, target))
}

/// `n` points uniform in the unit cube (`dim` = 1 or 2), unit masses,
/// deterministic per seed. The resolution is the largest nearest-neighbor
/// distance, so no point is isolated at scale `h`.
pub fn random_cloud(n: u32, dim: usize, seed: u64) -> Result<MetricMeasureSpace> {
    if n < 2 {
        return Err(Error::input("cloud needs at least 2 points"));
    }
    if !(dim == 1 || dim == 2) {
        return Err(Error::input(format!("cloud dimension must be 1 or 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636c_6f75_6400_0000);
    let coords: Vec<f64> = (0..n as usize * dim).map(|_| rng.gen::<f64>()).collect();
    let probe = MetricMeasureSpace::new("probe", dim, coords.clone(), vec![1.0; n as usize], 1.0)?;
    let resolution = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = PointId(i);
            let mut nn = f64::INFINITY;
            for q in probe.points() {
                if q != p {
                    let d = probe.distance(p, q);
                    if d < nn {
                        nn = d;
                    }
                }
            }
            nn
        })
        .reduce(|| 0.0, f64::max);
    MetricMeasureSpace::new(
        format!("cloud-n{n}-d{dim}-s{seed}"),
        dim,
        coords,
        vec![1.0; n as usize],
        resolution,
    )
}

/// Read a point cloud from CSV with columns `id, coord..., mass`.
///
/// An optional header line is skipped when its first field is not numeric.
/// Ids must form exactly `0..n-1`; rows may appear in any order. The
/// resolution is measured as the largest nearest-neighbor distance
/// (quadratic in the point count).
pub fn from_csv(path: &Path) -> Result<MetricMeasureSpace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<(u32, Vec<f64>, f64)> = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::input(format!(
                "{}:{}: need at least id, one coordinate, mass",
                path.display(),
                lineno + 1
            )));
        }
        let id = match fields[0].parse::<u32>() {
            Ok(v) => v,
            Err(_) if rows.is_empty() && lineno == 0 => continue, // header
            Err(_) => {
                return Err(Error::input(format!(
                    "{}:{}: bad id field {:?}",
                    path.display(),
                    lineno + 1,
                    fields[0]
                )))
            }
        };
        let d = fields.len() - 2;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::input(format!(
                    "{}:{}: row has {d} coordinates, earlier rows have {prev}",
                    path.display(),
                    lineno + 1
                )))
            }
            _ => {}
        }
        let mut cs = Vec::with_capacity(d);
        for f in &fields[1..1 + d] {
            cs.push(f.parse::<f64>().map_err(|_| {
                Error::input(format!(
                    "{}:{}: bad coordinate {:?}",
                    path.display(),
                    lineno + 1,
                    f
                ))
            })?);
        }
        let mass = fields[1 + d].parse::<f64>().map_err(|_| {
            Error::input(format!(
                "{}:{}: bad mass {:?}",
                path.display(),
                lineno + 1,
                fields[1 + d]
            ))
        })?;
        rows.push((id, cs, mass));
    }
    if rows.is_empty() {
        return Err(Error::input(format!("{}: no data rows", path.display())));
    }
    let n = rows.len();
    rows.sort_by_key(|r| r.0);
    for (i, row) in rows.iter().enumerate() {
        if row.0 as usize != i {
            return Err(Error::input(format!(
                "{}: ids must be exactly 0..{} (missing or duplicate id near {})",
                path.display(),
                n - 1,
                row.0
            )));
        }
    }
    let dim = dim.unwrap();
    let mut coords = Vec::with_capacity(n * dim);
    let mut mass = Vec::with_capacity(n);
    for (_, cs, m) in &rows {
        coords.extend_from_slice(cs);
        mass.push(*m);
    }
    let probe = MetricMeasureSpace::new("probe", dim, coords.clone(), mass.clone(), 1.0)?;
    let resolution = if n >= 2 {
        (0..n as u32)
            .into_par_iter()
            .map(|i| {
                let p = PointId(i);
                let mut nn = f64::INFINITY;
                for q in probe.points() {
                    if q != p {
                        let d = probe.distance(p, q);
                        if d < nn {
                            nn = d;
                        }
                    }
                }
                nn
            })
            .reduce(|| 0.0, f64::max)
    } else {
        1.0
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    MetricMeasureSpace::new(stem, dim, coords, mass, resolution.max(f64::MIN_POSITIVE))
}

/// Id of the point whose coordinates match `target` within half the
/// resolution, if any.
pub fn point_at(space: &MetricMeasureSpace, target: &[f64]) -> Option<PointId> {
    if target.len() != space.dim() {
        return None;
    }
    let tol = space.resolution() / 2.0;
    space.points().find(|p| {
        space
            .coord(*p)
            .iter()
            .zip(target)
            .all(|(a, b)| (a - b).abs() < tol)
    })
}

/// A parsed space plus whatever canonical companions its family defines.
pub struct SpaceBundle {
    pub space: MetricMeasureSpace,
    pub target: Option<TargetSet>,
    pub oracle: Option<CrossOracle>,
}

fn parse_number(s: &str) -> Result<f64> {
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad number {s:?}")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad number {s:?}")))?;
        if d == 0.0 {
            return Err(Error::input(format!("zero denominator in {s:?}")));
        }
        Ok(n / d)
    } else {
        s.trim()
            .parse()
            .map_err(|_| Error::input(format!("bad number {s:?}")))
    }
}

fn parse_kv(body: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::input(format!("expected key=value, got {part:?}")))?;
        out.push((k.trim().to_lowercase(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse a space spec string.
///
/// Forms: `cross:Tmax=32,h=0.0625`, `segment:N=64,h=0.001`,
/// `cantor:level=5[,h=...]`, `cloud:n=500,dim=2,seed=1`, `file:<path.csv>`.
/// Numbers accept plain decimals or fractions like `1/64`.
pub fn parse_space_spec(spec: &str) -> Result<SpaceBundle> {
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| Error::input(format!("space spec needs kind:params, got {spec:?}")))?;
    match kind.trim().to_lowercase().as_str() {
        "cross" => {
            let mut t_max = None;
            let mut h = None;
            for (k, v) in parse_kv(body)? {
                match k.as_str() {
                    "tmax" => t_max = Some(parse_number(&v)? as u32),
                    "h" => h = Some(parse_number(&v)?),
                    _ => return Err(Error::input(format!("unknown cross parameter {k:?}"))),
                }
            }
            let t_max = t_max.ok_or_else(|| Error::input("cross spec needs Tmax"))?;
            let h = h.ok_or_else(|| Error::input("cross spec needs h"))?;
            let (space, target, oracle) = cross_space(t_max, h)?;
            Ok(SpaceBundle {
                space,
                target: Some(target),
                oracle: Some(oracle),
            })
        }
        "segment" => {
            let mut n = None;
            let mut h = None;
            for (k, v) in parse_kv(body)? {
                match k.as_str() {
                    "n" => n = Some(parse_number(&v)? as u32),
                    "h" => h = Some(parse_number(&v)?),
                    _ => return Err(Error::input(format!("unknown segment parameter {k:?}"))),
                }
            }
            let n = n.ok_or_else(|| Error::input("segment spec needs N"))?;
            let h = h.ok_or_else(|| Error::input("segment spec needs h"))?;
            let (space, target) = segment_with_integer_set(n, h)?;
            Ok(SpaceBundle {
                space,
                target: Some(target),
                oracle: None,
            })
        }
        "cantor" => {
            let mut level = None;
            let mut h = None;
            for (k, v) in parse_kv(body)? {
                match k.as_str() {
                    "level" => level = Some(parse_number(&v)? as u32),
                    "h" => h = Some(parse_number(&v)?),
                    _ => return Err(Error::input(format!("unknown cantor parameter {k:?}"))),
                }
            }
            let level = level.ok_or_else(|| Error::input("cantor spec needs level"))?;
            let h = match h {
                Some(h) => h,
                None => snap_resolution(3f64.powi(-(level as i32)))?,
            };
            let (space, target) = cantor_set(level, h)?;
            Ok(SpaceBundle {
                space,
                target: Some(target),
                oracle: None,
            })
        }
        "cloud" => {
            let mut n = None;
            let mut dim = 2usize;
            let mut seed = 0u64;
            for (k, v) in parse_kv(body)? {
                match k.as_str() {
                    "n" => n = Some(parse_number(&v)? as u32),
                    "dim" => dim = parse_number(&v)? as usize,
                    "seed" => seed = parse_number(&v)? as u64,
                    _ => return Err(Error::input(format!("unknown cloud parameter {k:?}"))),
                }
            }
            let n = n.ok_or_else(|| Error::input("cloud spec needs n"))?;
            let space = random_cloud(n, dim, seed)?;
            Ok(SpaceBundle {
                space,
                target: None,
                oracle: None,
            })
        }
        "file" => {
            let space = from_csv(Path::new(body.trim()))?;
            Ok(SpaceBundle {
                space,
                target: None,
                oracle: None,
            })
        }
        other => Err(Error::input(format!("unknown space kind {other:?}"))),
    }
}

/// Parse a target-set spec against a space.
///
/// Forms: `default` (the space family's canonical set, error if none),
/// `empty`, `all`, `ids:0,5,9`, `point:<coord>[,<coord>]` (nearest sample).
pub fn parse_set_spec(
    spec: &str,
    space: &MetricMeasureSpace,
    default: Option<&TargetSet>,
) -> Result<TargetSet> {
    let spec = spec.trim();
    match spec.to_lowercase().as_str() {
        "default" => default
            .cloned()
            .ok_or_else(|| Error::input("this space has no default target set; give one explicitly")),
        "empty" | "none" => Ok(TargetSet::empty(space)),
        "all" => TargetSet::new(space, space.points()),
        _ => {
            if let Some(body) = spec.strip_prefix("ids:") {
                let mut ids = Vec::new();
                for part in body.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    let v: u32 = part
                        .parse()
                        .map_err(|_| Error::input(format!("bad point id {part:?}")))?;
                    ids.push(PointId(v));
                }
                TargetSet::new(space, ids)
            } else if let Some(body) = spec.strip_prefix("point:") {
                let mut cs = Vec::new();
                for part in body.split(',') {
                    cs.push(parse_number(part)?);
                }
                let id = point_at(space, &cs).ok_or_else(|| {
                    Error::input(format!("no sample point at coordinates {cs:?}"))
                })?;
                TargetSet::new(space, [id])
            } else {
                Err(Error::input(format!("unknown set spec {spec:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::doubling_constant;

    #[test]
    fn snapping_picks_the_largest_dyadic_below() {
        assert_eq!(snap_resolution(0.001).unwrap(), 2f64.powi(-10));
        assert_eq!(snap_resolution(0.25).unwrap(), 0.25);
        assert_eq!(snap_resolution(0.0625).unwrap(), 0.0625);
        assert_eq!(snap_resolution(0.1).unwrap(), 0.0625);
        assert!(snap_resolution(0.0).is_err());
    }

    #[test]
    fn small_segment_has_seventeen_points_and_three_targets() {
        let (s, e) = segment_with_integer_set(1, 0.125).unwrap();
        assert_eq!(s.len(), 17);
        let coords: Vec<f64> = e.members().iter().map(|p| s.coord(*p)[0]).collect();
        assert_eq!(coords, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn segment_distance_to_integers_at_a_half_is_exact() {
        let (s, e) = segment_with_integer_set(4, 1.0 / 64.0).unwrap();
        let p = point_at(&s, &[0.5]).unwrap();
        assert_eq!(e.dist_to(p), 0.5);
    }

    #[test]
    fn segment_mass_is_exactly_extent_plus_step() {
        let (s, _) = segment_with_integer_set(4, 1.0 / 64.0).unwrap();
        assert_eq!(s.total_mass(), 8.0 + 1.0 / 64.0);
    }

    #[test]
    fn cross_agrees_with_closed_form_distances() {
        let (s, e, o) = cross_space(8, 1.0 / 16.0).unwrap();
        // d((t,0),(0,s)) = max(t,s)
        let a = o.horizontal_id(3);
        let b = o.vertical_id(5);
        assert_eq!(s.distance(a, b), 5.0);
        assert_eq!(s.distance(b, a), 5.0);
        let c = o.horizontal_id(7);
        assert_eq!(s.distance(a, c), 4.0);
        // total mass within h of 2*Tmax (exactly 2*Tmax + h on the dyadic grid)
        assert_eq!(s.total_mass(), 16.0 + 1.0 / 16.0);
        // target includes the origin and integer horizontal points only
        assert!(e.contains(PointId(0)));
        assert!(e.contains(o.horizontal_id(8)));
        assert_eq!(e.len(), 9);
        assert!(!e.contains(o.vertical_id(1)));
    }

    #[test]
    fn cross_reference_values_match_the_closed_forms() {
        let (_, _, o) = cross_space(12, 1.0 / 16.0).unwrap();
        let b1 = Ball::new(o.horizontal_id(2), 2.0);
        assert_eq!(o.exact_hole(&b1).unwrap(), 0.5);
        let b2 = Ball::new(o.horizontal_id(2), 4.0);
        assert_eq!(o.exact_hole(&b2).unwrap(), 2.0);
        let w = Ball::new(o.vertical_id(2), 2.0);
        let v = o.exact_weight_integral(&w, 0.5).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cross_reference_rejects_out_of_domain_balls() {
        let (_, _, o) = cross_space(12, 1.0 / 16.0).unwrap();
        // n = 5 > Tmax/3 = 4
        assert!(o.exact_hole(&Ball::new(o.horizontal_id(5), 5.0)).is_err());
        // radius neither n nor 2n
        assert!(o.exact_hole(&Ball::new(o.horizontal_id(2), 3.0)).is_err());
        // vertical center is not a hole reference
        assert!(o.exact_hole(&Ball::new(o.vertical_id(2), 2.0)).is_err());
        // alpha outside (0,1)
        assert!(o
            .exact_weight_integral(&Ball::new(o.vertical_id(2), 2.0), 1.5)
            .is_err());
    }

    #[test]
    fn middle_thirds_level_one_keeps_the_four_endpoints() {
        let (s, e) = cantor_set(1, 1.0 / 27.0).unwrap();
        let coords: Vec<f64> = e.members().iter().map(|p| s.coord(*p)[0]).collect();
        for want in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
            assert!(
                coords.iter().any(|c| (c - want).abs() < 1e-12),
                "missing endpoint {want}"
            );
        }
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn middle_thirds_gap_midpoint_distance_is_one_sixth() {
        let (s, e) = cantor_set(2, 1.0 / 81.0).unwrap();
        assert_eq!(e.len(), 8);
        let mid = point_at(&s, &[0.5]).unwrap();
        assert!((e.dist_to(mid) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn clouds_are_reproducible_and_mildly_doubling() {
        let a = random_cloud(2, 2, 5).unwrap();
        assert!(a.distance(PointId(0), PointId(1)) > 0.0);
        let b = random_cloud(500, 2, 11).unwrap();
        let c = random_cloud(500, 2, 11).unwrap();
        for p in b.points() {
            assert_eq!(b.coord(p), c.coord(p));
        }
        let est = doubling_constant(&b, 200, 3).unwrap();
        assert!(est.value.is_finite());
        assert!(est.value <= 64.0, "cloud doubling estimate {}", est.value);
    }

    #[test]
    fn csv_round_trip_preserves_points() {
        let dir = std::env::temp_dir();
        let path = dir.join("porlab_catalog_test.csv");
        std::fs::write(
            &path,
            "id,x,y,mass\n1,0.5,0.5,2.0\n0,0.0,0.0,1.0\n2,1.0,0.25,0.5\n",
        )
        .unwrap();
        let s = from_csv(&path).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.coord(PointId(1)), &[0.5, 0.5]);
        assert_eq!(s.mass_of(PointId(1)), 2.0);
        assert_eq!(s.total_mass(), 3.5);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn csv_rejects_gapped_ids() {
        let dir = std::env::temp_dir();
        let path = dir.join("porlab_catalog_bad.csv");
        std::fs::write(&path, "0,0.0,1.0\n2,1.0,1.0\n").unwrap();
        assert!(from_csv(&path).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn space_specs_parse_with_fractions_and_defaults() {
        let b = parse_space_spec("cross:Tmax=32,h=0.0625").unwrap();
        assert_eq!(b.space.resolution(), 0.0625);
        assert!(b.target.is_some() && b.oracle.is_some());

        let b = parse_space_spec("segment:N=4,h=1/64").unwrap();
        assert_eq!(b.space.resolution(), 1.0 / 64.0);

        let b = parse_space_spec("cantor:level=5").unwrap();
        assert!(b.space.resolution() <= 3f64.powi(-5));

        let b = parse_space_spec("cloud:n=50,dim=2,seed=3").unwrap();
        assert_eq!(b.space.len(), 50);

        assert!(parse_space_spec("torus:n=5").is_err());
        assert!(parse_space_spec("segment:N=4").is_err());
    }

    #[test]
    fn set_specs_cover_the_documented_forms() {
        let (s, e) = segment_with_integer_set(2, 0.125).unwrap();
        let d = parse_set_spec("default", &s, Some(&e)).unwrap();
        assert_eq!(d.members(), e.members());
        assert!(parse_set_spec("default", &s, None).is_err());
        assert!(parse_set_spec("empty", &s, None).unwrap().is_empty());
        assert_eq!(parse_set_spec("all", &s, None).unwrap().len(), s.len());
        let ids = parse_set_spec("ids:0,2,2", &s, None).unwrap();
        assert_eq!(ids.len(), 2);
        let p = parse_set_spec("point:0.0", &s, None).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(s.coord(p.members()[0])[0], 0.0);
        assert!(parse_set_spec("point:99.0", &s, None).is_err());
    }
}
