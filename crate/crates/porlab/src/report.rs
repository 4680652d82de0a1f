//! Report envelopes and table writers.
//!
//! Every analysis result ships inside one envelope carrying the schema
//! version, an echo of the run configuration, the space summary, the
//! measured structure constants, and the seed. The wall-clock stamp is the
//! single nondeterministic key and sits alone at the top level, so two runs
//! of the same configuration compare byte-identically once that key is
//! dropped.

use serde::Serialize;

use crate::dyadic::DyadicSystem;
use crate::error::{Error, Result};
use crate::holes::{CubeDoublingCheck, HoleDoublingProfile};
use crate::porosity::PorosityScan;
use crate::space::{doubling_constant, MetricMeasureSpace};
use crate::weights::WeightDoublingProfile;

pub const SCHEMA_VERSION: &str = "1";

/// Ball sample size used when measuring the doubling constant for a report.
pub const DOUBLING_SAMPLES: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct SpaceSummary {
    pub name: String,
    pub points: usize,
    pub dim: usize,
    pub resolution: f64,
    pub diameter: f64,
    pub total_mass: f64,
}

impl SpaceSummary {
    pub fn of(space: &MetricMeasureSpace) -> Self {
        SpaceSummary {
            name: space.name().to_string(),
            points: space.len(),
            dim: space.dim(),
            resolution: space.resolution(),
            diameter: space.diameter_hint(),
            total_mass: space.total_mass(),
        }
    }
}

/// The structure constants measured on the built objects: inner and outer
/// ball coefficients of the cube system and the doubling constant of the
/// measure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasuredConstants {
    pub a: f64,
    pub big_a: f64,
    pub c_mu: f64,
}

impl MeasuredConstants {
    pub fn of(space: &MetricMeasureSpace, system: &DyadicSystem, seed: u64) -> Self {
        let c_mu = doubling_constant(space, DOUBLING_SAMPLES, seed)
            .map(|est| est.value)
            .unwrap_or(1.0);
        MeasuredConstants {
            a: system.a,
            big_a: system.big_a,
            c_mu,
        }
    }
}

/// Envelope around one analysis payload.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T> {
    pub schema_version: &'static str,
    pub kind: String,
    /// The run configuration exactly as parsed, echoed back.
    pub config: serde_json::Value,
    pub space: SpaceSummary,
    pub measured: MeasuredConstants,
    pub resolution: f64,
    pub seed: u64,
    /// Unix seconds at generation time; the only key that differs between
    /// reruns of the same configuration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub payload: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(
        kind: impl Into<String>,
        config: serde_json::Value,
        space: &MetricMeasureSpace,
        measured: MeasuredConstants,
        seed: u64,
        payload: T,
    ) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            config,
            space: SpaceSummary::of(space),
            measured,
            resolution: space.resolution(),
            seed,
            generated_at: None,
            payload,
        }
    }

    /// Stamp with the current wall clock.
    pub fn stamped(mut self) -> Self {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.generated_at = Some(now);
        self
    }

    /// Pretty JSON with a trailing newline. Field order is declaration
    /// order, so equal inputs give byte-equal output.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invariant(format!("report serialization failed: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// Assemble a CSV table; fields are quoted only when they need it.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(
        &header
            .iter()
            .map(|h| csv_field(h))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for row in rows {
        out.push_str(
            &row.iter()
                .map(|f| csv_field(f))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
    }
    out
}

/// One row per (center, scale) pair of a hole doubling profile.
pub fn hole_profile_csv(profile: &HoleDoublingProfile) -> String {
    let header = [
        "center",
        "base_radius",
        "base_value",
        "scale",
        "value",
        "ratio",
        "skipped",
    ];
    let mut rows = Vec::new();
    for row in &profile.rows {
        if row.skipped {
            rows.push(vec![
                row.center.0.to_string(),
                row.base_radius.to_string(),
                row.base_value.to_string(),
                String::new(),
                String::new(),
                String::new(),
                "true".to_string(),
            ]);
            continue;
        }
        for &(scale, value, ratio) in &row.ratios {
            rows.push(vec![
                row.center.0.to_string(),
                row.base_radius.to_string(),
                row.base_value.to_string(),
                scale.to_string(),
                value.to_string(),
                ratio.to_string(),
                "false".to_string(),
            ]);
        }
    }
    csv_table(&header, &rows)
}

/// Per-generation maximal refinement steps of a cube doubling check.
pub fn cube_check_csv(check: &CubeDoublingCheck) -> String {
    let header = ["generation", "max_step"];
    let rows: Vec<Vec<String>> = check
        .per_level_max_step
        .iter()
        .map(|&(level, step)| vec![level.to_string(), step.to_string()])
        .collect();
    csv_table(&header, &rows)
}

/// One row per scanned ball of a porosity scan.
pub fn porosity_scan_csv(scan: &PorosityScan) -> String {
    let header = [
        "center",
        "radius",
        "hole_value",
        "covered_fraction",
        "family_size",
        "failed",
    ];
    let rows: Vec<Vec<String>> = scan
        .rows
        .iter()
        .map(|row| {
            vec![
                row.ball.center.0.to_string(),
                row.ball.radius.to_string(),
                row.h_value.to_string(),
                row.covered_fraction.to_string(),
                row.family_size.to_string(),
                row.failed.to_string(),
            ]
        })
        .collect();
    csv_table(&header, &rows)
}

/// One row per ball of a weighted doubling profile.
pub fn weight_profile_csv(profile: &WeightDoublingProfile) -> String {
    let header = ["center", "radius", "base", "doubled", "ratio"];
    let rows: Vec<Vec<String>> = profile
        .rows
        .iter()
        .map(|row| {
            vec![
                row.ball.center.0.to_string(),
                row.ball.radius.to_string(),
                row.base.to_string(),
                row.doubled.to_string(),
                row.ratio.to_string(),
            ]
        })
        .collect();
    csv_table(&header, &rows)
}
