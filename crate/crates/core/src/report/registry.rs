use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::engine::GarchSpec;
use crate::ingest::{
    VelocityVariant, COL_LOGNO, COL_LOGR_RATE, COL_LOGTOT_BTC, COL_LOGVELOCITY, COL_LOGVELOCITY2,
    COL_LOGVOLUME, COL_RETURN, PANEL_COLUMNS,
};

/// One named model: regressors of the mean and variance equations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecEntry {
    pub id: String,
    pub mean: Vec<String>,
    pub variance: Vec<String>,
}

impl SpecEntry {
    pub fn garch_spec(&self, p: usize, q: usize, include_ar1: bool) -> GarchSpec {
        GarchSpec {
            mean_regressors: self.mean.clone(),
            variance_regressors: self.variance.clone(),
            p,
            q,
            include_ar1,
        }
    }
}

/// Family `f` models use velocity column `velocity`; model `k` adds
/// liquidity and stock drivers in this order.
fn family(f: u32, velocity: &str) -> Vec<SpecEntry> {
    let models: [&[&str]; 5] = [
        &[COL_LOGVOLUME, velocity, COL_LOGR_RATE],
        &[COL_LOGNO, velocity, COL_LOGR_RATE],
        &[COL_LOGTOT_BTC, COL_LOGVOLUME, velocity, COL_LOGR_RATE],
        &[COL_LOGTOT_BTC, COL_LOGNO, velocity, COL_LOGR_RATE],
        &[
            COL_LOGTOT_BTC,
            COL_LOGVOLUME,
            COL_LOGNO,
            velocity,
            COL_LOGR_RATE,
        ],
    ];
    models
        .iter()
        .enumerate()
        .map(|(k, cols)| {
            let cols: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
            SpecEntry {
                id: format!("{f}.{}", k + 1),
                mean: cols.clone(),
                variance: cols,
            }
        })
        .collect()
}

/// The ten built-in models, `1.1`–`1.5` on `logvelocity` and `2.1`–`2.5`
/// on `logvelocity2`, with identical mean and variance regressors.
pub fn registry() -> Vec<SpecEntry> {
    let mut all = family(1, COL_LOGVELOCITY);
    all.extend(family(2, COL_LOGVELOCITY2));
    all
}

/// Built-in registry with `overrides` replacing entries of the same id and
/// appending new ids.
pub fn registry_with(overrides: &[SpecEntry]) -> Result<Vec<SpecEntry>, ReportError> {
    let mut all = registry();
    for o in overrides {
        match all.iter_mut().find(|e| e.id == o.id) {
            Some(slot) => *slot = o.clone(),
            None => all.push(o.clone()),
        }
    }
    validate_registry(&all)?;
    Ok(all)
}

pub fn validate_registry(entries: &[SpecEntry]) -> Result<(), ReportError> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.id.as_str()) {
            return Err(ReportError::Config(format!(
                "registry id `{}` appears twice",
                e.id
            )));
        }
        for name in e.mean.iter().chain(&e.variance) {
            if name == COL_RETURN || !PANEL_COLUMNS.contains(&name.as_str()) {
                return Err(ReportError::Config(format!(
                    "registry entry `{}` uses `{name}`, which is not a panel regressor",
                    e.id
                )));
            }
        }
    }
    Ok(())
}

/// Resolve requested ids in request order. A bare model number such as `3`
/// picks that model from the family of `velocity`.
pub fn select(
    entries: &[SpecEntry],
    requested: &[String],
    velocity: VelocityVariant,
) -> Result<Vec<SpecEntry>, ReportError> {
    let family = match velocity {
        VelocityVariant::V1 => 1,
        VelocityVariant::V2 => 2,
    };
    let mut out: Vec<SpecEntry> = Vec::new();
    for raw in requested {
        let id = raw.trim();
        let id = if !id.contains('.') && id.parse::<u32>().is_ok() {
            format!("{family}.{id}")
        } else {
            id.to_string()
        };
        let entry = entries
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| ReportError::Config(format!("unknown spec id `{id}`")))?;
        if !out.iter().any(|e| e.id == entry.id) {
            out.push(entry.clone());
        }
    }
    if out.is_empty() {
        return Err(ReportError::Config("no spec ids requested".into()));
    }
    Ok(out)
}

/// Ids of the family matching `velocity`.
pub fn family_ids(velocity: VelocityVariant) -> Vec<String> {
    let f = match velocity {
        VelocityVariant::V1 => 1,
        VelocityVariant::V2 => 2,
    };
    (1..=5).map(|k| format!("{f}.{k}")).collect()
}
