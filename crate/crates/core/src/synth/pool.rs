//! Pooled reference tables built from group-specific ones.

use std::collections::BTreeMap;

use super::SynthError;
use crate::ref_engine::{CoefficientRow, CoefficientTable, GroupLabel, Sex, TableSet};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Weighted pooling of tables that share an age grid.
///
/// Every coefficient column is averaged with the given weights. Because the
/// median and S are exponentials of linear predictors, the pooled median is
/// the weighted geometric mean of the input medians and pooled S the weighted
/// geometric mean of the input S values, at every covariate value. Pooled L
/// is the weighted arithmetic mean of the input L values.
pub fn build_pooled_table(
    tables: &[(&CoefficientTable, f64)],
    table_id: impl Into<String>,
    group: GroupLabel,
) -> Result<CoefficientTable, SynthError> {
    let (first, _) = tables
        .first()
        .ok_or_else(|| SynthError::Pool("no tables to pool".into()))?;
    let mut sum = 0.0;
    for (t, w) in tables {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(SynthError::Pool(format!("weight {w} for `{}` is invalid", t.table_id())));
        }
        if t.sex() != first.sex() {
            return Err(SynthError::Pool("tables of different sex".into()));
        }
        let same_grid = t.rows().len() == first.rows().len()
            && t.rows().iter().zip(first.rows()).all(|(a, b)| a.age == b.age);
        if !same_grid {
            return Err(SynthError::Pool(format!(
                "age grid of `{}` differs from `{}`",
                t.table_id(),
                first.table_id()
            )));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(SynthError::Pool(format!("weights sum to {sum}, not 1")));
    }

    let rows = (0..first.rows().len())
        .map(|i| {
            let parts: Vec<(&CoefficientRow, f64)> =
                tables.iter().map(|(t, w)| (&t.rows()[i], *w)).collect();
            CoefficientRow::weighted(&parts)
        })
        .collect();
    let sources: Vec<String> = tables
        .iter()
        .map(|(t, w)| format!("{}:{}", t.table_id(), w))
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("pooled_from".to_string(), sources.join(" "));
    Ok(CoefficientTable::new(table_id, group, first.sex(), rows, metadata)?)
}

/// Pools the named groups for every sex they all cover.
pub fn pool_table_set(
    set: &TableSet,
    weights: &[(GroupLabel, f64)],
    label: &GroupLabel,
) -> Result<TableSet, SynthError> {
    let mut out = TableSet::new();
    for sex in Sex::ALL {
        let parts: Option<Vec<(&CoefficientTable, f64)>> = weights
            .iter()
            .map(|(g, w)| set.get(g, sex).map(|t| (t, *w)))
            .collect();
        if let Some(parts) = parts {
            let t = build_pooled_table(&parts, format!("{label}_{sex}"), label.clone())?;
            out.insert(t).map_err(|e| SynthError::Pool(e.to_string()))?;
        }
    }
    if out.is_empty() {
        return Err(SynthError::Pool("no sex is covered by all pooled groups".into()));
    }
    Ok(out)
}

/// Table whose median is exactly `M_k + phi * (M_p - M_k)` at every covariate
/// value, with L and S averaged coefficient-wise with weights `(1 - phi, phi)`.
///
/// Only possible when `M_p / M_k` is constant: the two tables must agree in
/// every median column except `m_intercept`, and the intercept difference
/// must be the same at every knot.
pub fn build_interpolated_table(
    table_k: &CoefficientTable,
    table_p: &CoefficientTable,
    phi: f64,
    table_id: impl Into<String>,
    group: GroupLabel,
) -> Result<CoefficientTable, SynthError> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(SynthError::Pool(format!("phi {phi} outside [0, 1]")));
    }
    let pooled = build_pooled_table(&[(table_k, 1.0 - phi), (table_p, phi)], table_id, group)?;
    let ks = table_k.rows();
    let ps = table_p.rows();
    let shift = ps[0].m_intercept - ks[0].m_intercept;
    let mut rows = pooled.rows().to_vec();
    for ((row, k), p) in rows.iter_mut().zip(ks).zip(ps) {
        let same_shape =
            k.m_ln_height == p.m_ln_height && k.m_ln_age == p.m_ln_age && k.m_spline == p.m_spline;
        if !same_shape || ((p.m_intercept - k.m_intercept) - shift).abs() > 1e-12 {
            return Err(SynthError::Pool(
                "median ratio between the tables is not constant; exact interpolation impossible".into(),
            ));
        }
        row.m_ln_height = k.m_ln_height;
        row.m_ln_age = k.m_ln_age;
        row.m_spline = k.m_spline;
        row.m_intercept = k.m_intercept + (phi * shift.exp_m1()).ln_1p();
    }
    let mut metadata = pooled.metadata().clone();
    metadata.insert("interpolated_phi".into(), format!("{phi}"));
    Ok(CoefficientTable::new(
        pooled.table_id().to_string(),
        pooled.group().clone(),
        pooled.sex(),
        rows,
        metadata,
    )?)
}
