use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{GroupSpec, SynthSpec};
use super::SynthError;
use crate::cohort::{OutcomeRecord, Participant, Provenance};
use crate::ref_engine::{inverse_z, DemographicInput, Sex};
use crate::rng;

/// Rejection sampling gives up after this many draws for one participant.
const MAX_ATTEMPTS: usize = 10_000;
/// Warn once more than this fraction of participants needed a redraw.
const RESAMPLE_WARN_FRACTION: f64 = 0.10;

/// A generated participant with its decomposition `fev1 = lf_ideal - deficit`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParticipant {
    pub participant: Participant,
    pub lf_ideal: f64,
    pub deficit: f64,
}

impl From<SynthParticipant> for Participant {
    fn from(s: SynthParticipant) -> Self {
        s.participant
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub generated: usize,
    /// Participants that needed at least one redraw because LF <= 0.
    pub resampled: usize,
    pub resample_rate: f64,
    pub warnings: Vec<String>,
}

fn validate(spec: &SynthSpec) -> Result<(), SynthError> {
    let d = &spec.demographics;
    let bad = |m: String| Err(SynthError::InvalidSpec(m));
    if spec.groups.is_empty() {
        return bad("no groups".into());
    }
    if !(d.age_min <= d.age_max) || !(0.0..=1.0).contains(&d.female_fraction) {
        return bad("age range or female_fraction invalid".into());
    }
    if !(d.height_min < d.height_max) || d.height_sd_male < 0.0 || d.height_sd_female < 0.0 {
        return bad("height range invalid".into());
    }
    if !(0.0..=1.0).contains(&spec.flags.smoker_ever_rate)
        || !(0.0..=1.0).contains(&spec.flags.respiratory_dx_rate)
    {
        return bad("flag rates must lie in [0, 1]".into());
    }
    for g in &spec.groups {
        if g.n == 0 {
            return bad(format!("group `{}` has n = 0", g.label));
        }
        if !(g.deficit_sd >= 0.0) || !g.deficit_mean.is_finite() {
            return bad(format!("group `{}` deficit parameters invalid", g.label));
        }
        if g.deficit_sd > 0.0 && g.deficit_mean < -3.0 * g.deficit_sd {
            return Err(SynthError::Impossible(format!(
                "group `{}`: deficit distribution has almost no mass above 0",
                g.label
            )));
        }
        if g.deficit_sd == 0.0 && g.deficit_mean < 0.0 {
            return Err(SynthError::Impossible(format!(
                "group `{}`: fixed deficit is negative",
                g.label
            )));
        }
        let typical = typical_ideal(spec, g)?;
        if g.deficit_mean >= typical {
            return Err(SynthError::Impossible(format!(
                "group `{}`: deficit mean {} L is not below typical ideal LF {typical:.3} L",
                g.label, g.deficit_mean
            )));
        }
    }
    for o in &spec.outcomes {
        if let super::OutcomeModel::Independent { rate } = o.model {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("outcome `{}` rate outside [0, 1]", o.name));
            }
        }
    }
    Ok(())
}

/// Smallest ideal median over the sexes actually sampled, at mid-range age
/// and mean height.
fn typical_ideal(spec: &SynthSpec, g: &GroupSpec) -> Result<f64, SynthError> {
    let d = &spec.demographics;
    let age = 0.5 * (d.age_min + d.age_max);
    let mut sexes = vec![];
    if d.female_fraction < 1.0 {
        sexes.push((Sex::Male, d.height_mean_male));
    }
    if d.female_fraction > 0.0 {
        sexes.push((Sex::Female, d.height_mean_female));
    }
    let mut typical = f64::INFINITY;
    for (sex, height) in sexes {
        let ideal = spec.ideal_group(&g.label);
        let table = spec
            .tables
            .require(ideal, sex)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        let x = DemographicInput { age, height, sex, group: g.label.clone() };
        typical = typical.min(table.predict(&x)?.median);
    }
    Ok(typical)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn truncated_deficit(rng: &mut ChaCha8Rng, g: &GroupSpec) -> Option<f64> {
    if g.deficit_sd == 0.0 {
        return Some(g.deficit_mean);
    }
    (0..MAX_ATTEMPTS)
        .map(|_| g.deficit_mean + g.deficit_sd * normal(rng))
        .find(|&d| d >= 0.0)
}

/// Draws one participant from its own counter-based stream.
fn draw_one(
    spec: &SynthSpec,
    g: &GroupSpec,
    ordinal: usize,
) -> Result<(SynthParticipant, bool), SynthError> {
    let d = &spec.demographics;
    let mut rng = rng::stream(spec.seed, ordinal as u64);

    let sex = if rng.random::<f64>() < d.female_fraction { Sex::Female } else { Sex::Male };
    let age = d.age_min + (d.age_max - d.age_min) * rng.random::<f64>();
    let (h_mean, h_sd) = match sex {
        Sex::Male => (d.height_mean_male, d.height_sd_male),
        Sex::Female => (d.height_mean_female, d.height_sd_female),
    };
    let height = (0..MAX_ATTEMPTS)
        .map(|_| h_mean + h_sd * normal(&mut rng))
        .find(|h| (d.height_min..=d.height_max).contains(h))
        .unwrap_or_else(|| h_mean.clamp(d.height_min, d.height_max));

    let table = spec
        .tables
        .require(spec.ideal_group(&g.label), sex)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let x = DemographicInput { age, height, sex, group: g.label.clone() };
    let reference = table.predict(&x)?;

    let mut redrawn = false;
    let mut draw = None;
    for _ in 0..MAX_ATTEMPTS {
        let z = normal(&mut rng);
        let Ok(lf_ideal) = inverse_z(z, reference.median, reference.l_param, reference.s_param) else {
            redrawn = true;
            continue;
        };
        let Some(deficit) = truncated_deficit(&mut rng, g) else {
            return Err(SynthError::ResampleExhausted { ordinal });
        };
        let lf = lf_ideal - deficit;
        if lf > 0.0 {
            draw = Some((lf_ideal, deficit, lf));
            break;
        }
        redrawn = true;
    }
    let (lf_ideal, deficit, lf) = draw.ok_or(SynthError::ResampleExhausted { ordinal })?;

    let smoker_ever = rng.random::<f64>() < spec.flags.smoker_ever_rate;
    let respiratory_dx = rng.random::<f64>() < spec.flags.respiratory_dx_rate;
    let mut outcomes = BTreeMap::new();
    for o in &spec.outcomes {
        let p = o.model.probability(lf, age);
        outcomes.insert(o.name.clone(), OutcomeRecord::Binary { value: rng.random::<f64>() < p });
    }

    let participant = Participant {
        id: format!("s{ordinal:07}"),
        age,
        height,
        sex,
        race_ethnicity: g.label.to_string(),
        group: Some(g.label.clone()),
        fev1: Some(lf),
        fvc: None,
        smoker_ever: Some(smoker_ever),
        respiratory_dx: Some(respiratory_dx),
        symptoms: BTreeMap::new(),
        outcomes,
        weight: None,
        provenance: Some(Provenance { lf_ideal, deficit }),
    };
    Ok((SynthParticipant { participant, lf_ideal, deficit }, redrawn))
}

/// Generates the cohort described by `spec`; output depends only on the spec.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<SynthParticipant>, SynthReport), SynthError> {
    validate(spec)?;
    let assignments: Vec<&GroupSpec> = spec
        .groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(g, g.n))
        .collect();
    let drawn: Vec<(SynthParticipant, bool)> = assignments
        .par_iter()
        .enumerate()
        .map(|(i, g)| draw_one(spec, g, i))
        .collect::<Result<_, _>>()?;

    let resampled = drawn.iter().filter(|(_, r)| *r).count();
    let generated = drawn.len();
    let resample_rate = resampled as f64 / generated as f64;
    let mut warnings = vec![];
    if resample_rate > RESAMPLE_WARN_FRACTION {
        warnings.push(format!(
            "{:.1}% of participants were redrawn because LF <= 0; deficits may be too large for this physiology",
            100.0 * resample_rate
        ));
    }
    Ok((
        drawn.into_iter().map(|(p, _)| p).collect(),
        SynthReport { generated, resampled, resample_rate, warnings },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::write_cohort_csv;
    use crate::ref_engine::GroupLabel;
    use crate::synth::{OutcomeModel, OutcomeSpec};

    fn group(label: &str, n: usize, mean: f64, sd: f64) -> GroupSpec {
        GroupSpec { label: GroupLabel::new(label), n, deficit_mean: mean, deficit_sd: sd, median_scale: 1.0 }
    }

    #[test]
    fn null_deficits_leave_ideal_untouched() {
        let spec = SynthSpec::with_builtin_tables(vec![group("A", 200, 0.0, 0.0), group("B", 200, 0.0, 0.0)], 5)
            .unwrap();
        let (ps, report) = generate(&spec).unwrap();
        assert_eq!(report.generated, 400);
        for p in &ps {
            assert_eq!(p.deficit, 0.0);
            assert_eq!(p.participant.fev1, Some(p.lf_ideal));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut spec = SynthSpec::with_builtin_tables(vec![group("A", 300, 0.2, 0.1)], 99).unwrap();
        spec.outcomes.push(OutcomeSpec {
            name: "death".into(),
            model: OutcomeModel::LogisticAge { intercept: -5.0, slope: 0.06 },
        });
        let render = |s: &SynthSpec| {
            let (ps, _) = generate(s).unwrap();
            write_cohort_csv(&ps.into_iter().map(Participant::from).collect::<Vec<_>>())
        };
        let a = render(&spec);
        assert_eq!(a, render(&spec));
        spec.seed = 100;
        assert_ne!(a, render(&spec));
    }

    #[test]
    fn independent_of_thread_count() {
        let spec = SynthSpec::with_builtin_tables(vec![group("A", 500, 0.1, 0.05)], 3).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| generate(&spec).unwrap().0);
        let b = four.install(|| generate(&spec).unwrap().0);
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_and_positivity() {
        let spec = SynthSpec::with_builtin_tables(vec![group("A", 1000, 0.5, 0.3)], 1).unwrap();
        let (ps, _) = generate(&spec).unwrap();
        for p in &ps {
            let fev1 = p.participant.fev1.unwrap();
            assert!(fev1 > 0.0);
            assert!(p.deficit >= 0.0);
            assert_eq!(fev1, p.lf_ideal - p.deficit);
        }
    }

    #[test]
    fn impossible_deficit_is_an_error() {
        let spec = SynthSpec::with_builtin_tables(vec![group("A", 10, 9.0, 0.1)], 1).unwrap();
        assert!(matches!(generate(&spec), Err(SynthError::Impossible(_))));
    }

    #[test]
    fn heavy_resampling_warns() {
        // Deficit close to the typical ideal value: many draws land at LF <= 0.
        let spec = SynthSpec::with_builtin_tables(vec![group("A", 400, 2.4, 0.8)], 4).unwrap();
        let (_, report) = generate(&spec).unwrap();
        assert!(report.resample_rate > 0.10, "{report:?}");
        assert_eq!(report.warnings.len(), 1);
    }
}
