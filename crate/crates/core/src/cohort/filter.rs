use serde::{Deserialize, Serialize};

use super::participant::Participant;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtRiskSummary {
    pub input: usize,
    pub retained: usize,
    pub inclusion_rate: f64,
    /// Participants whose flag was missing and therefore counted as false.
    pub missing_smoker_ever: usize,
    pub missing_respiratory_dx: usize,
    pub missing_all_symptoms: usize,
}

/// Smoking history, a respiratory diagnosis, or any symptom. Missing flags
/// count as false.
pub fn is_at_risk(p: &Participant) -> bool {
    p.smoker_ever.unwrap_or(false) || p.respiratory_dx.unwrap_or(false) || p.any_symptom()
}

/// Keeps participants with (or at risk of) respiratory disease.
pub fn filter_at_risk(participants: &[Participant]) -> (Vec<Participant>, AtRiskSummary) {
    let retained: Vec<Participant> = participants.iter().filter(|p| is_at_risk(p)).cloned().collect();
    let summary = AtRiskSummary {
        input: participants.len(),
        retained: retained.len(),
        inclusion_rate: if participants.is_empty() {
            0.0
        } else {
            retained.len() as f64 / participants.len() as f64
        },
        missing_smoker_ever: participants.iter().filter(|p| p.smoker_ever.is_none()).count(),
        missing_respiratory_dx: participants.iter().filter(|p| p.respiratory_dx.is_none()).count(),
        missing_all_symptoms: participants.iter().filter(|p| p.symptoms.is_empty()).count(),
    };
    (retained, summary)
}
