use std::collections::{BTreeMap, HashSet};
use std::sync::Mutex;

use super::{read_sessions, AppState, GatewayError, Session};
use crate::domain::{now_millis, ParticipantId, SessionId};
use crate::experiment::{Answers, ExperimentError, ParticipantRecord, Phase, QuestionnaireResponse};
use crate::store::ConversationStore;

pub const QUESTIONNAIRE_STREAM: &str = "questionnaires";

/// Tracks which (session, phase) pairs already have a response.
pub struct QuestionnaireBook {
    submitted: Mutex<HashSet<(SessionId, Phase)>>,
}

impl QuestionnaireBook {
    pub fn open(store: &ConversationStore) -> Result<Self, GatewayError> {
        let responses: Vec<QuestionnaireResponse> = store.read_records(QUESTIONNAIRE_STREAM)?;
        let submitted = responses.into_iter().filter_map(|r| r.session_id.map(|s| (s, r.phase))).collect();
        Ok(QuestionnaireBook { submitted: Mutex::new(submitted) })
    }
}

impl AppState {
    /// Validates against the phase schema and stores the response. Each
    /// phase takes one submission per session.
    pub fn submit_questionnaire(
        &self,
        session: &Session,
        phase: Phase,
        answers: Answers,
    ) -> Result<QuestionnaireResponse, GatewayError> {
        let mut submitted = self.questionnaires.submitted.lock().expect("questionnaire lock");
        let key = (session.session_id.clone(), phase);
        if submitted.contains(&key) {
            return Err(ExperimentError::DuplicateSubmission { phase }.into());
        }
        self.study.schema(phase).validate(&answers)?;
        let response = QuestionnaireResponse {
            participant_id: session.participant_id.clone(),
            session_id: Some(session.session_id.clone()),
            phase,
            answers,
            submitted_at: now_millis(),
        };
        self.store.append_record(QUESTIONNAIRE_STREAM, &response)?;
        submitted.insert(key);
        Ok(response)
    }
}

/// Joins sessions with their questionnaires: one record per participant
/// who completed both phases, in session creation order.
pub fn participant_records(store: &ConversationStore) -> Result<Vec<ParticipantRecord>, GatewayError> {
    let responses: Vec<QuestionnaireResponse> = store.read_records(QUESTIONNAIRE_STREAM)?;
    let mut by_participant: BTreeMap<(ParticipantId, Phase), Answers> = BTreeMap::new();
    for r in responses {
        by_participant.insert((r.participant_id, r.phase), r.answers);
    }
    let mut out = Vec::new();
    for s in read_sessions(store)? {
        let pre = by_participant.get(&(s.participant_id.clone(), Phase::Pre));
        let post = by_participant.get(&(s.participant_id.clone(), Phase::Post));
        if let (Some(pre), Some(post)) = (pre, post) {
            out.push(ParticipantRecord {
                participant_id: s.participant_id,
                condition: s.condition,
                consent_at: s.created_at,
                pre: pre.clone(),
                post: post.clone(),
            });
        }
    }
    Ok(out)
}
