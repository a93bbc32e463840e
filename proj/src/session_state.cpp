#include <algorithm>

#include "fata/error.hpp"
#include "fata/protocol.hpp"

namespace fata::protocol {

std::string_view to_string(SessionPhase p) noexcept {
    switch (p) {
        case SessionPhase::AwaitingQuery: return "AwaitingQuery";
        case SessionPhase::QuestionsIssued: return "QuestionsIssued";
        case SessionPhase::AwaitingAnswers: return "AwaitingAnswers";
        case SessionPhase::Answered: return "Answered";
        case SessionPhase::DirectlyAnswered: return "DirectlyAnswered";
    }
    return "AwaitingQuery";
}

std::string_view to_string(SessionEvent e) noexcept {
    switch (e) {
        case SessionEvent::QuerySubmitted: return "QuerySubmitted";
        case SessionEvent::QuestionsParsed: return "QuestionsParsed";
        case SessionEvent::DirectAnswerParsed: return "DirectAnswerParsed";
        case SessionEvent::AnswersSubmitted: return "AnswersSubmitted";
        case SessionEvent::FinalAnswerReceived: return "FinalAnswerReceived";
    }
    return "QuerySubmitted";
}

SessionPhase parse_phase(std::string_view name) {
    for (auto p : kAllPhases) {
        if (to_string(p) == name) return p;
    }
    throw Error(ErrorCode::SchemaError, "unknown session state '" + std::string(name) + "'");
}

namespace {

SessionEvent parse_event(std::string_view name) {
    for (auto e : kAllEvents) {
        if (to_string(e) == name) return e;
    }
    throw Error(ErrorCode::SchemaError, "unknown session event '" + std::string(name) + "'");
}

std::string_view role_for(SessionEvent e) noexcept {
    switch (e) {
        case SessionEvent::QuerySubmitted:
        case SessionEvent::AnswersSubmitted: return "user";
        default: return "assistant";
    }
}

} // namespace

bool SessionState::query_recorded() const noexcept {
    return std::any_of(transcript.begin(), transcript.end(),
                       [](const TranscriptEntry& e) { return e.event == SessionEvent::QuerySubmitted; });
}

std::optional<SessionPhase> next_phase(SessionPhase phase, SessionEvent event, bool query_recorded) noexcept {
    using P = SessionPhase;
    using E = SessionEvent;
    switch (phase) {
        case P::AwaitingQuery:
            if (event == E::QuerySubmitted && !query_recorded) return P::AwaitingQuery;
            if (event == E::QuestionsParsed) return P::QuestionsIssued;
            if (event == E::DirectAnswerParsed) return P::DirectlyAnswered;
            return std::nullopt;
        case P::QuestionsIssued:
            if (event == E::AnswersSubmitted) return P::AwaitingAnswers;
            if (event == E::QuestionsParsed) return P::QuestionsIssued;
            return std::nullopt;
        case P::AwaitingAnswers:
            if (event == E::FinalAnswerReceived) return P::Answered;
            return std::nullopt;
        case P::Answered:
        case P::DirectlyAnswered:
            return std::nullopt;
    }
    return std::nullopt;
}

SessionState advance_session(const SessionState& state, SessionEvent event, std::string text, std::string timestamp) {
    auto next = next_phase(state.phase, event, state.query_recorded());
    if (!next)
        throw Error(ErrorCode::IllegalTransition,
                    std::string(to_string(event)) + " is not allowed in state " + std::string(to_string(state.phase)));
    SessionState out = state;
    out.phase = *next;
    out.transcript.push_back(TranscriptEntry{event, std::string(role_for(event)), std::move(text),
                                             timestamp.empty() ? utc_now_iso8601() : std::move(timestamp)});
    return out;
}

void to_json(json& j, const TranscriptEntry& e) {
    j = json{{"event", to_string(e.event)}, {"role", e.role}, {"text", e.text}, {"timestamp", e.timestamp}};
}

void from_json(const json& j, TranscriptEntry& e) {
    e.event = parse_event(j.at("event").get<std::string>());
    e.role = j.at("role").get<std::string>();
    e.text = j.at("text").get<std::string>();
    e.timestamp = j.at("timestamp").get<std::string>();
}

void to_json(json& j, const SessionState& s) {
    j = json{{"state", to_string(s.phase)}, {"transcript", s.transcript}};
}

void from_json(const json& j, SessionState& s) {
    s.phase = parse_phase(j.at("state").get<std::string>());
    s.transcript = j.at("transcript").get<std::vector<TranscriptEntry>>();
}

} // namespace fata::protocol
