#pragma once

// Two-stage ask-then-answer protocol: prompt templates, stage-1 output parsing,
// stage-2 prompt assembly and the session state machine.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fata/util.hpp"

namespace fata::protocol {

enum class TemplateVariant { Standard, Simplification, DualExpert, Minimalist };

/// Ask renders the stage-1 question request, Answer the stage-2 context-enhanced
/// request, Reask the "reorganize and re-present the questions" request.
enum class TemplateKind { Ask, Answer, Reask };

std::string_view to_string(TemplateVariant v) noexcept;
std::string_view file_stem(TemplateVariant v) noexcept; // "standard", "dual_expert", ...
TemplateVariant parse_variant(std::string_view name);    // accepts either spelling

struct PromptTemplate {
    std::string template_id;
    TemplateVariant variant = TemplateVariant::Standard;
    TemplateKind kind = TemplateKind::Ask;
    std::string body;
    std::vector<std::string> placeholders;        // declared, without braces
    std::vector<std::string> required_components; // labels from component_anchors()
};

/// The three templates one protocol run needs.
struct TemplateSet {
    PromptTemplate ask;
    PromptTemplate answer;
    PromptTemplate reask;
};

struct ComponentAnchor {
    std::string_view label;
    std::string_view phrase;
};

/// The six functional components of the standard ask template and the verbatim
/// phrase that evidences each.
const std::array<ComponentAnchor, 6>& component_anchors();

std::vector<std::string> declared_placeholders(TemplateKind kind);

/// Names of every {name} token in body, in order of appearance (duplicates kept).
std::vector<std::string> find_placeholders(std::string_view body);

/// Template id is "<stem>-<kind>@<12 hex of body digest>" so edits to a template
/// file show up as a new version in provenance.
PromptTemplate make_template(TemplateVariant variant, TemplateKind kind, std::string body);

/// Every structural problem with the template; empty means valid. Checks that
/// each declared placeholder occurs exactly once, that no undeclared placeholder
/// occurs, and that every required component phrase is present.
std::vector<std::string> validate_template(const PromptTemplate& t);

/// Labels of the component anchors whose phrase is absent from the body.
std::vector<std::string> lint_components(const PromptTemplate& t);

TemplateSet builtin_templates(TemplateVariant variant);

/// Loads <dir>/<stem>.txt (ask), <dir>/answer.txt and <dir>/reask.txt. Throws
/// InvalidTemplate if any file fails validate_template.
TemplateSet load_templates(const std::filesystem::path& dir, TemplateVariant variant);

enum class InfoDimension { Contextual, Constraint, Preference, Environmental, Historical, Unclassified };

std::string_view to_string(InfoDimension d) noexcept;
InfoDimension parse_dimension(std::string_view name);
inline constexpr std::array<InfoDimension, 6> kAllDimensions = {
    InfoDimension::Contextual,    InfoDimension::Constraint, InfoDimension::Preference,
    InfoDimension::Environmental, InfoDimension::Historical, InfoDimension::Unclassified};

struct Question {
    int index = 0;
    std::string text;
    InfoDimension dimension = InfoDimension::Unclassified;
    std::optional<std::string> example_hint;

    bool operator==(const Question&) const = default;
};

struct QuestionSet {
    std::string case_ref;
    std::vector<Question> questions;
    std::optional<std::string> direct_answer;

    bool is_direct() const noexcept { return direct_answer.has_value(); }
    bool operator==(const QuestionSet&) const = default;
};

struct UserAnswers {
    std::string case_ref;
    std::map<int, std::string> entries;
    std::set<int> declined;

    bool operator==(const UserAnswers&) const = default;
};

struct ParseOptions {
    std::size_t max_questions = 10;
};

std::string render_f1_prompt(std::string_view query, const PromptTemplate& tmpl);

/// Turns verbatim stage-1 output into a QuestionSet. Numbered ("1.", "1)"),
/// "Q1:" and bulleted lines, or any line ending in '?', are question candidates.
/// When there are no candidates, or none of them contains a '?', the whole
/// output is taken as a direct answer.
QuestionSet parse_question_set(std::string_view raw, std::string_view case_ref, const ParseOptions& opts = {});

/// Deterministic keyword classification. First matching table wins, in the
/// order Historical, Constraint, Preference, Environmental, Contextual.
InfoDimension classify_dimension(std::string_view question_text);

/// Canonical numbered list: "<index>. <text>[ (<hint>)]" one per line. The
/// parser reads this form back to the same texts, hints and order.
std::string render_question_list(const QuestionSet& qs);

/// Throws MismatchedAnswers when answers reference an index not in qs or an
/// index is both answered and declined.
void validate_answers(const QuestionSet& qs, const UserAnswers& answers);

inline constexpr std::string_view kNotProvided = "not provided";

std::string render_f2_prompt(std::string_view query, const QuestionSet& qs, const UserAnswers& answers,
                             const PromptTemplate& tmpl);

std::string render_reask_prompt(std::string_view query, const QuestionSet& qs, const PromptTemplate& tmpl);

/// Heuristic lint for questions that solicit phone numbers, identity numbers or
/// similar sensitive data.
bool solicits_sensitive_data(std::string_view question_text);

struct SanitizedQuestions {
    QuestionSet kept; // re-indexed 1..n
    std::vector<Question> removed;
};
SanitizedQuestions strip_sensitive_questions(const QuestionSet& qs);

// ---------------------------------------------------------------------------
// Session state machine

enum class SessionPhase { AwaitingQuery, QuestionsIssued, AwaitingAnswers, Answered, DirectlyAnswered };
enum class SessionEvent { QuerySubmitted, QuestionsParsed, DirectAnswerParsed, AnswersSubmitted, FinalAnswerReceived };

inline constexpr std::array<SessionPhase, 5> kAllPhases = {
    SessionPhase::AwaitingQuery, SessionPhase::QuestionsIssued, SessionPhase::AwaitingAnswers,
    SessionPhase::Answered, SessionPhase::DirectlyAnswered};
inline constexpr std::array<SessionEvent, 5> kAllEvents = {
    SessionEvent::QuerySubmitted, SessionEvent::QuestionsParsed, SessionEvent::DirectAnswerParsed,
    SessionEvent::AnswersSubmitted, SessionEvent::FinalAnswerReceived};

std::string_view to_string(SessionPhase p) noexcept;
std::string_view to_string(SessionEvent e) noexcept;
SessionPhase parse_phase(std::string_view name);

struct TranscriptEntry {
    SessionEvent event;
    std::string role; // "user" or "assistant"
    std::string text;
    std::string timestamp;

    bool operator==(const TranscriptEntry&) const = default;
};

struct SessionState {
    SessionPhase phase = SessionPhase::AwaitingQuery;
    std::vector<TranscriptEntry> transcript;

    bool query_recorded() const noexcept;
    bool operator==(const SessionState&) const = default;
};

/// Transition table. QuerySubmitted is accepted once while awaiting the query;
/// QuestionsParsed on an issued checklist is the re-ask edge.
std::optional<SessionPhase> next_phase(SessionPhase phase, SessionEvent event, bool query_recorded) noexcept;

/// Returns the successor state with one transcript entry appended. Throws
/// IllegalTransition for any edge outside the table; the input is untouched.
SessionState advance_session(const SessionState& state, SessionEvent event, std::string text = {},
                             std::string timestamp = {});

// JSON (artifact files and the session API)
void to_json(json& j, const Question& q);
void from_json(const json& j, Question& q);
void to_json(json& j, const QuestionSet& qs);
void from_json(const json& j, QuestionSet& qs);
void to_json(json& j, const UserAnswers& a);
void from_json(const json& j, UserAnswers& a);
void to_json(json& j, const TranscriptEntry& e);
void from_json(const json& j, TranscriptEntry& e);
void to_json(json& j, const SessionState& s);
void from_json(const json& j, SessionState& s);

} // namespace fata::protocol
