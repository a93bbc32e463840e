#include <algorithm>
#include <cctype>
#include <regex>

#include "fata/error.hpp"
#include "fata/protocol.hpp"

namespace fata::protocol {

namespace {

struct KeywordRule {
    InfoDimension dimension;
    std::vector<std::string_view> phrases;
};

// Phrases are matched on word boundaries against lowercased text in which
// every non-alphanumeric run is a single space.
const std::vector<KeywordRule>& keyword_table() {
    static const std::vector<KeywordRule> table = {
        {InfoDimension::Historical,
         {"have you tried", "have you ever", "tried", "previously", "previous", "before", "in the past", "past",
          "history", "used to", "last time", "prior", "experience with", "baseline", "so far", "already",
          "earlier"}},
        {InfoDimension::Constraint,
         {"budget", "limit", "limits", "limitation", "limitations", "deadline", "deadlines", "timeline",
          "time frame", "timeframe", "cost", "costs", "afford", "restriction", "restrictions", "regulation",
          "regulations", "regulatory", "compliance", "constraint", "constraints", "resources", "how much time",
          "maximum", "minimum", "allergies", "allergy", "cannot", "can t", "spend"}},
        {InfoDimension::Preference,
         {"prefer", "preference", "preferences", "priority", "priorities", "prioritize", "goal", "goals",
          "want", "would you like", "like to", "interested", "rather", "important to you", "trade off",
          "trade offs", "expectations", "expect", "favorite", "style", "comfortable with", "risk tolerance",
          "hope", "aim"}},
        {InfoDimension::Environmental,
         {"environment", "environmental", "location", "where", "climate", "market", "external",
          "infrastructure", "dependencies", "dependency", "stakeholders", "stakeholder", "weather", "local",
          "region", "area", "community", "support system", "access to", "existing systems", "surroundings",
          "neighborhood"}},
        {InfoDimension::Contextual,
         {"current", "currently", "age", "how old", "role", "background", "situation", "occupation", "job",
          "work", "organization", "company", "team", "size", "level", "status", "describe", "who",
          "what is your", "how many", "how often", "daily", "routine", "medication", "medications", "diet",
          "habits", "exercise", "income"}},
    };
    return table;
}

std::string normalize_words(std::string_view text) {
    std::string out = " ";
    bool space = true;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
            space = false;
        } else if (!space) {
            out.push_back(' ');
            space = true;
        }
    }
    if (!space) out.push_back(' ');
    return out;
}

bool contains_phrase(const std::string& normalized, std::string_view phrase) {
    std::string needle;
    needle.reserve(phrase.size() + 2);
    needle.push_back(' ');
    needle.append(phrase);
    needle.push_back(' ');
    return normalized.find(needle) != std::string::npos;
}

std::string collapse_spaces(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            if (!space && !out.empty()) out.push_back(' ');
            space = true;
        } else {
            out.push_back(c);
            space = false;
        }
    }
    return trim(out);
}

std::string strip_bold(std::string s) {
    for (auto pos = s.find("**"); pos != std::string::npos; pos = s.find("**")) s.erase(pos, 2);
    return s;
}

bool is_hint_text(std::string_view s) {
    return starts_with_icase(s, "e.g") || starts_with_icase(s, "for example") || starts_with_icase(s, "example:") ||
           starts_with_icase(s, "examples:") || starts_with_icase(s, "such as");
}

/// Splits an example hint off a question line, either "(e.g., ...)" or a
/// trailing "e.g., ..." after the question mark.
std::pair<std::string, std::optional<std::string>> split_hint(const std::string& line) {
    static const std::regex paren(R"(\((\s*(?:e\.g\.?|for example|example:|examples:|such as)[^()]*)\))",
                                  std::regex::icase);
    const std::string& s = line;
    std::optional<std::smatch> last;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), paren); it != std::sregex_iterator(); ++it) last = *it;
    if (last) {
        auto pos = static_cast<std::size_t>(last->position(0));
        auto len = static_cast<std::size_t>(last->length(0));
        std::string text = s.substr(0, pos) + s.substr(pos + len);
        return {collapse_spaces(text), trim((*last)[1].str())};
    }
    auto q = s.rfind('?');
    if (q != std::string::npos && q + 1 < s.size()) {
        std::string rest = trim(std::string_view(s).substr(q + 1));
        while (!rest.empty() && (rest.front() == '-' || rest.front() == ':')) rest = trim(rest.substr(1));
        if (is_hint_text(rest)) return {collapse_spaces(s.substr(0, q + 1)), rest};
    }
    return {collapse_spaces(s), std::nullopt};
}

struct Candidate {
    std::string text;
    std::optional<std::string> hint;
};

std::size_t leading_ws(std::string_view s) {
    std::size_t n = 0;
    while (n < s.size() && (s[n] == ' ' || s[n] == '\t')) ++n;
    return n;
}

std::optional<std::string> match_marker(const std::string& line) {
    static const std::regex numbered(R"(^\s*(?:\*\*)?\d{1,3}[.)](?:\*\*)?\s+(.*)$)");
    static const std::regex qnum(R"(^\s*(?:\*\*)?Q\d{1,3}\s*[:.)](?:\*\*)?\s*(.*)$)", std::regex::icase);
    static const std::regex bullet("^\\s*(?:[-*+]|\xE2\x80\xA2)\\s+(.*)$");
    std::smatch m;
    if (std::regex_match(line, m, numbered) || std::regex_match(line, m, qnum) || std::regex_match(line, m, bullet))
        return m[1].str();
    return std::nullopt;
}

} // namespace

std::string render_f1_prompt(std::string_view query, const PromptTemplate& tmpl) {
    if (trim(query).empty()) throw Error(ErrorCode::EmptyQuery, "query is empty");
    auto pos = tmpl.body.find("{query}");
    if (pos == std::string::npos)
        throw Error(ErrorCode::MissingPlaceholder, "template " + tmpl.template_id + " lacks {query}");
    std::string out = tmpl.body;
    out.replace(pos, 7, query);
    return out;
}

QuestionSet parse_question_set(std::string_view raw, std::string_view case_ref, const ParseOptions& opts) {
    if (trim(raw).empty()) throw Error(ErrorCode::UnparseableOutput, "stage-1 output is empty");

    std::vector<Candidate> candidates;
    for (const auto& line : split_lines(raw)) {
        std::string t = trim(line);
        if (t.empty()) continue;

        auto marked = match_marker(line);
        std::string body = trim(strip_bold(marked ? *marked : t));

        // An indented "- e.g. ..." line under a question is that question's hint.
        if (leading_ws(line) >= 2 && !candidates.empty() && is_hint_text(body)) {
            if (!candidates.back().hint) candidates.back().hint = body;
            continue;
        }
        if (body.empty()) continue;
        if (marked) {
            // Section headings such as "- Background:" are not questions.
            if (body.back() == ':' && body.find('?') == std::string::npos) continue;
        } else if (body.back() != '?') {
            continue;
        }
        auto [text, hint] = split_hint(body);
        if (text.empty()) continue;
        candidates.push_back({std::move(text), std::move(hint)});
    }

    QuestionSet qs;
    qs.case_ref = std::string(case_ref);
    bool any_question_mark = std::any_of(candidates.begin(), candidates.end(),
                                         [](const Candidate& c) { return c.text.find('?') != std::string::npos; });
    if (candidates.empty() || !any_question_mark) {
        bool substantive = std::any_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isalnum(c); });
        if (!substantive) throw Error(ErrorCode::UnparseableOutput, "stage-1 output has no questions or prose");
        qs.direct_answer = std::string(raw);
        return qs;
    }
    if (candidates.size() > opts.max_questions)
        throw Error(ErrorCode::TooManyQuestions, std::to_string(candidates.size()) + " questions exceed the limit of " +
                                                     std::to_string(opts.max_questions));
    int index = 1;
    for (auto& c : candidates) {
        Question q;
        q.index = index++;
        q.dimension = classify_dimension(c.text);
        q.text = std::move(c.text);
        q.example_hint = std::move(c.hint);
        qs.questions.push_back(std::move(q));
    }
    return qs;
}

InfoDimension classify_dimension(std::string_view question_text) {
    auto normalized = normalize_words(question_text);
    for (const auto& rule : keyword_table()) {
        for (auto phrase : rule.phrases) {
            if (contains_phrase(normalized, phrase)) return rule.dimension;
        }
    }
    return InfoDimension::Unclassified;
}

std::string render_question_list(const QuestionSet& qs) {
    std::string out;
    for (const auto& q : qs.questions) {
        out += std::to_string(q.index) + ". " + q.text;
        if (q.example_hint) out += " (" + *q.example_hint + ")";
        out += "\n";
    }
    return out;
}

void validate_answers(const QuestionSet& qs, const UserAnswers& answers) {
    auto known = [&](int idx) {
        return std::any_of(qs.questions.begin(), qs.questions.end(), [&](const Question& q) { return q.index == idx; });
    };
    for (const auto& [idx, _] : answers.entries) {
        if (!known(idx)) throw Error(ErrorCode::MismatchedAnswers, "answer for unknown question " + std::to_string(idx));
        if (answers.declined.count(idx))
            throw Error(ErrorCode::MismatchedAnswers, "question " + std::to_string(idx) + " both answered and declined");
    }
    for (int idx : answers.declined) {
        if (!known(idx)) throw Error(ErrorCode::MismatchedAnswers, "declined unknown question " + std::to_string(idx));
    }
}

std::string render_f2_prompt(std::string_view query, const QuestionSet& qs, const UserAnswers& answers,
                             const PromptTemplate& tmpl) {
    if (qs.questions.empty())
        throw Error(ErrorCode::PreconditionViolation, "stage-2 prompt needs a non-empty question set");
    if (trim(query).empty()) throw Error(ErrorCode::EmptyQuery, "query is empty");
    validate_answers(qs, answers);
    auto qpos = tmpl.body.find("{query}");
    auto apos = tmpl.body.find("{answers}");
    if (qpos == std::string::npos || apos == std::string::npos)
        throw Error(ErrorCode::MissingPlaceholder, "template " + tmpl.template_id + " lacks {query} or {answers}");

    std::string block;
    for (const auto& q : qs.questions) {
        std::string answer(kNotProvided);
        if (auto it = answers.entries.find(q.index); it != answers.entries.end() && !trim(it->second).empty())
            answer = trim(it->second);
        if (!block.empty()) block += "\n";
        block += "Q" + std::to_string(q.index) + ": " + q.text + "\n";
        block += "A" + std::to_string(q.index) + ": " + answer;
    }
    // Substitute the later placeholder first so the earlier offset stays valid.
    std::string out = tmpl.body;
    if (apos > qpos) {
        out.replace(apos, 9, block);
        out.replace(qpos, 7, query);
    } else {
        out.replace(qpos, 7, query);
        out.replace(apos, 9, block);
    }
    return out;
}

std::string render_reask_prompt(std::string_view query, const QuestionSet& qs, const PromptTemplate& tmpl) {
    if (trim(query).empty()) throw Error(ErrorCode::EmptyQuery, "query is empty");
    if (qs.questions.empty()) throw Error(ErrorCode::PreconditionViolation, "nothing to re-present");
    auto qpos = tmpl.body.find("{query}");
    auto lpos = tmpl.body.find("{questions}");
    if (qpos == std::string::npos || lpos == std::string::npos)
        throw Error(ErrorCode::MissingPlaceholder, "template " + tmpl.template_id + " lacks {query} or {questions}");
    std::string list = render_question_list(qs);
    if (!list.empty() && list.back() == '\n') list.pop_back();
    std::string out = tmpl.body;
    if (lpos > qpos) {
        out.replace(lpos, 11, list);
        out.replace(qpos, 7, query);
    } else {
        out.replace(qpos, 7, query);
        out.replace(lpos, 11, list);
    }
    return out;
}

bool solicits_sensitive_data(std::string_view question_text) {
    static const std::regex pattern(
        R"(\b(phone|telephone|mobile|cell)\s*(number|no\.?|#)|\b(id|identity|identification|passport|national insurance|social security|ssn|driver'?s? licen[cs]e)\s*(card\s*)?(number|no\.?|#)|\bssn\b|\b(credit|debit)\s*card\b|\b(bank|account)\s*(account\s*)?number\b|\bpassword\b|\bhome address\b)",
        std::regex::icase);
    return std::regex_search(std::string(question_text), pattern);
}

SanitizedQuestions strip_sensitive_questions(const QuestionSet& qs) {
    SanitizedQuestions out;
    out.kept.case_ref = qs.case_ref;
    out.kept.direct_answer = qs.direct_answer;
    int index = 1;
    for (const auto& q : qs.questions) {
        if (solicits_sensitive_data(q.text)) {
            out.removed.push_back(q);
            continue;
        }
        Question kept = q;
        kept.index = index++;
        out.kept.questions.push_back(std::move(kept));
    }
    return out;
}

std::string_view to_string(InfoDimension d) noexcept {
    switch (d) {
        case InfoDimension::Contextual: return "Contextual";
        case InfoDimension::Constraint: return "Constraint";
        case InfoDimension::Preference: return "Preference";
        case InfoDimension::Environmental: return "Environmental";
        case InfoDimension::Historical: return "Historical";
        case InfoDimension::Unclassified: return "Unclassified";
    }
    return "Unclassified";
}

InfoDimension parse_dimension(std::string_view name) {
    for (auto d : kAllDimensions) {
        if (to_string(d) == name) return d;
    }
    throw Error(ErrorCode::SchemaError, "unknown information dimension '" + std::string(name) + "'");
}

void to_json(json& j, const Question& q) {
    j = json{{"index", q.index}, {"text", q.text}, {"dimension", to_string(q.dimension)}};
    j["example_hint"] = q.example_hint ? json(*q.example_hint) : json(nullptr);
}

void from_json(const json& j, Question& q) {
    q.index = j.at("index").get<int>();
    q.text = j.at("text").get<std::string>();
    q.dimension = parse_dimension(j.at("dimension").get<std::string>());
    if (j.contains("example_hint") && !j.at("example_hint").is_null())
        q.example_hint = j.at("example_hint").get<std::string>();
    else
        q.example_hint.reset();
}

void to_json(json& j, const QuestionSet& qs) {
    j = json{{"case_ref", qs.case_ref}, {"questions", qs.questions}};
    j["direct_answer"] = qs.direct_answer ? json(*qs.direct_answer) : json(nullptr);
}

void from_json(const json& j, QuestionSet& qs) {
    qs.case_ref = j.at("case_ref").get<std::string>();
    qs.questions = j.at("questions").get<std::vector<Question>>();
    if (j.contains("direct_answer") && !j.at("direct_answer").is_null())
        qs.direct_answer = j.at("direct_answer").get<std::string>();
    else
        qs.direct_answer.reset();
}

void to_json(json& j, const UserAnswers& a) {
    json entries = json::object();
    for (const auto& [idx, text] : a.entries) entries[std::to_string(idx)] = text;
    j = json{{"case_ref", a.case_ref}, {"entries", entries}, {"declined", a.declined}};
}

void from_json(const json& j, UserAnswers& a) {
    a.case_ref = j.value("case_ref", std::string{});
    a.entries.clear();
    for (const auto& [key, value] : j.at("entries").items()) {
        try {
            a.entries[std::stoi(key)] = value.get<std::string>();
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::SchemaError, "answer key '" + key + "' is not a question index");
        }
    }
    a.declined = j.value("declined", std::set<int>{});
}

} // namespace fata::protocol
