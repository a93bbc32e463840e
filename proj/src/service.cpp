#include "fata/service.hpp"

#include <algorithm>
#include <mutex>

#include <openssl/rand.h>
#include <spdlog/spdlog.h>

#include "fata/error.hpp"

namespace fata::service {

using protocol::QuestionSet;
using protocol::SessionEvent;
using protocol::SessionPhase;
using protocol::UserAnswers;

std::string random_token() {
    unsigned char buf[16];
    if (RAND_bytes(buf, sizeof buf) != 1) throw Error(ErrorCode::IoError, "random token generation failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char c : buf) {
        out += kHex[c >> 4];
        out += kHex[c & 0xf];
    }
    return out;
}

json session_to_json(const Session& s) {
    json j = {{"session_id", s.session_id},
              {"state", s.state},
              {"query", s.query},
              {"template_variant", protocol::file_stem(s.variant)},
              {"created_at", format_iso8601(s.created_at)},
              {"expires_at", format_iso8601(s.expires_at)}};
    if (s.question_set) j["question_set"] = *s.question_set;
    if (s.user_answers) j["user_answers"] = *s.user_answers;
    if (s.final_answer) j["final_answer"] = *s.final_answer;
    return j;
}

Session session_from_json(const json& j) {
    Session s;
    try {
        s.session_id = j.at("session_id").get<std::string>();
        s.state = j.at("state").get<protocol::SessionState>();
        s.query = j.at("query").get<std::string>();
        s.variant = protocol::parse_variant(j.value("template_variant", std::string("standard")));
        s.created_at = parse_iso8601(j.at("created_at").get<std::string>());
        s.expires_at = parse_iso8601(j.at("expires_at").get<std::string>());
        if (j.contains("question_set")) s.question_set = j.at("question_set").get<QuestionSet>();
        if (j.contains("user_answers")) s.user_answers = j.at("user_answers").get<UserAnswers>();
        if (j.contains("final_answer")) s.final_answer = j.at("final_answer").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("session: ") + e.what());
    }
    return s;
}

namespace {

Response error_response(int status, ErrorCode code, const std::string& message) {
    return {status, json{{"error", {{"code", to_string(code)}, {"message", message}}}}};
}

Response error_response(int status, const Error& e) { return error_response(status, e.code(), e.detail()); }

bool is_gateway_failure(ErrorCode c) {
    switch (c) {
        case ErrorCode::AuthError:
        case ErrorCode::RateLimited:
        case ErrorCode::Timeout:
        case ErrorCode::ProviderError:
        case ErrorCode::ReplayMiss:
        case ErrorCode::InvalidRequest: return true;
        default: return false;
    }
}

json questions_view(const QuestionSet& qs) {
    json flat = json::array();
    for (const auto& q : qs.questions) flat.push_back(q);
    json groups = json::array();
    for (auto d : protocol::kAllDimensions) {
        json members = json::array();
        for (const auto& q : qs.questions)
            if (q.dimension == d) members.push_back(q);
        if (!members.empty()) groups.push_back({{"dimension", protocol::to_string(d)}, {"questions", members}});
    }
    return json{{"questions", flat}, {"question_groups", groups}};
}

// Accepts {"answers": {"1": "text"} | [{"index": 1, "text": "..."}], "declined": [2, 3]}.
UserAnswers parse_answer_body(const json& body, const std::string& session_id) {
    if (!body.is_object()) throw Error(ErrorCode::InvalidRequest, "request body must be a JSON object");
    UserAnswers a;
    a.case_ref = session_id;
    auto parse_index = [](const std::string& key) {
        std::size_t used = 0;
        int idx = 0;
        try {
            idx = std::stoi(key, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != key.size() || key.empty())
            throw Error(ErrorCode::InvalidRequest, "answer key '" + key + "' is not a question index");
        return idx;
    };
    if (body.contains("answers")) {
        const auto& ans = body.at("answers");
        if (ans.is_object()) {
            for (const auto& [k, v] : ans.items()) {
                if (!v.is_string()) throw Error(ErrorCode::InvalidRequest, "answer " + k + " is not a string");
                a.entries[parse_index(k)] = v.get<std::string>();
            }
        } else if (ans.is_array()) {
            for (const auto& item : ans) {
                if (!item.is_object() || !item.contains("index") || !item.at("index").is_number_integer() ||
                    !item.contains("text") || !item.at("text").is_string())
                    throw Error(ErrorCode::InvalidRequest, "answer entries need an integer index and a text");
                a.entries[item.at("index").get<int>()] = item.at("text").get<std::string>();
            }
        } else {
            throw Error(ErrorCode::InvalidRequest, "'answers' must be an object or an array");
        }
    }
    if (body.contains("declined")) {
        const auto& dec = body.at("declined");
        if (!dec.is_array()) throw Error(ErrorCode::InvalidRequest, "'declined' must be an array");
        for (const auto& d : dec) {
            if (!d.is_number_integer()) throw Error(ErrorCode::InvalidRequest, "declined entries must be integers");
            a.declined.insert(d.get<int>());
        }
    }
    return a;
}

QuestionSet sanitize(const QuestionSet& qs, const std::string& session_id) {
    auto clean = protocol::strip_sensitive_questions(qs);
    for (const auto& q : clean.removed)
        spdlog::warn("session {}: dropped question soliciting sensitive data: {}", session_id, q.text);
    if (clean.kept.questions.empty() && !clean.kept.is_direct())
        throw Error(ErrorCode::UnparseableOutput, "every generated question was removed by the sensitive-data lint");
    return clean.kept;
}

} // namespace

SessionService::SessionService(const gateway::Gateway& generator, ServiceConfig config)
    : generator_(generator), config_(std::move(config)) {
    if (!config_.clock) config_.clock = [] { return std::chrono::system_clock::now(); };
    if (!config_.token_source) config_.token_source = random_token;
    if (config_.persist_dir) load_persisted();
}

std::string SessionService::now_iso() const { return format_iso8601(config_.clock()); }

protocol::TemplateSet SessionService::templates_for(protocol::TemplateVariant v) const {
    if (config_.templates_dir) return protocol::load_templates(*config_.templates_dir, v);
    return protocol::builtin_templates(v);
}

std::shared_ptr<SessionService::Entry> SessionService::entry(const std::string& session_id) const {
    std::shared_lock lock(mu_);
    auto it = sessions_.find(session_id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionService::size() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
}

std::optional<Session> SessionService::find(const std::string& session_id) const {
    auto e = entry(session_id);
    if (!e) return std::nullopt;
    std::lock_guard lock(e->mu);
    return e->session;
}

void SessionService::persist(const Session& s) const {
    if (!config_.persist_dir) return;
    write_json_file(*config_.persist_dir / (s.session_id + ".json"), session_to_json(s));
}

void SessionService::load_persisted() {
    std::filesystem::create_directories(*config_.persist_dir);
    for (const auto& f : std::filesystem::directory_iterator(*config_.persist_dir)) {
        if (f.path().extension() != ".json") continue;
        try {
            auto e = std::make_shared<Entry>();
            e->session = session_from_json(read_json_file(f.path()));
            sessions_[e->session.session_id] = e;
        } catch (const Error& err) {
            spdlog::warn("skipping unreadable session file {}: {}", f.path().string(), err.what());
        }
    }
}

Response SessionService::create_session(const json& body) {
    try {
        if (!body.is_object()) throw Error(ErrorCode::InvalidRequest, "request body must be a JSON object");
        auto query = body.contains("query") && body.at("query").is_string() ? body.at("query").get<std::string>() : "";
        if (trim(query).empty()) return error_response(400, ErrorCode::EmptyQuery, "query must be a non-empty string");
        auto variant = config_.default_variant;
        if (body.contains("template_variant")) {
            if (!body.at("template_variant").is_string())
                throw Error(ErrorCode::InvalidRequest, "template_variant must be a string");
            variant = protocol::parse_variant(body.at("template_variant").get<std::string>());
        }
        auto templates = templates_for(variant);

        Session s;
        s.session_id = config_.token_source();
        s.query = query;
        s.variant = variant;
        s.created_at = config_.clock();
        s.expires_at = s.created_at + config_.ttl;
        s.state = protocol::advance_session(s.state, SessionEvent::QuerySubmitted, query, format_iso8601(s.created_at));

        gateway::Completion f1;
        try {
            f1 = generator_.complete(gateway::user_request(protocol::render_f1_prompt(query, templates.ask)));
        } catch (const Error& e) {
            if (!is_gateway_failure(e.code())) throw;
            spdlog::error("stage one generation failed: {}", e.what());
            return error_response(502, e);
        }
        auto qs = protocol::parse_question_set(f1.text, s.session_id, config_.parse);
        json out = {{"session_id", s.session_id}};
        if (qs.is_direct()) {
            s.state = protocol::advance_session(s.state, SessionEvent::DirectAnswerParsed, *qs.direct_answer, now_iso());
            s.final_answer = qs.direct_answer;
            s.question_set = qs;
            out["direct_answer"] = *qs.direct_answer;
        } else {
            qs = sanitize(qs, s.session_id);
            s.state = protocol::advance_session(s.state, SessionEvent::QuestionsParsed,
                                                protocol::render_question_list(qs), now_iso());
            s.question_set = qs;
            out.update(questions_view(qs));
        }
        out["state"] = protocol::to_string(s.state.phase);
        out["expires_at"] = format_iso8601(s.expires_at);

        auto e = std::make_shared<Entry>();
        e->session = s;
        {
            std::unique_lock lock(mu_);
            sessions_[s.session_id] = e;
        }
        persist(s);
        return {201, out};
    } catch (const Error& e) {
        switch (e.code()) {
            case ErrorCode::UnparseableOutput:
            case ErrorCode::TooManyQuestions: return error_response(422, e);
            case ErrorCode::InvalidTemplate: return error_response(500, e);
            default: return error_response(400, e);
        }
    }
}

Response SessionService::submit_answers(const std::string& session_id, const json& body) {
    auto e = entry(session_id);
    if (!e) return error_response(404, ErrorCode::SessionNotFound, "unknown session " + session_id);
    std::lock_guard lock(e->mu);
    auto& s = e->session;
    if (config_.clock() >= s.expires_at) return error_response(410, ErrorCode::SessionExpired, "session has expired");

    UserAnswers answers;
    try {
        answers = parse_answer_body(body, session_id);
    } catch (const Error& err) {
        return error_response(400, err);
    }

    if (s.state.phase == SessionPhase::Answered) {
        if (s.user_answers && *s.user_answers == answers)
            return {200, json{{"session_id", s.session_id},
                              {"state", protocol::to_string(s.state.phase)},
                              {"final_answer", *s.final_answer},
                              {"cached", true}}};
        return error_response(409, ErrorCode::IllegalTransition, "session already answered with different answers");
    }
    if (s.state.phase != SessionPhase::QuestionsIssued)
        return error_response(409, ErrorCode::IllegalTransition,
                              "cannot submit answers in state " + std::string(protocol::to_string(s.state.phase)));
    try {
        protocol::validate_answers(*s.question_set, answers);
    } catch (const Error& err) {
        return error_response(422, err);
    }

    try {
        auto templates = templates_for(s.variant);
        auto prompt = protocol::render_f2_prompt(s.query, *s.question_set, answers, templates.answer);
        // Built on a copy; the session changes only once the final answer exists.
        auto staged = protocol::advance_session(s.state, SessionEvent::AnswersSubmitted, body.dump(), now_iso());
        gateway::Completion f2;
        try {
            f2 = generator_.complete(gateway::user_request(prompt));
        } catch (const Error& err) {
            if (!is_gateway_failure(err.code())) throw;
            spdlog::error("session {}: stage two generation failed: {}", session_id, err.what());
            return error_response(502, err);
        }
        staged = protocol::advance_session(staged, SessionEvent::FinalAnswerReceived, f2.text, now_iso());
        s.state = std::move(staged);
        s.user_answers = answers;
        s.final_answer = f2.text;
        persist(s);
        return {200, json{{"session_id", s.session_id},
                          {"state", protocol::to_string(s.state.phase)},
                          {"final_answer", f2.text},
                          {"cached", false}}};
    } catch (const Error& err) {
        return error_response(500, err);
    }
}

Response SessionService::reask(const std::string& session_id) {
    auto e = entry(session_id);
    if (!e) return error_response(404, ErrorCode::SessionNotFound, "unknown session " + session_id);
    std::lock_guard lock(e->mu);
    auto& s = e->session;
    if (config_.clock() >= s.expires_at) return error_response(410, ErrorCode::SessionExpired, "session has expired");
    if (s.state.phase != SessionPhase::QuestionsIssued)
        return error_response(409, ErrorCode::IllegalTransition,
                              "cannot reask in state " + std::string(protocol::to_string(s.state.phase)));
    try {
        auto templates = templates_for(s.variant);
        gateway::Completion out;
        try {
            out = generator_.complete(
                gateway::user_request(protocol::render_reask_prompt(s.query, *s.question_set, templates.reask)));
        } catch (const Error& err) {
            if (!is_gateway_failure(err.code())) throw;
            return error_response(502, err);
        }
        auto qs = protocol::parse_question_set(out.text, s.session_id, config_.parse);
        if (qs.is_direct())
            return error_response(422, ErrorCode::UnparseableOutput, "reask output did not contain questions");
        qs = sanitize(qs, s.session_id);
        s.state = protocol::advance_session(s.state, SessionEvent::QuestionsParsed, protocol::render_question_list(qs),
                                            now_iso());
        s.question_set = qs;
        persist(s);
        json body = {{"session_id", s.session_id}};
        body.update(questions_view(qs));
        body["state"] = protocol::to_string(s.state.phase);
        return {200, body};
    } catch (const Error& err) {
        if (err.code() == ErrorCode::UnparseableOutput || err.code() == ErrorCode::TooManyQuestions)
            return error_response(422, err);
        return error_response(500, err);
    }
}

Response SessionService::get_session(const std::string& session_id) const {
    auto e = entry(session_id);
    if (!e) return error_response(404, ErrorCode::SessionNotFound, "unknown session " + session_id);
    std::lock_guard lock(e->mu);
    const auto& s = e->session;
    json out = {{"session_id", s.session_id},
                {"state", protocol::to_string(s.state.phase)},
                {"query", s.query},
                {"template_variant", protocol::file_stem(s.variant)},
                {"created_at", format_iso8601(s.created_at)},
                {"expires_at", format_iso8601(s.expires_at)},
                {"expired", config_.clock() >= s.expires_at}};
    if (s.question_set) {
        if (s.question_set->is_direct())
            out["direct_answer"] = *s.question_set->direct_answer;
        else
            out.update(questions_view(*s.question_set));
    }
    if (s.user_answers) out["user_answers"] = *s.user_answers;
    if (s.final_answer) out["final_answer"] = *s.final_answer;
    out["transcript"] = s.state.transcript;
    return {200, out};
}

} // namespace fata::service
