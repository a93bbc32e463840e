#include "fata/corpus.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "fata/error.hpp"

namespace fata::corpus {

using protocol::QuestionSet;
using protocol::UserAnswers;

// ---------------------------------------------------------------------------
// Persona

const std::string* Persona::section(std::string_view name) const {
    for (const auto& [k, v] : sections) {
        if (k == name) return &v;
    }
    return nullptr;
}

std::vector<std::string> Persona::missing_sections() const {
    std::vector<std::string> missing;
    for (auto name : kRequiredSections) {
        const auto* s = section(name);
        if (s == nullptr || trim(*s).empty()) missing.emplace_back(name);
    }
    return missing;
}

std::string Persona::render() const {
    std::string out;
    for (const auto& [k, v] : sections) out += "## " + k + "\n" + v + "\n";
    return out;
}

Persona parse_persona_sections(std::string_view text) {
    static const std::regex header(R"(^\s*#{1,6}\s*(.*?)\s*:?\s*$)");
    Persona p;
    std::string* current = nullptr;
    for (const auto& line : split_lines(text)) {
        std::smatch m;
        if (std::regex_match(line, m, header)) {
            std::string name = to_lower(trim(m[1].str()));
            auto it = std::find_if(p.sections.begin(), p.sections.end(), [&](const auto& s) { return s.first == name; });
            if (it == p.sections.end()) {
                p.sections.emplace_back(name, "");
                current = &p.sections.back().second;
            } else {
                current = &it->second;
            }
            continue;
        }
        if (current == nullptr) continue;
        if (!current->empty()) current->push_back('\n');
        current->append(line);
    }
    for (auto& [_, v] : p.sections) v = trim(v);
    return p;
}

ordered_json persona_to_json(const Persona& p) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : p.sections) j[k] = v;
    return j;
}

Persona persona_from_json(const ordered_json& j) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, "persona must be an object");
    Persona p;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw Error(ErrorCode::SchemaError, "persona section '" + k + "' must be a string");
        p.sections.emplace_back(to_lower(k), v.get<std::string>());
    }
    return p;
}

// ---------------------------------------------------------------------------
// Corpus loading

std::size_t Manifest::total() const {
    std::size_t n = 0;
    for (const auto& [_, scenarios] : counts) {
        for (const auto& [__, c] : scenarios) n += static_cast<std::size_t>(c);
    }
    return n;
}

const CaseSpec* Corpus::find(std::string_view case_id) const {
    for (const auto& c : cases) {
        if (c.case_id == case_id) return &c;
    }
    return nullptr;
}

namespace {

std::string required_string(const ordered_json& item, const std::string& pointer, const char* key) {
    if (!item.contains(key)) throw Error(ErrorCode::SchemaError, pointer + "/" + key + ": missing");
    const auto& v = item.at(key);
    if (!v.is_string()) throw Error(ErrorCode::SchemaError, pointer + "/" + key + ": must be a string");
    auto s = v.get<std::string>();
    if (trim(s).empty()) throw Error(ErrorCode::SchemaError, pointer + "/" + key + ": must be non-empty");
    return s;
}

void check_shape(const Manifest& m) {
    std::vector<std::string> deficits;
    if (static_cast<int>(m.counts.size()) != kStrictIndustries)
        deficits.push_back("expected " + std::to_string(kStrictIndustries) + " industries, found " +
                           std::to_string(m.counts.size()));
    for (const auto& [industry, scenarios] : m.counts) {
        if (static_cast<int>(scenarios.size()) != kStrictScenariosPerIndustry)
            deficits.push_back("industry '" + industry + "' has " + std::to_string(scenarios.size()) + " of " +
                               std::to_string(kStrictScenariosPerIndustry) + " scenarios");
        for (const auto& [scenario, count] : scenarios) {
            if (count != kStrictVariantsPerScenario)
                deficits.push_back("scenario '" + industry + "/" + scenario + "' has " + std::to_string(count) + " of " +
                                   std::to_string(kStrictVariantsPerScenario) + " cases");
        }
    }
    if (!deficits.empty()) {
        std::string msg = "corpus is not 12x5x5:";
        for (const auto& d : deficits) msg += " " + d + ";";
        throw Error(ErrorCode::ShapeError, msg);
    }
}

} // namespace

Corpus parse_corpus(const ordered_json& doc, const LoadOptions& opts) {
    if (!doc.is_array()) throw Error(ErrorCode::SchemaError, ": corpus must be a JSON array");
    Corpus corpus;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& item = doc[i];
        std::string pointer = "/" + std::to_string(i);
        if (!item.is_object()) throw Error(ErrorCode::SchemaError, pointer + ": case must be an object");
        CaseSpec c;
        c.case_id = required_string(item, pointer, "case_id");
        c.industry = required_string(item, pointer, "industry");
        c.scenario = required_string(item, pointer, "scenario");
        c.b_prompt = required_string(item, pointer, "b_prompt");
        if (!seen.insert(c.case_id).second)
            throw Error(ErrorCode::SchemaError, pointer + "/case_id: duplicate case_id '" + c.case_id + "'");
        if (opts.industries &&
            std::find(opts.industries->begin(), opts.industries->end(), c.industry) == opts.industries->end())
            throw Error(ErrorCode::SchemaError, pointer + "/industry: '" + c.industry + "' is not in the industry list");
        if (item.contains("persona") && !item.at("persona").is_null()) {
            try {
                c.persona = persona_from_json(item.at("persona"));
            } catch (const Error& e) {
                throw Error(ErrorCode::SchemaError, pointer + "/persona: " + e.detail());
            }
            auto missing = c.persona->missing_sections();
            if (!missing.empty())
                throw Error(ErrorCode::SchemaError, pointer + "/persona/" + missing.front() + ": missing or empty");
        }
        corpus.manifest.counts[c.industry][c.scenario] += 1;
        corpus.cases.push_back(std::move(c));
    }
    if (opts.strict_shape) check_shape(corpus.manifest);
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts) {
    auto text = read_text_file(path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
    }
    return parse_corpus(doc, opts);
}

ordered_json corpus_to_json(const Corpus& corpus) {
    ordered_json arr = ordered_json::array();
    for (const auto& c : corpus.cases) {
        ordered_json j = {{"case_id", c.case_id}, {"industry", c.industry}, {"scenario", c.scenario}, {"b_prompt", c.b_prompt}};
        if (c.persona) j["persona"] = persona_to_json(*c.persona);
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<std::string> load_industry_manifest(const std::filesystem::path& path) {
    auto j = read_json_file(path);
    if (!j.is_array() || j.empty()) throw Error(ErrorCode::SchemaError, path.string() + ": expected a non-empty array");
    return j.get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------
// Generation prompts

std::string persona_prompt(const CaseSpec& c) {
    std::ostringstream os;
    os << "You are building a realistic user profile for a benchmark of personalized assistance.\n"
       << "Industry: " << c.industry << "\n"
       << "Scenario: " << c.scenario << "\n"
       << "The user's incomplete request: \"" << c.b_prompt << "\"\n\n"
       << "Write a detailed profile of this specific user: their background, constraints, preferences, situational "
          "factors and relevant history. Give concrete facts (numbers, tools, treatments, dates) that an expert would "
          "need to give personalized advice. Use exactly these Markdown section headers, each followed by the facts "
          "for that section:\n"
       << "## background\n## constraints\n## preferences\n## environment\n## history\n"
       << "Do not write anything before the first header.\n";
    return os.str();
}

std::string simulate_answers_prompt(const Persona& persona, const QuestionSet& qs) {
    std::ostringstream os;
    os << "You are role-playing the user described in the profile below. An expert asked you the numbered questions "
          "that follow. Answer each question in the first person, using only facts stated in the profile. Do not "
          "invent anything the profile does not state. If the profile does not contain what a question asks for, "
          "answer that question with exactly DECLINED.\n\n"
       << "Profile:\n"
       << persona.render() << "\n"
       << "Questions:\n"
       << protocol::render_question_list(qs) << "\n"
       << "Reply with one numbered line per question, in the same order, formatted as \"<number>. <answer>\".\n";
    return os.str();
}

std::string c_prompt_instruction(const CaseSpec& c, const Persona& persona) {
    std::ostringstream os;
    os << "Rewrite the user's request below as the query an expert user with complete knowledge of their own "
          "situation would write.\n"
       << "Industry: " << c.industry << "\n"
       << "Scenario: " << c.scenario << "\n"
       << "Original request: \"" << c.b_prompt << "\"\n\n"
       << "User profile:\n"
       << persona.render() << "\n"
       << "Requirements: write one self-contained paragraph in the first person that states the same need as the "
          "original request and embeds every relevant fact from the profile. Do not ask clarifying questions, do not "
          "use lists or headings, and do not split the request into stages. Output only the rewritten query.\n";
    return os.str();
}

namespace {

gateway::Completion ask(const gateway::Gateway& gw, const gateway::ChatRequest& req, TranscriptLog* log) {
    auto c = gw.complete(req);
    if (log != nullptr) log->push_back(c.transcript);
    return c;
}

gateway::ChatRequest follow_up(const gateway::ChatRequest& first, const std::string& reply, std::string correction) {
    auto req = first;
    req.messages.push_back({"assistant", reply});
    req.messages.push_back({"user", std::move(correction)});
    return req;
}

std::string join_missing(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
    return out;
}

bool is_declined(const std::string& answer) {
    auto a = to_lower(trim(answer));
    while (!a.empty() && (a.back() == '.' || a.back() == '*')) a.pop_back();
    while (!a.empty() && a.front() == '*') a.erase(a.begin());
    return a.empty() || a.rfind("declined", 0) == 0;
}

std::string one_paragraph(std::string_view text) {
    std::string out;
    for (const auto& line : split_lines(text)) {
        auto t = trim(line);
        if (t.empty()) continue;
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

} // namespace

Persona synthesize_persona(const CaseSpec& c, const gateway::Gateway& gw, TranscriptLog* log) {
    if (c.persona) return *c.persona;
    auto req = gateway::user_request(persona_prompt(c));
    auto first = ask(gw, req, log);
    auto persona = parse_persona_sections(first.text);
    auto missing = persona.missing_sections();
    if (missing.empty()) return persona;

    auto retry = follow_up(req, first.text,
                           "Your profile is missing or leaves empty the section(s): " + join_missing(missing) +
                               ". Reply again with the complete profile using exactly the five headers "
                               "## background, ## constraints, ## preferences, ## environment, ## history.");
    auto second = ask(gw, retry, log);
    persona = parse_persona_sections(second.text);
    missing = persona.missing_sections();
    if (!missing.empty())
        throw Error(ErrorCode::GenerationParseError,
                    c.case_id + ": persona still lacks section(s) " + join_missing(missing) + " after reprompt");
    return persona;
}

std::optional<UserAnswers> parse_simulated_answers(std::string_view reply, const QuestionSet& qs) {
    static const std::regex numbered(R"(^\s*(?:\*\*)?(?:[QA]\s*)?(\d{1,3})\s*[.):](?:\*\*)?\s*(.*)$)",
                                     std::regex::icase);
    std::map<int, std::string> raw;
    int current = -1;
    for (const auto& line : split_lines(reply)) {
        std::smatch m;
        if (std::regex_match(line, m, numbered)) {
            current = std::stoi(m[1].str());
            raw[current] = trim(m[2].str());
        } else if (current >= 0 && !trim(line).empty()) {
            auto& s = raw[current];
            s += (s.empty() ? "" : " ") + trim(line);
        }
    }
    if (raw.empty()) return std::nullopt;
    UserAnswers answers;
    answers.case_ref = qs.case_ref;
    for (const auto& q : qs.questions) {
        auto it = raw.find(q.index);
        if (it == raw.end() || is_declined(it->second))
            answers.declined.insert(q.index);
        else
            answers.entries[q.index] = it->second;
    }
    return answers;
}

UserAnswers simulate_user_answers(const Persona& persona, const QuestionSet& qs, const gateway::Gateway& gw,
                                  TranscriptLog* log) {
    if (qs.is_direct() || qs.questions.empty())
        throw Error(ErrorCode::PreconditionViolation, qs.case_ref + ": no questions to answer");
    if (!persona.complete())
        throw Error(ErrorCode::PreconditionViolation, qs.case_ref + ": persona lacks " + join_missing(persona.missing_sections()));
    auto req = gateway::user_request(simulate_answers_prompt(persona, qs));
    auto first = ask(gw, req, log);
    if (auto a = parse_simulated_answers(first.text, qs)) return *a;
    auto retry = follow_up(req, first.text,
                           "Please reply again with one numbered line per question, formatted as \"<number>. <answer>\", "
                           "using DECLINED where the profile has no answer.");
    auto second = ask(gw, retry, log);
    if (auto a = parse_simulated_answers(second.text, qs)) return *a;
    throw Error(ErrorCode::GenerationParseError, qs.case_ref + ": simulated answers are not numbered after reprompt");
}

CPrompt build_c_prompt(const CaseSpec& c, const Persona& persona, const gateway::Gateway& gw, TranscriptLog* log) {
    if (!persona.complete())
        throw Error(ErrorCode::PreconditionViolation, c.case_id + ": persona lacks " + join_missing(persona.missing_sections()));
    auto result = ask(gw, gateway::user_request(c_prompt_instruction(c, persona)), log);
    auto text = one_paragraph(result.text);
    if (text.empty()) throw Error(ErrorCode::GenerationParseError, c.case_id + ": empty C-Prompt");
    return CPrompt{c.case_id, std::move(text)};
}

// ---------------------------------------------------------------------------
// Artifact store

std::string_view to_string(ArtifactKind k) noexcept {
    switch (k) {
        case ArtifactKind::Persona: return "persona";
        case ArtifactKind::Questions: return "questions";
        case ArtifactKind::Answers: return "answers";
        case ArtifactKind::CPrompt: return "cprompt";
    }
    return "persona";
}

ArtifactStore::ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ArtifactStore::path(std::string_view case_id, ArtifactKind kind) const {
    return root_ / std::string(case_id) / (std::string(to_string(kind)) + ".json");
}

bool ArtifactStore::has(std::string_view case_id, ArtifactKind kind) const {
    return std::filesystem::exists(path(case_id, kind));
}

std::mutex& ArtifactStore::lock_for(std::string_view case_id) {
    return stripes_[std::hash<std::string_view>{}(case_id) % stripes_.size()];
}

void ArtifactStore::write(std::string_view case_id, ArtifactKind kind, const ordered_json& doc) {
    std::lock_guard lock(lock_for(case_id));
    write_json_file(path(case_id, kind), doc);
}

namespace {

ordered_json read_ordered(const std::filesystem::path& p) {
    try {
        return ordered_json::parse(read_text_file(p));
    } catch (const ordered_json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, p.string() + ": " + e.what());
    }
}

ordered_json to_ordered(const json& j) { return ordered_json::parse(j.dump()); }

} // namespace

std::optional<Persona> ArtifactStore::persona(std::string_view case_id) const {
    if (!has(case_id, ArtifactKind::Persona)) return std::nullopt;
    return persona_from_json(read_ordered(path(case_id, ArtifactKind::Persona)).at("sections"));
}

std::optional<QuestionSet> ArtifactStore::questions(std::string_view case_id) const {
    if (!has(case_id, ArtifactKind::Questions)) return std::nullopt;
    return read_json_file(path(case_id, ArtifactKind::Questions)).at("question_set").get<QuestionSet>();
}

std::optional<UserAnswers> ArtifactStore::answers(std::string_view case_id) const {
    if (!has(case_id, ArtifactKind::Answers)) return std::nullopt;
    return read_json_file(path(case_id, ArtifactKind::Answers)).at("answers").get<UserAnswers>();
}

std::optional<CPrompt> ArtifactStore::cprompt(std::string_view case_id) const {
    if (!has(case_id, ArtifactKind::CPrompt)) return std::nullopt;
    auto j = read_json_file(path(case_id, ArtifactKind::CPrompt));
    return CPrompt{j.at("case_id").get<std::string>(), j.at("text").get<std::string>()};
}

std::vector<std::string> ArtifactStore::transcript_hashes(std::string_view case_id, ArtifactKind kind) const {
    if (!has(case_id, kind)) return {};
    return read_json_file(path(case_id, kind)).value("transcript_hashes", std::vector<std::string>{});
}

void ArtifactStore::put_persona(std::string_view case_id, const Persona& p, const std::vector<std::string>& hashes) {
    write(case_id, ArtifactKind::Persona,
          ordered_json{{"case_id", case_id}, {"sections", persona_to_json(p)}, {"transcript_hashes", hashes}});
}

void ArtifactStore::put_questions(std::string_view case_id, const QuestionSet& qs, const std::string& template_id,
                                  const std::vector<std::string>& hashes, const std::string& created_at) {
    write(case_id, ArtifactKind::Questions,
          ordered_json{{"case_id", case_id},
                       {"template_id", template_id},
                       {"question_set", to_ordered(json(qs))},
                       {"transcript_hashes", hashes},
                       {"created_at", created_at}});
}

std::string ArtifactStore::questions_created_at(std::string_view case_id) const {
    if (!has(case_id, ArtifactKind::Questions)) return {};
    return read_json_file(path(case_id, ArtifactKind::Questions)).value("created_at", std::string{});
}

void ArtifactStore::put_answers(std::string_view case_id, const UserAnswers& a, const std::vector<std::string>& hashes) {
    write(case_id, ArtifactKind::Answers,
          ordered_json{{"case_id", case_id}, {"answers", to_ordered(json(a))}, {"transcript_hashes", hashes}});
}

void ArtifactStore::put_cprompt(std::string_view case_id, const CPrompt& c, const std::vector<std::string>& hashes) {
    write(case_id, ArtifactKind::CPrompt,
          ordered_json{{"case_id", case_id}, {"text", c.text}, {"transcript_hashes", hashes}});
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::vector<std::string> hashes_of(const TranscriptLog& log) {
    std::vector<std::string> out;
    for (const auto& t : log) out.push_back(t.request_hash);
    return out;
}

} // namespace

BuildSummary build_corpus(const Corpus& corpus, const gateway::Gateway& gw, ArtifactStore& store,
                          const protocol::TemplateSet& templates, const BuildOptions& opts) {
    BuildSummary summary;
    summary.cases = corpus.cases.size();
    std::mutex summary_mu;

    parallel_for(corpus.cases.size(), opts.concurrency, [&](std::size_t i) {
        const auto& c = corpus.cases[i];
        std::size_t generated = 0;
        std::size_t skipped = 0;
        std::string stage = "persona";
        try {
            std::optional<Persona> persona = store.persona(c.case_id);
            if (persona) {
                ++skipped;
            } else {
                TranscriptLog log;
                persona = synthesize_persona(c, gw, &log);
                store.put_persona(c.case_id, *persona, hashes_of(log));
                ++generated;
            }

            stage = "F1";
            std::optional<QuestionSet> qs = store.questions(c.case_id);
            if (qs) {
                ++skipped;
            } else {
                auto f1 = gw.complete(gateway::user_request(protocol::render_f1_prompt(c.b_prompt, templates.ask)));
                stage = "F1-parse";
                qs = protocol::parse_question_set(f1.text, c.case_id, opts.parse);
                store.put_questions(c.case_id, *qs, templates.ask.template_id, {f1.transcript.request_hash},
                                    f1.transcript.timestamp);
                ++generated;
            }

            stage = "answers";
            if (store.has(c.case_id, ArtifactKind::Answers)) {
                ++skipped;
            } else {
                TranscriptLog log;
                UserAnswers answers;
                answers.case_ref = c.case_id;
                // A direct answer at F1 leaves nothing to answer.
                if (!qs->is_direct()) answers = simulate_user_answers(*persona, *qs, gw, &log);
                store.put_answers(c.case_id, answers, hashes_of(log));
                ++generated;
            }

            stage = "cprompt";
            if (store.has(c.case_id, ArtifactKind::CPrompt)) {
                ++skipped;
            } else {
                TranscriptLog log;
                auto cp = build_c_prompt(c, *persona, gw, &log);
                store.put_cprompt(c.case_id, cp, hashes_of(log));
                ++generated;
            }
        } catch (const std::exception& e) {
            std::lock_guard lock(summary_mu);
            summary.failures.push_back({c.case_id, stage, e.what()});
        }
        std::lock_guard lock(summary_mu);
        summary.generated += generated;
        summary.skipped += skipped;
    });
    std::sort(summary.failures.begin(), summary.failures.end(),
              [](const BuildFailure& a, const BuildFailure& b) { return a.case_id < b.case_id; });
    return summary;
}

} // namespace fata::corpus
