#include "scripted_transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

namespace fata::sim {

namespace {

std::uint64_t hash64(std::string_view s) { return std::stoull(sha256_hex(s).substr(0, 15), nullptr, 16); }

// Uniform in [-1, 1).
double jitter(std::string_view key) { return static_cast<double>(hash64(key) % 20000) / 10000.0 - 1.0; }

std::string after(const std::string& text, std::string_view marker) {
    auto pos = text.find(marker);
    if (pos == std::string::npos) return {};
    auto start = pos + marker.size();
    auto end = text.find('\n', start);
    return text.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

std::string between(const std::string& text, std::string_view open, std::string_view close) {
    auto a = text.find(open);
    if (a == std::string::npos) return {};
    a += open.size();
    auto b = text.find(close, a);
    return text.substr(a, b == std::string::npos ? std::string::npos : b - a);
}

std::string unquote(std::string s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

bool contains_icase(const std::string& hay, std::string_view needle) {
    return to_lower(hay).find(to_lower(needle)) != std::string::npos;
}

template <std::size_t N>
const char* pick(const std::array<const char*, N>& pool, std::string_view key) {
    return pool[hash64(key) % N];
}

// --- persona --------------------------------------------------------------

std::string persona_reply(const std::string& prompt) {
    const auto industry = trim(after(prompt, "Industry: "));
    const auto scenario = trim(after(prompt, "Scenario: "));
    const auto request = unquote(after(prompt, "The user's incomplete request: "));
    const std::string key = industry + "|" + scenario + "|" + request;

    static const std::array<const char*, 6> ages = {"28", "34", "41", "47", "53", "62"};
    static const std::array<const char*, 4> budgets = {"about 300 dollars a month", "under 2,000 dollars in total",
                                                       "roughly 50 dollars a week", "a one-off 5,000 dollars"};
    static const std::array<const char*, 4> hours = {"about 5 hours a week", "two evenings a week",
                                                     "30 minutes a day", "weekends only"};
    static const std::array<const char*, 4> styles = {"step-by-step written checklists", "short practical summaries",
                                                      "detailed explanations with the reasoning", "visual plans and tables"};
    static const std::array<const char*, 4> places = {"a mid-sized city with good public services",
                                                      "a small rural town an hour from the nearest city",
                                                      "a dense urban neighbourhood", "a suburban area with limited transit"};

    std::ostringstream os;
    os << "## background\n";
    if (contains_icase(request, "diabet") || contains_icase(request, "blood sugar")) {
        os << "I am " << pick(ages, key) << " years old and was diagnosed with type 2 diabetes three years ago. "
           << "My latest HbA1c was 8.1% and I take metformin 1000 mg twice a day.\n"
           << "## constraints\n"
           << "I work rotating shifts, so meal times vary, and I can spend " << pick(budgets, key + "b")
           << " on food and supplies.\n"
           << "## preferences\n"
           << "I prefer " << pick(styles, key + "s") << " and would rather adjust diet than add medication.\n"
           << "## environment\n"
           << "I live in " << pick(places, key + "p") << " and cook in a small shared kitchen.\n"
           << "## history\n"
           << "I tried a low-carb plan last year and stopped after two months because it was hard to sustain.\n";
        return os.str();
    }
    os << "I am " << pick(ages, key) << " years old and need help with " << to_lower(scenario) << " in "
       << to_lower(industry) << ". I have some basic knowledge but no formal training in this area.\n"
       << "## constraints\n"
       << "I can spend " << pick(budgets, key + "b") << " and have " << pick(hours, key + "h") << " for this.\n"
       << "## preferences\n"
       << "I prefer " << pick(styles, key + "s") << " and want results I can see within three months.\n"
       << "## environment\n"
       << "I live in " << pick(places, key + "p") << ".\n"
       << "## history\n"
       << "I tried handling this on my own last year using free online material, with mixed results.\n";
    return os.str();
}

// --- stage one / reask ----------------------------------------------------

std::vector<std::string> stage_one_questions(const std::string& request) {
    std::vector<std::string> qs = {
        "What is your current situation and background regarding this request? (e.g., your role, experience level, "
        "current status)",
        "What budget or time constraints do you have? (e.g., a monthly budget, a deadline)",
        "Which outcomes do you prefer or prioritize? (e.g., speed versus thoroughness, low risk)",
        "Where are you located, and what services do you have access to locally? (e.g., city, nearby services)",
        "What have you tried before, and how did it go? (e.g., previous approaches and their results)",
    };
    if (contains_icase(request, "claim"))
        qs.push_back("What is your phone number so an adjuster can call you? (e.g., a mobile number)");
    return qs;
}

std::string stage_one_reply(const std::string& request) {
    if (request.size() > 240 || contains_icase(request, "all relevant details")) {
        return "Thank you for the detailed description. Since you have already covered your situation, limits, "
               "preferences and past attempts, here is a complete plan.\n\n"
               "1. Start with the lowest-cost option that fits your stated limits.\n"
               "2. Review progress after four weeks and adjust.\n"
               "3. Escalate to a professional if results stall.\n";
    }
    std::ostringstream os;
    os << "To help you well, I need a few details first:\n\n";
    auto qs = stage_one_questions(request);
    for (std::size_t i = 0; i < qs.size(); ++i) os << i + 1 << ". " << qs[i] << "\n";
    os << "\nOnce you share these, I will tailor the advice to you.\n";
    return os.str();
}

std::string reask_reply(const std::string& prompt) {
    auto list = between(prompt, "missing key information:\n\n", "\n\nI found them");
    std::vector<std::string> lines;
    for (const auto& l : split_lines(list)) {
        auto t = trim(l);
        auto dot = t.find(". ");
        if (dot != std::string::npos && dot <= 3) lines.push_back(t.substr(dot + 2));
    }
    std::reverse(lines.begin(), lines.end());
    std::ostringstream os;
    os << "Here are the same questions, reorganized:\n\n";
    for (std::size_t i = 0; i < lines.size(); ++i) os << i + 1 << ". " << lines[i] << "\n";
    return os.str();
}

// --- simulated answers ----------------------------------------------------

std::map<std::string, std::string> sections_of(const std::string& profile) {
    std::map<std::string, std::string> out;
    std::string current;
    for (const auto& l : split_lines(profile)) {
        auto t = trim(l);
        if (t.rfind("#", 0) == 0) {
            current = to_lower(trim(t.substr(t.find_first_not_of('#'))));
        } else if (!t.empty() && !current.empty() && !out.count(current)) {
            out[current] = t;
        }
    }
    return out;
}

std::string simulated_answers_reply(const std::string& prompt) {
    auto profile = sections_of(between(prompt, "Profile:\n", "Questions:\n"));
    auto list = between(prompt, "Questions:\n", "\nReply with");
    std::ostringstream os;
    int n = 0;
    for (const auto& l : split_lines(list)) {
        auto t = trim(l);
        auto dot = t.find(". ");
        if (dot == std::string::npos || dot > 3) continue;
        ++n;
        auto q = to_lower(t.substr(dot + 2));
        std::string section = "background";
        if (q.find("budget") != std::string::npos || q.find("constraint") != std::string::npos) section = "constraints";
        else if (q.find("prefer") != std::string::npos) section = "preferences";
        else if (q.find("where") != std::string::npos) section = "environment";
        else if (q.find("tried") != std::string::npos || q.find("before") != std::string::npos) section = "history";
        if (n % 4 == 0 || q.find("phone") != std::string::npos || !profile.count(section))
            os << n << ". DECLINED\n";
        else
            os << n << ". " << profile[section] << "\n";
    }
    return os.str();
}

// --- C-Prompt rewrite -----------------------------------------------------

std::string c_prompt_reply(const std::string& prompt) {
    auto request = unquote(after(prompt, "Original request: "));
    auto profile = sections_of(between(prompt, "User profile:\n", "\nRequirements:"));
    std::ostringstream os;
    os << request << " For context: ";
    bool first = true;
    for (const auto* s : {"background", "constraints", "preferences", "environment", "history"}) {
        if (!profile.count(s)) continue;
        if (!first) os << ' ';
        os << profile[s];
        first = false;
    }
    return os.str();
}

// --- answers --------------------------------------------------------------

std::string stage_two_reply(const std::string& prompt) {
    auto query = after(prompt, "User request: ");
    std::ostringstream os;
    os << "Based on what you shared, here is a plan tailored to you for: " << trim(query) << "\n\n";
    std::string question;
    int step = 1;
    for (const auto& l : split_lines(prompt)) {
        if (l.rfind("Q", 0) == 0 && l.find(": ") != std::string::npos) {
            question = l.substr(l.find(": ") + 2);
        } else if (l.rfind("A", 0) == 0 && l.find(": ") != std::string::npos) {
            auto answer = l.substr(l.find(": ") + 2);
            if (answer == "not provided")
                os << step++ << ". You did not say (" << question << "), so I assume a typical case and keep the "
                   << "plan flexible.\n";
            else
                os << step++ << ". Because you told me \"" << answer << "\", I suggest adapting the approach to "
                   << "that directly.\n";
        }
    }
    os << "\nReview the plan after four weeks and we can refine it together.\n";
    return os.str();
}

std::string c_answer_reply(const std::string& prompt) {
    return "Given your situation as described, here is specific advice.\n\n1. Work within the limits you stated.\n"
           "2. Follow the style you prefer.\n3. Build on what you tried before.\n\nContext used: " +
           prompt.substr(prompt.find("For context: ") + 13, 160) + "\n";
}

std::string baseline_reply(const std::string& prompt) {
    return "Here is some general guidance for: " + trim(prompt) +
           "\n\n1. Clarify your goals.\n2. Research common options.\n3. Consider consulting a professional.\n";
}

// --- judge ----------------------------------------------------------------

double base_score(const std::string& response) {
    if (response.rfind("Based on what you shared", 0) == 0) return 8.5;
    if (response.rfind("Given your situation", 0) == 0) return 8.1;
    if (response.rfind("Thank you for the detailed description", 0) == 0) return 7.9;
    return 6.0;
}

std::string judge_reply(const std::string& model_name, const std::string& prompt) {
    static const std::array<const char*, 9> dims = {
        "PersonaRecall", "Relevance",   "InformationCompleteness", "Actionability",      "AccuracySafety",
        "Conciseness",   "EmpathyTone", "GuidanceInteractivity",   "ClarityReadability"};
    auto cases = json::parse(between(prompt, "=== CASES (JSON) ===\n", "\n=== END CASES ==="));
    json scores = json::array();
    for (const auto& item : cases.at("items")) {
        const auto case_id = item.at("case_id").get<std::string>();
        const auto industry = item.value("industry", std::string{});
        for (const auto& [label, text] : item.at("responses").items()) {
            const auto response = text.get<std::string>();
            const double base = base_score(response);
            // Industry-level offset keeps rankings informative; the answer
            // quality term dominates.
            const double industry_shift = 0.6 * jitter(model_name + "|ind|" + industry + "|" + response.substr(0, 12));
            json entry = {{"case_id", case_id}, {"response", label}};
            for (const auto* d : dims) {
                double v = base + industry_shift + 0.7 * jitter(model_name + "|" + case_id + "|" + response + "|" + d);
                v = std::clamp(std::round(v * 10.0) / 10.0, 0.0, 10.0);
                entry[d] = v;
            }
            scores.push_back(entry);
        }
    }
    return "```json\n" + json{{"scores", scores}}.dump(2) + "\n```\n";
}

} // namespace

std::string ScriptedTransport::reply(const std::string& model_name, const std::string& prompt) {
    if (prompt.find("=== RUBRIC ===") != std::string::npos) return judge_reply(model_name, prompt);
    if (prompt.rfind("You are building a realistic user profile", 0) == 0) return persona_reply(prompt);
    if (prompt.rfind("You are role-playing the user described", 0) == 0) return simulated_answers_reply(prompt);
    if (prompt.rfind("Rewrite the user's request below", 0) == 0) return c_prompt_reply(prompt);
    if (prompt.find("To identify missing key information you asked me") != std::string::npos)
        return stage_two_reply(prompt);
    if (prompt.find("reorganize and re-present the questions") != std::string::npos) return reask_reply(prompt);
    if (prompt.rfind("User request: ", 0) == 0 && prompt.find("missing key information") != std::string::npos)
        return stage_one_reply(after(prompt, "User request: "));
    if (prompt.find("For context: ") != std::string::npos) return c_answer_reply(prompt);
    return baseline_reply(prompt);
}

gateway::HttpResponse ScriptedTransport::post_chat(const gateway::ModelEndpoint& endpoint, const std::string&,
                                                   const std::string& body) {
    ++calls_;
    auto req = json::parse(body);
    std::string prompt;
    for (const auto& m : req.at("messages")) {
        if (m.at("role") == "user") {
            prompt = m.at("content").get<std::string>();
            break;
        }
    }
    json out = {{"id", "sim-" + sha256_hex(body).substr(0, 12)},
                {"model", endpoint.model_name},
                {"choices", json::array({{{"index", 0},
                                          {"message", {{"role", "assistant"}, {"content", reply(endpoint.model_name, prompt)}}},
                                          {"finish_reason", "stop"}}})}};
    return {200, out.dump()};
}

std::shared_ptr<ScriptedTransport> make_scripted_transport() { return std::make_shared<ScriptedTransport>(); }

} // namespace fata::sim
