#include <algorithm>
#include <regex>

#include "fata/error.hpp"
#include "fata/protocol.hpp"

namespace fata::protocol {

namespace {

constexpr std::string_view kStandardAsk =
    "User request: {query}\n"
    "\n"
    "To better assist me, before offering advice, please adopt the perspective of an expert in the relevant "
    "field and ask questions to help you identify any missing key information. Please ensure the problem is "
    "structured clearly and expressed concisely, with example guidance. Just like how experts ask users "
    "questions during consultations to gather key information before providing solutions. After I provide "
    "additional information, please then offer a more personalized and practical solution as an expert in "
    "that field. If all key information has already been provided, please directly give the solution. Note: "
    "Maintain a positive attitude, and do not request phone numbers, ID numbers, or other sensitive data.\n";

constexpr std::string_view kSimplificationAsk =
    "User request: {query}\n"
    "\n"
    "To better assist me, before offering advice, please adopt the perspective of an expert in the relevant "
    "field and ask questions to help you identify any missing key information. Keep the structure concise: "
    "one short numbered list, one question per line, and give every question a guiding example. After I "
    "provide additional information, please then offer a more personalized and practical solution as an "
    "expert in that field. If all key information has already been provided, please directly give the "
    "solution. Note: Maintain a positive attitude, and do not request phone numbers, ID numbers, or other "
    "sensitive data.\n";

constexpr std::string_view kDualExpertAsk =
    "User request: {query}\n"
    "\n"
    "To better assist me, before offering advice, please adopt the perspectives of two experts from "
    "complementary specialties of the relevant field. Let each expert ask, in parallel, the questions that "
    "help identify any missing key information, then merge both inquiries into one numbered list without "
    "duplicates, with example guidance. After I provide additional information, please then offer a more "
    "personalized and practical solution that reconciles both experts' views. If all key information has "
    "already been provided, please directly give the solution. Note: Maintain a positive attitude, and do not "
    "request phone numbers, ID numbers, or other sensitive data.\n";

constexpr std::string_view kMinimalistAsk =
    "User request: {query}\n"
    "\n"
    "Before offering advice, please adopt the perspective of an expert in the relevant field. Pose only the "
    "essential questions needed to identify any missing key information, and only when they are really "
    "needed, as a short numbered list with example guidance. After I provide additional information, please "
    "then offer a personalized and practical solution as an expert in that field. If all key information has "
    "already been provided, please directly give the solution. Note: Maintain a positive attitude, and do not "
    "request phone numbers, ID numbers, or other sensitive data.\n";

constexpr std::string_view kAnswer =
    "User request: {query}\n"
    "\n"
    "To identify missing key information you asked me the questions below. My answer follows each question; "
    "an answer marked \"not provided\" is information I could not or chose not to give.\n"
    "\n"
    "{answers}\n"
    "\n"
    "Now, as an expert in the relevant field, please offer a personalized and practical solution based on my "
    "request and the information above. Where information was not provided, reason explicitly with what is "
    "known and state any assumptions you make.\n";

constexpr std::string_view kReask =
    "User request: {query}\n"
    "\n"
    "You asked me the following questions to identify missing key information:\n"
    "\n"
    "{questions}\n"
    "\n"
    "I found them hard to follow. Please reorganize and re-present the questions: adopt the perspective of an "
    "expert in the relevant field, keep them structured clearly and expressed concisely as one numbered list, "
    "with example guidance. Note: Maintain a positive attitude, and do not request phone numbers, ID numbers, "
    "or other sensitive data.\n";

constexpr std::string_view kind_suffix(TemplateKind kind) noexcept {
    switch (kind) {
        case TemplateKind::Ask: return "ask";
        case TemplateKind::Answer: return "answer";
        case TemplateKind::Reask: return "reask";
    }
    return "ask";
}

std::string_view builtin_ask_body(TemplateVariant v) {
    switch (v) {
        case TemplateVariant::Standard: return kStandardAsk;
        case TemplateVariant::Simplification: return kSimplificationAsk;
        case TemplateVariant::DualExpert: return kDualExpertAsk;
        case TemplateVariant::Minimalist: return kMinimalistAsk;
    }
    return kStandardAsk;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

} // namespace

std::string_view to_string(TemplateVariant v) noexcept {
    switch (v) {
        case TemplateVariant::Standard: return "Standard";
        case TemplateVariant::Simplification: return "Simplification";
        case TemplateVariant::DualExpert: return "DualExpert";
        case TemplateVariant::Minimalist: return "Minimalist";
    }
    return "Standard";
}

std::string_view file_stem(TemplateVariant v) noexcept {
    switch (v) {
        case TemplateVariant::Standard: return "standard";
        case TemplateVariant::Simplification: return "simplification";
        case TemplateVariant::DualExpert: return "dual_expert";
        case TemplateVariant::Minimalist: return "minimalist";
    }
    return "standard";
}

TemplateVariant parse_variant(std::string_view name) {
    for (auto v : {TemplateVariant::Standard, TemplateVariant::Simplification, TemplateVariant::DualExpert,
                   TemplateVariant::Minimalist}) {
        if (to_lower(name) == to_lower(to_string(v)) || to_lower(name) == file_stem(v)) return v;
    }
    throw Error(ErrorCode::ConfigError, "unknown template variant '" + std::string(name) + "'");
}

const std::array<ComponentAnchor, 6>& component_anchors() {
    static const std::array<ComponentAnchor, 6> anchors = {{
        {"expert-activation", "adopt the perspective of an expert"},
        {"missing-info-identification", "identify any missing key information"},
        {"scaffolding", "with example guidance"},
        {"consultation-modeling", "experts ask users questions during consultations"},
        {"workflow-logic", "After I provide additional information"},
        {"quality-ethics", "do not request phone numbers, ID numbers"},
    }};
    return anchors;
}

std::vector<std::string> declared_placeholders(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::Ask: return {"query"};
        case TemplateKind::Answer: return {"query", "answers"};
        case TemplateKind::Reask: return {"query", "questions"};
    }
    return {};
}

std::vector<std::string> find_placeholders(std::string_view body) {
    static const std::regex re(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
    std::vector<std::string> names;
    std::string s(body);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it)
        names.push_back((*it)[1].str());
    return names;
}

PromptTemplate make_template(TemplateVariant variant, TemplateKind kind, std::string body) {
    PromptTemplate t;
    t.variant = variant;
    t.kind = kind;
    t.template_id = std::string(file_stem(variant)) + "-" + std::string(kind_suffix(kind)) + "@" +
                    sha256_hex(body).substr(0, 12);
    t.body = std::move(body);
    t.placeholders = declared_placeholders(kind);
    if (kind == TemplateKind::Ask && variant == TemplateVariant::Standard) {
        for (const auto& a : component_anchors()) t.required_components.emplace_back(a.label);
    } else if (kind != TemplateKind::Answer) {
        // Every question-producing template keeps the sensitive-data clause.
        t.required_components.emplace_back("quality-ethics");
    }
    return t;
}

std::vector<std::string> lint_components(const PromptTemplate& t) {
    std::vector<std::string> missing;
    for (const auto& label : t.required_components) {
        auto it = std::find_if(component_anchors().begin(), component_anchors().end(),
                               [&](const ComponentAnchor& a) { return a.label == label; });
        if (it == component_anchors().end()) {
            missing.push_back(label + " (unknown component)");
        } else if (t.body.find(it->phrase) == std::string::npos) {
            missing.push_back(label);
        }
    }
    return missing;
}

std::vector<std::string> validate_template(const PromptTemplate& t) {
    std::vector<std::string> issues;
    for (const auto& name : t.placeholders) {
        auto n = count_occurrences(t.body, "{" + name + "}");
        if (n != 1) issues.push_back("placeholder {" + name + "} occurs " + std::to_string(n) + " times");
    }
    for (const auto& name : find_placeholders(t.body)) {
        if (std::find(t.placeholders.begin(), t.placeholders.end(), name) == t.placeholders.end())
            issues.push_back("undeclared placeholder {" + name + "}");
    }
    for (const auto& label : lint_components(t)) issues.push_back("missing component " + label);
    return issues;
}

TemplateSet builtin_templates(TemplateVariant variant) {
    return TemplateSet{
        make_template(variant, TemplateKind::Ask, std::string(builtin_ask_body(variant))),
        make_template(variant, TemplateKind::Answer, std::string(kAnswer)),
        make_template(variant, TemplateKind::Reask, std::string(kReask)),
    };
}

TemplateSet load_templates(const std::filesystem::path& dir, TemplateVariant variant) {
    auto load = [&](TemplateKind kind, const std::string& file) {
        auto t = make_template(variant, kind, read_text_file(dir / file));
        auto issues = validate_template(t);
        if (!issues.empty()) {
            std::string msg = (dir / file).string() + ":";
            for (const auto& i : issues) msg += " " + i + ";";
            throw Error(ErrorCode::InvalidTemplate, msg);
        }
        return t;
    };
    return TemplateSet{
        load(TemplateKind::Ask, std::string(file_stem(variant)) + ".txt"),
        load(TemplateKind::Answer, "answer.txt"),
        load(TemplateKind::Reask, "reask.txt"),
    };
}

} // namespace fata::protocol
