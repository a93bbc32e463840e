#pragma once

// Benchmark corpus: case loading and validation, persona synthesis, simulated
// user answers, expert (C-Prompt) reformulation and the per-case artifact store.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fata/gateway.hpp"
#include "fata/protocol.hpp"

namespace fata::corpus {

inline constexpr std::array<std::string_view, 5> kRequiredSections = {"background", "constraints", "preferences",
                                                                      "environment", "history"};

struct Persona {
    /// Section name (lowercase) to text, in document order.
    std::vector<std::pair<std::string, std::string>> sections;

    const std::string* section(std::string_view name) const;
    /// Required sections that are absent or blank.
    std::vector<std::string> missing_sections() const;
    bool complete() const { return missing_sections().empty(); }
    /// "## name\ntext\n" blocks, the same protocol the generator is asked for.
    std::string render() const;

    bool operator==(const Persona&) const = default;
};

/// Splits "## header" delimited text into sections. Text before the first
/// header is dropped.
Persona parse_persona_sections(std::string_view text);

struct CaseSpec {
    std::string case_id;
    std::string industry;
    std::string scenario;
    std::string b_prompt;
    std::optional<Persona> persona;
};

struct Manifest {
    /// industry -> scenario -> case count
    std::map<std::string, std::map<std::string, int>> counts;
    std::size_t total() const;
};

struct Corpus {
    std::vector<CaseSpec> cases;
    Manifest manifest;

    const CaseSpec* find(std::string_view case_id) const;
};

struct CPrompt {
    std::string case_ref;
    std::string text;
};

inline constexpr int kStrictIndustries = 12;
inline constexpr int kStrictScenariosPerIndustry = 5;
inline constexpr int kStrictVariantsPerScenario = 5;

struct LoadOptions {
    bool strict_shape = false;
    /// When set, every case's industry must be one of these.
    std::optional<std::vector<std::string>> industries;
};

/// Corpus file: JSON array of {case_id, industry, scenario, b_prompt, persona?}.
/// Throws SchemaError (message starts with a JSON pointer) or, in strict mode,
/// ShapeError listing every industry/scenario deficit.
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {});
Corpus parse_corpus(const ordered_json& doc, const LoadOptions& opts = {});
ordered_json corpus_to_json(const Corpus& corpus);

/// Default industry manifest: JSON array of industry names.
std::vector<std::string> load_industry_manifest(const std::filesystem::path& path);

std::string persona_prompt(const CaseSpec& c);
std::string simulate_answers_prompt(const Persona& persona, const protocol::QuestionSet& qs);
std::string c_prompt_instruction(const CaseSpec& c, const Persona& persona);

/// Transcripts of every gateway call an operation made are appended to `log`
/// when it is non-null.
using TranscriptLog = std::vector<gateway::Transcript>;

/// Returns the case's own persona untouched when it has one. Otherwise asks
/// the generator for the five-section profile, reprompting once on a
/// malformed reply; throws GenerationParseError on a second failure.
Persona synthesize_persona(const CaseSpec& c, const gateway::Gateway& gw, TranscriptLog* log = nullptr);

/// Answers every question from the persona only; questions the profile cannot
/// answer end up in `declined`.
protocol::UserAnswers simulate_user_answers(const Persona& persona, const protocol::QuestionSet& qs,
                                            const gateway::Gateway& gw, TranscriptLog* log = nullptr);

/// Parses "<n>. <answer>" replies. Unnumbered replies yield nullopt.
std::optional<protocol::UserAnswers> parse_simulated_answers(std::string_view reply, const protocol::QuestionSet& qs);

CPrompt build_c_prompt(const CaseSpec& c, const Persona& persona, const gateway::Gateway& gw,
                       TranscriptLog* log = nullptr);

enum class ArtifactKind { Persona, Questions, Answers, CPrompt };
std::string_view to_string(ArtifactKind k) noexcept;

/// artifacts/{case_id}/{persona,questions,answers,cprompt}.json
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path path(std::string_view case_id, ArtifactKind kind) const;
    bool has(std::string_view case_id, ArtifactKind kind) const;

    std::optional<Persona> persona(std::string_view case_id) const;
    std::optional<protocol::QuestionSet> questions(std::string_view case_id) const;
    std::optional<protocol::UserAnswers> answers(std::string_view case_id) const;
    std::optional<CPrompt> cprompt(std::string_view case_id) const;
    /// Transcript hashes recorded alongside an artifact (empty when absent).
    std::vector<std::string> transcript_hashes(std::string_view case_id, ArtifactKind kind) const;

    void put_persona(std::string_view case_id, const Persona& p, const std::vector<std::string>& hashes);
    void put_questions(std::string_view case_id, const protocol::QuestionSet& qs, const std::string& template_id,
                       const std::vector<std::string>& hashes, const std::string& created_at);
    /// Timestamp of the stage-1 transcript a questions artifact came from.
    std::string questions_created_at(std::string_view case_id) const;
    void put_answers(std::string_view case_id, const protocol::UserAnswers& a, const std::vector<std::string>& hashes);
    void put_cprompt(std::string_view case_id, const CPrompt& c, const std::vector<std::string>& hashes);

private:
    void write(std::string_view case_id, ArtifactKind kind, const ordered_json& doc);
    std::mutex& lock_for(std::string_view case_id);

    std::filesystem::path root_;
    std::array<std::mutex, 16> stripes_;
};

struct BuildOptions {
    std::size_t concurrency = 4;
    protocol::ParseOptions parse;
};

struct BuildFailure {
    std::string case_id;
    std::string stage; // persona | F1 | F1-parse | answers | cprompt
    std::string error;
};

struct BuildSummary {
    std::size_t cases = 0;
    std::size_t generated = 0; // artifacts written by this run
    std::size_t skipped = 0;   // artifacts already present
    std::vector<BuildFailure> failures;
};

/// Runs persona -> F1 questions -> simulated answers -> C-Prompt for every case,
/// skipping artifacts that already exist. Cases run in parallel.
BuildSummary build_corpus(const Corpus& corpus, const gateway::Gateway& gw, ArtifactStore& store,
                          const protocol::TemplateSet& templates, const BuildOptions& opts = {});

/// Persona as a JSON object whose key order is the section order.
ordered_json persona_to_json(const Persona& p);
Persona persona_from_json(const ordered_json& j);

} // namespace fata::corpus
