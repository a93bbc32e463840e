#pragma once

// Multi-judge rubric evaluation: blinded 8-9 case batches, the nine-dimension
// rubric prompt, score parsing with unblinding and cross-judge aggregation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fata/corpus.hpp"
#include "fata/experiment.hpp"
#include "fata/gateway.hpp"

namespace fata::judge {

using experiment::Arm;

enum class RubricDimension {
    PersonaRecall,
    Relevance,
    InformationCompleteness,
    Actionability,
    AccuracySafety,
    Conciseness,
    EmpathyTone,
    GuidanceInteractivity,
    ClarityReadability,
};
inline constexpr std::size_t kDimensionCount = 9;
inline constexpr std::array<RubricDimension, kDimensionCount> kAllDimensions = {
    RubricDimension::PersonaRecall,  RubricDimension::Relevance,   RubricDimension::InformationCompleteness,
    RubricDimension::Actionability,  RubricDimension::AccuracySafety, RubricDimension::Conciseness,
    RubricDimension::EmpathyTone,    RubricDimension::GuidanceInteractivity, RubricDimension::ClarityReadability};

enum class Layer { Content, Implementation, Interaction };

std::string_view to_string(RubricDimension d) noexcept;
std::string_view to_string(Layer l) noexcept;
RubricDimension parse_rubric_dimension(std::string_view name);
Layer layer_of(RubricDimension d) noexcept;
constexpr std::size_t index_of(RubricDimension d) noexcept { return static_cast<std::size_t>(d); }

struct RubricEntry {
    RubricDimension dimension;
    std::string label;
    std::string description;
};

/// Always nine entries in kAllDimensions order.
struct Rubric {
    std::vector<RubricEntry> entries;
};

Rubric default_rubric();
/// {"dimensions": [{"name", "label"?, "description"}...]}; throws ValidationError
/// unless all nine dimensions appear exactly once with a non-empty description.
Rubric parse_rubric(const json& j);
Rubric load_rubric(const std::filesystem::path& path);
json rubric_to_json(const Rubric& r);

struct DimensionScores {
    std::array<double, kDimensionCount> values{};

    double operator[](RubricDimension d) const noexcept { return values[index_of(d)]; }
    double& operator[](RubricDimension d) noexcept { return values[index_of(d)]; }
    bool operator==(const DimensionScores&) const = default;
};

inline constexpr double kMinScore = 0.0;
inline constexpr double kMaxScore = 10.0;

struct WeightProfile {
    std::array<double, kDimensionCount> weights{};

    static WeightProfile uniform();
};

/// Throws ValidationError on a negative weight or a sum off 1 by more than 1e-9.
void validate(const WeightProfile& w);
/// JSON object dimension-name -> weight, or the string "uniform".
WeightProfile parse_weights(const json& j);
WeightProfile load_weights(const std::filesystem::path& path);

double weighted_total(const DimensionScores& dims, const WeightProfile& w);

struct ScoreRecord {
    std::string case_ref;
    Arm arm = Arm::B;
    std::string judge_id;
    DimensionScores dims;
    double weighted_total = 0.0;
    std::string industry;
};

json to_json(const ScoreRecord& r);
ScoreRecord score_record_from_json(const json& j);
std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path);
void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);

/// Everything the judge sees about one case, before blinding.
struct JudgeCase {
    std::string case_id;
    std::string industry;
    std::string scenario;
    std::string b_prompt;
    corpus::Persona persona;
    std::map<Arm, std::string> answers;
};

/// Joins corpus cases with their persona artifacts and arm answers. Missing
/// arms are left out of JudgeCase::answers and reported by make_batches.
std::vector<JudgeCase> collect_judge_cases(const corpus::Corpus& corpus, const corpus::ArtifactStore& artifacts,
                                           const experiment::ResultStore& results);

inline constexpr std::array<char, 3> kBlindLabels = {'X', 'Y', 'Z'};

struct BatchItem {
    std::string case_id;
    std::string industry;
    std::string scenario;
    std::string b_prompt;
    corpus::Persona persona;
    std::array<std::string, 3> responses;   // by label X, Y, Z
    std::array<Arm, 3> unblinding;            // label index -> arm
};

struct EvalBatch {
    std::string batch_id;
    std::uint64_t seed = 0;
    std::vector<BatchItem> items;
};

Arm unblind(const BatchItem& item, char label);
char blind(const BatchItem& item, Arm arm);

/// Sizes for n cases: the fewest batches that all fit [min_size, max_size],
/// larger batches first; when no exact split exists, full max_size batches and
/// one smaller final batch.
std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t min_size = 8, std::size_t max_size = 9);

/// Throws MissingArm naming every (case, arm) without an answer.
std::vector<EvalBatch> make_batches(const std::vector<JudgeCase>& cases, std::uint64_t seed, std::size_t min_size = 8,
                                    std::size_t max_size = 9);

/// Batch file layout; `include_map=false` gives the blinded view shown to judges.
ordered_json batch_to_json(const EvalBatch& b, bool include_map = true);
EvalBatch batch_from_json(const ordered_json& j);

std::string render_judge_prompt(const EvalBatch& batch, const Rubric& rubric);

/// Extracts the JSON score block, unblinds labels and recomputes weighted
/// totals. Throws ScoreParseError for a missing or incomplete block and
/// RangeError (naming case, label and dimension) for a score outside [0, 10].
std::vector<ScoreRecord> parse_scores(std::string_view judge_text, const EvalBatch& batch, std::string_view judge_id,
                                      const WeightProfile& weights = WeightProfile::uniform());

/// One judge call with a single reprompt on ScoreParseError.
std::vector<ScoreRecord> evaluate_batch(const gateway::Gateway& judge, const EvalBatch& batch, const Rubric& rubric,
                                        const WeightProfile& weights = WeightProfile::uniform());

struct AggregateScore {
    std::string case_ref;
    Arm arm = Arm::B;
    std::string industry;
    DimensionScores mean;
    double weighted_total = 0.0;
    std::size_t judges = 0;
};

struct Aggregation {
    std::vector<AggregateScore> means;   // one per (case, arm), sorted
    std::vector<ScoreRecord> per_judge;  // inputs, untouched
};

Aggregation aggregate_judges(const std::vector<ScoreRecord>& records,
                             const WeightProfile& weights = WeightProfile::uniform());

} // namespace fata::judge
