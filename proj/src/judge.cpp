#include "fata/judge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "fata/error.hpp"

namespace fata::judge {

std::string_view to_string(RubricDimension d) noexcept {
    switch (d) {
        case RubricDimension::PersonaRecall: return "PersonaRecall";
        case RubricDimension::Relevance: return "Relevance";
        case RubricDimension::InformationCompleteness: return "InformationCompleteness";
        case RubricDimension::Actionability: return "Actionability";
        case RubricDimension::AccuracySafety: return "AccuracySafety";
        case RubricDimension::Conciseness: return "Conciseness";
        case RubricDimension::EmpathyTone: return "EmpathyTone";
        case RubricDimension::GuidanceInteractivity: return "GuidanceInteractivity";
        case RubricDimension::ClarityReadability: return "ClarityReadability";
    }
    return "PersonaRecall";
}

std::string_view to_string(Layer l) noexcept {
    switch (l) {
        case Layer::Content: return "Content";
        case Layer::Implementation: return "Implementation";
        case Layer::Interaction: return "Interaction";
    }
    return "Content";
}

RubricDimension parse_rubric_dimension(std::string_view name) {
    for (auto d : kAllDimensions) {
        if (to_string(d) == name) return d;
    }
    throw Error(ErrorCode::ValidationError, "unknown rubric dimension '" + std::string(name) + "'");
}

Layer layer_of(RubricDimension d) noexcept {
    switch (d) {
        case RubricDimension::PersonaRecall:
        case RubricDimension::Relevance:
        case RubricDimension::InformationCompleteness: return Layer::Content;
        case RubricDimension::Actionability:
        case RubricDimension::AccuracySafety:
        case RubricDimension::Conciseness: return Layer::Implementation;
        case RubricDimension::EmpathyTone:
        case RubricDimension::GuidanceInteractivity:
        case RubricDimension::ClarityReadability: return Layer::Interaction;
    }
    return Layer::Content;
}

// ---------------------------------------------------------------------------
// Rubric

Rubric default_rubric() {
    return Rubric{{
        {RubricDimension::PersonaRecall, "Persona Recall",
         "How accurately the response uses the facts in the user's profile and tailors itself to this particular "
         "user rather than a generic one."},
        {RubricDimension::Relevance, "Relevance",
         "Whether the response stays on the user's core need and pain points without drifting into unrelated "
         "material."},
        {RubricDimension::InformationCompleteness, "Information Completeness",
         "Coverage of both the primary and the secondary requirements that the profile implies."},
        {RubricDimension::Actionability, "Actionability",
         "How readily the advice turns into concrete steps this user can carry out in their situation."},
        {RubricDimension::AccuracySafety, "Accuracy & Safety",
         "Professional correctness, adherence to domain standards and attention to risks, so the advice is safe "
         "to follow."},
        {RubricDimension::Conciseness, "Conciseness",
         "Information density: enough detail to act on, without padding or repetition."},
        {RubricDimension::EmpathyTone, "Empathy & Tone",
         "Appropriate emotional support and a professional, reassuring manner that keeps the user engaged."},
        {RubricDimension::GuidanceInteractivity, "Guidance & Interactivity",
         "How well the response invites the user to take part, follow up and work through the problem together."},
        {RubricDimension::ClarityReadability, "Clarity & Readability",
         "Structure, logical flow and ease of understanding."},
    }};
}

Rubric parse_rubric(const json& j) {
    if (!j.is_object() || !j.contains("dimensions") || !j.at("dimensions").is_array())
        throw Error(ErrorCode::ValidationError, "rubric must be an object with a 'dimensions' array");
    std::array<std::optional<RubricEntry>, kDimensionCount> slots;
    for (const auto& item : j.at("dimensions")) {
        auto d = parse_rubric_dimension(item.at("name").get<std::string>());
        if (slots[index_of(d)])
            throw Error(ErrorCode::ValidationError, "rubric dimension " + std::string(to_string(d)) + " appears twice");
        auto desc = trim(item.value("description", std::string{}));
        if (desc.empty())
            throw Error(ErrorCode::ValidationError, "rubric dimension " + std::string(to_string(d)) + " has an empty description");
        slots[index_of(d)] = RubricEntry{d, item.value("label", std::string(to_string(d))), desc};
    }
    Rubric r;
    for (auto d : kAllDimensions) {
        if (!slots[index_of(d)])
            throw Error(ErrorCode::ValidationError, "rubric lacks dimension " + std::string(to_string(d)));
        r.entries.push_back(*slots[index_of(d)]);
    }
    return r;
}

Rubric load_rubric(const std::filesystem::path& path) { return parse_rubric(read_json_file(path)); }

json rubric_to_json(const Rubric& r) {
    json dims = json::array();
    for (const auto& e : r.entries)
        dims.push_back({{"name", to_string(e.dimension)},
                        {"label", e.label},
                        {"layer", to_string(layer_of(e.dimension))},
                        {"description", e.description}});
    return json{{"dimensions", dims}};
}

// ---------------------------------------------------------------------------
// Weights

WeightProfile WeightProfile::uniform() {
    WeightProfile w;
    w.weights.fill(1.0 / static_cast<double>(kDimensionCount));
    return w;
}

void validate(const WeightProfile& w) {
    double sum = 0;
    for (auto d : kAllDimensions) {
        if (!(w.weights[index_of(d)] >= 0))
            throw Error(ErrorCode::ValidationError, "weight for " + std::string(to_string(d)) + " is negative");
        sum += w.weights[index_of(d)];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::ValidationError, "weights sum to " + std::to_string(sum) + ", not 1");
}

WeightProfile parse_weights(const json& j) {
    if (j.is_string() && j.get<std::string>() == "uniform") return WeightProfile::uniform();
    if (j.is_object() && j.contains("weights")) return parse_weights(j.at("weights"));
    if (!j.is_object()) throw Error(ErrorCode::ValidationError, "weights must be an object or \"uniform\"");
    WeightProfile w;
    std::set<std::string> seen;
    for (const auto& [key, value] : j.items()) {
        auto d = parse_rubric_dimension(key);
        if (!value.is_number()) throw Error(ErrorCode::ValidationError, "weight for " + key + " is not a number");
        w.weights[index_of(d)] = value.get<double>();
        seen.insert(key);
    }
    if (seen.size() != kDimensionCount)
        throw Error(ErrorCode::ValidationError, "weights must name all nine dimensions");
    validate(w);
    return w;
}

WeightProfile load_weights(const std::filesystem::path& path) { return parse_weights(read_json_file(path)); }

double weighted_total(const DimensionScores& dims, const WeightProfile& w) {
    double total = 0;
    for (std::size_t i = 0; i < kDimensionCount; ++i) total += w.weights[i] * dims.values[i];
    return total;
}

// ---------------------------------------------------------------------------
// Score records

json to_json(const ScoreRecord& r) {
    json dims = json::object();
    for (auto d : kAllDimensions) dims[std::string(to_string(d))] = r.dims[d];
    return json{{"case_id", r.case_ref},   {"arm", experiment::to_string(r.arm)}, {"judge_id", r.judge_id},
                {"dims", dims},            {"weighted_total", r.weighted_total}, {"industry", r.industry}};
}

ScoreRecord score_record_from_json(const json& j) {
    ScoreRecord r;
    try {
        r.case_ref = j.at("case_id").get<std::string>();
        r.arm = experiment::parse_arm(j.at("arm").get<std::string>());
        r.judge_id = j.at("judge_id").get<std::string>();
        for (auto d : kAllDimensions) r.dims[d] = j.at("dims").at(std::string(to_string(d))).get<double>();
        r.weighted_total = j.value("weighted_total", 0.0);
        r.industry = j.value("industry", std::string{});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("score record: ") + e.what());
    }
    for (auto d : kAllDimensions) {
        if (!(r.dims[d] >= kMinScore && r.dims[d] <= kMaxScore))
            throw Error(ErrorCode::RangeError, r.case_ref + "/" + std::string(experiment::to_string(r.arm)) + "/" +
                                                   std::string(to_string(d)) + " is outside [0, 10]");
    }
    return r;
}

std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open score file " + path.string());
    std::vector<ScoreRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(score_record_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Batching

std::vector<JudgeCase> collect_judge_cases(const corpus::Corpus& corpus, const corpus::ArtifactStore& artifacts,
                                           const experiment::ResultStore& results) {
    std::vector<JudgeCase> out;
    for (const auto& c : corpus.cases) {
        JudgeCase jc{c.case_id, c.industry, c.scenario, c.b_prompt, {}, {}};
        if (c.persona)
            jc.persona = *c.persona;
        else if (auto p = artifacts.persona(c.case_id))
            jc.persona = *p;
        for (auto arm : experiment::kAllArms) {
            if (auto a = results.load(c.case_id, arm)) jc.answers[arm] = a->answer_text;
        }
        out.push_back(std::move(jc));
    }
    return out;
}

Arm unblind(const BatchItem& item, char label) {
    for (std::size_t i = 0; i < kBlindLabels.size(); ++i) {
        if (kBlindLabels[i] == label) return item.unblinding[i];
    }
    throw Error(ErrorCode::ScoreParseError, std::string("unknown response label '") + label + "'");
}

char blind(const BatchItem& item, Arm arm) {
    for (std::size_t i = 0; i < item.unblinding.size(); ++i) {
        if (item.unblinding[i] == arm) return kBlindLabels[i];
    }
    throw Error(ErrorCode::ValidationError, "arm missing from unblinding map");
}

std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t min_size, std::size_t max_size) {
    if (min_size == 0 || min_size > max_size) throw Error(ErrorCode::ValidationError, "invalid batch size range");
    std::vector<std::size_t> sizes;
    if (n == 0) return sizes;
    std::size_t k = (n + max_size - 1) / max_size;
    if (k * min_size <= n) {
        std::size_t extra = n - k * min_size;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t add = std::min(max_size - min_size, extra);
            sizes.push_back(min_size + add);
            extra -= add;
        }
        return sizes;
    }
    sizes.assign(n / max_size, max_size);
    sizes.push_back(n % max_size);
    return sizes;
}

namespace {

// Fisher-Yates over mt19937_64 draws; both are fully specified, so a seed gives
// the same permutation on every platform.
std::array<Arm, 3> draw_permutation(std::mt19937_64& rng) {
    std::array<Arm, 3> p = {Arm::B, Arm::F, Arm::C};
    for (std::size_t i = p.size() - 1; i > 0; --i) {
        auto j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(p[i], p[j]);
    }
    return p;
}

} // namespace

std::vector<EvalBatch> make_batches(const std::vector<JudgeCase>& cases, std::uint64_t seed, std::size_t min_size,
                                    std::size_t max_size) {
    std::vector<std::string> gaps;
    for (const auto& c : cases) {
        for (auto arm : experiment::kAllArms) {
            if (!c.answers.count(arm)) gaps.push_back(c.case_id + "/" + std::string(experiment::to_string(arm)));
        }
    }
    if (!gaps.empty()) {
        std::string msg = "no answer for";
        for (const auto& g : gaps) msg += " " + g;
        throw Error(ErrorCode::MissingArm, msg);
    }

    std::vector<EvalBatch> batches;
    std::size_t next = 0;
    auto sizes = batch_sizes(cases.size(), min_size, max_size);
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        EvalBatch batch;
        char id[32];
        std::snprintf(id, sizeof id, "batch-%03zu", b + 1);
        batch.batch_id = id;
        batch.seed = seed + b;
        std::mt19937_64 rng(batch.seed);
        for (std::size_t k = 0; k < sizes[b]; ++k, ++next) {
            const auto& c = cases[next];
            BatchItem item{c.case_id, c.industry, c.scenario, c.b_prompt, c.persona, {}, draw_permutation(rng)};
            for (std::size_t l = 0; l < 3; ++l) item.responses[l] = c.answers.at(item.unblinding[l]);
            batch.items.push_back(std::move(item));
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

ordered_json batch_to_json(const EvalBatch& b, bool include_map) {
    ordered_json items = ordered_json::array();
    for (const auto& it : b.items) {
        ordered_json responses = ordered_json::object();
        ordered_json map = ordered_json::object();
        for (std::size_t l = 0; l < 3; ++l) {
            std::string label(1, kBlindLabels[l]);
            responses[label] = it.responses[l];
            map[label] = experiment::to_string(it.unblinding[l]);
        }
        ordered_json j = {{"case_id", it.case_id},
                          {"industry", it.industry},
                          {"scenario", it.scenario},
                          {"persona", corpus::persona_to_json(it.persona)},
                          {"b_prompt", it.b_prompt},
                          {"responses", responses}};
        if (include_map) j["map"] = map;
        items.push_back(std::move(j));
    }
    ordered_json out = {{"batch_id", b.batch_id}};
    if (include_map) out["seed"] = b.seed;
    out["items"] = items;
    return out;
}

EvalBatch batch_from_json(const ordered_json& j) {
    EvalBatch b;
    try {
        b.batch_id = j.at("batch_id").get<std::string>();
        b.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& it : j.at("items")) {
            BatchItem item;
            item.case_id = it.at("case_id").get<std::string>();
            item.industry = it.value("industry", std::string{});
            item.scenario = it.value("scenario", std::string{});
            item.b_prompt = it.at("b_prompt").get<std::string>();
            item.persona = corpus::persona_from_json(it.at("persona"));
            std::set<Arm> arms;
            for (std::size_t l = 0; l < 3; ++l) {
                std::string label(1, kBlindLabels[l]);
                item.responses[l] = it.at("responses").at(label).get<std::string>();
                item.unblinding[l] = experiment::parse_arm(it.at("map").at(label).get<std::string>());
                arms.insert(item.unblinding[l]);
            }
            if (arms.size() != 3) throw Error(ErrorCode::SchemaError, item.case_id + ": map is not a permutation of B/F/C");
            b.items.push_back(std::move(item));
        }
    } catch (const ordered_json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("batch: ") + e.what());
    }
    return b;
}

// ---------------------------------------------------------------------------
// Judge prompt and parsing

std::string render_judge_prompt(const EvalBatch& batch, const Rubric& rubric) {
    const auto n = batch.items.size();
    std::ostringstream os;
    os << "You are an impartial expert evaluator of assistant responses.\n"
       << "Each case below gives a user's profile (persona), background on their industry and scenario, the "
          "user's original request, and three responses labelled X, Y and Z. Score every response on each of the "
          "nine rubric dimensions using a 0-10 scale, where 0 means the response completely fails the dimension and "
          "10 means it is flawless. Judge each response against the user's full profile.\n\n"
       << "=== RUBRIC ===\n";
    for (const auto& e : rubric.entries)
        os << "- " << to_string(e.dimension) << " [" << to_string(layer_of(e.dimension)) << " layer]: " << e.description
           << "\n";
    os << "=== END RUBRIC ===\n\n"
       << "=== CASES (JSON) ===\n"
       << batch_to_json(batch, false).dump(2) << "\n"
       << "=== END CASES ===\n\n"
       << "Output format: reply with one ```json fenced code block holding an object {\"scores\": [...]} with one "
          "entry per case and response label, shaped like\n"
       << "{\"case_id\": \"<case_id>\", \"response\": \"X\"";
    for (const auto& e : rubric.entries) os << ", \"" << to_string(e.dimension) << "\": <0-10>";
    os << "}\n"
       << "This batch has " << n << " cases, so the block must contain " << n << " x 3 = " << n * 3 << " entries and "
       << n << " x 3 x 9 = " << n * 3 * 9 << " numeric scores.\n";
    return os.str();
}

namespace {

std::optional<json> extract_score_block(std::string_view text) {
    std::string s(text);
    auto fence = s.find("```json");
    if (fence != std::string::npos) {
        auto start = s.find('\n', fence);
        auto end = start == std::string::npos ? std::string::npos : s.find("```", start);
        if (end != std::string::npos) {
            try {
                return json::parse(s.substr(start + 1, end - start - 1));
            } catch (const json::parse_error&) {
            }
        }
    }
    // Unfenced reply: the outermost object, else the outermost array.
    for (auto [open, close] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
        auto first = s.find(open);
        auto last = s.rfind(close);
        if (first == std::string::npos || last == std::string::npos || last < first) continue;
        try {
            return json::parse(s.substr(first, last - first + 1));
        } catch (const json::parse_error&) {
        }
    }
    return std::nullopt;
}

} // namespace

std::vector<ScoreRecord> parse_scores(std::string_view judge_text, const EvalBatch& batch, std::string_view judge_id,
                                      const WeightProfile& weights) {
    auto block = extract_score_block(judge_text);
    if (!block) throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": no JSON score block");
    const json* entries = nullptr;
    if (block->is_object() && block->contains("scores") && block->at("scores").is_array())
        entries = &block->at("scores");
    else if (block->is_array())
        entries = &*block;
    if (entries == nullptr) throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": score block lacks a 'scores' array");

    // (item index, label index) -> scores
    std::map<std::pair<std::size_t, std::size_t>, DimensionScores> cells;
    for (const auto& e : *entries) {
        if (!e.is_object() || !e.contains("case_id") || !e.contains("response") || !e.at("case_id").is_string() ||
            !e.at("response").is_string())
            throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": entry without case_id/response");
        auto case_id = e.at("case_id").get<std::string>();
        auto label = e.at("response").get<std::string>();
        auto item_it = std::find_if(batch.items.begin(), batch.items.end(),
                                    [&](const BatchItem& it) { return it.case_id == case_id; });
        if (item_it == batch.items.end())
            throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": unknown case '" + case_id + "'");
        auto label_it = std::find(kBlindLabels.begin(), kBlindLabels.end(), label.size() == 1 ? label[0] : '\0');
        if (label_it == kBlindLabels.end())
            throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": unknown response label '" + label + "'");
        auto key = std::make_pair(static_cast<std::size_t>(item_it - batch.items.begin()),
                                  static_cast<std::size_t>(label_it - kBlindLabels.begin()));
        if (cells.count(key))
            throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": duplicate entry for " + case_id + "/" + label);
        DimensionScores dims;
        for (auto d : kAllDimensions) {
            auto name = std::string(to_string(d));
            if (!e.contains(name) || !e.at(name).is_number())
                throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": " + case_id + "/" + label + " lacks " + name);
            double v = e.at(name).get<double>();
            if (!(v >= kMinScore && v <= kMaxScore))
                throw Error(ErrorCode::RangeError, case_id + "/" + label + "/" + name + " = " + e.at(name).dump() +
                                                       " is outside [0, 10]");
            dims[d] = v;
        }
        cells.emplace(key, dims);
    }
    if (cells.size() != batch.items.size() * 3)
        throw Error(ErrorCode::ScoreParseError, batch.batch_id + ": expected " + std::to_string(batch.items.size() * 3) +
                                                    " entries, got " + std::to_string(cells.size()));

    std::vector<ScoreRecord> out;
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
        const auto& item = batch.items[i];
        for (auto arm : experiment::kAllArms) {
            auto label_index = static_cast<std::size_t>(
                std::find(kBlindLabels.begin(), kBlindLabels.end(), blind(item, arm)) - kBlindLabels.begin());
            ScoreRecord r;
            r.case_ref = item.case_id;
            r.arm = arm;
            r.judge_id = std::string(judge_id);
            r.dims = cells.at({i, label_index});
            r.weighted_total = weighted_total(r.dims, weights);
            r.industry = item.industry;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<ScoreRecord> evaluate_batch(const gateway::Gateway& judge, const EvalBatch& batch, const Rubric& rubric,
                                        const WeightProfile& weights) {
    auto req = gateway::user_request(render_judge_prompt(batch, rubric));
    auto first = judge.complete(req);
    const auto& judge_id = judge.endpoint().endpoint_id;
    try {
        return parse_scores(first.text, batch, judge_id, weights);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ScoreParseError) throw;
        auto retry = req;
        retry.messages.push_back({"assistant", first.text});
        retry.messages.push_back({"user", "Your reply could not be read (" + e.detail() +
                                              "). Reply again with only the ```json block in the required format."});
        auto second = judge.complete(retry);
        return parse_scores(second.text, batch, judge_id, weights);
    }
}

Aggregation aggregate_judges(const std::vector<ScoreRecord>& records, const WeightProfile& weights) {
    struct Acc {
        std::string industry;
        std::array<double, kDimensionCount> sum{};
        std::size_t n = 0;
    };
    std::map<std::pair<std::string, Arm>, Acc> acc;
    for (const auto& r : records) {
        auto& a = acc[{r.case_ref, r.arm}];
        if (a.industry.empty()) a.industry = r.industry;
        for (std::size_t i = 0; i < kDimensionCount; ++i) a.sum[i] += r.dims.values[i];
        ++a.n;
    }
    Aggregation out;
    out.per_judge = records;
    for (const auto& [key, a] : acc) {
        AggregateScore s;
        s.case_ref = key.first;
        s.arm = key.second;
        s.industry = a.industry;
        for (std::size_t i = 0; i < kDimensionCount; ++i) s.mean.values[i] = a.sum[i] / static_cast<double>(a.n);
        s.weighted_total = weighted_total(s.mean, weights);
        s.judges = a.n;
        out.means.push_back(std::move(s));
    }
    return out;
}

} // namespace fata::judge
