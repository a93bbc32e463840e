#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fata/error.hpp"
#include "fata/judge.hpp"
#include "fata/protocol.hpp"
#include "fata/report.hpp"
#include "fata/stats.hpp"

namespace py = pybind11;
using namespace fata;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them into plain dicts and lists.
std::string parse_questions(const std::string& raw, const std::string& case_ref, std::size_t max_questions) {
    protocol::ParseOptions opts;
    opts.max_questions = max_questions;
    return json(protocol::parse_question_set(raw, case_ref, opts)).dump();
}

std::string render_questions(const std::string& question_set_json) {
    return protocol::render_question_list(json::parse(question_set_json).get<protocol::QuestionSet>());
}

std::string f1_prompt(const std::string& query, const std::string& variant) {
    return protocol::render_f1_prompt(query, protocol::builtin_templates(protocol::parse_variant(variant)).ask);
}

std::string f2_prompt(const std::string& query, const std::string& question_set_json, const std::string& answers_json,
                      const std::string& variant) {
    auto qs = json::parse(question_set_json).get<protocol::QuestionSet>();
    auto answers = json::parse(answers_json).get<protocol::UserAnswers>();
    return protocol::render_f2_prompt(query, qs, answers,
                                      protocol::builtin_templates(protocol::parse_variant(variant)).answer);
}

py::dict t_test(const std::vector<double>& x, const std::vector<double>& y) {
    auto r = stats::paired_t_test({{}, x, y});
    py::dict d;
    d["t"] = r.t;
    d["df"] = r.df;
    d["p"] = r.p;
    d["cohens_d"] = r.cohens_d;
    d["mean_diff"] = r.mean_diff;
    d["sd_diff"] = r.sd_diff;
    d["n"] = r.n;
    return d;
}

py::dict stability(const std::string& method, const std::vector<double>& cvs, std::optional<double> baseline) {
    auto r = stats::stability_row(method, cvs, baseline);
    py::dict d;
    d["method"] = r.method;
    d["mean_cv"] = r.mean_cv;
    d["stable_dimensions"] = r.stable_dimensions;
    d["stability_rate"] = r.stability_rate;
    d["cv_reduction"] = r.cv_reduction ? py::cast(*r.cv_reduction) : py::none();
    return d;
}

std::string report_from_scores(const std::string& scores_path, const std::string& grouping) {
    auto records = judge::read_score_file(scores_path);
    auto rep = report::build_report(records, judge::WeightProfile::uniform(), report::parse_grouping(grouping),
                                    {experiment::Arm::B, experiment::Arm::F, experiment::Arm::C});
    return report::report_to_json(rep).dump();
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the fata package";
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    m.def("mean_improvement", &stats::mean_improvement, py::arg("baseline_mean"), py::arg("treatment_mean"));
    m.def("paired_t_test", &t_test, py::arg("x"), py::arg("y"));
    m.def("t_sf", &stats::t_sf, py::arg("t"), py::arg("df"));
    m.def("coefficient_of_variation",
          [](const std::vector<double>& xs) { return stats::coefficient_of_variation(xs); }, py::arg("xs"));
    m.def("kendall_tau",
          [](const std::vector<double>& a, const std::vector<double>& b) { return stats::kendall_tau(a, b); },
          py::arg("a"), py::arg("b"));
    m.def("stability_row", &stability, py::arg("method"), py::arg("cvs"), py::arg("baseline_cv") = py::none());
    m.def("effect_size_label", &stats::effect_size_label, py::arg("d"));

    m.def("batch_sizes", [](std::size_t n) { return judge::batch_sizes(n); }, py::arg("n"));

    m.def("f1_prompt", &f1_prompt, py::arg("query"), py::arg("variant") = "standard");
    m.def("f2_prompt_json", &f2_prompt, py::arg("query"), py::arg("question_set"), py::arg("answers"),
          py::arg("variant") = "standard");
    m.def("parse_questions_json", &parse_questions, py::arg("raw"), py::arg("case_ref") = "",
          py::arg("max_questions") = 10);
    m.def("render_questions_json", &render_questions, py::arg("question_set"));
    m.def("classify_dimension",
          [](const std::string& text) { return std::string(protocol::to_string(protocol::classify_dimension(text))); },
          py::arg("text"));
    m.def("solicits_sensitive_data", [](const std::string& text) { return protocol::solicits_sensitive_data(text); },
          py::arg("text"));
    m.def("component_anchors", [] {
        std::vector<std::string> out;
        for (const auto& a : protocol::component_anchors()) out.emplace_back(a.phrase);
        return out;
    });

    m.def("report_json", &report_from_scores, py::arg("scores_path"), py::arg("grouping") = "industry");
}
