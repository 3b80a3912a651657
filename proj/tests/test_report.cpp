#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "octpredict/report.hpp"

using namespace oct;

namespace {

AggregateStat stat(double mean, double ci, double max, int n = 10) { return {mean, ci, max, n}; }

// Published comparison-table values, used purely as formatting fixtures.
std::vector<ModelReportRow> table1_fixture() {
    std::vector<ModelReportRow> rows;
    rows.push_back({"Regression", "clinical",
                    stat(75.0, 0.0, 75.0), stat(75.0, 0.0, 75.0),
                    stat(66.7, 0.0, 66.7), stat(87.5, 0.0, 87.5)});
    rows.push_back({"CNN", "oct",
                    stat(61.5, 23.7, 77.8), stat(72.8, 14.6, 87.5),
                    stat(57.8, 27.5, 77.8), stat(67.5, 25.2, 87.5)});
    rows.push_back({"Regression + CNN", "clinical+cnn",
                    stat(77.8, 4.3, 88.9), stat(74.9, 7.0, 86.1),
                    stat(71.1, 8.2, 88.9), stat(81.2, 9.5, 100.0)});
    return rows;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1))
        ++count;
    return count;
}

}  // namespace

TEST_CASE("markdown table matches the golden file byte for byte") {
    const std::string golden = read_file(std::string(GOLDEN_DIR) + "/table1_report.md");
    CHECK(render_markdown(table1_fixture()) == golden);
}

TEST_CASE("markdown layout") {
    const std::string md = render_markdown(table1_fixture());
    CHECK(md.find("| Model | Config | F1 | AUROC | Recall | Specificity |") != std::string::npos);
    CHECK(md.find("61.5 ± 23.7 (77.8)") != std::string::npos);
    CHECK(md.find("75.0 ± 0.0 (75.0)") != std::string::npos);
    CHECK(md.find("best single run") != std::string::npos);  // footer explains the parentheses
}

TEST_CASE("csv uses the long schema") {
    const std::string csv = render_csv(table1_fixture());
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "model,config,metric,mean,ci95,max,n_runs");
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3 * 4);  // one line per model and metric
    CHECK(csv.find("CNN,oct,auroc,72.800000,14.600000,87.500000,10") != std::string::npos);
}

TEST_CASE("figure has one bar pair per model and whiskers") {
    std::vector<ModelReportRow> nine;
    for (int i = 0; i < 9; ++i) {
        ModelReportRow r{"M" + std::to_string(i), "cfg",
                         stat(50.0 + i, 5.0, 60.0 + i), stat(55.0 + i, 4.0, 65.0 + i),
                         stat(0, 0, 0), stat(0, 0, 0)};
        nine.push_back(r);
    }
    const std::string svg = render_figure_svg(nine);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_occurrences(svg, "class=\"bar\"") == 18);
    CHECK(count_occurrences(svg, "http://") == 1);  // only the xmlns namespace, no external resources
    CHECK(render_figure_svg(nine) == svg);            // byte determinism

    std::vector<ModelReportRow> one = {nine[0]};
    const std::string single = render_figure_svg(one);
    CHECK(count_occurrences(single, "class=\"bar\"") == 2);
}

TEST_CASE("empty inputs are rejected") {
    CHECK_THROWS(render_markdown({}));
    CHECK_THROWS(render_csv({}));
    CHECK_THROWS(render_figure_svg({}));
}

TEST_CASE("importance chart includes every feature name") {
    const std::vector<std::string> names = {"age", "mh_duration", "elevated_edge", "pseudophakic",
                                            "baseline_va"};
    const std::vector<double> pct = {6.1, 7.6, 19.4, 14.9, 52.0};
    const std::string svg = render_importance_svg(names, pct);
    for (const auto& n : names) CHECK(svg.find(n) != std::string::npos);
    CHECK(render_importance_svg(names, pct) == svg);
    CHECK_THROWS(render_importance_svg({"a"}, {1.0, 2.0}));
}
