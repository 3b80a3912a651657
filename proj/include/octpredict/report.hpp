#pragma once

#include <string>
#include <vector>

#include "octpredict/metrics.hpp"

namespace oct {

// Aggregated results for one model configuration, on the percent scale.
struct ModelReportRow {
    std::string model;
    std::string config;  // input modality or preset detail, free-form
    AggregateStat f1;
    AggregateStat auroc;
    AggregateStat recall;
    AggregateStat specificity;
};

// Markdown table, one line per model: mean ± ci95 with the best run in
// parentheses. The footer states the parenthesized-value interpretation.
std::string render_markdown(const std::vector<ModelReportRow>& rows);

// Long-format CSV: model,config,metric,mean,ci95,max,n_runs.
std::string render_csv(const std::vector<ModelReportRow>& rows);

// Grouped bar chart (F1 and AUROC per model) with CI whiskers. Deterministic
// byte output; SVG 1.1, no external resources.
std::string render_figure_svg(const std::vector<ModelReportRow>& rows);

// Horizontal bar chart of feature-importance percentages.
std::string render_importance_svg(const std::vector<std::string>& names, const std::vector<double>& percentages);

}  // namespace oct
