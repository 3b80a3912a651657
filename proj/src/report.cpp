#include "octpredict/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace oct {

namespace {

std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string cell(const AggregateStat& s) {
    return fmt1(s.mean) + " ± " + fmt1(s.ci_half_width) + " (" + fmt1(s.max) + ")";
}

void check_rows(const std::vector<ModelReportRow>& rows, const char* who) {
    if (rows.empty()) throw std::invalid_argument(std::string(who) + ": no results to render");
}

const char* kMetricNames[4] = {"f1", "auroc", "recall", "specificity"};

const AggregateStat& metric_of(const ModelReportRow& r, int m) {
    switch (m) {
        case 0: return r.f1;
        case 1: return r.auroc;
        case 2: return r.recall;
        default: return r.specificity;
    }
}

}  // namespace

std::string render_markdown(const std::vector<ModelReportRow>& rows) {
    check_rows(rows, "render_markdown");
    std::string out;
    out += "| Model | Config | F1 | AUROC | Recall | Specificity |\n";
    out += "|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        out += "| " + r.model + " | " + r.config + " | " + cell(r.f1) + " | " + cell(r.auroc) + " | " +
               cell(r.recall) + " | " + cell(r.specificity) + " |\n";
    }
    out += "\nValues are mean ± 95% CI over n=" + std::to_string(rows[0].f1.n_runs) +
           " runs; the parenthesized value is the best single run.\n";
    return out;
}

std::string render_csv(const std::vector<ModelReportRow>& rows) {
    check_rows(rows, "render_csv");
    std::string out = "model,config,metric,mean,ci95,max,n_runs\n";
    for (const auto& r : rows) {
        for (int m = 0; m < 4; ++m) {
            const AggregateStat& s = metric_of(r, m);
            out += r.model + "," + r.config + "," + kMetricNames[m] + "," + fmt6(s.mean) + "," +
                   fmt6(s.ci_half_width) + "," + fmt6(s.max) + "," + std::to_string(s.n_runs) + "\n";
        }
    }
    return out;
}

std::string render_figure_svg(const std::vector<ModelReportRow>& rows) {
    check_rows(rows, "render_figure_svg");
    // layout: per model a group of two bars (F1, AUROC), y axis 0..100
    const int bar_w = 22, gap = 8, group_gap = 26;
    const int margin_l = 50, margin_r = 20, margin_t = 30, margin_b = 70;
    const int plot_h = 300;
    const int group_w = 2 * bar_w + gap;
    const int width = margin_l + margin_r + static_cast<int>(rows.size()) * (group_w + group_gap);
    const int height = margin_t + plot_h + margin_b;

    auto y_of = [&](double v) { return margin_t + plot_h * (1.0 - std::clamp(v, 0.0, 100.0) / 100.0); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int tick = 0; tick <= 100; tick += 20) {
        const std::string y = fmt1(y_of(tick));
        svg += "<line x1=\"" + std::to_string(margin_l) + "\" y1=\"" + y + "\" x2=\"" +
               std::to_string(width - margin_r) + "\" y2=\"" + y + "\" stroke=\"#dddddd\"/>\n";
        svg += "<text x=\"" + std::to_string(margin_l - 8) + "\" y=\"" + y +
               "\" font-size=\"11\" text-anchor=\"end\" dominant-baseline=\"middle\" font-family=\"sans-serif\">" +
               std::to_string(tick) + "</text>\n";
    }

    const char* colors[2] = {"#4878a8", "#e49444"};
    const char* series[2] = {"F1", "AUROC"};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int gx = margin_l + group_gap / 2 + static_cast<int>(i) * (group_w + group_gap);
        for (int m = 0; m < 2; ++m) {
            const AggregateStat& s = metric_of(rows[i], m);
            const int x = gx + m * (bar_w + gap);
            const double top = y_of(s.mean);
            svg += "<rect class=\"bar\" x=\"" + std::to_string(x) + "\" y=\"" + fmt1(top) + "\" width=\"" +
                   std::to_string(bar_w) + "\" height=\"" + fmt1(margin_t + plot_h - top) + "\" fill=\"" +
                   colors[m] + "\"/>\n";
            const double lo = y_of(s.mean - s.ci_half_width);
            const double hi = y_of(s.mean + s.ci_half_width);
            const int cx = x + bar_w / 2;
            svg += "<line x1=\"" + std::to_string(cx) + "\" y1=\"" + fmt1(hi) + "\" x2=\"" + std::to_string(cx) +
                   "\" y2=\"" + fmt1(lo) + "\" stroke=\"black\"/>\n";
            svg += "<line x1=\"" + std::to_string(cx - 5) + "\" y1=\"" + fmt1(hi) + "\" x2=\"" +
                   std::to_string(cx + 5) + "\" y2=\"" + fmt1(hi) + "\" stroke=\"black\"/>\n";
            svg += "<line x1=\"" + std::to_string(cx - 5) + "\" y1=\"" + fmt1(lo) + "\" x2=\"" +
                   std::to_string(cx + 5) + "\" y2=\"" + fmt1(lo) + "\" stroke=\"black\"/>\n";
        }
        svg += "<text x=\"" + std::to_string(gx + group_w / 2) + "\" y=\"" + std::to_string(margin_t + plot_h + 14) +
               "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(35 " +
               std::to_string(gx + group_w / 2) + " " + std::to_string(margin_t + plot_h + 14) + ")\">" +
               rows[i].model + "</text>\n";
    }
    for (int m = 0; m < 2; ++m) {
        const int lx = margin_l + m * 80;
        const int ly = height - 20;
        svg += "<rect x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(ly - 10) +
               "\" width=\"12\" height=\"12\" fill=\"" + std::string(colors[m]) + "\"/>\n";
        svg += "<text x=\"" + std::to_string(lx + 18) + "\" y=\"" + std::to_string(ly) +
               "\" font-size=\"12\" font-family=\"sans-serif\">" + series[m] + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_importance_svg(const std::vector<std::string>& names, const std::vector<double>& percentages) {
    if (names.empty() || names.size() != percentages.size())
        throw std::invalid_argument("render_importance_svg: names/percentages mismatch or empty");
    const int row_h = 28, bar_h = 16;
    const int margin_l = 150, margin_r = 70, margin_t = 20, margin_b = 20;
    const int plot_w = 360;
    const int width = margin_l + plot_w + margin_r;
    const int height = margin_t + static_cast<int>(names.size()) * row_h + margin_b;
    const double vmax = std::max(1.0, *std::max_element(percentages.begin(), percentages.end()));

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        const int y = margin_t + static_cast<int>(i) * row_h;
        const double w = plot_w * percentages[i] / vmax;
        svg += "<text x=\"" + std::to_string(margin_l - 8) + "\" y=\"" + std::to_string(y + bar_h - 3) +
               "\" font-size=\"12\" text-anchor=\"end\" font-family=\"sans-serif\">" + names[i] + "</text>\n";
        svg += "<rect x=\"" + std::to_string(margin_l) + "\" y=\"" + std::to_string(y) + "\" width=\"" + fmt1(w) +
               "\" height=\"" + std::to_string(bar_h) + "\" fill=\"#4878a8\"/>\n";
        svg += "<text x=\"" + fmt1(margin_l + w + 6) + "\" y=\"" + std::to_string(y + bar_h - 3) +
               "\" font-size=\"12\" font-family=\"sans-serif\">" + fmt1(percentages[i]) + "%</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace oct
