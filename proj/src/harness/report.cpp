#include "flowsynth/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flowsynth/errors.hpp"

namespace flowsynth::harness {

std::string format_value(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_line(const CsvRow& row) {
    std::ostringstream os;
    os << row.step << ',' << row.experiment_id << ',' << row.task << ',' << row.metric << ','
       << format_value(row.value);
    return os.str();
}

std::vector<CsvRow> parse_csv(const std::string& text) {
    std::vector<CsvRow> rows;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line != kCsvHeader)
                throw IoError("csv: unexpected header '" + line + "'");
            continue;
        }
        CsvRow row;
        std::istringstream ls(line);
        std::string step, value;
        if (!std::getline(ls, step, ',') || !std::getline(ls, row.experiment_id, ',') ||
            !std::getline(ls, row.task, ',') || !std::getline(ls, row.metric, ',') ||
            !std::getline(ls, value, ','))
            throw IoError("csv: malformed row '" + line + "'");
        row.step = std::stol(step);
        row.value = std::stod(value);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<CsvRow> load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};

struct Series {
    std::string label;
    std::vector<std::pair<long, double>> points;
};

// Long polylines are thinned to a bounded point count; endpoints are kept.
std::vector<std::pair<long, double>> thin(const std::vector<std::pair<long, double>>& pts,
                                          std::size_t max_points = 512) {
    if (pts.size() <= max_points) return pts;
    std::vector<std::pair<long, double>> out;
    const std::size_t stride = (pts.size() + max_points - 1) / max_points;
    for (std::size_t i = 0; i < pts.size(); i += stride) out.push_back(pts[i]);
    if (out.back() != pts.back()) out.push_back(pts.back());
    return out;
}

std::string fmt_tick(double v) {
    std::ostringstream os;
    if (std::abs(v) >= 1000 || (std::abs(v) < 0.01 && v != 0))
        os.precision(2), os << std::scientific << v;
    else
        os.precision(4), os << v;
    return os.str();
}

} // namespace

std::string render_curves_svg(const std::vector<CsvRow>& rows) {
    constexpr int kWidth = 760, kChartH = 260, kMarginL = 70, kMarginR = 190, kMarginT = 34,
                  kMarginB = 38;

    // group rows: chart per metric, series per (experiment, task-if-needed)
    std::map<std::string, std::map<std::string, Series>> charts;
    std::map<std::string, std::set<std::string>> metric_tasks;
    for (const auto& r : rows) metric_tasks[r.metric].insert(r.task);
    for (const auto& r : rows) {
        const bool multi_task = metric_tasks[r.metric].size() > 1;
        const std::string label = multi_task ? r.experiment_id + "/" + r.task : r.experiment_id;
        auto& series = charts[r.metric][label];
        series.label = label;
        series.points.emplace_back(r.step, r.value);
    }

    std::ostringstream svg;
    const int n_charts = std::max<std::size_t>(1, charts.size());
    const int total_h = kMarginT + n_charts * (kChartH + kMarginB) + 10;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << total_h << "\" viewBox=\"0 0 " << kWidth << " " << total_h << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    if (charts.empty()) {
        svg << "<text x=\"20\" y=\"40\" font-family=\"sans-serif\" font-size=\"14\" "
               "fill=\"#a00\">no rows to plot</text>\n";
        svg << "</svg>\n";
        return svg.str();
    }

    int chart_index = 0;
    for (auto& [metric, series_map] : charts) {
        const int top = kMarginT + chart_index * (kChartH + kMarginB);
        const int plot_w = kWidth - kMarginL - kMarginR;
        const int plot_h = kChartH - 40;

        long min_step = std::numeric_limits<long>::max(), max_step = std::numeric_limits<long>::min();
        double min_v = 1e300, max_v = -1e300;
        for (auto& [label, s] : series_map) {
            std::sort(s.points.begin(), s.points.end());
            for (const auto& [st, v] : s.points) {
                min_step = std::min(min_step, st);
                max_step = std::max(max_step, st);
                min_v = std::min(min_v, v);
                max_v = std::max(max_v, v);
            }
        }
        if (max_step == min_step) max_step = min_step + 1;
        if (max_v == min_v) {
            max_v += 1.0;
            min_v -= 1.0;
        }

        auto sx = [&](long st) {
            return kMarginL + static_cast<double>(st - min_step) /
                                  static_cast<double>(max_step - min_step) * plot_w;
        };
        auto sy = [&](double v) { return top + plot_h - (v - min_v) / (max_v - min_v) * plot_h; };

        svg << "<text x=\"" << kMarginL << "\" y=\"" << top - 10
            << "\" font-family=\"sans-serif\" font-size=\"14\" font-weight=\"bold\">"
            << xml_escape(metric) << "</text>\n";
        svg << "<rect x=\"" << kMarginL << "\" y=\"" << top << "\" width=\"" << plot_w
            << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
        for (int tick = 0; tick <= 4; ++tick) {
            const double v = min_v + (max_v - min_v) * tick / 4.0;
            const double y = sy(v);
            svg << "<line x1=\"" << kMarginL - 4 << "\" y1=\"" << y << "\" x2=\"" << kMarginL
                << "\" y2=\"" << y << "\" stroke=\"#444\"/>\n";
            svg << "<text x=\"" << kMarginL - 8 << "\" y=\"" << y + 4
                << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
                << fmt_tick(v) << "</text>\n";
            const long st = min_step + (max_step - min_step) * tick / 4;
            const double x = sx(st);
            svg << "<line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\"" << x
                << "\" y2=\"" << top + plot_h + 4 << "\" stroke=\"#444\"/>\n";
            svg << "<text x=\"" << x << "\" y=\"" << top + plot_h + 16
                << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << st
                << "</text>\n";
        }
        svg << "<text x=\"" << kMarginL + plot_w / 2 << "\" y=\"" << top + plot_h + 30
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">step"
            << "</text>\n";

        int color = 0;
        int legend_y = top + 12;
        for (const auto& [label, s] : series_map) {
            const char* stroke = kPalette[color % 10];
            const auto pts = thin(s.points);
            svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& [st, v] : pts) svg << sx(st) << ',' << sy(v) << ' ';
            svg << "\"/>\n";
            if (pts.size() == 1)
                svg << "<circle cx=\"" << sx(pts[0].first) << "\" cy=\"" << sy(pts[0].second)
                    << "\" r=\"3\" fill=\"" << stroke << "\"/>\n";
            svg << "<line x1=\"" << kMarginL + plot_w + 10 << "\" y1=\"" << legend_y << "\" x2=\""
                << kMarginL + plot_w + 30 << "\" y2=\"" << legend_y << "\" stroke=\"" << stroke
                << "\" stroke-width=\"2\"/>\n";
            svg << "<text x=\"" << kMarginL + plot_w + 36 << "\" y=\"" << legend_y + 4
                << "\" font-family=\"sans-serif\" font-size=\"10\">" << xml_escape(label)
                << "</text>\n";
            legend_y += 14;
            ++color;
        }
        ++chart_index;
    }
    svg << "</svg>\n";
    return svg.str();
}

} // namespace flowsynth::harness
