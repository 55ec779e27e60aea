#pragma once

#include <string>
#include <vector>

namespace flowsynth::harness {

inline constexpr const char* kCsvHeader = "step,experiment_id,task,metric,value";

struct CsvRow {
    long step = 0;
    std::string experiment_id;
    std::string task;
    std::string metric;
    double value = 0.0;
};

// Shortest round-trip decimal rendering, identical across runs of one build.
std::string format_value(double v);

std::string csv_line(const CsvRow& row);
std::vector<CsvRow> parse_csv(const std::string& text);
std::vector<CsvRow> load_csv(const std::string& path);

// One line chart per metric, one polyline per series (experiment id, plus
// the task name when a metric spans several tasks). Pure-text SVG.
std::string render_curves_svg(const std::vector<CsvRow>& rows);

void write_text_file(const std::string& path, const std::string& text);

} // namespace flowsynth::harness
