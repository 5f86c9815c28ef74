#include "metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pxf {

const char* const kMetricsHeader =
    "step,ce_loss,flow_mse_loss,pixel_mse_loss,total_loss,mask_fraction,"
    "n_generation,n_understanding,n_text_only,n_editing,n_reconstruction";

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("metrics: cannot open for write: " + path);
    out << kMetricsHeader << "\n";
    char buf[256];
    for (const MetricRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%d,%d,%d,%d",
                      static_cast<long long>(r.step), r.ce_loss, r.flow_mse_loss, r.pixel_mse_loss,
                      r.total_loss, r.mask_fraction, r.n_generation, r.n_understanding,
                      r.n_text_only, r.n_editing, r.n_reconstruction);
        out << buf << "\n";
    }
    if (!out) throw std::runtime_error("metrics: write failed: " + path);
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("metrics: cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("metrics: empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader) throw std::runtime_error("metrics: unexpected header in " + path);
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 11)
            throw std::runtime_error("metrics: malformed row in " + path + ": " + line);
        MetricRow r;
        r.step = std::stoll(fields[0]);
        r.ce_loss = std::stod(fields[1]);
        r.flow_mse_loss = std::stod(fields[2]);
        r.pixel_mse_loss = std::stod(fields[3]);
        r.total_loss = std::stod(fields[4]);
        r.mask_fraction = std::stod(fields[5]);
        r.n_generation = std::stoi(fields[6]);
        r.n_understanding = std::stoi(fields[7]);
        r.n_text_only = std::stoi(fields[8]);
        r.n_editing = std::stoi(fields[9]);
        r.n_reconstruction = std::stoi(fields[10]);
        rows.push_back(r);
    }
    return rows;
}

double tail_mean(const std::vector<double>& values, int window) {
    if (values.empty() || window <= 0) return 0.0;
    size_t n = std::min(values.size(), static_cast<size_t>(window));
    double sum = 0.0;
    for (size_t i = values.size() - n; i < values.size(); ++i) sum += values[i];
    return sum / static_cast<double>(n);
}

namespace {

double weighted_tail(const std::vector<MetricRow>& rows, int window, bool text_weight,
                     double MetricRow::*field) {
    if (rows.empty() || window <= 0) return 0.0;
    size_t n = std::min(rows.size(), static_cast<size_t>(window));
    double sum = 0.0;
    double weight = 0.0;
    for (size_t i = rows.size() - n; i < rows.size(); ++i) {
        const MetricRow& r = rows[i];
        // Records contributing CE: understanding, text_only, and the text side
        // is absent for pure image tasks; flow comes from the image tasks.
        double w = text_weight ? static_cast<double>(r.n_understanding + r.n_text_only)
                               : static_cast<double>(r.n_generation + r.n_editing + r.n_reconstruction);
        sum += r.*field * w;
        weight += w;
    }
    return weight > 0.0 ? sum / weight : 0.0;
}

}  // namespace

double smoothed_ce(const std::vector<MetricRow>& rows, int window) {
    return weighted_tail(rows, window, true, &MetricRow::ce_loss);
}

double smoothed_flow_mse(const std::vector<MetricRow>& rows, int window) {
    return weighted_tail(rows, window, false, &MetricRow::flow_mse_loss);
}

double smoothed_pixel_mse(const std::vector<MetricRow>& rows, int window) {
    return weighted_tail(rows, window, false, &MetricRow::pixel_mse_loss);
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
    std::vector<double> out(values.size(), 0.0);
    if (window <= 0) throw std::invalid_argument("moving_average: window must be positive");
    double sum = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        sum += values[i];
        if (i >= static_cast<size_t>(window)) sum -= values[i - window];
        size_t n = std::min(i + 1, static_cast<size_t>(window));
        out[i] = sum / static_cast<double>(n);
    }
    return out;
}

}  // namespace pxf
