#pragma once

// Training metrics: one row per logged step, CSV serialization with a fixed
// header, and the smoothing helpers used by the trend analyses.

#include <string>
#include <vector>

namespace pxf {

struct MetricRow {
    int64_t step = 0;
    double ce_loss = 0.0;        // mean over this row's text-loss records (0 when none)
    double flow_mse_loss = 0.0;  // mean over this row's flow-loss records (0 when none)
    double pixel_mse_loss = 0.0;  // mean squared error of the predicted clean image (0 when none)
    double total_loss = 0.0;
    double mask_fraction = 0.0;  // fraction of image records that were masked
    int n_generation = 0;
    int n_understanding = 0;
    int n_text_only = 0;
    int n_editing = 0;
    int n_reconstruction = 0;
};

// "step,ce_loss,flow_mse_loss,pixel_mse_loss,total_loss,mask_fraction,..."
extern const char* const kMetricsHeader;

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

// Trailing moving average over the last `window` values (all when fewer).
double tail_mean(const std::vector<double>& values, int window);

// Loss means over the last `window` rows, weighted by how many records of
// that type each row actually saw. The pixel variant smooths the clean-image
// MSE, whose bounded per-draw variance makes it the readable image-side
// trend; the velocity loss carries a heavy-tailed 1/(1-t)^2 weight.
double smoothed_ce(const std::vector<MetricRow>& rows, int window);
double smoothed_flow_mse(const std::vector<MetricRow>& rows, int window);
double smoothed_pixel_mse(const std::vector<MetricRow>& rows, int window);

// Moving average of total loss with the given window, for trend checks.
std::vector<double> moving_average(const std::vector<double>& values, int window);

}  // namespace pxf
