#pragma once

// Filament image pipeline: normalization, edge-preserving diffusion, solar
// disk masking, robust threshold, and 8-connected component labeling.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "solarfed/fits.hpp"
#include "solarfed/matrix.hpp"

#include "json.hpp"

namespace solarfed::pipeline {

enum class Conduction { exp, rational };
enum class ThresholdMethod { mad, sigma };

struct PipelineConfig {
    double kappa = 0.1;      // conduction scale, normalized intensity units
    double lam = 0.20;       // explicit-scheme step weight, must be <= 0.25
    int iterations = 10;
    Conduction conduction = Conduction::exp;
    ThresholdMethod threshold_method = ThresholdMethod::mad;
    double k = 3.0;          // threshold multiplier (sigma method default: 2.5)
    double disk_frac = 0.15; // disk mask brightness fraction of p99
    int min_area = 50;       // smallest surviving component, pixels
    // connectivity is fixed at 8

    void validate() const;  // throws std::invalid_argument
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

class PipelineError : public std::runtime_error {
public:
    enum class Code { empty_disk, degenerate_statistics };
    PipelineError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

struct DiskMask {
    BoolMatrix mask;
};

struct FilamentEntry {
    int label = 0;
    std::uint64_t area_px = 0;
    double centroid_row = 0.0;
    double centroid_col = 0.0;
    int bbox_min_row = 0;
    int bbox_min_col = 0;
    int bbox_max_row = 0;
    int bbox_max_col = 0;
    double mean_intensity = 0.0;  // over pre-diffusion normalized values
};

struct FilamentCatalog {
    std::vector<FilamentEntry> entries;  // labels 1..K in raster order
    std::vector<std::int32_t> label_map; // row-major, 0 = background
    int rows = 0;
    int cols = 0;
};

// (v - min) / (max - min); constant images map to all zeros.
Matrix normalize_image(const fits::FitsImage& img);
Matrix normalize_matrix(const Matrix& m);

// N iterations of I += lam * sum_d g(|grad_d|) * grad_d over the 4-neighbor
// stencil with replicated boundary.
Matrix diffuse(const Matrix& normalized, const PipelineConfig& cfg);

// Largest 4-connected bright component (>= disk_frac * p99), holes filled.
DiskMask disk_mask(const Matrix& normalized, const PipelineConfig& cfg);

// mad: median - k * 1.4826 * MAD; sigma: mean - k * stddev (population).
// Over on-disk values of the diffused image.
double compute_threshold(const Matrix& diffused, const DiskMask& mask,
                         const PipelineConfig& cfg);

// candidate = (diffused < T) & mask; 8-connected labeling; areas >= min_area
// survive, relabeled 1..K in raster order of first pixel. Catalog intensity
// statistics come from the pre-diffusion normalized image.
FilamentCatalog extract_filaments(const Matrix& diffused, const Matrix& normalized,
                                  const DiskMask& mask, double threshold,
                                  const PipelineConfig& cfg);

nlohmann::json catalog_to_json(const FilamentCatalog& catalog, const std::string& image_name,
                               double threshold, const PipelineConfig& cfg);

// Order statistics shared with the threshold and mask steps (and their tests):
// midpoint median for even counts, nearest-rank percentile.
double median_of(std::vector<double> values);            // empty -> 0
double percentile_nearest_rank(std::vector<double> values, double pct);

}  // namespace solarfed::pipeline
