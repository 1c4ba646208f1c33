#include "solarfed/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace solarfed::pipeline {

void PipelineConfig::validate() const {
    if (!(lam > 0.0 && lam <= 0.25))
        throw std::invalid_argument("lambda must be in (0, 0.25]");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
    if (!(disk_frac > 0.0 && disk_frac < 1.0))
        throw std::invalid_argument("disk_frac must be in (0, 1)");
    if (min_area < 1) throw std::invalid_argument("min_area must be >= 1");
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    return nlohmann::json{
        {"kappa", cfg.kappa},
        {"lambda", cfg.lam},
        {"iterations", cfg.iterations},
        {"conduction", cfg.conduction == Conduction::exp ? "exp" : "rational"},
        {"threshold_method", cfg.threshold_method == ThresholdMethod::mad ? "mad" : "sigma"},
        {"k", cfg.k},
        {"disk_frac", cfg.disk_frac},
        {"min_area", cfg.min_area},
        {"connectivity", 8}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    cfg.kappa = j.value("kappa", cfg.kappa);
    cfg.lam = j.value("lambda", cfg.lam);
    cfg.iterations = j.value("iterations", cfg.iterations);
    if (j.value("conduction", "exp") == std::string("rational"))
        cfg.conduction = Conduction::rational;
    if (j.value("threshold_method", "mad") == std::string("sigma"))
        cfg.threshold_method = ThresholdMethod::sigma;
    cfg.k = j.value("k", cfg.k);
    cfg.disk_frac = j.value("disk_frac", cfg.disk_frac);
    cfg.min_area = j.value("min_area", cfg.min_area);
    cfg.validate();
    return cfg;
}

double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double percentile_nearest_rank(std::vector<double> values, double pct) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    // nearest-rank: smallest value whose rank covers pct percent of the data
    const size_t n = values.size();
    size_t rank = static_cast<size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return values[rank - 1];
}

Matrix normalize_matrix(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    if (m.v.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(m.v.begin(), m.v.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) return out;  // constant image -> all zeros
    const double span = hi - lo;
    for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = (m.v[i] - lo) / span;
    return out;
}

Matrix normalize_image(const fits::FitsImage& img) { return normalize_matrix(img.pixels); }

Matrix diffuse(const Matrix& normalized, const PipelineConfig& cfg) {
    cfg.validate();
    const int rows = normalized.rows, cols = normalized.cols;
    Matrix cur = normalized;
    Matrix next(rows, cols);
    const double inv_kappa = 1.0 / cfg.kappa;

    auto conduct = [&](double grad) {
        const double x = grad * inv_kappa;
        return cfg.conduction == Conduction::exp ? std::exp(-(x * x)) : 1.0 / (1.0 + x * x);
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                const double center = cur.at(r, c);
                // replicated boundary: the out-of-range neighbor equals the
                // center, so its gradient (and flux) is exactly zero
                const double gn = (r > 0 ? cur.at(r - 1, c) : center) - center;
                const double gs = (r + 1 < rows ? cur.at(r + 1, c) : center) - center;
                const double gw = (c > 0 ? cur.at(r, c - 1) : center) - center;
                const double ge = (c + 1 < cols ? cur.at(r, c + 1) : center) - center;
                const double flux = conduct(std::fabs(gn)) * gn + conduct(std::fabs(gs)) * gs +
                                    conduct(std::fabs(gw)) * gw + conduct(std::fabs(ge)) * ge;
                next.at(r, c) = center + cfg.lam * flux;
            }
        }
        std::swap(cur, next);
    }
    return cur;
}

namespace {

// 4-connected labeling specialized for the disk mask step.
std::vector<int> label4(const BoolMatrix& fg, int& component_count) {
    const int rows = fg.rows, cols = fg.cols;
    std::vector<int> labels(static_cast<size_t>(rows) * cols, 0);
    std::vector<std::pair<int, int>> stack;
    component_count = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!fg.at(r, c) || labels[static_cast<size_t>(r) * cols + c] != 0) continue;
            const int id = ++component_count;
            stack.push_back({r, c});
            labels[static_cast<size_t>(r) * cols + c] = id;
            while (!stack.empty()) {
                const auto [cr, cc] = stack.back();
                stack.pop_back();
                const int nr[4] = {cr - 1, cr + 1, cr, cr};
                const int nc[4] = {cc, cc, cc - 1, cc + 1};
                for (int d = 0; d < 4; ++d) {
                    if (nr[d] < 0 || nr[d] >= rows || nc[d] < 0 || nc[d] >= cols) continue;
                    const size_t idx = static_cast<size_t>(nr[d]) * cols + nc[d];
                    if (!fg.at(nr[d], nc[d]) || labels[idx] != 0) continue;
                    labels[idx] = id;
                    stack.push_back({nr[d], nc[d]});
                }
            }
        }
    }
    return labels;
}

}  // namespace

DiskMask disk_mask(const Matrix& normalized, const PipelineConfig& cfg) {
    cfg.validate();
    const int rows = normalized.rows, cols = normalized.cols;
    const double p99 = percentile_nearest_rank(normalized.v, 99.0);
    const double cut = cfg.disk_frac * p99;

    BoolMatrix bright(rows, cols);
    size_t bright_count = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (normalized.at(r, c) >= cut && normalized.at(r, c) > 0.0) {
                bright.at(r, c) = 1;
                ++bright_count;
            }
        }
    }
    if (bright_count == 0) {
        throw PipelineError(PipelineError::Code::empty_disk, "no pixel reaches the disk cut");
    }

    int component_count = 0;
    const std::vector<int> labels = label4(bright, component_count);
    std::vector<std::uint64_t> areas(static_cast<size_t>(component_count) + 1, 0);
    for (int id : labels) {
        if (id > 0) ++areas[static_cast<size_t>(id)];
    }
    int largest = 1;
    for (int id = 2; id <= component_count; ++id) {
        if (areas[static_cast<size_t>(id)] > areas[static_cast<size_t>(largest)]) largest = id;
    }

    DiskMask out;
    out.mask = BoolMatrix(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out.mask.at(r, c) = labels[static_cast<size_t>(r) * cols + c] == largest ? 1 : 0;
        }
    }

    // Hole filling: complement components that never touch the border are
    // interior holes (implanted dark filaments among them) — absorb them.
    BoolMatrix complement(rows, cols);
    for (size_t i = 0; i < complement.v.size(); ++i) complement.v[i] = out.mask.v[i] ? 0 : 1;
    int holes = 0;
    const std::vector<int> hole_labels = label4(complement, holes);
    std::vector<bool> touches_border(static_cast<size_t>(holes) + 1, false);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) {
                const int id = hole_labels[static_cast<size_t>(r) * cols + c];
                if (id > 0) touches_border[static_cast<size_t>(id)] = true;
            }
        }
    }
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int id = hole_labels[static_cast<size_t>(r) * cols + c];
            if (id > 0 && !touches_border[static_cast<size_t>(id)]) out.mask.at(r, c) = 1;
        }
    }
    return out;
}

double compute_threshold(const Matrix& diffused, const DiskMask& mask,
                         const PipelineConfig& cfg) {
    cfg.validate();
    std::vector<double> on_disk;
    on_disk.reserve(mask.mask.count());
    for (size_t i = 0; i < diffused.v.size(); ++i) {
        if (mask.mask.v[i]) on_disk.push_back(diffused.v[i]);
    }
    if (on_disk.empty()) {
        throw PipelineError(PipelineError::Code::empty_disk, "mask selects no pixels");
    }

    if (cfg.threshold_method == ThresholdMethod::mad) {
        const double med = median_of(on_disk);
        std::vector<double> deviations;
        deviations.reserve(on_disk.size());
        for (double v : on_disk) deviations.push_back(std::fabs(v - med));
        const double mad = median_of(std::move(deviations));
        if (mad == 0.0) {
            throw PipelineError(PipelineError::Code::degenerate_statistics,
                                "on-disk MAD is zero");
        }
        return med - cfg.k * 1.4826 * mad;
    }

    const double n = static_cast<double>(on_disk.size());
    const double mean = std::accumulate(on_disk.begin(), on_disk.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : on_disk) ss += (v - mean) * (v - mean);
    const double stddev = std::sqrt(ss / n);  // population
    if (stddev == 0.0) {
        throw PipelineError(PipelineError::Code::degenerate_statistics,
                            "on-disk stddev is zero");
    }
    return mean - cfg.k * stddev;
}

FilamentCatalog extract_filaments(const Matrix& diffused, const Matrix& normalized,
                                  const DiskMask& mask, double threshold,
                                  const PipelineConfig& cfg) {
    cfg.validate();
    const int rows = diffused.rows, cols = diffused.cols;

    // Union-find over candidate pixels, 8-connectivity.
    const size_t n = static_cast<size_t>(rows) * cols;
    std::vector<std::uint8_t> candidate(n, 0);
    for (size_t i = 0; i < n; ++i) {
        candidate[i] = (mask.mask.v[i] && diffused.v[i] < threshold) ? 1 : 0;
    }

    std::vector<std::int32_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
        while (parent[static_cast<size_t>(x)] != x) {
            parent[static_cast<size_t>(x)] =
                parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
            x = parent[static_cast<size_t>(x)];
        }
        return x;
    };
    auto unite = [&](std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
    };

    // One raster sweep linking each candidate to its already-visited
    // neighbors (W, NW, N, NE) covers all 8-connected adjacencies.
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const size_t idx = static_cast<size_t>(r) * cols + c;
            if (!candidate[idx]) continue;
            const int pr[4] = {r, r - 1, r - 1, r - 1};
            const int pc[4] = {c - 1, c - 1, c, c + 1};
            for (int d = 0; d < 4; ++d) {
                if (pr[d] < 0 || pc[d] < 0 || pc[d] >= cols) continue;
                const size_t pidx = static_cast<size_t>(pr[d]) * cols + pc[d];
                if (candidate[pidx]) unite(static_cast<std::int32_t>(idx),
                                           static_cast<std::int32_t>(pidx));
            }
        }
    }

    // Component areas keyed by root.
    std::vector<std::uint64_t> area(n, 0);
    for (size_t i = 0; i < n; ++i) {
        if (candidate[i]) ++area[static_cast<size_t>(find(static_cast<std::int32_t>(i)))];
    }

    // Survivors relabeled 1..K in raster order of each component's first
    // pixel — which is the root, since unite always keeps the smaller index.
    std::vector<std::int32_t> relabel(n, 0);
    FilamentCatalog catalog;
    catalog.rows = rows;
    catalog.cols = cols;
    catalog.label_map.assign(n, 0);
    int next_label = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!candidate[i]) continue;
        const auto root = static_cast<size_t>(find(static_cast<std::int32_t>(i)));
        if (root == i && area[i] >= static_cast<std::uint64_t>(cfg.min_area)) {
            relabel[i] = ++next_label;
        }
    }

    catalog.entries.resize(static_cast<size_t>(next_label));
    std::vector<double> intensity_sum(static_cast<size_t>(next_label), 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (!candidate[i]) continue;
        const auto root = static_cast<size_t>(find(static_cast<std::int32_t>(i)));
        const std::int32_t label = relabel[root];
        if (label == 0) continue;
        catalog.label_map[i] = label;
        FilamentEntry& e = catalog.entries[static_cast<size_t>(label) - 1];
        const int r = static_cast<int>(i) / cols;
        const int c = static_cast<int>(i) % cols;
        if (e.area_px == 0) {
            e.label = label;
            e.bbox_min_row = e.bbox_max_row = r;
            e.bbox_min_col = e.bbox_max_col = c;
        } else {
            e.bbox_min_row = std::min(e.bbox_min_row, r);
            e.bbox_max_row = std::max(e.bbox_max_row, r);
            e.bbox_min_col = std::min(e.bbox_min_col, c);
            e.bbox_max_col = std::max(e.bbox_max_col, c);
        }
        ++e.area_px;
        e.centroid_row += r;
        e.centroid_col += c;
        intensity_sum[static_cast<size_t>(label) - 1] += normalized.v[i];
    }
    for (size_t li = 0; li < catalog.entries.size(); ++li) {
        FilamentEntry& e = catalog.entries[li];
        const double a = static_cast<double>(e.area_px);
        e.centroid_row /= a;
        e.centroid_col /= a;
        e.mean_intensity = intensity_sum[li] / a;
    }
    return catalog;
}

nlohmann::json catalog_to_json(const FilamentCatalog& catalog, const std::string& image_name,
                               double threshold, const PipelineConfig& cfg) {
    nlohmann::json filaments = nlohmann::json::array();
    for (const auto& e : catalog.entries) {
        filaments.push_back({{"label", e.label},
                             {"area_px", e.area_px},
                             {"centroid", {e.centroid_row, e.centroid_col}},
                             {"bbox", {e.bbox_min_row, e.bbox_min_col, e.bbox_max_row,
                                       e.bbox_max_col}},
                             {"mean_intensity", e.mean_intensity}});
    }
    return nlohmann::json{{"image", image_name},
                          {"threshold", threshold},
                          {"config", pipeline_config_to_json(cfg)},
                          {"filaments", filaments}};
}

}  // namespace solarfed::pipeline
