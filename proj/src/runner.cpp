#include "solarfed/runner.hpp"

#include <unistd.h>

#include <chrono>
#include <fstream>

#include "solarfed/http_util.hpp"

namespace solarfed::runner {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string stem_of(const std::string& location) {
    const auto slash = location.find_last_of('/');
    std::string name = slash == std::string::npos ? location : location.substr(slash + 1);
    const auto dot = name.find_last_of('.');
    if (dot != std::string::npos && dot > 0) name.resize(dot);
    return name.empty() ? "image" : name;
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

bool is_federation_location(const std::string& location, const std::string& director_url) {
    if (director_url.empty()) return false;
    if (location.empty() || location[0] != '/') return false;
    // A path that also exists locally is taken as the local file; absolute
    // local inputs shadow same-named federation objects.
    return !std::filesystem::exists(location);
}

RunReport run_pipeline(const RunConfig& cfg) {
    cfg.pipeline.validate();
    RunReport report;
    report.input = cfg.input;

    const bool fed_in = is_federation_location(cfg.input, cfg.director_url);
    const bool fed_out = is_federation_location(cfg.output, cfg.director_url);

    std::filesystem::path staging = cfg.staging_dir;
    if (staging.empty()) {
        staging = fed_out ? std::filesystem::temp_directory_path() /
                                ("filament." + std::to_string(::getpid()))
                          : std::filesystem::path(cfg.output);
    }
    std::filesystem::create_directories(staging);

    ClientConfig client_cfg;
    client_cfg.director_url = cfg.director_url;
    client_cfg.client_name = cfg.client_name;
    client_cfg.geo = cfg.geo;
    FederationClient client(client_cfg);

    // --- fetch ---
    const auto t_fetch = Clock::now();
    std::filesystem::path input_file;
    if (fed_in) {
        const ObjectPath object = ObjectPath::parse(cfg.input);
        input_file = staging / ("input." + stem_of(cfg.input) + ".fits");
        client.fetch(object, input_file);
    } else {
        input_file = cfg.input;
        if (!std::filesystem::exists(input_file)) {
            throw std::runtime_error("input not found: " + cfg.input);
        }
    }
    report.input_bytes = std::filesystem::file_size(input_file);
    report.fetch_ms = ms_since(t_fetch);

    // --- compute ---
    const auto t_compute = Clock::now();
    const fits::FitsImage image = fits::read_fits_file(input_file);
    const Matrix normalized = pipeline::normalize_image(image);
    const Matrix diffused = pipeline::diffuse(normalized, cfg.pipeline);
    const pipeline::DiskMask mask = pipeline::disk_mask(normalized, cfg.pipeline);
    const double threshold = pipeline::compute_threshold(diffused, mask, cfg.pipeline);
    const pipeline::FilamentCatalog catalog =
        pipeline::extract_filaments(diffused, normalized, mask, threshold, cfg.pipeline);
    report.threshold = threshold;
    report.filament_count = static_cast<int>(catalog.entries.size());

    const std::string stem = stem_of(cfg.input);
    const std::filesystem::path local_diffused = staging / (stem + ".diffused.fits");
    const std::filesystem::path local_labels = staging / (stem + ".labels.fits");
    const std::filesystem::path local_catalog = staging / (stem + ".catalog.json");

    std::vector<std::filesystem::path> written;
    try {
        fits::FitsImage diffused_img;
        diffused_img.pixels = diffused;
        fits::write_fits_file(diffused_img, -32, local_diffused);
        written.push_back(local_diffused);

        fits::FitsImage labels_img;
        labels_img.pixels = Matrix(catalog.rows, catalog.cols);
        for (size_t i = 0; i < catalog.label_map.size(); ++i) {
            labels_img.pixels.v[i] = static_cast<double>(catalog.label_map[i]);
        }
        fits::write_fits_file(labels_img, 16, local_labels);
        written.push_back(local_labels);

        write_json_file(pipeline::catalog_to_json(catalog, cfg.input, threshold, cfg.pipeline),
                        local_catalog);
        written.push_back(local_catalog);
    } catch (...) {
        // No partial product sets: what was written gets removed.
        for (const auto& p : written) std::filesystem::remove(p);
        throw;
    }
    report.compute_ms = ms_since(t_compute);

    // --- store ---
    const auto t_store = Clock::now();
    if (fed_out) {
        const ObjectPath prefix = ObjectPath::parse(cfg.output);
        const std::string base = prefix.text() + "/" + stem;
        report.diffused_product = base + ".diffused.fits";
        report.labels_product = base + ".labels.fits";
        report.catalog_product = base + ".catalog.json";
        client.store(local_diffused, ObjectPath::parse(report.diffused_product));
        client.store(local_labels, ObjectPath::parse(report.labels_product));
        client.store(local_catalog, ObjectPath::parse(report.catalog_product));
    } else {
        report.diffused_product = local_diffused.string();
        report.labels_product = local_labels.string();
        report.catalog_product = local_catalog.string();
    }
    report.store_ms = ms_since(t_store);
    return report;
}

}  // namespace solarfed::runner
