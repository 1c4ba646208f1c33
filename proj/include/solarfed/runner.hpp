#pragma once

// End-to-end pipeline run: fetch (federation or local) -> decode -> process
// -> write the three products -> optional writeback to the federation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "solarfed/client.hpp"
#include "solarfed/pipeline.hpp"

namespace solarfed::runner {

struct RunConfig {
    std::string input;          // federation object path or local FITS file
    std::string output;         // federation namespace prefix or local directory
    pipeline::PipelineConfig pipeline;
    std::string director_url;   // empty: local files only
    std::string client_name = "filament";
    std::optional<GeoPoint> geo;
    std::filesystem::path staging_dir;  // scratch; default: output dir or tmp
};

struct RunReport {
    std::string input;
    std::uint64_t input_bytes = 0;
    std::string diffused_product;  // final location (path text or file path)
    std::string labels_product;
    std::string catalog_product;
    int filament_count = 0;
    double threshold = 0.0;
    double fetch_ms = 0.0;
    double compute_ms = 0.0;
    double store_ms = 0.0;
};

// A federation location is an absolute object path used with a director; a
// local location is anything else (or anything that exists on disk).
bool is_federation_location(const std::string& location, const std::string& director_url);

RunReport run_pipeline(const RunConfig& cfg);

}  // namespace solarfed::runner
