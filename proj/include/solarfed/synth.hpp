#pragma once

// Synthetic full-disk solar image generator with known ground truth: a bright
// disk with a mild radial falloff, a dim sky, and elongated dark filaments at
// exactly known pixel sets. The tests and the end-to-end scenario measure the
// pipeline against these known answers.

#include <cstdint>
#include <vector>

#include "solarfed/fits.hpp"
#include "solarfed/matrix.hpp"

#include "json.hpp"

namespace solarfed::synth {

struct SynthConfig {
    int size = 256;              // square image edge
    int filaments = 3;           // implanted dark ribbons
    double noise_sigma = 0.0;    // Gaussian, added everywhere
    std::uint64_t seed = 1;      // noise and filament placement
    double sky = 0.02;           // background intensity
    double disk_base = 0.85;     // disk intensity at the limb
    double disk_peak = 0.95;     // disk intensity at the center
    double filament_intensity = 0.05;  // below the disk-mask cut: exercises hole filling
};

struct GroundTruth {
    std::vector<std::vector<std::size_t>> filament_pixels;  // row-major indices per filament
    std::vector<std::size_t> disk_pixels;                   // disk including filaments
    int rows = 0;
    int cols = 0;
};

struct SynthResult {
    fits::FitsImage image;
    GroundTruth truth;
};

SynthResult synth_solar_image(const SynthConfig& cfg);

nlohmann::json ground_truth_to_json(const GroundTruth& truth);

}  // namespace solarfed::synth
