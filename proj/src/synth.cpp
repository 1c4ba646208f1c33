#include "solarfed/synth.hpp"

#include <cmath>
#include <random>

namespace solarfed::synth {

namespace {

struct Capsule {
    double cx, cy;    // segment midpoint
    double ux, uy;    // unit direction
    double half_len;
    double half_width;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        double t = dx * ux + dy * uy;
        if (t > half_len) t = half_len;
        if (t < -half_len) t = -half_len;
        const double px = cx + t * ux, py = cy + t * uy;
        const double ex = x - px, ey = y - py;
        return ex * ex + ey * ey <= half_width * half_width;
    }
};

}  // namespace

SynthResult synth_solar_image(const SynthConfig& cfg) {
    const int n = cfg.size;
    const double center = (n - 1) / 2.0;
    const double radius = 0.42 * n;

    const double pi = std::acos(-1.0);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * pi);

    // Filament midpoints sit on a ring well inside the disk, spread evenly
    // around it so the capsules can never touch; length shrinks with count.
    std::vector<Capsule> capsules;
    const int k = cfg.filaments;
    for (int i = 0; i < k; ++i) {
        const double theta = 2.0 * pi * i / std::max(k, 1) + jitter(rng);
        const double ring = 0.52 * radius;
        const double chord = k > 1 ? 2.0 * ring * std::sin(pi / k) : radius;
        Capsule cap;
        cap.cx = center + ring * std::cos(theta);
        cap.cy = center + ring * std::sin(theta);
        const double phi = angle(rng);
        cap.ux = std::cos(phi);
        cap.uy = std::sin(phi);
        cap.half_len = std::min(0.25 * radius, 0.35 * chord);
        cap.half_width = 2.5;
        capsules.push_back(cap);
    }

    SynthResult out;
    out.truth.rows = n;
    out.truth.cols = n;
    out.truth.filament_pixels.resize(static_cast<size_t>(std::max(k, 0)));
    out.image.pixels = Matrix(n, n, cfg.sky);

    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double dy = r - center, dx = c - center;
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist > radius) continue;
            const size_t idx = static_cast<size_t>(r) * n + c;
            out.truth.disk_pixels.push_back(idx);
            double value =
                cfg.disk_base + (cfg.disk_peak - cfg.disk_base) * (1.0 - dist / radius);
            for (size_t f = 0; f < capsules.size(); ++f) {
                if (capsules[f].contains(c, r)) {
                    value = cfg.filament_intensity;
                    out.truth.filament_pixels[f].push_back(idx);
                    break;
                }
            }
            out.image.pixels.at(r, c) = value;
        }
    }

    if (cfg.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (auto& v : out.image.pixels.v) v += noise(rng);
    }

    out.image.header.cards.push_back(
        {"OBJECT", std::string("SYNTHDISK"), "synthetic full-disk test frame"});
    return out;
}

nlohmann::json ground_truth_to_json(const GroundTruth& truth) {
    nlohmann::json areas = nlohmann::json::array();
    for (const auto& pixels : truth.filament_pixels) areas.push_back(pixels.size());
    return nlohmann::json{{"rows", truth.rows},
                          {"cols", truth.cols},
                          {"disk_area", truth.disk_pixels.size()},
                          {"filament_areas", areas}};
}

}  // namespace solarfed::synth
