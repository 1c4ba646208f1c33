#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "solarfed/fits.hpp"
#include "solarfed/runner.hpp"
#include "solarfed/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"filament: solar filament detection over local files or the federation"};
    app.require_subcommand(1);
    app.fallthrough();

    auto* run = app.add_subcommand("run", "run the detection pipeline on one image");
    solarfed::runner::RunConfig run_cfg;
    std::string conduction = "exp";
    std::string method = "mad";
    std::string geo_text;
    run->add_option("--input", run_cfg.input,
                    "input FITS: local file, or object path with --director")
        ->required();
    run->add_option("--output", run_cfg.output,
                    "product destination: local directory, or object prefix with --director")
        ->required();
    run->add_option("--kappa", run_cfg.pipeline.kappa, "conduction scale (gradient units)");
    run->add_option("--lambda", run_cfg.pipeline.lam, "diffusion step size, (0, 0.25]");
    run->add_option("--iters", run_cfg.pipeline.iterations, "diffusion iterations");
    run->add_option("--conduction", conduction, "conduction function: exp | rational");
    run->add_option("--threshold", method, "threshold rule: mad | sigma");
    run->add_option("--k", run_cfg.pipeline.k, "threshold strictness multiplier");
    run->add_option("--min-area", run_cfg.pipeline.min_area, "minimum component area (px)");
    run->add_option("--disk-frac", run_cfg.pipeline.disk_frac,
                    "disk brightness cut as a fraction of the 99th percentile");
    run->add_option("--director", run_cfg.director_url,
                    "treat --input/--output as federation object paths via this director");
    run->add_option("--geo", geo_text, "client location as lat,lon for cache ranking");
    run->add_option("--client-name", run_cfg.client_name, "transfer accounting name");

    auto* synth = app.add_subcommand("synth", "generate a synthetic full-disk image");
    solarfed::synth::SynthConfig synth_cfg;
    std::string synth_out;
    bool with_truth = false;
    synth->add_option("--out", synth_out, "output FITS file")->required();
    synth->add_option("--filaments", synth_cfg.filaments, "number of implanted filaments");
    synth->add_option("--noise", synth_cfg.noise_sigma, "additive gaussian noise sigma");
    synth->add_option("--size", synth_cfg.size, "image side length (px)");
    synth->add_option("--seed", synth_cfg.seed, "random seed");
    synth->add_flag("--truth", with_truth, "also write <out>.truth.json ground truth");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (conduction == "exp") {
                run_cfg.pipeline.conduction = solarfed::pipeline::Conduction::exp;
            } else if (conduction == "rational") {
                run_cfg.pipeline.conduction = solarfed::pipeline::Conduction::rational;
            } else {
                std::cerr << "filament: --conduction must be exp or rational\n";
                return 2;
            }
            if (method == "mad") {
                run_cfg.pipeline.threshold_method = solarfed::pipeline::ThresholdMethod::mad;
            } else if (method == "sigma") {
                run_cfg.pipeline.threshold_method = solarfed::pipeline::ThresholdMethod::sigma;
            } else {
                std::cerr << "filament: --threshold must be mad or sigma\n";
                return 2;
            }
            if (!geo_text.empty()) {
                const auto comma = geo_text.find(',');
                if (comma == std::string::npos) {
                    std::cerr << "filament: --geo expects lat,lon\n";
                    return 2;
                }
                run_cfg.geo = solarfed::GeoPoint{std::stod(geo_text.substr(0, comma)),
                                                 std::stod(geo_text.substr(comma + 1))};
            }
            run_cfg.pipeline.validate();
            const auto report = solarfed::runner::run_pipeline(run_cfg);
            std::cout << nlohmann::json{{"input", report.input},
                                        {"input_bytes", report.input_bytes},
                                        {"diffused", report.diffused_product},
                                        {"labels", report.labels_product},
                                        {"catalog", report.catalog_product},
                                        {"filaments", report.filament_count},
                                        {"threshold", report.threshold},
                                        {"fetch_ms", report.fetch_ms},
                                        {"compute_ms", report.compute_ms},
                                        {"store_ms", report.store_ms}}
                             .dump(2)
                      << "\n";
        } else if (synth->parsed()) {
            const auto result = solarfed::synth::synth_solar_image(synth_cfg);
            solarfed::fits::write_fits_file(result.image, -64, synth_out);
            if (with_truth) {
                std::ofstream truth(synth_out + ".truth.json", std::ios::trunc);
                truth << solarfed::synth::ground_truth_to_json(result.truth).dump(2) << "\n";
            }
            std::cout << "wrote " << synth_out << " (" << synth_cfg.size << "x"
                      << synth_cfg.size << ", " << synth_cfg.filaments << " filaments, noise "
                      << synth_cfg.noise_sigma << ", seed " << synth_cfg.seed << ")\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "filament: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
