#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "solarfed/client.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kNotFound = 2;
constexpr int kAllSourcesFailed = 3;
constexpr int kBadArguments = 4;

int exit_code_for(const solarfed::ClientError& e) {
    switch (e.code()) {
        case solarfed::ClientErrc::not_found:
        case solarfed::ClientErrc::unknown_namespace:
            return kNotFound;
        default:
            return kAllSourcesFailed;
    }
}

std::optional<solarfed::GeoPoint> parse_geo(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) return std::nullopt;
    try {
        return solarfed::GeoPoint{std::stod(text.substr(0, comma)),
                                  std::stod(text.substr(comma + 1))};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedctl: fetch, store, and inspect objects in the data federation"};
    app.require_subcommand(1);
    app.fallthrough();  // --director/--geo/--client-name may follow the subcommand

    std::string director;
    std::string geo_text;
    std::string client_name = "fedctl";
    app.add_option("--director", director,
                   "director base URL (or env FEDCTL_DIRECTOR)")
        ->envname("FEDCTL_DIRECTOR");
    app.add_option("--geo", geo_text, "report client location as lat,lon");
    app.add_option("--client-name", client_name, "name recorded in transfer accounting");

    auto* get = app.add_subcommand("get", "download an object");
    std::string get_path, get_out;
    bool no_cache = false, follow_redirect = false;
    get->add_option("path", get_path, "object path, e.g. /bbso/raw/img.fits")->required();
    get->add_option("-o,--output", get_out, "destination file")->required();
    get->add_flag("--no-cache", no_cache, "bypass caches; fetch from the origin");
    get->add_flag("--follow-redirect", follow_redirect,
                  "plan via the director's 307 redirect instead of resolve metadata");

    auto* put = app.add_subcommand("put", "upload a file to the object's origin");
    std::string put_file, put_path;
    put->add_option("file", put_file, "local file to upload")->required();
    put->add_option("path", put_path, "destination object path")->required();

    auto* locate = app.add_subcommand("locate", "resolve an object without transferring it");
    std::string locate_path;
    locate->add_option("path", locate_path, "object path")->required();

    auto* stats = app.add_subcommand("stats", "aggregate transfer accounting");
    std::string stats_service;
    std::int64_t stats_since = -1;
    stats->add_option("--service", stats_service, "only transfers by this service");
    stats->add_option("--since", stats_since, "only transfers at or after this unix time");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadArguments;
    }

    if (director.empty()) {
        std::cerr << "fedctl: no director URL (use --director or FEDCTL_DIRECTOR)\n";
        return kBadArguments;
    }

    solarfed::ClientConfig cfg;
    cfg.director_url = director;
    cfg.client_name = client_name;
    cfg.follow_redirect = follow_redirect;
    if (!geo_text.empty()) {
        cfg.geo = parse_geo(geo_text);
        if (!cfg.geo) {
            std::cerr << "fedctl: --geo expects lat,lon\n";
            return kBadArguments;
        }
    }
    const solarfed::FederationClient client(cfg);

    try {
        if (get->parsed()) {
            const auto path = solarfed::ObjectPath::parse(get_path);
            const auto report = client.fetch(path, get_out, no_cache);
            std::cout << "fetched " << path.text() << " (" << report.bytes << " bytes) from "
                      << report.source_used;
            if (report.cache_hit) std::cout << " [cache " << (*report.cache_hit ? "HIT" : "MISS") << "]";
            std::cout << "\n";
        } else if (put->parsed()) {
            if (!std::filesystem::exists(put_file)) {
                std::cerr << "fedctl: no such file: " << put_file << "\n";
                return kBadArguments;
            }
            const auto path = solarfed::ObjectPath::parse(put_path);
            client.store(put_file, path);
            std::cout << "stored " << put_file << " as " << path.text() << " ("
                      << std::filesystem::file_size(put_file) << " bytes)\n";
        } else if (locate->parsed()) {
            const auto path = solarfed::ObjectPath::parse(locate_path);
            const auto r = client.locate(path);
            std::cout << nlohmann::json{{"object", r.object.text()},
                                        {"origin_url", r.origin_url},
                                        {"cache_urls", r.cache_urls}}
                             .dump(2)
                      << "\n";
        } else if (stats->parsed()) {
            solarfed::StatsFilter filter;
            if (!stats_service.empty()) filter.service = stats_service;
            if (stats_since >= 0) filter.since = stats_since;
            std::cout << solarfed::stats_to_json(client.stats(filter)).dump(2) << "\n";
        }
    } catch (const solarfed::MalformedPath& e) {
        std::cerr << "fedctl: bad object path: " << e.what() << "\n";
        return kBadArguments;
    } catch (const solarfed::ClientError& e) {
        std::cerr << "fedctl: " << e.what() << "\n";
        for (const auto& f : e.failures()) {
            std::cerr << "  " << f.url << ": "
                      << (f.status ? "HTTP " + std::to_string(f.status) : f.cause) << "\n";
        }
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "fedctl: " << e.what() << "\n";
        return kAllSourcesFailed;
    }
    return kOk;
}
