#include "solarfed/client.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>

#include "solarfed/http_util.hpp"

#include "httplib.h"
#include "json.hpp"

namespace solarfed {

namespace {

std::string pick_name(const std::string& configured) {
    return configured.empty() ? "fed-client" : configured;
}

}  // namespace

FederationClient::FederationClient(ClientConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.client_name = pick_name(cfg_.client_name);
}

ResolutionResult FederationClient::locate(const ObjectPath& path) const {
    httplib::Client director(cfg_.director_url);
    director.set_connection_timeout(cfg_.connect_timeout_s, 0);
    director.set_read_timeout(cfg_.transfer_timeout_s, 0);
    httplib::Headers headers;
    if (cfg_.geo) {
        headers.emplace("X-Client-Geo", std::to_string(cfg_.geo->lat) + "," +
                                            std::to_string(cfg_.geo->lon));
    }
    auto res = director.Get("/api/v1/resolve?path=" + url_encode_path(path.text()), headers);
    if (!res) {
        throw ClientError(ClientErrc::director_unreachable,
                          "director unreachable at " + cfg_.director_url);
    }
    if (res->status == 404) {
        throw ClientError(ClientErrc::unknown_namespace, "no origin exports " + path.text());
    }
    if (res->status != 200) {
        throw ClientError(ClientErrc::director_unreachable,
                          "director error " + std::to_string(res->status) + ": " + res->body);
    }
    ResolutionResult result;
    try {
        const auto body = nlohmann::json::parse(res->body);
        result.object = ObjectPath::parse(body.at("object").get<std::string>());
        result.origin_url = body.at("origin_url").get<std::string>();
        for (const auto& u : body.at("cache_urls")) {
            result.cache_urls.push_back(u.get<std::string>());
        }
    } catch (const std::exception& e) {
        throw ClientError(ClientErrc::director_unreachable,
                          std::string("unparseable resolution: ") + e.what());
    }
    return result;
}

std::vector<std::string> FederationClient::plan(const ObjectPath& path, bool bypass_cache) const {
    if (cfg_.follow_redirect && !bypass_cache) {
        httplib::Client director(cfg_.director_url);
        director.set_connection_timeout(cfg_.connect_timeout_s, 0);
        director.set_read_timeout(cfg_.transfer_timeout_s, 0);
        httplib::Headers headers;
        if (cfg_.geo) {
            headers.emplace("X-Client-Geo", std::to_string(cfg_.geo->lat) + "," +
                                                std::to_string(cfg_.geo->lon));
        }
        auto res =
            director.Get("/api/v1/redirect?path=" + url_encode_path(path.text()), headers);
        if (!res) {
            throw ClientError(ClientErrc::director_unreachable,
                              "director unreachable at " + cfg_.director_url);
        }
        if (res->status == 404) {
            throw ClientError(ClientErrc::unknown_namespace, "no origin exports " + path.text());
        }
        if (res->status != 307) {
            throw ClientError(ClientErrc::director_unreachable,
                              "director error " + std::to_string(res->status));
        }
        std::vector<std::string> sources{res->get_header_value("Location")};
        const std::string alternates = res->get_header_value("X-Alt-Sources");
        size_t start = 0;
        while (start < alternates.size()) {
            auto end = alternates.find(',', start);
            if (end == std::string::npos) end = alternates.size();
            if (end > start) sources.push_back(alternates.substr(start, end - start));
            start = end + 1;
        }
        return sources;
    }
    const ResolutionResult r = locate(path);
    if (bypass_cache) return {r.origin_url};
    std::vector<std::string> sources = r.cache_urls;
    sources.push_back(r.origin_url);
    return sources;
}

FetchReport FederationClient::fetch(const ObjectPath& path, const std::filesystem::path& dest,
                                    bool bypass_cache) const {
    const std::vector<std::string> sources = plan(path, bypass_cache);
    std::vector<SourceFailure> failures;

    const std::filesystem::path temp =
        dest.parent_path() /
        (dest.filename().string() + ".part." + std::to_string(::getpid()));

    for (const std::string& source : sources) {
        const auto split = http_util::split_url(source);
        if (!split) {
            failures.push_back({source, 0, "malformed source url"});
            continue;
        }
        for (int attempt = 0; attempt < cfg_.attempts_per_source; ++attempt) {
            std::ofstream out(temp, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw ClientError(ClientErrc::all_sources_failed,
                                  "cannot write " + temp.string());
            }
            httplib::Client source_client(split->base);
            source_client.set_connection_timeout(cfg_.connect_timeout_s, 0);
            source_client.set_read_timeout(cfg_.transfer_timeout_s, 0);
            std::uint64_t received = 0;
            std::string cache_header;
            auto res = source_client.Get(
                split->path, {{"X-Client-Name", cfg_.client_name}},
                [&](const httplib::Response& response) {
                    cache_header = response.get_header_value("X-Cache");
                    return true;
                },
                [&](const char* data, size_t len) {
                    out.write(data, static_cast<std::streamsize>(len));
                    received += len;
                    return out.good();
                });
            out.close();
            if (res && res->status == 200) {
                std::error_code ec;
                std::filesystem::rename(temp, dest, ec);
                if (ec) {
                    std::filesystem::remove(temp);
                    throw ClientError(ClientErrc::all_sources_failed,
                                      "cannot move download to " + dest.string());
                }
                FetchReport report;
                report.bytes = received;
                report.source_used = source;
                if (cache_header == "HIT") report.cache_hit = true;
                if (cache_header == "MISS") report.cache_hit = false;
                return report;
            }
            std::filesystem::remove(temp);
            if (res) {
                failures.push_back({source, res->status, "status " + std::to_string(res->status)});
            } else {
                failures.push_back({source, 0, httplib::to_string(res.error())});
            }
        }
    }

    for (const auto& f : failures) {
        if (f.status == 404) {
            throw ClientError(ClientErrc::not_found, path.text() + " not found", failures);
        }
    }
    std::string detail = "all sources failed for " + path.text() + ":";
    for (const auto& f : failures) detail += " [" + f.url + ": " + f.cause + "]";
    throw ClientError(ClientErrc::all_sources_failed, detail, failures);
}

void FederationClient::store(const std::filesystem::path& src, const ObjectPath& path) const {
    std::ifstream in(src, std::ios::binary);
    if (!in) {
        throw ClientError(ClientErrc::rejected, "cannot read " + src.string());
    }
    std::error_code ec;
    const std::uint64_t size = std::filesystem::file_size(src, ec);
    if (ec) {
        throw ClientError(ClientErrc::rejected, "cannot stat " + src.string());
    }

    const ResolutionResult r = locate(path);
    const auto split = http_util::split_url(r.origin_url);
    if (!split) {
        throw ClientError(ClientErrc::origin_unreachable, "malformed origin url " + r.origin_url);
    }

    httplib::Client origin(split->base);
    origin.set_connection_timeout(cfg_.connect_timeout_s, 0);
    origin.set_write_timeout(cfg_.transfer_timeout_s, 0);
    origin.set_read_timeout(cfg_.transfer_timeout_s, 0);
    auto res = origin.Put(
        split->path, {{"X-Client-Name", cfg_.client_name}}, size,
        [&](size_t /*offset*/, size_t length, httplib::DataSink& sink) {
            char buf[64 * 1024];
            while (length > 0 && in) {
                const auto chunk = static_cast<std::streamsize>(std::min(length, sizeof buf));
                in.read(buf, chunk);
                const auto got = in.gcount();
                if (got <= 0) return false;
                if (!sink.write(buf, static_cast<size_t>(got))) return false;
                length -= static_cast<size_t>(got);
            }
            return true;
        },
        "application/octet-stream");
    if (!res) {
        throw ClientError(ClientErrc::origin_unreachable,
                          "origin unreachable at " + split->base);
    }
    if (res->status == 507) {
        throw ClientError(ClientErrc::storage_full, "origin storage full");
    }
    if (res->status != 201) {
        throw ClientError(ClientErrc::rejected,
                          "origin refused write: status " + std::to_string(res->status));
    }
}

StatsAggregate FederationClient::stats(const StatsFilter& filter) const {
    httplib::Client director(cfg_.director_url);
    director.set_connection_timeout(cfg_.connect_timeout_s, 0);
    director.set_read_timeout(cfg_.transfer_timeout_s, 0);
    std::string target = "/api/v1/stats";
    char sep = '?';
    if (filter.service) {
        target += sep + std::string("service=") + *filter.service;
        sep = '&';
    }
    if (filter.since) {
        target += sep + std::string("since=") + std::to_string(*filter.since);
    }
    auto res = director.Get(target);
    if (!res || res->status != 200) {
        throw ClientError(ClientErrc::director_unreachable, "stats query failed");
    }
    return stats_from_json(nlohmann::json::parse(res->body));
}

}  // namespace solarfed
