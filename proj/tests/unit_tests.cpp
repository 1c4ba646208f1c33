#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "oracles.hpp"
#include "solarfed/accounting.hpp"
#include "solarfed/cache_store.hpp"
#include "solarfed/fits.hpp"
#include "solarfed/geo.hpp"
#include "solarfed/path.hpp"
#include "solarfed/pipeline.hpp"
#include "solarfed/registry.hpp"
#include "solarfed/synth.hpp"

using namespace solarfed;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               (tag + "-" + std::to_string(::getpid()) + "-" +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(dir);
    return dir;
}

struct DirGuard {
    std::filesystem::path dir;
    explicit DirGuard(const std::string& tag) : dir(fresh_dir(tag)) {}
    ~DirGuard() { std::filesystem::remove_all(dir); }
};

Matrix make_matrix(int rows, int cols, std::initializer_list<double> vals) {
    Matrix m(rows, cols);
    auto it = vals.begin();
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m.at(r, c) = *it++;
    }
    return m;
}

}  // namespace

// ===========================================================================
// Object paths
// ===========================================================================

TEST_SUITE("path") {
    TEST_CASE("canonical forms") {
        CHECK(ObjectPath::parse("/bbso/raw/x.fits").text() == "/bbso/raw/x.fits");
        CHECK(ObjectPath::parse("//bbso///raw/").text() == "/bbso/raw");
        CHECK(ObjectPath::parse("/a%20b").text() == "/a b");
        CHECK(ObjectPath::parse("/bbso").segments().size() == 1);
        CHECK(ObjectPath::parse("/a/b/c").segments() ==
              std::vector<std::string>{"a", "b", "c"});
    }

    TEST_CASE("rejections") {
        CHECK_THROWS_AS(ObjectPath::parse(""), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/"), MalformedPath);
        // errors are only forbidden segments and control characters; bare
        // relative text canonicalizes
        CHECK(ObjectPath::parse("relative/path").text() == "/relative/path");
        CHECK_THROWS_AS(ObjectPath::parse("/a\tb"), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/a/../b"), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/a/./b"), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/.."), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/a%2Fb"), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/a%2fb"), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/a%GZ"), MalformedPath);
        CHECK_THROWS_AS(ObjectPath::parse("/a%2"), MalformedPath);
    }

    TEST_CASE("prefix relations") {
        const auto path = ObjectPath::parse("/bbso/raw/2026/img.fits");
        CHECK(path.has_prefix(ObjectPath::parse("/bbso")));
        CHECK(path.has_prefix(ObjectPath::parse("/bbso/raw")));
        CHECK(path.has_prefix(path));
        CHECK_FALSE(path.has_prefix(ObjectPath::parse("/bbso/rawother")));
        CHECK_FALSE(path.has_prefix(ObjectPath::parse("/other")));
        CHECK(path.relative_to(ObjectPath::parse("/bbso/raw")) == "2026/img.fits");
        CHECK(path.relative_to(path).empty());
    }

    TEST_CASE("longest prefix wins") {
        const std::vector<NamespacePrefix> prefixes{ObjectPath::parse("/bbso/raw"),
                                                    ObjectPath::parse("/bbso/processed")};
        const auto hit = match_prefix(ObjectPath::parse("/bbso/raw/a/b"), prefixes);
        REQUIRE(hit.has_value());
        CHECK(hit->text() == "/bbso/raw");
        CHECK_FALSE(match_prefix(ObjectPath::parse("/other/x"), prefixes).has_value());

        // nested prefixes: deepest match is chosen
        const std::vector<NamespacePrefix> nested{ObjectPath::parse("/a"),
                                                  ObjectPath::parse("/a/b/c"),
                                                  ObjectPath::parse("/a/b")};
        CHECK(match_prefix(ObjectPath::parse("/a/b/c/d"), nested)->text() == "/a/b/c");
        CHECK(match_prefix(ObjectPath::parse("/a/b/x"), nested)->text() == "/a/b");
        CHECK(match_prefix(ObjectPath::parse("/a/z"), nested)->text() == "/a");
    }

    TEST_CASE("url encoding round trip") {
        CHECK(url_encode_path("/a b") == "/a%20b");
        CHECK(url_encode_path("/plain/path-1_2.fits~x") == "/plain/path-1_2.fits~x");
        const std::string tricky = "/bbso/space here/q?&#100%";
        CHECK(ObjectPath::parse(url_encode_path(tricky)).text() == tricky);
    }
}

// ===========================================================================
// Geo routing
// ===========================================================================

TEST_SUITE("geo") {
    TEST_CASE("haversine matches an independent formulation") {
        const GeoPoint sd{32.7157, -117.1611};
        const GeoPoint chi{41.8781, -87.6298};
        const double got = haversine_km(sd, chi);
        // frozen from a high-precision evaluation of the atan2 form
        const double frozen = 2786.6669583621395;
        CHECK(std::fabs(got - frozen) / frozen < 1e-6);

        std::mt19937_64 rng(2026);
        std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
        for (int i = 0; i < 500; ++i) {
            const GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
            const long double want = oracle::haversine_km(a.lat, a.lon, b.lat, b.lon);
            const double got2 = haversine_km(a, b);
            CHECK(std::fabs(got2 - static_cast<double>(want)) <=
                  1e-6 * std::max(1.0L, want));
        }
    }

    TEST_CASE("degenerate distances") {
        CHECK(haversine_km({10, 20}, {10, 20}) == 0.0);
        const double anti = haversine_km({0, 0}, {0, 180});
        CHECK(std::fabs(anti - 20015.086796020572) < 1e-6);
    }

    TEST_CASE("symmetric bit for bit") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
        for (int i = 0; i < 200; ++i) {
            const GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
            CHECK(haversine_km(a, b) == haversine_km(b, a));
        }
    }

    TEST_CASE("cache ranking") {
        auto cache = [](const std::string& name, double lat, double lon) {
            ServiceRecord r;
            r.name = name;
            r.kind = ServiceKind::cache;
            r.base_url = "http://x";
            r.location = {lat, lon};
            return r;
        };
        SUBCASE("by distance") {
            auto ranked = rank_caches(GeoPoint{0, 0}, {cache("a", 0, 2), cache("b", 0, 1)});
            REQUIRE(ranked.size() == 2);
            CHECK(ranked[0].name == "b");
            CHECK(ranked[1].name == "a");
        }
        SUBCASE("distance ties break by name") {
            auto ranked = rank_caches(GeoPoint{0, 0},
                                      {cache("c", 5, 5), cache("a", 5, 5), cache("b", 5, 5)});
            CHECK(ranked[0].name == "a");
            CHECK(ranked[1].name == "b");
            CHECK(ranked[2].name == "c");
        }
        SUBCASE("unknown client location: name order") {
            auto ranked =
                rank_caches(std::nullopt, {cache("z", 0, 1), cache("m", 50, 50), cache("a", 9, 9)});
            CHECK(ranked[0].name == "a");
            CHECK(ranked[1].name == "m");
            CHECK(ranked[2].name == "z");
        }
    }

    TEST_CASE("geo table lookup") {
        const std::string csv =
            "cidr,lat,lon\n"
            "10.0.0.0/8,1.5,2.5\n"
            "10.1.0.0/16,3.5,4.5\n"
            "2001:db8::/32,5.5,6.5\n";
        const GeoTable table = GeoTable::load_csv_text(csv);
        SUBCASE("longest prefix wins") {
            auto p = table.lookup("10.1.2.3");
            REQUIRE(p.has_value());
            CHECK(p->lat == 3.5);
            auto q = table.lookup("10.2.2.3");
            REQUIRE(q.has_value());
            CHECK(q->lat == 1.5);
        }
        SUBCASE("v6 and misses") {
            CHECK(table.lookup("2001:db8::1").has_value());
            CHECK_FALSE(table.lookup("192.168.0.1").has_value());
            CHECK_FALSE(table.lookup("not-an-ip").has_value());
        }
        SUBCASE("override wins over table") {
            auto p = lookup_client(table, "10.1.2.3", GeoPoint{9, 9});
            REQUIRE(p.has_value());
            CHECK(p->lat == 9);
            CHECK(lookup_client(table, "10.1.2.3", std::nullopt)->lat == 3.5);
        }
        SUBCASE("parse errors carry line numbers") {
            CHECK_THROWS_AS(GeoTable::load_csv_text("wrong,header,row\n"), GeoTableParse);
            CHECK_THROWS_AS(GeoTable::load_csv_text("cidr,lat,lon\n10.0.0.0/33,1,2\n"),
                            GeoTableParse);
            CHECK_THROWS_AS(GeoTable::load_csv_text("cidr,lat,lon\n10.0.0.0/8,91,2\n"),
                            GeoTableParse);
            CHECK_THROWS_AS(GeoTable::load_csv_text("cidr,lat,lon\nbogus/8,1,2\n"),
                            GeoTableParse);
        }
    }
}

// ===========================================================================
// Registry
// ===========================================================================

namespace {
ServiceRecord make_origin(const std::string& name, const std::string& prefix, double lat = 0,
                          double lon = 0) {
    ServiceRecord r;
    r.name = name;
    r.kind = ServiceKind::origin;
    r.base_url = "http://127.0.0.1:1000";
    r.location = {lat, lon};
    r.prefixes = {ObjectPath::parse(prefix)};
    return r;
}
ServiceRecord make_cache(const std::string& name, double lat = 0, double lon = 0) {
    ServiceRecord r;
    r.name = name;
    r.kind = ServiceKind::cache;
    r.base_url = "http://127.0.0.1:2000";
    r.location = {lat, lon};
    return r;
}
}  // namespace

TEST_SUITE("registry") {
    TEST_CASE("register, resolve, duplicate prefixes") {
        Registry reg(300, [] { return 1000; });
        reg.register_service(make_origin("o1", "/bbso/raw"));
        reg.register_service(make_origin("o2", "/bbso/processed"));
        reg.register_service(make_cache("c1", 0, 1));
        reg.register_service(make_cache("c2", 0, 2));
        CHECK(reg.size() == 4);

        const auto r = reg.resolve(ObjectPath::parse("/bbso/raw/a.fits"), GeoPoint{0, 0});
        CHECK(r.origin_url == "http://127.0.0.1:1000/data/bbso/raw/a.fits");
        REQUIRE(r.cache_urls.size() == 2);
        CHECK(r.cache_urls[0] == "http://127.0.0.1:2000/data/bbso/raw/a.fits");

        // another origin claiming an already-claimed prefix is rejected
        CHECK_THROWS_AS(reg.register_service(make_origin("o3", "/bbso/raw")), RegistryError);
        // same name re-registering the same prefix is a refresh, not a duplicate
        CHECK_NOTHROW(reg.register_service(make_origin("o1", "/bbso/raw")));
        CHECK(reg.size() == 4);

        // nested prefixes from different origins are distinct namespaces:
        // the deepest matching prefix owns the object
        reg.register_service(make_origin("o4", "/bbso/raw/special"));
        reg.register_service(make_origin("o5", "/bbso"));
        ServiceRecord deep = make_origin("o4", "/bbso/raw/special");
        deep.base_url = "http://127.0.0.1:1004";
        reg.register_service(deep);
        ServiceRecord shallow = make_origin("o5", "/bbso");
        shallow.base_url = "http://127.0.0.1:1005";
        reg.register_service(shallow);
        CHECK(reg.resolve(ObjectPath::parse("/bbso/raw/special/x"), std::nullopt).origin_url ==
              "http://127.0.0.1:1004/data/bbso/raw/special/x");
        CHECK(reg.resolve(ObjectPath::parse("/bbso/other"), std::nullopt).origin_url ==
              "http://127.0.0.1:1005/data/bbso/other");
        CHECK(reg.resolve(ObjectPath::parse("/bbso/raw/a.fits"), std::nullopt).origin_url ==
              "http://127.0.0.1:1000/data/bbso/raw/a.fits");
    }

    TEST_CASE("invalid records") {
        Registry reg;
        ServiceRecord nameless = make_cache("");
        CHECK_THROWS_AS(reg.register_service(nameless), RegistryError);
        ServiceRecord origin_no_prefix = make_origin("o", "/x");
        origin_no_prefix.prefixes.clear();
        CHECK_THROWS_AS(reg.register_service(origin_no_prefix), RegistryError);
        ServiceRecord cache_with_prefix = make_cache("c");
        cache_with_prefix.prefixes = {ObjectPath::parse("/x")};
        CHECK_THROWS_AS(reg.register_service(cache_with_prefix), RegistryError);
        ServiceRecord bad_url = make_cache("c");
        bad_url.base_url = "ftp://nope";
        CHECK_THROWS_AS(reg.register_service(bad_url), RegistryError);
    }

    TEST_CASE("unknown namespace") {
        Registry reg;
        reg.register_service(make_origin("o1", "/bbso"));
        CHECK_THROWS_AS(reg.resolve(ObjectPath::parse("/other/x"), std::nullopt),
                        RegistryError);
    }

    TEST_CASE("staleness excludes from resolution but not listing") {
        std::int64_t now = 1000;
        Registry reg(300, [&now] { return now; });
        reg.register_service(make_origin("o1", "/bbso"));
        reg.register_service(make_cache("c1"));
        reg.register_service(make_cache("c2"));

        now = 1200;  // both fresh
        CHECK(reg.resolve(ObjectPath::parse("/bbso/x"), std::nullopt).cache_urls.size() == 2);

        now = 1400;  // everything from t=1000 is stale (400 > 300)
        reg.register_service(make_cache("c2"));  // c2 heartbeats at 1400
        // a stale origin no longer resolves its namespace
        CHECK_THROWS_AS(reg.resolve(ObjectPath::parse("/bbso/x"), std::nullopt),
                        RegistryError);
        reg.register_service(make_origin("o1", "/bbso"));  // heartbeat refresh
        const auto r = reg.resolve(ObjectPath::parse("/bbso/x"), std::nullopt);
        CHECK(r.cache_urls.size() == 1);  // stale c1 dropped, fresh c2 kept

        const auto listed = reg.list();
        REQUIRE(listed.size() == 3);
        int stale_count = 0;
        for (const auto& s : listed) stale_count += s.stale ? 1 : 0;
        CHECK(stale_count == 1);  // just c1 now
    }

    TEST_CASE("twenty origins and thirty caches") {
        Registry reg;
        for (int i = 0; i < 20; ++i) {
            reg.register_service(
                make_origin("origin-" + std::to_string(i), "/ns" + std::to_string(i)));
        }
        for (int i = 0; i < 30; ++i) {
            reg.register_service(make_cache("cache-" + std::to_string(i)));
        }
        CHECK(reg.size() == 50);
        CHECK(reg.list().size() == 50);
    }
}

// ===========================================================================
// Accounting
// ===========================================================================

namespace {
TransferRecord make_record(const std::string& service, ServiceKind kind,
                           TransferDirection direction, std::uint64_t bytes,
                           std::optional<bool> hit = std::nullopt) {
    TransferRecord r;
    r.service = service;
    r.kind = kind;
    r.path = "/bbso/obj";
    r.direction = direction;
    r.bytes = bytes;
    r.cache_hit = hit;
    r.client = "tester";
    r.timestamp = 1700000000;
    r.duration_ms = 5;
    return r;
}
}  // namespace

TEST_SUITE("accounting") {
    TEST_CASE("record validation") {
        CHECK_NOTHROW(
            make_record("o", ServiceKind::origin, TransferDirection::serve, 10).validate());
        CHECK_NOTHROW(
            make_record("c", ServiceKind::cache, TransferDirection::serve, 10, true).validate());
        // cache_hit present iff cache serve
        CHECK_THROWS_AS(
            make_record("c", ServiceKind::cache, TransferDirection::serve, 10).validate(),
            InvalidRecord);
        CHECK_THROWS_AS(
            make_record("o", ServiceKind::origin, TransferDirection::serve, 10, true).validate(),
            InvalidRecord);
        CHECK_THROWS_AS(
            make_record("c", ServiceKind::cache, TransferDirection::ingest, 10, false).validate(),
            InvalidRecord);
        auto no_service = make_record("", ServiceKind::origin, TransferDirection::serve, 10);
        CHECK_THROWS_AS(no_service.validate(), InvalidRecord);
    }

    TEST_CASE("json round trip") {
        const auto r = make_record("c", ServiceKind::cache, TransferDirection::serve, 123, false);
        const auto back = transfer_record_from_json(transfer_record_to_json(r));
        CHECK(back.service == r.service);
        CHECK(back.kind == r.kind);
        CHECK(back.path == r.path);
        CHECK(back.direction == r.direction);
        CHECK(back.bytes == r.bytes);
        CHECK(back.cache_hit == r.cache_hit);
        CHECK(back.client == r.client);
        CHECK(back.timestamp == r.timestamp);
        CHECK(back.duration_ms == r.duration_ms);
    }

    TEST_CASE("log append, replay, aggregate") {
        DirGuard guard("transferlog");
        const auto file = guard.dir / "log.ndjson";
        {
            TransferLog log(file);
            log.append(make_record("o", ServiceKind::origin, TransferDirection::serve, 100));
            log.append(make_record("c", ServiceKind::cache, TransferDirection::serve, 40, true));
            log.append(make_record("c", ServiceKind::cache, TransferDirection::serve, 60, false));
            log.append(make_record("c", ServiceKind::cache, TransferDirection::ingest, 60));
            CHECK(log.size() == 4);
        }
        TransferLog replayed(file);
        CHECK(replayed.size() == 4);
        const auto all = replayed.aggregate({});
        CHECK(all.records == 4);
        CHECK(all.total_bytes == 260);
        CHECK(all.hits == 1);
        CHECK(all.misses == 1);
        CHECK(all.bytes_by_service.at("o") == 100);
        CHECK(all.bytes_by_service.at("c") == 160);

        StatsFilter just_c;
        just_c.service = "c";
        CHECK(replayed.aggregate(just_c).records == 3);
        CHECK(replayed.aggregate(just_c).total_bytes == 160);
    }

    TEST_CASE("since filter") {
        DirGuard guard("transferlog-since");
        TransferLog log(guard.dir / "log.ndjson");
        auto r1 = make_record("a", ServiceKind::origin, TransferDirection::serve, 1);
        r1.timestamp = 100;
        auto r2 = make_record("a", ServiceKind::origin, TransferDirection::serve, 2);
        r2.timestamp = 200;
        log.append(r1);
        log.append(r2);
        StatsFilter since;
        since.since = 150;
        CHECK(log.aggregate(since).records == 1);
        CHECK(log.aggregate(since).total_bytes == 2);
        since.since = 200;  // inclusive
        CHECK(log.aggregate(since).records == 1);
    }

    TEST_CASE("concurrent appends lose nothing") {
        DirGuard guard("transferlog-mt");
        const auto file = guard.dir / "log.ndjson";
        {
            TransferLog log(file);
            std::vector<std::thread> threads;
            for (int t = 0; t < 8; ++t) {
                threads.emplace_back([&log, t] {
                    for (int i = 0; i < 125; ++i) {
                        log.append(make_record("svc-" + std::to_string(t), ServiceKind::origin,
                                               TransferDirection::serve, 1));
                    }
                });
            }
            for (auto& th : threads) th.join();
            CHECK(log.size() == 1000);
        }
        // every line parses; none torn
        const auto records = read_transfer_log(file);
        CHECK(records.size() == 1000);
    }

    TEST_CASE("aggregate equals an independent fold") {
        DirGuard guard("transferlog-fold");
        TransferLog log(guard.dir / "log.ndjson");
        std::mt19937_64 rng(99);
        std::uniform_int_distribution<int> coin(0, 1);
        std::uniform_int_distribution<std::uint64_t> nbytes(0, 1 << 20);
        std::uniform_int_distribution<std::int64_t> ts(1000, 2000);
        std::vector<TransferRecord> records;
        for (int i = 0; i < 1000; ++i) {
            const bool is_cache = coin(rng) == 1;
            const bool is_serve = is_cache ? true : coin(rng) == 1;
            TransferRecord r = make_record(
                "svc-" + std::to_string(i % 7), is_cache ? ServiceKind::cache : ServiceKind::origin,
                is_serve ? TransferDirection::serve : TransferDirection::ingest, nbytes(rng));
            if (is_cache && is_serve) r.cache_hit = coin(rng) == 1;
            r.timestamp = ts(rng);
            records.push_back(r);
            log.append(r);
        }
        StatsFilter filter;
        filter.service = "svc-3";
        filter.since = 1500;
        const auto got = log.aggregate(filter);

        // independent fold: plain loop over the raw reparsed log
        std::uint64_t n = 0, bytes = 0, hits = 0, misses = 0;
        std::map<std::string, std::uint64_t> by_service;
        for (const auto& r : read_transfer_log(log.file())) {
            if (r.service != "svc-3" || r.timestamp < 1500) continue;
            ++n;
            bytes += r.bytes;
            by_service[r.service] += r.bytes;
            if (r.cache_hit) {
                (*r.cache_hit ? hits : misses) += 1;
            }
        }
        CHECK(got.records == n);
        CHECK(got.total_bytes == bytes);
        CHECK(got.hits == hits);
        CHECK(got.misses == misses);
        CHECK(got.bytes_by_service == by_service);
    }
}

// ===========================================================================
// FITS
// ===========================================================================

TEST_SUITE("fits") {
    TEST_CASE("minimal file is exactly two blocks") {
        fits::FitsImage img;
        img.pixels = Matrix(1, 1);
        img.pixels.at(0, 0) = 7;
        const auto bytes = fits::write_fits(img, 8);
        CHECK(bytes.size() == 5760);  // one header block + one data block
        const auto back = fits::read_fits(bytes);
        CHECK(back.pixels.rows == 1);
        CHECK(back.pixels.cols == 1);
        CHECK(back.pixels.at(0, 0) == 7.0);
    }

    TEST_CASE("every emitted length is a block multiple") {
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<int> dim(1, 40);
        std::uniform_real_distribution<double> val(-100, 100);
        for (int i = 0; i < 20; ++i) {
            fits::FitsImage img;
            img.pixels = Matrix(dim(rng), dim(rng));
            for (auto& v : img.pixels.v) v = val(rng);
            const auto bytes = fits::write_fits(img, -64);
            CHECK(bytes.size() % 2880 == 0);
        }
    }

    TEST_CASE("round trips per data type") {
        std::mt19937_64 rng(17);
        std::uniform_int_distribution<int> dim(1, 24);
        for (const int bitpix : {8, 16, 32, -32, -64}) {
            for (int trial = 0; trial < 20; ++trial) {
                fits::FitsImage img;
                img.pixels = Matrix(dim(rng), dim(rng));
                for (auto& v : img.pixels.v) {
                    switch (bitpix) {
                        case 8: v = static_cast<double>(rng() % 256); break;
                        case 16: v = static_cast<double>(static_cast<std::int16_t>(rng())); break;
                        case 32: v = static_cast<double>(static_cast<std::int32_t>(rng())); break;
                        case -32: {
                            const float f = static_cast<float>(std::ldexp(
                                static_cast<double>(rng()) / 18446744073709551615.0 - 0.5, 8));
                            v = static_cast<double>(f);
                            break;
                        }
                        default:
                            v = std::ldexp(static_cast<double>(rng()) / 18446744073709551615.0 -
                                               0.5, 12);
                    }
                }
                const auto bytes = fits::write_fits(img, bitpix);
                const auto back = fits::read_fits(bytes);
                REQUIRE(back.pixels.rows == img.pixels.rows);
                REQUIRE(back.pixels.cols == img.pixels.cols);
                for (size_t i = 0; i < img.pixels.v.size(); ++i) {
                    CHECK(back.pixels.v[i] == img.pixels.v[i]);
                }
            }
        }
    }

    TEST_CASE("scaling cards apply on read") {
        // stored 10 with BSCALE 2, BZERO 100 -> physical 120
        fits::FitsImage img;
        img.pixels = Matrix(1, 2);
        img.pixels.at(0, 0) = 120;
        img.pixels.at(0, 1) = 102;
        img.bscale = 2.0;
        img.bzero = 100.0;
        const auto bytes = fits::write_fits(img, 16);
        const auto back = fits::read_fits(bytes);
        CHECK(back.bscale == 2.0);
        CHECK(back.bzero == 100.0);
        CHECK(back.pixels.at(0, 0) == 120.0);
        CHECK(back.pixels.at(0, 1) == 102.0);
    }

    TEST_CASE("header cards survive") {
        fits::FitsImage img;
        img.pixels = Matrix(2, 2);
        img.header.cards.push_back({"OBJECT", std::string("SUN 'H-ALPHA'"), "target"});
        img.header.cards.push_back({"EXPTIME", 0.25, ""});
        img.header.cards.push_back({"COUNTER", std::int64_t{42}, "frame"});
        img.header.cards.push_back({"GOODDATA", true, ""});
        const auto back = fits::read_fits(fits::write_fits(img, -32));
        CHECK(std::get<std::string>(*back.header.get("OBJECT")) == "SUN 'H-ALPHA'");
        CHECK(std::get<double>(*back.header.get("EXPTIME")) == 0.25);
        CHECK(*back.header.get_int("COUNTER") == 42);
        CHECK(std::get<bool>(*back.header.get("GOODDATA")) == true);
    }

    TEST_CASE("error taxonomy") {
        fits::FitsImage img;
        img.pixels = Matrix(2, 2);
        for (size_t i = 0; i < 4; ++i) img.pixels.v[i] = static_cast<double>(i);
        auto good = fits::write_fits(img, 16);

        SUBCASE("not a block multiple") {
            good.pop_back();
            CHECK_THROWS_AS(fits::read_fits(good), fits::FitsError);
            try {
                fits::read_fits(good);
            } catch (const fits::FitsError& e) {
                CHECK(e.code() == fits::FitsErrc::bad_block);
            }
        }
        SUBCASE("empty and non-fits") {
            CHECK_THROWS_AS(fits::read_fits(std::vector<std::uint8_t>{}), fits::FitsError);
            std::vector<std::uint8_t> junk(2880, ' ');
            std::string first = "NOTFITS = T";
            std::copy(first.begin(), first.end(), junk.begin());
            std::string end = "END";
            std::copy(end.begin(), end.end(), junk.begin() + 80);
            try {
                fits::read_fits(junk);
                FAIL("expected not_fits");
            } catch (const fits::FitsError& e) {
                CHECK(e.code() == fits::FitsErrc::not_fits);
            }
        }
        SUBCASE("truncated data") {
            std::vector<std::uint8_t> only_header(good.begin(), good.begin() + 2880);
            try {
                fits::read_fits(only_header);
                FAIL("expected truncated");
            } catch (const fits::FitsError& e) {
                CHECK(e.code() == fits::FitsErrc::truncated);
            }
        }
        SUBCASE("range overflow writing narrow types") {
            fits::FitsImage wide;
            wide.pixels = Matrix(1, 1);
            wide.pixels.at(0, 0) = -1;  // not representable in BITPIX 8 (0..255)
            CHECK_THROWS_AS(fits::write_fits(wide, 8), fits::FitsError);
            wide.pixels.at(0, 0) = 40000;  // above int16
            CHECK_THROWS_AS(fits::write_fits(wide, 16), fits::FitsError);
            wide.pixels.at(0, 0) = 300;  // spec example: 300 at BITPIX 8
            CHECK_THROWS_AS(fits::write_fits(wide, 8), fits::FitsError);
            // non-integral values round to the nearest representable integer
            wide.pixels.at(0, 0) = 0.5;
            CHECK(fits::read_fits(fits::write_fits(wide, 16)).pixels.at(0, 0) == 0.0);
        }
        SUBCASE("unsupported bitpix rejected") {
            CHECK_THROWS_AS(fits::write_fits(img, 64), fits::FitsError);
        }
        SUBCASE("trailing extension bytes flagged") {
            auto extended = good;
            extended.resize(extended.size() + 2880, 0);
            const auto back = fits::read_fits(extended);
            CHECK(back.extensions_ignored);
            CHECK(back.pixels.at(1, 1) == 3.0);
        }
    }

    TEST_CASE("file io round trip") {
        DirGuard guard("fitsfile");
        fits::FitsImage img;
        img.pixels = Matrix(3, 5);
        for (size_t i = 0; i < img.pixels.v.size(); ++i) img.pixels.v[i] = std::sqrt(i + 1.0);
        const auto path = guard.dir / "img.fits";
        fits::write_fits_file(img, -64, path);
        const auto back = fits::read_fits_file(path);
        CHECK(back.pixels.v == img.pixels.v);
    }
}

// ===========================================================================
// Pipeline
// ===========================================================================

TEST_SUITE("pipeline") {
    TEST_CASE("normalize") {
        const Matrix m = make_matrix(1, 3, {2.0, 4.0, 6.0});
        const Matrix n = pipeline::normalize_matrix(m);
        CHECK(n.at(0, 0) == 0.0);
        CHECK(n.at(0, 1) == 0.5);
        CHECK(n.at(0, 2) == 1.0);
        const Matrix flat = make_matrix(2, 2, {3.0, 3.0, 3.0, 3.0});
        for (double v : pipeline::normalize_matrix(flat).v) CHECK(v == 0.0);
    }

    TEST_CASE("single diffusion step on a centered impulse") {
        pipeline::PipelineConfig cfg;
        cfg.kappa = 1.0;
        cfg.lam = 0.25;
        cfg.iterations = 1;
        cfg.conduction = pipeline::Conduction::exp;
        Matrix impulse(3, 3);
        impulse.at(1, 1) = 1.0;

        const Matrix out = pipeline::diffuse(impulse, cfg);
        // center: 1 + 0.25 * 4 * e^-1 * (0-1) = 1 - e^-1
        CHECK(std::fabs(out.at(1, 1) - 0.6321205588285577) < 1e-12);
        // each edge neighbor: 0 + 0.25 * e^-1 * (1-0) = e^-1/4
        for (auto [r, c] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}}) {
            CHECK(std::fabs(out.at(r, c) - 0.09196986029286058) < 1e-12);
        }
        // corners see only zero neighbors
        for (auto [r, c] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}}) {
            CHECK(out.at(r, c) == 0.0);
        }

        SUBCASE("rational conduction") {
            cfg.conduction = pipeline::Conduction::rational;
            const Matrix rat = pipeline::diffuse(impulse, cfg);
            // g(1) = 1/2: center 1 - 4*0.25*0.5 = 0.5, edges 0.125
            CHECK(std::fabs(rat.at(1, 1) - 0.5) < 1e-12);
            CHECK(std::fabs(rat.at(0, 1) - 0.125) < 1e-12);
        }
    }

    TEST_CASE("diffusion invariants on random images") {
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> val(0, 1);
        pipeline::PipelineConfig cfg;  // defaults: kappa .1, lam .2, N 10
        for (int trial = 0; trial < 10; ++trial) {
            Matrix img(32, 32);
            for (auto& v : img.v) v = val(rng);
            const double sum0 = std::accumulate(img.v.begin(), img.v.end(), 0.0);
            const auto [min0, max0] = std::minmax_element(img.v.begin(), img.v.end());

            double prev_var = -1;
            Matrix cur = img;
            pipeline::PipelineConfig one = cfg;
            one.iterations = 1;
            for (int step = 0; step < 10; ++step) {
                cur = pipeline::diffuse(cur, one);
                const double mean =
                    std::accumulate(cur.v.begin(), cur.v.end(), 0.0) / cur.v.size();
                double var = 0;
                for (double v : cur.v) var += (v - mean) * (v - mean);
                if (prev_var >= 0) CHECK(var <= prev_var + 1e-12);
                prev_var = var;
            }
            const Matrix full = pipeline::diffuse(img, cfg);
            // ten one-step applications == one ten-step application
            for (size_t i = 0; i < full.v.size(); ++i) {
                CHECK(std::fabs(full.v[i] - cur.v[i]) < 1e-12);
            }
            const double sum1 = std::accumulate(full.v.begin(), full.v.end(), 0.0);
            CHECK(std::fabs(sum1 - sum0) <= 1e-6 * std::fabs(sum0));
            const auto [min1, max1] = std::minmax_element(full.v.begin(), full.v.end());
            CHECK(*min1 >= *min0 - 1e-12);
            CHECK(*max1 <= *max0 + 1e-12);
        }
    }

    TEST_CASE("uniform image is a fixed point") {
        pipeline::PipelineConfig cfg;
        Matrix img(16, 16);
        for (auto& v : img.v) v = 0.37;
        const Matrix out = pipeline::diffuse(img, cfg);
        for (double v : out.v) CHECK(v == 0.37);
    }

    TEST_CASE("disk mask on a synthetic disk") {
        pipeline::PipelineConfig cfg;
        const int n = 64;
        Matrix img(n, n);
        std::set<size_t> disk_pixels;
        const double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0, radius = 24;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double d = std::hypot(r - cy, c - cx);
                if (d <= radius) {
                    img.at(r, c) = 0.9;
                    disk_pixels.insert(static_cast<size_t>(r) * n + c);
                } else {
                    img.at(r, c) = 0.01;
                }
            }
        }
        SUBCASE("mask equals the disk exactly") {
            const auto mask = pipeline::disk_mask(img, cfg);
            std::set<size_t> got;
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) {
                    if (mask.mask.at(r, c)) got.insert(static_cast<size_t>(r) * n + c);
                }
            }
            CHECK(got == disk_pixels);
        }
        SUBCASE("implanted dark filament stays inside via hole filling") {
            for (int c = 28; c < 36; ++c) img.at(32, c) = 0.03;  // below the brightness cut
            const auto mask = pipeline::disk_mask(img, cfg);
            for (int c = 28; c < 36; ++c) CHECK(mask.mask.at(32, c));
            CHECK(mask.mask.count() == disk_pixels.size());
        }
        SUBCASE("all-dark image has no disk") {
            Matrix dark(8, 8);
            CHECK_THROWS_AS(pipeline::disk_mask(dark, cfg), pipeline::PipelineError);
        }
        SUBCASE("secondary blob loses to the disk") {
            img.at(0, 0) = img.at(0, 1) = 0.95;  // small bright corner blob
            const auto mask = pipeline::disk_mask(img, cfg);
            CHECK_FALSE(mask.mask.at(0, 0));
            CHECK_FALSE(mask.mask.at(0, 1));
        }
    }

    TEST_CASE("threshold formulas") {
        Matrix vals = make_matrix(1, 3, {0.4, 0.5, 0.6});
        BoolMatrix all(1, 3);
        all.at(0, 0) = all.at(0, 1) = all.at(0, 2) = true;
        pipeline::DiskMask mask{all};
        pipeline::PipelineConfig cfg;
        cfg.k = 1.0;
        SUBCASE("mad rule") {
            cfg.threshold_method = pipeline::ThresholdMethod::mad;
            // median .5, MAD .1 -> T = .5 - 1.4826*.1
            CHECK(std::fabs(pipeline::compute_threshold(vals, mask, cfg) - 0.35174) < 1e-12);
        }
        SUBCASE("sigma rule") {
            cfg.threshold_method = pipeline::ThresholdMethod::sigma;
            // mean .5, population stddev sqrt(0.02/3)
            CHECK(std::fabs(pipeline::compute_threshold(vals, mask, cfg) -
                            0.4183503419072274) < 1e-12);
        }
        SUBCASE("degenerate spread") {
            cfg.threshold_method = pipeline::ThresholdMethod::mad;
            Matrix flat = make_matrix(1, 3, {0.5, 0.5, 0.5});
            CHECK_THROWS_AS(pipeline::compute_threshold(flat, mask, cfg),
                            pipeline::PipelineError);
        }
    }

    TEST_CASE("order statistics") {
        CHECK(pipeline::median_of({3, 1, 2}) == 2.0);
        CHECK(pipeline::median_of({4, 1, 3, 2}) == 2.5);
        CHECK(pipeline::median_of({}) == 0.0);
        std::vector<double> v100;
        for (int i = 1; i <= 100; ++i) v100.push_back(i);
        CHECK(pipeline::percentile_nearest_rank(v100, 99) == 99.0);
        CHECK(pipeline::percentile_nearest_rank(v100, 100) == 100.0);
        CHECK(pipeline::percentile_nearest_rank({1, 2, 3, 4}, 50) == 2.0);
        CHECK(pipeline::percentile_nearest_rank({7}, 1) == 7.0);
    }

    TEST_CASE("component extraction") {
        // 6x6: an L of 5 px (top-left), a diagonal pair, and a lone pixel
        const int n = 6;
        Matrix diffused(n, n);
        for (auto& v : diffused.v) v = 0.9;
        BoolMatrix allmask(n, n);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) allmask.at(r, c) = true;
        }
        auto dark = [&](int r, int c) { diffused.at(r, c) = 0.1; };
        dark(0, 0); dark(0, 1); dark(1, 0); dark(2, 0); dark(2, 1);  // L: 5 px
        dark(3, 4); dark(4, 5);                                      // diagonal pair: 8-conn
        dark(5, 0);                                                  // singleton
        Matrix normalized = diffused;  // intensities to report

        pipeline::PipelineConfig cfg;
        cfg.min_area = 2;
        const auto catalog = pipeline::extract_filaments(diffused, normalized,
                                                         pipeline::DiskMask{allmask}, 0.5, cfg);
        REQUIRE(catalog.entries.size() == 2);  // singleton dropped
        CHECK(catalog.entries[0].label == 1);
        CHECK(catalog.entries[0].area_px == 5);  // raster-first component
        CHECK(catalog.entries[1].label == 2);
        CHECK(catalog.entries[1].area_px == 2);
        CHECK(catalog.entries[1].bbox_min_row == 3);
        CHECK(catalog.entries[1].bbox_max_row == 4);
        CHECK(catalog.entries[1].bbox_min_col == 4);
        CHECK(catalog.entries[1].bbox_max_col == 5);
        CHECK(catalog.entries[1].centroid_row == doctest::Approx(3.5));
        CHECK(catalog.entries[1].centroid_col == doctest::Approx(4.5));
        CHECK(catalog.entries[0].mean_intensity == doctest::Approx(0.1));
        // label map: background 0, dropped singleton 0
        CHECK(catalog.label_map[0] == 1);
        CHECK(catalog.label_map[static_cast<size_t>(5) * n + 0] == 0);
        CHECK(catalog.label_map[static_cast<size_t>(3) * n + 4] == 2);
    }

    TEST_CASE("masked pixels cannot join components") {
        Matrix diffused(1, 3);
        diffused.at(0, 0) = diffused.at(0, 1) = diffused.at(0, 2) = 0.0;
        BoolMatrix mask(1, 3);
        mask.at(0, 0) = true;
        mask.at(0, 1) = false;  // off-disk gap
        mask.at(0, 2) = true;
        pipeline::PipelineConfig cfg;
        cfg.min_area = 1;
        const auto catalog = pipeline::extract_filaments(diffused, diffused,
                                                         pipeline::DiskMask{mask}, 0.5, cfg);
        CHECK(catalog.entries.size() == 2);
    }

    TEST_CASE("labeling equals flood fill on random masks") {
        std::mt19937_64 rng(41);
        for (int trial = 0; trial < 10; ++trial) {
            const int rows = 1 + static_cast<int>(rng() % 64);
            const int cols = 1 + static_cast<int>(rng() % 64);
            std::vector<std::uint8_t> cells(static_cast<size_t>(rows) * cols);
            for (auto& c : cells) c = (rng() % 100) < 45 ? 1 : 0;

            Matrix diffused(rows, cols);
            BoolMatrix mask(rows, cols);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    mask.at(r, c) = true;
                    diffused.at(r, c) = cells[static_cast<size_t>(r) * cols + c] ? 0.0 : 1.0;
                }
            }
            pipeline::PipelineConfig cfg;
            cfg.min_area = 1;
            const auto catalog = pipeline::extract_filaments(
                diffused, diffused, pipeline::DiskMask{mask}, 0.5, cfg);

            const auto want =
                oracle::components_of(oracle::flood_label(cells, rows, cols, 8));
            std::vector<int> got_labels(catalog.label_map.begin(), catalog.label_map.end());
            const auto got = oracle::components_of(got_labels);
            REQUIRE(got.size() == want.size());
            CHECK(got.size() == catalog.entries.size());
            // identical label numbering (raster order) and identical pixel sets
            for (const auto& [label, pixels] : want) {
                REQUIRE(got.count(label));
                CHECK(got.at(label) == pixels);
            }
        }
    }

    TEST_CASE("config validation and json") {
        pipeline::PipelineConfig cfg;
        CHECK_NOTHROW(cfg.validate());
        auto bad = cfg;
        bad.lam = 0.3;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.lam = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.kappa = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.disk_frac = 1.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.min_area = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.iterations = -1;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

        cfg.conduction = pipeline::Conduction::rational;
        cfg.threshold_method = pipeline::ThresholdMethod::sigma;
        cfg.k = 2.5;
        const auto round = pipeline::pipeline_config_from_json(
            pipeline::pipeline_config_to_json(cfg));
        CHECK(round.conduction == cfg.conduction);
        CHECK(round.threshold_method == cfg.threshold_method);
        CHECK(round.k == cfg.k);
        CHECK(round.lam == cfg.lam);
        CHECK(pipeline::pipeline_config_to_json(cfg).at("connectivity") == 8);
    }
}

// ===========================================================================
// Cache store (LRU + watermarks + pinning)
// ===========================================================================

namespace {

// Drives one access against the store the way the HTTP layer would.
void store_access(CacheStore& store, const std::string& name, std::uint64_t size) {
    auto acquired = store.acquire(name);
    if (acquired.role == CacheStore::Acquired::Role::hit) return;
    REQUIRE(acquired.role == CacheStore::Acquired::Role::leader);
    const auto temp = store.temp_path();
    {
        std::ofstream out(temp, std::ios::binary);
        out << std::string(size, 'x');
    }
    store.finish_download(name, temp, size, 200);
}

}  // namespace

TEST_SUITE("cache_store") {
    TEST_CASE("watermark eviction, oldest first") {
        DirGuard guard("store-wm");
        CacheStore store(guard.dir, 100, 0.90, 0.80);
        store_access(store, "/A", 40);
        store_access(store, "/B", 40);
        CHECK(store.usage().bytes_used == 80);  // 80 <= 90: no eviction yet
        store_access(store, "/C", 15);
        // 95 > 90 -> evict A (oldest) -> 55 <= 80 stop
        CHECK(store.usage().bytes_used == 55);
        CHECK(store.cached_set() == std::vector<std::string>{"/B", "/C"});
    }

    TEST_CASE("recency bump protects re-accessed entries") {
        DirGuard guard("store-bump");
        CacheStore store(guard.dir, 100, 0.90, 0.80);
        store_access(store, "/A", 40);
        store_access(store, "/B", 40);
        store_access(store, "/A", 40);  // hit: A becomes most recent
        store_access(store, "/C", 15);
        CHECK(store.cached_set() == std::vector<std::string>{"/A", "/C"});
        CHECK(store.usage().bytes_used == 55);
    }

    TEST_CASE("oversized objects pass through unindexed") {
        DirGuard guard("store-big");
        CacheStore store(guard.dir, 100, 0.90, 0.80);
        CHECK(store.store_limit() == 80);
        auto acquired = store.acquire("/big");
        REQUIRE(acquired.role == CacheStore::Acquired::Role::leader);
        const auto temp = store.temp_path();
        {
            std::ofstream out(temp, std::ios::binary);
            out << std::string(81, 'x');
        }
        store.finish_download("/big", temp, 81, 200);
        const auto outcome = acquired.flight.get();
        CHECK(outcome.ok);
        CHECK_FALSE(outcome.stored);
        CHECK(outcome.size == 81);
        REQUIRE(outcome.file != nullptr);
        // readable through the unlinked descriptor
        char buf[4] = {};
        CHECK(::pread(outcome.file->fd(), buf, 4, 0) == 4);
        CHECK(buf[0] == 'x');
        // never indexed, not on disk, usage untouched
        CHECK(store.usage().bytes_used == 0);
        CHECK(store.usage().object_count == 0);
        CHECK(store.cached_set().empty());
        auto again = store.acquire("/big");
        CHECK(again.role == CacheStore::Acquired::Role::leader);
        store.fail_download("/big", 0, "cleanup");
    }

    TEST_CASE("purge is idempotent and pins survive it") {
        DirGuard guard("store-purge");
        CacheStore store(guard.dir, 1000, 0.90, 0.80);
        store_access(store, "/x", 10);
        auto pinned = store.acquire("/x");
        REQUIRE(pinned.role == CacheStore::Acquired::Role::hit);
        CHECK(store.purge("/x"));
        CHECK_FALSE(store.purge("/x"));
        CHECK(store.usage().bytes_used == 0);
        char buf[10];
        CHECK(::pread(pinned.file->fd(), buf, 10, 0) == 10);  // deferred deletion
        // a new access misses and re-leads
        CHECK(store.acquire("/x").role == CacheStore::Acquired::Role::leader);
        store.fail_download("/x", 0, "cleanup");
    }

    TEST_CASE("failed downloads propagate to followers and clear the flight") {
        DirGuard guard("store-fail");
        CacheStore store(guard.dir, 1000, 0.90, 0.80);
        auto leader = store.acquire("/y");
        REQUIRE(leader.role == CacheStore::Acquired::Role::leader);
        auto follower = store.acquire("/y");
        REQUIRE(follower.role == CacheStore::Acquired::Role::follower);
        store.fail_download("/y", 404, "upstream said no");
        const auto outcome = follower.flight.get();
        CHECK_FALSE(outcome.ok);
        CHECK(outcome.status == 404);
        // flight cleared: the next acquire starts fresh
        CHECK(store.acquire("/y").role == CacheStore::Acquired::Role::leader);
        store.fail_download("/y", 0, "cleanup");
    }

    TEST_CASE("trace equivalence with the reference simulator") {
        std::mt19937_64 seeds(4242);
        for (int run = 0; run < 3; ++run) {
            const std::uint64_t seed = seeds();
            DirGuard guard("store-trace");
            CacheStore store(guard.dir, 10, 0.90, 0.80);
            oracle::LruSim sim(10, 0.90, 0.80);
            std::mt19937_64 rng(seed);
            for (int i = 0; i < 2000; ++i) {
                const std::string name = "/obj" + std::to_string(rng() % 100);
                store_access(store, name, 1);
                sim.access(name, 1);
            }
            const auto got = store.cached_set();
            const std::set<std::string> got_set(got.begin(), got.end());
            CHECK(got_set == sim.cached());
            CHECK(store.usage().bytes_used == sim.used());
        }
    }

    TEST_CASE("mixed-size trace equivalence") {
        DirGuard guard("store-mixed");
        CacheStore store(guard.dir, 100, 0.90, 0.80);
        oracle::LruSim sim(100, 0.90, 0.80);
        std::mt19937_64 rng(77);
        std::vector<std::uint64_t> size_of(30);
        for (auto& s : size_of) s = 1 + rng() % 30;
        for (int i = 0; i < 3000; ++i) {
            const size_t pick = rng() % size_of.size();
            const std::string name = "/m" + std::to_string(pick);
            store_access(store, name, size_of[pick]);
            sim.access(name, size_of[pick]);
        }
        const auto got = store.cached_set();
        CHECK(std::set<std::string>(got.begin(), got.end()) == sim.cached());
        CHECK(store.usage().bytes_used == sim.used());
    }
}

// ===========================================================================
// Synthetic image generator
// ===========================================================================

TEST_SUITE("synth") {
    TEST_CASE("deterministic for a seed") {
        synth::SynthConfig cfg;
        cfg.noise_sigma = 0.02;
        cfg.seed = 9;
        const auto a = synth::synth_solar_image(cfg);
        const auto b = synth::synth_solar_image(cfg);
        CHECK(a.image.pixels.v == b.image.pixels.v);
        cfg.seed = 10;
        const auto c = synth::synth_solar_image(cfg);
        CHECK(a.image.pixels.v != c.image.pixels.v);
    }

    TEST_CASE("ground truth matches painted pixels") {
        synth::SynthConfig cfg;  // noiseless
        cfg.filaments = 3;
        const auto result = synth::synth_solar_image(cfg);
        REQUIRE(result.truth.filament_pixels.size() == 3);
        for (const auto& pix : result.truth.filament_pixels) {
            CHECK(pix.size() > 0);
            for (size_t at : pix) {
                CHECK(result.image.pixels.v[at] == cfg.filament_intensity);
            }
        }
        // filaments are disjoint
        std::set<size_t> seen;
        size_t total = 0;
        for (const auto& pix : result.truth.filament_pixels) {
            seen.insert(pix.begin(), pix.end());
            total += pix.size();
        }
        CHECK(seen.size() == total);
        // disk truth covers the filaments
        const std::set<size_t> disk(result.truth.disk_pixels.begin(),
                                    result.truth.disk_pixels.end());
        for (size_t at : seen) CHECK(disk.count(at) == 1);
    }
}
