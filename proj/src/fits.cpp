#include "solarfed/fits.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace solarfed::fits {

namespace {

bool keyword_char_ok(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
}

std::string rstrip(std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

bool is_integer_token(const std::string& t) {
    if (t.empty()) return false;
    size_t i = (t[0] == '+' || t[0] == '-') ? 1 : 0;
    if (i == t.size()) return false;
    for (; i < t.size(); ++i) {
        if (t[i] < '0' || t[i] > '9') return false;
    }
    return true;
}

// Fixed format puts the value right-justified in bytes 11-30; free format
// starts anywhere after "= ". Parsing ignores position entirely.
CardValue parse_value_token(const std::string& token, const std::string& keyword) {
    if (token == "T") return true;
    if (token == "F") return false;
    if (is_integer_token(token)) {
        try {
            return static_cast<std::int64_t>(std::stoll(token));
        } catch (const std::exception&) {
            throw FitsError(FitsErrc::bad_card, "integer out of range in card " + keyword);
        }
    }
    std::string t = token;
    for (auto& c : t) {
        if (c == 'D' || c == 'd') c = 'E';  // FORTRAN exponent form
    }
    try {
        size_t used = 0;
        double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw FitsError(FitsErrc::bad_card, "unparseable value in card " + keyword + ": \"" + token + "\"");
    }
}

Card parse_card(const char* raw) {
    Card card;
    std::string kw(raw, 8);
    kw = rstrip(kw);
    for (char c : kw) {
        if (!keyword_char_ok(c))
            throw FitsError(FitsErrc::bad_card, "bad keyword byte in \"" + kw + "\"");
    }
    card.keyword = kw;

    const std::string rest(raw + 8, 72);
    if (rest.rfind("= ", 0) != 0 || kw.empty() || kw == "COMMENT" || kw == "HISTORY") {
        // commentary card: everything after the keyword is freeform text
        card.value = std::monostate{};
        card.comment = rstrip(rest.rfind("= ", 0) == 0 ? rest.substr(2) : rest);
        return card;
    }

    size_t i = 2;
    while (i < rest.size() && rest[i] == ' ') ++i;
    if (i == rest.size()) {
        card.value = std::monostate{};
        return card;
    }

    if (rest[i] == '\'') {
        std::string s;
        ++i;
        bool closed = false;
        while (i < rest.size()) {
            if (rest[i] == '\'') {
                if (i + 1 < rest.size() && rest[i + 1] == '\'') {
                    s.push_back('\'');
                    i += 2;
                    continue;
                }
                closed = true;
                ++i;
                break;
            }
            s.push_back(rest[i]);
            ++i;
        }
        if (!closed) throw FitsError(FitsErrc::bad_card, "unterminated string in card " + kw);
        card.value = rstrip(s);  // trailing blanks are not significant
    } else {
        std::string token;
        while (i < rest.size() && rest[i] != ' ' && rest[i] != '/') {
            token.push_back(rest[i]);
            ++i;
        }
        card.value = parse_value_token(token, kw);
    }

    while (i < rest.size() && rest[i] == ' ') ++i;
    if (i < rest.size() && rest[i] == '/') {
        ++i;
        if (i < rest.size() && rest[i] == ' ') ++i;
        card.comment = rstrip(rest.substr(i));
    }
    return card;
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17G", v);
    std::string s(buf);
    if (s.find('.') == std::string::npos && s.find('E') == std::string::npos &&
        s.find("INF") == std::string::npos && s.find("NAN") == std::string::npos) {
        s += ".0";
    }
    return s;
}

void serialize_card(const Card& card, std::string& out) {
    std::string line = card.keyword;
    line.resize(8, ' ');

    if (std::holds_alternative<std::monostate>(card.value)) {
        line += card.comment;
    } else {
        line += "= ";
        std::string value;
        if (auto* b = std::get_if<bool>(&card.value)) {
            value = *b ? "T" : "F";
        } else if (auto* i = std::get_if<std::int64_t>(&card.value)) {
            value = std::to_string(*i);
        } else if (auto* d = std::get_if<double>(&card.value)) {
            value = format_real(*d);
        } else if (auto* s = std::get_if<std::string>(&card.value)) {
            std::string quoted = "'";
            std::string padded = *s;
            if (padded.size() < 8) padded.resize(8, ' ');
            for (char c : padded) {
                quoted.push_back(c);
                if (c == '\'') quoted.push_back('\'');
            }
            quoted.push_back('\'');
            value = quoted;
        }
        if (!std::holds_alternative<std::string>(card.value) && value.size() <= 20) {
            line += std::string(20 - value.size(), ' ');  // right-justify to byte 30
        }
        line += value;
        if (!card.comment.empty() && line.size() + 3 < kCardSize) {
            line += " / ";
            line += card.comment;
        }
    }

    if (line.size() > kCardSize) line.resize(kCardSize);
    line.resize(kCardSize, ' ');
    out += line;
}

bool structural_keyword(const std::string& kw) {
    return kw == "SIMPLE" || kw == "BITPIX" || kw == "NAXIS" || kw == "NAXIS1" ||
           kw == "NAXIS2" || kw == "BSCALE" || kw == "BZERO" || kw == "END";
}

std::uint64_t load_be(const std::uint8_t* p, size_t n) {
    std::uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
    return v;
}

void store_be(std::uint8_t* p, std::uint64_t v, size_t n) {
    for (size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * (n - 1 - i)));
}

size_t bytes_per_sample(int bitpix) { return static_cast<size_t>(std::abs(bitpix)) / 8; }

}  // namespace

bool bitpix_supported(int bitpix) {
    return bitpix == 8 || bitpix == 16 || bitpix == 32 || bitpix == -32 || bitpix == -64;
}

std::optional<CardValue> FitsHeader::get(const std::string& keyword) const {
    for (const auto& c : cards) {
        if (c.keyword == keyword) return c.value;
    }
    return std::nullopt;
}

std::optional<std::int64_t> FitsHeader::get_int(const std::string& keyword) const {
    auto v = get(keyword);
    if (!v) return std::nullopt;
    if (auto* i = std::get_if<std::int64_t>(&*v)) return *i;
    return std::nullopt;
}

std::optional<double> FitsHeader::get_real(const std::string& keyword) const {
    auto v = get(keyword);
    if (!v) return std::nullopt;
    if (auto* d = std::get_if<double>(&*v)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&*v)) return static_cast<double>(*i);
    return std::nullopt;
}

FitsImage read_fits(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % kBlockSize != 0)
        throw FitsError(FitsErrc::bad_block,
                        "length " + std::to_string(bytes.size()) + " not a multiple of 2880");
    if (bytes.empty()) throw FitsError(FitsErrc::not_fits, "empty stream");

    FitsImage img;
    bool saw_end = false;
    size_t offset = 0;
    while (!saw_end) {
        if (offset + kBlockSize > bytes.size())
            throw FitsError(FitsErrc::truncated, "header has no END card");
        for (size_t c = 0; c < kBlockSize / kCardSize; ++c) {
            const char* raw = reinterpret_cast<const char*>(bytes.data() + offset + c * kCardSize);
            if (std::strncmp(raw, "END", 3) == 0 &&
                rstrip(std::string(raw, 8)) == "END") {
                saw_end = true;
                break;
            }
            img.header.cards.push_back(parse_card(raw));
        }
        offset += kBlockSize;
    }

    if (img.header.cards.empty() || img.header.cards[0].keyword != "SIMPLE")
        throw FitsError(FitsErrc::not_fits, "first card is not SIMPLE");
    auto simple = img.header.get("SIMPLE");
    if (!std::holds_alternative<bool>(*simple) || !std::get<bool>(*simple))
        throw FitsError(FitsErrc::not_fits, "SIMPLE is not T");

    auto bitpix = img.header.get_int("BITPIX");
    if (!bitpix) throw FitsError(FitsErrc::not_fits, "missing BITPIX");
    if (!bitpix_supported(static_cast<int>(*bitpix)))
        throw FitsError(FitsErrc::unsupported_bitpix, "BITPIX " + std::to_string(*bitpix));
    const int bp = static_cast<int>(*bitpix);

    auto naxis = img.header.get_int("NAXIS");
    if (!naxis) throw FitsError(FitsErrc::not_fits, "missing NAXIS");
    if (*naxis != 2) throw FitsError(FitsErrc::unsupported_naxis, "NAXIS " + std::to_string(*naxis));
    auto naxis1 = img.header.get_int("NAXIS1");
    auto naxis2 = img.header.get_int("NAXIS2");
    if (!naxis1 || !naxis2 || *naxis1 < 1 || *naxis2 < 1)
        throw FitsError(FitsErrc::unsupported_naxis, "NAXIS1/NAXIS2 must be >= 1");

    img.bscale = img.header.get_real("BSCALE").value_or(1.0);
    img.bzero = img.header.get_real("BZERO").value_or(0.0);
    if (bp > 0 && img.header.get("BLANK"))
        throw FitsError(FitsErrc::blank_unsupported, "BLANK with integer BITPIX");

    const size_t cols = static_cast<size_t>(*naxis1);
    const size_t rows = static_cast<size_t>(*naxis2);
    const size_t sample = bytes_per_sample(bp);
    const size_t need = rows * cols * sample;
    if (bytes.size() - offset < need)
        throw FitsError(FitsErrc::truncated, "data shorter than NAXIS1*NAXIS2*|BITPIX|/8");

    img.pixels = Matrix(static_cast<int>(rows), static_cast<int>(cols));
    const std::uint8_t* p = bytes.data() + offset;
    for (size_t i = 0; i < rows * cols; ++i, p += sample) {
        double stored;
        switch (bp) {
            case 8:
                stored = static_cast<double>(*p);
                break;
            case 16:
                stored = static_cast<double>(static_cast<std::int16_t>(load_be(p, 2)));
                break;
            case 32:
                stored = static_cast<double>(static_cast<std::int32_t>(load_be(p, 4)));
                break;
            case -32:
                stored = static_cast<double>(
                    std::bit_cast<float>(static_cast<std::uint32_t>(load_be(p, 4))));
                break;
            default:
                stored = std::bit_cast<double>(load_be(p, 8));
                break;
        }
        img.pixels.v[i] = img.bscale * stored + img.bzero;
    }

    const size_t data_blocks = (need + kBlockSize - 1) / kBlockSize;
    img.extensions_ignored = bytes.size() > offset + data_blocks * kBlockSize;
    return img;
}

std::vector<std::uint8_t> write_fits(const FitsImage& image, int target_bitpix) {
    if (!bitpix_supported(target_bitpix))
        throw FitsError(FitsErrc::unsupported_bitpix, "BITPIX " + std::to_string(target_bitpix));
    if (image.pixels.rows < 1 || image.pixels.cols < 1)
        throw FitsError(FitsErrc::unsupported_naxis, "image must be at least 1x1");

    std::string header;
    serialize_card({"SIMPLE", true, "conforms to FITS standard"}, header);
    serialize_card({"BITPIX", static_cast<std::int64_t>(target_bitpix), "bits per stored sample"},
                   header);
    serialize_card({"NAXIS", std::int64_t{2}, ""}, header);
    serialize_card({"NAXIS1", static_cast<std::int64_t>(image.pixels.cols), ""}, header);
    serialize_card({"NAXIS2", static_cast<std::int64_t>(image.pixels.rows), ""}, header);
    if (image.bscale != 1.0) serialize_card({"BSCALE", image.bscale, ""}, header);
    if (image.bzero != 0.0) serialize_card({"BZERO", image.bzero, ""}, header);
    for (const auto& card : image.header.cards) {
        if (structural_keyword(card.keyword)) continue;
        serialize_card(card, header);
    }
    header += "END";
    header.resize((header.size() + kBlockSize - 1) / kBlockSize * kBlockSize, ' ');

    const size_t sample = bytes_per_sample(target_bitpix);
    const size_t count = image.pixels.size();
    std::vector<std::uint8_t> out(header.size() + (count * sample + kBlockSize - 1) / kBlockSize *
                                                      kBlockSize,
                                  0);
    std::memcpy(out.data(), header.data(), header.size());

    std::uint8_t* p = out.data() + header.size();
    for (size_t i = 0; i < count; ++i, p += sample) {
        const double physical = image.pixels.v[i];
        if (target_bitpix < 0) {
            const double stored =
                (image.bscale == 1.0 && image.bzero == 0.0)
                    ? physical
                    : (physical - image.bzero) / image.bscale;
            if (target_bitpix == -32) {
                store_be(p, std::bit_cast<std::uint32_t>(static_cast<float>(stored)), 4);
            } else {
                store_be(p, std::bit_cast<std::uint64_t>(stored), 8);
            }
            continue;
        }
        const double scaled = (physical - image.bzero) / image.bscale;
        if (!std::isfinite(scaled))
            throw FitsError(FitsErrc::range_overflow, "non-finite stored value");
        const double rounded = std::nearbyint(scaled);
        std::int64_t lo, hi;
        switch (target_bitpix) {
            case 8:
                lo = 0;
                hi = 255;
                break;
            case 16:
                lo = std::numeric_limits<std::int16_t>::min();
                hi = std::numeric_limits<std::int16_t>::max();
                break;
            default:
                lo = std::numeric_limits<std::int32_t>::min();
                hi = std::numeric_limits<std::int32_t>::max();
                break;
        }
        if (rounded < static_cast<double>(lo) || rounded > static_cast<double>(hi))
            throw FitsError(FitsErrc::range_overflow,
                            "value " + std::to_string(physical) + " does not fit BITPIX " +
                                std::to_string(target_bitpix));
        const std::int64_t stored = static_cast<std::int64_t>(rounded);
        store_be(p, static_cast<std::uint64_t>(stored), sample);
    }
    return out;
}

FitsImage read_fits_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return read_fits(bytes);
}

void write_fits_file(const FitsImage& image, int target_bitpix,
                     const std::filesystem::path& path) {
    auto bytes = write_fits(image, target_bitpix);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace solarfed::fits
