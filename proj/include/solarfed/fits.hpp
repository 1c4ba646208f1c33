#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "solarfed/matrix.hpp"

namespace solarfed::fits {

inline constexpr size_t kBlockSize = 2880;
inline constexpr size_t kCardSize = 80;

enum class FitsErrc {
    not_fits,            // missing/false SIMPLE, or no header at all
    unsupported_bitpix,
    unsupported_naxis,
    truncated,           // data shorter than the header promises
    bad_block,           // length not a multiple of 2880
    bad_card,            // unparseable 80-byte card
    blank_unsupported,   // BLANK with integer BITPIX
    range_overflow,      // value unrepresentable in the target BITPIX
};

class FitsError : public std::runtime_error {
public:
    FitsError(FitsErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    FitsErrc code() const { return code_; }

private:
    FitsErrc code_;
};

// Card values: monostate marks commentary cards (COMMENT/HISTORY/blank).
using CardValue = std::variant<std::monostate, bool, std::int64_t, double, std::string>;

struct Card {
    std::string keyword;
    CardValue value;
    std::string comment;
};

struct FitsHeader {
    std::vector<Card> cards;  // in file order, END excluded

    std::optional<CardValue> get(const std::string& keyword) const;  // first match
    std::optional<std::int64_t> get_int(const std::string& keyword) const;
    std::optional<double> get_real(const std::string& keyword) const;  // accepts int cards
};

// Decoded 2-D primary HDU. pixels holds physical values
// (bscale * stored + bzero), rows = NAXIS2, cols = NAXIS1.
struct FitsImage {
    FitsHeader header;
    Matrix pixels;
    double bscale = 1.0;
    double bzero = 0.0;
    bool extensions_ignored = false;  // bytes beyond the primary HDU were present
};

FitsImage read_fits(std::span<const std::uint8_t> bytes);

// Serializes to the given BITPIX (8, 16, 32, -32, -64). Integer targets
// require (physical - bzero) / bscale to round to an in-range integer.
std::vector<std::uint8_t> write_fits(const FitsImage& image, int target_bitpix);

FitsImage read_fits_file(const std::filesystem::path& path);
void write_fits_file(const FitsImage& image, int target_bitpix,
                     const std::filesystem::path& path);

bool bitpix_supported(int bitpix);

}  // namespace solarfed::fits
