#pragma once

#include <string>
#include <string_view>

#include "rater/fit.hpp"

namespace rater {

// One JSON document. Numeric matrices (draws, modes, class probabilities,
// diagnostics) are base64 blocks of little-endian doubles; the fitted dataset
// travels as plain integer arrays with its labels. No timestamps, so equal
// fits give equal bytes.
std::string save_archive(const FitResult& fit);

// Throws ArchiveError on malformed or inconsistent input.
FitResult load_archive(std::string_view text);

}  // namespace rater
