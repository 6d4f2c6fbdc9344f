#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rater {

// Internally every index (item, rater, category) is 0-based. Files and
// reports are 1-based.
inline constexpr int kMissing = -1;

struct Rating {
  int item = 0;
  int rater = 0;
  int rating = 0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

struct LongRatings {
  std::vector<Rating> entries;
  int items = 0;
  int raters = 0;
  int categories = 0;
};

struct WideRatings {
  int items = 0;
  int raters = 0;
  int categories = 0;
  std::vector<int> cells;  // items x raters, row-major; kMissing marks a gap

  int at(int item, int rater) const { return cells[static_cast<std::size_t>(item) * raters + rater]; }
};

struct GroupedRatings {
  int raters = 0;
  int categories = 0;
  std::vector<int> patterns;  // pattern_count() x raters, row-major
  std::vector<long long> tallies;

  int pattern_count() const { return static_cast<int>(tallies.size()); }
  int at(int pattern, int rater) const { return patterns[static_cast<std::size_t>(pattern) * raters + rater]; }
  long long total() const;
};

enum class DataFormat { long_format, wide, grouped };

const char* format_name(DataFormat f);
DataFormat parse_format_name(std::string_view name);

struct Provenance {
  std::string source;
  std::string options;
  std::vector<std::string> warnings;
};

// Immutable, validated rating data in one of the three layouts. Item and
// rater labels from the input file are kept for reporting; the payload uses
// dense indices.
class RatingDataset {
 public:
  using Payload = std::variant<LongRatings, WideRatings, GroupedRatings>;

  RatingDataset(Payload payload, std::vector<std::string> item_labels,
                std::vector<std::string> rater_labels, Provenance provenance = {});

  DataFormat format() const;
  const Payload& payload() const { return payload_; }
  const LongRatings* as_long() const { return std::get_if<LongRatings>(&payload_); }
  const WideRatings* as_wide() const { return std::get_if<WideRatings>(&payload_); }
  const GroupedRatings* as_grouped() const { return std::get_if<GroupedRatings>(&payload_); }

  int categories() const;
  int raters() const;
  // Number of items. For grouped data this is the sum of the tallies.
  long long items() const;
  // Number of individual ratings.
  long long rating_count() const;

  const std::vector<std::string>& item_labels() const { return item_labels_; }
  const std::vector<std::string>& rater_labels() const { return rater_labels_; }
  const Provenance& provenance() const { return provenance_; }

 private:
  Payload payload_;
  std::vector<std::string> item_labels_;
  std::vector<std::string> rater_labels_;
  Provenance provenance_;
};

struct ParseOptions {
  bool has_header = true;
  std::string missing_token = "NA";
  // Category count override; must not be smaller than the largest rating.
  std::optional<int> categories;
  // Header names of the item, rater and rating columns in long files.
  std::array<std::string, 3> column_names{"item", "rater", "rating"};
  // Whether a wide file carries a leading item column. Unset: detected from
  // a header whose first cell is "item".
  std::optional<bool> item_column;
};

RatingDataset parse_long(std::string_view csv, const ParseOptions& options = {},
                         std::string source = {});
RatingDataset parse_wide(std::string_view csv, const ParseOptions& options = {},
                         std::string source = {});
RatingDataset parse_grouped(std::string_view csv, const ParseOptions& options = {},
                            std::string source = {});
RatingDataset parse(std::string_view csv, DataFormat format, const ParseOptions& options = {},
                    std::string source = {});

RatingDataset to_long(const RatingDataset& dataset);
RatingDataset to_wide(const RatingDataset& dataset);
RatingDataset to_grouped(const RatingDataset& dataset);
RatingDataset convert(const RatingDataset& dataset, DataFormat format);

// Canonical CSV with header; inverse of the parse_* functions.
std::string to_csv(const RatingDataset& dataset);

// Hex FNV-1a digest of the canonical CSV plus the category count.
std::string fingerprint(const RatingDataset& dataset);

std::string read_file(const std::string& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace rater
