#include "rater/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "rater/error.hpp"

namespace rater {

namespace {

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? cell : trim(cell));
      cell.clear();
      was_quoted = false;
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  out.push_back(was_quoted ? cell : trim(cell));
  return out;
}

std::vector<CsvRow> read_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    if (!trim(line).empty()) rows.push_back({line_no, split_csv_line(line, line_no)});
    if (end == text.size()) break;
    pos = end + 1;
  }
  return rows;
}

std::optional<long long> as_integer(const std::string& s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool is_missing(const std::string& cell, const ParseOptions& opt) {
  return cell.empty() || cell == opt.missing_token;
}

int parse_rating(const std::string& cell, std::size_t line) {
  auto v = as_integer(cell);
  if (!v) throw ParseError("rating '" + cell + "' is not an integer", line);
  if (*v <= 0)
    throw DomainError("line " + std::to_string(line) + ": rating " + cell +
                      " must be a positive category index");
  if (*v > 1'000'000) throw DomainError("line " + std::to_string(line) + ": rating too large");
  return static_cast<int>(*v - 1);
}

struct LabelIndex {
  std::vector<std::string> labels;
  std::vector<int> codes;
};

// Integer labels are ordered numerically (so dense 1..n files keep their
// indices); anything else keeps first-appearance order.
LabelIndex index_labels(const std::vector<std::string>& raw, const std::vector<std::size_t>& lines,
                        const char* what) {
  LabelIndex out;
  out.codes.resize(raw.size());
  bool numeric = true;
  std::vector<long long> values(raw.size());
  for (std::size_t n = 0; n < raw.size(); ++n) {
    auto v = as_integer(raw[n]);
    if (!v) {
      numeric = false;
      break;
    }
    if (*v <= 0)
      throw DomainError("line " + std::to_string(lines[n]) + ": " + what + " index " + raw[n] +
                        " must be positive");
    values[n] = *v;
  }
  if (numeric) {
    std::vector<long long> uniq = values;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto v : uniq) out.labels.push_back(std::to_string(v));
    for (std::size_t n = 0; n < raw.size(); ++n)
      out.codes[n] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), values[n]) - uniq.begin());
    return out;
  }
  std::unordered_map<std::string, int> seen;
  for (std::size_t n = 0; n < raw.size(); ++n) {
    if (raw[n].empty()) throw ParseError(std::string("empty ") + what + " label", lines[n]);
    auto [it, inserted] = seen.emplace(raw[n], static_cast<int>(out.labels.size()));
    if (inserted) out.labels.push_back(raw[n]);
    out.codes[n] = it->second;
  }
  return out;
}

int resolve_categories(int max_rating, const ParseOptions& opt) {
  int k = max_rating + 1;
  if (opt.categories) {
    if (*opt.categories < k)
      throw DomainError("category override " + std::to_string(*opt.categories) +
                        " is smaller than the largest observed rating " + std::to_string(k));
    k = *opt.categories;
  }
  return k;
}

std::string describe(const ParseOptions& opt, const char* format) {
  std::ostringstream s;
  s << "format=" << format << ";header=" << (opt.has_header ? "yes" : "no")
    << ";missing=" << opt.missing_token;
  if (opt.categories) s << ";categories=" << *opt.categories;
  return s.str();
}

std::vector<std::string> default_labels(int n, const std::string& prefix = {}) {
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void check_width(const CsvRow& row, std::size_t width) {
  if (row.cells.size() != width)
    throw ParseError("expected " + std::to_string(width) + " columns, found " +
                         std::to_string(row.cells.size()),
                     row.line);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

long long GroupedRatings::total() const {
  long long t = 0;
  for (auto n : tallies) t += n;
  return t;
}

const char* format_name(DataFormat f) {
  switch (f) {
    case DataFormat::long_format: return "long";
    case DataFormat::wide: return "wide";
    case DataFormat::grouped: return "grouped";
  }
  return "?";
}

DataFormat parse_format_name(std::string_view name) {
  if (name == "long") return DataFormat::long_format;
  if (name == "wide") return DataFormat::wide;
  if (name == "grouped") return DataFormat::grouped;
  throw ArgumentError("unknown data format '" + std::string(name) + "'");
}

RatingDataset::RatingDataset(Payload payload, std::vector<std::string> item_labels,
                             std::vector<std::string> rater_labels, Provenance provenance)
    : payload_(std::move(payload)),
      item_labels_(std::move(item_labels)),
      rater_labels_(std::move(rater_labels)),
      provenance_(std::move(provenance)) {
  auto check_rating = [](int r, int k) {
    if (r < 0 || r >= k) throw ShapeError("rating " + std::to_string(r + 1) + " outside 1.." + std::to_string(k));
  };
  if (raters() < 1) throw EmptyDataError("dataset has no raters");
  if (categories() < 1) throw EmptyDataError("dataset has no categories");
  if (static_cast<int>(rater_labels_.size()) != raters())
    throw ShapeError("rater label count does not match rater count");

  if (auto* l = as_long()) {
    if (l->entries.empty()) throw EmptyDataError("dataset contains no ratings");
    std::vector<char> seen(l->items, 0);
    for (const auto& e : l->entries) {
      if (e.item < 0 || e.item >= l->items) throw ShapeError("item index out of range");
      if (e.rater < 0 || e.rater >= l->raters) throw ShapeError("rater index out of range");
      check_rating(e.rating, l->categories);
      seen[e.item] = 1;
    }
    for (int i = 0; i < l->items; ++i)
      if (!seen[i]) throw DomainError("item " + std::to_string(i + 1) + " has no ratings");
    if (static_cast<int>(item_labels_.size()) != l->items)
      throw ShapeError("item label count does not match item count");
  } else if (auto* w = as_wide()) {
    if (w->items < 1) throw EmptyDataError("dataset contains no items");
    if (w->cells.size() != static_cast<std::size_t>(w->items) * w->raters)
      throw ShapeError("wide matrix size mismatch");
    for (int i = 0; i < w->items; ++i) {
      bool any = false;
      for (int j = 0; j < w->raters; ++j) {
        int v = w->at(i, j);
        if (v == kMissing) continue;
        check_rating(v, w->categories);
        any = true;
      }
      if (!any) throw DomainError("row " + std::to_string(i + 1) + " has no ratings");
    }
    if (static_cast<int>(item_labels_.size()) != w->items)
      throw ShapeError("item label count does not match item count");
  } else {
    const auto& g = *as_grouped();
    if (g.tallies.empty()) throw EmptyDataError("dataset contains no patterns");
    if (g.patterns.size() != g.tallies.size() * g.raters) throw ShapeError("pattern matrix size mismatch");
    for (auto v : g.patterns) {
      if (v == kMissing) throw UnsupportedError("grouped data cannot contain missing ratings");
      check_rating(v, g.categories);
    }
    for (auto n : g.tallies)
      if (n < 1) throw DomainError("pattern tallies must be positive");
    std::map<std::vector<int>, int> distinct;
    for (int l = 0; l < g.pattern_count(); ++l) {
      std::vector<int> key(g.patterns.begin() + static_cast<long>(l) * g.raters,
                           g.patterns.begin() + static_cast<long>(l + 1) * g.raters);
      if (!distinct.emplace(std::move(key), l).second)
        throw DomainError("grouped patterns must be distinct");
    }
  }
}

DataFormat RatingDataset::format() const {
  switch (payload_.index()) {
    case 0: return DataFormat::long_format;
    case 1: return DataFormat::wide;
    default: return DataFormat::grouped;
  }
}

int RatingDataset::categories() const {
  return std::visit([](const auto& p) { return p.categories; }, payload_);
}

int RatingDataset::raters() const {
  return std::visit([](const auto& p) { return p.raters; }, payload_);
}

long long RatingDataset::items() const {
  if (auto* l = as_long()) return l->items;
  if (auto* w = as_wide()) return w->items;
  return as_grouped()->total();
}

long long RatingDataset::rating_count() const {
  if (auto* l = as_long()) return static_cast<long long>(l->entries.size());
  if (auto* w = as_wide())
    return std::count_if(w->cells.begin(), w->cells.end(), [](int v) { return v != kMissing; });
  const auto& g = *as_grouped();
  return g.total() * g.raters;
}

RatingDataset parse_long(std::string_view csv, const ParseOptions& options, std::string source) {
  auto rows = read_csv(csv);
  std::array<std::size_t, 3> col{0, 1, 2};
  std::size_t first = 0;
  if (options.has_header) {
    if (rows.empty()) throw EmptyDataError("empty file");
    const auto& header = rows.front().cells;
    for (std::size_t c = 0; c < 3; ++c) {
      auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
        return lower(h) == lower(options.column_names[c]);
      });
      if (it == header.end())
        throw ParseError("header has no column named '" + options.column_names[c] + "'", rows.front().line);
      col[c] = static_cast<std::size_t>(it - header.begin());
    }
    first = 1;
  }
  if (rows.size() <= first) throw EmptyDataError("empty file");
  std::size_t width = rows[first].cells.size();
  if (width < 3) throw ParseError("long data needs item, rater and rating columns", rows[first].line);

  std::vector<std::string> items, raters;
  std::vector<std::size_t> lines;
  std::vector<int> ratings;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    check_width(row, width);
    const auto& rating = row.cells[col[2]];
    if (is_missing(rating, options)) continue;
    ratings.push_back(parse_rating(rating, row.line));
    items.push_back(row.cells[col[0]]);
    raters.push_back(row.cells[col[1]]);
    lines.push_back(row.line);
  }
  if (ratings.empty()) throw EmptyDataError("no non-missing ratings");

  auto item_index = index_labels(items, lines, "item");
  auto rater_index = index_labels(raters, lines, "rater");
  LongRatings data;
  data.items = static_cast<int>(item_index.labels.size());
  data.raters = static_cast<int>(rater_index.labels.size());
  data.categories = resolve_categories(*std::max_element(ratings.begin(), ratings.end()), options);
  data.entries.reserve(ratings.size());
  for (std::size_t n = 0; n < ratings.size(); ++n)
    data.entries.push_back({item_index.codes[n], rater_index.codes[n], ratings[n]});
  return RatingDataset(std::move(data), std::move(item_index.labels), std::move(rater_index.labels),
                       {std::move(source), describe(options, "long"), {}});
}

RatingDataset parse_wide(std::string_view csv, const ParseOptions& options, std::string source) {
  auto rows = read_csv(csv);
  if (rows.empty()) throw EmptyDataError("empty file");
  std::size_t first = options.has_header ? 1 : 0;
  bool item_col = options.item_column.value_or(options.has_header && !rows.front().cells.empty() &&
                                               lower(rows.front().cells.front()) == "item");
  if (rows.size() <= first) throw EmptyDataError("empty file");
  std::size_t width = rows[first].cells.size();
  if (options.has_header) width = rows.front().cells.size();
  std::size_t offset = item_col ? 1 : 0;
  if (width <= offset) throw ParseError("wide data needs at least one rater column", rows.front().line);
  int raters = static_cast<int>(width - offset);

  std::vector<std::string> rater_labels;
  if (options.has_header)
    rater_labels.assign(rows.front().cells.begin() + static_cast<long>(offset), rows.front().cells.end());
  else
    rater_labels = default_labels(raters);

  WideRatings data;
  data.raters = raters;
  std::vector<std::string> item_raw;
  std::vector<std::size_t> lines;
  int max_rating = -1;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    check_width(row, width);
    bool any = false;
    for (int j = 0; j < raters; ++j) {
      const auto& cell = row.cells[offset + j];
      if (is_missing(cell, options)) {
        data.cells.push_back(kMissing);
        continue;
      }
      int v = parse_rating(cell, row.line);
      max_rating = std::max(max_rating, v);
      data.cells.push_back(v);
      any = true;
    }
    if (!any) throw DomainError("line " + std::to_string(row.line) + ": row has no ratings");
    item_raw.push_back(item_col ? row.cells.front() : std::to_string(r - first + 1));
    lines.push_back(row.line);
  }
  data.items = static_cast<int>(item_raw.size());
  data.categories = resolve_categories(max_rating, options);
  {
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t n = 0; n < item_raw.size(); ++n)
      if (!seen.emplace(item_raw[n], n).second)
        throw DomainError("line " + std::to_string(lines[n]) + ": item '" + item_raw[n] +
                          "' appears twice; repeated ratings need the long format");
  }
  return RatingDataset(std::move(data), std::move(item_raw), std::move(rater_labels),
                       {std::move(source), describe(options, "wide"), {}});
}

RatingDataset parse_grouped(std::string_view csv, const ParseOptions& options, std::string source) {
  auto rows = read_csv(csv);
  if (rows.empty()) throw EmptyDataError("empty file");
  std::size_t first = options.has_header ? 1 : 0;
  if (rows.size() <= first) throw EmptyDataError("empty file");
  std::size_t width = options.has_header ? rows.front().cells.size() : rows[first].cells.size();
  if (width < 2) throw ParseError("grouped data needs rater columns and a tally column", rows[first].line);
  int raters = static_cast<int>(width - 1);
  std::vector<std::string> rater_labels;
  if (options.has_header)
    rater_labels.assign(rows.front().cells.begin(), rows.front().cells.end() - 1);
  else
    rater_labels = default_labels(raters);

  GroupedRatings data;
  data.raters = raters;
  Provenance prov{std::move(source), describe(options, "grouped"), {}};
  std::map<std::vector<int>, int> index;
  int max_rating = -1;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    check_width(row, width);
    std::vector<int> pattern(raters);
    for (int j = 0; j < raters; ++j) {
      const auto& cell = row.cells[j];
      if (is_missing(cell, options))
        throw UnsupportedError("line " + std::to_string(row.line) +
                               ": grouped data cannot contain missing ratings");
      pattern[j] = parse_rating(cell, row.line);
      max_rating = std::max(max_rating, pattern[j]);
    }
    auto tally = as_integer(row.cells.back());
    if (!tally) throw ParseError("tally '" + row.cells.back() + "' is not an integer", row.line);
    if (*tally < 1) throw DomainError("line " + std::to_string(row.line) + ": tally must be positive");
    auto [it, inserted] = index.emplace(pattern, data.pattern_count());
    if (!inserted) {
      data.tallies[it->second] += *tally;
      prov.warnings.push_back("line " + std::to_string(row.line) +
                              ": duplicate pattern merged into an earlier row");
      continue;
    }
    data.patterns.insert(data.patterns.end(), pattern.begin(), pattern.end());
    data.tallies.push_back(*tally);
  }
  data.categories = resolve_categories(max_rating, options);
  return RatingDataset(std::move(data), {}, std::move(rater_labels), std::move(prov));
}

RatingDataset parse(std::string_view csv, DataFormat format, const ParseOptions& options,
                    std::string source) {
  switch (format) {
    case DataFormat::long_format: return parse_long(csv, options, std::move(source));
    case DataFormat::wide: return parse_wide(csv, options, std::move(source));
    case DataFormat::grouped: return parse_grouped(csv, options, std::move(source));
  }
  throw ArgumentError("unknown format");
}

RatingDataset to_long(const RatingDataset& d) {
  if (d.as_long()) return d;
  LongRatings out;
  out.raters = d.raters();
  out.categories = d.categories();
  std::vector<std::string> item_labels;
  if (auto* w = d.as_wide()) {
    out.items = w->items;
    for (int i = 0; i < w->items; ++i)
      for (int j = 0; j < w->raters; ++j)
        if (w->at(i, j) != kMissing) out.entries.push_back({i, j, w->at(i, j)});
    item_labels = d.item_labels();
  } else {
    const auto& g = *d.as_grouped();
    int item = 0;
    for (int l = 0; l < g.pattern_count(); ++l)
      for (long long c = 0; c < g.tallies[l]; ++c, ++item)
        for (int j = 0; j < g.raters; ++j) out.entries.push_back({item, j, g.at(l, j)});
    out.items = item;
    item_labels = default_labels(item);
  }
  return RatingDataset(std::move(out), std::move(item_labels), d.rater_labels(), d.provenance());
}

RatingDataset to_wide(const RatingDataset& d) {
  if (d.as_wide()) return d;
  auto l = to_long(d);
  const auto& data = *l.as_long();
  WideRatings out;
  out.items = data.items;
  out.raters = data.raters;
  out.categories = data.categories;
  out.cells.assign(static_cast<std::size_t>(out.items) * out.raters, kMissing);
  for (const auto& e : data.entries) {
    auto& cell = out.cells[static_cast<std::size_t>(e.item) * out.raters + e.rater];
    if (cell != kMissing)
      throw UnsupportedError("item " + l.item_labels()[e.item] + " is rated more than once by rater " +
                             l.rater_labels()[e.rater] + "; wide formats need single ratings");
    cell = e.rating;
  }
  return RatingDataset(std::move(out), l.item_labels(), l.rater_labels(), l.provenance());
}

RatingDataset to_grouped(const RatingDataset& d) {
  if (d.as_grouped()) return d;
  auto w = to_wide(d);
  const auto& data = *w.as_wide();
  GroupedRatings out;
  out.raters = data.raters;
  out.categories = data.categories;
  std::map<std::vector<int>, int> index;
  for (int i = 0; i < data.items; ++i) {
    std::vector<int> pattern(data.cells.begin() + static_cast<long>(i) * data.raters,
                             data.cells.begin() + static_cast<long>(i + 1) * data.raters);
    if (std::find(pattern.begin(), pattern.end(), kMissing) != pattern.end())
      throw UnsupportedError("item " + w.item_labels()[i] +
                             " has missing ratings; grouped data must be complete");
    auto [it, inserted] = index.emplace(pattern, out.pattern_count());
    if (inserted) {
      out.patterns.insert(out.patterns.end(), pattern.begin(), pattern.end());
      out.tallies.push_back(1);
    } else {
      ++out.tallies[it->second];
    }
  }
  return RatingDataset(std::move(out), {}, w.rater_labels(), w.provenance());
}

RatingDataset convert(const RatingDataset& d, DataFormat format) {
  switch (format) {
    case DataFormat::long_format: return to_long(d);
    case DataFormat::wide: return to_wide(d);
    case DataFormat::grouped: return to_grouped(d);
  }
  throw ArgumentError("unknown format");
}

std::string to_csv(const RatingDataset& d) {
  std::string out;
  const auto& rl = d.rater_labels();
  if (auto* l = d.as_long()) {
    out += "item,rater,rating\n";
    for (const auto& e : l->entries) {
      out += csv_escape(d.item_labels()[e.item]);
      out += ',';
      out += csv_escape(rl[e.rater]);
      out += ',';
      out += std::to_string(e.rating + 1);
      out += '\n';
    }
  } else if (auto* w = d.as_wide()) {
    out += "item";
    for (const auto& r : rl) out += "," + csv_escape(r);
    out += '\n';
    for (int i = 0; i < w->items; ++i) {
      out += csv_escape(d.item_labels()[i]);
      for (int j = 0; j < w->raters; ++j) {
        out += ',';
        int v = w->at(i, j);
        out += v == kMissing ? std::string("NA") : std::to_string(v + 1);
      }
      out += '\n';
    }
  } else {
    const auto& g = *d.as_grouped();
    for (const auto& r : rl) out += csv_escape(r) + ",";
    out += "n\n";
    for (int l = 0; l < g.pattern_count(); ++l) {
      for (int j = 0; j < g.raters; ++j) out += std::to_string(g.at(l, j) + 1) + ",";
      out += std::to_string(g.tallies[l]) + "\n";
    }
  }
  return out;
}

std::string fingerprint(const RatingDataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  mix(format_name(d.format()));
  mix("|K=" + std::to_string(d.categories()) + "|");
  mix(to_csv(d));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot move output into '" + path + "': " + ec.message());
  }
}

}  // namespace rater
