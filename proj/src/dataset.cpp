#include "dte/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "dte/error.hpp"
#include "dte/format.hpp"

namespace dte {

namespace detail {
extern const std::string_view kIrisCsv;
}

namespace {

using nlohmann::json;

// Minimal RFC-4180 record reader: quoted fields, doubled quotes, CRLF and
// newlines inside quotes.
class CsvReader {
 public:
  explicit CsvReader(std::string text) : text_(std::move(text)) {
    if (text_.size() >= 3 && text_.compare(0, 3, "\xEF\xBB\xBF") == 0) pos_ = 3;
  }

  // Returns false at end of input. `line` is the physical line where the
  // record starts (1-based).
  bool next(std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    // Skip blank lines between records.
    while (pos_ < text_.size() && (text_[pos_] == '\n' || text_[pos_] == '\r')) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return false;
    line = line_;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    while (pos_ < text_.size()) {
      const char c = text_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && field.empty() && !was_quoted) {
        quoted = true;
        was_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (c == '\r') {
        // CR of a CRLF terminator
      } else if (c == '\n') {
        ++line_;
        break;
      } else {
        field.push_back(c);
      }
    }
    if (quoted) throw DataError(fmt::format("line {}: unterminated quoted field", line));
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::vector<FeatureRange> compute_domain(std::size_t features, const std::vector<Sample>& samples) {
  std::vector<FeatureRange> domain(features);
  for (std::size_t j = 0; j < features; ++j) {
    domain[j].min = samples.front().values[j];
    domain[j].max = samples.front().values[j];
  }
  for (const auto& s : samples) {
    for (std::size_t j = 0; j < features; ++j) {
      domain[j].min = std::min(domain[j].min, s.values[j]);
      domain[j].max = std::max(domain[j].max, s.values[j]);
    }
  }
  return domain;
}

}  // namespace

void FeatureSchema::validate() const {
  if (features.empty()) throw SchemaError("schema declares no features");
  if (classes.size() < 2) throw SchemaError("schema needs at least two classes");
  std::set<std::string_view> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw SchemaError("feature with empty name");
    if (!seen.insert(f.name).second) throw SchemaError(fmt::format("duplicate feature '{}'", f.name));
  }
  std::set<std::string_view> class_seen;
  for (const auto& c : classes) {
    if (c.empty()) throw SchemaError("class with empty name");
    if (!class_seen.insert(c).second) throw SchemaError(fmt::format("duplicate class '{}'", c));
  }
}

std::optional<std::size_t> FeatureSchema::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::class_index(std::string_view label) const {
  const std::string_view raw = trim(label);
  std::string_view name = raw;
  if (auto it = label_map.find(std::string(raw)); it != label_map.end()) name = it->second;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return i;
  }
  if (label_map.empty()) {
    std::size_t index = 0;
    auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), index);
    if (ec == std::errc() && ptr == name.data() + name.size() && index < classes.size()) {
      return index;
    }
  }
  throw DataError(fmt::format("unknown label '{}'", raw));
}

json FeatureSchema::to_json() const {
  json feats = json::array();
  for (const auto& f : features) {
    json item = {{"name", f.name}, {"description", f.description}};
    if (f.unit) item["unit"] = *f.unit;
    feats.push_back(std::move(item));
  }
  json doc = {{"features", feats}, {"classes", classes}, {"target_column", target_column}};
  if (!task.empty()) doc["task"] = task;
  if (!label_map.empty()) doc["label_map"] = label_map;
  if (!drop_columns.empty()) doc["drop_columns"] = drop_columns;
  return doc;
}

FeatureSchema FeatureSchema::from_json(const json& doc) {
  try {
    FeatureSchema schema;
    for (const auto& f : doc.value("features", json::array())) {
      FeatureSpec spec;
      spec.name = f.at("name").get<std::string>();
      spec.description = f.value("description", "");
      if (f.contains("unit") && !f["unit"].is_null()) spec.unit = f["unit"].get<std::string>();
      schema.features.push_back(std::move(spec));
    }
    schema.classes = doc.at("classes").get<std::vector<std::string>>();
    schema.target_column = doc.at("target_column").get<std::string>();
    schema.task = doc.value("task", "");
    if (doc.contains("label_map")) {
      schema.label_map = doc["label_map"].get<std::map<std::string, std::string>>();
    }
    if (doc.contains("drop_columns")) {
      schema.drop_columns = doc["drop_columns"].get<std::vector<std::string>>();
    }
    return schema;
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("malformed schema document: {}", e.what()));
  }
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open schema file '{}'", path.string()));
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw SchemaError(fmt::format("schema file '{}': {}", path.string(), e.what()));
  }
}

Dataset::Dataset(FeatureSchema schema, std::vector<Sample> samples)
    : schema_(std::move(schema)), samples_(std::move(samples)) {
  schema_.validate();
  if (samples_.empty()) throw DataError("empty dataset");
  for (const auto& s : samples_) {
    if (s.values.size() != schema_.feature_count()) throw DataError("sample width does not match schema");
    if (s.label >= schema_.class_count()) throw DataError("sample label out of range");
    for (double v : s.values) {
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
  }
  domain_ = compute_domain(schema_.feature_count(), samples_);
}

Dataset::Dataset(FeatureSchema schema, std::vector<Sample> samples, std::vector<FeatureRange> domain)
    : Dataset(std::move(schema), std::move(samples)) {
  if (domain.size() != schema_.feature_count()) throw DataError("domain width does not match schema");
  for (const auto& r : domain) {
    if (!(r.min <= r.max)) throw DataError("feature domain has min > max");
  }
  domain_ = std::move(domain);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(schema_.class_count(), 0);
  for (const auto& s : samples_) ++counts[s.label];
  return counts;
}

LoadResult read_csv(std::istream& in, const FeatureSchema& schema, const LoadOptions& options,
                    std::string_view source) {
  CsvReader reader(std::string(std::istreambuf_iterator<char>(in), {}));
  std::vector<std::string> header;
  std::size_t line = 0;
  if (!reader.next(header, line)) throw DataError(fmt::format("{}: missing header row", source));
  for (auto& h : header) h = std::string(trim(h));

  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  FeatureSchema resolved = schema;
  const auto target = column_of(schema.target_column);
  if (!target) throw SchemaError(fmt::format("{}: missing column '{}'", source, schema.target_column));

  std::set<std::string> dropped(options.drop_columns.begin(), options.drop_columns.end());
  dropped.insert(schema.drop_columns.begin(), schema.drop_columns.end());
  if (resolved.features.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == *target || dropped.count(header[c])) continue;
      resolved.features.push_back({header[c], "", std::nullopt});
    }
  }
  resolved.validate();

  std::vector<std::size_t> columns;
  for (const auto& f : resolved.features) {
    const auto col = column_of(f.name);
    if (!col) throw SchemaError(fmt::format("{}: missing column '{}'", source, f.name));
    columns.push_back(*col);
  }

  std::vector<Sample> samples;
  std::size_t dropped_rows = 0;
  std::vector<std::string> fields;
  while (reader.next(fields, line)) {
    if (fields.size() != header.size()) {
      if (options.na_policy == NaPolicy::kError) {
        throw DataError(fmt::format("{}: line {}: expected {} fields, found {}", source, line,
                                    header.size(), fields.size()));
      }
      ++dropped_rows;
      continue;
    }
    Sample sample;
    sample.values.reserve(columns.size());
    std::optional<std::string> bad_column;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto value = parse_number(fields[columns[j]]);
      if (!value) {
        bad_column = resolved.features[j].name;
        break;
      }
      sample.values.push_back(*value);
    }
    if (!bad_column && trim(fields[*target]).empty()) bad_column = schema.target_column;
    if (bad_column) {
      if (options.na_policy == NaPolicy::kError) {
        throw DataError(fmt::format("{}: line {}: missing or non-numeric value in column '{}'",
                                    source, line, *bad_column));
      }
      ++dropped_rows;
      continue;
    }
    try {
      sample.label = resolved.class_index(fields[*target]);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}: line {}: {}", source, line, e.what()));
    }
    samples.push_back(std::move(sample));
  }
  if (samples.empty()) throw DataError("empty dataset");
  return {Dataset(std::move(resolved), std::move(samples)), dropped_rows};
}

LoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                    const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return read_csv(in, schema, options, path.string());
}

void write_csv(const Dataset& dataset, std::ostream& out) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  const auto& schema = dataset.schema();
  for (const auto& f : schema.features) out << quote(f.name) << ',';
  out << quote(schema.target_column) << '\n';
  for (const auto& s : dataset.samples()) {
    for (double v : s.values) out << format_exact(v) << ',';
    out << quote(schema.classes[s.label]) << '\n';
  }
}

FeatureSchema iris_schema() {
  FeatureSchema schema;
  schema.features = {
      {"Sepal Length", "Length of the sepal, the outer leaf-like part that encloses the bud.", "cm"},
      {"Sepal Width", "Width of the sepal.", "cm"},
      {"Petal Length", "Length of the petal, the coloured inner part of the flower.", "cm"},
      {"Petal Width", "Width of the petal.", "cm"},
  };
  schema.classes = {"Iris-setosa", "Iris-versicolor", "Iris-virginica"};
  schema.target_column = "Species";
  schema.task =
      "The task is to classify iris flowers into one of three species (Iris-setosa, "
      "Iris-versicolor, Iris-virginica) from measurements of their sepals and petals.";
  return schema;
}

Dataset builtin_iris() {
  std::istringstream in{std::string(detail::kIrisCsv)};
  return read_csv(in, iris_schema(), {}, "builtin iris").dataset;
}

void seeded_shuffle(std::span<std::size_t> items, std::uint64_t seed) {
  // splitmix64 stream
  std::uint64_t state = seed;
  auto next = [&state] {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(next() % i);
    std::swap(items[i - 1], items[j]);
  }
}

SplitResult split(const Dataset& dataset, double test_fraction, std::uint64_t seed, bool stratified) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DataError("test fraction must lie in (0, 1)");
  }
  std::vector<bool> in_test(dataset.size(), false);
  auto take = [&](std::vector<std::size_t> pool, std::uint64_t stream_seed) {
    seeded_shuffle(pool, stream_seed);
    const auto n_test = static_cast<std::size_t>(std::llround(pool.size() * test_fraction));
    for (std::size_t i = 0; i < n_test && i < pool.size(); ++i) in_test[pool[i]] = true;
  };
  if (stratified) {
    std::vector<std::vector<std::size_t>> by_class(dataset.schema().class_count());
    for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.sample(i).label].push_back(i);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      take(std::move(by_class[c]), seed + 0x632BE59BD9B4E019ULL * (c + 1));
    }
  } else {
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(std::move(all), seed);
  }

  std::vector<std::size_t> train_indices, test_indices;
  std::vector<Sample> train_samples, test_samples;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (in_test[i]) {
      test_indices.push_back(i);
      test_samples.push_back(dataset.sample(i));
    } else {
      train_indices.push_back(i);
      train_samples.push_back(dataset.sample(i));
    }
  }
  if (train_samples.empty() || test_samples.empty()) throw DataError("split empty");
  const auto train_domain = compute_domain(dataset.schema().feature_count(), train_samples);
  return SplitResult{Dataset(dataset.schema(), std::move(train_samples), train_domain),
                     Dataset(dataset.schema(), std::move(test_samples), train_domain),
                     std::move(train_indices), std::move(test_indices)};
}

Dataset load_dataset(const std::string& source, const std::optional<FeatureSchema>& schema,
                     NaPolicy na_policy) {
  if (source == "iris") return builtin_iris();
  if (!schema) throw SchemaError(fmt::format("dataset '{}' needs a schema", source));
  return load_csv(source, *schema, LoadOptions{{}, na_policy}).dataset;
}

}  // namespace dte
