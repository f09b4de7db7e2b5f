#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dte {

struct FeatureSpec {
  std::string name;
  std::string description;
  std::optional<std::string> unit;
};

// Named, unit-annotated numeric features plus the ordered class list.
//
// An empty feature list means "infer from the CSV header": every column
// other than the target and the dropped columns becomes a numeric feature.
// `label_map` translates raw label cells (e.g. NF-BoT's 0/1) to class names.
struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::vector<std::string> classes;
  std::string target_column;
  std::string task;  // optional task description used in LLM prompts
  std::map<std::string, std::string> label_map;
  std::vector<std::string> drop_columns;

  // Throws SchemaError when names are empty/duplicated or fewer than one
  // feature / two classes are declared.
  void validate() const;

  std::size_t feature_count() const { return features.size(); }
  std::size_t class_count() const { return classes.size(); }
  std::optional<std::size_t> feature_index(std::string_view name) const;
  // Resolves a raw label cell via label_map, exact class name, or a
  // decimal class index. Throws DataError for unknown labels.
  std::size_t class_index(std::string_view label) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& doc);
  static FeatureSchema load(const std::filesystem::path& path);
};

struct Sample {
  std::vector<double> values;
  std::size_t label = 0;
};

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
  double span() const { return max - min; }
};

// Immutable labelled sample collection. The domain is the per-feature
// observed [min, max]; splits carry the training domain forward so that
// downstream probes never see test data.
class Dataset {
 public:
  Dataset(FeatureSchema schema, std::vector<Sample> samples);
  Dataset(FeatureSchema schema, std::vector<Sample> samples, std::vector<FeatureRange> domain);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& sample(std::size_t i) const { return samples_.at(i); }
  const std::vector<FeatureRange>& domain() const { return domain_; }
  std::size_t size() const { return samples_.size(); }
  std::vector<std::size_t> class_counts() const;

 private:
  FeatureSchema schema_;
  std::vector<Sample> samples_;
  std::vector<FeatureRange> domain_;
};

enum class NaPolicy { kDrop, kError };

struct LoadOptions {
  std::vector<std::string> drop_columns;
  NaPolicy na_policy = NaPolicy::kError;
};

struct LoadResult {
  Dataset dataset;
  std::size_t dropped_rows = 0;
};

LoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                    const LoadOptions& options = {});
LoadResult read_csv(std::istream& in, const FeatureSchema& schema, const LoadOptions& options = {},
                    std::string_view source = "<stream>");

// Writes the dataset back out with round-trip exact numbers and class names
// in the target column.
void write_csv(const Dataset& dataset, std::ostream& out);

FeatureSchema iris_schema();
// The 150-sample Iris table compiled into the library.
Dataset builtin_iris();

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;  // positions in the input, ascending
  std::vector<std::size_t> test_indices;
};

// Deterministic partition. Stratified splits take round(n_c * fraction)
// test samples from every class; both sides inherit the training domain.
SplitResult split(const Dataset& dataset, double test_fraction, std::uint64_t seed,
                  bool stratified = true);

// Fisher-Yates with a portable draw, so orders do not depend on the
// standard library's distribution implementation.
void seeded_shuffle(std::span<std::size_t> items, std::uint64_t seed);

// Loads "iris" (builtin) or a CSV path with the given schema.
Dataset load_dataset(const std::string& source, const std::optional<FeatureSchema>& schema,
                     NaPolicy na_policy = NaPolicy::kDrop);

}  // namespace dte
