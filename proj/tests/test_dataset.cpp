#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dte/dataset.hpp"
#include "dte/error.hpp"
#include "support.hpp"

using namespace dte;

namespace {

FeatureSchema two_feature_schema() {
  FeatureSchema s;
  s.features = {{"a", "first", "cm"}, {"b", "second", {}}};
  s.classes = {"no", "yes"};
  s.target_column = "label";
  return s;
}

LoadResult parse(const std::string& text, const FeatureSchema& schema, NaPolicy na = NaPolicy::kError) {
  std::istringstream in(text);
  return read_csv(in, schema, {{}, na});
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("header-only csv is an empty dataset") {
  CHECK(error_of([] { parse("a,b,label\n", two_feature_schema()); }).find("empty dataset") != std::string::npos);
}

TEST_CASE("na drop removes incomplete rows and counts them") {
  const auto r = parse("a,b,label\n1,2,no\n3,abc,yes\n5,6,yes\n", two_feature_schema(), NaPolicy::kDrop);
  CHECK(r.dataset.size() == 2);
  CHECK(r.dropped_rows == 1);
  CHECK(r.dataset.sample(1).values == std::vector<double>{5, 6});
}

TEST_CASE("na error names the line and column") {
  const auto msg = error_of([] { parse("a,b,label\n1,2,no\n3,,yes\n", two_feature_schema()); });
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("'b'") != std::string::npos);
}

TEST_CASE("missing column and unknown label") {
  CHECK(error_of([] { parse("a,label\n1,no\n", two_feature_schema()); }).find("missing column 'b'") !=
        std::string::npos);
  CHECK(error_of([] { parse("a,b,label\n1,2,maybe\n", two_feature_schema()); }).find("unknown label") !=
        std::string::npos);
}

TEST_CASE("quoted fields, columns in any order, label map and dropped columns") {
  FeatureSchema s;
  s.classes = {"Benign", "Threat"};
  s.target_column = "Label";
  s.label_map = {{"0", "Benign"}, {"1", "Threat"}};
  s.drop_columns = {"SRC", "Attack"};
  const auto r = parse("SRC,X,Label,Attack,\"Y\"\n\"10.0.0.1\",1.5,0,Benign,2\n10.0.0.2,2.5,1,\"DoS, slow\",3\n", s);
  REQUIRE(r.dataset.schema().feature_count() == 2);
  CHECK(r.dataset.schema().features[0].name == "X");
  CHECK(r.dataset.schema().features[1].name == "Y");
  CHECK(r.dataset.sample(1).values == std::vector<double>{2.5, 3});
  CHECK(r.dataset.sample(0).label == 0);
  CHECK(r.dataset.sample(1).label == 1);
}

TEST_CASE("schema validation") {
  auto s = two_feature_schema();
  s.classes = {"only"};
  CHECK_THROWS_AS(s.validate(), SchemaError);
  s = two_feature_schema();
  s.features.push_back(s.features[0]);
  CHECK_THROWS_AS(s.validate(), SchemaError);
  s = two_feature_schema();
  CHECK(FeatureSchema::from_json(s.to_json()).to_json() == s.to_json());
  CHECK(s.class_index("1") == 1);
  CHECK(s.class_index("yes") == 1);
}

TEST_CASE("builtin iris") {
  const Dataset iris = builtin_iris();
  CHECK(iris.size() == 150);
  CHECK(iris.class_counts() == std::vector<std::size_t>{50, 50, 50});
  const auto pw = *iris.schema().feature_index("Petal Width");
  CHECK(iris.domain()[pw].min == doctest::Approx(0.1));
  CHECK(iris.domain()[pw].max == doctest::Approx(2.5));
  CHECK(iris.schema().features[pw].unit == std::optional<std::string>("cm"));
}

TEST_CASE("iris stratified split") {
  const Dataset iris = builtin_iris();
  const auto s = split(iris, 0.3, 7);
  CHECK(s.train.size() == 105);
  CHECK(s.test.size() == 45);
  CHECK(s.test.class_counts() == std::vector<std::size_t>{15, 15, 15});
  // Indices from the independent Python re-implementation of the split.
  const std::vector<std::size_t> expected = {1,  10, 11, 12,  13,  14,  15,  20,  30,  34,  35,  38,  43,  45,  48,
                                             52, 56, 58, 62,  63,  71,  74,  79,  80,  85,  87,  88,  89,  91,  98,
                                             100, 101, 110, 112, 115, 120, 122, 129, 130, 131, 135, 136, 140, 145, 146};
  CHECK(s.test_indices == expected);
  const auto again = split(iris, 0.3, 7);
  CHECK(again.test_indices == s.test_indices);
  CHECK(split(iris, 0.3, 8).test_indices != s.test_indices);
  // Both sides carry the training domain.
  CHECK(s.test.domain()[0].min == s.train.domain()[0].min);
}

TEST_CASE("random splits partition the data") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(30, 200)(rng);
    const double frac = std::uniform_real_distribution<double>(0.2, 0.8)(rng);
    const std::uint64_t seed = rng();
    const bool stratified = trial % 2 == 0;
    const Dataset d = testing::random_dataset(rng, n, 3, 3);
    const SplitResult s = split(d, frac, seed, stratified);
    std::vector<std::size_t> all = s.train_indices;
    all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(n);
    std::iota(want.begin(), want.end(), 0);
    REQUIRE(all == want);
    CHECK(std::is_sorted(s.test_indices.begin(), s.test_indices.end()));
    if (stratified) {
      auto counts = d.class_counts();
      auto test_counts = s.test.class_counts();
      for (std::size_t c = 0; c < counts.size(); ++c) CHECK(test_counts[c] == std::llround(counts[c] * frac));
    }
    CHECK(split(d, frac, seed, stratified).test_indices == split(d, frac, seed, stratified).test_indices);
  }
}

TEST_CASE("split rejects degenerate fractions") {
  const Dataset iris = builtin_iris();
  CHECK_THROWS_AS(split(iris, 0.0, 1), DataError);
  CHECK_THROWS_AS(split(iris, 1.0, 1), DataError);
}

TEST_CASE("csv round trip is exact") {
  const Dataset iris = builtin_iris();
  std::ostringstream out;
  write_csv(iris, out);
  std::istringstream in(out.str());
  const auto back = read_csv(in, iris.schema()).dataset;
  REQUIRE(back.size() == iris.size());
  for (std::size_t i = 0; i < iris.size(); ++i) {
    CHECK(back.sample(i).values == iris.sample(i).values);
    CHECK(back.sample(i).label == iris.sample(i).label);
  }
}

TEST_CASE("seeded shuffle is a fixed permutation") {
  std::vector<std::size_t> v(10);
  std::iota(v.begin(), v.end(), 0);
  seeded_shuffle(v, 42);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  seeded_shuffle(w, 42);
  CHECK(v == w);
}
