#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "mplexnet/data.hpp"
#include "mplexnet/error.hpp"

using namespace mplexnet;
using namespace mplexnet::data;
namespace fs = std::filesystem;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mplexnet_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<ModalitySchema> tiny_schemas() {
  return {{"A", 3, 2, ValueKind::continuous}, {"B", 2, 1, ValueKind::categorical}};
}

Cohort tiny_cohort() {
  Cohort c;
  c.schemas = tiny_schemas();
  c.patients.push_back({"p1", {{0.1, -2.5, 1e-17}, {1, 0}}, {true, true}, 0});
  c.patients.push_back({"p2", {{kNaN, kNaN, kNaN}, {0, 1}}, {false, true}, 4});
  c.patients.push_back({"p3", {{3.141592653589793, kNaN, 7.0 / 3.0}, {1, 1}}, {true, true}, 2});
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST_CASE("schemas") {
  auto s = reference_schemas();
  REQUIRE(s.size() == 6);
  CHECK(total_reduced_dim(s) == 396);
  CHECK(total_native_dim(s) == 2048 + 4081 + 29 + 1726 + 233 + 8);
  CHECK_NOTHROW(require_reference_schemas(s));
  auto syn = synthetic_schemas();
  CHECK(total_reduced_dim(syn) == 396);
  CHECK_THROWS_AS(require_reference_schemas(syn), ConfigError);
}

TEST_CASE("cohort save/load round-trips bit-exactly") {
  auto dir = scratch_dir("roundtrip");
  auto c = tiny_cohort();
  save_cohort(dir, c, "abc123");
  std::string hash;
  auto back = load_cohort(dir, tiny_schemas(), &hash);
  CHECK(hash == "abc123");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.patients[i].id == c.patients[i].id);
    CHECK(back.patients[i].label == c.patients[i].label);
    CHECK(back.patients[i].present == c.patients[i].present);
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t f = 0; f < c.patients[i].blocks[m].size(); ++f)
        CHECK(same_value(back.patients[i].blocks[m][f], c.patients[i].blocks[m][f]));
  }
  CHECK(back.unmatched_ids.empty());
}

TEST_CASE("empty cells set the missing mask") {
  auto dir = scratch_dir("missing");
  write_file(dir / "labels.csv", "patient_id,label\np1,1\np2,3\n");
  write_file(dir / "A.csv", "patient_id,f0,f1,f2\np1,1,,3\n");
  write_file(dir / "B.csv", "patient_id,f0,f1\np1,0,1\np2,1,1\np9,0,0\n");
  auto c = load_cohort(dir, tiny_schemas());
  CHECK(c.patients[0].present[0]);
  CHECK(std::isnan(c.patients[0].blocks[0][1]));
  CHECK(c.patients[0].blocks[0][2] == 3.0);
  CHECK_FALSE(c.patients[1].present[0]);
  CHECK(std::isnan(c.patients[1].blocks[0][0]));
  CHECK(c.unmatched_ids == std::vector<std::string>{"p9"});
}

TEST_CASE("load errors") {
  auto dir = scratch_dir("errors");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), ArtifactError);

  write_file(dir / "A.csv", "patient_id,f0,f1,f2\np1,1,2,3\n");
  write_file(dir / "B.csv", "patient_id,f0,f1\np1,0,1\n");

  write_file(dir / "labels.csv", "patient_id,label\np1,5\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);
  write_file(dir / "labels.csv", "patient_id,label\np1,-1\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);
  write_file(dir / "labels.csv", "patient_id,label\np1,1.5\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);
  write_file(dir / "labels.csv", "patient_id,label\np1,1\np1,2\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);

  write_file(dir / "labels.csv", "patient_id,label\np1,1\n");
  CHECK_NOTHROW(load_cohort(dir, tiny_schemas()));
  write_file(dir / "A.csv", "patient_id,f0,f1,f2\np1,1,abc,3\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);
  write_file(dir / "A.csv", "patient_id,f0,f1,f2\np1,1,2,3\np1,1,2,3\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);
  write_file(dir / "A.csv", "patient_id,f0,f1\np1,1,2\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);

  // No modality present at all.
  write_file(dir / "A.csv", "patient_id,f0,f1,f2\np1,,,\n");
  write_file(dir / "B.csv", "patient_id,f0,f1\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), FormatError);

  // Files from different runs.
  write_file(dir / "A.csv", "# config_hash aaa\npatient_id,f0,f1,f2\np1,1,2,3\n");
  write_file(dir / "B.csv", "patient_id,f0,f1\np1,0,1\n");
  CHECK_THROWS_AS(load_cohort(dir, tiny_schemas()), ArtifactError);
}

TEST_CASE("mean imputation") {
  Cohort c;
  c.schemas = {{"A", 2, 1, ValueKind::continuous}};
  c.patients.push_back({"a", {{1, 5}}, {true}, 0});
  c.patients.push_back({"b", {{3, 6}}, {true}, 0});
  c.patients.push_back({"c", {{kNaN, 7}}, {true}, 0});

  SUBCASE("no missing values is the identity") {
    std::vector<std::size_t> train{0, 1};
    auto out = impute_mean(c, train);
    for (std::size_t i = 0; i < 2; ++i) CHECK(out.patients[i].blocks == c.patients[i].blocks);
  }
  SUBCASE("single missing cell gets the train mean") {
    std::vector<std::size_t> train{0, 1};
    auto out = impute_mean(c, train);
    CHECK(out.patients[2].blocks[0][0] == 2.0);
    CHECK(out.patients[2].blocks[0][1] == 7.0);
  }
  SUBCASE("feature missing in every training row names the feature") {
    std::vector<std::size_t> train{2};
    try {
      impute_mean(c, train);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("f0") != std::string::npos);
    }
  }
}

TEST_CASE("imputation and standardization use training rows only") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::bernoulli_distribution miss(0.2);
  Cohort c;
  c.schemas = {{"A", 4, 2, ValueKind::continuous}};
  for (int i = 0; i < 40; ++i) {
    std::vector<double> b(4);
    for (auto& v : b) v = miss(rng) ? kNaN : normal(rng) + 3.0;
    c.patients.push_back({"p" + std::to_string(i), {b}, {true}, i % 5});
  }
  for (auto& v : c.patients[0].blocks[0]) v = 1.0;
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < 40; ++i) (i < 30 ? train : test).push_back(i);

  auto stats = fit_imputation(c, train);
  auto imputed = c;
  apply_imputation(imputed, stats);
  auto std_fit = Standardizer::fit(imputed.modality_matrix(0), train);

  // Leakage oracle: tamper with every test row and refit.
  auto tampered = c;
  for (auto r : test)
    for (auto& v : tampered.patients[r].blocks[0]) v = 1e6;
  auto stats2 = fit_imputation(tampered, train);
  CHECK(stats2.means == stats.means);
  auto imputed2 = tampered;
  apply_imputation(imputed2, stats2);
  auto std_fit2 = Standardizer::fit(imputed2.modality_matrix(0), train);
  CHECK(std_fit2.mean == std_fit.mean);
  CHECK(std_fit2.stddev == std_fit.stddev);

  // Training rows are z-scored.
  auto z = std_fit.apply(imputed.modality_matrix(0)).select_rows(train);
  for (std::size_t col = 0; col < 4; ++col) {
    double s = 0, ss = 0;
    for (std::size_t r = 0; r < z.rows; ++r) s += z(r, col);
    const double mu = s / static_cast<double>(z.rows);
    for (std::size_t r = 0; r < z.rows; ++r) ss += (z(r, col) - mu) * (z(r, col) - mu);
    CHECK(std::abs(mu) < 1e-9);
    CHECK(std::abs(std::sqrt(ss / static_cast<double>(z.rows)) - 1.0) < 1e-9);
  }
}

TEST_CASE("standardizer passthrough and constant columns") {
  Matrix m(3, 2, std::vector<double>{1, 4, 0, 4, 1, 4});
  std::vector<std::size_t> rows{0, 1, 2};
  auto s = Standardizer::fit(m, rows, {true, false});
  CHECK(s.mean == std::vector<double>{0.0, 4.0});
  CHECK(s.stddev == std::vector<double>{1.0, 1.0});
  auto z = s.apply(m);
  CHECK(z(1, 0) == 0.0);
  CHECK(z(2, 1) == 0.0);
}

TEST_CASE("splits") {
  SplitSpec spec;
  spec.seed = 17;
  auto splits = make_splits(3051, spec);
  REQUIRE(splits.size() == 10);
  for (const auto& s : splits) {
    CHECK(s.train.size() == 2135);
    CHECK(s.val.size() == 305);
    CHECK(s.test.size() == 611);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 3051);
    CHECK(*all.rbegin() == 3050);
  }
  CHECK(splits[0].train != splits[1].train);

  auto again = make_splits(3051, spec);
  for (std::size_t r = 0; r < 10; ++r) {
    CHECK(again[r].train == splits[r].train);
    CHECK(again[r].test == splits[r].test);
  }
  spec.seed = 18;
  CHECK(make_splits(3051, spec)[0].train != splits[0].train);
}

TEST_CASE("split size property") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10 + rng() % 5000;
    SplitSpec spec;
    spec.seed = rng();
    spec.n_repeats = 2;
    for (const auto& s : make_splits(n, spec)) {
      const double dn = static_cast<double>(n);
      CHECK(std::abs(static_cast<double>(s.train.size()) - 0.7 * dn) <= 1.0);
      CHECK(std::abs(static_cast<double>(s.val.size()) - 0.1 * dn) <= 1.0);
      CHECK(std::abs(static_cast<double>(s.test.size()) - 0.2 * dn) <= 2.0);
      CHECK(s.train.size() + s.val.size() + s.test.size() == n);
    }
  }
}

TEST_CASE("degenerate split specs") {
  SplitSpec spec;
  CHECK_THROWS_AS(make_splits(9, spec), ConfigError);
  spec.train = 0.8;
  CHECK_THROWS_AS(make_splits(100, spec), ConfigError);
  spec = SplitSpec{};
  spec.val = 0.0;
  spec.test = 0.3;
  CHECK_THROWS_AS(make_splits(100, spec), ConfigError);
  spec = SplitSpec{};
  spec.n_repeats = 0;
  CHECK_THROWS_AS(make_splits(100, spec), ConfigError);
}

TEST_CASE("synthetic cohort") {
  SynthSpec spec;
  spec.n_patients = 200;
  auto a = synth_generate(spec, 42);
  auto b = synth_generate(spec, 42);
  REQUIRE(a.size() == 200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.patients[i].id == b.patients[i].id);
    CHECK(a.patients[i].label == b.patients[i].label);
    CHECK(a.patients[i].blocks == b.patients[i].blocks);
  }
  auto c = synth_generate(spec, 43);
  CHECK(c.patients[0].blocks != a.patients[0].blocks);

  for (std::size_t m = 0; m < a.schemas.size(); ++m) {
    CHECK(a.patients[0].blocks[m].size() == a.schemas[m].native_dim);
    if (a.schemas[m].kind == ValueKind::categorical)
      for (double v : a.patients[0].blocks[m]) CHECK((v == 0.0 || v == 1.0));
  }

  spec.n_patients = 20000;
  auto big = synth_generate(spec, 7);
  std::array<double, kNumClasses> freq{};
  for (int l : big.labels()) freq[static_cast<std::size_t>(l)] += 1.0 / 20000.0;
  for (int k = 0; k < kNumClasses; ++k) CHECK(std::abs(freq[static_cast<std::size_t>(k)] - spec.class_priors[static_cast<std::size_t>(k)]) < 0.015);
}

TEST_CASE("synthetic cohort missing CT and csv round-trip") {
  SynthSpec spec;
  spec.n_patients = 50;
  spec.first_modality_missing_rate = 0.5;
  auto c = synth_generate(spec, 1);
  int missing = 0;
  for (const auto& p : c.patients) missing += p.present[0] ? 0 : 1;
  CHECK(missing > 5);
  CHECK(missing < 45);

  auto dir = scratch_dir("synth");
  save_cohort(dir, c, "h");
  auto back = load_cohort(dir, spec.schemas);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back.patients[i].present == c.patients[i].present);
    for (std::size_t m = 0; m < c.schemas.size(); ++m)
      for (std::size_t f = 0; f < c.patients[i].blocks[m].size(); ++f)
        REQUIRE(same_value(back.patients[i].blocks[m][f], c.patients[i].blocks[m][f]));
  }
}

TEST_CASE("synthetic spec validation") {
  SynthSpec spec;
  spec.class_priors = {0.5, 0.5};
  CHECK_THROWS_AS(synth_generate(spec, 0), ConfigError);
  spec = SynthSpec{};
  spec.schemas[2].native_dim = 3;
  CHECK_THROWS_AS(synth_generate(spec, 0), ConfigError);
  spec = SynthSpec{};
  spec.modality_factors[0] = {9};
  CHECK_THROWS_AS(synth_generate(spec, 0), ConfigError);
}
