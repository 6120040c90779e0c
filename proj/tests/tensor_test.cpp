#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "p2mt/errors.hpp"
#include "p2mt/synth.hpp"
#include "p2mt/tensor.hpp"

using namespace p2mt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "p2mt_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("load_tensor reads shapes and defaults the mask") {
  auto p = temp_file("basic.jsonl");
  write_file(p,
             "{\"features\":[\"a\",\"b\"]}\n"
             "{\"id\":\"p1\",\"rows\":[[1,2],[3,4],[5,6]]}\n"
             "{\"id\":\"p2\",\"rows\":[[7,8]],\"mask\":[[1,0]]}\n");
  IrregularTensor t = load_tensor(p.string());
  CHECK(t.num_slices() == 2);
  CHECK(t.num_features() == 2);
  CHECK(t.rows(0) == 3);
  CHECK(t.rows(1) == 1);
  CHECK(t.masks[0].sum() == doctest::Approx(6.0));
  // masked-out entry is stored as zero
  CHECK(t.slices[1](0, 1) == 0.0);
  CHECK(t.observed_count() == 7);
}

TEST_CASE("load_tensor rejects malformed input with the line number") {
  auto p = temp_file("bad_json.jsonl");
  write_file(p, "{\"features\":[\"a\"]}\n{not json\n");
  CHECK_THROWS_WITH_AS(load_tensor(p.string()),
                       doctest::Contains("line 2"), DataError);
}

TEST_CASE("load_tensor rejects ragged rows naming the slice") {
  auto p = temp_file("ragged.jsonl");
  write_file(p,
             "{\"features\":[\"a\",\"b\",\"c\"]}\n"
             "{\"id\":\"p9\",\"rows\":[[1,2],[1,2,3]]}\n");
  CHECK_THROWS_WITH_AS(load_tensor(p.string()), doctest::Contains("p9"),
                       DataError);
}

TEST_CASE("load_tensor rejects duplicate slice ids") {
  auto p = temp_file("dup.jsonl");
  write_file(p,
             "{\"features\":[\"a\"]}\n"
             "{\"id\":\"p1\",\"rows\":[[1]]}\n"
             "{\"id\":\"p1\",\"rows\":[[2]]}\n");
  CHECK_THROWS_WITH_AS(load_tensor(p.string()), doctest::Contains("duplicate"),
                       DataError);
}

TEST_CASE("tensor save/load round trip preserves values exactly") {
  SynthSpec spec;
  spec.K = 6;
  spec.J = 4;
  spec.R_true = 2;
  spec.I_min = 2;
  spec.I_max = 5;
  spec.noise_sd = 0.3;
  spec.missing_rate = 0.25;
  spec.seed = 11;
  SynthData d = synth_generate(spec);

  auto p = temp_file("roundtrip.jsonl");
  save_tensor(d.tensor, p.string());
  IrregularTensor back = load_tensor(p.string());

  REQUIRE(back.num_slices() == d.tensor.num_slices());
  CHECK(back.feature_names == d.tensor.feature_names);
  CHECK(back.slice_ids == d.tensor.slice_ids);
  for (int k = 0; k < back.num_slices(); ++k) {
    CHECK(back.slices[k] == d.tensor.slices[k]);
    CHECK(back.masks[k] == d.tensor.masks[k]);
  }

  // a second save/load of the normalized form is byte-stable
  auto p2 = temp_file("roundtrip2.jsonl");
  save_tensor(back, p2.string());
  CHECK(read_file(p) == read_file(p2));
}

TEST_CASE("labels CSV round trip") {
  LabelTable l;
  l.static_labels["mortality"]["p1"] = 1;
  l.static_labels["mortality"]["p2"] = 0;
  l.dynamic_labels["vent"]["p1"] = {0, 1, 1};
  l.dynamic_labels["vent"]["p2"] = {1};
  auto p = temp_file("labels.csv");
  save_labels(l, p.string());
  LabelTable back = load_labels(p.string());
  CHECK(back.static_labels == l.static_labels);
  CHECK(back.dynamic_labels == l.dynamic_labels);
}

TEST_CASE("validate_labels enforces dynamic length and known ids") {
  auto p = temp_file("vl.jsonl");
  write_file(p,
             "{\"features\":[\"a\"]}\n"
             "{\"id\":\"p1\",\"rows\":[[1],[2]]}\n");
  IrregularTensor t = load_tensor(p.string());
  LabelTable l;
  l.dynamic_labels["task"]["p1"] = {1, 0, 1};  // too long
  CHECK_THROWS_AS(validate_labels(t, l), DataError);
  LabelTable l2;
  l2.static_labels["task"]["ghost"] = 1;
  CHECK_THROWS_AS(validate_labels(t, l2), DataError);
}

TEST_CASE("split_tensor partitions 10 slices 8:2 and is deterministic") {
  SynthSpec spec;
  spec.K = 10;
  spec.J = 3;
  spec.R_true = 2;
  spec.I_min = 2;
  spec.I_max = 4;
  spec.seed = 5;
  SynthData d = synth_generate(spec);

  SplitResult a = split_tensor(d.tensor, d.labels, 0.8, 42);
  CHECK(a.train_tensor.num_slices() == 8);
  CHECK(a.test_tensor.num_slices() == 2);

  SplitResult b = split_tensor(d.tensor, d.labels, 0.8, 42);
  CHECK(a.train_tensor.slice_ids == b.train_tensor.slice_ids);
  CHECK(a.test_tensor.slice_ids == b.test_tensor.slice_ids);

  // disjoint and exhaustive
  std::set<std::string> seen;
  for (const auto& id : a.train_tensor.slice_ids) CHECK(seen.insert(id).second);
  for (const auto& id : a.test_tensor.slice_ids) CHECK(seen.insert(id).second);
  CHECK(seen.size() == 10);

  // labels follow their slices
  for (const auto& [task, by_slice] : a.test_labels.static_labels)
    for (const auto& [id, _] : by_slice)
      CHECK(a.test_tensor.index_of(id) >= 0);
}

TEST_CASE("split_tensor forced 1:1 split and bad fraction") {
  SynthSpec spec;
  spec.K = 2;
  spec.J = 3;
  spec.R_true = 2;
  spec.I_min = 2;
  spec.I_max = 3;
  spec.seed = 1;
  SynthData d = synth_generate(spec);
  SplitResult r = split_tensor(d.tensor, d.labels, 0.5, 0);
  CHECK(r.train_tensor.num_slices() == 1);
  CHECK(r.test_tensor.num_slices() == 1);
  CHECK_THROWS_AS(split_tensor(d.tensor, d.labels, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(split_tensor(d.tensor, d.labels, 0.0, 0), ConfigError);
}

TEST_CASE("synth_generate with no noise reconstructs exactly") {
  SynthSpec spec;
  spec.K = 8;
  spec.J = 6;
  spec.R_true = 3;
  spec.I_min = 3;
  spec.I_max = 7;
  spec.seed = 9;
  SynthData d = synth_generate(spec);
  for (int k = 0; k < d.tensor.num_slices(); ++k) {
    Eigen::MatrixXd recon = d.truth.U[k] * d.truth.s[k].asDiagonal() *
                            d.truth.V.transpose();
    CHECK((recon - d.tensor.slices[k]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("synth_generate missing rate concentrates near its target") {
  SynthSpec spec;
  spec.K = 60;
  spec.J = 20;
  spec.R_true = 4;
  spec.I_min = 8;
  spec.I_max = 12;
  spec.missing_rate = 0.3;
  spec.seed = 13;
  SynthData d = synth_generate(spec);
  std::int64_t total = 0;
  for (const auto& mask : d.tensor.masks)
    total += static_cast<std::int64_t>(mask.rows() * mask.cols());
  REQUIRE(total >= 10000);
  double observed = static_cast<double>(d.tensor.observed_count()) /
                    static_cast<double>(total);
  CHECK(observed > 0.65);
  CHECK(observed < 0.75);
}

TEST_CASE("synth_generate is bit-identical for a fixed seed") {
  SynthSpec spec;
  spec.K = 7;
  spec.J = 5;
  spec.R_true = 2;
  spec.I_min = 2;
  spec.I_max = 6;
  spec.noise_sd = 0.1;
  spec.missing_rate = 0.2;
  spec.label_noise = 0.1;
  spec.seed = 77;
  SynthData a = synth_generate(spec);
  SynthData b = synth_generate(spec);
  for (int k = 0; k < a.tensor.num_slices(); ++k) {
    CHECK(a.tensor.slices[k] == b.tensor.slices[k]);
    CHECK(a.tensor.masks[k] == b.tensor.masks[k]);
  }
  CHECK(a.labels.static_labels == b.labels.static_labels);
  CHECK(a.labels.dynamic_labels == b.labels.dynamic_labels);
  CHECK(a.truth.H == b.truth.H);
  CHECK(a.truth.V == b.truth.V);
}

TEST_CASE("synth_generate rejects invalid specs") {
  SynthSpec spec;
  spec.K = 5;
  spec.J = 4;
  spec.R_true = 5;  // exceeds min(I_min, J)
  spec.I_min = 3;
  spec.I_max = 6;
  CHECK_THROWS_AS(synth_generate(spec), ConfigError);
  SynthSpec bad;
  bad.missing_rate = 1.0;
  CHECK_THROWS_AS(synth_generate(bad), ConfigError);
}
