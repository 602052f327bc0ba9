#include <sstream>

#include "doctest.h"
#include "usgrip/bench.hpp"
#include "usgrip/dataset.hpp"
#include "usgrip/model.hpp"
#include "usgrip/rng.hpp"

using namespace usgrip;

TEST_SUITE("bench") {

TEST_CASE("perfect predictions give a diagonal matrix and accuracy 1") {
  std::vector<uint8_t> labels{0, 1, 2, 3, 0, 1, 2, 3};
  Confusion c = confusion_matrix(labels, labels);
  CHECK(c.accuracy() == 1.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(c.counts[static_cast<size_t>(i)][static_cast<size_t>(j)] == (i == j ? 2u : 0u));
}

TEST_CASE("all predictions in one class make a single nonzero column") {
  std::vector<uint8_t> labels{0, 1, 2, 3, 3, 2};
  std::vector<uint8_t> preds(labels.size(), 0);
  Confusion c = confusion_matrix(labels, preds);
  for (int i = 0; i < 4; ++i)
    for (int j = 1; j < 4; ++j) CHECK(c.counts[static_cast<size_t>(i)][static_cast<size_t>(j)] == 0);
  CHECK(c.accuracy() == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("matrix accuracy equals brute-force match counting on 1000 random pairs") {
  Xoshiro256ss rng(77);
  std::vector<uint8_t> labels, preds;
  for (int i = 0; i < 1000; ++i) {
    labels.push_back(static_cast<uint8_t>(rng.below(4)));
    preds.push_back(static_cast<uint8_t>(rng.below(4)));
  }
  Confusion c = confusion_matrix(labels, preds);
  int64_t matches = 0;
  for (size_t i = 0; i < labels.size(); ++i) matches += (labels[i] == preds[i]);
  CHECK(c.total() == 1000);
  CHECK(static_cast<int64_t>(c.trace()) == matches);
  CHECK(c.accuracy() == static_cast<double>(matches) / 1000.0);

  // Row sums equal per-class label counts.
  std::array<uint32_t, 4> per_class{};
  for (uint8_t l : labels) per_class[l]++;
  for (int i = 0; i < 4; ++i) {
    uint32_t row = 0;
    for (int j = 0; j < 4; ++j) row += c.counts[static_cast<size_t>(i)][static_cast<size_t>(j)];
    CHECK(row == per_class[static_cast<size_t>(i)]);
  }
}

TEST_CASE("labels and predictions out of range are rejected") {
  std::vector<uint8_t> bad{7};
  std::vector<uint8_t> ok{0};
  CHECK_THROWS_AS(confusion_matrix(bad, ok), Error);
  CHECK_THROWS_AS(confusion_matrix(ok, bad), Error);
  std::vector<uint8_t> longer{0, 1};
  CHECK_THROWS_AS(confusion_matrix(ok, longer), Error);
}

TEST_CASE("an untrained model evaluates at chance level on a balanced split") {
  GenConfig cfg;
  cfg.frames_per_class = 100;
  cfg.seed = 5;
  Dataset d = downsample8(generate(cfg));
  split_dataset(d, 0.25f, 5);
  ModelGraph m = build_default_model(99);
  EvalResult r = eval_model(m, d, kSplitTest);
  CHECK(r.samples == 100);
  CHECK(r.accuracy >= 0.15);
  CHECK(r.accuracy <= 0.35);
}

TEST_CASE("eval reports are stable byte for byte") {
  GenConfig cfg;
  cfg.frames_per_class = 8;
  cfg.height = 160;
  cfg.width = 160;
  cfg.seed = 3;
  Dataset d = generate(cfg);
  split_dataset(d, 0.25f, 3);
  // 20x20 frames do not fit the model; exercise the report writer directly.
  EvalResult r;
  r.samples = 8;
  r.accuracy = 0.625;
  r.confusion.counts[0][0] = 5;
  std::ostringstream a, b;
  write_eval_report("m.uqm", "f32", kSplitTest, r, a);
  write_eval_report("m.uqm", "f32", kSplitTest, r, b);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("eval.accuracy=0.625000") != std::string::npos);
}

TEST_CASE("bench report separates deterministic and volatile sections") {
  BenchReport r;
  r.dataset_path = "d.ugd";
  r.dataset_seed = 42;
  r.train_count = 3;
  r.test_count = 1;
  r.machine = "test-machine";
  SchemeReport s;
  s.name = "f32";
  s.model_file_bytes = 1234;
  s.weight_payload_bytes = 1000;
  s.train_accuracy = 1.0;
  s.test_accuracy = 0.5;
  s.mean_s = 0.001;
  r.schemes.push_back(s);
  std::ostringstream out;
  write_bench_report(r, out);
  const std::string text = out.str();
  const size_t det = text.find("[deterministic]");
  const size_t vol = text.find("[nondeterministic]");
  REQUIRE(det != std::string::npos);
  REQUIRE(vol != std::string::npos);
  CHECK(det < vol);
  CHECK(text.find("scheme.f32.model_file_bytes=1234") < vol);
  CHECK(text.find("machine=test-machine") > vol);
  CHECK(text.find("test_latency_mean_s") > vol);
}

}  // TEST_SUITE
