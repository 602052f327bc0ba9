#pragma once

#include <array>
#include <fstream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "usgrip/client.hpp"
#include "usgrip/dataset.hpp"
#include "usgrip/model_io.hpp"
#include "usgrip/quantize.hpp"

#include "json.hpp"

namespace usgrip {

struct Confusion {
  std::array<std::array<uint32_t, 4>, 4> counts{};  // [true][predicted]

  uint64_t total() const {
    uint64_t n = 0;
    for (const auto& row : counts)
      for (uint32_t v : row) n += v;
    return n;
  }
  uint64_t trace() const {
    uint64_t n = 0;
    for (int i = 0; i < 4; ++i) n += counts[static_cast<size_t>(i)][static_cast<size_t>(i)];
    return n;
  }
  double accuracy() const {
    const uint64_t n = total();
    return n ? static_cast<double>(trace()) / static_cast<double>(n) : 0.0;
  }
};

inline Confusion confusion_matrix(std::span<const uint8_t> labels,
                                  std::span<const uint8_t> predictions) {
  require(labels.size() == predictions.size(), Errc::shape_mismatch,
          "labels/predictions length mismatch");
  Confusion c;
  for (size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < 4, Errc::bad_label, "label out of range");
    require(predictions[i] < 4, Errc::bad_label, "prediction out of range");
    ++c.counts[labels[i]][predictions[i]];
  }
  return c;
}

struct EvalResult {
  Confusion confusion;
  double accuracy = 0.0;
  int samples = 0;
  std::vector<double> per_sample_s;  // wall time per quantized_forward call
  double mean_s = 0.0, p50_s = 0.0, p95_s = 0.0;
};

inline EvalResult eval_model(const ModelGraph& model, const Dataset& data, uint8_t split_filter) {
  std::vector<int> idx = data.indices_of_split(split_filter);
  std::vector<uint8_t> labels, preds;
  EvalResult r;
  for (int i : idx) {
    const InferenceResult inf = quantized_forward(model, frame_from_bytes(data.frame(i), model.meta));
    int arg = 0;
    for (int j = 1; j < 4; ++j) {
      if (inf.probs[j] > inf.probs[arg]) arg = j;
    }
    labels.push_back(data.labels[static_cast<size_t>(i)]);
    preds.push_back(static_cast<uint8_t>(arg));
    r.per_sample_s.push_back(static_cast<double>(inf.micros) / 1e6);
  }
  r.samples = static_cast<int>(idx.size());
  r.confusion = confusion_matrix(labels, preds);
  r.accuracy = r.confusion.accuracy();
  if (!r.per_sample_s.empty()) {
    double sum = 0.0;
    for (double v : r.per_sample_s) sum += v;
    r.mean_s = sum / static_cast<double>(r.per_sample_s.size());
    r.p50_s = detail::percentile_nearest_rank(r.per_sample_s, 0.50);
    r.p95_s = detail::percentile_nearest_rank(r.per_sample_s, 0.95);
  }
  return r;
}

struct SchemeReport {
  std::string name;  // f32 / f16 / dynamic_i8 / uint8_affine
  int64_t model_file_bytes = 0;
  int64_t weight_payload_bytes = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double mean_s = 0.0, p50_s = 0.0, p95_s = 0.0;  // per-sample inference, test split
  Confusion test_confusion;
};

struct BenchReport {
  std::string dataset_path;
  uint64_t dataset_seed = 0;
  int train_count = 0;
  int test_count = 0;
  std::string machine;  // non-deterministic
  std::vector<SchemeReport> schemes;
};

inline std::string machine_descriptor() {
  std::string cpu = "unknown-cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      const size_t colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return cpu;
}

inline std::string format_confusion(const Confusion& c) {
  std::string s;
  for (int i = 0; i < 4; ++i) {
    if (i) s += ";";
    for (int j = 0; j < 4; ++j) {
      if (j) s += ",";
      s += std::to_string(c.counts[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    }
  }
  return s;
}

// Line-delimited key/value report, stable key order. Accuracy appears both as
// an exact count fraction and a decimal. Latency fields and the machine
// descriptor vary run to run and sit below the [nondeterministic] marker.
inline void write_bench_report(const BenchReport& r, std::ostream& out) {
  out << "usgrip.report=bench\n";
  out << "usgrip.report.version=1\n";
  out << "[deterministic]\n";
  out << "dataset.path=" << r.dataset_path << "\n";
  out << "dataset.seed=" << r.dataset_seed << "\n";
  out << "dataset.train_count=" << r.train_count << "\n";
  out << "dataset.test_count=" << r.test_count << "\n";
  for (const SchemeReport& s : r.schemes) {
    out << "scheme." << s.name << ".model_file_bytes=" << s.model_file_bytes << "\n";
    out << "scheme." << s.name << ".weight_payload_bytes=" << s.weight_payload_bytes << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", s.train_accuracy);
    out << "scheme." << s.name << ".train_accuracy=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", s.test_accuracy);
    out << "scheme." << s.name << ".test_accuracy=" << buf << "\n";
    out << "scheme." << s.name << ".test_confusion=" << format_confusion(s.test_confusion) << "\n";
  }
  out << "[nondeterministic]\n";
  out << "machine=" << r.machine << "\n";
  for (const SchemeReport& s : r.schemes) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", s.mean_s);
    out << "scheme." << s.name << ".test_latency_mean_s=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", s.p50_s);
    out << "scheme." << s.name << ".test_latency_p50_s=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", s.p95_s);
    out << "scheme." << s.name << ".test_latency_p95_s=" << buf << "\n";
  }

  // Human-readable table, one row group per metric.
  out << "\n";
  out << "metric";
  for (const SchemeReport& s : r.schemes) out << "\t" << s.name;
  out << "\n";
  out << "size_bytes";
  for (const SchemeReport& s : r.schemes) out << "\t" << s.model_file_bytes;
  out << "\n";
  out << "train_accuracy";
  for (const SchemeReport& s : r.schemes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * s.train_accuracy);
    out << "\t" << buf;
  }
  out << "\n";
  out << "test_accuracy";
  for (const SchemeReport& s : r.schemes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * s.test_accuracy);
    out << "\t" << buf;
  }
  out << "\n";
  out << "test_time_per_sample_s";
  for (const SchemeReport& s : r.schemes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", s.mean_s);
    out << "\t" << buf;
  }
  out << "\n";
}

// Deterministic single-model evaluation report (no timing, no machine info):
// byte-identical across runs on identical inputs.
inline void write_eval_report(const std::string& model_path, const std::string& scheme,
                              uint8_t split, const EvalResult& r, std::ostream& out) {
  out << "usgrip.report=eval\n";
  out << "usgrip.report.version=1\n";
  out << "model.path=" << model_path << "\n";
  out << "model.scheme=" << scheme << "\n";
  out << "eval.split=" << (split == kSplitTest ? "test" : "train") << "\n";
  out << "eval.samples=" << r.samples << "\n";
  out << "eval.correct=" << r.confusion.trace() << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
  out << "eval.accuracy=" << buf << "\n";
  out << "eval.confusion=" << format_confusion(r.confusion) << "\n";
}

inline void write_client_report_json(const ClientReport& r, const std::string& path) {
  nlohmann::json j;
  j["frames_sent"] = r.frames_sent;
  j["replies"] = r.replies;
  j["lost"] = r.lost;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  j["latency_mean_s"] = r.latency_mean_s;
  j["latency_p50_s"] = r.latency_p50_s;
  j["latency_p95_s"] = r.latency_p95_s;
  j["rate_hz"] = r.rate_hz;
  j["inter_frame_delay_s"] = r.inter_frame_delay_s;
  nlohmann::json frames = nlohmann::json::array();
  for (const FrameOutcome& f : r.frames) {
    frames.push_back({{"frame_id", f.frame_id},
                      {"label", f.label},
                      {"predicted", f.predicted},
                      {"replied", f.replied},
                      {"correct", f.correct},
                      {"latency_s", f.latency_s},
                      {"server_inference_micros", f.server_inference_micros}});
  }
  j["frames"] = frames;
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io, "cannot write report: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace usgrip
