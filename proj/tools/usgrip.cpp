// usgrip: train, quantize, evaluate, and serve the gesture-recognition
// pipeline. Subcommands: gen | train | quantize | eval | serve | stream |
// bench. Exit codes: 0 success, 2 bad arguments, 3 bad file, 4 runtime error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "usgrip/bench.hpp"
#include "usgrip/client.hpp"
#include "usgrip/dataset.hpp"
#include "usgrip/model_io.hpp"
#include "usgrip/quantize.hpp"
#include "usgrip/server.hpp"
#include "usgrip/train.hpp"

namespace {

using namespace usgrip;

std::atomic<bool> g_stop{false};
void handle_signal(int) { g_stop.store(true); }

uint64_t default_seed() {
  if (const char* env = std::getenv("USGRIP_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      fail(Errc::bad_config, "USGRIP_SEED must be an integer");
    }
  }
  return 42;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::bad_magic:
    case Errc::bad_version:
    case Errc::truncated:
    case Errc::bad_layer_graph:
    case Errc::bad_dtype:
    case Errc::bad_label:
    case Errc::bad_split:
    case Errc::io:
      return 3;
    default:
      return 4;
  }
}

Dataset load_dataset_for_model(const std::string& path) {
  return load_dataset(path, /*downsample8_on_load=*/true);
}

int cmd_gen(const std::string& out, int frames_per_class, int size, uint64_t seed,
            float test_fraction, bool store_downsampled, float class_sep, float jitter) {
  GenConfig cfg;
  cfg.frames_per_class = frames_per_class;
  cfg.height = size;
  cfg.width = size;
  cfg.seed = seed;
  cfg.class_sep = class_sep;
  cfg.jitter = jitter;
  cfg.validate();
  require(!store_downsampled || size % 8 == 0, Errc::bad_config,
          "--store-downsampled needs a size divisible by 8");

  const int n = cfg.frame_count();
  std::vector<uint8_t> labels(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = frame_label(cfg, i);
  const std::vector<uint8_t> split = compute_split(labels, test_fraction, seed);

  const int out_side = store_downsampled ? size / 8 : size;
  DatasetWriter writer(out, static_cast<uint32_t>(n), static_cast<uint16_t>(out_side),
                       static_cast<uint16_t>(out_side), seed);
  std::array<double, 4> mean_sum{};
  std::array<int64_t, 4> mean_count{};
  for (int i = 0; i < n; ++i) {
    std::vector<uint8_t> px = generate_frame(cfg, i);
    if (store_downsampled) px = downsample8(px, size, size);
    for (uint8_t v : px) mean_sum[labels[static_cast<size_t>(i)]] += v;
    mean_count[labels[static_cast<size_t>(i)]] += static_cast<int64_t>(px.size());
    writer.append(labels[static_cast<size_t>(i)], split[static_cast<size_t>(i)], px);
  }
  writer.finish();

  int train_n = 0, test_n = 0;
  for (uint8_t s : split) (s == kSplitTest ? test_n : train_n)++;
  std::cout << "wrote " << out << ": " << n << " frames (" << out_side << "x" << out_side
            << "), " << train_n << " train / " << test_n << " test, seed " << seed << "\n";
  std::cout << "per-class mean intensity:";
  for (int c = 0; c < 4; ++c) {
    std::printf(" %s=%.3f", kGestureNames[static_cast<size_t>(c)],
                mean_sum[static_cast<size_t>(c)] / static_cast<double>(mean_count[static_cast<size_t>(c)]));
  }
  std::cout << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out, int epochs, float lr,
              int batch, uint64_t seed) {
  Dataset data = load_dataset_for_model(data_path);
  ModelGraph model = build_default_model(seed);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = lr;
  cfg.batch_size = batch;
  cfg.seed = seed;

  TrainResult result = train(model, data, cfg);
  for (size_t e = 0; e < result.history.size(); ++e) {
    const EpochStats& s = result.history[e];
    std::printf("epoch %2zu/%d  loss %.4f  train_acc %.4f  test_acc %.4f\n", e + 1, epochs,
                s.train_loss, s.train_accuracy, s.test_accuracy);
  }
  const int64_t bytes = save_model(result.model, out);
  std::cout << "wrote " << out << " (" << bytes << " bytes, "
            << quant_mode_name(result.model.quant) << ")\n";
  return 0;
}

int cmd_quantize(const std::string& model_path, const std::string& scheme, const std::string& out,
                 const std::string& data_path, int calib_samples, uint64_t seed) {
  ModelGraph model = load_model(model_path);
  ModelGraph q;
  if (scheme == "f16") {
    q = quantize_f16(model);
  } else if (scheme == "dynamic") {
    q = quantize_dynamic(model);
  } else if (scheme == "uint8") {
    require(!data_path.empty(), Errc::bad_config,
            "uint8 quantization needs --data for calibration");
    Dataset data = load_dataset_for_model(data_path);
    const std::vector<int> idx = calibration_indices(data, calib_samples, seed);
    q = quantize_uint8(model, calibrate(model, data, idx));
  } else {
    fail(Errc::bad_config, "unknown scheme '" + scheme + "' (f16|dynamic|uint8)");
  }
  const int64_t bytes = save_model(q, out);
  std::cout << "wrote " << out << " (" << bytes << " bytes, " << quant_mode_name(q.quant)
            << "; was " << std::filesystem::file_size(model_path) << ")\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& split,
             const std::string& report_path) {
  require(split == "train" || split == "test", Errc::bad_config, "--split must be train|test");
  ModelGraph model = load_model(model_path);
  Dataset data = load_dataset_for_model(data_path);
  const uint8_t which = (split == "train") ? kSplitTrain : kSplitTest;

  const EvalResult r = eval_model(model, data, which);
  std::ostringstream report;
  write_eval_report(model_path, quant_mode_name(model.quant), which, r, report);
  std::cout << report.str();
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::trunc);
    require(f.good(), Errc::io, "cannot write report: " + report_path);
    f << report.str();
  }
  return 0;
}

int cmd_serve(const std::string& bind, const std::string& model_path, const std::string& policy) {
  require(policy == "queue" || policy == "latest_wins", Errc::bad_config,
          "--policy must be queue|latest_wins");
  ModelGraph model = load_model(model_path);
  UdpServer server(SockAddr::parse(bind), model,
                   policy == "queue" ? ServePolicy::queue : ServePolicy::latest_wins,
                   /*verbose=*/true);
  server.start();
  std::cout << "serving " << quant_mode_name(model.quant) << " model on " << bind << " ("
            << policy << "); SIGINT to stop\n"
            << std::flush;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  return 0;
}

int cmd_stream(const std::string& target, const std::string& data_path, float rate, float delay,
               const std::string& report_path, int max_frames) {
  Dataset data = load_dataset(data_path);  // client downsamples before sending
  StreamConfig cfg;
  cfg.target = SockAddr::parse(target);
  cfg.rate_hz = rate;
  cfg.inter_frame_delay_s = delay;
  cfg.max_frames = max_frames;

  const ClientReport report = stream_client(data, cfg);
  std::printf("streamed %d frames: %d replies, %d lost, accuracy %.4f\n", report.frames_sent,
              report.replies, report.lost, report.accuracy);
  std::printf("end-to-end latency: mean %.4fs p50 %.4fs p95 %.4fs (plus %.2fs inter-frame delay)\n",
              report.latency_mean_s, report.latency_p50_s, report.latency_p95_s,
              static_cast<double>(report.inter_frame_delay_s));
  if (!report_path.empty()) write_client_report_json(report, report_path);
  return 0;
}

int cmd_bench(const std::string& data_path, const std::vector<std::string>& model_paths,
              const std::string& report_path) {
  Dataset data = load_dataset_for_model(data_path);
  BenchReport report;
  report.dataset_path = data_path;
  report.dataset_seed = data.seed;
  for (uint8_t s : data.split) (s == kSplitTest ? report.test_count : report.train_count)++;
  report.machine = machine_descriptor();

  for (const std::string& path : model_paths) {
    ModelGraph model = load_model(path);
    SchemeReport sr;
    sr.name = quant_mode_name(model.quant);
    sr.model_file_bytes = static_cast<int64_t>(std::filesystem::file_size(path));
    sr.weight_payload_bytes = model.payload_bytes();
    const EvalResult train_r = eval_model(model, data, kSplitTrain);
    const EvalResult test_r = eval_model(model, data, kSplitTest);
    sr.train_accuracy = train_r.accuracy;
    sr.test_accuracy = test_r.accuracy;
    sr.mean_s = test_r.mean_s;
    sr.p50_s = test_r.p50_s;
    sr.p95_s = test_r.p95_s;
    sr.test_confusion = test_r.confusion;
    report.schemes.push_back(std::move(sr));
  }

  std::ostringstream out;
  write_bench_report(report, out);
  std::cout << out.str();
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::trunc);
    require(f.good(), Errc::io, "cannot write report: " + report_path);
    f << out.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forearm-ultrasound gesture recognition: train, quantize, stream, benchmark"};
  app.require_subcommand(1);

  const uint64_t seed_default = [] {
    try {
      return default_seed();
    } catch (...) {
      return uint64_t{42};
    }
  }();

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic labeled dataset");
  std::string gen_out;
  int gen_fpc = 600, gen_size = 640;
  uint64_t gen_seed = seed_default;
  float gen_fraction = 0.25f, gen_sep = GenConfig{}.class_sep, gen_jitter = GenConfig{}.jitter;
  bool gen_down = false;
  gen->add_option("--out", gen_out, "output dataset path (UGD1)")->required();
  gen->add_option("--frames-per-class", gen_fpc, "frames per class (default 600)");
  gen->add_option("--size", gen_size, "native frame side length (default 640)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--test-fraction", gen_fraction, "test split fraction (default 0.25)");
  gen->add_option("--class-sep", gen_sep, "class separation strength");
  gen->add_option("--jitter", gen_jitter, "per-frame structure jitter");
  gen->add_flag("--store-downsampled", gen_down, "store 8x-downsampled frames");

  // train
  auto* tr = app.add_subcommand("train", "train the CNN on a dataset's train split");
  std::string tr_data, tr_out;
  int tr_epochs = 20, tr_batch = 32;
  float tr_lr = 1e-3f;
  uint64_t tr_seed = seed_default;
  tr->add_option("--data", tr_data, "dataset path")->required();
  tr->add_option("--out", tr_out, "output model path (UQM1)")->required();
  tr->add_option("--epochs", tr_epochs, "training epochs (default 20)");
  tr->add_option("--lr", tr_lr, "learning rate (default 1e-3)");
  tr->add_option("--batch", tr_batch, "batch size (default 32)");
  tr->add_option("--seed", tr_seed, "init/shuffle seed");

  // quantize
  auto* qz = app.add_subcommand("quantize", "post-training quantization of an f32 model");
  std::string qz_model, qz_scheme, qz_out, qz_data;
  int qz_calib = 100;
  uint64_t qz_seed = seed_default;
  qz->add_option("--model", qz_model, "f32 model path")->required();
  qz->add_option("--scheme", qz_scheme, "f16 | dynamic | uint8")->required();
  qz->add_option("--out", qz_out, "output model path")->required();
  qz->add_option("--data", qz_data, "dataset for uint8 calibration");
  qz->add_option("--calib-samples", qz_calib, "calibration sample count (default 100)");
  qz->add_option("--seed", qz_seed, "calibration sampling seed");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset split");
  std::string ev_model, ev_data, ev_split = "test", ev_report;
  ev->add_option("--model", ev_model, "model path")->required();
  ev->add_option("--data", ev_data, "dataset path")->required();
  ev->add_option("--split", ev_split, "train | test (default test)");
  ev->add_option("--report", ev_report, "write the report to this path");

  // serve
  auto* sv = app.add_subcommand("serve", "run the UDP inference server");
  std::string sv_bind, sv_model, sv_policy = "latest_wins";
  sv->add_option("--bind", sv_bind, "bind address ip:port")->required();
  sv->add_option("--model", sv_model, "model path")->required();
  sv->add_option("--policy", sv_policy, "queue | latest_wins (default latest_wins)");

  // stream
  auto* st = app.add_subcommand("stream", "stream a dataset's test split to a server");
  std::string st_target, st_data, st_report;
  float st_rate = 10.0f, st_delay = 0.1f;
  int st_max = -1;
  st->add_option("--target", st_target, "server address ip:port")->required();
  st->add_option("--data", st_data, "dataset path")->required();
  st->add_option("--rate", st_rate, "frame rate cap in Hz (default 10)");
  st->add_option("--delay", st_delay, "artificial inter-frame delay in s (default 0.1)");
  st->add_option("--report", st_report, "write a JSON report to this path");
  st->add_option("--max-frames", st_max, "stream at most this many frames");

  // bench
  auto* bn = app.add_subcommand("bench", "size/accuracy/latency table across schemes");
  std::string bn_data, bn_report;
  std::vector<std::string> bn_models;
  bn->add_option("--data", bn_data, "dataset path")->required();
  bn->add_option("--models", bn_models, "model paths (one per scheme)")->required();
  bn->add_option("--report", bn_report, "write the report to this path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen(gen_out, gen_fpc, gen_size, gen_seed, gen_fraction, gen_down, gen_sep,
                     gen_jitter);
    }
    if (tr->parsed()) return cmd_train(tr_data, tr_out, tr_epochs, tr_lr, tr_batch, tr_seed);
    if (qz->parsed()) return cmd_quantize(qz_model, qz_scheme, qz_out, qz_data, qz_calib, qz_seed);
    if (ev->parsed()) return cmd_eval(ev_model, ev_data, ev_split, ev_report);
    if (sv->parsed()) return cmd_serve(sv_bind, sv_model, sv_policy);
    if (st->parsed()) return cmd_stream(st_target, st_data, st_rate, st_delay, st_report, st_max);
    if (bn->parsed()) return cmd_bench(bn_data, bn_models, bn_report);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
