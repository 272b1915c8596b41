#include <CLI11.hpp>
#include <json.hpp>
#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "egqn/ad/tape.hpp"
#include "egqn/common/binary_io.hpp"
#include "egqn/harness/benchmark.hpp"
#include "egqn/harness/evaluate.hpp"
#include "egqn/harness/plots.hpp"
#include "egqn/harness/train.hpp"
#include "egqn/model/checkpoint.hpp"
#include "egqn/model/network.hpp"
#include "egqn/scene/dataset.hpp"

namespace {

using namespace egqn;

constexpr int kExitContract = 1;
constexpr int kExitNumeric = 2;

void write_png(const std::string& path, const std::vector<std::uint8_t>& rgb, int width, int height) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(r) * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("not an integer: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

model::ModelConfig load_model_config(const std::string& path) {
  model::ModelConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open model config " + path);
  try {
    cfg = nlohmann::json::parse(in).get<model::ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model config " + path + ": " + e.what());
  }
  return cfg;
}

struct GenArgs {
  std::string out;
  std::size_t scenes = 64;
  int size = 32;
  int views = 8;
  std::uint64_t seed = 0;
  std::size_t chunk = 64;
  unsigned threads = 0;
};

int run_gen(const GenArgs& a) {
  scene::GenerationConfig cfg;
  cfg.image_size = a.size;
  cfg.views_per_scene = a.views;
  const unsigned threads = a.threads ? a.threads : std::max(1u, std::thread::hardware_concurrency());
  const auto records = scene::generate_scenes(a.seed, a.scenes, cfg, threads);
  scene::write_dataset(a.out, cfg, records, a.chunk);
  std::cout << "wrote " << records.size() << " scenes to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string mode = "egqn";
  long steps = 2000;
  std::uint64_t seed = 0;
  std::string out;
  std::string metrics;
  std::string model_config;
  bool strict = false;
  int batch = 8;
  int warmup = -1;
  int decay = 20000;
  double lr_initial = 2e-5;
  double lr_peak = 1e-4;
  double lr_floor = 1e-5;
  long checkpoint_every = 500;
};

int run_train(const TrainArgs& a) {
  auto mc = load_model_config(a.model_config);
  mc.mode = model::parse_mode(a.mode);
  harness::TrainConfig tc;
  tc.total_steps = a.steps;
  tc.seed = a.seed;
  tc.batch_size = a.batch;
  tc.strict_deterministic = a.strict;
  tc.checkpoint_every = a.checkpoint_every;
  tc.schedule = {a.lr_initial, a.lr_peak, a.lr_floor,
                 a.warmup >= 0 ? a.warmup : static_cast<int>(std::min<long>(500, a.steps / 2)), a.decay};
  tc.checkpoint_path = a.out;
  tc.metrics_path = a.metrics.empty() ? a.out + ".metrics.csv" : a.metrics;
  const auto data = scene::read_dataset(a.data);
  try {
    const auto result = harness::train(data, tc, mc);
    const auto& last = result.metrics.back();
    std::cout << "trained " << tc.total_steps << " steps, final loss " << last.loss << ", checkpoint " << a.out
              << ", metrics " << tc.metrics_path << '\n';
  } catch (const harness::NumericError& e) {
    nlohmann::json dump{{"error", e.what()},   {"step", e.step},   {"batch_seed", e.batch_seed},
                        {"scenes", e.scenes},  {"seed", tc.seed}, {"mode", a.mode}};
    const std::string path = a.out + ".nan.json";
    std::ofstream(path) << dump.dump(2) << '\n';
    std::cerr << "numeric failure: " << e.what() << " (batch seed " << e.batch_seed << "); details in " << path
              << '\n';
    return kExitNumeric;
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  std::uint64_t seed = 1;
  int queries = 1;
  std::size_t max_scenes = 0;
};

int run_eval(const EvalArgs& a) {
  const auto ck = model::load_checkpoint(a.ckpt);
  const auto data = scene::read_dataset(a.data);
  const auto report = harness::evaluate(ck.params, ck.config, data, a.seed, a.queries, a.max_scenes);
  harness::write_report_csv(a.report, report);
  if (!std::isfinite(report.elbo)) {
    std::cerr << "numeric failure: non-finite ELBO in evaluation\n";
    return kExitNumeric;
  }
  std::printf("mode %s  samples %zu  MAE %.4f  RMSE %.4f  ELBO %.5f nats/dim\n",
              model::to_string(report.mode).c_str(), report.samples, report.mae, report.rmse, report.elbo);
  return 0;
}

struct BenchArgs {
  std::string grids = "8,16,32";
  int contexts = 3;
  int repeats = 5;
  int forward_samples = 3;
  std::uint64_t seed = 0;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  harness::AttentionBenchOptions opts;
  opts.grids = parse_int_list(a.grids);
  opts.contexts = a.contexts;
  opts.repeats = a.repeats;
  opts.seed = a.seed;
  const auto rows = harness::benchmark_attention(opts);
  std::vector<harness::ThroughputRow> fwd;
  if (a.forward_samples > 0) {
    model::ModelConfig mc;
    mc.contexts = a.contexts;
    fwd = harness::benchmark_forward(mc, a.forward_samples, a.seed);
  }
  harness::write_benchmark_csv(a.out, rows, fwd);
  for (const auto& r : rows) {
    std::printf("%-8s n=%-3d comparisons/pixel=%-6zu %.3e s  rep bytes %zu\n", r.mode.c_str(), r.grid,
                r.comparisons_per_pixel, r.seconds, r.rep_bytes);
  }
  for (const auto& r : fwd) std::printf("forward %-4s %.3f samples/s\n", r.mode.c_str(), r.samples_per_second);
  return 0;
}

struct RenderArgs {
  std::string ckpt;
  std::string data;
  std::size_t scene = 0;
  int view = 0;
  std::string contexts;
  std::uint64_t seed = 0;
  std::string out;
  std::string target_out;
};

int run_render(const RenderArgs& a) {
  const auto ck = model::load_checkpoint(a.ckpt);
  const auto data = scene::read_dataset(a.data);
  if (a.scene >= data.scenes.size()) throw std::invalid_argument("scene index out of range");
  const auto& rec = data.scenes[a.scene];
  const int views = static_cast<int>(rec.views.size());
  if (a.view < 0 || a.view >= views) throw std::invalid_argument("view index out of range");
  std::vector<int> contexts;
  if (!a.contexts.empty()) {
    contexts = parse_int_list(a.contexts);
  } else {
    for (int v = 0; v < views && static_cast<int>(contexts.size()) < ck.config.contexts; ++v) {
      if (v != a.view) contexts.push_back(v);
    }
  }
  const auto ep = harness::make_episode<float>(rec, contexts, a.view);
  ad::NoGradScope<float> no_grad;
  const auto pred = model::render(ck.params, ck.config, ep, a.seed);
  std::vector<std::uint8_t> rgb;
  for (double v : harness::to_pixel_scale(pred.data())) rgb.push_back(static_cast<std::uint8_t>(std::lround(v)));
  const int size = rec.intrinsics.image_h;
  write_png(a.out, rgb, size, size);
  if (!a.target_out.empty()) write_png(a.target_out, rec.views[static_cast<std::size_t>(a.view)].rgb, size, size);
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

struct PlotArgs {
  std::string metrics;
  std::string out;
  double output_std = 1.4;
};

int run_plot(const PlotArgs& a) {
  for (const auto& p : harness::export_plots(a.metrics, a.out, a.output_std)) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Epipolar-attention generative query network toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a procedural multi-view dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--size", gen.size, "Image size in pixels")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--views", gen.views, "Views per scene")->check(CLI::Range(1, 65535));
  gen_cmd->add_option("--seed", gen.seed, "Root seed");
  gen_cmd->add_option("--chunk-size", gen.chunk, "Scenes per chunk file")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--threads", gen.threads, "Worker threads, 0 for all cores");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint plus metrics CSV");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--mode", tr.mode, "Model variant")->check(CLI::IsMember({"gqn", "egqn"}));
  train_cmd->add_option("--steps", tr.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed, "Seed for weights and batches");
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--metrics", tr.metrics, "Metrics CSV path (default: <out>.metrics.csv)");
  train_cmd->add_option("--model-config", tr.model_config, "JSON model configuration");
  train_cmd->add_flag("--strict-deterministic", tr.strict, "Load batches on the training thread");
  train_cmd->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--warmup", tr.warmup, "Warmup steps (default: min(500, steps/2))");
  train_cmd->add_option("--decay", tr.decay, "Decay steps after warmup");
  train_cmd->add_option("--lr-initial", tr.lr_initial, "Learning rate at step 0");
  train_cmd->add_option("--lr-peak", tr.lr_peak, "Learning rate at the end of warmup");
  train_cmd->add_option("--lr-floor", tr.lr_floor, "Learning rate after decay");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint cadence in steps, 0 for final only");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Held-out MAE, RMSE and ELBO");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--report", ev.report, "Report CSV")->required();
  eval_cmd->add_option("--seed", ev.seed, "Seed for view choice and sampling");
  eval_cmd->add_option("--queries-per-scene", ev.queries, "Episodes per scene")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--max-scenes", ev.max_scenes, "Evaluate only the first N scenes");

  BenchArgs bn;
  auto* bench_cmd = app.add_subcommand("bench-attn", "Attention comparison counts and timings");
  bench_cmd->add_option("--grids", bn.grids, "Comma-separated grid sizes h'");
  bench_cmd->add_option("--contexts", bn.contexts, "Context views")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", bn.repeats, "Timed repeats")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--forward-samples", bn.forward_samples, "Full-model renders per mode, 0 to skip");
  bench_cmd->add_option("--seed", bn.seed, "Seed");
  bench_cmd->add_option("--out", bn.out, "Output CSV")->required();

  RenderArgs rd;
  auto* render_cmd = app.add_subcommand("render", "Predict one dataset view and save it as PNG");
  render_cmd->add_option("--ckpt", rd.ckpt, "Checkpoint")->required();
  render_cmd->add_option("--data", rd.data, "Dataset directory")->required();
  render_cmd->add_option("--scene", rd.scene, "Scene index");
  render_cmd->add_option("--view", rd.view, "Query view index");
  render_cmd->add_option("--contexts", rd.contexts, "Comma-separated context views (default: first K others)");
  render_cmd->add_option("--seed", rd.seed, "Latent sampling seed");
  render_cmd->add_option("--out", rd.out, "Output PNG")->required();
  render_cmd->add_option("--target-out", rd.target_out, "Also save the ground-truth view");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "SVG learning curves from a metrics CSV");
  plot_cmd->add_option("--metrics", pl.metrics, "Metrics CSV")->required();
  plot_cmd->add_option("--out", pl.out, "Output directory")->required();
  plot_cmd->add_option("--output-std", pl.output_std, "Output standard deviation for the floor rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitContract;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*bench_cmd) return run_bench(bn);
    if (*render_cmd) return run_render(rd);
    if (*plot_cmd) return run_plot(pl);
  } catch (const harness::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  }
  return kExitContract;
}
