// fishdreamer: derive fisheye datasets, inspect them, train and evaluate the toy model.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fishdreamer/config.hpp"
#include "fishdreamer/dataset.hpp"
#include "fishdreamer/errors.hpp"
#include "fishdreamer/metrics.hpp"
#include "fishdreamer/raster.hpp"
#include "fishdreamer/synthetic.hpp"
#include "fishdreamer/training.hpp"
#include "fishdreamer/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// Every manifest sample of a split must share the frame size of the model.
fd::DreamerConfig config_for(const fd::AppConfig& app, const fd::Manifest& m) {
  if (m.samples.empty()) throw fd::FormatError("manifest has no samples", 0);
  const auto w = m.samples.front().width;
  const auto h = m.samples.front().height;
  for (const auto& r : m.samples) {
    if (r.width != w || r.height != h) throw fd::DimensionError("manifest mixes frame sizes");
  }
  return fd::model_config(app, w, h);
}

int cmd_synth(const fs::path& out, std::size_t train, std::size_t val, std::size_t w, std::size_t h,
              std::uint64_t seed) {
  std::size_t split_seed = seed;
  for (const auto& [split, n] : {std::pair{std::string("train"), train}, {std::string("val"), val}}) {
    fs::create_directories(out / "images" / split);
    fs::create_directories(out / "labels" / split);
    const auto scenes = fd::make_scenes(n, w, h, split_seed++);
    for (std::size_t i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu.png", i);
      fd::write_png(out / "images" / split / name, scenes[i].rgb);
      fd::write_png(out / "labels" / split / name, scenes[i].label);
    }
  }
  return kOk;
}

int cmd_derive(const fd::AppConfig& app, const fs::path& in, const fs::path& out) {
  const auto res = fd::derive(app, in, out);
  for (const auto& s : fd::kSplits) {
    std::cout << s << ": " << res.manifest.count(s) << " samples\n";
  }
  for (const auto& u : res.unpaired) std::cerr << "unpaired: " << u << "\n";
  for (const auto& f : res.failed) std::cerr << "failed: " << f << "\n";
  if (!res.unpaired.empty() || !res.failed.empty()) {
    std::cerr << res.unpaired.size() << " unpaired, " << res.failed.size() << " failed\n";
    return kData;
  }
  return kOk;
}

int cmd_stats(const fd::AppConfig& app, const fs::path& manifest, const std::string& out) {
  const auto m = fd::read_manifest(manifest);
  const auto s = fd::dataset_stats(m, manifest.parent_path(), app.model.num_classes, app.ignore_index);
  const auto csv = fd::stats_csv(s);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  for (const auto& e : s.errors) std::cerr << "error: " << e << "\n";
  return s.errors.empty() ? kOk : kData;
}

int cmd_init(const fd::AppConfig& app, std::optional<std::size_t> width,
             std::optional<std::size_t> height, const fs::path& out) {
  if (!width) width = app.out_width;
  if (!height) height = app.out_height;
  if (!width || !height) throw fd::ContractError("init needs --width/--height or out_width/out_height");
  const auto cfg = fd::model_config(app, *width, *height);
  const auto w = fd::init_weights(cfg);
  fd::save_weights(w, out);
  std::cout << w.parameter_count() << " parameters\n";
  return kOk;
}

json shape_json(const fd::Tensor& t) {
  json a = json::array();
  for (auto d : t.shape()) a.push_back(d);
  return a;
}

int cmd_demo(const fd::AppConfig& app, const fs::path& weights, const fs::path& image,
             const fs::path& mask, const fs::path& out_dir) {
  const fd::Image rgb = fd::read_png(image);
  const fd::Image fov = fd::read_png(mask);
  const auto cfg = fd::model_config(app, rgb.width, rgb.height);
  const auto w = fd::load_weights(weights, &cfg);
  const fd::Sample s = fd::make_sample(rgb, fd::Image(rgb.width, rgb.height, 1), fov);
  fd::Dreamer model(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  fd::ForwardOutput out;
  {
    fd::NoGradScope ng;
    out = model.forward(s.input, s.fov, w);
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  fs::create_directories(out_dir);
  fd::write_png(out_dir / "rgb.png", fd::to_image(out.rgb));
  fd::write_png(out_dir / "label.png", fd::argmax_labels(out.logits));
  const json report{{"input", shape_json(s.input)},
                    {"rgb", shape_json(out.rgb)},
                    {"logits", shape_json(out.logits)},
                    {"forward_ms", ms}};
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  std::cout << report.dump() << "\n";
  return kOk;
}

struct TrainArgs {
  fs::path manifest, out, curve, init;
  std::optional<std::size_t> steps, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
};

int cmd_train(fd::AppConfig app, const TrainArgs& a) {
  if (a.seed) app.model.seed = *a.seed;
  const auto m = fd::read_manifest(a.manifest);
  const auto cfg = config_for(app, m);
  const auto data = fd::load_split(m, a.manifest.parent_path(), "train");
  if (data.empty()) throw fd::FormatError("no training samples", 0);
  fd::TrainOptions opt;
  opt.steps = a.steps.value_or(app.steps);
  opt.batch_size = a.batch.value_or(app.batch_size);
  opt.adam.lr = static_cast<float>(a.lr.value_or(app.lr));
  opt.seed = cfg.seed;
  opt.ignore_index = app.ignore_index;
  opt.on_step = [&](std::size_t step, double loss) {
    if (step % 50 == 0 || step + 1 == opt.steps) std::cerr << "step " << step << " loss " << loss << "\n";
  };
  fd::ModelWeights initial;
  if (!a.init.empty()) initial = fd::load_weights(a.init, &cfg);
  const auto res = fd::train_toy(data, cfg, opt, std::move(initial));
  fd::save_weights(res.weights, a.out);
  if (!a.curve.empty()) {
    std::string csv = "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, res.loss_curve[i]);
      csv += buf;
    }
    write_text(a.curve, csv);
  }
  return kOk;
}

int cmd_eval(const fd::AppConfig& app, const fs::path& manifest, const fs::path& weights,
             const std::string& split, const std::string& out) {
  const auto m = fd::read_manifest(manifest);
  const auto cfg = config_for(app, m);
  const auto w = fd::load_weights(weights, &cfg);
  fd::Dreamer model(cfg);
  fd::ConfusionMatrix cm(cfg.num_classes, app.ignore_index);
  double psnr_sum = 0, blind_sum = 0, ssim_sum = 0;
  std::size_t n = 0;
  const fs::path root = manifest.parent_path();
  for (const auto& r : m.samples) {
    if (r.split != split) continue;
    const fd::Image rgb = fd::read_png(root / r.image);
    const fd::Image label = fd::read_png(root / r.label);
    const fd::Image fov = fd::read_png(root / r.mask);
    const fd::Sample s = fd::make_sample(rgb, label, fov);
    fd::ForwardOutput o;
    {
      fd::NoGradScope ng;
      o = model.forward(s.input, s.fov, w);
    }
    const fd::Image pred = fd::to_image(o.rgb);
    const fd::Image pred_label = fd::argmax_labels(o.logits);
    std::vector<std::uint8_t> blind(fov.pixels.size());
    for (std::size_t p = 0; p < blind.size(); ++p) blind[p] = fov.pixels[p] ? 0 : 1;
    psnr_sum += fd::psnr(pred, rgb);
    blind_sum += fd::psnr(pred, rgb, 255.0, blind);
    ssim_sum += fd::ssim(pred, rgb);
    cm.add(pred_label.pixels, label.pixels);
    ++n;
  }
  if (n == 0) throw fd::FormatError("split '" + split + "' has no samples", 0);
  json iou = json::array();
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto v = cm.iou(c);
    iou.push_back(v ? json(*v) : json(nullptr));
  }
  const json report{{"split", split},
                    {"samples", n},
                    {"psnr", psnr_sum / n},
                    {"psnr_blind", blind_sum / n},
                    {"ssim", ssim_sum / n},
                    {"miou", cm.miou()},
                    {"iou", iou}};
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fisheye outpainting and segmentation toolkit"};
  app.require_subcommand(1);
  std::string config;

  auto* synth = app.add_subcommand("synth", "write a toy pinhole dataset of synthetic scenes");
  fs::path synth_out;
  std::size_t synth_train = 16, synth_val = 4, synth_w = 64, synth_h = 64;
  std::uint64_t synth_seed = 1;
  synth->add_option("--output", synth_out, "output root")->required();
  synth->add_option("--train", synth_train, "training scenes");
  synth->add_option("--val", synth_val, "validation scenes");
  synth->add_option("--width", synth_w)->check(CLI::PositiveNumber);
  synth->add_option("--height", synth_h)->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed);

  auto* derive = app.add_subcommand("derive", "warp pinhole image/label pairs into fisheye samples");
  fs::path derive_in, derive_out;
  derive->add_option("--config", config)->required();
  derive->add_option("--input", derive_in, "root holding images/ and labels/")->required();
  derive->add_option("--output", derive_out, "output dataset root")->required();

  auto* stats = app.add_subcommand("stats", "per-class pixel percentages as CSV");
  fs::path stats_manifest;
  std::string stats_out;
  stats->add_option("--config", config)->required();
  stats->add_option("--manifest", stats_manifest)->required();
  stats->add_option("--output", stats_out, "CSV path (stdout if omitted)");

  auto* init = app.add_subcommand("init", "write freshly initialized weights");
  fs::path init_out;
  std::optional<std::size_t> init_w, init_h;
  init->add_option("--config", config)->required();
  init->add_option("--width", init_w, "frame width (default out_width)");
  init->add_option("--height", init_h, "frame height (default out_height)");
  init->add_option("--output", init_out)->required();

  auto* demo = app.add_subcommand("demo", "run one forward pass and write rgb/label PNGs");
  fs::path demo_weights, demo_image, demo_mask, demo_out;
  demo->add_option("--config", config)->required();
  demo->add_option("--weights", demo_weights)->required();
  demo->add_option("--image", demo_image)->required();
  demo->add_option("--mask", demo_mask)->required();
  demo->add_option("--output-dir", demo_out)->required();

  auto* train = app.add_subcommand("train", "toy training on the train split");
  TrainArgs ta;
  train->add_option("--config", config)->required();
  train->add_option("--manifest", ta.manifest)->required();
  train->add_option("--output", ta.out, "weights file")->required();
  train->add_option("--curve", ta.curve, "loss curve CSV");
  train->add_option("--init", ta.init, "start from these weights");
  train->add_option("--steps", ta.steps);
  train->add_option("--batch-size", ta.batch);
  train->add_option("--lr", ta.lr);
  train->add_option("--seed", ta.seed);

  auto* eval = app.add_subcommand("eval", "PSNR, SSIM and mIoU on a split, as JSON");
  fs::path eval_manifest, eval_weights;
  std::string eval_split = "val", eval_out;
  eval->add_option("--config", config)->required();
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--weights", eval_weights)->required();
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--output", eval_out, "JSON path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  fd::AppConfig cfg;
  try {
    if (!config.empty()) cfg = fd::load_app_config(config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_train, synth_val, synth_w, synth_h, synth_seed);
    if (*derive) return cmd_derive(cfg, derive_in, derive_out);
    if (*stats) return cmd_stats(cfg, stats_manifest, stats_out);
    if (*init) return cmd_init(cfg, init_w, init_h, init_out);
    if (*demo) return cmd_demo(cfg, demo_weights, demo_image, demo_mask, demo_out);
    if (*train) return cmd_train(cfg, ta);
    if (*eval) return cmd_eval(cfg, eval_manifest, eval_weights, eval_split, eval_out);
  } catch (const fd::NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const fd::ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
