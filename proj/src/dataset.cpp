#include "fishdreamer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fishdreamer/errors.hpp"
#include "fishdreamer/raster.hpp"

namespace fd {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t Manifest::count(const std::string& split) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [&](const SampleRecord& r) { return r.split == split; }));
}

std::string manifest_jsonl(const Manifest& m) {
  json counts = json::object();
  for (const auto& s : kSplits) counts[s] = m.count(s);
  std::string out =
      json{{"dataset", m.dataset}, {"distortion_hash", m.distortion_hash}, {"counts", counts}}
          .dump() +
      "\n";
  for (const auto& r : m.samples) {
    out += json{{"split", r.split},   {"name", r.name},   {"image", r.image},
                {"label", r.label},   {"mask", r.mask},   {"width", r.width},
                {"height", r.height}}
               .dump() +
           "\n";
  }
  return out;
}

Manifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Manifest m;
  json counts;
  bool header = true;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (header) {
        m.dataset = j.at("dataset").get<std::string>();
        m.distortion_hash = j.at("distortion_hash").get<std::string>();
        counts = j.at("counts");
        header = false;
        continue;
      }
      SampleRecord r;
      r.split = j.at("split").get<std::string>();
      r.name = j.at("name").get<std::string>();
      r.image = j.at("image").get<std::string>();
      r.label = j.at("label").get<std::string>();
      r.mask = j.at("mask").get<std::string>();
      r.width = j.at("width").get<std::size_t>();
      r.height = j.at("height").get<std::size_t>();
      m.samples.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what(), lineno);
  }
  if (header) throw FormatError("manifest: missing header", 0);
  for (const auto& [split, n] : counts.items()) {
    if (n.get<std::size_t>() != m.count(split)) {
      throw FormatError("manifest: count mismatch for split " + split, 0);
    }
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot write " + path.string());
  f << manifest_jsonl(m);
  if (!f) throw ContractError("write failed: " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_manifest(ss.str());
}

DistortionModel distortion_for(const AppConfig& app, std::size_t width, std::size_t height) {
  const Point c = app.center_x ? Point{*app.center_x, *app.center_y} : frame_center(width, height);
  const double norm = app.norm_radius
                          ? *app.norm_radius
                          : 0.5 * std::hypot(static_cast<double>(width), static_cast<double>(height));
  if (!(norm > 0.0)) throw ContractError("norm_radius must be positive");
  double far = 0.0;
  for (double x : {0.0, static_cast<double>(width) - 1.0}) {
    for (double y : {0.0, static_cast<double>(height) - 1.0}) {
      far = std::max(far, std::hypot(x - c.x, y - c.y));
    }
  }
  return DistortionModel(app.k, c, norm, std::max(far / norm, 1e-9));
}

namespace {

// Relative file names of *.png directly inside dir, sorted.
std::vector<std::string> png_names(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      out.push_back(e.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Image as_labels(const Image& img) {
  if (img.channels == 1) return img;
  // RGB label files must be gray in disguise.
  Image out(img.width, img.height, 1);
  for (std::size_t p = 0; p < img.width * img.height; ++p) {
    const auto* px = &img.pixels[p * img.channels];
    if (px[0] != px[1] || px[1] != px[2]) throw FormatError("label map is not single-channel", 0);
    out.pixels[p] = px[0];
  }
  return out;
}

}  // namespace

DeriveResult derive(const AppConfig& app, const fs::path& in_root, const fs::path& out_root) {
  DeriveResult res;
  res.manifest.dataset = app.dataset;
  res.manifest.distortion_hash = hex64(distortion_hash(app));

  struct Job {
    std::string split, name;
  };
  std::vector<Job> jobs;
  for (const auto& split : kSplits) {
    const auto images = png_names(in_root / "images" / split);
    const auto labels = png_names(in_root / "labels" / split);
    std::vector<std::string> both;
    std::set_intersection(images.begin(), images.end(), labels.begin(), labels.end(),
                          std::back_inserter(both));
    for (const auto& n : images) {
      if (!std::binary_search(both.begin(), both.end(), n)) {
        res.unpaired.push_back("images/" + split + "/" + n);
      }
    }
    for (const auto& n : labels) {
      if (!std::binary_search(both.begin(), both.end(), n)) {
        res.unpaired.push_back("labels/" + split + "/" + n);
      }
    }
    for (const auto& n : both) jobs.push_back({split, n});
  }

  for (const auto& split : kSplits) {
    for (const char* kind : {"image", "label", "mask"}) fs::create_directories(out_root / split / kind);
  }

  std::vector<std::optional<SampleRecord>> records(jobs.size());
  std::vector<std::string> errors(jobs.size());
  const auto fill = static_cast<std::uint8_t>(app.ignore_index);

#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(jobs.size()); ++i) {
    const Job& job = jobs[static_cast<std::size_t>(i)];
    const std::string img_rel = "images/" + job.split + "/" + job.name;
    try {
      const Image rgb = read_png(in_root / img_rel);
      const Image lab = as_labels(read_png(in_root / "labels" / job.split / job.name));
      if (rgb.channels != 3) throw FormatError("image is not RGB", 0);
      if (!rgb.same_size(lab)) throw DimensionError("image and label sizes differ");
      const std::size_t ow = app.out_width.value_or(rgb.width);
      const std::size_t oh = app.out_height.value_or(rgb.height);
      const DistortionModel model = distortion_for(app, rgb.width, rgb.height);
      const Image warped = warp_image(rgb, model, ow, oh, Interp::Bilinear);
      const Image warped_label = warp_image(lab, model, ow, oh, Interp::Nearest, fill);
      const Image mask = circular_mask(ow, oh, frame_center(ow, oh), app.fov_radius).to_image();

      SampleRecord r;
      r.split = job.split;
      r.name = job.name;
      r.image = job.split + "/image/" + job.name;
      r.label = job.split + "/label/" + job.name;
      r.mask = job.split + "/mask/" + job.name;
      r.width = ow;
      r.height = oh;
      write_png(out_root / r.image, warped);
      write_png(out_root / r.label, warped_label);
      write_png(out_root / r.mask, mask);
      records[static_cast<std::size_t>(i)] = std::move(r);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = img_rel + ": " + e.what();
    }
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (records[i]) {
      res.manifest.samples.push_back(std::move(*records[i]));
    } else {
      res.failed.push_back(errors[i]);
    }
  }
  write_manifest(out_root / "manifest.jsonl", res.manifest);
  return res;
}

std::vector<double> ClassStats::percent() const {
  std::vector<double> out(pixels.size(), 0.0);
  if (labeled == 0) return out;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    out[k] = 100.0 * static_cast<double>(pixels[k]) / static_cast<double>(labeled);
  }
  return out;
}

StatsResult dataset_stats(const Manifest& m, const fs::path& root, std::size_t num_classes,
                          std::int32_t ignore_index) {
  StatsResult res;
  for (const auto& split : kSplits) {
    ClassStats cs;
    cs.split = split;
    cs.pixels.assign(num_classes, 0);
    for (const auto& r : m.samples) {
      if (r.split != split) continue;
      try {
        const Image lab = as_labels(read_png(root / r.label));
        std::size_t bad = 0;
        for (auto v : lab.pixels) {
          if (static_cast<std::int32_t>(v) == ignore_index) {
            ++cs.ignored;
          } else if (v < num_classes) {
            ++cs.pixels[v];
            ++cs.labeled;
          } else {
            ++bad;
          }
        }
        if (bad) res.errors.push_back(r.label + ": " + std::to_string(bad) + " pixels with class id >= " +
                                      std::to_string(num_classes));
      } catch (const std::exception& e) {
        res.errors.push_back(r.label + ": " + e.what());
      }
    }
    res.splits.push_back(std::move(cs));
  }
  return res;
}

std::string stats_csv(const StatsResult& s) {
  std::string out = "split,class,pixels,percent\n";
  char buf[128];
  for (const auto& cs : s.splits) {
    const auto pct = cs.percent();
    for (std::size_t k = 0; k < cs.pixels.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%llu,%.10f\n", cs.split.c_str(), k,
                    static_cast<unsigned long long>(cs.pixels[k]), pct[k]);
      out += buf;
    }
  }
  return out;
}

std::vector<Sample> load_split(const Manifest& m, const fs::path& root, const std::string& split) {
  std::vector<Sample> out;
  for (const auto& r : m.samples) {
    if (r.split != split) continue;
    out.push_back(make_sample(read_png(root / r.image), as_labels(read_png(root / r.label)),
                              as_labels(read_png(root / r.mask))));
  }
  return out;
}

}  // namespace fd
