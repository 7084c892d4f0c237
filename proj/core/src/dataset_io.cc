#include "privtrans/dataset_io.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>

#include <json.hpp>

#include "privtrans/errors.h"

namespace privtrans {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kSplits[] = {"train", "proxy", "test"};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

png_byte ToByte(double v) {
  return static_cast<png_byte>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
}

// "<id>_x.png" -> ("<id>", 'x'); anything else -> ("", 0).
std::pair<std::string, char> SplitName(const fs::path& p) {
  const std::string name = p.filename().string();
  if (name.size() < 7 || name.compare(name.size() - 4, 4, ".png") != 0) {
    return {"", 0};
  }
  const std::string stem = name.substr(0, name.size() - 4);
  if (stem.size() < 3 || stem[stem.size() - 2] != '_') return {"", 0};
  const char role = stem.back();
  if (role != 'x' && role != 'y') return {"", 0};
  return {stem.substr(0, stem.size() - 2), role};
}

}  // namespace

void WritePng(const ImageTensor& image, const fs::path& file) {
  const int c = image.channels(), h = image.height(), w = image.width();
  if (c != 1 && c != 3) {
    throw IngestionError("PNG storage needs 1 or 3 channels, got " +
                         std::to_string(c));
  }
  File fp(std::fopen(file.c_str(), "wb"));
  if (!fp) throw IngestionError("cannot write " + file.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IngestionError("libpng init failed");
  }
  std::vector<png_byte> rows(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        rows[(static_cast<std::size_t>(y) * w + x) * c + ch] =
            ToByte(image.at(ch, y, x));
      }
    }
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IngestionError("libpng failed writing " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, rows.data() + static_cast<std::size_t>(y) * w * c);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor ReadPng(const fs::path& file) {
  File fp(std::fopen(file.c_str(), "rb"));
  if (!fp) throw IngestionError("cannot open " + file.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IngestionError("libpng init failed");
  }
  std::vector<png_byte> pixels;
  int w = 0, h = 0, c = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("not a readable PNG: " + file.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_expand(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  c = png_get_channels(png, info);
  pixels.resize(static_cast<std::size_t>(w) * h * c);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) {
    row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * w * c;
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> values(pixels.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        values[(static_cast<std::size_t>(ch) * h + y) * w + x] =
            pixels[(static_cast<std::size_t>(y) * w + x) * c + ch] / 127.5 - 1.0;
      }
    }
  }
  return ImageTensor(c, h, w, std::move(values));
}

void SavePairedFolder(const std::vector<PairedSample>& samples,
                      const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IngestionError("cannot create " + dir.string());
  for (const auto& s : samples) {
    WritePng(s.input(), dir / (s.id() + "_x.png"));
    if (s.has_target()) WritePng(s.target(), dir / (s.id() + "_y.png"));
  }
}

std::vector<PairedSample> LoadPairedFolder(const fs::path& dir, bool labeled) {
  if (!fs::is_directory(dir)) {
    throw IngestionError("dataset folder " + dir.string() + " does not exist");
  }
  std::map<std::string, std::pair<bool, bool>> seen;  // id -> (has x, has y)
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto [id, role] = SplitName(entry.path());
    if (role == 'x') seen[id].first = true;
    if (role == 'y') seen[id].second = true;
  }
  std::vector<PairedSample> out;
  for (const auto& [id, has] : seen) {
    if (!has.first) throw IngestionError("sample " + id + " has a y image but no x");
    if (labeled && !has.second) {
      throw IngestionError("sample " + id + " has no y image in a labeled split");
    }
    ImageTensor x = ReadPng(dir / (id + "_x.png"));
    if (has.second && labeled) {
      ImageTensor y = ReadPng(dir / (id + "_y.png"));
      if (y.height() != x.height() || y.width() != x.width()) {
        throw IngestionError("sample " + id + " has mismatched x/y sizes");
      }
      out.emplace_back(id, std::move(x), std::move(y));
    } else {
      out.emplace_back(id, std::move(x));
    }
  }
  return out;
}

void SaveDataset(const DatasetSplits& splits, const fs::path& root) {
  const std::vector<PairedSample>* parts[] = {&splits.train, &splits.proxy,
                                              &splits.test};
  json ids = json::object();
  for (int k = 0; k < 3; ++k) {
    SavePairedFolder(*parts[k], root / kSplits[k]);
    json list = json::array();
    for (const auto& s : *parts[k]) list.push_back(s.id());
    ids[kSplits[k]] = list;
  }
  std::vector<PairedSample> truths;
  for (const auto& s : splits.proxy) {
    if (auto t = splits.proxy_truths.Reveal(s.id())) {
      truths.emplace_back(s.id(), s.input(), std::move(*t));
    }
  }
  if (!truths.empty()) SavePairedFolder(truths, root / "proxy_truths");
  const json manifest = {{"format_version", kFormatVersion},
                         {"splits", ids},
                         {"has_proxy_truths", !truths.empty()}};
  std::ofstream out(root / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw IngestionError("cannot write " + (root / "manifest.json").string());
}

DatasetSplits LoadDataset(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw IngestionError("no manifest.json in " + root.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw IngestionError("bad dataset manifest: " + std::string(e.what()));
  }
  if (m.value("format_version", 0) != kFormatVersion) {
    throw IngestionError("unsupported dataset format in " + root.string());
  }
  DatasetSplits splits;
  std::vector<PairedSample>* parts[] = {&splits.train, &splits.proxy,
                                        &splits.test};
  for (int k = 0; k < 3; ++k) {
    const bool labeled = k != 1;
    auto loaded = LoadPairedFolder(root / kSplits[k], labeled);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < loaded.size(); ++i) index[loaded[i].id()] = i;
    for (const auto& id : m.at("splits").at(kSplits[k])) {
      auto it = index.find(id.get<std::string>());
      if (it == index.end()) {
        throw IngestionError("sample " + id.get<std::string>() + " listed in " +
                             kSplits[k] + " but missing on disk");
      }
      PairedSample& s = loaded[it->second];
      parts[k]->push_back(labeled ? std::move(s) : s.WithoutTarget());
    }
  }
  if (m.value("has_proxy_truths", false)) {
    for (auto& s : LoadPairedFolder(root / "proxy_truths", true)) {
      splits.proxy_truths.Deposit(s.id(), s.target());
    }
  }
  splits.Validate();
  return splits;
}

}  // namespace privtrans
