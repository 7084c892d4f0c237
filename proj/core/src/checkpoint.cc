#include "privtrans/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "privtrans/errors.h"

namespace privtrans {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "raw tensor files assume a little-endian host");

const char* DtypeName(StorageType t) {
  return t == StorageType::kFloat32 ? "float32" : "float64";
}

std::string TensorFile(std::size_t i) {
  std::ostringstream os;
  os << "t" << std::setw(3) << std::setfill('0') << i << ".bin";
  return os.str();
}

void WriteTensor(const Tensor& t, const fs::path& file, StorageType dtype) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + file.string());
  if (dtype == StorageType::kFloat64) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    std::vector<float> f(t.values().begin(), t.values().end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!out) throw IngestionError("short write to " + file.string());
}

Tensor ReadTensor(const fs::path& file, std::vector<int> shape,
                  StorageType dtype) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) throw IngestionError("missing tensor file " + file.string());
  Tensor t = Tensor::Uninitialized(std::move(shape));
  const std::size_t width =
      dtype == StorageType::kFloat64 ? sizeof(double) : sizeof(float);
  if (static_cast<std::size_t>(in.tellg()) != t.size() * width) {
    throw IngestionError("tensor file " + file.string() +
                         " does not match its declared shape");
  }
  in.seekg(0);
  if (dtype == StorageType::kFloat64) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * width));
  } else {
    std::vector<float> f(t.size());
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * width));
    std::copy(f.begin(), f.end(), t.data());
  }
  if (!in) throw IngestionError("short read from " + file.string());
  return t;
}

void SaveParams(const std::string& kind, const json& arch,
                const ParamSet& params, const fs::path& dir,
                StorageType dtype) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IngestionError("cannot create " + dir.string());
  json tensors = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string file = TensorFile(i);
    WriteTensor(params[i].value, dir / file, dtype);
    tensors.push_back({{"name", params[i].name},
                       {"shape", params[i].value.shape()},
                       {"file", file}});
  }
  const json manifest = {{"format_version", kFormatVersion},
                         {"kind", kind},
                         {"dtype", DtypeName(dtype)},
                         {"arch", arch},
                         {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw IngestionError("cannot write manifest in " + dir.string());
}

json ReadManifest(const fs::path& dir, const std::string& kind) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IngestionError("no manifest.json in " + dir.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw IngestionError("bad manifest in " + dir.string() + ": " + e.what());
  }
  if (m.value("format_version", 0) != kFormatVersion) {
    throw IngestionError("unsupported checkpoint format in " + dir.string());
  }
  if (m.value("kind", "") != kind) {
    throw IngestionError(dir.string() + " does not hold a " + kind);
  }
  return m;
}

ParamSet LoadParams(const json& m, const fs::path& dir) {
  const std::string dtype = m.at("dtype").get<std::string>();
  if (dtype != "float32" && dtype != "float64") {
    throw IngestionError("unknown dtype " + dtype);
  }
  const StorageType st =
      dtype == "float32" ? StorageType::kFloat32 : StorageType::kFloat64;
  ParamSet params;
  for (const auto& t : m.at("tensors")) {
    params.push_back({t.at("name").get<std::string>(),
                      ReadTensor(dir / t.at("file").get<std::string>(),
                                 t.at("shape").get<std::vector<int>>(), st)});
  }
  return params;
}

void CheckLayout(const ParamSet& expected, const ParamSet& loaded,
                 const fs::path& dir) {
  if (expected.size() != loaded.size()) {
    throw IngestionError("checkpoint " + dir.string() +
                         " has the wrong number of tensors");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != loaded[i].name ||
        expected[i].value.shape() != loaded[i].value.shape()) {
      throw IngestionError("checkpoint tensor " + loaded[i].name +
                           " does not match the declared architecture");
    }
  }
}

template <typename F>
auto Parsing(const fs::path& dir, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IngestionError("malformed manifest in " + dir.string() + ": " +
                         e.what());
  } catch (const ConfigError& e) {
    throw IngestionError("invalid architecture in " + dir.string() + ": " +
                         e.what());
  }
}

}  // namespace

void SaveGenerator(const GeneratorModel& g, const fs::path& dir,
                   StorageType dtype) {
  const GeneratorArch& a = g.arch;
  const json arch = {{"in_channels", a.in_channels},
                     {"out_channels", a.out_channels},
                     {"height", a.height},
                     {"width", a.width},
                     {"depth", a.depth},
                     {"base_channels", a.base_channels},
                     {"dropout", a.dropout},
                     {"dropout_blocks", a.dropout_blocks},
                     {"dropout_active", g.dropout_active}};
  SaveParams("generator", arch, g.params, dir, dtype);
}

GeneratorModel LoadGenerator(const fs::path& dir) {
  return Parsing(dir, [&] {
    const json m = ReadManifest(dir, "generator");
    const json& j = m.at("arch");
    GeneratorArch a;
    a.in_channels = j.at("in_channels");
    a.out_channels = j.at("out_channels");
    a.height = j.at("height");
    a.width = j.at("width");
    a.depth = j.at("depth");
    a.base_channels = j.at("base_channels");
    a.dropout = j.at("dropout");
    a.dropout_blocks = j.at("dropout_blocks");
    GeneratorModel g = InitGenerator(a, 0);
    ParamSet loaded = LoadParams(m, dir);
    CheckLayout(g.params, loaded, dir);
    g.params = std::move(loaded);
    g.dropout_active = j.value("dropout_active", true);
    return g;
  });
}

void SaveDiscriminator(const DiscriminatorModel& d, const fs::path& dir,
                       StorageType dtype) {
  const DiscriminatorArch& a = d.arch;
  const json arch = {{"candidate_channels", a.candidate_channels},
                     {"condition_channels", a.condition_channels},
                     {"height", a.height},
                     {"width", a.width},
                     {"base_channels", a.base_channels}};
  SaveParams("discriminator", arch, d.params, dir, dtype);
}

DiscriminatorModel LoadDiscriminator(const fs::path& dir) {
  return Parsing(dir, [&] {
    const json m = ReadManifest(dir, "discriminator");
    const json& j = m.at("arch");
    DiscriminatorArch a;
    a.candidate_channels = j.at("candidate_channels");
    a.condition_channels = j.at("condition_channels");
    a.height = j.at("height");
    a.width = j.at("width");
    a.base_channels = j.at("base_channels");
    DiscriminatorModel d = InitDiscriminator(a, 0);
    ParamSet loaded = LoadParams(m, dir);
    CheckLayout(d.params, loaded, dir);
    d.params = std::move(loaded);
    return d;
  });
}

std::string Fingerprint(const ParamSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, value] : params) {
    mix(name.data(), name.size());
    for (int d : value.shape()) mix(&d, sizeof d);
    mix(value.data(), value.size() * sizeof(double));
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace privtrans
