#include "lsed/feature_cache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "lsed/errors.hpp"

namespace lsed::features {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'S', 'E', 'D', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".json"); }

}  // namespace

void save_feature_cache(const fs::path& file, const std::vector<FeatureWindow>& windows,
                        const nlohmann::json& params) {
  const std::uint64_t frames = windows.empty() ? 0 : windows.front().frames();
  const std::uint64_t cols = windows.empty() ? kFeatureDim : windows.front().matrix.cols();
  nlohmann::json starts = nlohmann::json::array();
  for (const auto& w : windows) {
    if (w.frames() != frames || w.matrix.cols() != cols) {
      throw InvalidArgument("feature cache: windows of one recording must share a shape");
    }
    starts.push_back(w.start_s);
  }

  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write feature cache '" + file.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, frames);
  put(out, cols);
  put(out, static_cast<std::uint64_t>(windows.size()));
  for (const auto& w : windows) {
    out.write(reinterpret_cast<const char*>(w.matrix.data().data()),
              static_cast<std::streamsize>(w.matrix.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing feature cache '" + file.string() + "'");

  const nlohmann::json meta{{"params", params},
                            {"source_id", windows.empty() ? "" : windows.front().source_id},
                            {"window_starts", starts}};
  std::ofstream side(sidecar(file));
  side << meta.dump(2) << '\n';
  if (!side) throw DataError("failed writing feature cache sidecar for '" + file.string() + "'");
}

std::optional<std::vector<FeatureWindow>> load_feature_cache(const fs::path& file,
                                                             const nlohmann::json& params) {
  std::ifstream side(sidecar(file));
  if (!side) return std::nullopt;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (!meta.contains("params") || meta["params"] != params) return std::nullopt;

  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t frames = 0, cols = 0, count = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) return std::nullopt;
  if (!get(in, version) || version != kVersion) return std::nullopt;
  if (!get(in, frames) || !get(in, cols) || !get(in, count)) return std::nullopt;
  const auto& starts = meta.at("window_starts");
  if (starts.size() != count) return std::nullopt;

  std::vector<FeatureWindow> out;
  out.reserve(count);
  const std::string source = meta.value("source_id", "");
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureWindow w{Matrix(frames, cols), starts[i].get<double>(), source};
    if (!in.read(reinterpret_cast<char*>(w.matrix.data().data()),
                 static_cast<std::streamsize>(frames * cols * sizeof(double)))) {
      return std::nullopt;
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace lsed::features
