#include "lsed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "lsed/errors.hpp"

namespace lsed::model {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'S', 'E', 'D', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const MultiBranchTCN& model, const nlohmann::json& metadata) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", model.config()}, {"metadata", metadata}}.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  const auto params = model.named_parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t->values().data()), t->size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic), "magic") != std::string_view(kMagic, sizeof(kMagic))) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint32_t>("header length");
  nlohmann::json header;
  ModelConfig config;
  try {
    header = nlohmann::json::parse(r.take(header_len, "header"));
    config = header.at("config").get<ModelConfig>();
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("checkpoint config is invalid: ") + e.what());
  }

  // Expected shapes come from a freshly initialised model of the same
  // config; every declared shape is compared before any data is used.
  MultiBranchTCN model = MultiBranchTCN::init(config);
  auto expected = model.named_parameters();
  std::map<std::string, ad::Tensor*> by_name;
  for (auto& [name, t] : expected) by_name[name] = t;

  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != expected.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, config requires " +
                    std::to_string(expected.size()));
  }
  std::map<std::string, bool> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const std::string name(r.take(name_len, "tensor name"));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint has unknown tensor '" + name + "'");
    if (seen[name]) throw DataError("checkpoint repeats tensor '" + name + "'");
    seen[name] = true;
    const auto rank = r.get<std::uint32_t>("tensor rank");
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>("tensor shape");
    if (shape != it->second->shape()) {
      throw DataError("tensor '" + name + "' declared shape " + ad::to_string(shape) + " but config requires " +
                      ad::to_string(it->second->shape()));
    }
    const auto raw = r.take(it->second->size() * sizeof(double), "tensor data");
    std::memcpy(it->second->values().data(), raw.data(), raw.size());
  }
  const std::size_t body_end = r.pos();
  const auto checksum = r.get<std::uint64_t>("checksum");
  if (checksum != fnv1a(bytes.substr(0, body_end))) throw DataError("checkpoint checksum mismatch (file corrupt)");
  if (r.pos() != bytes.size()) throw DataError("checkpoint has trailing bytes");

  return Checkpoint{std::move(model), header.value("metadata", nlohmann::json::object())};
}

void save_checkpoint(const std::filesystem::path& path, const MultiBranchTCN& model, const nlohmann::json& metadata) {
  const std::string bytes = encode_checkpoint(model, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace lsed::model
