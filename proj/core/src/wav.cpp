#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lsed/audio.hpp"
#include "lsed/errors.hpp"

namespace lsed::audio {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file '" + path.string() + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  const std::string where = "WAV '" + path.string() + "': ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(where + "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = le32(hdr + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16 || avail < 16) throw DataError(where + "truncated fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (len < 40 || avail < 40) throw DataError(where + "truncated WAVE_FORMAT_EXTENSIBLE chunk");
        format = le16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (len > avail) throw DataError(where + "data chunk is truncated");
      data = bytes.data() + body;
      data_len = len;
      have_data = true;
      break;
    }
    pos = body + len + (len & 1u);
  }

  if (!have_fmt) throw DataError(where + "missing fmt chunk");
  if (!have_data) throw DataError(where + "missing data chunk");
  if (channels == 0) throw DataError(where + "zero channels");
  if (rate == 0) throw DataError(where + "zero sample rate");

  const bool is_int = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool is_float = format == kFormatFloat && bits == 32;
  if (!is_int && !is_float) {
    throw DataError(where + "unsupported encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits); expected integer PCM or 32-bit float");
  }
  const std::size_t width = bits / 8u;
  const std::size_t frame_bytes = width * channels;
  if (data_len % frame_bytes != 0) throw DataError(where + "data chunk is not a whole number of frames");
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw DataError(where + "empty recording");

  const double scale = is_int ? 1.0 / std::ldexp(1.0, bits - 1) : 1.0;
  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * width;
      double v = 0.0;
      if (is_float) {
        float x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) * scale;  // 8-bit PCM is unsigned
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(p)) * scale;
      } else if (bits == 24) {
        std::int32_t x = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (x & 0x800000) x -= 0x1000000;
        v = x * scale;
      } else {
        v = static_cast<std::int32_t>(le32(p)) * scale;
      }
      sum += v;
    }
    clip.samples[f] = sum / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.sample_rate_hz <= 0) throw InvalidArgument("write_wav: sample rate must be positive");
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0), -32768L, 32767L));
    put16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing WAV file '" + path.string() + "'");
}

}  // namespace lsed::audio
