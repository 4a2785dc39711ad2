#include "hinet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hinet/cohort_io.hpp"

namespace hinet {

namespace {

std::string shape_token(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s.empty() ? "scalar" : s;
}

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

// Reads "<tag> <bytes>\n" followed by that many bytes.
std::string read_section(const std::string& bytes, std::size_t& pos, const std::string& tag) {
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string::npos) throw DataError("checkpoint truncated before section '" + tag + "'");
  std::istringstream head(bytes.substr(pos, nl - pos));
  std::string got;
  std::size_t length = 0;
  if (!(head >> got >> length) || got != tag) throw DataError("checkpoint: expected section '" + tag + "'");
  pos = nl + 1;
  if (bytes.size() - pos < length) throw DataError("checkpoint section '" + tag + "' is truncated");
  std::string body = bytes.substr(pos, length);
  pos += length;
  return body;
}

std::string normalizer_text(const Normalizer& n) {
  std::string out;
  char buf[32];
  for (const auto* row : {&n.mean, &n.stddev}) {
    out += row == &n.mean ? "mean" : "stddev";
    for (double v : *row) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Normalizer parse_normalizer(const std::string& text) {
  Normalizer n;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string tag;
    fields >> tag;
    auto& row = tag == "mean" ? n.mean : tag == "stddev" ? n.stddev : throw DataError("checkpoint normalizer: bad row");
    for (double v; fields >> v;) row.push_back(v);
  }
  if (n.mean.size() != n.stddev.size()) throw DataError("checkpoint normalizer rows differ in length");
  return n;
}

}  // namespace

std::string checkpoint_manifest(const HiNetParams& params) {
  std::ostringstream os;
  std::size_t offset = 0;
  for (const auto& np : params.parameters()) {
    os << np.name << ' ' << shape_token(np.tensor.shape()) << ' ' << offset << ' ' << np.tensor.numel() << '\n';
    offset += np.tensor.numel() * sizeof(double);
  }
  return os.str();
}

std::string serialize_checkpoint(const HiNetParams& params, const Normalizer* normalizer) {
  const std::string config = params.config.to_text();
  const std::string manifest = checkpoint_manifest(params);
  std::string payload;
  for (const auto& np : params.parameters())
    for (double v : np.tensor.data()) append_le(payload, v);
  std::string out = "HINETCKPT " + std::to_string(kCheckpointVersion) + "\n";
  out += "config " + std::to_string(config.size()) + "\n" + config;
  out += "manifest " + std::to_string(manifest.size()) + "\n" + manifest;
  out += "payload " + std::to_string(payload.size()) + "\n" + payload;
  if (normalizer) {
    const std::string text = normalizer_text(*normalizer);
    out += "normalizer " + std::to_string(text.size()) + "\n" + text;
  }
  return out;
}

HiNetParams deserialize_checkpoint(const std::string& bytes, Normalizer* normalizer) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos || bytes.compare(0, 10, "HINETCKPT ") != 0) throw DataError("not a hinet checkpoint");
  const int version = std::stoi(bytes.substr(10, nl - 10));
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::size_t pos = nl + 1;
  const std::string config_text = read_section(bytes, pos, "config");
  const std::string manifest = read_section(bytes, pos, "manifest");
  const std::string payload = read_section(bytes, pos, "payload");
  if (normalizer) *normalizer = pos < bytes.size() ? parse_normalizer(read_section(bytes, pos, "normalizer")) : Normalizer{};

  HiNetParams params = HiNetParams::create(HiNetConfig::from_text(config_text));
  auto list = params.parameters();
  std::istringstream lines(manifest);
  std::string name, shape;
  std::size_t offset = 0, count = 0, index = 0;
  while (lines >> name >> shape >> offset >> count) {
    if (index >= list.size()) throw DataError("checkpoint lists more parameters than the config defines");
    auto& np = list[index++];
    if (np.name != name || shape != shape_token(np.tensor.shape()))
      throw DataError("checkpoint parameter '" + name + "' " + shape + " does not match expected '" + np.name + "' " +
                      shape_token(np.tensor.shape()));
    if (count != np.tensor.numel() || offset + count * sizeof(double) > payload.size())
      throw DataError("checkpoint parameter '" + name + "' has an inconsistent extent");
    auto dst = np.tensor.mutable_data();
    for (std::size_t i = 0; i < count; ++i) dst[i] = read_le(payload.data() + offset + i * sizeof(double));
  }
  if (index != list.size()) throw DataError("checkpoint is missing parameters");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const HiNetParams& params, const Normalizer* normalizer) {
  atomic_write(path, serialize_checkpoint(params, normalizer));
}

HiNetParams load_checkpoint(const std::filesystem::path& path, Normalizer* normalizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str(), normalizer);
}

}  // namespace hinet
