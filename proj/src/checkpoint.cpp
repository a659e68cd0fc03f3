#include "adaplan/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "adaplan/errors.hpp"

namespace adaplan {

namespace {

std::uint64_t to_little_endian(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetSpec& spec,
                     const NetParams& params, const nlohmann::json& meta) {
  if (!params.matches(spec)) {
    throw ShapeError("save_checkpoint: parameters do not match spec");
  }
  nlohmann::json header;
  header["spec"] = spec;
  header["param_count"] = params.size();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& layer : params.layers()) shapes.push_back({layer.in, layer.out});
  header["shapes"] = shapes;
  header["meta"] = meta;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  const std::string line = header.dump() + "\n";
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  for (double v : params.values()) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kCheckpointMagic) {
    throw FormatError("bad checkpoint magic in " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing checkpoint header");
  const nlohmann::json header = nlohmann::json::parse(line);

  Checkpoint ckpt;
  ckpt.spec = header.at("spec").get<NetSpec>();
  ckpt.params = NetParams(ckpt.spec);
  ckpt.meta = header.value("meta", nlohmann::json::object());
  if (header.at("param_count").get<std::size_t>() != ckpt.params.size()) {
    throw FormatError("checkpoint param_count disagrees with its spec");
  }
  for (double& v : ckpt.params.values()) {
    char bytes[8];
    in.read(bytes, 8);
    if (!in) throw FormatError("truncated checkpoint " + path.string());
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes in checkpoint " + path.string());
  }
  return ckpt;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace adaplan
