#include "mrlf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mrlf/errors.hpp"
#include "mrlf/rng.hpp"

namespace mrlf {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'R', 'L', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

json component_offsets_json(const TrainConfig& cfg) {
  std::size_t f = static_cast<std::size_t>(cfg.filters);
  std::size_t cw = cfg.char_kernel_sizes.size() * f;
  std::size_t ww = cfg.word_kernel_sizes.size() * f;
  json j;
  j["text_char"] = 0;
  j["text_word"] = cw;
  j["tag_char"] = cw + ww;
  j["tag_word"] = 2 * cw + ww;
  j["image"] = 2 * cw + 2 * ww;
  j["fused"] = 2 * cw + 2 * ww + f;
  j["total"] = cfg.post_repr_width();
  return j;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const Vocabulary& vocab, const ImageInputSpec& image_spec,
                     std::size_t n_locations, const ModelParams& params) {
  json header;
  header["format"] = kFormatVersion;
  header["config"] = json::parse(config_to_json_string(cfg));
  header["config_hash"] = config_hash(cfg);
  header["vocab"] = json::parse(vocab.to_json_string());
  header["n_locations"] = n_locations;
  header["image_spec"] = {{"grid_mode", image_spec.grid_mode},
                          {"feature_dim", image_spec.feature_dim},
                          {"grid_channels", image_spec.grid_channels}};
  header["component_offsets"] = component_offsets_json(cfg);
  json ptable = json::array();
  for (const auto& [name, t] : params.registry)
    ptable.push_back({{"name", name}, {"shape", t.shape()}});
  header["params"] = ptable;

  std::string htext = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  write_u64(out, htext.size());
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, t] : params.registry)
    for (double v : t.values()) write_f64(out, v);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint not found: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  std::uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t hlen = read_u64(in);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ValidationError("truncated checkpoint header: " + path);

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.config = config_from_json_string(header.at("config").dump());
  ckpt.vocab = Vocabulary::from_json_string(header.at("vocab").dump());
  ckpt.n_locations = header.at("n_locations").get<std::size_t>();
  const auto& is = header.at("image_spec");
  ckpt.image_spec.grid_mode = is.at("grid_mode").get<bool>();
  ckpt.image_spec.feature_dim = is.at("feature_dim").get<std::size_t>();
  ckpt.image_spec.grid_channels = is.at("grid_channels").get<std::size_t>();

  Rng rng(0);  // values are overwritten below
  ckpt.params = ModelParams::init(ckpt.config, ckpt.vocab, ckpt.n_locations,
                                  ckpt.image_spec, rng);

  const auto& ptable = header.at("params");
  if (ptable.size() != ckpt.params.registry.size())
    throw ValidationError("checkpoint parameter table does not match config");
  for (std::size_t i = 0; i < ckpt.params.registry.size(); ++i) {
    auto& [name, t] = ckpt.params.registry[i];
    std::string hname = ptable.at(i).at("name").get<std::string>();
    auto hshape = ptable.at(i).at("shape").get<Shape>();
    if (hname != name || hshape != t.shape())
      throw ValidationError("checkpoint parameter '" + hname + "' " + shape_str(hshape) +
                            " does not match expected '" + name + "' " + shape_str(t.shape()));
    auto& vals = t.values_mut();
    for (double& v : vals) v = read_f64(in);
  }
  if (!in) throw ValidationError("truncated checkpoint blobs: " + path);
  return ckpt;
}

}  // namespace mrlf
