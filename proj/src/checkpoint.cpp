#include "fsga/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "fsga/errors.hpp"

namespace fsga {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'S', 'G', 'A', 'B', 'N', 'D', 'L'};

uint32_t crc32(const uint8_t* data, size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

json arch_to_json(const GeneratorArch& a) {
  return json{{"latent_dim", a.latent_dim},
              {"base_size", a.base_size},
              {"base_channels", a.base_channels},
              {"block_channels", a.block_channels},
              {"out_channels", a.out_channels},
              {"leaky_slope", a.leaky_slope}};
}

GeneratorArch gen_arch_from_json(const json& j) {
  GeneratorArch a;
  a.latent_dim = j.at("latent_dim").get<int>();
  a.base_size = j.at("base_size").get<int>();
  a.base_channels = j.at("base_channels").get<int>();
  a.block_channels = j.at("block_channels").get<std::vector<int>>();
  a.out_channels = j.at("out_channels").get<int>();
  a.leaky_slope = j.at("leaky_slope").get<float>();
  return a;
}

json arch_to_json(const DiscriminatorArch& a) {
  json convs = json::array();
  for (const ConvLayerSpec& c : a.convs)
    convs.push_back({c.out_channels, c.kernel, c.stride, c.pad});
  return json{{"input_size", a.input_size},
              {"in_channels", a.in_channels},
              {"convs", convs},
              {"patch_layers", a.patch_layers},
              {"leaky_slope", a.leaky_slope}};
}

DiscriminatorArch disc_arch_from_json(const json& j) {
  DiscriminatorArch a;
  a.input_size = j.at("input_size").get<int>();
  a.in_channels = j.at("in_channels").get<int>();
  for (const json& c : j.at("convs"))
    a.convs.push_back({c[0].get<int>(), c[1].get<int>(), c[2].get<int>(), c[3].get<int>()});
  a.patch_layers = j.at("patch_layers").get<std::vector<int>>();
  a.leaky_slope = j.at("leaky_slope").get<float>();
  return a;
}

struct TensorSection {
  std::string name;
  const Tensor* tensor;
};

void collect_params(const std::string& prefix, const ParamSet& params,
                    std::vector<TensorSection>& out) {
  for (const auto& item : params) out.push_back({prefix + item.name, &item.value});
}

void collect_adam(const std::string& prefix, const Adam& opt, const ParamSet& params,
                  std::vector<TensorSection>& out) {
  if (!opt.attached_to(params)) return;  // detached optimizer: nothing to save
  const auto& m = opt.moments1();
  const auto& v = opt.moments2();
  for (size_t i = 0; i < params.size(); ++i) {
    out.push_back({prefix + "m." + params[i].name, &m[i]});
    out.push_back({prefix + "v." + params[i].name, &v[i]});
  }
}

json adam_meta(const Adam& opt) {
  return json{{"lr", opt.lr()},
              {"beta1", opt.beta1()},
              {"beta2", opt.beta2()},
              {"steps", opt.steps_taken()}};
}

Adam adam_from_meta(const json& j) {
  Adam a(j.at("lr").get<float>(), j.at("beta1").get<float>(), j.at("beta2").get<float>());
  a.set_steps_taken(j.at("steps").get<uint64_t>());
  return a;
}

void fill_params(ParamSet& params, const std::string& prefix,
                 const std::vector<std::pair<std::string, Tensor>>& loaded) {
  for (auto& item : params) {
    const std::string want = prefix + item.name;
    bool found = false;
    for (const auto& [name, t] : loaded) {
      if (name != want) continue;
      if (!t.same_shape(item.value))
        throw IoError("checkpoint: shape mismatch for tensor " + name);
      item.value = t;
      found = true;
      break;
    }
    if (!found) throw IoError("checkpoint: missing tensor " + want);
  }
}

void fill_adam(Adam& opt, ParamSet& params, const std::string& prefix,
               const std::vector<std::pair<std::string, Tensor>>& loaded) {
  bool any = false;
  for (const auto& [name, t] : loaded) any = any || name.rfind(prefix, 0) == 0;
  if (!any) return;  // bundle was saved with a detached optimizer
  const uint64_t steps = opt.steps_taken();
  opt.attach(params);
  opt.set_steps_taken(steps);
  for (size_t i = 0; i < params.size(); ++i) {
    for (const auto& [name, t] : loaded) {
      if (name == prefix + "m." + params[i].name) opt.moments1()[i] = t;
      if (name == prefix + "v." + params[i].name) opt.moments2()[i] = t;
    }
  }
}

}  // namespace

void save_checkpoint(const CheckpointBundle& bundle, const std::string& path) {
  std::vector<TensorSection> sections;
  collect_params("gen.", bundle.generator.params(), sections);
  if (bundle.frozen_source) collect_params("src.", bundle.frozen_source->params(), sections);
  collect_params("disc.", bundle.discriminator.params(), sections);
  if (bundle.anchors) sections.push_back({"anchor.base", &bundle.anchors->base_points()});
  collect_adam("optg.", bundle.opt_g, bundle.generator.params(), sections);
  collect_adam("optd.", bundle.opt_d, bundle.discriminator.params(), sections);

  json header;
  header["kind"] = bundle.kind;
  header["step"] = bundle.step;
  header["seed"] = bundle.seed;
  header["gen_arch"] = arch_to_json(bundle.generator.arch());
  header["disc_arch"] = arch_to_json(bundle.discriminator.arch());
  header["has_frozen_source"] = bundle.frozen_source.has_value();
  if (bundle.anchors)
    header["anchor"] = json{{"sigma", bundle.anchors->sigma()}, {"seed", bundle.anchors->seed()}};
  if (bundle.config) {
    json jc;
    to_json(jc, *bundle.config);
    header["config"] = jc;
  }
  if (!bundle.shape_world_json.empty())
    header["shape_world"] = json::parse(bundle.shape_world_json);
  header["opt_g"] = adam_meta(bundle.opt_g);
  header["opt_d"] = adam_meta(bundle.opt_d);
  json dir = json::array();
  for (const TensorSection& s : sections)
    dir.push_back(json{{"name", s.name}, {"shape", s.tensor->shape()}});
  header["tensors"] = dir;

  const std::string header_text = header.dump();
  std::vector<uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + sizeof(kMagic));
  const uint32_t version = kCheckpointVersion;
  const uint64_t header_len = header_text.size();
  bytes.insert(bytes.end(), reinterpret_cast<const uint8_t*>(&version),
               reinterpret_cast<const uint8_t*>(&version) + sizeof(version));
  bytes.insert(bytes.end(), reinterpret_cast<const uint8_t*>(&header_len),
               reinterpret_cast<const uint8_t*>(&header_len) + sizeof(header_len));
  bytes.insert(bytes.end(), header_text.begin(), header_text.end());
  for (const TensorSection& s : sections) {
    const auto* p = reinterpret_cast<const uint8_t*>(s.tensor->data());
    bytes.insert(bytes.end(), p, p + s.tensor->numel() * sizeof(float));
  }
  const uint32_t crc = crc32(bytes.data(), bytes.size());
  bytes.insert(bytes.end(), reinterpret_cast<const uint8_t*>(&crc),
               reinterpret_cast<const uint8_t*>(&crc) + sizeof(crc));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("save_checkpoint: short write to " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  const std::streamsize size = in.tellg();
  if (size < static_cast<std::streamsize>(sizeof(kMagic) + 4 + 8 + 4))
    throw IoError("load_checkpoint: file too small: " + path);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("load_checkpoint: short read from " + path);

  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("load_checkpoint: not a checkpoint bundle: " + path);
  uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), 4);
  if (version != kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported bundle version " + std::to_string(version) +
                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw IoError("load_checkpoint: checksum mismatch in " + path);
  uint64_t header_len;
  std::memcpy(&header_len, bytes.data() + sizeof(kMagic) + 4, 8);
  size_t off = sizeof(kMagic) + 4 + 8;
  if (off + header_len + 4 > bytes.size())
    throw IoError("load_checkpoint: truncated header in " + path);
  const json header = json::parse(bytes.begin() + static_cast<int64_t>(off),
                                  bytes.begin() + static_cast<int64_t>(off + header_len));
  off += header_len;

  std::vector<std::pair<std::string, Tensor>> loaded;
  for (const json& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<std::vector<int>>());
    const size_t want = static_cast<size_t>(t.numel()) * sizeof(float);
    if (off + want + 4 > bytes.size())
      throw IoError("load_checkpoint: truncated tensor payload in " + path);
    std::memcpy(t.data(), bytes.data() + off, want);
    off += want;
    loaded.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }

  CheckpointBundle b;
  b.kind = header.at("kind").get<std::string>();
  b.step = header.at("step").get<uint64_t>();
  b.seed = header.at("seed").get<uint64_t>();
  const GeneratorArch ga = gen_arch_from_json(header.at("gen_arch"));
  const DiscriminatorArch da = disc_arch_from_json(header.at("disc_arch"));

  b.generator = GeneratorHandle(ga, 0);
  fill_params(b.generator.params(), "gen.", loaded);
  if (header.at("has_frozen_source").get<bool>()) {
    GeneratorHandle src(ga, 0);
    fill_params(src.params(), "src.", loaded);
    b.frozen_source = clone_frozen(src);
  }
  b.discriminator = DiscriminatorHandle(da, 0);
  fill_params(b.discriminator.params(), "disc.", loaded);

  if (header.contains("anchor")) {
    Tensor base;
    bool found = false;
    for (const auto& [name, t] : loaded)
      if (name == "anchor.base") {
        base = t;
        found = true;
      }
    if (!found) throw IoError("load_checkpoint: missing anchor.base tensor");
    b.anchors = AnchorSet(base, header.at("anchor").at("sigma").get<double>(),
                          header.at("anchor").at("seed").get<uint64_t>());
  }
  if (header.contains("config")) {
    AdaptationConfig cfg;
    from_json(header.at("config"), cfg);
    b.config = cfg;
  }
  if (header.contains("shape_world")) b.shape_world_json = header.at("shape_world").dump();

  b.opt_g = adam_from_meta(header.at("opt_g"));
  b.opt_d = adam_from_meta(header.at("opt_d"));
  fill_adam(b.opt_g, b.generator.params(), "optg.", loaded);
  fill_adam(b.opt_d, b.discriminator.params(), "optd.", loaded);
  return b;
}

}  // namespace fsga
