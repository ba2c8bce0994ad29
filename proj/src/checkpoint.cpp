#include "lateralgrad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'R', 'D'};

// -- little-endian primitives -------------------------------------------------

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_i64(std::vector<uint8_t>& b, int64_t v) { put_u64(b, static_cast<uint64_t>(v)); }

void put_f64(std::vector<uint8_t>& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

void put_str(std::vector<uint8_t>& b, const std::string& s) {
  put_u32(b, static_cast<uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
  const std::vector<uint8_t>& b;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > b.size()) throw FormatError("checkpoint truncated", pos);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + static_cast<size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + static_cast<size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    return s;
  }
};

void put_tensor(std::vector<uint8_t>& b, const Tensor& t) {
  put_u32(b, static_cast<uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_i64(b, t.dim(i));
  for (int64_t i = 0; i < t.numel(); ++i) put_f64(b, t[i]);
}

Tensor get_tensor(Reader& r) {
  const uint32_t nd = r.u32();
  std::vector<int64_t> shape(nd);
  for (uint32_t i = 0; i < nd; ++i) shape[i] = r.i64();
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.f64();
  return t;
}

void put_f64_list(std::vector<uint8_t>& b, const std::vector<double>& v) {
  put_u32(b, static_cast<uint32_t>(v.size()));
  for (double x : v) put_f64(b, x);
}

std::vector<double> get_f64_list(Reader& r) {
  std::vector<double> v(r.u32());
  for (double& x : v) x = r.f64();
  return v;
}

void put_params(std::vector<uint8_t>& b, const std::map<std::string, Tensor>& params) {
  put_u32(b, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_str(b, name);
    put_tensor(b, t);
  }
}

std::map<std::string, Tensor> get_params(Reader& r) {
  std::map<std::string, Tensor> out;
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    out[name] = get_tensor(r);
  }
  return out;
}

std::vector<uint8_t> encode_topology(const Model& m) {
  std::vector<uint8_t> b;
  for (int64_t d : m.input_shape) put_i64(b, d);
  put_i64(b, m.num_classes);
  put_u32(b, static_cast<uint32_t>(m.layers.size()));
  for (const LayerSpec& s : m.layers) {
    b.push_back(static_cast<uint8_t>(s.kind));
    put_str(b, s.name);
    put_i64(b, s.in_channels);
    put_i64(b, s.out_channels);
    put_i64(b, s.kernel);
    put_i64(b, s.stride);
    put_i64(b, s.pad);
    put_i64(b, s.pool_size);
    put_i64(b, s.pool_stride);
    put_i64(b, s.in_features);
    put_i64(b, s.out_features);
  }
  put_u32(b, static_cast<uint32_t>(m.output_shapes.size()));
  for (const auto& os : m.output_shapes)
    for (int64_t d : os) put_i64(b, d);
  put_u32(b, static_cast<uint32_t>(m.masked_layer_ids.size()));
  for (int id : m.masked_layer_ids) put_i64(b, id);
  return b;
}

Model decode_topology(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  Model m;
  for (auto& d : m.input_shape) d = r.i64();
  m.num_classes = r.i64();
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    LayerSpec s;
    r.need(1);
    s.kind = static_cast<LayerKind>(bytes[r.pos++]);
    s.name = r.str();
    s.in_channels = r.i64();
    s.out_channels = r.i64();
    s.kernel = r.i64();
    s.stride = r.i64();
    s.pad = r.i64();
    s.pool_size = r.i64();
    s.pool_stride = r.i64();
    s.in_features = r.i64();
    s.out_features = r.i64();
    m.layers.push_back(std::move(s));
  }
  const uint32_t ns = r.u32();
  for (uint32_t i = 0; i < ns; ++i) {
    std::array<int64_t, 3> os{};
    for (auto& d : os) d = r.i64();
    m.output_shapes.push_back(os);
  }
  const uint32_t nm = r.u32();
  for (uint32_t i = 0; i < nm; ++i) m.masked_layer_ids.push_back(static_cast<int>(r.i64()));
  return m;
}

std::vector<uint8_t> encode_mask(const MaskConfig& cfg) {
  std::vector<uint8_t> b;
  put_f64(b, cfg.sigma);
  put_i64(b, cfg.kernel_size);
  put_i64(b, cfg.num_sets);
  put_f64(b, cfg.quantile);
  b.push_back(static_cast<uint8_t>(cfg.mode));
  put_f64(b, cfg.epsilon);
  put_u32(b, static_cast<uint32_t>(cfg.layer_ids.size()));
  for (int id : cfg.layer_ids) put_i64(b, id);
  return b;
}

MaskConfig decode_mask(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  MaskConfig cfg;
  cfg.sigma = r.f64();
  cfg.kernel_size = r.i64();
  cfg.num_sets = r.i64();
  cfg.quantile = r.f64();
  r.need(1);
  cfg.mode = static_cast<ThresholdMode>(bytes[r.pos++]);
  cfg.epsilon = r.f64();
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) cfg.layer_ids.push_back(static_cast<int>(r.i64()));
  return cfg;
}

void put_section(std::vector<uint8_t>& out, const std::string& name,
                 const std::vector<uint8_t>& payload) {
  if (name.size() > 255) throw UsageError("section name too long");
  out.push_back(static_cast<uint8_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u64(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
}

}  // namespace

std::vector<uint8_t> encode_checkpoint(const Checkpoint& cp) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, cp.version);

  put_section(out, "topo", encode_topology(cp.model));

  std::vector<uint8_t> params;
  put_params(params, cp.model.params);
  put_section(out, "params", params);

  std::vector<uint8_t> optim;
  put_params(optim, cp.velocity);
  put_section(out, "optim", optim);

  std::vector<uint8_t> rng;
  put_str(rng, cp.rng_state);
  put_section(out, "rng", rng);

  std::vector<uint8_t> meta;
  put_i64(meta, cp.epochs_completed);
  meta.push_back(static_cast<uint8_t>(cp.ablation));
  meta.push_back(static_cast<uint8_t>(cp.mask_scope));
  put_section(out, "meta", meta);

  std::vector<uint8_t> norm;
  put_f64_list(norm, cp.norm_mean);
  put_f64_list(norm, cp.norm_std);
  put_f64_list(norm, cp.clip_min);
  put_f64_list(norm, cp.clip_max);
  put_section(out, "norm", norm);

  if (cp.mask) put_section(out, "mask", encode_mask(*cp.mask));

  if (cp.prune) {
    std::vector<uint8_t> pr;
    put_f64(pr, cp.prune->fraction);
    put_str(pr, cp.prune->scope);
    put_i64(pr, cp.prune->zeroed);
    put_section(out, "prune", pr);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a LGRD checkpoint", 0);
  Reader top{bytes, 4};
  Checkpoint cp;
  cp.version = top.u32();
  if (cp.version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(cp.version), 4);

  while (top.pos < bytes.size()) {
    top.need(1);
    const size_t name_len = bytes[top.pos++];
    top.need(name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + top.pos), name_len);
    top.pos += name_len;
    const uint64_t len = top.u64();
    top.need(len);
    std::vector<uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(top.pos),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(top.pos + len));
    top.pos += len;

    Reader r{payload};
    if (name == "topo") {
      cp.model = decode_topology(payload);
    } else if (name == "params") {
      cp.model.params = get_params(r);
    } else if (name == "optim") {
      cp.velocity = get_params(r);
    } else if (name == "rng") {
      cp.rng_state = r.str();
    } else if (name == "meta") {
      cp.epochs_completed = r.i64();
      r.need(2);
      cp.ablation = static_cast<AblationMode>(payload[r.pos]);
      cp.mask_scope = static_cast<MaskScope>(payload[r.pos + 1]);
    } else if (name == "norm") {
      cp.norm_mean = get_f64_list(r);
      cp.norm_std = get_f64_list(r);
      cp.clip_min = get_f64_list(r);
      cp.clip_max = get_f64_list(r);
    } else if (name == "mask") {
      cp.mask = decode_mask(payload);
    } else if (name == "prune") {
      PruneMeta pm;
      pm.fraction = r.f64();
      pm.scope = r.str();
      pm.zeroed = r.i64();
      cp.prune = pm;
    }
    // unknown sections are skipped, which keeps old readers working
  }
  return cp;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  const std::vector<uint8_t> bytes = encode_checkpoint(cp);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace lateralgrad
