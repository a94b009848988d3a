#include "endn/checkpoint.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <memory>

namespace endn {

namespace {

constexpr char kMagic[4] = {'E', 'N', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                const Tensor4f& t, bool as_vector) {
  put_u32(out, std::uint32_t(name.size()));
  put_bytes(out, name.data(), name.size());
  if (as_vector) {
    out.push_back(1);
    put_u32(out, std::uint32_t(t.size()));
  } else {
    out.push_back(4);
    put_u32(out, std::uint32_t(t.n()));
    put_u32(out, std::uint32_t(t.c()));
    put_u32(out, std::uint32_t(t.h()));
    put_u32(out, std::uint32_t(t.w()));
  }
  put_bytes(out, t.data(), sizeof(float) * t.size());
}

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), end_(p + n) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = std::uint32_t(p_[0]) | std::uint32_t(p_[1]) << 8 |
                      std::uint32_t(p_[2]) << 16 | std::uint32_t(p_[3]) << 24;
    p_ += 4;
    return v;
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return *p_++;
  }
  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  void floats(float* dst, std::size_t count, const char* field) {
    need(count * sizeof(float), field);
    std::memcpy(dst, p_, count * sizeof(float));
    p_ += count * sizeof(float);
  }
  bool at_end() const { return p_ == end_; }

 private:
  void need(std::size_t n, const char* field) {
    if (std::size_t(end_ - p_) < n)
      throw FormatError(std::string("corrupt checkpoint: truncated while reading ") + field);
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

struct NamedTensor {
  std::string name;
  Tensor4f tensor;
  bool is_vector;
};

NamedTensor read_tensor(Reader& r) {
  NamedTensor nt;
  const std::uint32_t name_len = r.u32("tensor name length");
  if (name_len > 4096) throw FormatError("corrupt checkpoint: implausible tensor name length");
  nt.name = r.str(name_len, "tensor name");
  const std::uint8_t ndim = r.u8("tensor ndim");
  Dims4 d{1, 1, 1, 1};
  if (ndim == 1) {
    d.c = int(r.u32("tensor dim"));
    nt.is_vector = true;
  } else if (ndim == 4) {
    d.n = int(r.u32("tensor dim"));
    d.c = int(r.u32("tensor dim"));
    d.h = int(r.u32("tensor dim"));
    d.w = int(r.u32("tensor dim"));
    nt.is_vector = false;
  } else {
    throw FormatError("corrupt checkpoint: tensor ndim must be 1 or 4, got " +
                      std::to_string(int(ndim)));
  }
  if (d.n < 1 || d.c < 1 || d.h < 1 || d.w < 1 || d.count() > (1ll << 31))
    throw FormatError("corrupt checkpoint: implausible tensor dims");
  nt.tensor = Tensor4f(d);
  r.floats(nt.tensor.data(), std::size_t(nt.tensor.size()), "tensor data");
  return nt;
}

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return std::uint32_t(::crc32(0L, p, uInt(n)));
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"in_channels", cfg.in_channels},
                        {"base_width", cfg.base_width},
                        {"rfa_kernels", cfg.rfa_kernels},
                        {"mca_deep_kernels", cfg.mca_deep_kernels},
                        {"drf_blocks", cfg.drf_blocks},
                        {"fusion_dilation", cfg.fusion_dilation},
                        {"global_residual", cfg.global_residual},
                        {"mca_deep_width", cfg.mca_deep_width},
                        {"mca_branch_width", cfg.mca_branch_width},
                        {"mca_path_width", cfg.mca_path_width}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.base_width = j.at("base_width").get<int>();
  cfg.rfa_kernels = j.at("rfa_kernels").get<std::array<int, 3>>();
  cfg.mca_deep_kernels = j.at("mca_deep_kernels").get<std::array<int, 5>>();
  cfg.drf_blocks = j.at("drf_blocks").get<int>();
  cfg.fusion_dilation = j.at("fusion_dilation").get<int>();
  cfg.global_residual = j.at("global_residual").get<bool>();
  cfg.mca_deep_width = j.value("mca_deep_width", 0);
  cfg.mca_branch_width = j.value("mca_branch_width", 0);
  cfg.mca_path_width = j.value("mca_path_width", 0);
  cfg.validate();
  return cfg;
}

ModelConfig Checkpoint::model_config() const {
  if (!config.contains("model"))
    throw FormatError("corrupt checkpoint: config document lacks a \"model\" section");
  return config_from_json(config.at("model"));
}

std::int64_t Checkpoint::step() const {
  if (config.contains("train") && config["train"].contains("step"))
    return config["train"]["step"].get<std::int64_t>();
  return 0;
}

Checkpoint make_checkpoint(const ModelConfig& cfg, const ModelParamsF& params,
                           const AdamStateF* adam, std::int64_t step) {
  Checkpoint c;
  c.config = nlohmann::json{{"model", config_to_json(cfg)}, {"train", {{"step", step}}}};
  c.params = params;
  if (adam) {
    c.adam = *adam;
    c.config["train"]["lr"] = adam->lr;
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<std::uint8_t> buf;
  put_bytes(buf, kMagic, 4);
  put_u32(buf, kVersion);

  const std::string doc = ckpt.config.dump();
  put_u32(buf, std::uint32_t(doc.size()));
  put_bytes(buf, doc.data(), doc.size());

  put_u32(buf, std::uint32_t(ckpt.params.entries.size()));
  for (const auto& e : ckpt.params.entries) put_tensor(buf, e.name, e.tensor, e.is_bias);

  if (ckpt.adam) {
    if (ckpt.adam->m.size() != ckpt.params.entries.size())
      throw ConfigError("checkpoint: Adam state does not match parameter table");
    buf.push_back(1);
    put_u32(buf, std::uint32_t(2 * ckpt.params.entries.size()));
    for (std::size_t i = 0; i < ckpt.params.entries.size(); ++i) {
      const auto& e = ckpt.params.entries[i];
      put_tensor(buf, "m:" + e.name, ckpt.adam->m[i], e.is_bias);
      put_tensor(buf, "v:" + e.name, ckpt.adam->v[i], e.is_bias);
    }
  } else {
    buf.push_back(0);
  }

  put_u32(buf, crc_of(buf.data(), buf.size()));

  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::fseek(f.get(), 0, SEEK_END);
  const long len = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  if (len < 0) throw IoError("cannot stat checkpoint: " + path);
  const std::size_t file_len = std::size_t(len);
  std::vector<std::uint8_t> buf(file_len);
  if (!buf.empty() && std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw IoError("short read on checkpoint: " + path);

  if (buf.size() < 12)
    throw FormatError("corrupt checkpoint: file too short for magic/version");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("corrupt checkpoint: bad magic (expected ENDN)");

  Reader header(buf.data() + 4, buf.size() - 4);
  const std::uint32_t version = header.u32("version");
  if (version != kVersion)
    throw FormatError("corrupt checkpoint: unsupported version " + std::to_string(version));

  // Structural parse (bounds-checked), then CRC over everything but the tail.
  Reader r(buf.data() + 8, buf.size() - 8 - 4);
  Checkpoint ckpt;
  const std::uint32_t doc_len = r.u32("config length");
  const std::string doc = r.str(doc_len, "config document");
  try {
    ckpt.config = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint: config document is not JSON: ") +
                      e.what());
  }

  const std::uint32_t n_tensors = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor nt = read_tensor(r);
    ckpt.params.add(nt.name, std::move(nt.tensor), nt.is_vector);
  }

  const std::uint8_t has_adam = r.u8("adam flag");
  if (has_adam > 1) throw FormatError("corrupt checkpoint: adam flag must be 0 or 1");
  if (has_adam) {
    const std::uint32_t n_state = r.u32("adam tensor count");
    if (n_state != 2 * n_tensors)
      throw FormatError("corrupt checkpoint: adam table size does not match parameters");
    AdamStateF adam;
    adam.m.resize(n_tensors);
    adam.v.resize(n_tensors);
    for (std::uint32_t i = 0; i < n_state; ++i) {
      NamedTensor nt = read_tensor(r);
      const bool is_m = nt.name.rfind("m:", 0) == 0;
      const bool is_v = nt.name.rfind("v:", 0) == 0;
      if (!is_m && !is_v)
        throw FormatError("corrupt checkpoint: adam tensor lacks m:/v: prefix: " + nt.name);
      auto it = ckpt.params.index.find(nt.name.substr(2));
      if (it == ckpt.params.index.end())
        throw FormatError("corrupt checkpoint: adam tensor for unknown parameter: " + nt.name);
      (is_m ? adam.m : adam.v)[it->second] = std::move(nt.tensor);
    }
    for (std::uint32_t i = 0; i < n_tensors; ++i)
      if (adam.m[i].empty() || adam.v[i].empty())
        throw FormatError("corrupt checkpoint: incomplete adam state for parameter " +
                          ckpt.params.entries[i].name);
    if (ckpt.config.contains("train")) {
      adam.t = ckpt.step();
      if (ckpt.config["train"].contains("lr"))
        adam.lr = ckpt.config["train"]["lr"].get<float>();
    }
    ckpt.adam = std::move(adam);
  }
  if (!r.at_end())
    throw FormatError("corrupt checkpoint: trailing bytes after adam table");

  const std::uint32_t stored_crc = std::uint32_t(buf[buf.size() - 4]) |
                                   std::uint32_t(buf[buf.size() - 3]) << 8 |
                                   std::uint32_t(buf[buf.size() - 2]) << 16 |
                                   std::uint32_t(buf[buf.size() - 1]) << 24;
  const std::uint32_t actual_crc = crc_of(buf.data(), buf.size() - 4);
  if (stored_crc != actual_crc)
    throw FormatError("corrupt checkpoint: CRC mismatch (stored " +
                      std::to_string(stored_crc) + ", computed " +
                      std::to_string(actual_crc) + ")");
  return ckpt;
}

}  // namespace endn
