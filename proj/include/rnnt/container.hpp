#pragma once

#include <json.hpp>

#include "rnnt/io.hpp"
#include "rnnt/model.hpp"

namespace rnnt {

// Model container: self-describing named-tensor file.
// Layout (little-endian):
//   "RNTC" | u32 version | u32 config_len | config JSON | u32 tensor_count
//   per tensor: u32 name_len | name | u8 dtype | u32 rows | u32 cols | payload
// Payloads: f32 = rows*cols floats; i8_sym = f32 theta + rows*cols int8;
// i8_asym = f32 scale + i32 zero_point + rows*cols int8.
constexpr uint32_t kContainerVersion = 1;

enum class TensorDtype : uint8_t { f32 = 0, i8_sym = 1, i8_asym = 2 };

struct StoredTensor {
  std::string name;
  TensorDtype dtype = TensorDtype::f32;
  int rows = 0;
  int cols = 0;
  std::vector<float> f32;     // dtype f32
  std::vector<int8_t> i8;     // dtype i8_*
  float scale = 1.0f;         // theta (sym) or scale (asym)
  int32_t zero_point = 0;     // asym only

  size_t count() const { return static_cast<size_t>(rows) * cols; }

  // Bytes of tensor data (values + quantization constants), excluding the
  // name/shape framing; this is the "weight payload" size.
  size_t payload_bytes() const {
    switch (dtype) {
      case TensorDtype::f32: return count() * 4;
      case TensorDtype::i8_sym: return count() + 4;
      case TensorDtype::i8_asym: return count() + 8;
    }
    return 0;
  }
};

struct ModelContainer {
  uint32_t version = kContainerVersion;
  ModelConfig cfg;
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
  size_t payload_bytes() const {
    size_t n = 0;
    for (const auto& t : tensors) n += t.payload_bytes();
    return n;
  }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim}, {"num_labels", c.num_labels},
          {"embed_dim", c.embed_dim},     {"enc_layers", c.enc_layers},
          {"enc_units", c.enc_units},     {"enc_proj", c.enc_proj},
          {"reduction_factor", c.reduction_factor},
          {"reduction_after_layer", c.reduction_after_layer},
          {"pred_layers", c.pred_layers}, {"pred_units", c.pred_units},
          {"pred_proj", c.pred_proj},     {"joint_dim", c.joint_dim},
          {"layer_norm", c.layer_norm}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.num_labels = j.at("num_labels").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.enc_units = j.at("enc_units").get<int>();
  c.enc_proj = j.at("enc_proj").get<int>();
  c.reduction_factor = j.at("reduction_factor").get<int>();
  c.reduction_after_layer = j.at("reduction_after_layer").get<int>();
  c.pred_layers = j.at("pred_layers").get<int>();
  c.pred_units = j.at("pred_units").get<int>();
  c.pred_proj = j.at("pred_proj").get<int>();
  c.joint_dim = j.at("joint_dim").get<int>();
  c.layer_norm = j.at("layer_norm").get<bool>();
  c.validate();
  return c;
}

inline void save_container(const ModelContainer& mc, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write("RNTC", 4);
  detail::write_pod(os, mc.version);
  const std::string cfg = config_to_json(mc.cfg).dump();
  detail::write_pod(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_pod(os, static_cast<uint32_t>(mc.tensors.size()));
  for (const auto& t : mc.tensors) {
    detail::write_pod(os, static_cast<uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_pod(os, static_cast<uint8_t>(t.dtype));
    detail::write_pod(os, static_cast<uint32_t>(t.rows));
    detail::write_pod(os, static_cast<uint32_t>(t.cols));
    switch (t.dtype) {
      case TensorDtype::f32:
        if (t.f32.size() != t.count()) throw IoError("tensor " + t.name + ": f32 size mismatch");
        os.write(reinterpret_cast<const char*>(t.f32.data()),
                 static_cast<std::streamsize>(t.f32.size() * 4));
        break;
      case TensorDtype::i8_sym:
        if (t.i8.size() != t.count()) throw IoError("tensor " + t.name + ": i8 size mismatch");
        detail::write_pod(os, t.scale);
        os.write(reinterpret_cast<const char*>(t.i8.data()),
                 static_cast<std::streamsize>(t.i8.size()));
        break;
      case TensorDtype::i8_asym:
        if (t.i8.size() != t.count()) throw IoError("tensor " + t.name + ": i8 size mismatch");
        detail::write_pod(os, t.scale);
        detail::write_pod(os, t.zero_point);
        os.write(reinterpret_cast<const char*>(t.i8.data()),
                 static_cast<std::streamsize>(t.i8.size()));
        break;
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

inline ModelContainer load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RNTC", 4) != 0) throw IoError("not a model container: " + path);
  ModelContainer mc;
  mc.version = detail::read_pod<uint32_t>(is, "version");
  if (mc.version != kContainerVersion) {
    throw IoError("unsupported container version " + std::to_string(mc.version));
  }
  const auto cfg_len = detail::read_pod<uint32_t>(is, "config length");
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), cfg_len);
  if (!is) throw IoError("truncated config block");
  try {
    mc.cfg = config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad config block: ") + e.what());
  }
  const auto n_tensors = detail::read_pod<uint32_t>(is, "tensor count");
  for (uint32_t i = 0; i < n_tensors; ++i) {
    StoredTensor t;
    const auto name_len = detail::read_pod<uint32_t>(is, "name length");
    if (name_len > 4096) throw IoError("implausible tensor name length");
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const auto dtype = detail::read_pod<uint8_t>(is, "dtype");
    if (dtype > 2) throw IoError("unknown tensor dtype in " + t.name);
    t.dtype = static_cast<TensorDtype>(dtype);
    t.rows = static_cast<int>(detail::read_pod<uint32_t>(is, "rows"));
    t.cols = static_cast<int>(detail::read_pod<uint32_t>(is, "cols"));
    if (t.rows < 0 || t.cols < 0 || t.count() > (1u << 28)) throw IoError("implausible tensor shape");
    switch (t.dtype) {
      case TensorDtype::f32:
        t.f32.resize(t.count());
        is.read(reinterpret_cast<char*>(t.f32.data()),
                static_cast<std::streamsize>(t.f32.size() * 4));
        break;
      case TensorDtype::i8_asym:
        t.scale = detail::read_pod<float>(is, "scale");
        t.zero_point = detail::read_pod<int32_t>(is, "zero_point");
        t.i8.resize(t.count());
        is.read(reinterpret_cast<char*>(t.i8.data()), static_cast<std::streamsize>(t.i8.size()));
        break;
      case TensorDtype::i8_sym:
        t.scale = detail::read_pod<float>(is, "theta");
        t.i8.resize(t.count());
        is.read(reinterpret_cast<char*>(t.i8.data()), static_cast<std::streamsize>(t.i8.size()));
        break;
    }
    if (!is) throw IoError("truncated tensor payload in " + t.name);
    mc.tensors.push_back(std::move(t));
  }
  return mc;
}

// Float container from a model (training checkpoints and the float engine).
// Non-const because param_refs exposes mutable views; nothing is written.
inline ModelContainer to_container(RnntModel<float>& m) {
  ModelContainer mc;
  mc.cfg = m.cfg;
  for (const auto& p : param_refs(m)) {
    StoredTensor t;
    t.name = p.name;
    t.dtype = TensorDtype::f32;
    t.rows = p.rows;
    t.cols = p.cols;
    t.f32 = *p.data;
    mc.tensors.push_back(std::move(t));
  }
  return mc;
}

// Rebuilds a float model; every tensor must be stored as f32.
inline RnntModel<float> float_model_from(const ModelContainer& mc) {
  RnntModel<float> m = make_model<float>(mc.cfg);
  for (const auto& p : param_refs(m)) {
    const StoredTensor* t = mc.find(p.name);
    if (!t) throw IoError("container missing tensor " + p.name);
    if (t->dtype != TensorDtype::f32) {
      throw IoError("tensor " + p.name + " is quantized; use the inference engine loader");
    }
    if (t->rows != p.rows || t->cols != p.cols) throw IoError("tensor " + p.name + ": shape mismatch");
    *p.data = t->f32;
  }
  m.validate();
  return m;
}

}  // namespace rnnt
