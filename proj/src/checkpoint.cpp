#include "ticket/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ticket {

namespace {

constexpr char kMagic[4] = {'T', 'C', 'K', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f32(std::vector<uint8_t>& out, const Tensor& t) {
  for (float v : t.data) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(out, u);
  }
}

void read_f32(const uint8_t* p, Tensor& t) {
  for (auto& v : t.data) {
    const uint32_t u = get_u32(p);
    std::memcpy(&v, &u, 4);
    p += 4;
  }
}

void append_bits(std::vector<uint8_t>& out, const std::vector<uint8_t>& bits) {
  uint8_t cur = 0;
  int fill = 0;
  for (uint8_t b : bits) {
    cur |= static_cast<uint8_t>((b & 1) << fill);
    if (++fill == 8) {
      out.push_back(cur);
      cur = 0;
      fill = 0;
    }
  }
  if (fill) out.push_back(cur);
}

void read_bits(const uint8_t* p, std::vector<uint8_t>& bits) {
  for (size_t i = 0; i < bits.size(); ++i)
    bits[i] = (p[i / 8] >> (i % 8)) & 1;
}

nlohmann::json shape_json(const std::vector<int64_t>& s) {
  nlohmann::json a = nlohmann::json::array();
  for (int64_t d : s) a.push_back(d);
  return a;
}

std::vector<int64_t> shape_from(const nlohmann::json& a) {
  std::vector<int64_t> s;
  for (const auto& v : a) s.push_back(v.get<int64_t>());
  return s;
}

ParamRole role_from(const std::string& s) {
  if (s == "weight") return ParamRole::PrunableWeight;
  if (s == "bias") return ParamRole::Bias;
  if (s == "embedding") return ParamRole::Embedding;
  throw std::runtime_error("checkpoint: unknown parameter role '" + s + "'");
}

}  // namespace

uint64_t fnv1a64_bytes(const uint8_t* data, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::vector<uint8_t> payload;
  nlohmann::json arrays = nlohmann::json::array();

  auto add_array = [&](const std::string& name, const char* kind,
                       const char* role, int module,
                       const std::vector<int64_t>& shape, size_t offset,
                       size_t nbytes) {
    arrays.push_back({{"name", name},
                      {"kind", kind},
                      {"role", role},
                      {"module", module},
                      {"shape", shape_json(shape)},
                      {"offset", offset},
                      {"bytes", nbytes}});
  };

  for (const auto& e : ck.params.entries) {
    const size_t off = payload.size();
    append_f32(payload, e.value);
    add_array(e.name, "param", role_name(e.role), e.module, e.value.shape, off,
              payload.size() - off);
  }
  for (const auto& me : ck.mask.entries) {
    const size_t off = payload.size();
    append_bits(payload, me.bits);
    add_array(me.name, "mask", "mask", me.module, me.shape, off,
              payload.size() - off);
  }
  if (ck.has_adam) {
    for (size_t i = 0; i < ck.params.entries.size(); ++i) {
      const auto& e = ck.params.entries[i];
      size_t off = payload.size();
      append_f32(payload, ck.adam.m[i]);
      add_array(e.name, "adam_m", role_name(e.role), e.module, e.value.shape,
                off, payload.size() - off);
      off = payload.size();
      append_f32(payload, ck.adam.v[i]);
      add_array(e.name, "adam_v", role_name(e.role), e.module, e.value.shape,
                off, payload.size() - off);
    }
  }

  nlohmann::json streams = nlohmann::json::object();
  for (const auto& [name, st] : ck.rng_streams)
    streams[name] = {st[0], st[1], st[2], st[3]};

  nlohmann::json manifest = {
      {"format_version", kVersion},
      {"label", ck.label},
      {"round", ck.round},
      {"step", ck.step},
      {"seed", ck.seed},
      {"config", ck.config},
      {"config_hash", fnv1a64_bytes(
                          reinterpret_cast<const uint8_t*>(ck.config.dump().data()),
                          ck.config.dump().size())},
      {"adam_step", ck.adam.step},
      {"has_adam", ck.has_adam},
      {"rng_streams", streams},
      {"arrays", arrays},
      {"payload_bytes", payload.size()},
      {"payload_hash", fnv1a64_bytes(payload.data(), payload.size())},
  };
  const std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
  std::vector<uint8_t> header;
  header.insert(header.end(), kMagic, kMagic + 4);
  put_u32(header, kVersion);
  put_u64(header, mtext.size());
  f.write(reinterpret_cast<const char*>(header.data()),
          static_cast<std::streamsize>(header.size()));
  f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const uint32_t version = get_u32(bytes.data() + 4);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  const uint64_t mlen = get_u64(bytes.data() + 8);
  if (bytes.size() < 16 + mlen)
    throw std::runtime_error("checkpoint: truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<int64_t>(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: corrupt manifest: " + std::string(e.what()));
  }

  const uint8_t* payload = bytes.data() + 16 + mlen;
  const size_t payload_len = bytes.size() - 16 - mlen;
  if (payload_len != manifest.at("payload_bytes").get<size_t>())
    throw std::runtime_error("checkpoint: truncated payload");
  if (fnv1a64_bytes(payload, payload_len) != manifest.at("payload_hash").get<uint64_t>())
    throw std::runtime_error("checkpoint: payload hash mismatch (corrupt file)");

  Checkpoint ck;
  ck.config = manifest.at("config");
  ck.label = manifest.at("label").get<std::string>();
  ck.round = manifest.at("round").get<int>();
  ck.step = manifest.at("step").get<int64_t>();
  ck.seed = manifest.at("seed").get<uint64_t>();
  ck.has_adam = manifest.at("has_adam").get<bool>();
  ck.adam.step = manifest.at("adam_step").get<int64_t>();
  for (const auto& [name, arr] : manifest.at("rng_streams").items())
    ck.rng_streams[name] = {arr[0].get<uint64_t>(), arr[1].get<uint64_t>(),
                            arr[2].get<uint64_t>(), arr[3].get<uint64_t>()};

  auto span_of = [&](const nlohmann::json& a) {
    const size_t off = a.at("offset").get<size_t>();
    const size_t nb = a.at("bytes").get<size_t>();
    if (off + nb > payload_len)
      throw std::runtime_error("checkpoint: array '" +
                               a.at("name").get<std::string>() +
                               "' overruns payload");
    return payload + off;
  };

  for (const auto& a : manifest.at("arrays")) {
    const std::string kind = a.at("kind").get<std::string>();
    const std::string name = a.at("name").get<std::string>();
    const auto shape = shape_from(a.at("shape"));
    if (kind == "param") {
      ParamEntry e;
      e.name = name;
      e.module = a.at("module").get<int>();
      e.role = role_from(a.at("role").get<std::string>());
      e.value = Tensor(shape);
      read_f32(span_of(a), e.value);
      ck.params.entries.push_back(std::move(e));
    } else if (kind == "mask") {
      MaskEntry me;
      me.name = name;
      me.module = a.at("module").get<int>();
      me.shape = shape;
      me.bits.assign(static_cast<size_t>(Tensor::numel_of(shape)), 0);
      read_bits(span_of(a), me.bits);
      ck.mask.entries.push_back(std::move(me));
    } else if (kind == "adam_m" || kind == "adam_v") {
      Tensor t(shape);
      read_f32(span_of(a), t);
      (kind == "adam_m" ? ck.adam.m : ck.adam.v).push_back(std::move(t));
    } else {
      throw std::runtime_error("checkpoint: unknown array kind '" + kind + "'");
    }
  }
  if (ck.has_adam && (ck.adam.m.size() != ck.params.entries.size() ||
                      ck.adam.v.size() != ck.params.entries.size()))
    throw std::runtime_error("checkpoint: optimizer arrays misaligned");
  return ck;
}

}  // namespace ticket
