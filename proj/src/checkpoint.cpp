#include "ergl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ergl/config.hpp"

namespace ergl {

namespace {

constexpr char kMagic[8] = {'E', 'R', 'G', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<char*>(&v), 8); }
void put_i64(std::ostream& out, int64_t v) { out.write(reinterpret_cast<char*>(&v), 8); }

void put_string(std::ostream& out, const std::string& s) {
  if (s.size() > UINT16_MAX) throw FormatError("checkpoint: string too long");
  auto len = static_cast<uint16_t>(s.size());
  out.write(reinterpret_cast<char*>(&len), 2);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  put_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

struct Reader {
  std::ifstream in;
  std::string path;

  void need(bool ok, const std::string& what) {
    if (!ok || !in)
      throw FormatError("checkpoint: truncated or corrupt " + path + " (" + what + ")");
  }
  uint32_t u32() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    need(true, "u32");
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    need(true, "u64");
    return v;
  }
  int64_t i64() {
    int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    need(true, "i64");
    return v;
  }
  uint8_t u8() {
    uint8_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 1);
    need(true, "u8");
    return v;
  }
  std::string str() {
    uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 2);
    need(true, "string length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    need(true, "string payload");
    return s;
  }
  std::vector<float> floats() {
    uint64_t count = u64();
    if (count > (1ull << 33))
      throw FormatError("checkpoint: implausible tensor size in " + path);
    std::vector<float> v(count);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    need(true, "tensor payload");
    return v;
  }
};

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot write " + path);

  out.write(kMagic, 8);
  put_u32(out, kVersion);

  std::string header = train_config_to_json(config);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::string vocab_json = vocabulary_to_json(vocab);
  put_u64(out, vocab_json.size());
  out.write(vocab_json.data(), static_cast<std::streamsize>(vocab_json.size()));

  put_u32(out, static_cast<uint32_t>(scene_labels.size()));
  for (const auto& s : scene_labels) put_string(out, s);

  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_string(out, t.name);
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_i64(out, d);
    put_floats(out, t.data);
  }

  out.put(has_optimizer ? 1 : 0);
  if (has_optimizer) {
    put_u32(out, static_cast<uint32_t>(optimizer.size()));
    for (const auto& slot : optimizer) {
      put_string(out, slot.name);
      put_i64(out, slot.step);
      put_floats(out, slot.m);
      put_floats(out, slot.v);
    }
  }
  if (!out) throw InputError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  Reader r;
  r.path = path;
  r.in.open(path, std::ios::binary);
  if (!r.in) throw InputError("checkpoint: cannot open " + path);

  char magic[8];
  r.in.read(magic, 8);
  if (!r.in || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " in " +
                      path);

  Checkpoint ck;
  {
    uint64_t len = r.u64();
    std::string header(len, '\0');
    r.in.read(header.data(), static_cast<std::streamsize>(len));
    r.need(true, "config header");
    ck.config = train_config_from_json(header);
  }
  {
    uint64_t len = r.u64();
    std::string vocab_json(len, '\0');
    r.in.read(vocab_json.data(), static_cast<std::streamsize>(len));
    r.need(true, "vocabulary");
    ck.vocab = vocabulary_from_json(vocab_json);
  }
  uint32_t n_labels = r.u32();
  for (uint32_t i = 0; i < n_labels; ++i) ck.scene_labels.push_back(r.str());

  uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    NamedBlob blob;
    blob.name = r.str();
    uint32_t ndim = r.u32();
    for (uint32_t d = 0; d < ndim; ++d) blob.shape.push_back(r.i64());
    blob.data = r.floats();
    int64_t numel = 1;
    for (int64_t d : blob.shape) numel *= d;
    if (numel != static_cast<int64_t>(blob.data.size()))
      throw FormatError("checkpoint: tensor '" + blob.name + "' shape/payload mismatch in " +
                        path);
    ck.tensors.push_back(std::move(blob));
  }

  ck.has_optimizer = r.u8() != 0;
  if (ck.has_optimizer) {
    uint32_t n_slots = r.u32();
    for (uint32_t i = 0; i < n_slots; ++i) {
      OptimSlot slot;
      slot.name = r.str();
      slot.step = r.i64();
      slot.m = r.floats();
      slot.v = r.floats();
      ck.optimizer.push_back(std::move(slot));
    }
  }
  return ck;
}

}  // namespace ergl
