#pragma once

// Binary checkpoint container: magic "GEKC", format version, family/kind
// tags, dimension header, dtype tag, reciprocal flag, then the raw
// little-endian parameter tensors in canonical order. A text sidecar
// (<path>.manifest) lists shapes, the content hash and the vocabulary hash.

#include <cstring>
#include <fstream>
#include <sstream>

#include "gekc/detail/grads_common.hpp"
#include "gekc/kg.hpp"
#include "gekc/model.hpp"
#include "gekc/version.hpp"

namespace gekc {

class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  Fnv1a h;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, std::size_t(in.gcount()));
  }
  return h.value();
}

inline std::uint64_t vocab_hash(const Vocabulary& vocab) {
  Fnv1a h;
  for (const auto& n : vocab.entity_names()) {
    h.update(n);
    h.update("\x1f", 1);
  }
  h.update("\x1e", 1);
  for (const auto& n : vocab.predicate_names()) {
    h.update(n);
    h.update("\x1f", 1);
  }
  return h.value();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Model& m,
                            std::uint64_t vocab_hash_value = 0) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("GEKC", 4);
    detail::write_u32(out, kCheckpointFormatVersion);
    const std::uint8_t family = std::uint8_t(m.family);
    const std::uint8_t kind = std::uint8_t(m.kind);
    const std::uint8_t dtype = 0;  // f64 little-endian
    const std::uint8_t reciprocal = m.reciprocal ? 1 : 0;
    out.put(char(family));
    out.put(char(kind));
    out.put(char(dtype));
    out.put(char(reciprocal));
    detail::write_u64(out, m.num_entities());
    detail::write_u64(out, m.num_predicates());
    if (m.family == ModelFamily::TuckER) {
      detail::write_u64(out, m.tk().de);
      detail::write_u64(out, m.tk().dr);
    } else {
      detail::write_u64(out, m.dim());
      detail::write_u64(out, 0);
    }
    Model& mut = const_cast<Model&>(m);
    for (auto view : param_views(mut))
      out.write(reinterpret_cast<const char*>(view.data()),
                std::streamsize(view.size() * sizeof(double)));
    if (!out) throw DataError("short write on checkpoint: " + path);
  }
  // sidecar manifest
  std::ofstream man(path + ".manifest");
  if (!man) throw DataError("cannot write checkpoint manifest");
  man << "format = gekc-checkpoint-v" << kCheckpointFormatVersion << "\n";
  man << "family = " << to_string(m.family) << "\n";
  man << "kind = " << to_string(m.kind) << "\n";
  man << "entities = " << m.num_entities() << "\n";
  man << "predicates = " << m.num_predicates() << "\n";
  if (m.family == ModelFamily::TuckER)
    man << "dim_entities = " << m.tk().de << "\ndim_relations = " << m.tk().dr << "\n";
  else
    man << "dim = " << m.dim() << "\n";
  man << "dtype = f64\n";
  man << "reciprocal = " << (m.reciprocal ? 1 : 0) << "\n";
  Model& mut = const_cast<Model&>(m);
  std::size_t ti = 0;
  for (auto view : param_views(mut)) man << "tensor" << ti++ << " = " << view.size() << "\n";
  man << "content_hash = " << hex64(hash_file(path)) << "\n";
  man << "vocab_hash = " << hex64(vocab_hash_value) << "\n";
}

inline Model load_checkpoint(const std::string& path,
                             std::uint64_t* vocab_hash_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GEKC", 4) != 0)
    throw DataError("not a GEKC checkpoint: " + path);
  std::uint32_t version = detail::read_u32(in);
  if (version != kCheckpointFormatVersion)
    throw DataError("unsupported checkpoint format version");
  const std::uint8_t family = std::uint8_t(in.get());
  const std::uint8_t kind = std::uint8_t(in.get());
  const std::uint8_t dtype = std::uint8_t(in.get());
  const std::uint8_t reciprocal = std::uint8_t(in.get());
  if (family > 3 || kind > 2) throw DataError("corrupt checkpoint header");
  if (dtype != 0) throw DataError("unsupported checkpoint dtype");
  const std::uint64_t ne = detail::read_u64(in);
  const std::uint64_t nr = detail::read_u64(in);
  const std::uint64_t d1 = detail::read_u64(in);
  const std::uint64_t d2 = detail::read_u64(in);

  Model m;
  m.family = ModelFamily(family);
  m.kind = ModelKind(kind);
  m.reciprocal = reciprocal != 0;
  switch (m.family) {
    case ModelFamily::CP: {
      CpParams p;
      p.u = DenseMatrix(ne, d1);
      p.w = DenseMatrix(nr, d1);
      p.v = DenseMatrix(ne, d1);
      m.params = std::move(p);
      break;
    }
    case ModelFamily::ComplEx: {
      ComplexParams p;
      p.e_re = DenseMatrix(ne, d1);
      p.w_re = DenseMatrix(nr, d1);
      if (m.kind == ModelKind::NonNegative) {
        p.theta = DenseMatrix(ne, d1);
        p.gamma = DenseMatrix(nr, d1);
      } else {
        p.e_im = DenseMatrix(ne, d1);
        p.w_im = DenseMatrix(nr, d1);
      }
      m.params = std::move(p);
      break;
    }
    case ModelFamily::RESCAL: {
      RescalParams p;
      p.e = DenseMatrix(ne, d1);
      for (std::uint64_t r = 0; r < nr; ++r) p.w.emplace_back(d1, d1);
      m.params = std::move(p);
      break;
    }
    case ModelFamily::TuckER: {
      TuckerParams p;
      p.de = d1;
      p.dr = d2;
      p.e = DenseMatrix(ne, d1);
      p.w = DenseMatrix(nr, d2);
      p.core.resize(d1 * d1 * d2);
      m.params = std::move(p);
      break;
    }
  }
  for (auto view : param_views(m)) {
    in.read(reinterpret_cast<char*>(view.data()),
            std::streamsize(view.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint: " + path);
  }
  char extra;
  if (in.read(&extra, 1)) throw DataError("trailing bytes in checkpoint: " + path);
  m.touch();
  validate(m);
  if (vocab_hash_out) {
    *vocab_hash_out = 0;
    std::ifstream man(path + ".manifest");
    std::string line;
    while (man && std::getline(man, line)) {
      if (line.rfind("vocab_hash = ", 0) == 0)
        *vocab_hash_out = std::stoull(line.substr(13), nullptr, 16);
    }
  }
  return m;
}

}  // namespace gekc
