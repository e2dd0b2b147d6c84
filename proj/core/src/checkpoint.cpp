// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "rmix/dataio.hpp"
#include "rmix/errors.hpp"

namespace rmix {

namespace {

constexpr char kMagic[8] = {'R', 'M', 'I', 'X', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::uint64_t n, const char* what) const {
    if (n > bytes_.size() - pos_) throw ParseError(std::string("checkpoint truncated in ") + what, pos_);
  }
  void skip(std::size_t n) {
    need(n, "header");
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n), "integer field");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  w.str(c.config_text);
  w.u64(c.epoch);
  w.u64(c.step);
  w.u32(static_cast<std::uint32_t>(c.groups.size()));
  for (const auto& [name, tensors] : c.groups) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor& t : tensors) {
      w.u32(static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) w.u64(d);
      for (double v : t.data()) w.f64(v);
    }
  }
  w.u32(static_cast<std::uint32_t>(c.rng_states.size()));
  for (const auto& [name, state] : c.rng_states) {
    w.str(name);
    w.str(state);
  }
  w.u32(static_cast<std::uint32_t>(c.scalars.size()));
  for (const auto& [name, v] : c.scalars) {
    w.str(name);
    w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(c.counters.size()));
  for (const auto& [name, v] : c.counters) {
    w.str(name);
    w.u64(v);
  }
  w.u64(fnv1a64(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a checkpoint (bad magic)", 0);
  }
  if (bytes.size() < sizeof kMagic + 8) throw ParseError("checkpoint truncated", bytes.size());
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.subspan(body));
  if (tail.u64() != fnv1a64(bytes.first(body))) throw ParseError("checkpoint checksum mismatch", body);

  Reader r(bytes.first(body));
  r.skip(sizeof kMagic);
  Checkpoint c;
  const std::size_t version_at = r.pos();
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
  c.config_text = r.str();
  c.epoch = r.u64();
  c.step = r.u64();
  const std::uint32_t groups = r.u32();
  for (std::uint32_t g = 0; g < groups; ++g) {
    const std::string name = r.str();
    const std::uint32_t count = r.u32();
    std::vector<Tensor> tensors;
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::size_t at = r.pos();
      const std::uint32_t rank = r.u32();
      Shape shape(rank);
      std::uint64_t n = 1;
      for (auto& d : shape) {
        d = r.u64();
        if (d == 0 || n > (std::uint64_t{1} << 40) / d) throw ParseError("invalid tensor extent", at);
        n *= d;
      }
      r.need(n * 8, "tensor data");
      std::vector<double> values(n);
      for (double& v : values) v = r.f64();
      tensors.emplace_back(std::move(shape), std::move(values));
    }
    c.groups.emplace(name, std::move(tensors));
  }
  const std::uint32_t rngs = r.u32();
  for (std::uint32_t i = 0; i < rngs; ++i) {
    std::string name = r.str();
    c.rng_states.emplace(std::move(name), r.str());
  }
  const std::uint32_t scalars = r.u32();
  for (std::uint32_t i = 0; i < scalars; ++i) {
    std::string name = r.str();
    c.scalars.emplace(std::move(name), r.f64());
  }
  const std::uint32_t counters = r.u32();
  for (std::uint32_t i = 0; i < counters; ++i) {
    std::string name = r.str();
    c.counters.emplace(std::move(name), r.u64());
  }
  if (r.pos() != body) throw ParseError("trailing bytes after checkpoint payload", r.pos());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(checkpoint);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace rmix
