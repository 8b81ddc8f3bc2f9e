#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "structsum/diffcore/optim.hpp"

// Checkpoint container:
//   "SSUMCKPT" | u32 version | u64 global_step
//   u32 n_meta  { str key, str value }*
//   u32 n_param { str name, u32 rank, u64 dim*, f64 payload* }*
//   u32 n_accum { same layout as parameters }*
// Strings are u32 length + bytes. All integers and floats little-endian.
namespace structsum::diffcore {

inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'U', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::uint64_t global_step = 0;
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> accumulators;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated checkpoint");
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 24)) throw DataError("implausible string length in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError("truncated checkpoint");
  return s;
}

inline void put_tensors(std::ostream& os, const std::vector<NamedTensor>& ts) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    put_string(os, t.name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.value.storage().data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
}

inline std::vector<NamedTensor> get_tensors(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < n; ++k) {
    NamedTensor nt;
    nt.name = get_string(is);
    const auto rank = get<std::uint32_t>(is);
    if (rank > 2) throw DataError("checkpoint tensor rank " + std::to_string(rank) + " unsupported");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(is));
    std::vector<double> data(shape_size(shape));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw DataError("truncated checkpoint payload for " + nt.name);
    nt.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint64_t>(os, ck.global_step);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    detail::put_string(os, k);
    detail::put_string(os, v);
  }
  detail::put_tensors(os, ck.params);
  detail::put_tensors(os, ck.accumulators);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw DataError("not a checkpoint file");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.global_step = detail::get<std::uint64_t>(is);
  const auto n_meta = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = detail::get_string(is);
    ck.meta[k] = detail::get_string(is);
  }
  ck.params = detail::get_tensors(is);
  ck.accumulators = detail::get_tensors(is);
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(os, ck);
  if (!os) throw DataError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

// Snapshot of a parameter store and its optimizer.
inline Checkpoint make_checkpoint(const ParamStore& params, const AdagradState* opt, std::uint64_t step) {
  Checkpoint ck;
  ck.global_step = step;
  for (std::size_t i = 0; i < params.size(); ++i) ck.params.push_back({params[i].name, params[i].value});
  if (opt && opt->accumulators.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) ck.accumulators.push_back({params[i].name, opt->accumulators[i]});
  }
  return ck;
}

// Copies checkpoint values into an already-constructed store. Every store
// parameter must be present with the same shape.
inline void restore_checkpoint(const Checkpoint& ck, ParamStore& params, AdagradState* opt) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : ck.params) by_name[nt.name] = &nt.value;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = by_name.find(params[i].name);
    if (it == by_name.end()) throw DataError("checkpoint lacks parameter " + params[i].name);
    if (it->second->shape() != params[i].value.shape()) {
      throw DataError("checkpoint shape mismatch for " + params[i].name + ": " + shape_string(it->second->shape()) +
                      " vs " + shape_string(params[i].value.shape()));
    }
    params[i].value = *it->second;
  }
  if (opt && !ck.accumulators.empty()) {
    opt->accumulators.clear();
    std::map<std::string, const Tensor*> acc;
    for (const auto& nt : ck.accumulators) acc[nt.name] = &nt.value;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto it = acc.find(params[i].name);
      if (it == acc.end() || it->second->shape() != params[i].value.shape()) {
        throw DataError("checkpoint accumulator missing or malformed for " + params[i].name);
      }
      opt->accumulators.push_back(*it->second);
    }
  }
}

}  // namespace structsum::diffcore
