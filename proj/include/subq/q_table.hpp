// Copyright 2026 The subq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SUBQ_Q_TABLE_HPP_
#define SUBQ_Q_TABLE_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "subq/env_model.hpp"
#include "subq/errors.hpp"
#include "subq/lattice.hpp"

namespace subq {

// Default ceiling on the number of entries of a dense mean-field table
// (G * |lattice| * A). 2^27 doubles is 1 GiB.
inline constexpr std::uint64_t kDefaultTableEntryBudget = std::uint64_t{1} << 27;

// Q_k(s_g, F, a_g) stored densely, indexed by (s_g, rank(F), a_g) row-major.
class MeanFieldQTable {
 public:
  MeanFieldQTable(const EnvModel& env, std::uint32_t k,
                  std::uint64_t entry_budget = kDefaultTableEntryBudget)
      : lattice_(k, env.num_local_states()),
        fingerprint_(env.fingerprint()),
        gamma_(env.gamma()),
        num_global_(env.num_global_states()),
        num_actions_(env.num_actions()) {
    if (k > env.num_locals()) {
      throw InvalidParameterError("table support size k=" + std::to_string(k) + " exceeds n=" +
                                  std::to_string(env.num_locals()));
    }
    const long double entries =
        static_cast<long double>(num_global_) * lattice_.size() * num_actions_;
    if (entries > static_cast<long double>(entry_budget)) {
      throw CapacityError("mean-field table for k=" + std::to_string(k) + " needs " +
                          (entries < 1.8e19L ? std::to_string(static_cast<unsigned long long>(entries)) : std::string("over 2^64")) +
                          " entries (lattice " +
                          std::to_string(lattice_.size()) + "), budget is " + std::to_string(entry_budget));
    }
    values_.assign(static_cast<std::size_t>(entries), 0.0);
  }

  const CompositionLattice& lattice() const noexcept { return lattice_; }
  std::uint32_t k() const noexcept { return lattice_.k(); }
  std::uint32_t num_local_states() const noexcept { return lattice_.num_states(); }
  std::uint32_t num_global_states() const noexcept { return num_global_; }
  std::uint32_t num_actions() const noexcept { return num_actions_; }
  std::uint64_t num_dists() const noexcept { return lattice_.size(); }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t index(GlobalState s_g, DistIndex d, Action a) const noexcept {
    return (static_cast<std::size_t>(s_g) * lattice_.size() + d) * num_actions_ + a;
  }
  double& at(GlobalState s_g, DistIndex d, Action a) noexcept { return values_[index(s_g, d, a)]; }
  double at(GlobalState s_g, DistIndex d, Action a) const noexcept { return values_[index(s_g, d, a)]; }

  double value(GlobalState s_g, const EmpiricalDist& d, Action a) const {
    if (s_g >= num_global_ || a >= num_actions_) throw RangeError("table lookup out of range");
    return at(s_g, lattice_.rank(d), a);
  }

  // Q(s_g, d, .) as a contiguous row.
  std::span<const double> row(GlobalState s_g, DistIndex d) const noexcept {
    return std::span(values_).subspan(index(s_g, d, 0), num_actions_);
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double sup_norm() const noexcept {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  bool same_shape(const MeanFieldQTable& o) const noexcept {
    return k() == o.k() && num_local_states() == o.num_local_states() &&
           num_global_ == o.num_global_ && num_actions_ == o.num_actions_;
  }

  // Restores a table from raw parts; used by the loader.
  static MeanFieldQTable from_parts(const EnvModel& env, std::uint32_t k, std::vector<double> values) {
    MeanFieldQTable t(env, k, std::max<std::uint64_t>(values.size(), 1));
    if (values.size() != t.values_.size()) throw FormatError("table payload has wrong length");
    t.values_ = std::move(values);
    return t;
  }

  friend bool operator==(const MeanFieldQTable& a, const MeanFieldQTable& b) {
    return a.fingerprint_ == b.fingerprint_ && a.same_shape(b) && a.values_ == b.values_;
  }

 private:
  CompositionLattice lattice_;
  std::uint64_t fingerprint_;
  double gamma_;
  std::uint32_t num_global_;
  std::uint32_t num_actions_;
  std::vector<double> values_;
};

// max |Q1 - Q2| over all entries.
inline double sup_norm_diff(const MeanFieldQTable& a, const MeanFieldQTable& b) {
  if (!a.same_shape(b)) throw DimensionError("sup_norm_diff: table shapes differ");
  double m = 0.0;
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) m = std::max(m, std::abs(va[i] - vb[i]));
  return m;
}

// (1 - eta) Q + eta * target, entrywise.
inline MeanFieldQTable stable_update(const MeanFieldQTable& q, const MeanFieldQTable& target, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw InvalidParameterError("learning rate must lie in (0, 1], got " + std::to_string(eta));
  }
  if (!q.same_shape(target)) throw DimensionError("stable_update: table shapes differ");
  MeanFieldQTable out = target;
  if (eta == 1.0) return out;
  auto o = out.values();
  const auto v = q.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - eta) * v[i] + eta * o[i];
  return out;
}

// Binary table artifact:
//   "SUBQQTB1" | u64 fingerprint | u32 k | u32 L | u32 G | u32 A | u64 dists |
//   f64 gamma | u64 count | count x f64 values (row-major (s_g, dist, a))
// All fields little-endian.
namespace detail {

inline constexpr char kTableMagic[8] = {'S', 'U', 'B', 'Q', 'Q', 'T', 'B', '1'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "table format assumes little-endian hosts");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view& in) {
  if (in.size() < sizeof(T)) throw FormatError("table file truncated");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}

}  // namespace detail

inline std::string serialize_table(const MeanFieldQTable& q) {
  std::string out(detail::kTableMagic, sizeof detail::kTableMagic);
  detail::put<std::uint64_t>(out, q.fingerprint());
  detail::put<std::uint32_t>(out, q.k());
  detail::put<std::uint32_t>(out, q.num_local_states());
  detail::put<std::uint32_t>(out, q.num_global_states());
  detail::put<std::uint32_t>(out, q.num_actions());
  detail::put<std::uint64_t>(out, q.num_dists());
  detail::put<double>(out, q.gamma());
  detail::put<std::uint64_t>(out, q.size());
  const auto v = q.values();
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  return out;
}

// Parses a table produced by serialize_table and checks it against `env`.
inline MeanFieldQTable deserialize_table(std::string_view in, const EnvModel& env) {
  if (in.size() < sizeof detail::kTableMagic ||
      std::memcmp(in.data(), detail::kTableMagic, sizeof detail::kTableMagic) != 0) {
    throw FormatError("not a subq table file");
  }
  in.remove_prefix(sizeof detail::kTableMagic);
  const auto fingerprint = detail::get<std::uint64_t>(in);
  const auto k = detail::get<std::uint32_t>(in);
  const auto L = detail::get<std::uint32_t>(in);
  const auto G = detail::get<std::uint32_t>(in);
  const auto A = detail::get<std::uint32_t>(in);
  const auto dists = detail::get<std::uint64_t>(in);
  detail::get<double>(in);
  const auto count = detail::get<std::uint64_t>(in);
  if (fingerprint != env.fingerprint()) {
    throw FormatError("table fingerprint does not match the environment");
  }
  if (L != env.num_local_states() || G != env.num_global_states() || A != env.num_actions() ||
      dists != lattice_size(k, L) || count != G * dists * A) {
    throw FormatError("table header is inconsistent with the environment");
  }
  if (in.size() != count * sizeof(double)) throw FormatError("table payload has wrong length");
  std::vector<double> values(count);
  std::memcpy(values.data(), in.data(), in.size());
  return MeanFieldQTable::from_parts(env, k, std::move(values));
}

inline void save_table(const MeanFieldQTable& q, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  const std::string bytes = serialize_table(q);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

inline MeanFieldQTable load_table(const std::string& path, const EnvModel& env) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_table(bytes, env);
}

// FNV-1a over a byte string; used as an artifact checksum.
inline std::uint64_t checksum(std::string_view bytes) noexcept {
  return detail::fnv1a(0xcbf29ce484222325ULL, bytes.data(), bytes.size());
}

}  // namespace subq

#endif  // SUBQ_Q_TABLE_HPP_
