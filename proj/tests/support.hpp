#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "torclass/dataset.hpp"
#include "torclass/flow_meter.hpp"
#include "torclass/random.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    torclass::Rng rng(reinterpret_cast<std::uintptr_t>(this) ^ std::hash<std::string>{}(tag));
    path_ = fs::temp_directory_path() / ("torclass-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Random time-ordered packet trace over a handful of endpoints. Gaps mix
/// sub-second, activity-scale and flow-timeout-scale values, repeated
/// timestamps and gaps landing exactly on `activity` and `flow` timeouts.
inline std::vector<torclass::flow::PacketRecord> random_trace(torclass::Rng& rng, std::size_t max_packets,
                                                               std::int64_t activity, std::int64_t flow) {
  using torclass::flow::Endpoint;
  using torclass::flow::PacketRecord;
  const std::uint32_t ips[] = {0x0A000001u, 0x0A000002u, 0xC0A80001u};
  const std::uint16_t ports[] = {80, 443, 9001};
  const std::size_t n = 1 + rng.uniform_index(max_packets);
  std::vector<PacketRecord> out;
  std::int64_t ts = static_cast<std::int64_t>(rng.uniform_index(1000000));
  for (std::size_t i = 0; i < n; ++i) {
    switch (rng.uniform_index(8)) {
      case 0: break;  // same timestamp
      case 1: ts += activity; break;
      case 2: ts += flow; break;
      case 3: ts += activity + 1 + static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(3 * activity))); break;
      case 4: ts += flow + 1 + static_cast<std::int64_t>(rng.uniform_index(1000000)); break;
      default: ts += static_cast<std::int64_t>(rng.uniform_index(2000000)); break;
    }
    PacketRecord p;
    p.timestamp_us = ts;
    // Two conversations dominate so that flows collect several packets.
    const std::size_t conv = rng.uniform_index(3);
    Endpoint a{ips[conv], ports[conv]};
    Endpoint b{ips[(conv + 1) % 3], ports[(conv + 2) % 3]};
    if (rng.uniform_index(2)) std::swap(a, b);
    p.src = a;
    p.dst = b;
    p.protocol = conv == 2 ? 17 : 6;
    p.bytes = 40 + rng.uniform_index(1460);
    out.push_back(p);
  }
  return out;
}

/// Random correlated dataset: a few latent factors, class drives some of them.
inline torclass::data::Dataset random_dataset(torclass::Rng& rng, std::size_t features, std::size_t n = 200) {
  std::vector<std::string> schema;
  for (std::size_t j = 0; j < features; ++j) schema.push_back("f" + std::to_string(j));
  torclass::data::Dataset ds(schema, torclass::data::default_class_names());
  const std::size_t latent = 2 + rng.uniform_index(3);
  std::vector<std::vector<double>> load(features, std::vector<double>(latent));
  std::vector<double> shift(latent);
  for (auto& row : load) {
    for (auto& v : row) v = rng.uniform01() < 0.5 ? 0.0 : rng.uniform(-1, 1);
  }
  for (auto& s : shift) s = rng.uniform(0, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    std::vector<double> z(latent);
    for (std::size_t l = 0; l < latent; ++l) z[l] = rng.normal() + y * shift[l];
    std::vector<double> x(features);
    for (std::size_t j = 0; j < features; ++j) {
      x[j] = rng.normal() * rng.uniform(0.1, 1.0);
      for (std::size_t l = 0; l < latent; ++l) x[j] += load[j][l] * z[l];
    }
    ds.add(x, y);
  }
  return ds;
}

}  // namespace testing_support
