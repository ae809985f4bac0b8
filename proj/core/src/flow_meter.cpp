#include "torclass/flow_meter.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>

#include "torclass/error.hpp"

namespace torclass::flow {

const std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "src_ip",        "src_port",      "dst_ip",        "dst_port",
    "protocol",      "flow_duration", "flow_bytes_per_s", "flow_packets_per_s",
    "flow_iat_mean", "flow_iat_std",  "flow_iat_max",  "flow_iat_min",
    "fwd_iat_mean",  "fwd_iat_std",   "fwd_iat_max",   "fwd_iat_min",
    "bwd_iat_mean",  "bwd_iat_std",   "bwd_iat_max",   "bwd_iat_min",
    "active_mean",   "active_std",    "active_max",    "active_min",
    "idle_mean",     "idle_std",      "idle_max",      "idle_min",
};

bool is_integral_feature(std::size_t index) { return index <= kProtocol; }

void MeterConfig::validate() const {
  if (activity_timeout_us <= 0 || flow_timeout_us <= 0) {
    throw UsageError("meter timeouts must be positive");
  }
  if (activity_timeout_us > flow_timeout_us) {
    throw UsageError("activity timeout must not exceed flow timeout");
  }
}

void FlowAccumulator::add(const PacketRecord& pkt) {
  if (packet_count == 0) {
    initiator = pkt.src;
    responder = pkt.dst;
    first_ts = pkt.timestamp_us;
  }
  // A self-addressed packet (src == dst) counts as forward.
  if (pkt.src == initiator) {
    timestamps_fwd.push_back(pkt.timestamp_us);
  } else {
    timestamps_bwd.push_back(pkt.timestamp_us);
  }
  timestamps_all.push_back(pkt.timestamp_us);
  byte_count += pkt.bytes;
  ++packet_count;
  last_ts = pkt.timestamp_us;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view row) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = row.find(',', start);
    auto field = row.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                   : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    fields.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_integer(std::string_view text, T& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<double> diffs(std::span<const std::int64_t> ts) {
  std::vector<double> out;
  if (ts.size() < 2) return out;
  out.reserve(ts.size() - 1);
  for (std::size_t i = 1; i < ts.size(); ++i) {
    out.push_back(static_cast<double>(ts[i] - ts[i - 1]));
  }
  return out;
}

void put_stats(FlowFeatures& f, std::size_t first, const StatsSummary& s) {
  f.values[first + 0] = s.mean;
  f.values[first + 1] = s.std;
  f.values[first + 2] = s.max;
  f.values[first + 3] = s.min;
}

}  // namespace

std::uint32_t parse_ipv4(std::string_view text) {
  std::uint32_t ip = 0;
  int octets = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto dot = text.find('.', start);
    const auto part = text.substr(start, dot == std::string_view::npos ? std::string_view::npos
                                                                       : dot - start);
    unsigned value = 0;
    if (part.empty() || part.size() > 3 || !parse_integer(part, value) || value > 255) {
      throw DataError("malformed IPv4 address '" + std::string(text) + "'");
    }
    ip = (ip << 8) | value;
    ++octets;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  if (octets != 4) throw DataError("malformed IPv4 address '" + std::string(text) + "'");
  return ip;
}

std::string format_ipv4(std::uint32_t ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

PacketRecord parse_packet_record(std::string_view row, std::size_t line_no) {
  const auto fields = split_fields(row);
  if (fields.size() != 7) {
    throw ParseError(line_no, "record",
                     "expected 7 fields, got " + std::to_string(fields.size()));
  }
  PacketRecord pkt;
  if (!parse_integer(fields[0], pkt.timestamp_us) || pkt.timestamp_us < 0) {
    throw ParseError(line_no, "timestamp_us", "invalid timestamp '" + std::string(fields[0]) + "'");
  }
  auto ip = [&](std::string_view text, const char* name) {
    try {
      return parse_ipv4(text);
    } catch (const DataError&) {
      throw ParseError(line_no, name, "malformed IPv4 address '" + std::string(text) + "'");
    }
  };
  auto port = [&](std::string_view text, const char* name) {
    std::int64_t value = 0;
    if (!parse_integer(text, value)) {
      throw ParseError(line_no, name, "invalid port '" + std::string(text) + "'");
    }
    if (value < 0 || value > 65535) throw ParseError(line_no, name, "port out of range");
    return static_cast<std::uint16_t>(value);
  };
  pkt.src.ip = ip(fields[1], "src_ip");
  pkt.src.port = port(fields[2], "src_port");
  pkt.dst.ip = ip(fields[3], "dst_ip");
  pkt.dst.port = port(fields[4], "dst_port");
  int proto = 0;
  if (!parse_integer(fields[5], proto)) {
    throw ParseError(line_no, "protocol", "invalid protocol '" + std::string(fields[5]) + "'");
  }
  if (proto != kProtoTcp && proto != kProtoUdp) {
    throw ParseError(line_no, "protocol", "unsupported protocol " + std::to_string(proto));
  }
  pkt.protocol = static_cast<std::uint8_t>(proto);
  if (!parse_integer(fields[6], pkt.bytes)) {
    throw ParseError(line_no, "bytes", "invalid byte count '" + std::string(fields[6]) + "'");
  }
  return pkt;
}

std::vector<PacketRecord> read_packet_records(std::istream& in) {
  std::vector<PacketRecord> packets;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (first_content) {
      first_content = false;
      const auto fields = split_fields(line);
      std::int64_t ignored = 0;
      if (!parse_integer(fields[0], ignored)) continue;  // header
    }
    packets.push_back(parse_packet_record(line, line_no));
  }
  return packets;
}

FlowKey canonical_key(const PacketRecord& pkt) {
  FlowKey key;
  key.protocol = pkt.protocol;
  if (pkt.src <= pkt.dst) {
    key.endpoint_a = pkt.src;
    key.endpoint_b = pkt.dst;
  } else {
    key.endpoint_a = pkt.dst;
    key.endpoint_b = pkt.src;
  }
  return key;
}

std::vector<FlowAccumulator> assemble_flows(std::span<const PacketRecord> packets,
                                            const MeterConfig& cfg) {
  cfg.validate();
  std::vector<FlowAccumulator> flows;
  std::map<FlowKey, std::size_t> open;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const auto& pkt = packets[i];
    if (i > 0 && pkt.timestamp_us < packets[i - 1].timestamp_us) throw OutOfOrderError(i);
    const FlowKey key = canonical_key(pkt);
    auto it = open.find(key);
    if (it != open.end() && pkt.timestamp_us - flows[it->second].last_ts <= cfg.flow_timeout_us) {
      flows[it->second].add(pkt);
      continue;
    }
    FlowAccumulator acc;
    acc.key = key;
    acc.add(pkt);
    flows.push_back(std::move(acc));
    open[key] = flows.size() - 1;
  }
  return flows;
}

StatsSummary stats_summary(std::span<const double> values) {
  StatsSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  s.max = values[0];
  s.min = values[0];
  for (double v : values) {
    sum += v;
    s.max = std::max(s.max, v);
    s.min = std::min(s.min, v);
  }
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);
  // Rounding can push the mean a hair outside [min, max] for near-constant data.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

ActiveIdle segment_active_idle(std::span<const std::int64_t> timestamps,
                               std::int64_t activity_timeout_us) {
  if (timestamps.empty()) throw DataError("segment_active_idle: empty timestamp list");
  ActiveIdle out;
  std::int64_t burst_start = timestamps[0];
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    const std::int64_t gap = timestamps[i] - timestamps[i - 1];
    if (gap > activity_timeout_us) {
      const std::int64_t burst = timestamps[i - 1] - burst_start;
      if (burst > 0) out.active.push_back(static_cast<double>(burst));
      out.idle.push_back(static_cast<double>(gap));
      burst_start = timestamps[i];
    }
  }
  const std::int64_t last_burst = timestamps.back() - burst_start;
  if (last_burst > 0) out.active.push_back(static_cast<double>(last_burst));
  return out;
}

FlowFeatures compute_features(const FlowAccumulator& flow, const MeterConfig& cfg,
                              ClassLabel label) {
  FlowFeatures f;
  f.label = label;
  f.values[kSrcIp] = static_cast<double>(flow.initiator.ip);
  f.values[kSrcPort] = flow.initiator.port;
  f.values[kDstIp] = static_cast<double>(flow.responder.ip);
  f.values[kDstPort] = flow.responder.port;
  f.values[kProtocol] = flow.key.protocol;

  const std::int64_t duration_us = flow.last_ts - flow.first_ts;
  const double duration_s = static_cast<double>(duration_us) / 1e6;
  f.values[kFlowDuration] = duration_s;
  if (duration_us > 0) {
    f.values[kFlowBytesPerS] = static_cast<double>(flow.byte_count) / duration_s;
    f.values[kFlowPacketsPerS] = static_cast<double>(flow.packet_count) / duration_s;
  }

  put_stats(f, kFlowIatMean, stats_summary(diffs(flow.timestamps_all)));
  put_stats(f, kFwdIatMean, stats_summary(diffs(flow.timestamps_fwd)));
  put_stats(f, kBwdIatMean, stats_summary(diffs(flow.timestamps_bwd)));

  const auto segments = segment_active_idle(flow.timestamps_all, cfg.activity_timeout_us);
  put_stats(f, kActiveMean, stats_summary(segments.active));
  put_stats(f, kIdleMean, stats_summary(segments.idle));
  return f;
}

void write_flow_csv_header(std::ostream& out) {
  for (const auto& name : kFeatureNames) out << name << ',';
  out << kLabelColumn << '\n';
}

void write_flow_csv_row(std::ostream& out, const FlowFeatures& features) {
  char buf[64];
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (is_integral_feature(i)) {
      std::snprintf(buf, sizeof buf, "%.0f", features.values[i]);
    } else {
      std::snprintf(buf, sizeof buf, "%.6g", features.values[i]);
    }
    out << buf << ',';
  }
  out << label_name(features.label) << '\n';
}

std::vector<FlowFeatures> meter(std::span<const PacketRecord> packets, const MeterConfig& cfg,
                                ClassLabel label) {
  std::vector<FlowFeatures> rows;
  for (const auto& flow : assemble_flows(packets, cfg)) {
    rows.push_back(compute_features(flow, cfg, label));
  }
  return rows;
}

}  // namespace torclass::flow
