#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "torclass/error.hpp"
#include "torclass/labels.hpp"

namespace torclass::flow {

inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

struct Endpoint {
  std::uint32_t ip = 0;  // host order, 10.0.0.1 == 0x0A000001
  std::uint16_t port = 0;

  auto operator<=>(const Endpoint&) const = default;
};

struct PacketRecord {
  std::int64_t timestamp_us = 0;
  Endpoint src;
  Endpoint dst;
  std::uint8_t protocol = kProtoTcp;
  std::uint64_t bytes = 0;  // total packet length on the wire

  bool operator==(const PacketRecord&) const = default;
};

/// Bidirectional key: endpoint_a <= endpoint_b by (ip, port).
struct FlowKey {
  Endpoint endpoint_a;
  Endpoint endpoint_b;
  std::uint8_t protocol = 0;

  auto operator<=>(const FlowKey&) const = default;
};

/// Raised by assemble_flows when timestamps decrease.
class OutOfOrderError : public DataError {
 public:
  explicit OutOfOrderError(std::size_t index)
      : DataError("out-of-order timestamp at packet index " + std::to_string(index)), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

struct MeterConfig {
  std::int64_t activity_timeout_us = 5'000'000;
  std::int64_t flow_timeout_us = 120'000'000;

  /// Throws UsageError when a timeout is non-positive or activity > flow.
  void validate() const;
};

/// In-progress flow state. Forward is the orientation of the first packet.
struct FlowAccumulator {
  FlowKey key;
  Endpoint initiator;
  Endpoint responder;
  std::vector<std::int64_t> timestamps_fwd;
  std::vector<std::int64_t> timestamps_bwd;
  std::vector<std::int64_t> timestamps_all;
  std::uint64_t byte_count = 0;
  std::uint64_t packet_count = 0;
  std::int64_t first_ts = 0;
  std::int64_t last_ts = 0;

  void add(const PacketRecord& pkt);
};

inline constexpr std::size_t kFeatureCount = 28;

/// Column names of the flow CSV, in feature order. Label is column 29.
extern const std::array<std::string_view, kFeatureCount> kFeatureNames;
inline constexpr std::string_view kLabelColumn = "label";

/// Columns that hold integers (addresses, ports, protocol).
bool is_integral_feature(std::size_t index);

enum Feature : std::size_t {
  kSrcIp = 0, kSrcPort, kDstIp, kDstPort, kProtocol,
  kFlowDuration, kFlowBytesPerS, kFlowPacketsPerS,
  kFlowIatMean, kFlowIatStd, kFlowIatMax, kFlowIatMin,
  kFwdIatMean, kFwdIatStd, kFwdIatMax, kFwdIatMin,
  kBwdIatMean, kBwdIatStd, kBwdIatMax, kBwdIatMin,
  kActiveMean, kActiveStd, kActiveMax, kActiveMin,
  kIdleMean, kIdleStd, kIdleMax, kIdleMin,
};

struct FlowFeatures {
  std::array<double, kFeatureCount> values{};
  ClassLabel label = ClassLabel::Unlabeled;

  double operator[](std::size_t i) const { return values[i]; }
};

struct StatsSummary {
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
  double min = 0.0;

  bool operator==(const StatsSummary&) const = default;
};

struct ActiveIdle {
  std::vector<double> active;
  std::vector<double> idle;
};

std::uint32_t parse_ipv4(std::string_view text);
std::string format_ipv4(std::uint32_t ip);

/// Parses one 7-field record: timestamp_us,src_ip,src_port,dst_ip,dst_port,protocol,bytes.
PacketRecord parse_packet_record(std::string_view row, std::size_t line_no = 1);

/// Reads a packet-record file. Blank lines are skipped and the first line is
/// treated as a header when its first field is not numeric.
std::vector<PacketRecord> read_packet_records(std::istream& in);

FlowKey canonical_key(const PacketRecord& pkt);

/// Groups a time-ordered packet stream into bidirectional flows, in the order
/// the flows were opened. Throws DataError on a decreasing timestamp.
std::vector<FlowAccumulator> assemble_flows(std::span<const PacketRecord> packets,
                                            const MeterConfig& cfg);

/// Population statistics; empty input gives all zeros.
StatsSummary stats_summary(std::span<const double> values);

/// Splits a timestamp series into active bursts and the idle gaps between
/// them. Single-packet bursts have zero length and are not recorded.
ActiveIdle segment_active_idle(std::span<const std::int64_t> timestamps,
                               std::int64_t activity_timeout_us);

FlowFeatures compute_features(const FlowAccumulator& flow, const MeterConfig& cfg,
                              ClassLabel label);

void write_flow_csv_header(std::ostream& out);
void write_flow_csv_row(std::ostream& out, const FlowFeatures& features);

/// Full meter pass: packets -> flows -> feature rows, in flow-open order.
std::vector<FlowFeatures> meter(std::span<const PacketRecord> packets, const MeterConfig& cfg,
                                ClassLabel label);

}  // namespace torclass::flow
