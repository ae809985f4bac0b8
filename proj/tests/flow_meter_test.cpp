#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "oracles/flow_oracle.hpp"
#include "support.hpp"
#include "torclass/flow_meter.hpp"

using namespace torclass;
using namespace torclass::flow;

namespace {

PacketRecord pkt(std::int64_t ts, const char* src, std::uint16_t sport, const char* dst, std::uint16_t dport,
                 std::uint64_t bytes = 60, std::uint8_t proto = kProtoTcp) {
  return {ts, {parse_ipv4(src), sport}, {parse_ipv4(dst), dport}, proto, bytes};
}

std::string parse_error(std::string_view row) {
  try {
    parse_packet_record(row, 7);
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ParsePacketRecord, MapsFields) {
  const auto p = parse_packet_record("1000,10.0.0.1,443,10.0.0.2,5555,6,60");
  EXPECT_EQ(p.timestamp_us, 1000);
  EXPECT_EQ(p.src.ip, 0x0A000001u);
  EXPECT_EQ(p.src.port, 443);
  EXPECT_EQ(p.dst.ip, 0x0A000002u);
  EXPECT_EQ(p.dst.port, 5555);
  EXPECT_EQ(p.protocol, 6);
  EXPECT_EQ(p.bytes, 60u);
}

TEST(ParsePacketRecord, RejectsBadFieldsWithLineAndField) {
  EXPECT_NE(parse_error("1000,10.0.0.1,70000,10.0.0.2,80,6,60").find("port out of range"), std::string::npos);
  EXPECT_NE(parse_error("1000,10.0.0.1,443,10.0.0.2,80,1,60").find("unsupported protocol 1"), std::string::npos);
  EXPECT_NE(parse_error("1000,10.0.0.300,443,10.0.0.2,80,6,60").find("malformed IPv4"), std::string::npos);
  EXPECT_NE(parse_error("1000,10.0.0.1,443,10.0.0.2,80,6").find("line 7"), std::string::npos);
  EXPECT_NE(parse_error("1000,10.0.0.1,443,10.0.0.2,-1,6,60").find("dst_port"), std::string::npos);
  EXPECT_NE(parse_error("abc,10.0.0.1,443,10.0.0.2,80,6,60").find("timestamp"), std::string::npos);
}

TEST(ParsePacketRecord, Ipv4RoundTrip) {
  EXPECT_EQ(format_ipv4(parse_ipv4("192.168.0.254")), "192.168.0.254");
  EXPECT_THROW(parse_ipv4("1.2.3"), DataError);
  EXPECT_THROW(parse_ipv4("1.2.3.4.5"), DataError);
}

TEST(ReadPacketRecords, DetectsHeaderAndSkipsBlankLines) {
  std::istringstream with_header("timestamp_us,src_ip,src_port,dst_ip,dst_port,protocol,bytes\n"
                                 "1,10.0.0.1,1,10.0.0.2,2,6,10\n\n2,10.0.0.2,2,10.0.0.1,1,17,20\n");
  const auto a = read_packet_records(with_header);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].protocol, 17);
  std::istringstream bare("1,10.0.0.1,1,10.0.0.2,2,6,10\n");
  EXPECT_EQ(read_packet_records(bare).size(), 1u);
}

TEST(ReadPacketRecords, ErrorCarriesFileLine) {
  std::istringstream in("ts,a,b,c,d,e,f\n1,10.0.0.1,1,10.0.0.2,2,6,10\n2,10.0.0.1,1,10.0.0.2,2,1,10\n");
  try {
    read_packet_records(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.field(), "protocol");
  }
}

TEST(CanonicalKey, SymmetricAndOrdered) {
  const auto ab = pkt(0, "10.0.0.1", 443, "10.0.0.2", 80);
  const auto ba = pkt(0, "10.0.0.2", 80, "10.0.0.1", 443);
  EXPECT_EQ(canonical_key(ab), canonical_key(ba));
  EXPECT_EQ(canonical_key(ab).endpoint_a, (Endpoint{parse_ipv4("10.0.0.1"), 443}));
  const auto same_host = pkt(0, "10.0.0.1", 9999, "10.0.0.1", 80);
  EXPECT_EQ(canonical_key(same_host).endpoint_a.port, 80);
  EXPECT_EQ(canonical_key(same_host).endpoint_b.port, 9999);
}

TEST(AssembleFlows, SingleConversation) {
  const std::vector<PacketRecord> p{pkt(0, "10.0.0.1", 1, "10.0.0.2", 2), pkt(300000, "10.0.0.2", 2, "10.0.0.1", 1),
                                    pkt(900000, "10.0.0.1", 1, "10.0.0.2", 2)};
  const auto flows = assemble_flows(p, {});
  ASSERT_EQ(flows.size(), 1u);
  EXPECT_EQ(flows[0].packet_count, 3u);
  EXPECT_EQ(flows[0].timestamps_fwd.size(), 2u);
  EXPECT_EQ(flows[0].timestamps_bwd.size(), 1u);
}

TEST(AssembleFlows, FlowTimeoutBoundary) {
  const std::vector<PacketRecord> apart{pkt(0, "10.0.0.1", 1, "10.0.0.2", 2),
                                        pkt(121'000'000, "10.0.0.1", 1, "10.0.0.2", 2)};
  const auto flows = assemble_flows(apart, {});
  ASSERT_EQ(flows.size(), 2u);
  EXPECT_EQ(flows[0].packet_count, 1u);
  EXPECT_EQ(flows[1].packet_count, 1u);
  // A gap of exactly the timeout still joins.
  const std::vector<PacketRecord> at{pkt(0, "10.0.0.1", 1, "10.0.0.2", 2),
                                     pkt(120'000'000, "10.0.0.1", 1, "10.0.0.2", 2)};
  EXPECT_EQ(assemble_flows(at, {}).size(), 1u);
}

TEST(AssembleFlows, InterleavedKeysMatchBruteForceGrouping) {
  std::vector<PacketRecord> p;
  for (int i = 0; i < 12; ++i) {
    p.push_back(i % 3 == 0 ? pkt(i * 1000, "10.0.0.9", 53, "10.0.0.1", 4000, 80, kProtoUdp)
                           : pkt(i * 1000, i % 2 ? "10.0.0.1" : "10.0.0.2", i % 2 ? 1 : 2,
                                 i % 2 ? "10.0.0.2" : "10.0.0.1", i % 2 ? 2 : 1));
  }
  const auto flows = assemble_flows(p, {});
  const auto expected = oracle::group_flows(p, MeterConfig{}.flow_timeout_us);
  ASSERT_EQ(flows.size(), expected.size());
  for (std::size_t f = 0; f < flows.size(); ++f) EXPECT_EQ(flows[f].packet_count, expected[f].packets.size());
}

TEST(AssembleFlows, OutOfOrderCarriesIndex) {
  const std::vector<PacketRecord> p{pkt(10, "10.0.0.1", 1, "10.0.0.2", 2), pkt(20, "10.0.0.1", 1, "10.0.0.2", 2),
                                    pkt(15, "10.0.0.1", 1, "10.0.0.2", 2)};
  try {
    assemble_flows(p, {});
    FAIL() << "expected OutOfOrderError";
  } catch (const OutOfOrderError& e) {
    EXPECT_EQ(e.index(), 2u);
    EXPECT_NE(std::string(e.what()).find("out-of-order timestamp"), std::string::npos);
  }
}

TEST(StatsSummary, Conventions) {
  EXPECT_EQ(stats_summary({}), (StatsSummary{0, 0, 0, 0}));
  const std::vector<double> one{5};
  EXPECT_EQ(stats_summary(one), (StatsSummary{5, 0, 5, 5}));
  const std::vector<double> two{1, 2};
  EXPECT_EQ(stats_summary(two), (StatsSummary{1.5, 0.5, 2, 1}));
}

TEST(SegmentActiveIdle, Examples) {
  const std::vector<std::int64_t> one_burst{0, 1'000'000, 2'000'000};
  auto r = segment_active_idle(one_burst, 5'000'000);
  EXPECT_EQ(r.active, std::vector<double>{2e6});
  EXPECT_TRUE(r.idle.empty());

  const std::vector<std::int64_t> two_single{0, 10'000'000};
  r = segment_active_idle(two_single, 5'000'000);
  EXPECT_TRUE(r.active.empty());
  EXPECT_EQ(r.idle, std::vector<double>{10e6});

  const std::vector<std::int64_t> mixed{0, 1'000'000, 9'000'000, 10'000'000};
  r = segment_active_idle(mixed, 5'000'000);
  EXPECT_EQ(r.active, (std::vector<double>{1e6, 1e6}));
  EXPECT_EQ(r.idle, std::vector<double>{8e6});

  EXPECT_THROW(segment_active_idle({}, 5'000'000), DataError);
}

TEST(ComputeFeatures, SinglePacketIsAllZeroRates) {
  const std::vector<PacketRecord> p{pkt(5, "10.0.0.1", 1, "10.0.0.2", 2, 60)};
  const auto f = meter(p, {}, ClassLabel::Tor)[0];
  EXPECT_EQ(f[kFlowDuration], 0.0);
  EXPECT_EQ(f[kFlowBytesPerS], 0.0);
  EXPECT_EQ(f[kFlowPacketsPerS], 0.0);
  for (std::size_t i = kFlowIatMean; i < kFeatureCount; ++i) EXPECT_EQ(f[i], 0.0) << kFeatureNames[i];
  EXPECT_EQ(f.label, ClassLabel::Tor);
}

TEST(ComputeFeatures, TwoPacketClosedForm) {
  const std::vector<PacketRecord> p{pkt(0, "10.0.0.1", 1, "10.0.0.2", 2, 40),
                                    pkt(1'000'000, "10.0.0.1", 1, "10.0.0.2", 2, 60)};
  const auto f = meter(p, {}, ClassLabel::NonTor)[0];
  EXPECT_EQ(f[kFlowDuration], 1.0);
  EXPECT_EQ(f[kFlowBytesPerS], 100.0);
  EXPECT_EQ(f[kFlowPacketsPerS], 2.0);
  EXPECT_EQ(f[kFlowIatMean], 1e6);
}

TEST(ComputeFeatures, BidirectionalFourPacketTrace) {
  const std::vector<PacketRecord> p{
      pkt(0, "10.0.0.1", 1, "10.0.0.2", 2), pkt(1'000'000, "10.0.0.2", 2, "10.0.0.1", 1),
      pkt(2'000'000, "10.0.0.1", 1, "10.0.0.2", 2), pkt(3'000'000, "10.0.0.2", 2, "10.0.0.1", 1)};
  const auto f = meter(p, {}, ClassLabel::Tor)[0];
  const double flow_iat[] = {1e6, 0, 1e6, 1e6};
  const double dir_iat[] = {2e6, 0, 2e6, 2e6};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(f[kFlowIatMean + k], flow_iat[k]);
    EXPECT_EQ(f[kFwdIatMean + k], dir_iat[k]);
    EXPECT_EQ(f[kBwdIatMean + k], dir_iat[k]);
  }
  EXPECT_EQ(f[kSrcIp], parse_ipv4("10.0.0.1"));
  EXPECT_EQ(f[kDstPort], 2.0);
}

TEST(ComputeFeatures, SourceIsInitiatorEvenWhenLarger) {
  const std::vector<PacketRecord> p{pkt(0, "10.0.0.9", 5000, "10.0.0.1", 80),
                                    pkt(10, "10.0.0.1", 80, "10.0.0.9", 5000)};
  const auto f = meter(p, {}, ClassLabel::Tor)[0];
  EXPECT_EQ(f[kSrcIp], parse_ipv4("10.0.0.9"));
  EXPECT_EQ(f[kSrcPort], 5000.0);
}

TEST(FlowMeterProperties, MatchesBruteForceOnRandomTraces) {
  Rng rng(20240101);
  for (int trial = 0; trial < 100; ++trial) {
    MeterConfig cfg;
    if (trial % 2) cfg = {1'000'000, 10'000'000};
    const auto trace = testing_support::random_trace(rng, 50, cfg.activity_timeout_us, cfg.flow_timeout_us);
    const auto got = meter(trace, cfg, ClassLabel::Tor);
    const auto want = oracle::meter(trace, cfg.activity_timeout_us, cfg.flow_timeout_us);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t f = 0; f < got.size(); ++f) {
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        ASSERT_TRUE(oracle::close(got[f][i], want[f][i], 1e-9))
            << "trial " << trial << " flow " << f << " " << kFeatureNames[i] << ": " << got[f][i] << " vs "
            << want[f][i];
      }
    }
  }
}

TEST(FlowMeterProperties, KeyingIsDirectionSymmetric) {
  Rng rng(7);
  const auto trace = testing_support::random_trace(rng, 50, 5'000'000, 120'000'000);
  std::vector<FlowKey> keys, swapped_keys;
  for (auto p : trace) {
    keys.push_back(canonical_key(p));
    std::swap(p.src, p.dst);
    swapped_keys.push_back(canonical_key(p));
  }
  EXPECT_EQ(keys, swapped_keys);
}

TEST(FlowMeterProperties, CountsAndDurationBudget) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    MeterConfig cfg;
    const auto trace = testing_support::random_trace(rng, 50, cfg.activity_timeout_us, cfg.flow_timeout_us);
    for (const auto& flow : assemble_flows(trace, cfg)) {
      EXPECT_EQ(flow.timestamps_all.size(), flow.packet_count);
      EXPECT_EQ(flow.timestamps_fwd.size() + flow.timestamps_bwd.size(), flow.packet_count);
      const auto seg = segment_active_idle(flow.timestamps_all, cfg.activity_timeout_us);
      const double used = std::accumulate(seg.active.begin(), seg.active.end(), 0.0) +
                          std::accumulate(seg.idle.begin(), seg.idle.end(), 0.0);
      const double duration_us = static_cast<double>(flow.last_ts - flow.first_ts);
      EXPECT_LE(used, duration_us);
      const auto f = compute_features(flow, cfg, ClassLabel::Tor);
      for (std::size_t q = kFlowIatMean; q < kFeatureCount; q += 4) {
        EXPECT_LE(f[q + 3], f[q]);  // min <= mean
        EXPECT_LE(f[q], f[q + 2]);  // mean <= max
        EXPECT_GE(f[q + 1], 0.0);
      }
    }
  }
}

TEST(FlowCsv, TwentyNineColumnsAndIntegralFormatting) {
  const std::vector<PacketRecord> p{pkt(0, "10.0.0.1", 1, "10.0.0.2", 2, 40),
                                    pkt(333'333, "10.0.0.2", 2, "10.0.0.1", 1, 60)};
  std::ostringstream out;
  write_flow_csv_header(out);
  for (const auto& f : meter(p, {}, ClassLabel::NonTor)) write_flow_csv_row(out, f);
  std::istringstream lines(out.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 28);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 28);
  EXPECT_EQ(header.substr(0, 7), "src_ip,");
  EXPECT_EQ(header.substr(header.size() - 6), ",label");
  EXPECT_EQ(row.substr(0, 10), "167772161,");
  EXPECT_EQ(row.substr(row.size() - 7), ",NonTor");
  EXPECT_NE(row.find(",0.333333,"), std::string::npos);  // flow duration, 6 significant digits
}

TEST(FlowCsv, DeterministicBytes) {
  Rng a(99), b(99);
  auto render = [](Rng& rng) {
    std::ostringstream out;
    write_flow_csv_header(out);
    for (const auto& f : meter(testing_support::random_trace(rng, 50, 5'000'000, 120'000'000), {}, ClassLabel::Tor)) {
      write_flow_csv_row(out, f);
    }
    return out.str();
  };
  EXPECT_EQ(render(a), render(b));
}

TEST(MeterConfig, Validation) {
  EXPECT_NO_THROW(MeterConfig{}.validate());
  EXPECT_THROW((MeterConfig{0, 10}.validate()), UsageError);
  EXPECT_THROW((MeterConfig{20, 10}.validate()), UsageError);
}
