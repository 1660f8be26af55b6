#include "hnlpu/fabric.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace hnlpu {

const char* to_string(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::RowBroadcast: return "row_broadcast";
    case CollectiveKind::RowReduce: return "row_reduce";
    case CollectiveKind::RowAllReduce: return "row_allreduce";
    case CollectiveKind::ColScatter: return "col_scatter";
    case CollectiveKind::ColBroadcast: return "col_broadcast";
    case CollectiveKind::ColReduce: return "col_reduce";
    case CollectiveKind::ColAllReduce: return "col_allreduce";
    case CollectiveKind::ColAllGather: return "col_allgather";
    case CollectiveKind::AllReduce: return "all_reduce";
    case CollectiveKind::AllBroadcast: return "all_broadcast";
  }
  return "unknown";
}

std::array<ChipCoord, kGroupSize> Group::members() const {
  std::array<ChipCoord, kGroupSize> out;
  for (int i = 0; i < kGroupSize; ++i) {
    switch (axis) {
      case Axis::Row: out[i] = {index, i}; break;
      case Axis::Col: out[i] = {i, index}; break;
      case Axis::All:
        throw std::logic_error("Group::members: whole-grid group has 16 members");
    }
  }
  return out;
}

std::string Group::name() const {
  switch (axis) {
    case Axis::Row: return "row" + std::to_string(index);
    case Axis::Col: return "col" + std::to_string(index);
    case Axis::All: return "all";
  }
  return "?";
}

Combine sum_combine() {
  return [](Payload& acc, const Payload& next) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += next[i];
  };
}

Combine max_combine() {
  return [](Payload& acc, const Payload& next) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::max(acc[i], next[i]);
  };
}

namespace {

void check_member(Group g, int member) {
  if (member < 0 || member >= kGroupSize) {
    throw std::invalid_argument("fabric: chip " + std::to_string(member) +
                                " outside group " + g.name());
  }
}

void check_equal_shapes(const std::array<Payload, kGroupSize>& payloads) {
  for (int i = 1; i < kGroupSize; ++i) {
    if (payloads[i].size() != payloads[0].size()) {
      throw std::invalid_argument("fabric: payload shape mismatch in group");
    }
  }
}

CollectiveKind bcast_kind(Group g) {
  return g.axis == Group::Axis::Row ? CollectiveKind::RowBroadcast
                                    : CollectiveKind::ColBroadcast;
}

CollectiveKind reduce_kind(Group g) {
  return g.axis == Group::Axis::Row ? CollectiveKind::RowReduce
                                    : CollectiveKind::ColReduce;
}

CollectiveKind allreduce_kind(Group g) {
  return g.axis == Group::Axis::Row ? CollectiveKind::RowAllReduce
                                    : CollectiveKind::ColAllReduce;
}

}  // namespace

void Fabric::record(CollectiveKind kind, Group g, std::uint64_t bytes_per_link,
                    int steps) {
  CollectiveTrace t;
  t.kind = kind;
  t.group = g.name();
  t.bytes_per_link = bytes_per_link;
  t.steps = steps;
  t.time_ns = steps * link_.latency_ns +
              static_cast<double>(bytes_per_link) /
                  link_.bandwidth_bytes_per_s * 1e9;
  traces_.push_back(std::move(t));
}

std::array<Payload, kGroupSize> Fabric::broadcast(Group g, int src_member,
                                                  const Payload& payload) {
  check_member(g, src_member);
  record(bcast_kind(g), g, payload.size() * sizeof(double), 1);
  std::array<Payload, kGroupSize> out;
  out.fill(payload);
  return out;
}

Payload Fabric::reduce(Group g, int dst_member,
                       const std::array<Payload, kGroupSize>& payloads,
                       const Combine& op) {
  check_member(g, dst_member);
  check_equal_shapes(payloads);
  record(reduce_kind(g), g, payloads[0].size() * sizeof(double), 1);
  Payload acc = payloads[0];
  for (int i = 1; i < kGroupSize; ++i) op(acc, payloads[i]);
  return acc;
}

std::array<Payload, kGroupSize> Fabric::scatter(Group g, int src_member,
                                                const Payload& payload) {
  check_member(g, src_member);
  if (payload.size() % kGroupSize != 0) {
    throw std::invalid_argument("fabric: scatter payload not divisible by 4");
  }
  const std::size_t part = payload.size() / kGroupSize;
  record(CollectiveKind::ColScatter, g, part * sizeof(double), 1);
  std::array<Payload, kGroupSize> out;
  for (int i = 0; i < kGroupSize; ++i) {
    out[i].assign(payload.begin() + i * part, payload.begin() + (i + 1) * part);
  }
  return out;
}

std::array<Payload, kGroupSize> Fabric::all_reduce4(
    Group g, const std::array<Payload, kGroupSize>& payloads,
    const Combine& op) {
  check_equal_shapes(payloads);
  record(allreduce_kind(g), g, 2 * payloads[0].size() * sizeof(double), 2);
  Payload acc = payloads[0];
  for (int i = 1; i < kGroupSize; ++i) op(acc, payloads[i]);
  std::array<Payload, kGroupSize> out;
  out.fill(acc);
  return out;
}

Payload Fabric::all_gather4(Group g,
                            const std::array<Payload, kGroupSize>& parts) {
  std::uint64_t max_part = 0;
  Payload out;
  for (const Payload& p : parts) {
    max_part = std::max<std::uint64_t>(max_part, p.size());
    out.insert(out.end(), p.begin(), p.end());
  }
  record(CollectiveKind::ColAllGather, g, max_part * sizeof(double), 1);
  return out;
}

Payload Fabric::all_reduce16(const std::array<Payload, kGridChips>& payloads,
                             const Combine& op) {
  for (int i = 1; i < kGridChips; ++i) {
    if (payloads[i].size() != payloads[0].size()) {
      throw std::invalid_argument("fabric: payload shape mismatch in all_reduce");
    }
  }
  // Schedule: column reduce to row 0 (1 step), row all-reduce across row 0
  // (2 steps), column broadcast (1 step). Each step moves the full payload
  // per active link. Values are defined as the ascending chip-id fold.
  record(CollectiveKind::AllReduce, Group::all(),
         4 * payloads[0].size() * sizeof(double), 4);
  Payload acc = payloads[0];
  for (int i = 1; i < kGridChips; ++i) op(acc, payloads[i]);
  return acc;
}

Payload Fabric::all_broadcast16(ChipCoord src, const Payload& payload) {
  if (src.row < 0 || src.row >= kGridRows || src.col < 0 || src.col >= kGridCols) {
    throw std::invalid_argument("fabric: source chip outside grid");
  }
  record(CollectiveKind::AllBroadcast, Group::all(),
         2 * payload.size() * sizeof(double), 2);
  return payload;
}

std::uint64_t Fabric::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& t : traces_) total += t.bytes_per_link;
  return total;
}

void Fabric::write_traces_csv(std::ostream& os,
                              const std::vector<CollectiveTrace>& traces) {
  os << "op,group,bytes_per_link,steps,time_ns\n";
  for (const auto& t : traces) {
    os << to_string(t.kind) << ',' << t.group << ',' << t.bytes_per_link << ','
       << t.steps << ',' << t.time_ns << '\n';
  }
}

}  // namespace hnlpu
