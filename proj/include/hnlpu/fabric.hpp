#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hnlpu {

inline constexpr int kGridRows = 4;
inline constexpr int kGridCols = 4;
inline constexpr int kGridChips = kGridRows * kGridCols;
inline constexpr int kGroupSize = 4;

struct ChipCoord {
  int row = 0;
  int col = 0;
  int id() const { return row * kGridCols + col; }
  static ChipCoord from_id(int id) { return {id / kGridCols, id % kGridCols}; }
  friend bool operator==(ChipCoord a, ChipCoord b) {
    return a.row == b.row && a.col == b.col;
  }
};

/// Point-to-point link parameters; every chip has a direct link to each other
/// chip in its row and in its column.
struct LinkModel {
  double latency_ns = 100.0;
  double bandwidth_bytes_per_s = 128e9;
};

enum class CollectiveKind {
  RowBroadcast,
  RowReduce,
  RowAllReduce,
  ColScatter,
  ColBroadcast,
  ColReduce,
  ColAllReduce,
  ColAllGather,
  AllReduce,
  AllBroadcast,
};

const char* to_string(CollectiveKind kind);

/// Either one row, one column, or the whole grid.
struct Group {
  enum class Axis { Row, Col, All };
  Axis axis = Axis::Row;
  int index = 0;

  static Group row(int r) { return {Axis::Row, r}; }
  static Group col(int c) { return {Axis::Col, c}; }
  static Group all() { return {Axis::All, 0}; }

  /// Group members in ascending chip-id order (the pinned reduction order).
  std::array<ChipCoord, kGroupSize> members() const;
  std::string name() const;
};

/// Byte/step/time accounting for one collective. bytes_per_link accumulates
/// over all steps of the operation; time follows
///   steps * latency + bytes_per_link / bandwidth.
struct CollectiveTrace {
  CollectiveKind kind;
  std::string group;
  std::uint64_t bytes_per_link = 0;
  int steps = 0;
  double time_ns = 0.0;
};

using Payload = std::vector<double>;

/// Associative accumulate: acc = op(acc, next). Applied in ascending chip-id
/// order so floating-point results are reproducible.
using Combine = std::function<void(Payload& acc, const Payload& next)>;

Combine sum_combine();
Combine max_combine();

/// Deterministic simulation of the row/column fully connected fabric.
/// Delivered values depend only on the pinned ascending-id combine order;
/// the trace reflects the step schedule of the underlying topology.
class Fabric {
public:
  Fabric() = default;
  explicit Fabric(LinkModel link) : link_(link) {}

  const LinkModel& link() const { return link_; }

  /// src member's payload copied to all 4 group members, 1 step.
  std::array<Payload, kGroupSize> broadcast(Group g, int src_member,
                                            const Payload& payload);

  /// Combines the 4 member payloads at dst_member, ascending id order.
  Payload reduce(Group g, int dst_member,
                 const std::array<Payload, kGroupSize>& payloads,
                 const Combine& op);

  /// Splits src's payload into 4 contiguous parts, part i to member i.
  std::array<Payload, kGroupSize> scatter(Group g, int src_member,
                                          const Payload& payload);

  /// reduce then broadcast; 2 steps, identical result on all members.
  std::array<Payload, kGroupSize> all_reduce4(
      Group g, const std::array<Payload, kGroupSize>& payloads,
      const Combine& op);

  /// Concatenates member parts in ascending member order; every member
  /// receives the same concatenation.
  Payload all_gather4(Group g, const std::array<Payload, kGroupSize>& parts);

  /// Grid-wide reduction over all 16 chips: column reduce to row 0, row
  /// all-reduce, column broadcast; 4 steps. Values equal the ascending
  /// chip-id fold.
  Payload all_reduce16(const std::array<Payload, kGridChips>& payloads,
                       const Combine& op);

  /// src chip's payload delivered to all 16 chips: row broadcast along the
  /// source row, then column broadcasts; 2 steps.
  Payload all_broadcast16(ChipCoord src, const Payload& payload);

  const std::vector<CollectiveTrace>& traces() const { return traces_; }
  void clear_traces() { traces_.clear(); }
  std::uint64_t total_bytes() const;

  static void write_traces_csv(std::ostream& os,
                               const std::vector<CollectiveTrace>& traces);

private:
  void record(CollectiveKind kind, Group g, std::uint64_t bytes_per_link,
              int steps);

  LinkModel link_;
  std::vector<CollectiveTrace> traces_;
};

}  // namespace hnlpu
