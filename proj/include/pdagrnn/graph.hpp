#pragma once

// Lattice DAGs that approximate the 4- or 8-neighbourhood grid graph of an
// image patch. Each of the four directions is a reflection of the southeast
// pattern, where vertex (i, j) depends on (i-1, j-1), (i-1, j) and (i, j-1).

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pdagrnn {

enum class Direction { southeast, southwest, northeast, northwest };

/// Fusion order of the four directional features.
inline constexpr std::array<Direction, 4> kDirections = {
    Direction::southeast, Direction::southwest, Direction::northeast, Direction::northwest};

enum class Connectivity { four, eight };

std::string_view to_string(Direction d);
std::string_view to_string(Connectivity c);
Connectivity parse_connectivity(std::string_view text);

constexpr std::size_t direction_index(Direction d) { return static_cast<std::size_t>(d); }

struct Coord {
    int row = 0;
    int col = 0;
    friend auto operator<=>(const Coord&, const Coord&) = default;
};

/// One direction's m x m lattice DAG in window-local coordinates.
///
/// `preds` is indexed by the linear vertex index `row * m + col`. The struct
/// is a plain value so that callers (and tests) may construct or mutate
/// topologies and check them with validate_topology().
struct DagTopology {
    std::size_t m = 0;
    Direction direction = Direction::southeast;
    Connectivity connectivity = Connectivity::eight;
    std::vector<Coord> order;
    std::vector<std::vector<Coord>> preds;
    Coord sink;

    std::size_t vertex_count() const { return m * m; }
    std::size_t index(Coord c) const { return static_cast<std::size_t>(c.row) * m + static_cast<std::size_t>(c.col); }
    std::size_t arc_count() const;
};

/// Arc count of a well-formed lattice DAG: 3(m-1)^2 + 2(m-1) or 2(m-1)^2 + 2(m-1).
std::size_t expected_arc_count(std::size_t m, Connectivity connectivity);

/// Maps a coordinate between the southeast frame and direction `d` (an involution).
Coord reflect(Coord c, std::size_t m, Direction d);

DagTopology build_dag(std::size_t m, Direction direction, Connectivity connectivity);

struct TopologyReport {
    bool valid = true;
    std::vector<std::string> problems;
    explicit operator bool() const { return valid; }
};

TopologyReport validate_topology(const DagTopology& dag);

/// Placement of the four m x m windows inside an n x n patch.
struct PatchDecomposition {
    std::size_t n = 0;
    std::size_t m = 0;
    std::array<Coord, 4> windows{};  // indexed by direction_index

    Coord offset(Direction d) const { return windows[direction_index(d)]; }
    Coord center() const { return {static_cast<int>((n - 1) / 2), static_cast<int>((n - 1) / 2)}; }
};

PatchDecomposition decompose_patch(std::size_t n);

/// A decomposition together with the four DAGs built over its windows.
struct PatchTopology {
    PatchDecomposition decomposition;
    std::array<DagTopology, 4> dags;

    const DagTopology& dag(Direction d) const { return dags[direction_index(d)]; }
    std::size_t n() const { return decomposition.n; }
    std::size_t m() const { return decomposition.m; }
};

PatchTopology make_patch_topology(std::size_t n, Connectivity connectivity);

}  // namespace pdagrnn
