#include "pdagrnn/graph.hpp"

#include "pdagrnn/errors.hpp"

#include <set>
#include <sstream>

namespace pdagrnn {

std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::southeast: return "southeast";
        case Direction::southwest: return "southwest";
        case Direction::northeast: return "northeast";
        case Direction::northwest: return "northwest";
    }
    return "?";
}

std::string_view to_string(Connectivity c) {
    return c == Connectivity::eight ? "eight" : "four";
}

Connectivity parse_connectivity(std::string_view text) {
    if (text == "eight" || text == "8") return Connectivity::eight;
    if (text == "four" || text == "4") return Connectivity::four;
    throw ValidationError("unknown connectivity '" + std::string(text) + "' (expected four or eight)");
}

std::size_t DagTopology::arc_count() const {
    std::size_t total = 0;
    for (const auto& p : preds) total += p.size();
    return total;
}

std::size_t expected_arc_count(std::size_t m, Connectivity connectivity) {
    if (m == 0) return 0;
    const std::size_t k = m - 1;
    return (connectivity == Connectivity::eight ? 3 : 2) * k * k + 2 * k;
}

Coord reflect(Coord c, std::size_t m, Direction d) {
    const int last = static_cast<int>(m) - 1;
    const bool flip_rows = d == Direction::northeast || d == Direction::northwest;
    const bool flip_cols = d == Direction::southwest || d == Direction::northwest;
    return {flip_rows ? last - c.row : c.row, flip_cols ? last - c.col : c.col};
}

DagTopology build_dag(std::size_t m, Direction direction, Connectivity connectivity) {
    if (m == 0) throw ValidationError("build_dag: memory length m must be >= 1");

    DagTopology dag;
    dag.m = m;
    dag.direction = direction;
    dag.connectivity = connectivity;
    dag.order.reserve(m * m);
    dag.preds.assign(m * m, {});

    const int side = static_cast<int>(m);
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            // (i, j) is in the southeast frame; everything stored is reflected.
            const Coord v = reflect({i, j}, m, direction);
            dag.order.push_back(v);
            auto& p = dag.preds[dag.index(v)];
            if (connectivity == Connectivity::eight && i > 0 && j > 0)
                p.push_back(reflect({i - 1, j - 1}, m, direction));
            if (i > 0) p.push_back(reflect({i - 1, j}, m, direction));
            if (j > 0) p.push_back(reflect({i, j - 1}, m, direction));
        }
    }
    dag.sink = dag.order.back();
    return dag;
}

namespace {

bool in_window(Coord c, std::size_t m) {
    return c.row >= 0 && c.col >= 0 && static_cast<std::size_t>(c.row) < m && static_cast<std::size_t>(c.col) < m;
}

std::string fmt(Coord c) {
    std::ostringstream os;
    os << '(' << c.row << ',' << c.col << ')';
    return os.str();
}

// Iterative three-colour DFS over the predecessor arcs.
bool has_cycle(const DagTopology& dag) {
    const std::size_t count = dag.preds.size();
    std::vector<int> colour(count, 0);
    for (std::size_t start = 0; start < count; ++start) {
        if (colour[start] != 0) continue;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
        colour[start] = 1;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            if (next < dag.preds[v].size()) {
                const std::size_t w = dag.index(dag.preds[v][next++]);
                if (colour[w] == 1) return true;
                if (colour[w] == 0) {
                    colour[w] = 1;
                    stack.emplace_back(w, 0);
                }
            } else {
                colour[v] = 2;
                stack.pop_back();
            }
        }
    }
    return false;
}

}  // namespace

TopologyReport validate_topology(const DagTopology& dag) {
    TopologyReport report;
    auto fail = [&](std::string msg) {
        report.valid = false;
        report.problems.push_back(std::move(msg));
    };

    const std::size_t m = dag.m;
    if (m == 0) {
        fail("m is zero");
        return report;
    }
    if (dag.order.size() != m * m) fail("order has " + std::to_string(dag.order.size()) + " vertices, expected " + std::to_string(m * m));
    if (dag.preds.size() != m * m) {
        fail("predecessor table has " + std::to_string(dag.preds.size()) + " entries, expected " + std::to_string(m * m));
        return report;
    }

    std::vector<long> position(m * m, -1);
    for (std::size_t k = 0; k < dag.order.size(); ++k) {
        const Coord v = dag.order[k];
        if (!in_window(v, m)) {
            fail("vertex " + fmt(v) + " outside the window");
            continue;
        }
        if (position[dag.index(v)] >= 0) fail("vertex " + fmt(v) + " appears twice in order");
        position[dag.index(v)] = static_cast<long>(k);
    }

    const std::size_t max_in = dag.connectivity == Connectivity::eight ? 3 : 2;
    bool preds_in_range = true;
    std::vector<std::size_t> out_degree(m * m, 0);
    for (std::size_t v = 0; v < m * m; ++v) {
        const Coord vc{static_cast<int>(v / m), static_cast<int>(v % m)};
        if (dag.preds[v].size() > max_in) fail("vertex " + fmt(vc) + " has in-degree " + std::to_string(dag.preds[v].size()));
        std::set<Coord> seen;
        for (const Coord p : dag.preds[v]) {
            if (!in_window(p, m)) {
                fail("predecessor " + fmt(p) + " of " + fmt(vc) + " outside the window");
                preds_in_range = false;
                continue;
            }
            if (!seen.insert(p).second) fail("duplicate arc " + fmt(p) + "->" + fmt(vc));
            ++out_degree[dag.index(p)];
            const long pp = position[dag.index(p)];
            const long pv = position[v];
            if (pp < 0 || pv < 0 || pp >= pv) fail("predecessor " + fmt(p) + " does not precede " + fmt(vc));
        }
    }

    if (dag.order.empty() || dag.order.back() != dag.sink) fail("sink is not the last vertex of order");
    if (in_window(dag.sink, m) && out_degree[dag.index(dag.sink)] != 0) fail("sink " + fmt(dag.sink) + " has successors");

    if (preds_in_range && has_cycle(dag)) fail("arc set contains a cycle");

    const std::size_t arcs = dag.arc_count();
    const std::size_t want = expected_arc_count(m, dag.connectivity);
    if (arcs != want) fail("arc count " + std::to_string(arcs) + " != expected " + std::to_string(want));

    return report;
}

PatchDecomposition decompose_patch(std::size_t n) {
    if (n == 0 || n % 2 == 0) throw ValidationError("decompose_patch: patch side must be odd and positive, got " + std::to_string(n));
    PatchDecomposition d;
    d.n = n;
    d.m = (n + 1) / 2;
    const int half = static_cast<int>((n - 1) / 2);
    d.windows[direction_index(Direction::southeast)] = {0, 0};
    d.windows[direction_index(Direction::southwest)] = {0, half};
    d.windows[direction_index(Direction::northeast)] = {half, 0};
    d.windows[direction_index(Direction::northwest)] = {half, half};
    return d;
}

PatchTopology make_patch_topology(std::size_t n, Connectivity connectivity) {
    PatchTopology t;
    t.decomposition = decompose_patch(n);
    for (Direction d : kDirections) t.dags[direction_index(d)] = build_dag(t.decomposition.m, d, connectivity);
    return t;
}

}  // namespace pdagrnn
