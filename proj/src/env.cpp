#include "psm/env.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "psm/random.hpp"

namespace psm {

namespace {

constexpr int kRowStep[kGridActions] = {-1, 0, 1, 0, 0};
constexpr int kColStep[kGridActions] = {0, 1, 0, -1, 0};

bool inside(const GridSpec& spec, int row, int col) {
    return row >= 0 && row < spec.height && col >= 0 && col < spec.width;
}

}  // namespace

int GridWorld::state_at(int row, int col) const {
    if (!inside(spec, row, col)) return -1;
    return state_of_cell[static_cast<std::size_t>(row * spec.width + col)];
}

GridSpec parse_grid_layout(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(line);
    }
    if (rows.empty()) throw ValidationError("grid layout: no rows");
    GridSpec spec;
    spec.height = static_cast<int>(rows.size());
    spec.width = static_cast<int>(rows.front().size());
    for (int r = 0; r < spec.height; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (static_cast<int>(row.size()) != spec.width) {
            throw ValidationError("grid layout: ragged row " + std::to_string(r));
        }
        for (int c = 0; c < spec.width; ++c) {
            if (row[static_cast<std::size_t>(c)] == '#') {
                spec.walls.insert({r, c});
            } else if (row[static_cast<std::size_t>(c)] != '.') {
                throw ValidationError("grid layout: unexpected character in row " + std::to_string(r));
            }
        }
    }
    return spec;
}

std::string format_grid_layout(const GridSpec& spec) {
    std::string out;
    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) out += spec.walls.count({r, c}) ? '#' : '.';
        out += '\n';
    }
    return out;
}

GridSpec open_grid_spec(int height, int width) {
    if (height <= 0 || width <= 0) throw ValidationError("open grid: dimensions must be positive");
    GridSpec spec;
    spec.height = height;
    spec.width = width;
    return spec;
}

GridSpec four_room_spec(int size) {
    if (size < 7) throw ValidationError("four room: size must be at least 7");
    GridSpec spec = open_grid_spec(size, size);
    const int mid = size / 2;
    const int left_row = mid;       // horizontal wall of the left rooms
    const int right_row = mid + 1;  // horizontal wall of the right rooms
    for (int r = 0; r < size; ++r) spec.walls.insert({r, mid});
    for (int c = 0; c < mid; ++c) spec.walls.insert({left_row, c});
    for (int c = mid + 1; c < size; ++c) spec.walls.insert({right_row, c});
    spec.walls.insert({right_row, mid});
    spec.doorways = {
        {left_row / 2, mid},
        {size - 2, mid},
        {left_row, std::max(1, mid / 4)},
        {right_row, mid + 1 + (size - mid - 1) / 2},
    };
    for (const auto& door : spec.doorways) spec.walls.erase(door);
    return spec;
}

GridWorld build_gridworld(const GridSpec& spec, double gamma) {
    if (spec.width <= 0 || spec.height <= 0) throw ValidationError("gridworld: empty grid");
    if (!(spec.slip >= 0.0 && spec.slip <= 1.0)) throw ValidationError("gridworld: slip outside [0,1]");
    for (const auto& door : spec.doorways) {
        if (spec.walls.count(door)) throw ValidationError("gridworld: doorway cell is a wall");
    }
    std::vector<Cell> cells;
    std::vector<int> state_of_cell(static_cast<std::size_t>(spec.width * spec.height), -1);
    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            if (spec.walls.count({r, c})) continue;
            state_of_cell[static_cast<std::size_t>(r * spec.width + c)] = static_cast<int>(cells.size());
            cells.push_back({r, c});
        }
    }
    if (cells.empty()) throw ValidationError("gridworld: no open cells");
    const int n_states = static_cast<int>(cells.size());

    auto successor = [&](int state, int action) {
        const auto [r, c] = cells[static_cast<std::size_t>(state)];
        const int nr = r + kRowStep[action];
        const int nc = c + kColStep[action];
        if (!inside(spec, nr, nc)) return state;
        const int next = state_of_cell[static_cast<std::size_t>(nr * spec.width + nc)];
        return next < 0 ? state : next;
    };

    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(n_states) * kGridActions, n_states);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < kGridActions; ++a) {
            const auto row = pair_index(s, a, kGridActions);
            p(row, successor(s, a)) += 1.0 - spec.slip;
            for (int other = 0; other < kGridActions; ++other) {
                p(row, successor(s, other)) += spec.slip / kGridActions;
            }
        }
    }

    GridWorld world{spec, TabularMdp(n_states, kGridActions, std::move(p), gamma), std::move(cells),
                    std::move(state_of_cell)};
    const auto reach = grid_distances_from(world, 0);
    if (std::any_of(reach.begin(), reach.end(), [](int d) { return d < 0; })) {
        throw ValidationError("gridworld: open cells are not connected");
    }
    return world;
}

GridWorld build_four_room(int size, double gamma) { return build_gridworld(four_room_spec(size), gamma); }

StateIndex sample_goal(const TabularMdp& mdp, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    return static_cast<StateIndex>(rng.uniform_index(static_cast<std::uint64_t>(mdp.n_states())));
}

std::vector<StateIndex> sample_goals(const TabularMdp& mdp, int count, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    std::vector<StateIndex> goals(static_cast<std::size_t>(count));
    for (auto& g : goals) g = static_cast<StateIndex>(rng.uniform_index(static_cast<std::uint64_t>(mdp.n_states())));
    return goals;
}

std::vector<int> grid_distances_from(const GridWorld& world, StateIndex source) {
    const auto n = world.cells.size();
    std::vector<int> dist(n, -1);
    std::deque<int> frontier{source};
    dist[static_cast<std::size_t>(source)] = 0;
    while (!frontier.empty()) {
        const int s = frontier.front();
        frontier.pop_front();
        const auto [r, c] = world.cells[static_cast<std::size_t>(s)];
        for (int a = 0; a < kGridActions; ++a) {
            const int next = world.state_at(r + kRowStep[a], c + kColStep[a]);
            if (next < 0 || dist[static_cast<std::size_t>(next)] >= 0) continue;
            dist[static_cast<std::size_t>(next)] = dist[static_cast<std::size_t>(s)] + 1;
            frontier.push_back(next);
        }
    }
    return dist;
}

int grid_diameter(const GridWorld& world) {
    int diameter = 0;
    for (std::size_t s = 0; s < world.cells.size(); ++s) {
        const auto dist = grid_distances_from(world, static_cast<StateIndex>(s));
        diameter = std::max(diameter, *std::max_element(dist.begin(), dist.end()));
    }
    return diameter;
}

}  // namespace psm
