#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "psm/mdp.hpp"

namespace psm {

using Cell = std::pair<int, int>;  // (row, col)

enum GridAction : int { kUp = 0, kRight = 1, kDown = 2, kLeft = 3, kStay = 4 };
inline constexpr int kGridActions = 5;

struct GridSpec {
    int width = 0;
    int height = 0;
    std::set<Cell> walls;
    std::vector<Cell> doorways;
    double slip = 0.0;  // probability that a uniformly random action runs instead
};

/// Grid MDP plus the cell <-> state bookkeeping. States are the open cells in
/// row-major order.
struct GridWorld {
    GridSpec spec;
    TabularMdp mdp;
    std::vector<Cell> cells;          // state -> cell
    std::vector<int> state_of_cell;   // row*width+col -> state, -1 for walls

    int state_at(int row, int col) const;
};

/// Parses '#' (wall) / '.' (open) rows. Ragged or empty layouts are rejected.
GridSpec parse_grid_layout(const std::string& text);
std::string format_grid_layout(const GridSpec& spec);

GridSpec open_grid_spec(int height, int width);
/// Four rooms separated by walls with one doorway between each adjacent pair.
/// size 11 reproduces the classic layout (104 open cells).
GridSpec four_room_spec(int size);

/// Actions {up, right, down, left, stay}; blocked moves leave the agent in
/// place. Throws ValidationError when the open cells are not connected or a
/// doorway is walled.
GridWorld build_gridworld(const GridSpec& spec, double gamma);
GridWorld build_four_room(int size, double gamma);

/// Uniform over states (open cells), deterministic per seed.
StateIndex sample_goal(const TabularMdp& mdp, std::uint64_t rng_seed);
std::vector<StateIndex> sample_goals(const TabularMdp& mdp, int count, std::uint64_t rng_seed);

/// Breadth-first step distances between open cells of a grid world.
std::vector<int> grid_distances_from(const GridWorld& world, StateIndex source);
int grid_diameter(const GridWorld& world);

}  // namespace psm
