#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "psm/mdp.hpp"

namespace psm {

struct Transition {
    StateIndex s = 0;
    ActionIndex a = 0;
    StateIndex next = 0;
};

/// Row-compressed P(s'|s,a): entries of pair p live in [offsets[p], offsets[p+1]).
struct SparseTransitions {
    int n_states = 0;
    int n_actions = 0;
    std::vector<int> offsets;
    std::vector<int> next;
    std::vector<double> prob;

    static SparseTransitions from_mdp(const TabularMdp& mdp, double drop_below = 0.0);
};

class OfflineDataset {
public:
    OfflineDataset(int n_states, int n_actions, std::vector<Transition> records);

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    std::size_t size() const { return records_.size(); }
    const std::vector<Transition>& records() const { return records_; }

    /// Visit counts per flattened pair.
    const std::vector<std::uint64_t>& counts() const { return counts_; }
    /// rho(s,a), sums to 1.
    const Vector& pair_density() const { return pair_density_; }
    /// rho(s) = sum_a rho(s,a).
    Vector state_density() const;
    /// Fraction of (s,a) pairs with rho > 0.
    double coverage() const;
    /// Empirical P(s'|s,a) from the records; pairs never visited get no entries.
    SparseTransitions empirical_transitions() const;

private:
    int n_states_;
    int n_actions_;
    std::vector<Transition> records_;
    std::vector<std::uint64_t> counts_;
    Vector pair_density_;
};

/// i.i.d. records: s uniform over states, a from the collection policy,
/// s' from the dynamics.
OfflineDataset build_dataset(const TabularMdp& mdp, const StochasticPolicy& collection_policy,
                             std::size_t n_transitions, std::uint64_t rng_seed);

// Binary file: magic PSMD1, u64 |S|, |A|, N, then N (s, a, s') u64 triples.
void write_dataset(std::ostream& out, const OfflineDataset& dataset);
OfflineDataset read_dataset(std::istream& in);

}  // namespace psm
