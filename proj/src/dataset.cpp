#include "psm/dataset.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "psm/binary_io.hpp"
#include "psm/random.hpp"

namespace psm {

SparseTransitions SparseTransitions::from_mdp(const TabularMdp& mdp, double drop_below) {
    SparseTransitions out;
    out.n_states = mdp.n_states();
    out.n_actions = mdp.n_actions();
    out.offsets.reserve(static_cast<std::size_t>(mdp.n_pairs()) + 1);
    out.offsets.push_back(0);
    const Matrix& p = mdp.transition();
    for (Eigen::Index row = 0; row < p.rows(); ++row) {
        for (Eigen::Index next = 0; next < p.cols(); ++next) {
            if (p(row, next) > drop_below) {
                out.next.push_back(static_cast<int>(next));
                out.prob.push_back(p(row, next));
            }
        }
        out.offsets.push_back(static_cast<int>(out.next.size()));
    }
    return out;
}

OfflineDataset::OfflineDataset(int n_states, int n_actions, std::vector<Transition> records)
    : n_states_(n_states), n_actions_(n_actions), records_(std::move(records)) {
    if (n_states <= 0 || n_actions <= 0) throw ValidationError("dataset: empty state or action space");
    if (records_.empty()) throw ValidationError("dataset: no records");
    counts_.assign(static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions), 0);
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& t = records_[i];
        if (t.s < 0 || t.s >= n_states || t.next < 0 || t.next >= n_states || t.a < 0 || t.a >= n_actions) {
            throw ValidationError("dataset: record " + std::to_string(i) + " out of range");
        }
        ++counts_[static_cast<std::size_t>(pair_index(t.s, t.a, n_actions))];
    }
    pair_density_.resize(static_cast<Eigen::Index>(counts_.size()));
    const double total = static_cast<double>(records_.size());
    for (std::size_t p = 0; p < counts_.size(); ++p) {
        pair_density_[static_cast<Eigen::Index>(p)] = static_cast<double>(counts_[p]) / total;
    }
}

Vector OfflineDataset::state_density() const {
    return pair_density_.reshaped(n_actions_, n_states_).colwise().sum().transpose();
}

double OfflineDataset::coverage() const {
    std::size_t covered = 0;
    for (auto c : counts_) covered += c > 0 ? 1 : 0;
    return static_cast<double>(covered) / static_cast<double>(counts_.size());
}

SparseTransitions OfflineDataset::empirical_transitions() const {
    Matrix counts = Matrix::Zero(static_cast<Eigen::Index>(counts_.size()), n_states_);
    for (const auto& t : records_) counts(pair_index(t.s, t.a, n_actions_), t.next) += 1.0;
    SparseTransitions out;
    out.n_states = n_states_;
    out.n_actions = n_actions_;
    out.offsets.push_back(0);
    for (Eigen::Index row = 0; row < counts.rows(); ++row) {
        const double total = counts.row(row).sum();
        for (Eigen::Index next = 0; next < counts.cols(); ++next) {
            if (counts(row, next) > 0.0) {
                out.next.push_back(static_cast<int>(next));
                out.prob.push_back(counts(row, next) / total);
            }
        }
        out.offsets.push_back(static_cast<int>(out.next.size()));
    }
    return out;
}

OfflineDataset build_dataset(const TabularMdp& mdp, const StochasticPolicy& collection_policy,
                             std::size_t n_transitions, std::uint64_t rng_seed) {
    if (n_transitions == 0) throw ValidationError("build_dataset: need at least one transition");
    if (collection_policy.n_states() != mdp.n_states() || collection_policy.n_actions() != mdp.n_actions()) {
        throw ValidationError("build_dataset: policy shape does not match the MDP");
    }
    Rng rng(rng_seed);
    std::vector<Transition> records(n_transitions);
    for (auto& t : records) {
        t.s = static_cast<StateIndex>(rng.uniform_index(static_cast<std::uint64_t>(mdp.n_states())));
        t.a = rng.categorical(collection_policy.probs().row(t.s));
        t.next = rng.categorical(mdp.transition().row(pair_index(t.s, t.a, mdp.n_actions())));
    }
    return OfflineDataset(mdp.n_states(), mdp.n_actions(), std::move(records));
}

void write_dataset(std::ostream& out, const OfflineDataset& dataset) {
    io::write_magic(out, "PSMD1");
    io::write_u64(out, static_cast<std::uint64_t>(dataset.n_states()));
    io::write_u64(out, static_cast<std::uint64_t>(dataset.n_actions()));
    io::write_u64(out, dataset.size());
    for (const auto& t : dataset.records()) {
        io::write_u64(out, static_cast<std::uint64_t>(t.s));
        io::write_u64(out, static_cast<std::uint64_t>(t.a));
        io::write_u64(out, static_cast<std::uint64_t>(t.next));
    }
}

OfflineDataset read_dataset(std::istream& in) {
    io::expect_magic(in, "PSMD1");
    const auto n_states = io::read_u64(in);
    const auto n_actions = io::read_u64(in);
    const auto n = io::read_u64(in);
    if (n_states > (1u << 30) || n_actions > (1u << 20) || n > (1ull << 34)) {
        throw ValidationError("PSMD1: implausible header");
    }
    std::vector<Transition> records;
    for (std::uint64_t i = 0; i < n; ++i) {
        Transition t;
        t.s = static_cast<StateIndex>(io::read_u64(in));
        t.a = static_cast<ActionIndex>(io::read_u64(in));
        t.next = static_cast<StateIndex>(io::read_u64(in));
        records.push_back(t);
    }
    return OfflineDataset(static_cast<int>(n_states), static_cast<int>(n_actions), std::move(records));
}

}  // namespace psm
