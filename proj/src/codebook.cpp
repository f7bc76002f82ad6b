#include "psm/codebook.hpp"

namespace psm {

PolicyCodebook::PolicyCodebook(int n_actions) : n_actions_(n_actions), hash_spec_(kCodebookHashSpec) {
    if (n_actions <= 0) throw ValidationError("PolicyCodebook: n_actions must be positive");
}

std::vector<int> PolicyCodebook::actions(LatentSeed seed, int n_states) const {
    std::vector<int> out(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) out[static_cast<std::size_t>(s)] = action(seed, s);
    return out;
}

StochasticPolicy PolicyCodebook::policy(LatentSeed seed, const TabularMdp& mdp) const {
    if (mdp.n_actions() != n_actions_) throw ValidationError("PolicyCodebook: action count mismatch");
    return StochasticPolicy::from_actions(actions(seed, mdp.n_states()), n_actions_);
}

ActionIndex codebook_action(const PolicyCodebook& cb, LatentSeed z, StateIndex s) {
    if (s < 0) throw ValidationError("codebook_action: negative state");
    return cb.action(z, s);
}

StochasticPolicy codebook_policy(const PolicyCodebook& cb, LatentSeed z, const TabularMdp& mdp) {
    return cb.policy(z, mdp);
}

std::vector<LatentSeed> sample_seeds(std::size_t count, std::uint64_t rng_seed) {
    if (count == 0) throw ValidationError("sample_seeds: count must be at least 1");
    std::vector<LatentSeed> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i].z = splitmix64_mix(rng_seed + (static_cast<std::uint64_t>(i) + 1) * kSplitMixIncrement);
    }
    return out;
}

}  // namespace psm
