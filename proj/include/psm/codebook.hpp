#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psm/mdp.hpp"

namespace psm {

/// SplitMix64 output finalizer (Steele, Lea & Flood constants).
constexpr std::uint64_t splitmix64_mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

inline constexpr std::uint64_t kSplitMixIncrement = 0x9E3779B97F4A7C15ULL;

/// Identifier stored alongside learned models so seeds stay interpretable.
inline constexpr const char* kCodebookHashSpec =
    "splitmix64-fmix:bf58476d1ce4e5b9,94d049bb133111eb;action=fmix(z+fmix(s))%A";

struct LatentSeed {
    std::uint64_t z = 0;
    friend bool operator==(const LatentSeed&, const LatentSeed&) = default;
};

/// Seed-indexed family of deterministic policies: the action at state s is a
/// pure function of (z, s). Bias from the final modulo is below 2^-60.
class PolicyCodebook {
public:
    explicit PolicyCodebook(int n_actions);

    int n_actions() const { return n_actions_; }
    const std::string& hash_spec() const { return hash_spec_; }

    ActionIndex action(LatentSeed seed, StateIndex s) const {
        const std::uint64_t h = splitmix64_mix(seed.z + splitmix64_mix(static_cast<std::uint64_t>(s)));
        return static_cast<ActionIndex>(h % static_cast<std::uint64_t>(n_actions_));
    }

    std::vector<int> actions(LatentSeed seed, int n_states) const;
    StochasticPolicy policy(LatentSeed seed, const TabularMdp& mdp) const;

private:
    int n_actions_;
    std::string hash_spec_;
};

ActionIndex codebook_action(const PolicyCodebook& cb, LatentSeed z, StateIndex s);
StochasticPolicy codebook_policy(const PolicyCodebook& cb, LatentSeed z, const TabularMdp& mdp);

/// Counter-based stream: seed_i = fmix(rng_seed + (i+1) * golden_gamma), the
/// SplitMix64 sequence started at rng_seed.
std::vector<LatentSeed> sample_seeds(std::size_t count, std::uint64_t rng_seed);

}  // namespace psm
