#ifndef PXF_RNG_HPP
#define PXF_RNG_HPP

#include <cstdint>
#include <vector>

namespace pxf {

// Splittable counter-based random stream.
//
// Each draw hashes (key, counter) with the SplitMix64 finalizer and advances
// the counter; the state is two 64-bit words and never touches global state.
// split(lane) derives an independent child stream by hashing the parent key
// with the lane index, so worker streams can be handed out deterministically.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed);

    RandomStream split(uint64_t lane) const;

    uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();

    // Standard normal via Box-Muller (the spare draw is cached).
    double normal();

    // Uniform integer in [0, n), unbiased (bitmask rejection).
    uint64_t below(uint64_t n);

    // k distinct indices drawn uniformly from [0, n), returned sorted.
    std::vector<int> sample_without_replacement(int n, int k);

    bool bernoulli(double p) { return uniform() < p; }

    // Order-independent digest of the current state, for checkpoint metadata.
    uint64_t state_digest() const;

private:
    RandomStream(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}

    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pxf

#endif
