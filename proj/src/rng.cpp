#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pxf {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

RandomStream::RandomStream(uint64_t seed) : key_(mix64(seed + kGolden)), counter_(0) {}

RandomStream RandomStream::split(uint64_t lane) const {
    return RandomStream(mix64(key_ ^ mix64(lane + kGolden)), 0);
}

uint64_t RandomStream::next_u64() {
    uint64_t v = mix64(key_ ^ (counter_ * kGolden + kGolden));
    counter_ += 1;
    return v;
}

double RandomStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u in (0, 1] so the log is finite
    double u = 1.0 - uniform();
    double theta = 6.283185307179586476925286766559 * uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

uint64_t RandomStream::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("RandomStream::below: n must be positive");
    if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
    uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
        uint64_t v = next_u64() & mask;
        if (v < n) return v;
    }
}

std::vector<int> RandomStream::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
    // Partial Fisher-Yates over an index array.
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        int j = i + static_cast<int>(below(static_cast<uint64_t>(n - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    std::vector<int> out(idx.begin(), idx.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

uint64_t RandomStream::state_digest() const {
    return mix64(key_ ^ mix64(counter_));
}

}  // namespace pxf
