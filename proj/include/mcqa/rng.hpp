#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mcqa {

// Splittable counter-based generator. Every stochastic consumer derives its
// own named stream from the run seed, so adding a consumer never perturbs
// the draws of existing ones. All arithmetic is fixed-width and portable;
// no std distribution objects are involved, so sequences are byte-identical
// across platforms.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(mix(seed ^ kInitTag)) {}

    // Child stream keyed by name; independent of draws made on the parent.
    RngStream derive(std::string_view name) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (unsigned char c : std::string_view(name)) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return RngStream(state_, mix(state_ ^ h));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;  // splitmix64
        return mix(state_);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); n must be positive
    std::size_t uniform_int(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    RngStream(std::uint64_t, std::uint64_t derived) : state_(derived) {}

    static constexpr std::uint64_t kInitTag = 0x6d63716153545231ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace mcqa
