#ifndef HF_RNG_HPP
#define HF_RNG_HPP

#include <cstdint>
#include <vector>

namespace hf {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic counter-based RNG. The whole state is two words, so trainer
// checkpoints can carry it verbatim and resume exactly.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        // Decorrelate (seed, stream) pairs before use.
        std::uint64_t s = seed;
        state_ = detail::splitmix64(s);
        s = seed ^ (0xd1b54a32d192ed03ULL + stream * 0x2545f4914f6cdd1dULL);
        state_ ^= detail::splitmix64(s);
        inc_ = (stream << 1) | 1ULL;
        next_u64();
    }

    std::uint64_t next_u64() {
        state_ += inc_;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 usable bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is far below anything observable
    // at the sample counts used here and keeps the draw count fixed.
    std::uint64_t uniform_int(std::uint64_t n) { return n ? next_u64() % n : 0; }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(uniform_int(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    // Child stream for per-record generation; pure function of (parent seed material, id).
    Rng fork(std::uint64_t id) const {
        Rng child;
        std::uint64_t s = state_ ^ (id * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
        child.state_ = detail::splitmix64(s);
        child.inc_ = ((inc_ ^ (id << 1)) | 1ULL);
        child.next_u64();
        return child;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t state() const { return state_; }
    std::uint64_t increment() const { return inc_; }
    void restore(std::uint64_t state, std::uint64_t increment) {
        state_ = state;
        inc_ = increment | 1ULL;
    }

private:
    std::uint64_t state_ = 0x853c49e6748fea9bULL;
    std::uint64_t inc_ = 0xda3e39cb94b95bdbULL;
};

}  // namespace hf

#endif  // HF_RNG_HPP
