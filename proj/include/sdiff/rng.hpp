#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>

namespace sdiff {

// splitmix64 finalizer, used to derive substream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// mt19937_64 core with hand-rolled distributions. The standard pins the
// engine output exactly but not the library distributions, so uniform /
// normal / below are implemented here to keep streams identical across
// toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t raw() { return gen_(); }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n)
    uint64_t below(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = gen_(); } while (x >= limit);
        return x % n;
    }

    // Box-Muller with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // independent stream derived from the original seed and a tag
    Rng substream(uint64_t tag) const { return Rng(mix64(seed_ ^ mix64(tag))); }

    std::string serialize() const {
        std::ostringstream os;
        os << gen_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        os << bits << ' ' << seed_;
        return os.str();
    }

    static Rng deserialize(const std::string& s) {
        std::istringstream is(s);
        Rng r(0);
        int spare_flag = 0;
        uint64_t bits = 0;
        is >> r.gen_ >> spare_flag >> bits >> r.seed_;
        r.has_spare_ = spare_flag != 0;
        std::memcpy(&r.spare_, &bits, sizeof(bits));
        return r;
    }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sdiff
