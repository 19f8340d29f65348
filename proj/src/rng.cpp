#include "tailnet/rng.hpp"

#include "tailnet/errors.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace tailnet {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (0xa0761d6478bd642full * (stream + 1));
    for (auto& s : state_) s = splitmix64(x);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_below(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::uniform_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // rejection zone for unbiased draw
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

void Rng::save(std::ostream& out) const {
    for (auto s : state_) out << s << ' ';
    out << has_spare_ << ' ';
    out.write(reinterpret_cast<const char*>(&spare_), sizeof(spare_));
}

void Rng::load(std::istream& in) {
    Rng tmp(0);
    for (auto& s : tmp.state_) in >> s;
    in >> tmp.has_spare_;
    in.ignore(1);
    in.read(reinterpret_cast<char*>(&tmp.spare_), sizeof(tmp.spare_));
    if (!in) throw CheckpointError("Rng::load: truncated stream");
    *this = tmp;
}

bool Rng::operator==(const Rng& other) const {
    for (int i = 0; i < 4; ++i)
        if (state_[i] != other.state_[i]) return false;
    return has_spare_ == other.has_spare_ && (!has_spare_ || spare_ == other.spare_);
}

}  // namespace tailnet
