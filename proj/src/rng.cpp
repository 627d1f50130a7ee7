// SPDX-License-Identifier: Apache-2.0
#include "vdsm/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vdsm {

double Rng::uniform() {
    // 53 mantissa bits of the raw draw.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    // u1 in (0,1] so the log is finite.
    double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int n) {
    if (n < 1) throw std::invalid_argument("uniform_int needs n >= 1");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

void Rng::fill_normal(double* out, std::int64_t n, double mean, double stddev) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = normal(mean, stddev);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw std::runtime_error("bad rng state string");
}

}  // namespace vdsm
