// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace vdsm {

// Deterministic random source. All sampling goes through hand-rolled
// transforms (Box-Muller, rejection sampling, Fisher-Yates) so streams are
// reproducible across standard library implementations; std::mt19937_64 is
// only used as the raw bit generator, which the standard pins down exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0,1).
    double uniform();
    // Uniform on [lo,hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller, two uniforms per draw, no cached spare.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // Uniform integer in [0,n), n >= 1, rejection sampled (no modulo bias).
    int uniform_int(int n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(uniform_int(i + 1))]);
        }
    }

    void fill_normal(double* out, std::int64_t n, double mean = 0.0, double stddev = 1.0);

    std::string serialize() const;
    void deserialize(const std::string& s);

    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace vdsm
