// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "vdsm/nn_util.hpp"
#include "vdsm/tensor.hpp"

namespace testpat {

// Deterministic integer-pattern sequences used to fill toy fixtures. The
// reference values frozen into the tests were produced by an independent
// implementation driven by these exact sequences.
class Gen {
public:
    Gen(long long a, long long off, long long m, long long shift, double div)
        : a_(a), off_(off), m_(m), shift_(shift), div_(div) {}

    double next() {
        const double v = static_cast<double>((g_ * a_ + off_) % m_ - shift_) / div_;
        ++g_;
        return v;
    }

    vdsm::Tensor take(std::vector<int> shape) {
        vdsm::Tensor t(std::move(shape));
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = next();
        return t;
    }

private:
    long long g_ = 0;
    long long a_, off_, m_, shift_;
    double div_;
};

inline Gen param_gen() { return Gen(7, 3, 19, 9, 10.0); }
inline Gen frame_gen() { return Gen(5, 1, 17, 0, 17.0); }
inline Gen noise_gen() { return Gen(11, 5, 9, 4, 4.0); }

// Overwrites every tensor in defs order from one continuing pattern stream.
inline vdsm::ParamMap pattern_params(const std::vector<vdsm::ParamDef>& defs) {
    Gen g = param_gen();
    vdsm::ParamMap out;
    for (const vdsm::ParamDef& d : defs) out.emplace(d.name, g.take(d.shape));
    return out;
}

}  // namespace testpat
