// SPDX-License-Identifier: Apache-2.0
#include "vdsm/persistence.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace vdsm {

namespace {

constexpr char kMagic[4] = {'V', 'D', 'S', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

void put_tensor_section(std::string& out, const ParamMap& tensors) {
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) put_u32(out, static_cast<std::uint32_t>(t.dim(i)));
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const float f = static_cast<float>(t[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(out, bits);
        }
    }
}

class Cursor {
public:
    explicit Cursor(std::string data) : data_(std::move(data)) {}

    void need(size_t n) const {
        if (pos_ + n > data_.size()) throw CheckpointTruncationError("checkpoint file is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    unsigned char byte() {
        need(1);
        return static_cast<unsigned char>(data_[pos_++]);
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::string data_;
    size_t pos_ = 0;
};

ParamMap read_tensor_section(Cursor& c, const std::vector<ParamDef>& defs, const char* what) {
    const std::uint32_t count = c.u32();
    if (count != defs.size())
        throw CheckpointShapeError(std::string("checkpoint ") + what + " section holds " +
                                   std::to_string(count) + " tensors, config expects " +
                                   std::to_string(defs.size()));
    ParamMap out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = c.str();
        const std::uint32_t rank = c.u32();
        std::vector<int> shape;
        for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(c.u32()));
        Tensor t(shape);
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const std::uint32_t bits = c.u32();
            float f;
            std::memcpy(&f, &bits, sizeof f);
            t[i] = static_cast<double>(f);
        }
        out.emplace(name, std::move(t));
    }
    // Stored names/shapes must match the config-derived table exactly.
    for (const auto& def : defs) {
        auto it = out.find(def.name);
        if (it == out.end())
            throw CheckpointShapeError(std::string("checkpoint ") + what + " section is missing tensor " +
                                       def.name);
        if (it->second.shape() != def.shape)
            throw CheckpointShapeError(std::string("checkpoint tensor ") + def.name + " has shape " +
                                       it->second.shape_str() + ", config expects " +
                                       Tensor(def.shape).shape_str());
    }
    return out;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_str(out, state.cfg.serialize());
    out.push_back(state.stage == Stage::sequence ? 1 : 0);
    out.push_back(state.pretrain_complete ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(state.epochs_done_pretrain));
    put_u32(out, static_cast<std::uint32_t>(state.epochs_done_sequence));
    put_u64(out, state.adam_step);
    put_f64(out, state.anneal.lambda_z);
    put_f64(out, state.anneal.lambda_s);
    put_f64(out, state.anneal.lambda_d);
    put_f64(out, state.anneal.tau_s);
    put_u32(out, static_cast<std::uint32_t>(state.anneal.epoch));
    out.push_back(state.anneal.stage == Stage::sequence ? 1 : 0);
    put_str(out, state.rng.serialize());
    put_tensor_section(out, state.params);
    put_tensor_section(out, state.adam_m);
    put_tensor_section(out, state.adam_v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Cursor c(std::move(data));

    c.need(4);
    char magic[4];
    for (int i = 0; i < 4; ++i) magic[i] = static_cast<char>(c.byte());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointFormatError("not a checkpoint file (bad magic)");
    const std::uint32_t version = c.u32();
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                     " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");

    ModelState st;
    st.cfg = parse_config_text(c.str());
    st.cfg.validate();
    st.stage = c.byte() ? Stage::sequence : Stage::pretrain;
    st.pretrain_complete = c.byte() != 0;
    st.epochs_done_pretrain = static_cast<int>(c.u32());
    st.epochs_done_sequence = static_cast<int>(c.u32());
    st.adam_step = c.u64();
    st.anneal.lambda_z = c.f64();
    st.anneal.lambda_s = c.f64();
    st.anneal.lambda_d = c.f64();
    st.anneal.tau_s = c.f64();
    st.anneal.epoch = static_cast<int>(c.u32());
    st.anneal.stage = c.byte() ? Stage::sequence : Stage::pretrain;
    st.rng.deserialize(c.str());

    const std::vector<ParamDef> defs = all_param_defs(st.cfg);
    st.params = read_tensor_section(c, defs, "parameter");
    st.adam_m = read_tensor_section(c, defs, "first-moment");
    st.adam_v = read_tensor_section(c, defs, "second-moment");
    if (!c.at_end()) throw CheckpointFormatError("checkpoint has trailing bytes");
    return st;
}

}  // namespace vdsm
