// SPDX-License-Identifier: Apache-2.0
#include "vdsm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "vdsm/parallel.hpp"

namespace vdsm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Reference period of the slow pendulum in frames; speed k swings at
// (k+1) times the base rate so every speed completes an integer number of
// periods inside the default sequence length.
constexpr int kBasePeriod = 16;

struct Rgb {
    double r, g, b;
};

// Evenly spaced hues, fixed saturation/value, so any identity count yields
// visually distinct colors.
Rgb palette_color(int i, int n) {
    const double h = 6.0 * static_cast<double>(i) / static_cast<double>(n);
    const double s = 0.85, v = 0.95;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

// Distance from point to segment [a,b].
double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double u = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    u = std::min(1.0, std::max(0.0, u));
    const double cx = ax + u * dx, cy = ay + u * dy;
    return std::hypot(px - cx, py - cy);
}

void render_pendulum_frame(Tensor& frames, int t_index, int F, const Rgb& color, double theta) {
    const double px = 0.5 * F, py = 0.25 * F;
    const double rod_len = 0.45 * F;
    const double bob_r = 0.09 * F;
    const double rod_r = 0.035 * F;
    const double bx = px + rod_len * std::sin(theta);
    const double by = py + rod_len * std::cos(theta);
    const double chan[3] = {color.r, color.g, color.b};
    double* base = frames.data() + static_cast<std::int64_t>(t_index) * 3 * F * F;
    for (int y = 0; y < F; ++y) {
        for (int x = 0; x < F; ++x) {
            const double cx = x + 0.5, cy = y + 0.5;
            const double d_rod = segment_distance(cx, cy, px, py, bx, by) - rod_r;
            const double d_bob = std::hypot(cx - bx, cy - by) - bob_r;
            const double alpha = clamp01(0.5 - std::min(d_rod, d_bob));
            if (alpha <= 0.0) continue;
            for (int c = 0; c < 3; ++c) base[(static_cast<std::int64_t>(c) * F + y) * F + x] = alpha * chan[c];
        }
    }
}

}  // namespace

// Procedural square glyph bitmaps, values in {0,1}.
Tensor glyph_bitmap(int shape, int G) {
    if (shape < 0 || shape > 7) throw std::invalid_argument("glyph_bitmap: shape index out of range");
    if (G < 2) throw std::invalid_argument("glyph_bitmap: glyph side must be >= 2");
    Tensor g({G, G});
    const double c = 0.5 * (G - 1);
    const double r = 0.5 * G;
    for (int y = 0; y < G; ++y) {
        for (int x = 0; x < G; ++x) {
            const double dx = x - c, dy = y - c;
            bool on = false;
            switch (shape) {
                case 0:  // filled square
                    on = std::abs(dx) <= r - 1 && std::abs(dy) <= r - 1;
                    break;
                case 1:  // plus
                    on = std::abs(dx) <= 0.18 * G || std::abs(dy) <= 0.18 * G;
                    break;
                case 2:  // diamond
                    on = std::abs(dx) + std::abs(dy) <= r - 0.5;
                    break;
                case 3:  // ring
                    on = std::hypot(dx, dy) <= r - 0.5 && std::hypot(dx, dy) >= 0.45 * r;
                    break;
                case 4:  // diagonal cross
                    on = std::abs(dx - dy) <= 0.22 * G || std::abs(dx + dy) <= 0.22 * G;
                    break;
                case 5:  // triangle
                    on = dy >= -r + 1 && std::abs(dx) <= (dy + r) * 0.5 && dy <= r - 1;
                    break;
                case 6:  // horizontal bars
                    on = std::abs(dy) >= 0.2 * G && std::abs(dy) <= 0.45 * G && std::abs(dx) <= r - 1;
                    break;
                default:  // checker
                    on = ((x / 2) + (y / 2)) % 2 == 0;
                    break;
            }
            g.at(y, x) = on ? 1.0 : 0.0;
        }
    }
    return g;
}

int glyph_size(int frame_size) { return std::max(6, frame_size / 3); }

namespace {

double reflect(double u, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) return lo;
    const double period = 2.0 * span;
    double m = std::fmod(u - lo, period);
    if (m < 0.0) m += period;
    return lo + (m <= span ? m : period - m);
}

void splat_glyph(Tensor& frames, int t_index, int F, const Tensor& glyph, double x, double y) {
    const int G = glyph.dim(0);
    double* base = frames.data() + static_cast<std::int64_t>(t_index) * F * F;
    for (int i = 0; i < G; ++i) {
        for (int j = 0; j < G; ++j) {
            const double v = glyph.at(i, j);
            if (v == 0.0) continue;
            const double ty = y + i, tx = x + j;
            const int y0 = static_cast<int>(std::floor(ty)), x0 = static_cast<int>(std::floor(tx));
            const double fy = ty - y0, fx = tx - x0;
            const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
            const int yy[4] = {y0, y0, y0 + 1, y0 + 1};
            const int xx[4] = {x0, x0 + 1, x0, x0 + 1};
            for (int k = 0; k < 4; ++k) {
                if (yy[k] < 0 || yy[k] >= F || xx[k] < 0 || xx[k] >= F) continue;
                base[static_cast<std::int64_t>(yy[k]) * F + xx[k]] += v * w[k];
            }
        }
    }
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(F) * F; ++i) base[i] = clamp01(base[i]);
}

// ---------------------------------------------------------------- binary io
void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string("dataset: truncated while reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    write_u32(os, static_cast<std::uint32_t>(bits));
    write_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

double read_f64(std::istream& is, const char* what) {
    const std::uint64_t lo = read_u32(is, what);
    const std::uint64_t hi = read_u32(is, what);
    const std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string read_str(std::istream& is, const char* what) {
    const std::uint32_t n = read_u32(is, what);
    if (n > (1u << 20)) throw std::runtime_error(std::string("dataset: implausible string length in ") + what);
    std::string s(n, '\0');
    if (!is.read(s.data(), n))
        throw std::runtime_error(std::string("dataset: truncated while reading ") + what);
    return s;
}

unsigned long long mix_seed(unsigned long long seed, unsigned long long salt) {
    unsigned long long x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    return x;
}

}  // namespace

std::pair<double, double> pendulum_bob_center(int frame_size, double omega, double phi0, int t) {
    const double theta = (kTwoPi / 8.0) * std::sin(omega * t + phi0);  // A = 45 degrees
    const double px = 0.5 * frame_size, py = 0.25 * frame_size;
    const double rod_len = 0.45 * frame_size;
    return {px + rod_len * std::sin(theta), py + rod_len * std::cos(theta)};
}

Dataset gen_pendulum(int n_colors, int n_speeds, int T, int count, int frame_size,
                     unsigned long long seed, int threads) {
    if (n_colors < 2 || n_speeds < 2 || T < 2 || count < 1 || frame_size < 8)
        throw std::invalid_argument("gen_pendulum: invalid counts");
    Dataset ds;
    ds.kind = "pendulum";
    ds.frame_channels = 3;
    ds.frame_size = frame_size;
    ds.seq_len = T;
    ds.n_identities = n_colors;
    ds.n_actions = n_speeds;
    for (int i = 0; i < n_colors; ++i) ds.identity_names.push_back("color" + std::to_string(i));
    for (int k = 0; k < n_speeds; ++k) ds.action_names.push_back("speed" + std::to_string(k));

    // All randomness is drawn up front in sequence order so the rendering
    // pass can run on any thread count without changing the output.
    Rng rng(seed);
    for (int n = 0; n < count; ++n) {
        LabeledSequence seq;
        seq.identity_label = rng.uniform_int(n_colors);
        seq.action_label = rng.uniform_int(n_speeds);
        const double omega = kTwoPi * (seq.action_label + 1) / kBasePeriod;
        const double phi0 = rng.uniform(0.0, kTwoPi);
        ds.sequences.push_back(std::move(seq));
        ds.pendulum_params.push_back(PendulumParams{omega, phi0});
    }
    parallel_for(count, threads, [&](int n) {
        LabeledSequence& seq = ds.sequences[static_cast<size_t>(n)];
        const PendulumParams& pp = ds.pendulum_params[static_cast<size_t>(n)];
        const Rgb color = palette_color(seq.identity_label, n_colors);
        seq.frames = Tensor({T, 3, frame_size, frame_size});
        for (int t = 0; t < T; ++t) {
            const double theta = (kTwoPi / 8.0) * std::sin(pp.omega * t + pp.phi0);
            render_pendulum_frame(seq.frames, t, frame_size, color, theta);
        }
    });
    return ds;
}

std::pair<double, double> shape_position(const ShapeTrajectory& traj, int t) {
    switch (traj.motion) {
        case 0:
            return {reflect(traj.x0 + traj.speed * t, traj.lo, traj.hi), traj.y0};
        case 1:
            return {traj.x0, reflect(traj.y0 + traj.speed * t, traj.lo, traj.hi)};
        case 2:
            return {reflect(traj.x0 + traj.speed * t, traj.lo, traj.hi),
                    reflect(traj.y0 + traj.speed * t, traj.lo, traj.hi)};
        case 3: {
            const double c = 0.5 * (traj.lo + traj.hi);
            const double r = std::max(2.0, 0.5 * (traj.hi - traj.lo) - 1.0);
            return {c + r * std::cos(traj.speed * t + traj.phase),
                    c + r * std::sin(traj.speed * t + traj.phase)};
        }
        default:
            throw std::invalid_argument("shape_position: unknown motion");
    }
}

Dataset gen_moving_shapes(int n_shapes, int n_motions, int T, int count, int frame_size,
                          unsigned long long seed, int threads) {
    if (n_shapes < 2 || n_shapes > 8 || n_motions < 2 || n_motions > 4 || T < 2 || count < 1 ||
        frame_size < 16)
        throw std::invalid_argument("gen_moving_shapes: invalid counts");
    static const char* kShapeNames[8] = {"square", "plus", "diamond", "ring",
                                         "cross", "triangle", "bars", "checker"};
    static const char* kMotionNames[4] = {"horizontal", "vertical", "diagonal", "circular"};
    Dataset ds;
    ds.kind = "shapes";
    ds.frame_channels = 1;
    ds.frame_size = frame_size;
    ds.seq_len = T;
    ds.n_identities = n_shapes;
    ds.n_actions = n_motions;
    for (int i = 0; i < n_shapes; ++i) ds.identity_names.push_back(kShapeNames[i]);
    for (int k = 0; k < n_motions; ++k) ds.action_names.push_back(kMotionNames[k]);

    const int G = glyph_size(frame_size);
    Rng rng(seed);
    for (int n = 0; n < count; ++n) {
        LabeledSequence seq;
        seq.identity_label = rng.uniform_int(n_shapes);
        seq.action_label = rng.uniform_int(n_motions);
        ShapeTrajectory traj;
        traj.motion = seq.action_label;
        traj.lo = 0.0;
        traj.hi = static_cast<double>(frame_size - G);
        traj.x0 = rng.uniform(traj.lo, traj.hi);
        traj.y0 = rng.uniform(traj.lo, traj.hi);
        traj.speed = traj.motion == 3 ? rng.uniform(0.25, 0.55) : rng.uniform(1.5, 3.0);
        traj.phase = rng.uniform(0.0, kTwoPi);
        ds.sequences.push_back(std::move(seq));
        ds.shape_trajectories.push_back(traj);
    }
    parallel_for(count, threads, [&](int n) {
        LabeledSequence& seq = ds.sequences[static_cast<size_t>(n)];
        const ShapeTrajectory& traj = ds.shape_trajectories[static_cast<size_t>(n)];
        const Tensor glyph = glyph_bitmap(seq.identity_label, G);
        seq.frames = Tensor({T, 1, frame_size, frame_size});
        for (int t = 0; t < T; ++t) {
            auto [x, y] = shape_position(traj, t);
            splat_glyph(seq.frames, t, frame_size, glyph, x, y);
        }
    });
    return ds;
}

IdxData load_idx(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open " + path);
    auto read_be32 = [&f, &path]() {
        unsigned char b[4];
        if (!f.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("idx: truncated file " + path);
        return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
               (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
    };
    const std::uint32_t magic = read_be32();
    IdxData out;
    if (magic == 0x00000803u) {
        const std::uint32_t n = read_be32(), rows = read_be32(), cols = read_be32();
        std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
        for (std::uint32_t i = 0; i < n; ++i) {
            if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
                throw std::runtime_error("idx: truncated image data in " + path);
            Tensor img({1, static_cast<int>(rows), static_cast<int>(cols)});
            for (size_t j = 0; j < buf.size(); ++j) img[static_cast<std::int64_t>(j)] = buf[j] / 255.0;
            out.images.push_back(std::move(img));
        }
    } else if (magic == 0x00000801u) {
        const std::uint32_t n = read_be32();
        std::vector<unsigned char> buf(n);
        if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
            throw std::runtime_error("idx: truncated label data in " + path);
        for (std::uint32_t i = 0; i < n; ++i) out.labels.push_back(buf[i]);
    } else {
        throw std::runtime_error("idx: bad magic in " + path);
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& bin_path, const std::string& manifest_path) {
    std::ofstream f(bin_path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot write " + bin_path);
    f.write("VDSD", 4);
    write_u32(f, 1);
    write_str(f, ds.kind);
    write_u32(f, static_cast<std::uint32_t>(ds.frame_channels));
    write_u32(f, static_cast<std::uint32_t>(ds.frame_size));
    write_u32(f, static_cast<std::uint32_t>(ds.seq_len));
    write_u32(f, static_cast<std::uint32_t>(ds.n_identities));
    write_u32(f, static_cast<std::uint32_t>(ds.n_actions));
    write_u32(f, static_cast<std::uint32_t>(ds.sequences.size()));
    write_u32(f, static_cast<std::uint32_t>(ds.identity_names.size()));
    for (const std::string& s : ds.identity_names) write_str(f, s);
    write_u32(f, static_cast<std::uint32_t>(ds.action_names.size()));
    for (const std::string& s : ds.action_names) write_str(f, s);
    // Which per-sequence generator-parameter block follows each label pair.
    const bool has_pend = ds.pendulum_params.size() == ds.sequences.size() && !ds.sequences.empty();
    const bool has_traj = ds.shape_trajectories.size() == ds.sequences.size() && !ds.sequences.empty();
    if ((!ds.pendulum_params.empty() && !has_pend) || (!ds.shape_trajectories.empty() && !has_traj))
        throw std::runtime_error("dataset: generator parameter list does not match sequence count");
    write_u32(f, has_pend ? 1u : (has_traj ? 2u : 0u));
    std::vector<float> buf;
    for (size_t si = 0; si < ds.sequences.size(); ++si) {
        const LabeledSequence& seq = ds.sequences[si];
        write_u32(f, static_cast<std::uint32_t>(seq.identity_label));
        write_u32(f, static_cast<std::uint32_t>(seq.action_label));
        if (has_pend) {
            write_f64(f, ds.pendulum_params[si].omega);
            write_f64(f, ds.pendulum_params[si].phi0);
        } else if (has_traj) {
            const ShapeTrajectory& tr = ds.shape_trajectories[si];
            write_u32(f, static_cast<std::uint32_t>(tr.motion));
            write_f64(f, tr.x0);
            write_f64(f, tr.y0);
            write_f64(f, tr.speed);
            write_f64(f, tr.phase);
            write_f64(f, tr.lo);
            write_f64(f, tr.hi);
        }
        buf.resize(static_cast<size_t>(seq.frames.size()));
        for (std::int64_t i = 0; i < seq.frames.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(seq.frames[i]);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("dataset: write failed for " + bin_path);

    nlohmann::json manifest;
    manifest["kind"] = ds.kind;
    manifest["count"] = ds.sequences.size();
    manifest["seq_len"] = ds.seq_len;
    manifest["frame"] = {{"channels", ds.frame_channels}, {"size", ds.frame_size}};
    manifest["identities"] = ds.identity_names;
    manifest["actions"] = ds.action_names;
    std::ofstream m(manifest_path);
    if (!m) throw std::runtime_error("dataset: cannot write " + manifest_path);
    m << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& bin_path) {
    std::ifstream f(bin_path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open " + bin_path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "VDSD", 4) != 0)
        throw std::runtime_error("dataset: not a dataset file: " + bin_path);
    const std::uint32_t version = read_u32(f, "version");
    if (version != 1) throw std::runtime_error("dataset: unsupported version");
    Dataset ds;
    ds.kind = read_str(f, "kind");
    ds.frame_channels = static_cast<int>(read_u32(f, "channels"));
    ds.frame_size = static_cast<int>(read_u32(f, "frame size"));
    ds.seq_len = static_cast<int>(read_u32(f, "sequence length"));
    ds.n_identities = static_cast<int>(read_u32(f, "identity count"));
    ds.n_actions = static_cast<int>(read_u32(f, "action count"));
    const std::uint32_t n_seqs = read_u32(f, "sequence count");
    const std::uint32_t n_in = read_u32(f, "identity names");
    for (std::uint32_t i = 0; i < n_in; ++i) ds.identity_names.push_back(read_str(f, "identity name"));
    const std::uint32_t n_an = read_u32(f, "action names");
    for (std::uint32_t i = 0; i < n_an; ++i) ds.action_names.push_back(read_str(f, "action name"));
    const std::uint32_t param_kind = read_u32(f, "parameter kind");
    if (param_kind > 2) throw std::runtime_error("dataset: unknown generator parameter kind");
    const std::int64_t frame_elems = static_cast<std::int64_t>(ds.seq_len) * ds.frame_channels *
                                     ds.frame_size * ds.frame_size;
    std::vector<float> buf(static_cast<size_t>(frame_elems));
    for (std::uint32_t i = 0; i < n_seqs; ++i) {
        LabeledSequence seq;
        seq.identity_label = static_cast<int>(read_u32(f, "identity label"));
        seq.action_label = static_cast<int>(read_u32(f, "action label"));
        if (param_kind == 1) {
            PendulumParams pp;
            pp.omega = read_f64(f, "pendulum parameters");
            pp.phi0 = read_f64(f, "pendulum parameters");
            ds.pendulum_params.push_back(pp);
        } else if (param_kind == 2) {
            ShapeTrajectory tr;
            tr.motion = static_cast<int>(read_u32(f, "trajectory parameters"));
            tr.x0 = read_f64(f, "trajectory parameters");
            tr.y0 = read_f64(f, "trajectory parameters");
            tr.speed = read_f64(f, "trajectory parameters");
            tr.phase = read_f64(f, "trajectory parameters");
            tr.lo = read_f64(f, "trajectory parameters");
            tr.hi = read_f64(f, "trajectory parameters");
            ds.shape_trajectories.push_back(tr);
        }
        if (!f.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * sizeof(float))))
            throw std::runtime_error("dataset: truncated frame data in " + bin_path);
        seq.frames = Tensor({ds.seq_len, ds.frame_channels, ds.frame_size, ds.frame_size});
        for (std::int64_t j = 0; j < frame_elems; ++j) seq.frames[j] = buf[static_cast<size_t>(j)];
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

IdentityBatcher::IdentityBatcher(const Dataset& ds, int batch_size, unsigned long long seed)
    : ds_(&ds), batch_size_(batch_size), seed_(seed) {
    if (ds.sequences.empty()) throw std::invalid_argument("identity batches: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("identity batches: batch size must be >= 1");
    const int per_group = (ds.seq_len + batch_size - 1) / batch_size;
    batches_per_epoch_ = per_group * static_cast<int>(ds.sequences.size());
    build_epoch();
}

void IdentityBatcher::build_epoch() {
    ++epoch_;
    Rng rng(mix_seed(seed_, static_cast<unsigned long long>(epoch_)));
    std::vector<int> groups(ds_->sequences.size());
    for (size_t i = 0; i < groups.size(); ++i) groups[i] = static_cast<int>(i);
    rng.shuffle(groups);
    plan_.clear();
    for (int g : groups) {
        std::vector<int> frames(static_cast<size_t>(ds_->seq_len));
        for (size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<int>(i);
        rng.shuffle(frames);
        plan_.emplace_back(g, std::move(frames));
    }
    group_pos_ = 0;
    frame_pos_ = 0;
}

Tensor IdentityBatcher::next() {
    if (group_pos_ >= plan_.size()) build_epoch();
    const auto& [seq_idx, order] = plan_[group_pos_];
    const LabeledSequence& seq = ds_->sequences[static_cast<size_t>(seq_idx)];
    const int n = std::min<int>(batch_size_, static_cast<int>(order.size() - frame_pos_));
    const int c = ds_->frame_channels, F = ds_->frame_size;
    const std::int64_t frame_elems = static_cast<std::int64_t>(c) * F * F;
    Tensor batch({n, c, F, F});
    for (int i = 0; i < n; ++i) {
        const int t = order[frame_pos_ + static_cast<size_t>(i)];
        std::memcpy(batch.data() + i * frame_elems, seq.frames.data() + t * frame_elems,
                    sizeof(double) * static_cast<size_t>(frame_elems));
    }
    frame_pos_ += static_cast<size_t>(n);
    if (frame_pos_ >= order.size()) {
        frame_pos_ = 0;
        ++group_pos_;
    }
    return batch;
}

SequenceBatcher::SequenceBatcher(const Dataset& ds, int batch_size, unsigned long long seed)
    : ds_(&ds), batch_size_(batch_size), seed_(seed) {
    if (ds.sequences.empty()) throw std::invalid_argument("sequence batches: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("sequence batches: batch size must be >= 1");
    batches_per_epoch_ =
        (static_cast<int>(ds.sequences.size()) + batch_size - 1) / batch_size;
    build_epoch();
}

void SequenceBatcher::build_epoch() {
    ++epoch_;
    Rng rng(mix_seed(seed_ ^ 0x5E9ULL, static_cast<unsigned long long>(epoch_)));
    order_.resize(ds_->sequences.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    rng.shuffle(order_);
    pos_ = 0;
}

Tensor SequenceBatcher::next() {
    if (pos_ >= order_.size()) build_epoch();
    const int b = std::min<int>(batch_size_, static_cast<int>(order_.size() - pos_));
    const int T = ds_->seq_len, c = ds_->frame_channels, F = ds_->frame_size;
    const std::int64_t seq_elems = static_cast<std::int64_t>(T) * c * F * F;
    Tensor batch({b, T, c, F, F});
    last_.clear();
    for (int i = 0; i < b; ++i) {
        const int idx = order_[pos_ + static_cast<size_t>(i)];
        last_.push_back(idx);
        std::memcpy(batch.data() + i * seq_elems, ds_->sequences[static_cast<size_t>(idx)].frames.data(),
                    sizeof(double) * static_cast<size_t>(seq_elems));
    }
    pos_ += static_cast<size_t>(b);
    return batch;
}

}  // namespace vdsm
